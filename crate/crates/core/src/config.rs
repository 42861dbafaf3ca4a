//! Scenario and experiment configuration files.
//!
//! The format is flat `key = value` text (a subset of TOML): `#` starts a
//! comment, strings are double-quoted, arrays are bracketed and
//! comma-separated. Complex vectors are split into `*_re` / `*_im` arrays.
//!
//! Scenario keys (required unless noted):
//!
//! | key | value |
//! |---|---|
//! | `num_nodes` | N |
//! | `true_weights_re`, `true_weights_im` | M reals each; `_im` optional (zeros) |
//! | `node_x`, `node_y` | N positions in km, or `placement_seed` instead |
//! | `placement_seed` | draw positions uniformly over `placement_area` |
//! | `placement_area` | `[x0, y0, x1, y1]`, optional, default unit square |
//! | `fusion_position` | `[x, y]` |
//! | `tx_power` | P in mW |
//! | `path_loss_exp` | alpha |
//! | `nominal_range` | N values of r° in km |
//! | `meas_noise_var`, `link_noise_var`, `fading_var` | N values each |
//! | `regressor_corr` | N values of eta in `[0, 1)` |
//! | `mode` | `"analog"` or `"digital"` |
//! | `channel_est_error_var` | optional, default 0 |
//! | `fading_corr` | optional, default 0 (i.i.d. fading) |
//!
//! Experiment keys (all optional): `algorithms` (subset of `"clms"`,
//! `"bc_clms"`, `"baseline"`), `iterations`, `trials`, `seed`, `window`,
//! `step_size`, `bc_step_size` (defaults to `step_size`),
//! `initial_weights_re` / `_im`, `divergence_guard`, `placement`
//! (`"fixed"` or `"redraw"`), `sweep_step_sizes`, `sweep_est_error_vars`,
//! `sweep_fading_corrs`, `beta`, and the comparison tolerances
//! `tol_bias_rel`, `tol_bias_abs`, `tol_bc_bias_norm`, `tol_msd_db`,
//! `tol_success_se`.

use serde::{Deserialize, Serialize};

use crate::adaptation::{Algorithm, DEFAULT_DIVERGENCE_GUARD};
use crate::experiments::{ExperimentSpec, Placement, SweepSpec};
use crate::model::{place_nodes_uniform, Area, LinkMode, NetworkScenario};
use crate::rng::placement_rng;
use crate::theory::CIRCULAR_GAUSSIAN_BETA;
use crate::{Error, Result, C64};

/// Reference five-node network on analog links, fixed geometry.
pub const REFERENCE_CFG: &str = include_str!("../examples/paper_sec5.cfg");
/// The same network with digital links (failures plus additive noise).
pub const REFERENCE_DIGITAL_CFG: &str = include_str!("../examples/paper_sec5_digital.cfg");

const REQUIRED: &[&str] = &[
    "num_nodes",
    "true_weights_re",
    "fusion_position",
    "tx_power",
    "path_loss_exp",
    "nominal_range",
    "meas_noise_var",
    "link_noise_var",
    "fading_var",
    "regressor_corr",
    "mode",
];

/// Pass/fail thresholds used by `compare`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative per-component tolerance on the CLMS bias.
    pub bias_rel: f64,
    /// Absolute tolerance for bias components smaller than this value.
    pub bias_abs: f64,
    /// Bound on the norm of the BC-CLMS empirical bias.
    pub bc_bias_norm: f64,
    pub msd_db: f64,
    /// Success-rate tolerance in binomial standard errors.
    pub success_se: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { bias_rel: 0.05, bias_abs: 0.01, bc_bias_norm: 0.02, msd_db: 1.5, success_se: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub scenario: NetworkScenario,
    pub experiment: ExperimentSpec,
    /// Fourth-moment factor used by the steady-state MSD.
    pub beta: f64,
    pub tolerances: Tolerances,
}

impl Config {
    pub fn reference() -> Self {
        parse_config(REFERENCE_CFG).expect("bundled config parses")
    }

    pub fn reference_digital() -> Self {
        parse_config(REFERENCE_DIGITAL_CFG).expect("bundled config parses")
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    num_nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_weights_re: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_weights_im: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    node_x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    node_y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    placement_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    placement_area: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fusion_position: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tx_power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path_loss_exp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nominal_range: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    meas_noise_var: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    link_noise_var: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fading_var: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regressor_corr: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    channel_est_error_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fading_corr: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    algorithms: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bc_step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_weights_re: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_weights_im: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergence_guard: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    placement: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_step_sizes: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_est_error_vars: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_fading_corrs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol_bias_rel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol_bias_abs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol_bc_bias_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol_msd_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol_success_se: Option<f64>,
}

/// 1-based line of the first `key = ...` assignment, 0 if absent.
fn line_of(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

fn line_at_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Config { line: line_of(self.text, key), message: format!("`{key}`: {}", message.into()) }
    }

    fn len(&self, key: &str, v: &[f64], n: usize) -> Result<()> {
        if v.len() != n {
            return Err(self.err(key, format!("expected {n} entries, got {}", v.len())));
        }
        Ok(())
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64> {
        if !(v.is_finite() && v > 0.0) {
            return Err(self.err(key, format!("must be > 0, got {v}")));
        }
        Ok(v)
    }

    fn complex(&self, re_key: &str, re: &[f64], im: Option<&Vec<f64>>) -> Result<Vec<C64>> {
        let im_key = re_key.replace("_re", "_im");
        match im {
            None => Ok(re.iter().map(|r| C64::new(*r, 0.0)).collect()),
            Some(im) => {
                self.len(&im_key, im, re.len())?;
                Ok(re.iter().zip(im).map(|(r, i)| C64::new(*r, *i)).collect())
            }
        }
    }
}

/// Parses and fully validates a config file.
pub fn parse_config(text: &str) -> Result<Config> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map_or(0, |s| line_at_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    let cx = Ctx { text };

    let missing: Vec<&str> = REQUIRED
        .iter()
        .copied()
        .filter(|k| line_of(text, k) == 0)
        .collect();
    let has_positions = raw.node_x.is_some() || raw.node_y.is_some() || raw.placement_seed.is_some();
    if !missing.is_empty() || !has_positions {
        let mut keys = missing.join(", ");
        if !has_positions {
            if !keys.is_empty() {
                keys.push_str(", ");
            }
            keys.push_str("node_x/node_y or placement_seed");
        }
        return Err(Error::Configuration(format!("missing required keys: {keys}")));
    }

    let n = raw.num_nodes.unwrap();
    if n == 0 {
        return Err(cx.err("num_nodes", "must be >= 1"));
    }
    let w_re = raw.true_weights_re.as_deref().unwrap();
    if w_re.is_empty() {
        return Err(cx.err("true_weights_re", "must have at least one entry"));
    }
    let true_weights = cx.complex("true_weights_re", w_re, raw.true_weights_im.as_ref())?;
    let m = true_weights.len();

    let area = match &raw.placement_area {
        None => Area::unit_square(),
        Some(a) => {
            cx.len("placement_area", a, 4)?;
            Area::new(a[0], a[1], a[2], a[3]).map_err(|e| cx.err("placement_area", e.to_string()))?
        }
    };
    let node_positions = match (&raw.node_x, &raw.node_y, raw.placement_seed) {
        (Some(x), Some(y), None) => {
            cx.len("node_x", x, n)?;
            cx.len("node_y", y, n)?;
            x.iter().zip(y).map(|(x, y)| [*x, *y]).collect()
        }
        (None, None, Some(seed)) => place_nodes_uniform(&area, n, &mut placement_rng(seed)),
        (_, _, Some(_)) => return Err(cx.err("placement_seed", "conflicts with node_x/node_y")),
        (Some(_), None, _) => return Err(cx.err("node_x", "node_y is missing")),
        (None, Some(_), _) => return Err(cx.err("node_y", "node_x is missing")),
        (None, None, None) => unreachable!(),
    };

    let fusion = raw.fusion_position.as_deref().unwrap();
    cx.len("fusion_position", fusion, 2)?;
    let per_node = |key: &str, v: &Option<Vec<f64>>| -> Result<Vec<f64>> {
        let v = v.clone().unwrap();
        cx.len(key, &v, n)?;
        Ok(v)
    };
    let mode: LinkMode = raw.mode.as_deref().unwrap().parse().map_err(|e: String| cx.err("mode", e))?;

    let scenario = NetworkScenario {
        true_weights,
        node_positions,
        fusion_position: [fusion[0], fusion[1]],
        tx_power: raw.tx_power.unwrap(),
        path_loss_exp: raw.path_loss_exp.unwrap(),
        nominal_range: per_node("nominal_range", &raw.nominal_range)?,
        meas_noise_var: per_node("meas_noise_var", &raw.meas_noise_var)?,
        link_noise_var: per_node("link_noise_var", &raw.link_noise_var)?,
        fading_var: per_node("fading_var", &raw.fading_var)?,
        regressor_corr: per_node("regressor_corr", &raw.regressor_corr)?,
        mode,
        channel_est_error_var: raw.channel_est_error_var.unwrap_or(0.0),
        fading_corr: raw.fading_corr.unwrap_or(0.0),
    };
    scenario.validate().map_err(|e| match e {
        Error::InvalidScenario(msg) => {
            let key = msg.split_whitespace().next().unwrap_or("");
            let key = if line_of(text, key) > 0 { key } else { "node_x" };
            Error::Config { line: line_of(text, key), message: msg }
        }
        other => other,
    })?;

    let defaults = ExperimentSpec::default();
    let algorithms = match &raw.algorithms {
        None => defaults.algorithms.clone(),
        Some(list) => list
            .iter()
            .map(|a| a.parse::<Algorithm>().map_err(|e| cx.err("algorithms", e.to_string())))
            .collect::<Result<_>>()?,
    };
    let initial_weights = match &raw.initial_weights_re {
        None => None,
        Some(re) => {
            cx.len("initial_weights_re", re, m)?;
            Some(cx.complex("initial_weights_re", re, raw.initial_weights_im.as_ref())?)
        }
    };
    let placement = match raw.placement.as_deref() {
        None | Some("fixed") => Placement::Fixed,
        Some("redraw") => Placement::Redraw(area),
        Some(other) => return Err(cx.err("placement", format!("unknown placement `{other}` (expected fixed|redraw)"))),
    };
    let step_size = raw.step_size.unwrap_or(defaults.step_size);
    let experiment = ExperimentSpec {
        algorithms,
        iterations: raw.iterations.unwrap_or(defaults.iterations),
        trials: raw.trials.unwrap_or(defaults.trials),
        seed: raw.seed.unwrap_or(defaults.seed),
        window: raw.window.unwrap_or(defaults.window),
        step_size,
        bc_step_size: raw.bc_step_size.unwrap_or(step_size),
        initial_weights,
        divergence_guard: raw.divergence_guard.unwrap_or(DEFAULT_DIVERGENCE_GUARD),
        placement,
        sweep: SweepSpec {
            step_sizes: raw.sweep_step_sizes.clone().unwrap_or_default(),
            est_error_vars: raw.sweep_est_error_vars.clone().unwrap_or_default(),
            fading_corrs: raw.sweep_fading_corrs.clone().unwrap_or_default(),
        },
    };
    for key in ["step_size", "bc_step_size", "divergence_guard"] {
        let v = match key {
            "step_size" => experiment.step_size,
            "bc_step_size" => experiment.bc_step_size,
            _ => experiment.divergence_guard,
        };
        cx.positive(key, v)?;
    }
    if experiment.trials == 0 {
        return Err(cx.err("trials", "must be >= 1"));
    }
    if experiment.window == 0 || experiment.window > experiment.iterations {
        return Err(cx.err("window", format!("must lie in [1, iterations = {}]", experiment.iterations)));
    }
    for v in &experiment.sweep.step_sizes {
        cx.positive("sweep_step_sizes", *v)?;
    }
    if experiment.sweep.est_error_vars.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(cx.err("sweep_est_error_vars", "entries must be >= 0"));
    }
    if experiment.sweep.fading_corrs.iter().any(|v| !(0.0..1.0).contains(v)) {
        return Err(cx.err("sweep_fading_corrs", "entries must lie in [0, 1)"));
    }
    experiment.validate()?;

    let beta = cx.positive("beta", raw.beta.unwrap_or(CIRCULAR_GAUSSIAN_BETA))?;
    let d = Tolerances::default();
    let tolerances = Tolerances {
        bias_rel: cx.positive("tol_bias_rel", raw.tol_bias_rel.unwrap_or(d.bias_rel))?,
        bias_abs: cx.positive("tol_bias_abs", raw.tol_bias_abs.unwrap_or(d.bias_abs))?,
        bc_bias_norm: cx.positive("tol_bc_bias_norm", raw.tol_bc_bias_norm.unwrap_or(d.bc_bias_norm))?,
        msd_db: cx.positive("tol_msd_db", raw.tol_msd_db.unwrap_or(d.msd_db))?,
        success_se: cx.positive("tol_success_se", raw.tol_success_se.unwrap_or(d.success_se))?,
    };

    Ok(Config { scenario, experiment, beta, tolerances })
}

fn split(v: &[C64]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect())
}

/// Writes `config` back out with explicit node positions.
pub fn serialize_config(config: &Config) -> String {
    let sc = &config.scenario;
    let ex = &config.experiment;
    let (w_re, w_im) = split(&sc.true_weights);
    let (init_re, init_im) = match &ex.initial_weights {
        Some(w) => {
            let (r, i) = split(w);
            (Some(r), Some(i))
        }
        None => (None, None),
    };
    let (placement, area) = match &ex.placement {
        Placement::Fixed => ("fixed", None),
        Placement::Redraw(a) => ("redraw", Some(vec![a.x0, a.y0, a.x1, a.y1])),
    };
    let t = &config.tolerances;
    let raw = RawConfig {
        num_nodes: Some(sc.num_nodes()),
        true_weights_re: Some(w_re),
        true_weights_im: Some(w_im),
        node_x: Some(sc.node_positions.iter().map(|p| p[0]).collect()),
        node_y: Some(sc.node_positions.iter().map(|p| p[1]).collect()),
        placement_seed: None,
        placement_area: area,
        fusion_position: Some(sc.fusion_position.to_vec()),
        tx_power: Some(sc.tx_power),
        path_loss_exp: Some(sc.path_loss_exp),
        nominal_range: Some(sc.nominal_range.clone()),
        meas_noise_var: Some(sc.meas_noise_var.clone()),
        link_noise_var: Some(sc.link_noise_var.clone()),
        fading_var: Some(sc.fading_var.clone()),
        regressor_corr: Some(sc.regressor_corr.clone()),
        mode: Some(sc.mode.as_str().to_string()),
        channel_est_error_var: Some(sc.channel_est_error_var),
        fading_corr: Some(sc.fading_corr),
        algorithms: Some(ex.algorithms.iter().map(|a| a.as_str().to_string()).collect()),
        iterations: Some(ex.iterations),
        trials: Some(ex.trials),
        seed: Some(ex.seed),
        window: Some(ex.window),
        step_size: Some(ex.step_size),
        bc_step_size: Some(ex.bc_step_size),
        initial_weights_re: init_re,
        initial_weights_im: init_im,
        divergence_guard: Some(ex.divergence_guard),
        placement: Some(placement.to_string()),
        sweep_step_sizes: Some(ex.sweep.step_sizes.clone()),
        sweep_est_error_vars: Some(ex.sweep.est_error_vars.clone()),
        sweep_fading_corrs: Some(ex.sweep.fading_corrs.clone()),
        beta: Some(config.beta),
        tol_bias_rel: Some(t.bias_rel),
        tol_bias_abs: Some(t.bias_abs),
        tol_bc_bias_norm: Some(t.bc_bias_norm),
        tol_msd_db: Some(t.msd_db),
        tol_success_se: Some(t.success_se),
    };
    toml::to_string(&raw).expect("flat config always serializes")
}
