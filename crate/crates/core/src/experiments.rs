//! Seeded Monte Carlo harness: trials, ensembles, theory comparison, sweeps.
//!
//! Trials run in parallel but are reduced strictly in trial-index order, so
//! results are bit-identical for any thread count.

use rayon::prelude::*;

use crate::adaptation::{AdaptiveFilter, Algorithm, DEFAULT_DIVERGENCE_GUARD};
use crate::channel::{ChannelModel, FadingProcess, RawFrame, ReceivedFrame};
use crate::config::Tolerances;
use crate::linalg;
use crate::model::{place_nodes_uniform, Area, NetworkScenario, NodeState, SourceModel};
use crate::rng::trial_rng;
use crate::theory::{self, TheoryReport};
use crate::{Error, Result, C64};

const REDUCTION_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub enum Placement {
    /// One geometry (the scenario's) for every trial.
    Fixed,
    /// Positions redrawn uniformly over the area at the start of each trial.
    Redraw(Area),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSpec {
    pub step_sizes: Vec<f64>,
    pub est_error_vars: Vec<f64>,
    pub fading_corrs: Vec<f64>,
}

impl SweepSpec {
    pub fn is_empty(&self) -> bool {
        self.step_sizes.is_empty() && self.est_error_vars.is_empty() && self.fading_corrs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub algorithms: Vec<Algorithm>,
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    /// Final iterations averaged for steady-state quantities.
    pub window: usize,
    /// `mu` for CLMS and the baseline.
    pub step_size: f64,
    /// `mu-bar` for BC-CLMS.
    pub bc_step_size: f64,
    /// `w_{-1}`; zeros when `None`.
    pub initial_weights: Option<Vec<C64>>,
    pub divergence_guard: f64,
    pub placement: Placement,
    pub sweep: SweepSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            algorithms: Algorithm::ALL.to_vec(),
            iterations: 5000,
            trials: 500,
            seed: 1,
            window: 1000,
            step_size: 0.003,
            bc_step_size: 0.003,
            initial_weights: None,
            divergence_guard: DEFAULT_DIVERGENCE_GUARD,
            placement: Placement::Fixed,
            sweep: SweepSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::Configuration(s));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.window == 0 || self.window > self.iterations {
            return bad(format!(
                "need iterations >= window >= 1 (iterations = {}, window = {})",
                self.iterations, self.window
            ));
        }
        for (name, v) in [("step_size", self.step_size), ("bc_step_size", self.bc_step_size)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(self.divergence_guard > 0.0) {
            return bad("divergence_guard must be > 0".into());
        }
        Ok(())
    }

    fn step_for(&self, alg: Algorithm) -> f64 {
        match alg {
            Algorithm::BcClms => self.bc_step_size,
            _ => self.step_size,
        }
    }
}

/// Weight trajectories of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutput {
    pub algorithms: Vec<Algorithm>,
    pub dim: usize,
    pub iterations: usize,
    /// Per algorithm, `iterations * dim` weights, iteration-major.
    pub weights: Vec<Vec<C64>>,
    pub diverged_at: Vec<Option<usize>>,
    /// Delivered frames per node.
    pub successes: Vec<u64>,
}

impl TrialOutput {
    /// `w_i` of algorithm slot `a`.
    pub fn weights_at(&self, a: usize, i: usize) -> &[C64] {
        &self.weights[a][i * self.dim..(i + 1) * self.dim]
    }
}

fn filters_for(
    scenario: &NetworkScenario,
    spec: &ExperimentSpec,
) -> Result<Vec<AdaptiveFilter>> {
    let m = scenario.dim();
    let init = spec.initial_weights.clone().unwrap_or_else(|| vec![C64::new(0.0, 0.0); m]);
    if init.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: init.len() });
    }
    let covs: Vec<_> = (0..scenario.num_nodes()).map(|k| scenario.link_regressor_noise_cov(k)).collect();
    spec.algorithms
        .iter()
        .map(|&alg| {
            let f = AdaptiveFilter::with_initial(alg, init.clone(), spec.step_for(alg))?
                .with_divergence_guard(spec.divergence_guard);
            if alg == Algorithm::BcClms {
                f.with_reg_noise_cov(&covs)
            } else {
                Ok(f)
            }
        })
        .collect()
}

/// One trial of synchronous rounds: sources, links, fusion-center updates.
pub fn run_trial(scenario: &NetworkScenario, spec: &ExperimentSpec, trial: u64) -> Result<TrialOutput> {
    let mut rng = trial_rng(spec.seed, trial);
    let redrawn;
    let scenario = match &spec.placement {
        Placement::Fixed => scenario,
        Placement::Redraw(area) => {
            let mut s = scenario.clone();
            s.node_positions = place_nodes_uniform(area, s.num_nodes(), &mut rng);
            s.validate()?;
            redrawn = s;
            &redrawn
        }
    };
    let n = scenario.num_nodes();
    let m = scenario.dim();
    let sources = SourceModel::new(scenario)?;
    let channel = ChannelModel::new(scenario);
    let mut fading = FadingProcess::new(n, channel.fading_corr());
    let mut filters = filters_for(scenario, spec)?;
    let need_raw = spec.algorithms.contains(&Algorithm::Baseline);

    let t = spec.iterations;
    let mut weights = vec![Vec::with_capacity(t * m); filters.len()];
    let mut successes = vec![0u64; n];
    let mut state = NodeState::zeros(m);
    let mut frames = vec![ReceivedFrame::Failed; n];
    let mut raw: Vec<RawFrame> = Vec::with_capacity(n);

    for _ in 0..t {
        raw.clear();
        for k in 0..n {
            sources.generate_into(k, &mut rng, &mut state);
            let h = fading.next(k, channel.fading_var(k), &mut rng);
            let link = channel.link_from_fading(k, h, &mut rng);
            successes[k] += u64::from(link.indicator);
            frames[k] = channel.transmit(&state, &link);
            if need_raw {
                raw.push(channel.receive_raw(&state, &link));
            }
        }
        for (f, out) in filters.iter_mut().zip(weights.iter_mut()) {
            f.update(&frames, &raw)?;
            out.extend_from_slice(f.weights());
        }
    }
    Ok(TrialOutput {
        algorithms: spec.algorithms.clone(),
        dim: m,
        iterations: t,
        weights,
        diverged_at: filters.iter().map(|f| f.diverged_at()).collect(),
        successes,
    })
}

/// Ensemble statistics for one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    /// `E|w° - w_i|^2` over non-diverged trials.
    pub msd: Vec<f64>,
    /// `E[w° - w_i]`.
    pub mean_error: Vec<Vec<C64>>,
    /// Window-and-ensemble average of `w° - w_i`.
    pub empirical_bias: Vec<C64>,
    /// Standard error of each bias component (`re` and `im` parts separately),
    /// from the spread of per-trial window means.
    pub bias_std_error: Vec<C64>,
    pub steady_msd: f64,
    pub completed_trials: usize,
    pub diverged_trials: usize,
}

impl AlgorithmResult {
    pub fn steady_msd_db(&self) -> f64 {
        to_db(self.steady_msd)
    }

    /// Window-and-ensemble mean weights, `w° - bias`.
    pub fn limiting_weights(&self, true_weights: &[C64]) -> Vec<C64> {
        true_weights.iter().zip(&self.empirical_bias).map(|(w, b)| w - b).collect()
    }

    /// Conservative standard error of `|E[w~_i]|` at iteration `i`.
    pub fn mean_error_std_error(&self, i: usize) -> f64 {
        let n = self.completed_trials as f64;
        let m2: f64 = self.mean_error[i].iter().map(|z| z.norm_sqr()).sum();
        ((self.msd[i] - m2).max(0.0) / n).sqrt()
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub seed: u64,
    pub trials: usize,
    pub iterations: usize,
    pub window: usize,
    pub true_weights: Vec<C64>,
    pub node_positions: Vec<[f64; 2]>,
    pub algorithms: Vec<AlgorithmResult>,
    pub successes: Vec<u64>,
    /// Link draws per node (`trials * iterations`).
    pub link_draws: u64,
}

impl ExperimentResult {
    pub fn algorithm(&self, alg: Algorithm) -> Option<&AlgorithmResult> {
        self.algorithms.iter().find(|a| a.algorithm == alg)
    }

    pub fn success_rates(&self) -> Vec<f64> {
        self.successes.iter().map(|s| *s as f64 / self.link_draws as f64).collect()
    }

    pub fn any_diverged(&self) -> bool {
        self.algorithms.iter().any(|a| a.diverged_trials > 0)
    }
}

struct Accumulator {
    msd: Vec<f64>,
    err: Vec<C64>,
    win_sum: Vec<C64>,
    win_sq: Vec<C64>,
    completed: usize,
    diverged: usize,
}

/// Runs `spec.trials` trials and averages them.
pub fn run_ensemble(scenario: &NetworkScenario, spec: &ExperimentSpec) -> Result<ExperimentResult> {
    scenario.validate()?;
    spec.validate()?;
    let m = scenario.dim();
    let t = spec.iterations;
    let w0 = &scenario.true_weights;
    let mut accs: Vec<Accumulator> = spec
        .algorithms
        .iter()
        .map(|_| Accumulator {
            msd: vec![0.0; t],
            err: vec![C64::new(0.0, 0.0); t * m],
            win_sum: vec![C64::new(0.0, 0.0); m],
            win_sq: vec![C64::new(0.0, 0.0); m],
            completed: 0,
            diverged: 0,
        })
        .collect();
    let mut successes = vec![0u64; scenario.num_nodes()];
    let win_start = t - spec.window;

    let trial_ids: Vec<u64> = (0..spec.trials as u64).collect();
    for chunk in trial_ids.chunks(REDUCTION_CHUNK) {
        let outputs: Vec<TrialOutput> = chunk
            .par_iter()
            .map(|&i| run_trial(scenario, spec, i))
            .collect::<Result<_>>()?;
        for out in &outputs {
            for (s, o) in successes.iter_mut().zip(&out.successes) {
                *s += o;
            }
            for (a, acc) in accs.iter_mut().enumerate() {
                if out.diverged_at[a].is_some() {
                    acc.diverged += 1;
                    continue;
                }
                acc.completed += 1;
                let mut win = vec![C64::new(0.0, 0.0); m];
                for i in 0..t {
                    let w = out.weights_at(a, i);
                    let mut sq = 0.0;
                    for j in 0..m {
                        let e = w0[j] - w[j];
                        sq += e.norm_sqr();
                        acc.err[i * m + j] += e;
                        if i >= win_start {
                            win[j] += e;
                        }
                    }
                    acc.msd[i] += sq;
                }
                for j in 0..m {
                    let wm = win[j] / spec.window as f64;
                    acc.win_sum[j] += wm;
                    acc.win_sq[j] += C64::new(wm.re * wm.re, wm.im * wm.im);
                }
            }
        }
    }

    if accs.iter().all(|a| a.completed == 0) {
        return Err(Error::AllDiverged { trials: spec.trials });
    }

    let algorithms = spec
        .algorithms
        .iter()
        .zip(accs)
        .map(|(&algorithm, acc)| summarize(algorithm, acc, m, spec))
        .collect();

    Ok(ExperimentResult {
        seed: spec.seed,
        trials: spec.trials,
        iterations: t,
        window: spec.window,
        true_weights: w0.clone(),
        node_positions: scenario.node_positions.clone(),
        algorithms,
        successes,
        link_draws: (spec.trials * t) as u64,
    })
}

fn summarize(algorithm: Algorithm, acc: Accumulator, m: usize, spec: &ExperimentSpec) -> AlgorithmResult {
    let t = spec.iterations;
    let n = acc.completed as f64;
    if acc.completed == 0 {
        return AlgorithmResult {
            algorithm,
            msd: vec![f64::INFINITY; t],
            mean_error: vec![vec![C64::new(f64::NAN, f64::NAN); m]; t],
            empirical_bias: vec![C64::new(f64::NAN, f64::NAN); m],
            bias_std_error: vec![C64::new(f64::NAN, f64::NAN); m],
            steady_msd: f64::INFINITY,
            completed_trials: 0,
            diverged_trials: acc.diverged,
        };
    }
    let msd: Vec<f64> = acc.msd.iter().map(|x| x / n).collect();
    let mean_error: Vec<Vec<C64>> = acc.err.chunks(m).map(|c| c.iter().map(|z| z / n).collect()).collect();
    let empirical_bias: Vec<C64> = acc.win_sum.iter().map(|z| z / n).collect();
    let bias_std_error = acc
        .win_sum
        .iter()
        .zip(&acc.win_sq)
        .map(|(s, q)| {
            let (mr, mi) = (s.re / n, s.im / n);
            let denom = (n - 1.0).max(1.0);
            let vr = (q.re - n * mr * mr).max(0.0) / denom;
            let vi = (q.im - n * mi * mi).max(0.0) / denom;
            C64::new((vr / n).sqrt(), (vi / n).sqrt())
        })
        .collect();
    let steady_msd = msd[t - spec.window..].iter().sum::<f64>() / spec.window as f64;
    AlgorithmResult {
        algorithm,
        msd,
        mean_error,
        empirical_bias,
        bias_std_error,
        steady_msd,
        completed_trials: acc.completed,
        diverged_trials: acc.diverged,
    }
}

/// Outcome of the deterministic mean recursion for one algorithm and step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStability {
    pub spectral_radius: f64,
    pub stable: bool,
}

/// Spectral radius of the mean-error transition (`D` or `D-bar`) at `step`.
/// The baseline has no closed-form mean recursion.
pub fn check_mean_stability(scenario: &NetworkScenario, algorithm: Algorithm, step: f64) -> Result<MeanStability> {
    let d = match algorithm {
        Algorithm::Clms => theory::clms_mean_matrix(scenario, step)?,
        Algorithm::BcClms => theory::bc_mean_matrix(scenario, step)?,
        Algorithm::Baseline => {
            return Err(Error::Configuration("no mean recursion for the baseline".into()))
        }
    };
    let spectral_radius = linalg::spectral_radius_hermitian(&d);
    Ok(MeanStability { spectral_radius, stable: spectral_radius < 1.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub quantity: String,
    pub simulated: f64,
    pub predicted: f64,
    pub abs_delta: f64,
    pub rel_delta: f64,
    pub db_delta: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ComparisonRow {
    /// Passes when `|simulated - predicted| <= tolerance`.
    fn absolute(quantity: String, simulated: f64, predicted: f64, tolerance: f64) -> Self {
        let abs_delta = (simulated - predicted).abs();
        ComparisonRow {
            quantity,
            simulated,
            predicted,
            abs_delta,
            rel_delta: abs_delta / predicted.abs(),
            db_delta: if simulated > 0.0 && predicted > 0.0 { to_db(simulated / predicted) } else { f64::NAN },
            tolerance,
            pass: abs_delta <= tolerance,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Lines the ensemble up against the closed forms: link success rates, the
/// CLMS bias, the BC-CLMS residual bias and the BC-CLMS steady-state MSD.
pub fn compare_with_theory(result: &ExperimentResult, theory: &TheoryReport, tol: &Tolerances) -> Comparison {
    let mut rows = Vec::new();
    let draws = result.link_draws as f64;
    for (k, (rate, p)) in result.success_rates().iter().zip(&theory.success_probs).enumerate() {
        let se = (p * (1.0 - p) / draws).sqrt();
        rows.push(ComparisonRow::absolute(format!("success_prob[{k}]"), *rate, *p, tol.success_se * se));
    }
    if let Some(clms) = result.algorithm(Algorithm::Clms) {
        for (m, (sim, pred)) in clms.empirical_bias.iter().zip(&theory.bias).enumerate() {
            let mag = pred.norm();
            let allowed = if mag < tol.bias_abs { tol.bias_abs } else { tol.bias_rel * mag };
            let mut row = ComparisonRow::absolute(format!("clms_bias[{m}]"), sim.norm(), mag, allowed);
            // compare the complex components, not just their moduli
            row.abs_delta = (sim - pred).norm();
            row.rel_delta = row.abs_delta / mag;
            row.pass = row.abs_delta <= allowed;
            rows.push(row);
        }
    }
    if let Some(bc) = result.algorithm(Algorithm::BcClms) {
        let norm = linalg::norm(&bc.empirical_bias);
        rows.push(ComparisonRow::absolute("bc_clms_bias_norm".into(), norm, 0.0, tol.bc_bias_norm));
        let sim_db = bc.steady_msd_db();
        let pred_db = theory.steady_msd_db();
        let mut row = ComparisonRow::absolute("bc_clms_steady_msd".into(), bc.steady_msd, theory.steady_msd, f64::NAN);
        row.tolerance = tol.msd_db;
        row.db_delta = sim_db - pred_db;
        row.pass = row.db_delta.abs() <= tol.msd_db;
        rows.push(row);
    }
    Comparison { rows }
}

/// One grid point of a parameter sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub step_size: f64,
    pub est_error_var: f64,
    pub fading_corr: f64,
    /// `(algorithm, steady MSD in dB, diverged trials)`
    pub outcomes: Vec<(Algorithm, f64, usize)>,
    /// Ideal-channel BC-CLMS prediction at this step, NaN when unstable.
    pub theory_bc_msd_db: f64,
}

/// Cartesian sweep over step size (applied to both `mu` and `mu-bar`),
/// channel-estimation-error variance and fading correlation. Empty axes use
/// the base value.
pub fn run_sweep(scenario: &NetworkScenario, spec: &ExperimentSpec, beta: f64) -> Result<Vec<SweepRow>> {
    let axis = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
    let steps = axis(&spec.sweep.step_sizes, spec.bc_step_size);
    let errs = axis(&spec.sweep.est_error_vars, scenario.channel_est_error_var);
    let corrs = axis(&spec.sweep.fading_corrs, scenario.fading_corr);
    let mut rows = Vec::new();
    for &step in &steps {
        for &est in &errs {
            for &corr in &corrs {
                let mut sc = scenario.clone();
                sc.channel_est_error_var = est;
                sc.fading_corr = corr;
                let mut sp = spec.clone();
                sp.step_size = step;
                sp.bc_step_size = step;
                let outcomes = match run_ensemble(&sc, &sp) {
                    Ok(res) => res
                        .algorithms
                        .iter()
                        .map(|a| (a.algorithm, a.steady_msd_db(), a.diverged_trials))
                        .collect(),
                    Err(Error::AllDiverged { trials }) => {
                        sp.algorithms.iter().map(|a| (*a, f64::INFINITY, trials)).collect()
                    }
                    Err(e) => return Err(e),
                };
                let theory_bc_msd_db = theory::bc_steady_state_msd(&sc, step, beta)
                    .map(to_db)
                    .unwrap_or(f64::NAN);
                rows.push(SweepRow { step_size: step, est_error_var: est, fading_corr: corr, outcomes, theory_bc_msd_db });
            }
        }
    }
    Ok(rows)
}
