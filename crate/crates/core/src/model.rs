//! Network scenario and per-node source data.
//!
//! Units: transmit power in mW, distances in km, path-loss exponent
//! dimensionless. SNRs are the plain ratio `P / (sigma_z^2 r^alpha)` in those
//! units, everywhere in the crate.
//!
//! Node indices are 0-based in the API.

use rand::Rng;

use crate::linalg::CMatrix;
use crate::rng::standard_complex_normal;
use crate::{Error, Result, C64};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinkMode {
    /// `a_k(i) = h_k(i) sqrt(P / r_k^alpha)`, least-squares equalized at the receiver.
    Analog,
    /// `a_k(i) = I_k(i)`: packets either arrive (with additive noise) or are lost.
    Digital,
}

impl LinkMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkMode::Analog => "analog",
            LinkMode::Digital => "digital",
        }
    }
}

impl std::str::FromStr for LinkMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "analog" => Ok(LinkMode::Analog),
            "digital" => Ok(LinkMode::Digital),
            other => Err(format!("unknown mode `{other}` (expected analog|digital)")),
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` in km.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Area {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Area {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let ok = [x0, y0, x1, y1].iter().all(|v| v.is_finite()) && x1 >= x0 && y1 >= y0;
        if !ok {
            return Err(Error::InvalidArgument {
                arg: "area",
                reason: format!("[{x0}, {x1}] x [{y0}, {y1}] is not a valid rectangle"),
            });
        }
        Ok(Area { x0, y0, x1, y1 })
    }

    pub fn unit_square() -> Self {
        Area { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }

    pub fn center(&self) -> Point {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

/// Static description of the network. Per-node vectors are indexed by node.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkScenario {
    pub true_weights: Vec<C64>,
    pub node_positions: Vec<Point>,
    pub fusion_position: Point,
    /// mW
    pub tx_power: f64,
    pub path_loss_exp: f64,
    /// km
    pub nominal_range: Vec<f64>,
    pub meas_noise_var: Vec<f64>,
    pub link_noise_var: Vec<f64>,
    pub fading_var: Vec<f64>,
    pub regressor_corr: Vec<f64>,
    pub mode: LinkMode,
    /// Variance of the additive channel-estimation error seen by the equalizer.
    pub channel_est_error_var: f64,
    /// First-order autoregressive correlation of the fading process over time.
    pub fading_corr: f64,
}

impl NetworkScenario {
    pub fn num_nodes(&self) -> usize {
        self.node_positions.len()
    }

    pub fn dim(&self) -> usize {
        self.true_weights.len()
    }

    /// Distance from node `k` to the fusion center, km.
    pub fn distance(&self, k: usize) -> f64 {
        let [x, y] = self.node_positions[k];
        let [fx, fy] = self.fusion_position;
        (x - fx).hypot(y - fy)
    }

    /// Large-scale gain `P / r_k^alpha`.
    pub fn path_gain(&self, k: usize) -> f64 {
        self.tx_power / self.distance(k).powf(self.path_loss_exp)
    }

    pub fn regressor_covariance(&self, k: usize) -> Result<CMatrix> {
        build_regressor_covariance(self.regressor_corr[k], self.dim())
    }

    /// Covariance of the regression part of the link noise, `sigma_z^2 I`.
    pub fn link_regressor_noise_cov(&self, k: usize) -> CMatrix {
        crate::linalg::scaled_identity(self.dim(), self.link_noise_var[k])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        let m = self.dim();
        let bad = |s: String| Err(Error::InvalidScenario(s));
        if n == 0 {
            return bad("at least one node is required".into());
        }
        if m == 0 {
            return bad("parameter dimension must be at least 1".into());
        }
        if self.true_weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return bad("true weights must be finite".into());
        }
        for (name, v) in [
            ("nominal_range", &self.nominal_range),
            ("meas_noise_var", &self.meas_noise_var),
            ("link_noise_var", &self.link_noise_var),
            ("fading_var", &self.fading_var),
            ("regressor_corr", &self.regressor_corr),
        ] {
            if v.len() != n {
                return bad(format!("{name} has {} entries, expected {n}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(self.tx_power.is_finite() && self.tx_power > 0.0) {
            return bad(format!("tx_power must be > 0, got {}", self.tx_power));
        }
        if !(self.path_loss_exp.is_finite() && self.path_loss_exp > 0.0) {
            return bad(format!("path_loss_exp must be > 0, got {}", self.path_loss_exp));
        }
        if let Some(r) = self.nominal_range.iter().find(|r| **r <= 0.0) {
            return bad(format!("nominal_range must be > 0, got {r}"));
        }
        if let Some(s) = self.fading_var.iter().find(|s| **s <= 0.0) {
            return bad(format!("fading_var must be > 0, got {s}"));
        }
        // Noise variances may be zero: the noiseless limits are legitimate checks.
        for (name, v) in [
            ("meas_noise_var", &self.meas_noise_var),
            ("link_noise_var", &self.link_noise_var),
        ] {
            if let Some(s) = v.iter().find(|s| **s < 0.0) {
                return bad(format!("{name} must be >= 0, got {s}"));
            }
        }
        if let Some(eta) = self.regressor_corr.iter().find(|e| !(0.0..1.0).contains(*e)) {
            return bad(format!("regressor_corr must lie in [0, 1), got {eta}"));
        }
        for k in 0..n {
            if self.distance(k) <= 0.0 {
                return bad(format!("node {k} sits on the fusion center (r_k must be > 0)"));
            }
        }
        if !(self.channel_est_error_var.is_finite() && self.channel_est_error_var >= 0.0) {
            return bad("channel_est_error_var must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.fading_corr) {
            return bad(format!("fading_corr must lie in [0, 1), got {}", self.fading_corr));
        }
        Ok(())
    }
}

/// One node's data at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub regressor: Vec<C64>,
    pub measurement: C64,
    pub meas_noise: C64,
}

impl NodeState {
    pub fn zeros(dim: usize) -> Self {
        NodeState {
            regressor: vec![C64::new(0.0, 0.0); dim],
            measurement: C64::new(0.0, 0.0),
            meas_noise: C64::new(0.0, 0.0),
        }
    }

    /// Builds the state for a given regressor and noise sample.
    pub fn from_parts(regressor: Vec<C64>, true_weights: &[C64], meas_noise: C64) -> Self {
        let measurement = row_times(&regressor, true_weights) + meas_noise;
        NodeState { regressor, measurement, meas_noise }
    }
}

/// `u w` for a row vector `u` and column vector `w` (no conjugation).
#[inline]
pub fn row_times(u: &[C64], w: &[C64]) -> C64 {
    u.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Toeplitz covariance with `R[n, m] = eta^(m - n)` for `m >= n`, mirrored below.
pub fn build_regressor_covariance(eta: f64, dim: usize) -> Result<CMatrix> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidArgument {
            arg: "eta",
            reason: format!("must lie in [0, 1), got {eta}"),
        });
    }
    if dim == 0 {
        return Err(Error::InvalidArgument { arg: "dim", reason: "must be >= 1".into() });
    }
    Ok(CMatrix::from_fn(dim, dim, |n, m| {
        let lag = n.abs_diff(m) as i32;
        C64::new(eta.powi(lag), 0.0)
    }))
}

/// Draws `u = g B` with `B* B = R` from a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct RegressorSampler {
    dim: usize,
    // Lower factor L (row-major) with R = L L*; B = L*.
    lower: Vec<C64>,
}

impl RegressorSampler {
    pub fn new(cov: &CMatrix) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || cov.ncols() != dim {
            return Err(Error::InvalidArgument {
                arg: "cov",
                reason: format!("expected a non-empty square matrix, got {}x{}", dim, cov.ncols()),
            });
        }
        if crate::linalg::hermiticity_residual(cov) > 1e-12
            || crate::linalg::hermitian_eigenvalues(cov)[0] <= 0.0
        {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let mut lower = vec![C64::new(0.0, 0.0); dim * dim];
        for r in 0..dim {
            for c in 0..=r {
                lower[r * dim + c] = l[(r, c)];
            }
        }
        Ok(RegressorSampler { dim, lower })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [C64]) {
        let m = self.dim;
        let mut g = [C64::new(0.0, 0.0); 16];
        let mut heap;
        let g: &mut [C64] = if m <= g.len() {
            &mut g[..m]
        } else {
            heap = vec![C64::new(0.0, 0.0); m];
            &mut heap[..]
        };
        for z in g.iter_mut() {
            *z = standard_complex_normal(rng);
        }
        // u_c = sum_{n <= c} g_n conj(L[c, n])
        for (c, o) in out.iter_mut().enumerate().take(m) {
            let row = &self.lower[c * m..c * m + c + 1];
            *o = row.iter().zip(g.iter()).map(|(l, gn)| gn * l.conj()).sum();
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<C64> {
        let mut u = vec![C64::new(0.0, 0.0); self.dim];
        self.sample_into(rng, &mut u);
        u
    }
}

/// One zero-mean circular Gaussian regressor with covariance `cov`.
pub fn sample_regressor<R: Rng + ?Sized>(cov: &CMatrix, rng: &mut R) -> Result<Vec<C64>> {
    Ok(RegressorSampler::new(cov)?.sample(rng))
}

/// Precomputed per-node regressor factors for a scenario.
#[derive(Clone, Debug)]
pub struct SourceModel {
    samplers: Vec<RegressorSampler>,
    noise_std: Vec<f64>,
    true_weights: Vec<C64>,
}

impl SourceModel {
    pub fn new(scenario: &NetworkScenario) -> Result<Self> {
        let samplers = (0..scenario.num_nodes())
            .map(|k| RegressorSampler::new(&scenario.regressor_covariance(k)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(SourceModel {
            samplers,
            noise_std: scenario.meas_noise_var.iter().map(|v| (0.5 * v).sqrt()).collect(),
            true_weights: scenario.true_weights.clone(),
        })
    }

    pub fn generate_into<R: Rng + ?Sized>(&self, k: usize, rng: &mut R, state: &mut NodeState) {
        self.samplers[k].sample_into(rng, &mut state.regressor);
        let s = self.noise_std[k];
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        state.meas_noise = C64::new(s * re, s * im);
        state.measurement = row_times(&state.regressor, &self.true_weights) + state.meas_noise;
    }

    pub fn generate<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> NodeState {
        let mut s = NodeState::zeros(self.true_weights.len());
        self.generate_into(k, rng, &mut s);
        s
    }
}

/// Draws `u_{k,i}`, `v_k(i)` and sets `d_k(i) = u_{k,i} w° + v_k(i)`.
pub fn generate_node_state<R: Rng + ?Sized>(
    scenario: &NetworkScenario,
    k: usize,
    rng: &mut R,
) -> Result<NodeState> {
    if k >= scenario.num_nodes() {
        return Err(Error::InvalidArgument {
            arg: "k",
            reason: format!("node index {k} out of range for {} nodes", scenario.num_nodes()),
        });
    }
    let sampler = RegressorSampler::new(&scenario.regressor_covariance(k)?)?;
    let regressor = sampler.sample(rng);
    let v = crate::rng::complex_normal(rng, scenario.meas_noise_var[k]);
    Ok(NodeState::from_parts(regressor, &scenario.true_weights, v))
}

/// I.i.d. uniform node positions over `area`.
pub fn place_nodes_uniform<R: Rng + ?Sized>(area: &Area, n: usize, rng: &mut R) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let x = area.x0 + (area.x1 - area.x0) * rng.random::<f64>();
            let y = area.y0 + (area.y1 - area.y0) * rng.random::<f64>();
            [x, y]
        })
        .collect()
}
