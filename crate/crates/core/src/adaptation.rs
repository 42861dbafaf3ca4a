//! Fusion-center estimators.
//!
//! All three share the LMS update `w_i = w_{i-1} + mu sum_k x_k*(y_k - x_k w_{i-1})`;
//! they differ in which frames they consume and in the BC-CLMS correction.

use crate::channel::{RawFrame, ReceivedFrame};
use crate::linalg::{self, CMatrix};
use crate::{Error, Result, C64};

pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Gated LMS on equalized data.
    Clms,
    /// Gated LMS with the regression-noise bias correction.
    BcClms,
    /// LMS on the raw received data: no equalization, no gating.
    Baseline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Clms, Algorithm::BcClms, Algorithm::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Clms => "clms",
            Algorithm::BcClms => "bc_clms",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "clms" => Ok(Algorithm::Clms),
            "bc_clms" => Ok(Algorithm::BcClms),
            "baseline" => Ok(Algorithm::Baseline),
            other => Err(format!("unknown algorithm `{other}` (expected clms|bc_clms|baseline)")),
        }
    }
}

#[derive(Clone, Debug)]
enum NoiseCov {
    Zero,
    /// Row-major `M x M`.
    Dense(Vec<C64>),
}

#[derive(Clone, Debug)]
pub struct AdaptiveFilter {
    algorithm: Algorithm,
    weights: Vec<C64>,
    step: f64,
    reg_noise_cov: Option<Vec<NoiseCov>>,
    guard: f64,
    iteration: usize,
    diverged_at: Option<usize>,
    grad: Vec<C64>,
    next: Vec<C64>,
}

impl AdaptiveFilter {
    /// Filter starting from `w_{-1} = 0`.
    pub fn new(algorithm: Algorithm, dim: usize, step: f64) -> Result<Self> {
        Self::with_initial(algorithm, vec![C64::new(0.0, 0.0); dim], step)
    }

    pub fn with_initial(algorithm: Algorithm, initial: Vec<C64>, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidArgument { arg: "step", reason: format!("must be > 0, got {step}") });
        }
        if initial.is_empty() {
            return Err(Error::InvalidArgument { arg: "dim", reason: "must be >= 1".into() });
        }
        let m = initial.len();
        Ok(AdaptiveFilter {
            algorithm,
            weights: initial,
            step,
            reg_noise_cov: None,
            guard: DEFAULT_DIVERGENCE_GUARD,
            iteration: 0,
            diverged_at: None,
            grad: vec![C64::new(0.0, 0.0); m],
            next: vec![C64::new(0.0, 0.0); m],
        })
    }

    /// Per-node regression-noise covariances `R^(u)_{v,k}` used by BC-CLMS.
    pub fn with_reg_noise_cov(mut self, covs: &[CMatrix]) -> Result<Self> {
        let m = self.dim();
        let mut out = Vec::with_capacity(covs.len());
        for r in covs {
            if r.nrows() != m || r.ncols() != m {
                return Err(Error::DimensionMismatch { expected: m, got: r.nrows() });
            }
            if r.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                out.push(NoiseCov::Zero);
            } else {
                out.push(NoiseCov::Dense(r.transpose().as_slice().to_vec()));
            }
        }
        self.reg_noise_cov = Some(out);
        Ok(self)
    }

    pub fn with_divergence_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// Iteration at which `|w_i|` first exceeded the guard; the weights stay
    /// frozen at their last admissible value from then on.
    pub fn diverged_at(&self) -> Option<usize> {
        self.diverged_at
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Dispatches on the filter's algorithm; the baseline reads `raw`, the
    /// gated estimators read `frames`.
    pub fn update(&mut self, frames: &[ReceivedFrame], raw: &[RawFrame]) -> Result<()> {
        match self.algorithm {
            Algorithm::Clms => self.clms_step(frames),
            Algorithm::BcClms => self.bc_clms_step(frames),
            Algorithm::Baseline => self.baseline_step(raw),
        }
    }

    /// `w_i = w_{i-1} + mu sum_k I_k u_k* (d_k - u_k w_{i-1})`.
    pub fn clms_step(&mut self, frames: &[ReceivedFrame]) -> Result<()> {
        self.gated_step(frames, false)
    }

    /// CLMS plus `|g_k|^2 R^(u)_{v,k} w_{i-1}` inside the sum for every delivered frame.
    pub fn bc_clms_step(&mut self, frames: &[ReceivedFrame]) -> Result<()> {
        match &self.reg_noise_cov {
            None => Err(Error::Configuration("BC-CLMS needs the regression-noise covariances".into())),
            Some(c) if c.len() != frames.len() => Err(Error::DimensionMismatch {
                expected: c.len(),
                got: frames.len(),
            }),
            Some(_) => self.gated_step(frames, true),
        }
    }

    /// LMS on `(u-hat, d-hat)` for every node, delivered or not.
    pub fn baseline_step(&mut self, raw: &[RawFrame]) -> Result<()> {
        let m = self.dim();
        for f in raw {
            if f.regressor.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: f.regressor.len() });
            }
        }
        self.iteration += 1;
        if self.diverged_at.is_some() {
            return Ok(());
        }
        self.grad.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        for f in raw {
            accumulate_lms(&mut self.grad, &self.weights, &f.regressor, f.datum);
        }
        self.commit(!raw.is_empty());
        Ok(())
    }

    fn gated_step(&mut self, frames: &[ReceivedFrame], compensate: bool) -> Result<()> {
        let m = self.dim();
        for f in frames {
            if let ReceivedFrame::Delivered { regressor, .. } = f {
                if regressor.len() != m {
                    return Err(Error::DimensionMismatch { expected: m, got: regressor.len() });
                }
            }
        }
        self.iteration += 1;
        if self.diverged_at.is_some() {
            return Ok(());
        }
        self.grad.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        let mut any = false;
        for (k, f) in frames.iter().enumerate() {
            let ReceivedFrame::Delivered { regressor, datum, eq_gain } = f else {
                continue;
            };
            any = true;
            accumulate_lms(&mut self.grad, &self.weights, regressor, *datum);
            if compensate {
                let covs = self.reg_noise_cov.as_ref().expect("checked by caller");
                if let NoiseCov::Dense(r) = &covs[k] {
                    let g2 = eq_gain.norm_sqr();
                    for (p, acc) in self.grad.iter_mut().enumerate() {
                        let rw: C64 = r[p * m..(p + 1) * m]
                            .iter()
                            .zip(&self.weights)
                            .map(|(a, b)| a * b)
                            .sum();
                        *acc += rw * g2;
                    }
                }
            }
        }
        self.commit(any);
        Ok(())
    }

    fn commit(&mut self, any: bool) {
        if !any {
            return;
        }
        for ((n, w), g) in self.next.iter_mut().zip(&self.weights).zip(&self.grad) {
            *n = w + g * self.step;
        }
        let norm = linalg::norm(&self.next);
        if norm.is_finite() && norm <= self.guard {
            std::mem::swap(&mut self.weights, &mut self.next);
        } else {
            self.diverged_at = Some(self.iteration - 1);
        }
    }
}

/// `grad += x* (y - x w)`
#[inline]
fn accumulate_lms(grad: &mut [C64], w: &[C64], x: &[C64], y: C64) {
    let e = y - crate::model::row_times(x, w);
    for (g, xm) in grad.iter_mut().zip(x) {
        *g += xm.conj() * e;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn frame(u: Vec<C64>, d: C64, g: C64) -> ReceivedFrame {
        ReceivedFrame::Delivered { regressor: u, datum: d, eq_gain: g }
    }

    #[test]
    fn all_failed_frames_leave_weights() {
        let start = vec![c(0.3), C64::new(-0.1, 0.2)];
        for alg in [Algorithm::Clms, Algorithm::BcClms] {
            let mut f = AdaptiveFilter::with_initial(alg, start.clone(), 0.01)
                .unwrap()
                .with_reg_noise_cov(&vec![linalg::scaled_identity(2, 0.1); 2])
                .unwrap();
            f.update(&[ReceivedFrame::Failed, ReceivedFrame::Failed], &[]).unwrap();
            assert_eq!(f.weights(), &start[..]);
        }
    }

    #[test]
    fn one_step_hand_computation() {
        let w0 = C64::new(0.7, -0.2);
        let mut f = AdaptiveFilter::new(Algorithm::Clms, 1, 0.05).unwrap();
        f.clms_step(&[frame(vec![c(1.0)], w0, c(1.0))]).unwrap();
        assert_eq!(f.weights()[0], w0 * 0.05);
    }

    #[test]
    fn bc_hand_computation() {
        // w = 0.5, u = 1, d = 1, g = 2i, R = 0.1: grad = (1 - 0.5) + |g|^2 0.1 0.5 = 0.7
        let mut f = AdaptiveFilter::with_initial(Algorithm::BcClms, vec![c(0.5)], 0.1)
            .unwrap()
            .with_reg_noise_cov(&[linalg::scaled_identity(1, 0.1)])
            .unwrap();
        f.bc_clms_step(&[frame(vec![c(1.0)], c(1.0), C64::new(0.0, 2.0))]).unwrap();
        assert!((f.weights()[0] - c(0.57)).norm() < 1e-15);
    }

    #[test]
    fn zero_correction_is_bit_identical_to_clms() {
        let frames = vec![
            frame(vec![C64::new(0.3, -1.2), c(0.4)], C64::new(0.9, 0.1), C64::new(0.2, 0.3)),
            ReceivedFrame::Failed,
            frame(vec![c(-0.5), C64::new(0.0, 0.7)], c(-0.3), c(1.0)),
        ];
        let mut a = AdaptiveFilter::new(Algorithm::Clms, 2, 0.02).unwrap();
        let mut b = AdaptiveFilter::new(Algorithm::BcClms, 2, 0.02)
            .unwrap()
            .with_reg_noise_cov(&vec![CMatrix::zeros(2, 2); 3])
            .unwrap();
        for _ in 0..50 {
            a.clms_step(&frames).unwrap();
            b.bc_clms_step(&frames).unwrap();
        }
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn baseline_equals_clms_on_perfect_links() {
        let u = vec![C64::new(0.3, -1.2), c(0.4)];
        let d = C64::new(0.9, 0.1);
        let mut a = AdaptiveFilter::new(Algorithm::Clms, 2, 0.02).unwrap();
        let mut b = AdaptiveFilter::new(Algorithm::Baseline, 2, 0.02).unwrap();
        for _ in 0..20 {
            a.clms_step(&[frame(u.clone(), d, c(1.0))]).unwrap();
            b.baseline_step(&[RawFrame { regressor: u.clone(), datum: d }]).unwrap();
        }
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn baseline_frozen_on_silent_links() {
        let mut b = AdaptiveFilter::new(Algorithm::Baseline, 2, 0.1).unwrap();
        let silent = RawFrame { regressor: vec![c(0.0); 2], datum: c(0.0) };
        for _ in 0..10 {
            b.baseline_step(&[silent.clone(), silent.clone()]).unwrap();
        }
        assert_eq!(b.weights(), &[c(0.0), c(0.0)]);
    }

    #[test]
    fn missing_covariance_is_configuration_error() {
        let mut f = AdaptiveFilter::new(Algorithm::BcClms, 1, 0.1).unwrap();
        assert!(matches!(f.bc_clms_step(&[ReceivedFrame::Failed]), Err(Error::Configuration(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut f = AdaptiveFilter::new(Algorithm::Clms, 2, 0.1).unwrap();
        let err = f.clms_step(&[frame(vec![c(1.0)], c(1.0), c(1.0))]);
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn divergence_freezes_filter() {
        let mut f = AdaptiveFilter::new(Algorithm::Clms, 1, 3.0).unwrap().with_divergence_guard(1e3);
        let fr = [frame(vec![c(1.0)], c(1.0), c(1.0))];
        for _ in 0..100 {
            f.clms_step(&fr).unwrap();
        }
        let at = f.diverged_at().expect("step 3 on unit data diverges");
        assert!(at < 20);
        assert!(linalg::norm(f.weights()) <= 1e3);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(AdaptiveFilter::new(Algorithm::Clms, 2, 0.0).is_err());
        assert!(AdaptiveFilter::new(Algorithm::Clms, 2, f64::NAN).is_err());
        assert!(AdaptiveFilter::new(Algorithm::Clms, 0, 0.1).is_err());
    }
}
