//! Closed-form predictions for CLMS and BC-CLMS.
//!
//! Link-failure (digital) mode uses the effective link covariance
//! `R_{v,k} = p_k R^(u)_{v,k}`; fading (analog) mode uses
//! `R_{v,k} = E[I_k |g_k|^2] R^(u)_{v,k}`. Every formula below is written in
//! terms of `R_{v,k}`, so both modes share one code path.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{success_probability, threshold_snr};
use crate::linalg::{self, CMatrix, CVector};
use crate::model::{LinkMode, NetworkScenario};
use crate::quadrature;
use crate::rng::standard_complex_normal;
use crate::{Error, Result, C64};

/// Fourth-moment factor for circular complex Gaussian link noise.
pub const CIRCULAR_GAUSSIAN_BETA: f64 = 2.0;

/// Relative tolerance of the equalizer-power quadrature.
pub const EQ_POWER_REL_TOL: f64 = 1e-10;

// exp(-40) ~ 4e-18: mass of the integrand beyond the cut, relative to its scale.
const EQ_POWER_TAIL_CUT: f64 = 40.0;

/// `E[I |g|^2] = int_{x°}^inf r^alpha / (P x) lambda e^{-lambda x} dx`,
/// with `x° = (r/r°)^alpha`, `lambda = 1/sigma_h^2`.
///
/// Evaluated after shifting to `s = lambda (x - x°)`:
/// `(r^alpha/P) e^{-lambda x°} int_0^inf e^{-s} / (x° + s/lambda) ds`.
pub fn expected_eq_power(fading_var: f64, r: f64, nominal_range: f64, alpha: f64, power: f64) -> f64 {
    let lambda = 1.0 / fading_var;
    let x0 = (r / nominal_range).powf(alpha);
    let prefactor = r.powf(alpha) / power * (-lambda * x0).exp();
    if prefactor == 0.0 {
        return 0.0;
    }
    let q = quadrature::integrate(
        |s| (-s).exp() / (x0 + s / lambda),
        0.0,
        EQ_POWER_TAIL_CUT,
        EQ_POWER_REL_TOL,
        0.0,
    );
    prefactor * q.value
}

pub fn success_probabilities(scenario: &NetworkScenario) -> Vec<f64> {
    (0..scenario.num_nodes())
        .map(|k| {
            success_probability(
                scenario.fading_var[k],
                scenario.distance(k),
                scenario.nominal_range[k],
                scenario.path_loss_exp,
            )
        })
        .collect()
}

/// `E[I_k |g_k|^2]` per node (`p_k` in digital mode, where `g = 1`).
pub fn eq_powers(scenario: &NetworkScenario) -> Vec<f64> {
    match scenario.mode {
        LinkMode::Digital => success_probabilities(scenario),
        LinkMode::Analog => (0..scenario.num_nodes())
            .map(|k| {
                expected_eq_power(
                    scenario.fading_var[k],
                    scenario.distance(k),
                    scenario.nominal_range[k],
                    scenario.path_loss_exp,
                    scenario.tx_power,
                )
            })
            .collect(),
    }
}

fn eff_link_scales(scenario: &NetworkScenario) -> Vec<f64> {
    eq_powers(scenario)
        .into_iter()
        .zip(&scenario.link_noise_var)
        .map(|(e, s)| e * s)
        .collect()
}

/// `R_{v,k}`.
pub fn effective_link_cov(scenario: &NetworkScenario, k: usize) -> CMatrix {
    let scale = match scenario.mode {
        LinkMode::Digital => success_probabilities(scenario)[k],
        LinkMode::Analog => expected_eq_power(
            scenario.fading_var[k],
            scenario.distance(k),
            scenario.nominal_range[k],
            scenario.path_loss_exp,
            scenario.tx_power,
        ),
    };
    linalg::scaled_identity(scenario.dim(), scale * scenario.link_noise_var[k])
}

struct Moments {
    probs: Vec<f64>,
    regressor_cov: Vec<CMatrix>,
    eff_link_cov: Vec<CMatrix>,
    w: CVector,
}

impl Moments {
    fn new(scenario: &NetworkScenario) -> Result<Self> {
        let m = scenario.dim();
        let regressor_cov = (0..scenario.num_nodes())
            .map(|k| scenario.regressor_covariance(k))
            .collect::<Result<Vec<_>>>()?;
        let eff_link_cov = eff_link_scales(scenario)
            .into_iter()
            .map(|s| linalg::scaled_identity(m, s))
            .collect();
        Ok(Moments {
            probs: success_probabilities(scenario),
            regressor_cov,
            eff_link_cov,
            w: linalg::to_vector(&scenario.true_weights),
        })
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    /// `sum_k p_k R_{u,k}`
    fn clean_normal(&self) -> CMatrix {
        let mut acc = CMatrix::zeros(self.dim(), self.dim());
        for (p, r) in self.probs.iter().zip(&self.regressor_cov) {
            acc += r * C64::new(*p, 0.0);
        }
        acc
    }

    /// `sum_k (p_k R_{u,k} + R_{v,k})`
    fn noisy_normal(&self) -> CMatrix {
        let mut acc = self.clean_normal();
        for r in &self.eff_link_cov {
            acc += r;
        }
        acc
    }

    /// `sum_k p_k R_{u,k} w°` (`r_{du,k} = R_{u,k} w°`)
    fn cross_moment(&self) -> CVector {
        self.clean_normal() * &self.w
    }

    /// `t_f = -sum_k R_{v,k} w°`
    fn gradient_offset(&self) -> CVector {
        let mut acc = CVector::zeros(self.dim());
        for r in &self.eff_link_cov {
            acc -= r * &self.w;
        }
        acc
    }
}

/// `t_f = -sum_k R_{v,k} w°`, the mean of the noise-driven term in the CLMS error recursion.
pub fn gradient_offset(scenario: &NetworkScenario) -> Result<Vec<C64>> {
    Ok(Moments::new(scenario)?.gradient_offset().as_slice().to_vec())
}

/// `(w°_ctrl, w°)`: minimizers of the noisy and noise-free gated costs.
pub fn optimal_solutions(scenario: &NetworkScenario) -> Result<(Vec<C64>, Vec<C64>)> {
    let mo = Moments::new(scenario)?;
    let rhs = mo.cross_moment();
    let biased = linalg::solve(&mo.noisy_normal(), &rhs, "noisy normal equations")?;
    let unbiased = linalg::solve(&mo.clean_normal(), &rhs, "normal equations")?;
    Ok((biased.as_slice().to_vec(), unbiased.as_slice().to_vec()))
}

/// `b = w° - lim E[w_i] = -(sum_k (p_k R_{u,k} + R_{v,k}))^{-1} t_f`.
pub fn clms_bias(scenario: &NetworkScenario) -> Result<Vec<C64>> {
    let mo = Moments::new(scenario)?;
    let b = linalg::solve(&mo.noisy_normal(), &(-mo.gradient_offset()), "CLMS bias system")?;
    Ok(b.as_slice().to_vec())
}

/// Mean-stability limits `(mu_max CLMS, mu_max BC-CLMS)`.
pub fn stability_bounds(scenario: &NetworkScenario) -> Result<(f64, f64)> {
    let mo = Moments::new(scenario)?;
    Ok((
        2.0 / linalg::max_eigenvalue(&mo.noisy_normal()),
        2.0 / linalg::max_eigenvalue(&mo.clean_normal()),
    ))
}

/// `D = I - mu sum_k (p_k R_{u,k} + R_{v,k})`.
pub fn clms_mean_matrix(scenario: &NetworkScenario, step: f64) -> Result<CMatrix> {
    let mo = Moments::new(scenario)?;
    Ok(linalg::identity(mo.dim()) - mo.noisy_normal() * C64::new(step, 0.0))
}

/// `D-bar = I - mu-bar sum_k p_k R_{u,k}`.
pub fn bc_mean_matrix(scenario: &NetworkScenario, step: f64) -> Result<CMatrix> {
    let mo = Moments::new(scenario)?;
    Ok(linalg::identity(mo.dim()) - mo.clean_normal() * C64::new(step, 0.0))
}

/// Iterates `E[w~_i] = D E[w~_{i-1}] - mu t_f` from `E[w~_{-1}] = w° - w_init`.
pub fn clms_mean_recursion(
    scenario: &NetworkScenario,
    step: f64,
    initial_weights: &[C64],
    iterations: usize,
) -> Result<Vec<Vec<C64>>> {
    let mo = Moments::new(scenario)?;
    let d = linalg::identity(mo.dim()) - mo.noisy_normal() * C64::new(step, 0.0);
    let drift = mo.gradient_offset() * C64::new(step, 0.0);
    let mut e = &mo.w - linalg::to_vector(initial_weights);
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        e = &d * &e - &drift;
        out.push(e.as_slice().to_vec());
    }
    Ok(out)
}

/// Iterates `E[w~_i] = D-bar E[w~_{i-1}]`.
pub fn bc_mean_recursion(
    scenario: &NetworkScenario,
    step: f64,
    initial_weights: &[C64],
    iterations: usize,
) -> Result<Vec<Vec<C64>>> {
    let d = bc_mean_matrix(scenario, step)?;
    let mut e = linalg::to_vector(&scenario.true_weights) - linalg::to_vector(initial_weights);
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        e = &d * &e;
        out.push(e.as_slice().to_vec());
    }
    Ok(out)
}

/// Per-node noise scale on successful frames: `R_{v,k} / p_k = c_k I`.
fn conditional_link_scales(scenario: &NetworkScenario) -> Vec<f64> {
    eff_link_scales(scenario)
        .into_iter()
        .zip(success_probabilities(scenario))
        .map(|(s, p)| if p > 0.0 { s / p } else { 0.0 })
        .collect()
}

/// `sigma^2_{v-hat,k} = sigma^2_{v,k} + sigma^(d)2_{v,k} + w°* R^(u)_{v,k} w°`, with the link
/// terms taken on successful frames (scaled by the equalizer power in analog mode).
pub fn hat_noise_vars(scenario: &NetworkScenario) -> Vec<f64> {
    let wn: f64 = scenario.true_weights.iter().map(|w| w.norm_sqr()).sum();
    conditional_link_scales(scenario)
        .into_iter()
        .zip(&scenario.meas_noise_var)
        .map(|(c, sv)| sv + c + c * wn)
        .collect()
}

/// `X-bar = sum_k p_k (sigma^2_{v-hat,k} R_{u,k} + (beta - 1) R w° w°* R + R Tr(w° w°* R))`
/// with `R` the per-success link covariance.
pub fn bc_noise_moment(scenario: &NetworkScenario, beta: f64) -> Result<CMatrix> {
    let mo = Moments::new(scenario)?;
    let m = mo.dim();
    let scales = conditional_link_scales(scenario);
    let hat = hat_noise_vars(scenario);
    let ww = &mo.w * mo.w.adjoint();
    let mut x = CMatrix::zeros(m, m);
    for k in 0..scenario.num_nodes() {
        let r = linalg::scaled_identity(m, scales[k]);
        let rwwr = &r * &ww * &r;
        let tr = linalg::trace(&(&ww * &r));
        let term = &mo.regressor_cov[k] * C64::new(hat[k], 0.0)
            + rwwr * C64::new(beta - 1.0, 0.0)
            + &r * tr;
        x += term * C64::new(mo.probs[k], 0.0);
    }
    Ok(x)
}

/// `F-bar = D-bar^T kron D-bar*`.
pub fn bc_msd_transition(scenario: &NetworkScenario, step: f64) -> Result<CMatrix> {
    let d = bc_mean_matrix(scenario, step)?;
    Ok(linalg::kron(&d.transpose(), &d.adjoint()))
}

/// Steady-state MSD of BC-CLMS, `[vec(mu^2 X)]* (I - F)^{-1} vec(I)`.
pub fn bc_steady_state_msd(scenario: &NetworkScenario, step: f64, beta: f64) -> Result<f64> {
    let m = scenario.dim();
    let f = bc_msd_transition(scenario, step)?;
    let radius = linalg::spectral_radius_hermitian(&f);
    if !(step > 0.0) || radius >= 1.0 {
        return Err(Error::Unstable { step, radius });
    }
    let x = bc_noise_moment(scenario, beta)? * C64::new(step * step, 0.0);
    let lhs = linalg::identity(m * m) - f;
    let sigma = linalg::solve(&lhs, &linalg::vec(&linalg::identity(m)), "I - F")?;
    let msd = linalg::vec(&x).dotc(&sigma);
    Ok(msd.re)
}

/// Bisection for the step size at which `radius(step)` crosses 1.
///
/// `lo` must be stable and `hi` unstable. Returns the bracket midpoint once
/// the bracket is narrower than `rel_tol * lo`.
pub fn bisect_stability_boundary<F>(radius: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if radius(lo)? >= 1.0 || radius(hi)? <= 1.0 {
        return Err(Error::InvalidArgument {
            arg: "bracket",
            reason: format!("[{lo}, {hi}] does not bracket the stability boundary"),
        });
    }
    while hi - lo > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if radius(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    CircularComplex,
    /// Real-valued Gaussian control.
    Real,
}

/// Monte Carlo fit of the fourth-moment factor `beta`.
///
/// Estimates `S = E[v* v w w* v* v]` for `v ~ N(0, variance I_M)` and projects
/// `S - R Tr(w w* R)` onto `R w w* R`; the coefficient is `beta - 1`.
/// Returns `None` when `R w w* R` vanishes (e.g. `w = 0`).
pub fn moment_factor_oracle<R: Rng + ?Sized>(
    variance: f64,
    w: &[C64],
    trials: usize,
    kind: NoiseKind,
    rng: &mut R,
) -> Option<f64> {
    let m = w.len();
    let mut s = vec![C64::new(0.0, 0.0); m * m];
    let mut v = vec![C64::new(0.0, 0.0); m];
    let sd = variance.sqrt();
    for _ in 0..trials {
        for z in v.iter_mut() {
            *z = match kind {
                NoiseKind::CircularComplex => standard_complex_normal(rng) * sd,
                NoiseKind::Real => C64::new(sd * rng.sample::<f64, _>(StandardNormal), 0.0),
            };
        }
        let a: C64 = v.iter().zip(w).map(|(x, y)| x * y).sum();
        let a2 = a.norm_sqr();
        for p in 0..m {
            let vp = v[p].conj() * a2;
            for q in 0..m {
                s[p * m + q] += vp * v[q];
            }
        }
    }
    let n = trials as f64;
    let wn: f64 = w.iter().map(|x| x.norm_sqr()).sum();
    // R = variance I: R Tr(w w* R) = variance^2 |w|^2 I, R w w* R = variance^2 w w*
    let v2 = variance * variance;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in 0..m {
        for q in 0..m {
            let g = w[p] * w[q].conj() * v2;
            let mut resid = s[p * m + q] / n;
            if p == q {
                resid -= C64::new(v2 * wn, 0.0);
            }
            num += (g.conj() * resid).re;
            den += g.norm_sqr();
        }
    }
    if den <= f64::MIN_POSITIVE {
        return None;
    }
    Some(1.0 + num / den)
}

/// All closed-form quantities for one scenario and step-size pair.
#[derive(Clone, Debug)]
pub struct TheoryReport {
    pub distances: Vec<f64>,
    pub threshold_snrs: Vec<f64>,
    pub success_probs: Vec<f64>,
    /// `E[I_k |g_k|^2]`
    pub eq_power: Vec<f64>,
    pub eff_link_cov: Vec<CMatrix>,
    pub hat_noise_var: Vec<f64>,
    pub biased_opt: Vec<C64>,
    pub unbiased_opt: Vec<C64>,
    pub bias: Vec<C64>,
    pub clms_mu_max: f64,
    pub bc_mu_max: f64,
    pub bc_step: f64,
    pub beta: f64,
    pub steady_msd: f64,
}

impl TheoryReport {
    pub fn compute(scenario: &NetworkScenario, bc_step: f64, beta: f64) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.num_nodes();
        let (biased_opt, unbiased_opt) = optimal_solutions(scenario)?;
        let (clms_mu_max, bc_mu_max) = stability_bounds(scenario)?;
        Ok(TheoryReport {
            distances: (0..n).map(|k| scenario.distance(k)).collect(),
            threshold_snrs: (0..n).map(|k| threshold_snr(scenario, k)).collect(),
            success_probs: success_probabilities(scenario),
            eq_power: eq_powers(scenario),
            eff_link_cov: (0..n).map(|k| effective_link_cov(scenario, k)).collect(),
            hat_noise_var: hat_noise_vars(scenario),
            biased_opt,
            unbiased_opt,
            bias: clms_bias(scenario)?,
            clms_mu_max,
            bc_mu_max,
            bc_step,
            beta,
            steady_msd: bc_steady_state_msd(scenario, bc_step, beta)?,
        })
    }

    pub fn steady_msd_db(&self) -> f64 {
        10.0 * self.steady_msd.log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn scenario(mode: LinkMode) -> NetworkScenario {
        NetworkScenario {
            true_weights: vec![c(-0.8006), C64::new(-0.3203, 0.1601), c(0.4804)],
            node_positions: vec![[0.8, 0.5], [0.5, 0.22], [0.3, 0.3]],
            fusion_position: [0.5, 0.5],
            tx_power: 10.0,
            path_loss_exp: 2.5,
            nominal_range: vec![0.3; 3],
            meas_noise_var: vec![0.069, 0.09, 0.087],
            link_noise_var: vec![0.0617, 0.056, 0.0923],
            fading_var: vec![1.0; 3],
            regressor_corr: vec![1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0],
            mode,
            channel_est_error_var: 0.0,
            fading_corr: 0.0,
        }
    }

    /// E1(x) by its convergent power series (x small) or continued fraction.
    fn exp_integral_e1(x: f64) -> f64 {
        if x < 1.0 {
            let euler = 0.577_215_664_901_532_9;
            let mut sum = 0.0;
            let mut term = 1.0;
            for n in 1..60 {
                term *= -x / n as f64;
                sum += term / n as f64;
            }
            -euler - x.ln() - sum
        } else {
            // modified Lentz on the continued fraction e^-x / (x + 1 - 1/(x + 3 - 4/(x + 5 ...
            let tiny = 1e-300;
            let mut b = x + 1.0;
            let mut cc = 1.0 / tiny;
            let mut d = 1.0 / b;
            let mut h = d;
            for i in 1..500 {
                let an = -((i * i) as f64);
                b += 2.0;
                d = 1.0 / (an * d + b);
                cc = b + an / cc;
                let del = cc * d;
                h *= del;
                if (del - 1.0).abs() < 1e-16 {
                    break;
                }
            }
            h * (-x).exp()
        }
    }

    #[test]
    fn eq_power_matches_exponential_integral() {
        let cases: [(f64, f64, f64, f64, f64); 4] = [
            (1.0, 0.3, 0.3, 2.5, 10.0),
            (1.0, 0.1, 0.3, 2.5, 10.0),
            (0.5, 0.45, 0.3, 2.0, 3.0),
            (2.0, 0.05, 0.3, 3.0, 1.0),
        ];
        for (var, r, r0, alpha, p) in cases {
            let lambda = 1.0 / var;
            let x0 = (r / r0).powf(alpha);
            let oracle = r.powf(alpha) / p * lambda * exp_integral_e1(lambda * x0);
            let q = expected_eq_power(var, r, r0, alpha, p);
            assert!((q - oracle).abs() < 1e-9 * oracle, "{q} vs {oracle}");
        }
    }

    #[test]
    fn eq_power_monte_carlo() {
        let (var, r, r0, alpha, p): (f64, f64, f64, f64, f64) = (1.0, 0.28, 0.3, 2.5, 10.0);
        let x0 = (r / r0).powf(alpha);
        let mut rng = trial_rng(99, 0);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let h2 = crate::rng::complex_normal(&mut rng, var).norm_sqr();
            if h2 >= x0 {
                acc += r.powf(alpha) / (p * h2);
            }
        }
        let mc = acc / n as f64;
        let q = expected_eq_power(var, r, r0, alpha, p);
        assert!((mc / q - 1.0).abs() < 0.01, "{mc} vs {q}");
    }

    #[test]
    fn eq_power_limits_and_monotonicity() {
        // y E1(y) rises while E1(y) > e^{-y} and falls afterwards
        assert_eq!(expected_eq_power(1.0, 50.0, 0.3, 2.5, 10.0), 0.0);
        let e = |r: f64| expected_eq_power(1.0, r, 0.3, 2.5, 10.0);
        let y = |r: f64| (r / 0.3_f64).powf(2.5);
        for i in 1..60 {
            let r = 0.02 * i as f64;
            if y(1.1 * r) < 0.3 {
                assert!(e(1.1 * r) > e(r), "r = {r}");
            } else if y(r) > 0.6 {
                assert!(e(1.1 * r) < e(r), "r = {r}");
            }
        }
        assert!(e(1e-6) < 1e-12);
    }

    #[test]
    fn eq_power_bounded_by_threshold_value() {
        let sc = scenario(LinkMode::Analog);
        let p = success_probabilities(&sc);
        for (k, e) in eq_powers(&sc).into_iter().enumerate() {
            let bound = p[k] * sc.nominal_range[k].powf(2.5) / sc.tx_power;
            assert!(e > 0.0 && e <= bound, "{e} vs {bound}");
        }
    }

    #[test]
    fn effective_cov_structure() {
        let sc = scenario(LinkMode::Analog);
        let e = eq_powers(&sc);
        for k in 0..3 {
            let r = effective_link_cov(&sc, k);
            let expect = linalg::scaled_identity(3, e[k] * sc.link_noise_var[k]);
            assert!((r - expect).norm() < 1e-15);
        }
        let mut quiet = sc.clone();
        quiet.link_noise_var = vec![0.0; 3];
        assert_eq!(effective_link_cov(&quiet, 1), CMatrix::zeros(3, 3));
        let dig = scenario(LinkMode::Digital);
        let p = success_probabilities(&dig);
        assert!((effective_link_cov(&dig, 2)[(0, 0)].re - p[2] * 0.0923).abs() < 1e-15);
    }

    #[test]
    fn noiseless_links_recover_true_weights() {
        let mut sc = scenario(LinkMode::Digital);
        sc.link_noise_var = vec![0.0; 3];
        let (biased, unbiased) = optimal_solutions(&sc).unwrap();
        for ((a, b), w) in biased.iter().zip(&unbiased).zip(&sc.true_weights) {
            assert!((a - w).norm() < 1e-12);
            assert!((b - w).norm() < 1e-12);
        }
        assert!(clms_bias(&sc).unwrap().iter().all(|b| b.norm() < 1e-15));
    }

    #[test]
    fn unbiased_optimum_is_true_weights() {
        for mode in [LinkMode::Analog, LinkMode::Digital] {
            let sc = scenario(mode);
            let (_, unbiased) = optimal_solutions(&sc).unwrap();
            for (a, w) in unbiased.iter().zip(&sc.true_weights) {
                assert!((a - w).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bias_equals_gap_between_optima() {
        for mode in [LinkMode::Analog, LinkMode::Digital] {
            let sc = scenario(mode);
            let (biased, _) = optimal_solutions(&sc).unwrap();
            let b = clms_bias(&sc).unwrap();
            let scale = b.iter().map(|x| x.norm()).fold(0.0, f64::max);
            for m in 0..3 {
                let gap = sc.true_weights[m] - biased[m];
                assert!((gap - b[m]).norm() <= 1e-10 * scale.max(1e-300), "{mode:?} {m}");
            }
        }
    }

    #[test]
    fn bias_matches_link_failure_formula() {
        // b = (sum p (R_u + R_n))^{-1} sum p R_n w°, written out independently
        let sc = scenario(LinkMode::Digital);
        let p = success_probabilities(&sc);
        let mut a = CMatrix::zeros(3, 3);
        let mut rhs = CVector::zeros(3);
        let w = linalg::to_vector(&sc.true_weights);
        for k in 0..3 {
            let ru = build(sc.regressor_corr[k]);
            let rn = linalg::scaled_identity(3, sc.link_noise_var[k]);
            a += (ru + &rn) * c(p[k]);
            rhs += &rn * &w * c(p[k]);
        }
        let expect = a.lu().solve(&rhs).unwrap();
        let b = clms_bias(&sc).unwrap();
        for m in 0..3 {
            assert!((b[m] - expect[m]).norm() < 1e-13);
        }
    }

    fn build(eta: f64) -> CMatrix {
        crate::model::build_regressor_covariance(eta, 3).unwrap()
    }

    #[test]
    fn scalar_bounds() {
        let sc = NetworkScenario {
            true_weights: vec![c(1.0)],
            node_positions: vec![[1e-9, 0.0]],
            fusion_position: [0.0, 0.0],
            tx_power: 1.0,
            path_loss_exp: 2.0,
            nominal_range: vec![1.0],
            meas_noise_var: vec![0.0],
            link_noise_var: vec![0.0],
            fading_var: vec![1.0],
            regressor_corr: vec![0.0],
            mode: LinkMode::Digital,
            channel_est_error_var: 0.0,
            fading_corr: 0.0,
        };
        let (a, b) = stability_bounds(&sc).unwrap();
        assert!((a - 2.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bc_bound_not_below_clms_bound() {
        for mode in [LinkMode::Analog, LinkMode::Digital] {
            let (a, b) = stability_bounds(&scenario(mode)).unwrap();
            assert!(a <= b);
        }
    }

    #[test]
    fn noiseless_msd_is_zero() {
        let mut sc = scenario(LinkMode::Digital);
        sc.link_noise_var = vec![0.0; 3];
        sc.meas_noise_var = vec![0.0; 3];
        assert_eq!(bc_steady_state_msd(&sc, 0.003, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn msd_scales_with_step_squared_over_step() {
        // for small steps (I - F)^{-1} ~ 1/mu, so MSD ~ mu: halving the step halves it
        // while vec(mu^2 X) alone drops by 4
        for mode in [LinkMode::Analog, LinkMode::Digital] {
            let sc = scenario(mode);
            let a = bc_steady_state_msd(&sc, 0.0004, 2.0).unwrap();
            let b = bc_steady_state_msd(&sc, 0.0002, 2.0).unwrap();
            let x = bc_noise_moment(&sc, 2.0).unwrap();
            let ratio_x = linalg::vec(&(&x * c(0.0002 * 0.0002))).norm()
                / linalg::vec(&(&x * c(0.0004 * 0.0004))).norm();
            assert!((0.24..0.26).contains(&ratio_x));
            assert!((b / a - 0.5).abs() < 0.01, "{}", b / a);
        }
    }

    #[test]
    fn unstable_step_reported() {
        let sc = scenario(LinkMode::Digital);
        let (_, bc) = stability_bounds(&sc).unwrap();
        match bc_steady_state_msd(&sc, 1.01 * bc, 2.0) {
            Err(Error::Unstable { step, .. }) => assert_eq!(step, 1.01 * bc),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mean_matrix_eigenvalues_track_bound() {
        let sc = scenario(LinkMode::Digital);
        let (_, bc) = stability_bounds(&sc).unwrap();
        for (step, inside) in [(0.5 * bc, true), (0.999 * bc, true), (1.001 * bc, false)] {
            let d = bc_mean_matrix(&sc, step).unwrap();
            assert!(linalg::hermiticity_residual(&d) < 1e-12);
            let ev = linalg::hermitian_eigenvalues(&d);
            let ok = ev.iter().all(|e| *e > -1.0 && *e < 1.0);
            assert_eq!(ok, inside);
        }
    }

    #[test]
    fn transition_eigenvalues_are_products() {
        let sc = scenario(LinkMode::Analog);
        let d = bc_mean_matrix(&sc, 0.1).unwrap();
        let f = bc_msd_transition(&sc, 0.1).unwrap();
        assert!(linalg::hermiticity_residual(&f) < 1e-12);
        let ev = linalg::hermitian_eigenvalues(&d);
        let mut prods: Vec<f64> = ev.iter().flat_map(|a| ev.iter().map(move |b| a * b)).collect();
        prods.sort_by(f64::total_cmp);
        let evf = linalg::hermitian_eigenvalues(&f);
        for (a, b) in prods.iter().zip(&evf) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn covariances_hermitian() {
        for mode in [LinkMode::Analog, LinkMode::Digital] {
            let sc = scenario(mode);
            let x = bc_noise_moment(&sc, 2.0).unwrap();
            assert!(linalg::hermiticity_residual(&x) < 1e-12);
            assert!(linalg::hermitian_eigenvalues(&x)[0] >= 0.0);
            for k in 0..3 {
                assert!(linalg::hermiticity_residual(&effective_link_cov(&sc, k)) < 1e-12);
            }
        }
    }

    #[test]
    fn bias_formula_has_no_step() {
        // clms_bias takes no step size; the mean recursion's fixed point agrees at two steps
        let sc = scenario(LinkMode::Digital);
        let b = clms_bias(&sc).unwrap();
        let zero = vec![c(0.0); 3];
        for step in [0.02, 0.01] {
            let traj = clms_mean_recursion(&sc, step, &zero, 20_000).unwrap();
            let last = traj.last().unwrap();
            for m in 0..3 {
                assert!((last[m] - b[m]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn oracle_scalar_circular() {
        let mut rng = trial_rng(5, 0);
        let beta = moment_factor_oracle(1.0, &[c(1.0)], 1_000_000, NoiseKind::CircularComplex, &mut rng)
            .unwrap();
        assert!((beta - 2.0).abs() < 0.05, "{beta}");
    }

    #[test]
    fn oracle_real_control() {
        let mut rng = trial_rng(6, 0);
        let beta = moment_factor_oracle(
            0.5,
            &[c(0.3), c(-0.7), c(0.2)],
            1_000_000,
            NoiseKind::Real,
            &mut rng,
        )
        .unwrap();
        assert!((beta - 3.0).abs() < 0.1, "{beta}");
    }

    #[test]
    fn oracle_degenerate_weight() {
        let mut rng = trial_rng(7, 0);
        assert!(moment_factor_oracle(1.0, &[c(0.0); 2], 1000, NoiseKind::CircularComplex, &mut rng).is_none());
    }

    #[test]
    fn bisection_brackets_boundary() {
        let sc = scenario(LinkMode::Digital);
        let (clms_max, _) = stability_bounds(&sc).unwrap();
        let found = bisect_stability_boundary(
            |mu| Ok(linalg::spectral_radius_hermitian(&clms_mean_matrix(&sc, mu)?)),
            1e-6,
            10.0,
            1e-9,
        )
        .unwrap();
        assert!((found / clms_max - 1.0).abs() < 1e-8);
        assert!(bisect_stability_boundary(|_| Ok(0.5), 1.0, 2.0, 1e-6).is_err());
    }

    #[test]
    fn report_invariants() {
        for mode in [LinkMode::Analog, LinkMode::Digital] {
            let r = TheoryReport::compute(&scenario(mode), 0.003, 2.0).unwrap();
            assert!(r.steady_msd > 0.0);
            assert!(r.clms_mu_max <= r.bc_mu_max);
            assert!(r.bias.iter().all(|b| b.re.is_finite() && b.im.is_finite()));
        }
    }
}
