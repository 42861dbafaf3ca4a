//! Node-to-fusion-center link: Rayleigh fading, path loss, additive link
//! noise, SNR-threshold failure gating and least-squares equalization.

use rand::Rng;

use crate::model::{LinkMode, NetworkScenario, NodeState};
use crate::rng::complex_normal;
use crate::{Error, Result, C64};

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Per-node, per-iteration channel realization.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkDraw {
    /// Fading coefficient `h_k(i)`.
    pub fading: C64,
    /// Effective channel gain `a_k(i)`: `h sqrt(P / r^alpha)` (analog) or the indicator (digital).
    pub gain: C64,
    /// `[v^(u), v^(d)]`, length `M + 1`.
    pub link_noise: Vec<C64>,
    pub snr: f64,
    pub indicator: bool,
    /// `g_k(i)`; `None` on failed links. Always 1 in digital mode.
    pub equalizer: Option<C64>,
    /// `g a` when the equalizer was built from an imperfect channel estimate;
    /// `None` means the equalizer inverts the channel exactly.
    pub residual_gain: Option<C64>,
}

impl LinkDraw {
    pub fn regressor_noise(&self) -> &[C64] {
        &self.link_noise[..self.link_noise.len() - 1]
    }

    pub fn datum_noise(&self) -> C64 {
        self.link_noise[self.link_noise.len() - 1]
    }
}

/// What the fusion center hands to the gated estimators.
#[derive(Clone, Debug, PartialEq)]
pub enum ReceivedFrame {
    Failed,
    Delivered {
        /// `u-bar` (analog) or `u-hat` (digital).
        regressor: Vec<C64>,
        datum: C64,
        /// `g_k(i)`, 1 in digital mode.
        eq_gain: C64,
    },
}

impl ReceivedFrame {
    pub fn indicator(&self) -> bool {
        matches!(self, ReceivedFrame::Delivered { .. })
    }
}

/// `z-hat = a z + v^(z)` before any equalization or gating.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    pub regressor: Vec<C64>,
    pub datum: C64,
}

/// `P / (sigma_z^2 (r°)^alpha)`.
pub fn threshold_snr(scenario: &NetworkScenario, k: usize) -> f64 {
    scenario.tx_power
        / (scenario.link_noise_var[k] * scenario.nominal_range[k].powf(scenario.path_loss_exp))
}

/// `Pr(|h|^2 >= (r/r°)^alpha) = exp(-(r/r°)^alpha / sigma_h^2)`.
pub fn success_probability(fading_var: f64, r: f64, nominal_range: f64, alpha: f64) -> f64 {
    (-(r / nominal_range).powf(alpha) / fading_var).exp()
}

/// Per-node constants for the link model.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    mode: LinkMode,
    dim: usize,
    fading_var: Vec<f64>,
    link_noise_var: Vec<f64>,
    /// `(r/r°)^alpha`
    fade_threshold: Vec<f64>,
    /// `sqrt(P / r^alpha)`
    amplitude: Vec<f64>,
    /// `P / (sigma_z^2 r^alpha)`
    snr_scale: Vec<f64>,
    est_error_var: f64,
    fading_corr: f64,
}

impl ChannelModel {
    pub fn new(scenario: &NetworkScenario) -> Self {
        let n = scenario.num_nodes();
        let alpha = scenario.path_loss_exp;
        let fade_threshold = (0..n)
            .map(|k| (scenario.distance(k) / scenario.nominal_range[k]).powf(alpha))
            .collect();
        let amplitude = (0..n).map(|k| scenario.path_gain(k).sqrt()).collect();
        let snr_scale = (0..n)
            .map(|k| scenario.path_gain(k) / scenario.link_noise_var[k])
            .collect();
        ChannelModel {
            mode: scenario.mode,
            dim: scenario.dim(),
            fading_var: scenario.fading_var.clone(),
            link_noise_var: scenario.link_noise_var.clone(),
            fade_threshold,
            amplitude,
            snr_scale,
            est_error_var: scenario.channel_est_error_var,
            fading_corr: scenario.fading_corr,
        }
    }

    pub fn mode(&self) -> LinkMode {
        self.mode
    }

    pub fn fading_var(&self, k: usize) -> f64 {
        self.fading_var[k]
    }

    pub fn fading_corr(&self) -> f64 {
        self.fading_corr
    }

    /// Completes a link draw for a given fading coefficient `h`.
    pub fn link_from_fading<R: Rng + ?Sized>(&self, k: usize, h: C64, rng: &mut R) -> LinkDraw {
        let var = self.link_noise_var[k];
        let link_noise = (0..=self.dim).map(|_| complex_normal(rng, var)).collect();
        let power = h.norm_sqr();
        // Boundary tie counts as success.
        let indicator = power >= self.fade_threshold[k];
        let snr = power * self.snr_scale[k];
        let (gain, equalizer, residual_gain) = match self.mode {
            LinkMode::Digital => {
                let a = if indicator { ONE } else { ZERO };
                (a, indicator.then_some(ONE), None)
            }
            LinkMode::Analog => {
                let a = h * self.amplitude[k];
                if !indicator {
                    (a, None, None)
                } else if self.est_error_var > 0.0 {
                    let h_est = h + complex_normal(rng, self.est_error_var);
                    let g = h_est.conj() / h_est.norm_sqr() / self.amplitude[k];
                    (a, Some(g), Some(g * a))
                } else {
                    let g = h.conj() / power / self.amplitude[k];
                    (a, Some(g), None)
                }
            }
        };
        LinkDraw { fading: h, gain, link_noise, snr, indicator, equalizer, residual_gain }
    }

    /// I.i.d. fading draw followed by [`Self::link_from_fading`].
    pub fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> LinkDraw {
        let h = complex_normal(rng, self.fading_var[k]);
        self.link_from_fading(k, h, rng)
    }

    /// Equalized, gated frame: `u-bar = u + g v^u` in analog mode.
    pub fn transmit(&self, state: &NodeState, link: &LinkDraw) -> ReceivedFrame {
        if !link.indicator {
            return ReceivedFrame::Failed;
        }
        let nu = link.regressor_noise();
        let nd = link.datum_noise();
        match self.mode {
            LinkMode::Digital => ReceivedFrame::Delivered {
                regressor: state.regressor.iter().zip(nu).map(|(u, n)| u + n).collect(),
                datum: state.measurement + nd,
                eq_gain: ONE,
            },
            LinkMode::Analog => {
                let g = link.equalizer.expect("successful analog link carries an equalizer");
                let (regressor, datum) = match link.residual_gain {
                    None => (
                        state.regressor.iter().zip(nu).map(|(u, n)| u + g * n).collect(),
                        state.measurement + g * nd,
                    ),
                    Some(c) => (
                        state.regressor.iter().zip(nu).map(|(u, n)| c * u + g * n).collect(),
                        c * state.measurement + g * nd,
                    ),
                };
                ReceivedFrame::Delivered { regressor, datum, eq_gain: g }
            }
        }
    }

    /// Raw received data `a z + v^(z)`, regardless of the indicator.
    pub fn receive_raw(&self, state: &NodeState, link: &LinkDraw) -> RawFrame {
        let a = link.gain;
        let nu = link.regressor_noise();
        RawFrame {
            regressor: state.regressor.iter().zip(nu).map(|(u, n)| a * u + n).collect(),
            datum: a * state.measurement + link.datum_noise(),
        }
    }
}

/// Stateful fading generator; first-order autoregressive when `corr > 0`.
#[derive(Clone, Debug)]
pub struct FadingProcess {
    corr: f64,
    innovation: f64,
    state: Vec<Option<C64>>,
}

impl FadingProcess {
    pub fn new(num_nodes: usize, corr: f64) -> Self {
        FadingProcess {
            corr,
            innovation: (1.0 - corr * corr).sqrt(),
            state: vec![None; num_nodes],
        }
    }

    /// Next `h_k(i)`; stationary variance `var`.
    pub fn next<R: Rng + ?Sized>(&mut self, k: usize, var: f64, rng: &mut R) -> C64 {
        let e = complex_normal(rng, var);
        let h = match self.state[k] {
            Some(prev) if self.corr > 0.0 => prev * self.corr + e * self.innovation,
            _ => e,
        };
        self.state[k] = Some(h);
        h
    }
}

/// Draws `h_k(i)`, the link noise, the indicator and the LS equalizer.
pub fn draw_link<R: Rng + ?Sized>(scenario: &NetworkScenario, k: usize, rng: &mut R) -> LinkDraw {
    ChannelModel::new(scenario).draw(k, rng)
}

/// Passes a node's data through the link and the fusion-center front end.
pub fn transmit(
    scenario: &NetworkScenario,
    k: usize,
    state: &NodeState,
    link: &LinkDraw,
) -> Result<ReceivedFrame> {
    if k >= scenario.num_nodes() {
        return Err(Error::InvalidArgument { arg: "k", reason: format!("node {k} out of range") });
    }
    if state.regressor.len() != scenario.dim() {
        return Err(Error::DimensionMismatch {
            expected: scenario.dim(),
            got: state.regressor.len(),
        });
    }
    Ok(ChannelModel::new(scenario).transmit(state, link))
}

/// Literal `g z-hat` equalization of a raw frame. Failed links have no equalizer.
pub fn equalize(raw: &RawFrame, link: &LinkDraw) -> Result<RawFrame> {
    if !link.indicator {
        return Err(Error::FailedFrame);
    }
    let g = link.equalizer.ok_or(Error::FailedFrame)?;
    Ok(RawFrame {
        regressor: raw.regressor.iter().map(|x| g * x).collect(),
        datum: g * raw.datum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SourceModel;
    use crate::rng::trial_rng;

    fn scenario(mode: LinkMode) -> NetworkScenario {
        NetworkScenario {
            true_weights: vec![C64::new(-0.8, 0.0), C64::new(-0.3, 0.16), C64::new(0.48, 0.0)],
            node_positions: vec![[0.9, 0.5], [0.5, 0.2]],
            fusion_position: [0.5, 0.5],
            tx_power: 10.0,
            path_loss_exp: 2.5,
            nominal_range: vec![0.3, 0.3],
            meas_noise_var: vec![0.07, 0.09],
            link_noise_var: vec![0.05, 0.06],
            fading_var: vec![1.0, 1.0],
            regressor_corr: vec![0.1, 0.2],
            mode,
            channel_est_error_var: 0.0,
            fading_corr: 0.0,
        }
    }

    #[test]
    fn threshold_snr_values() {
        let mut sc = scenario(LinkMode::Analog);
        sc.tx_power = 1.0;
        sc.link_noise_var[0] = 1.0;
        sc.nominal_range[0] = 1.0;
        sc.path_loss_exp = 2.0;
        assert_eq!(threshold_snr(&sc, 0), 1.0);

        let sc = scenario(LinkMode::Analog);
        let expected = 10.0 / (0.05 * 0.3f64.powf(2.5));
        assert!((threshold_snr(&sc, 0) - expected).abs() < 1e-9 * expected);
        // 0.3^2.5 = 0.0492950301...; 10 / (0.05 * that) = 4057.20...
        assert!((threshold_snr(&sc, 0) - 4057.205).abs() < 1e-2);

        let mut doubled = sc.clone();
        doubled.tx_power *= 2.0;
        assert!((threshold_snr(&doubled, 0) - 2.0 * threshold_snr(&sc, 0)).abs() < 1e-9);
    }

    #[test]
    fn success_probability_values() {
        assert!((success_probability(1.0, 0.3, 0.3, 2.5) - (-1f64).exp()).abs() < 1e-15);
        assert!((success_probability(1.0, 1e-9, 0.3, 2.5) - 1.0).abs() < 1e-12);
        let p = success_probability(1.0, 0.4, 0.3, 2.5);
        assert!((p - (-(4.0f64 / 3.0).powf(2.5)).exp()).abs() < 1e-15);
        // (4/3)^2.5 = 2.05280...; exp(-2.05280) = 0.128383...
        assert!((p - 0.12838).abs() < 1e-4);
    }

    #[test]
    fn boundary_tie_is_success() {
        let sc = scenario(LinkMode::Analog);
        let model = ChannelModel::new(&sc);
        let x0 = (sc.distance(0) / sc.nominal_range[0]).powf(sc.path_loss_exp);
        let h = C64::new(x0.sqrt(), 0.0);
        // make |h|^2 hit the threshold exactly
        let h = if h.norm_sqr() >= x0 { h } else { C64::new(f64::from_bits(h.re.to_bits() + 1), 0.0) };
        let h = if C64::new(f64::from_bits(h.re.to_bits() - 1), 0.0).norm_sqr() >= x0 {
            C64::new(f64::from_bits(h.re.to_bits() - 1), 0.0)
        } else {
            h
        };
        let link = model.link_from_fading(0, h, &mut trial_rng(0, 0));
        assert!(link.indicator);
        let below = C64::new(f64::from_bits(h.re.to_bits() - 1), 0.0);
        let link = model.link_from_fading(0, below, &mut trial_rng(0, 0));
        assert!(!link.indicator);
    }

    #[test]
    fn unit_channel_gives_unit_equalizer() {
        let mut sc = scenario(LinkMode::Analog);
        // P = r^alpha for node 0, and a range wide enough that h = 1 succeeds
        sc.tx_power = sc.distance(0).powf(sc.path_loss_exp);
        sc.nominal_range[0] = 1.0;
        let model = ChannelModel::new(&sc);
        let link = model.link_from_fading(0, C64::new(1.0, 0.0), &mut trial_rng(0, 0));
        assert!(link.indicator);
        let g = link.equalizer.unwrap();
        assert!((g - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn indicator_characterizations_agree() {
        let sc = scenario(LinkMode::Analog);
        let model = ChannelModel::new(&sc);
        let mut rng = trial_rng(4, 0);
        for i in 0..20_000 {
            let k = i % 2;
            let link = model.draw(k, &mut rng);
            let by_snr = link.snr >= threshold_snr(&sc, k);
            let x0 = (sc.distance(k) / sc.nominal_range[k]).powf(sc.path_loss_exp);
            assert_eq!(link.indicator, link.fading.norm_sqr() >= x0);
            // the SNR form can differ only by rounding at an exact tie
            if (link.snr / threshold_snr(&sc, k) - 1.0).abs() > 1e-12 {
                assert_eq!(by_snr, link.indicator);
            }
        }
    }

    #[test]
    fn equalizer_inverts_channel_and_is_bounded() {
        let sc = scenario(LinkMode::Analog);
        let model = ChannelModel::new(&sc);
        let mut rng = trial_rng(8, 0);
        for k in 0..2 {
            let bound = sc.nominal_range[k].powf(sc.path_loss_exp) / sc.tx_power;
            for _ in 0..5000 {
                let link = model.draw(k, &mut rng);
                if let Some(g) = link.equalizer {
                    assert!(((g * link.gain) - C64::new(1.0, 0.0)).norm() < 1e-12);
                    assert!(g.norm_sqr() <= bound * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn noiseless_analog_recovers_source_exactly() {
        let mut sc = scenario(LinkMode::Analog);
        sc.link_noise_var = vec![0.0, 0.0];
        let model = ChannelModel::new(&sc);
        let src = SourceModel::new(&sc).unwrap();
        let mut rng = trial_rng(2, 0);
        let mut delivered = 0;
        for _ in 0..2000 {
            let state = src.generate(1, &mut rng);
            let link = model.draw(1, &mut rng);
            if let ReceivedFrame::Delivered { regressor, datum, .. } = model.transmit(&state, &link) {
                assert_eq!(regressor, state.regressor);
                assert_eq!(datum, state.measurement);
                delivered += 1;
            }
        }
        assert!(delivered > 100);
    }

    #[test]
    fn noiseless_digital_delivers_source() {
        let mut sc = scenario(LinkMode::Digital);
        sc.link_noise_var = vec![0.0, 0.0];
        let model = ChannelModel::new(&sc);
        let src = SourceModel::new(&sc).unwrap();
        let mut rng = trial_rng(2, 0);
        for _ in 0..500 {
            let state = src.generate(0, &mut rng);
            let link = model.draw(0, &mut rng);
            match model.transmit(&state, &link) {
                ReceivedFrame::Delivered { regressor, datum, eq_gain } => {
                    assert_eq!(regressor, state.regressor);
                    assert_eq!(datum, state.measurement);
                    assert_eq!(eq_gain, C64::new(1.0, 0.0));
                }
                ReceivedFrame::Failed => assert!(!link.indicator),
            }
        }
    }

    #[test]
    fn analog_frames_satisfy_equalized_identities() {
        let sc = scenario(LinkMode::Analog);
        let model = ChannelModel::new(&sc);
        let src = SourceModel::new(&sc).unwrap();
        let mut rng = trial_rng(21, 0);
        for _ in 0..2000 {
            let state = src.generate(0, &mut rng);
            let link = model.draw(0, &mut rng);
            let frame = model.transmit(&state, &link);
            let ReceivedFrame::Delivered { regressor, datum, eq_gain } = frame else {
                assert!(equalize(&model.receive_raw(&state, &link), &link).is_err());
                continue;
            };
            for (m, x) in regressor.iter().enumerate() {
                assert_eq!(*x, state.regressor[m] + eq_gain * link.regressor_noise()[m]);
            }
            assert_eq!(datum, state.measurement + eq_gain * link.datum_noise());
            // literal g * z-hat agrees up to rounding
            let lit = equalize(&model.receive_raw(&state, &link), &link).unwrap();
            for (a, b) in lit.regressor.iter().zip(&regressor) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn digital_raw_failed_frame_is_noise_only() {
        let sc = scenario(LinkMode::Digital);
        let model = ChannelModel::new(&sc);
        let src = SourceModel::new(&sc).unwrap();
        let mut rng = trial_rng(1, 1);
        for _ in 0..500 {
            let state = src.generate(0, &mut rng);
            let link = model.draw(0, &mut rng);
            let raw = model.receive_raw(&state, &link);
            if !link.indicator {
                assert_eq!(raw.regressor, link.regressor_noise());
                assert_eq!(raw.datum, link.datum_noise());
            }
        }
    }

    #[test]
    fn empirical_success_frequency() {
        let sc = scenario(LinkMode::Analog);
        let model = ChannelModel::new(&sc);
        let mut rng = trial_rng(17, 0);
        let n = 100_000;
        for k in 0..2 {
            let hits = (0..n).filter(|_| model.draw(k, &mut rng).indicator).count();
            let p = success_probability(1.0, sc.distance(k), 0.3, 2.5);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = hits as f64 / n as f64;
            assert!((freq - p).abs() < 3.0 * se, "node {k}: {freq} vs {p}");
        }
    }

    #[test]
    fn ar1_fading_keeps_variance() {
        let mut proc = FadingProcess::new(1, 0.9);
        let mut rng = trial_rng(3, 0);
        let n = 200_000;
        let (mut s2, mut lag) = (0.0, C64::new(0.0, 0.0));
        let mut prev = proc.next(0, 2.0, &mut rng);
        for _ in 0..n {
            let h = proc.next(0, 2.0, &mut rng);
            s2 += h.norm_sqr();
            lag += h * prev.conj();
            prev = h;
        }
        let var = s2 / n as f64;
        let rho = lag.re / s2;
        assert!((var - 2.0).abs() < 0.1, "{var}");
        assert!((rho - 0.9).abs() < 0.01, "{rho}");
    }

    #[test]
    fn channel_estimation_error_perturbs_inversion() {
        let mut sc = scenario(LinkMode::Analog);
        sc.channel_est_error_var = 0.05;
        let model = ChannelModel::new(&sc);
        let mut rng = trial_rng(3, 3);
        let mut seen = false;
        for _ in 0..500 {
            let link = model.draw(1, &mut rng);
            if let Some(c) = link.residual_gain {
                assert!((c - C64::new(1.0, 0.0)).norm() > 0.0);
                seen = true;
            }
        }
        assert!(seen);
    }
}
