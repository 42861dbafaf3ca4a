//! CSV artifacts.
//!
//! Every file starts with one `#` comment line carrying the seed, the
//! version string and the SHA-256 of the config text, then a header row.
//! Floats are written in shortest round-trip form; complex values as
//! `re`/`im` column pairs.

use std::io::Write;

use sha2::{Digest, Sha256};

use crate::experiments::{Comparison, ExperimentResult, SweepRow};
use crate::theory::TheoryReport;
use crate::Result;

/// `git describe` output baked in at build time when available.
pub fn version_string() -> String {
    match option_env!("CLMS_GIT_DESCRIBE") {
        Some(v) if !v.is_empty() => v.to_string(),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub version: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(seed: u64, config_text: &str) -> Self {
        Provenance {
            seed,
            version: version_string(),
            config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
        }
    }

    pub fn comment_line(&self) -> String {
        format!("# seed={} version={} config_sha256={}\n", self.seed, self.version, self.config_sha256)
    }
}

fn writer<W: Write>(mut out: W, prov: &Provenance) -> Result<csv::Writer<W>> {
    out.write_all(prov.comment_line().as_bytes())?;
    Ok(csv::Writer::from_writer(out))
}

fn f(x: f64) -> String {
    x.to_string()
}

/// Columns `quantity,index,re,im`; real quantities have `im = 0`.
pub fn write_theory_report<W: Write>(out: W, prov: &Provenance, t: &TheoryReport) -> Result<()> {
    let mut w = writer(out, prov)?;
    w.write_record(["quantity", "index", "re", "im"])?;
    let real = |w: &mut csv::Writer<W>, name: &str, v: &[f64]| -> Result<()> {
        for (i, x) in v.iter().enumerate() {
            w.write_record([name.to_string(), i.to_string(), f(*x), f(0.0)])?;
        }
        Ok(())
    };
    real(&mut w, "distance", &t.distances)?;
    real(&mut w, "threshold_snr", &t.threshold_snrs)?;
    real(&mut w, "success_prob", &t.success_probs)?;
    real(&mut w, "eq_power", &t.eq_power)?;
    let link_var: Vec<f64> = t.eff_link_cov.iter().map(|c| c[(0, 0)].re).collect();
    real(&mut w, "eff_link_var", &link_var)?;
    real(&mut w, "hat_noise_var", &t.hat_noise_var)?;
    for (name, v) in [("biased_opt", &t.biased_opt), ("unbiased_opt", &t.unbiased_opt), ("bias", &t.bias)] {
        for (i, z) in v.iter().enumerate() {
            w.write_record([name.to_string(), i.to_string(), f(z.re), f(z.im)])?;
        }
    }
    for (name, x) in [
        ("clms_mu_max", t.clms_mu_max),
        ("bc_mu_max", t.bc_mu_max),
        ("bc_step", t.bc_step),
        ("beta", t.beta),
        ("steady_msd", t.steady_msd),
        ("steady_msd_db", t.steady_msd_db()),
    ] {
        real(&mut w, name, &[x])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `iteration,msd_<alg>...`.
pub fn write_msd_trajectory<W: Write>(out: W, prov: &Provenance, r: &ExperimentResult) -> Result<()> {
    let mut w = writer(out, prov)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(r.algorithms.iter().map(|a| format!("msd_{}", a.algorithm)));
    w.write_record(&header)?;
    for i in 0..r.iterations {
        let mut row = vec![i.to_string()];
        row.extend(r.algorithms.iter().map(|a| f(a.msd[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `iteration`, then `re_<alg>_<m>,im_<alg>_<m>` per component and
/// `norm_<alg>` per algorithm.
pub fn write_mean_error<W: Write>(out: W, prov: &Provenance, r: &ExperimentResult) -> Result<()> {
    let mut w = writer(out, prov)?;
    let m = r.true_weights.len();
    let mut header = vec!["iteration".to_string()];
    for a in &r.algorithms {
        for j in 0..m {
            header.push(format!("re_{}_{j}", a.algorithm));
            header.push(format!("im_{}_{j}", a.algorithm));
        }
        header.push(format!("norm_{}", a.algorithm));
    }
    w.write_record(&header)?;
    for i in 0..r.iterations {
        let mut row = vec![i.to_string()];
        for a in &r.algorithms {
            let e = &a.mean_error[i];
            for z in e {
                row.push(f(z.re));
                row.push(f(z.im));
            }
            row.push(f(crate::linalg::norm(e)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison<W: Write>(out: W, prov: &Provenance, c: &Comparison) -> Result<()> {
    let mut w = writer(out, prov)?;
    w.write_record(["quantity", "simulated", "predicted", "abs_delta", "rel_delta", "db_delta", "tolerance", "pass"])?;
    for r in &c.rows {
        w.write_record([
            r.quantity.clone(),
            f(r.simulated),
            f(r.predicted),
            f(r.abs_delta),
            f(r.rel_delta),
            f(r.db_delta),
            f(r.tolerance),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, prov: &Provenance, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(out, prov)?;
    let mut header: Vec<String> = ["step_size", "est_error_var", "fading_corr"].map(String::from).to_vec();
    if let Some(first) = rows.first() {
        for (alg, _, _) in &first.outcomes {
            header.push(format!("msd_db_{alg}"));
            header.push(format!("diverged_{alg}"));
        }
    }
    header.push("theory_bc_msd_db".into());
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![f(r.step_size), f(r.est_error_var), f(r.fading_corr)];
        for (_, db, div) in &r.outcomes {
            row.push(f(*db));
            row.push(div.to_string());
        }
        row.push(f(r.theory_bc_msd_db));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
