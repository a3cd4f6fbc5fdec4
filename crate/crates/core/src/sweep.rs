//! Noise-intensity sweeps tracking how low modes approach the imaginary axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::Backend;
use crate::linalg::c64;
use crate::models::ModelParams;
use crate::spectral::{classify_phase, full_spectrum, SpectrumReport, Verdict};

/// Ratio below which the smallest-ε low modes count as condensed on the imaginary axis.
pub const CONDENSATION_RATIO: f64 = 0.05;
/// Relative band (of the spectral radius) defining the lowest-Γ group.
pub const LOW_MODE_BAND: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condensation {
    Condensed,
    NotCondensed,
    /// Every low mode is real, so the ratio is unbounded.
    NoCondensation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    /// `max |Γ|/|E|` over the nonzero modes of smallest Γ; `None` when some of them have `E = 0`.
    pub ratio: Option<f64>,
    /// One representative low mode `(degree, Γ, E)`.
    pub low_mode: Option<(usize, f64, f64)>,
    pub verdict: Verdict,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: String,
    pub backend: Backend,
    pub rows: Vec<SweepRow>,
    pub ratios_strictly_decreasing: bool,
    pub condensation: Condensation,
}

/// Low-mode ratio and a representative low mode of one spectrum.
pub fn low_mode_ratio(spec: &SpectrumReport) -> (Option<f64>, Option<(usize, f64, f64)>) {
    let tau = spec.default_tolerance();
    let nonzero: Vec<(usize, c64)> = spec
        .values()
        .into_iter()
        .filter(|(_, v)| v.norm() > tau)
        .collect();
    let Some(gmin) = nonzero.iter().map(|(_, v)| v.re).min_by(f64::total_cmp) else {
        return (None, None);
    };
    let band = LOW_MODE_BAND * spec.spectral_radius;
    let low: Vec<&(usize, c64)> = nonzero
        .iter()
        .filter(|(_, v)| v.re - gmin <= band)
        .collect();
    let mut ratio: f64 = 0.0;
    for (_, v) in &low {
        if v.im.abs() <= tau {
            return (None, Some((low[0].0, low[0].1.re, low[0].1.im)));
        }
        ratio = ratio.max(v.re.abs() / v.im.abs());
    }
    let rep = low
        .iter()
        .max_by(|a, b| a.1.im.total_cmp(&b.1.im))
        .expect("nonempty");
    (Some(ratio), Some((rep.0, rep.1.re, rep.1.im)))
}

/// Rebuilds the model at each ε (strictly decreasing, all >= 0) and summarizes the low modes.
pub fn sweep_epsilon(
    model: &ModelParams,
    epsilons: &[f64],
    backend: Backend,
) -> Result<SweepReport> {
    if epsilons.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one ε".into()));
    }
    if epsilons.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(
            "sweep ε values must be finite and >= 0".into(),
        ));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "sweep ε list must be strictly decreasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let spec_model = model.with_epsilon(eps).build()?;
        let spec = full_spectrum(&spec_model.operator(backend)?)?;
        let tau = spec.default_tolerance();
        let (ratio, low_mode) = low_mode_ratio(&spec);
        let verdict = classify_phase(&spec, tau, tau)?.verdict;
        rows.push(SweepRow {
            epsilon: eps,
            ratio,
            low_mode,
            verdict,
            spectral_radius: spec.spectral_radius,
        });
    }
    let ratios_strictly_decreasing = rows.windows(2).all(|w| match (w[0].ratio, w[1].ratio) {
        (Some(a), Some(b)) => b < a,
        _ => false,
    });
    let condensation = match rows.last().and_then(|r| r.ratio) {
        None => Condensation::NoCondensation,
        Some(r) if r < CONDENSATION_RATIO => Condensation::Condensed,
        Some(_) => Condensation::NotCondensed,
    };
    Ok(SweepReport {
        model: model.name().into(),
        backend,
        rows,
        ratios_strictly_decreasing,
        condensation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_drive_ratio_is_half_eps_over_a() {
        let m = ModelParams::ConstantDriveCircle {
            a: 2.0,
            epsilon: 0.4,
            n: 32,
        };
        let eps = [0.4, 0.2, 0.1, 0.05];
        let r = sweep_epsilon(&m, &eps, Backend::Fourier).unwrap();
        for (row, e) in r.rows.iter().zip(eps) {
            let expect = e / 4.0;
            assert!((row.ratio.unwrap() - expect).abs() < 1e-8 * expect);
            assert_eq!(row.verdict, Verdict::UnbrokenMarkovian);
        }
        assert!(r.ratios_strictly_decreasing);
        assert_eq!(r.condensation, Condensation::Condensed);
    }

    #[test]
    fn deterministic_endpoint_condenses() {
        let m = ModelParams::ConstantDriveCircle {
            a: 1.0,
            epsilon: 0.2,
            n: 16,
        };
        let r = sweep_epsilon(&m, &[0.2, 0.0], Backend::FiniteDifference).unwrap();
        assert!(r.rows[1].ratio.unwrap() < 1e-12);
        assert_eq!(r.rows[1].verdict, Verdict::QBroken);
        assert_eq!(r.condensation, Condensation::Condensed);
    }

    #[test]
    fn langevin_sweep_reports_no_condensation() {
        let m = ModelParams::LangevinDoubleWellCircle {
            depth: 1.0,
            epsilon: 0.4,
            n: 32,
        };
        let r = sweep_epsilon(&m, &[0.4, 0.2, 0.1, 0.05], Backend::FiniteDifference).unwrap();
        assert!(r.rows.iter().all(|row| row.ratio.is_none()));
        assert_eq!(r.condensation, Condensation::NoCondensation);
        assert!(!r.ratios_strictly_decreasing);
    }

    #[test]
    fn rejects_unordered_lists() {
        let m = ModelParams::ConstantDriveCircle {
            a: 1.0,
            epsilon: 0.2,
            n: 16,
        };
        for bad in [&[0.1, 0.2][..], &[0.2, 0.2], &[0.1, -0.1], &[]] {
            assert!(matches!(
                sweep_epsilon(&m, bad, Backend::Fourier),
                Err(Error::InvalidArgument(_))
            ));
        }
    }
}
