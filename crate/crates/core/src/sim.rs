//! Euler–Maruyama ensembles of `ẋ = −A(x) + noise` on periodic domains and their statistics.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::c64;
use crate::models::ModelSpec;

/// Fraction of recorded samples discarded before statistics are taken.
pub const BURN_IN_FRACTION: f64 = 0.2;
pub const MIN_HISTOGRAM_SAMPLES: usize = 10_000;
/// Largest number of stored coordinates per ensemble.
pub const MAX_STORED_VALUES: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub dt: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Store every `record_every`-th step.
    pub record_every: usize,
}

/// Recorded paths, path-major, then record, then coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub periods: Vec<f64>,
    pub epsilon: f64,
    pub params: SimulationParams,
    /// Records per path, including the initial condition.
    pub records: usize,
    /// Coordinates wrapped into `[0, L)`.
    pub positions: Vec<f64>,
    /// Net number of boundary crossings per coordinate.
    pub windings: Vec<i32>,
    pub warnings: Vec<String>,
}

impl TrajectoryEnsemble {
    pub fn dimension(&self) -> usize {
        self.periods.len()
    }

    fn offset(&self, path: usize, record: usize) -> usize {
        (path * self.records + record) * self.dimension()
    }

    pub fn position(&self, path: usize, record: usize) -> &[f64] {
        let o = self.offset(path, record);
        &self.positions[o..o + self.dimension()]
    }

    /// Coordinate `d` without wrapping.
    pub fn unwrapped(&self, path: usize, record: usize, d: usize) -> f64 {
        let o = self.offset(path, record) + d;
        self.positions[o] + self.windings[o] as f64 * self.periods[d]
    }

    pub fn record_time(&self, record: usize) -> f64 {
        (record * self.params.record_every) as f64 * self.params.dt
    }

    /// First record kept after burn-in.
    pub fn burn_in(&self) -> usize {
        (BURN_IN_FRACTION * self.records as f64).ceil() as usize
    }

    /// Ensemble mean of the squared unwrapped displacement from the initial point, per record.
    pub fn mean_squared_displacement(&self) -> Vec<(f64, f64)> {
        (0..self.records)
            .map(|r| {
                let s: f64 = (0..self.params.n_paths)
                    .map(|p| {
                        (0..self.dimension())
                            .map(|d| (self.unwrapped(p, r, d) - self.unwrapped(p, 0, d)).powi(2))
                            .sum::<f64>()
                    })
                    .sum();
                (self.record_time(r), s / self.params.n_paths as f64)
            })
            .collect()
    }

    /// Mean unwrapped velocity per coordinate over the full run.
    pub fn mean_velocity(&self) -> Vec<f64> {
        let last = self.records - 1;
        let t = self.record_time(last);
        (0..self.dimension())
            .map(|d| {
                (0..self.params.n_paths)
                    .map(|p| self.unwrapped(p, last, d) - self.unwrapped(p, 0, d))
                    .sum::<f64>()
                    / (self.params.n_paths as f64 * t)
            })
            .collect()
    }

    /// CSV of the first `max_paths` paths.
    pub fn to_csv(&self, max_paths: usize) -> String {
        let dim = self.dimension();
        let mut s = String::from("path,time");
        for d in 0..dim {
            let _ = write!(s, ",x{d}");
        }
        for d in 0..dim {
            let _ = write!(s, ",winding{d}");
        }
        s.push('\n');
        for p in 0..self.params.n_paths.min(max_paths) {
            for r in 0..self.records {
                let o = self.offset(p, r);
                let _ = write!(s, "{p},{:.6e}", self.record_time(r));
                for d in 0..dim {
                    let _ = write!(s, ",{:.12e}", self.positions[o + d]);
                }
                for d in 0..dim {
                    let _ = write!(s, ",{}", self.windings[o + d]);
                }
                s.push('\n');
            }
        }
        s
    }
}

fn validate(periods: &[f64], epsilon: f64, p: &SimulationParams) -> Result<usize> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidNoise(format!(
            "ε must be finite and >= 0, got {epsilon}"
        )));
    }
    if !(p.dt > 0.0) || !p.dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time step must be positive, got {}",
            p.dt
        )));
    }
    if p.steps == 0 || p.n_paths == 0 || p.record_every == 0 {
        return Err(Error::InvalidArgument(
            "steps, n_paths and record_every must be positive".into(),
        ));
    }
    if periods.is_empty() || periods.len() > 2 || periods.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::UnsupportedMesh(
            "simulation needs a circle or a torus".into(),
        ));
    }
    let records = p.steps / p.record_every + 1;
    let stored = records
        .saturating_mul(p.n_paths)
        .saturating_mul(periods.len());
    if stored > MAX_STORED_VALUES {
        return Err(Error::Capacity(format!(
            "{stored} stored coordinates exceed the cap of {MAX_STORED_VALUES}; raise record_every"
        )));
    }
    Ok(records)
}

/// Simulates an ensemble for an arbitrary flow `drift(x, out)` on a periodic box.
///
/// Path `i` draws from a ChaCha8 stream `i` seeded by `seed`, so results do not depend on
/// thread scheduling. Initial points are uniform.
pub fn simulate_drift<F>(
    drift: F,
    periods: &[f64],
    epsilon: f64,
    params: SimulationParams,
) -> Result<TrajectoryEnsemble>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let records = validate(periods, epsilon, &params)?;
    let dim = periods.len();
    let mut warnings = Vec::new();
    let grid = 256usize;
    let mut sup: f64 = 0.0;
    let mut a = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    for g in 0..grid.pow(dim as u32) {
        x[0] = (g % grid) as f64 / grid as f64 * periods[0];
        if dim == 2 {
            x[1] = (g / grid) as f64 / grid as f64 * periods[1];
        }
        drift(&x, &mut a);
        sup = sup.max(a.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    if sup > 0.0 && params.dt > 0.1 * epsilon / (sup * sup) {
        warnings.push(format!(
            "time step {} exceeds the stability heuristic 0.1·ε/max|A|² = {:.3e}",
            params.dt,
            0.1 * epsilon / (sup * sup)
        ));
    }
    let per_path = records * dim;
    let mut positions = vec![0.0; params.n_paths * per_path];
    let mut windings = vec![0i32; params.n_paths * per_path];
    let noise = (epsilon * params.dt).sqrt();
    positions
        .par_chunks_mut(per_path)
        .zip(windings.par_chunks_mut(per_path))
        .enumerate()
        .for_each(|(path, (pos, wind))| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(path as u64);
            let mut x: Vec<f64> = periods.iter().map(|l| rng.random::<f64>() * l).collect();
            let mut w = vec![0i32; dim];
            let mut a = vec![0.0; dim];
            pos[..dim].copy_from_slice(&x);
            for step in 1..=params.steps {
                drift(&x, &mut a);
                for d in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    let mut y = x[d] - a[d] * params.dt + noise * z;
                    let l = periods[d];
                    let q = (y / l).floor();
                    y -= q * l;
                    w[d] += q as i32;
                    if y >= l {
                        y -= l;
                        w[d] += 1;
                    }
                    x[d] = y;
                }
                if step % params.record_every == 0 {
                    let r = step / params.record_every;
                    pos[r * dim..(r + 1) * dim].copy_from_slice(&x);
                    wind[r * dim..(r + 1) * dim].copy_from_slice(&w);
                }
            }
        });
    Ok(TrajectoryEnsemble {
        periods: periods.to_vec(),
        epsilon,
        params,
        records,
        positions,
        windings,
        warnings,
    })
}

/// Simulates the closed-form flow of a circle or torus model.
pub fn simulate_sde(model: &ModelSpec, params: SimulationParams) -> Result<TrajectoryEnsemble> {
    let periods = model
        .mesh
        .periods()
        .ok_or_else(|| Error::UnsupportedMesh("simulation needs a circle or a torus".into()))?;
    let p = model.params.clone();
    simulate_drift(
        move |x, out| {
            p.drift_into(x, out);
        },
        &periods,
        model.noise.epsilon,
        params,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bins: usize,
    pub samples: usize,
    /// Bin probabilities, x-major then y.
    pub empirical: Vec<f64>,
    pub oracle: Vec<f64>,
    pub tv_distance: f64,
}

impl HistogramReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,empirical,oracle\n");
        for (i, (e, o)) in self.empirical.iter().zip(&self.oracle).enumerate() {
            let _ = writeln!(s, "{i},{e:.12e},{o:.12e}");
        }
        s
    }
}

/// Post-burn-in histogram compared with the bin integrals of an unnormalized density.
pub fn stationary_histogram<D>(
    ens: &TrajectoryEnsemble,
    bins: usize,
    density: D,
) -> Result<HistogramReport>
where
    D: Fn(&[f64]) -> f64 + Sync,
{
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    let dim = ens.dimension();
    let start = ens.burn_in();
    let samples = (ens.records - start) * ens.params.n_paths;
    if samples < MIN_HISTOGRAM_SAMPLES {
        return Err(Error::Statistics(format!(
            "{samples} post-burn-in samples, at least {MIN_HISTOGRAM_SAMPLES} are needed"
        )));
    }
    let cells = bins.pow(dim as u32);
    let bin_of = |x: &[f64]| -> usize {
        let mut idx = 0;
        for d in (0..dim).rev() {
            let b = ((x[d] / ens.periods[d]) * bins as f64) as usize;
            idx = idx * bins + b.min(bins - 1);
        }
        idx
    };
    let counts = (0..ens.params.n_paths)
        .into_par_iter()
        .fold(
            || vec![0u64; cells],
            |mut c, p| {
                for r in start..ens.records {
                    c[bin_of(ens.position(p, r))] += 1;
                }
                c
            },
        )
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / samples as f64).collect();
    let sub = 16usize;
    let mut oracle: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let bx = cell % bins;
            let by = cell / bins;
            let mut acc = 0.0;
            let mut x = vec![0.0; dim];
            for s in 0..sub.pow(dim as u32) {
                x[0] = (bx as f64 + ((s % sub) as f64 + 0.5) / sub as f64) / bins as f64
                    * ens.periods[0];
                if dim == 2 {
                    x[1] = (by as f64 + ((s / sub) as f64 + 0.5) / sub as f64) / bins as f64
                        * ens.periods[1];
                }
                acc += density(&x);
            }
            acc
        })
        .collect();
    let z: f64 = oracle.iter().sum();
    oracle.iter_mut().for_each(|v| *v /= z);
    let tv_distance = 0.5
        * empirical
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(HistogramReport {
        bins,
        samples,
        empirical,
        oracle,
        tv_distance,
    })
}

/// Histogram against the model's closed-form stationary density.
pub fn model_histogram(
    model: &ModelSpec,
    ens: &TrajectoryEnsemble,
    bins: usize,
) -> Result<HistogramReport> {
    let probe = vec![0.0; ens.dimension()];
    if model.params.stationary_density_at(&probe).is_none() {
        return Err(Error::InvalidArgument(format!(
            "{} has no closed-form stationary density",
            model.name
        )));
    }
    let p = model.params.clone();
    stationary_histogram(ens, bins, move |x| {
        p.stationary_density_at(x).unwrap_or(0.0)
    })
}

/// Observable `exp(2πi · m · x_d / L_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierObservable {
    pub direction: usize,
    pub wavenumber: i32,
}

impl Default for FourierObservable {
    fn default() -> Self {
        Self {
            direction: 0,
            wavenumber: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    /// Exponential decay rate of `|C(t)|`.
    pub rate: f64,
    pub rate_stderr: f64,
    /// Slope of the unwrapped phase of `C(t)`.
    pub phase_slope: f64,
    /// `|phase_slope|`.
    pub frequency: f64,
    /// Lags (in time units) used in the fit.
    pub window: [f64; 2],
    pub points: usize,
    /// Lag times, `|C|` normalized to `C(0)`, and standard errors.
    pub lags: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub stderr: Vec<f64>,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let se = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    (slope, se)
}

/// Fits `C(t) ≈ C(0) e^{−rate·t + i·phase_slope·t}` for a Fourier observable.
///
/// The window runs from `min_lag` records until `|C|` first drops below three standard errors
/// of the across-path estimate, or until `max_lag` records.
pub fn autocorrelation_decay(
    ens: &TrajectoryEnsemble,
    obs: FourierObservable,
    min_lag: usize,
    max_lag: usize,
) -> Result<DecayFit> {
    if obs.direction >= ens.dimension() {
        return Err(Error::InvalidArgument(format!(
            "no coordinate {} in dimension {}",
            obs.direction,
            ens.dimension()
        )));
    }
    let start = ens.burn_in();
    let len = ens.records - start;
    let max_lag = max_lag.min(len.saturating_sub(1));
    if max_lag < min_lag + 3 || ens.params.n_paths < 2 {
        return Err(Error::Unfittable(
            "too few records or paths for an autocorrelation fit".into(),
        ));
    }
    let k = TAU * obs.wavenumber as f64 / ens.periods[obs.direction];
    let series: Vec<Vec<c64>> = (0..ens.params.n_paths)
        .into_par_iter()
        .map(|p| {
            (start..ens.records)
                .map(|r| c64::from_polar(1.0, k * ens.position(p, r)[obs.direction]))
                .collect()
        })
        .collect();
    let mean = series.iter().flatten().sum::<c64>() / (len * ens.params.n_paths) as f64;
    let per_path: Vec<Vec<c64>> = series
        .par_iter()
        .map(|z| {
            (0..=max_lag)
                .map(|lag| {
                    let m = len - lag;
                    (0..m)
                        .map(|t| (z[t + lag] - mean) * (z[t] - mean).conj())
                        .sum::<c64>()
                        / m as f64
                })
                .collect()
        })
        .collect();
    let np = ens.params.n_paths as f64;
    let mut c = Vec::with_capacity(max_lag + 1);
    let mut se = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let m = per_path.iter().map(|v| v[lag]).sum::<c64>() / np;
        let var = per_path
            .iter()
            .map(|v| (v[lag] - m).norm_sqr())
            .sum::<f64>()
            / (np - 1.0);
        c.push(m);
        se.push((var / np).sqrt());
    }
    let c0 = c[0].re;
    if !(c0 > 0.0) {
        return Err(Error::Unfittable("observable has no variance".into()));
    }
    let step = ens.params.dt * ens.params.record_every as f64;
    let end = (min_lag..=max_lag)
        .find(|&l| c[l].norm() < 3.0 * se[l])
        .unwrap_or(max_lag + 1);
    if end < min_lag + 3 {
        return Err(Error::Unfittable(
            "autocorrelation is below the noise floor after fewer than 3 lags".into(),
        ));
    }
    let t: Vec<f64> = (min_lag..end).map(|l| l as f64 * step).collect();
    let logm: Vec<f64> = (min_lag..end).map(|l| c[l].norm().ln()).collect();
    let mut phase = Vec::with_capacity(end - min_lag);
    let mut prev = 0.0;
    for l in min_lag..end {
        let mut a = c[l].arg();
        if l > min_lag {
            while a - prev > std::f64::consts::PI {
                a -= TAU;
            }
            while a - prev < -std::f64::consts::PI {
                a += TAU;
            }
        }
        phase.push(a);
        prev = a;
    }
    let (slope, rate_stderr) = linear_fit(&t, &logm);
    let (phase_slope, _) = linear_fit(&t, &phase);
    Ok(DecayFit {
        rate: -slope,
        rate_stderr,
        phase_slope,
        frequency: phase_slope.abs(),
        window: [t[0], t[t.len() - 1]],
        points: t.len(),
        lags: (0..=max_lag).map(|l| l as f64 * step).collect(),
        magnitude: c.iter().map(|v| v.norm() / c0).collect(),
        stderr: se.iter().map(|v| v / c0).collect(),
    })
}
