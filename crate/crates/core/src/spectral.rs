//! Per-degree eigendecomposition, bi-orthonormal bases and spectral classification.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fokker_planck::GradedOperator;
use crate::linalg::{self, c64, cr, eigendecompose, CMat};

pub const DEFAULT_CAPACITY: usize = 8192;
pub const DEFAULT_CLUSTER_TOLERANCE: f64 = 1e-7;
/// Default physical-state, zero-mode and imaginary-part thresholds, relative to the spectral radius.
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Largest total number of unknowns accepted for dense decomposition.
    pub capacity: usize,
    /// Relative separation below which eigenvalues are treated as one cluster.
    pub cluster_tolerance: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            cluster_tolerance: DEFAULT_CLUSTER_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumEntry {
    pub degree: usize,
    pub value: c64,
    /// Right eigenvector (empty for synthetic spectra).
    pub right: Vec<c64>,
    /// Left eigenvector scaled so that `leftᴴ right = 1`.
    pub left: Vec<c64>,
}

impl SpectrumEntry {
    pub fn gamma(&self) -> f64 {
        self.value.re
    }
    pub fn e(&self) -> f64 {
        self.value.im
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub dimension: usize,
    /// Sorted by (Γ, E, degree).
    pub entries: Vec<SpectrumEntry>,
    pub spectral_radius: f64,
    /// `max |⟨⟨n|m⟩⟩ − δ_nm|` within each degree.
    pub biorthonormality_residual: f64,
    pub block_sizes: Vec<usize>,
}

fn order(a: &(usize, c64), b: &(usize, c64)) -> Ordering {
    a.1.re
        .total_cmp(&b.1.re)
        .then(a.1.im.total_cmp(&b.1.im))
        .then(a.0.cmp(&b.0))
}

impl SpectrumReport {
    /// Spectrum without eigenvectors, for classification of given eigenvalue multisets.
    pub fn from_values(dimension: usize, values: &[(usize, c64)]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(order);
        let spectral_radius = v.iter().fold(0.0f64, |m, x| m.max(x.1.norm()));
        let mut block_sizes = vec![0; dimension + 1];
        for &(k, _) in &v {
            if k >= block_sizes.len() {
                block_sizes.resize(k + 1, 0);
            }
            block_sizes[k] += 1;
        }
        Self {
            dimension,
            entries: v
                .into_iter()
                .map(|(degree, value)| SpectrumEntry {
                    degree,
                    value,
                    right: Vec::new(),
                    left: Vec::new(),
                })
                .collect(),
            spectral_radius,
            biorthonormality_residual: 0.0,
            block_sizes,
        }
    }

    pub fn values(&self) -> Vec<(usize, c64)> {
        self.entries.iter().map(|e| (e.degree, e.value)).collect()
    }

    pub fn degree_values(&self, k: usize) -> Vec<c64> {
        self.entries
            .iter()
            .filter(|e| e.degree == k)
            .map(|e| e.value)
            .collect()
    }

    /// Default tolerance `1e-8 · spectral radius`.
    pub fn default_tolerance(&self) -> f64 {
        DEFAULT_RELATIVE_TOLERANCE * self.spectral_radius
    }

    /// Largest distance from an eigenvalue's conjugate to the nearest eigenvalue of the same degree,
    /// relative to `max(ρ, 1)`.
    pub fn conjugate_closure_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.block_sizes.len() {
            let vals = self.degree_values(k);
            for v in &vals {
                let c = v.conj();
                let best = vals
                    .iter()
                    .map(|w| (w - c).norm())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(best);
            }
        }
        worst / self.spectral_radius.max(1.0)
    }
}

/// Overlap condition number above which a cluster's eigenvectors are recomputed.
const ILL_CONDITIONED: f64 = 1e6;

fn condition(g: &CMat) -> std::result::Result<f64, String> {
    let (_, s, _) = linalg::svd(g)?;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Recomputes a degenerate cluster from the null spaces of `A − μ`.
fn refine_cluster(
    a: &CMat,
    members: &[usize],
    values: &mut [c64],
    right: &mut CMat,
    left: &mut CMat,
) -> std::result::Result<(), String> {
    let n = a.nrows();
    let c = members.len();
    let mu = members.iter().map(|&i| values[i]).sum::<c64>() / cr(c as f64);
    let shifted = CMat::from_fn(n, n, |i, j| if i == j { a[(i, j)] - mu } else { a[(i, j)] });
    let (u, s, v) = linalg::svd(&shifted)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    if s[order[c - 1]] > 1e-6 * s[order[n - 1]] {
        return Err("defective eigenvalue cluster: eigenspace is smaller than the cluster".into());
    }
    let vc = CMat::from_fn(n, c, |t, p| v[(t, order[p])]);
    let uc = CMat::from_fn(n, c, |t, p| u[(t, order[p])]);
    let g = linalg::adjoint(&uc) * &vc;
    if condition(&g)? > ILL_CONDITIONED {
        return Err("defective eigenvalue cluster: left/right overlap matrix is singular".into());
    }
    let reduced = linalg::inverse(&g) * linalg::adjoint(&uc) * a * &vc;
    let small = linalg::eigendecompose(&reduced)?;
    let vecs = &vc * &small.right;
    for (p, &i) in members.iter().enumerate() {
        values[i] = small.values[p];
        let r = linalg::norm(&linalg::column(&vecs, p));
        for t in 0..n {
            right[(t, i)] = vecs[(t, p)] / cr(r);
            left[(t, i)] = uc[(t, p)];
        }
    }
    Ok(())
}

fn decompose_block(
    k: usize,
    a: &CMat,
    cluster_tolerance: f64,
) -> Result<(Vec<SpectrumEntry>, f64)> {
    let parts = eigendecompose(a).map_err(|message| Error::Numerical {
        block: format!("degree-{k} block"),
        message,
    })?;
    let n = parts.values.len();
    if parts
        .values
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::Numerical {
            block: format!("degree-{k} block"),
            message: "eigensolver returned non-finite values".into(),
        });
    }
    let mut right = parts.right;
    let mut left = parts.left;
    for j in 0..n {
        let r = linalg::norm(&linalg::column(&right, j));
        if r > 0.0 {
            for i in 0..n {
                right[(i, j)] /= cr(r);
            }
        }
    }
    let rho = parts.values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let tol = cluster_tolerance * rho;
    // cluster by single linkage on |λ_i − λ_j| <= tol
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| parts.values[i].re.total_cmp(&parts.values[j].re));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for a_pos in 0..n {
        let i = idx[a_pos];
        for &j in idx.iter().skip(a_pos + 1) {
            if parts.values[j].re - parts.values[i].re > tol {
                break;
            }
            if (parts.values[i] - parts.values[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    let mut values = parts.values.clone();
    let numerical = |message: &str| Error::Numerical {
        block: format!("degree-{k} block"),
        message: message.into(),
    };
    for members in clusters.values() {
        let c = members.len();
        let overlap = |left: &CMat, right: &CMat| {
            CMat::from_fn(c, c, |p, q| {
                let (i, j) = (members[p], members[q]);
                (0..n)
                    .map(|t| left[(t, i)].conj() * right[(t, j)])
                    .sum::<c64>()
            })
        };
        let mut g = overlap(&left, &right);
        if c > 1 && condition(&g).map_err(|m| numerical(&m))? > ILL_CONDITIONED {
            refine_cluster(a, members, &mut values, &mut right, &mut left)
                .map_err(|m| numerical(&m))?;
            g = overlap(&left, &right);
        }
        let ginv_h = linalg::adjoint(&linalg::inverse(&g));
        if (0..c).any(|p| {
            (0..c).any(|q| !ginv_h[(p, q)].re.is_finite() || !ginv_h[(p, q)].im.is_finite())
        }) {
            return Err(Error::Numerical {
                block: format!("degree-{k} block"),
                message: "defective eigenvalue cluster: left/right overlap matrix is singular"
                    .into(),
            });
        }
        let wc = CMat::from_fn(n, c, |t, p| left[(t, members[p])]);
        let new = &wc * &ginv_h;
        for (p, &i) in members.iter().enumerate() {
            for t in 0..n {
                left[(t, i)] = new[(t, p)];
            }
        }
    }
    let overlap = linalg::adjoint(&left) * &right;
    let mut residual: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { cr(1.0) } else { cr(0.0) };
            residual = residual.max((overlap[(i, j)] - target).norm());
        }
    }
    let entries = (0..n)
        .map(|j| SpectrumEntry {
            degree: k,
            value: values[j],
            right: linalg::column(&right, j),
            left: linalg::column(&left, j),
        })
        .collect();
    Ok((entries, residual))
}

pub fn full_spectrum(op: &GradedOperator) -> Result<SpectrumReport> {
    full_spectrum_with(op, SpectralOptions::default())
}

/// All eigenpairs of every degree block with bi-orthonormalized left vectors.
pub fn full_spectrum_with(op: &GradedOperator, options: SpectralOptions) -> Result<SpectrumReport> {
    if op.shift != 0 {
        return Err(Error::InvalidArgument(
            "spectra are defined for degree-preserving operators only".into(),
        ));
    }
    let total = op.total_size();
    if total > options.capacity {
        return Err(Error::Capacity(format!(
            "{total} unknowns exceed the dense-solver cap of {} (block sizes {:?})",
            options.capacity,
            op.blocks.iter().map(|b| b.nrows()).collect::<Vec<_>>()
        )));
    }
    let results: Vec<Result<(Vec<SpectrumEntry>, f64)>> = op
        .blocks
        .par_iter()
        .zip(op.domain_degrees.par_iter())
        .map(|(b, &k)| decompose_block(k, b, options.cluster_tolerance))
        .collect();
    let mut entries = Vec::with_capacity(total);
    let mut residual: f64 = 0.0;
    for r in results {
        let (e, res) = r?;
        entries.extend(e);
        residual = residual.max(res);
    }
    entries.sort_by(|a, b| order(&(a.degree, a.value), &(b.degree, b.value)));
    let spectral_radius = entries.iter().fold(0.0f64, |m, e| m.max(e.value.norm()));
    Ok(SpectrumReport {
        dimension: op.dimension,
        entries,
        spectral_radius,
        biorthonormality_residual: residual,
        block_sizes: op.blocks.iter().map(|b| b.ncols()).collect(),
    })
}

/// Entries with `|Γ| <= τ_Γ`.
pub fn physical_states(spec: &SpectrumReport, tau_gamma: f64) -> Result<Vec<&SpectrumEntry>> {
    if !(tau_gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "τ_Γ must be positive, got {tau_gamma}"
        )));
    }
    let states: Vec<&SpectrumEntry> = spec
        .entries
        .iter()
        .filter(|e| e.gamma().abs() <= tau_gamma)
        .collect();
    if states.is_empty() {
        return Err(Error::ErgodicZeroMissing(format!(
            "no eigenvalue with |Γ| <= {tau_gamma:.3e}; the spectrum lacks its ergodic zero mode"
        )));
    }
    Ok(states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "unbroken-Markovian")]
    UnbrokenMarkovian,
    #[serde(rename = "Q-broken")]
    QBroken,
    #[serde(rename = "indeterminate")]
    Indeterminate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalState {
    pub degree: usize,
    pub gamma: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseClassification {
    pub verdict: Verdict,
    pub tau_gamma: f64,
    pub tau_e: f64,
    pub evidence: Vec<PhysicalState>,
    pub witten_index: i64,
}

/// Phase verdict from the eigenvalue multiset alone.
///
/// Q-broken if some `|Γ| <= τ_Γ` entry has `|E| > τ_E`; unbroken if such entries exist and all
/// have `|E| <= τ_E`; indeterminate when there are none.
pub fn classify_phase(
    spec: &SpectrumReport,
    tau_gamma: f64,
    tau_e: f64,
) -> Result<PhaseClassification> {
    if !(tau_gamma > 0.0) || !(tau_e > 0.0) {
        return Err(Error::InvalidArgument(
            "classification tolerances must be positive".into(),
        ));
    }
    let evidence: Vec<PhysicalState> = spec
        .entries
        .iter()
        .filter(|e| e.gamma().abs() <= tau_gamma)
        .map(|e| PhysicalState {
            degree: e.degree,
            gamma: e.gamma(),
            e: e.e(),
        })
        .collect();
    let verdict = if evidence.is_empty() {
        Verdict::Indeterminate
    } else if evidence.iter().any(|s| s.e.abs() > tau_e) {
        Verdict::QBroken
    } else {
        Verdict::UnbrokenMarkovian
    };
    let witten = witten_index(spec, tau_gamma)?;
    Ok(PhaseClassification {
        verdict,
        tau_gamma,
        tau_e,
        evidence,
        witten_index: witten.index,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WittenIndex {
    pub index: i64,
    pub zero_modes: Vec<usize>,
    pub tau0: f64,
    pub gap_warning: Option<String>,
}

/// `Σ_k (−1)^k · #{degree-k eigenvalues with |λ| <= τ₀}`.
pub fn witten_index(spec: &SpectrumReport, tau0: f64) -> Result<WittenIndex> {
    if !(tau0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "τ₀ must be positive, got {tau0}"
        )));
    }
    let degrees = spec.block_sizes.len().max(spec.dimension + 1);
    let mut zero_modes = vec![0usize; degrees];
    let mut ambiguous = Vec::new();
    for e in &spec.entries {
        let m = e.value.norm();
        if m <= tau0 {
            zero_modes[e.degree] += 1;
        } else if m <= 10.0 * tau0 {
            ambiguous.push((e.degree, m));
        }
    }
    let index = zero_modes
        .iter()
        .enumerate()
        .map(|(k, &c)| if k % 2 == 0 { c as i64 } else { -(c as i64) })
        .sum();
    let gap_warning = (!ambiguous.is_empty()).then(|| {
        format!(
            "{} eigenvalue(s) lie in (τ₀, 10τ₀] = ({tau0:.3e}, {:.3e}]; zero-mode counts may be ambiguous",
            ambiguous.len(),
            10.0 * tau0
        )
    });
    Ok(WittenIndex {
        index,
        zero_modes,
        tau0,
        gap_warning,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnpairedValue {
    pub degree: usize,
    pub gamma: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairingReport {
    /// Entry indices (into `SpectrumReport::entries`) of matched pairs, lower degree first.
    pub pairs: Vec<(usize, usize)>,
    /// Pair id per entry, `None` for zero modes and unpaired values.
    pub pair_ids: Vec<Option<usize>>,
    pub unpaired: Vec<UnpairedValue>,
    pub max_mismatch: f64,
    pub tolerance: f64,
}

/// Matches every nonzero eigenvalue with an equal one in an adjacent degree.
///
/// Degrees are processed upward; values left unmatched with degree k−1 are offered to
/// degree k+1. Candidates within `tol · ρ` are matched greedily by distance.
pub fn susy_pairing_check(spec: &SpectrumReport, tol: f64) -> PairingReport {
    let abs_tol = tol * spec.spectral_radius;
    let zero = DEFAULT_RELATIVE_TOLERANCE * spec.spectral_radius;
    let n = spec.entries.len();
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let nonzero: Vec<bool> = spec.entries.iter().map(|e| e.value.norm() > zero).collect();
    let degrees = spec.block_sizes.len();
    let mut pairs = Vec::new();
    let mut max_mismatch: f64 = 0.0;
    for k in 0..degrees.saturating_sub(1) {
        let lower: Vec<usize> = (0..n)
            .filter(|&i| spec.entries[i].degree == k && nonzero[i] && partner[i].is_none())
            .collect();
        let upper: Vec<usize> = (0..n)
            .filter(|&i| spec.entries[i].degree == k + 1 && nonzero[i])
            .collect();
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        // entries are sorted by Γ; scan windows
        for &i in &lower {
            for &j in &upper {
                let d = (spec.entries[i].value - spec.entries[j].value).norm();
                if d <= abs_tol {
                    cands.push((d, i, j));
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (d, i, j) in cands {
            if partner[i].is_none() && partner[j].is_none() {
                partner[i] = Some(j);
                partner[j] = Some(i);
                pairs.push((i, j));
                max_mismatch = max_mismatch.max(d);
            }
        }
    }
    let mut pair_ids = vec![None; n];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        pair_ids[i] = Some(p);
        pair_ids[j] = Some(p);
    }
    let unpaired = (0..n)
        .filter(|&i| nonzero[i] && partner[i].is_none())
        .map(|i| UnpairedValue {
            degree: spec.entries[i].degree,
            gamma: spec.entries[i].gamma(),
            e: spec.entries[i].e(),
        })
        .collect();
    PairingReport {
        pairs,
        pair_ids,
        unpaired,
        max_mismatch,
        tolerance: abs_tol,
    }
}

/// CSV with columns `degree,index,gamma,e,pair_id,physical_flag`.
pub fn spectrum_csv(
    spec: &SpectrumReport,
    pairing: Option<&PairingReport>,
    tau_gamma: f64,
) -> String {
    let mut out = String::from("degree,index,gamma,e,pair_id,physical_flag\n");
    for (i, e) in spec.entries.iter().enumerate() {
        let pair = pairing.and_then(|p| p.pair_ids.get(i).copied().flatten());
        let _ = writeln!(
            out,
            "{},{},{:.12e},{:.12e},{},{}",
            e.degree,
            i,
            e.gamma(),
            e.e(),
            pair.map_or(String::new(), |p| p.to_string()),
            u8::from(e.gamma().abs() <= tau_gamma)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{Backend, FlowField};
    use crate::fokker_planck::assemble_hamiltonian;
    use crate::mesh::{build_circle_grid, build_torus_grid, NoiseSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn pure_diffusion_spectrum_is_half_laplacian() {
        let n = 16;
        let m = build_circle_grid(n, TAU).unwrap();
        let h = assemble_hamiltonian(
            &m,
            &FlowField::zero(&m),
            NoiseSpec::new(1.0).unwrap(),
            Backend::FiniteDifference,
        )
        .unwrap();
        let s = full_spectrum(&h).unwrap();
        let step = TAU / n as f64;
        // circulant oracle for the graph Laplacian on a ring: (4/h²) sin²(πj/n)
        let mut oracle: Vec<f64> = (0..n)
            .map(|j| 0.5 * 4.0 / (step * step) * (PI * j as f64 / n as f64).sin().powi(2))
            .collect();
        oracle.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = s.degree_values(0).iter().map(|v| v.re).collect();
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12 * s.spectral_radius);
        }
        assert!(s.degree_values(0).iter().all(|v| v.im.abs() < 1e-12));
        assert!(s.biorthonormality_residual < 1e-8);
    }

    #[test]
    fn random_torus_flow_spectrum_is_conjugate_closed() {
        let m = build_torus_grid(6, 6, TAU, TAU).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let drive = (0..2)
            .map(|_| (0..36).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let flow = FlowField::from_components(&m, drive).unwrap();
        let h = assemble_hamiltonian(
            &m,
            &flow,
            NoiseSpec::new(0.5).unwrap(),
            Backend::FiniteDifference,
        )
        .unwrap();
        let s = full_spectrum(&h).unwrap();
        assert!(s.conjugate_closure_residual() < 1e-10);
        assert!(
            s.biorthonormality_residual < 1e-8,
            "{}",
            s.biorthonormality_residual
        );
    }

    #[test]
    fn capacity_is_enforced() {
        let m = build_circle_grid(8, TAU).unwrap();
        let h = assemble_hamiltonian(
            &m,
            &FlowField::zero(&m),
            NoiseSpec::new(1.0).unwrap(),
            Backend::FiniteDifference,
        )
        .unwrap();
        let r = full_spectrum_with(
            &h,
            SpectralOptions {
                capacity: 10,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::Capacity(_))));
    }

    #[test]
    fn synthetic_classifications() {
        let s = SpectrumReport::from_values(
            0,
            &[
                (0, c(0.0, 0.0)),
                (0, c(0.5, 0.3)),
                (0, c(0.5, -0.3)),
                (0, c(1.2, 0.0)),
            ],
        );
        let r = classify_phase(&s, 1e-8, 1e-8).unwrap();
        assert_eq!(r.verdict, Verdict::UnbrokenMarkovian);
        let s = SpectrumReport::from_values(
            0,
            &[(0, c(0.0, 0.7)), (0, c(0.0, -0.7)), (0, c(0.4, 0.0))],
        );
        assert_eq!(
            classify_phase(&s, 1e-8, 1e-8).unwrap().verdict,
            Verdict::QBroken
        );
        let s = SpectrumReport::from_values(0, &[(0, c(1.0, 0.0)), (0, c(2.0, 0.0))]);
        assert!(matches!(
            physical_states(&s, 1e-8 * s.spectral_radius),
            Err(Error::ErgodicZeroMissing(_))
        ));
        assert_eq!(
            classify_phase(&s, 1e-8, 1e-8).unwrap().verdict,
            Verdict::Indeterminate
        );
    }

    #[test]
    fn witten_index_counts_and_gap_warning() {
        let s = SpectrumReport::from_values(
            2,
            &[
                (0, c(0.0, 0.0)),
                (1, c(0.0, 0.0)),
                (1, c(1e-15, 0.0)),
                (2, c(0.0, 0.0)),
                (1, c(1.0, 0.0)),
                (2, c(1.0, 0.0)),
            ],
        );
        let w = witten_index(&s, 1e-8).unwrap();
        assert_eq!(w.zero_modes, vec![1, 2, 1]);
        assert_eq!(w.index, 0);
        assert!(w.gap_warning.is_none());
        let s = SpectrumReport::from_values(
            1,
            &[(0, c(0.0, 0.0)), (1, c(5e-8, 0.0)), (1, c(1.0, 0.0))],
        );
        assert!(witten_index(&s, 1e-8).unwrap().gap_warning.is_some());
    }

    #[test]
    fn pairing_on_constant_drive_circle() {
        let m = build_circle_grid(16, TAU).unwrap();
        let flow = FlowField::constant(&m, &[1.0]).unwrap();
        let h = assemble_hamiltonian(
            &m,
            &flow,
            NoiseSpec::new(0.2).unwrap(),
            Backend::FiniteDifference,
        )
        .unwrap();
        let s = full_spectrum(&h).unwrap();
        let p = susy_pairing_check(&s, 1e-10);
        assert!(p.unpaired.is_empty(), "{:?}", p.unpaired);
        assert_eq!(p.pairs.len(), 15);
        let csv = spectrum_csv(&s, Some(&p), s.default_tolerance());
        assert_eq!(csv.lines().count(), 33);
        assert!(csv.starts_with("degree,index,gamma,e,pair_id,physical_flag"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn classification_is_scale_invariant(
            vals in prop::collection::vec((0usize..3, -3.0f64..3.0, -3.0f64..3.0, prop::bool::ANY), 1..12),
            scale in 0.01f64..100.0,
        ) {
            let base: Vec<(usize, c64)> = vals.iter()
                .map(|&(k, re, im, zero)| (k, if zero { c(0.0, im) } else { c(re.abs(), im) }))
                .collect();
            let scaled: Vec<(usize, c64)> = base.iter().map(|&(k, v)| (k, v * scale)).collect();
            let a = SpectrumReport::from_values(2, &base);
            let b = SpectrumReport::from_values(2, &scaled);
            let ta = 1e-8 * a.spectral_radius.max(1e-300);
            let ra = classify_phase(&a, ta, ta).unwrap();
            let rb = classify_phase(&b, ta * scale, ta * scale).unwrap();
            prop_assert_eq!(ra.verdict, rb.verdict);
            prop_assert_eq!(ra.evidence.len(), rb.evidence.len());
        }

        #[test]
        fn classification_ignores_entry_order(
            vals in prop::collection::vec((0usize..2, 0.0f64..2.0, -2.0f64..2.0), 1..10),
            seed in 0u64..1000,
        ) {
            let mut v: Vec<(usize, c64)> = vals.iter().map(|&(k, re, im)| (k, c(if re < 0.5 { 0.0 } else { re }, im))).collect();
            let a = classify_phase(&SpectrumReport::from_values(1, &v), 1e-6, 1e-6).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..v.len()).rev() {
                v.swap(i, rng.random_range(0..=i));
            }
            let b = classify_phase(&SpectrumReport::from_values(1, &v), 1e-6, 1e-6).unwrap();
            prop_assert_eq!(a.verdict, b.verdict);
        }
    }
}
