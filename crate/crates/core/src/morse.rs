//! Deterministic-limit diagnostics: critical points of the flow, their indices, one-loop
//! Gaussian ground states and tunneling-splitting scans in ε.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{Backend, FlowField};
use crate::fokker_planck::assemble_hamiltonian;
use crate::linalg::{c64, cr};
use crate::mesh::{MeshComplex, MeshKind, NoiseSpec, TorusIndex};
use crate::spectral::{full_spectrum, SpectrumReport};

/// Relative threshold on `|Re λ|` below which a critical point counts as non-hyperbolic.
pub const HYPERBOLICITY_THRESHOLD: f64 = 1e-6;
/// Minimum number of cells expected between neighbouring zeros.
pub const MIN_CELLS_BETWEEN_ZEROS: f64 = 4.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    /// Jacobian `∂A^i/∂x^j`, row-major.
    pub jacobian: Vec<Vec<f64>>,
    /// Jacobian eigenvalues as `[re, im]`.
    pub eigenvalues: Vec<[f64; 2]>,
    /// Number of negative real eigenvalues.
    pub index: usize,
    pub complex_pairs: usize,
    pub sign: i64,
    pub hyperbolic: bool,
}

impl CriticalPoint {
    /// Number of eigenvalues with positive real part (directions attracting under `ẋ = −A`).
    pub fn stable_directions(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l[0] > 0.0).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPointScan {
    pub points: Vec<CriticalPoint>,
    pub warnings: Vec<String>,
}

fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

fn min_image(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// Periodic linear (circle) or bilinear (torus) interpolation of the flow samples.
fn interpolate(mesh: &MeshComplex, samples: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    match mesh.kind() {
        MeshKind::Circle { n, length } => {
            let h = length / n as f64;
            let u = wrap(x[0], length) / h;
            let i = (u.floor() as usize).min(n - 1);
            let s = u - i as f64;
            vec![(1.0 - s) * samples[0][i] + s * samples[0][(i + 1) % n]]
        }
        MeshKind::Torus { nx, ny, lx, ly } => {
            let (hx, hy) = (lx / nx as f64, ly / ny as f64);
            let t = TorusIndex { nx, ny };
            let u = wrap(x[0], lx) / hx;
            let v = wrap(x[1], ly) / hy;
            let i = (u.floor() as isize).min(nx as isize - 1);
            let j = (v.floor() as isize).min(ny as isize - 1);
            let (s, r) = (u - i as f64, v - j as f64);
            let corners = [
                t.vertex(i, j),
                t.vertex(i + 1, j),
                t.vertex(i, j + 1),
                t.vertex(i + 1, j + 1),
            ];
            let w = [(1.0 - s) * (1.0 - r), s * (1.0 - r), (1.0 - s) * r, s * r];
            samples
                .iter()
                .map(|c| corners.iter().zip(&w).map(|(&k, wk)| wk * c[k]).sum())
                .collect()
        }
        MeshKind::Surface => unreachable!("flows live on structured grids"),
    }
}

fn classify_point(
    mesh: &MeshComplex,
    flow: &FlowField,
    location: Vec<f64>,
    scale: f64,
) -> CriticalPoint {
    let [hx, hy] = mesh.spacing().expect("structured grid");
    let spacing = [hx, hy];
    let dim = mesh.dimension();
    let mut jac = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        let mut plus = location.clone();
        let mut minus = location.clone();
        plus[j] += spacing[j];
        minus[j] -= spacing[j];
        let ap = interpolate(mesh, flow.samples(), &plus);
        let am = interpolate(mesh, flow.samples(), &minus);
        for i in 0..dim {
            jac[i][j] = (ap[i] - am[i]) / (2.0 * spacing[j]);
        }
    }
    let eigenvalues: Vec<[f64; 2]> = if dim == 1 {
        vec![[jac[0][0], 0.0]]
    } else {
        let tr = jac[0][0] + jac[1][1];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            vec![[tr / 2.0 - r, 0.0], [tr / 2.0 + r, 0.0]]
        } else {
            let r = (-disc).sqrt();
            vec![[tr / 2.0, -r], [tr / 2.0, r]]
        }
    };
    let index = eigenvalues
        .iter()
        .filter(|l| l[1] == 0.0 && l[0] < 0.0)
        .count();
    let complex_pairs = eigenvalues.iter().filter(|l| l[1] > 0.0).count();
    let hyperbolic = eigenvalues
        .iter()
        .all(|l| l[0].abs() >= HYPERBOLICITY_THRESHOLD * scale);
    CriticalPoint {
        location,
        jacobian: jac,
        eigenvalues,
        index,
        complex_pairs,
        sign: if index % 2 == 0 { 1 } else { -1 },
        hyperbolic,
    }
}

fn solve_cell(f: [f64; 4], g: [f64; 4]) -> Vec<(f64, f64)> {
    // f = f0 + f1 s + f2 t + f3 s t on the unit square, same for g
    let [f0, f1, f2, f3] = f;
    let [g0, g1, g2, g3] = g;
    let c2 = g2 * f3 - g3 * f2;
    let c1 = g0 * f3 + g2 * f1 - g1 * f2 - g3 * f0;
    let c0 = g0 * f1 - g1 * f0;
    let scale = [c0, c1, c2].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut ts = Vec::new();
    if scale == 0.0 {
        return Vec::new();
    }
    if c2.abs() <= 1e-14 * scale {
        if c1.abs() > 1e-14 * scale {
            ts.push(-c0 / c1);
        }
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc >= 0.0 {
            let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
            if q != 0.0 {
                ts.push(c0 / q);
            }
            ts.push(q / c2);
        }
    }
    let eps = 1e-12;
    let mut out = Vec::new();
    for t in ts {
        if !(t >= -eps && t <= 1.0 + eps) {
            continue;
        }
        let den_f = f1 + f3 * t;
        let den_g = g1 + g3 * t;
        let s = if den_f.abs() >= den_g.abs() && den_f != 0.0 {
            -(f0 + f2 * t) / den_f
        } else if den_g != 0.0 {
            -(g0 + g2 * t) / den_g
        } else {
            continue;
        };
        if s >= -eps && s <= 1.0 + eps {
            let resid_f = f0 + f1 * s + f2 * t + f3 * s * t;
            let resid_g = g0 + g1 * s + g2 * t + g3 * s * t;
            let size = f.iter().chain(&g).fold(0.0f64, |m, x| m.max(x.abs()));
            if resid_f.abs() <= 1e-9 * size && resid_g.abs() <= 1e-9 * size {
                out.push((s.clamp(0.0, 1.0), t.clamp(0.0, 1.0)));
            }
        }
    }
    out
}

/// Zeros of the interpolated flow with centered-difference Jacobians and indices.
pub fn find_critical_points(mesh: &MeshComplex, flow: &FlowField) -> Result<CriticalPointScan> {
    if !mesh.is_structured() {
        return Err(Error::UnsupportedMesh(
            "critical-point search needs a circle or torus grid".into(),
        ));
    }
    let a = flow.samples();
    let scale = flow.sup_norm();
    let mut warnings = Vec::new();
    let mut locations: Vec<Vec<f64>> = Vec::new();
    let periods = mesh.periods().expect("structured grid");
    let [hx, hy] = mesh.spacing().expect("structured grid");
    match mesh.kind() {
        MeshKind::Circle { n, .. } => {
            for v in 0..n {
                let (p, q) = (a[0][v], a[0][(v + 1) % n]);
                if p == 0.0 {
                    locations.push(vec![v as f64 * hx]);
                } else if p * q < 0.0 {
                    locations.push(vec![wrap((v as f64 + p / (p - q)) * hx, periods[0])]);
                }
            }
        }
        MeshKind::Torus { nx, ny, .. } => {
            let t = TorusIndex { nx, ny };
            for v in 0..nx * ny {
                let (i, j) = t.coords(v);
                let c = [
                    v,
                    t.vertex(i + 1, j),
                    t.vertex(i, j + 1),
                    t.vertex(i + 1, j + 1),
                ];
                let coef = |s: &[f64]| {
                    [
                        s[c[0]],
                        s[c[1]] - s[c[0]],
                        s[c[2]] - s[c[0]],
                        s[c[3]] - s[c[1]] - s[c[2]] + s[c[0]],
                    ]
                };
                for (s, r) in solve_cell(coef(&a[0]), coef(&a[1])) {
                    let loc = vec![
                        wrap((i as f64 + s) * hx, periods[0]),
                        wrap((j as f64 + r) * hy, periods[1]),
                    ];
                    let dup = locations.iter().any(|p| {
                        p.iter()
                            .zip(&loc)
                            .zip(&periods)
                            .all(|((x, y), l)| min_image(x - y, *l).abs() <= 1e-9 * hx.max(hy))
                    });
                    if !dup {
                        locations.push(loc);
                    }
                }
            }
        }
        MeshKind::Surface => unreachable!(),
    }
    locations.sort_by(|p, q| {
        p.iter()
            .rev()
            .zip(q.iter().rev())
            .fold(std::cmp::Ordering::Equal, |o, (x, y)| {
                o.then(x.total_cmp(y))
            })
    });
    let spacing = [hx, if mesh.dimension() == 2 { hy } else { hx }];
    for (i, p) in locations.iter().enumerate() {
        for q in locations.iter().skip(i + 1) {
            let far = p
                .iter()
                .zip(q)
                .zip(&periods)
                .zip(&spacing)
                .any(|(((x, y), l), h)| min_image(x - y, *l).abs() >= MIN_CELLS_BETWEEN_ZEROS * h);
            if !far {
                warnings.push(format!(
                    "zeros at {p:?} and {q:?} are fewer than {MIN_CELLS_BETWEEN_ZEROS} cells apart; refine the grid"
                ));
            }
        }
    }
    let points: Vec<CriticalPoint> = locations
        .into_iter()
        .map(|l| classify_point(mesh, flow, l, scale))
        .collect();
    for p in points.iter().filter(|p| !p.hyperbolic) {
        warnings.push(format!(
            "critical point at {:?} is not hyperbolic",
            p.location
        ));
    }
    Ok(CriticalPointScan { points, warnings })
}

/// `Σ (−1)^Δ` over hyperbolic critical points.
pub fn poincare_hopf_sum(points: &[CriticalPoint]) -> Result<i64> {
    if let Some(p) = points.iter().find(|p| !p.hyperbolic) {
        return Err(Error::IndeterminateIndex(format!(
            "critical point at {:?} is not hyperbolic",
            p.location
        )));
    }
    Ok(points.iter().map(|p| p.sign).sum())
}

#[derive(Debug, Clone)]
pub struct OneLoopState {
    pub degree: usize,
    pub cochain: Vec<c64>,
}

fn lyapunov_2d(j: &[Vec<f64>], eps: f64) -> Option<[[f64; 2]; 2]> {
    // J C + C Jᵀ = ε I for symmetric C = [[a, b], [b, c]]
    let m = [
        [2.0 * j[0][0], 2.0 * j[0][1], 0.0],
        [j[1][0], j[0][0] + j[1][1], j[0][1]],
        [0.0, 2.0 * j[1][0], 2.0 * j[1][1]],
    ];
    let rhs = [eps, 0.0, eps];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(m);
    if d == 0.0 {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xv) in x.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][col] = rhs[r];
        }
        *xv = det3(mc) / d;
    }
    Some([[x[0], x[1]], [x[1], x[2]]])
}

/// Gaussian ground state localized at a hyperbolic critical point.
///
/// The degree equals the number of stable directions. Along a stable direction with rate
/// `|λ|` the profile is `e^{−|λ|x²/ε}`; along unstable directions it is constant. The
/// cochain is normalized in the star inner product.
pub fn one_loop_ground_state(
    mesh: &MeshComplex,
    point: &CriticalPoint,
    noise: NoiseSpec,
) -> Result<OneLoopState> {
    if !point.hyperbolic {
        return Err(Error::IndeterminateIndex(format!(
            "critical point at {:?} is not hyperbolic",
            point.location
        )));
    }
    if noise.epsilon <= 0.0 {
        return Err(Error::DeterministicLimit(
            "one-loop states need ε > 0".into(),
        ));
    }
    let eps = noise.epsilon;
    let degree = point.stable_directions();
    let periods = mesh
        .periods()
        .ok_or_else(|| Error::UnsupportedMesh("structured grid required".into()))?;
    let [hx, hy] = mesh.spacing().expect("structured grid");
    let n = mesh.cell_count(degree);
    let mut psi = vec![cr(0.0); n];
    let rel = |x: f64, y: f64| -> [f64; 2] {
        let dx = min_image(x - point.location[0], periods[0]);
        let dy = if periods.len() > 1 {
            min_image(y - point.location[1], periods[1])
        } else {
            0.0
        };
        [dx, dy]
    };
    let pts = mesh.points();
    match (mesh.dimension(), degree) {
        (_, 0) => psi.iter_mut().for_each(|x| *x = cr(1.0)),
        (1, 1) => {
            let lam = point.eigenvalues[0][0].abs();
            for (e, x) in psi.iter_mut().enumerate() {
                let d = rel(pts[e][0] + 0.5 * hx, 0.0);
                *x = cr((-lam * d[0] * d[0] / eps).exp() * hx);
            }
        }
        (2, 2) => {
            let c = lyapunov_2d(&point.jacobian, eps)
                .ok_or_else(|| Error::IndeterminateIndex("singular linearization".into()))?;
            let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            let inv = [
                [c[1][1] / det, -c[0][1] / det],
                [-c[1][0] / det, c[0][0] / det],
            ];
            for (f, x) in psi.iter_mut().enumerate() {
                let d = rel(pts[f][0] + 0.5 * hx, pts[f][1] + 0.5 * hy);
                let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1])
                    + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
                *x = cr((-0.5 * q).exp() * hx * hy);
            }
        }
        (2, 1) => {
            // stable covector: left eigenvector of J for the positive eigenvalue
            let lam = point
                .eigenvalues
                .iter()
                .map(|l| l[0])
                .fold(f64::NEG_INFINITY, f64::max);
            let j = &point.jacobian;
            // wᵀ(J − λI) = 0
            let (a, b) = (j[0][0] - lam, j[1][0]);
            let (c, d) = (j[0][1], j[1][1] - lam);
            let mut w = if a.abs() + b.abs() >= c.abs() + d.abs() {
                [-b, a]
            } else {
                [-d, c]
            };
            let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
            w = [w[0] / norm, w[1] / norm];
            let nv = mesh.cell_count(0);
            for v in 0..nv {
                let dx = rel(pts[v][0] + 0.5 * hx, pts[v][1]);
                let u = w[0] * dx[0] + w[1] * dx[1];
                psi[v] = cr((-lam * u * u / eps).exp() * w[0] * hx);
                let dy = rel(pts[v][0], pts[v][1] + 0.5 * hy);
                let u = w[0] * dy[0] + w[1] * dy[1];
                psi[nv + v] = cr((-lam * u * u / eps).exp() * w[1] * hy);
            }
        }
        _ => return Err(Error::Degree(format!("no {degree}-forms on this mesh"))),
    }
    let star = mesh.hodge_star(degree, noise)?.diag;
    let nrm = psi
        .iter()
        .zip(&star)
        .map(|(x, s)| x.norm_sqr() * s)
        .sum::<f64>()
        .sqrt();
    psi.iter_mut().for_each(|x| *x /= cr(nrm));
    Ok(OneLoopState {
        degree,
        cochain: psi,
    })
}

/// Norm of the star-orthogonal projection of `state` onto the span of the degree-`k`
/// right eigenvectors with `|λ| <= cutoff`.
pub fn one_loop_overlap(
    state: &OneLoopState,
    spec: &SpectrumReport,
    star: &[f64],
    cutoff: f64,
) -> f64 {
    let w = |x: &[c64], y: &[c64]| -> c64 {
        x.iter()
            .zip(y)
            .zip(star)
            .map(|((a, b), s)| a.conj() * b * *s)
            .sum()
    };
    let mut basis: Vec<Vec<c64>> = Vec::new();
    for e in spec
        .entries
        .iter()
        .filter(|e| e.degree == state.degree && e.value.norm() <= cutoff)
    {
        let mut v = e.right.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = w(b, &v);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = w(&v, &v).re.sqrt();
        if n > 1e-10 {
            v.iter_mut().for_each(|x| *x /= cr(n));
            basis.push(v);
        }
    }
    let total = w(&state.cochain, &state.cochain).re.sqrt();
    basis
        .iter()
        .map(|b| w(b, &state.cochain).norm_sqr())
        .sum::<f64>()
        .sqrt()
        / total
}

/// Count of degree-k eigenvalues with `|λ| <= cutoff`, per degree.
pub fn near_zero_counts(spec: &SpectrumReport, cutoff: f64) -> Vec<usize> {
    let mut counts = vec![0; spec.block_sizes.len()];
    for e in &spec.entries {
        if e.value.norm() <= cutoff {
            counts[e.degree] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplittingRow {
    pub epsilon: f64,
    /// Smallest nonzero degree-0 eigenvalue (real part).
    pub splitting: f64,
    /// First degree-0 eigenvalue above the tunneling band.
    pub first_non_tunneling: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstantonScan {
    pub minima: usize,
    pub rows: Vec<SplittingRow>,
    pub strictly_decreasing: bool,
    /// Slopes of `ln s` against `1/ε` between consecutive rows.
    pub log_slopes: Vec<f64>,
    /// Second divided differences of `ln s` against `1/ε`.
    pub second_differences: Vec<f64>,
    /// Every slope is negative and the second differences keep one sign.
    pub monotone_trend: bool,
}

/// Tunneling splittings of a gradient model over a descending list of noise intensities.
///
/// `build(ε)` returns the mesh and flow at that intensity; the flow must carry a superpotential
/// with at least two stable minima.
pub fn instanton_splitting_scan<F>(build: F, epsilons: &[f64]) -> Result<InstantonScan>
where
    F: Fn(f64) -> Result<(MeshComplex, FlowField)>,
{
    if epsilons.is_empty() {
        return Err(Error::InvalidArgument("the ε list is empty".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidNoise(
            "splitting scans need finite ε > 0".into(),
        ));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "the ε list must be strictly decreasing".into(),
        ));
    }
    let mut minima = 0;
    let mut rows = Vec::with_capacity(epsilons.len());
    for (i, &eps) in epsilons.iter().enumerate() {
        let (mesh, flow) = build(eps)?;
        if flow.potential().is_none() {
            return Err(Error::NotPotential(
                "splitting scans need a gradient model".into(),
            ));
        }
        if i == 0 {
            let scan = find_critical_points(&mesh, &flow)?;
            minima = scan
                .points
                .iter()
                .filter(|p| p.stable_directions() == mesh.dimension())
                .count();
            if minima < 2 {
                return Err(Error::NoInstanton(format!(
                    "model has {minima} stable minimum; tunneling needs two"
                )));
            }
        }
        let noise = NoiseSpec::new(eps)?;
        let h = assemble_hamiltonian(&mesh, &flow, noise, Backend::FiniteDifference)?;
        let single = crate::fokker_planck::GradedOperator {
            blocks: vec![h.blocks[0].clone()],
            domain_degrees: vec![0],
            ..h
        };
        let spec = full_spectrum(&single)?;
        let tau = spec.default_tolerance();
        let mut re: Vec<f64> = spec
            .entries
            .iter()
            .filter(|e| e.value.norm() > tau)
            .map(|e| e.value.re)
            .collect();
        re.sort_by(f64::total_cmp);
        if re.len() < minima {
            return Err(Error::NoInstanton(
                "degree-0 spectrum too small to resolve the tunneling band".into(),
            ));
        }
        rows.push(SplittingRow {
            epsilon: eps,
            splitting: re[0],
            first_non_tunneling: re[minima - 1],
        });
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].splitting < w[0].splitting);
    let x: Vec<f64> = rows.iter().map(|r| 1.0 / r.epsilon).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| r.splitting.max(f64::MIN_POSITIVE).ln())
        .collect();
    let log_slopes: Vec<f64> = (1..x.len())
        .map(|i| (y[i] - y[i - 1]) / (x[i] - x[i - 1]))
        .collect();
    let second_differences: Vec<f64> = (1..log_slopes.len())
        .map(|i| (log_slopes[i] - log_slopes[i - 1]) / (x[i + 1] - x[i - 1]))
        .collect();
    let monotone_trend = log_slopes.iter().all(|&s| s < 0.0)
        && (second_differences.iter().all(|&d| d >= 0.0)
            || second_differences.iter().all(|&d| d <= 0.0));
    Ok(InstantonScan {
        minima,
        rows,
        strictly_decreasing,
        log_slopes,
        second_differences,
        monotone_trend,
    })
}
