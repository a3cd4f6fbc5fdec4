//! Degree-graded generalized Fokker-Planck operator and related constructions.
//!
//! `H_k = ½(d δ + δ d) − (d ι + ι d)` on k-cochains, `Q̄ = δ − 2ι`, so that
//! `H = ½(d Q̄ + Q̄ d)`. Probability densities are top-degree forms.

use crate::error::{Error, Result};
use crate::exterior::{
    codifferential, exterior_derivative, interior_product, lie_derivative, star_diagonal, Backend,
    FlowField, OperatorBlock,
};
use crate::linalg::{self, cr, CMat};
use crate::mesh::{MeshComplex, MeshKind, NoiseSpec, TorusIndex};

/// Tolerance of the mandatory agreement check between the two assembly routes.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-11;

/// One dense block per form degree.
///
/// `blocks[i]` acts on cochains of degree `domain_degrees[i]` and lands in degree
/// `domain_degrees[i] + shift`.
#[derive(Debug, Clone)]
pub struct GradedOperator {
    pub blocks: Vec<CMat>,
    pub domain_degrees: Vec<usize>,
    pub shift: i32,
    pub dimension: usize,
    pub backend: Backend,
    pub epsilon: f64,
    /// Hodge star diagonals of degrees `0..=dimension`.
    pub stars: Vec<Vec<f64>>,
    pub deterministic_limit: bool,
    /// `‖½(dQ̄ + Q̄d) − H‖ / ‖H‖` over all blocks, when computed.
    pub consistency_residual: Option<f64>,
    /// `max_k ‖d_k H_k − H_{k+1} d_k‖ / ‖H‖`, when computed.
    pub intertwining_residual: Option<f64>,
}

impl GradedOperator {
    pub fn block(&self, k: usize) -> Result<&CMat> {
        self.domain_degrees
            .iter()
            .position(|&d| d == k)
            .map(|i| &self.blocks[i])
            .ok_or_else(|| Error::Degree(format!("operator has no block acting on {k}-forms")))
    }

    pub fn total_size(&self) -> usize {
        self.blocks.iter().map(|b| b.ncols()).sum()
    }

    /// Frobenius norm of the whole block-diagonal operator.
    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| linalg::frobenius(b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

struct Parts {
    d: Vec<CMat>,
    delta: Vec<Option<CMat>>,
    iota: Vec<CMat>,
    stars: Vec<Vec<f64>>,
}

fn collect_parts(
    mesh: &MeshComplex,
    flow: &FlowField,
    noise: NoiseSpec,
    backend: Backend,
) -> Result<Parts> {
    let dim = mesh.dimension();
    let mut d = Vec::with_capacity(dim);
    let mut delta = vec![None];
    let mut iota = vec![linalg::zeros(0, 0)];
    let stars = (0..=dim)
        .map(|k| star_diagonal(mesh, k, noise, backend))
        .collect::<Result<Vec<_>>>()?;
    for k in 0..dim {
        d.push(exterior_derivative(mesh, k, backend)?.matrix);
    }
    for k in 1..=dim {
        let metric = if noise.epsilon == 0.0 {
            NoiseSpec { epsilon: 1.0 }
        } else {
            noise
        };
        delta.push(Some(codifferential(mesh, k, metric, backend)?.matrix));
        iota.push(interior_product(mesh, flow, k, backend)?.matrix);
    }
    Ok(Parts {
        d,
        delta,
        iota,
        stars,
    })
}

fn check_inputs(mesh: &MeshComplex, flow: &FlowField, noise: NoiseSpec) -> Result<()> {
    if !noise.epsilon.is_finite() || noise.epsilon < 0.0 {
        return Err(Error::InvalidNoise(format!(
            "epsilon must be finite and >= 0, got {}",
            noise.epsilon
        )));
    }
    if noise.epsilon == 0.0 && !flow.is_zero() {
        return Err(Error::DeterministicLimit(
            "ε = 0 with a nonzero flow has no diffusive part; use deterministic_generator or an ε-sweep".into(),
        ));
    }
    if !mesh.is_structured() && !flow.is_zero() {
        return Err(Error::UnsupportedMesh(
            "nonzero flows need a circle or torus grid".into(),
        ));
    }
    Ok(())
}

fn relative(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Generalized Fokker-Planck Hamiltonian, one block per degree.
///
/// Assembled directly as `½Δ − L_A` and cross-checked against `½(dQ̄ + Q̄d)`; a mismatch
/// above [`CONSISTENCY_TOLERANCE`] is a consistency error. With `ε = 0` and zero flow the
/// unit-metric Laplacian is returned and flagged as a deterministic-limit object.
pub fn assemble_hamiltonian(
    mesh: &MeshComplex,
    flow: &FlowField,
    noise: NoiseSpec,
    backend: Backend,
) -> Result<GradedOperator> {
    check_inputs(mesh, flow, noise)?;
    let dim = mesh.dimension();
    let p = collect_parts(mesh, flow, noise, backend)?;
    let mut blocks = Vec::with_capacity(dim + 1);
    let mut via_charge = Vec::with_capacity(dim + 1);
    for k in 0..=dim {
        let n = mesh.cell_count(k);
        let mut h = linalg::zeros(n, n);
        let mut hq = linalg::zeros(n, n);
        if k >= 1 {
            let delta = p.delta[k].as_ref().expect("codifferential for k >= 1");
            let qbar = delta - &p.iota[k] * faer::Scale(cr(2.0));
            h += &p.d[k - 1] * delta * faer::Scale(cr(0.5));
            h -= &p.d[k - 1] * &p.iota[k];
            hq += &p.d[k - 1] * &qbar * faer::Scale(cr(0.5));
        }
        if k < dim {
            let delta = p.delta[k + 1].as_ref().expect("codifferential for k + 1");
            let qbar = delta - &p.iota[k + 1] * faer::Scale(cr(2.0));
            h += delta * &p.d[k] * faer::Scale(cr(0.5));
            h -= &p.iota[k + 1] * &p.d[k];
            hq += &qbar * &p.d[k] * faer::Scale(cr(0.5));
        }
        blocks.push(h);
        via_charge.push(hq);
    }
    let total: f64 = blocks
        .iter()
        .map(|b| linalg::frobenius(b).powi(2))
        .sum::<f64>()
        .sqrt();
    let diff: f64 = blocks
        .iter()
        .zip(&via_charge)
        .map(|(a, b)| linalg::frobenius(&(a - b)).powi(2))
        .sum::<f64>()
        .sqrt();
    let consistency = relative(diff, total);
    if !(consistency < CONSISTENCY_TOLERANCE) {
        return Err(Error::Consistency(format!(
            "direct and supercharge assemblies differ by {consistency:.3e} relative"
        )));
    }
    let mut inter: f64 = 0.0;
    for k in 0..dim {
        let r = &p.d[k] * &blocks[k] - &blocks[k + 1] * &p.d[k];
        inter = inter.max(relative(linalg::frobenius(&r), total));
    }
    Ok(GradedOperator {
        blocks,
        domain_degrees: (0..=dim).collect(),
        shift: 0,
        dimension: dim,
        backend,
        epsilon: noise.epsilon,
        stars: p.stars,
        deterministic_limit: noise.epsilon == 0.0,
        consistency_residual: Some(consistency),
        intertwining_residual: Some(inter),
    })
}

/// Pseudo-conjugate supercharge `Q̄_k = δ_k − 2ι_k` for `k = 1..=D`.
pub fn pseudo_adjoint_charge(
    mesh: &MeshComplex,
    flow: &FlowField,
    noise: NoiseSpec,
    backend: Backend,
) -> Result<GradedOperator> {
    check_inputs(mesh, flow, noise)?;
    let dim = mesh.dimension();
    let p = collect_parts(mesh, flow, noise, backend)?;
    let blocks = (1..=dim)
        .map(|k| p.delta[k].as_ref().expect("codifferential") - &p.iota[k] * faer::Scale(cr(2.0)))
        .collect();
    Ok(GradedOperator {
        blocks,
        domain_degrees: (1..=dim).collect(),
        shift: -1,
        dimension: dim,
        backend,
        epsilon: noise.epsilon,
        stars: p.stars,
        deterministic_limit: noise.epsilon == 0.0,
        consistency_residual: None,
        intertwining_residual: None,
    })
}

/// Noise-free generator `−L_A` per degree, used for deterministic-limit diagnostics.
pub fn deterministic_generator(
    mesh: &MeshComplex,
    flow: &FlowField,
    backend: Backend,
) -> Result<GradedOperator> {
    let dim = mesh.dimension();
    let unit = NoiseSpec { epsilon: 1.0 };
    let mut blocks = Vec::with_capacity(dim + 1);
    for k in 0..=dim {
        let l = lie_derivative(mesh, flow, k, backend)?;
        blocks.push(l.matrix * faer::Scale(cr(-1.0)));
    }
    let stars = (0..=dim)
        .map(|k| star_diagonal(mesh, k, unit, backend))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradedOperator {
        blocks,
        domain_degrees: (0..=dim).collect(),
        shift: 0,
        dimension: dim,
        backend,
        epsilon: 0.0,
        stars,
        deterministic_limit: true,
        consistency_residual: None,
        intertwining_residual: None,
    })
}

fn edge_weights(
    w: Option<&crate::exterior::Potential>,
    mesh: &MeshComplex,
) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    // returns (scale, e^{-2W} at vertices, e^{2W̄} on (D-1)-cells, e^{2W̄} on D-cells)
    let dim = mesh.dimension();
    match w {
        Some(p) => (
            p.scale,
            p.values.iter().map(|x| (-2.0 * x).exp()).collect(),
            mesh.cell_average(dim - 1, &p.values)
                .iter()
                .map(|x| (2.0 * x).exp())
                .collect(),
            mesh.cell_average(dim, &p.values)
                .iter()
                .map(|x| (2.0 * x).exp())
                .collect(),
        ),
        None => (
            0.0,
            vec![1.0; mesh.cell_count(0)],
            vec![1.0; mesh.cell_count(dim - 1)],
            vec![1.0; mesh.cell_count(dim)],
        ),
    }
}

/// Conventional Fokker-Planck operator on densities, assembled as a flux divergence.
///
/// Densities live on top cells and fluxes on the cells between them:
/// `(H p) = div J` with `J = −(ε/2)∂p − A p` discretized by centered averages for the drive
/// and exponential fitting for the gradient part.
pub fn conventional_fp_operator(
    mesh: &MeshComplex,
    flow: &FlowField,
    noise: NoiseSpec,
) -> Result<OperatorBlock> {
    if !mesh.is_structured() {
        return Err(Error::UnsupportedMesh(
            "the density operator needs a circle or torus grid".into(),
        ));
    }
    if noise.epsilon <= 0.0 {
        return Err(Error::DeterministicLimit(
            "the density operator needs ε > 0".into(),
        ));
    }
    let eps = noise.epsilon;
    let (kappa, e_neg, _, eta_top) = edge_weights(flow.potential(), mesh);
    let plain = eps - kappa;
    let drive = flow.drive();
    let nd = mesh.cell_count(mesh.dimension());
    let mut m = linalg::zeros(nd, nd);
    match mesh.kind() {
        MeshKind::Circle { n, length } => {
            let h = length / n as f64;
            // flux through vertex v from edge v-1 (left) into edge v (right): J = a·p_left + b·p_right
            for v in 0..n {
                let (l, r) = ((v + n - 1) % n, v);
                let a = plain / (2.0 * h) + kappa / (2.0 * h) * e_neg[v] * eta_top[l]
                    - drive[0][v] / 2.0;
                let b = -plain / (2.0 * h)
                    - kappa / (2.0 * h) * e_neg[v] * eta_top[r]
                    - drive[0][v] / 2.0;
                // edge r gains J(v) at its left end; edge l loses it at its right end
                m[(r, l)] -= cr(a / h);
                m[(r, r)] -= cr(b / h);
                m[(l, l)] += cr(a / h);
                m[(l, r)] += cr(b / h);
            }
        }
        MeshKind::Torus { nx, ny, lx, ly } => {
            let (hx, hy) = (lx / nx as f64, ly / ny as f64);
            let t = TorusIndex { nx, ny };
            let wbar = |a: usize, b: usize| -> f64 {
                match flow.potential() {
                    Some(p) => (-(p.values[a] + p.values[b])).exp(),
                    None => 1.0,
                }
            };
            for v in 0..nx * ny {
                let (i, j) = t.coords(v);
                // x-flux across the y-edge from (i,j) to (i,j+1), between faces (i-1,j) and (i,j)
                let (fl, fr) = (t.face(i - 1, j), t.face(i, j));
                let up = t.vertex(i, j + 1);
                let ax = 0.5 * (drive[0][v] + drive[0][up]);
                let en = wbar(v, up);
                let a = plain / (2.0 * hx) + kappa / (2.0 * hx) * en * eta_top[fl] - ax / 2.0;
                let b = -plain / (2.0 * hx) - kappa / (2.0 * hx) * en * eta_top[fr] - ax / 2.0;
                m[(fr, fl)] -= cr(a / hx);
                m[(fr, fr)] -= cr(b / hx);
                m[(fl, fl)] += cr(a / hx);
                m[(fl, fr)] += cr(b / hx);
                // y-flux across the x-edge from (i,j) to (i+1,j), between faces (i,j-1) and (i,j)
                let (fd, fu) = (t.face(i, j - 1), t.face(i, j));
                let right = t.vertex(i + 1, j);
                let ay = 0.5 * (drive[1][v] + drive[1][right]);
                let en = wbar(v, right);
                let a = plain / (2.0 * hy) + kappa / (2.0 * hy) * en * eta_top[fd] - ay / 2.0;
                let b = -plain / (2.0 * hy) - kappa / (2.0 * hy) * en * eta_top[fu] - ay / 2.0;
                m[(fu, fd)] -= cr(a / hy);
                m[(fu, fu)] -= cr(b / hy);
                m[(fd, fd)] += cr(a / hy);
                m[(fd, fu)] += cr(b / hy);
            }
        }
        MeshKind::Surface => unreachable!("checked above"),
    }
    Ok(OperatorBlock {
        matrix: m,
        domain_degree: mesh.dimension(),
        codomain_degree: mesh.dimension(),
        backend: Backend::FiniteDifference,
    })
}

/// Diagonal similarity `S_k` with `H_L = S H S⁻¹` symmetric.
#[derive(Debug, Clone)]
pub struct Similarity {
    /// `S_k = sqrt(star_k / max star_k) · e^{W̄}` per degree.
    pub forward: Vec<Vec<f64>>,
}

impl Similarity {
    pub fn to_hermitian(&self, k: usize, x: &[linalg::c64]) -> Vec<linalg::c64> {
        x.iter()
            .zip(&self.forward[k])
            .map(|(a, s)| a * *s)
            .collect()
    }

    pub fn from_hermitian(&self, k: usize, x: &[linalg::c64]) -> Vec<linalg::c64> {
        x.iter()
            .zip(&self.forward[k])
            .map(|(a, s)| a / *s)
            .collect()
    }
}

/// Symmetric form of a Langevin Hamiltonian via the metric `η = e^{2W}`.
pub fn hermitianize_langevin(
    mesh: &MeshComplex,
    flow: &FlowField,
    noise: NoiseSpec,
) -> Result<(GradedOperator, Similarity)> {
    let potential = flow
        .potential()
        .ok_or_else(|| Error::NotPotential("flow has no superpotential".into()))?;
    if flow.drive().iter().flatten().any(|&x| x != 0.0) {
        return Err(Error::NotPotential(
            "flow has a non-gradient drive component".into(),
        ));
    }
    if noise.epsilon <= 0.0 {
        return Err(Error::DeterministicLimit(
            "Hermitianization needs ε > 0".into(),
        ));
    }
    if (potential.scale - noise.epsilon).abs() > 1e-12 * noise.epsilon {
        return Err(Error::NotPotential(format!(
            "flow is {}·∇W but the noise is ε = {}; the metric e^{{2W}} applies to A = ε∇W",
            potential.scale, noise.epsilon
        )));
    }
    let h = assemble_hamiltonian(mesh, flow, noise, Backend::FiniteDifference)?;
    let forward: Vec<Vec<f64>> = (0..=mesh.dimension())
        .map(|k| {
            let star = &h.stars[k];
            let top = star.iter().fold(0.0f64, |m, &x| m.max(x));
            let wbar = mesh.cell_average(k, &potential.values);
            star.iter()
                .zip(&wbar)
                .map(|(s, w)| {
                    let r = s / top;
                    let r = if r == 1.0 { 1.0 } else { r.sqrt() };
                    r * w.exp()
                })
                .collect()
        })
        .collect();
    let blocks = h
        .blocks
        .iter()
        .zip(&forward)
        .map(|(b, s)| {
            let inv: Vec<f64> = s.iter().map(|x| 1.0 / x).collect();
            linalg::scale(s, b, &inv)
        })
        .collect();
    Ok((GradedOperator { blocks, ..h }, Similarity { forward }))
}

/// `‖B − Bᵀ‖ / ‖B‖` (Frobenius).
pub fn asymmetry(b: &CMat) -> f64 {
    relative(
        linalg::frobenius(&(b - linalg::transpose(b))),
        linalg::frobenius(b),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::wavenumber_index;
    use crate::linalg::{c64, eigendecompose};
    use crate::mesh::{
        build_circle_grid, build_torus_grid, build_triangulated_surface, icosahedron,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn random_flow(mesh: &MeshComplex, rng: &mut ChaCha8Rng) -> FlowField {
        let nv = mesh.cell_count(0);
        let drive = (0..mesh.dimension())
            .map(|_| (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        FlowField::from_components(mesh, drive).unwrap()
    }

    fn langevin_circle(n: usize, eps: f64) -> (MeshComplex, FlowField, Vec<f64>) {
        let m = build_circle_grid(n, TAU).unwrap();
        let h = TAU / n as f64;
        let w: Vec<f64> = (0..n).map(|i| (2.0 * i as f64 * h).cos()).collect();
        let flow = FlowField::langevin(&m, w.clone(), eps).unwrap();
        (m, flow, w)
    }

    #[test]
    fn fourier_toy_eigenvalue() {
        let m = build_circle_grid(64, TAU).unwrap();
        let flow = FlowField::constant(&m, &[1.0]).unwrap();
        let h = assemble_hamiltonian(&m, &flow, NoiseSpec::new(0.2).unwrap(), Backend::Fourier)
            .unwrap();
        let b = h.block(0).unwrap();
        // symbolic oracle: (−(ε/2)∂² − a∂) e^{ikφ} = (εk²/2 − ika) e^{ikφ}
        assert!((b[(1, 1)] - c64::new(0.1, -1.0)).norm() < 1e-14);
        for j in 0..64 {
            let k = wavenumber_index(j, 64) as f64;
            for deg in 0..2 {
                let v = h.block(deg).unwrap()[(j, j)];
                assert!((v - c64::new(0.1 * k * k, -k)).norm() < 1e-12 * (1.0 + k * k));
            }
        }
    }

    #[test]
    fn zero_flow_gives_half_laplacian() {
        let (v, f) = icosahedron();
        let s = build_triangulated_surface(&v, &f).unwrap();
        let h = assemble_hamiltonian(
            &s,
            &FlowField::zero(&s),
            NoiseSpec::new(1.0).unwrap(),
            Backend::FiniteDifference,
        )
        .unwrap();
        for (k, b) in h.blocks.iter().enumerate() {
            // self-adjoint in the star inner product
            let sq: Vec<f64> = h.stars[k].iter().map(|x| x.sqrt()).collect();
            let inv: Vec<f64> = sq.iter().map(|x| 1.0 / x).collect();
            let sym = linalg::scale(&sq, b, &inv);
            assert!(asymmetry(&sym) < 1e-13);
            let e = eigendecompose(&sym).unwrap();
            assert!(e.values.iter().all(|l| l.re > -1e-12 && l.im.abs() < 1e-12));
        }
    }

    #[test]
    fn langevin_stationary_density_residual() {
        let (m, flow, w) = langevin_circle(64, 0.2);
        let noise = NoiseSpec::new(0.2).unwrap();
        let h = assemble_hamiltonian(&m, &flow, noise, Backend::FiniteDifference).unwrap();
        let hd = h.block(1).unwrap();
        let h_step = TAU / 64.0;
        // continuum density e^{-2W} sampled at edge midpoints, as a 1-cochain p·h
        let p: Vec<c64> = (0..64)
            .map(|e| cr((-2.0 * (2.0 * (e as f64 + 0.5) * h_step).cos()).exp()))
            .collect();
        let r = linalg::norm(&linalg::matvec(hd, &p)) / linalg::norm(&p);
        assert!(r < 1e-3 * linalg::frobenius(hd), "{r}");
        let _ = w;
    }

    #[test]
    fn two_route_consistency_on_random_flows() {
        let m = build_circle_grid(16, TAU).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = NoiseSpec::new(0.3).unwrap();
        for _ in 0..5 {
            let flow = random_flow(&m, &mut rng);
            let h = assemble_hamiltonian(&m, &flow, noise, Backend::FiniteDifference).unwrap();
            assert!(h.consistency_residual.unwrap() < 1e-11);
            assert!(h.intertwining_residual.unwrap() < 1e-11);
            // independent route: Q̄ assembled separately, anticommutator with d
            let q = pseudo_adjoint_charge(&m, &flow, noise, Backend::FiniteDifference).unwrap();
            let d0 = exterior_derivative(&m, 0, Backend::FiniteDifference)
                .unwrap()
                .matrix;
            let q1 = q.block(1).unwrap();
            let h0 = (q1 * &d0) * faer::Scale(cr(0.5));
            let h1 = (&d0 * q1) * faer::Scale(cr(0.5));
            let dev = (linalg::frobenius(&(h0 - h.block(0).unwrap())).powi(2)
                + linalg::frobenius(&(h1 - h.block(1).unwrap())).powi(2))
            .sqrt();
            assert!(dev < 1e-11 * h.norm());
            assert!(matches!(q.block(0), Err(Error::Degree(_))));
        }
    }

    #[test]
    fn zero_flow_charge_is_codifferential() {
        let m = build_torus_grid(4, 5, 1.0, 2.0).unwrap();
        let noise = NoiseSpec::new(0.4).unwrap();
        let q = pseudo_adjoint_charge(&m, &FlowField::zero(&m), noise, Backend::FiniteDifference)
            .unwrap();
        for k in 1..=2 {
            let d = codifferential(&m, k, noise, Backend::FiniteDifference).unwrap();
            assert_eq!(linalg::max_abs(&(q.block(k).unwrap() - &d.matrix)), 0.0);
        }
    }

    #[test]
    fn deterministic_limit_rejected_with_flow() {
        let m = build_circle_grid(8, TAU).unwrap();
        let flow = FlowField::constant(&m, &[1.0]).unwrap();
        let r = assemble_hamiltonian(
            &m,
            &flow,
            NoiseSpec::new(0.0).unwrap(),
            Backend::FiniteDifference,
        );
        assert!(matches!(r, Err(Error::DeterministicLimit(_))));
        let g = deterministic_generator(&m, &flow, Backend::FiniteDifference).unwrap();
        assert!(g.deterministic_limit);
    }

    #[test]
    fn density_operator_matches_top_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = NoiseSpec::new(0.35).unwrap();
        let meshes = [
            build_circle_grid(32, TAU).unwrap(),
            build_torus_grid(6, 5, TAU, 4.0).unwrap(),
        ];
        for m in &meshes {
            for trial in 0..6 {
                let mut flow = random_flow(m, &mut rng);
                if trial % 2 == 1 {
                    let w: Vec<f64> = (0..m.cell_count(0))
                        .map(|_| rng.random_range(-0.5..0.5))
                        .collect();
                    let scale = if trial == 3 { noise.epsilon } else { 0.2 };
                    flow = FlowField::new(
                        m,
                        flow.drive().to_vec(),
                        Some(crate::exterior::Potential { values: w, scale }),
                    )
                    .unwrap();
                }
                let h = assemble_hamiltonian(m, &flow, noise, Backend::FiniteDifference).unwrap();
                let d = m.dimension();
                let star = &h.stars[d];
                let inv: Vec<f64> = star.iter().map(|x| 1.0 / x).collect();
                let conj = linalg::scale(star, h.block(d).unwrap(), &inv);
                let c = conventional_fp_operator(m, &flow, noise).unwrap();
                let dev = linalg::frobenius(&(conj - &c.matrix)) / linalg::frobenius(&c.matrix);
                assert!(dev < 1e-11, "{dev}");
            }
        }
    }

    #[test]
    fn pure_diffusion_conserves_probability() {
        let m = build_circle_grid(20, TAU).unwrap();
        let c = conventional_fp_operator(&m, &FlowField::zero(&m), NoiseSpec::new(0.5).unwrap())
            .unwrap();
        for j in 0..20 {
            let col: f64 = (0..20).map(|i| c.matrix[(i, j)].re).sum();
            let row: f64 = (0..20).map(|i| c.matrix[(j, i)].re).sum();
            assert!(col.abs() < 1e-12 && row.abs() < 1e-12);
        }
        // interior rows of −(ε/2)∂² with h = 2π/20
        let h = TAU / 20.0;
        assert!((c.matrix[(5, 5)].re - 0.5 / (h * h)).abs() < 1e-12);
    }

    #[test]
    fn hermitian_form_of_langevin_model() {
        let (m, flow, w) = langevin_circle(64, 0.2);
        let noise = NoiseSpec::new(0.2).unwrap();
        let (hl, sim) = hermitianize_langevin(&m, &flow, noise).unwrap();
        let rho = hl
            .blocks
            .iter()
            .map(|b| linalg::max_abs(b))
            .fold(0.0, f64::max);
        for b in &hl.blocks {
            assert!(asymmetry(b) < 1e-10);
        }
        let e = eigendecompose(hl.block(1).unwrap()).unwrap();
        let mut re: Vec<f64> = e.values.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        assert!(re[0].abs() < 1e-9);
        assert!(e.values.iter().all(|l| l.im.abs() < 1e-9 * rho));
        // ground state of the top block maps back to the density e^{-2W̄}
        let idx = e
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.re.total_cmp(&b.1.re))
            .unwrap()
            .0;
        let psi = sim.from_hermitian(1, &linalg::column(&e.right, idx));
        let h = assemble_hamiltonian(&m, &flow, noise, Backend::FiniteDifference).unwrap();
        let dens: Vec<c64> = psi.iter().zip(&h.stars[1]).map(|(a, s)| a * *s).collect();
        let oracle: Vec<f64> = m
            .cell_average(1, &w)
            .iter()
            .map(|x| (-2.0 * x).exp())
            .collect();
        let ratio = dens[0] / oracle[0];
        for (a, b) in dens.iter().zip(&oracle) {
            assert!((a / ratio - cr(*b)).norm() < 1e-6 * b);
        }
    }

    #[test]
    fn zero_potential_similarity_is_identity() {
        let m = build_circle_grid(16, TAU).unwrap();
        let flow = FlowField::langevin(&m, vec![0.0; 16], 0.5).unwrap();
        let noise = NoiseSpec::new(0.5).unwrap();
        let (hl, _) = hermitianize_langevin(&m, &flow, noise).unwrap();
        let h = assemble_hamiltonian(&m, &flow, noise, Backend::FiniteDifference).unwrap();
        for (a, b) in hl.blocks.iter().zip(&h.blocks) {
            assert_eq!(linalg::max_abs(&(a - b)), 0.0);
        }
        let driven = FlowField::constant(&m, &[1.0]).unwrap();
        assert!(matches!(
            hermitianize_langevin(&m, &driven, noise),
            Err(Error::NotPotential(_))
        ));
    }
}
