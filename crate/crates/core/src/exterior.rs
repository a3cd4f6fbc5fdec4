//! Discrete exterior calculus: d, the codifferential, interior products and Lie derivatives.
//!
//! Every operator is a dense complex block between cochain spaces. The finite-difference
//! backend works on nodal cochains of any mesh. The Fourier backend works on modal
//! coefficients of uniform periodic grids, where a k-form is expanded as
//! `Σ c_m e^{iκ_m·x}` per component, and supports constant flows only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, cr, CMat};
use crate::mesh::{MeshComplex, MeshKind, NoiseSpec, TorusIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    #[serde(alias = "fd")]
    FiniteDifference,
    Fourier,
}

#[derive(Debug, Clone)]
pub struct OperatorBlock {
    pub matrix: CMat,
    pub domain_degree: usize,
    pub codomain_degree: usize,
    pub backend: Backend,
}

impl OperatorBlock {
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        linalg::matvec(&self.matrix, x)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.matrix.nrows(), self.matrix.ncols())
    }
}

/// Superpotential part of a flow: `A = scale · ∇W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub values: Vec<f64>,
    pub scale: f64,
}

/// Vector field sampled on the vertices of a structured grid.
///
/// The flow is the sum of a drive (arbitrary vertex samples per coordinate direction) and an
/// optional gradient part `scale · ∇W`. The gradient part is kept symbolically so that the
/// contraction can be discretized in a form that preserves detailed balance.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    kind: MeshKind,
    drive: Vec<Vec<f64>>,
    potential: Option<Potential>,
    total: Vec<Vec<f64>>,
}

fn grid_dims(mesh: &MeshComplex) -> Result<(usize, usize, f64, f64)> {
    match mesh.kind() {
        MeshKind::Circle { n, length } => Ok((n, 1, length / n as f64, 0.0)),
        MeshKind::Torus { nx, ny, lx, ly } => Ok((nx, ny, lx / nx as f64, ly / ny as f64)),
        MeshKind::Surface => Err(Error::UnsupportedMesh(
            "flows are supported on circle and torus grids only".into(),
        )),
    }
}

/// Centered-difference gradient of a vertex field on a structured grid.
pub fn centered_gradient(mesh: &MeshComplex, w: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (nx, ny, hx, hy) = grid_dims(mesh)?;
    if w.len() != mesh.cell_count(0) {
        return Err(Error::InvalidArgument(format!(
            "field has {} samples, mesh has {} vertices",
            w.len(),
            mesh.cell_count(0)
        )));
    }
    if mesh.dimension() == 1 {
        let n = nx;
        return Ok(vec![(0..n)
            .map(|i| (w[(i + 1) % n] - w[(i + n - 1) % n]) / (2.0 * hx))
            .collect()]);
    }
    let t = TorusIndex { nx, ny };
    let mut gx = vec![0.0; nx * ny];
    let mut gy = vec![0.0; nx * ny];
    for v in 0..nx * ny {
        let (i, j) = t.coords(v);
        gx[v] = (w[t.vertex(i + 1, j)] - w[t.vertex(i - 1, j)]) / (2.0 * hx);
        gy[v] = (w[t.vertex(i, j + 1)] - w[t.vertex(i, j - 1)]) / (2.0 * hy);
    }
    Ok(vec![gx, gy])
}

impl FlowField {
    /// The zero flow, valid on every mesh.
    pub fn zero(mesh: &MeshComplex) -> Self {
        let dirs = if mesh.is_structured() {
            mesh.dimension()
        } else {
            0
        };
        let nv = mesh.cell_count(0);
        Self {
            kind: mesh.kind(),
            drive: vec![vec![0.0; nv]; dirs],
            potential: None,
            total: vec![vec![0.0; nv]; dirs],
        }
    }

    /// General flow: drive samples per direction plus an optional gradient part.
    pub fn new(
        mesh: &MeshComplex,
        drive: Vec<Vec<f64>>,
        potential: Option<Potential>,
    ) -> Result<Self> {
        grid_dims(mesh)?;
        let nv = mesh.cell_count(0);
        if drive.len() != mesh.dimension() || drive.iter().any(|c| c.len() != nv) {
            return Err(Error::InvalidArgument(format!(
                "flow needs {} components of {nv} vertex samples",
                mesh.dimension()
            )));
        }
        if drive.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("flow samples must be finite".into()));
        }
        let mut total = drive.clone();
        if let Some(p) = &potential {
            if !p.scale.is_finite() || p.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(
                    "superpotential must be finite".into(),
                ));
            }
            let g = centered_gradient(mesh, &p.values)?;
            for (t, gc) in total.iter_mut().zip(g) {
                for (a, b) in t.iter_mut().zip(gc) {
                    *a += p.scale * b;
                }
            }
        }
        Ok(Self {
            kind: mesh.kind(),
            drive,
            potential,
            total,
        })
    }

    pub fn from_components(mesh: &MeshComplex, drive: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(mesh, drive, None)
    }

    pub fn constant(mesh: &MeshComplex, components: &[f64]) -> Result<Self> {
        let nv = mesh.cell_count(0);
        Self::new(
            mesh,
            components.iter().map(|&a| vec![a; nv]).collect(),
            None,
        )
    }

    /// Gradient flow `A = scale · ∇W`.
    pub fn langevin(mesh: &MeshComplex, w: Vec<f64>, scale: f64) -> Result<Self> {
        let nv = mesh.cell_count(0);
        Self::new(
            mesh,
            vec![vec![0.0; nv]; mesh.dimension()],
            Some(Potential { values: w, scale }),
        )
    }

    /// Gradient flow declared through explicit samples, which must equal `scale · ∇W`
    /// (centered differences) to 1e-10 relative.
    pub fn declared_langevin(
        mesh: &MeshComplex,
        samples: &[Vec<f64>],
        w: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        let flow = Self::langevin(mesh, w, scale)?;
        if samples.len() != flow.total.len()
            || samples
                .iter()
                .zip(&flow.total)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::InvalidArgument(
                "declared samples have the wrong shape".into(),
            ));
        }
        let size = flow
            .total
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(1e-300);
        let dev = samples
            .iter()
            .flatten()
            .zip(flow.total.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if dev > 1e-10 * size {
            return Err(Error::NotPotential(format!(
                "declared samples deviate from scale·∇W by {dev:.3e} (relative {:.3e})",
                dev / size
            )));
        }
        Ok(flow)
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    /// Total flow samples `[direction][vertex]`.
    pub fn samples(&self) -> &[Vec<f64>] {
        &self.total
    }

    pub fn drive(&self) -> &[Vec<f64>] {
        &self.drive
    }

    pub fn potential(&self) -> Option<&Potential> {
        self.potential.as_ref()
    }

    pub fn vertex_count(&self) -> usize {
        self.total.first().map_or(0, Vec::len)
    }

    pub fn is_zero(&self) -> bool {
        self.total.iter().flatten().all(|&x| x == 0.0)
            && self
                .potential
                .as_ref()
                .is_none_or(|p| p.scale == 0.0 || p.values.iter().all(|&w| w == p.values[0]))
    }

    /// Constant components if the flow is spatially uniform and has no gradient part.
    pub fn constant_components(&self) -> Option<Vec<f64>> {
        if self
            .potential
            .as_ref()
            .is_some_and(|p| p.scale != 0.0 && p.values.iter().any(|&w| w != p.values[0]))
        {
            return None;
        }
        self.total
            .iter()
            .map(|c| {
                if c.iter().all(|&x| x == c[0]) {
                    Some(c.first().copied().unwrap_or(0.0))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Largest flow magnitude over vertices (sup norm of the total samples).
    pub fn sup_norm(&self) -> f64 {
        self.total.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_mesh(&self, mesh: &MeshComplex) -> Result<()> {
        if self.kind != mesh.kind()
            || self.vertex_count() != mesh.cell_count(0) && !self.total.is_empty()
        {
            return Err(Error::InvalidArgument(
                "flow was sampled on a different mesh".into(),
            ));
        }
        Ok(())
    }
}

fn check_structured_for_fourier(mesh: &MeshComplex) -> Result<()> {
    if !mesh.is_structured() {
        return Err(Error::UnsupportedBackend(
            "the Fourier backend requires a uniform periodic grid".into(),
        ));
    }
    Ok(())
}

/// Signed integer wavenumber of FFT slot `j` out of `n`.
pub fn wavenumber_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Angular wavenumbers `(κx, κy)` of every modal slot, in vertex ordering.
pub fn mode_wavenumbers(mesh: &MeshComplex) -> Result<Vec<[f64; 2]>> {
    use std::f64::consts::TAU;
    match mesh.kind() {
        MeshKind::Circle { n, length } => Ok((0..n)
            .map(|j| [TAU * wavenumber_index(j, n) as f64 / length, 0.0])
            .collect()),
        MeshKind::Torus { nx, ny, lx, ly } => Ok((0..nx * ny)
            .map(|v| {
                let (i, j) = (v % nx, v / nx);
                [
                    TAU * wavenumber_index(i, nx) as f64 / lx,
                    TAU * wavenumber_index(j, ny) as f64 / ly,
                ]
            })
            .collect()),
        MeshKind::Surface => Err(Error::UnsupportedBackend(
            "the Fourier backend requires a uniform periodic grid".into(),
        )),
    }
}

fn ik(kappa: f64) -> c64 {
    c64::new(0.0, kappa)
}

fn check_form_degree(mesh: &MeshComplex, k: usize) -> Result<()> {
    if k > mesh.dimension() {
        return Err(Error::Degree(format!(
            "no {k}-forms on a {}-dimensional complex",
            mesh.dimension()
        )));
    }
    Ok(())
}

/// Exterior derivative d_k: k-cochains → (k+1)-cochains.
pub fn exterior_derivative(
    mesh: &MeshComplex,
    k: usize,
    backend: Backend,
) -> Result<OperatorBlock> {
    if k >= mesh.dimension() {
        return Err(Error::Degree(format!(
            "d_{k} undefined: no {}-forms on a {}-dimensional complex",
            k + 1,
            mesh.dimension()
        )));
    }
    let matrix = match backend {
        Backend::FiniteDifference => {
            let b = mesh.boundary(k + 1)?;
            let mut m = linalg::zeros(b.cols, b.rows);
            for &(r, c, s) in &b.entries {
                m[(c, r)] += cr(s as f64);
            }
            m
        }
        Backend::Fourier => {
            check_structured_for_fourier(mesh)?;
            let kap = mode_wavenumbers(mesh)?;
            let n = kap.len();
            match (mesh.dimension(), k) {
                (1, 0) => linalg::diagonal(&kap.iter().map(|q| ik(q[0])).collect::<Vec<_>>()),
                (2, 0) => {
                    let mut m = linalg::zeros(2 * n, n);
                    for (j, q) in kap.iter().enumerate() {
                        m[(j, j)] = ik(q[0]);
                        m[(n + j, j)] = ik(q[1]);
                    }
                    m
                }
                _ => {
                    let mut m = linalg::zeros(n, 2 * n);
                    for (j, q) in kap.iter().enumerate() {
                        m[(j, j)] = -ik(q[1]);
                        m[(j, n + j)] = ik(q[0]);
                    }
                    m
                }
            }
        }
    };
    Ok(OperatorBlock {
        matrix,
        domain_degree: k,
        codomain_degree: k + 1,
        backend,
    })
}

/// Diagonal of the Hodge star on k-forms in the chosen representation.
///
/// Modal stars are `ε^k · volume`, so the modal inner product equals the continuum L² product.
pub fn star_diagonal(
    mesh: &MeshComplex,
    k: usize,
    noise: NoiseSpec,
    backend: Backend,
) -> Result<Vec<f64>> {
    match backend {
        Backend::FiniteDifference => Ok(mesh.hodge_star(k, noise)?.diag),
        Backend::Fourier => {
            check_structured_for_fourier(mesh)?;
            check_form_degree(mesh, k)?;
            let scale = if noise.epsilon == 0.0 {
                1.0
            } else {
                noise.epsilon.powi(k as i32)
            };
            Ok(vec![scale * mesh.volume(); mesh.cell_count(k)])
        }
    }
}

fn codifferential_with(
    mesh: &MeshComplex,
    k: usize,
    noise: NoiseSpec,
    backend: Backend,
) -> Result<CMat> {
    let d = exterior_derivative(mesh, k - 1, backend)?;
    let lo = star_diagonal(mesh, k - 1, noise, backend)?;
    let hi = star_diagonal(mesh, k, noise, backend)?;
    let inv_lo: Vec<f64> = lo.iter().map(|x| 1.0 / x).collect();
    Ok(linalg::scale(&inv_lo, &linalg::adjoint(&d.matrix), &hi))
}

/// Codifferential d†_k = star_{k-1}⁻¹ d^H star_k: k-cochains → (k-1)-cochains.
pub fn codifferential(
    mesh: &MeshComplex,
    k: usize,
    noise: NoiseSpec,
    backend: Backend,
) -> Result<OperatorBlock> {
    if k == 0 || k > mesh.dimension() {
        return Err(Error::Degree(format!(
            "codifferential undefined on {k}-forms of a {}-dimensional complex",
            mesh.dimension()
        )));
    }
    if noise.epsilon == 0.0 {
        return Err(Error::DeterministicLimit(
            "the codifferential needs ε > 0; use the deterministic generator or an ε-sweep".into(),
        ));
    }
    let matrix = codifferential_with(mesh, k, noise, backend)?;
    Ok(OperatorBlock {
        matrix,
        domain_degree: k,
        codomain_degree: k - 1,
        backend,
    })
}

/// Incident-edge averaged contraction of vertex samples `a` (finite differences).
fn averaged_contraction(mesh: &MeshComplex, a: &[Vec<f64>], k: usize) -> Result<CMat> {
    let (nx, ny, hx, hy) = grid_dims(mesh)?;
    let rows = mesh.cell_count(k - 1);
    let cols = mesh.cell_count(k);
    let mut m = linalg::zeros(rows, cols);
    if mesh.dimension() == 1 {
        let n = nx;
        for v in 0..n {
            let w = a[0][v] / (2.0 * hx);
            m[(v, (v + n - 1) % n)] += cr(w);
            m[(v, v)] += cr(w);
        }
        return Ok(m);
    }
    let t = TorusIndex { nx, ny };
    if k == 1 {
        for v in 0..nx * ny {
            let (i, j) = t.coords(v);
            let wx = a[0][v] / (2.0 * hx);
            let wy = a[1][v] / (2.0 * hy);
            m[(v, t.x_edge(i, j))] += cr(wx);
            m[(v, t.x_edge(i - 1, j))] += cr(wx);
            m[(v, t.y_edge(i, j))] += cr(wy);
            m[(v, t.y_edge(i, j - 1))] += cr(wy);
        }
    } else {
        for v in 0..nx * ny {
            let (i, j) = t.coords(v);
            let ay = 0.5 * (a[1][v] + a[1][t.vertex(i + 1, j)]);
            let ex = t.x_edge(i, j);
            m[(ex, t.face(i, j))] += cr(-ay / (2.0 * hy));
            m[(ex, t.face(i, j - 1))] += cr(-ay / (2.0 * hy));
            let ax = 0.5 * (a[0][v] + a[0][t.vertex(i, j + 1)]);
            let ey = t.y_edge(i, j);
            m[(ey, t.face(i, j))] += cr(ax / (2.0 * hx));
            m[(ey, t.face(i - 1, j))] += cr(ax / (2.0 * hx));
        }
    }
    Ok(m)
}

/// Exponentially fitted contraction with `scale · ∇W`: `scale · ½(δ − η⁻¹δη)` built from
/// unit-metric codifferentials and `η = e^{2W̄}` (W averaged over each cell's vertices).
fn potential_contraction(mesh: &MeshComplex, p: &Potential, k: usize) -> Result<CMat> {
    let unit = NoiseSpec { epsilon: 1.0 };
    let delta = codifferential_with(mesh, k, unit, Backend::FiniteDifference)?;
    let eta_lo: Vec<f64> = mesh
        .cell_average(k - 1, &p.values)
        .iter()
        .map(|w| (2.0 * w).exp())
        .collect();
    let eta_hi: Vec<f64> = mesh
        .cell_average(k, &p.values)
        .iter()
        .map(|w| (2.0 * w).exp())
        .collect();
    let inv_lo: Vec<f64> = eta_lo.iter().map(|x| 1.0 / x).collect();
    let fitted = linalg::scale(&inv_lo, &delta, &eta_hi);
    let mut out = delta - fitted;
    out *= faer::Scale(cr(0.5 * p.scale));
    Ok(out)
}

/// Interior product ι_A: k-cochains → (k-1)-cochains.
///
/// Drive samples are contracted by incident-edge averaging; the gradient part uses the
/// exponentially fitted form, which reduces to the same average at leading order.
pub fn interior_product(
    mesh: &MeshComplex,
    flow: &FlowField,
    k: usize,
    backend: Backend,
) -> Result<OperatorBlock> {
    if k == 0 || k > mesh.dimension() {
        return Err(Error::Degree(format!(
            "interior product undefined on {k}-forms of a {}-dimensional complex",
            mesh.dimension()
        )));
    }
    if !mesh.is_structured() {
        if flow.is_zero() {
            let m = linalg::zeros(mesh.cell_count(k - 1), mesh.cell_count(k));
            return Ok(OperatorBlock {
                matrix: m,
                domain_degree: k,
                codomain_degree: k - 1,
                backend,
            });
        }
        return Err(Error::UnsupportedMesh(
            "nonzero flows need a circle or torus grid".into(),
        ));
    }
    flow.check_mesh(mesh)?;
    let matrix = match backend {
        Backend::FiniteDifference => {
            let mut m = averaged_contraction(mesh, flow.drive(), k)?;
            if let Some(p) = flow.potential() {
                m += potential_contraction(mesh, p, k)?;
            }
            m
        }
        Backend::Fourier => {
            let a = flow.constant_components().ok_or_else(|| {
                Error::UnsupportedBackend("the Fourier backend supports constant flows only".into())
            })?;
            let n = mesh.cell_count(0);
            match (mesh.dimension(), k) {
                (1, _) => linalg::real_diagonal(&vec![a[0]; n]),
                (2, 1) => {
                    let mut m = linalg::zeros(n, 2 * n);
                    for j in 0..n {
                        m[(j, j)] = cr(a[0]);
                        m[(j, n + j)] = cr(a[1]);
                    }
                    m
                }
                _ => {
                    let mut m = linalg::zeros(2 * n, n);
                    for j in 0..n {
                        m[(j, j)] = cr(-a[1]);
                        m[(n + j, j)] = cr(a[0]);
                    }
                    m
                }
            }
        }
    };
    Ok(OperatorBlock {
        matrix,
        domain_degree: k,
        codomain_degree: k - 1,
        backend,
    })
}

/// Lie derivative L_A = d ι_A + ι_A d on k-cochains.
pub fn lie_derivative(
    mesh: &MeshComplex,
    flow: &FlowField,
    k: usize,
    backend: Backend,
) -> Result<OperatorBlock> {
    check_form_degree(mesh, k)?;
    if !mesh.is_structured() && !flow.is_zero() {
        return Err(Error::UnsupportedMesh(
            "nonzero flows need a circle or torus grid".into(),
        ));
    }
    let n = mesh.cell_count(k);
    let mut m = linalg::zeros(n, n);
    if k >= 1 {
        let d = exterior_derivative(mesh, k - 1, backend)?;
        let i = interior_product(mesh, flow, k, backend)?;
        m += &d.matrix * &i.matrix;
    }
    if k < mesh.dimension() {
        let d = exterior_derivative(mesh, k, backend)?;
        let i = interior_product(mesh, flow, k + 1, backend)?;
        m += &i.matrix * &d.matrix;
    }
    Ok(OperatorBlock {
        matrix: m,
        domain_degree: k,
        codomain_degree: k,
        backend,
    })
}

/// Map from modal coefficients to finite-difference cochains by exact cell integration.
///
/// Degree 0 samples at vertices, degree 1 integrates each component along its edges and
/// degree 2 integrates over faces. It intertwines the two backends: `R d_fourier = d_fd R`.
pub fn de_rham_map(mesh: &MeshComplex, k: usize) -> Result<CMat> {
    check_structured_for_fourier(mesh)?;
    check_form_degree(mesh, k)?;
    let kap = mode_wavenumbers(mesh)?;
    let pts = mesh.points();
    let n = kap.len();
    let [hx, hy] = mesh.spacing().unwrap_or([0.0, 0.0]);
    let weight = |q: f64, h: f64| -> c64 {
        if q == 0.0 {
            cr(h)
        } else {
            ((ik(q) * h).exp() - cr(1.0)) / ik(q)
        }
    };
    let phase = |v: usize, q: &[f64; 2]| -> c64 { ik(q[0] * pts[v][0] + q[1] * pts[v][1]).exp() };
    let mut m = linalg::zeros(mesh.cell_count(k), mesh.cell_count(k));
    match (mesh.dimension(), k) {
        (_, 0) => {
            for v in 0..n {
                for (j, q) in kap.iter().enumerate() {
                    m[(v, j)] = phase(v, q);
                }
            }
        }
        (1, 1) => {
            for e in 0..n {
                for (j, q) in kap.iter().enumerate() {
                    m[(e, j)] = phase(e, q) * weight(q[0], hx);
                }
            }
        }
        (2, 1) => {
            for v in 0..n {
                for (j, q) in kap.iter().enumerate() {
                    m[(v, j)] = phase(v, q) * weight(q[0], hx);
                    m[(n + v, n + j)] = phase(v, q) * weight(q[1], hy);
                }
            }
        }
        _ => {
            for f in 0..n {
                for (j, q) in kap.iter().enumerate() {
                    m[(f, j)] = phase(f, q) * weight(q[0], hx) * weight(q[1], hy);
                }
            }
        }
    }
    Ok(m)
}
