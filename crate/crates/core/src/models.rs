//! Canonical models with known answers.
//!
//! Each model bundles a mesh, a flow, the noise intensity and a list of oracle entries with
//! provenance and tolerance. Circle models live on a circle of circumference 2π; torus
//! models on the 2π × 2π torus.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{mode_wavenumbers, Backend, FlowField, Potential};
use crate::fokker_planck::{assemble_hamiltonian, deterministic_generator, GradedOperator};
use crate::linalg::{c64, cr};
use crate::mesh::{
    build_circle_grid, build_torus_grid, build_triangulated_surface, icosphere, MeshComplex,
    NoiseSpec,
};
use crate::morse::{find_critical_points, poincare_hopf_sum};
use crate::spectral::{full_spectrum, witten_index, SpectrumReport};

/// Model selection by name and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelParams {
    ConstantDriveCircle {
        a: f64,
        epsilon: f64,
        n: usize,
    },
    LangevinDoubleWellCircle {
        depth: f64,
        epsilon: f64,
        n: usize,
    },
    TiltedLangevinCircle {
        depth: f64,
        tilt: f64,
        epsilon: f64,
        n: usize,
    },
    TorusShearModel {
        ax: f64,
        ay: f64,
        epsilon: f64,
        n: usize,
    },
    /// `W = depth · cos(mode · φ)`.
    LangevinCosineCircle {
        depth: f64,
        mode: u32,
        epsilon: f64,
        n: usize,
    },
    /// `W = depth · (cos x + cos y)`.
    LangevinTorus {
        depth: f64,
        epsilon: f64,
        n: usize,
    },
    /// Zero flow on a subdivided icosahedron.
    FreeIcosphere {
        subdivisions: usize,
        epsilon: f64,
    },
}

/// Names accepted in configurations, with their parameter lists.
pub const MODEL_CATALOG: &[(&str, &str)] = &[
    ("constant_drive_circle", "a, epsilon, n"),
    ("langevin_double_well_circle", "depth, epsilon, n"),
    ("tilted_langevin_circle", "depth, tilt, epsilon, n"),
    ("torus_shear_model", "ax, ay, epsilon, n"),
    ("langevin_cosine_circle", "depth, mode, epsilon, n"),
    ("langevin_torus", "depth, epsilon, n"),
    ("free_icosphere", "subdivisions, epsilon"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provenance {
    Paper,
    Trivial,
    Derived,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleKind {
    /// Eigenvalues per degree for one backend, compared as multisets with
    /// `|Δ| / max(|λ*|, 1)`.
    Spectrum {
        backend: Backend,
        values: Vec<(usize, c64)>,
    },
    /// Normalized stationary density on top cells.
    StationaryDensity(Vec<f64>),
    WittenIndex(i64),
    ZeroModes(Vec<usize>),
    PoincareHopf(i64),
    /// `max |Im λ| <= tol · ρ`.
    RealSpectrum,
    /// `max |Re λ| <= tol · ρ`.
    ImaginarySpectrum,
    /// `min Γ >= −tol · ρ`.
    NonnegativeGamma,
    /// Conjugate-closure residual `<= tol`.
    ConjugateClosed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEntry {
    pub quantity: String,
    pub provenance: Provenance,
    pub tolerance: f64,
    pub kind: OracleKind,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub params: ModelParams,
    pub mesh: MeshComplex,
    pub flow: FlowField,
    pub noise: NoiseSpec,
    /// Superpotential samples for gradient models.
    pub superpotential: Option<Vec<f64>>,
    pub oracle: Vec<OracleEntry>,
}

fn check_eps(eps: f64, strict: bool) -> Result<NoiseSpec> {
    if strict && !(eps > 0.0) {
        return Err(Error::InvalidNoise(format!(
            "this model needs ε > 0, got {eps}"
        )));
    }
    NoiseSpec::new(eps)
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidResolution(format!(
            "model needs n >= {min}, got {n}"
        )));
    }
    Ok(())
}

fn finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "model parameters must be finite".into(),
        ));
    }
    Ok(())
}

/// Eigenvalue of `−(ε/2)∂² − a∂` on the mode `e^{iκx}` in the chosen discretization.
pub fn drift_diffusion_symbol(backend: Backend, kappa: f64, h: f64, a: f64, eps: f64) -> c64 {
    match backend {
        Backend::Fourier => c64::new(0.5 * eps * kappa * kappa, -kappa * a),
        Backend::FiniteDifference => {
            let s = (0.5 * kappa * h).sin();
            c64::new(
                0.5 * eps * 4.0 * s * s / (h * h),
                -a * (kappa * h).sin() / h,
            )
        }
    }
}

fn constant_flow_spectrum(
    mesh: &MeshComplex,
    a: &[f64],
    eps: f64,
    backend: Backend,
) -> Result<Vec<(usize, c64)>> {
    let kap = mode_wavenumbers(mesh)?;
    let [hx, hy] = mesh.spacing().expect("structured grid");
    let mut out = Vec::new();
    for q in &kap {
        let mut v = drift_diffusion_symbol(backend, q[0], hx, a[0], eps);
        if mesh.dimension() == 2 {
            v += drift_diffusion_symbol(backend, q[1], hy, a[1], eps);
        }
        // degree multiplicities follow the binomial pattern of the form spaces
        match mesh.dimension() {
            1 => out.extend([(0, v), (1, v)]),
            _ => out.extend([(0, v), (1, v), (1, v), (2, v)]),
        }
    }
    Ok(out)
}

fn gradient_oracles(
    mesh: &MeshComplex,
    w: &[f64],
    chi: i64,
    betti: Vec<usize>,
) -> Vec<OracleEntry> {
    let top = mesh.dimension();
    let mut density: Vec<f64> = mesh
        .cell_average(top, w)
        .iter()
        .map(|x| (-2.0 * x).exp())
        .collect();
    let z: f64 = density.iter().sum();
    density.iter_mut().for_each(|x| *x /= z);
    vec![
        OracleEntry {
            quantity: "stationary density e^{-2W} (cell-averaged W)".into(),
            provenance: Provenance::Paper,
            tolerance: 1e-6,
            kind: OracleKind::StationaryDensity(density),
        },
        OracleEntry {
            quantity: "Witten index".into(),
            provenance: Provenance::Paper,
            tolerance: 0.0,
            kind: OracleKind::WittenIndex(chi),
        },
        OracleEntry {
            quantity: "zero modes per degree (Betti numbers)".into(),
            provenance: Provenance::Derived,
            tolerance: 0.0,
            kind: OracleKind::ZeroModes(betti),
        },
        OracleEntry {
            quantity: "Poincare-Hopf sum".into(),
            provenance: Provenance::Derived,
            tolerance: 0.0,
            kind: OracleKind::PoincareHopf(chi),
        },
        OracleEntry {
            quantity: "real spectrum".into(),
            provenance: Provenance::Paper,
            tolerance: 1e-9,
            kind: OracleKind::RealSpectrum,
        },
        OracleEntry {
            quantity: "nonnegative attenuation rates".into(),
            provenance: Provenance::Paper,
            tolerance: 1e-9,
            kind: OracleKind::NonnegativeGamma,
        },
    ]
}

fn circle_samples(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let h = TAU / n as f64;
    (0..n).map(|i| f(i as f64 * h)).collect()
}

fn torus_samples(n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let h = TAU / n as f64;
    (0..n * n)
        .map(|v| f((v % n) as f64 * h, (v / n) as f64 * h))
        .collect()
}

impl ModelParams {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ConstantDriveCircle { .. } => "constant_drive_circle",
            Self::LangevinDoubleWellCircle { .. } => "langevin_double_well_circle",
            Self::TiltedLangevinCircle { .. } => "tilted_langevin_circle",
            Self::TorusShearModel { .. } => "torus_shear_model",
            Self::LangevinCosineCircle { .. } => "langevin_cosine_circle",
            Self::LangevinTorus { .. } => "langevin_torus",
            Self::FreeIcosphere { .. } => "free_icosphere",
        }
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            Self::ConstantDriveCircle { epsilon, .. }
            | Self::LangevinDoubleWellCircle { epsilon, .. }
            | Self::TiltedLangevinCircle { epsilon, .. }
            | Self::TorusShearModel { epsilon, .. }
            | Self::LangevinCosineCircle { epsilon, .. }
            | Self::LangevinTorus { epsilon, .. }
            | Self::FreeIcosphere { epsilon, .. } => epsilon,
        }
    }

    /// Same model at another noise intensity.
    pub fn with_epsilon(&self, eps: f64) -> Self {
        let mut p = self.clone();
        match &mut p {
            Self::ConstantDriveCircle { epsilon, .. }
            | Self::LangevinDoubleWellCircle { epsilon, .. }
            | Self::TiltedLangevinCircle { epsilon, .. }
            | Self::TorusShearModel { epsilon, .. }
            | Self::LangevinCosineCircle { epsilon, .. }
            | Self::LangevinTorus { epsilon, .. }
            | Self::FreeIcosphere { epsilon, .. } => *epsilon = eps,
        }
        p
    }

    /// Same model at another resolution (no-op for surfaces).
    pub fn with_resolution(&self, resolution: usize) -> Self {
        let mut p = self.clone();
        match &mut p {
            Self::ConstantDriveCircle { n, .. }
            | Self::LangevinDoubleWellCircle { n, .. }
            | Self::TiltedLangevinCircle { n, .. }
            | Self::TorusShearModel { n, .. }
            | Self::LangevinCosineCircle { n, .. }
            | Self::LangevinTorus { n, .. } => *n = resolution,
            Self::FreeIcosphere { .. } => {}
        }
        p
    }

    /// Closed-form superpotential, if any.
    pub fn superpotential_at(&self, x: &[f64]) -> Option<f64> {
        match *self {
            Self::LangevinDoubleWellCircle { depth, .. }
            | Self::TiltedLangevinCircle { depth, .. } => Some(depth * (2.0 * x[0]).cos()),
            Self::LangevinCosineCircle { depth, mode, .. } => {
                Some(depth * (mode as f64 * x[0]).cos())
            }
            Self::LangevinTorus { depth, .. } => Some(depth * (x[0].cos() + x[1].cos())),
            _ => None,
        }
    }

    /// Closed-form flow `A(x)` written into `out`; `false` on surfaces.
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match *self {
            Self::ConstantDriveCircle { a, .. } => out[0] = a,
            Self::LangevinDoubleWellCircle { depth, epsilon, .. } => {
                out[0] = -2.0 * epsilon * depth * (2.0 * x[0]).sin();
            }
            Self::TiltedLangevinCircle {
                depth,
                tilt,
                epsilon,
                ..
            } => {
                out[0] = -2.0 * epsilon * depth * (2.0 * x[0]).sin() + tilt;
            }
            Self::TorusShearModel { ax, ay, .. } => {
                out[0] = ax;
                out[1] = ay;
            }
            Self::LangevinCosineCircle {
                depth,
                mode,
                epsilon,
                ..
            } => {
                let m = mode as f64;
                out[0] = -epsilon * depth * m * (m * x[0]).sin();
            }
            Self::LangevinTorus { depth, epsilon, .. } => {
                out[0] = -epsilon * depth * x[0].sin();
                out[1] = -epsilon * depth * x[1].sin();
            }
            Self::FreeIcosphere { .. } => return false,
        }
        true
    }

    /// Closed-form flow `A(x)` (`None` on surfaces).
    pub fn drift_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.drift_into(x, &mut out).then_some(out)
    }

    /// Unnormalized closed-form stationary density, where one exists.
    pub fn stationary_density_at(&self, x: &[f64]) -> Option<f64> {
        match self {
            Self::ConstantDriveCircle { .. } | Self::TorusShearModel { .. } => Some(1.0),
            Self::TiltedLangevinCircle { tilt, .. } if *tilt != 0.0 => None,
            _ => self.superpotential_at(x).map(|w| (-2.0 * w).exp()),
        }
    }

    pub fn build(&self) -> Result<ModelSpec> {
        match *self {
            Self::ConstantDriveCircle { a, epsilon, n } => constant_drive_circle(a, epsilon, n),
            Self::LangevinDoubleWellCircle { depth, epsilon, n } => {
                langevin_double_well_circle(depth, epsilon, n)
            }
            Self::TiltedLangevinCircle {
                depth,
                tilt,
                epsilon,
                n,
            } => tilted_langevin_circle(depth, tilt, epsilon, n),
            Self::TorusShearModel { ax, ay, epsilon, n } => torus_shear_model(ax, ay, epsilon, n),
            Self::LangevinCosineCircle {
                depth,
                mode,
                epsilon,
                n,
            } => langevin_cosine_circle(depth, mode, epsilon, n),
            Self::LangevinTorus { depth, epsilon, n } => langevin_torus(depth, epsilon, n),
            Self::FreeIcosphere {
                subdivisions,
                epsilon,
            } => free_icosphere(subdivisions, epsilon),
        }
    }
}

/// Constant flow `a` on the circle; the exactly solvable model.
pub fn constant_drive_circle(a: f64, eps: f64, n: usize) -> Result<ModelSpec> {
    finite(&[a, eps])?;
    check_n(n, 8)?;
    let noise = check_eps(eps, false)?;
    let mesh = build_circle_grid(n, TAU)?;
    let flow = FlowField::constant(&mesh, &[a])?;
    let mut oracle = Vec::new();
    for backend in [Backend::Fourier, Backend::FiniteDifference] {
        let values = constant_flow_spectrum(&mesh, &[a], eps, backend)?;
        let (quantity, provenance) = match backend {
            Backend::Fourier => ("spectrum eps*k^2/2 - i*k*a", Provenance::Derived),
            Backend::FiniteDifference => (
                "spectrum from the circulant difference symbol",
                Provenance::Derived,
            ),
        };
        oracle.push(OracleEntry {
            quantity: quantity.into(),
            provenance,
            tolerance: 1e-10,
            kind: OracleKind::Spectrum { backend, values },
        });
    }
    if eps == 0.0 {
        oracle.push(OracleEntry {
            quantity: "purely imaginary deterministic spectrum".into(),
            provenance: Provenance::Paper,
            tolerance: 1e-12,
            kind: OracleKind::ImaginarySpectrum,
        });
    } else {
        oracle.push(OracleEntry {
            quantity: "Witten index".into(),
            provenance: Provenance::Paper,
            tolerance: 0.0,
            kind: OracleKind::WittenIndex(0),
        });
    }
    Ok(ModelSpec {
        name: "constant_drive_circle".into(),
        params: ModelParams::ConstantDriveCircle { a, epsilon: eps, n },
        mesh,
        flow,
        noise,
        superpotential: None,
        oracle,
    })
}

fn circle_gradient_model(
    params: ModelParams,
    w: Vec<f64>,
    drive: f64,
    eps: f64,
    n: usize,
    noise: NoiseSpec,
) -> Result<(MeshComplex, FlowField)> {
    let mesh = build_circle_grid(n, TAU)?;
    let flow = FlowField::new(
        &mesh,
        vec![vec![drive; n]],
        Some(Potential {
            values: w,
            scale: eps,
        }),
    )?;
    let _ = (params, noise);
    Ok((mesh, flow))
}

/// Gradient flow `A = ε W'` with `W = depth · cos 2φ`.
pub fn langevin_double_well_circle(depth: f64, eps: f64, n: usize) -> Result<ModelSpec> {
    finite(&[depth, eps])?;
    if !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "depth must be positive, got {depth}"
        )));
    }
    check_n(n, 8)?;
    let noise = check_eps(eps, true)?;
    let params = ModelParams::LangevinDoubleWellCircle {
        depth,
        epsilon: eps,
        n,
    };
    let w = circle_samples(n, |x| depth * (2.0 * x).cos());
    let (mesh, flow) = circle_gradient_model(params.clone(), w.clone(), 0.0, eps, n, noise)?;
    let oracle = gradient_oracles(&mesh, &w, 0, vec![1, 1]);
    Ok(ModelSpec {
        name: params.name().into(),
        params,
        mesh,
        flow,
        noise,
        superpotential: Some(w),
        oracle,
    })
}

/// Double well plus a constant non-gradient drive `tilt`.
pub fn tilted_langevin_circle(depth: f64, tilt: f64, eps: f64, n: usize) -> Result<ModelSpec> {
    finite(&[depth, tilt, eps])?;
    check_n(n, 8)?;
    let noise = check_eps(eps, true)?;
    let params = ModelParams::TiltedLangevinCircle {
        depth,
        tilt,
        epsilon: eps,
        n,
    };
    let w = circle_samples(n, |x| depth * (2.0 * x).cos());
    let (mesh, flow) = circle_gradient_model(params.clone(), w.clone(), tilt, eps, n, noise)?;
    let oracle = vec![
        OracleEntry {
            quantity: "conjugate-closed spectrum".into(),
            provenance: Provenance::Paper,
            tolerance: 1e-10,
            kind: OracleKind::ConjugateClosed,
        },
        OracleEntry {
            quantity: "nonnegative attenuation rates".into(),
            provenance: Provenance::Paper,
            tolerance: 1e-8,
            kind: OracleKind::NonnegativeGamma,
        },
        OracleEntry {
            quantity: "Witten index".into(),
            provenance: Provenance::Paper,
            tolerance: 0.0,
            kind: OracleKind::WittenIndex(0),
        },
    ];
    Ok(ModelSpec {
        name: params.name().into(),
        params,
        mesh,
        flow,
        noise,
        superpotential: Some(w),
        oracle,
    })
}

/// Constant flow `(ax, ay)` on the 2π × 2π torus with an `n × n` grid.
pub fn torus_shear_model(ax: f64, ay: f64, eps: f64, n: usize) -> Result<ModelSpec> {
    finite(&[ax, ay, eps])?;
    check_n(n, 4)?;
    let noise = check_eps(eps, false)?;
    let mesh = build_torus_grid(n, n, TAU, TAU)?;
    let flow = FlowField::constant(&mesh, &[ax, ay])?;
    let mut oracle = Vec::new();
    for backend in [Backend::Fourier, Backend::FiniteDifference] {
        oracle.push(OracleEntry {
            quantity: match backend {
                Backend::Fourier => "spectrum eps*|k|^2/2 - i*k.a, multiplicities 1-2-1".into(),
                Backend::FiniteDifference => {
                    "spectrum from the separable difference symbol, multiplicities 1-2-1".into()
                }
            },
            provenance: Provenance::Derived,
            tolerance: 1e-10,
            kind: OracleKind::Spectrum {
                backend,
                values: constant_flow_spectrum(&mesh, &[ax, ay], eps, backend)?,
            },
        });
    }
    if eps > 0.0 {
        oracle.push(OracleEntry {
            quantity: "zero modes per degree (Betti numbers)".into(),
            provenance: Provenance::Derived,
            tolerance: 0.0,
            kind: OracleKind::ZeroModes(vec![1, 2, 1]),
        });
        oracle.push(OracleEntry {
            quantity: "Witten index".into(),
            provenance: Provenance::Paper,
            tolerance: 0.0,
            kind: OracleKind::WittenIndex(0),
        });
    }
    Ok(ModelSpec {
        name: "torus_shear_model".into(),
        params: ModelParams::TorusShearModel {
            ax,
            ay,
            epsilon: eps,
            n,
        },
        mesh,
        flow,
        noise,
        superpotential: None,
        oracle,
    })
}

/// Gradient flow with `W = depth · cos(mode · φ)`.
///
/// `depth = −1/ε`, `mode = 1` gives the flow `A = sin φ` at every ε.
pub fn langevin_cosine_circle(depth: f64, mode: u32, eps: f64, n: usize) -> Result<ModelSpec> {
    finite(&[depth, eps])?;
    if mode == 0 {
        return Err(Error::InvalidArgument("mode must be at least 1".into()));
    }
    check_n(n, 8)?;
    let noise = check_eps(eps, true)?;
    let params = ModelParams::LangevinCosineCircle {
        depth,
        mode,
        epsilon: eps,
        n,
    };
    let w = circle_samples(n, |x| depth * (mode as f64 * x).cos());
    let (mesh, flow) = circle_gradient_model(params.clone(), w.clone(), 0.0, eps, n, noise)?;
    let oracle = gradient_oracles(&mesh, &w, 0, vec![1, 1]);
    Ok(ModelSpec {
        name: params.name().into(),
        params,
        mesh,
        flow,
        noise,
        superpotential: Some(w),
        oracle,
    })
}

/// Gradient flow on the torus with `W = depth · (cos x + cos y)`.
pub fn langevin_torus(depth: f64, eps: f64, n: usize) -> Result<ModelSpec> {
    finite(&[depth, eps])?;
    check_n(n, 4)?;
    let noise = check_eps(eps, true)?;
    let mesh = build_torus_grid(n, n, TAU, TAU)?;
    let w = torus_samples(n, |x, y| depth * (x.cos() + y.cos()));
    let flow = FlowField::langevin(&mesh, w.clone(), eps)?;
    let oracle = gradient_oracles(&mesh, &w, 0, vec![1, 2, 1]);
    Ok(ModelSpec {
        name: "langevin_torus".into(),
        params: ModelParams::LangevinTorus {
            depth,
            epsilon: eps,
            n,
        },
        mesh,
        flow,
        noise,
        superpotential: Some(w),
        oracle,
    })
}

/// Pure diffusion on an icosphere.
pub fn free_icosphere(subdivisions: usize, eps: f64) -> Result<ModelSpec> {
    finite(&[eps])?;
    if subdivisions > 4 {
        return Err(Error::InvalidResolution(format!(
            "at most 4 subdivisions supported, got {subdivisions}"
        )));
    }
    let noise = check_eps(eps, false)?;
    let (v, f) = icosphere(subdivisions);
    let mesh = build_triangulated_surface(&v, &f)?;
    let flow = FlowField::zero(&mesh);
    let oracle = vec![
        OracleEntry {
            quantity: "Witten index".into(),
            provenance: Provenance::Paper,
            tolerance: 0.0,
            kind: OracleKind::WittenIndex(2),
        },
        OracleEntry {
            quantity: "zero modes per degree (Betti numbers)".into(),
            provenance: Provenance::Derived,
            tolerance: 0.0,
            kind: OracleKind::ZeroModes(vec![1, 0, 1]),
        },
        OracleEntry {
            quantity: "real spectrum".into(),
            provenance: Provenance::Trivial,
            tolerance: 1e-9,
            kind: OracleKind::RealSpectrum,
        },
    ];
    Ok(ModelSpec {
        name: "free_icosphere".into(),
        params: ModelParams::FreeIcosphere {
            subdivisions,
            epsilon: eps,
        },
        mesh,
        flow,
        noise,
        superpotential: None,
        oracle,
    })
}

impl ModelSpec {
    /// Hamiltonian for ε > 0, or the noise-free generator `−L_A` at ε = 0.
    pub fn operator(&self, backend: Backend) -> Result<GradedOperator> {
        if self.noise.epsilon == 0.0 && !self.flow.is_zero() {
            deterministic_generator(&self.mesh, &self.flow, backend)
        } else {
            assemble_hamiltonian(&self.mesh, &self.flow, self.noise, backend)
        }
    }

    pub fn supports(&self, backend: Backend) -> bool {
        match backend {
            Backend::FiniteDifference => true,
            Backend::Fourier => {
                self.mesh.is_structured() && self.flow.constant_components().is_some()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCheck {
    pub quantity: String,
    pub provenance: Provenance,
    pub tolerance: f64,
    pub deviation: f64,
    pub passed: bool,
}

/// Largest relative deviation between two eigenvalue multisets of one degree.
///
/// Each target value is matched to the nearest unused computed value, targets taken in
/// order of increasing modulus.
pub fn multiset_deviation(target: &[c64], computed: &[c64]) -> f64 {
    if target.len() != computed.len() {
        return f64::INFINITY;
    }
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.sort_by(|&i, &j| target[i].norm().total_cmp(&target[j].norm()));
    let mut used = vec![false; computed.len()];
    let mut worst: f64 = 0.0;
    for i in order {
        let t = target[i];
        let (best, d) = computed
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, c)| (j, (c - t).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("equal lengths");
        used[best] = true;
        worst = worst.max(d / t.norm().max(1.0));
    }
    worst
}

/// Evaluates every applicable oracle entry against the computed spectrum.
pub fn check_model(
    model: &ModelSpec,
    backend: Backend,
) -> Result<(SpectrumReport, Vec<OracleCheck>)> {
    let op = model.operator(backend)?;
    let spec = full_spectrum(&op)?;
    let rho = spec.spectral_radius;
    let tau = spec.default_tolerance();
    let mut checks = Vec::new();
    for entry in &model.oracle {
        let deviation = match &entry.kind {
            OracleKind::Spectrum { backend: b, values } => {
                if *b != backend {
                    continue;
                }
                (0..=model.mesh.dimension())
                    .map(|k| {
                        let t: Vec<c64> = values.iter().filter(|v| v.0 == k).map(|v| v.1).collect();
                        multiset_deviation(&t, &spec.degree_values(k))
                    })
                    .fold(0.0, f64::max)
            }
            OracleKind::StationaryDensity(target) => {
                let top = model.mesh.dimension();
                let zero = spec
                    .entries
                    .iter()
                    .filter(|e| e.degree == top)
                    .min_by(|a, b| a.value.norm().total_cmp(&b.value.norm()))
                    .ok_or_else(|| Error::ErgodicZeroMissing("empty top-degree spectrum".into()))?;
                let star = &op.stars[top];
                let dens: Vec<c64> = zero.right.iter().zip(star).map(|(x, s)| x * *s).collect();
                let z: c64 = dens.iter().sum();
                dens.iter()
                    .zip(target)
                    .map(|(d, t)| ((d / z) - cr(*t)).norm() / t)
                    .fold(0.0, f64::max)
            }
            OracleKind::WittenIndex(chi) => (witten_index(&spec, tau)?.index - chi).abs() as f64,
            OracleKind::ZeroModes(b) => {
                let w = witten_index(&spec, tau)?;
                w.zero_modes
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (*x as i64 - *y as i64).abs())
                    .sum::<i64>() as f64
            }
            OracleKind::PoincareHopf(chi) => {
                let scan = find_critical_points(&model.mesh, &model.flow)?;
                (poincare_hopf_sum(&scan.points)? - chi).abs() as f64
            }
            OracleKind::RealSpectrum => {
                spec.entries.iter().fold(0.0f64, |m, e| m.max(e.e().abs())) / rho
            }
            OracleKind::ImaginarySpectrum => {
                spec.entries
                    .iter()
                    .fold(0.0f64, |m, e| m.max(e.gamma().abs()))
                    / rho
            }
            OracleKind::NonnegativeGamma => (-spec
                .entries
                .iter()
                .fold(f64::INFINITY, |m, e| m.min(e.gamma()))
                / rho)
                .max(0.0),
            OracleKind::ConjugateClosed => spec.conjugate_closure_residual(),
        };
        checks.push(OracleCheck {
            quantity: entry.quantity.clone(),
            provenance: entry.provenance,
            tolerance: entry.tolerance,
            deviation,
            passed: deviation <= entry.tolerance,
        });
    }
    Ok((spec, checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::spectral::{classify_phase, Verdict};

    fn assert_checks(model: &ModelSpec, backend: Backend) -> SpectrumReport {
        let (spec, checks) = check_model(model, backend).unwrap();
        assert!(!checks.is_empty());
        for c in &checks {
            assert!(
                c.passed,
                "{}: {} > {}",
                c.quantity, c.deviation, c.tolerance
            );
        }
        spec
    }

    #[test]
    fn every_model_round_trips() {
        let models = [
            constant_drive_circle(1.0, 0.2, 32).unwrap(),
            constant_drive_circle(1.0, 0.0, 16).unwrap(),
            langevin_double_well_circle(1.0, 0.2, 48).unwrap(),
            tilted_langevin_circle(1.0, 3.0, 0.2, 48).unwrap(),
            torus_shear_model(1.0, 2f64.sqrt(), 0.2, 8).unwrap(),
            langevin_cosine_circle(-1.0, 1, 1.0, 32).unwrap(),
            langevin_torus(1.0, 0.5, 8).unwrap(),
            free_icosphere(1, 1.0).unwrap(),
        ];
        for m in &models {
            assert_checks(m, Backend::FiniteDifference);
            if m.supports(Backend::Fourier) {
                assert_checks(m, Backend::Fourier);
            }
        }
    }

    #[test]
    fn toy_oracle_value() {
        let m = constant_drive_circle(1.0, 0.2, 64).unwrap();
        let values = match &m.oracle[0].kind {
            OracleKind::Spectrum { values, .. } => values.clone(),
            _ => unreachable!(),
        };
        // mode k = 1 sits in slot 1 of the modal ordering
        assert_eq!(values[2], (0, c64::new(0.1, -1.0)));
    }

    #[test]
    fn free_diffusion_spectrum_is_half_k_squared() {
        let m = constant_drive_circle(0.0, 1.0, 16).unwrap();
        let spec = assert_checks(&m, Backend::Fourier);
        let mut got: Vec<f64> = spec.degree_values(0).iter().map(|v| v.re).collect();
        got.sort_by(f64::total_cmp);
        let mut expect: Vec<f64> = (0..16)
            .map(|j| {
                let k = crate::exterior::wavenumber_index(j, 16) as f64;
                k * k / 2.0
            })
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn double_well_density_peaks_at_wells() {
        let m = langevin_double_well_circle(1.0, 0.2, 64).unwrap();
        let dens = m
            .oracle
            .iter()
            .find_map(|o| match &o.kind {
                OracleKind::StationaryDensity(d) => Some(d.clone()),
                _ => None,
            })
            .unwrap();
        let h = TAU / 64.0;
        let peaks: Vec<f64> = (0..64)
            .filter(|&e| dens[e] > dens[(e + 63) % 64] && dens[e] >= dens[(e + 1) % 64])
            .map(|e| (e as f64 + 0.5) * h)
            .collect();
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0] - std::f64::consts::FRAC_PI_2).abs() < h);
        assert!((peaks[1] - 3.0 * std::f64::consts::FRAC_PI_2).abs() < h);
        let (spec, _) = check_model(&m, Backend::FiniteDifference).unwrap();
        let tau = spec.default_tolerance();
        assert_eq!(
            classify_phase(&spec, tau, tau).unwrap().verdict,
            Verdict::UnbrokenMarkovian
        );
    }

    #[test]
    fn tilted_model_has_uncondensed_resonances() {
        let m = tilted_langevin_circle(1.0, 3.0, 0.2, 64).unwrap();
        let (spec, _) = check_model(&m, Backend::FiniteDifference).unwrap();
        let tau = spec.default_tolerance();
        assert!(spec
            .entries
            .iter()
            .any(|e| e.e().abs() > tau && e.gamma() > tau));
        assert_eq!(
            classify_phase(&spec, tau, tau).unwrap().verdict,
            Verdict::UnbrokenMarkovian
        );
    }

    #[test]
    fn tilted_model_limits() {
        let a = tilted_langevin_circle(1.0, 0.0, 0.2, 32)
            .unwrap()
            .operator(Backend::FiniteDifference)
            .unwrap();
        let b = langevin_double_well_circle(1.0, 0.2, 32)
            .unwrap()
            .operator(Backend::FiniteDifference)
            .unwrap();
        let c = tilted_langevin_circle(0.0, 1.5, 0.2, 32)
            .unwrap()
            .operator(Backend::FiniteDifference)
            .unwrap();
        let d = constant_drive_circle(1.5, 0.2, 32)
            .unwrap()
            .operator(Backend::FiniteDifference)
            .unwrap();
        for k in 0..2 {
            assert!(
                linalg::max_abs(&(&a.blocks[k] - &b.blocks[k]))
                    <= 1e-10 * linalg::max_abs(&b.blocks[k])
            );
            assert!(
                linalg::max_abs(&(&c.blocks[k] - &d.blocks[k]))
                    <= 1e-10 * linalg::max_abs(&d.blocks[k])
            );
        }
        let (sa, _) = check_model(
            &tilted_langevin_circle(1.0, 0.0, 0.2, 32).unwrap(),
            Backend::FiniteDifference,
        )
        .unwrap();
        let (sb, _) = check_model(
            &langevin_double_well_circle(1.0, 0.2, 32).unwrap(),
            Backend::FiniteDifference,
        )
        .unwrap();
        for k in 0..2 {
            assert!(multiset_deviation(&sb.degree_values(k), &sa.degree_values(k)) < 1e-10);
        }
    }

    #[test]
    fn torus_shear_example_values() {
        let m = torus_shear_model(1.0, 2f64.sqrt(), 0.2, 16).unwrap();
        let op = m.operator(Backend::Fourier).unwrap();
        // mode (1, 0) occupies slot 1 of the modal ordering
        assert!((op.blocks[0][(1, 1)] - c64::new(0.1, -1.0)).norm() < 1e-14);
        assert!((op.blocks[1][(1, 1)] - c64::new(0.1, -1.0)).norm() < 1e-14);
        let free = torus_shear_model(0.0, 0.0, 1.0, 8).unwrap();
        assert_checks(&free, Backend::FiniteDifference);
    }

    #[test]
    fn parameters_round_trip_through_json() {
        let p = ModelParams::TiltedLangevinCircle {
            depth: 1.0,
            tilt: 3.0,
            epsilon: 0.2,
            n: 64,
        };
        let s = serde_json_like(&p);
        assert!(s.contains("tilted_langevin_circle"));
        assert_eq!(p.with_epsilon(0.1).epsilon(), 0.1);
        assert!(matches!(
            constant_drive_circle(1.0, 0.2, 4),
            Err(Error::InvalidResolution(_))
        ));
        assert!(matches!(
            langevin_double_well_circle(1.0, 0.0, 32),
            Err(Error::InvalidNoise(_))
        ));
    }

    fn serde_json_like(p: &ModelParams) -> String {
        format!("{:?} {}", p, p.name())
    }
}
