//! Task execution and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use sqforms::exterior::{Backend, FlowField, Potential};
use sqforms::fokker_planck::{assemble_hamiltonian, deterministic_generator, GradedOperator};
use sqforms::mesh::{
    build_circle_grid, build_torus_grid, build_triangulated_surface, load_off_surface, MeshComplex,
    NoiseSpec,
};
use sqforms::models::{check_model, ModelSpec, OracleKind};
use sqforms::morse::{find_critical_points, instanton_splitting_scan, poincare_hopf_sum};
use sqforms::sim::{
    autocorrelation_decay, model_histogram, simulate_sde, stationary_histogram, FourierObservable,
    SimulationParams,
};
use sqforms::spectral::{
    classify_phase, full_spectrum, spectrum_csv, susy_pairing_check, witten_index, SpectrumReport,
    DEFAULT_CAPACITY,
};
use sqforms::sweep::sweep_epsilon;

use crate::config::{InlineMesh, InlineModel, ModelChoice, RunConfig, Task};
use crate::report::{to_stable_json, ReportDocument, TaskResult, Timing, Versions};
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const SCHEMA_VERSION: u32 = 1;

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
}

struct Resolved {
    name: String,
    mesh: MeshComplex,
    flow: FlowField,
    noise: NoiseSpec,
    library: Option<ModelSpec>,
}

impl Resolved {
    fn operator(&self, backend: Backend) -> sqforms::Result<GradedOperator> {
        if self.noise.epsilon == 0.0 && !self.flow.is_zero() {
            deterministic_generator(&self.mesh, &self.flow, backend)
        } else {
            assemble_hamiltonian(&self.mesh, &self.flow, self.noise, backend)
        }
    }
}

fn resolve(model: &ModelChoice) -> Result<Resolved, CliError> {
    match model {
        ModelChoice::Library(p) => {
            let spec = p.build()?;
            Ok(Resolved {
                name: spec.name.clone(),
                mesh: spec.mesh.clone(),
                flow: spec.flow.clone(),
                noise: spec.noise,
                library: Some(spec),
            })
        }
        ModelChoice::Inline { inline } => resolve_inline(inline),
    }
}

fn resolve_inline(m: &InlineModel) -> Result<Resolved, CliError> {
    let mesh = match &m.mesh {
        InlineMesh::Circle { n, length } => build_circle_grid(*n, *length)?,
        InlineMesh::Torus { nx, ny, lx, ly } => build_torus_grid(*nx, *ny, *lx, *ly)?,
        InlineMesh::Surface { vertices, faces } => build_triangulated_surface(vertices, faces)?,
        InlineMesh::Off { path } => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {path}: {e}")))?;
            load_off_surface(&text)?
        }
    };
    let noise = NoiseSpec::new(m.epsilon)?;
    let flow = if m.flow.drive.is_none() && m.flow.potential.is_none() {
        FlowField::zero(&mesh)
    } else {
        let nv = mesh.cell_count(0);
        let drive = m
            .flow
            .drive
            .clone()
            .unwrap_or_else(|| vec![vec![0.0; nv]; mesh.dimension()]);
        let potential = m.flow.potential.as_ref().map(|p| Potential {
            values: p.values.clone(),
            scale: p.scale,
        });
        FlowField::new(&mesh, drive, potential)?
    };
    Ok(Resolved {
        name: "inline".into(),
        mesh,
        flow,
        noise,
        library: None,
    })
}

struct Context<'a> {
    cfg: &'a RunConfig,
    model: Resolved,
    backend: Backend,
    out: PathBuf,
    spectrum: Option<SpectrumReport>,
    operator_info: Option<Value>,
    warnings: Vec<String>,
}

impl Context<'_> {
    fn spectrum(&mut self) -> Result<&SpectrumReport, CliError> {
        if self.spectrum.is_none() {
            let sizes = self.model.mesh.cell_counts();
            let total: usize = sizes.iter().sum();
            if total > DEFAULT_CAPACITY {
                return Err(sqforms::Error::Capacity(format!(
                    "{total} unknowns exceed the dense-solver cap of {DEFAULT_CAPACITY} (block sizes {sizes:?})"
                ))
                .into());
            }
            let op = self.model.operator(self.backend)?;
            self.operator_info = Some(json!({
                "block_sizes": op.blocks.iter().map(|b| b.nrows()).collect::<Vec<_>>(),
                "deterministic_limit": op.deterministic_limit,
                "consistency_residual": op.consistency_residual,
                "intertwining_residual": op.intertwining_residual,
            }));
            self.spectrum = Some(full_spectrum(&op)?);
        }
        Ok(self.spectrum.as_ref().expect("computed above"))
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<String, CliError> {
        fs::write(self.out.join(name), contents).map_err(|e| {
            CliError::Io(format!(
                "cannot write {}: {e}",
                self.out.join(name).display()
            ))
        })?;
        Ok(name.to_string())
    }
}

fn task_name(t: Task) -> String {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn entry_json(spec: &SpectrumReport, limit: usize) -> Vec<Value> {
    spec.entries
        .iter()
        .take(limit)
        .map(|e| json!({"degree": e.degree, "gamma": e.gamma(), "e": e.e()}))
        .collect()
}

fn run_spectrum(ctx: &mut Context) -> Result<(Value, Vec<String>), CliError> {
    let pairing_tol = ctx.cfg.tolerances.pairing;
    let tau_gamma = ctx.cfg.tolerances.tau_gamma;
    let backend = ctx.backend;
    let spec = ctx.spectrum()?.clone();
    let pairing = susy_pairing_check(&spec, pairing_tol);
    let csv = spectrum_csv(&spec, Some(&pairing), tau_gamma * spec.spectral_radius);
    let file = ctx.write("spectrum.csv", csv.as_bytes())?;
    let oracle = match &ctx.model.library {
        Some(m) => Some(check_model(m, backend)?.1),
        None => None,
    };
    if let Some(checks) = &oracle {
        for c in checks.iter().filter(|c| !c.passed) {
            ctx.warnings.push(format!(
                "oracle `{}` deviates by {:.3e} (tolerance {:.1e})",
                c.quantity, c.deviation, c.tolerance
            ));
        }
    }
    let result = json!({
        "operator": ctx.operator_info,
        "total_size": spec.entries.len(),
        "spectral_radius": spec.spectral_radius,
        "biorthonormality_residual": spec.biorthonormality_residual,
        "conjugate_closure_residual": spec.conjugate_closure_residual(),
        "pairing": {
            "pairs": pairing.pairs.len(),
            "unpaired": pairing.unpaired,
            "max_mismatch": pairing.max_mismatch,
            "tolerance": pairing.tolerance,
        },
        "lowest": entry_json(&spec, 16),
        "oracle_checks": oracle,
    });
    Ok((result, vec![file]))
}

fn run_classify(ctx: &mut Context) -> Result<(Value, Vec<String>), CliError> {
    let t = ctx.cfg.tolerances;
    let spec = ctx.spectrum()?;
    let rho = spec.spectral_radius;
    let c = classify_phase(spec, t.tau_gamma * rho, t.tau_e * rho)?;
    Ok((serde_json::to_value(c).expect("serializable"), vec![]))
}

fn run_witten(ctx: &mut Context) -> Result<(Value, Vec<String>), CliError> {
    let t = ctx.cfg.tolerances;
    let spec = ctx.spectrum()?;
    let w = witten_index(spec, t.tau0 * spec.spectral_radius)?;
    let chi = ctx.model.mesh.euler_characteristic();
    if let Some(msg) = &w.gap_warning {
        ctx.warnings.push(msg.clone());
    }
    let mut v = serde_json::to_value(&w).expect("serializable");
    v["euler_characteristic"] = json!(chi);
    v["matches_euler_characteristic"] = json!(w.index == chi);
    Ok((v, vec![]))
}

fn run_stationary(ctx: &mut Context) -> Result<(Value, Vec<String>), CliError> {
    let t = ctx.cfg.tolerances;
    let top = ctx.model.mesh.dimension();
    let op_stars = ctx.model.operator(ctx.backend)?.stars;
    let spec = ctx.spectrum()?.clone();
    let tau0 = t.tau0 * spec.spectral_radius;
    let zero = spec
        .entries
        .iter()
        .filter(|e| e.degree == top && e.value.norm() <= tau0)
        .min_by(|a, b| a.value.norm().total_cmp(&b.value.norm()))
        .ok_or_else(|| {
            CliError::from(sqforms::Error::ErgodicZeroMissing(format!(
                "no top-degree eigenvalue within {tau0:.3e} of zero"
            )))
        })?;
    let raw: Vec<_> = zero
        .right
        .iter()
        .zip(&op_stars[top])
        .map(|(x, s)| x * *s)
        .collect();
    let total: sqforms::linalg::c64 = raw.iter().sum();
    let density: Vec<f64> = raw.iter().map(|x| (x / total).re).collect();
    let imaginary = raw.iter().map(|x| (x / total).im.abs()).fold(0.0, f64::max);
    let oracle: Option<Vec<f64>> = ctx.model.library.as_ref().and_then(|m| {
        m.oracle.iter().find_map(|o| match &o.kind {
            OracleKind::StationaryDensity(d) => Some(d.clone()),
            _ => None,
        })
    });
    let mut csv = String::from("cell,density,oracle\n");
    for (i, d) in density.iter().enumerate() {
        let o = oracle
            .as_ref()
            .map_or(String::new(), |o| format!("{:.12e}", o[i]));
        let _ = writeln!(csv, "{i},{d:.12e},{o}");
    }
    let file = ctx.write("stationary.csv", csv.as_bytes())?;
    let deviation = oracle.as_ref().map(|o| {
        density
            .iter()
            .zip(o)
            .map(|(d, t)| (d - t).abs() / t)
            .fold(0.0, f64::max)
    });
    let result = json!({
        "eigenvalue": {"gamma": zero.gamma(), "e": zero.e()},
        "cells": density.len(),
        "min_density": density.iter().cloned().fold(f64::INFINITY, f64::min),
        "max_density": density.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "max_imaginary_part": imaginary,
        "max_relative_deviation_from_oracle": deviation,
    });
    Ok((result, vec![file]))
}

fn run_morse(ctx: &mut Context) -> Result<(Value, Vec<String>), CliError> {
    let scan = find_critical_points(&ctx.model.mesh, &ctx.model.flow)?;
    ctx.warnings.extend(scan.warnings.iter().cloned());
    let sum = poincare_hopf_sum(&scan.points);
    let mut csv = String::from("x,y,index,sign,hyperbolic,eig0_re,eig0_im,eig1_re,eig1_im\n");
    for p in &scan.points {
        let e = |i: usize, j: usize| {
            p.eigenvalues
                .get(i)
                .map_or(String::new(), |v| format!("{:.12e}", v[j]))
        };
        let _ = writeln!(
            csv,
            "{:.12e},{},{},{},{},{},{},{},{}",
            p.location[0],
            p.location
                .get(1)
                .map_or(String::new(), |y| format!("{y:.12e}")),
            p.index,
            p.sign,
            p.hyperbolic,
            e(0, 0),
            e(0, 1),
            e(1, 0),
            e(1, 1)
        );
    }
    let file = ctx.write("critical_points.csv", csv.as_bytes())?;
    let instanton = match (
        ctx.cfg
            .morse
            .as_ref()
            .and_then(|m| m.instanton_epsilons.clone()),
        &ctx.model.library,
    ) {
        (Some(eps), Some(m)) => {
            let params = m.params.clone();
            let scan = instanton_splitting_scan(
                |e| {
                    let s = params.with_epsilon(e).build()?;
                    Ok((s.mesh, s.flow))
                },
                &eps,
            )?;
            Some(serde_json::to_value(scan).expect("serializable"))
        }
        (Some(_), None) => {
            return Err(CliError::Validation(
                "instanton scans need a library model".into(),
            ))
        }
        _ => None,
    };
    let result = json!({
        "points": scan.points,
        "poincare_hopf_sum": sum.as_ref().ok(),
        "poincare_hopf_error": sum.as_ref().err().map(|e| e.to_string()),
        "euler_characteristic": ctx.model.mesh.euler_characteristic(),
        "instanton": instanton,
    });
    Ok((result, vec![file]))
}

fn write_f64s(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn run_simulate(ctx: &mut Context) -> Result<(Value, Vec<String>), CliError> {
    let sc = ctx.cfg.simulation.expect("validated");
    let model = ctx.model.library.clone().expect("validated");
    let params = SimulationParams {
        dt: sc.dt,
        steps: sc.steps,
        n_paths: sc.n_paths,
        seed: sc.seed,
        record_every: sc.record_every,
    };
    let ens = simulate_sde(&model, params)?;
    ctx.warnings.extend(ens.warnings.iter().cloned());
    let mut files = Vec::new();
    let probe = vec![0.0; ens.dimension()];
    let closed_form = model.params.stationary_density_at(&probe).is_some();
    let hist = if closed_form {
        model_histogram(&model, &ens, sc.bins)
    } else {
        stationary_histogram(&ens, sc.bins, |_| 1.0)
    };
    let histogram = match hist {
        Ok(h) => {
            files.push(ctx.write("histogram.csv", h.to_csv().as_bytes())?);
            json!({
                "reference": if closed_form { "closed_form_density" } else { "uniform" },
                "bins": h.bins,
                "samples": h.samples,
                "tv_distance": h.tv_distance,
            })
        }
        Err(e) => {
            ctx.warnings.push(format!("histogram skipped: {e}"));
            json!({"error": e.to_string()})
        }
    };
    let decay =
        match autocorrelation_decay(&ens, FourierObservable::default(), sc.min_lag, sc.max_lag) {
            Ok(fit) => {
                let mut csv = String::from("lag,magnitude,stderr\n");
                for ((t, m), s) in fit.lags.iter().zip(&fit.magnitude).zip(&fit.stderr) {
                    let _ = writeln!(csv, "{t:.12e},{m:.12e},{s:.12e}");
                }
                files.push(ctx.write("autocorrelation.csv", csv.as_bytes())?);
                json!({
                    "rate": fit.rate,
                    "rate_stderr": fit.rate_stderr,
                    "phase_slope": fit.phase_slope,
                    "frequency": fit.frequency,
                    "window": fit.window,
                    "points": fit.points,
                })
            }
            Err(e) => {
                ctx.warnings
                    .push(format!("autocorrelation fit skipped: {e}"));
                json!({"error": e.to_string()})
            }
        };
    if sc.dump_paths {
        let n = ens.params.n_paths;
        files.push(ctx.write("paths.bin", &write_f64s(ens.positions.iter().copied()))?);
        files.push(
            ctx.write(
                "windings.bin",
                &ens.windings
                    .iter()
                    .flat_map(|w| w.to_le_bytes())
                    .collect::<Vec<u8>>(),
            )?,
        );
        let sidecar = json!({
            "positions": {"file": "paths.bin", "dtype": "float64", "byte_order": "little"},
            "windings": {"file": "windings.bin", "dtype": "int32", "byte_order": "little"},
            "shape": [n, ens.records, ens.dimension()],
            "order": "path, record, coordinate (row-major)",
            "periods": ens.periods,
            "record_interval": ens.params.dt * ens.params.record_every as f64,
        });
        files.push(ctx.write(
            "paths.json",
            to_stable_json(&sidecar).expect("serializable").as_bytes(),
        )?);
    }
    let result = json!({
        "params": params,
        "records_per_path": ens.records,
        "mean_velocity": ens.mean_velocity(),
        "histogram": histogram,
        "autocorrelation": decay,
    });
    Ok((result, files))
}

fn run_sweep(ctx: &mut Context) -> Result<(Value, Vec<String>), CliError> {
    let eps = ctx.cfg.sweep.as_ref().expect("validated").epsilons.clone();
    let ModelChoice::Library(params) = ctx.cfg.effective_model() else {
        return Err(CliError::Validation(
            "task `sweep` needs a library model".into(),
        ));
    };
    let r = sweep_epsilon(&params, &eps, ctx.backend)?;
    let mut csv = String::from("epsilon,ratio,gamma,e,verdict\n");
    for row in &r.rows {
        let (g, e) = row.low_mode.map_or((String::new(), String::new()), |m| {
            (format!("{:.12e}", m.1), format!("{:.12e}", m.2))
        });
        let verdict = serde_json::to_value(row.verdict)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let ratio = row.ratio.map_or("inf".to_string(), |x| format!("{x:.12e}"));
        let _ = writeln!(csv, "{:.12e},{ratio},{g},{e},{verdict}", row.epsilon);
    }
    let file = ctx.write("sweep.csv", csv.as_bytes())?;
    let mut v = serde_json::to_value(&r).expect("serializable");
    if r.rows.iter().all(|row| row.ratio.is_none()) {
        v["summary"] = json!("no condensation");
    }
    Ok((v, vec![file]))
}

/// Executes every task in order and writes `report.json`, `timings.json` and the task files.
pub fn run(
    mut cfg: RunConfig,
    overrides: &Overrides,
) -> Result<(ReportDocument, PathBuf), CliError> {
    if let Some(b) = overrides.backend {
        cfg.backend = b;
    }
    if let (Some(seed), Some(sim)) = (overrides.seed, cfg.simulation.as_mut()) {
        sim.seed = seed;
    }
    cfg.validate()?;
    let out = overrides
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sqforms-out"));
    let model = resolve(&cfg.effective_model())?;
    if cfg.backend == Backend::Fourier
        && !(model.mesh.is_structured() && model.flow.constant_components().is_some())
    {
        return Err(CliError::Validation(format!(
            "the Fourier backend needs a structured grid and a constant flow; `{}` has neither",
            model.name
        )));
    }
    fs::create_dir_all(&out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    let mut ctx = Context {
        cfg: &cfg,
        model,
        backend: cfg.backend,
        out: out.clone(),
        spectrum: None,
        operator_info: None,
        warnings: Vec::new(),
    };
    let mut results = Vec::new();
    let mut timings = Vec::new();
    let start = Instant::now();
    for &task in &cfg.tasks {
        let t0 = Instant::now();
        let (result, files) = match task {
            Task::Spectrum => run_spectrum(&mut ctx),
            Task::Classify => run_classify(&mut ctx),
            Task::Witten => run_witten(&mut ctx),
            Task::Stationary => run_stationary(&mut ctx),
            Task::Morse => run_morse(&mut ctx),
            Task::Simulate => run_simulate(&mut ctx),
            Task::Sweep => run_sweep(&mut ctx),
        }?;
        timings.push(Timing {
            task: task_name(task),
            seconds: t0.elapsed().as_secs_f64(),
        });
        results.push(TaskResult {
            task: task_name(task),
            result,
            files,
        });
    }
    let report = ReportDocument {
        schema_version: SCHEMA_VERSION,
        versions: Versions {
            cli: env!("CARGO_PKG_VERSION"),
            library: sqforms::VERSION,
        },
        config: serde_json::to_value(&cfg).expect("serializable"),
        results,
        warnings: std::mem::take(&mut ctx.warnings),
        timings_file: TIMINGS_FILE.into(),
    };
    let text = to_stable_json(&report).map_err(|e| CliError::Io(e.to_string()))?;
    ctx.write(REPORT_FILE, text.as_bytes())?;
    let timing_doc = json!({"tasks": timings, "total_seconds": start.elapsed().as_secs_f64()});
    ctx.write(
        TIMINGS_FILE,
        to_stable_json(&timing_doc)
            .expect("serializable")
            .as_bytes(),
    )?;
    Ok((report, out))
}

/// Reads, validates and runs a configuration file.
pub fn run_file(path: &Path, overrides: &Overrides) -> Result<(ReportDocument, PathBuf), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let cfg = RunConfig::from_json(&text)?;
    run(cfg, overrides)
}
