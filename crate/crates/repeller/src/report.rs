//! Subcommand bodies and result serialization.

use std::io::Write;
use std::path::Path;

use repeller_core::boxcount::{backward_orbit, box_dimension, default_radii};
use repeller_core::components::{decompose, two_cantor_cloud};
use repeller_core::geometry::DomainConstants;
use repeller_core::maps::DEFAULT_SUP_GRID;
use repeller_core::random::{parameter_sweep, random_dimension, SweepAxis};
use repeller_core::solver::{dimension_bounds, solve_dimension, EnsembleStats};
use repeller_core::transfer::{Grid, SequenceOperator};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Format, MapBlock, MapSpec, RunConfig};
use crate::{Command, RunError, SCHEMA_VERSION};

/// Trials and steps of the contraction fit reported by `pressure`.
const ETA_TRIALS: usize = 4;
const ETA_STEPS: usize = 40;

/// Grid for the expansion and area checks of `diagnose`.
const CHECK_GRID: (usize, usize) = (64, 64);

/// A finished computation: the JSON result and, where the command has one,
/// its CSV table.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub json: Value,
    pub table: Option<Table>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, RunError> {
    match command {
        Command::Pressure => pressure(cfg),
        Command::Dimension => dimension(cfg),
        Command::RandomDim => random_dim(cfg),
        Command::Sweep => sweep(cfg),
        Command::Boxdim => boxdim(cfg),
        Command::Components => components(cfg),
        Command::Diagnose => diagnose(cfg),
    }
}

fn pressure(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let maps = cfg.maps()?;
    let (_, k) = cfg.domains()?;
    let solver = cfg.solver()?;
    let s = cfg.numeric.s;
    let op = SequenceOperator::new(&maps, Grid::new(k, cfg.shape()?)?)?;
    let est = op.pressure_estimate(s, solver.n, solver.cocycle_steps, solver.burn_in)?;
    let seed = cfg.ensemble.as_ref().map_or(0, |e| e.seed);
    let eta = op.contraction_rate(s, ETA_TRIALS, ETA_STEPS, seed)?;
    let trace = op.normalized_iterate(s, &op.one(), op.grid().anchor(), solver.cocycle_steps)?;

    #[derive(Serialize)]
    struct Row {
        step: usize,
        m_k_log: f64,
        #[serde(rename = "M_k_log")]
        big_m_k_log: f64,
        log_p_k: f64,
        clamped_points: usize,
    }
    let rows: Vec<Row> = trace
        .bounds
        .iter()
        .zip(&trace.log_p)
        .enumerate()
        .map(|(i, (b, p))| Row {
            step: i + 1,
            m_k_log: b.log_min,
            big_m_k_log: b.log_max,
            log_p_k: *p,
            clamped_points: op.clamped_points(),
        })
        .collect();
    let table = Table {
        header: vec!["step", "m_k_log", "M_k_log", "log_p_k", "clamped_points"],
        rows: rows
            .iter()
            .map(|r| vec![r.step.to_string(), num(r.m_k_log), num(r.big_m_k_log), num(r.log_p_k), r.clamped_points.to_string()])
            .collect(),
    };
    Ok(Outcome {
        json: json!({
            "s": s,
            "n": est.n,
            "lower": est.lower,
            "upper": est.upper,
            "cocycle": est.cocycle,
            "eta_fit": eta,
            "clamped_points": op.clamped_points(),
            "trace": rows,
        }),
        table: Some(table),
    })
}

fn dimension(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let maps = cfg.maps()?;
    let (_, k) = cfg.domains()?;
    let shape = cfg.shape()?;
    let r = solve_dimension(&maps, &k, shape, &cfg.solver()?)?;
    let table = Table {
        header: vec!["s_crit", "s_lower", "s_upper", "n", "grid_radial", "grid_angular", "bracket_width_at_root"],
        rows: vec![vec![
            num(r.s_crit),
            num(r.s_lower),
            num(r.s_upper),
            r.n_used.to_string(),
            shape.n_radial.to_string(),
            shape.n_angular.to_string(),
            num(r.diagnostics.bracket_width_at_root),
        ]],
    };
    Ok(Outcome {
        json: json!({
            "s_crit": r.s_crit,
            "s_lower": r.s_lower,
            "s_upper": r.s_upper,
            "n": r.n_used,
            "grid": [shape.n_radial, shape.n_angular],
            "diagnostics": {
                "bracket_width_at_root": r.diagnostics.bracket_width_at_root,
                "eta_fit": r.diagnostics.eta_fit,
                "clamped_points": r.diagnostics.clamped_points,
            },
        }),
        table: Some(table),
    })
}

const ENSEMBLE_HEADER: [&str; 5] = ["axis_value", "d", "std_err", "s_lower", "s_upper"];

fn random_dim(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let spec = cfg.ensemble()?;
    let shape = cfg.shape()?;
    let d = random_dimension(&spec, shape, cfg.numeric.tol)?;
    let r = &d.result;
    Ok(Outcome {
        json: json!({
            "d": r.s_crit,
            "std_err": d.std_error,
            "s_lower": r.s_lower,
            "s_upper": r.s_upper,
            "bounds": [d.bounds.0, d.bounds.1],
            "per_replica": d.per_replica,
            "seq_len": spec.seq_len,
            "grid": [shape.n_radial, shape.n_angular],
            "bracket_width_at_root": r.diagnostics.bracket_width_at_root,
        }),
        table: Some(Table {
            header: ENSEMBLE_HEADER.to_vec(),
            rows: vec![vec![String::new(), num(r.s_crit), num(d.std_error), num(r.s_lower), num(r.s_upper)]],
        }),
    })
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let base = cfg.ensemble()?;
    let (axis, values) = cfg.sweep_axis()?;
    let result = parameter_sweep(&base, axis, &values, cfg.shape()?, cfg.numeric.tol)?;
    let axis_name = match axis {
        SweepAxis::AModulus => "a_modulus",
        SweepAxis::R => "r",
        SweepAxis::Lambda => "lambda",
    };
    let samples: Vec<Value> = result
        .samples
        .iter()
        .map(|s| {
            json!({
                "axis_value": s.value,
                "d": s.d,
                "std_err": s.std_error,
                "s_lower": s.s_lower,
                "s_upper": s.s_upper,
                "bracket_width": s.bracket_width,
            })
        })
        .collect();
    Ok(Outcome {
        json: json!({
            "axis": axis_name,
            "samples": samples,
            "fit_residual": result.fit_residual,
            "pooled_std_err": result.pooled_std_error,
        }),
        table: Some(Table {
            header: ENSEMBLE_HEADER.to_vec(),
            rows: result
                .samples
                .iter()
                .map(|s| vec![num(s.value), num(s.d), num(s.std_error), num(s.s_lower), num(s.s_upper)])
                .collect(),
        }),
    })
}

fn single_map(cfg: &RunConfig) -> Result<(repeller_core::MapDescriptor, bool), RunError> {
    let maps = cfg.maps()?;
    let fixture = matches!(cfg.map, Some(MapBlock::One(MapSpec::TwoCantor)));
    if maps.len() != 1 {
        return Err(RunError::Config("this subcommand takes a single map".into()));
    }
    Ok((maps.into_iter().next().unwrap(), fixture))
}

fn cloud(cfg: &RunConfig) -> Result<(repeller_core::boxcount::PointCloud, Vec<repeller_core::MapDescriptor>), RunError> {
    let maps = cfg.maps()?;
    let (_, k) = cfg.domains()?;
    if matches!(cfg.map, Some(MapBlock::One(MapSpec::TwoCantor))) {
        return Ok((two_cantor_cloud(&maps[0], &k)?, maps));
    }
    let c = backward_orbit(&maps, &k, cfg.base_point(), cfg.numeric.depth, cfg.numeric.cap)?;
    Ok((c, maps))
}

fn boxdim(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let (cloud, _) = cloud(cfg)?;
    if cloud.capped {
        eprintln!("warning: CapExceeded: generations were subsampled to {} points", cfg.numeric.cap);
    }
    let radii = cfg.numeric.radii.clone().unwrap_or_else(|| default_radii(&cloud));
    let b = box_dimension(&cloud, &radii)?;
    let rows: Vec<Value> = (0..b.radii.len())
        .map(|i| json!({"r": b.radii[i], "N_r": b.counts[i], "running_slope": (i > 0).then(|| b.running_slope[i])}))
        .collect();
    Ok(Outcome {
        json: json!({
            "slope": b.slope,
            "upper": b.upper,
            "lower": b.lower,
            "points": cloud.len(),
            "depth": cloud.generation_depth,
            "capped": cloud.capped,
            "rows": rows,
        }),
        table: Some(Table {
            header: vec!["r", "N_r", "running_slope"],
            rows: (0..b.radii.len())
                .map(|i| {
                    let running = if i == 0 { String::new() } else { num(b.running_slope[i]) };
                    vec![num(b.radii[i]), num(b.counts[i]), running]
                })
                .collect(),
        }),
    })
}

fn components(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let (map, _) = single_map(cfg)?;
    let (_, k) = cfg.domains()?;
    let (cloud, _) = cloud(cfg)?;
    let d = decompose(&cloud, &map, &k, cfg.numeric.delta)?;
    let critical = d.critical_class(cfg.numeric.n, cfg.numeric.tol)?;
    if d.markov_violations > 0 {
        eprintln!("warning: {} cloud points violate the covering property", d.markov_violations);
    }
    let comps: Vec<Value> = d
        .components
        .iter()
        .enumerate()
        .map(|(i, pts)| json!({"id": i, "size": pts.len(), "class": d.class_of[i]}))
        .collect();
    Ok(Outcome {
        json: json!({
            "delta": d.delta,
            "points": cloud.len(),
            "components": comps,
            "classes": d.classes,
            "condensation_edges": d.order,
            "class_s_crit": critical.roots,
            "selected_class": critical.class,
            "s_crit": critical.s_crit,
            "invariant_points": critical.invariant_points.len(),
            "markov_violations": d.markov_violations,
            "unmatched_images": d.unmatched_images,
        }),
        table: None,
    })
}

fn diagnose(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let (u, k) = cfg.domains()?;
    let c = DomainConstants::new(&u, &k)?;
    let mut checks = vec![
        check("tanh(delta_big/2) = alpha/7", (c.delta_big / 2.0).tanh(), c.alpha / 7.0, 1e-12),
        check("tanh(delta_prime/2) = alpha/2", (c.delta_prime / 2.0).tanh(), c.alpha / 2.0, 1e-12),
        check("epsilon_ell(delta_big) = 6 log(7/6)", c.epsilon_ell(c.delta_big)?, 6.0 * (7.0f64 / 6.0).ln(), 1e-12),
    ];
    checks.push(json!({"name": "beta > 1", "value": c.beta, "ok": c.beta > 1.0}));
    if cfg.map.is_some() {
        for (i, map) in cfg.maps()?.iter().enumerate() {
            let range = map.derivative_range(&k, CHECK_GRID)?;
            checks.push(json!({
                "name": format!("map {i}: inf Df >= beta"),
                "value": range.min_derivative,
                "expected": c.beta,
                "ok": range.min_derivative >= c.beta,
            }));
            checks.push(json!({
                "name": format!("map {i}: degree <= (sup Df)^2"),
                "value": map.degree(),
                "expected": range.max_derivative * range.max_derivative,
                "ok": map.degree_area_check(&k, CHECK_GRID)?,
            }));
        }
        if cfg.maps()?.len() == 1 {
            let stats = EnsembleStats::from_maps(&cfg.maps()?, &k, DEFAULT_SUP_GRID)?;
            if let Ok((lo, hi)) = dimension_bounds(&stats) {
                checks.push(json!({"name": "a-priori dimension bounds", "value": [lo, hi], "ok": lo <= hi}));
            }
        }
    }
    Ok(Outcome {
        json: json!({
            "rho": u.rho(),
            "rho_K": k.rho(),
            "ell": c.ell,
            "alpha": c.alpha,
            "delta_big": c.delta_big,
            "delta_prime": c.delta_prime,
            "beta": c.beta,
            "diam_K": c.diam_k,
            "n0": c.mixing_steps(),
            "checks": checks,
        }),
        table: None,
    })
}

fn check(name: &str, value: f64, expected: f64, tol: f64) -> Value {
    json!({"name": name, "value": value, "expected": expected, "ok": (value - expected).abs() <= tol})
}

/// The output document: a header echoing the resolved config, then the result.
pub fn render(command: Command, cfg: &RunConfig, outcome: &Outcome, format: Format) -> Result<String, RunError> {
    let version = concat!("repeller ", env!("CARGO_PKG_VERSION"));
    let config = serde_json::to_value(cfg).map_err(|e| RunError::Io(e.to_string()))?;
    match format {
        Format::Json => {
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "version": version,
                "command": command.name(),
                "config": config,
                "result": outcome.json,
            });
            let mut text = serde_json::to_string_pretty(&doc).map_err(|e| RunError::Io(e.to_string()))?;
            text.push('\n');
            Ok(text)
        }
        Format::Csv => {
            let table = outcome
                .table
                .as_ref()
                .ok_or_else(|| RunError::Config(format!("{} has no CSV output; use --format json", command.name())))?;
            let mut out = format!(
                "# schema_version={SCHEMA_VERSION}\n# version={version}\n# command={}\n# config={}\n",
                command.name(),
                config
            );
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&table.header).map_err(|e| RunError::Io(e.to_string()))?;
            for row in &table.rows {
                w.write_record(row).map_err(|e| RunError::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
            out.push_str(&String::from_utf8_lossy(&bytes));
            Ok(out)
        }
    }
}

/// Writes `text` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, text: &str) -> Result<(), RunError> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
