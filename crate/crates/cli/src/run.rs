//! Subcommand implementations and run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use glassecho::echo::three_pulse_intensity;
use glassecho::{
    effective_linewidth, fit_3ppe_diffusion, fit_exponential_decay, fit_linewidth_surface, mc_echo_2ppe,
    simulate_2ppe_exponential, simulate_2ppe_integral, simulate_3ppe, EchoTrace, Environment, FitResult,
    LinewidthPoint, ModelParams, ParamName, SurfaceBounds, ThreePulseConfig, ThreePulseParam,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{GridSection, RunConfig, Spacing};
use crate::error::{config_err, data_err, CliError, CliResult};
use crate::table::{read_table, write_table, Table};
use crate::units::{Dimension, Quantity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum SimKind {
    /// Single exponential with the homogeneous linewidth.
    #[value(name = "2ppe-exp")]
    #[serde(rename = "2ppe-exp")]
    TwoPulseExp,
    /// Two-pulse echo averaged over the TLS rate/energy distribution.
    #[value(name = "2ppe-integral")]
    #[serde(rename = "2ppe-integral")]
    TwoPulseIntegral,
    /// Three-pulse echo with logarithmic spectral diffusion.
    #[value(name = "3ppe")]
    #[serde(rename = "3ppe")]
    ThreePulse,
    /// Monte-Carlo telegraph-noise ensemble.
    #[value(name = "mc")]
    #[serde(rename = "mc")]
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// Single exponential on a two-pulse trace.
    Decay,
    /// Linewidth model on a (field, temperature, linewidth) grid.
    Surface,
    /// Logarithmic spectral diffusion on a three-pulse trace.
    #[value(name = "3ppe")]
    #[serde(rename = "3ppe")]
    ThreePulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    #[value(name = "linewidth-vs-field", alias = "field")]
    LinewidthVsField,
    #[value(name = "linewidth-vs-temperature", alias = "temperature")]
    LinewidthVsTemperature,
    /// Field × temperature grid in the layout `fit surface` reads.
    #[value(name = "linewidth-surface", alias = "surface")]
    LinewidthSurface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", content = "kind", rename_all = "lowercase")]
pub enum Task {
    Simulate(SimKind),
    Fit(FitKind),
    Sweep(SweepKind),
}

/// Everything needed to redo a run: `glassecho replay <manifest>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub task: Task,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub config: RunConfig,
    /// Parameters as used, in SI units, after defaults were applied.
    /// Informational; replay reads `config`.
    #[serde(default)]
    pub resolved: serde_json::Value,
}

fn resolved(task: Task, c: &RunConfig) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    let mut put = |k: &str, v: serde_json::Value| {
        out.insert(k.to_string(), v);
    };
    if let Ok(p) = c.model.resolve() {
        put("model", json(&p));
    }
    if let Ok(env) = c.environment.resolve() {
        put("environment", json(&env));
        if let Task::Simulate(SimKind::MonteCarlo) = task {
            if let Ok(mc) = c.mc.resolve(env.temperature) {
                put("mc", json(&mc));
            }
        }
    }
    match task {
        Task::Simulate(SimKind::TwoPulseIntegral) => {
            if let Ok(d) = c.tls.resolve() {
                put("tls", json(&d));
            }
            if let Ok(p) = c.integration.resolve() {
                put("integration", json(&p));
            }
            if let Ok(g) = c.model.gamma_max() {
                put("gamma_max", g.into());
            }
        }
        Task::Simulate(SimKind::ThreePulse) | Task::Fit(FitKind::ThreePulse) => {
            if let Ok(tp) = c.three_pulse.resolve() {
                put("three_pulse", json(&tp));
            }
            if let Ok(t12) = c.three_pulse.t12() {
                put("t12", t12.into());
            }
        }
        _ => {}
    }
    serde_json::Value::Object(out)
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

pub struct Job {
    pub task: Task,
    pub config: RunConfig,
    pub out: PathBuf,
    pub curve: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// `trace.csv` → `trace.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

pub fn run(job: Job) -> CliResult<()> {
    let mut outputs = vec![job.out.clone()];
    let outcome = match job.task {
        Task::Simulate(kind) => simulate(kind, &job.config, &job.out),
        Task::Sweep(kind) => sweep(kind, &job.config, &job.out),
        Task::Fit(kind) => {
            let curve = job.curve.clone().unwrap_or_else(|| sibling(&job.out, "curve.csv"));
            outputs.push(curve.clone());
            fit(kind, &job.config, &job.out, &curve)
        }
    };
    // a fit that ran but did not converge still leaves its report behind
    if matches!(outcome, Ok(()) | Err(CliError::Numerical(_))) && job.out.exists() {
        let manifest = Manifest {
            tool: "glassecho".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            task: job.task,
            seed: matches!(job.task, Task::Simulate(SimKind::MonteCarlo)).then_some(job.config.mc.seed),
            outputs,
            config: job.config.clone(),
            resolved: resolved(job.task, &job.config),
        };
        let path = job.manifest.clone().unwrap_or_else(|| sibling(&job.out, "manifest.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    }
    outcome
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn grid_or(section: &Option<GridSection>, default: GridSection, dim: Dimension, key: &str) -> CliResult<Vec<f64>> {
    section.as_ref().unwrap_or(&default).resolve(dim, key)
}

fn simulate(kind: SimKind, c: &RunConfig, out: &Path) -> CliResult<()> {
    let two_pulse_grid = || {
        GridSection::new(Quantity::si(0.0), Quantity::with_unit(2.0, "us"), 101, Spacing::Linear)
    };
    let env = c.environment.resolve()?;
    match kind {
        SimKind::TwoPulseExp => {
            let delays = grid_or(&c.delays, two_pulse_grid(), Dimension::Time, "delays")?;
            let gamma_h = match &c.two_pulse.gamma_h {
                Some(q) => q
                    .get(Dimension::Frequency)
                    .map_err(|e| CliError::Usage(format!("two_pulse.gamma_h: {e}")))?,
                None => c.model.resolve()?.homogeneous_linewidth(env.temperature),
            };
            let tr = simulate_2ppe_exponential(&delays, gamma_h, c.two_pulse.i0).map_err(config_err)?;
            write_trace(out, "delay", &tr)
        }
        SimKind::TwoPulseIntegral => {
            let delays = grid_or(&c.delays, two_pulse_grid(), Dimension::Time, "delays")?;
            let gmax = match &c.two_pulse.gamma_sd_max {
                Some(q) => q
                    .get(Dimension::Frequency)
                    .map_err(|e| CliError::Usage(format!("two_pulse.gamma_sd_max: {e}")))?,
                None => c.model.gamma_max()?,
            };
            let tr = simulate_2ppe_integral(
                &delays,
                &c.model.resolve()?,
                &c.tls.resolve()?,
                &env,
                gmax,
                &c.integration.resolve()?,
                c.two_pulse.i0,
            )
            .map_err(config_err)?;
            write_trace(out, "delay", &tr)
        }
        SimKind::ThreePulse => {
            let default = GridSection::new(
                Quantity::with_unit(1.0, "us"),
                Quantity::with_unit(35.0, "ms"),
                60,
                Spacing::Log,
            );
            let t23 = grid_or(&c.delays, default, Dimension::Time, "delays")?;
            let tp = &c.three_pulse;
            let tr = simulate_3ppe(&t23, tp.t12()?, &tp.resolve()?, tp.i0, tp.strict).map_err(config_err)?;
            write_trace(out, "t23", &tr)
        }
        SimKind::MonteCarlo => {
            let delays = grid_or(&c.delays, two_pulse_grid(), Dimension::Time, "delays")?;
            if c.mc.classes.is_empty() {
                return Err(CliError::Usage("mc needs at least one [[mc.classes]] entry".into()));
            }
            let cfg = c.mc.resolve(env.temperature)?;
            let tr = mc_echo_2ppe(&delays, &cfg).map_err(config_err)?;
            write_trace(out, "delay", &tr)
        }
    }
}

fn write_trace(out: &Path, abscissa: &str, tr: &EchoTrace<f64>) -> CliResult<()> {
    let mut cols = vec![(abscissa, Dimension::Time), ("intensity", Dimension::Dimensionless)];
    let mut data: Vec<&[f64]> = vec![&tr.delays, &tr.intensities];
    if let Some(se) = &tr.stderr {
        cols.push(("stderr", Dimension::Dimensionless));
        data.push(se);
    }
    write_table(out, &cols, &data)
}

fn linewidths(points: &[(f64, f64)], p: &ModelParams<f64>) -> CliResult<Vec<f64>> {
    points
        .par_iter()
        .map(|&(b, t)| {
            let env = Environment::new(b, t).map_err(config_err)?;
            effective_linewidth(&env, p).map_err(config_err)
        })
        .collect()
}

fn sweep(kind: SweepKind, c: &RunConfig, out: &Path) -> CliResult<()> {
    let p = c.model.resolve()?;
    let env = c.environment.resolve()?;
    let field_default = |a: f64, n: usize| {
        GridSection::new(Quantity::with_unit(a, "T"), Quantity::with_unit(2.0, "T"), n, Spacing::Log)
    };
    let temp_default = |n: usize| {
        GridSection::new(Quantity::with_unit(0.6, "K"), Quantity::with_unit(1.3, "K"), n, Spacing::Linear)
    };
    match kind {
        SweepKind::LinewidthVsField => {
            let b = grid_or(&c.sweep.field, field_default(0.01, 200), Dimension::Field, "sweep.field")?;
            let pts: Vec<_> = b.iter().map(|&b| (b, env.temperature)).collect();
            let g = linewidths(&pts, &p)?;
            write_table(out, &[("field", Dimension::Field), ("linewidth", Dimension::Frequency)], &[&b, &g])
        }
        SweepKind::LinewidthVsTemperature => {
            let t = grid_or(&c.sweep.temperature, temp_default(71), Dimension::Temperature, "sweep.temperature")?;
            let pts: Vec<_> = t.iter().map(|&t| (env.field, t)).collect();
            let g = linewidths(&pts, &p)?;
            write_table(
                out,
                &[("temperature", Dimension::Temperature), ("linewidth", Dimension::Frequency)],
                &[&t, &g],
            )
        }
        SweepKind::LinewidthSurface => {
            let b = grid_or(&c.sweep.field, field_default(0.02, 12), Dimension::Field, "sweep.field")?;
            let t = grid_or(&c.sweep.temperature, temp_default(8), Dimension::Temperature, "sweep.temperature")?;
            let pts: Vec<_> = b.iter().flat_map(|&b| t.iter().map(move |&t| (b, t))).collect();
            let g = linewidths(&pts, &p)?;
            let (bs, ts): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            write_table(
                out,
                &[
                    ("field", Dimension::Field),
                    ("temperature", Dimension::Temperature),
                    ("linewidth", Dimension::Frequency),
                ],
                &[&bs, &ts, &g],
            )
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    kind: FitKind,
    input: &'a Path,
    /// Units of every reported parameter.
    units: BTreeMap<String, &'static str>,
    result: &'a FitResult<f64>,
}

struct Loaded {
    table: Table,
    cols: BTreeMap<&'static str, Vec<f64>>,
}

fn load_columns(c: &RunConfig, roles: &[(&'static str, Dimension, bool)]) -> CliResult<Loaded> {
    let path = c
        .input
        .path
        .as_ref()
        .ok_or_else(|| CliError::Usage("fit needs an input file (--input or input.path)".into()))?;
    let table = read_table(path, c.input.delimiter()?)?;
    let mut cols = BTreeMap::new();
    for &(role, dim, required) in roles {
        let name = c.input.column_name(role);
        if required || table.has_column(name) {
            cols.insert(role, table.column(name, dim, &c.input.units)?);
        }
    }
    Ok(Loaded { table, cols })
}

fn fit(kind: FitKind, c: &RunConfig, out: &Path, curve: &Path) -> CliResult<()> {
    let (result, units) = match kind {
        FitKind::Decay => fit_decay(c, curve)?,
        FitKind::Surface => fit_surface(c, curve)?,
        FitKind::ThreePulse => fit_three_pulse(c, curve)?,
    };
    let report = Report {
        tool: "glassecho",
        version: env!("CARGO_PKG_VERSION"),
        kind,
        input: c.input.path.as_deref().unwrap_or(Path::new("")),
        units: units.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        result: &result,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(out, text + "\n").map_err(|e| CliError::Data(format!("cannot write {}: {e}", out.display())))?;
    if !result.converged {
        return Err(CliError::Numerical(format!(
            "fit did not converge (status {:?} after {} iterations); report written to {}",
            result.status,
            result.n_iterations,
            out.display()
        )));
    }
    Ok(())
}

type Units = Vec<(&'static str, &'static str)>;

fn fit_decay(c: &RunConfig, curve: &Path) -> CliResult<(FitResult<f64>, Units)> {
    let l = load_columns(
        c,
        &[
            ("delay", Dimension::Time, true),
            ("intensity", Dimension::Dimensionless, true),
            ("stderr", Dimension::Dimensionless, false),
        ],
    )?;
    let delays = l.cols["delay"].clone();
    let intensity = l.cols["intensity"].clone();
    let mut trace = EchoTrace::two_pulse(delays.clone(), intensity.clone()).map_err(data_err)?;
    if let Some(se) = l.cols.get("stderr") {
        trace = trace.with_stderr(se.clone()).map_err(data_err)?;
    }
    let fit = fit_exponential_decay(&trace, c.fit.first_decade).map_err(data_err)?;
    let (i0, g) = (fit.value("i0").unwrap(), fit.value("gamma").unwrap());
    let model: Vec<f64> = delays
        .iter()
        .map(|&t| i0 * (-4.0 * std::f64::consts::PI * g * t).exp())
        .collect();
    write_table(
        curve,
        &[
            ("delay", Dimension::Time),
            ("intensity", Dimension::Dimensionless),
            ("model", Dimension::Dimensionless),
        ],
        &[&delays, &intensity, &model],
    )?;
    Ok((fit, vec![("i0", "1"), ("gamma", "Hz"), ("t2", "s")]))
}

fn fit_surface(c: &RunConfig, curve: &Path) -> CliResult<(FitResult<f64>, Units)> {
    let l = load_columns(
        c,
        &[
            ("field", Dimension::Field, true),
            ("temperature", Dimension::Temperature, true),
            ("linewidth", Dimension::Frequency, true),
            ("sigma", Dimension::Frequency, false),
        ],
    )?;
    let (b, t, g) = (&l.cols["field"], &l.cols["temperature"], &l.cols["linewidth"]);
    let rel = c.fit.relative_sigma;
    if l.cols.get("sigma").is_none() && !(rel > 0.0) {
        return Err(CliError::Usage(format!("fit.relative_sigma must be > 0, got {rel}")));
    }
    let file = l.table.path.display();
    let data = (0..g.len())
        .map(|k| {
            let env = Environment::new(b[k], t[k])
                .map_err(|e| CliError::Data(format!("{file}, data row {}: {e}", k + 1)))?;
            let sigma = l.cols.get("sigma").map_or(rel * g[k].abs(), |s| s[k]);
            Ok(LinewidthPoint { env, linewidth: g[k], sigma })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let fixed = match &c.fit.fixed {
        None => ParamName::DEFAULT_FIXED.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| n.parse::<ParamName>().map_err(|e| CliError::Usage(format!("fit.fixed: {e}"))))
            .collect::<CliResult<Vec<_>>>()?,
    };
    let p0 = c.model.resolve()?;
    let fit = fit_linewidth_surface(&data, &p0, &fixed, &SurfaceBounds::default()).map_err(data_err)?;
    let mut p = p0;
    for name in ParamName::ALL {
        name.set(&mut p, fit.value(name.as_str()).unwrap());
    }
    let pts: Vec<_> = b.iter().copied().zip(t.iter().copied()).collect();
    let model = linewidths(&pts, &p).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_table(
        curve,
        &[
            ("field", Dimension::Field),
            ("temperature", Dimension::Temperature),
            ("linewidth", Dimension::Frequency),
            ("model", Dimension::Frequency),
        ],
        &[b, t, g, &model],
    )?;
    let units = vec![
        ("gamma0", "Hz"),
        ("alpha0", "Hz/K^n"),
        ("n", "1"),
        ("g_env", "1"),
        ("c1", "Hz^3"),
        ("c2", "Hz^2/(T K)"),
        ("gamma_s0", "Hz"),
        ("gamma_s_slope", "Hz/T"),
    ];
    Ok((fit, units))
}

fn fit_three_pulse(c: &RunConfig, curve: &Path) -> CliResult<(FitResult<f64>, Units)> {
    let l = load_columns(
        c,
        &[
            ("t23", Dimension::Time, true),
            ("intensity", Dimension::Dimensionless, true),
            ("stderr", Dimension::Dimensionless, false),
        ],
    )?;
    let t12 = c.three_pulse.t12()?;
    let t23 = l.cols["t23"].clone();
    let intensity = l.cols["intensity"].clone();
    let mut trace = EchoTrace::three_pulse(t12, t23.clone(), intensity.clone()).map_err(data_err)?;
    if let Some(se) = l.cols.get("stderr") {
        trace = trace.with_stderr(se.clone()).map_err(data_err)?;
    }
    let fixed = match &c.fit.fixed {
        None => ThreePulseParam::DEFAULT_FIXED.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| n.parse::<ThreePulseParam>().map_err(|e| CliError::Usage(format!("fit.fixed: {e}"))))
            .collect::<CliResult<Vec<_>>>()?,
    };
    let cfg0 = c.three_pulse.resolve()?;
    let fit = fit_3ppe_diffusion(&[trace], &cfg0, &fixed).map_err(data_err)?;
    let v = |n: &str| fit.value(n).unwrap();
    let cfg = ThreePulseConfig {
        t1_excited: v("t1"),
        tz_zeeman: v("tz"),
        beta_branch: v("beta"),
        gamma_t0: v("gamma_t0"),
        gamma_log: v("gamma_log"),
        ..cfg0
    };
    let t_min = t23.iter().copied().fold(f64::INFINITY, f64::min);
    let t0 = cfg.reference_time(t12, t_min);
    let model: Vec<f64> = t23
        .iter()
        .map(|&t| three_pulse_intensity(t, t12, t0, &cfg, v("i0")))
        .collect();
    write_table(
        curve,
        &[
            ("t23", Dimension::Time),
            ("intensity", Dimension::Dimensionless),
            ("model", Dimension::Dimensionless),
        ],
        &[&t23, &intensity, &model],
    )?;
    let units = vec![
        ("i0", "1"),
        ("beta", "1"),
        ("tz", "s"),
        ("gamma_log", "Hz/decade"),
        ("gamma_t0", "Hz"),
        ("t1", "s"),
    ];
    Ok((fit, units))
}
