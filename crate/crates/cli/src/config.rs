//! Run configuration: TOML or JSON files plus `--set key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use glassecho::{
    Environment, IntegrationPlan, McEnsembleConfig, ModelParams, PerturberClass, RGridKind,
    SpectralDiffusionRatios, ThreePulseConfig, TlsDistribution, TABLE_ONE_GAMMA_MAX,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{config_err, CliError, CliResult};
use crate::units::{Dimension, Quantity};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn get(q: &Quantity, dim: Dimension, key: &str) -> CliResult<f64> {
    q.get(dim).map_err(|e| usage(format!("{key}: {e}")))
}

fn get_opt(q: &Option<Quantity>, dim: Dimension, key: &str) -> CliResult<Option<f64>> {
    q.as_ref().map(|q| get(q, dim, key)).transpose()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub environment: EnvironmentSection,
    pub tls: TlsSection,
    pub integration: IntegrationSection,
    /// Pulse delays for `simulate`: `t12` for two-pulse kinds, `t23` for 3ppe.
    pub delays: Option<GridSection>,
    pub two_pulse: TwoPulseSection,
    pub three_pulse: ThreePulseSection,
    pub mc: McSection,
    pub sweep: SweepSection,
    pub input: InputSection,
    pub fit: FitSection,
}

/// Linewidth-model parameters. Everything left out comes from the
/// published fit, with the spectral-diffusion products built from
/// `gamma_max` and the published ratios.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub gamma0: Option<Quantity>,
    /// Coefficient of `T^n`; a frequency unit here means that unit per K^n.
    pub alpha0: Option<Quantity>,
    pub n: Option<f64>,
    pub g_env: Option<f64>,
    /// Hz³.
    pub c1: Option<f64>,
    /// Hz²/(T·K).
    pub c2: Option<f64>,
    pub gamma_max: Option<Quantity>,
    /// `α1/Γmax`, frequency.
    pub ratio_er_er: Option<Quantity>,
    /// `α2/Γmax`, 1/(T·K).
    pub ratio_er_tls: Option<f64>,
    pub gamma_s0: Option<Quantity>,
    pub gamma_s_slope: Option<Quantity>,
}

impl ModelSection {
    pub fn gamma_max(&self) -> CliResult<f64> {
        Ok(get_opt(&self.gamma_max, Dimension::Frequency, "model.gamma_max")?.unwrap_or(TABLE_ONE_GAMMA_MAX))
    }

    pub fn resolve(&self) -> CliResult<ModelParams<f64>> {
        let f = Dimension::Frequency;
        let gmax = self.gamma_max()?;
        let mut ratios = SpectralDiffusionRatios::<f64>::table_one();
        if let Some(r) = get_opt(&self.ratio_er_er, f, "model.ratio_er_er")? {
            ratios.er_er = r;
        }
        if let Some(r) = self.ratio_er_tls {
            ratios.er_tls = r;
        }
        let mut p = ModelParams::table_one(gmax);
        let (c1, c2) = ratios.to_products(gmax);
        p.c1 = self.c1.unwrap_or(c1);
        p.c2 = self.c2.unwrap_or(c2);
        if let Some(v) = get_opt(&self.gamma0, f, "model.gamma0")? {
            p.gamma0 = v;
        }
        if let Some(v) = get_opt(&self.alpha0, f, "model.alpha0")? {
            p.alpha0 = v;
        }
        if let Some(v) = self.n {
            p.n = v;
        }
        if let Some(v) = self.g_env {
            p.g_env = v;
        }
        if let Some(v) = get_opt(&self.gamma_s0, f, "model.gamma_s0")? {
            p.gamma_s0 = v;
        }
        if let Some(v) = get_opt(&self.gamma_s_slope, Dimension::FrequencyPerField, "model.gamma_s_slope")? {
            p.gamma_s_slope = v;
        }
        p.validate().map_err(config_err)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub field: Quantity,
    pub temperature: Quantity,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self {
            field: Quantity::with_unit(0.05, "T"),
            temperature: Quantity::with_unit(0.7, "K"),
        }
    }
}

impl EnvironmentSection {
    pub fn resolve(&self) -> CliResult<Environment<f64>> {
        let b = get(&self.field, Dimension::Field, "environment.field")?;
        let t = get(&self.temperature, Dimension::Temperature, "environment.temperature")?;
        Environment::new(b, t).map_err(config_err)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TlsSection {
    pub r_min: Option<Quantity>,
    /// Hz/J³.
    pub r_max_coeff: Option<f64>,
    pub e_max_factor: Option<f64>,
}

impl TlsSection {
    pub fn resolve(&self) -> CliResult<TlsDistribution<f64>> {
        let mut d = TlsDistribution::default();
        if let Some(v) = get_opt(&self.r_min, Dimension::Frequency, "tls.r_min")? {
            d.r_min = v;
        }
        if let Some(v) = self.r_max_coeff {
            d.r_max_coeff = v;
        }
        if let Some(v) = self.e_max_factor {
            d.e_max_factor = v;
        }
        d.validate().map_err(config_err)?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSection {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_subdivisions: Option<usize>,
    /// `log-spaced` or `singularity-mapped`.
    pub r_grid: Option<String>,
    pub e_grid_points: Option<usize>,
}

impl IntegrationSection {
    pub fn resolve(&self) -> CliResult<IntegrationPlan<f64>> {
        let mut p = IntegrationPlan::default();
        if let Some(v) = self.rel_tol {
            p.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            p.abs_tol = v;
        }
        if let Some(v) = self.max_subdivisions {
            p.max_subdivisions = v;
        }
        if let Some(v) = self.e_grid_points {
            p.e_grid_points = v;
        }
        if let Some(kind) = &self.r_grid {
            p.r_grid_kind = match kind.as_str() {
                "log-spaced" => RGridKind::LogSpaced,
                "singularity-mapped" => RGridKind::SingularityMapped,
                other => {
                    return Err(usage(format!(
                        "integration.r_grid: expected 'log-spaced' or 'singularity-mapped', got '{other}'"
                    )))
                }
            };
        }
        p.validate().map_err(config_err)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Either explicit `values`, or `start`, `stop`, `points` and `spacing`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub values: Option<Vec<Quantity>>,
    pub start: Option<Quantity>,
    pub stop: Option<Quantity>,
    pub points: Option<usize>,
    pub spacing: Spacing,
}

impl GridSection {
    pub fn new(start: Quantity, stop: Quantity, points: usize, spacing: Spacing) -> Self {
        Self {
            values: None,
            start: Some(start),
            stop: Some(stop),
            points: Some(points),
            spacing,
        }
    }

    pub fn resolve(&self, dim: Dimension, key: &str) -> CliResult<Vec<f64>> {
        if let Some(values) = &self.values {
            if self.start.is_some() || self.stop.is_some() || self.points.is_some() {
                return Err(usage(format!("{key}: give either values or start/stop/points, not both")));
            }
            let v = values
                .iter()
                .map(|q| get(q, dim, key))
                .collect::<CliResult<Vec<f64>>>()?;
            if v.is_empty() {
                return Err(usage(format!("{key}: values is empty")));
            }
            return Ok(v);
        }
        let (Some(start), Some(stop), Some(points)) = (&self.start, &self.stop, self.points) else {
            return Err(usage(format!("{key}: start, stop and points are all required")));
        };
        let (a, b) = (get(start, dim, key)?, get(stop, dim, key)?);
        if !(a.is_finite() && b.is_finite()) || points < 1 || (points > 1 && !(b > a)) {
            return Err(usage(format!(
                "{key}: need finite start < stop and points >= 1, got {a} .. {b} with {points} points"
            )));
        }
        if self.spacing == Spacing::Log && !(a > 0.0) {
            return Err(usage(format!("{key}: log spacing needs start > 0, got {a}")));
        }
        Ok(spaced(a, b, points, self.spacing))
    }
}

/// `points` values from `a` to `b` inclusive; both ends are exact.
pub fn spaced(a: f64, b: f64, points: usize, spacing: Spacing) -> Vec<f64> {
    if points == 1 {
        return vec![a];
    }
    let last = (points - 1) as f64;
    (0..points)
        .map(|k| match k {
            0 => a,
            k if k == points - 1 => b,
            k => {
                let s = k as f64 / last;
                match spacing {
                    Spacing::Linear => a + (b - a) * s,
                    Spacing::Log => (a.ln() + (b.ln() - a.ln()) * s).exp(),
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPulseSection {
    /// For `2ppe-exp`; defaults to the model's `Γ0 + α0·T^n`.
    pub gamma_h: Option<Quantity>,
    /// Spectral-diffusion amplitude for `2ppe-integral`; defaults to
    /// `model.gamma_max`.
    pub gamma_sd_max: Option<Quantity>,
    pub i0: f64,
}

impl Default for TwoPulseSection {
    fn default() -> Self {
        Self {
            gamma_h: None,
            gamma_sd_max: None,
            i0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreePulseSection {
    pub t12: Quantity,
    pub t1: Quantity,
    pub tz: Quantity,
    pub beta: f64,
    pub gamma_t0: Quantity,
    pub gamma_log: Quantity,
    /// Defaults to `t12` plus the shortest waiting time.
    pub t0_ref: Option<Quantity>,
    /// Reject waiting times before the reference time instead of clamping.
    pub strict: bool,
    pub i0: f64,
}

impl Default for ThreePulseSection {
    fn default() -> Self {
        Self {
            t12: Quantity::with_unit(50.0, "ns"),
            t1: Quantity::with_unit(11.0, "ms"),
            tz: Quantity::with_unit(100.0, "ms"),
            beta: 0.5,
            gamma_t0: Quantity::with_unit(0.6, "MHz"),
            gamma_log: Quantity::with_unit(0.376, "MHz"),
            t0_ref: None,
            strict: false,
            i0: 1.0,
        }
    }
}

impl ThreePulseSection {
    pub fn t12(&self) -> CliResult<f64> {
        get(&self.t12, Dimension::Time, "three_pulse.t12")
    }

    pub fn resolve(&self) -> CliResult<ThreePulseConfig<f64>> {
        let t = Dimension::Time;
        let f = Dimension::Frequency;
        let mut cfg = ThreePulseConfig::new(
            get(&self.tz, t, "three_pulse.tz")?,
            self.beta,
            get(&self.gamma_t0, f, "three_pulse.gamma_t0")?,
            get(&self.gamma_log, f, "three_pulse.gamma_log")?,
        );
        cfg.t1_excited = get(&self.t1, t, "three_pulse.t1")?;
        cfg.t0_ref = get_opt(&self.t0_ref, t, "three_pulse.t0_ref")?;
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub seed: u64,
    pub n_ions: usize,
    pub classes: Vec<ClassSection>,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            seed: 42,
            n_ions: 10_000,
            classes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub flip_rate: Quantity,
    /// Energy; `K` means `E/k`.
    #[serde(default = "zero")]
    pub e_split: Quantity,
    pub shift: Quantity,
    #[serde(default = "one")]
    pub count: usize,
}

fn zero() -> Quantity {
    Quantity::si(0.0)
}

fn one() -> usize {
    1
}

impl McSection {
    pub fn resolve(&self, temperature: f64) -> CliResult<McEnsembleConfig<f64>> {
        let classes = self
            .classes
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let key = |f: &str| format!("mc.classes[{k}].{f}");
                Ok(PerturberClass {
                    flip_rate: get(&c.flip_rate, Dimension::Frequency, &key("flip_rate"))?,
                    e_split: get(&c.e_split, Dimension::Energy, &key("e_split"))?,
                    shift: get(&c.shift, Dimension::Frequency, &key("shift"))?,
                    count: c.count,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let cfg = McEnsembleConfig {
            classes,
            n_ions: self.n_ions,
            seed: self.seed,
            temperature,
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub field: Option<GridSection>,
    pub temperature: Option<GridSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub path: Option<PathBuf>,
    pub delimiter: Option<char>,
    /// Maps the tool's column roles (`delay`, `intensity`, `stderr`, `t23`,
    /// `field`, `temperature`, `linewidth`, `sigma`) to file column names.
    pub columns: BTreeMap<String, String>,
    /// Units for file columns whose unit cell is empty, by file column name.
    pub units: BTreeMap<String, String>,
}

impl InputSection {
    pub fn column_name<'a>(&'a self, role: &'a str) -> &'a str {
        self.columns.get(role).map(String::as_str).unwrap_or(role)
    }

    pub fn delimiter(&self) -> CliResult<Option<u8>> {
        match self.delimiter {
            None => Ok(None),
            Some(c) if c.is_ascii() => Ok(Some(c as u8)),
            Some(c) => Err(usage(format!("input.delimiter: '{c}' is not an ASCII character"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Decay fits: use only the first decade of the trace.
    pub first_decade: bool,
    /// Parameters held at their configured values. `None` keeps each
    /// fit's usual choice.
    pub fixed: Option<Vec<String>>,
    /// Surface fits without a `sigma` column weight each point by this
    /// fraction of its linewidth.
    pub relative_sigma: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            first_decade: true,
            fixed: None,
            relative_sigma: 0.05,
        }
    }
}

/// Reads a config file (TOML unless the extension is `.json`), then
/// applies `key.path=value` overrides.
pub fn load(path: Option<&Path>, sets: &[String]) -> CliResult<RunConfig> {
    let mut tree = match path {
        None => Value::Object(Default::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            let is_json = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let (mut tree, typed) = if is_json {
                let tree: Value = serde_json::from_str(&text)
                    .map_err(|e| usage(format!("{}: {e}", p.display())))?;
                (tree, serde_json::from_str::<RunConfig>(&text).map(|_| ()).map_err(|e| e.to_string()))
            } else {
                let table: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                let typed = toml::from_str::<RunConfig>(&text).map(|_| ()).map_err(|e| e.to_string());
                (serde_json::to_value(table).expect("TOML tables are valid JSON values"), typed)
            };
            // report schema errors against the original text, with positions
            typed.map_err(|e| usage(format!("{}: {e}", p.display())))?;
            if let Some(base) = p.parent() {
                rebase_input_path(&mut tree, base);
            }
            tree
        }
    };
    for s in sets {
        apply_set(&mut tree, s)?;
    }
    serde_json::from_value(tree).map_err(|e| usage(format!("configuration: {e}")))
}

/// Relative input paths in a config file are relative to that file.
fn rebase_input_path(tree: &mut Value, base: &Path) {
    if let Some(Value::String(p)) = tree.pointer_mut("/input/path") {
        let path = Path::new(p.as_str());
        if path.is_relative() {
            *p = base.join(path).to_string_lossy().into_owned();
        }
    }
}

fn apply_set(tree: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| usage(format!("--set expects key=value, got '{assignment}'")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(usage(format!("--set: malformed key '{key}'")));
    }
    // TOML literals (numbers, booleans, arrays, quoted strings) are taken as
    // such; anything else, like `50 ns`, is a string
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key")).expect("TOML values are valid JSON"),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| usage(format!("--set {key}: '{part}' is not inside a table")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let last = parts[parts.len() - 1];
    node.as_object_mut()
        .ok_or_else(|| usage(format!("--set {key}: parent is not a table")))?
        .insert(last.to_string(), value);
    Ok(())
}
