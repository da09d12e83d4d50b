//! Experiment config: JSON with `model`, `experiment` and `output` sections.
//!
//! Validation works on the raw JSON so that every problem is reported with
//! its JSON pointer, not just the first one serde trips over.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::adiabatic::{
    LoopPath, LoopShape, Orientation, PhaseConvention, DEFAULT_DELTA_MIN, MAX_PERIOD_TURNS, MIN_STEPS,
};
use crate::eigensystem::MAX_DIM;
use crate::model::{
    Affine, EffectiveHamiltonianModel, FormFactor, LinearFamily, ParameterPoint, TwoLevelModel,
};

pub const EXPERIMENTS: [&str; 10] = [
    "sweep",
    "surface",
    "classify",
    "find-ep",
    "loop",
    "period",
    "smatrix",
    "poles",
    "trapping",
    "smoothness",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub model: ModelConfig,
    pub experiment: Experiment,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    TwoLevel {
        e1: Affine,
        e2: Affine,
        gamma: [f64; 2],
        omega: f64,
    },
    NLevel {
        h0: Vec<Vec<f64>>,
        w: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        form_factors: Option<Vec<FormFactor>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_lambda: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_omega: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { from: f64, to: f64, count: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { from, to, count } => crate::scattering::linspace(*from, *to, *count),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathConfig {
    pub center: ParameterPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<ParameterPoint>>,
    pub steps: usize,
    #[serde(default = "default_orientation")]
    pub orientation: Orientation,
    #[serde(default = "one")]
    pub turns: usize,
    #[serde(default = "default_convention")]
    pub convention: PhaseConvention,
    #[serde(default)]
    pub known_branch_points: Vec<ParameterPoint>,
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
}

fn default_orientation() -> Orientation {
    Orientation::Positive
}
fn default_convention() -> PhaseConvention {
    PhaseConvention::CProductContinuity
}
fn default_delta_min() -> f64 {
    DEFAULT_DELTA_MIN
}
fn one() -> usize {
    1
}

impl PathConfig {
    pub fn to_path(&self) -> LoopPath {
        let shape = match (&self.points, self.radius) {
            (Some(points), _) => LoopShape::Polyline {
                points: points.clone(),
            },
            (None, Some(r)) => LoopShape::Circle {
                radius_lambda: r,
                radius_omega: r,
            },
            (None, None) => LoopShape::Circle {
                radius_lambda: self.radius_lambda.unwrap_or(0.0),
                radius_omega: self.radius_omega.unwrap_or(0.0),
            },
        };
        LoopPath {
            center: self.center,
            shape,
            steps: self.steps,
            orientation: self.orientation,
            turns: self.turns,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchBox {
    pub lambda: [f64; 2],
    pub omega: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Sweep {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        lambda: Grid,
    },
    Surface {
        lambda: Grid,
        omega: Grid,
        #[serde(default)]
        known_branch_points: Vec<ParameterPoint>,
        #[serde(default = "default_delta_min")]
        delta_min: f64,
    },
    Classify {
        omega: Grid,
    },
    FindEp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<ParameterPoint>,
        #[serde(default = "one")]
        starts: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        search_box: Option<SearchBox>,
    },
    Loop {
        path: PathConfig,
    },
    Period {
        path: PathConfig,
        #[serde(default = "max_turns")]
        max_turns: usize,
    },
    Smatrix {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        point: Option<ParameterPoint>,
        energy: Grid,
    },
    Poles {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        point: Option<ParameterPoint>,
    },
    Trapping {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        point: Option<ParameterPoint>,
        alpha: Grid,
    },
    Smoothness {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        branch_point: Option<ParameterPoint>,
        #[serde(default = "up")]
        direction: [f64; 2],
        deltas: Vec<f64>,
        energy: Grid,
    },
}

fn max_turns() -> usize {
    MAX_PERIOD_TURNS
}
fn up() -> [f64; 2] {
    [0.0, 1.0]
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Sweep { .. } => "sweep",
            Experiment::Surface { .. } => "surface",
            Experiment::Classify { .. } => "classify",
            Experiment::FindEp { .. } => "find-ep",
            Experiment::Loop { .. } => "loop",
            Experiment::Period { .. } => "period",
            Experiment::Smatrix { .. } => "smatrix",
            Experiment::Poles { .. } => "poles",
            Experiment::Trapping { .. } => "trapping",
            Experiment::Smoothness { .. } => "smoothness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Summary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Summary]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: all_formats(),
        }
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |r, c| rows[r][c])
}

/// The model as used by the experiments.
pub enum Model {
    TwoLevel(TwoLevelModel),
    NLevel {
        effective: EffectiveHamiltonianModel,
        family: LinearFamily,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model, String> {
        match self {
            ModelConfig::TwoLevel { e1, e2, gamma, omega } => {
                TwoLevelModel::new(*e1, *e2, gamma[0], gamma[1], *omega)
                    .map(Model::TwoLevel)
                    .map_err(|e| e.to_string())
            }
            ModelConfig::NLevel {
                h0,
                w,
                form_factors,
                d_lambda,
                d_omega,
            } => {
                let h0 = to_matrix(h0);
                let w = to_matrix(w);
                let n = h0.nrows();
                let ff = form_factors.clone().unwrap_or_else(|| vec![FormFactor::Unit; w.ncols()]);
                let effective = EffectiveHamiltonianModel::with_form_factors(h0, w, ff).map_err(|e| e.to_string())?;
                // the parametric family uses the couplings at their constant values
                let base = EffectiveHamiltonianModel::new(effective.h0().clone(), effective.w().clone())
                    .and_then(|m| m.hamiltonian(0.0))
                    .map_err(|e| e.to_string())?;
                let family = LinearFamily {
                    base,
                    d_lambda: d_lambda.as_deref().map_or_else(|| DMatrix::zeros(n, n), to_matrix),
                    d_omega: d_omega.as_deref().map_or_else(|| DMatrix::zeros(n, n), to_matrix),
                };
                Ok(Model::NLevel { effective, family })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "/" } else { &self.path };
        write!(f, "{path}: {}", self.message)
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct Report {
    pub errors: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl Report {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(Violation {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn warn(&mut self, path: &str, message: impl Into<String>) {
        self.warnings.push(Violation {
            path: path.to_string(),
            message: message.into(),
        });
    }
}

/// Parses and validates a config document. The config is returned only when
/// there are no errors.
pub fn validate(text: &str) -> (Report, Option<Config>) {
    let mut r = Report::default();
    let root: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            r.error("", format!("not valid JSON: {e}"));
            return (r, None);
        }
    };
    Validator { r: &mut r }.root(&root);
    if !r.is_valid() {
        return (r, None);
    }
    match serde_json::from_value::<Config>(root) {
        Ok(cfg) => {
            check_semantics(&cfg, &mut r);
            if r.is_valid() {
                (r, Some(cfg))
            } else {
                (r, None)
            }
        }
        Err(e) => {
            r.error("", e.to_string());
            (r, None)
        }
    }
}

/// Checks that need the typed config (loop geometry, model construction).
fn check_semantics(cfg: &Config, r: &mut Report) {
    if let Err(e) = cfg.model.build() {
        r.error("/model", e);
    }
    let path_cfg = match &cfg.experiment {
        Experiment::Loop { path } | Experiment::Period { path, .. } => Some(path),
        _ => None,
    };
    if let Some(p) = path_cfg {
        let path = p.to_path();
        if let Err(e) = path.validate() {
            r.error("/experiment/path", e.to_string());
        } else {
            for (k, bp) in p.known_branch_points.iter().enumerate() {
                let d = path.distance_to(bp);
                if d < p.delta_min {
                    r.warn(
                        &format!("/experiment/path/known_branch_points/{k}"),
                        format!(
                            "path passes within {d:.3e} of the branch point ({}, {}), closer than delta_min = {}",
                            bp.lambda, bp.omega, p.delta_min
                        ),
                    );
                }
            }
        }
    }
}

struct Validator<'a> {
    r: &'a mut Report,
}

fn join(path: &str, key: &str) -> String {
    format!("{path}/{key}")
}

impl Validator<'_> {
    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        match v.as_object() {
            Some(m) => Some(m),
            None => {
                self.r.error(path, "expected an object");
                None
            }
        }
    }

    fn allowed(&mut self, m: &Map<String, Value>, path: &str, keys: &[&str]) {
        for k in m.keys() {
            if !keys.contains(&k.as_str()) {
                self.r.error(&join(path, k), format!("unknown field (expected one of: {})", keys.join(", ")));
            }
        }
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.r.error(path, "expected a finite number");
                None
            }
        }
    }

    fn field<'v>(&mut self, m: &'v Map<String, Value>, path: &str, key: &str, required: bool) -> Option<&'v Value> {
        match m.get(key) {
            Some(v) => Some(v),
            None => {
                if required {
                    self.r.error(&join(path, key), "missing required field");
                }
                None
            }
        }
    }

    fn num_field(&mut self, m: &Map<String, Value>, path: &str, key: &str, required: bool) -> Option<f64> {
        let v = self.field(m, path, key, required)?;
        self.number(v, &join(path, key))
    }

    fn positive(&mut self, m: &Map<String, Value>, path: &str, key: &str, required: bool) -> Option<f64> {
        let x = self.num_field(m, path, key, required)?;
        if x <= 0.0 {
            self.r.error(&join(path, key), format!("must be positive, got {x}"));
            return None;
        }
        Some(x)
    }

    fn int_field(&mut self, m: &Map<String, Value>, path: &str, key: &str, required: bool, min: u64, max: u64) -> Option<u64> {
        let v = self.field(m, path, key, required)?;
        let p = join(path, key);
        match v.as_u64() {
            Some(n) if n >= min && n <= max => Some(n),
            Some(n) => {
                self.r.error(&p, format!("must be in {min}..={max}, got {n}"));
                None
            }
            None => {
                self.r.error(&p, "expected a non-negative integer");
                None
            }
        }
    }

    fn enum_field(&mut self, m: &Map<String, Value>, path: &str, key: &str, options: &[&str]) -> Option<String> {
        let v = self.field(m, path, key, false)?;
        match v.as_str() {
            Some(s) if options.contains(&s) => Some(s.to_string()),
            _ => {
                self.r.error(&join(path, key), format!("expected one of: {}", options.join(", ")));
                None
            }
        }
    }

    fn point(&mut self, v: &Value, path: &str) {
        if let Some(m) = self.object(v, path) {
            self.allowed(m, path, &["lambda", "omega"]);
            self.num_field(m, path, "lambda", true);
            self.num_field(m, path, "omega", true);
        }
    }

    fn point_field(&mut self, m: &Map<String, Value>, path: &str, key: &str, required: bool) {
        if let Some(v) = self.field(m, path, key, required) {
            self.point(v, &join(path, key));
        }
    }

    fn points(&mut self, v: &Value, path: &str) -> usize {
        match v.as_array() {
            Some(a) => {
                for (k, p) in a.iter().enumerate() {
                    self.point(p, &format!("{path}/{k}"));
                }
                a.len()
            }
            None => {
                self.r.error(path, "expected an array of points");
                0
            }
        }
    }

    fn numbers(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let Some(a) = v.as_array() else {
            self.r.error(path, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(a.len());
        let mut ok = true;
        for (k, x) in a.iter().enumerate() {
            match self.number(x, &format!("{path}/{k}")) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    /// Explicit values or `{from, to, count}`. Returns the node count.
    fn grid(&mut self, m: &Map<String, Value>, path: &str, key: &str, monotone: bool, min: Option<f64>) -> Option<usize> {
        let v = self.field(m, path, key, true)?;
        let p = join(path, key);
        let values = if v.is_array() {
            self.numbers(v, &p)?
        } else if let Some(g) = v.as_object() {
            self.allowed(g, &p, &["from", "to", "count"]);
            let from = self.num_field(g, &p, "from", true);
            let to = self.num_field(g, &p, "to", true);
            let count = self.int_field(g, &p, "count", true, 1, 10_000_000);
            crate::scattering::linspace(from?, to?, count? as usize)
        } else {
            self.r.error(&p, "expected an array of numbers or {from, to, count}");
            return None;
        };
        if values.is_empty() {
            self.r.error(&p, "grid must not be empty");
            return None;
        }
        if monotone {
            let inc = values.windows(2).all(|w| w[1] > w[0]);
            let dec = values.windows(2).all(|w| w[1] < w[0]);
            if !(inc || dec) {
                self.r.error(&p, "grid must be strictly monotone");
            }
        }
        if let Some(lo) = min {
            if values.iter().any(|&x| x < lo) {
                self.r.error(&p, format!("values must be at least {lo}"));
            }
        }
        Some(values.len())
    }

    /// Rectangular numeric matrix; returns (rows, cols).
    fn matrix(&mut self, v: &Value, path: &str) -> Option<(usize, usize, Vec<Vec<f64>>)> {
        let Some(rows) = v.as_array() else {
            self.r.error(path, "expected an array of rows");
            return None;
        };
        if rows.is_empty() {
            self.r.error(path, "matrix must not be empty");
            return None;
        }
        let mut out = Vec::with_capacity(rows.len());
        let mut cols = None;
        let mut ok = true;
        for (k, row) in rows.iter().enumerate() {
            let p = format!("{path}/{k}");
            match self.numbers(row, &p) {
                Some(r) => {
                    match cols {
                        None => cols = Some(r.len()),
                        Some(c) if c != r.len() => {
                            self.r.error(&p, format!("row has {} entries, expected {c}", r.len()));
                            ok = false;
                        }
                        _ => {}
                    }
                    out.push(r);
                }
                None => ok = false,
            }
        }
        let cols = cols.unwrap_or(0);
        if cols == 0 {
            self.r.error(path, "matrix must have at least one column");
            return None;
        }
        ok.then_some((rows.len(), cols, out))
    }

    fn symmetric(&mut self, m: &[Vec<f64>], path: &str) {
        let n = m.len();
        for r in 0..n {
            for c in r + 1..n {
                let (a, b) = (m[r][c], m[c][r]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    self.r.error(&format!("{path}/{r}/{c}"), format!("matrix must be symmetric ({a} vs {b})"));
                }
            }
        }
    }

    fn square(&mut self, m: &Map<String, Value>, path: &str, key: &str, n: Option<usize>, required: bool) -> Option<usize> {
        let v = self.field(m, path, key, required)?;
        let p = join(path, key);
        let (rows, cols, data) = self.matrix(v, &p)?;
        if rows != cols {
            self.r.error(&p, format!("must be square, got {rows}x{cols}"));
            return None;
        }
        if rows > MAX_DIM {
            self.r.error(&p, format!("at most {MAX_DIM} levels are supported, got {rows}"));
        }
        if let Some(n) = n {
            if rows != n {
                self.r.error(&p, format!("must be {n}x{n} to match h0"));
            }
        }
        self.symmetric(&data, &p);
        Some(rows)
    }

    /// Returns the model kind.
    fn model(&mut self, v: &Value) -> Option<&'static str> {
        let path = "/model";
        let m = self.object(v, path)?;
        match m.get("kind").and_then(Value::as_str) {
            Some("two_level") => {
                self.allowed(m, path, &["kind", "e1", "e2", "gamma", "omega"]);
                for key in ["e1", "e2"] {
                    if let Some(e) = self.field(m, path, key, true) {
                        let p = join(path, key);
                        if let Some(e) = self.object(e, &p) {
                            self.allowed(e, &p, &["intercept", "slope"]);
                            self.num_field(e, &p, "intercept", true);
                            self.num_field(e, &p, "slope", true);
                        }
                    }
                }
                if let Some(g) = self.field(m, path, "gamma", true) {
                    let p = join(path, "gamma");
                    if let Some(g) = self.numbers(g, &p) {
                        if g.len() != 2 {
                            self.r.error(&p, format!("expected 2 widths, got {}", g.len()));
                        }
                        for (k, x) in g.iter().enumerate() {
                            if *x < 0.0 {
                                self.r.error(&format!("{p}/{k}"), format!("width must be non-negative, got {x}"));
                            }
                        }
                    }
                }
                self.num_field(m, path, "omega", true);
                Some("two_level")
            }
            Some("n_level") => {
                self.allowed(m, path, &["kind", "h0", "w", "form_factors", "d_lambda", "d_omega"]);
                let n = self.square(m, path, "h0", None, true);
                let mut channels = None;
                if let Some(w) = self.field(m, path, "w", true) {
                    let p = join(path, "w");
                    if let Some((rows, cols, _)) = self.matrix(w, &p) {
                        if let Some(n) = n {
                            if rows != n {
                                self.r.error(&p, format!("must have {n} rows to match h0, got {rows}"));
                            }
                        }
                        channels = Some(cols);
                    }
                }
                if let Some(ff) = self.field(m, path, "form_factors", false) {
                    self.form_factors(ff, &join(path, "form_factors"), channels);
                }
                self.square(m, path, "d_lambda", n, false);
                self.square(m, path, "d_omega", n, false);
                Some("n_level")
            }
            _ => {
                self.r.error(&join(path, "kind"), "expected \"two_level\" or \"n_level\"");
                None
            }
        }
    }

    fn form_factors(&mut self, v: &Value, path: &str, channels: Option<usize>) {
        let Some(a) = v.as_array() else {
            self.r.error(path, "expected an array of form factors");
            return;
        };
        if let Some(c) = channels {
            if a.len() != c {
                self.r.error(path, format!("expected {c} form factors (one per channel), got {}", a.len()));
            }
        }
        for (k, f) in a.iter().enumerate() {
            let p = format!("{path}/{k}");
            let Some(f) = self.object(f, &p) else { continue };
            match f.get("kind").and_then(Value::as_str) {
                Some("unit") => self.allowed(f, &p, &["kind"]),
                Some("saturating") => {
                    self.allowed(f, &p, &["kind", "scale"]);
                    self.positive(f, &p, "scale", true);
                }
                _ => self.r.error(&join(&p, "kind"), "expected \"unit\" or \"saturating\""),
            }
        }
    }

    fn path_config(&mut self, v: &Value, path: &str, model_kind: Option<&str>) {
        let Some(m) = self.object(v, path) else { return };
        self.allowed(
            m,
            path,
            &[
                "center",
                "radius",
                "radius_lambda",
                "radius_omega",
                "points",
                "steps",
                "orientation",
                "turns",
                "convention",
                "known_branch_points",
                "delta_min",
            ],
        );
        self.point_field(m, path, "center", true);
        let has_points = m.contains_key("points");
        let has_radius = m.contains_key("radius");
        let has_pair = m.contains_key("radius_lambda") || m.contains_key("radius_omega");
        match (has_points, has_radius, has_pair) {
            (true, false, false) => {
                let p = join(path, "points");
                if self.points(&m["points"], &p) < 3 {
                    self.r.error(&p, "a polyline needs at least 3 vertices");
                }
            }
            (false, true, false) => {
                self.positive(m, path, "radius", true);
            }
            (false, false, true) => {
                self.positive(m, path, "radius_lambda", true);
                self.positive(m, path, "radius_omega", true);
            }
            (false, false, false) => self.r.error(path, "give either radius, radius_lambda and radius_omega, or points"),
            _ => self.r.error(path, "radius, radius_lambda/radius_omega and points are mutually exclusive"),
        }
        self.int_field(m, path, "steps", true, MIN_STEPS as u64, 10_000_000);
        self.enum_field(m, path, "orientation", &["positive", "negative"]);
        self.int_field(m, path, "turns", false, 1, 64);
        if self.enum_field(m, path, "convention", &["c_product_continuity", "paper_exchange_rule"]).as_deref()
            == Some("paper_exchange_rule")
            && model_kind == Some("n_level")
        {
            self.r.error(&join(path, "convention"), "the exchange rule needs a two_level model");
        }
        if let Some(v) = self.field(m, path, "known_branch_points", false) {
            self.points(v, &join(path, "known_branch_points"));
        }
        self.positive(m, path, "delta_min", false);
    }

    fn experiment(&mut self, v: &Value, model_kind: Option<&str>) {
        let path = "/experiment";
        let Some(m) = self.object(v, path) else { return };
        let kind = m.get("kind").and_then(Value::as_str).unwrap_or("");
        let needs_two_level = |s: &mut Self, what: &str| {
            if model_kind == Some("n_level") {
                s.r.error(&join(path, "kind"), format!("{what} needs a two_level model"));
            }
        };
        match kind {
            "sweep" => {
                self.allowed(m, path, &["kind", "omega", "lambda"]);
                self.num_field(m, path, "omega", false);
                self.grid(m, path, "lambda", false, None);
            }
            "surface" => {
                self.allowed(m, path, &["kind", "lambda", "omega", "known_branch_points", "delta_min"]);
                self.grid(m, path, "lambda", true, None);
                self.grid(m, path, "omega", true, None);
                if let Some(v) = self.field(m, path, "known_branch_points", false) {
                    self.points(v, &join(path, "known_branch_points"));
                }
                self.positive(m, path, "delta_min", false);
            }
            "classify" => {
                self.allowed(m, path, &["kind", "omega"]);
                needs_two_level(self, "classify");
                self.grid(m, path, "omega", false, None);
            }
            "find-ep" => {
                self.allowed(m, path, &["kind", "initial", "starts", "search_box"]);
                self.point_field(m, path, "initial", false);
                self.int_field(m, path, "starts", false, 1, 1000);
                if let Some(b) = self.field(m, path, "search_box", false) {
                    let p = join(path, "search_box");
                    if let Some(b) = self.object(b, &p) {
                        self.allowed(b, &p, &["lambda", "omega"]);
                        for key in ["lambda", "omega"] {
                            if let Some(r) = self.field(b, &p, key, true) {
                                let q = join(&p, key);
                                if let Some(r) = self.numbers(r, &q) {
                                    if r.len() != 2 || r[0] >= r[1] {
                                        self.r.error(&q, "expected [lo, hi] with lo < hi");
                                    }
                                }
                            }
                        }
                    }
                }
            }
            "loop" => {
                self.allowed(m, path, &["kind", "path"]);
                if let Some(p) = self.field(m, path, "path", true) {
                    self.path_config(p, &join(path, "path"), model_kind);
                }
            }
            "period" => {
                self.allowed(m, path, &["kind", "path", "max_turns"]);
                if let Some(p) = self.field(m, path, "path", true) {
                    self.path_config(p, &join(path, "path"), model_kind);
                }
                self.int_field(m, path, "max_turns", false, 1, MAX_PERIOD_TURNS as u64);
            }
            "smatrix" => {
                self.allowed(m, path, &["kind", "point", "energy"]);
                self.point_field(m, path, "point", false);
                self.grid(m, path, "energy", false, None);
            }
            "poles" => {
                self.allowed(m, path, &["kind", "point"]);
                self.point_field(m, path, "point", false);
            }
            "trapping" => {
                self.allowed(m, path, &["kind", "point", "alpha"]);
                self.point_field(m, path, "point", false);
                if self.grid(m, path, "alpha", false, Some(0.0)).is_some() {
                    if let Some(vals) = m.get("alpha").and_then(Value::as_array) {
                        let xs: Vec<f64> = vals.iter().filter_map(Value::as_f64).collect();
                        if xs.windows(2).any(|w| w[1] < w[0]) {
                            self.r.error(&join(path, "alpha"), "alpha grid must be ascending");
                        }
                    }
                }
            }
            "smoothness" => {
                self.allowed(m, path, &["kind", "branch_point", "direction", "deltas", "energy"]);
                needs_two_level(self, "smoothness");
                self.point_field(m, path, "branch_point", false);
                if let Some(d) = self.field(m, path, "direction", false) {
                    let p = join(path, "direction");
                    if let Some(d) = self.numbers(d, &p) {
                        if d.len() != 2 || (d[0] == 0.0 && d[1] == 0.0) {
                            self.r.error(&p, "expected a non-zero [d_lambda, d_omega]");
                        }
                    }
                }
                if let Some(d) = self.field(m, path, "deltas", true) {
                    let p = join(path, "deltas");
                    if let Some(d) = self.numbers(d, &p) {
                        if d.is_empty() {
                            self.r.error(&p, "must not be empty");
                        }
                        for (k, x) in d.iter().enumerate() {
                            if *x < 0.0 {
                                self.r.error(&format!("{p}/{k}"), "must be non-negative");
                            }
                        }
                    }
                }
                self.grid(m, path, "energy", false, None);
            }
            _ => self.r.error(
                &join(path, "kind"),
                format!("unknown experiment {kind:?}; valid experiments: {}", EXPERIMENTS.join(", ")),
            ),
        }
    }

    fn output(&mut self, v: &Value) {
        let path = "/output";
        let Some(m) = self.object(v, path) else { return };
        self.allowed(m, path, &["directory", "formats"]);
        if let Some(d) = m.get("directory") {
            if !d.is_string() {
                self.r.error(&join(path, "directory"), "expected a string");
            }
        }
        if let Some(f) = m.get("formats") {
            let p = join(path, "formats");
            match f.as_array() {
                Some(a) => {
                    for (k, x) in a.iter().enumerate() {
                        if !matches!(x.as_str(), Some("csv" | "json" | "summary")) {
                            self.r.error(&format!("{p}/{k}"), "expected one of: csv, json, summary");
                        }
                    }
                }
                None => self.r.error(&p, "expected an array"),
            }
        }
    }

    fn root(&mut self, v: &Value) {
        let Some(m) = self.object(v, "") else { return };
        self.allowed(m, "", &["model", "experiment", "output"]);
        let kind = match m.get("model") {
            Some(model) => self.model(model),
            None => {
                self.r.error("/model", "missing required field");
                None
            }
        };
        match m.get("experiment") {
            Some(e) => self.experiment(e, kind),
            None => self.r.error("/experiment", "missing required field"),
        }
        if let Some(o) = m.get("output") {
            self.output(o);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EP: &str = r#"{
        "model": {"kind": "two_level", "e1": {"intercept": 0, "slope": 1},
                  "e2": {"intercept": 0, "slope": -1}, "gamma": [1, 0], "omega": 0.25},
        "experiment": {"kind": "find-ep", "initial": {"lambda": 0.1, "omega": 0.3}}
    }"#;

    #[test]
    fn valid_config() {
        let (r, cfg) = validate(EP);
        assert!(r.errors.is_empty() && r.warnings.is_empty(), "{r:?}");
        assert!(matches!(cfg.unwrap().experiment, Experiment::FindEp { starts: 1, .. }));
    }

    #[test]
    fn negative_width_is_one_violation() {
        let (r, cfg) = validate(&EP.replace("[1, 0]", "[1, -0.5]"));
        assert!(cfg.is_none());
        assert_eq!(r.errors.len(), 1);
        assert_eq!(r.errors[0].path, "/model/gamma/1");
    }

    #[test]
    fn every_violation_is_listed() {
        let text = r#"{"model": {"kind": "two_level", "e1": {"intercept": 0}, "e2": {"intercept": 0, "slope": -1},
            "gamma": [-1, 0], "omega": "x"}, "experiment": {"kind": "loop", "path": {"center": {"lambda": 0, "omega": 0.25}, "radius": 0.1, "steps": 0}}}"#;
        let (r, _) = validate(text);
        let paths: Vec<&str> = r.errors.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(
            paths,
            vec!["/model/e1/slope", "/model/gamma/0", "/model/omega", "/experiment/path/steps"]
        );
    }

    #[test]
    fn unknown_experiment_lists_valid_ones() {
        let (r, _) = validate(&EP.replace("find-ep", "bogus"));
        assert_eq!(r.errors.len(), 1);
        assert!(r.errors[0].message.contains("find-ep, loop, period"));
    }

    #[test]
    fn loop_near_declared_branch_point_warns() {
        let text = EP.replace(
            r#"{"kind": "find-ep", "initial": {"lambda": 0.1, "omega": 0.3}}"#,
            r#"{"kind": "loop", "path": {"center": {"lambda": 0, "omega": 0.25}, "radius": 0.1, "steps": 64,
                "known_branch_points": [{"lambda": 0.1, "omega": 0.25}]}}"#,
        );
        let (r, cfg) = validate(&text);
        assert!(r.errors.is_empty(), "{r:?}");
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.warnings[0].path, "/experiment/path/known_branch_points/0");
        assert!(cfg.is_some());
    }

    #[test]
    fn n_level_shapes() {
        let text = r#"{"model": {"kind": "n_level", "h0": [[1, 0.2], [0.3, -1]], "w": [[1], [1], [0]]},
            "experiment": {"kind": "poles"}}"#;
        let (r, _) = validate(text);
        let paths: Vec<&str> = r.errors.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, vec!["/model/h0/0/1", "/model/w"]);
    }
}
