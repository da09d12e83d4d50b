//! Adiabatic continuation of eigenpairs along paths in the `(lambda, omega)`
//! plane, monodromy of closed loops, and eigenvalue surface scans.
//!
//! Eigenvectors are carried from one parameter point to the next by matching
//! c-overlaps. Two phase conventions are available for the monodromy matrix:
//!
//! * [`PhaseConvention::CProductContinuity`] keeps each c-normalized vector's
//!   sign continuous (c-overlap with its predecessor has positive real part).
//!   The monodromy is then a signed permutation.
//! * [`PhaseConvention::PaperExchangeRule`] keeps the branch permutation from
//!   the numerical continuation but takes the phases from the exchange rule
//!   `{phi_1, phi_2} -> {-i phi_2, +i phi_1}` applied at every crossing of
//!   `e1 = e2` under overcritical coupling (the negated map when the crossing
//!   is traversed the other way). Subcritical crossings contribute nothing.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branch::{classify, CouplingRegime};
use crate::eigensystem::{
    c_product, eig_complex_symmetric, BiorthogonalEigensystem, ComplexEigenvalue, EigenError,
};
use crate::model::{CMatrix, CVector, ParameterPoint, ParametricFamily, I};

/// Consecutive same-branch c-overlaps must exceed this in modulus.
pub const MATCH_THRESHOLD: f64 = 0.8;
/// Maximum recursion depth when a step has to be bisected.
pub const MAX_BISECTIONS: usize = 12;
/// Default clearance between a loop and any known branch point.
pub const DEFAULT_DELTA_MIN: f64 = 1e-3;
/// `||M^p - I||` below this counts as restored.
pub const PERIOD_TOL: f64 = 1e-6;
pub const MAX_PERIOD_TURNS: usize = 8;
pub const MIN_STEPS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoopError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("path passes within {distance:e} of the branch point at ({}, {})", point.lambda, point.omega)]
    TooCloseToBranchPoint { point: ParameterPoint, distance: f64 },
    #[error("continuation hit an exceptional point at step {step} (lambda={}, omega={})", point.lambda, point.omega)]
    HitsExceptionalPoint { step: usize, point: ParameterPoint },
    #[error("branch matching failed after {MAX_BISECTIONS} bisections at step {step}")]
    ContinuityFailure { step: usize },
    #[error("the exchange-rule convention needs a two-level model with crossing levels")]
    UnsupportedConvention,
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    CProductContinuity,
    PaperExchangeRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopShape {
    Circle { radius_lambda: f64, radius_omega: f64 },
    /// Vertices relative to nothing (absolute coordinates); the polygon is
    /// closed automatically.
    Polyline { points: Vec<ParameterPoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPath {
    pub center: ParameterPoint,
    pub shape: LoopShape,
    pub steps: usize,
    pub orientation: Orientation,
    pub turns: usize,
}

impl LoopPath {
    pub fn circle(center: ParameterPoint, radius: f64, steps: usize) -> Self {
        Self {
            center,
            shape: LoopShape::Circle {
                radius_lambda: radius,
                radius_omega: radius,
            },
            steps,
            orientation: Orientation::Positive,
            turns: 1,
        }
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_turns(mut self, turns: usize) -> Self {
        self.turns = turns;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn validate(&self) -> Result<(), LoopError> {
        let bad = |m: &str| Err(LoopError::InvalidPath(m.to_string()));
        if self.steps < MIN_STEPS {
            return bad(&format!("steps must be at least {MIN_STEPS}, got {}", self.steps));
        }
        if self.turns < 1 {
            return bad("turns must be at least 1");
        }
        if !self.center.is_finite() {
            return bad("center must be finite");
        }
        match &self.shape {
            LoopShape::Circle {
                radius_lambda,
                radius_omega,
            } => {
                if !(radius_lambda.is_finite() && *radius_lambda > 0.0)
                    || !(radius_omega.is_finite() && *radius_omega > 0.0)
                {
                    return bad("circle radii must be positive and finite");
                }
            }
            LoopShape::Polyline { points } => {
                let verts = polygon_vertices(points);
                if verts.len() < 3 {
                    return bad("a polyline loop needs at least three distinct vertices");
                }
                if verts.iter().any(|p| !p.is_finite()) {
                    return bad("polyline vertices must be finite");
                }
                if self.steps < verts.len() {
                    return bad("steps must be at least the number of polyline edges");
                }
            }
        }
        Ok(())
    }

    /// `steps + 1` points of one turn in the path's orientation; the last
    /// point equals the first exactly.
    pub fn one_turn(&self) -> Vec<ParameterPoint> {
        let n = self.steps;
        let mut pts = match &self.shape {
            LoopShape::Circle {
                radius_lambda,
                radius_omega,
            } => {
                let dir = match self.orientation {
                    Orientation::Positive => 1.0,
                    Orientation::Negative => -1.0,
                };
                (0..n)
                    .map(|j| {
                        let theta = dir * TAU * j as f64 / n as f64;
                        ParameterPoint::new(
                            self.center.lambda + radius_lambda * theta.cos(),
                            self.center.omega + radius_omega * theta.sin(),
                        )
                    })
                    .collect::<Vec<_>>()
            }
            LoopShape::Polyline { points } => {
                let mut verts = polygon_vertices(points);
                if self.orientation == Orientation::Negative {
                    verts[1..].reverse();
                }
                subdivide_polygon(&verts, n)
            }
        };
        pts.push(pts[0]);
        pts
    }

    /// Distance from `p` to the sampled path.
    pub fn distance_to(&self, p: &ParameterPoint) -> f64 {
        let pts = self.one_turn();
        pts.windows(2)
            .map(|w| segment_distance(&w[0], &w[1], p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_clearance(
        &self,
        known: &[ParameterPoint],
        delta_min: f64,
    ) -> Result<(), LoopError> {
        for bp in known {
            let distance = self.distance_to(bp);
            if distance < delta_min {
                return Err(LoopError::TooCloseToBranchPoint {
                    point: *bp,
                    distance,
                });
            }
        }
        Ok(())
    }
}

fn polygon_vertices(points: &[ParameterPoint]) -> Vec<ParameterPoint> {
    let mut verts: Vec<ParameterPoint> = Vec::with_capacity(points.len());
    for p in points {
        if verts.last() != Some(p) {
            verts.push(*p);
        }
    }
    if verts.len() > 1 && verts.first() == verts.last() {
        verts.pop();
    }
    verts
}

/// Samples a closed polygon with `n` points, giving each edge a share of the
/// points proportional to its length (at least one).
fn subdivide_polygon(verts: &[ParameterPoint], n: usize) -> Vec<ParameterPoint> {
    let m = verts.len();
    let lengths: Vec<f64> = (0..m).map(|k| verts[k].distance(&verts[(k + 1) % m])).collect();
    let total: f64 = lengths.iter().sum();
    let mut counts: Vec<usize> = lengths
        .iter()
        .map(|l| ((l / total) * n as f64).floor().max(1.0) as usize)
        .collect();
    // distribute the remainder to the longest edges, or trim from them
    let mut assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| lengths[b].total_cmp(&lengths[a]));
    let mut cursor = 0;
    while assigned < n {
        counts[order[cursor % m]] += 1;
        assigned += 1;
        cursor += 1;
    }
    while assigned > n {
        let k = order[cursor % m];
        if counts[k] > 1 {
            counts[k] -= 1;
            assigned -= 1;
        }
        cursor += 1;
    }
    let mut pts = Vec::with_capacity(n);
    for k in 0..m {
        let a = verts[k];
        let b = verts[(k + 1) % m];
        for j in 0..counts[k] {
            pts.push(a.lerp(&b, j as f64 / counts[k] as f64));
        }
    }
    pts
}

fn segment_distance(a: &ParameterPoint, b: &ParameterPoint, p: &ParameterPoint) -> f64 {
    let (dx, dy) = (b.lambda - a.lambda, b.omega - a.omega);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.lambda - a.lambda) * dx + (p.omega - a.omega) * dy) / len2).clamp(0.0, 1.0)
    };
    a.lerp(b, t).distance(p)
}

/// Crossing of `e1 = e2` met along a path (two-level models only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub step: usize,
    pub omega: f64,
    pub regime: CouplingRegime,
    /// `e1 - e2` went from positive to non-positive.
    pub forth: bool,
    pub exchanged: bool,
}

/// One continuation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub point: ParameterPoint,
    /// Eigenvalues in branch order.
    pub values: Vec<ComplexEigenvalue>,
    pub a_metrics: Vec<f64>,
    /// `B_1^2` for two levels, the largest `B_k^l` otherwise.
    pub b_max: f64,
    /// c-overlap of each branch's vector with its predecessor.
    pub overlaps: Vec<Complex64>,
    pub bisections: usize,
    pub crossing: Option<CrossingEvent>,
}

#[derive(Debug)]
enum TrackError {
    Ep(ParameterPoint),
    Continuity,
    Eigen(EigenError),
}

/// Carries an ordered set of c-normalized eigenvectors along a path.
pub(crate) struct Tracker<'a, F: ParametricFamily + ?Sized> {
    family: &'a F,
    pub point: ParameterPoint,
    pub vectors: Vec<CVector>,
    pub values: Vec<Complex64>,
    pub system: BiorthogonalEigensystem,
}

impl<'a, F: ParametricFamily + ?Sized> Tracker<'a, F> {
    pub fn start(family: &'a F, point: ParameterPoint) -> Result<Self, LoopError> {
        let system = eig_complex_symmetric(&family.matrix_at(point))?;
        if system.ep_flag {
            return Err(LoopError::HitsExceptionalPoint { step: 0, point });
        }
        Ok(Self {
            family,
            point,
            vectors: system.vectors.clone(),
            values: system.complex_values(),
            system,
        })
    }

    /// Moves to `target`, bisecting as needed. Returns the c-overlaps with the
    /// previous vectors (of the last sub-step) and the number of bisections.
    fn advance(&mut self, target: ParameterPoint) -> Result<(Vec<Complex64>, usize), TrackError> {
        let mut bisections = 0;
        let overlaps = self.advance_rec(target, 0, &mut bisections)?;
        Ok((overlaps, bisections))
    }

    fn advance_rec(
        &mut self,
        target: ParameterPoint,
        depth: usize,
        bisections: &mut usize,
    ) -> Result<Vec<Complex64>, TrackError> {
        let system = eig_complex_symmetric(&self.family.matrix_at(target)).map_err(TrackError::Eigen)?;
        if system.ep_flag {
            return Err(TrackError::Ep(target));
        }
        if let Some((perm, overlaps)) = match_branches(&self.vectors, &system.vectors) {
            let mut vectors = Vec::with_capacity(perm.len());
            let mut values = Vec::with_capacity(perm.len());
            let mut signed = Vec::with_capacity(perm.len());
            for (k, &j) in perm.iter().enumerate() {
                let mut v = system.vectors[j].clone();
                let mut ov = overlaps[k];
                if ov.re < 0.0 {
                    v.neg_mut();
                    ov = -ov;
                }
                vectors.push(v);
                values.push(system.values[j].value);
                signed.push(ov);
            }
            self.vectors = vectors;
            self.values = values;
            self.point = target;
            self.system = system;
            return Ok(signed);
        }
        if depth >= MAX_BISECTIONS {
            return Err(TrackError::Continuity);
        }
        *bisections += 1;
        let mid = self.point.lerp(&target, 0.5);
        self.advance_rec(mid, depth + 1, bisections)?;
        self.advance_rec(target, depth + 1, bisections)
    }

    fn step_to(&mut self, target: ParameterPoint, step: usize) -> Result<(Vec<Complex64>, usize), LoopError> {
        self.advance(target).map_err(|e| match e {
            TrackError::Ep(point) => LoopError::HitsExceptionalPoint { step, point },
            TrackError::Continuity => LoopError::ContinuityFailure { step },
            TrackError::Eigen(e) => LoopError::Eigen(e),
        })
    }

    /// Current A_k and B metrics in branch order.
    fn metrics(&self) -> (Vec<f64>, f64) {
        let a: Vec<f64> = self.vectors.iter().map(|v| v.norm_squared()).collect();
        let mut b_max: f64 = 0.0;
        for k in 0..self.vectors.len() {
            for l in k + 1..self.vectors.len() {
                b_max = b_max.max(self.vectors[k].dotc(&self.vectors[l]).norm());
            }
        }
        (a, b_max)
    }

    fn record(&self, step: usize, overlaps: Vec<Complex64>, bisections: usize) -> StepRecord {
        let (a_metrics, b_max) = self.metrics();
        StepRecord {
            step,
            point: self.point,
            values: self.values.iter().copied().map(ComplexEigenvalue::from_value).collect(),
            a_metrics,
            b_max,
            overlaps,
            bisections,
            crossing: None,
        }
    }
}

/// Pairs each previous vector with the new vector of largest |c-overlap|.
/// Returns `None` unless the pairing is a permutation with every overlap
/// above [`MATCH_THRESHOLD`].
fn match_branches(prev: &[CVector], next: &[CVector]) -> Option<(Vec<usize>, Vec<Complex64>)> {
    let n = prev.len();
    let mut perm = Vec::with_capacity(n);
    let mut overlaps = Vec::with_capacity(n);
    let mut used = vec![false; n];
    for p in prev {
        let (j, ov) = next
            .iter()
            .enumerate()
            .map(|(j, v)| (j, c_product(p, v)))
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))?;
        if ov.norm() < MATCH_THRESHOLD || used[j] {
            return None;
        }
        used[j] = true;
        perm.push(j);
        overlaps.push(ov);
    }
    Some((perm, overlaps))
}

/// The forward exchange map `phi_1 -> -i phi_2, phi_2 -> +i phi_1`; row k
/// holds the image of `phi_k`.
fn exchange_forth() -> CMatrix {
    let z = Complex64::new(0.0, 0.0);
    CMatrix::from_row_slice(2, 2, &[z, -I, I, z])
}

fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

fn max_deviation_from_identity(m: &CMatrix) -> f64 {
    (m - identity(m.nrows())).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Smallest `p <= max_power` with `||M^p - I|| < PERIOD_TOL`.
pub fn matrix_period(m: &CMatrix, max_power: usize) -> Option<usize> {
    let mut acc = identity(m.nrows());
    for p in 1..=max_power {
        acc = &acc * m;
        if max_deviation_from_identity(&acc) < PERIOD_TOL {
            return Some(p);
        }
    }
    None
}

/// Result of carrying the eigensystem around a closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyReport {
    pub convention: PhaseConvention,
    pub turns: usize,
    /// `branch_permutation[k] = l`: the branch that started as eigenpair `k`
    /// ends on initial eigenpair `l` (0-based).
    pub branch_permutation: Vec<usize>,
    /// Row k holds the final vector of branch k in the initial c-normalized
    /// basis.
    pub phase_matrix: CMatrix,
    /// Smallest restoring power of `phase_matrix` (at most 8).
    pub period: Option<usize>,
    pub initial_values: Vec<ComplexEigenvalue>,
    pub final_values: Vec<ComplexEigenvalue>,
    /// `max_k |final_k - initial_{perm(k)}|`.
    pub eigenvalue_closure: f64,
    /// Under the exchange rule: whether the rule's permutation matches the
    /// numerical one.
    pub rule_consistent: Option<bool>,
    pub crossings: Vec<CrossingEvent>,
    pub trace: Vec<StepRecord>,
}

/// Internal continuation state shared by single runs and period scans.
struct LoopRun<'a, F: ParametricFamily + ?Sized> {
    tracker: Tracker<'a, F>,
    convention: PhaseConvention,
    initial_vectors: Vec<CVector>,
    initial_values: Vec<Complex64>,
    rule: CMatrix,
    crossings: Vec<CrossingEvent>,
    trace: Vec<StepRecord>,
    step: usize,
}

impl<'a, F: ParametricFamily + ?Sized> LoopRun<'a, F> {
    fn new(family: &'a F, path: &LoopPath, convention: PhaseConvention) -> Result<Self, LoopError> {
        path.validate()?;
        if convention == PhaseConvention::PaperExchangeRule {
            match family.as_two_level() {
                Some(m) if m.crossing_lambda().is_some() => {}
                _ => return Err(LoopError::UnsupportedConvention),
            }
        }
        let start = path.one_turn()[0];
        let tracker = Tracker::start(family, start)?;
        Ok(Self {
            initial_vectors: tracker.vectors.clone(),
            initial_values: tracker.values.clone(),
            rule: identity(family.dim()),
            tracker,
            convention,
            crossings: vec![],
            trace: vec![],
            step: 0,
        })
    }

    fn run_turn(&mut self, path: &LoopPath) -> Result<(), LoopError> {
        let pts = path.one_turn();
        for w in pts.windows(2) {
            self.step += 1;
            let (overlaps, bisections) = self.tracker.step_to(w[1], self.step)?;
            let mut rec = self.tracker.record(self.step, overlaps, bisections);
            if let Some(model) = self.tracker.family.as_two_level() {
                if let Some(ev) = detect_crossing(model, &w[0], &w[1], self.step)? {
                    if ev.exchanged && self.convention == PhaseConvention::PaperExchangeRule {
                        let x = if ev.forth { exchange_forth() } else { -exchange_forth() };
                        self.rule = &self.rule * x;
                    }
                    rec.crossing = Some(ev);
                    self.crossings.push(ev);
                }
            }
            self.trace.push(rec);
        }
        Ok(())
    }

    /// c-product projections of the current vectors on the initial basis.
    fn continuity_matrix(&self) -> CMatrix {
        let n = self.initial_vectors.len();
        CMatrix::from_fn(n, n, |k, l| {
            c_product(&self.initial_vectors[l], &self.tracker.vectors[k])
        })
    }

    fn phase_matrix(&self) -> CMatrix {
        match self.convention {
            PhaseConvention::CProductContinuity => self.continuity_matrix(),
            PhaseConvention::PaperExchangeRule => self.rule.clone(),
        }
    }

    fn report(&self, turns: usize) -> MonodromyReport {
        let cont = self.continuity_matrix();
        let perm = row_permutation(&cont);
        let phase_matrix = self.phase_matrix();
        let rule_consistent = match self.convention {
            PhaseConvention::PaperExchangeRule => Some(row_permutation(&phase_matrix) == perm),
            PhaseConvention::CProductContinuity => None,
        };
        let eigenvalue_closure = perm
            .iter()
            .enumerate()
            .map(|(k, &l)| (self.tracker.values[k] - self.initial_values[l]).norm())
            .fold(0.0, f64::max);
        MonodromyReport {
            convention: self.convention,
            turns,
            branch_permutation: perm,
            period: matrix_period(&phase_matrix, MAX_PERIOD_TURNS),
            phase_matrix,
            initial_values: self
                .initial_values
                .iter()
                .copied()
                .map(ComplexEigenvalue::from_value)
                .collect(),
            final_values: self
                .tracker
                .values
                .iter()
                .copied()
                .map(ComplexEigenvalue::from_value)
                .collect(),
            eigenvalue_closure,
            rule_consistent,
            crossings: self.crossings.clone(),
            trace: self.trace.clone(),
        }
    }
}

fn row_permutation(m: &CMatrix) -> Vec<usize> {
    (0..m.nrows())
        .map(|k| {
            (0..m.ncols())
                .max_by(|&a, &b| m[(k, a)].norm().total_cmp(&m[(k, b)].norm()))
                .unwrap_or(0)
        })
        .collect()
}

fn detect_crossing(
    model: &crate::model::TwoLevelModel,
    a: &ParameterPoint,
    b: &ParameterPoint,
    step: usize,
) -> Result<Option<CrossingEvent>, LoopError> {
    let da = model.level_difference(a.lambda);
    let db = model.level_difference(b.lambda);
    if (da > 0.0) == (db > 0.0) {
        return Ok(None);
    }
    let t = da / (da - db);
    let omega = a.omega + t * (b.omega - a.omega);
    let regime = classify(&model.with_omega(omega), omega)
        .map_err(|_| LoopError::UnsupportedConvention)?
        .regime;
    if regime == CouplingRegime::DoublePole {
        return Err(LoopError::HitsExceptionalPoint {
            step,
            point: a.lerp(b, t),
        });
    }
    Ok(Some(CrossingEvent {
        step,
        omega,
        regime,
        forth: da > 0.0,
        exchanged: regime == CouplingRegime::Overcritical,
    }))
}

/// Continues the eigensystem `path.turns` times around `path`.
pub fn continue_eigensystem<F: ParametricFamily + ?Sized>(
    family: &F,
    path: &LoopPath,
    convention: PhaseConvention,
) -> Result<MonodromyReport, LoopError> {
    let mut run = LoopRun::new(family, path, convention)?;
    for _ in 0..path.turns {
        run.run_turn(path)?;
    }
    Ok(run.report(path.turns))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodReport {
    pub convention: PhaseConvention,
    pub period: Option<usize>,
    /// `max |M_p - I|` after each completed turn.
    pub deviations: Vec<f64>,
    /// Accumulated phase matrix after each completed turn.
    pub matrices: Vec<CMatrix>,
    pub branch_permutations: Vec<Vec<usize>>,
}

/// Goes around `path` (one turn at a time, ignoring `path.turns`) until the
/// accumulated phase matrix returns to the identity or `max_turns` is spent.
pub fn measure_period<F: ParametricFamily + ?Sized>(
    family: &F,
    path: &LoopPath,
    convention: PhaseConvention,
    max_turns: usize,
) -> Result<PeriodReport, LoopError> {
    if max_turns == 0 || max_turns > MAX_PERIOD_TURNS {
        return Err(LoopError::InvalidPath(format!(
            "max_turns must be in 1..={MAX_PERIOD_TURNS}, got {max_turns}"
        )));
    }
    let mut run = LoopRun::new(family, path, convention)?;
    let mut report = PeriodReport {
        convention,
        period: None,
        deviations: vec![],
        matrices: vec![],
        branch_permutations: vec![],
    };
    for p in 1..=max_turns {
        run.run_turn(path)?;
        let m = run.phase_matrix();
        let dev = max_deviation_from_identity(&m);
        report.deviations.push(dev);
        report.branch_permutations.push(row_permutation(&run.continuity_matrix()));
        report.matrices.push(m);
        if dev < PERIOD_TOL {
            report.period = Some(p);
            break;
        }
    }
    Ok(report)
}

/// A node of an open-path continuation, with the carried vectors.
#[derive(Debug, Clone)]
pub(crate) struct SweepNode {
    pub record: StepRecord,
    pub vectors: Vec<CVector>,
}

pub(crate) fn continue_open_path<F: ParametricFamily + ?Sized>(
    family: &F,
    points: &[ParameterPoint],
) -> Result<Vec<SweepNode>, LoopError> {
    let Some(first) = points.first() else {
        return Ok(vec![]);
    };
    let mut tracker = Tracker::start(family, *first)?;
    let n = family.dim();
    let mut nodes = vec![SweepNode {
        record: tracker.record(0, vec![Complex64::new(1.0, 0.0); n], 0),
        vectors: tracker.vectors.clone(),
    }];
    for (step, w) in points.windows(2).enumerate() {
        let (overlaps, bisections) = tracker.step_to(w[1], step + 1)?;
        let mut record = tracker.record(step + 1, overlaps, bisections);
        if let Some(model) = family.as_two_level() {
            record.crossing = detect_crossing(model, &w[0], &w[1], step + 1).unwrap_or(None);
        }
        nodes.push(SweepNode {
            record,
            vectors: tracker.vectors.clone(),
        });
    }
    Ok(nodes)
}

/// Continues the eigensystem along `lambdas` at fixed `omega`.
pub fn lambda_sweep<F: ParametricFamily + ?Sized>(
    family: &F,
    omega: f64,
    lambdas: &[f64],
) -> Result<Vec<StepRecord>, LoopError> {
    let pts: Vec<ParameterPoint> = lambdas.iter().map(|&l| ParameterPoint::new(l, omega)).collect();
    Ok(continue_open_path(family, &pts)?
        .into_iter()
        .map(|n| n.record)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceNode {
    pub lambda_index: usize,
    pub omega_index: usize,
    pub point: ParameterPoint,
    /// Eigenvalues in branch order.
    pub values: Vec<ComplexEigenvalue>,
    /// Within `delta_min` of a known branch point, or numerically degenerate.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceScan {
    pub lambdas: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Row-major: all lambdas for the first omega, then the next omega.
    pub nodes: Vec<SurfaceNode>,
}

impl SurfaceScan {
    pub fn node(&self, lambda_index: usize, omega_index: usize) -> &SurfaceNode {
        &self.nodes[omega_index * self.lambdas.len() + lambda_index]
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<(), LoopError> {
    if grid.is_empty() {
        return Err(LoopError::InvalidPath(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(LoopError::InvalidPath(format!("{name} grid must be finite")));
    }
    let inc = grid.windows(2).all(|w| w[1] > w[0]);
    let dec = grid.windows(2).all(|w| w[1] < w[0]);
    if !(inc || dec) {
        return Err(LoopError::InvalidPath(format!("{name} grid must be strictly monotone")));
    }
    Ok(())
}

/// Both eigenvalue sheets over a `(lambda, omega)` grid. Branch labels follow
/// continuation down the first column from the grid origin, then along each
/// row.
pub fn eigenvalue_surface_scan<F: ParametricFamily + ?Sized>(
    family: &F,
    lambdas: &[f64],
    omegas: &[f64],
    known_branch_points: &[ParameterPoint],
    delta_min: f64,
) -> Result<SurfaceScan, LoopError> {
    check_grid("lambda", lambdas)?;
    check_grid("omega", omegas)?;
    let nl = lambdas.len();
    struct Cell {
        vectors: Vec<CVector>,
        values: Vec<Complex64>,
        flagged: bool,
    }
    let solve = |p: ParameterPoint, prev: Option<&Cell>| -> Result<Cell, LoopError> {
        let sys = eig_complex_symmetric(&family.matrix_at(p))?;
        let near = known_branch_points.iter().any(|bp| bp.distance(&p) < delta_min);
        let flagged = near || sys.ep_flag;
        let (vectors, values) = match prev {
            None => (sys.vectors.clone(), sys.complex_values()),
            Some(prev) => {
                let matched = if flagged || prev.flagged {
                    None
                } else {
                    match_branches(&prev.vectors, &sys.vectors)
                };
                let perm = match matched {
                    Some((perm, _)) => perm,
                    None => nearest_value_permutation(&prev.values, &sys.complex_values()),
                };
                let mut vectors = Vec::with_capacity(perm.len());
                for (k, &j) in perm.iter().enumerate() {
                    let mut v = sys.vectors[j].clone();
                    if c_product(&prev.vectors[k], &v).re < 0.0 {
                        v.neg_mut();
                    }
                    vectors.push(v);
                }
                let values = perm.iter().map(|&j| sys.values[j].value).collect();
                (vectors, values)
            }
        };
        Ok(Cell {
            vectors,
            values,
            flagged,
        })
    };

    let mut nodes = Vec::with_capacity(nl * omegas.len());
    let mut column_head: Option<Cell> = None;
    for (j, &omega) in omegas.iter().enumerate() {
        let head = solve(ParameterPoint::new(lambdas[0], omega), column_head.as_ref())?;
        let mut row_prev: Option<Cell> = None;
        for (i, &lambda) in lambdas.iter().enumerate() {
            let cell = if i == 0 {
                Cell {
                    vectors: head.vectors.clone(),
                    values: head.values.clone(),
                    flagged: head.flagged,
                }
            } else {
                solve(ParameterPoint::new(lambda, omega), row_prev.as_ref())?
            };
            nodes.push(SurfaceNode {
                lambda_index: i,
                omega_index: j,
                point: ParameterPoint::new(lambda, omega),
                values: cell.values.iter().copied().map(ComplexEigenvalue::from_value).collect(),
                flagged: cell.flagged,
            });
            row_prev = Some(cell);
        }
        column_head = Some(head);
    }
    Ok(SurfaceScan {
        lambdas: lambdas.to_vec(),
        omegas: omegas.to_vec(),
        nodes,
    })
}

fn nearest_value_permutation(prev: &[Complex64], next: &[Complex64]) -> Vec<usize> {
    let mut used = vec![false; next.len()];
    prev.iter()
        .map(|p| {
            let j = (0..next.len())
                .filter(|&j| !used[j])
                .min_by(|&a, &b| (next[a] - p).norm().total_cmp(&(next[b] - p).norm()))
                .expect("equal dimensions");
            used[j] = true;
            j
        })
        .collect()
}
