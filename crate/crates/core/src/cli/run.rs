use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::config::{Config, Experiment, Model, PathConfig};
use super::output::{cmatrix, complex, num, numbers, summary_lines, Cell, Table};
use crate::adiabatic::{
    continue_eigensystem, eigenvalue_surface_scan, lambda_sweep, measure_period, LoopError,
    MonodromyReport, PhaseConvention, StepRecord,
};
use crate::branch::{classify, find_branch_point, find_degeneracy, BranchError, BranchPoint};
use crate::model::{EffectiveHamiltonianModel, ParameterPoint, ParametricFamily, TwoLevelModel};
use crate::scattering::{self, ScatteringError};

/// Why an experiment could not produce a result.
#[derive(Debug)]
pub enum Failure {
    /// The config is acceptable to the validator but not to the experiment.
    Invalid(String),
    /// Non-convergence, a loop hitting a branch point and similar.
    Numerical(String),
}

impl From<LoopError> for Failure {
    fn from(e: LoopError) -> Self {
        match e {
            LoopError::InvalidPath(_) | LoopError::UnsupportedConvention => Failure::Invalid(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<BranchError> for Failure {
    fn from(e: BranchError) -> Self {
        match e {
            BranchError::Loop(l) => l.into(),
            BranchError::NonFiniteInitial | BranchError::TooFewSteps | BranchError::TooSmall(_) => {
                Failure::Invalid(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<ScatteringError> for Failure {
    fn from(e: ScatteringError) -> Self {
        match e {
            ScatteringError::InvalidGrid(_) | ScatteringError::Model(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

pub struct Outcome {
    pub trace: Table,
    pub result: Map<String, Value>,
    pub summary: String,
}

impl Model {
    fn family(&self) -> &dyn ParametricFamily {
        match self {
            Model::TwoLevel(m) => m,
            Model::NLevel { family, .. } => family,
        }
    }

    fn default_omega(&self) -> f64 {
        match self {
            Model::TwoLevel(m) => m.omega,
            Model::NLevel { .. } => 0.0,
        }
    }

    fn effective_at(&self, point: Option<ParameterPoint>) -> Result<EffectiveHamiltonianModel, Failure> {
        match self {
            Model::TwoLevel(m) => Ok(m.effective_model(point.unwrap_or(ParameterPoint::new(0.0, m.omega)))),
            Model::NLevel { effective, family } => match point {
                None => Ok(effective.clone()),
                Some(p) => {
                    let h0 = effective.h0() + &family.d_lambda * p.lambda + &family.d_omega * p.omega;
                    EffectiveHamiltonianModel::with_form_factors(
                        h0,
                        effective.w().clone(),
                        effective.form_factors().to_vec(),
                    )
                    .map_err(|e| Failure::Invalid(e.to_string()))
                }
            },
        }
    }

    fn two_level(&self, what: &str) -> Result<&TwoLevelModel, Failure> {
        match self {
            Model::TwoLevel(m) => Ok(m),
            Model::NLevel { .. } => Err(Failure::Invalid(format!("{what} needs a two_level model"))),
        }
    }
}

pub fn run(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let model = cfg.model.build().map_err(Failure::Invalid)?;
    let mut out = match &cfg.experiment {
        Experiment::Sweep { omega, lambda } => sweep(&model, omega.unwrap_or(model.default_omega()), &lambda.values()),
        Experiment::Surface {
            lambda,
            omega,
            known_branch_points,
            delta_min,
        } => surface(&model, &lambda.values(), &omega.values(), known_branch_points, *delta_min),
        Experiment::Classify { omega } => classify_grid(model.two_level("classify")?, &omega.values()),
        Experiment::FindEp {
            initial,
            starts,
            search_box,
        } => {
            let bx = search_box.as_ref().map(|b| (b.lambda, b.omega));
            find_ep(&model, *initial, *starts, bx, seed)
        }
        Experiment::Loop { path } => run_loop(&model, path),
        Experiment::Period { path, max_turns } => period(&model, path, *max_turns),
        Experiment::Smatrix { point, energy } => smatrix(&model.effective_at(*point)?, &energy.values()),
        Experiment::Poles { point } => poles(&model.effective_at(*point)?),
        Experiment::Trapping { point, alpha } => trapping(&model.effective_at(*point)?, &alpha.values()),
        Experiment::Smoothness {
            branch_point,
            direction,
            deltas,
            energy,
        } => smoothness(model.two_level("smoothness")?, *branch_point, *direction, deltas, &energy.values()),
    }?;
    let mut result = Map::new();
    result.insert("experiment".into(), json!(cfg.experiment.name()));
    result.insert("seed".into(), json!(seed));
    result.insert("model".into(), serde_json::to_value(&cfg.model).expect("model serializes"));
    result.append(&mut out.result);
    out.result = result;
    Ok(out)
}

fn point_json(p: ParameterPoint) -> Value {
    json!({"lambda": num(p.lambda), "omega": num(p.omega)})
}

fn level_columns(n: usize, with_overlaps: bool) -> Vec<String> {
    let mut cols = vec![];
    for k in 1..=n {
        cols.push(format!("E_{k}"));
        cols.push(format!("Gamma_{k}"));
    }
    for k in 1..=n {
        cols.push(format!("A_{k}"));
    }
    cols.push(if n == 2 { "B_12".into() } else { "B_max".into() });
    if with_overlaps {
        for k in 1..=n {
            cols.push(format!("overlap_{k}_re"));
            cols.push(format!("overlap_{k}_im"));
        }
    }
    cols
}

fn level_cells(r: &StepRecord) -> Vec<Cell> {
    let mut cells = vec![];
    for v in &r.values {
        cells.push(v.energy.into());
        cells.push(v.width.into());
    }
    for a in &r.a_metrics {
        cells.push((*a).into());
    }
    cells.push(r.b_max.into());
    for o in &r.overlaps {
        cells.push(o.re.into());
        cells.push(o.im.into());
    }
    cells
}

fn step_table(records: &[StepRecord], n: usize) -> Table {
    let mut cols: Vec<String> = vec!["step".into(), "lambda".into(), "omega".into()];
    cols.extend(level_columns(n, true));
    cols.push("bisections".into());
    cols.push("crossing".into());
    let mut t = Table::new(cols);
    for r in records {
        let mut row: Vec<Cell> = vec![r.step.into(), r.point.lambda.into(), r.point.omega.into()];
        row.extend(level_cells(r));
        row.push(r.bisections.into());
        row.push(match r.crossing {
            None => "none".into(),
            Some(c) if c.exchanged => "exchange".into(),
            Some(_) => "free".into(),
        });
        t.push(row);
    }
    t
}

fn sweep(model: &Model, omega: f64, lambdas: &[f64]) -> Result<Outcome, Failure> {
    let family = model.family();
    let records = lambda_sweep(family, omega, lambdas)?;
    let n = family.dim();
    let trace = step_table(&records, n);
    let gap = |f: &dyn Fn(&StepRecord) -> f64| records.iter().map(f).fold(f64::INFINITY, f64::min);
    let (min_e, min_g) = if n >= 2 {
        (
            gap(&|r| (r.values[0].energy - r.values[1].energy).abs()),
            gap(&|r| (r.values[0].width - r.values[1].width).abs()),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    let crossings: Vec<Value> = records
        .iter()
        .filter_map(|r| r.crossing)
        .map(|c| json!({"step": c.step, "omega": num(c.omega), "regime": c.regime, "exchanged": c.exchanged}))
        .collect();
    let mut result = Map::new();
    result.insert("omega".into(), num(omega));
    result.insert("points".into(), json!(records.len()));
    result.insert("min_energy_gap".into(), num(min_e));
    result.insert("min_width_gap".into(), num(min_g));
    result.insert("crossings".into(), Value::Array(crossings));
    if let Model::TwoLevel(m) = model {
        if let Ok(c) = classify(m, omega) {
            result.insert("regime".into(), json!(c.regime));
        }
    }
    let summary = summary_lines(&[
        ("experiment", "sweep".into()),
        ("omega", format!("{omega}")),
        ("points", records.len().to_string()),
        ("min energy gap", format!("{min_e:.6e}")),
        ("min width gap", format!("{min_g:.6e}")),
    ]);
    Ok(Outcome { trace, result, summary })
}

fn surface(
    model: &Model,
    lambdas: &[f64],
    omegas: &[f64],
    known: &[ParameterPoint],
    delta_min: f64,
) -> Result<Outcome, Failure> {
    let family = model.family();
    let scan = eigenvalue_surface_scan(family, lambdas, omegas, known, delta_min)?;
    let n = family.dim();
    let mut cols: Vec<String> = vec!["lambda_index".into(), "omega_index".into(), "lambda".into(), "omega".into()];
    for k in 1..=n {
        cols.push(format!("E_{k}"));
        cols.push(format!("Gamma_{k}"));
    }
    cols.push("flagged".into());
    let mut trace = Table::new(cols);
    for node in &scan.nodes {
        let mut row: Vec<Cell> = vec![
            node.lambda_index.into(),
            node.omega_index.into(),
            node.point.lambda.into(),
            node.point.omega.into(),
        ];
        for v in &node.values {
            row.push(v.energy.into());
            row.push(v.width.into());
        }
        row.push(node.flagged.into());
        trace.push(row);
    }
    let flagged = scan.nodes.iter().filter(|n| n.flagged).count();
    let mut result = Map::new();
    result.insert("nodes".into(), json!(scan.nodes.len()));
    result.insert("flagged_nodes".into(), json!(flagged));
    let summary = summary_lines(&[
        ("experiment", "surface".into()),
        ("grid", format!("{} x {}", lambdas.len(), omegas.len())),
        ("flagged nodes", flagged.to_string()),
    ]);
    Ok(Outcome { trace, result, summary })
}

fn classify_grid(model: &TwoLevelModel, omegas: &[f64]) -> Result<Outcome, Failure> {
    let mut trace = Table::new(["omega", "lambda_cr", "F_R", "regime"]);
    let mut entries = vec![];
    let mut lines = vec![("experiment", "classify".to_string())];
    for &w in omegas {
        let c = classify(model, w)?;
        let regime = serde_json::to_value(c.regime).expect("enum serializes");
        let name = regime.as_str().unwrap_or_default().to_string();
        trace.push(vec![w.into(), c.lambda_cr.into(), c.f_real_at_crossing.into(), name.as_str().into()]);
        entries.push(json!({"omega": num(w), "lambda_cr": num(c.lambda_cr), "f_real": num(c.f_real_at_crossing), "regime": regime}));
        lines.push(("omega", format!("{w}: {name} (F_R = {:.6e})", c.f_real_at_crossing)));
    }
    let omega_cr = 0.25 * (model.gamma1 - model.gamma2).abs();
    lines.push(("omega_cr", format!("{omega_cr}")));
    let mut result = Map::new();
    result.insert("omega_cr".into(), num(omega_cr));
    result.insert("classifications".into(), Value::Array(entries));
    Ok(Outcome {
        trace,
        result,
        summary: summary_lines(&lines),
    })
}

fn find_ep(
    model: &Model,
    initial: Option<ParameterPoint>,
    starts: usize,
    search_box: Option<([f64; 2], [f64; 2])>,
    seed: u64,
) -> Result<Outcome, Failure> {
    let scale = model.family().scale().max(1e-300);
    let (bl, bw) = search_box.unwrap_or(([-scale, scale], [0.0, scale]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut guesses = vec![];
    if let Some(p) = initial {
        guesses.push(p);
    }
    while guesses.len() < starts.max(1) {
        guesses.push(ParameterPoint::new(
            rng.random_range(bl[0]..bl[1]),
            rng.random_range(bw[0]..bw[1]),
        ));
    }
    let mut trace = Table::new([
        "start",
        "initial_lambda",
        "initial_omega",
        "lambda",
        "omega",
        "residual",
        "iterations",
        "converged",
    ]);
    let mut found: Vec<(ParameterPoint, BranchPoint)> = vec![];
    for (k, g) in guesses.iter().enumerate() {
        let bp = match model {
            Model::TwoLevel(m) => find_branch_point(m, *g)?,
            Model::NLevel { family, .. } => find_degeneracy(family, *g)?,
        };
        trace.push(vec![
            k.into(),
            g.lambda.into(),
            g.omega.into(),
            bp.location.lambda.into(),
            bp.location.omega.into(),
            bp.residual.into(),
            bp.iterations.into(),
            bp.converged.into(),
        ]);
        found.push((*g, bp));
    }
    let best = found
        .iter()
        .map(|(_, b)| b)
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
        .copied()
        .expect("at least one start");
    if !best.is_usable() {
        return Err(Failure::Numerical(format!(
            "branch point search did not converge (best residual {:.3e} at lambda={}, omega={})",
            best.residual, best.location.lambda, best.location.omega
        )));
    }
    let mut result = Map::new();
    result.insert("lambda_cr".into(), num(best.location.lambda));
    result.insert("omega_cr".into(), num(best.location.omega));
    result.insert("coalesced_value".into(), complex(best.coalesced_value.value));
    result.insert("residual".into(), num(best.residual));
    result.insert("converged".into(), json!(best.converged));
    result.insert("at_rounding_floor".into(), json!(best.at_rounding_floor));
    result.insert("iterations".into(), json!(best.iterations));
    result.insert(
        "starts".into(),
        Value::Array(
            found
                .iter()
                .map(|(g, b)| {
                    json!({"initial": point_json(*g), "location": point_json(b.location),
                           "residual": num(b.residual), "converged": b.converged})
                })
                .collect(),
        ),
    );
    let summary = summary_lines(&[
        ("experiment", "find-ep".into()),
        ("lambda_cr", format!("{:.17e}", best.location.lambda)),
        ("omega_cr", format!("{:.17e}", best.location.omega)),
        (
            "coalesced value",
            format!("{:.12} {:+.12}i", best.coalesced_value.value.re, best.coalesced_value.value.im),
        ),
        ("residual |F|", format!("{:.3e}", best.residual)),
        ("starts", found.len().to_string()),
    ]);
    Ok(Outcome { trace, result, summary })
}

fn monodromy_json(r: &MonodromyReport) -> Value {
    json!({
        "convention": r.convention,
        "turns": r.turns,
        "branch_permutation": r.branch_permutation.iter().map(|k| k + 1).collect::<Vec<_>>(),
        "monodromy": cmatrix(&r.phase_matrix),
        "period": r.period,
        "eigenvalue_closure": num(r.eigenvalue_closure),
        "rule_consistent": r.rule_consistent,
        "crossings": r.crossings.iter().map(|c| json!({
            "step": c.step, "omega": num(c.omega), "regime": c.regime, "forth": c.forth, "exchanged": c.exchanged
        })).collect::<Vec<_>>(),
    })
}

/// One entry of unit modulus per row and column, the rest zero.
fn is_phased_permutation(m: &crate::model::CMatrix, tol: f64) -> bool {
    let n = m.nrows();
    let rows_ok = (0..n).all(|r| (0..n).filter(|&c| (m[(r, c)].norm() - 1.0).abs() < tol).count() == 1);
    let cols_ok = (0..n).all(|c| (0..n).filter(|&r| (m[(r, c)].norm() - 1.0).abs() < tol).count() == 1);
    let zeros = m.iter().filter(|z| z.norm() < tol).count() == n * n - n;
    rows_ok && cols_ok && zeros
}

fn run_loop(model: &Model, cfg: &PathConfig) -> Result<Outcome, Failure> {
    let family = model.family();
    let path = cfg.to_path();
    let report = continue_eigensystem(family, &path, cfg.convention)?;
    let trace = step_table(&report.trace, family.dim());
    let mut result = match monodromy_json(&report) {
        Value::Object(m) => m,
        _ => unreachable!(),
    };
    let phased = is_phased_permutation(&report.phase_matrix, 1e-6);
    result.insert(
        "acceptance".into(),
        json!({
            "eigenvalues_closed": report.eigenvalue_closure < 1e-10,
            "phased_permutation": phased,
        }),
    );
    let m = &report.phase_matrix;
    let mut lines = vec![
        ("experiment", "loop".to_string()),
        ("convention", convention_name(cfg.convention).into()),
        ("steps x turns", format!("{} x {}", path.steps, path.turns)),
        (
            "permutation",
            format!("{:?}", report.branch_permutation.iter().map(|k| k + 1).collect::<Vec<_>>()),
        ),
        ("period", report.period.map_or("none <= 8".into(), |p| p.to_string())),
        ("eigenvalue closure", format!("{:.3e}", report.eigenvalue_closure)),
    ];
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|c| format!("{:+.6}{:+.6}i", m[(r, c)].re, m[(r, c)].im))
            .collect();
        lines.push(("M row", row.join("  ")));
    }
    Ok(Outcome {
        trace,
        result,
        summary: summary_lines(&lines),
    })
}

fn convention_name(c: PhaseConvention) -> &'static str {
    match c {
        PhaseConvention::CProductContinuity => "c_product_continuity",
        PhaseConvention::PaperExchangeRule => "paper_exchange_rule",
    }
}

fn period(model: &Model, cfg: &PathConfig, max_turns: usize) -> Result<Outcome, Failure> {
    let path = cfg.to_path();
    let report = measure_period(model.family(), &path, cfg.convention, max_turns)?;
    let mut trace = Table::new(["turn", "deviation", "permutation"]);
    for (k, (d, p)) in report.deviations.iter().zip(&report.branch_permutations).enumerate() {
        let perm: Vec<String> = p.iter().map(|k| (k + 1).to_string()).collect();
        trace.push(vec![(k + 1).into(), (*d).into(), perm.join(" ").as_str().into()]);
    }
    let mut result = Map::new();
    result.insert("convention".into(), json!(cfg.convention));
    result.insert("period".into(), json!(report.period));
    result.insert("deviations".into(), numbers(&report.deviations));
    result.insert(
        "matrices".into(),
        Value::Array(report.matrices.iter().map(cmatrix).collect()),
    );
    let summary = summary_lines(&[
        ("experiment", "period".into()),
        ("convention", convention_name(cfg.convention).into()),
        ("period", report.period.map_or(format!("none <= {max_turns}"), |p| p.to_string())),
        ("turns run", report.deviations.len().to_string()),
    ]);
    Ok(Outcome { trace, result, summary })
}

fn smatrix(model: &EffectiveHamiltonianModel, energies: &[f64]) -> Result<Outcome, Failure> {
    let scan = scattering::scan(model, energies)?;
    let c = model.channels();
    let mut cols: Vec<String> = vec!["energy".into()];
    for a in 1..=c {
        for b in 1..=c {
            cols.push(format!("S_{a}{b}_re"));
            cols.push(format!("S_{a}{b}_im"));
        }
    }
    cols.push("unitarity_defect".into());
    cols.push("symmetry_defect".into());
    let mut trace = Table::new(cols);
    for (k, s) in scan.s_matrices.iter().enumerate() {
        let mut row: Vec<Cell> = vec![scan.energies[k].into()];
        for a in 0..c {
            for b in 0..c {
                row.push(s[(a, b)].re.into());
                row.push(s[(a, b)].im.into());
            }
        }
        row.push(scan.unitarity_defect[k].into());
        row.push(scan.symmetry_defect[k].into());
        trace.push(row);
    }
    let max_u = scan.unitarity_defect.iter().copied().fold(0.0, f64::max);
    let max_s = scan.symmetry_defect.iter().copied().fold(0.0, f64::max);
    let mut result = Map::new();
    result.insert("energies".into(), json!(energies.len()));
    result.insert("channels".into(), json!(c));
    result.insert("max_unitarity_defect".into(), num(max_u));
    result.insert("max_symmetry_defect".into(), num(max_s));
    result.insert(
        "acceptance".into(),
        json!({"unitary": model.is_energy_independent().then_some(max_u < 1e-8), "symmetric": max_s < 1e-10}),
    );
    let summary = summary_lines(&[
        ("experiment", "smatrix".into()),
        ("energies", energies.len().to_string()),
        ("max |S^+S - I|", format!("{max_u:.3e}")),
        ("max |S - S^T|", format!("{max_s:.3e}")),
    ]);
    Ok(Outcome { trace, result, summary })
}

fn poles(model: &EffectiveHamiltonianModel) -> Result<Outcome, Failure> {
    let p = scattering::find_poles(model)?;
    let c = model.channels();
    let mut cols: Vec<String> = vec!["pole".into(), "E".into(), "Gamma".into()];
    for ch in 1..=c {
        cols.push(format!("gamma_{ch}_re"));
        cols.push(format!("gamma_{ch}_im"));
    }
    cols.extend(["iterations", "converged", "residue_defect"].map(String::from));
    let mut trace = Table::new(cols);
    let mut list = vec![];
    for (k, pole) in p.poles.iter().enumerate() {
        let mut row: Vec<Cell> = vec![(k + 1).into(), pole.energy.into(), pole.width.into()];
        for ch in 0..c {
            row.push(p.couplings[(k, ch)].re.into());
            row.push(p.couplings[(k, ch)].im.into());
        }
        row.push(p.fixed_point_iterations[k].into());
        row.push(p.converged[k].into());
        row.push(p.residue_defects[k].into());
        trace.push(row);
        list.push(json!({
            "value": complex(pole.value),
            "energy": num(pole.energy),
            "width": num(pole.width),
            "couplings": (0..c).map(|ch| complex(p.couplings[(k, ch)])).collect::<Vec<_>>(),
            "residue": cmatrix(&p.residues[k]),
            "fixed_point_iterations": p.fixed_point_iterations[k],
            "converged": p.converged[k],
            "residue_defect": num(p.residue_defects[k]),
        }));
    }
    if let Some(k) = p.converged.iter().position(|c| !c) {
        return Err(Failure::Numerical(format!(
            "fixed-point iteration for pole {} did not converge",
            k + 1
        )));
    }
    let mut result = Map::new();
    result.insert("poles".into(), Value::Array(list));
    result.insert(
        "acceptance".into(),
        json!({"residues_factorize": p.residue_defects.iter().all(|d| *d < 1e-6)}),
    );
    let mut lines = vec![("experiment", "poles".to_string())];
    for pole in &p.poles {
        lines.push(("pole", format!("E = {:.12}, Gamma = {:.12}", pole.energy, pole.width)));
    }
    Ok(Outcome {
        trace,
        result,
        summary: summary_lines(&lines),
    })
}

fn trapping(model: &EffectiveHamiltonianModel, alphas: &[f64]) -> Result<Outcome, Failure> {
    let t = scattering::trapping_sweep(model, alphas)?;
    let n = model.levels();
    let mut cols: Vec<String> = vec!["alpha".into()];
    cols.extend((1..=n).map(|k| format!("Gamma_{k}")));
    cols.push("width_sum".into());
    cols.push("width_sum_expected".into());
    let mut trace = Table::new(cols);
    let mut worst: f64 = 0.0;
    for (k, a) in alphas.iter().enumerate() {
        let sum: f64 = t.widths[k].iter().sum();
        let expected = t.width_sum_expected[k];
        worst = worst.max((sum - expected).abs() / expected.max(1.0));
        let mut row: Vec<Cell> = vec![(*a).into()];
        row.extend(t.widths[k].iter().map(|&g| Cell::Num(g)));
        row.push(sum.into());
        row.push(expected.into());
        trace.push(row);
    }
    let mut result = Map::new();
    result.insert(
        "widths".into(),
        Value::Array(t.widths.iter().map(|w| numbers(w)).collect()),
    );
    result.insert("max_sum_rule_defect".into(), num(worst));
    result.insert("acceptance".into(), json!({"width_sum_rule": worst < 1e-12}));
    let summary = summary_lines(&[
        ("experiment", "trapping".into()),
        ("alphas", alphas.len().to_string()),
        ("sum rule defect", format!("{worst:.3e}")),
    ]);
    Ok(Outcome { trace, result, summary })
}

fn smoothness(
    model: &TwoLevelModel,
    branch_point: Option<ParameterPoint>,
    direction: [f64; 2],
    deltas: &[f64],
    energies: &[f64],
) -> Result<Outcome, Failure> {
    let bp = match branch_point {
        Some(p) => p,
        None => {
            let l = model
                .crossing_lambda()
                .ok_or_else(|| Failure::Numerical("the levels never cross; no branch point".into()))?;
            ParameterPoint::new(l, 0.25 * (model.gamma1 - model.gamma2).abs())
        }
    };
    let r = scattering::double_pole_smoothness(model, bp, (direction[0], direction[1]), deltas, energies)?;
    let mut trace = Table::new(["delta", "deviation"]);
    for (d, v) in r.deltas.iter().zip(&r.deviations) {
        trace.push(vec![(*d).into(), (*v).into()]);
    }
    let mut sorted: Vec<(f64, f64)> = r.deltas.iter().copied().zip(r.deviations.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 > w[0].1);
    let mut result = Map::new();
    result.insert("branch_point".into(), point_json(bp));
    result.insert("deltas".into(), numbers(&r.deltas));
    result.insert("deviations".into(), numbers(&r.deviations));
    result.insert(
        "unitarity_defect_at_branch_point".into(),
        num(r.unitarity_defect_at_branch_point),
    );
    result.insert(
        "acceptance".into(),
        json!({"increasing_with_delta": monotone, "unitary_at_branch_point": r.unitarity_defect_at_branch_point < 1e-8}),
    );
    let summary = summary_lines(&[
        ("experiment", "smoothness".into()),
        ("branch point", format!("({}, {})", bp.lambda, bp.omega)),
        ("deviations", format!("{:?}", r.deviations)),
        ("unitarity at bp", format!("{:.3e}", r.unitarity_defect_at_branch_point)),
    ]);
    Ok(Outcome { trace, result, summary })
}
