//! Coupling regimes, branch points (double poles) and the diagnostics around
//! the crossing point `e1(l) = e2(l)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adiabatic::{continue_open_path, LoopError, StepRecord};
use crate::eigensystem::{
    c_product, chiral_superposition, eig_complex_symmetric, inner, ComplexEigenvalue, EigenError,
    Sign,
};
use crate::model::{ParameterPoint, ParametricFamily, TwoLevelModel, I};

pub const MAX_NEWTON_ITERATIONS: usize = 100;
/// `|F|` below this counts as converged.
pub const BRANCH_POINT_TOL: f64 = 1e-20;
/// `|F_R|` band (relative to `scale^2`) treated as close to a double pole.
pub const NEAR_DOUBLE_POLE_BAND: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BranchError {
    #[error("the levels are parallel and never cross")]
    NoCrossing,
    #[error("initial guess must be finite")]
    NonFiniteInitial,
    #[error("the segment [{lo}, {hi}] does not straddle the crossing at lambda={crossing}")]
    NotStraddling { lo: f64, hi: f64, crossing: f64 },
    #[error("need at least 2 steps")]
    TooFewSteps,
    #[error("the family has dimension {0}; a pairwise degeneracy needs at least 2")]
    TooSmall(usize),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingRegime {
    Overcritical,
    DoublePole,
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub regime: CouplingRegime,
    pub f_real_at_crossing: f64,
    pub lambda_cr: f64,
    pub tolerance: f64,
}

/// Classifies the coupling `omega` by the sign of `F_R` at the crossing point.
pub fn classify(model: &TwoLevelModel, omega: f64) -> Result<Classification, BranchError> {
    let lambda_cr = model.crossing_lambda().ok_or(BranchError::NoCrossing)?;
    let f = model.discriminant(ParameterPoint::new(lambda_cr, omega)).f_real();
    let s = TwoLevelModel::scale(model);
    let tolerance = 1e-12 * (s * s).max(1.0);
    let regime = if f > tolerance {
        CouplingRegime::Overcritical
    } else if f < -tolerance {
        CouplingRegime::Subcritical
    } else {
        CouplingRegime::DoublePole
    };
    Ok(Classification {
        regime,
        f_real_at_crossing: f,
        lambda_cr,
        tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub location: ParameterPoint,
    pub coalesced_value: ComplexEigenvalue,
    /// `|F|` at the final iterate (`|gap^2|` for the N-level search).
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Newton stalled with a residual at the rounding level of the inputs,
    /// below which the crossing point itself is not representable.
    pub at_rounding_floor: bool,
}

impl BranchPoint {
    pub fn is_usable(&self) -> bool {
        self.converged || self.at_rounding_floor
    }
}

/// Damped Newton on `(F_R, F_I)` over `(lambda, omega)`. A rank-deficient
/// Jacobian (as for Hermitian models) falls back to the pseudo-inverse step.
pub fn find_branch_point(
    model: &TwoLevelModel,
    initial: ParameterPoint,
) -> Result<BranchPoint, BranchError> {
    if !initial.is_finite() {
        return Err(BranchError::NonFiniteInitial);
    }
    let db = model.e1.slope - model.e2.slope;
    let g = model.half_width_difference();
    let s = TwoLevelModel::scale(model);
    let floor = 1e-13 * (s * s).max(1.0);
    let eval = |p: ParameterPoint| model.discriminant(p).f;

    let mut x = initial;
    let mut f = eval(x);
    let mut iterations = 0;
    let mut stalled = false;
    while f.norm() >= BRANCH_POINT_TOL && iterations < MAX_NEWTON_ITERATIONS {
        iterations += 1;
        let d = model.level_difference(x.lambda);
        // rows: d/d(lambda, omega) of F_R and F_I
        let j = [[2.0 * d * db, 8.0 * x.omega], [-2.0 * g * db, 0.0]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let fro2 = j.iter().flatten().map(|v| v * v).sum::<f64>();
        let (dl, dw) = if det.abs() > 1e-14 * fro2 {
            (
                -(j[1][1] * f.re - j[0][1] * f.im) / det,
                -(-j[1][0] * f.re + j[0][0] * f.im) / det,
            )
        } else if fro2 > 0.0 {
            // Gauss-Newton step J^T F / ||J||_F^2
            (
                -(j[0][0] * f.re + j[1][0] * f.im) / fro2,
                -(j[0][1] * f.re + j[1][1] * f.im) / fro2,
            )
        } else {
            stalled = true;
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = ParameterPoint::new(x.lambda + t * dl, x.omega + t * dw);
            let ft = eval(trial);
            if ft.norm() < f.norm() {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
    }
    let converged = f.norm() < BRANCH_POINT_TOL;
    let lambda = x.lambda;
    let coalesced = Complex64::new(
        0.5 * (model.e1.eval(lambda) + model.e2.eval(lambda)),
        -0.25 * (model.gamma1 + model.gamma2),
    );
    Ok(BranchPoint {
        location: x,
        coalesced_value: ComplexEigenvalue::from_value(coalesced),
        residual: f.norm(),
        converged,
        iterations,
        at_rounding_floor: !converged && stalled && f.norm() < floor,
    })
}

/// Pairwise degeneracy search for any parametric family: Newton on
/// `(E_a - E_b)^2` for the closest pair, with a finite-difference Jacobian.
pub fn find_degeneracy<F: ParametricFamily + ?Sized>(
    family: &F,
    initial: ParameterPoint,
) -> Result<BranchPoint, BranchError> {
    if !initial.is_finite() {
        return Err(BranchError::NonFiniteInitial);
    }
    if family.dim() < 2 {
        return Err(BranchError::TooSmall(family.dim()));
    }
    let s = family.scale();
    let tol = 1e-14 * (s * s).max(1.0);
    let eval = |p: ParameterPoint| -> Result<(Complex64, Complex64), BranchError> {
        let sys = eig_complex_symmetric(&family.matrix_at(p))?;
        let v = sys.complex_values();
        let mut best = (f64::INFINITY, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for a in 0..v.len() {
            for b in a + 1..v.len() {
                let gap = v[a] - v[b];
                if gap.norm() < best.0 {
                    best = (gap.norm(), gap * gap, 0.5 * (v[a] + v[b]));
                }
            }
        }
        Ok((best.1, best.2))
    };

    let mut x = initial;
    let (mut g, mut mean) = eval(x)?;
    let mut iterations = 0;
    let mut stalled = false;
    while g.norm() >= tol && iterations < MAX_NEWTON_ITERATIONS {
        iterations += 1;
        let h = 1e-7 * x.lambda.abs().max(x.omega.abs()).max(1.0);
        let (gl, _) = eval(ParameterPoint::new(x.lambda + h, x.omega))?;
        let (gw, _) = eval(ParameterPoint::new(x.lambda, x.omega + h))?;
        let dl = (gl - g) / h;
        let dw = (gw - g) / h;
        let j = [[dl.re, dw.re], [dl.im, dw.im]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let fro2 = j.iter().flatten().map(|v| v * v).sum::<f64>();
        let (sl, sw) = if det.abs() > 1e-14 * fro2 {
            (
                -(j[1][1] * g.re - j[0][1] * g.im) / det,
                -(-j[1][0] * g.re + j[0][0] * g.im) / det,
            )
        } else if fro2 > 0.0 {
            (
                -(j[0][0] * g.re + j[1][0] * g.im) / fro2,
                -(j[0][1] * g.re + j[1][1] * g.im) / fro2,
            )
        } else {
            stalled = true;
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = ParameterPoint::new(x.lambda + t * sl, x.omega + t * sw);
            let (gt, mt) = eval(trial)?;
            if gt.norm() < g.norm() {
                x = trial;
                g = gt;
                mean = mt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
    }
    let converged = g.norm() < tol;
    Ok(BranchPoint {
        location: x,
        coalesced_value: ComplexEigenvalue::from_value(mean),
        residual: g.norm(),
        converged,
        iterations,
        at_rounding_floor: !converged && stalled && g.norm() < 1e3 * tol,
    })
}

/// State at the crossing point close to a double pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublePoleLimit {
    /// `|<phi_1, i s phi_2>| / (|phi_1| |phi_2|)` for the realized sign `s`.
    pub fidelity: f64,
    pub realized_sign: Sign,
    /// `phi_1 / phi_2` (first component).
    pub ratio: Complex64,
    /// `|phi_1^T phi_2'|` between branch 1 just before and branch 2 just after
    /// the crossing point.
    pub c_overlap_across: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeReport {
    pub classification: Classification,
    /// The dominant basis component of each branch changed along the segment.
    pub exchanged: bool,
    pub start_dominant: Vec<usize>,
    pub end_dominant: Vec<usize>,
    pub energies_cross: bool,
    pub widths_cross: bool,
    pub min_energy_gap: f64,
    pub min_width_gap: f64,
    pub near_double_pole: Option<DoublePoleLimit>,
    pub trace: Vec<StepRecord>,
}

fn lambda_grid(lo: f64, hi: f64, steps: usize, extra: Option<f64>) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=steps)
        .map(|k| lo + (hi - lo) * k as f64 / steps as f64)
        .collect();
    if let Some(x) = extra {
        if !grid.contains(&x) {
            grid.push(x);
            grid.sort_by(f64::total_cmp);
            if hi < lo {
                grid.reverse();
            }
        }
    }
    grid
}

fn dominant(v: &crate::model::CVector) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

fn sign_changes(values: impl Iterator<Item = f64>) -> bool {
    let mut last = None;
    for v in values {
        if v == 0.0 {
            continue;
        }
        if let Some(l) = last {
            if (v > 0.0) != l {
                return true;
            }
        }
        last = Some(v > 0.0);
    }
    false
}

/// Continues both eigenpairs along `lambda in [lo, hi]` at fixed `omega` and
/// reports whether they exchange character across the crossing point.
pub fn exchange_diagnostic(
    model: &TwoLevelModel,
    omega: f64,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<ExchangeReport, BranchError> {
    if steps < 2 {
        return Err(BranchError::TooFewSteps);
    }
    let classification = classify(model, omega)?;
    let crossing = classification.lambda_cr;
    if !((lo < crossing && crossing < hi) || (hi < crossing && crossing < lo)) {
        return Err(BranchError::NotStraddling { lo, hi, crossing });
    }
    let m = model.with_omega(omega);
    let grid = lambda_grid(lo, hi, steps, Some(crossing));
    let points: Vec<ParameterPoint> = grid.iter().map(|&l| ParameterPoint::new(l, omega)).collect();
    let nodes = continue_open_path(&m, &points)?;

    let first = &nodes[0].vectors;
    let last = &nodes[nodes.len() - 1].vectors;
    let start_dominant: Vec<usize> = first.iter().map(dominant).collect();
    let end_dominant: Vec<usize> = last.iter().map(dominant).collect();
    let exchanged = start_dominant != end_dominant;

    let de = || nodes.iter().map(|n| n.record.values[0].energy - n.record.values[1].energy);
    let dw = || nodes.iter().map(|n| n.record.values[0].width - n.record.values[1].width);
    let energies_cross = sign_changes(de());
    let widths_cross = sign_changes(dw());
    let min_energy_gap = de().map(f64::abs).fold(f64::INFINITY, f64::min);
    let min_width_gap = dw().map(f64::abs).fold(f64::INFINITY, f64::min);

    let s = TwoLevelModel::scale(model);
    let near_double_pole = if classification.f_real_at_crossing.abs() < NEAR_DOUBLE_POLE_BAND * (s * s).max(1.0) {
        let k = grid.iter().position(|&l| l == crossing).expect("crossing is on the grid");
        let v = &nodes[k].vectors;
        let (p1, p2) = (&v[0], &v[1]);
        let denom = p1.norm() * p2.norm();
        let plus = inner(p1, &(p2 * I)).norm() / denom;
        let minus = inner(p1, &(p2 * -I)).norm() / denom;
        // <a, i b> and <a, -i b> have equal modulus; the sign comes from the ratio
        let lead = dominant(p2);
        let ratio = p1[lead] / p2[lead];
        let realized_sign = if ratio.im >= 0.0 { Sign::Plus } else { Sign::Minus };
        let before = &nodes[k.saturating_sub(1)].vectors[0];
        let after = &nodes[(k + 1).min(nodes.len() - 1)].vectors[1];
        Some(DoublePoleLimit {
            fidelity: plus.max(minus),
            realized_sign,
            ratio,
            c_overlap_across: c_product(before, after).norm(),
        })
    } else {
        None
    };

    Ok(ExchangeReport {
        classification,
        exchanged,
        start_dominant,
        end_dominant,
        energies_cross,
        widths_cross,
        min_energy_gap,
        min_width_gap,
        near_double_pole,
        trace: nodes.into_iter().map(|n| n.record).collect(),
    })
}

/// Step-to-step variation of the eigenvectors and of the chiral
/// superpositions `(phi_1 +- i phi_2) / sqrt 2` along a lambda segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiralReport {
    /// Largest `|x(l_{k+1}) - x(l_k)|` for phi_1 and phi_2.
    pub max_step_eigenvectors: [f64; 2],
    /// Same for the `+` and `-` superpositions.
    pub max_step_chiral: [f64; 2],
    pub max_norm_eigenvectors: [f64; 2],
    pub max_norm_chiral: [f64; 2],
    /// The superposition with the smaller largest step.
    pub smooth_sign: Sign,
    /// Per component of phi_1: the sign of the imaginary part differs
    /// between the two ends.
    pub imaginary_sign_flip: Vec<bool>,
    pub steps: usize,
}

pub fn chiral_smoothness(
    model: &TwoLevelModel,
    omega: f64,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<ChiralReport, BranchError> {
    if steps < 2 {
        return Err(BranchError::TooFewSteps);
    }
    let m = model.with_omega(omega);
    let points: Vec<ParameterPoint> = lambda_grid(lo, hi, steps, None)
        .into_iter()
        .map(|l| ParameterPoint::new(l, omega))
        .collect();
    let nodes = continue_open_path(&m, &points)?;
    let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut series: [Vec<crate::model::CVector>; 4] = Default::default();
    for n in &nodes {
        series[0].push(n.vectors[0].clone());
        series[1].push(n.vectors[1].clone());
        series[2].push(chiral_superposition(&n.vectors, a, a, Sign::Plus)?);
        series[3].push(chiral_superposition(&n.vectors, a, a, Sign::Minus)?);
    }
    let max_step = |s: &[crate::model::CVector]| {
        s.windows(2).map(|w| (&w[1] - &w[0]).norm()).fold(0.0, f64::max)
    };
    let max_norm = |s: &[crate::model::CVector]| s.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let chiral = [max_step(&series[2]), max_step(&series[3])];
    let first = &nodes[0].vectors[0];
    let last = &nodes[nodes.len() - 1].vectors[0];
    Ok(ChiralReport {
        max_step_eigenvectors: [max_step(&series[0]), max_step(&series[1])],
        max_step_chiral: chiral,
        max_norm_eigenvectors: [max_norm(&series[0]), max_norm(&series[1])],
        max_norm_chiral: [max_norm(&series[2]), max_norm(&series[3])],
        smooth_sign: if chiral[0] <= chiral[1] { Sign::Plus } else { Sign::Minus },
        imaginary_sign_flip: first
            .iter()
            .zip(last.iter())
            .map(|(a, b)| a.im * b.im < 0.0)
            .collect(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensystem::eigenvalues_two_level;

    #[test]
    fn classify_examples() {
        let m = TwoLevelModel::standard();
        let over = classify(&m, 0.3).unwrap();
        assert_eq!(over.regime, CouplingRegime::Overcritical);
        assert!((over.f_real_at_crossing - 0.11).abs() < 1e-15);
        assert_eq!(classify(&m, 0.25).unwrap().regime, CouplingRegime::DoublePole);
        let sub = classify(&m, 0.2).unwrap();
        assert_eq!(sub.regime, CouplingRegime::Subcritical);
        assert!((sub.f_real_at_crossing + 0.09).abs() < 1e-15);
    }

    #[test]
    fn parallel_levels_have_no_crossing() {
        let m = TwoLevelModel::new(
            crate::model::Affine::new(0.0, 1.0),
            crate::model::Affine::new(1.0, 1.0),
            1.0,
            0.0,
            0.1,
        )
        .unwrap();
        assert_eq!(classify(&m, 0.1), Err(BranchError::NoCrossing));
    }

    #[test]
    fn standard_branch_point() {
        let bp = find_branch_point(&TwoLevelModel::standard(), ParameterPoint::new(0.1, 0.3)).unwrap();
        assert!(bp.converged, "{bp:?}");
        assert!(bp.residual < 1e-20);
        assert!(bp.location.lambda.abs() < 1e-10);
        assert!((bp.location.omega - 0.25).abs() < 1e-10);
        assert!((bp.coalesced_value.value - Complex64::new(0.0, -0.25)).norm() < 1e-15);
        let ev = eigenvalues_two_level(&TwoLevelModel::standard(), bp.location);
        assert!((ev[0].value - ev[1].value).norm() < 1e-8);
    }

    #[test]
    fn hermitian_branch_point_is_diabolic() {
        let m = TwoLevelModel::crossing(0.0, 0.0, 0.0).unwrap();
        let bp = find_branch_point(&m, ParameterPoint::new(0.3, 0.7)).unwrap();
        assert!(bp.converged);
        assert!(bp.location.omega.abs() < 1e-10);
        assert!(bp.location.lambda.abs() < 1e-10);
    }

    #[test]
    fn scaled_widths_move_the_branch_point() {
        let m = TwoLevelModel::crossing(2.0, 0.0, 0.5).unwrap();
        let bp = find_branch_point(&m, ParameterPoint::new(0.2, 0.6)).unwrap();
        assert!(bp.is_usable());
        assert!((bp.location.omega - 0.5).abs() < 1e-10);
    }

    #[test]
    fn non_finite_initial_is_rejected() {
        let r = find_branch_point(&TwoLevelModel::standard(), ParameterPoint::new(f64::NAN, 0.3));
        assert_eq!(r, Err(BranchError::NonFiniteInitial));
    }

    #[test]
    fn generic_search_agrees_with_closed_form() {
        let m = TwoLevelModel::standard();
        let bp = find_degeneracy(&m, ParameterPoint::new(0.05, 0.27)).unwrap();
        assert!(bp.is_usable(), "{bp:?}");
        assert!(bp.location.lambda.abs() < 1e-6);
        assert!((bp.location.omega - 0.25).abs() < 1e-6);
    }

    #[test]
    fn overcritical_exchange() {
        let r = exchange_diagnostic(&TwoLevelModel::standard(), 0.3, -1.0, 1.0, 200).unwrap();
        assert!(r.exchanged);
        assert!(!r.energies_cross);
        assert!(r.widths_cross);
        assert!(r.near_double_pole.is_none());
    }

    #[test]
    fn subcritical_no_exchange() {
        let r = exchange_diagnostic(&TwoLevelModel::standard(), 0.2, -1.0, 1.0, 200).unwrap();
        assert!(!r.exchanged);
        assert!(r.energies_cross);
        assert!(!r.widths_cross);
    }

    #[test]
    fn near_double_pole_limit() {
        for omega in [0.25 + 1e-6, 0.25 - 1e-6] {
            let r = exchange_diagnostic(&TwoLevelModel::standard(), omega, -0.05, 0.05, 100).unwrap();
            let lim = r.near_double_pole.expect("inside the band");
            assert!((lim.fidelity - 1.0).abs() < 1e-3, "{lim:?}");
        }
    }

    #[test]
    fn segment_must_straddle() {
        let r = exchange_diagnostic(&TwoLevelModel::standard(), 0.3, 0.1, 1.0, 10);
        assert!(matches!(r, Err(BranchError::NotStraddling { .. })));
    }

    #[test]
    fn chiral_combination_is_smooth() {
        let r = chiral_smoothness(&TwoLevelModel::standard(), 0.25001, -0.05, 0.05, 400).unwrap();
        let smooth = match r.smooth_sign {
            Sign::Plus => r.max_step_chiral[0],
            Sign::Minus => r.max_step_chiral[1],
        };
        assert!(smooth < 0.1 * r.max_step_eigenvectors[0], "{r:?}");
    }
}
