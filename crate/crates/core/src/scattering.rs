//! Resonance S matrix of an effective Hamiltonian, its poles and residues,
//! resonance trapping and the behaviour of S at a double pole.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensystem::{eig_complex_symmetric, ComplexEigenvalue, EigenError};
use crate::model::{CMatrix, EffectiveHamiltonianModel, ModelError, ParameterPoint, TwoLevelModel, I};

pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const MAX_FIXED_POINT_ITERATIONS: usize = 200;
/// Relative residual allowed for the resolvent solve.
pub const SOLVE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatteringError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("E - H_eff is singular at E = {0}")]
    Singular(Complex64),
    #[error("H_eff has a double pole at E = {0}; the eigen-expansion does not exist")]
    DoublePole(f64),
    #[error("complex energies need energy-independent couplings")]
    EnergyDependent,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `S = I - i W^T (z - H)^{-1} W` for a fixed `H` and `W`.
fn s_from_parts(h: &CMatrix, w: &DMatrix<f64>, z: Complex64) -> Result<CMatrix, ScatteringError> {
    let n = h.nrows();
    let a = CMatrix::from_fn(n, n, |r, c| if r == c { z - h[(r, c)] } else { -h[(r, c)] });
    let wc: CMatrix = w.map(|v| Complex64::new(v, 0.0));
    let x = a.clone().lu().solve(&wc).ok_or(ScatteringError::Singular(z))?;
    let residual = frobenius(&(&a * &x - &wc));
    let bound = frobenius(&a) * frobenius(&x) + frobenius(&wc);
    if !residual.is_finite() || residual > SOLVE_TOL * bound {
        return Err(ScatteringError::Singular(z));
    }
    let c = w.ncols();
    Ok(CMatrix::identity(c, c) - wc.transpose() * x * I)
}

/// `S(E) = I - i W(E)^T (E - H_eff(E))^{-1} W(E)` on the real axis.
pub fn s_matrix(model: &EffectiveHamiltonianModel, energy: f64) -> Result<CMatrix, ScatteringError> {
    let h = model.hamiltonian(energy)?;
    let w = model.coupling_at(energy)?;
    s_from_parts(&h, &w, Complex64::new(energy, 0.0))
}

/// S at complex energy, for energy-independent couplings.
pub fn s_matrix_complex(model: &EffectiveHamiltonianModel, z: Complex64) -> Result<CMatrix, ScatteringError> {
    if !model.is_energy_independent() {
        return Err(ScatteringError::EnergyDependent);
    }
    let h = model.hamiltonian(0.0)?;
    s_from_parts(&h, model.w(), z)
}

/// `||S^dagger S - I||_F`.
pub fn unitarity_defect(s: &CMatrix) -> f64 {
    let c = s.nrows();
    frobenius(&(s.adjoint() * s - CMatrix::identity(c, c)))
}

pub fn symmetry_defect(s: &CMatrix) -> f64 {
    frobenius(&(s - s.transpose()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SMatrixScan {
    pub energies: Vec<f64>,
    pub s_matrices: Vec<CMatrix>,
    pub unitarity_defect: Vec<f64>,
    pub symmetry_defect: Vec<f64>,
}

pub fn scan(model: &EffectiveHamiltonianModel, energies: &[f64]) -> Result<SMatrixScan, ScatteringError> {
    if energies.is_empty() {
        return Err(ScatteringError::InvalidGrid("energy grid is empty".into()));
    }
    let s_matrices = energies
        .iter()
        .map(|&e| s_matrix(model, e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SMatrixScan {
        energies: energies.to_vec(),
        unitarity_defect: s_matrices.iter().map(unitarity_defect).collect(),
        symmetry_defect: s_matrices.iter().map(symmetry_defect).collect(),
        s_matrices,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenbasisExpansion {
    pub values: Vec<ComplexEigenvalue>,
    /// `couplings[(k, c)] = phi_k^T W(E)_{., c}`.
    pub couplings: CMatrix,
    /// `-i sum_k gamma_k gamma_k^T / (E - E_k)`.
    pub resonance: CMatrix,
    /// `S(E) - I - resonance`.
    pub background: CMatrix,
}

pub fn eigenbasis_expansion(
    model: &EffectiveHamiltonianModel,
    energy: f64,
) -> Result<EigenbasisExpansion, ScatteringError> {
    let h = model.hamiltonian(energy)?;
    let w = model.coupling_at(energy)?;
    let sys = eig_complex_symmetric(&h)?;
    if sys.ep_flag {
        return Err(ScatteringError::DoublePole(energy));
    }
    let n = model.levels();
    let c = model.channels();
    let wc: CMatrix = w.map(|v| Complex64::new(v, 0.0));
    let couplings = CMatrix::from_fn(n, c, |k, ch| {
        (0..n).map(|j| sys.vectors[k][j] * wc[(j, ch)]).sum()
    });
    let z = Complex64::new(energy, 0.0);
    let mut resonance = CMatrix::zeros(c, c);
    for k in 0..n {
        let g = couplings.row(k).transpose();
        resonance += &g * g.transpose() * (-I / (z - sys.values[k].value));
    }
    let s = s_from_parts(&h, &w, z)?;
    let background = s - CMatrix::identity(c, c) - &resonance;
    Ok(EigenbasisExpansion {
        values: sys.values,
        couplings,
        resonance,
        background,
    })
}

/// `|Gamma_k - sum_c (gamma_k^c)^2| / Gamma_k` for each state of the model
/// with couplings scaled by `alpha`.
pub fn isolated_resonance_deviation(
    model: &EffectiveHamiltonianModel,
    alpha: f64,
    energy: f64,
) -> Result<Vec<f64>, ScatteringError> {
    let ex = eigenbasis_expansion(&model.scaled_coupling(alpha), energy)?;
    Ok(ex
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let sum: Complex64 = ex.couplings.row(k).iter().map(|g| g * g).sum();
            (Complex64::new(v.width, 0.0) - sum).norm() / v.width
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet {
    pub poles: Vec<ComplexEigenvalue>,
    /// `-i gamma_k gamma_k^T`.
    pub residues: Vec<CMatrix>,
    /// Row k holds the couplings of pole k.
    pub couplings: CMatrix,
    pub fixed_point_iterations: Vec<usize>,
    pub converged: Vec<bool>,
    /// Relative distance between `residues[k]` and the contour average of
    /// `(z - pole) S(z)` with the couplings frozen at the pole.
    pub residue_defects: Vec<f64>,
}

/// Poles of S with their residues. Energy-independent models: the
/// eigenvalues of H_eff. Otherwise each branch solves `E = Re E_k(E)` by
/// fixed-point iteration started from the eigenvalues of `h0`.
pub fn find_poles(model: &EffectiveHamiltonianModel) -> Result<PoleSet, ScatteringError> {
    let n = model.levels();
    let c = model.channels();
    let mut poles = Vec::with_capacity(n);
    let mut iterations = Vec::with_capacity(n);
    let mut converged = Vec::with_capacity(n);
    let mut frozen: Vec<f64> = Vec::with_capacity(n);

    if model.is_energy_independent() {
        let sys = eig_complex_symmetric(&model.hamiltonian(0.0)?)?;
        for v in sys.values {
            poles.push(v);
            iterations.push(0);
            converged.push(true);
            frozen.push(0.0);
        }
    } else {
        let h0 = model.h0().map(|v| Complex64::new(v, 0.0));
        let starts = eig_complex_symmetric(&h0)?;
        for start in starts.values {
            let (pole, its, ok, at) = fixed_point(model, start.value)?;
            poles.push(ComplexEigenvalue::from_value(pole));
            iterations.push(its);
            converged.push(ok);
            frozen.push(at);
        }
    }

    let mut couplings = CMatrix::zeros(n, c);
    let mut residues = Vec::with_capacity(n);
    let mut residue_defects = Vec::with_capacity(n);
    for k in 0..n {
        let at = frozen[k];
        let h = model.hamiltonian(at)?;
        let w = model.coupling_at(at)?;
        let sys = eig_complex_symmetric(&h)?;
        let j = nearest(&sys.complex_values(), poles[k].value);
        let phi = &sys.vectors[j];
        let wc: CMatrix = w.map(|v| Complex64::new(v, 0.0));
        let g = wc.transpose() * phi;
        couplings.row_mut(k).copy_from(&g.transpose());
        let residue = &g * g.transpose() * (-I);
        let gap = sys
            .values
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != j)
            .map(|(_, v)| (v.value - poles[k].value).norm())
            .fold(f64::INFINITY, f64::min);
        residue_defects.push(if sys.ep_flag {
            f64::NAN
        } else {
            contour_residue(&h, &w, poles[k].value, gap)
                .map(|r| frobenius(&(&r - &residue)) / frobenius(&residue).max(f64::MIN_POSITIVE))
                .unwrap_or(f64::NAN)
        });
        residues.push(residue);
    }
    Ok(PoleSet {
        poles,
        residues,
        couplings,
        fixed_point_iterations: iterations,
        converged,
        residue_defects,
    })
}

fn nearest(values: &[Complex64], target: Complex64) -> usize {
    (0..values.len())
        .min_by(|&a, &b| (values[a] - target).norm().total_cmp(&(values[b] - target).norm()))
        .unwrap_or(0)
}

/// Average of `(z - p) S(z)` over 8 points on a small circle around `p`.
fn contour_residue(
    h: &CMatrix,
    w: &DMatrix<f64>,
    pole: Complex64,
    gap: f64,
) -> Result<CMatrix, ScatteringError> {
    let radius = if gap.is_finite() { 1e-3 * gap } else { 1e-3 * pole.norm().max(1.0) };
    let m = 8;
    let c = w.ncols();
    let mut acc = CMatrix::zeros(c, c);
    for j in 0..m {
        let dz = Complex64::from_polar(radius, std::f64::consts::TAU * (j as f64 + 0.5) / m as f64);
        acc += s_from_parts(h, w, pole + dz)? * dz;
    }
    Ok(acc / Complex64::new(m as f64, 0.0))
}

/// Solves `E = Re E_k(E)` for the branch starting at `start`. Returns the
/// pole, iteration count, convergence flag and the final real energy.
fn fixed_point(
    model: &EffectiveHamiltonianModel,
    start: Complex64,
) -> Result<(Complex64, usize, bool, f64), ScatteringError> {
    let mut e = start.re;
    let mut tracked = start;
    let mut relax = 1.0;
    let mut last_step: Option<f64> = None;
    for it in 1..=MAX_FIXED_POINT_ITERATIONS {
        let h = match model.hamiltonian(e) {
            Ok(h) => h,
            Err(_) => return Ok((tracked, it, false, e)),
        };
        let sys = eig_complex_symmetric(&h)?;
        let values = sys.complex_values();
        tracked = values[nearest(&values, tracked)];
        let step = tracked.re - e;
        if step.abs() < FIXED_POINT_TOL * e.abs().max(1.0) {
            return Ok((tracked, it, true, e));
        }
        if let Some(prev) = last_step {
            if prev * step < 0.0 && step.abs() > 0.5 * prev.abs() {
                relax = 0.5;
            }
        }
        last_step = Some(step);
        e += relax * step;
    }
    Ok((tracked, MAX_FIXED_POINT_ITERATIONS, false, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrappingSweep {
    pub alphas: Vec<f64>,
    /// Widths per alpha, sorted descending.
    pub widths: Vec<Vec<f64>>,
    pub energies: Vec<Vec<f64>>,
    /// `alpha^2 sum w^2`.
    pub width_sum_expected: Vec<f64>,
}

pub fn trapping_sweep(model: &EffectiveHamiltonianModel, alphas: &[f64]) -> Result<TrappingSweep, ScatteringError> {
    if !model.is_energy_independent() {
        return Err(ScatteringError::EnergyDependent);
    }
    if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(ScatteringError::InvalidGrid("alphas must be finite and non-negative".into()));
    }
    if alphas.windows(2).any(|w| w[1] < w[0]) {
        return Err(ScatteringError::InvalidGrid("alphas must be ascending".into()));
    }
    let w2: f64 = model.w().iter().map(|v| v * v).sum();
    let mut out = TrappingSweep {
        alphas: alphas.to_vec(),
        widths: vec![],
        energies: vec![],
        width_sum_expected: vec![],
    };
    for &alpha in alphas {
        let sys = eig_complex_symmetric(&model.scaled_coupling(alpha).hamiltonian(0.0)?)?;
        let mut pairs: Vec<(f64, f64)> = sys.values.iter().map(|v| (v.width, v.energy)).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        out.widths.push(pairs.iter().map(|p| p.0).collect());
        out.energies.push(pairs.iter().map(|p| p.1).collect());
        out.width_sum_expected.push(alpha * alpha * w2);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublePoleSmoothness {
    pub branch_point: ParameterPoint,
    pub direction: (f64, f64),
    pub deltas: Vec<f64>,
    /// `max_E ||S(E; delta) - S(E; 0)||_F`.
    pub deviations: Vec<f64>,
    /// Largest unitarity defect over the grid exactly at the branch point.
    pub unitarity_defect_at_branch_point: f64,
}

/// Distance of S on a real energy grid from its value at the branch point,
/// moving away along `direction` by each `delta`.
pub fn double_pole_smoothness(
    model: &TwoLevelModel,
    branch_point: ParameterPoint,
    direction: (f64, f64),
    deltas: &[f64],
    energies: &[f64],
) -> Result<DoublePoleSmoothness, ScatteringError> {
    if energies.is_empty() || energies.iter().any(|e| !e.is_finite()) {
        return Err(ScatteringError::InvalidGrid("energy grid must be non-empty and finite".into()));
    }
    let norm = (direction.0 * direction.0 + direction.1 * direction.1).sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(ScatteringError::InvalidGrid("direction must be a non-zero vector".into()));
    }
    let u = (direction.0 / norm, direction.1 / norm);
    let at_bp = scan(&model.effective_model(branch_point), energies)?;
    let mut deviations = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let p = ParameterPoint::new(branch_point.lambda + d * u.0, branch_point.omega + d * u.1);
        let s = scan(&model.effective_model(p), energies)?;
        deviations.push(
            s.s_matrices
                .iter()
                .zip(&at_bp.s_matrices)
                .map(|(a, b)| frobenius(&(a - b)))
                .fold(0.0, f64::max),
        );
    }
    Ok(DoublePoleSmoothness {
        branch_point,
        direction: u,
        deltas: deltas.to_vec(),
        deviations,
        unitarity_defect_at_branch_point: at_bp.unitarity_defect.iter().copied().fold(0.0, f64::max),
    })
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FormFactor;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single(e: f64, w: f64) -> EffectiveHamiltonianModel {
        EffectiveHamiltonianModel::new(DMatrix::from_element(1, 1, e), DMatrix::from_element(1, 1, w)).unwrap()
    }

    fn two_level_one_channel() -> EffectiveHamiltonianModel {
        EffectiveHamiltonianModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn zero_coupling_gives_identity() {
        let m = EffectiveHamiltonianModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, -1.0]),
            DMatrix::zeros(2, 3),
        )
        .unwrap();
        for e in [-2.0, 0.0, 1.0, 3.5] {
            assert!((s_matrix(&m, e).unwrap() - CMatrix::identity(3, 3)).camax() < 1e-15);
        }
    }

    #[test]
    fn breit_wigner() {
        let (e0, g): (f64, f64) = (0.7, 0.3);
        let m = single(e0, g.sqrt());
        let s = s_matrix(&m, e0).unwrap()[(0, 0)];
        assert!((s - c(-1.0, 0.0)).norm() < 1e-14);
        for e in linspace(-1.0, 2.0, 31) {
            let s = s_matrix(&m, e).unwrap()[(0, 0)];
            let expect = c(1.0, 0.0) - I * g / (c(e - e0, 0.0) + I * (g / 2.0));
            assert!((s - expect).norm() < 1e-14);
            assert!((s.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn overlapping_unitarity() {
        let m = TwoLevelModel::standard().effective_model(ParameterPoint::new(0.0, 0.3));
        let sc = scan(&m, &linspace(-3.0, 3.0, 601)).unwrap();
        assert!(sc.unitarity_defect.iter().all(|&d| d < 1e-10));
        assert!(sc.symmetry_defect.iter().all(|&d| d < 1e-10));
    }

    #[test]
    fn expansion_reconstructs_s() {
        let m = two_level_one_channel().scaled_coupling(0.8);
        for e in [-1.5, 0.0, 0.9] {
            let ex = eigenbasis_expansion(&m, e).unwrap();
            assert!(frobenius(&ex.background) < 1e-8);
        }
    }

    #[test]
    fn expansion_fails_at_double_pole() {
        let m = TwoLevelModel::standard().effective_model(ParameterPoint::new(0.0, 0.25));
        assert!(matches!(eigenbasis_expansion(&m, 0.0), Err(ScatteringError::DoublePole(_))));
    }

    #[test]
    fn single_state_coupling_squared() {
        let ex = eigenbasis_expansion(&single(0.0, 0.6), 0.3).unwrap();
        assert!((ex.couplings[(0, 0)] * ex.couplings[(0, 0)] - c(0.36, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn isolated_vs_overlapping() {
        let m = two_level_one_channel();
        let small = isolated_resonance_deviation(&m, 0.01, 0.0).unwrap();
        assert!(small.iter().all(|&d| d < 1e-3), "{small:?}");
        let large = isolated_resonance_deviation(&m, 5.0, 0.0).unwrap();
        assert!(large.iter().any(|&d| d > 0.1), "{large:?}");
    }

    #[test]
    fn poles_of_constant_model_are_eigenvalues() {
        let m = two_level_one_channel().scaled_coupling(0.7);
        let p = find_poles(&m).unwrap();
        let sys = eig_complex_symmetric(&m.hamiltonian(0.0).unwrap()).unwrap();
        for (a, b) in p.poles.iter().zip(&sys.values) {
            assert!((a.value - b.value).norm() < 1e-12);
        }
        assert_eq!(p.fixed_point_iterations, vec![0, 0]);
        assert!(p.residue_defects.iter().all(|&d| d < 1e-6), "{:?}", p.residue_defects);
    }

    #[test]
    fn breit_wigner_residue() {
        let p = find_poles(&single(0.4, 0.5)).unwrap();
        assert!((p.residues[0][(0, 0)] - c(0.0, -0.25)).norm() < 1e-14);
        assert!(p.residue_defects[0] < 1e-8);
    }

    #[test]
    fn energy_dependent_fixed_point() {
        let m = EffectiveHamiltonianModel::with_form_factors(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]),
            DMatrix::from_row_slice(2, 1, &[0.8, 0.5]),
            vec![FormFactor::Saturating { scale: 1.0 }],
        )
        .unwrap();
        let p = find_poles(&m).unwrap();
        assert!(p.converged.iter().all(|&c| c));
        for pole in &p.poles {
            let h = m.hamiltonian(pole.energy).unwrap();
            let sys = eig_complex_symmetric(&h).unwrap();
            let d = sys.values.iter().map(|v| (v.value - pole.value).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-10);
        }
    }

    #[test]
    fn trapping() {
        let m = two_level_one_channel();
        let t = trapping_sweep(&m, &[0.0, 1.0, 10.0]).unwrap();
        assert!(t.widths[0].iter().all(|&g| g.abs() < 1e-15));
        assert!(t.widths[2][1] < t.widths[1][1]);
        for (ws, expect) in t.widths.iter().zip(&t.width_sum_expected) {
            let sum: f64 = ws.iter().sum();
            assert!((sum - expect).abs() < 1e-12 * expect.max(1.0));
        }
        assert!(trapping_sweep(&m, &[1.0, 0.5]).is_err());
        assert!(trapping_sweep(&m, &[-1.0]).is_err());
    }

    #[test]
    fn smooth_through_double_pole() {
        let m = TwoLevelModel::standard();
        let r = double_pole_smoothness(
            &m,
            ParameterPoint::new(0.0, 0.25),
            (0.0, 1.0),
            &[0.0, 0.1, 0.05, 0.025],
            &linspace(-2.0, 2.0, 401),
        )
        .unwrap();
        assert_eq!(r.deviations[0], 0.0);
        assert!(r.deviations[2] < r.deviations[1] && r.deviations[3] < r.deviations[2]);
        assert!(r.unitarity_defect_at_branch_point < 1e-8);
    }
}
