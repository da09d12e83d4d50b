//! Eigenvalues and bi-orthogonally normalized eigenvectors of complex
//! symmetric matrices.
//!
//! For `H = H^T` the left eigenvector of `H` belongs to the same eigenvalue as
//! the complex conjugate of the right one, so right eigenvectors can be
//! normalized against each other with the bilinear c-product
//! `(u, v) = sum_j u_j v_j` instead of the Hermitian inner product. With that
//! normalization `sum_j phi_k,j phi_l,j = delta_kl`, while the ordinary norms
//! `A_k = <phi_k|phi_k>` are at least one and grow without bound as two
//! eigenvalues coalesce.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CMatrix, CVector, ParameterPoint, TwoLevelModel, I};

/// Largest matrix accepted by [`eig_complex_symmetric`].
pub const MAX_DIM: usize = 64;

/// A unit-ordinary-norm eigenvector whose c-norm `|v^T v|` falls below this
/// is treated as sitting on an exceptional point.
pub const EP_THRESHOLD: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-12;
const C_NORM_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix dimension {0} exceeds the supported maximum {MAX_DIM}")]
    TooLarge(usize),
    #[error("matrix is not complex symmetric (max |h - h^T| = {0:e})")]
    NotSymmetric(f64),
    #[error("Schur iteration did not converge")]
    NoConvergence,
    #[error("expected exactly {expected} vectors, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("vector {index} is not c-normalized (v^T v = {value})")]
    NotCNormalized { index: usize, value: Complex64 },
}

/// Complex eigenvalue `E - (i/2) Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEigenvalue {
    pub energy: f64,
    pub width: f64,
    pub value: Complex64,
}

impl ComplexEigenvalue {
    pub fn from_value(value: Complex64) -> Self {
        Self {
            energy: value.re,
            width: -2.0 * value.im,
            value,
        }
    }
}

/// The c-product `sum_j u_j v_j`.
pub fn c_product(u: &CVector, v: &CVector) -> Complex64 {
    u.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// The ordinary inner product `<u|v> = sum_j conj(u_j) v_j`.
pub fn inner(u: &CVector, v: &CVector) -> Complex64 {
    u.dotc(v)
}

/// Closed-form eigenvalues of the two-level model,
/// `(e1 + e2)/2 - (i/4)(g1 + g2) +- sqrt(F)/2`, sorted.
pub fn eigenvalues_two_level(model: &TwoLevelModel, p: ParameterPoint) -> [ComplexEigenvalue; 2] {
    let mean = Complex64::new(
        0.5 * (model.e1.eval(p.lambda) + model.e2.eval(p.lambda)),
        -0.25 * (model.gamma1 + model.gamma2),
    );
    let half_root = 0.5 * model.discriminant(p).f.sqrt();
    let mut vals = [mean - half_root, mean + half_root];
    let tol = 1e-12 * model.scale().max(1.0);
    if compare_eigenvalues(&vals[1], &vals[0], tol) == Ordering::Less {
        vals.swap(0, 1);
    }
    vals.map(ComplexEigenvalue::from_value)
}

fn compare_eigenvalues(a: &Complex64, b: &Complex64, tol: f64) -> Ordering {
    if (a.re - b.re).abs() <= tol {
        a.im.total_cmp(&b.im)
    } else {
        a.re.total_cmp(&b.re)
    }
}

/// Indices that order `values` by ascending real part, with real parts within
/// `tol` of each other ordered by ascending imaginary part.
pub(crate) fn eigenvalue_order(values: &[Complex64], tol: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re));
    let mut start = 0;
    while start < idx.len() {
        let anchor = values[idx[start]].re;
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]].re - anchor <= tol {
            end += 1;
        }
        idx[start..end].sort_by(|&a, &b| values[a].im.total_cmp(&values[b].im));
        start = end;
    }
    idx
}

/// Ordinary-inner-product overlaps of c-normalized eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMetrics {
    /// `A_k = <phi_k|phi_k>`.
    pub a: Vec<f64>,
    /// `B_k^l = |<phi_k|phi_l>|`, zero on the diagonal.
    pub b: DMatrix<f64>,
    /// Largest `|Re <phi_k|phi_l>| / max(A_k, A_l)` over `k != l`. Zero for
    /// two-level systems; generally non-zero once `N > 2`.
    pub max_offdiag_real: f64,
}

/// Computes `A_k` and `B_k^l` for c-normalized vectors.
pub fn overlap_metrics(vectors: &[CVector]) -> Result<OverlapMetrics, EigenError> {
    for (index, v) in vectors.iter().enumerate() {
        let value = c_product(v, v);
        if (value - 1.0).norm() > C_NORM_CHECK_TOL * v.norm_squared().max(1.0) {
            return Err(EigenError::NotCNormalized { index, value });
        }
    }
    Ok(raw_overlap_metrics(vectors))
}

fn raw_overlap_metrics(vectors: &[CVector]) -> OverlapMetrics {
    let n = vectors.len();
    let a: Vec<f64> = vectors.iter().map(|v| v.norm_squared()).collect();
    let mut b = DMatrix::zeros(n, n);
    let mut max_offdiag_real: f64 = 0.0;
    for k in 0..n {
        for l in 0..n {
            if k == l {
                continue;
            }
            let z = inner(&vectors[k], &vectors[l]);
            b[(k, l)] = z.norm();
            max_offdiag_real = max_offdiag_real.max(z.re.abs() / a[k].max(a[l]));
        }
    }
    OverlapMetrics {
        a,
        b,
        max_offdiag_real,
    }
}

/// Eigenpairs of a complex symmetric matrix with c-normalized eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthogonalEigensystem {
    pub values: Vec<ComplexEigenvalue>,
    /// Right eigenvectors; the left eigenvectors are their conjugates.
    pub vectors: Vec<CVector>,
    pub a_metrics: Vec<f64>,
    pub b_metrics: DMatrix<f64>,
    /// See [`OverlapMetrics::max_offdiag_real`].
    pub max_offdiag_real: f64,
    /// Set when some eigenvector has (numerically) vanishing c-norm. The
    /// vectors are then left at unit ordinary norm.
    pub ep_flag: bool,
    pub diagnostic: Option<String>,
}

impl BiorthogonalEigensystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// c-product Gram matrix `G_kl = phi_k^T phi_l`.
    pub fn gram(&self) -> CMatrix {
        let n = self.dim();
        CMatrix::from_fn(n, n, |k, l| c_product(&self.vectors[k], &self.vectors[l]))
    }

    pub fn complex_values(&self) -> Vec<Complex64> {
        self.values.iter().map(|v| v.value).collect()
    }

    /// Smallest pairwise distance between eigenvalues.
    pub fn min_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for k in 0..self.dim() {
            for l in k + 1..self.dim() {
                gap = gap.min((self.values[k].value - self.values[l].value).norm());
            }
        }
        gap
    }
}

/// Eigendecomposition of a complex symmetric matrix (N <= 64).
///
/// Eigenvalues come from a complex Schur factorization `H = Q T Q^*`;
/// eigenvectors are obtained by back-substitution in `T`. Each vector is
/// c-normalized and its overall sign fixed so that its largest component has
/// argument in `(-pi/2, pi/2]`.
pub fn eig_complex_symmetric(h: &CMatrix) -> Result<BiorthogonalEigensystem, EigenError> {
    let (n, m) = h.shape();
    if n != m {
        return Err(EigenError::NotSquare(n, m));
    }
    if n > MAX_DIM {
        return Err(EigenError::TooLarge(n));
    }
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let asym = (h - h.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if asym > SYMMETRY_TOL * scale.max(1.0) {
        return Err(EigenError::NotSymmetric(asym));
    }
    if n == 0 {
        return Ok(BiorthogonalEigensystem {
            values: vec![],
            vectors: vec![],
            a_metrics: vec![],
            b_metrics: DMatrix::zeros(0, 0),
            max_offdiag_real: 0.0,
            ep_flag: false,
            diagnostic: None,
        });
    }

    let (raw_values, raw_vectors) = if scale == 0.0 {
        (vec![Complex64::new(0.0, 0.0); n], unit_vectors(n))
    } else {
        schur_eigenpairs(h, scale)?
    };

    let order = eigenvalue_order(&raw_values, 1e-12 * scale.max(1.0));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    let mut ep_flag = false;
    let mut diagnostic = None;
    for &k in &order {
        let mut v = raw_vectors[k].clone();
        let norm = v.norm();
        v.unscale_mut(norm);
        let c = c_product(&v, &v);
        if c.norm() < EP_THRESHOLD {
            ep_flag = true;
            diagnostic = Some(format!(
                "eigenvector for {} has c-norm {:.3e}: near an exceptional point",
                format_complex(raw_values[k]),
                c.norm()
            ));
        } else {
            v /= c.sqrt();
            fix_sign(&mut v);
        }
        values.push(ComplexEigenvalue::from_value(raw_values[k]));
        vectors.push(v);
    }

    let metrics = raw_overlap_metrics(&vectors);
    Ok(BiorthogonalEigensystem {
        values,
        vectors,
        a_metrics: metrics.a,
        b_metrics: metrics.b,
        max_offdiag_real: metrics.max_offdiag_real,
        ep_flag,
        diagnostic,
    })
}

fn format_complex(z: Complex64) -> String {
    format!("{:.6}{:+.6}i", z.re, z.im)
}

fn unit_vectors(n: usize) -> Vec<CVector> {
    (0..n)
        .map(|k| CVector::from_fn(n, |j, _| Complex64::new(if j == k { 1.0 } else { 0.0 }, 0.0)))
        .collect()
}

/// Flips `v` so its largest-magnitude component has argument in (-pi/2, pi/2].
pub(crate) fn fix_sign(v: &mut CVector) {
    let Some(big) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(_, z)| *z)
    else {
        return;
    };
    let arg = big.arg();
    if !(arg > -FRAC_PI_2 && arg <= FRAC_PI_2) {
        v.neg_mut();
    }
}

fn schur_eigenpairs(
    h: &CMatrix,
    scale: f64,
) -> Result<(Vec<Complex64>, Vec<CVector>), EigenError> {
    let n = h.nrows();
    let schur = Schur::try_new(h.clone(), f64::EPSILON, 10_000).ok_or(EigenError::NoConvergence)?;
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let tiny = f64::EPSILON * scale;

    let mut vectors = Vec::with_capacity(n);
    for k in 0..n {
        let mu = values[k];
        let mut y = CVector::zeros(n);
        y[k] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in j + 1..=k {
                acc += t[(j, m)] * y[m];
            }
            let mut denom = t[(j, j)] - mu;
            if denom.norm() < tiny {
                denom = Complex64::new(tiny, 0.0);
            }
            y[j] = -acc / denom;
            // keep the partial solution bounded
            let big = y.camax();
            if big > 1e100 {
                y.unscale_mut(big);
            }
        }
        let mut x = &q * y;
        let nx = x.norm();
        x.unscale_mut(nx);
        if residual(h, mu, &x) > 1e-12 * scale {
            refine(h, mu, &mut x, scale);
        }
        vectors.push(x);
    }
    Ok((values, vectors))
}

fn residual(h: &CMatrix, mu: Complex64, x: &CVector) -> f64 {
    (h * x - x * mu).norm() / x.norm()
}

/// A couple of inverse-iteration sweeps with a slightly shifted eigenvalue.
fn refine(h: &CMatrix, mu: Complex64, x: &mut CVector, scale: f64) {
    let n = h.nrows();
    let shift = mu + Complex64::new(1e-13 * scale, 1e-13 * scale);
    let a = h - CMatrix::identity(n, n) * shift;
    let lu = a.lu();
    for _ in 0..2 {
        let Some(mut z) = lu.solve(x) else {
            return;
        };
        let nz = z.norm();
        if !(nz.is_finite() && nz > 0.0) {
            return;
        }
        z.unscale_mut(nz);
        if residual(h, mu, &z) < residual(h, mu, x) {
            *x = z;
        } else {
            return;
        }
    }
}

/// Sign of the `+- i` in a chiral superposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `a1 phi_1 + sign * i * a2 phi_2`.
pub fn chiral_superposition(
    vectors: &[CVector],
    a1: Complex64,
    a2: Complex64,
    sign: Sign,
) -> Result<CVector, EigenError> {
    let [phi1, phi2] = vectors else {
        return Err(EigenError::Arity {
            expected: 2,
            got: vectors.len(),
        });
    };
    Ok(phi1 * a1 + phi2 * (I * a2 * sign.value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TwoLevelModel;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn closed_form_examples() {
        let diag = TwoLevelModel::new(
            crate::model::Affine::new(1.0, 0.0),
            crate::model::Affine::new(-1.0, 0.0),
            0.0,
            0.0,
            0.0,
        )
        .unwrap();
        let v = eigenvalues_two_level(&diag, ParameterPoint::new(0.0, 0.0));
        assert_eq!([v[0].value, v[1].value], [c(-1.0, 0.0), c(1.0, 0.0)]);

        let gap = TwoLevelModel::crossing(0.0, 0.0, 0.5).unwrap();
        let v = eigenvalues_two_level(&gap, ParameterPoint::new(0.0, 0.5));
        assert_eq!([v[0].value, v[1].value], [c(-0.5, 0.0), c(0.5, 0.0)]);

        let ep = TwoLevelModel::standard();
        let v = eigenvalues_two_level(&ep, ParameterPoint::new(0.0, 0.25));
        assert!(close(v[0].value, c(0.0, -0.25), 1e-15));
        assert!(close(v[1].value, c(0.0, -0.25), 1e-15));
    }

    #[test]
    fn eigenvalue_fields_consistent() {
        let e = ComplexEigenvalue::from_value(c(0.3, -0.125));
        assert_eq!(e.energy, 0.3);
        assert_eq!(e.width, 0.25);
        assert_eq!(c(e.energy, -0.5 * e.width), e.value);
    }

    #[test]
    fn diagonal_hermitian() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let es = eig_complex_symmetric(&h).unwrap();
        assert!(!es.ep_flag);
        assert!(close(es.values[0].value, c(1.0, 0.0), 1e-15));
        assert!(close(es.values[1].value, c(2.0, 0.0), 1e-15));
        assert!(close(es.vectors[0][0], c(1.0, 0.0), 1e-15));
        assert!(close(es.vectors[1][1], c(1.0, 0.0), 1e-15));
        for a in &es.a_metrics {
            assert!((a - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn overcritical_cross_check() {
        let m = TwoLevelModel::crossing(1.0, 0.0, 0.5).unwrap();
        let p = ParameterPoint::new(0.0, 0.5);
        let es = eig_complex_symmetric(&m.hamiltonian(p)).unwrap();
        let closed = eigenvalues_two_level(&m, p);
        for k in 0..2 {
            assert!(close(es.values[k].value, closed[k].value, 1e-12));
        }
        assert!(es.a_metrics[0] > 1.0);
        assert!((es.a_metrics[0] - es.a_metrics[1]).abs() < 1e-12);
        assert!((es.b_metrics[(0, 1)] - es.b_metrics[(1, 0)]).abs() < 1e-12);
        assert!(es.max_offdiag_real < 1e-12);
    }

    #[test]
    fn flags_exceptional_point() {
        let m = TwoLevelModel::standard();
        let es = eig_complex_symmetric(&m.hamiltonian(ParameterPoint::new(0.0, 0.25))).unwrap();
        assert!(es.ep_flag);
        assert!(es.diagnostic.is_some());
    }

    #[test]
    fn metrics_diverge_towards_ep() {
        let m = TwoLevelModel::standard();
        let mut last_a = 0.0;
        let mut last_b = 0.0;
        for dw in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let es = eig_complex_symmetric(&m.hamiltonian(ParameterPoint::new(0.0, 0.25 + dw)))
                .unwrap();
            assert!(!es.ep_flag);
            assert!(es.a_metrics[0] > last_a);
            assert!(es.b_metrics[(0, 1)] > last_b);
            last_a = es.a_metrics[0];
            last_b = es.b_metrics[(0, 1)];
        }
        assert!(last_a > 100.0);
    }

    #[test]
    fn sign_convention() {
        let m = TwoLevelModel::crossing(0.4, 0.1, 0.3).unwrap();
        let es = eig_complex_symmetric(&m.hamiltonian(ParameterPoint::new(0.2, 0.3))).unwrap();
        for v in &es.vectors {
            let big = v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(big.arg() > -FRAC_PI_2 && big.arg() <= FRAC_PI_2);
        }
    }

    #[test]
    fn rejects_non_symmetric() {
        let h = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(eig_complex_symmetric(&h), Err(EigenError::NotSymmetric(_))));
    }

    #[test]
    fn overlap_metrics_hermitian_limit() {
        let s = 0.5f64.sqrt();
        let v = vec![
            CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]),
            CVector::from_vec(vec![c(-s, 0.0), c(s, 0.0)]),
        ];
        let m = overlap_metrics(&v).unwrap();
        assert!(m.a.iter().all(|a| (a - 1.0).abs() < 1e-15));
        assert!(m.b.camax() < 1e-15);
    }

    #[test]
    fn overlap_metrics_rejects_unnormalized() {
        let v = vec![CVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)])];
        assert!(matches!(overlap_metrics(&v), Err(EigenError::NotCNormalized { index: 0, .. })));
    }

    #[test]
    fn chiral_examples() {
        let phi = vec![
            CVector::from_vec(vec![c(1.0, 0.5), c(-0.2, 0.1)]),
            CVector::from_vec(vec![c(0.3, -0.7), c(1.1, 0.0)]),
        ];
        let only1 = chiral_superposition(&phi, c(1.0, 0.0), c(0.0, 0.0), Sign::Plus).unwrap();
        assert_eq!(only1, phi[0]);
        let only2 = chiral_superposition(&phi, c(0.0, 0.0), c(1.0, 0.0), Sign::Plus).unwrap();
        assert!((only2 - &phi[1] * I).camax() < 1e-15);
        assert!(matches!(
            chiral_superposition(&phi[..1], c(1.0, 0.0), c(1.0, 0.0), Sign::Minus),
            Err(EigenError::Arity { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn ordering_breaks_ties_by_imaginary_part() {
        let vals = [c(0.0, -0.1), c(0.0, -0.3), c(-1.0, 0.0)];
        assert_eq!(eigenvalue_order(&vals, 1e-12), vec![2, 1, 0]);
    }
}
