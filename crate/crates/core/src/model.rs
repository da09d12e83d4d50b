//! Parametric Hamiltonian families and the discriminant that controls their
//! branch structure.
//!
//! Two families live here. [`TwoLevelModel`] is the closed-form 2x2 complex
//! symmetric matrix with affine diagonal energies, constant widths and a real
//! coupling. [`EffectiveHamiltonianModel`] is the N-level, C-channel
//! realization `h0 - (i/2) W(E) W(E)^T` with optional per-channel form
//! factors that make the coupling energy dependent.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("width {name} must be finite and non-negative, got {value}")]
    NegativeWidth { name: &'static str, value: f64 },
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("h0 must be square and symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("coupling matrix has {rows} rows but h0 is {n}x{n}")]
    ShapeMismatch { rows: usize, n: usize },
    #[error("model needs at least one level and one channel")]
    Empty,
    #[error("expected {expected} form factors (one per channel), got {got}")]
    FormFactorCount { expected: usize, got: usize },
    #[error("energy {energy} outside the domain of form factor {channel} ({domain})")]
    InvalidEnergy {
        energy: f64,
        channel: usize,
        domain: &'static str,
    },
}

/// Affine function `intercept + slope * lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub intercept: f64,
    pub slope: f64,
}

impl Affine {
    pub const fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        self.intercept + self.slope * lambda
    }
}

/// A point in the two-parameter plane `(lambda, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub lambda: f64,
    pub omega: f64,
}

impl ParameterPoint {
    pub const fn new(lambda: f64, omega: f64) -> Self {
        Self { lambda, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.is_finite() && self.omega.is_finite()
    }

    pub fn distance(&self, other: &ParameterPoint) -> f64 {
        (self.lambda - other.lambda).hypot(self.omega - other.omega)
    }

    pub fn lerp(&self, other: &ParameterPoint, t: f64) -> ParameterPoint {
        ParameterPoint {
            lambda: self.lambda + t * (other.lambda - self.lambda),
            omega: self.omega + t * (other.omega - self.omega),
        }
    }
}

/// Value of the discriminant `F = [(e1 - e2) - (i/2)(g1 - g2)]^2 + 4 w^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantValue {
    pub f: Complex64,
}

impl DiscriminantValue {
    pub fn f_real(&self) -> f64 {
        self.f.re
    }

    pub fn f_imag(&self) -> f64 {
        self.f.im
    }
}

/// The parametric 2x2 model
///
/// ```text
/// [ e1(l) - i g1/2      w       ]
/// [      w         e2(l) - i g2/2 ]
/// ```
///
/// `omega` is the default coupling; operations that take a
/// [`ParameterPoint`] use the point's `omega` instead, so loops can vary it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelModel {
    pub e1: Affine,
    pub e2: Affine,
    pub gamma1: f64,
    pub gamma2: f64,
    pub omega: f64,
}

impl TwoLevelModel {
    pub fn new(
        e1: Affine,
        e2: Affine,
        gamma1: f64,
        gamma2: f64,
        omega: f64,
    ) -> Result<Self, ModelError> {
        for (name, v) in [
            ("e1.intercept", e1.intercept),
            ("e1.slope", e1.slope),
            ("e2.intercept", e2.intercept),
            ("e2.slope", e2.slope),
            ("omega", omega),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name));
            }
        }
        for (name, v) in [("gamma1", gamma1), ("gamma2", gamma2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::NegativeWidth { name, value: v });
            }
        }
        Ok(Self {
            e1,
            e2,
            gamma1,
            gamma2,
            omega,
        })
    }

    /// `e1 = l`, `e2 = -l`, widths `(gamma1, gamma2)`.
    pub fn crossing(gamma1: f64, gamma2: f64, omega: f64) -> Result<Self, ModelError> {
        Self::new(
            Affine::new(0.0, 1.0),
            Affine::new(0.0, -1.0),
            gamma1,
            gamma2,
            omega,
        )
    }

    /// The reference model `e1 = l, e2 = -l, widths (1, 0)`. Its double pole
    /// sits at `(0, 0.25)`.
    pub fn standard() -> Self {
        Self::crossing(1.0, 0.0, 0.25).expect("constant model is valid")
    }

    pub fn at_lambda(&self, lambda: f64) -> ParameterPoint {
        ParameterPoint::new(lambda, self.omega)
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..*self }
    }

    pub fn is_hermitian(&self) -> bool {
        self.gamma1 == 0.0 && self.gamma2 == 0.0
    }

    /// `e1(l) - e2(l)`.
    pub fn level_difference(&self, lambda: f64) -> f64 {
        let da = self.e1.intercept - self.e2.intercept;
        let db = self.e1.slope - self.e2.slope;
        db.mul_add(lambda, da)
    }

    /// The parameter value where the unperturbed levels cross, if the slopes
    /// differ.
    pub fn crossing_lambda(&self) -> Option<f64> {
        let db = self.e1.slope - self.e2.slope;
        if db == 0.0 {
            return None;
        }
        // + 0.0 turns a signed zero into +0
        Some(-(self.e1.intercept - self.e2.intercept) / db + 0.0)
    }

    /// Half the width difference, `(g1 - g2) / 2`.
    pub(crate) fn half_width_difference(&self) -> f64 {
        0.5 * (self.gamma1 - self.gamma2)
    }

    /// Characteristic energy scale used for relative tolerances.
    pub fn scale(&self) -> f64 {
        [
            self.gamma1,
            self.gamma2,
            self.omega.abs(),
            self.e1.intercept.abs(),
            self.e2.intercept.abs(),
            self.e1.slope.abs(),
            self.e2.slope.abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn hamiltonian(&self, p: ParameterPoint) -> CMatrix {
        let h11 = Complex64::new(self.e1.eval(p.lambda), -0.5 * self.gamma1);
        let h22 = Complex64::new(self.e2.eval(p.lambda), -0.5 * self.gamma2);
        let w = Complex64::new(p.omega, 0.0);
        CMatrix::from_row_slice(2, 2, &[h11, w, w, h22])
    }

    pub fn discriminant(&self, p: ParameterPoint) -> DiscriminantValue {
        let d = self.level_difference(p.lambda);
        let g = self.half_width_difference();
        let w2 = 2.0 * p.omega;
        // (d - i g)^2 + (2w)^2 with the real part factored as
        // d^2 + (2w - g)(2w + g) so it stays accurate where it vanishes.
        let re = d.mul_add(d, (w2 - g) * (w2 + g));
        let im = -2.0 * d * g;
        DiscriminantValue {
            f: Complex64::new(re, im),
        }
    }

    /// Same matrix as an [`EffectiveHamiltonianModel`]: `h0 = [[e1, w], [w, e2]]`
    /// and one decay channel per level with `W = diag(sqrt g1, sqrt g2)`.
    pub fn effective_model(&self, p: ParameterPoint) -> EffectiveHamiltonianModel {
        let h0 = DMatrix::from_row_slice(
            2,
            2,
            &[
                self.e1.eval(p.lambda),
                p.omega,
                p.omega,
                self.e2.eval(p.lambda),
            ],
        );
        let w = DMatrix::from_row_slice(2, 2, &[self.gamma1.sqrt(), 0.0, 0.0, self.gamma2.sqrt()]);
        EffectiveHamiltonianModel::new(h0, w).expect("two-level model maps to a valid effective model")
    }
}

/// Real scalar multiplying one channel's couplings, `W(E)_kc = w_kc g_c(E)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FormFactor {
    /// `g(E) = 1`.
    Unit,
    /// `g(E) = E / (E + scale)`, defined for `E > 0`.
    Saturating { scale: f64 },
}

impl FormFactor {
    pub fn is_constant(&self) -> bool {
        matches!(self, FormFactor::Unit)
    }

    pub fn eval(&self, energy: f64, channel: usize) -> Result<f64, ModelError> {
        match *self {
            FormFactor::Unit => Ok(1.0),
            FormFactor::Saturating { scale } => {
                if !(energy > 0.0) || !energy.is_finite() {
                    return Err(ModelError::InvalidEnergy {
                        energy,
                        channel,
                        domain: "E > 0",
                    });
                }
                Ok(energy / (energy + scale))
            }
        }
    }
}

/// `H(E) = h0 - (i/2) W(E) W(E)^T` for N levels coupled to C channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveHamiltonianModel {
    h0: DMatrix<f64>,
    w: DMatrix<f64>,
    form_factors: Vec<FormFactor>,
}

impl EffectiveHamiltonianModel {
    /// Energy-independent model (all form factors constant).
    pub fn new(h0: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self, ModelError> {
        let c = w.ncols();
        Self::with_form_factors(h0, w, vec![FormFactor::Unit; c])
    }

    pub fn with_form_factors(
        h0: DMatrix<f64>,
        w: DMatrix<f64>,
        form_factors: Vec<FormFactor>,
    ) -> Result<Self, ModelError> {
        let n = h0.nrows();
        if n == 0 || w.ncols() == 0 {
            return Err(ModelError::Empty);
        }
        if h0.ncols() != n {
            return Err(ModelError::NotSymmetric(f64::INFINITY));
        }
        if w.nrows() != n {
            return Err(ModelError::ShapeMismatch { rows: w.nrows(), n });
        }
        if h0.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("matrix entry"));
        }
        let asym = (&h0 - h0.transpose()).camax();
        if asym > 1e-12 * h0.camax().max(1.0) {
            return Err(ModelError::NotSymmetric(asym));
        }
        if form_factors.len() != w.ncols() {
            return Err(ModelError::FormFactorCount {
                expected: w.ncols(),
                got: form_factors.len(),
            });
        }
        for ff in &form_factors {
            if let FormFactor::Saturating { scale } = ff {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(ModelError::NonFinite("form factor scale"));
                }
            }
        }
        Ok(Self { h0, w, form_factors })
    }

    pub fn levels(&self) -> usize {
        self.h0.nrows()
    }

    pub fn channels(&self) -> usize {
        self.w.ncols()
    }

    pub fn h0(&self) -> &DMatrix<f64> {
        &self.h0
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn form_factors(&self) -> &[FormFactor] {
        &self.form_factors
    }

    pub fn is_energy_independent(&self) -> bool {
        self.form_factors.iter().all(FormFactor::is_constant)
    }

    /// Copy with the coupling matrix scaled by `alpha`.
    pub fn scaled_coupling(&self, alpha: f64) -> Self {
        Self {
            h0: self.h0.clone(),
            w: &self.w * alpha,
            form_factors: self.form_factors.clone(),
        }
    }

    pub fn coupling_at(&self, energy: f64) -> Result<DMatrix<f64>, ModelError> {
        let mut w = self.w.clone();
        for (c, ff) in self.form_factors.iter().enumerate() {
            let g = ff.eval(energy, c)?;
            if g != 1.0 {
                w.column_mut(c).scale_mut(g);
            }
        }
        Ok(w)
    }

    pub fn hamiltonian(&self, energy: f64) -> Result<CMatrix, ModelError> {
        if !energy.is_finite() {
            return Err(ModelError::NonFinite("energy"));
        }
        let w = self.coupling_at(energy)?;
        let wwt = &w * w.transpose();
        let n = self.levels();
        Ok(CMatrix::from_fn(n, n, |r, c| {
            Complex64::new(self.h0[(r, c)], -0.5 * wwt[(r, c)])
        }))
    }
}

/// A symmetric matrix family `H(l, w) = base + l * d_lambda + w * d_omega`
/// over the parameter plane. Any [`TwoLevelModel`] is one of these; the
/// N-level form lets loops and degeneracy searches run on larger matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFamily {
    pub base: CMatrix,
    pub d_lambda: DMatrix<f64>,
    pub d_omega: DMatrix<f64>,
}

/// Anything that produces a complex symmetric matrix at each parameter point.
pub trait ParametricFamily {
    fn dim(&self) -> usize;

    fn matrix_at(&self, p: ParameterPoint) -> CMatrix;

    /// The closed-form two-level model behind this family, when there is one.
    fn as_two_level(&self) -> Option<&TwoLevelModel> {
        None
    }

    fn scale(&self) -> f64 {
        1.0
    }
}

impl ParametricFamily for TwoLevelModel {
    fn dim(&self) -> usize {
        2
    }

    fn matrix_at(&self, p: ParameterPoint) -> CMatrix {
        self.hamiltonian(p)
    }

    fn as_two_level(&self) -> Option<&TwoLevelModel> {
        Some(self)
    }

    fn scale(&self) -> f64 {
        TwoLevelModel::scale(self).max(f64::MIN_POSITIVE)
    }
}

impl ParametricFamily for LinearFamily {
    fn dim(&self) -> usize {
        self.base.nrows()
    }

    fn matrix_at(&self, p: ParameterPoint) -> CMatrix {
        let n = self.dim();
        CMatrix::from_fn(n, n, |r, c| {
            self.base[(r, c)]
                + Complex64::new(
                    p.lambda * self.d_lambda[(r, c)] + p.omega * self.d_omega[(r, c)],
                    0.0,
                )
        })
    }

    fn scale(&self) -> f64 {
        self.base
            .iter()
            .map(|z| z.norm())
            .chain(self.d_lambda.iter().map(|v| v.abs()))
            .chain(self.d_omega.iter().map(|v| v.abs()))
            .fold(f64::MIN_POSITIVE, f64::max)
    }
}

impl From<&TwoLevelModel> for LinearFamily {
    fn from(m: &TwoLevelModel) -> Self {
        let base = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(m.e1.intercept, -0.5 * m.gamma1),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(m.e2.intercept, -0.5 * m.gamma2),
            ],
        );
        LinearFamily {
            base,
            d_lambda: DMatrix::from_row_slice(2, 2, &[m.e1.slope, 0.0, 0.0, m.e2.slope]),
            d_omega: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_matrix_at_origin() {
        let m = TwoLevelModel::crossing(0.0, 0.0, 0.0).unwrap();
        let h = m.hamiltonian(ParameterPoint::new(0.0, 0.0));
        assert!(h.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn direct_substitution() {
        let m = TwoLevelModel::crossing(1.0, 0.0, 0.0).unwrap();
        let h = m.hamiltonian(ParameterPoint::new(1.0, 0.5));
        assert_eq!(h[(0, 0)], c(1.0, -0.5));
        assert_eq!(h[(0, 1)], c(0.5, 0.0));
        assert_eq!(h[(1, 0)], c(0.5, 0.0));
        assert_eq!(h[(1, 1)], c(-1.0, 0.0));
    }

    #[test]
    fn hermitian_without_widths() {
        let m = TwoLevelModel::new(Affine::new(0.3, 2.0), Affine::new(-1.0, 0.5), 0.0, 0.0, 0.7)
            .unwrap();
        let h = m.hamiltonian(ParameterPoint::new(0.4, -0.2));
        assert_eq!(h, h.adjoint());
    }

    #[test]
    fn rejects_negative_width() {
        assert!(matches!(
            TwoLevelModel::crossing(-0.1, 0.0, 0.2),
            Err(ModelError::NegativeWidth { name: "gamma1", .. })
        ));
    }

    #[test]
    fn discriminant_examples() {
        let herm = TwoLevelModel::crossing(0.0, 0.0, 0.5).unwrap();
        assert_eq!(herm.discriminant(ParameterPoint::new(0.0, 0.5)).f, c(1.0, 0.0));

        let m = TwoLevelModel::standard();
        assert_eq!(m.discriminant(ParameterPoint::new(0.0, 0.25)).f, c(0.0, 0.0));

        // independent evaluation of [(e1-e2) - (i/2)(g1-g2)]^2 + 4 w^2
        let naive = |lambda: f64, omega: f64| {
            let z = c(2.0 * lambda, -0.5);
            z * z + c(4.0 * omega * omega, 0.0)
        };
        let f = m.discriminant(ParameterPoint::new(0.0, 0.2)).f;
        assert!((f - c(-0.09, 0.0)).norm() < 1e-15);
        assert!((f - naive(0.0, 0.2)).norm() < 1e-15);
        for &(l, w) in &[(0.3, 0.1), (-1.2, 0.8), (0.01, -0.4)] {
            let f = m.discriminant(ParameterPoint::new(l, w)).f;
            assert!((f - naive(l, w)).norm() < 1e-14);
        }
    }

    #[test]
    fn discriminant_real_for_equal_widths() {
        let m = TwoLevelModel::crossing(0.7, 0.7, 0.3).unwrap();
        for l in [-2.0, -0.1, 0.0, 0.5, 3.0] {
            assert_eq!(m.discriminant(ParameterPoint::new(l, 0.3)).f_imag(), 0.0);
        }
    }

    #[test]
    fn zero_coupling_returns_h0() {
        let h0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, -0.5]);
        let m = EffectiveHamiltonianModel::new(h0.clone(), DMatrix::zeros(2, 1)).unwrap();
        let h = m.hamiltonian(0.3).unwrap();
        assert!(h.iter().zip(h0.iter()).all(|(z, r)| *z == c(*r, 0.0)));
    }

    #[test]
    fn single_channel_reproduces_two_level() {
        let lambda = 0.37;
        let h0 = DMatrix::from_row_slice(2, 2, &[lambda, 0.0, 0.0, -lambda]);
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let eff = EffectiveHamiltonianModel::new(h0, w).unwrap().hamiltonian(0.0).unwrap();
        let two = TwoLevelModel::crossing(1.0, 0.0, 0.0)
            .unwrap()
            .hamiltonian(ParameterPoint::new(lambda, 0.0));
        assert_eq!(eff, two);
    }

    #[test]
    fn orthogonal_channels_reproduce_two_level() {
        let (g1, g2, omega, lambda) = (0.8, 0.3, 0.21, -0.4);
        let m = TwoLevelModel::crossing(g1, g2, omega).unwrap();
        // rotate the channel basis: rows stay orthogonal with norms sqrt(g_k)
        let (s, co) = 0.6f64.sin_cos();
        let w = DMatrix::from_row_slice(
            2,
            2,
            &[g1.sqrt() * co, g1.sqrt() * s, -g2.sqrt() * s, g2.sqrt() * co],
        );
        let h0 = DMatrix::from_row_slice(2, 2, &[lambda, omega, omega, -lambda]);
        let eff = EffectiveHamiltonianModel::new(h0, w).unwrap().hamiltonian(1.0).unwrap();
        let two = m.hamiltonian(ParameterPoint::new(lambda, omega));
        assert!((eff - two).camax() < 1e-15);
    }

    #[test]
    fn trace_identity() {
        let h0 = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, 0.1, -0.3, 0.4, 0.0, 0.4, 2.0]);
        let w = DMatrix::from_row_slice(3, 2, &[0.5, -0.2, 0.3, 0.9, -1.1, 0.05]);
        let m = EffectiveHamiltonianModel::with_form_factors(
            h0.clone(),
            w,
            vec![FormFactor::Unit, FormFactor::Saturating { scale: 1.0 }],
        )
        .unwrap();
        let e = 0.8;
        let we = m.coupling_at(e).unwrap();
        let expected = c(h0.trace(), -0.5 * we.iter().map(|v| v * v).sum::<f64>());
        assert!((m.hamiltonian(e).unwrap().trace() - expected).norm() < 1e-15);
    }

    #[test]
    fn form_factor_domain() {
        let m = EffectiveHamiltonianModel::with_form_factors(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![FormFactor::Saturating { scale: 1.0 }],
        )
        .unwrap();
        assert!(matches!(
            m.hamiltonian(-0.5),
            Err(ModelError::InvalidEnergy { channel: 0, .. })
        ));
        assert!(m.hamiltonian(0.5).is_ok());
    }

    #[test]
    fn rejects_asymmetric_h0() {
        let h0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(
            EffectiveHamiltonianModel::new(h0, DMatrix::zeros(2, 1)),
            Err(ModelError::NotSymmetric(_))
        ));
    }

    #[test]
    fn linear_family_matches_two_level() {
        let m = TwoLevelModel::new(Affine::new(0.2, 1.5), Affine::new(-0.1, -0.5), 0.4, 0.1, 0.3)
            .unwrap();
        let fam = LinearFamily::from(&m);
        let p = ParameterPoint::new(0.77, -0.31);
        assert!((fam.matrix_at(p) - m.hamiltonian(p)).camax() < 1e-15);
    }
}
