use epkit::adiabatic::{continue_eigensystem, LoopPath, Orientation, PhaseConvention};
use epkit::branch::{chiral_smoothness, classify, find_branch_point, CouplingRegime};
use epkit::eigensystem::{eig_complex_symmetric, eigenvalues_two_level, Sign};
use epkit::model::{CMatrix, EffectiveHamiltonianModel, ParameterPoint, TwoLevelModel};
use epkit::scattering::{s_matrix, symmetry_defect, trapping_sweep, unitarity_defect};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn symmetric(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n).prop_map(move |v| {
        let mut m = CMatrix::from_fn(n, n, |r, c| Complex64::new(v[r * n + c].0, v[r * n + c].1));
        m = (&m + m.transpose()) * Complex64::new(0.5, 0.0);
        m
    })
}

fn scattering_model() -> impl Strategy<Value = EffectiveHamiltonianModel> {
    (2usize..=5, 1usize..=3).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(-2.0..2.0f64, n * n),
            prop::collection::vec(-1.0..1.0f64, n * k),
        )
            .prop_map(move |(h, w)| {
                let h = DMatrix::from_row_slice(n, n, &h);
                let h = (&h + h.transpose()) * 0.5;
                EffectiveHamiltonianModel::new(h, DMatrix::from_row_slice(n, k, &w)).unwrap()
            })
    })
}

fn rank(r: CouplingRegime) -> u8 {
    match r {
        CouplingRegime::Subcritical => 0,
        CouplingRegime::DoublePole => 1,
        CouplingRegime::Overcritical => 2,
    }
}

fn ep_point(m: &TwoLevelModel) -> ParameterPoint {
    ParameterPoint::new(0.0, (m.gamma1 - m.gamma2).abs() / 4.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_is_monotone_in_coupling(
        g1 in 0.0..2.0f64, g2 in 0.0..2.0f64, w1 in 0.0..2.0f64, w2 in 0.0..2.0f64,
    ) {
        let m = TwoLevelModel::crossing(g1, g2, 0.0).unwrap();
        let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        let a = classify(&m, lo).unwrap();
        let b = classify(&m, hi).unwrap();
        prop_assert!(a.f_real_at_crossing <= b.f_real_at_crossing);
        prop_assert!(rank(a.regime) <= rank(b.regime));
    }

    #[test]
    fn branch_point_does_not_depend_on_the_start(
        g1 in 0.0..2.0f64, g2 in 0.0..2.0f64, l0 in -1.0..1.0f64, w0 in 0.01..1.5f64,
    ) {
        prop_assume!((g1 - g2).abs() > 0.05);
        let m = TwoLevelModel::crossing(g1, g2, 0.0).unwrap();
        let bp = find_branch_point(&m, ParameterPoint::new(l0, w0)).unwrap();
        prop_assert!(bp.is_usable());
        let expect = ep_point(&m);
        prop_assert!(bp.location.lambda.abs() < 1e-8, "{:?}", bp);
        prop_assert!((bp.location.omega.abs() - expect.omega).abs() < 1e-8, "{:?}", bp);
        let v = eigenvalues_two_level(&m, bp.location);
        prop_assert!((v[0].value - v[1].value).norm() < 1e-6);
    }

    #[test]
    fn eigenbasis_is_c_orthonormal(h in (2usize..=6).prop_flat_map(symmetric)) {
        let n = h.nrows();
        let sys = eig_complex_symmetric(&h).unwrap();
        prop_assume!(!sys.ep_flag && sys.min_gap() > 1e-3);
        prop_assert!(max_abs(&(sys.gram() - CMatrix::identity(n, n))) < 1e-9);
        let sum: Complex64 = sys.complex_values().iter().sum();
        prop_assert!((sum - h.trace()).norm() < 1e-12 * (1.0 + h.norm()));
        for a in &sys.a_metrics {
            prop_assert!(*a >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn s_matrix_is_unitary_and_symmetric(m in scattering_model(), e in -4.0..4.0f64) {
        let s = s_matrix(&m, e).unwrap();
        prop_assert!(unitarity_defect(&s) < 1e-8);
        prop_assert!(symmetry_defect(&s) < 1e-10);
    }

    #[test]
    fn widths_add_up_to_the_coupling_norm(m in scattering_model(), alpha in 0.01..10.0f64) {
        let t = trapping_sweep(&m, &[alpha]).unwrap();
        let sum: f64 = t.widths[0].iter().sum();
        let norm2: f64 = m.w().iter().map(|x| x * x).sum();
        let expect = alpha * alpha * norm2;
        prop_assert!((sum - expect).abs() <= 1e-10 * expect.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn loops_enclosing_nothing_are_trivial(
        dl in -1.0..1.0f64, dw in -1.0..1.0f64, frac in 0.2..0.8f64,
    ) {
        let m = TwoLevelModel::standard();
        let center = ParameterPoint::new(dl, 0.25 + dw);
        // F depends on omega^2, so the mirror point at -omega_cr counts too
        let ep = ep_point(&m);
        let mirror = ParameterPoint::new(ep.lambda, -ep.omega);
        let away = center.distance(&ep).min(center.distance(&mirror));
        prop_assume!(away > 0.2);
        let path = LoopPath::circle(center, frac * away, 256);
        let r = continue_eigensystem(&m, &path, PhaseConvention::CProductContinuity).unwrap();
        prop_assert_eq!(r.branch_permutation.clone(), vec![0, 1]);
        prop_assert!(max_abs(&(&r.phase_matrix - CMatrix::identity(2, 2))) < 1e-6);
    }

    #[test]
    fn reversing_the_loop_inverts_the_monodromy(radius in 0.02..0.2f64) {
        let m = TwoLevelModel::standard();
        let pos = LoopPath::circle(ep_point(&m), radius, 512);
        let neg = pos.clone().with_orientation(Orientation::Negative);
        let a = continue_eigensystem(&m, &pos, PhaseConvention::CProductContinuity).unwrap();
        let b = continue_eigensystem(&m, &neg, PhaseConvention::CProductContinuity).unwrap();
        prop_assert!(max_abs(&(&a.phase_matrix * &b.phase_matrix - CMatrix::identity(2, 2))) < 1e-6);
    }

    #[test]
    fn monodromy_is_stable_under_step_doubling(radius in 0.02..0.2f64, steps in 128usize..512) {
        let m = TwoLevelModel::standard();
        let coarse = LoopPath::circle(ep_point(&m), radius, steps);
        let fine = coarse.clone().with_steps(2 * steps);
        let a = continue_eigensystem(&m, &coarse, PhaseConvention::CProductContinuity).unwrap();
        let b = continue_eigensystem(&m, &fine, PhaseConvention::CProductContinuity).unwrap();
        prop_assert_eq!(a.branch_permutation.clone(), b.branch_permutation.clone());
        prop_assert!(max_abs(&(&a.phase_matrix - &b.phase_matrix)) < 1e-8);
    }

    #[test]
    fn chiral_superposition_stays_smooth_near_the_double_pole(eps in 1e-6..1e-4f64) {
        let r = chiral_smoothness(&TwoLevelModel::standard(), 0.25 + eps, -0.05, 0.05, 400).unwrap();
        let smooth = match r.smooth_sign {
            Sign::Plus => r.max_step_chiral[0],
            Sign::Minus => r.max_step_chiral[1],
        };
        prop_assert!(smooth < 0.1 * r.max_step_eigenvectors[0].max(r.max_step_eigenvectors[1]));
    }
}
