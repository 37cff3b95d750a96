use eakf_core::linalg::symmetrize;
use eakf_core::{
    adjustment_matrix, analyze, compare_cov, ordered_eig_psd, pinv_rect_diag, posterior_cov_direct,
    posterior_cov_reduced, posterior_cov_woodbury, posterior_mean_direct, project_observations,
    svd_full, ForecastEnsemble, Matrix, ObservationModel, OrderingMode, PerturbationMatrix, Vector,
    DEFAULT_RANK_TOL,
};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy)]
enum ObsKind {
    Dense,
    Selection,
    Zero,
}

fn instance(
    seed: u64,
    n: usize,
    m: usize,
    p: usize,
    kind: ObsKind,
) -> (ForecastEnsemble, ObservationModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ens = ForecastEnsemble::new(normal(&mut rng, n, m)).unwrap();
    let h = match kind {
        ObsKind::Dense => normal(&mut rng, p, n),
        ObsKind::Selection => Matrix::from_fn(p, n, |i, j| if i == j { 1.0 } else { 0.0 }),
        ObsKind::Zero => Matrix::zeros(p, n),
    };
    let l = normal(&mut rng, p, p);
    let d = Vector::from_fn(p, |_, _| rng.random_range(0.5..1.5));
    let r = Matrix::from_diagonal(&d) + &l * l.transpose() * (1.0 / p as f64);
    let y = Vector::from_fn(p, |_, _| rng.sample(StandardNormal));
    (ens, ObservationModel::new(h, r, y).unwrap())
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn kind_strategy() -> impl Strategy<Value = ObsKind> {
    prop_oneof![
        Just(ObsKind::Dense),
        Just(ObsKind::Selection),
        Just(ObsKind::Zero)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn svd_reconstructs_and_is_orthogonal(seed in any::<u64>(), rows in 1usize..=20, cols in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = normal(&mut rng, rows, cols);
        let svd = svd_full(&m, DEFAULT_RANK_TOL).unwrap();
        let r = svd.rank();
        prop_assert!(r <= rows.min(cols));
        prop_assert!((svd.reconstruct() - &m).norm() <= 1e-12 * m.norm());
        prop_assert!((svd.f().transpose() * svd.f() - Matrix::identity(r, r)).norm() <= 1e-12);
        prop_assert!((svd.u().transpose() * svd.u() - Matrix::identity(cols, cols)).norm() <= 1e-12);
        prop_assert!((svd.u() * svd.u().transpose() - Matrix::identity(cols, cols)).norm() <= 1e-12);
        let sv = svd.singular_values();
        prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((&m * svd.null_basis()).norm() <= 1e-12 * m.norm());
    }

    #[test]
    fn svd_of_perturbations_has_rank_at_most_m_minus_one(seed in any::<u64>(), n in 1usize..=20, m in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = ForecastEnsemble::new(normal(&mut rng, n, m)).unwrap().perturbations();
        let svd = svd_full(z.matrix(), DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(svd.rank(), n.min(m - 1));
    }

    #[test]
    fn pseudoinverse_moore_penrose(diag in prop::collection::vec(0.01f64..100.0, 1..6), extra in 0usize..5) {
        let r = diag.len();
        let mut g = Matrix::zeros(r, r + extra);
        for (k, d) in diag.iter().enumerate() {
            g[(k, k)] = *d;
        }
        let gp = pinv_rect_diag(&g).unwrap();
        prop_assert!((&gp * &g * &gp - &gp).amax() <= 1e-15 * gp.amax());
        prop_assert!((&g * &gp * &g - &g).amax() <= 1e-15 * g.amax());
        let proj = &gp * &g;
        for k in 0..(r + extra) {
            let expected = if k < r { 1.0 } else { 0.0 };
            prop_assert!((proj[(k, k)] - expected).abs() <= 1e-15);
        }
    }

    #[test]
    fn ordered_eig_contract(seed in any::<u64>(), n in 1usize..=20, m in 2usize..=12, p in 1usize..=20, kind in kind_strategy()) {
        let p = p.min(n);
        let (ens, obs) = instance(seed, n, m, p, kind);
        let z = ens.perturbations();
        let svd = svd_full(z.matrix(), DEFAULT_RANK_TOL).unwrap();
        let s = project_observations(&z, &obs).unwrap().s;
        let eig = ordered_eig_psd(&s, &svd.row_space_basis(), &svd.null_basis()).unwrap();
        let r = svd.rank();
        prop_assert!((eig.reconstruct() - &s).norm() <= 1e-10 * s.norm());
        let trailing = z.matrix() * eig.c().columns(r, m - r);
        prop_assert!(trailing.norm() <= 1e-10 * z.matrix().norm());
        prop_assert!(eig.gamma().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(eig.gamma().iter().all(|&g| g >= 0.0));
        prop_assert!((eig.c().transpose() * eig.c() - Matrix::identity(m, m)).norm() <= 1e-12);
    }

    #[test]
    fn perturbation_round_trip(seed in any::<u64>(), n in 1usize..=20, m in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ens = ForecastEnsemble::new(normal(&mut rng, n, m)).unwrap();
        let z = ens.perturbations();
        let zn = z.matrix().norm();
        for row in z.matrix().row_iter() {
            prop_assert!(row.sum().abs() <= 1e-13 * zn);
        }
        let back = ForecastEnsemble::from_mean_and_perturbations(ens.mean(), z.matrix()).unwrap();
        prop_assert!((back.members() - ens.members()).norm() <= 1e-13 * ens.members().norm());
        let z2 = back.perturbations();
        prop_assert!((z2.matrix() - z.matrix()).norm() <= 1e-13 * zn);
    }

    #[test]
    fn forecast_cov_symmetric_psd(seed in any::<u64>(), n in 1usize..=20, m in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pf = ForecastEnsemble::new(normal(&mut rng, n, m)).unwrap().perturbations().forecast_cov();
        prop_assert!((&pf - pf.transpose()).norm() <= 1e-14 * pf.norm());
        let eigs = SymmetricEigen::new(pf.clone()).eigenvalues;
        prop_assert!(eigs.iter().all(|&l| l >= -1e-12 * pf.trace()));
    }

    #[test]
    fn oracle_routes_agree(seed in any::<u64>(), n in 1usize..=20, m in 2usize..=12, p in 1usize..=20, kind in kind_strategy()) {
        let p = p.min(n);
        let (ens, obs) = instance(seed, n, m, p, kind);
        let z = ens.perturbations();
        let pf = z.forecast_cov();
        let direct = posterior_cov_direct(&pf, &obs).unwrap();
        prop_assert!(rel(&posterior_cov_reduced(&z, &obs).unwrap(), &direct) <= 1e-10);
        prop_assert!(rel(&posterior_cov_woodbury(&z, &obs).unwrap(), &direct) <= 1e-10);
        prop_assert!(direct.trace() <= pf.trace() * (1.0 + 1e-12));
        prop_assert!((&direct - direct.transpose()).norm() <= 1e-13 * direct.norm());
    }

    #[test]
    fn analysis_matches_kalman_posterior(seed in any::<u64>(), n in 1usize..=20, m in 2usize..=12, p in 1usize..=20, kind in kind_strategy()) {
        let p = p.min(n);
        let (ens, obs) = instance(seed, n, m, p, kind);
        let pf = ens.perturbations().forecast_cov();
        let res = analyze(&ens, &obs, OrderingMode::Correct).unwrap();
        let oracle = posterior_cov_direct(&pf, &obs).unwrap();
        let report = compare_cov(&res.pa, &oracle, 1e-10).unwrap();
        prop_assert!(report.passed, "{:?}", report);
        let mean = posterior_mean_direct(ens.mean(), &pf, &obs).unwrap();
        prop_assert!((&res.mean - &mean).norm() <= 1e-10 * mean.norm().max(1.0));
        for row in res.za.row_iter() {
            prop_assert!(row.sum().abs() <= 1e-12 * res.za.norm());
        }
    }

    #[test]
    fn truncation_is_harmless_under_ordering(seed in any::<u64>(), n in 1usize..=20, m in 2usize..=12, p in 1usize..=20, kind in kind_strategy()) {
        let p = p.min(n);
        let (ens, obs) = instance(seed, n, m, p, kind);
        let z = ens.perturbations();
        let adj = adjustment_matrix(&z, &obs, OrderingMode::Correct).unwrap();
        let mut zcd = z.matrix() * adj.eigen.c();
        for (k, mut col) in zcd.column_iter_mut().enumerate() {
            col /= (1.0 + adj.eigen.gamma()[k]).sqrt();
        }
        let g = adj.svd.g();
        if adj.svd.rank() > 0 {
            let truncated = &zcd * pinv_rect_diag(g).unwrap() * g;
            prop_assert!((&truncated - &zcd).norm() <= 1e-10 * zcd.norm());
        }
    }

    #[test]
    fn misordering_never_adds_variance(seed in any::<u64>(), perm_seed in any::<u64>(), n in 1usize..=20, m in 2usize..=12, p in 1usize..=20, kind in kind_strategy()) {
        let p = p.min(n);
        let (ens, obs) = instance(seed, n, m, p, kind);
        let good = analyze(&ens, &obs, OrderingMode::Correct).unwrap();
        let bad = analyze(&ens, &obs, OrderingMode::Misordered { seed: perm_seed }).unwrap();
        let scale = good.pa.trace().max(1e-300);
        prop_assert!(bad.pa.trace() <= good.pa.trace() + 1e-12 * scale);
        if bad.adjustment.displaces_null_column() {
            prop_assert!(good.pa.trace() - bad.pa.trace() > 1e-10 * scale);
        }
        // The mean does not depend on the ordering.
        prop_assert_eq!(good.mean, bad.mean);
    }

    #[test]
    fn covariance_invariant_under_svd_signs(seed in any::<u64>(), flips in any::<u16>(), n in 1usize..=20, m in 2usize..=12, p in 1usize..=20) {
        let p = p.min(n);
        let (ens, obs) = instance(seed, n, m, p, ObsKind::Dense);
        let z = ens.perturbations();
        let reference = analyze(&ens, &obs, OrderingMode::Correct).unwrap().pa;
        let svd = svd_full(z.matrix(), DEFAULT_RANK_TOL).unwrap();
        let r = svd.rank();
        let mut f = svd.f().clone();
        let mut u = svd.u().clone();
        for k in 0..m {
            if flips >> (k % 16) & 1 == 1 {
                if k < r {
                    f.column_mut(k).neg_mut();
                }
                u.column_mut(k).neg_mut();
            }
        }
        let s = project_observations(&z, &obs).unwrap().s;
        let row = u.columns(0, r).into_owned();
        let null = u.columns(r, m - r).into_owned();
        let eig = ordered_eig_psd(&s, &row, &null).unwrap();
        let mut zcd = z.matrix() * eig.c();
        for (k, mut col) in zcd.column_iter_mut().enumerate() {
            col /= (1.0 + eig.gamma()[k]).sqrt();
        }
        let a = zcd * pinv_rect_diag(svd.g()).unwrap() * f.transpose();
        let za = a * z.matrix();
        let pa = symmetrize(&(&za * za.transpose()));
        prop_assert!(rel(&pa, &reference) <= 1e-10 || reference.norm() == 0.0 && pa.norm() == 0.0);
    }
}

#[test]
fn rank_deficient_partially_observed_instance() {
    // n = 8, m = 5 gives r = 4; observing 2 coordinates gives rank(S) = 2 < r.
    let (ens, obs) = instance(42, 8, 5, 2, ObsKind::Selection);
    let z = ens.perturbations();
    let adj = adjustment_matrix(&z, &obs, OrderingMode::Correct).unwrap();
    assert_eq!(adj.svd.rank(), 4);
    assert_eq!(adj.eigen.effective_rank(), 2);
    let oracle = posterior_cov_direct(&z.forecast_cov(), &obs).unwrap();
    let za = adj.apply(&z);
    assert!(rel(&(&za * za.transpose()), &oracle) <= 1e-10);
}

#[test]
fn analysis_is_bit_deterministic() {
    let (ens, obs) = instance(7, 12, 9, 5, ObsKind::Dense);
    for mode in [OrderingMode::Correct, OrderingMode::Misordered { seed: 3 }] {
        let a = analyze(&ens, &obs, mode).unwrap();
        let b = analyze(&ens, &obs, mode).unwrap();
        assert_eq!(a, b);
    }
    let z = ens.perturbations();
    assert_eq!(
        svd_full(z.matrix(), DEFAULT_RANK_TOL).unwrap(),
        svd_full(z.matrix(), DEFAULT_RANK_TOL).unwrap()
    );
}

#[test]
fn centered_matrix_wrapper_accepts_perturbations() {
    let (ens, _) = instance(1, 3, 4, 1, ObsKind::Dense);
    let z = ens.perturbations();
    assert_eq!(
        &PerturbationMatrix::from_centered(z.matrix().clone()).unwrap(),
        &z
    );
}
