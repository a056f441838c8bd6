//! Linear-algebra kernels against brute-force and third-party oracles.

use hris_core::numerics::{self, CMat, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// `B Bᴴ + I`, Hermitian positive definite.
fn random_hpd(rng: &mut impl Rng, n: usize) -> CMat {
    let b = random_mat(rng, n, n);
    b.matmul(&b.adjoint()).unwrap().add(&CMat::identity(n)).unwrap()
}

/// Laplace expansion along the first row.
fn cofactor_det(m: &[Vec<C64>]) -> C64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    let mut det = C64::new(0.0, 0.0);
    for j in 0..n {
        let minor: Vec<Vec<C64>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect())
            .collect();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        det += m[0][j] * cofactor_det(&minor) * sign;
    }
    det
}

fn to_rows(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn to_nalgebra(m: &CMat) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)])
}

fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.sub(b).unwrap().max_abs()
}

#[test]
fn logdet_matches_cofactor_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6 {
        for _ in 0..10 {
            let a = random_hpd(&mut rng, n);
            let det = cofactor_det(&to_rows(&a));
            assert!(det.im.abs() < 1e-9 * det.re.abs());
            let expected = det.re.ln();
            let got = numerics::hermitian_logdet(&a).unwrap();
            assert!((got - expected).abs() / expected.abs().max(1.0) < 1e-10, "n={n}: {got} vs {expected}");
            let rel = (got.exp() - det.re).abs() / det.re;
            assert!(rel < 1e-9);
        }
    }
}

#[test]
fn inverse_residual_and_involution() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..=6 {
        let a = random_hpd(&mut rng, n);
        let inv = numerics::hermitian_inverse(&a).unwrap();
        assert!(max_abs_diff(&inv, &inv.adjoint()) < 1e-9);
        let residual = max_abs_diff(&a.matmul(&inv).unwrap(), &CMat::identity(n));
        assert!(residual < 1e-10, "n={n}: residual {residual:e}");
        let back = numerics::hermitian_inverse(&inv).unwrap();
        assert!(max_abs_diff(&back, &a) < 1e-8);
    }
}

#[test]
fn singular_values_match_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let m = random_mat(&mut rng, 4, 3);
        let svd = numerics::svd(&m).unwrap();
        let gram = m.adjoint().matmul(&m).unwrap();
        let mut eig: Vec<f64> = to_nalgebra(&gram).symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(svd.s.len(), 3);
        for (s, e) in svd.s.iter().zip(&eig) {
            assert!((s * s - e).abs() / e.abs() < 1e-8, "{} vs {e}", s * s);
        }
    }
}

#[test]
fn product_adjoint_reverses_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let a = random_mat(&mut rng, 3, 3);
    let b = random_mat(&mut rng, 3, 3);
    let lhs = a.matmul(&b).unwrap().adjoint();
    let rhs = b.adjoint().matmul(&a.adjoint()).unwrap();
    assert!(max_abs_diff(&lhs, &rhs) < 1e-14);
}

#[test]
fn identity_plus_gram_logdet_matches_direct_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for (r, c) in [(2, 2), (2, 4), (4, 2), (3, 1)] {
        let e = random_mat(&mut rng, r, c);
        let direct = CMat::identity(r).add(&e.matmul(&e.adjoint()).unwrap()).unwrap();
        let expected = numerics::hermitian_logdet(&direct).unwrap();
        let got = numerics::logdet_identity_plus_gram(&e).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }
}

#[test]
fn operations_are_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let a = random_hpd(&mut rng, 5);
    let m = random_mat(&mut rng, 5, 3);
    assert_eq!(numerics::hermitian_logdet(&a).unwrap().to_bits(), numerics::hermitian_logdet(&a).unwrap().to_bits());
    assert_eq!(numerics::hermitian_inverse(&a).unwrap(), numerics::hermitian_inverse(&a).unwrap());
    assert_eq!(numerics::svd(&m).unwrap().s, numerics::svd(&m).unwrap().s);
}

fn finite_matrix(max_dim: usize) -> impl Strategy<Value = CMat> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), r * c)
            .prop_map(move |v| CMat::from_fn(r, c, |i, j| C64::new(v[i * c + j].0, v[i * c + j].1)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_unitary_factors(m in finite_matrix(6)) {
        let svd = numerics::svd(&m).unwrap();
        let norm = m.frobenius_norm();
        if norm > 0.0 {
            let err = svd.reconstruct().sub(&m).unwrap().frobenius_norm() / norm;
            prop_assert!(err < 1e-8, "reconstruction {err:e}");
        }
        let k = svd.s.len();
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.s.iter().all(|s| *s >= 0.0));
        let uu = svd.u.adjoint().matmul(&svd.u).unwrap();
        let vv = svd.v.adjoint().matmul(&svd.v).unwrap();
        prop_assert!(max_abs_diff(&uu, &CMat::identity(k)) < 1e-8);
        prop_assert!(max_abs_diff(&vv, &CMat::identity(k)) < 1e-8);
    }

    #[test]
    fn logdet_of_hpd_matches_cofactor(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hpd(&mut rng, n);
        let det = cofactor_det(&to_rows(&a)).re;
        let got = numerics::hermitian_logdet(&a).unwrap().exp();
        prop_assert!((got - det).abs() / det < 1e-9);
    }

    #[test]
    fn inverse_is_an_involution(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hpd(&mut rng, n);
        let back = numerics::hermitian_inverse(&numerics::hermitian_inverse(&a).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&back, &a) < 1e-8 * a.max_abs().max(1.0));
    }

    #[test]
    fn public_operations_keep_entries_finite(a in finite_matrix(4), s in -5.0f64..5.0) {
        prop_assert!(a.adjoint().is_finite());
        prop_assert!(a.scale_real(s).is_finite());
        prop_assert!(a.matmul(&a.adjoint()).unwrap().is_finite());
        prop_assert!(a.add(&a).unwrap().is_finite());
        let v = a.vectorize_reim();
        prop_assert_eq!(v.len(), 2 * a.rows() * a.cols());
        prop_assert_eq!(CMat::from_reim(a.rows(), a.cols(), &v).unwrap(), a);
    }
}
