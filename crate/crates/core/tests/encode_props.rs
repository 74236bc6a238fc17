use ens_core::encode::RffMatrix;
use ens_core::geometry::Vec3;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Vec3> {
    (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rff_is_lipschitz(x in point(), y in point(), seed in 0u64..1000, sigma in 0.1f64..6.0) {
        let rff = RffMatrix::new(64, sigma, seed).unwrap();
        let e = rff.encode::<f64>(&[x, y]);
        let diff: f64 = e.row(0).iter().zip(e.row(1)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let bound = rff.spectral_norm() * (x - y).norm() * 2f64.sqrt();
        prop_assert!(diff <= bound + 1e-12, "{} > {}", diff, bound);
    }

    #[test]
    fn rff_is_deterministic_and_bounded(x in point(), seed in 0u64..1000) {
        let a = RffMatrix::new(32, 0.5, seed).unwrap().encode::<f64>(&[x]);
        let b = RffMatrix::new(32, 0.5, seed).unwrap().encode::<f64>(&[x]);
        prop_assert_eq!(a.data(), b.data());
        let c = RffMatrix::new(32, 0.5, seed + 1).unwrap().encode::<f64>(&[x]);
        prop_assert!(c.data().iter().all(|v| v.abs() <= 1.0));
    }
}
