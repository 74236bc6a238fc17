use ens_core::geometry::{icosphere, Vec3};
use ens_core::spectral::{
    eigenbasis_dense, eigenbasis_sparse, interpolate_to_points, LaplacianPair, PointLocator, SparseEigenOptions,
    SpectralBasis,
};
use proptest::prelude::*;
use std::sync::OnceLock;

/// Index range of the degree-`l` spherical-harmonic multiplet.
fn multiplet(l: usize) -> std::ops::Range<usize> {
    l * l..(l + 1) * (l + 1)
}

fn level4() -> &'static (LaplacianPair, SpectralBasis) {
    static CELL: OnceLock<(LaplacianPair, SpectralBasis)> = OnceLock::new();
    CELL.get_or_init(|| {
        let m = icosphere(4).unwrap();
        let lap = LaplacianPair::cotan(&m).unwrap();
        let b = eigenbasis_dense(&lap, m.id(), 36).unwrap();
        (lap, b)
    })
}

#[test]
fn level4_spectrum_matches_spherical_harmonics() {
    let (lap, b) = level4();
    for l in 1..=5usize {
        let exact = (l * (l + 1)) as f64;
        let vals = &b.eigenvalues[multiplet(l)];
        assert_eq!(vals.len(), 2 * l + 1);
        for v in vals {
            assert!((v - exact).abs() <= 0.02 * exact, "l={l}: {v} vs {exact}");
        }
        let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(a, c), &v| (a.min(v), c.max(v)));
        assert!((hi - lo) / exact <= 0.005, "l={l}: spread {}", (hi - lo) / exact);
    }
    // the next multiplet starts clearly above l = 5
    assert!(b.eigenvalues[35] < 0.9 * 42.0);
    let norm = lap.stiffness_norm();
    for i in 0..b.dim() {
        assert!(b.residual(lap, i) <= 1e-6 * norm);
        for j in 0..=i {
            let t = if i == j { 1.0 } else { 0.0 };
            assert!((b.mass_inner(lap, i, j) - t).abs() <= 1e-8);
        }
    }
    assert!(b.eigenvalues[0] >= 0.0 && b.eigenvalues[0] <= 1e-8);
    assert!(b.eigenvalues.iter().all(|&v| v >= -1e-10));
}

#[test]
fn spectrum_converges_with_refinement() {
    // mean relative error per multiplet, levels 3..5; level 5 uses the sparse solver
    let mut errors: Vec<Vec<f64>> = Vec::new();
    for level in 3..=5u32 {
        let m = icosphere(level).unwrap();
        let lap = LaplacianPair::cotan(&m).unwrap();
        let b = if level < 5 {
            eigenbasis_dense(&lap, m.id(), 36).unwrap()
        } else {
            eigenbasis_sparse(&lap, m.id(), 36, SparseEigenOptions { block: 64, ..Default::default() }).unwrap()
        };
        errors.push(
            (1..=5usize)
                .map(|l| {
                    let exact = (l * (l + 1)) as f64;
                    let vals = &b.eigenvalues[multiplet(l)];
                    vals.iter().map(|v| (v - exact).abs() / exact).sum::<f64>() / vals.len() as f64
                })
                .collect(),
        );
    }
    for l in 0..5 {
        assert!(
            errors[0][l] > errors[1][l] && errors[1][l] > errors[2][l],
            "l={}: {:?}",
            l + 1,
            errors.iter().map(|e| e[l]).collect::<Vec<_>>()
        );
    }
}

#[test]
fn even_harmonics_are_antipodally_symmetric() {
    let (_, b) = level4();
    let m = icosphere(4).unwrap();
    let loc = PointLocator::new(&m).unwrap();
    let pts: Vec<Vec3> = m.vertices.iter().step_by(37).copied().collect();
    let anti: Vec<Vec3> = pts.iter().map(|p| -p).collect();
    let a = interpolate_to_points(b, &loc, &pts).unwrap();
    let c = interpolate_to_points(b, &loc, &anti).unwrap();
    // l = 2 and l = 4 are even; |phi(x)| = |phi(-x)| up to discretization error
    for l in [2usize, 4] {
        for k in multiplet(l) {
            let scale = b.column(k).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for r in 0..pts.len() {
                let (x, y) = (a[r * 36 + k].abs(), c[r * 36 + k].abs());
                assert!((x - y).abs() <= 0.05 * scale, "l={l} k={k}: {x} vs {y}");
            }
        }
    }
}

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_is_linear(p in unit(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, i in 0usize..36, j in 0usize..36) {
        let (_, b) = level4();
        let m = icosphere(4).unwrap();
        let loc = PointLocator::new(&m).unwrap();
        let row = interpolate_to_points(b, &loc, &[p]).unwrap();
        let mut mixed = b.clone();
        for v in 0..b.vertex_count {
            let r = b.row(v);
            mixed.functions[v * 36] = alpha * r[i] + beta * r[j];
        }
        let mrow = interpolate_to_points(&mixed, &loc, &[p]).unwrap();
        prop_assert!((mrow[0] - (alpha * row[i] + beta * row[j])).abs() <= 1e-12);
    }
}
