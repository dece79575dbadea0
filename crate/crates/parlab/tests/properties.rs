//! Property-based invariants of the metric, norm, and coefficient layers.

use proptest::prelude::*;

use parlab::coefficients::{bmo_norm, presets, theta_of};
use parlab::lattice::{
    field_norms, parabolic_distance, Grid, Region, SpaceTimeField, SpaceTimePoint,
};

fn grid_1d() -> Grid {
    Grid::new(1, 1, 1.0, 32, 1.0 / 512.0, 0.0, 0.0625).unwrap()
}

fn grid_2d() -> Grid {
    Grid::new(2, 1, 1.0, 16, 1.0 / 256.0, 0.0, 0.03125).unwrap()
}

proptest! {
    #[test]
    fn parabolic_distance_is_a_metric(
        t in -1.0f64..1.0, x in 0.0f64..1.0,
        s in -1.0f64..1.0, y in 0.0f64..1.0,
        r in -1.0f64..1.0, z in 0.0f64..1.0,
    ) {
        let g = grid_1d();
        let a = SpaceTimePoint::new(t, [x, 0.0]);
        let b = SpaceTimePoint::new(s, [y, 0.0]);
        let c = SpaceTimePoint::new(r, [z, 0.0]);
        let ab = parabolic_distance(&g, &a, &b);
        let ba = parabolic_distance(&g, &b, &a);
        prop_assert!((ab - ba).abs() <= 1e-15 * ab.max(1.0));
        prop_assert!(ab >= 0.0);
        let ac = parabolic_distance(&g, &a, &c);
        let cb = parabolic_distance(&g, &c, &b);
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn parabolic_distance_scales_diffusively(
        t in 0.01f64..1.0, x in 0.0f64..0.2, lam in 0.1f64..1.0,
    ) {
        // stay well inside the torus so the wrap never engages
        let g = grid_1d();
        let o = SpaceTimePoint::new(0.0, [0.0, 0.0]);
        let p = SpaceTimePoint::new(t, [x, 0.0]);
        let q = SpaceTimePoint::new(lam * lam * t, [lam * x, 0.0]);
        let d = parabolic_distance(&g, &o, &p);
        let dl = parabolic_distance(&g, &o, &q);
        prop_assert!((dl - lam * d).abs() <= 1e-12 * d.max(1.0));
    }

    #[test]
    fn bmo_norm_shift_invariant_and_homogeneous(
        amp in 0.1f64..5.0, shift in -10.0f64..10.0, scale in 0.1f64..4.0,
    ) {
        let g = grid_2d();
        let phi: Vec<f64> = (0..g.num_nodes())
            .map(|node| {
                let x = g.node_coords(node);
                amp * (std::f64::consts::TAU * x[0]).sin()
                    * (std::f64::consts::TAU * x[1]).cos()
            })
            .collect();
        let base = bmo_norm(&g, &phi).unwrap();
        let shifted: Vec<f64> = phi.iter().map(|v| v + shift).collect();
        prop_assert!((bmo_norm(&g, &shifted).unwrap() - base).abs() <= 1e-10 * base.max(1.0));
        let scaled: Vec<f64> = phi.iter().map(|v| v * scale).collect();
        prop_assert!(
            (bmo_norm(&g, &scaled).unwrap() - scale * base).abs() <= 1e-10 * base.max(1.0)
        );
    }

    #[test]
    fn theta_is_homogeneous_in_the_stream_amplitude(amp in 0.1f64..8.0) {
        let g = grid_2d();
        let unit = presets::cellular_stream(&g, 1.0).unwrap();
        let scaled = presets::cellular_stream(&g, amp).unwrap();
        let t1 = theta_of(&g, &unit).unwrap();
        let ta = theta_of(&g, &scaled).unwrap();
        prop_assert!((ta - amp * t1).abs() <= 1e-9 * (amp * t1).max(1.0));
    }

    #[test]
    fn norms_are_absolutely_homogeneous(scale in -4.0f64..4.0, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let g = grid_1d();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut u = SpaceTimeField::zeros(&g);
        for level in 0..g.num_levels() {
            for v in u.level_mut(level) {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let base = field_norms(&g, &u, Region::Whole).unwrap();
        for level in 0..g.num_levels() {
            for v in u.level_mut(level) {
                *v *= scale;
            }
        }
        let scaled = field_norms(&g, &u, Region::Whole).unwrap();
        let s = scale.abs();
        prop_assert!((scaled.l2 - s * base.l2).abs() <= 1e-10 * base.l2.max(1.0));
        prop_assert!((scaled.linf - s * base.linf).abs() <= 1e-10 * base.linf.max(1.0));
        prop_assert!((scaled.v2 - s * base.v2).abs() <= 1e-9 * base.v2.max(1.0));
    }
}
