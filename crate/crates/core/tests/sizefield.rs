use proptest::prelude::*;
use svoxtk::sizefield::{compression_ratio, count_sum, density_field, estimate_count, solve_k, SizeParams};
use svoxtk::volume::{SaliencyVolume, Voxel, VoxelGrid};

fn ramp_volume(r: u32) -> SaliencyVolume<f64> {
    let grid = VoxelGrid::full(r).unwrap();
    let vals = grid.voxels().iter().map(|v| v.x as f64 / (r - 1) as f64).collect();
    SaliencyVolume::new(grid, vals).unwrap()
}

/// Size function written out independently of the library.
fn size(x: f64, k: f64, t: f64) -> f64 {
    if x < t {
        k
    } else {
        (x - t) / (1.0 - t) * (1.0 - k) + k
    }
}

#[test]
fn solve_k_agrees_with_dense_scan() {
    let vol = ramp_volume(16);
    let t = 0.1;
    let target = 0.2;
    let k = solve_k(&vol, t, target, 16.0).unwrap();
    let c_of = |k: f64| vol.saliency().iter().map(|&x| size(x, k, t).powi(-3)).sum::<f64>() / vol.len() as f64;
    let mut best = (f64::INFINITY, 0.0);
    let mut kk = 1.0;
    while kk <= 16.0 {
        let err = (c_of(kk) - target).abs();
        if err < best.0 {
            best = (err, kk);
        }
        kk += 1e-4;
    }
    assert!((k - best.1).abs() <= 1e-4, "{k} vs {}", best.1);
    let c = compression_ratio(&vol, &SizeParams::new(k, t).unwrap()).unwrap();
    assert!((c - target).abs() <= 1e-6);
}

#[test]
fn unreachable_target_names_range() {
    let vol = ramp_volume(8);
    let err = solve_k(&vol, 0.1, 1e-6, 16.0).unwrap_err();
    assert!(err.to_string().contains("achievable range"), "{err}");
    assert!(solve_k(&vol, 0.1, 1.5, 16.0).is_err());
}

fn arb_volume() -> impl Strategy<Value = SaliencyVolume<f64>> {
    prop::collection::vec(((0u16..12, 0u16..12, 0u16..12), 0.0f64..=1.0), 1..150).prop_map(|v| {
        let pairs = v.into_iter().map(|((x, y, z), s)| (Voxel::new(x, y, z), s)).collect();
        SaliencyVolume::from_pairs(12, pairs).unwrap()
    })
}

proptest! {
    #[test]
    fn density_sums_to_one(vol in arb_volume(), k in 1.0f64..10.0, t in 0.05f64..0.95) {
        let p = SizeParams::new(k, t).unwrap();
        let d = density_field(&vol, &p).unwrap();
        let total: f64 = d.density().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(d.density().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn count_matches_direct_sum(vol in arb_volume(), k in 1.0f64..10.0, t in 0.05f64..0.95) {
        let p = SizeParams::new(k, t).unwrap();
        let direct: f64 = vol.saliency().iter().map(|&x| size(x, k, t).powi(-3)).sum();
        prop_assert!((count_sum(&vol, &p).unwrap() - direct).abs() <= 1e-9 * direct.max(1.0));
        let n = estimate_count(&vol, &p).unwrap();
        prop_assert!(n >= 1 && n <= vol.len());
        prop_assert!((n as f64 - direct).abs() <= 0.5 + 1e-9 || n == 1);
    }

    #[test]
    fn ratio_monotone_in_k_and_t(vol in arb_volume(), k in 1.0f64..9.0, dk in 0.0f64..1.0, t in 0.05f64..0.8, dt in 0.0f64..0.15) {
        let c = |k: f64, t: f64| compression_ratio(&vol, &SizeParams::new(k, t).unwrap()).unwrap();
        prop_assert!(c(k + dk, t) <= c(k, t) + 1e-15);
        prop_assert!(c(k, t + dt) <= c(k, t) + 1e-15);
        prop_assert_eq!(c(1.0, t), 1.0);
    }
}
