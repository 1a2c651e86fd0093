use icecontour::baselines::{complete_volume, segment_sparse};
use icecontour::geometry::GridSpec;
use icecontour::volume::{LabelVolume, SparseVolume};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random partially observed volume with seed labels on observed voxels.
fn observed(seed: u64, dims: [usize; 3], spacing: [f64; 3]) -> (SparseVolume, LabelVolume) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = GridSpec::new(dims, spacing, [0.0; 3]).unwrap();
    let mut sv = SparseVolume::empty(grid);
    let mut lab = LabelVolume::background(grid);
    let p = rng.random_range(0.02..0.3);
    for n in 0..grid.len() {
        if rng.random_bool(p) {
            sv.occupancy[n] = rng.random_range(0.1..2.0);
            sv.values[n] = rng.random_range(-1.0..1.0);
            lab.classes[n] = rng.random_range(0..7);
        }
    }
    if sv.occupied_voxels() == 0 {
        sv.occupancy[0] = 1.0;
        sv.values[0] = 0.5;
        lab.classes[0] = 1;
    }
    (sv, lab)
}

/// Nearest observed voxel by exhaustive search; ties to the lowest class.
fn brute_segment(sv: &SparseVolume, seeds: &LabelVolume, max_dist: f64) -> Vec<u8> {
    let g = sv.grid;
    let sites: Vec<usize> = (0..g.len()).filter(|&n| sv.occupancy[n] > 0.0).collect();
    (0..g.len())
        .map(|n| {
            let a = g.coords(n);
            let mut best = (f64::INFINITY, 0u8);
            for &s in &sites {
                let b = g.coords(s);
                let d2: f64 = (0..3).map(|ax| ((a[ax] as f64 - b[ax] as f64) * g.spacing[ax]).powi(2)).sum();
                let c = seeds.classes[s];
                if d2 < best.0 || (d2 == best.0 && c < best.1) {
                    best = (d2, c);
                }
            }
            if best.0 <= max_dist * max_dist {
                best.1
            } else {
                0
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn segmentation_matches_exhaustive_search(seed in any::<u64>(), sy in 1u8..3, max_dist in 0.0f64..6.0) {
        let (sv, seeds) = observed(seed, [7, 6, 5], [1.0, sy as f64, 1.0]);
        let seg = segment_sparse(&sv, &seeds, max_dist).unwrap();
        prop_assert_eq!(seg.classes, brute_segment(&sv, &seeds, max_dist));
    }

    #[test]
    fn segmentation_is_idempotent_on_observed(seed in any::<u64>()) {
        let (sv, seeds) = observed(seed, [8, 8, 8], [1.0, 1.5, 0.8]);
        let seg = segment_sparse(&sv, &seeds, 5.0).unwrap();
        let mut restricted = LabelVolume::background(sv.grid);
        for n in 0..sv.grid.len() {
            if sv.occupancy[n] > 0.0 {
                restricted.classes[n] = seg.classes[n];
            }
        }
        prop_assert_eq!(&restricted.classes, &seeds.classes);
        prop_assert_eq!(segment_sparse(&sv, &restricted, 5.0).unwrap(), seg);
    }

    #[test]
    fn completion_is_bounded_by_observations(seed in any::<u64>(), sigma in 0.5f64..3.0) {
        let (sv, _) = observed(seed, [9, 7, 8], [1.0, 1.0, 1.0]);
        let (lo, hi) = sv
            .values
            .iter()
            .zip(&sv.occupancy)
            .filter(|(_, o)| **o > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (v, _)| (a.min(*v), b.max(*v)));
        let out = complete_volume(&sv, sigma, 3).unwrap();
        for (n, &x) in out.data.iter().enumerate() {
            prop_assert!(x >= lo - 1e-12 && x <= hi + 1e-12, "{x} outside [{lo}, {hi}]");
            if sv.occupancy[n] >= 1.0 {
                prop_assert_eq!(x, sv.values[n]);
            }
        }
    }
}

#[test]
#[ignore = "zeroth-order normalized convolution cannot extrapolate a full-range ramp: measured RMSE 0.10 to 0.18"]
fn ramp_from_three_planes() {
    let g = GridSpec::new([32; 3], [1.0; 3], [0.0; 3]).unwrap();
    let ramp = |n: usize| 2.0 * g.coords(n)[0] as f64 / 31.0 - 1.0;
    let mut sv = SparseVolume::empty(g);
    for n in 0..g.len() {
        if g.coords(n).contains(&16) {
            sv.occupancy[n] = 1.0;
            sv.values[n] = ramp(n);
        }
    }
    let out = complete_volume(&sv, 2.0, 10).unwrap();
    let mse = (0..g.len()).map(|n| (out.data[n] - ramp(n)).powi(2)).sum::<f64>() / g.len() as f64;
    assert!(mse.sqrt() < 0.05, "ramp RMSE {}", mse.sqrt());
}

#[test]
fn unlabelled_inputs_rejected() {
    let g = GridSpec::new([3; 3], [1.0; 3], [0.0; 3]).unwrap();
    let sv = SparseVolume::empty(g);
    assert!(complete_volume(&sv, 1.0, 1).is_err());
    assert!(segment_sparse(&sv, &LabelVolume::background(g), 1.0).is_err());
}
