use icecontour::geometry::{GridSpec, Pose, PosedSlice, SliceGeometry};
use icecontour::io::{
    intensity_from_level, intensity_to_level, load_labels, load_manifest, load_off, load_scalar, load_slices,
    load_sparse, raw_path, read_label_pgm, read_validity_pgm, save_labels, save_manifest, save_off, save_scalar,
    save_sparse, write_intensity_pgm, write_label_pgm, write_validity_pgm, RunConfig, SliceEntry, SweepManifest,
};
use icecontour::mesh::Mesh;
use icecontour::volume::{LabelVolume, ScalarVolume, SparseVolume};
use nalgebra::Point3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(rng: &mut ChaCha8Rng) -> GridSpec {
    let dims = std::array::from_fn(|_| rng.random_range(1..9));
    let spacing = std::array::from_fn(|_| rng.random_range(0.1..3.0));
    let origin = std::array::from_fn(|_| rng.random_range(-50.0..50.0));
    GridSpec::new(dims, spacing, origin).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn volumes_round_trip_bit_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();
        let g = grid(&mut rng);

        let scalar = ScalarVolume::new(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        save_scalar(&dir.path().join("ct.json"), &scalar).unwrap();
        prop_assert_eq!(load_scalar(&dir.path().join("ct.json")).unwrap(), scalar);

        let mut sparse = SparseVolume::empty(g);
        for n in 0..g.len() {
            if rng.random_bool(0.4) {
                sparse.occupancy[n] = rng.random_range(0.0..4.0);
                sparse.values[n] = rng.random_range(-1.0..1.0);
            }
        }
        sparse.slices_outside = rng.random_range(0..5);
        save_sparse(&dir.path().join("sparse.json"), &sparse).unwrap();
        prop_assert_eq!(load_sparse(&dir.path().join("sparse.json")).unwrap(), sparse);

        let labels = LabelVolume::new(g, (0..g.len()).map(|_| rng.random_range(0..7)).collect()).unwrap();
        save_labels(&dir.path().join("labels.json"), &labels).unwrap();
        prop_assert_eq!(load_labels(&dir.path().join("labels.json")).unwrap(), labels);
    }

    #[test]
    fn off_round_trip_is_exact(seed in any::<u64>(), class_id in 1u8..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Point3::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
        let m = Mesh::ellipsoid(c, [rng.random_range(1.0..5.0), 2.0 / 3.0, std::f64::consts::PI], 2, class_id).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.off");
        save_off(&path, &m).unwrap();
        prop_assert_eq!(load_off(&path).unwrap(), m);
    }

    #[test]
    fn intensity_quantization_is_within_half_a_level(x in -1.0f64..=1.0, maxval in 1u16..=65535) {
        let back = intensity_from_level(intensity_to_level(x, maxval), maxval);
        prop_assert!((back - x).abs() <= 1.0 / maxval as f64 + 1e-12);
        prop_assert_eq!(intensity_to_level(back, maxval), intensity_to_level(x, maxval));
    }
}

#[test]
fn float32_payload_accepted_on_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.json");
    let g = GridSpec::new([2, 2, 1], [1.0; 3], [0.0; 3]).unwrap();
    let vol = ScalarVolume::new(g, vec![0.5, -0.25, 1.0, 0.0]).unwrap();
    save_scalar(&path, &vol).unwrap();
    let mut header: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    header["dtype"] = "float32".into();
    std::fs::write(&path, serde_json::to_string(&header).unwrap()).unwrap();
    let bytes: Vec<u8> = vol.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    std::fs::write(raw_path(&path), bytes).unwrap();
    assert_eq!(load_scalar(&path).unwrap(), vol);
}

#[test]
fn truncated_payload_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.json");
    let g = GridSpec::new([3, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
    save_labels(&path, &LabelVolume::background(g)).unwrap();
    std::fs::write(raw_path(&path), [0u8; 5]).unwrap();
    assert!(load_labels(&path).is_err());
}

#[test]
fn pgm_masks_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (5, 3);
    let classes: Vec<u8> = (0..w * h).map(|n| (n % 7) as u8).collect();
    let valid: Vec<bool> = (0..w * h).map(|n| n % 3 != 0).collect();
    write_label_pgm(&dir.path().join("l.pgm"), w, h, &classes).unwrap();
    write_validity_pgm(&dir.path().join("v.pgm"), w, h, &valid).unwrap();
    assert_eq!(read_label_pgm(&dir.path().join("l.pgm")).unwrap(), (w, h, classes));
    assert_eq!(read_validity_pgm(&dir.path().join("v.pgm")).unwrap(), (w, h, valid));
}

#[test]
fn manifest_round_trip_restores_slices() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (4, 3);
    let pose = Pose::from_row_major(&[0.0, -1.0, 0.0, 3.0, 1.0, 0.0, 0.0, -2.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 1.0])
        .unwrap();
    let pixels: Vec<f64> = (0..w * h).map(|n| intensity_from_level(n as u16 * 20, 255)).collect();
    let valid = vec![true, true, false, true, true, true, true, false, true, true, true, true];
    let labels: Vec<u8> = (0..w * h).map(|n| if valid[n] { (n % 3) as u8 } else { 0 }).collect();
    write_intensity_pgm(&dir.path().join("img.pgm"), w, h, &pixels, 255).unwrap();
    write_validity_pgm(&dir.path().join("val.pgm"), w, h, &valid).unwrap();
    write_label_pgm(&dir.path().join("lab.pgm"), w, h, &labels).unwrap();
    let grid = GridSpec::new([8, 8, 8], [0.5; 3], [-2.0; 3]).unwrap();
    let entry = SliceEntry {
        image: "img.pgm".into(),
        pose: pose.to_row_major(),
        spacing: [0.7, 1.3],
        validity: Some("val.pgm".into()),
        labels: Some("lab.pgm".into()),
    };
    let manifest = SweepManifest::new("case-1", Some(grid), vec![entry]);
    let path = dir.path().join("manifest.json");
    save_manifest(&path, &manifest).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back, manifest);

    let slices = load_slices(&back, dir.path()).unwrap();
    let geom = SliceGeometry::new(w, h, 0.7, 1.3, pose).unwrap();
    assert_eq!(slices, vec![PosedSlice::new(geom, pixels, valid, Some(labels)).unwrap()]);
}

#[test]
fn empty_config_takes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, "{}").unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.phantom_grid.grid().unwrap(), GridSpec::centered_cube(64, 1.0).unwrap());
    std::fs::write(&path, r#"{"grid": {"spacing": -1.0}}"#).unwrap();
    assert!(RunConfig::load(&path).is_err());
    std::fs::write(&path, r#"{"unknown_key": 1}"#).unwrap();
    assert!(RunConfig::load(&path).is_err());
}
