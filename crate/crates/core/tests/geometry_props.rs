mod support;

use icecontour::geometry::{GridSpec, Pose, SliceGeometry};
use nalgebra::{Matrix4, Point3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pose_from_seed(seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = support::random_rotation(&mut rng);
    let t = support::random_vector(&mut rng, 100.0);
    Pose::from_parts(r, t).unwrap()
}

fn max_abs(m: &Matrix4<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

proptest! {
    #[test]
    fn compose_is_associative(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (p, q, r) = (pose_from_seed(a), pose_from_seed(b), pose_from_seed(c));
        let left = p.compose(&q).compose(&r);
        let right = p.compose(&q.compose(&r));
        prop_assert!(max_abs(&(left.matrix() - right.matrix())) < 1e-12);
    }

    #[test]
    fn double_inverse_is_identity(a in any::<u64>()) {
        let p = pose_from_seed(a);
        prop_assert!(max_abs(&(p.inverse().inverse().matrix() - p.matrix())) < 1e-12);
        let id = p.compose(&p.inverse());
        prop_assert!(max_abs(&(id.matrix() - Matrix4::identity())) < 1e-12);
    }

    #[test]
    fn slice_world_round_trip(seed in any::<u64>(), u in -50.0f64..50.0, v in -50.0f64..50.0,
                              su in 0.1f64..3.0, sv in 0.1f64..3.0) {
        let g = SliceGeometry::new(4, 3, su, sv, pose_from_seed(seed)).unwrap();
        let w = g.slice_to_world(u, v);
        let (bu, bv, d) = g.world_to_slice(&w);
        prop_assert!((bu - u).abs() < 1e-9 && (bv - v).abs() < 1e-9 && d.abs() < 1e-9);
    }

    #[test]
    fn row_major_round_trip(seed in any::<u64>()) {
        let p = pose_from_seed(seed);
        let q = Pose::from_row_major(&p.to_row_major()).unwrap();
        prop_assert!(max_abs(&(q.matrix() - p.matrix())) < 1e-12);
    }

    #[test]
    fn grid_index_bijection(nx in 1usize..9, ny in 1usize..9, nz in 1usize..9) {
        let g = GridSpec::new([nx, ny, nz], [1.0, 2.0, 0.5], [3.0, -1.0, 0.0]).unwrap();
        for n in 0..g.len() {
            let [i, j, k] = g.coords(n);
            prop_assert_eq!(g.index(i, j, k), n);
            let c = g.world_to_continuous(&g.voxel_center(i, j, k));
            prop_assert_eq!(g.nearest_voxel(&c), Some([i, j, k]));
        }
    }
}

#[test]
fn non_rigid_matrices_rejected() {
    let mut m = Matrix4::identity();
    m[(0, 0)] = 2.0;
    assert!(Pose::from_matrix(m).is_err());
    let mut shear = Matrix4::identity();
    shear[(0, 1)] = 0.3;
    assert!(Pose::from_matrix(shear).is_err());
    let mut reflect = Matrix4::identity();
    reflect[(2, 2)] = -1.0;
    assert!(Pose::from_matrix(reflect).is_err());
    let mut bottom = Matrix4::identity();
    bottom[(3, 0)] = 1.0;
    assert!(Pose::from_matrix(bottom).is_err());
}

#[test]
fn pixel_centres_follow_spacing() {
    let pose = Pose::from_parts(nalgebra::Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
    let g = SliceGeometry::new(3, 2, 0.5, 2.0, pose).unwrap();
    assert_eq!(g.slice_to_world(2.0, 1.0), Point3::new(2.0, 4.0, 3.0));
}
