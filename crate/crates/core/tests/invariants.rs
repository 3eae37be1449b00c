use cinetrack::cost::{build_casorati, build_patch_layout, nuclear_norm};
use cinetrack::deform::{dense_displacement, project_zero_mean, ControlMesh};
use cinetrack::deform::{DisplacementField, TrajectoryField};
use cinetrack::imaging::CineSequence;
use cinetrack::io;
use cinetrack::strain::{green_lagrange, segment_of, MyoMask};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn mesh_strategy() -> impl Strategy<Value = ControlMesh> {
    (8usize..30, 8usize..30, 1usize..6, 3usize..8).prop_flat_map(|(nx, ny, nt, spacing)| {
        let zero = ControlMesh::zeros(nx, ny, nt, spacing as f64).unwrap();
        let n = zero.values().len();
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), n)
            .prop_map(move |v| zero.clone().with_values(v.into_iter().map(|(a, b)| [a, b]).collect()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_idempotent_and_zero_mean(mesh in mesh_strategy()) {
        let p = project_zero_mean(&mesh);
        prop_assert!(p.max_temporal_mean() <= 1e-12);
        let pp = project_zero_mean(&p);
        for (a, b) in p.values().iter().zip(pp.values()) {
            prop_assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        }
        let mean = dense_displacement(&p).temporal_mean();
        prop_assert!(mean.iter().all(|m| m[0].abs() <= 1e-9 && m[1].abs() <= 1e-9));
    }

    #[test]
    fn nuclear_norm_is_scale_equivariant_and_bounded(
        rows in 2usize..12, cols in 1usize..7, seed in prop::collection::vec(-1.0f64..1.0, 84), s in 0.1f64..5.0
    ) {
        let m = DMatrix::from_fn(rows, cols, |i, j| seed[i * 7 + j]);
        let a = nuclear_norm(&m).unwrap().value;
        let b = nuclear_norm(&(m.clone() * s)).unwrap().value;
        prop_assert!((b - s * a).abs() <= 1e-9 * (1.0 + b));
        let fro = m.norm();
        prop_assert!(a + 1e-12 >= fro);
        prop_assert!(a <= fro * (rows.min(cols) as f64).sqrt() + 1e-12);
    }

    #[test]
    fn patch_layout_covers_every_pixel(nx in 8usize..60, ny in 8usize..60, size in 2usize..24, stride in 1usize..16) {
        let size = size.min(nx).min(ny);
        let stride = stride.min(size);
        let layout = build_patch_layout(nx, ny, size, stride).unwrap();
        prop_assert!(layout.coverage().iter().all(|&c| c > 0));
        for &(x0, y0) in layout.origins() {
            prop_assert!(x0 >= 1 && y0 >= 1 && x0 + size - 1 <= nx && y0 + size - 1 <= ny);
        }
    }

    #[test]
    fn casorati_columns_are_frames(nx in 8usize..12, ny in 8usize..12, nt in 2usize..6) {
        let seq = CineSequence::from_fn(nx, ny, nt, 1.0, |x, y, t| x + 100.0 * y + 1e4 * t as f64).unwrap();
        let region: Vec<usize> = (0..nx * ny).step_by(3).collect();
        let c = build_casorati(&seq, &region).unwrap();
        prop_assert_eq!(c.shape(), (region.len(), nt));
        for (r, &k) in region.iter().enumerate() {
            for t in 0..nt {
                prop_assert_eq!(c[(r, t)], seq.data()[t * nx * ny + k]);
            }
        }
    }

    #[test]
    fn translation_has_no_strain(dx in -3.0f64..3.0, dy in -3.0f64..3.0) {
        let traj = TrajectoryField::from_field(DisplacementField::from_fn(12, 10, 3, |_, _, t| {
            if t == 0 { [0.0, 0.0] } else { [dx, dy] }
        }));
        let e = green_lagrange(&traj).unwrap();
        prop_assert!(e.data().iter().all(|v| v.iter().all(|c| c.abs() <= 1e-12)));
    }

    #[test]
    fn every_sector_index_is_in_range(x in 1.0f64..40.0, y in 1.0f64..40.0, n in prop::sample::select(vec![4usize, 6])) {
        let mask = MyoMask::from_fn(40, 40, |_, _| true).unwrap();
        prop_assert!(segment_of(&mask, n, x, y) < n);
    }

    #[test]
    fn cseq_round_trips_f32_data(vals in prop::collection::vec(-1e6f32..1e6, 8 * 8 * 2)) {
        let seq = CineSequence::new(8, 8, 2, 0.75, vals.iter().map(|&v| v as f64).collect()).unwrap();
        let bytes = io::encode_cseq(&seq).unwrap();
        let back = io::decode_cseq(&bytes, std::path::Path::new("p")).unwrap();
        prop_assert_eq!(io::encode_cseq(&back).unwrap(), bytes);
        prop_assert_eq!(back, seq);
    }
}
