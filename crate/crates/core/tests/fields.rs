use cinetrack::deform::{
    compose_pairwise_chain, compose_to_first_frame, dense_displacement, evaluate_displacement, invert_displacement,
    prolong_mesh, ControlMesh, DisplacementField,
};
use cinetrack::imaging::{warp_sequence, CineSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Centred cubic B-spline kernel.
fn kernel(r: f64) -> f64 {
    let a = r.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + a * a * a / 2.0
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}

/// Full tensor-product sum over every control point; site `k` sits at
/// pixel coordinate `1 + (k - 1) * spacing`.
fn oracle(mesh: &ControlMesh, x: f64, y: f64, t: usize) -> [f64; 2] {
    let site = |k: usize| 1.0 + (k as f64 - 1.0) * mesh.spacing();
    let mut out = [0.0; 2];
    for j in 0..mesh.nj() {
        let wy = kernel((y - site(j)) / mesh.spacing());
        for i in 0..mesh.ni() {
            let w = wy * kernel((x - site(i)) / mesh.spacing());
            let v = mesh.at(i, j, t);
            out[0] += w * v[0];
            out[1] += w * v[1];
        }
    }
    out
}

fn random_mesh(nx: usize, ny: usize, nt: usize, spacing: f64, amp: f64, rng: &mut ChaCha8Rng) -> ControlMesh {
    let zero = ControlMesh::zeros(nx, ny, nt, spacing).unwrap();
    let values = (0..zero.values().len()).map(|_| [rng.random_range(-amp..amp), rng.random_range(-amp..amp)]).collect();
    zero.with_values(values).unwrap()
}

/// Clamp-to-edge bilinear lookup on a row-major frame, 1-based coordinates.
fn naive_bilinear(nx: usize, ny: usize, f: &[f64], x: f64, y: f64) -> f64 {
    let x = x.clamp(1.0, nx as f64) - 1.0;
    let y = y.clamp(1.0, ny as f64) - 1.0;
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(nx - 1), (y0 + 1).min(ny - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let at = |i: usize, j: usize| f[j * nx + i];
    at(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + at(x1, y0) * fx * (1.0 - fy)
        + at(x0, y1) * (1.0 - fx) * fy
        + at(x1, y1) * fx * fy
}

fn naive_vector(nx: usize, ny: usize, f: &[[f64; 2]], x: f64, y: f64) -> [f64; 2] {
    let cx: Vec<f64> = f.iter().map(|v| v[0]).collect();
    let cy: Vec<f64> = f.iter().map(|v| v[1]).collect();
    [naive_bilinear(nx, ny, &cx, x, y), naive_bilinear(nx, ny, &cy, x, y)]
}

#[test]
fn dense_field_matches_kernel_sum_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mesh = random_mesh(40, 33, 3, 5.0, 2.0, &mut rng);
    let dense = dense_displacement(&mesh);
    for t in 0..3 {
        for iy in 0..33 {
            for ix in 0..40 {
                let o = oracle(&mesh, (ix + 1) as f64, (iy + 1) as f64, t);
                let d = dense.at(ix, iy, t);
                assert!((o[0] - d[0]).abs() < 1e-12 && (o[1] - d[1]).abs() < 1e-12, "pixel ({ix},{iy},{t})");
            }
        }
    }
}

#[test]
fn pointwise_evaluation_matches_kernel_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mesh = random_mesh(37, 29, 2, 6.0, 3.0, &mut rng);
    for _ in 0..1000 {
        let (x, y, t) = (rng.random_range(1.0..=37.0), rng.random_range(1.0..=29.0), rng.random_range(0..2));
        let got = evaluate_displacement(&mesh, x, y, t).unwrap();
        let want = oracle(&mesh, x, y, t);
        assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12, "({x}, {y}, {t})");
    }
    assert!(evaluate_displacement(&mesh, 0.5, 3.0, 0).is_err());
    assert!(evaluate_displacement(&mesh, 3.0, 3.0, 2).is_err());
}

#[test]
fn warp_matches_naive_bilinear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (nx, ny, nt) = (13, 11, 3);
    let seq =
        CineSequence::new(nx, ny, nt, 1.0, (0..nx * ny * nt).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let disp = DisplacementField::new(
        nx,
        ny,
        nt,
        (0..nx * ny * nt).map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]).collect(),
    )
    .unwrap();
    let warped = warp_sequence(&seq, &disp).unwrap();
    for t in 0..nt {
        let f = &seq.data()[t * nx * ny..(t + 1) * nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let d = disp.at(ix, iy, t);
                let want = naive_bilinear(nx, ny, f, (ix + 1) as f64 + d[0], (iy + 1) as f64 + d[1]);
                assert!((warped.at(ix, iy, t) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn prolonged_mesh_reproduces_the_coarse_field() {
    let zero = ControlMesh::zeros(32, 32, 2, 6.0).unwrap();
    let (ni, nj) = (zero.ni(), zero.nj());
    let values = (0..zero.values().len())
        .map(|k| {
            let (i, j, t) = ((k % ni) as f64, ((k / ni) % nj) as f64, (k / (ni * nj)) as f64);
            [(0.5 * i + t).sin(), (0.4 * j - t).cos() * 0.8]
        })
        .collect();
    let coarse = zero.with_values(values).unwrap();
    let fine = prolong_mesh(&coarse, 64, 64, 6.0, false).unwrap();
    let dense = dense_displacement(&fine);
    let mut worst = 0.0f64;
    for t in 0..2 {
        for iy in 0..64 {
            for ix in 0..64 {
                let (x, y) = ((ix + 1) as f64, (iy + 1) as f64);
                let c = oracle(&coarse, ((x + 0.5) / 2.0).clamp(1.0, 32.0), ((y + 0.5) / 2.0).clamp(1.0, 32.0), t);
                let d = dense.at(ix, iy, t);
                worst = worst.max((d[0] - 2.0 * c[0]).hypot(d[1] - 2.0 * c[1]));
            }
        }
    }
    assert!(worst <= 0.1, "prolongation error {worst} px");
}

#[test]
fn prolongation_rejects_mismatched_grids() {
    let coarse = ControlMesh::zeros(16, 16, 2, 6.0).unwrap();
    assert!(prolong_mesh(&coarse, 40, 32, 6.0, true).is_err());
}

fn smooth_step(nx: usize, ny: usize, phase: f64) -> DisplacementField {
    DisplacementField::from_fn(nx, ny, 1, |x, y, _| [0.8 * (0.3 * y + phase).sin(), 0.6 * (0.25 * x - phase).cos()])
}

fn track(steps: &[DisplacementField], x: f64, y: f64, n: usize) -> [f64; 2] {
    if n == 0 {
        return [x, y];
    }
    let p = track(steps, x, y, n - 1);
    let s = &steps[n - 1];
    let d = naive_vector(s.nx(), s.ny(), s.data(), p[0], p[1]);
    [p[0] + d[0], p[1] + d[1]]
}

#[test]
fn pairwise_chain_matches_recursive_tracking() {
    let (nx, ny) = (20, 18);
    let steps: Vec<_> = (0..5).map(|k| smooth_step(nx, ny, k as f64)).collect();
    let traj = compose_pairwise_chain(&steps).unwrap();
    assert_eq!(traj.nt(), 6);
    for t in 0..6 {
        for iy in 0..ny {
            for ix in 0..nx {
                let (x, y) = ((ix + 1) as f64, (iy + 1) as f64);
                let want = track(&steps, x, y, t);
                let got = traj.map_point(x, y, t);
                assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn inversion_satisfies_the_fixed_point_equation() {
    let d = smooth_step(40, 40, 0.3);
    let inv = invert_displacement(&d).unwrap();
    assert!(inv.converged);
    for iy in 4..36 {
        for ix in 4..36 {
            let (x, y) = ((ix + 1) as f64, (iy + 1) as f64);
            let di = inv.field.at(ix, iy, 0);
            let s = naive_vector(40, 40, d.data(), x + di[0], y + di[1]);
            assert!((di[0] + s[0]).hypot(di[1] + s[1]) < 2e-3, "({ix},{iy})");
        }
    }
    assert!(invert_displacement(&DisplacementField::zeros(4, 4, 2)).is_err());
}

#[test]
fn composition_is_identity_when_the_first_frame_is_still() {
    let (nx, ny, nt) = (16, 14, 4);
    let disp = DisplacementField::from_fn(nx, ny, nt, |x, y, t| {
        if t == 0 {
            [0.0, 0.0]
        } else {
            [0.2 * t as f64 * (0.2 * y).sin(), -0.1 * t as f64 * (0.3 * x).cos()]
        }
    });
    let (traj, inv) = compose_to_first_frame(&disp).unwrap();
    assert_eq!(inv.max_residual, 0.0);
    for (a, b) in traj.field().data().iter().zip(disp.data()) {
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
}
