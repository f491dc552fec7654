mod common;

use common::oracles::*;
use common::{random_matrix, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use tempdistill::losses::*;
use tempdistill::matrix::RealMatrix;

const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-4;

// ---- value oracles --------------------------------------------------------

#[test]
fn conditional_probs_match_double_loop() {
    let mut r = rng(11);
    for kind in ["cos", "gauss"] {
        for _ in 0..100 {
            let y = random_matrix(&mut r, 5, 7);
            let got = conditional_probs(&y, &spec_of(kind)).unwrap();
            let want = naive_probs(kind, &y);
            for i in 0..5 {
                for j in 0..5 {
                    assert!((got.get(i, j) - want[i][j]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn pkt_three_row_hand_case() {
    let t = RealMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
    let s = RealMatrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
    // Teacher cosine affinities: k01 = 0.5, k02 = k12 = (1/√2 + 1)/2.
    let a = (std::f64::consts::FRAC_1_SQRT_2 + 1.0) / 2.0;
    let half = 0.5;
    // Columns of P (teacher): col0 = [_, .5/(.5+a), a/(.5+a)], col1 = [.5/(.5+a), _, a/(.5+a)],
    // col2 = [1/2, 1/2, _].
    let p = [
        [0.0, half / (half + a), 0.5],
        [half / (half + a), 0.0, 0.5],
        [a / (half + a), a / (half + a), 0.0],
    ];
    // Student rows: s0 = e1, s1 = (1,1), s2 = e2 so k01 = k12 = a, k02 = 0.5.
    let q = [
        [0.0, 0.5, half / (half + a)],
        [a / (a + half), 0.0, a / (a + half)],
        [half / (a + half), 0.5, 0.0],
    ];
    let mut want = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                want += p[i][j] * (p[i][j] / q[i][j]).ln();
            }
        }
    }
    let got = pkt_loss(&t, &s, &KernelSpec::CosineAffinity).unwrap().value;
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    assert!((got - naive_pkt("cos", &t, &s)).abs() < 1e-12);
}

#[test]
fn pkt_matches_naive_sum() {
    let mut r = rng(12);
    for kind in ["cos", "gauss"] {
        for _ in 0..100 {
            let t = random_matrix(&mut r, 6, 9);
            let s = random_matrix(&mut r, 6, 4);
            let got = pkt_loss(&t, &s, &spec_of(kind)).unwrap().value;
            assert!((got - naive_pkt(kind, &t, &s)).abs() < 1e-9);
        }
    }
}

#[test]
fn nst_matches_triple_loop() {
    let mut r = rng(13);
    for normalize in [false, true] {
        for _ in 0..100 {
            let t = random_matrix(&mut r, 4, 3);
            let s = random_matrix(&mut r, 4, 2);
            let got = nst_mmd2(&t, &s, 1.0, normalize).unwrap().value;
            assert!((got - naive_mmd2(&t, &s, normalize)).abs() < 1e-9);
        }
    }
}

#[test]
fn crd_critic_matches_scalar() {
    let mut r = rng(14);
    for _ in 0..100 {
        let s: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
        let got = crd_critic(&s, &t, 16, 4096).unwrap();
        assert!((got - naive_critic(&s, &t, 16, 4096)).abs() < 1e-12);
    }
}

#[test]
fn crd_loss_matches_naive() {
    let mut r = rng(15);
    for _ in 0..100 {
        let s = random_matrix(&mut r, 6, 5);
        let t = random_matrix(&mut r, 6, 5);
        let positives: Vec<(usize, usize)> = (0..6).map(|i| (i, i)).collect();
        let b = CrdBatch::new(s, t, positives, 5, 1000).unwrap();
        let got = crd_loss(&b).unwrap().value;
        assert!((got - naive_crd(&b)).abs() < 1e-9);
    }
}

#[test]
fn crd_aligned_beats_permuted() {
    let mut r = rng(16);
    for _ in 0..100 {
        let t = random_matrix(&mut r, 8, 6);
        let positives: Vec<(usize, usize)> = (0..8).map(|i| (i, i)).collect();
        let aligned = CrdBatch::new(t.clone(), t.clone(), positives.clone(), 7, 512).unwrap();
        let mut perm: Vec<usize> = (0..8).collect();
        while perm.iter().enumerate().any(|(i, &p)| i == p) {
            perm.shuffle(&mut r);
        }
        let shuffled = RealMatrix::from_fn(8, 6, |i, j| t.get(perm[i], j));
        let permuted = CrdBatch::new(shuffled, t, positives, 7, 512).unwrap();
        assert!(crd_loss(&aligned).unwrap().value < crd_loss(&permuted).unwrap().value);
    }
}

// ---- finite differences ---------------------------------------------------

#[test]
fn pkt_gradient_matches_finite_differences() {
    let mut r = rng(21);
    for kind in ["cos", "gauss"] {
        for _ in 0..10 {
            let t = unit_rows(&random_matrix(&mut r, 5, 6));
            let s = unit_rows(&random_matrix(&mut r, 5, 4));
            let spec = spec_of(kind);
            let g = pkt_loss(&t, &s, &spec).unwrap().grad;
            let rep = check_gradient(|x| pkt_loss(&t, x, &spec).unwrap().value, &s, &g, FD_STEP);
            assert!(rep.passes(FD_TOL), "{kind}: {rep:?}");
        }
    }
}

#[test]
fn nst_gradient_matches_finite_differences() {
    let mut r = rng(22);
    for normalize in [false, true] {
        for _ in 0..10 {
            let t = random_matrix(&mut r, 4, 3);
            let s = random_matrix(&mut r, 4, 2);
            let g = nst_mmd2(&t, &s, 1.0, normalize).unwrap().grad;
            let rep = check_gradient(
                |x| nst_mmd2(&t, x, 1.0, normalize).unwrap().value,
                &s,
                &g,
                FD_STEP,
            );
            assert!(rep.passes(FD_TOL), "normalize={normalize}: {rep:?}");
        }
    }
}

#[test]
fn crd_gradient_matches_finite_differences() {
    let mut r = rng(23);
    for _ in 0..10 {
        let s = unit_rows(&random_matrix(&mut r, 6, 5));
        let t = random_matrix(&mut r, 6, 5);
        let positives: Vec<(usize, usize)> = (0..6).map(|i| (i, i)).collect();
        let b = CrdBatch::new(s.clone(), t.clone(), positives.clone(), 4, 100).unwrap();
        let g = crd_loss(&b).unwrap().grad;
        let f = |x: &RealMatrix| {
            let b = CrdBatch::new(x.clone(), t.clone(), positives.clone(), 4, 100).unwrap();
            crd_loss(&b).unwrap().value
        };
        let rep = check_gradient(f, &s, &g, FD_STEP);
        assert!(rep.passes(FD_TOL), "{rep:?}");
    }
}

#[test]
fn projected_crd_gradient_matches_finite_differences() {
    let mut r = rng(24);
    let proj = Projection::orthonormal(9, 5, 7).unwrap();
    for _ in 0..10 {
        let s = random_matrix(&mut r, 4, 9);
        let t = random_matrix(&mut r, 4, 5);
        let positives: Vec<(usize, usize)> = (0..4).map(|i| (i, i)).collect();
        let loss = |x: &RealMatrix| {
            let b = CrdBatch::new(proj.apply(x).unwrap(), t.clone(), positives.clone(), 3, 64)
                .unwrap();
            crd_loss(&b).unwrap()
        };
        let g = proj.backward(&loss(&s).grad).unwrap();
        let rep = check_gradient(|x| loss(x).value, &s, &g, FD_STEP);
        assert!(rep.passes(FD_TOL), "{rep:?}");
    }
}

// ---- properties -----------------------------------------------------------

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = RealMatrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_filter("rows bounded away from zero", move |v| {
            v.chunks(cols).all(|row| row.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        })
        .prop_map(move |v| RealMatrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #[test]
    fn kernels_are_symmetric_and_bounded(x in prop::collection::vec(-3.0f64..3.0, 4),
                                         y in prop::collection::vec(-3.0f64..3.0, 4)) {
        let g = gaussian_kernel(&x, &y, 1.0);
        prop_assert!(g > 0.0 && g <= 1.0);
        prop_assert_eq!(g, gaussian_kernel(&y, &x, 1.0));
        if let (Ok(a), Ok(b)) = (cosine_affinity(&x, &y), cosine_affinity(&y, &x)) {
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn columns_sum_to_one(y in matrix(5, 3)) {
        for spec in [KernelSpec::CosineAffinity, KernelSpec::Gaussian { sigma: 1.0 }] {
            if let Ok(p) = conditional_probs(&y, &spec) {
                for j in 0..5 {
                    let s: f64 = (0..5).filter(|&i| i != j).map(|i| p.get(i, j)).sum();
                    prop_assert!((s - 1.0).abs() < 1e-9);
                    prop_assert_eq!(p.get(j, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn pkt_is_nonnegative(t in matrix(4, 5), s in matrix(4, 3)) {
        if let Ok(v) = pkt_loss(&t, &s, &KernelSpec::CosineAffinity) {
            prop_assert!(v.value >= -1e-12);
        }
        let v = pkt_loss(&t, &s, &KernelSpec::Gaussian { sigma: 1.0 }).unwrap();
        prop_assert!(v.value >= -1e-12);
    }

    #[test]
    fn cosine_pkt_ignores_row_scale(t in matrix(4, 5), s in matrix(4, 3),
                                    scales in prop::collection::vec(0.1f64..10.0, 4)) {
        let scaled = RealMatrix::from_fn(4, 3, |i, j| s.get(i, j) * scales[i]);
        if let Ok(a) = pkt_loss(&t, &s, &KernelSpec::CosineAffinity) {
            let b = pkt_loss(&t, &scaled, &KernelSpec::CosineAffinity).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-9 * (1.0 + a.value.abs()));
        }
    }

    #[test]
    fn nst_is_nonnegative(t in matrix(5, 3), s in matrix(5, 4), normalize: bool) {
        prop_assert!(nst_mmd2(&t, &s, 1.0, normalize).unwrap().value >= -1e-10);
    }

    #[test]
    fn critic_symmetric_and_monotone(s in prop::collection::vec(-1.0f64..1.0, 6),
                                     t in prop::collection::vec(-1.0f64..1.0, 6)) {
        prop_assume!(s.iter().any(|x| x.abs() > 1e-3) && t.iter().any(|x| x.abs() > 1e-3));
        let h = crd_critic(&s, &t, 8, 64).unwrap();
        prop_assert!(h > 0.0 && h < 1.0);
        prop_assert!((h - crd_critic(&t, &s, 8, 64).unwrap()).abs() < 1e-15);
        // Moving s toward t raises the inner product, and with it h.
        let closer: Vec<f64> = s.iter().zip(&t).map(|(a, b)| a + 0.5 * b / tempdistill::matrix::norm(&t) * tempdistill::matrix::norm(&s)).collect();
        let cos = |a: &[f64]| tempdistill::matrix::dot(a, &t) / (tempdistill::matrix::norm(a) * tempdistill::matrix::norm(&t));
        if cos(&closer) > cos(&s) + 1e-9 {
            prop_assert!(crd_critic(&closer, &t, 8, 64).unwrap() > h);
        }
    }
}

#[test]
fn nst_doubling_changes_value() {
    let mut r = rng(31);
    let t = random_matrix(&mut r, 6, 4);
    let s = random_matrix(&mut r, 6, 3);
    let a = nst_mmd2(&t, &s, 1.0, false).unwrap().value;
    let b = nst_mmd2(&t, &s.scale(2.0), 1.0, false).unwrap().value;
    assert_ne!(a, b);
    assert!((a - b).abs() > 1e-6);
}
