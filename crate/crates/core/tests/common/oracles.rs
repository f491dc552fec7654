//! Independent reference implementations: scalar loops for the losses
//! and a Gram-matrix route for CKA.

use nalgebra::DMatrix;
use tempdistill::losses::*;
use tempdistill::matrix::RealMatrix;

use super::{random_matrix, rng};

pub fn naive_kernel(kind: &str, x: &[f64], y: &[f64]) -> f64 {
    let mut xy = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    let mut d2 = 0.0;
    for k in 0..x.len() {
        xy += x[k] * y[k];
        xx += x[k] * x[k];
        yy += y[k] * y[k];
        d2 += (x[k] - y[k]) * (x[k] - y[k]);
    }
    match kind {
        "cos" => (xy / (xx.sqrt() * yy.sqrt()) + 1.0) / 2.0,
        _ => (-d2 / 2.0).exp(),
    }
}

pub fn spec_of(kind: &str) -> KernelSpec {
    match kind {
        "cos" => KernelSpec::CosineAffinity,
        _ => KernelSpec::Gaussian { sigma: 1.0 },
    }
}

pub fn naive_probs(kind: &str, y: &RealMatrix) -> Vec<Vec<f64>> {
    let l = y.rows();
    let mut p = vec![vec![0.0; l]; l];
    for j in 0..l {
        let mut z = 0.0;
        for k in 0..l {
            if k != j {
                z += naive_kernel(kind, y.row(k), y.row(j));
            }
        }
        for i in 0..l {
            if i != j {
                p[i][j] = naive_kernel(kind, y.row(i), y.row(j)) / z;
            }
        }
    }
    p
}

pub fn naive_pkt(kind: &str, t: &RealMatrix, s: &RealMatrix) -> f64 {
    let p = naive_probs(kind, t);
    let q = naive_probs(kind, s);
    let mut total = 0.0;
    for j in 0..p.len() {
        for i in 0..p.len() {
            if i != j {
                total += p[i][j] * (p[i][j] / q[i][j]).ln();
            }
        }
    }
    total
}

pub fn naive_mmd2(t: &RealMatrix, s: &RealMatrix, normalize: bool) -> f64 {
    let col = |m: &RealMatrix, c: usize| -> Vec<f64> {
        let v: Vec<f64> = (0..m.rows()).map(|r| m.get(r, c)).collect();
        if normalize {
            let n = (v.iter().map(|x| x * x).sum::<f64>() + NST_NORM_EPS).sqrt();
            v.iter().map(|x| x / n).collect()
        } else {
            v
        }
    };
    let (n, m) = (t.cols(), s.cols());
    let mut tt = 0.0;
    for i in 0..n {
        for k in 0..n {
            tt += naive_kernel("gauss", &col(t, i), &col(t, k));
        }
    }
    let mut ss = 0.0;
    for j in 0..m {
        for k in 0..m {
            ss += naive_kernel("gauss", &col(s, j), &col(s, k));
        }
    }
    let mut st = 0.0;
    for j in 0..m {
        for i in 0..n {
            st += naive_kernel("gauss", &col(s, j), &col(t, i));
        }
    }
    tt / (n * n) as f64 + ss / (m * m) as f64 - 2.0 * st / (m * n) as f64
}

pub fn naive_critic(s: &[f64], t: &[f64], n: usize, m: usize) -> f64 {
    let mut st = 0.0;
    let mut ss = 0.0;
    let mut tt = 0.0;
    for k in 0..s.len() {
        st += s[k] * t[k];
        ss += s[k] * s[k];
        tt += t[k] * t[k];
    }
    let u = st / (ss.sqrt() * tt.sqrt());
    u.exp() / (u.exp() + n as f64 / m as f64)
}

pub fn naive_crd(b: &CrdBatch) -> f64 {
    let n = b.negatives_per_positive;
    let m = b.dataset_cardinality;
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut n_neg = 0usize;
    for (&(i, j), negs) in b.positives.iter().zip(&b.negatives) {
        pos += naive_critic(b.student_reps.row(i), b.teacher_reps.row(j), n, m).ln();
        for &k in negs {
            neg += (1.0 - naive_critic(b.student_reps.row(i), b.teacher_reps.row(k), n, m)).ln();
            n_neg += 1;
        }
    }
    -pos / b.positives.len() as f64 - n as f64 * neg / n_neg as f64
}

pub fn unit_rows(m: &RealMatrix) -> RealMatrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let n = m.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        out.row_mut(r).iter_mut().for_each(|x| *x /= n);
    }
    out
}

pub fn to_na(m: &RealMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> RealMatrix {
    RealMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// HSIC-based CKA through n×n Gram matrices, a different route from the
/// feature-space formula under test.
pub fn gram_cka(x: &RealMatrix, y: &RealMatrix) -> f64 {
    let n = x.rows();
    let (x, y) = (to_na(x), to_na(y));
    let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let k = &h * (&x * x.transpose()) * &h;
    let l = &h * (&y * y.transpose()) * &h;
    let hsic = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a * b).trace();
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}

pub fn random_orthogonal(seed: u64, d: usize) -> RealMatrix {
    let mut r = rng(seed);
    let a = to_na(&random_matrix(&mut r, d, d));
    from_na(&a.qr().q())
}

