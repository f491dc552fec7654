use super::{gaussian_kernel, KdError, LossValue};
use crate::matrix::{dot, RealMatrix};

/// Added under the square root when L2-normalizing activation columns, so a
/// dead neuron does not divide by zero.
pub const NST_NORM_EPS: f64 = 1e-12;

/// Columns of `m`, optionally scaled to unit length. Returns the columns and
/// their (smoothed) norms.
fn columns(m: &RealMatrix, normalize: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut cols = Vec::with_capacity(m.cols());
    let mut norms = Vec::with_capacity(m.cols());
    for c in 0..m.cols() {
        let mut v = m.column(c);
        let r = if normalize {
            (dot(&v, &v) + NST_NORM_EPS).sqrt()
        } else {
            1.0
        };
        if normalize {
            v.iter_mut().for_each(|x| *x /= r);
        }
        cols.push(v);
        norms.push(r);
    }
    (cols, norms)
}

fn mean_kernel(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += gaussian_kernel(x, y, sigma);
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Squared MMD between the neuron columns of the teacher layer `t`
/// (`l × N`) and the student layer `s` (`l × M`):
///
/// ```text
/// (1/N²) ΣΣ K(t_i, t_i') + (1/M²) ΣΣ K(s_j, s_j') − (2/MN) ΣΣ K(s_j, t_i)
/// ```
///
/// With `normalize_columns`, each column is scaled to unit L2 norm before
/// the kernel. The gradient is with respect to `s`.
pub fn nst_mmd2(
    t: &RealMatrix,
    s: &RealMatrix,
    sigma: f64,
    normalize_columns: bool,
) -> Result<LossValue, KdError> {
    if t.rows() != s.rows() {
        return Err(KdError::RowCountMismatch(t.rows(), s.rows()));
    }
    if t.cols() == 0 || s.cols() == 0 {
        return Err(KdError::DimensionMismatch(t.cols(), s.cols()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(KdError::InvalidKernel(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let (tc, _) = columns(t, normalize_columns);
    let (sc, s_norms) = columns(s, normalize_columns);
    let (n, m) = (tc.len() as f64, sc.len() as f64);

    let value = mean_kernel(&tc, &tc, sigma) + mean_kernel(&sc, &sc, sigma)
        - 2.0 * mean_kernel(&sc, &tc, sigma);
    if !value.is_finite() {
        return Err(KdError::NonFinite);
    }

    let l = s.rows();
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut grad = RealMatrix::zeros(l, s.cols());
    for (j, sj) in sc.iter().enumerate() {
        // Gradient with respect to the (possibly normalized) column.
        let mut g = vec![0.0; l];
        for sk in &sc {
            let k = gaussian_kernel(sj, sk, sigma);
            let f = -2.0 / (m * m) * k * inv_s2;
            for ((gi, a), b) in g.iter_mut().zip(sj).zip(sk) {
                *gi += f * (a - b);
            }
        }
        for ti in &tc {
            let k = gaussian_kernel(sj, ti, sigma);
            let f = 2.0 / (m * n) * k * inv_s2;
            for ((gi, a), b) in g.iter_mut().zip(sj).zip(ti) {
                *gi += f * (a - b);
            }
        }
        if normalize_columns {
            // ŝ = s / r: dL/ds = (g − ŝ (ŝ·g)) / r, using r² = |s|² + ε.
            let r = s_norms[j];
            let raw_dot: f64 = sj.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() * r;
            for (row, gi) in g.iter().enumerate() {
                let s_raw = s.get(row, j);
                grad.set(row, j, gi / r - s_raw * raw_dot / (r * r * r));
            }
        } else {
            for (row, gi) in g.iter().enumerate() {
                grad.set(row, j, *gi);
            }
        }
    }
    Ok(LossValue { value, grad })
}
