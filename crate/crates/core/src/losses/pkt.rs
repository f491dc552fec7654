use super::{KdError, KernelSpec, LossValue};
use crate::matrix::{norm, RealMatrix};

/// Probabilities are floored at this value inside log ratios.
pub const PROB_FLOOR: f64 = 1e-12;

fn affinity_matrix(y: &RealMatrix, kernel: &KernelSpec) -> Result<RealMatrix, KdError> {
    kernel.validate()?;
    let l = y.rows();
    if l < 2 {
        return Err(KdError::TooFewRows { need: 2, got: l });
    }
    if matches!(kernel, KernelSpec::CosineAffinity) {
        if let Some(r) = (0..l).find(|&r| norm(y.row(r)) == 0.0) {
            return Err(KdError::ZeroVector(format!("row {r}")));
        }
    }
    let mut k = RealMatrix::zeros(l, l);
    for i in 0..l {
        for j in (i + 1)..l {
            let v = kernel.eval(y.row(i), y.row(j));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    Ok(k)
}

fn normalize_columns(k: &RealMatrix) -> Result<(RealMatrix, Vec<f64>), KdError> {
    let l = k.rows();
    let mut p = RealMatrix::zeros(l, l);
    let mut z = vec![0.0; l];
    for (j, zj) in z.iter_mut().enumerate() {
        *zj = (0..l).filter(|&i| i != j).map(|i| k.get(i, j)).sum();
        if *zj <= 0.0 {
            return Err(KdError::DegenerateColumn(j));
        }
        for i in (0..l).filter(|&i| i != j) {
            p.set(i, j, k.get(i, j) / *zj);
        }
    }
    Ok((p, z))
}

/// Conditional affinity distribution: `P[i][j] = K(y_i, y_j) / Σ_{k≠j} K(y_k, y_j)`,
/// with a zero diagonal. Each column sums to one.
pub fn conditional_probs(y: &RealMatrix, kernel: &KernelSpec) -> Result<RealMatrix, KdError> {
    normalize_columns(&affinity_matrix(y, kernel)?).map(|(p, _)| p)
}

/// `Σ_j Σ_{i≠j} p_{i|j} log(p_{i|j} / q_{i|j})` where `p` comes from the
/// teacher logits and `q` from the student logits. The two vocabularies may
/// differ; the number of rows may not.
pub fn pkt_loss(
    teacher: &RealMatrix,
    student: &RealMatrix,
    kernel: &KernelSpec,
) -> Result<LossValue, KdError> {
    let l = student.rows();
    if teacher.rows() != l {
        return Err(KdError::RowCountMismatch(teacher.rows(), l));
    }
    let p = conditional_probs(teacher, kernel)?;
    let k = affinity_matrix(student, kernel)?;
    let (q, z) = normalize_columns(&k)?;

    let mut value = 0.0;
    // dL/dq, zero where the floor is active.
    let mut dq = RealMatrix::zeros(l, l);
    for j in 0..l {
        for i in (0..l).filter(|&i| i != j) {
            let (pij, qij) = (p.get(i, j), q.get(i, j));
            if pij > 0.0 {
                value += pij * (pij.max(PROB_FLOOR).ln() - qij.max(PROB_FLOOR).ln());
            }
            if qij > PROB_FLOOR {
                dq.set(i, j, -pij / qij);
            }
        }
    }
    if !value.is_finite() {
        return Err(KdError::NonFinite);
    }

    // Through q_{ij} = K_ij / Z_j.
    let mut dk = RealMatrix::zeros(l, l);
    for j in 0..l {
        let inner: f64 = (0..l)
            .filter(|&i| i != j)
            .map(|i| dq.get(i, j) * q.get(i, j))
            .sum();
        for i in (0..l).filter(|&i| i != j) {
            dk.set(i, j, (dq.get(i, j) - inner) / z[j]);
        }
    }

    let mut grad = RealMatrix::zeros(l, student.cols());
    for a in 0..l {
        for b in (0..l).filter(|&b| b != a) {
            // K(y_a, y_b) appears at entries (a, b) and (b, a).
            let w = dk.get(a, b) + dk.get(b, a);
            if w == 0.0 {
                continue;
            }
            let kab = k.get(a, b);
            kernel.add_grad_x(student.row(a), student.row(b), kab, w, grad.row_mut(a));
        }
    }
    Ok(LossValue { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_rows_normalize_to_one() {
        let y = RealMatrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap();
        for kernel in [KernelSpec::CosineAffinity, KernelSpec::Gaussian { sigma: 1.0 }] {
            let p = conditional_probs(&y, &kernel).unwrap();
            assert_eq!(p.get(0, 1), 1.0);
            assert_eq!(p.get(1, 0), 1.0);
            assert_eq!(p.get(0, 0), 0.0);
        }
    }

    #[test]
    fn identical_rows_are_uniform() {
        let y = RealMatrix::from_fn(4, 3, |_, j| j as f64 + 1.0);
        let p = conditional_probs(&y, &KernelSpec::CosineAffinity).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.0 } else { 1.0 / 3.0 };
                assert_abs_diff_eq!(p.get(i, j), want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn errors() {
        let one = RealMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            conditional_probs(&one, &KernelSpec::CosineAffinity),
            Err(KdError::TooFewRows { .. })
        ));
        let zero_row = RealMatrix::from_rows(&[[1.0, 2.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            conditional_probs(&zero_row, &KernelSpec::CosineAffinity),
            Err(KdError::ZeroVector(_))
        ));
        // Two opposite rows: every off-diagonal cosine affinity is zero.
        let opposite = RealMatrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert!(matches!(
            conditional_probs(&opposite, &KernelSpec::CosineAffinity),
            Err(KdError::DegenerateColumn(_))
        ));
        let a = RealMatrix::zeros(3, 2).map(|_| 1.0);
        let b = RealMatrix::zeros(4, 2).map(|_| 1.0);
        assert!(matches!(
            pkt_loss(&a, &b, &KernelSpec::CosineAffinity),
            Err(KdError::RowCountMismatch(3, 4))
        ));
    }

    #[test]
    fn identical_logits_give_zero() {
        let y = RealMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.7);
        let v = pkt_loss(&y, &y, &KernelSpec::CosineAffinity).unwrap();
        assert!(v.value.abs() < 1e-12);
        assert!(v.grad.frobenius_norm() < 1e-10);
    }
}
