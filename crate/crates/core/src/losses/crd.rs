use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{KdError, LossValue};
use crate::matrix::{dot, norm, RealMatrix};

/// `exp(ŝ·t̂) / (exp(ŝ·t̂) + N/M)` on L2-normalized inputs.
pub fn crd_critic(s: &[f64], t: &[f64], n: usize, m: usize) -> Result<f64, KdError> {
    if s.len() != t.len() {
        return Err(KdError::DimensionMismatch(s.len(), t.len()));
    }
    let (ns, nt) = (norm(s), norm(t));
    if ns == 0.0 {
        return Err(KdError::ZeroVector("student".into()));
    }
    if nt == 0.0 {
        return Err(KdError::ZeroVector("teacher".into()));
    }
    if m == 0 {
        return Err(KdError::InvalidBatch("dataset cardinality must be positive".into()));
    }
    Ok(critic_of_dot(dot(s, t) / (ns * nt), n, m))
}

fn critic_of_dot(u: f64, n: usize, m: usize) -> f64 {
    let e = u.exp();
    e / (e + n as f64 / m as f64)
}

/// One contrastive batch. `positives[p] = (student_row, teacher_row)`, and
/// `negatives[p]` lists the `N` teacher rows contrasted with that student row.
#[derive(Debug, Clone)]
pub struct CrdBatch {
    pub student_reps: RealMatrix,
    pub teacher_reps: RealMatrix,
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<Vec<usize>>,
    pub negatives_per_positive: usize,
    pub dataset_cardinality: usize,
}

impl CrdBatch {
    /// Negatives are the other teacher rows, taken cyclically after the
    /// positive's teacher row (wrapping around when `N ≥ rows`).
    pub fn new(
        student_reps: RealMatrix,
        teacher_reps: RealMatrix,
        positives: Vec<(usize, usize)>,
        negatives_per_positive: usize,
        dataset_cardinality: usize,
    ) -> Result<Self, KdError> {
        let rows = teacher_reps.rows();
        if rows < 2 && negatives_per_positive > 0 {
            return Err(KdError::InvalidBatch(
                "cyclic negatives need at least two teacher rows".into(),
            ));
        }
        let negatives = positives
            .iter()
            .map(|&(_, j)| {
                (0..negatives_per_positive)
                    .map(|k| (j + 1 + k % (rows - 1)) % rows)
                    .collect()
            })
            .collect();
        Self::with_negatives(
            student_reps,
            teacher_reps,
            positives,
            negatives,
            negatives_per_positive,
            dataset_cardinality,
        )
    }

    pub fn with_negatives(
        student_reps: RealMatrix,
        teacher_reps: RealMatrix,
        positives: Vec<(usize, usize)>,
        negatives: Vec<Vec<usize>>,
        negatives_per_positive: usize,
        dataset_cardinality: usize,
    ) -> Result<Self, KdError> {
        let batch = CrdBatch {
            student_reps,
            teacher_reps,
            positives,
            negatives,
            negatives_per_positive,
            dataset_cardinality,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<(), KdError> {
        let n = self.negatives_per_positive;
        if n == 0 {
            return Err(KdError::InvalidBatch("need at least one negative per positive".into()));
        }
        if self.dataset_cardinality < n {
            return Err(KdError::InvalidBatch(format!(
                "dataset cardinality {} is below N = {n}",
                self.dataset_cardinality
            )));
        }
        if self.student_reps.cols() != self.teacher_reps.cols() {
            return Err(KdError::DimensionMismatch(
                self.student_reps.cols(),
                self.teacher_reps.cols(),
            ));
        }
        if self.positives.is_empty() {
            return Err(KdError::InvalidBatch("no positive pairs".into()));
        }
        if self.negatives.len() != self.positives.len() {
            return Err(KdError::InvalidBatch(
                "one negative list per positive required".into(),
            ));
        }
        let (sr, tr) = (self.student_reps.rows(), self.teacher_reps.rows());
        for (&(i, j), negs) in self.positives.iter().zip(&self.negatives) {
            if i >= sr || j >= tr {
                return Err(KdError::InvalidBatch(format!("positive ({i}, {j}) out of range")));
            }
            if negs.len() != n {
                return Err(KdError::InvalidBatch(format!(
                    "expected {n} negatives, got {}",
                    negs.len()
                )));
            }
            if let Some(k) = negs.iter().find(|&&k| k >= tr) {
                return Err(KdError::InvalidBatch(format!("negative {k} out of range")));
            }
        }
        Ok(())
    }
}

fn unit_rows(m: &RealMatrix, what: &str) -> Result<(RealMatrix, Vec<f64>), KdError> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let n = norm(m.row(r));
        if n == 0.0 {
            return Err(KdError::ZeroVector(format!("{what} row {r}")));
        }
        out.row_mut(r).iter_mut().for_each(|x| *x /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// `−mean_pos log h(s, t) − N · mean_neg log(1 − h(s, t))`, gradient with
/// respect to `student_reps`.
pub fn crd_loss(batch: &CrdBatch) -> Result<LossValue, KdError> {
    batch.validate()?;
    let n = batch.negatives_per_positive;
    let m = batch.dataset_cardinality;
    let (s_hat, s_norm) = unit_rows(&batch.student_reps, "student")?;
    let (t_hat, _) = unit_rows(&batch.teacher_reps, "teacher")?;
    let p = batch.positives.len() as f64;
    let ratio = n as f64 / m as f64;

    // dL/dŝ accumulated per student row.
    let mut g_hat = RealMatrix::zeros(s_hat.rows(), s_hat.cols());
    let mut value = 0.0;
    for (&(i, j), negs) in batch.positives.iter().zip(&batch.negatives) {
        let u = dot(s_hat.row(i), t_hat.row(j));
        // log h = u − log(e^u + N/M)
        value -= (u - (u.exp() + ratio).ln()) / p;
        let h = critic_of_dot(u, n, m);
        let coef = -(1.0 - h) / p;
        for (g, t) in g_hat.row_mut(i).iter_mut().zip(t_hat.row(j)) {
            *g += coef * t;
        }
        for &k in negs {
            let u = dot(s_hat.row(i), t_hat.row(k));
            // log(1 − h) = log(N/M) − log(e^u + N/M); N · mean over P·N pairs.
            value -= (ratio.ln() - (u.exp() + ratio).ln()) / p;
            let h = critic_of_dot(u, n, m);
            let coef = h / p;
            for (g, t) in g_hat.row_mut(i).iter_mut().zip(t_hat.row(k)) {
                *g += coef * t;
            }
        }
    }
    if !value.is_finite() {
        return Err(KdError::NonFinite);
    }

    // Back through ŝ = s / |s|.
    let mut grad = RealMatrix::zeros(s_hat.rows(), s_hat.cols());
    for r in 0..s_hat.rows() {
        let proj = dot(g_hat.row(r), s_hat.row(r));
        let inv = 1.0 / s_norm[r];
        for ((o, g), sh) in grad.row_mut(r).iter_mut().zip(g_hat.row(r)).zip(s_hat.row(r)) {
            *o = (g - proj * sh) * inv;
        }
    }
    Ok(LossValue { value, grad })
}

/// Fixed linear map with orthonormal rows, `to_dim × from_dim`, used to
/// bring the wider of two representations down to the narrower one.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    weights: RealMatrix,
}

impl Projection {
    pub fn orthonormal(from_dim: usize, to_dim: usize, seed: u64) -> Result<Self, KdError> {
        if to_dim == 0 || to_dim > from_dim {
            return Err(KdError::DimensionMismatch(from_dim, to_dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(to_dim);
        while rows.len() < to_dim {
            let mut v: Vec<f64> = (0..from_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            // Gram-Schmidt, applied twice for numerical safety.
            for _ in 0..2 {
                for q in &rows {
                    let c = dot(&v, q);
                    v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
                }
            }
            let n = norm(&v);
            if n > 1e-8 {
                v.iter_mut().for_each(|x| *x /= n);
                rows.push(v);
            }
        }
        let weights = RealMatrix::from_vec(to_dim, from_dim, rows.concat())
            .expect("finite projection weights");
        Ok(Projection { weights })
    }

    pub fn from_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn to_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &RealMatrix {
        &self.weights
    }

    /// `x Pᵀ` for row-major items `x` (`items × from_dim`).
    pub fn apply(&self, x: &RealMatrix) -> Result<RealMatrix, KdError> {
        if x.cols() != self.from_dim() {
            return Err(KdError::DimensionMismatch(x.cols(), self.from_dim()));
        }
        Ok(x.matmul(&self.weights.transpose()))
    }

    /// Pulls a gradient on the projected side back to the input side.
    pub fn backward(&self, grad: &RealMatrix) -> Result<RealMatrix, KdError> {
        if grad.cols() != self.to_dim() {
            return Err(KdError::DimensionMismatch(grad.cols(), self.to_dim()));
        }
        Ok(grad.matmul(&self.weights))
    }
}
