//! Representation similarity: mean-pooled sentence embeddings, linear CKA
//! within and across models, and a deterministic 2-D PCA projection for
//! plotting.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::RealMatrix;
use crate::tensor_io::{read_tensor, write_atomic, write_tensor, TensorIoError};

#[derive(Debug, Error)]
pub enum ReprError {
    #[error("empty input")]
    EmptyInput,
    #[error("row count mismatch: {0} vs {1}")]
    RowCountMismatch(usize, usize),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid layer trace: {0}")]
    InvalidTrace(String),
    #[error("probe set must contain both task labels; missing {0}")]
    MissingLabel(TaskLabel),
    #[error("{0} probe items but {1} projected rows")]
    ProjectionMismatch(usize, usize),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Mean of the token rows.
pub fn sentence_embedding(token_states: &RealMatrix) -> Result<Vec<f64>, ReprError> {
    let n = token_states.rows();
    if n == 0 {
        return Err(ReprError::EmptyInput);
    }
    let mut out = vec![0.0; token_states.cols()];
    for r in 0..n {
        out.iter_mut()
            .zip(token_states.row(r))
            .for_each(|(o, v)| *o += v);
    }
    out.iter_mut().for_each(|o| *o /= n as f64);
    Ok(out)
}

fn centered_checked(m: &RealMatrix, which: &str) -> Result<RealMatrix, ReprError> {
    let c = m.center_columns();
    let scale = m.frobenius_norm().max(1.0);
    if c.frobenius_norm() <= 1e-12 * scale {
        return Err(ReprError::DegenerateInput(format!(
            "{which} has only constant columns"
        )));
    }
    Ok(c)
}

/// Linear CKA with the biased (plain centered Gram) HSIC estimator:
/// `‖Ycᵀ Xc‖²_F / (‖Xcᵀ Xc‖_F ‖Ycᵀ Yc‖_F)`.
pub fn linear_cka(x: &RealMatrix, y: &RealMatrix) -> Result<f64, ReprError> {
    if x.rows() != y.rows() {
        return Err(ReprError::RowCountMismatch(x.rows(), y.rows()));
    }
    if x.rows() < 2 {
        return Err(ReprError::DegenerateInput("need at least two rows".into()));
    }
    let xc = centered_checked(x, "X")?;
    let yc = centered_checked(y, "Y")?;
    let cross = yc.t_matmul(&xc).frobenius_norm();
    let xx = xc.t_matmul(&xc).frobenius_norm();
    let yy = yc.t_matmul(&yc).frobenius_norm();
    Ok((cross * cross / (xx * yy)).clamp(0.0, 1.0))
}

/// Per-layer activations of one model on a fixed list of probe items.
/// Layer 0 holds the initial embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub model_id: String,
    layers: Vec<RealMatrix>,
}

#[derive(Serialize, Deserialize)]
struct TraceMeta {
    model_id: String,
    n_layers: usize,
    n_items: usize,
}

const TRACE_META: &str = "trace.json";

impl LayerTrace {
    pub fn new(model_id: impl Into<String>, layers: Vec<RealMatrix>) -> Result<Self, ReprError> {
        let Some(first) = layers.first() else {
            return Err(ReprError::InvalidTrace("no layers".into()));
        };
        if let Some((k, l)) = layers
            .iter()
            .enumerate()
            .find(|(_, l)| l.rows() != first.rows())
        {
            return Err(ReprError::InvalidTrace(format!(
                "layer {k} has {} rows, layer 0 has {}",
                l.rows(),
                first.rows()
            )));
        }
        Ok(LayerTrace {
            model_id: model_id.into(),
            layers,
        })
    }

    pub fn layers(&self) -> &[RealMatrix] {
        &self.layers
    }

    pub fn n_items(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn layer_file_name(k: usize) -> String {
        format!("layer_{k:03}.tnsr")
    }

    /// Writes `layer_000.tnsr`, `layer_001.tnsr`, ... plus `trace.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ReprError> {
        fs::create_dir_all(dir)?;
        for (k, layer) in self.layers.iter().enumerate() {
            write_tensor(&dir.join(Self::layer_file_name(k)), layer)?;
        }
        let meta = TraceMeta {
            model_id: self.model_id.clone(),
            n_layers: self.layers.len(),
            n_items: self.n_items(),
        };
        let json = serde_json::to_vec_pretty(&meta).expect("trace metadata serializes");
        write_atomic(&dir.join(TRACE_META), &json)?;
        Ok(())
    }

    /// Reads consecutive `layer_NNN.tnsr` files starting at 0. The model id
    /// comes from `trace.json` when present, else from the directory name.
    pub fn read_dir(dir: &Path) -> Result<Self, ReprError> {
        let mut layers = Vec::new();
        loop {
            let path = dir.join(Self::layer_file_name(layers.len()));
            if !path.exists() {
                break;
            }
            layers.push(read_tensor(&path)?);
        }
        if layers.is_empty() {
            return Err(ReprError::InvalidTrace(format!(
                "no {} in {}",
                Self::layer_file_name(0),
                dir.display()
            )));
        }
        let meta_path = dir.join(TRACE_META);
        let model_id = if meta_path.exists() {
            let meta: TraceMeta = serde_json::from_slice(&fs::read(&meta_path)?)
                .map_err(|e| ReprError::InvalidTrace(format!("{TRACE_META}: {e}")))?;
            if meta.n_layers != layers.len() {
                return Err(ReprError::InvalidTrace(format!(
                    "{TRACE_META} lists {} layers, found {}",
                    meta.n_layers,
                    layers.len()
                )));
            }
            meta.model_id
        } else {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        };
        Self::new(model_id, layers)
    }
}

/// `linear_cka(layer_0, layer_k)` for every layer `k`.
pub fn layer_sweep(trace: &LayerTrace) -> Result<Vec<f64>, ReprError> {
    let base = &trace.layers[0];
    trace
        .layers
        .par_iter()
        .map(|l| linear_cka(base, l))
        .collect()
}

/// Entry `(i, j)` is `linear_cka(a.layers[i], b.layers[j])`.
pub fn cross_model_cka(a: &LayerTrace, b: &LayerTrace) -> Result<RealMatrix, ReprError> {
    if a.n_items() != b.n_items() {
        return Err(ReprError::RowCountMismatch(a.n_items(), b.n_items()));
    }
    let (na, nb) = (a.layers.len(), b.layers.len());
    let values: Vec<f64> = (0..na * nb)
        .into_par_iter()
        .map(|idx| linear_cka(&a.layers[idx / nb], &b.layers[idx % nb]))
        .collect::<Result<_, _>>()?;
    Ok(RealMatrix::from_vec(na, nb, values).expect("CKA values are finite"))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching unit eigenvectors
/// (as columns of the second result).
pub fn symmetric_eigen(a: &RealMatrix) -> (Vec<f64>, RealMatrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = RealMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let total = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = RealMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    /// `n × 2` projected coordinates.
    pub coords: RealMatrix,
    /// Unit principal directions, each of length `d`.
    pub components: [Vec<f64>; 2],
    /// Sample variance along each component.
    pub variances: [f64; 2],
    pub total_variance: f64,
}

impl Pca2d {
    pub fn variance_explained(&self) -> [f64; 2] {
        self.variances.map(|v| v / self.total_variance)
    }
}

/// Projects centered rows onto the top two principal components. Each
/// component is signed so its largest-magnitude loading is positive. With
/// `d = 1` the second coordinate is identically zero.
pub fn pca2d(x: &RealMatrix) -> Result<Pca2d, ReprError> {
    let (n, d) = x.shape();
    if n < 3 {
        return Err(ReprError::DegenerateInput(format!(
            "need at least 3 rows, got {n}"
        )));
    }
    if d == 0 {
        return Err(ReprError::EmptyInput);
    }
    let xc = centered_checked(x, "X")?;
    let cov = xc.t_matmul(&xc).scale(1.0 / (n - 1) as f64);
    let total_variance: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    let (values, vectors) = symmetric_eigen(&cov);

    let component = |k: usize| -> Vec<f64> {
        if k >= d {
            return vec![0.0; d];
        }
        let mut v = vectors.column(k);
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let components = [component(0), component(1)];
    let coords = RealMatrix::from_fn(n, 2, |r, c| {
        crate::matrix::dot(xc.row(r), &components[c])
    });
    let var = |k: usize| values.get(k).copied().unwrap_or(0.0).max(0.0);
    Ok(Pca2d {
        coords,
        components,
        variances: [var(0), var(1)],
        total_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskLabel {
    Temporal,
    Summarisation,
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskLabel::Temporal => "temporal",
            TaskLabel::Summarisation => "summarisation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeItem {
    pub item_id: String,
    pub text: String,
    pub task_label: TaskLabel,
}

/// Probe inputs for the two-task comparison. Both labels must occur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    items: Vec<ProbeItem>,
}

impl ProbeSet {
    pub fn new(items: Vec<ProbeItem>) -> Result<Self, ReprError> {
        for label in [TaskLabel::Temporal, TaskLabel::Summarisation] {
            if !items.iter().any(|i| i.task_label == label) {
                return Err(ReprError::MissingLabel(label));
            }
        }
        Ok(ProbeSet { items })
    }

    pub fn items(&self) -> &[ProbeItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// CSV with header `item_id,x,y,task_label`, one row per probe item.
pub fn projection_csv(probes: &ProbeSet, coords: &RealMatrix) -> Result<String, ReprError> {
    if coords.rows() != probes.len() || coords.cols() != 2 {
        return Err(ReprError::ProjectionMismatch(probes.len(), coords.rows()));
    }
    let mut out = String::from("item_id,x,y,task_label\n");
    for (r, item) in probes.items.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&item.item_id),
            coords.get(r, 0),
            coords.get(r, 1),
            item.task_label
        ));
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_projection_csv(
    path: &Path,
    probes: &ProbeSet,
    coords: &RealMatrix,
) -> Result<(), ReprError> {
    write_atomic(path, projection_csv(probes, coords)?.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> RealMatrix {
        RealMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn embedding_examples() {
        assert_eq!(sentence_embedding(&m(&[&[1.0, -2.0]])).unwrap(), vec![1.0, -2.0]);
        assert_eq!(
            sentence_embedding(&m(&[&[1.0, -2.0], &[-1.0, 2.0]])).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matches!(
            sentence_embedding(&RealMatrix::zeros(0, 3)),
            Err(ReprError::EmptyInput)
        ));
    }

    #[test]
    fn cka_self_and_errors() {
        let x = m(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0], &[-2.0, 1.5]]);
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((linear_cka(&x, &x.scale(-3.0)).unwrap() - 1.0).abs() < 1e-12);
        let constant = RealMatrix::from_fn(4, 2, |_, j| j as f64);
        assert!(matches!(
            linear_cka(&x, &constant),
            Err(ReprError::DegenerateInput(_))
        ));
        assert!(matches!(
            linear_cka(&x, &RealMatrix::zeros(3, 2)),
            Err(ReprError::RowCountMismatch(4, 3))
        ));
    }

    #[test]
    fn sweep_of_identical_layers() {
        let x = m(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0]]);
        let t = LayerTrace::new("t", vec![x.clone(), x.clone(), x]).unwrap();
        for v in layer_sweep(&t).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(LayerTrace::new("bad", vec![RealMatrix::zeros(2, 2), RealMatrix::zeros(3, 2)]).is_err());
    }

    #[test]
    fn pca_of_centered_2d_data_is_a_rotation() {
        let x = m(&[&[2.0, 0.1], &[-2.0, -0.1], &[0.3, 1.0], &[-0.3, -1.0]]);
        let p = pca2d(&x).unwrap();
        // Distances are preserved.
        for a in 0..4 {
            for b in 0..4 {
                let d0 = crate::matrix::squared_distance(x.row(a), x.row(b));
                let d1 = crate::matrix::squared_distance(p.coords.row(a), p.coords.row(b));
                assert!((d0 - d1).abs() < 1e-12);
            }
        }
        assert!(p.variances[0] >= p.variances[1]);
    }

    #[test]
    fn pca_rank_one() {
        let x = RealMatrix::from_fn(6, 3, |i, j| (i as f64 - 2.5) * [1.0, -2.0, 0.5][j]);
        let p = pca2d(&x).unwrap();
        assert!(p.variances[1] < 1e-12 * p.variances[0]);
        assert!((p.variance_explained()[0] - 1.0).abs() < 1e-12);
        // Largest loading (the -2 direction) is made positive.
        assert!(p.components[0][1] > 0.0);
    }

    #[test]
    fn probe_set_needs_both_labels() {
        let item = |id: &str, l| ProbeItem {
            item_id: id.into(),
            text: "x".into(),
            task_label: l,
        };
        assert!(matches!(
            ProbeSet::new(vec![item("a", TaskLabel::Temporal)]),
            Err(ReprError::MissingLabel(TaskLabel::Summarisation))
        ));
        let p = ProbeSet::new(vec![
            item("a", TaskLabel::Temporal),
            item("b,c", TaskLabel::Summarisation),
        ])
        .unwrap();
        let csv = projection_csv(&p, &m(&[&[1.0, 2.0], &[0.5, -1.0]])).unwrap();
        assert_eq!(
            csv,
            "item_id,x,y,task_label\na,1,2,temporal\n\"b,c\",0.5,-1,summarisation\n"
        );
    }

    #[test]
    fn trace_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let layers = vec![
            RealMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 * 0.25),
            RealMatrix::from_fn(3, 4, |i, j| (i + j) as f64 - 1.5),
        ];
        let t = LayerTrace::new("student", layers).unwrap();
        t.write_dir(dir.path()).unwrap();
        assert!(dir.path().join("layer_001.tnsr").exists());
        let back = LayerTrace::read_dir(dir.path()).unwrap();
        assert_eq!(back.model_id, "student");
        // f32 storage; these values are exactly representable.
        assert_eq!(back, t);
    }
}
