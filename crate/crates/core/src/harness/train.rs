use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{cross_entropy, Adam, ToyModel};
use super::tokens::Example;
use super::HarnessError;
use crate::losses::{
    combined_loss, crd_loss, nst_mmd2, pkt_loss, CrdBatch, KernelSpec, LossTerm, LossValue,
    LossWeights, Projection, TermKind,
};
use crate::matrix::{MatrixRole, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KdMethod {
    Nst,
    Pkt,
    Crd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdSettings {
    pub methods: Vec<KdMethod>,
    pub pkt_kernel: KernelSpec,
    pub nst_sigma: f64,
    pub nst_normalize_columns: bool,
    /// `M` in the CRD critic; the training-set size when unset.
    pub crd_dataset_cardinality: Option<usize>,
    pub crd_projection_seed: u64,
}

impl Default for KdSettings {
    fn default() -> Self {
        KdSettings {
            methods: vec![KdMethod::Nst, KdMethod::Pkt],
            pkt_kernel: KernelSpec::CosineAffinity,
            nst_sigma: 1.0,
            nst_normalize_columns: true,
            crd_dataset_cardinality: None,
            crd_projection_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub kd: KdSettings,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.steps == 0 {
            return Err(HarnessError::InvalidConfig("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        self.weights.validate()?;
        Ok(())
    }

    /// Weights with every KD term that is not enabled forced to zero.
    pub fn effective_weights(&self, with_kd: bool) -> LossWeights {
        let mut w = self.weights;
        let on = |m: KdMethod| with_kd && self.kd.methods.contains(&m);
        if !on(KdMethod::Nst) {
            w.lambda_nst = 0.0;
        }
        if !on(KdMethod::Pkt) {
            w.lambda_pkt = 0.0;
        }
        if !on(KdMethod::Crd) {
            w.lambda_crd = 0.0;
        }
        w
    }
}

/// Per-step values of every active term (unweighted) and the weighted total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub total: Vec<f64>,
    pub language: Vec<f64>,
    pub nst: Vec<f64>,
    pub pkt: Vec<f64>,
    pub crd: Vec<f64>,
}

impl TrainLog {
    /// Mean of the last `window` totals (fewer if the run was shorter).
    pub fn smoothed_end(&self, window: usize) -> f64 {
        mean_window(&self.total[self.total.len().saturating_sub(window)..])
    }

    pub fn smoothed_start(&self, window: usize) -> f64 {
        mean_window(&self.total[..window.min(self.total.len())])
    }
}

fn mean_window(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

struct TeacherOut {
    logits: RealMatrix,
    hidden: RealMatrix,
    pooled: Vec<f64>,
}

fn mean_rows(m: &RealMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        out.iter_mut().zip(m.row(r)).for_each(|(o, v)| *o += v);
    }
    out.iter_mut().for_each(|o| *o /= m.rows() as f64);
    out
}

/// Trains `model` in place on `examples`. With a teacher, the enabled KD
/// terms compare teacher and student on the same token sequence. The
/// teacher is only read.
pub fn train(
    model: &mut ToyModel,
    examples: &[Example],
    config: &TrainConfig,
    teacher: Option<&ToyModel>,
) -> Result<TrainLog, HarnessError> {
    train_observed(model, examples, config, teacher, |_, _| {})
}

/// [`train`], calling `observe(step, model)` after every optimizer step.
pub fn train_observed(
    model: &mut ToyModel,
    examples: &[Example],
    config: &TrainConfig,
    teacher: Option<&ToyModel>,
    mut observe: impl FnMut(usize, &ToyModel),
) -> Result<TrainLog, HarnessError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(HarnessError::InvalidConfig("no training examples".into()));
    }
    let weights = config.effective_weights(teacher.is_some());
    weights
        .validate()
        .map_err(|e| HarnessError::InvalidConfig(format!("no active loss term: {e}")))?;
    let kd_on = |k: TermKind| weights.get(k) > 0.0;
    let use_crd = kd_on(TermKind::Crd);
    if use_crd && config.batch_size < 2 {
        return Err(HarnessError::InvalidConfig("CRD needs batch_size ≥ 2".into()));
    }
    let projection = match teacher {
        Some(t) if use_crd && t.arch.d_model != model.arch.d_model => {
            let (big, small) = (
                t.arch.d_model.max(model.arch.d_model),
                t.arch.d_model.min(model.arch.d_model),
            );
            Some(Projection::orthonormal(big, small, config.kd.crd_projection_seed)?)
        }
        _ => None,
    };
    let student_wider = teacher.is_some_and(|t| model.arch.d_model > t.arch.d_model);
    let m_card = config.kd.crd_dataset_cardinality.unwrap_or(examples.len());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(model.params().len(), config.lr);
    let mut cache: HashMap<usize, TeacherOut> = HashMap::new();
    let mut log = TrainLog::default();
    let b = config.batch_size;
    let scale = 1.0 / b as f64;

    for step in 0..config.steps {
        let batch: Vec<usize> = (0..b).map(|_| rng.gen_range(0..examples.len())).collect();
        let fwds: Vec<_> = batch
            .iter()
            .map(|&i| model.forward(&examples[i].tokens))
            .collect();
        if let Some(t) = teacher {
            for &i in &batch {
                cache.entry(i).or_insert_with(|| {
                    let f = t.forward(&examples[i].tokens);
                    let hidden = f.last_hidden().clone();
                    TeacherOut {
                        pooled: mean_rows(&hidden),
                        logits: f.logits,
                        hidden,
                    }
                });
            }
        }

        // Batch-level CRD over mean-pooled last hidden states.
        let crd = if use_crd {
            let s_rows: Vec<Vec<f64>> = fwds.iter().map(|f| mean_rows(f.last_hidden())).collect();
            let t_rows: Vec<Vec<f64>> = batch.iter().map(|i| cache[i].pooled.clone()).collect();
            let mut s = RealMatrix::from_rows(&s_rows)?;
            let mut t = RealMatrix::from_rows(&t_rows)?;
            if let Some(p) = &projection {
                if student_wider {
                    s = p.apply(&s)?;
                } else {
                    t = p.apply(&t)?;
                }
            }
            let positives = (0..b).map(|i| (i, i)).collect();
            let batch_crd = CrdBatch::new(s, t, positives, b - 1, m_card.max(b - 1))?;
            let mut v = crd_loss(&batch_crd)?;
            if let (Some(p), true) = (&projection, student_wider) {
                v.grad = p.backward(&v.grad)?;
            }
            Some(v)
        } else {
            None
        };

        let mut grad = vec![0.0; model.params().len()];
        let mut sums = [0.0f64; 5];
        for (k, (&i, f)) in batch.iter().zip(&fwds).enumerate() {
            let ex = &examples[i];
            let (lang, d_lang) = cross_entropy(&f.logits, &ex.targets);
            let mut terms = vec![LossTerm::new(
                TermKind::Language,
                LossValue {
                    value: lang,
                    grad: d_lang,
                },
            )];
            if teacher.is_some() {
                let t = &cache[&i];
                if kd_on(TermKind::Pkt) {
                    terms.push(LossTerm::new(
                        TermKind::Pkt,
                        pkt_loss(&t.logits, &f.logits, &config.kd.pkt_kernel)?,
                    ));
                }
                if kd_on(TermKind::Nst) {
                    terms.push(LossTerm::new(
                        TermKind::Nst,
                        nst_mmd2(
                            &t.hidden,
                            f.last_hidden(),
                            config.kd.nst_sigma,
                            config.kd.nst_normalize_columns,
                        )?,
                    ));
                }
            }
            if let Some(c) = &crd {
                // Per-example share: the batch value, and this row's gradient
                // undoing the 1/B averaging below.
                let row = RealMatrix::from_vec(1, c.grad.cols(), c.grad.row(k).to_vec())?;
                terms.push(LossTerm::new(
                    TermKind::Crd,
                    LossValue {
                        value: c.value,
                        grad: row.scale(b as f64),
                    },
                ));
            }
            let combined = combined_loss(&terms, &weights)?;
            sums[0] += combined.value;
            for (slot, kind) in [
                (1, TermKind::Language),
                (2, TermKind::Nst),
                (3, TermKind::Pkt),
                (4, TermKind::Crd),
            ] {
                sums[slot] += combined.component(kind).unwrap_or(0.0);
            }

            let d_logits = combined
                .grad(MatrixRole::Logits)
                .cloned()
                .unwrap_or_else(|| RealMatrix::zeros(f.logits.rows(), f.logits.cols()))
                .scale(scale);
            let l = f.last_hidden().rows();
            let mut d_hidden = combined.grad(MatrixRole::Hidden).map(|g| g.scale(scale));
            if let Some(rep) = combined.grad(MatrixRole::Representation) {
                let spread = RealMatrix::from_fn(l, rep.cols(), |_, j| rep.get(0, j) / l as f64)
                    .scale(scale);
                match &mut d_hidden {
                    Some(h) => h.axpy(1.0, &spread),
                    None => d_hidden = Some(spread),
                }
            }
            model.backward(f, &d_logits, d_hidden.as_ref(), &mut grad);
        }
        opt.step(model.params_mut(), &grad);
        let avg = |x: f64| x * scale;
        log.total.push(avg(sums[0]));
        log.language.push(avg(sums[1]));
        if kd_on(TermKind::Nst) {
            log.nst.push(avg(sums[2]));
        }
        if kd_on(TermKind::Pkt) {
            log.pkt.push(avg(sums[3]));
        }
        if kd_on(TermKind::Crd) {
            log.crd.push(avg(sums[4]));
        }
        if !log.total.last().is_some_and(|v| v.is_finite()) {
            return Err(HarnessError::Diverged {
                model_id: model.model_id.clone(),
                step: log.total.len(),
            });
        }
        observe(step + 1, model);
    }
    Ok(log)
}
