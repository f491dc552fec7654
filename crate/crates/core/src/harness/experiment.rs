//! The condition × seed matrix: teachers, students, evaluation, traces.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{gen_corpus, CorpusSpec, RelationMix, SyntheticNarrative};
use super::eval::{
    eval_ordering, eval_relation_accuracy, majority_baseline, sign_test, OrderingEval, SignTest,
};
use super::model::{Architecture, ToyModel};
use super::tokens::{
    max_sequence_len, ordering_example, ordering_prompt, qa_examples, Example, Vocab,
};
use super::train::{train, KdSettings, TrainConfig, TrainLog};
use super::HarnessError;
use crate::losses::LossWeights;
use crate::matrix::RealMatrix;
use crate::repr::{
    layer_sweep, pca2d, sentence_embedding, write_projection_csv, LayerTrace, ProbeItem,
    ProbeSet, TaskLabel,
};
use crate::tensor_io::write_atomic;

// Seeds for the different random streams of one experiment seed.
const TEACHER_SALT: u64 = 0x7465_6163_6865_7231;
const TIMELINE_SALT: u64 = 0x7469_6d65_6c69_6e65;
const ORIGIN_SALT: u64 = 0x6f72_6967_696e_3030;
const STUDENT_SALT: u64 = 0x7374_7564_656e_7430;
const TEST_CORPUS_SALT: u64 = 0x7465_7374_5f64_6f63;
const JOINT_SALT: u64 = 0x6a6f_696e_745f_6d69;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Ordering student distilled from the temporal-QA teacher.
    KdTemporal,
    /// Ordering student distilled from a teacher trained on ordering.
    KdTimeline,
    /// Ordering student distilled from an untrained teacher.
    KdOrigin,
    /// Ordering only, no distillation.
    TlOnly,
    /// Temporal QA only, evaluated on ordering.
    TempOnly,
    /// Prompted mix of ordering and temporal QA.
    Joint,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::KdTemporal,
        Condition::KdTimeline,
        Condition::KdOrigin,
        Condition::TlOnly,
        Condition::TempOnly,
        Condition::Joint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::KdTemporal => "kd_temporal",
            Condition::KdTimeline => "kd_timeline",
            Condition::KdOrigin => "kd_origin",
            Condition::TlOnly => "tl_only",
            Condition::TempOnly => "temp_only",
            Condition::Joint => "joint",
        }
    }

    pub fn task(self) -> StudentTask {
        match self {
            Condition::KdTemporal | Condition::KdTimeline | Condition::KdOrigin => {
                StudentTask::OrderingKd
            }
            Condition::TlOnly => StudentTask::Ordering,
            Condition::TempOnly => StudentTask::TemporalOnly,
            Condition::Joint => StudentTask::Joint,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudentTask {
    Ordering,
    OrderingKd,
    Joint,
    TemporalOnly,
}

impl StudentTask {
    /// Whether the model is trained and probed with task-prefix prompts.
    pub fn prompted(self) -> bool {
        self == StudentTask::Joint
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub d_model: usize,
    pub d_mlp: usize,
    pub n_layers: usize,
    #[serde(default = "one_head")]
    pub n_heads: usize,
}

fn one_head() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixConfig {
    pub corpus_seed: u64,
    /// Training narratives; `n_docs` is the training-set size.
    pub corpus: CorpusSpec,
    pub n_test_docs: usize,
    /// Test narratives used as representation probes.
    pub n_probe_docs: usize,
    pub teacher: ModelShape,
    pub student: ModelShape,
    pub teacher_steps: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub kd: KdSettings,
    /// Teacher relation accuracy must beat the majority baseline by this.
    pub gate_margin: f64,
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            corpus_seed: 0,
            corpus: CorpusSpec {
                n_docs: 10000,
                events_per_doc: 5,
                vocab_size: 24,
                mix: RelationMix::default(),
            },
            n_test_docs: 200,
            n_probe_docs: 16,
            teacher: ModelShape {
                d_model: 32,
                d_mlp: 64,
                n_layers: 3,
                n_heads: 4,
            },
            student: ModelShape {
                d_model: 32,
                d_mlp: 64,
                n_layers: 2,
                n_heads: 2,
            },
            teacher_steps: 2000,
            steps: 6000,
            batch_size: 8,
            lr: 3e-3,
            weights: LossWeights::default(),
            kd: KdSettings::default(),
            gate_margin: 0.20,
            conditions: Condition::ALL.to_vec(),
            seeds: (0..5).collect(),
        }
    }
}

impl MatrixConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        let c = &self.corpus;
        if !(super::corpus::MIN_EVENTS..=super::corpus::MAX_EVENTS).contains(&c.events_per_doc) {
            return bad(format!("events_per_doc {} outside 2..=7", c.events_per_doc));
        }
        if c.vocab_size < c.events_per_doc {
            return bad("vocab_size must be at least events_per_doc".into());
        }
        if c.n_docs == 0 || self.n_test_docs == 0 {
            return bad("need at least one training and one test document".into());
        }
        if self.n_probe_docs == 0 || self.n_probe_docs > self.n_test_docs {
            return bad("n_probe_docs must be in 1..=n_test_docs".into());
        }
        for (name, s) in [("teacher", self.teacher), ("student", self.student)] {
            if s.d_model == 0 || s.d_mlp == 0 || s.n_layers == 0 || s.n_heads == 0 {
                return bad(format!("{name} shape has a zero dimension"));
            }
            if s.d_model % s.n_heads != 0 {
                return bad(format!("{name} n_heads must divide d_model"));
            }
        }
        if self.teacher_steps == 0 {
            return bad("teacher_steps must be at least 1".into());
        }
        if self.conditions.is_empty() || self.seeds.is_empty() {
            return bad("empty condition or seed list".into());
        }
        let mut seen = self.conditions.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.conditions.len() {
            return bad("duplicate condition".into());
        }
        self.student_config(0).validate()
    }

    fn student_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            weights: self.weights,
            kd: self.kd.clone(),
        }
    }

    fn teacher_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed: seed ^ TEACHER_SALT,
            steps: self.teacher_steps,
            weights: LossWeights::new(1.0, 0.0, 0.0, 0.0).expect("language-only weights are valid"),
            ..self.student_config(seed)
        }
    }
}

/// Corpora and every tokenized example set the matrix needs. Built once
/// and shared by all runs.
#[derive(Debug, Clone)]
pub struct HarnessData {
    pub vocab: Vocab,
    pub max_len: usize,
    pub train_docs: Vec<SyntheticNarrative>,
    pub test_docs: Vec<SyntheticNarrative>,
    pub qa_train: Vec<Example>,
    pub qa_test: Vec<Example>,
    pub ordering_train: Vec<Example>,
    /// Prompted ordering and QA examples, one of each per story.
    pub joint_train: Vec<Example>,
}

impl HarnessData {
    pub fn new(config: &MatrixConfig) -> Self {
        let vocab = Vocab::new(config.corpus.vocab_size);
        let train_docs = gen_corpus(config.corpus_seed, &config.corpus);
        let test_spec = CorpusSpec {
            n_docs: config.n_test_docs,
            ..config.corpus
        };
        let test_docs = gen_corpus(config.corpus_seed ^ TEST_CORPUS_SALT, &test_spec);
        let qa = |docs: &[SyntheticNarrative], prompted| -> Vec<Example> {
            docs.iter()
                .flat_map(|d| qa_examples(&vocab, d, prompted))
                .collect()
        };
        let qa_train = qa(&train_docs, false);
        let qa_test = qa(&test_docs, false);
        let ordering_train = train_docs
            .iter()
            .map(|d| ordering_example(&vocab, d, false))
            .collect();
        // One prompted ordering example and one prompted question per story,
        // so both tasks get half of the joint student's batches.
        let mut rng = ChaCha8Rng::seed_from_u64(config.corpus_seed ^ JOINT_SALT);
        let mut joint_train = Vec::with_capacity(2 * train_docs.len());
        for d in &train_docs {
            joint_train.push(ordering_example(&vocab, d, true));
            let qa = qa_examples(&vocab, d, true);
            joint_train.push(qa[rng.gen_range(0..qa.len())].clone());
        }
        HarnessData {
            max_len: max_sequence_len(config.corpus.events_per_doc),
            vocab,
            train_docs,
            test_docs,
            qa_train,
            qa_test,
            ordering_train,
            joint_train,
        }
    }

    pub fn architecture(&self, shape: ModelShape) -> Architecture {
        Architecture {
            vocab_size: self.vocab.len(),
            max_len: self.max_len,
            d_model: shape.d_model,
            d_mlp: shape.d_mlp,
            n_layers: shape.n_layers,
            n_heads: shape.n_heads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherReport {
    pub model_id: String,
    pub seed: u64,
    pub relation_accuracy: f64,
    pub majority_baseline: f64,
    pub final_loss: f64,
}

fn smoothed_final(log: &TrainLog) -> f64 {
    log.smoothed_end(50)
}

/// Trains the temporal-QA teacher for `seed` and applies the gate.
pub fn train_teacher(
    data: &HarnessData,
    config: &MatrixConfig,
    seed: u64,
) -> Result<(ToyModel, TeacherReport), HarnessError> {
    let arch = data.architecture(config.teacher);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TEACHER_SALT);
    let mut model = ToyModel::init(format!("teacher_temporal_seed{seed}"), arch, &mut rng);
    let log = train(&mut model, &data.qa_train, &config.teacher_config(seed), None)?;
    let accuracy = eval_relation_accuracy(&model, &data.vocab, &data.qa_test);
    let baseline = majority_baseline(&data.qa_test);
    log::info!(
        "{}: relation accuracy {accuracy:.3}, majority baseline {baseline:.3}",
        model.model_id
    );
    if accuracy < baseline + config.gate_margin {
        return Err(HarnessError::DidNotConverge {
            model_id: model.model_id,
            accuracy,
            baseline,
            margin: config.gate_margin,
        });
    }
    let report = TeacherReport {
        model_id: model.model_id.clone(),
        seed,
        relation_accuracy: accuracy,
        majority_baseline: baseline,
        final_loss: smoothed_final(&log),
    };
    Ok((model, report))
}

/// A teacher-sized model trained on the ordering task.
pub fn train_timeline_teacher(
    data: &HarnessData,
    config: &MatrixConfig,
    seed: u64,
) -> Result<ToyModel, HarnessError> {
    let arch = data.architecture(config.teacher);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TIMELINE_SALT);
    let mut model = ToyModel::init(format!("teacher_timeline_seed{seed}"), arch, &mut rng);
    let mut tc = config.teacher_config(seed);
    tc.seed ^= TIMELINE_SALT;
    train(&mut model, &data.ordering_train, &tc, None)?;
    Ok(model)
}

/// A teacher-sized model left at its initialization.
pub fn untrained_teacher(data: &HarnessData, config: &MatrixConfig, seed: u64) -> ToyModel {
    let arch = data.architecture(config.teacher);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ORIGIN_SALT);
    ToyModel::init(format!("teacher_origin_seed{seed}"), arch, &mut rng)
}

/// Trains a student for `seed`. The initialization and batch order depend
/// only on the seed, so conditions sharing a seed are paired.
pub fn train_student(
    data: &HarnessData,
    config: &MatrixConfig,
    seed: u64,
    teacher: Option<&ToyModel>,
    task: StudentTask,
    model_id: &str,
) -> Result<(ToyModel, TrainLog), HarnessError> {
    let arch = data.architecture(config.student);
    match (task, teacher) {
        (StudentTask::OrderingKd, None) => {
            return Err(HarnessError::ConfigMismatch(
                "distillation enabled without a teacher".into(),
            ))
        }
        (StudentTask::OrderingKd, Some(_)) if config.kd.methods.is_empty() => {
            return Err(HarnessError::ConfigMismatch(
                "distillation task with no KD method enabled".into(),
            ))
        }
        (StudentTask::OrderingKd, Some(t)) => {
            if t.arch.vocab_size != arch.vocab_size || t.arch.max_len != arch.max_len {
                return Err(HarnessError::ConfigMismatch(
                    "teacher and student must share the tokenizer and context length".into(),
                ));
            }
        }
        (_, Some(_)) => {
            return Err(HarnessError::ConfigMismatch(format!(
                "teacher given for {task:?}, which does not distill"
            )))
        }
        (_, None) => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ STUDENT_SALT);
    let mut model = ToyModel::init(model_id, arch, &mut rng);
    let examples = match task {
        StudentTask::Ordering | StudentTask::OrderingKd => &data.ordering_train,
        StudentTask::Joint => &data.joint_train,
        StudentTask::TemporalOnly => &data.qa_train,
    };
    let log = train(&mut model, examples, &config.student_config(seed), teacher)?;
    Ok((model, log))
}

/// Probe inputs: per probe document, one relation question and one
/// ordering prompt, tokenized in the format `prompted` selects.
pub fn probe_inputs(
    data: &HarnessData,
    n_docs: usize,
    prompted: bool,
) -> (ProbeSet, Vec<Vec<usize>>) {
    let mut items = Vec::new();
    let mut seqs = Vec::new();
    for doc in data.test_docs.iter().take(n_docs) {
        let qa = qa_examples(&data.vocab, doc, prompted)
            .into_iter()
            .next()
            .expect("every clause pair is entailed");
        let ord = ordering_prompt(&data.vocab, doc, prompted);
        for (seq, label, suffix) in [
            (qa.prompt().to_vec(), TaskLabel::Temporal, "qa"),
            (ord, TaskLabel::Summarisation, "ord"),
        ] {
            let text: Vec<&str> = seq.iter().map(|&t| data.vocab.word(t)).collect();
            items.push(ProbeItem {
                item_id: format!("{}_{suffix}", doc.doc_id),
                text: text.join(" "),
                task_label: label,
            });
            seqs.push(seq);
        }
    }
    (ProbeSet::new(items).expect("both task labels present"), seqs)
}

/// Per-layer sentence embeddings of `model` over `seqs`.
pub fn layer_trace(model: &ToyModel, seqs: &[Vec<usize>]) -> Result<LayerTrace, HarnessError> {
    let n_layers = model.arch.n_layers + 1;
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(seqs.len()); n_layers];
    for seq in seqs {
        let f = model.forward(seq);
        for (k, s) in f.states.iter().enumerate() {
            rows[k].push(sentence_embedding(s)?);
        }
    }
    let layers = rows
        .iter()
        .map(|r| RealMatrix::from_rows(r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LayerTrace::new(model.model_id.clone(), layers)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub condition: Condition,
    pub seed: u64,
    pub ordering: OrderingEval,
    /// Smoothed (window 50) total training loss at the end of training.
    pub final_loss: f64,
    pub initial_loss: f64,
    /// Linear CKA of each layer's probe embeddings against layer 0.
    pub cka_sweep: Vec<f64>,
    #[serde(skip)]
    pub trace: Option<LayerTrace>,
    #[serde(skip)]
    pub probes: Option<ProbeSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub treatment: Condition,
    pub control: Condition,
    pub mean_treatment: f64,
    pub mean_control: f64,
    pub sign_test: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: MatrixConfig,
    pub teachers: Vec<TeacherReport>,
    pub runs: Vec<RunResult>,
    pub comparisons: Vec<Comparison>,
}

fn run_one(
    data: &HarnessData,
    config: &MatrixConfig,
    condition: Condition,
    seed: u64,
    teacher: Option<&ToyModel>,
) -> Result<RunResult, HarnessError> {
    let task = condition.task();
    let id = format!("{condition}_seed{seed}");
    let (model, log) = train_student(data, config, seed, teacher, task, &id)?;
    let ordering = eval_ordering(&model, &data.vocab, &data.test_docs, task.prompted());
    let (probes, seqs) = probe_inputs(data, config.n_probe_docs, task.prompted());
    let trace = layer_trace(&model, &seqs)?;
    let cka_sweep = layer_sweep(&trace)?;
    log::info!(
        "{id}: exact {:.3}, tau {:.3}, malformed {}, loss {:.4}",
        ordering.exact_accuracy,
        ordering.mean_tau,
        ordering.malformed,
        smoothed_final(&log)
    );
    Ok(RunResult {
        condition,
        seed,
        ordering,
        final_loss: smoothed_final(&log),
        initial_loss: log.smoothed_start(50),
        cka_sweep,
        trace: Some(trace),
        probes: Some(probes),
    })
}

struct SeedTeachers {
    temporal: ToyModel,
    timeline: Option<ToyModel>,
    origin: ToyModel,
    report: TeacherReport,
}

/// Trains and evaluates every condition for every seed. Teachers are
/// trained first (in parallel over seeds), then all student runs in
/// parallel; results are ordered by (condition, seed) as configured.
/// Any teacher failing the gate aborts the whole matrix.
pub fn run_experiment_matrix(config: &MatrixConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let data = HarnessData::new(config);
    let need_timeline = config.conditions.contains(&Condition::KdTimeline);
    let teachers: Vec<SeedTeachers> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let (temporal, report) = train_teacher(&data, config, seed)?;
            let timeline = if need_timeline {
                Some(train_timeline_teacher(&data, config, seed)?)
            } else {
                None
            };
            Ok(SeedTeachers {
                temporal,
                timeline,
                origin: untrained_teacher(&data, config, seed),
                report,
            })
        })
        .collect::<Result<_, HarnessError>>()?;

    let jobs: Vec<(Condition, usize)> = config
        .conditions
        .iter()
        .flat_map(|&c| (0..config.seeds.len()).map(move |s| (c, s)))
        .collect();
    let runs: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(condition, s)| {
            let t = &teachers[s];
            let teacher = match condition {
                Condition::KdTemporal => Some(&t.temporal),
                Condition::KdTimeline => t.timeline.as_ref(),
                Condition::KdOrigin => Some(&t.origin),
                _ => None,
            };
            run_one(&data, config, condition, config.seeds[s], teacher)
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut comparisons = Vec::new();
    for control in [Condition::TlOnly, Condition::KdOrigin] {
        if let Some(c) = compare(&runs, Condition::KdTemporal, control) {
            comparisons.push(c);
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        teachers: teachers.into_iter().map(|t| t.report).collect(),
        runs,
        comparisons,
    })
}

fn compare(runs: &[RunResult], treatment: Condition, control: Condition) -> Option<Comparison> {
    let taus = |c: Condition| -> Vec<f64> {
        runs.iter()
            .filter(|r| r.condition == c)
            .map(|r| r.ordering.mean_tau)
            .collect()
    };
    let (a, b) = (taus(treatment), taus(control));
    if a.is_empty() || a.len() != b.len() {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Some(Comparison {
        treatment,
        control,
        mean_treatment: mean(&a),
        mean_control: mean(&b),
        sign_test: sign_test(&a, &b),
    })
}

impl ExperimentReport {
    pub fn runs_for(&self, c: Condition) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.condition == c)
    }

    pub fn mean_tau(&self, c: Condition) -> Option<f64> {
        let v: Vec<f64> = self.runs_for(c).map(|r| r.ordering.mean_tau).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `condition,seed,accuracy,kendall_tau,final_loss`
    pub fn results_csv(&self) -> String {
        let mut out = String::from("condition,seed,accuracy,kendall_tau,final_loss\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.condition, r.seed, r.ordering.exact_accuracy, r.ordering.mean_tau, r.final_loss
            ));
        }
        out
    }

    /// `condition,seed,layer,cka`
    pub fn cka_csv(&self) -> String {
        let mut out = String::from("condition,seed,layer,cka\n");
        for r in &self.runs {
            for (k, v) in r.cka_sweep.iter().enumerate() {
                out.push_str(&format!("{},{},{k},{v}\n", r.condition, r.seed));
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str("teachers\n");
        for t in &self.teachers {
            out.push_str(&format!(
                "  {:<28} relation acc {:.3}  (majority {:.3})\n",
                t.model_id, t.relation_accuracy, t.majority_baseline
            ));
        }
        out.push_str(&format!(
            "\n{:<12} {:>6} {:>10} {:>10} {:>10} {:>10}\n",
            "condition", "seeds", "exact", "tau", "malformed", "loss"
        ));
        for &c in &self.config.conditions {
            let rs: Vec<&RunResult> = self.runs_for(c).collect();
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&RunResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            out.push_str(&format!(
                "{:<12} {:>6} {:>10.4} {:>10.4} {:>10.1} {:>10.4}\n",
                c.name(),
                rs.len(),
                mean(&|r| r.ordering.exact_accuracy),
                mean(&|r| r.ordering.mean_tau),
                mean(&|r| r.ordering.malformed as f64),
                mean(&|r| r.final_loss),
            ));
        }
        if !self.comparisons.is_empty() {
            out.push('\n');
        }
        for c in &self.comparisons {
            let s = &c.sign_test;
            out.push_str(&format!(
                "{} vs {}: mean tau {:.4} vs {:.4}, wins {} losses {} ties {}, one-sided sign test p = {:.4}\n",
                c.treatment, c.control, c.mean_treatment, c.mean_control, s.wins, s.losses, s.ties, s.p_value
            ));
        }
        out
    }

    /// Writes `results.csv`, `summary.txt`, `report.json`, `cka_sweeps.csv`
    /// and, per run, `traces/{condition}_seed{seed}/` with the layer
    /// tensors and a 2-D PCA projection of the last layer.
    pub fn write_dir(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("results.csv"), self.results_csv().as_bytes())?;
        write_atomic(&dir.join("summary.txt"), self.summary().as_bytes())?;
        write_atomic(&dir.join("cka_sweeps.csv"), self.cka_csv().as_bytes())?;
        let json = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        write_atomic(&dir.join("report.json"), &json)?;
        for r in &self.runs {
            let (Some(trace), Some(probes)) = (&r.trace, &r.probes) else {
                continue;
            };
            let run_dir = dir.join("traces").join(&trace.model_id);
            trace.write_dir(&run_dir)?;
            let last = trace.layers().last().expect("non-empty trace");
            if let Ok(p) = pca2d(last) {
                write_projection_csv(&run_dir.join("projection.csv"), probes, &p.coords)?;
            }
        }
        Ok(())
    }
}
