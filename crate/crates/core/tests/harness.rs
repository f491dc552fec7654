use std::time::{Duration, Instant};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempdistill::algebra::oracle_closure;
use tempdistill::harness::corpus::clause_histogram;
use tempdistill::harness::experiment::untrained_teacher;
use tempdistill::harness::tokens::{TaskKind, TEMPORAL_PROMPT, TIMELINE_PROMPT};
use tempdistill::harness::*;
use tempdistill::losses::LossWeights;

/// Small enough for a debug build. The gate is switched off because a
/// few hundred teacher steps are not meant to converge.
fn tiny() -> MatrixConfig {
    let mut c = MatrixConfig::default();
    c.corpus.n_docs = 120;
    c.corpus.events_per_doc = 4;
    c.corpus.vocab_size = 10;
    c.n_test_docs = 12;
    c.n_probe_docs = 4;
    c.teacher = ModelShape { d_model: 8, d_mlp: 16, n_layers: 2, n_heads: 2 };
    c.student = ModelShape { d_model: 4, d_mlp: 8, n_layers: 1, n_heads: 1 };
    c.teacher_steps = 20;
    c.steps = 20;
    c.batch_size = 4;
    c.gate_margin = -1.0;
    c
}

fn naive_tau(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut conc, mut disc) = (0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (a[i] as i64 - a[j] as i64).signum() * (b[i] as i64 - b[j] as i64).signum();
            if s > 0 {
                conc += 1;
            } else if s < 0 {
                disc += 1;
            }
        }
    }
    (conc - disc) as f64 / (n * (n - 1) / 2) as f64
}

#[test]
fn corpus_is_deterministic_and_consistent() {
    let spec = CorpusSpec { n_docs: 50, events_per_doc: 6, vocab_size: 12, mix: RelationMix::default() };
    let a = gen_corpus(3, &spec);
    assert_eq!(a, gen_corpus(3, &spec));
    assert_ne!(a, gen_corpus(4, &spec));
    for d in &a {
        assert!(oracle_closure(&d.gold).is_ok(), "{} gold graph inconsistent", d.doc_id);
        for e in &d.events {
            assert!(e.start < e.end);
        }
        for w in d.story_words() {
            assert!(w.parse::<f64>().is_err(), "story leaks a number: {w}");
        }
    }
}

#[test]
fn clause_histogram_matches_the_mix() {
    let mix = RelationMix::default();
    let spec = CorpusSpec { n_docs: 1000, events_per_doc: 5, vocab_size: 24, mix };
    let h = clause_histogram(&gen_corpus(11, &spec));
    let total: usize = h.iter().sum();
    for (k, p) in mix.proportions().iter().enumerate() {
        let got = h[k] as f64 / total as f64;
        assert!((got - p).abs() <= 0.02, "relation {k}: {got:.4} vs target {p:.4}");
    }
}

#[test]
fn untrained_model_is_at_chance_on_balanced_labels() {
    let mut c = MatrixConfig::default();
    c.corpus.n_docs = 400;
    c.n_test_docs = 400;
    let data = HarnessData::new(&c);
    let mut per_label: [Vec<_>; 5] = Default::default();
    for ex in &data.qa_test {
        per_label[ex.label.unwrap().index()].push(ex.clone());
    }
    let n = per_label.iter().map(Vec::len).min().unwrap().min(60);
    assert!(n >= 30, "too few examples of the rarest label");
    let balanced: Vec<_> = per_label.iter().flat_map(|v| v[..n].iter().cloned()).collect();
    let accs: Vec<f64> = (0..5)
        .map(|seed| {
            let t = untrained_teacher(&data, &c, seed);
            eval_relation_accuracy(&t, &data.vocab, &balanced)
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.2).abs() <= 0.05, "untrained accuracy {mean:.3} ({accs:?})");
}

#[test]
fn teacher_is_frozen_during_distillation() {
    let c = tiny();
    let data = HarnessData::new(&c);
    let teacher = untrained_teacher(&data, &c, 0);
    let before: Vec<u64> = teacher.params().iter().map(|p| p.to_bits()).collect();
    let (_, log) = train_student(&data, &c, 0, Some(&teacher), StudentTask::OrderingKd, "s").unwrap();
    assert!(!log.nst.is_empty() && !log.pkt.is_empty());
    let after: Vec<u64> = teacher.params().iter().map(|p| p.to_bits()).collect();
    assert_eq!(before, after);
}

#[test]
fn language_only_weights_equal_a_run_without_kd() {
    let mut c = tiny();
    let data = HarnessData::new(&c);
    let teacher = untrained_teacher(&data, &c, 0);
    c.weights = LossWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
    let (with_teacher, log_a) =
        train_student(&data, &c, 5, Some(&teacher), StudentTask::OrderingKd, "s").unwrap();
    let (without, log_b) = train_student(&data, &c, 5, None, StudentTask::Ordering, "s").unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&log_a.total), bits(&log_b.total));
    assert_eq!(bits(with_teacher.params()), bits(without.params()));
}

/// The teacher is re-synced to the student before every step while the
/// language term moves the student, so the KD terms are checked at every
/// point of a real trajectory. Without re-syncing, Adam's normalized steps
/// amplify the ~1e-18 round-off gradient at the identity minimum into
/// lr-sized moves after a couple of steps.
#[test]
fn kd_terms_vanish_when_teacher_is_the_student() {
    let c = tiny();
    let data = HarnessData::new(&c);
    let arch = data.architecture(c.student);
    for (weights, pick) in [
        (LossWeights::new(1.0, 1.0, 0.0, 0.0).unwrap(), 0),
        (LossWeights::new(1.0, 0.0, 1.0, 0.0).unwrap(), 1),
    ] {
        let mut s = ToyModel::init("s", arch, &mut ChaCha8Rng::seed_from_u64(9));
        let start = s.params().to_vec();
        for step in 0..15u64 {
            let teacher = s.clone();
            let tc = TrainConfig { seed: step, steps: 1, batch_size: 4, lr: 1e-2, weights, kd: KdSettings::default() };
            let log = train(&mut s, &data.ordering_train, &tc, Some(&teacher)).unwrap();
            let v = if pick == 0 { log.nst[0] } else { log.pkt[0] };
            assert!(v.abs() < 1e-8, "term {pick} at step {step} = {v:e}");
        }
        assert_ne!(s.params(), &start[..], "the student should have moved");
    }
}

#[test]
fn student_loss_decreases() {
    let mut c = tiny();
    c.student = ModelShape { d_model: 16, d_mlp: 32, n_layers: 1, n_heads: 2 };
    c.steps = 300;
    c.lr = 3e-3;
    let data = HarnessData::new(&c);
    let (_, log) = train_student(&data, &c, 0, None, StudentTask::Ordering, "s").unwrap();
    assert!(log.smoothed_end(50) < log.smoothed_start(50));
}

#[test]
fn config_mismatches_are_rejected() {
    let c = tiny();
    let data = HarnessData::new(&c);
    let t = untrained_teacher(&data, &c, 0);
    let err = |r: Result<_, HarnessError>| matches!(r, Err(HarnessError::ConfigMismatch(_)));
    assert!(err(train_student(&data, &c, 0, None, StudentTask::OrderingKd, "s")));
    assert!(err(train_student(&data, &c, 0, Some(&t), StudentTask::Ordering, "s")));
    let mut no_kd = c.clone();
    no_kd.kd.methods.clear();
    assert!(err(train_student(&data, &no_kd, 0, Some(&t), StudentTask::OrderingKd, "s")));

    let mut other = c.clone();
    other.corpus.vocab_size = 12;
    let other_data = HarnessData::new(&other);
    let foreign = untrained_teacher(&other_data, &other, 0);
    assert!(err(train_student(&data, &c, 0, Some(&foreign), StudentTask::OrderingKd, "s")));
}

#[test]
fn joint_training_uses_the_task_prompts() {
    let data = HarnessData::new(&tiny());
    let text = |ex: &tempdistill::harness::tokens::Example| {
        ex.tokens.iter().map(|&t| data.vocab.word(t)).collect::<Vec<_>>().join(" ")
    };
    let prefix = |p: &str| {
        tempdistill::timeml::tokenize(p).iter().map(|t| t.text.clone()).collect::<Vec<_>>().join(" ")
    };
    let (tl, tr) = (prefix(TIMELINE_PROMPT), prefix(TEMPORAL_PROMPT));
    assert!(tl.starts_with("This is a timeline summarization task"));
    let mut seen = [false; 2];
    for ex in &data.joint_train {
        let s = text(ex);
        match ex.kind {
            TaskKind::Ordering => {
                assert!(s.starts_with(&format!("<bos> {tl} ")));
                seen[0] = true;
            }
            TaskKind::Temporal => {
                assert!(s.starts_with(&format!("<bos> {tr} ")));
                seen[1] = true;
            }
        }
    }
    assert_eq!(seen, [true, true]);
    assert!(data.ordering_train.iter().all(|ex| !text(ex).contains("This")));
}

#[test]
fn matrix_is_reproducible_and_echoes_conditions() {
    let mut c = tiny();
    c.seeds = vec![0, 1];
    let a = run_experiment_matrix(&c).unwrap();
    let b = run_experiment_matrix(&c).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let keys: Vec<(Condition, u64)> = a.runs.iter().map(|r| (r.condition, r.seed)).collect();
    let expected: Vec<(Condition, u64)> = Condition::ALL
        .iter()
        .flat_map(|&cond| [0, 1].map(|s| (cond, s)))
        .collect();
    assert_eq!(keys, expected);
    assert_eq!(a.teachers.len(), 2);
    assert_eq!(a.comparisons.len(), 2);
    for r in &a.runs {
        assert!((r.cka_sweep[0] - 1.0).abs() < 1e-10);
        assert_eq!(r.cka_sweep.len(), c.student.n_layers + 1);
    }
    let csv = a.results_csv();
    assert_eq!(csv.lines().next().unwrap(), "condition,seed,accuracy,kendall_tau,final_loss");
    assert_eq!(csv.lines().count(), 1 + 12);
}

#[test]
fn gate_failure_aborts_the_matrix() {
    let mut c = tiny();
    c.gate_margin = 0.99;
    match run_experiment_matrix(&c) {
        Err(HarnessError::DidNotConverge { accuracy, baseline, .. }) => assert!(accuracy < baseline + 0.99),
        other => panic!("expected DidNotConverge, got {other:?}"),
    }
}

#[test]
fn smoke_run_fits_the_budget() {
    let mut c = MatrixConfig::default();
    c.conditions = vec![Condition::TlOnly, Condition::KdTemporal];
    c.seeds = vec![0];
    c.steps = 200;
    c.teacher_steps = 200;
    c.gate_margin = -1.0;
    let t0 = Instant::now();
    let report = run_experiment_matrix(&c).unwrap();
    let elapsed = t0.elapsed();
    assert_eq!(report.runs.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    report.write_dir(dir.path()).unwrap();
    for f in ["results.csv", "summary.txt", "cka_sweeps.csv", "report.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    assert!(elapsed < Duration::from_secs(300), "smoke run took {elapsed:?}");
}

proptest! {
    #[test]
    fn kendall_tau_matches_pair_count(perm in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle(),
                                      other in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle()) {
        let fast = kendall_tau(&perm, &other);
        prop_assert!((fast - naive_tau(&perm, &other)).abs() < 1e-12);
    }
}

#[test]
fn kendall_tau_extremes() {
    let id = [0, 1, 2, 3];
    assert_eq!(kendall_tau(&id, &id), 1.0);
    assert_eq!(kendall_tau(&id, &[3, 2, 1, 0]), -1.0);
    assert!((kendall_tau(&[0, 1, 2, 3, 4], &[1, 0, 2, 4, 3]) - naive_tau(&[0, 1, 2, 3, 4], &[1, 0, 2, 4, 3])).abs() < 1e-12);
}
