use serde::{Deserialize, Serialize};

use super::corpus::SyntheticNarrative;
use super::model::ToyModel;
use super::tokens::{ordering_prompt, Example, Vocab, EOS};

/// Kendall tau between two rankings of the same items: `a[k]` and `b[k]`
/// are the positions item `k` gets in each. Counts discordant pairs as
/// inversions with a merge sort.
pub fn kendall_tau(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "rankings must cover the same items");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut by_a: Vec<usize> = (0..n).collect();
    by_a.sort_by_key(|&k| a[k]);
    let mut seq: Vec<usize> = by_a.iter().map(|&k| b[k]).collect();
    let discordant = count_inversions(&mut seq);
    let pairs = (n * (n - 1) / 2) as f64;
    1.0 - 2.0 * discordant as f64 / pairs
}

fn count_inversions(v: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            merged.push(v[i]);
            i += 1;
        } else {
            merged.push(v[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    inv
}

/// Tau between a generated sequence of event indices and the gold order,
/// or `None` if the output is not a permutation of the events.
pub fn order_tau(generated: &[usize], gold: &[usize]) -> Option<f64> {
    let n = gold.len();
    if generated.len() != n {
        return None;
    }
    let mut pos_gen = vec![usize::MAX; n];
    for (p, &e) in generated.iter().enumerate() {
        if e >= n || pos_gen[e] != usize::MAX {
            return None;
        }
        pos_gen[e] = p;
    }
    let mut pos_gold = vec![0; n];
    for (p, &e) in gold.iter().enumerate() {
        pos_gold[e] = p;
    }
    Some(kendall_tau(&pos_gold, &pos_gen))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingEval {
    pub n_docs: usize,
    pub exact_accuracy: f64,
    pub mean_tau: f64,
    /// Outputs that were not a permutation of the story's triggers; each
    /// scored as tau = -1.
    pub malformed: usize,
}

/// Greedy decoding of at most `n_events + 1` tokens after the prompt.
/// Returns the generated tokens before `<eos>`, or `None` if no `<eos>`
/// came out in time.
pub fn generate_order(
    model: &ToyModel,
    vocab: &Vocab,
    doc: &SyntheticNarrative,
    prompted: bool,
) -> Option<Vec<usize>> {
    let mut tokens = ordering_prompt(vocab, doc, prompted);
    let eos = vocab.id(EOS);
    let mut out = Vec::new();
    for _ in 0..=doc.events.len() {
        if tokens.len() >= model.arch.max_len {
            break;
        }
        let f = model.forward(&tokens);
        let next = argmax(f.logits.row(f.logits.rows() - 1));
        if next == eos {
            return Some(out);
        }
        out.push(next);
        tokens.push(next);
    }
    None
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn eval_ordering(
    model: &ToyModel,
    vocab: &Vocab,
    docs: &[SyntheticNarrative],
    prompted: bool,
) -> OrderingEval {
    let mut exact = 0;
    let mut tau_sum = 0.0;
    let mut malformed = 0;
    for doc in docs {
        let events: Option<Vec<usize>> =
            generate_order(model, vocab, doc, prompted).and_then(|generated| {
                generated
                    .iter()
                    .map(|&tok| doc.events.iter().position(|e| vocab.word(tok) == e.trigger))
                    .collect()
            });
        let gold = doc.chronological_order();
        match events.and_then(|ev| order_tau(&ev, &gold).map(|t| (ev, t))) {
            Some((ev, tau)) => {
                tau_sum += tau;
                if ev == gold {
                    exact += 1;
                }
            }
            None => {
                malformed += 1;
                tau_sum -= 1.0;
            }
        }
    }
    let n = docs.len().max(1) as f64;
    OrderingEval {
        n_docs: docs.len(),
        exact_accuracy: exact as f64 / n,
        mean_tau: tau_sum / n,
        malformed,
    }
}

/// Teacher-forced relation accuracy: argmax over the five label tokens at
/// each example's label position.
pub fn eval_relation_accuracy(model: &ToyModel, vocab: &Vocab, examples: &[Example]) -> f64 {
    let labels = vocab.label_ids();
    let mut correct = 0;
    let mut total = 0;
    for ex in examples {
        let (Some(pos), Some(label)) = (ex.label_pos, ex.label) else {
            continue;
        };
        let f = model.forward(&ex.tokens[..=pos]);
        let row = f.logits.row(pos);
        let scores: Vec<f64> = labels.iter().map(|&id| row[id]).collect();
        total += 1;
        if argmax(&scores) == label.index() {
            correct += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Share of the most frequent label among the QA examples.
pub fn majority_baseline(examples: &[Example]) -> f64 {
    let mut counts = [0usize; 5];
    for ex in examples {
        if let Some(l) = ex.label {
            counts[l.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    *counts.iter().max().unwrap() as f64 / total as f64
}

/// One-sided paired sign test: probability of at least `wins` successes
/// out of `wins + losses` fair coin flips. Ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len());
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let n = wins + losses;
    let mut p = 0.0;
    for k in wins..=n {
        p += binomial(n, k);
    }
    p /= 2f64.powi(n as i32);
    SignTest {
        wins,
        losses,
        ties: a.len() - n,
        p_value: if n == 0 { 1.0 } else { p },
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}
