#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempdistill::algebra::{
    oracle_closure, propagate, AlgebraError, RelationGraph, RelationSet, TemporalRelation,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> tempdistill::matrix::RealMatrix {
    tempdistill::matrix::RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Outcome of comparing path consistency with the enumeration oracle.
#[derive(Debug, Default)]
pub struct ClosureComparison {
    pub graphs: usize,
    pub inconsistent_both: usize,
    pub divergences: Vec<String>,
}

pub fn compare_one(g: &RelationGraph, out: &mut ClosureComparison) {
    out.graphs += 1;
    let pc = propagate(g);
    let exact = oracle_closure(g);
    match (pc, exact) {
        (Ok(a), Ok(b)) if a == b => {}
        (Err(AlgebraError::Inconsistent { .. }), Err(AlgebraError::Inconsistent { .. })) => {
            out.inconsistent_both += 1
        }
        (a, b) => out
            .divergences
            .push(format!("input {:?}\n  propagate {:?}\n  oracle {:?}", g.to_tsv("g"), a.map(|x| x.to_tsv("g")), b.map(|x| x.to_tsv("g")))),
    }
}

/// Every graph on `events` events with up to `max_edges` edges, each
/// labeled with a single relation.
pub fn exhaustive_single_label(events: std::ops::RangeInclusive<usize>, max_edges: usize) -> ClosureComparison {
    let mut out = ClosureComparison::default();
    for n in events {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let names: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let k = mask.count_ones() as usize;
            if k > max_edges {
                continue;
            }
            let chosen: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, p)| *p)
                .collect();
            for labels in 0..5usize.pow(k as u32) {
                let mut g = RelationGraph::new(names.iter().cloned());
                let mut code = labels;
                for &(i, j) in &chosen {
                    let r = TemporalRelation::from_index(code % 5).unwrap();
                    code /= 5;
                    g.set(i, j, RelationSet::single(r));
                }
                compare_one(&g, &mut out);
            }
        }
    }
    out
}

/// Random graphs with a mix of single-label and disjunctive edges.
pub fn random_graphs(seed: u64, count: usize, events: usize) -> ClosureComparison {
    let mut rng = rng(seed);
    let mut out = ClosureComparison::default();
    let names: Vec<String> = (0..events).map(|i| format!("e{i}")).collect();
    for _ in 0..count {
        let mut g = RelationGraph::new(names.iter().cloned());
        let density: f64 = rng.gen_range(0.15..0.6);
        for i in 0..events {
            for j in (i + 1)..events {
                if rng.gen_bool(density) {
                    let set = if rng.gen_bool(0.6) {
                        RelationSet::single(TemporalRelation::from_index(rng.gen_range(0..5)).unwrap())
                    } else {
                        RelationSet::from_bits(rng.gen_range(1..31))
                    };
                    g.set(i, j, set);
                }
            }
        }
        compare_one(&g, &mut out);
    }
    out
}
