//! Exact closure by model enumeration.
//!
//! Endpoints are inserted one at a time into a growing weak ordering
//! (`start` then `end` of each event). Every weak ordering of the `2n`
//! endpoints with `start < end` per event is generated exactly once; branches
//! are cut as soon as a completed interval violates a constraint or stands in
//! a relation outside the five-relation vocabulary.

use std::collections::BTreeMap;

use super::{AlgebraError, RelationGraph, RelationSet, TemporalRelation};

/// 7 events means 14 endpoints; enumeration cost grows super-exponentially.
pub const ORACLE_MAX_EVENTS: usize = 7;

/// A concrete integer interval per event (integers are rationals).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub intervals: Vec<(i64, i64)>,
}

impl Witness {
    /// Whether the assignment satisfies every constraint of `g`.
    pub fn satisfies(&self, g: &RelationGraph) -> bool {
        let n = g.len();
        if self.intervals.len() != n || self.intervals.iter().any(|&(s, e)| s >= e) {
            return false;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                match relation_of_intervals(self.intervals[i], self.intervals[j]) {
                    Some(r) if g.get(i, j).contains(r) => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct OracleClosure {
    pub graph: RelationGraph,
    /// One model per realized `(i, j, relation)` with `i < j`.
    pub witnesses: BTreeMap<(usize, usize, TemporalRelation), Witness>,
    pub models: u64,
}

/// The relation between two intervals, or `None` when it falls outside the
/// five-relation vocabulary.
pub fn relation_of_intervals<T: PartialOrd + Copy>(
    a: (T, T),
    b: (T, T),
) -> Option<TemporalRelation> {
    use TemporalRelation::*;
    if a.1 < b.0 {
        Some(Before)
    } else if b.1 < a.0 {
        Some(After)
    } else if a.0 == b.0 && a.1 == b.1 {
        Some(Simultaneous)
    } else if a.0 < b.0 && b.1 < a.1 {
        Some(Includes)
    } else if b.0 < a.0 && a.1 < b.1 {
        Some(IsIncluded)
    } else {
        None
    }
}

struct Enumerator<'a, F: FnMut(&[u32])> {
    g: &'a RelationGraph,
    ranks: Vec<u32>,
    blocks: u32,
    visit: F,
}

impl<F: FnMut(&[u32])> Enumerator<'_, F> {
    fn interval(&self, i: usize) -> (u32, u32) {
        (self.ranks[2 * i], self.ranks[2 * i + 1])
    }

    fn consistent_up_to(&self, i: usize) -> bool {
        let a = self.interval(i);
        (0..i).all(|j| match relation_of_intervals(self.interval(j), a) {
            Some(r) => self.g.get(j, i).contains(r),
            None => false,
        })
    }

    fn place(&mut self, point: usize) {
        let n = self.g.len();
        if point == 2 * n {
            (self.visit)(&self.ranks);
            return;
        }
        let is_end = point % 2 == 1;
        let floor = if is_end { self.ranks[point - 1] + 1 } else { 0 };
        // Tie with an existing block.
        for b in floor..self.blocks {
            self.ranks[point] = b;
            self.descend(point);
        }
        // Open a new block in gap `gap` (before current block `gap`).
        for gap in floor..=self.blocks {
            for r in &mut self.ranks[..point] {
                if *r >= gap {
                    *r += 1;
                }
            }
            self.ranks[point] = gap;
            self.blocks += 1;
            self.descend(point);
            self.blocks -= 1;
            for r in &mut self.ranks[..point] {
                if *r > gap {
                    *r -= 1;
                }
            }
        }
    }

    fn descend(&mut self, point: usize) {
        if point % 2 == 1 && !self.consistent_up_to(point / 2) {
            return;
        }
        self.place(point + 1);
    }
}

/// Calls `visit` with the endpoint ranks (`[s0, e0, s1, e1, ...]`) of every
/// model of `g`.
pub fn enumerate_models(
    g: &RelationGraph,
    visit: impl FnMut(&[u32]),
) -> Result<(), AlgebraError> {
    if g.len() > ORACLE_MAX_EVENTS {
        return Err(AlgebraError::TooManyEvents {
            got: g.len(),
            max: ORACLE_MAX_EVENTS,
        });
    }
    let mut e = Enumerator {
        g,
        ranks: vec![0; 2 * g.len()],
        blocks: 0,
        visit,
    };
    e.place(0);
    Ok(())
}

pub fn oracle_closure_with_witnesses(g: &RelationGraph) -> Result<OracleClosure, AlgebraError> {
    let n = g.len();
    let mut realized = vec![RelationSet::INCONSISTENT; n * n];
    let mut witnesses = BTreeMap::new();
    let mut models = 0u64;
    enumerate_models(g, |ranks| {
        models += 1;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = (ranks[2 * i], ranks[2 * i + 1]);
                let b = (ranks[2 * j], ranks[2 * j + 1]);
                let r = relation_of_intervals(a, b).expect("pruned configurations only");
                if !realized[i * n + j].contains(r) {
                    realized[i * n + j].insert(r);
                    witnesses.insert(
                        (i, j, r),
                        Witness {
                            intervals: ranks
                                .chunks(2)
                                .map(|c| (c[0] as i64, c[1] as i64))
                                .collect(),
                        },
                    );
                }
            }
        }
    })?;
    if models == 0 {
        let (a, b) = g
            .edges()
            .next()
            .map(|(a, b, _)| (a.to_string(), b.to_string()))
            .unwrap_or_default();
        return Err(AlgebraError::Inconsistent { a, b, via: None });
    }
    let mut graph = g.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            graph.set(i, j, realized[i * n + j]);
        }
    }
    Ok(OracleClosure {
        graph,
        witnesses,
        models,
    })
}

/// Exact closure: per pair, the relations realized by at least one model.
pub fn oracle_closure(g: &RelationGraph) -> Result<RelationGraph, AlgebraError> {
    oracle_closure_with_witnesses(g).map(|c| c.graph)
}
