use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use super::{compose_sets, AlgebraError, RelationSet, TemporalRelation};

/// Events plus pairwise relation sets.
///
/// Stored densely: a pair with no constraint holds [`RelationSet::FULL`].
/// `relation(a, b)` is always the elementwise inverse of `relation(b, a)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<RelationSet>,
}

impl Default for RelationGraph {
    fn default() -> Self {
        Self::new(Vec::<String>::new())
    }
}

impl RelationGraph {
    pub fn new<S: Into<String>>(nodes: impl IntoIterator<Item = S>) -> Self {
        let mut g = RelationGraph {
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
        };
        for n in nodes {
            g.add_node(n);
        }
        g
    }

    /// Adds a node if absent; returns its index.
    pub fn add_node(&mut self, id: impl Into<String>) -> usize {
        let id = id.into();
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let old = self.nodes.len();
        let n = old + 1;
        let mut edges = vec![RelationSet::FULL; n * n];
        for i in 0..old {
            for j in 0..old {
                edges[i * n + j] = self.edges[i * old + j];
            }
        }
        self.edges = edges;
        self.index.insert(id.clone(), old);
        self.nodes.push(id);
        old
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, i: usize, j: usize) -> RelationSet {
        self.edges[i * self.nodes.len() + j]
    }

    /// Overwrites the pair `(i, j)` and its inverse.
    pub fn set(&mut self, i: usize, j: usize, s: RelationSet) {
        assert_ne!(i, j, "self edges are not allowed");
        let n = self.nodes.len();
        self.edges[i * n + j] = s;
        self.edges[j * n + i] = s.invert();
    }

    pub fn relation(&self, a: &str, b: &str) -> Result<RelationSet, AlgebraError> {
        let i = self.lookup(a)?;
        let j = self.lookup(b)?;
        Ok(self.get(i, j))
    }

    fn lookup(&self, id: &str) -> Result<usize, AlgebraError> {
        self.index_of(id)
            .ok_or_else(|| AlgebraError::UnknownEvent(id.to_string()))
    }

    /// Intersects the pair with `s`, adding missing nodes. The result may be
    /// empty; [`propagate`] reports that as an inconsistency.
    pub fn constrain(&mut self, a: &str, b: &str, s: RelationSet) -> Result<(), AlgebraError> {
        if a == b {
            return Err(AlgebraError::SelfEdge(a.to_string()));
        }
        let i = self.add_node(a);
        let j = self.add_node(b);
        let cur = self.get(i, j);
        self.set(i, j, cur.intersect(s));
        Ok(())
    }

    pub fn add_relation(
        &mut self,
        a: &str,
        b: &str,
        r: TemporalRelation,
    ) -> Result<(), AlgebraError> {
        self.constrain(a, b, RelationSet::single(r))
    }

    /// Constrained pairs `(a, b, set)` with `a` before `b` in node order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, RelationSet)> + '_ {
        let n = self.nodes.len();
        (0..n).flat_map(move |i| {
            ((i + 1)..n).filter_map(move |j| {
                let s = self.get(i, j);
                (!s.is_full()).then(|| (self.nodes[i].as_str(), self.nodes[j].as_str(), s))
            })
        })
    }

    /// Serializes as `doc_id<TAB>source<TAB>relations<TAB>target` lines.
    pub fn to_tsv(&self, doc_id: &str) -> String {
        let mut out = String::new();
        for (a, b, s) in self.edges() {
            let _ = writeln!(out, "{doc_id}\t{a}\t{}\t{b}", s.to_label());
        }
        out
    }

    /// Parses relation lines into one graph per document. Blank lines and
    /// lines starting with `#` are skipped. Repeated pairs are intersected.
    pub fn from_tsv(text: &str) -> Result<BTreeMap<String, RelationGraph>, AlgebraError> {
        let mut graphs: BTreeMap<String, RelationGraph> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(AlgebraError::BadLine {
                    line: lineno + 1,
                    msg: format!("expected 4 tab-separated columns, got {}", cols.len()),
                });
            }
            let set: RelationSet = cols[2].parse()?;
            graphs
                .entry(cols[0].to_string())
                .or_default()
                .constrain(cols[1], cols[3], set)
                .map_err(|e| AlgebraError::BadLine {
                    line: lineno + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(graphs)
    }

    /// The first pair whose set is empty, if any.
    pub fn find_empty(&self) -> Option<(usize, usize)> {
        let n = self.nodes.len();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .find(|&(i, j)| self.get(i, j).is_empty())
    }
}

/// Path consistency: repeatedly tightens `edge(a, c)` with
/// `compose(edge(a, b), edge(b, c))` until nothing changes.
pub fn propagate(g: &RelationGraph) -> Result<RelationGraph, AlgebraError> {
    let mut out = g.clone();
    if let Some((i, j)) = out.find_empty() {
        return Err(AlgebraError::Inconsistent {
            a: out.nodes[i].clone(),
            b: out.nodes[j].clone(),
            via: None,
        });
    }
    let n = out.len();
    let mut queued = vec![false; n * n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        for j in (i + 1)..n {
            queue.push_back((i, j));
            queued[i * n + j] = true;
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        queued[i * n + j] = false;
        let rij = out.get(i, j);
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            // i -> j -> k tightens (i, k); k -> i -> j tightens (k, j).
            for (a, c, via, derived) in [
                (i, k, j, compose_sets(rij, out.get(j, k))),
                (k, j, i, compose_sets(out.get(k, i), rij)),
            ] {
                let cur = out.get(a, c);
                let next = cur.intersect(derived);
                if next == cur {
                    continue;
                }
                out.set(a, c, next);
                if next.is_empty() {
                    return Err(AlgebraError::Inconsistent {
                        a: out.nodes[a].clone(),
                        b: out.nodes[c].clone(),
                        via: Some(out.nodes[via].clone()),
                    });
                }
                let (lo, hi) = if a < c { (a, c) } else { (c, a) };
                if !queued[lo * n + hi] {
                    queued[lo * n + hi] = true;
                    queue.push_back((lo, hi));
                }
            }
        }
    }
    Ok(out)
}
