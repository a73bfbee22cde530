//! Alias-insensitive subgraph matching between join graphs.
//!
//! Instances match when they read the same base table with the same filters
//! (after alias substitution). A pattern embeds into a target when every
//! pair of mapped instances is joined by exactly the same multiset of
//! conditions and join kinds in both graphs, which makes every embedding
//! *induced*: the target has no extra predicate among the mapped instances.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{rename_filter, JoinEdge, JoinGraph, JoinKind};
use crate::error::{Error, Result};
use crate::ops::CmpOp;

/// Graphs up to this many instances are searched exhaustively.
pub const DEFAULT_VERTEX_CAP: usize = 12;
/// Beyond this the search refuses to run at all.
pub const HARD_VERTEX_LIMIT: usize = 64;

/// One join predicate seen from an ordered instance pair `(x, y)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct EdgeTpl {
    /// 0 inner, 1 preserves x, 2 preserves y.
    kind: u8,
    col_x: String,
    op: CmpOp,
    col_y: String,
}

struct Indexed<'g> {
    g: &'g JoinGraph,
    labels: Vec<String>,
    pairs: HashMap<(usize, usize), Vec<EdgeTpl>>,
    adj: Vec<Vec<usize>>,
}

impl<'g> Indexed<'g> {
    fn new(g: &'g JoinGraph) -> Self {
        let idx: HashMap<&str, usize> = g
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.alias.as_str(), i))
            .collect();
        let labels = g
            .vertices
            .iter()
            .map(|v| {
                let mut f: Vec<String> = v.filters.iter().map(|p| rename_filter(p, "_").to_string()).collect();
                f.sort();
                format!("{}|{}", v.table, f.join("&"))
            })
            .collect();
        let mut pairs: HashMap<(usize, usize), Vec<EdgeTpl>> = HashMap::new();
        let mut adj = vec![BTreeSet::new(); g.vertices.len()];
        for e in &g.edges {
            let (l, r) = (idx[e.left()], idx[e.right()]);
            adj[l].insert(r);
            adj[r].insert(l);
            let c = &e.condition;
            let kind_from = |x: &str| match &e.kind {
                JoinKind::Inner => 0,
                JoinKind::LeftOuter { preserved } if preserved == x => 1,
                JoinKind::LeftOuter { .. } => 2,
            };
            pairs.entry((l, r)).or_default().push(EdgeTpl {
                kind: kind_from(e.left()),
                col_x: c.left.column.clone(),
                op: c.op,
                col_y: c.right.column.clone(),
            });
            pairs.entry((r, l)).or_default().push(EdgeTpl {
                kind: kind_from(e.right()),
                col_x: c.right.column.clone(),
                op: c.op.flip(),
                col_y: c.left.column.clone(),
            });
        }
        for v in pairs.values_mut() {
            v.sort();
        }
        Indexed {
            g,
            labels,
            pairs,
            adj: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    fn pair(&self, x: usize, y: usize) -> &[EdgeTpl] {
        self.pairs.get(&(x, y)).map_or(&[], |v| v.as_slice())
    }
}

/// Every induced embedding of all of `pattern` into `target`, as maps from
/// pattern aliases to target aliases. Deterministic order.
pub fn embeddings(pattern: &JoinGraph, target: &JoinGraph) -> Vec<BTreeMap<String, String>> {
    let p = Indexed::new(pattern);
    let t = Indexed::new(target);
    embed(&p, &t, &(0..pattern.vertices.len()).collect::<Vec<_>>())
        .into_iter()
        .map(|assign| {
            assign
                .into_iter()
                .map(|(pi, ti)| (pattern.vertices[pi].alias.clone(), target.vertices[ti].alias.clone()))
                .collect()
        })
        .collect()
}

/// Embeddings of the subgraph of `p` induced by `subset` (pattern vertex
/// indices) into `t`. Returns (pattern index, target index) lists.
fn embed(p: &Indexed, t: &Indexed, subset: &[usize]) -> Vec<Vec<(usize, usize)>> {
    if subset.is_empty() {
        return Vec::new();
    }
    // BFS order so each vertex after the first in its component has an
    // already-placed neighbour ("anchor").
    let in_subset: BTreeSet<usize> = subset.iter().copied().collect();
    let mut order: Vec<(usize, Option<usize>)> = Vec::new();
    let mut placed = BTreeSet::new();
    for &s in subset {
        if placed.contains(&s) {
            continue;
        }
        placed.insert(s);
        order.push((s, None));
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &w in &p.adj[u] {
                if in_subset.contains(&w) && placed.insert(w) {
                    order.push((w, Some(u)));
                    q.push_back(w);
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut assign: Vec<usize> = Vec::with_capacity(order.len());
    let mut image: HashMap<usize, usize> = HashMap::new();
    let mut used = vec![false; t.g.vertices.len()];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        k: usize,
        order: &[(usize, Option<usize>)],
        p: &Indexed,
        t: &Indexed,
        assign: &mut Vec<usize>,
        image: &mut HashMap<usize, usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if k == order.len() {
            out.push(order.iter().map(|(u, _)| *u).zip(assign.iter().copied()).collect());
            return;
        }
        let (u, anchor) = order[k];
        let candidates: Vec<usize> = match anchor {
            Some(a) => t.adj[image[&a]].clone(),
            None => (0..t.g.vertices.len()).collect(),
        };
        for c in candidates {
            if used[c] || p.labels[u] != t.labels[c] {
                continue;
            }
            let consistent = order[..k]
                .iter()
                .zip(assign.iter())
                .all(|(&(v, _), &tv)| p.pair(u, v) == t.pair(c, tv));
            if !consistent {
                continue;
            }
            used[c] = true;
            assign.push(c);
            image.insert(u, c);
            rec(k + 1, order, p, t, assign, image, used, out);
            image.remove(&u);
            assign.pop();
            used[c] = false;
        }
    }
    rec(0, &order, p, t, &mut assign, &mut image, &mut used, &mut out);
    out
}

/// A connected set of common joins: the induced subgraph of the first
/// query on `mapping`'s keys, matched to the second query's instances
/// `mapping`'s values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedSubgraph {
    /// In the first query's aliases.
    pub graph: JoinGraph,
    /// First-query alias → second-query alias.
    pub mapping: BTreeMap<String, String>,
}

impl SharedSubgraph {
    pub fn size(&self) -> usize {
        self.mapping.len()
    }

    pub fn aliases_1(&self) -> BTreeSet<String> {
        self.mapping.keys().cloned().collect()
    }

    pub fn aliases_2(&self) -> BTreeSet<String> {
        self.mapping.values().cloned().collect()
    }

    /// Canonical encoding of the subgraph followed by the alias mapping.
    pub fn encoding(&self) -> String {
        let m: Vec<String> = self.mapping.iter().map(|(a, b)| format!("{a}->{b}")).collect();
        format!("{} @ {}", self.graph.canonical_encoding(), m.join(","))
    }
}

fn check_limit(g: &JoinGraph) -> Result<()> {
    if g.vertices.len() > HARD_VERTEX_LIMIT {
        return Err(Error::CapExceeded {
            vertices: g.vertices.len(),
            limit: HARD_VERTEX_LIMIT,
        });
    }
    Ok(())
}

/// All shared subgraphs of two join graphs (at least one join each), largest
/// first, ties by canonical encoding.
pub fn common_subgraph_candidates(g1: &JoinGraph, g2: &JoinGraph) -> Result<Vec<SharedSubgraph>> {
    common_subgraph_candidates_with_cap(g1, g2, DEFAULT_VERTEX_CAP)
}

/// As [`common_subgraph_candidates`], searching exhaustively only when both
/// graphs have at most `cap` instances; otherwise only maximal candidates
/// grown from matching single joins are returned.
pub fn common_subgraph_candidates_with_cap(g1: &JoinGraph, g2: &JoinGraph, cap: usize) -> Result<Vec<SharedSubgraph>> {
    check_limit(g1)?;
    check_limit(g2)?;
    let p = Indexed::new(g1);
    let t = Indexed::new(g2);
    let n = g1.vertices.len();
    let mut found: Vec<Vec<(usize, usize)>> = Vec::new();
    if n.max(g2.vertices.len()) <= cap {
        for mask in 1u64..(1u64 << n) {
            if mask.count_ones() < 2 {
                continue;
            }
            let subset: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            if !connected(&p, &subset) {
                continue;
            }
            found.extend(embed(&p, &t, &subset));
        }
    } else {
        log::warn!(
            "join graphs with {} and {} instances exceed the exhaustive-search cap of {cap}; \
             only maximal shared subgraphs are considered",
            n,
            g2.vertices.len()
        );
        found = grow_maximal(&p, &t);
    }
    let mut out: Vec<SharedSubgraph> = found
        .into_iter()
        .map(|pairs| {
            let mapping: BTreeMap<String, String> = pairs
                .iter()
                .map(|&(a, b)| (g1.vertices[a].alias.clone(), g2.vertices[b].alias.clone()))
                .collect();
            let aliases: BTreeSet<String> = mapping.keys().cloned().collect();
            SharedSubgraph {
                graph: g1.induced(&aliases),
                mapping,
            }
        })
        .collect();
    let mut keyed: Vec<(usize, String, SharedSubgraph)> = out.drain(..).map(|s| (s.size(), s.encoding(), s)).collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    keyed.dedup_by(|a, b| a.1 == b.1);
    Ok(keyed.into_iter().map(|(_, _, s)| s).collect())
}

fn connected(p: &Indexed, subset: &[usize]) -> bool {
    let set: BTreeSet<usize> = subset.iter().copied().collect();
    let mut seen = BTreeSet::from([subset[0]]);
    let mut stack = vec![subset[0]];
    while let Some(u) = stack.pop() {
        for &w in &p.adj[u] {
            if set.contains(&w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == set.len()
}

/// Seed with every matching single join, then add adjacent instance pairs
/// greedily until nothing more can be added. Only results not strictly
/// contained in another result are kept.
fn grow_maximal(p: &Indexed, t: &Indexed) -> Vec<Vec<(usize, usize)>> {
    let mut seeds = Vec::new();
    for e in &p.g.edges {
        let l = p.g.vertices.iter().position(|v| v.alias == e.left()).unwrap();
        let r = p.g.vertices.iter().position(|v| v.alias == e.right()).unwrap();
        seeds.extend(embed(p, t, &[l, r]));
    }
    let mut results: BTreeSet<Vec<(usize, usize)>> = BTreeSet::new();
    for mut cur in seeds {
        loop {
            let mut grown = false;
            'outer: for &(u, tu) in &cur.clone() {
                for &x in &p.adj[u] {
                    if cur.iter().any(|&(a, _)| a == x) {
                        continue;
                    }
                    for &y in &t.adj[tu] {
                        if cur.iter().any(|&(_, b)| b == y) || p.labels[x] != t.labels[y] {
                            continue;
                        }
                        if cur.iter().all(|&(a, b)| p.pair(x, a) == t.pair(y, b)) {
                            cur.push((x, y));
                            grown = true;
                            break 'outer;
                        }
                    }
                }
            }
            if !grown {
                break;
            }
        }
        cur.sort();
        results.insert(cur);
    }
    let all: Vec<_> = results.into_iter().collect();
    all.iter()
        .filter(|a| !all.iter().any(|b| b.len() > a.len() && a.iter().all(|x| b.contains(x))))
        .cloned()
        .collect()
}

/// One way to split two queries around a shared subgraph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub shared: SharedSubgraph,
    /// The shared subgraph in the second query's aliases.
    pub shared_2: JoinGraph,
    /// Connected components of each query after removing shared instances.
    pub non_shared_1: Vec<JoinGraph>,
    pub non_shared_2: Vec<JoinGraph>,
    /// Per non-shared subgraph, the original edges linking it to the shared
    /// subgraph.
    pub connecting_1: Vec<Vec<JoinEdge>>,
    pub connecting_2: Vec<Vec<JoinEdge>>,
}

impl Decomposition {
    fn from_shared(g1: &JoinGraph, g2: &JoinGraph, shared: SharedSubgraph) -> Decomposition {
        let (non_shared_1, connecting_1) = split(g1, &shared.aliases_1());
        let (non_shared_2, connecting_2) = split(g2, &shared.aliases_2());
        Decomposition {
            shared_2: g2.induced(&shared.aliases_2()),
            shared,
            non_shared_1,
            non_shared_2,
            connecting_1,
            connecting_2,
        }
    }

    /// Shared subgraph, non-shared subgraphs and connecting edges of one side
    /// (1 or 2) reassembled into a single graph.
    pub fn reconstruct(&self, side: u8) -> JoinGraph {
        let (s, ns, conn) = if side == 1 {
            (&self.shared.graph, &self.non_shared_1, &self.connecting_1)
        } else {
            (&self.shared_2, &self.non_shared_2, &self.connecting_2)
        };
        let mut g = s.clone();
        for (sub, edges) in ns.iter().zip(conn) {
            g.vertices.extend(sub.vertices.iter().cloned());
            g.edges.extend(sub.edges.iter().cloned());
            g.edges.extend(edges.iter().cloned());
        }
        g
    }
}

fn split(g: &JoinGraph, shared: &BTreeSet<String>) -> (Vec<JoinGraph>, Vec<Vec<JoinEdge>>) {
    let rest: BTreeSet<String> = g.aliases().filter(|a| !shared.contains(*a)).map(String::from).collect();
    let comps = g.components_within(&rest);
    let mut subs = Vec::new();
    let mut conns = Vec::new();
    for c in comps {
        conns.push(
            g.edges
                .iter()
                .filter(|e| {
                    (c.contains(e.left()) && shared.contains(e.right()))
                        || (c.contains(e.right()) && shared.contains(e.left()))
                })
                .cloned()
                .collect(),
        );
        subs.push(g.induced(&c));
    }
    (subs, conns)
}

/// One decomposition per shared-subgraph candidate and mapping.
pub fn enumerate_decompositions(g1: &JoinGraph, g2: &JoinGraph) -> Result<Vec<Decomposition>> {
    enumerate_decompositions_with_cap(g1, g2, DEFAULT_VERTEX_CAP)
}

pub fn enumerate_decompositions_with_cap(g1: &JoinGraph, g2: &JoinGraph, cap: usize) -> Result<Vec<Decomposition>> {
    let cands = common_subgraph_candidates_with_cap(g1, g2, cap)?;
    if cands.is_empty() {
        return Err(Error::NoCommonJoin(g1.pattern_label(), g2.pattern_label()));
    }
    Ok(cands
        .into_iter()
        .map(|s| Decomposition::from_shared(g1, g2, s))
        .collect())
}
