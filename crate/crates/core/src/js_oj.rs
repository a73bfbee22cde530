//! Join sharing by outer join: two queries that share a connected set of
//! joins are evaluated as one. The shared subquery runs once and every
//! non-shared subquery is attached to it by a left outer join that preserves
//! the shared side.
//!
//! Projecting the merged outer-join relation loses multiplicities (each
//! shared row is repeated `k1·k2` times when the two queries match `k1` and
//! `k2` rows on their own sides), so [`execute_merged`] streams each shared
//! row once and emits, per origin query, only the cross product of that
//! query's own matches.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::Database;
use crate::error::{Error, Result};
use crate::graph::{enumerate_decompositions, Decomposition, JoinEdge, JoinGraph, JoinKind};
use crate::ops::{dedup_rows, join_rows, HashIndex, JoinKeys, JoinType, Side};
use crate::query::{execute_frame, join_signature, BoundQuery, ExecStats, Frame};
use crate::relation::{Column, ColumnRef, Relation, Row, Schema};
use crate::value::Value;

/// A non-shared subgraph of one origin query, in merged aliases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedPart {
    /// 0 or 1: which origin query the part belongs to.
    pub origin: usize,
    pub graph: JoinGraph,
    /// Edges to the shared subgraph, marked outer with the shared endpoint
    /// preserved.
    pub connecting: Vec<JoinEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedUnit {
    pub origins: [BoundQuery; 2],
    /// Shared subgraph (inner) plus every part and its outer connecting edges.
    pub graph: JoinGraph,
    /// Merged aliases of the shared subgraph.
    pub shared: BTreeSet<String>,
    pub parts: Vec<MergedPart>,
    /// Per origin: original alias → merged alias.
    pub aliases: [BTreeMap<String, String>; 2],
}

impl MergedUnit {
    pub fn shared_graph(&self) -> JoinGraph {
        self.graph.induced(&self.shared)
    }

    /// Pattern of the shared subgraph, e.g. `I⋈SS`.
    pub fn shared_label(&self) -> String {
        self.shared_graph().pattern_label()
    }

    /// Origin outputs renamed into merged aliases.
    pub fn outputs(&self, origin: usize) -> Vec<ColumnRef> {
        self.origins[origin]
            .outputs
            .iter()
            .map(|c| c.with_alias(self.aliases[origin][&c.alias].clone()))
            .collect()
    }

    fn needed_columns(&self, within: impl Fn(&str) -> bool) -> Vec<ColumnRef> {
        let mut cols: BTreeSet<ColumnRef> = BTreeSet::new();
        for o in 0..2 {
            cols.extend(self.outputs(o).into_iter().filter(|c| within(&c.alias)));
        }
        for p in &self.parts {
            for e in &p.connecting {
                for c in [&e.condition.left, &e.condition.right] {
                    if within(&c.alias) {
                        cols.insert(c.clone());
                    }
                }
            }
        }
        cols.into_iter().collect()
    }

    /// Columns the shared subquery must produce: origin outputs and the
    /// shared side of every connecting edge.
    pub fn shared_columns(&self) -> Vec<ColumnRef> {
        self.needed_columns(|a| self.shared.contains(a))
    }

    /// Columns part `i` must produce.
    pub fn part_columns(&self, i: usize) -> Vec<ColumnRef> {
        let g = &self.parts[i].graph;
        self.needed_columns(|a| g.vertex(a).is_some())
    }

    /// Text used to break cost ties between alternative merges.
    pub fn encoding(&self) -> String {
        let mut m: Vec<String> = Vec::new();
        for (o, map) in self.aliases.iter().enumerate() {
            for (a, b) in map {
                m.push(format!("{o}:{a}->{b}"));
            }
        }
        format!("{} @ {}", self.graph.canonical_encoding(), m.join(","))
    }
}

fn fresh_alias(base: &str, taken: &BTreeSet<String>) -> String {
    let mut a = format!("{base}_2");
    let mut k = 2;
    while taken.contains(&a) {
        k += 1;
        a = format!("{base}_{k}");
    }
    a
}

/// Build the merged unit of one decomposition. The first query keeps its
/// aliases; the second query's shared instances take the first query's
/// names and its other instances are renamed only on collision.
pub fn merge_decomposition(q1: &BoundQuery, q2: &BoundQuery, d: &Decomposition) -> Result<MergedUnit> {
    let shared: BTreeSet<String> = d.shared.aliases_1();
    let map1: BTreeMap<String, String> = q1.graph.aliases().map(|a| (a.to_string(), a.to_string())).collect();
    let mut taken: BTreeSet<String> = map1.keys().cloned().collect();
    let mut map2: BTreeMap<String, String> = d
        .shared
        .mapping
        .iter()
        .map(|(a1, a2)| (a2.clone(), a1.clone()))
        .collect();
    for a in q2.graph.aliases() {
        if map2.contains_key(a) {
            continue;
        }
        let name = if taken.contains(a) {
            fresh_alias(a, &taken)
        } else {
            a.to_string()
        };
        taken.insert(name.clone());
        map2.insert(a.to_string(), name);
    }

    let mut graph = d.shared.graph.clone();
    let mut parts = Vec::new();
    let sides = [
        (&d.non_shared_1, &d.connecting_1, &map1),
        (&d.non_shared_2, &d.connecting_2, &map2),
    ];
    for (origin, (subs, conns, map)) in sides.into_iter().enumerate() {
        let rename = |a: &str| map[a].clone();
        for (sub, conn) in subs.iter().zip(conns.iter()) {
            let vertices: Vec<_> = sub.vertices.iter().map(|v| v.renamed(&rename(&v.alias))).collect();
            let edges: Vec<JoinEdge> = sub.edges.iter().map(|e| e.renamed(rename)).collect();
            let connecting: Vec<JoinEdge> = conn
                .iter()
                .map(|e| {
                    let inner = e.renamed(rename);
                    let preserved = if shared.contains(inner.left()) {
                        inner.left().to_string()
                    } else {
                        inner.right().to_string()
                    };
                    JoinEdge::new(inner.condition, JoinKind::LeftOuter { preserved })
                })
                .collect();
            graph.vertices.extend(vertices.iter().cloned());
            graph.edges.extend(edges.iter().cloned());
            graph.edges.extend(connecting.iter().cloned());
            parts.push(MergedPart {
                origin,
                graph: JoinGraph::new(vertices, edges)?,
                connecting,
            });
        }
    }
    let graph = JoinGraph::new(graph.vertices, graph.edges)?;
    Ok(MergedUnit {
        origins: [q1.clone(), q2.clone()],
        graph,
        shared,
        parts,
        aliases: [map1, map2],
    })
}

/// Every merged unit of a query pair, one per decomposition.
pub fn merge_candidates(q1: &BoundQuery, q2: &BoundQuery) -> Result<Vec<MergedUnit>> {
    enumerate_decompositions(&q1.graph, &q2.graph)?
        .iter()
        .map(|d| merge_decomposition(q1, q2, d))
        .collect()
}

/// The cheapest merged unit of a pair under `cost`; ties go to the lesser
/// [`MergedUnit::encoding`].
pub fn merge_pair(
    q1: &BoundQuery,
    q2: &BoundQuery,
    cost: &dyn Fn(&MergedUnit) -> Result<f64>,
) -> Result<(MergedUnit, f64)> {
    let mut best: Option<(MergedUnit, f64, String)> = None;
    for u in merge_candidates(q1, q2)? {
        let c = cost(&u)?;
        let enc = u.encoding();
        let better = match &best {
            None => true,
            Some((_, bc, be)) => c < *bc || (c == *bc && enc < *be),
        };
        if better {
            best = Some((u, c, enc));
        }
    }
    let (u, c, _) = best.expect("at least one decomposition");
    Ok((u, c))
}

/// A part's result with a hash table on its connecting columns.
struct Attached<'a> {
    index: Option<HashIndex<'a>>,
    rows: &'a [Row],
    /// Shared-frame column per equality key, in index key order.
    probe_cols: Vec<usize>,
    /// (shared column, op, part column) checked per candidate.
    keys: JoinKeys,
}

impl Attached<'_> {
    fn matches<'s>(&'s self, shared_row: &'s Row) -> Box<dyn Iterator<Item = &'s Row> + 's> {
        let ok = move |r: &&Row| {
            self.keys.eq.iter().all(|&(l, p)| shared_row[l].sql_eq(&r[p]))
                && self
                    .keys
                    .residual
                    .iter()
                    .all(|&(l, op, p)| op.eval(&shared_row[l], &r[p]))
        };
        match &self.index {
            Some(ix) => Box::new(ix.candidates(shared_row, &self.probe_cols).filter(ok)),
            None => Box::new(self.rows.iter().filter(ok)),
        }
    }
}

fn oriented(e: &JoinEdge, shared: &BTreeSet<String>) -> crate::ops::JoinCondition {
    if shared.contains(e.left()) {
        e.condition.clone()
    } else {
        e.condition.flipped()
    }
}

fn table_namer(g: &JoinGraph) -> impl Fn(&str) -> String + '_ {
    move |a: &str| g.vertex(a).map_or_else(|| a.to_string(), |v| v.table.clone())
}

#[derive(Clone, Copy)]
enum Src {
    Shared(usize),
    /// (position among the origin's parts, column)
    Part(usize, usize),
}

/// Run a merged unit and return each origin query's result, multiset-exact.
pub fn execute_merged(unit: &MergedUnit, db: &Database, stats: &mut ExecStats) -> Result<[Relation; 2]> {
    let s_graph = unit.shared_graph();
    let shared = execute_frame(&s_graph, &unit.shared_columns(), db, stats)?;
    let s_schema = shared.schema();
    let mut frames: Vec<Frame> = Vec::new();
    for (i, p) in unit.parts.iter().enumerate() {
        frames.push(execute_frame(&p.graph, &unit.part_columns(i), db, stats)?);
    }
    let tables = table_namer(&unit.graph);
    let mut attached = Vec::new();
    for (p, f) in unit.parts.iter().zip(&frames) {
        let conds: Vec<_> = p.connecting.iter().map(|e| oriented(e, &unit.shared)).collect();
        let keys = JoinKeys::resolve(&s_schema, &f.schema(), &conds)?;
        let index = if keys.eq.is_empty() {
            None
        } else {
            Some(HashIndex::build(&f.rows, keys.eq.iter().map(|&(_, r)| r).collect()))
        };
        let edges: Vec<&JoinEdge> = p.connecting.iter().collect();
        stats.record_join(format!("outer {}", join_signature(&tables, &edges)));
        stats.tuples_built += f.rows.len() as u64;
        attached.push(Attached {
            index,
            rows: &f.rows,
            probe_cols: keys.eq.iter().map(|&(l, _)| l).collect(),
            keys,
        });
    }

    let mut results: Vec<Relation> = Vec::new();
    for o in 0..2 {
        // where each output column comes from: shared frame or (part, column)
        let mine: Vec<usize> = (0..unit.parts.len()).filter(|&i| unit.parts[i].origin == o).collect();
        let mut sources = Vec::new();
        let mut cols = Vec::new();
        for (orig, merged) in unit.origins[o].outputs.iter().zip(unit.outputs(o)) {
            let (src, kind) = if let Some(i) = shared.index_of(&merged) {
                (Src::Shared(i), shared.cols[i].kind)
            } else {
                let (k, i) = mine
                    .iter()
                    .enumerate()
                    .find_map(|(k, &p)| frames[p].index_of(&merged).map(|i| (k, i)))
                    .ok_or_else(|| Error::UnknownColumn(merged.to_string()))?;
                (Src::Part(k, i), frames[mine[k]].cols[i].kind)
            };
            sources.push(src);
            cols.push(Column::new(orig.alias.clone(), orig.column.clone(), kind));
        }
        let mut rows: Vec<Row> = Vec::new();
        let mut matched: Vec<Vec<&Row>> = vec![Vec::new(); mine.len()];
        for srow in &shared.rows {
            stats.tuples_probed += 1;
            let mut empty = false;
            for (k, &p) in mine.iter().enumerate() {
                matched[k].clear();
                matched[k].extend(attached[p].matches(srow));
                if matched[k].is_empty() {
                    empty = true;
                    break;
                }
            }
            if empty {
                continue;
            }
            // odometer over this origin's parts
            let mut pos = vec![0usize; mine.len()];
            loop {
                rows.push(
                    sources
                        .iter()
                        .map(|s| match *s {
                            Src::Shared(i) => srow[i].clone(),
                            Src::Part(k, i) => matched[k][pos[k]][i].clone(),
                        })
                        .collect(),
                );
                let mut d = 0;
                while d < pos.len() {
                    pos[d] += 1;
                    if pos[d] < matched[d].len() {
                        break;
                    }
                    pos[d] = 0;
                    d += 1;
                }
                if d == pos.len() {
                    break;
                }
            }
        }
        stats.tuples_emitted += rows.len() as u64;
        results.push(Relation::from_parts(Schema::unique(cols), rows));
    }
    let b = results.pop().unwrap();
    let a = results.pop().unwrap();
    Ok([a, b])
}

/// The merged query evaluated literally: the shared result left-outer-joined
/// with every part in turn. Columns are the shared columns followed by each
/// part's columns.
pub fn naive_merged_relation(unit: &MergedUnit, db: &Database, stats: &mut ExecStats) -> Result<Relation> {
    let mut cur = execute_frame(&unit.shared_graph(), &unit.shared_columns(), db, stats)?;
    for (i, p) in unit.parts.iter().enumerate() {
        let right = execute_frame(&p.graph, &unit.part_columns(i), db, stats)?;
        let conds: Vec<_> = p.connecting.iter().map(|e| oriented(e, &unit.shared)).collect();
        let keys = JoinKeys::resolve(&cur.schema(), &right.schema(), &conds)?;
        let output: Vec<Side> = (0..cur.cols.len())
            .map(Side::Left)
            .chain((0..right.cols.len()).map(Side::Right))
            .collect();
        let (rows, _) = join_rows(&cur.rows, &right.rows, &keys, JoinType::LeftOuter, &output);
        let mut cols = cur.cols;
        cols.extend(right.cols);
        cur = Frame { cols, rows };
    }
    Ok(cur.into_relation())
}

/// Set-semantics recovery of one origin from [`naive_merged_relation`]: rows
/// whose own parts matched (connecting columns non-null), projected on the
/// origin's outputs and deduplicated.
pub fn recover_from_merged(unit: &MergedUnit, merged: &Relation, origin: usize) -> Result<Relation> {
    let schema = merged.schema();
    let mut guard = Vec::new();
    for (i, p) in unit.parts.iter().enumerate() {
        if p.origin != origin {
            continue;
        }
        for c in unit.part_columns(i) {
            if p.connecting
                .iter()
                .any(|e| e.condition.left == c || e.condition.right == c)
            {
                guard.push(schema.resolve(&c)?);
            }
        }
    }
    let outs = unit.outputs(origin);
    let idx = outs.iter().map(|c| schema.resolve(c)).collect::<Result<Vec<_>>>()?;
    let cols: Vec<Column> = unit.origins[origin]
        .outputs
        .iter()
        .zip(&idx)
        .map(|(c, &i)| Column::new(c.alias.clone(), c.column.clone(), schema.columns()[i].kind))
        .collect();
    let rows: Vec<Row> = merged
        .rows()
        .iter()
        .filter(|r| guard.iter().all(|&g| !r[g].is_null()))
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect::<Vec<Value>>())
        .collect();
    Ok(Relation::from_parts(Schema::unique(cols), dedup_rows(rows)))
}
