//! Join sharing by materialized view: a join pattern that occurs at least
//! twice across the workload is evaluated once, stored, and every occurrence
//! is replaced by a scan of the stored result.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::Database;
use crate::error::{Error, Result};
use crate::graph::{embeddings, JoinEdge, JoinGraph, TableRef, DEFAULT_VERTEX_CAP};
use crate::ops::JoinCondition;
use crate::query::{execute_frame, execute_graph, BoundQuery, ExecStats};
use crate::relation::{Column, ColumnRef, Relation, Schema};

/// One output column of a view and the definition column it copies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewColumn {
    pub name: String,
    pub source: ColumnRef,
}

/// One place the view's pattern occurs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub query: String,
    /// Definition alias → consumer alias.
    pub mapping: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewDef {
    pub name: String,
    pub definition: JoinGraph,
    pub columns: Vec<ViewColumn>,
    pub consumers: Vec<Occurrence>,
}

impl ViewDef {
    pub fn occurrence_count(&self) -> usize {
        self.consumers.len()
    }

    pub fn pattern_label(&self) -> String {
        self.definition.pattern_label()
    }

    fn column_for(&self, source: &ColumnRef) -> Option<&str> {
        self.columns
            .iter()
            .find(|c| &c.source == source)
            .map(|c| c.name.as_str())
    }

    /// Consumer labels in first-occurrence order, without repeats.
    pub fn consumer_labels(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.consumers
            .iter()
            .filter(|o| seen.insert(o.query.as_str()))
            .map(|o| o.query.as_str())
            .collect()
    }
}

/// Connected vertex subsets (≥2 instances) of a graph. Graphs above the
/// exhaustive cap only contribute their single joins.
fn connected_subsets(g: &JoinGraph) -> Vec<BTreeSet<String>> {
    let aliases: Vec<String> = g.aliases().map(String::from).collect();
    let n = aliases.len();
    let mut out = Vec::new();
    if n <= DEFAULT_VERTEX_CAP {
        for mask in 1u64..(1u64 << n) {
            if mask.count_ones() < 2 {
                continue;
            }
            let s: BTreeSet<String> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| aliases[i].clone())
                .collect();
            if g.components_within(&s).len() == 1 {
                out.push(s);
            }
        }
    } else {
        log::warn!("{n} instances exceed the view search cap; only single joins are considered");
        let mut seen = BTreeSet::new();
        for e in &g.edges {
            let s = BTreeSet::from([e.left().to_string(), e.right().to_string()]);
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
    }
    out
}

/// Rename a pattern to definition aliases: the table name, or `table_k`
/// when a table appears more than once.
fn definition_of(pattern: &JoinGraph) -> JoinGraph {
    let mut count: BTreeMap<&str, usize> = BTreeMap::new();
    for v in &pattern.vertices {
        *count.entry(v.table.as_str()).or_default() += 1;
    }
    let mut sorted: Vec<&TableRef> = pattern.vertices.iter().collect();
    sorted.sort_by(|a, b| (&a.table, &a.alias).cmp(&(&b.table, &b.alias)));
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rename: BTreeMap<String, String> = BTreeMap::new();
    for v in sorted {
        let k = seen.entry(v.table.as_str()).or_default();
        *k += 1;
        let name = if count[v.table.as_str()] > 1 {
            format!("{}_{}", v.table, k)
        } else {
            v.table.clone()
        };
        rename.insert(v.alias.clone(), name);
    }
    let vertices = pattern.vertices.iter().map(|v| v.renamed(&rename[&v.alias])).collect();
    let edges = pattern.edges.iter().map(|e| e.renamed(|a| rename[a].clone())).collect();
    JoinGraph { vertices, edges }
}

/// Non-overlapping occurrences of `def` in `q`: embeddings deduplicated by
/// vertex set, then taken greedily in vertex-set order.
fn occurrences(def: &JoinGraph, q: &BoundQuery) -> Vec<Occurrence> {
    let mut by_set: BTreeMap<BTreeSet<String>, BTreeMap<String, String>> = BTreeMap::new();
    for m in embeddings(def, &q.graph) {
        let set: BTreeSet<String> = m.values().cloned().collect();
        by_set.entry(set).or_insert(m);
    }
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    for (set, m) in by_set {
        if set.iter().any(|a| used.contains(a)) {
            continue;
        }
        used.extend(set);
        out.push(Occurrence {
            query: q.label.clone(),
            mapping: m,
        });
    }
    out
}

/// Columns of the definition that some consumer reads: outputs of the
/// occurrence's instances and columns of edges leaving the occurrence.
fn needed_columns(occs: &[Occurrence], queries: &[BoundQuery]) -> Vec<ViewColumn> {
    let mut need: BTreeSet<ColumnRef> = BTreeSet::new();
    for o in occs {
        let q = queries
            .iter()
            .find(|q| q.label == o.query)
            .expect("occurrence of a known query");
        let back: BTreeMap<&str, &str> = o.mapping.iter().map(|(d, a)| (a.as_str(), d.as_str())).collect();
        let mut add = |c: &ColumnRef| {
            if let Some(d) = back.get(c.alias.as_str()) {
                need.insert(c.with_alias(*d));
            }
        };
        q.outputs.iter().for_each(&mut add);
        for e in &q.graph.edges {
            let inside = (back.contains_key(e.left()), back.contains_key(e.right()));
            if inside.0 != inside.1 {
                add(&e.condition.left);
                add(&e.condition.right);
            }
        }
    }
    let mut names = BTreeSet::new();
    need.into_iter()
        .map(|source| {
            let base = format!("{}_{}", source.alias, source.column);
            let mut name = base.clone();
            let mut k = 1;
            while !names.insert(name.clone()) {
                k += 1;
                name = format!("{base}_{k}");
            }
            ViewColumn { name, source }
        })
        .collect()
}

/// One view per join pattern occurring at least twice (without overlap)
/// across `queries`, largest patterns first, then by canonical encoding.
/// Views are named `MV{n}` counting from `first_index`.
pub fn propose_views(queries: &[BoundQuery], first_index: usize) -> Vec<ViewDef> {
    // distinct patterns up to isomorphism, as definitions
    let mut defs: Vec<JoinGraph> = Vec::new();
    let mut keys: Vec<(usize, String)> = Vec::new();
    for q in queries {
        for s in connected_subsets(&q.graph) {
            let d = definition_of(&q.graph.induced(&s));
            let key = (d.vertices.len(), d.pattern_label());
            let dup = keys
                .iter()
                .zip(&defs)
                .any(|(k, e)| *k == key && d.edges.len() == e.edges.len() && !embeddings(&d, e).is_empty());
            if !dup {
                keys.push(key);
                defs.push(d);
            }
        }
    }
    let mut found: Vec<(JoinGraph, Vec<Occurrence>)> = Vec::new();
    for d in defs {
        let occs: Vec<Occurrence> = queries.iter().flat_map(|q| occurrences(&d, q)).collect();
        if occs.len() >= 2 {
            found.push((d, occs));
        }
    }
    found.sort_by(|a, b| {
        b.0.vertices
            .len()
            .cmp(&a.0.vertices.len())
            .then_with(|| a.0.canonical_encoding().cmp(&b.0.canonical_encoding()))
    });
    found
        .into_iter()
        .enumerate()
        .map(|(i, (definition, consumers))| {
            let columns = needed_columns(&consumers, queries);
            ViewDef {
                name: format!("MV{}", first_index + i),
                definition,
                columns,
                consumers,
            }
        })
        .collect()
}

/// Replace every occurrence of `v` in `q` by one instance of the view,
/// numbered `{view}_{k}`. Edges leaving an occurrence are re-targeted to the
/// view's output columns.
pub fn rewrite_with_view(q: &BoundQuery, v: &ViewDef) -> Result<BoundQuery> {
    let occs: Vec<&Occurrence> = v.consumers.iter().filter(|o| o.query == q.label).collect();
    if occs.is_empty() {
        return Err(Error::NotAConsumer {
            view: v.name.clone(),
            query: q.label.clone(),
        });
    }
    // consumer alias → (view instance alias, definition alias)
    let mut owner: BTreeMap<&str, (String, &str)> = BTreeMap::new();
    for (k, o) in occs.iter().enumerate() {
        let inst = format!("{}_{}", v.name, k + 1);
        for (d, a) in &o.mapping {
            if q.graph.vertex(a).is_none() {
                return Err(Error::InvalidGraph(format!("`{a}` is not an instance of {}", q.label)));
            }
            if owner.insert(a.as_str(), (inst.clone(), d.as_str())).is_some() {
                return Err(Error::OccurrenceOverlap {
                    view: v.name.clone(),
                    query: q.label.clone(),
                });
            }
        }
    }
    let retarget = |c: &ColumnRef| -> Result<ColumnRef> {
        match owner.get(c.alias.as_str()) {
            None => Ok(c.clone()),
            Some((inst, d)) => {
                let src = c.with_alias(*d);
                let name = v
                    .column_for(&src)
                    .ok_or_else(|| Error::UnknownColumn(format!("{src} is not an output of view {}", v.name)))?;
                Ok(ColumnRef::new(inst.clone(), name))
            }
        }
    };
    let mut vertices: Vec<TableRef> = Vec::new();
    for t in &q.graph.vertices {
        match owner.get(t.alias.as_str()) {
            None => vertices.push(t.clone()),
            Some((inst, _)) => {
                if vertices.iter().all(|x| &x.alias != inst) {
                    vertices.push(TableRef::new(v.name.clone(), inst.clone()));
                }
            }
        }
    }
    let mut edges = Vec::new();
    for e in &q.graph.edges {
        let inside = (owner.get(e.left()), owner.get(e.right()));
        if let (Some(a), Some(b)) = inside {
            if a.0 == b.0 {
                // internal to one occurrence: evaluated inside the view
                continue;
            }
        }
        let c = &e.condition;
        edges.push(JoinEdge::new(
            JoinCondition::new(retarget(&c.left)?, c.op, retarget(&c.right)?),
            e.kind.clone(),
        ));
    }
    let outputs = q.outputs.iter().map(retarget).collect::<Result<Vec<_>>>()?;
    BoundQuery::new(q.label.clone(), JoinGraph::new(vertices, edges)?, outputs)
}

/// Materialize `views` in order into a copy of `db`. A view may read views
/// listed before it.
pub fn materialize_views(views: &[ViewDef], db: &Database, stats: &mut ExecStats) -> Result<Database> {
    let names: BTreeSet<&str> = views.iter().map(|v| v.name.as_str()).collect();
    let mut out = db.clone();
    for v in views {
        if out.contains(&v.name) {
            return Err(Error::DuplicateTable(v.name.clone()));
        }
        for t in &v.definition.vertices {
            if !out.contains(&t.table) && names.contains(t.table.as_str()) {
                return Err(Error::ViewOrder {
                    view: v.name.clone(),
                    table: t.table.clone(),
                });
            }
        }
        let sources: Vec<ColumnRef> = v.columns.iter().map(|c| c.source.clone()).collect();
        let frame = execute_frame(&v.definition, &sources, &out, stats)?;
        let cols: Vec<Column> = v
            .columns
            .iter()
            .zip(&frame.cols)
            .map(|(c, f)| Column::new(v.name.clone(), c.name.clone(), f.kind))
            .collect();
        let rel = Relation::from_parts(Schema::new(cols)?, frame.rows);
        let before = out.bytes_materialized();
        out.materialize(rel, &v.name)?;
        stats.bytes_materialized += out.bytes_materialized() - before;
        *stats.materializations.entry(v.name.clone()).or_default() += 1;
    }
    Ok(out)
}

/// Materialize every view once, then run each rewritten query against the
/// augmented catalog. Results are in `rewritten` order.
pub fn execute_with_views(
    views: &[ViewDef],
    rewritten: &[BoundQuery],
    db: &Database,
    stats: &mut ExecStats,
) -> Result<Vec<Relation>> {
    let db = materialize_views(views, db, stats)?;
    rewritten
        .iter()
        .map(|q| execute_graph(&q.graph, &q.outputs, &db, stats))
        .collect()
}
