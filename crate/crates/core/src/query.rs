//! Executing one inner join graph against a database.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::Database;
use crate::cost::estimate_cardinality;
use crate::dsl::EdgeDef;
use crate::error::{Error, Result};
use crate::graph::{build_join_graph, JoinEdge, JoinGraph};
use crate::ops::{join_rows, CompiledFilter, JoinKeys, JoinType, Side};
use crate::relation::{Column, ColumnRef, Relation, Row, Schema};

/// An edge query ready for execution: its join graph and the columns it
/// produces, in order. For edge definitions the outputs are the source id,
/// the destination id, then the selected properties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub label: String,
    pub graph: JoinGraph,
    pub outputs: Vec<ColumnRef>,
}

impl BoundQuery {
    pub fn new(label: impl Into<String>, graph: JoinGraph, outputs: Vec<ColumnRef>) -> Result<Self> {
        for c in &outputs {
            if graph.vertex(&c.alias).is_none() {
                return Err(Error::UnknownColumn(c.to_string()));
            }
        }
        Ok(BoundQuery {
            label: label.into(),
            graph,
            outputs,
        })
    }

    pub fn from_edge(e: &EdgeDef) -> Result<Self> {
        let mut outputs = vec![e.src_binding.clone(), e.dst_binding.clone()];
        outputs.extend(e.query.select.iter().cloned());
        BoundQuery::new(e.label.clone(), build_join_graph(&e.query)?, outputs)
    }
}

/// Operator-level counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecStats {
    /// Hash-join builds keyed by their conditions written over base-table
    /// names, e.g. `I.i_no = SS.i_no`. Outer-join probes of merged units are
    /// prefixed with `outer `.
    pub joins: BTreeMap<String, u64>,
    pub scans: BTreeMap<String, u64>,
    pub materializations: BTreeMap<String, u64>,
    pub tuples_built: u64,
    pub tuples_probed: u64,
    pub tuples_emitted: u64,
    pub bytes_materialized: u64,
}

impl ExecStats {
    pub fn absorb(&mut self, other: &ExecStats) {
        for (k, v) in &other.joins {
            *self.joins.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.scans {
            *self.scans.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.materializations {
            *self.materializations.entry(k.clone()).or_default() += v;
        }
        self.tuples_built += other.tuples_built;
        self.tuples_probed += other.tuples_probed;
        self.tuples_emitted += other.tuples_emitted;
        self.bytes_materialized += other.bytes_materialized;
    }

    pub fn join_count(&self, signature: &str) -> u64 {
        self.joins.get(signature).copied().unwrap_or(0)
    }

    pub(crate) fn record_join(&mut self, signature: String) {
        *self.joins.entry(signature).or_default() += 1;
    }
}

/// Render join conditions with aliases replaced by base-table names, sorted.
pub(crate) fn join_signature(g_tables: &dyn Fn(&str) -> String, edges: &[&JoinEdge]) -> String {
    let mut parts: Vec<String> = edges
        .iter()
        .map(|e| {
            let c = &e.condition;
            let (l, r) = (
                format!("{}.{}", g_tables(&c.left.alias), c.left.column),
                format!("{}.{}", g_tables(&c.right.alias), c.right.column),
            );
            let (l, op, r) = if r < l { (r, c.op.flip(), l) } else { (l, c.op, r) };
            format!("{l} {op} {r}")
        })
        .collect();
    parts.sort();
    parts.join(" AND ")
}

/// Intermediate result with an explicit column list.
pub(crate) struct Frame {
    pub cols: Vec<Column>,
    pub rows: Vec<Row>,
}

impl Frame {
    pub fn index_of(&self, c: &ColumnRef) -> Option<usize> {
        self.cols
            .iter()
            .position(|x| x.qualifier == c.alias && x.name == c.column)
    }

    pub fn schema(&self) -> Schema {
        Schema::unique(self.cols.clone())
    }

    pub fn into_relation(self) -> Relation {
        let schema = self.schema();
        Relation::from_parts(schema, self.rows)
    }
}

/// Scan one instance: filters applied, only `keep` columns retained.
fn scan(g: &JoinGraph, alias: &str, keep: &BTreeSet<ColumnRef>, db: &Database, stats: &mut ExecStats) -> Result<Frame> {
    let v = g.vertex(alias).expect("alias in graph");
    let rel = db.table(&v.table)?;
    *stats.scans.entry(v.table.clone()).or_default() += 1;
    let schema = rel.schema().requalify(alias);
    let filter = CompiledFilter::compile(&schema, &v.filters)?;
    let mut idx = Vec::new();
    let mut cols = Vec::new();
    for (i, c) in schema.columns().iter().enumerate() {
        if keep.contains(&c.column_ref()) {
            idx.push(i);
            cols.push(c.clone());
        }
    }
    for c in keep.iter().filter(|c| c.alias == alias) {
        if schema.index_of(c).is_none() {
            return Err(Error::UnknownColumn(format!("{c} (table `{}`)", v.table)));
        }
    }
    let rows = rel
        .rows()
        .iter()
        .filter(|r| filter.matches(r))
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
        .collect();
    Ok(Frame { cols, rows })
}

/// Columns referenced by any edge of `g`.
fn join_columns(g: &JoinGraph) -> BTreeSet<ColumnRef> {
    g.edges
        .iter()
        .flat_map(|e| [e.condition.left.clone(), e.condition.right.clone()])
        .collect()
}

/// Evaluate the inner joins of `g` and return the `outputs` columns.
///
/// The join order is the cost model's greedy left-deep order: the first
/// instance is probed through hash tables built on each following instance.
pub fn execute_graph(g: &JoinGraph, outputs: &[ColumnRef], db: &Database, stats: &mut ExecStats) -> Result<Relation> {
    Ok(execute_frame(g, outputs, db, stats)?.into_relation())
}

pub(crate) fn execute_frame(
    g: &JoinGraph,
    outputs: &[ColumnRef],
    db: &Database,
    stats: &mut ExecStats,
) -> Result<Frame> {
    if g.edges.iter().any(JoinEdge::is_outer) {
        return Err(Error::InvalidGraph(
            "outer edges are only executed through merged units".into(),
        ));
    }
    for c in outputs {
        if g.vertex(&c.alias).is_none() {
            return Err(Error::UnknownColumn(c.to_string()));
        }
    }
    let est = estimate_cardinality(g, db, Some(outputs))?;
    let order = est.order;
    let table_of = |a: &str| g.vertex(a).map_or_else(|| a.to_string(), |v| v.table.clone());
    let out_set: BTreeSet<ColumnRef> = outputs.iter().cloned().collect();
    let mut keep: BTreeSet<ColumnRef> = join_columns(g);
    keep.extend(out_set.iter().cloned());

    let mut joined: BTreeSet<String> = BTreeSet::from([order[0].clone()]);
    let mut cur = scan(g, &order[0], &keep, db, stats)?;
    for (k, alias) in order.iter().enumerate().skip(1) {
        let right = scan(g, alias, &keep, db, stats)?;
        let edges: Vec<&JoinEdge> = g
            .edges
            .iter()
            .filter(|e| e.touches(alias) && joined.contains(e.other(alias)))
            .collect();
        joined.insert(alias.clone());
        // columns still needed after this step
        let later: BTreeSet<String> = order[k + 1..].iter().cloned().collect();
        let needed = |c: &Column| {
            let r = c.column_ref();
            out_set.contains(&r)
                || g.edges.iter().any(|e| {
                    (e.condition.left == r && later.contains(e.right()))
                        || (e.condition.right == r && later.contains(e.left()))
                })
        };
        let left_schema = Schema::new(cur.cols.clone())?;
        let right_schema = Schema::new(right.cols.clone())?;
        let conds: Vec<_> = edges
            .iter()
            .map(|e| {
                if e.condition.left.alias == *alias {
                    e.condition.flipped()
                } else {
                    e.condition.clone()
                }
            })
            .collect();
        let keys = JoinKeys::resolve(&left_schema, &right_schema, &conds)?;
        let mut output = Vec::new();
        let mut cols = Vec::new();
        for (i, c) in cur.cols.iter().enumerate() {
            if needed(c) {
                output.push(Side::Left(i));
                cols.push(c.clone());
            }
        }
        for (i, c) in right.cols.iter().enumerate() {
            if needed(c) {
                output.push(Side::Right(i));
                cols.push(c.clone());
            }
        }
        let (rows, counters) = join_rows(&cur.rows, &right.rows, &keys, JoinType::Inner, &output);
        stats.record_join(join_signature(&table_of, &edges));
        stats.tuples_built += right.rows.len() as u64;
        stats.tuples_probed += counters.probed;
        stats.tuples_emitted += counters.emitted;
        cur = Frame { cols, rows };
    }
    // final projection in output order
    let idx = outputs
        .iter()
        .map(|c| cur.index_of(c).ok_or_else(|| Error::UnknownColumn(c.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let cols: Vec<Column> = idx.iter().map(|&i| cur.cols[i].clone()).collect();
    let rows = cur
        .rows
        .into_iter()
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
        .collect();
    Ok(Frame { cols, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_query;
    use crate::value::{Kind, Value};

    fn db() -> Database {
        let mut db = Database::default();
        let r = Relation::new(
            Schema::for_table("R", &[("k", Kind::Int), ("a", Kind::Text)]).unwrap(),
            vec![
                vec![Value::Int(1), Value::text("x")],
                vec![Value::Int(2), Value::text("y")],
            ],
        )
        .unwrap();
        let s = Relation::new(
            Schema::for_table("S", &[("k", Kind::Int), ("b", Kind::Int)]).unwrap(),
            vec![
                vec![Value::Int(2), Value::Int(10)],
                vec![Value::Int(2), Value::Int(11)],
                vec![Value::Int(3), Value::Int(12)],
            ],
        )
        .unwrap();
        db.insert("R", r).unwrap();
        db.insert("S", s).unwrap();
        db
    }

    #[test]
    fn two_way_join_with_filter_and_counters() {
        let db = db();
        let g = build_join_graph(&parse_query("SELECT null FROM R, S WHERE R.k = S.k AND S.b > 10").unwrap()).unwrap();
        let mut st = ExecStats::default();
        let out = execute_graph(&g, &[ColumnRef::new("R", "a"), ColumnRef::new("S", "b")], &db, &mut st).unwrap();
        assert_eq!(out.rows(), &[vec![Value::text("y"), Value::Int(11)]]);
        assert_eq!(st.join_count("R.k = S.k"), 1);
        assert_eq!(st.scans["R"] + st.scans["S"], 2);
    }

    #[test]
    fn self_join_signature_uses_table_names() {
        let db = db();
        let g = build_join_graph(&parse_query("SELECT null FROM S AS x, S AS y WHERE x.k = y.k").unwrap()).unwrap();
        let mut st = ExecStats::default();
        let out = execute_graph(&g, &[ColumnRef::new("x", "b"), ColumnRef::new("y", "b")], &db, &mut st).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(st.join_count("S.k = S.k"), 1);
    }
}
