//! Shared test support: a nested-loop reference evaluator that shares no code
//! with the engine's executor, and seeded generators of small random
//! databases and join queries.

#![allow(dead_code)]

use std::cmp::Ordering;

use joinshare::catalog::Database;
use joinshare::dsl::parse_query;
use joinshare::graph::{build_join_graph, JoinEdge, JoinGraph, TableRef};
use joinshare::ops::{CmpOp, JoinCondition, Operand, Predicate};
use joinshare::query::BoundQuery;
use joinshare::relation::{ColumnRef, Relation, Row, Schema};
use joinshare::value::{Kind, Value};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bound query from SQL text and `alias.column` outputs.
pub fn query(label: &str, sql: &str, outputs: &[&str]) -> BoundQuery {
    let g = build_join_graph(&parse_query(sql).unwrap()).unwrap();
    let outs = outputs.iter().map(|s| ColumnRef::parse(s).unwrap()).collect();
    BoundQuery::new(label, g, outs).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Textbook comparison: null compares with nothing, ints and floats compare
/// numerically, other kinds only with themselves.
fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Int(x), Value::Float(y)) => (*x as f64).partial_cmp(y),
        (Value::Float(x), Value::Int(y)) => x.partial_cmp(&(*y as f64)),
        (Value::Float(x), Value::Float(y)) => x.partial_cmp(y),
        (Value::Text(x), Value::Text(y)) => Some(x.as_ref().cmp(y.as_ref())),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

fn holds(op: CmpOp, a: &Value, b: &Value) -> bool {
    let Some(o) = compare(a, b) else { return false };
    match op {
        CmpOp::Eq => o == Ordering::Equal,
        CmpOp::Ne => o != Ordering::Equal,
        CmpOp::Lt => o == Ordering::Less,
        CmpOp::Le => o != Ordering::Greater,
        CmpOp::Gt => o == Ordering::Greater,
        CmpOp::Ge => o != Ordering::Less,
    }
}

struct Bound<'a> {
    alias: String,
    table: &'a Relation,
}

fn cell<'a>(bound: &[Bound<'a>], rows: &[&'a Row], c: &ColumnRef) -> Option<&'a Value> {
    let i = bound.iter().position(|b| b.alias == c.alias)?;
    let j = bound[i].table.schema().index_of_name(&c.column)?;
    Some(&rows[i][j])
}

/// Bag of `outputs` rows of the inner-join query `g`, sorted. Vertices are
/// bound in declaration order; a condition is checked as soon as both of
/// its sides are bound.
pub fn nested_loop(g: &JoinGraph, outputs: &[ColumnRef], db: &Database) -> Vec<Row> {
    assert!(
        g.edges.iter().all(|e| !e.is_outer()),
        "oracle evaluates inner joins only"
    );
    let bound: Vec<Bound> = g
        .vertices
        .iter()
        .map(|v| Bound {
            alias: v.alias.clone(),
            table: db.table(&v.table).expect("table"),
        })
        .collect();
    let mut out = Vec::new();
    let mut rows: Vec<&Row> = Vec::new();
    descend(g, &bound, outputs, &mut rows, &mut out);
    out.sort();
    out
}

fn descend<'a>(g: &JoinGraph, bound: &[Bound<'a>], outputs: &[ColumnRef], rows: &mut Vec<&'a Row>, out: &mut Vec<Row>) {
    let k = rows.len();
    if k == bound.len() {
        out.push(
            outputs
                .iter()
                .map(|c| cell(bound, rows, c).expect("output column").clone())
                .collect(),
        );
        return;
    }
    let v = &g.vertices[k];
    for r in bound[k].table.rows() {
        rows.push(r);
        let upto = &bound[..=k];
        let filters_ok = v.filters.iter().all(|p| {
            let a = cell(upto, rows, &p.column).unwrap();
            match &p.operand {
                Operand::Literal(l) => holds(p.op, a, l),
                Operand::Column(c) => holds(p.op, a, cell(upto, rows, c).unwrap()),
            }
        });
        let edges_ok = filters_ok
            && g.edges.iter().all(|e| {
                let c = &e.condition;
                match (cell(upto, rows, &c.left), cell(upto, rows, &c.right)) {
                    (Some(a), Some(b)) if e.touches(&v.alias) => holds(c.op, a, b),
                    _ => true,
                }
            });
        if edges_ok {
            descend(g, bound, outputs, rows, out);
        }
        rows.pop();
    }
}

/// Sorted rows of a relation.
pub fn bag(r: &Relation) -> Vec<Row> {
    let mut rows = r.rows().to_vec();
    rows.sort();
    rows
}

/// Sorted distinct rows.
pub fn set(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort();
    rows.dedup();
    rows
}

pub const COLUMNS: [&str; 3] = ["a", "b", "c"];

/// `n` tables `T0..` of three small-domain integer columns, up to
/// `max_rows` rows each, about one cell in ten null.
pub fn random_db(rng: &mut impl Rng, n: usize, max_rows: usize) -> Database {
    let mut db = Database::default();
    for t in 0..n {
        let name = format!("T{t}");
        let cols: Vec<(&str, Kind)> = COLUMNS.iter().map(|c| (*c, Kind::Int)).collect();
        let schema = Schema::for_table(&name, &cols).unwrap();
        let rows = (0..rng.random_range(0..=max_rows))
            .map(|_| {
                (0..3)
                    .map(|_| {
                        if rng.random_bool(0.1) {
                            Value::Null
                        } else {
                            Value::Int(rng.random_range(0..5))
                        }
                    })
                    .collect()
            })
            .collect();
        db.insert(&name, Relation::new(schema, rows).unwrap()).unwrap();
    }
    db
}

fn random_op(rng: &mut impl Rng) -> CmpOp {
    if rng.random_bool(0.8) {
        CmpOp::Eq
    } else {
        *[CmpOp::Ne, CmpOp::Lt, CmpOp::Ge].choose(rng).unwrap()
    }
}

fn column(rng: &mut impl Rng, alias: &str) -> ColumnRef {
    ColumnRef::new(alias, *COLUMNS.choose(rng).unwrap())
}

pub fn random_edge(rng: &mut impl Rng, a: &str, b: &str) -> JoinEdge {
    JoinEdge::inner(JoinCondition::new(column(rng, a), random_op(rng), column(rng, b)))
}

pub fn random_vertex(rng: &mut impl Rng, tables: usize, alias: &str) -> TableRef {
    let mut v = TableRef::new(format!("T{}", rng.random_range(0..tables)), alias);
    if rng.random_bool(0.2) {
        v.filters.push(Predicate::new(
            column(rng, alias),
            random_op(rng),
            Operand::Literal(Value::Int(rng.random_range(0..5))),
        ));
    }
    v
}

/// A connected query of `n` instances `{prefix}0..`: a random spanning tree
/// plus the odd extra edge.
pub fn random_graph(rng: &mut impl Rng, tables: usize, n: usize, prefix: &str) -> JoinGraph {
    let vs: Vec<TableRef> = (0..n)
        .map(|i| random_vertex(rng, tables, &format!("{prefix}{i}")))
        .collect();
    let mut es = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        es.push(random_edge(rng, &vs[j].alias, &vs[i].alias));
    }
    if n > 2 && rng.random_bool(0.3) {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        es.push(random_edge(rng, &vs[i].alias, &vs[j].alias));
    }
    JoinGraph::new(vs, es).unwrap()
}

/// One to three output columns drawn from the query's instances.
pub fn random_outputs(rng: &mut impl Rng, g: &JoinGraph) -> Vec<ColumnRef> {
    (0..rng.random_range(1..=3))
        .map(|_| {
            let v = g.vertices.choose(rng).unwrap();
            column(rng, &v.alias)
        })
        .collect()
}

/// Grow `g` by `extra` new instances `{prefix}{k}`, each attached to an
/// existing instance. New edges always touch a new instance, so the induced
/// subgraph on the old instances is unchanged.
pub fn extend_graph(rng: &mut impl Rng, g: &JoinGraph, tables: usize, extra: usize, prefix: &str) -> JoinGraph {
    let mut vs = g.vertices.clone();
    let mut es = g.edges.clone();
    for k in 0..extra {
        let alias = format!("{prefix}{k}");
        let anchor = vs.choose(rng).unwrap().alias.clone();
        vs.push(random_vertex(rng, tables, &alias));
        es.push(random_edge(rng, &anchor, &alias));
    }
    JoinGraph::new(vs, es).unwrap()
}

/// Copy of the induced subgraph on `keep`, instances renamed `{prefix}{i}`.
pub fn renamed_copy(g: &JoinGraph, keep: &[String], prefix: &str) -> JoinGraph {
    let name = |a: &str| format!("{prefix}{}", keep.iter().position(|k| k == a).unwrap());
    let vs = keep.iter().map(|a| g.vertex(a).unwrap().renamed(&name(a))).collect();
    let es = g
        .edges
        .iter()
        .filter(|e| keep.iter().any(|k| k == e.left()) && keep.iter().any(|k| k == e.right()))
        .map(|e| e.renamed(name))
        .collect();
    JoinGraph::new(vs, es).unwrap()
}

/// A connected set of two or three instances of `g`.
pub fn connected_subset(rng: &mut impl Rng, g: &JoinGraph) -> Vec<String> {
    let e = g.edges.choose(rng).unwrap();
    let mut keep = vec![e.left().to_string(), e.right().to_string()];
    if rng.random_bool(0.4) {
        let next: Vec<&str> = g
            .edges
            .iter()
            .filter_map(|e| {
                let l = keep.iter().any(|k| k == e.left());
                let r = keep.iter().any(|k| k == e.right());
                match (l, r) {
                    (true, false) => Some(e.right()),
                    (false, true) => Some(e.left()),
                    _ => None,
                }
            })
            .collect();
        if let Some(n) = next.choose(rng) {
            keep.push(n.to_string());
        }
    }
    keep
}

/// Two queries over a random database that share at least one join: the
/// second starts as a renamed copy of a connected piece of the first.
pub fn sharing_pair(rng: &mut impl Rng, tables: usize) -> (BoundQuery, BoundQuery) {
    let n1 = rng.random_range(2..=4);
    let g1 = random_graph(rng, tables, n1, "x");
    let keep = connected_subset(rng, &g1);
    let core = renamed_copy(&g1, &keep, "y");
    let extra = rng.random_range(0..=(4 - keep.len()).min(2));
    let g2 = extend_graph(rng, &core, tables, extra, "z");
    let o1 = random_outputs(rng, &g1);
    let o2 = random_outputs(rng, &g2);
    (
        BoundQuery::new("Q1", g1, o1).unwrap(),
        BoundQuery::new("Q2", g2, o2).unwrap(),
    )
}

/// Two or three queries, each containing a renamed copy of one random
/// pattern plus a few instances of its own.
pub fn pattern_workload(r: &mut impl Rng, tables: usize) -> Vec<BoundQuery> {
    let n = r.random_range(2..=3);
    let pattern = random_graph(r, tables, n, "p");
    let keep: Vec<String> = pattern.aliases().map(String::from).collect();
    (0..r.random_range(2..=3))
        .map(|i| {
            let core = renamed_copy(&pattern, &keep, &format!("q{i}_"));
            let extra = r.random_range(0..=2);
            let g = extend_graph(r, &core, tables, extra, &format!("q{i}x"));
            let outs = random_outputs(r, &g);
            BoundQuery::new(format!("Q{i}"), g, outs).unwrap()
        })
        .collect()
}

/// Pieces the mutator splices in: keywords, punctuation and junk.
pub const SPLICES: &[&str] = &[
    "CREATE",
    "GRAPH",
    "VERTEX",
    "EDGE",
    "(",
    ")",
    ";",
    ",",
    ":",
    "SELECT",
    "FROM",
    "WHERE",
    "AND",
    "null",
    "=",
    "<>",
    "<=",
    ".",
    "'",
    "--",
    "\n",
    "Label",
    "Query",
    "ID_Column",
    "C1",
    "é",
    "\u{0}",
    "999999999999999999999",
    "1.5e",
    "\"",
    "Src_Alias",
    "AS",
    "OR",
    "*",
];

/// Byte-level and token-level mutations of a valid model.
pub fn mutate(r: &mut impl Rng, base: &str) -> String {
    let mut s: Vec<char> = base.chars().collect();
    for _ in 0..r.random_range(1..=6) {
        if s.is_empty() {
            break;
        }
        let at = r.random_range(0..=s.len());
        match r.random_range(0..5) {
            0 => {
                let end = (at + r.random_range(1..20)).min(s.len());
                s.drain(at.min(end)..end);
            }
            1 => {
                let ins: Vec<char> = SPLICES.choose(r).unwrap().chars().collect();
                s.splice(at..at, ins);
            }
            2 => s.truncate(at),
            3 => {
                if at < s.len() {
                    s[at] = char::from(r.random_range(0x20u8..0x7f));
                }
            }
            _ => {
                let a = r.random_range(0..s.len());
                let b = (a + r.random_range(1..40)).min(s.len());
                let piece: Vec<char> = s[a..b].to_vec();
                s.splice(at..at, piece);
            }
        }
    }
    s.into_iter().collect()
}

/// A cost-table planner workload: three queries whose plan costs are looked
/// up rather than estimated.
pub mod climb {
    use std::collections::BTreeMap;

    use joinshare::js_oj::MergedUnit;
    use joinshare::planner::{CostOracle, ExtractionPlan};
    use joinshare::query::BoundQuery;
    use joinshare::Result;

    use super::query;

    /// `Q1 = A⋈B`, `Q2 = B–A1–A2–C`, `Q3 = A⋈C`: the pair `A⋈B` occurs in Q1
    /// and Q2, the pair `A⋈C` in Q2 and Q3.
    pub fn three_queries() -> Vec<BoundQuery> {
        vec![
            query("Q1", "SELECT null FROM A, B WHERE A.k = B.k", &["A.k", "B.k"]),
            query(
                "Q2",
                "SELECT null FROM B, A1, A2, C WHERE B.k = A1.k AND A1.x = A2.y AND A2.j = C.j",
                &["B.k", "C.j"],
            ),
            query("Q3", "SELECT null FROM A, C WHERE A.j = C.j", &["A.j", "C.j"]),
        ]
    }

    /// Plan costs looked up by the sequence of accepted rewrites.
    pub struct Table(pub BTreeMap<Vec<&'static str>, f64>);

    impl CostOracle for Table {
        fn plan_cost(&self, plan: &ExtractionPlan) -> Result<f64> {
            Ok(self.0.get(&plan.rewrites()).copied().unwrap_or(1e9))
        }

        fn merged_cost(&self, _: &ExtractionPlan, _: &MergedUnit) -> Result<f64> {
            Ok(0.0)
        }
    }

    pub fn table(entries: &[(&[&'static str], f64)]) -> Table {
        Table(entries.iter().map(|(k, v)| (k.to_vec(), *v)).collect())
    }

    pub const OJ_AB: &str = "JS-OJ(A⋈B)";
    pub const OJ_AC: &str = "JS-OJ(A⋈C)";
    pub const MV_AB: &str = "JS-MV(A⋈B)";
    pub const MV_AC: &str = "JS-MV(A⋈C)";

    pub fn climb_costs() -> Table {
        table(&[
            (&[], 800.0),
            (&[OJ_AB], 2940.0),
            (&[OJ_AC], 760.0),
            (&[MV_AB], 700.0),
            (&[MV_AC], 770.0),
            (&[MV_AB, OJ_AC], 650.0),
            (&[MV_AB, MV_AC], 680.0),
        ])
    }
}
