mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::rng;
use joinshare::dsl::parse_query;
use joinshare::graph::{
    build_join_graph, common_subgraph_candidates, common_subgraph_candidates_with_cap, enumerate_decompositions,
    JoinEdge, JoinGraph, TableRef, HARD_VERTEX_LIMIT,
};
use joinshare::ops::{CmpOp, JoinCondition, Operand};
use joinshare::relation::ColumnRef;
use joinshare::Error;
use rand::Rng;

type EdgeKey = (String, String, CmpOp, String, String);

fn mirror(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Lt => CmpOp::Gt,
        CmpOp::Le => CmpOp::Ge,
        CmpOp::Gt => CmpOp::Lt,
        CmpOp::Ge => CmpOp::Le,
        other => other,
    }
}

/// Orientation-free key of an edge with its aliases renamed.
fn edge_key(e: &JoinEdge, name: &dyn Fn(&str) -> String) -> EdgeKey {
    let c = &e.condition;
    let fwd = (
        name(&c.left.alias),
        c.left.column.clone(),
        c.op,
        name(&c.right.alias),
        c.right.column.clone(),
    );
    let back = (
        name(&c.right.alias),
        c.right.column.clone(),
        mirror(c.op),
        name(&c.left.alias),
        c.left.column.clone(),
    );
    fwd.min(back)
}

fn vertex_key(v: &TableRef) -> (String, Vec<String>) {
    let mut f: Vec<String> = v
        .filters
        .iter()
        .map(|p| match &p.operand {
            Operand::Literal(l) => format!("{} {:?} {l:?}", p.column.column, p.op),
            Operand::Column(c) => format!("{} {:?} {}", p.column.column, p.op, c.column),
        })
        .collect();
    f.sort();
    (v.table.clone(), f)
}

fn edges_within(g: &JoinGraph, set: &[&str], name: &dyn Fn(&str) -> String) -> Vec<EdgeKey> {
    let mut out: Vec<EdgeKey> = g
        .edges
        .iter()
        .filter(|e| set.contains(&e.left()) && set.contains(&e.right()))
        .map(|e| edge_key(e, name))
        .collect();
    out.sort();
    out
}

fn is_connected(g: &JoinGraph, set: &[&str]) -> bool {
    let mut seen = BTreeSet::from([set[0]]);
    let mut stack = vec![set[0]];
    while let Some(u) = stack.pop() {
        for e in g.edges.iter().filter(|e| e.touches(u)) {
            let w = e.other(u);
            if set.contains(&w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == set.len()
}

/// Every injective map from a connected set of at least two instances of
/// `g1` into `g2` that preserves tables, filters and the joins among them.
fn brute_force(g1: &JoinGraph, g2: &JoinGraph) -> BTreeSet<BTreeMap<String, String>> {
    let a1: Vec<&str> = g1.aliases().collect();
    let a2: Vec<&str> = g2.aliases().collect();
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << a1.len()) {
        let subset: Vec<&str> = (0..a1.len()).filter(|i| mask >> i & 1 == 1).map(|i| a1[i]).collect();
        if subset.len() < 2 || !is_connected(g1, &subset) {
            continue;
        }
        let mut assign = Vec::new();
        extend(g1, g2, &subset, &a2, &mut assign, &mut out);
    }
    out
}

fn extend<'a>(
    g1: &JoinGraph,
    g2: &JoinGraph,
    subset: &[&'a str],
    a2: &[&'a str],
    assign: &mut Vec<&'a str>,
    out: &mut BTreeSet<BTreeMap<String, String>>,
) {
    if assign.len() == subset.len() {
        let m: BTreeMap<String, String> = subset
            .iter()
            .zip(assign.iter())
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let to2 = |a: &str| m[a].clone();
        let same = |a: &str| a.to_string();
        if edges_within(g1, subset, &to2) == edges_within(g2, assign, &same) {
            out.insert(m);
        }
        return;
    }
    let x = subset[assign.len()];
    for &y in a2 {
        if assign.contains(&y) || vertex_key(g1.vertex(x).unwrap()) != vertex_key(g2.vertex(y).unwrap()) {
            continue;
        }
        assign.push(y);
        extend(g1, g2, subset, a2, assign, out);
        assign.pop();
    }
}

#[test]
fn shared_subgraphs_match_brute_force() {
    for seed in 0..300 {
        let mut r = rng(seed);
        let tables = r.random_range(1..=3);
        let (q1, q2) = if r.random_bool(0.7) {
            common::sharing_pair(&mut r, tables)
        } else {
            let n1 = r.random_range(2..=4);
            let n2 = r.random_range(2..=4);
            let g1 = common::random_graph(&mut r, tables, n1, "x");
            let g2 = common::random_graph(&mut r, tables, n2, "y");
            let o = vec![ColumnRef::new("x0", "a")];
            (
                joinshare::query::BoundQuery::new("Q1", g1, o).unwrap(),
                joinshare::query::BoundQuery::new("Q2", g2, vec![ColumnRef::new("y0", "a")]).unwrap(),
            )
        };
        let got: BTreeSet<_> = common_subgraph_candidates(&q1.graph, &q2.graph)
            .unwrap()
            .into_iter()
            .map(|s| s.mapping)
            .collect();
        assert_eq!(got, brute_force(&q1.graph, &q2.graph), "seed {seed}");
    }
}

#[test]
fn decompositions_reassemble_each_query() {
    for seed in 0..100 {
        let mut r = rng(500 + seed);
        let (q1, q2) = common::sharing_pair(&mut r, 3);
        for d in enumerate_decompositions(&q1.graph, &q2.graph).unwrap() {
            for (side, g) in [(1, &q1.graph), (2, &q2.graph)] {
                let back = d.reconstruct(side);
                let keys = |g: &JoinGraph| {
                    let mut v: Vec<_> = g.vertices.iter().map(|t| (t.alias.clone(), vertex_key(t))).collect();
                    v.sort();
                    let all: Vec<&str> = g.aliases().collect();
                    (v, edges_within(g, &all, &|a: &str| a.to_string()))
                };
                assert_eq!(keys(&back), keys(g), "seed {seed}, side {side}");
            }
            for ns in d.non_shared_1.iter().chain(&d.non_shared_2) {
                assert!(ns.is_connected());
            }
        }
    }
}

fn chain(n: usize, prefix: &str) -> JoinGraph {
    let vs = (0..n).map(|i| TableRef::new("T", format!("{prefix}{i}"))).collect();
    let es = (1..n)
        .map(|i| {
            JoinEdge::inner(JoinCondition::eq(
                ColumnRef::new(format!("{prefix}{}", i - 1), "b"),
                ColumnRef::new(format!("{prefix}{i}"), "a"),
            ))
        })
        .collect();
    JoinGraph::new(vs, es).unwrap()
}

#[test]
fn large_graphs_fall_back_then_fail() {
    let (g1, g2) = (chain(20, "x"), chain(20, "y"));
    let found = common_subgraph_candidates(&g1, &g2).unwrap();
    // the greedy search still finds the whole chain
    assert_eq!(found[0].size(), 20);
    let exhaustive = common_subgraph_candidates_with_cap(&chain(6, "x"), &chain(6, "y"), 64).unwrap();
    // every sub-chain of 2..=6 instances, each at every offset of the other chain
    let want: usize = (2..=6).map(|k| (6 - k + 1) * (6 - k + 1)).sum();
    assert_eq!(exhaustive.len(), want);

    let big = chain(HARD_VERTEX_LIMIT + 1, "x");
    let err = common_subgraph_candidates(&big, &g2).unwrap_err();
    assert!(
        matches!(
            err,
            Error::CapExceeded {
                vertices: 65,
                limit: 64
            }
        ),
        "{err}"
    );
}

#[test]
fn building_graphs_from_text() {
    let g = build_join_graph(&parse_query("SELECT null FROM R, S X WHERE R.a = X.b AND X.c > 2").unwrap()).unwrap();
    assert_eq!(g.vertices.len(), 2);
    assert_eq!(g.vertex("X").unwrap().table, "S");
    assert_eq!(g.vertex("X").unwrap().filters.len(), 1);
    assert_eq!(g.edges.len(), 1);

    let err = build_join_graph(&parse_query("SELECT null FROM R, S, U WHERE R.a = S.a").unwrap()).unwrap_err();
    assert!(
        matches!(err, Error::Disconnected { ref partitions } if partitions.len() == 2),
        "{err}"
    );
    assert!(common_subgraph_candidates(&chain(1, "x"), &chain(3, "y"))
        .unwrap()
        .is_empty());
}
