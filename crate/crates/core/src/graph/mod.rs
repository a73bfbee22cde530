//! Join graphs: one vertex per table instance, one edge per two-alias WHERE
//! conjunct, single-alias conjuncts kept as per-vertex filters.

mod matching;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::dsl::ParsedQuery;
use crate::error::{Error, Result};
use crate::ops::{JoinCondition, Operand, Predicate};

pub use matching::{
    common_subgraph_candidates, common_subgraph_candidates_with_cap, embeddings, enumerate_decompositions,
    enumerate_decompositions_with_cap, Decomposition, SharedSubgraph, DEFAULT_VERTEX_CAP, HARD_VERTEX_LIMIT,
};

/// A table instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TableRef {
    pub table: String,
    pub alias: String,
    /// Single-instance conjuncts, sorted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<Predicate>,
}

impl TableRef {
    pub fn new(table: impl Into<String>, alias: impl Into<String>) -> Self {
        TableRef {
            table: table.into(),
            alias: alias.into(),
            filters: Vec::new(),
        }
    }

    /// Same instance under another alias, filters rewritten accordingly.
    pub fn renamed(&self, alias: &str) -> TableRef {
        TableRef {
            table: self.table.clone(),
            alias: alias.to_string(),
            filters: self.filters.iter().map(|p| rename_filter(p, alias)).collect(),
        }
    }
}

fn rename_filter(p: &Predicate, alias: &str) -> Predicate {
    Predicate {
        column: p.column.with_alias(alias),
        op: p.op,
        operand: match &p.operand {
            Operand::Column(c) => Operand::Column(c.with_alias(alias)),
            lit => lit.clone(),
        },
    }
}

/// `f(e)`: how an edge joins its endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinKind {
    Inner,
    /// Left outer join preserving the named endpoint.
    LeftOuter {
        preserved: String,
    },
}

/// One join predicate between two distinct instances. The condition is
/// normalized so that its left column has the lesser qualified name; `left`
/// and `right` name the corresponding aliases.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JoinEdge {
    pub condition: JoinCondition,
    pub kind: JoinKind,
}

impl JoinEdge {
    pub fn new(condition: JoinCondition, kind: JoinKind) -> Self {
        let condition = if condition.right < condition.left {
            condition.flipped()
        } else {
            condition
        };
        JoinEdge { condition, kind }
    }

    pub fn inner(condition: JoinCondition) -> Self {
        JoinEdge::new(condition, JoinKind::Inner)
    }

    pub fn left(&self) -> &str {
        &self.condition.left.alias
    }

    pub fn right(&self) -> &str {
        &self.condition.right.alias
    }

    pub fn touches(&self, alias: &str) -> bool {
        self.left() == alias || self.right() == alias
    }

    /// The endpoint opposite `alias`.
    pub fn other(&self, alias: &str) -> &str {
        if self.left() == alias {
            self.right()
        } else {
            self.left()
        }
    }

    pub fn is_outer(&self) -> bool {
        matches!(self.kind, JoinKind::LeftOuter { .. })
    }

    /// Copy with both aliases renamed through `f`.
    pub fn renamed(&self, f: impl Fn(&str) -> String) -> JoinEdge {
        let c = &self.condition;
        let kind = match &self.kind {
            JoinKind::Inner => JoinKind::Inner,
            JoinKind::LeftOuter { preserved } => JoinKind::LeftOuter {
                preserved: f(preserved),
            },
        };
        JoinEdge::new(
            JoinCondition::new(
                c.left.with_alias(f(&c.left.alias)),
                c.op,
                c.right.with_alias(f(&c.right.alias)),
            ),
            kind,
        )
    }
}

impl fmt::Display for JoinEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            JoinKind::Inner => write!(f, "{}", self.condition),
            JoinKind::LeftOuter { preserved } => {
                write!(f, "{} [outer, preserves {preserved}]", self.condition)
            }
        }
    }
}

/// Undirected multigraph of table instances and join predicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinGraph {
    pub vertices: Vec<TableRef>,
    pub edges: Vec<JoinEdge>,
}

impl JoinGraph {
    /// Assemble a graph, checking that aliases are unique and every edge
    /// joins two distinct vertices of the graph.
    pub fn new(vertices: Vec<TableRef>, edges: Vec<JoinEdge>) -> Result<JoinGraph> {
        let aliases: BTreeSet<&str> = vertices.iter().map(|v| v.alias.as_str()).collect();
        if aliases.len() != vertices.len() {
            return Err(Error::InvalidGraph("duplicate alias".into()));
        }
        for v in &vertices {
            if v.filters.iter().any(|p| !filter_on(p, &v.alias)) {
                return Err(Error::InvalidGraph(format!(
                    "filter on `{}` references another instance",
                    v.alias
                )));
            }
        }
        for e in &edges {
            if e.left() == e.right() {
                return Err(Error::InvalidGraph(format!("self-loop on `{}`", e.left())));
            }
            for a in [e.left(), e.right()] {
                if !aliases.contains(a) {
                    return Err(Error::InvalidGraph(format!("edge `{e}` references unknown `{a}`")));
                }
            }
            if let JoinKind::LeftOuter { preserved } = &e.kind {
                if !e.touches(preserved) {
                    return Err(Error::InvalidGraph(format!("edge `{e}` preserves a non-endpoint")));
                }
            }
        }
        Ok(JoinGraph { vertices, edges })
    }

    pub fn vertex(&self, alias: &str) -> Option<&TableRef> {
        self.vertices.iter().find(|v| v.alias == alias)
    }

    pub fn aliases(&self) -> impl Iterator<Item = &str> {
        self.vertices.iter().map(|v| v.alias.as_str())
    }

    /// Vertex subsets that are connected using only edges inside `within`.
    pub fn components_within(&self, within: &BTreeSet<String>) -> Vec<BTreeSet<String>> {
        let mut parent: BTreeMap<&str, &str> = within.iter().map(|a| (a.as_str(), a.as_str())).collect();
        fn find<'a>(p: &mut BTreeMap<&'a str, &'a str>, x: &'a str) -> &'a str {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p.insert(x, r);
            r
        }
        for e in &self.edges {
            if within.contains(e.left()) && within.contains(e.right()) {
                let (a, b) = (find(&mut parent, e.left()), find(&mut parent, e.right()));
                if a != b {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    parent.insert(hi, lo);
                }
            }
        }
        let mut groups: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for a in within {
            let r = find(&mut parent, a);
            groups.entry(r).or_default().insert(a.clone());
        }
        let mut out: Vec<_> = groups.into_values().collect();
        out.sort();
        out
    }

    pub fn is_connected(&self) -> bool {
        let all: BTreeSet<String> = self.aliases().map(String::from).collect();
        self.components_within(&all).len() <= 1
    }

    /// Induced subgraph on `aliases`.
    pub fn induced(&self, aliases: &BTreeSet<String>) -> JoinGraph {
        JoinGraph {
            vertices: self
                .vertices
                .iter()
                .filter(|v| aliases.contains(&v.alias))
                .cloned()
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| aliases.contains(e.left()) && aliases.contains(e.right()))
                .cloned()
                .collect(),
        }
    }

    /// Alias-preserving canonical text: vertices and edges each sorted. Two
    /// graphs are identical (up to vertex/edge order) iff their encodings are
    /// equal.
    pub fn canonical_encoding(&self) -> String {
        let mut vs: Vec<String> = self
            .vertices
            .iter()
            .map(|v| {
                let mut s = format!("{}:{}", v.alias, v.table);
                if !v.filters.is_empty() {
                    let mut f: Vec<String> = v.filters.iter().map(|p| p.to_string()).collect();
                    f.sort();
                    let _ = write!(s, "[{}]", f.join(" AND "));
                }
                s
            })
            .collect();
        vs.sort();
        let mut es: Vec<String> = self.edges.iter().map(|e| e.to_string()).collect();
        es.sort();
        format!("V{{{}}} E{{{}}}", vs.join(", "), es.join(", "))
    }

    /// Tables in sorted order joined by `⋈`, e.g. `C⋈SS`.
    pub fn pattern_label(&self) -> String {
        let mut t: Vec<&str> = self.vertices.iter().map(|v| v.table.as_str()).collect();
        t.sort();
        t.join("⋈")
    }

    /// Graphviz text; outer edges are dashed and point away from the
    /// preserved side.
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("graph \"{}\" {{\n", escape(name));
        for v in &self.vertices {
            let mut label = format!("{}: {}", v.alias, v.table);
            for p in &v.filters {
                let _ = write!(label, "\\n{}", escape(&p.to_string()));
            }
            let _ = writeln!(s, "  \"{}\" [label=\"{}\"];", escape(&v.alias), label);
        }
        for e in &self.edges {
            let style = if e.is_outer() { ", style=dashed" } else { "" };
            let _ = writeln!(
                s,
                "  \"{}\" -- \"{}\" [label=\"{}\"{style}];",
                escape(e.left()),
                escape(e.right()),
                escape(&e.to_string())
            );
        }
        s.push_str("}\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn filter_on(p: &Predicate, alias: &str) -> bool {
    p.column.alias == alias
        && match &p.operand {
            Operand::Column(c) => c.alias == alias,
            Operand::Literal(_) => true,
        }
}

/// Build the join graph of a parsed query. Rejects queries whose tables are
/// not all connected by join predicates.
pub fn build_join_graph(q: &ParsedQuery) -> Result<JoinGraph> {
    if q.from.is_empty() {
        return Err(Error::InvalidGraph("query has no tables".into()));
    }
    let mut vertices: Vec<TableRef> = q
        .from
        .iter()
        .map(|t| TableRef::new(t.table.clone(), t.alias.clone()))
        .collect();
    let mut edges = Vec::new();
    for p in &q.conjuncts {
        match &p.operand {
            Operand::Column(c) if c.alias != p.column.alias => {
                edges.push(JoinEdge::inner(JoinCondition::new(p.column.clone(), p.op, c.clone())));
            }
            _ => {
                let v = vertices
                    .iter_mut()
                    .find(|v| v.alias == p.column.alias)
                    .ok_or_else(|| Error::InvalidGraph(format!("unknown alias in `{p}`")))?;
                v.filters.push(p.clone());
            }
        }
    }
    for v in &mut vertices {
        v.filters.sort();
    }
    edges.sort();
    let g = JoinGraph::new(vertices, edges)?;
    let all: BTreeSet<String> = g.aliases().map(String::from).collect();
    let parts = g.components_within(&all);
    if parts.len() > 1 {
        return Err(Error::Disconnected {
            partitions: parts.into_iter().map(|p| p.into_iter().collect()).collect(),
        });
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_query;

    #[test]
    fn copur_is_a_chain() {
        let q = parse_query(
            "SELECT null FROM C1, SS1, I, SS2, C2 WHERE C1.c_id=SS1.c_id AND I.i_no=SS1.i_no \
             AND C2.c_id=SS2.c_id AND I.i_no=SS2.i_no",
        )
        .unwrap();
        let g = build_join_graph(&q).unwrap();
        assert_eq!(g.vertices.len(), 5);
        assert_eq!(g.edges.len(), 4);
        let deg = |a: &str| g.edges.iter().filter(|e| e.touches(a)).count();
        assert_eq!(
            [deg("C1"), deg("SS1"), deg("I"), deg("SS2"), deg("C2")],
            [1, 2, 2, 2, 1]
        );
    }

    #[test]
    fn single_table_and_filters() {
        let g = build_join_graph(&parse_query("SELECT null FROM T WHERE T.a > 3").unwrap()).unwrap();
        assert_eq!((g.vertices.len(), g.edges.len()), (1, 0));
        assert_eq!(g.vertices[0].filters.len(), 1);
    }

    #[test]
    fn disconnected_lists_partitions() {
        let q = parse_query("SELECT null FROM A, B, C WHERE A.x = B.x").unwrap();
        match build_join_graph(&q) {
            Err(Error::Disconnected { partitions }) => {
                assert_eq!(partitions, vec![vec!["A".to_string(), "B".into()], vec!["C".into()]]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dot_marks_outer_edges() {
        let e = JoinEdge::new(
            JoinCondition::eq(
                crate::relation::ColumnRef::new("S", "k"),
                crate::relation::ColumnRef::new("T", "k"),
            ),
            JoinKind::LeftOuter { preserved: "S".into() },
        );
        let g = JoinGraph::new(vec![TableRef::new("S", "S"), TableRef::new("T", "T")], vec![e]).unwrap();
        assert!(g.to_dot("g").contains("style=dashed"));
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<JoinGraph>(&json).unwrap(), g);
    }
}
