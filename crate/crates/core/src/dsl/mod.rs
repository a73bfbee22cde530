//! The graph-model definition language.
//!
//! A model is a sequence of `keyword(Key: Value, ...);` statements:
//!
//! ```text
//! CREATE GRAPH(Graph_Name: RetailG);
//! CREATE VERTEX(Graph_Name: RetailG, Label: Customer, ID_Column: c_id,
//!    Query: SELECT name FROM C);
//! CREATE EDGE(Graph_Name: RetailG, Label: CoPur,
//!    Src_Label: Customer, Dst_Label: Customer,
//!    Query: SELECT null FROM C1, SS1, I, SS2, C2
//!    WHERE C1.c_id=SS1.c_id AND I.i_no=SS1.i_no
//!      AND C2.c_id=SS2.c_id AND I.i_no=SS2.i_no);
//! ```
//!
//! Keywords and keys are case-insensitive; identifiers are case-sensitive.
//! `--` starts a comment.
//!
//! In a FROM list, unaliased items whose names differ only in a numeric
//! suffix (`C1`, `C2`) are read as aliases of the table named by the common
//! stem (`C`). A lone `T1` still names table `T1`. Explicit `T AS x` or
//! `T x` aliases are never rewritten.

mod lexer;
mod parser;
mod validate;

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::ops::{Operand, Predicate};
use crate::relation::ColumnRef;

pub use parser::{parse_model, parse_query};
pub use validate::validate_against_catalog;

/// A syntax or resolution error at a source position (1-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

/// A catalog validation finding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Stable machine-readable code, e.g. `unknown-table`.
    pub code: String,
    pub message: String,
    /// Definition and clause the finding refers to, e.g. `edge CoPur: WHERE`.
    pub location: String,
}

impl Diagnostic {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("diagnostic serializes")
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.code, self.location, self.message)
    }
}

/// One `FROM` entry.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TableItem {
    pub table: String,
    pub alias: String,
}

/// `SELECT cols FROM items WHERE conjuncts`, normalized: every column is
/// alias-qualified, each column-vs-column conjunct has the lesser qualified
/// name on the left, literals are on the right, and conjuncts are sorted.
/// An empty select list means no properties (`SELECT null`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub select: Vec<ColumnRef>,
    pub from: Vec<TableItem>,
    pub conjuncts: Vec<Predicate>,
}

impl ParsedQuery {
    pub fn table_of(&self, alias: &str) -> Option<&str> {
        self.from.iter().find(|t| t.alias == alias).map(|t| t.table.as_str())
    }

    /// Aliases the conjunct references, in order, without repeats.
    pub fn conjunct_aliases(p: &Predicate) -> Vec<&str> {
        let mut v = vec![p.column.alias.as_str()];
        if let Operand::Column(c) = &p.operand {
            if c.alias != p.column.alias {
                v.push(c.alias.as_str());
            }
        }
        v
    }
}

impl fmt::Display for ParsedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.select.is_empty() {
            f.write_str("null")?;
        } else {
            write_list(f, &self.select)?;
        }
        f.write_str(" FROM ")?;
        for (i, t) in self.from.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            // bare form only where re-parsing cannot read it as shorthand
            let ends_in_digit = t.table.chars().last().is_some_and(|c| c.is_ascii_digit());
            if t.alias == t.table && !ends_in_digit {
                f.write_str(&t.table)?;
            } else {
                write!(f, "{} AS {}", t.table, t.alias)?;
            }
        }
        if !self.conjuncts.is_empty() {
            f.write_str(" WHERE ")?;
            for (i, p) in self.conjuncts.iter().enumerate() {
                if i > 0 {
                    f.write_str(" AND ")?;
                }
                write!(f, "{p}")?;
            }
        }
        Ok(())
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexDef {
    pub label: String,
    pub table: String,
    pub id_column: String,
    /// Property columns of `table`, id column excluded (it is always
    /// extracted).
    pub properties: Vec<String>,
    pub query: ParsedQuery,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDef {
    pub label: String,
    pub src_label: String,
    pub dst_label: String,
    pub query: ParsedQuery,
    /// Where the source vertex id is read from in the query result.
    pub src_binding: ColumnRef,
    pub dst_binding: ColumnRef,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphModelDef {
    pub graph_name: String,
    pub vertices: Vec<VertexDef>,
    pub edges: Vec<EdgeDef>,
}

impl GraphModelDef {
    pub fn vertex(&self, label: &str) -> Option<&VertexDef> {
        self.vertices.iter().find(|v| v.label == label)
    }

    pub fn edge(&self, label: &str) -> Option<&EdgeDef> {
        self.edges.iter().find(|e| e.label == label)
    }

    /// Normalized DSL text; parsing it yields an equal model.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let g = &self.graph_name;
        let _ = writeln!(s, "CREATE GRAPH(Graph_Name: {g});");
        for v in &self.vertices {
            let _ = writeln!(
                s,
                "CREATE VERTEX(Graph_Name: {g}, Label: {}, ID_Column: {},\n   Query: {});",
                v.label, v.id_column, v.query
            );
        }
        for e in &self.edges {
            let _ = write!(
                s,
                "CREATE EDGE(Graph_Name: {g}, Label: {},\n   Src_Label: {}, Dst_Label: {},",
                e.label, e.src_label, e.dst_label
            );
            let (src, dst) = default_aliases(self, e);
            if src.as_deref() != Some(e.src_binding.alias.as_str()) {
                let _ = write!(s, " Src_Alias: {},", e.src_binding.alias);
            }
            if dst.as_deref() != Some(e.dst_binding.alias.as_str()) {
                let _ = write!(s, " Dst_Alias: {},", e.dst_binding.alias);
            }
            let _ = writeln!(s, "\n   Query: {});", e.query);
        }
        s
    }
}

/// The endpoint aliases inferred when no explicit alias is given: the first
/// FROM alias of the source vertex table and the last of the destination
/// vertex table.
pub(crate) fn default_aliases(model: &GraphModelDef, e: &EdgeDef) -> (Option<String>, Option<String>) {
    let pick = |label: &str, first: bool| {
        let table = &model.vertex(label)?.table;
        let mut it = e.query.from.iter().filter(|t| &t.table == table);
        let item = if first { it.next() } else { it.next_back() };
        item.map(|t| t.alias.clone())
    };
    (pick(&e.src_label, true), pick(&e.dst_label, false))
}
