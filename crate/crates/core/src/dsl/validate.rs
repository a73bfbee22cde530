use super::{Diagnostic, GraphModelDef, ParsedQuery};
use crate::catalog::Database;
use crate::ops::{CmpOp, Operand};
use crate::relation::ColumnRef;
use crate::value::Kind;

/// Check every table, column and comparison of `model` against `db`.
/// Returns an empty list when the model can be executed.
pub fn validate_against_catalog(model: &GraphModelDef, db: &Database) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for v in &model.vertices {
        let loc = format!("vertex {}", v.label);
        if check_query(&v.query, db, &loc, &mut out) {
            let alias = &v.query.from[0].alias;
            column_kind(
                &v.query,
                db,
                &ColumnRef::new(alias.clone(), v.id_column.clone()),
                &format!("{loc}: ID_Column"),
                &mut out,
            );
        }
    }
    for e in &model.edges {
        let loc = format!("edge {}", e.label);
        check_query(&e.query, db, &loc, &mut out);
    }
    out
}

/// Returns whether every FROM table exists (column checks are only
/// meaningful then).
fn check_query(q: &ParsedQuery, db: &Database, loc: &str, out: &mut Vec<Diagnostic>) -> bool {
    let mut tables_ok = true;
    for t in &q.from {
        if !db.contains(&t.table) {
            tables_ok = false;
            out.push(Diagnostic {
                code: "unknown-table".into(),
                message: format!("table `{}` does not exist", t.table),
                location: format!("{loc}: FROM"),
            });
        }
    }
    if !tables_ok {
        return false;
    }
    for c in &q.select {
        column_kind(q, db, c, &format!("{loc}: SELECT"), out);
    }
    for p in &q.conjuncts {
        let where_loc = format!("{loc}: WHERE {p}");
        let lk = column_kind(q, db, &p.column, &where_loc, out);
        let (rk, rname) = match &p.operand {
            Operand::Column(c) => (column_kind(q, db, c, &where_loc, out), c.to_string()),
            Operand::Literal(v) => (v.kind(), v.to_string()),
        };
        if let (Some(lk), Some(rk)) = (lk, rk) {
            let ok = if p.op == CmpOp::Eq && matches!(p.operand, Operand::Column(_)) {
                lk == rk
            } else {
                lk.comparable_with(rk)
            };
            if !ok {
                out.push(Diagnostic {
                    code: "kind-mismatch".into(),
                    message: format!("`{}` is {lk} but `{rname}` is {rk}", p.column),
                    location: where_loc,
                });
            }
        }
    }
    true
}

fn column_kind(q: &ParsedQuery, db: &Database, c: &ColumnRef, loc: &str, out: &mut Vec<Diagnostic>) -> Option<Kind> {
    let table = q.table_of(&c.alias)?;
    let rel = db.table(table).ok()?;
    let found = rel
        .schema()
        .index_of_name(&c.column)
        .map(|i| rel.schema().columns()[i].kind);
    if found.is_none() {
        out.push(Diagnostic {
            code: "unknown-column".into(),
            message: format!("table `{table}` has no column `{}` (referenced as `{c}`)", c.column),
            location: loc.to_string(),
        });
    }
    found
}
