//! Relational operators over [`Relation`]s.
//!
//! Every operator is a pure function of its inputs. Joins take a list of
//! column-pair conditions: when at least one is an equality the hash path is
//! used (build on the right input, probe with the left), otherwise the join
//! falls back to a nested loop.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use rustc_hash::{FxHashMap, FxHasher};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::{ColumnRef, Relation, Row, Schema};
use crate::value::{Kind, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<>")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    /// The operator with its operands swapped: `a < b` iff `b > a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    /// Null fails every comparison.
    pub fn eval(self, a: &Value, b: &Value) -> bool {
        use std::cmp::Ordering::*;
        match a.sql_cmp(b) {
            None => false,
            Some(ord) => match self {
                CmpOp::Eq => ord == Equal,
                CmpOp::Ne => ord != Equal,
                CmpOp::Lt => ord == Less,
                CmpOp::Le => ord != Greater,
                CmpOp::Gt => ord == Greater,
                CmpOp::Ge => ord != Less,
            },
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Right-hand side of a single-relation predicate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operand {
    Column(ColumnRef),
    Literal(Value),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Column(c) => write!(f, "{c}"),
            Operand::Literal(Value::Text(s)) => write!(f, "'{}'", s.replace('\'', "''")),
            Operand::Literal(v) => write!(f, "{v}"),
        }
    }
}

/// `column op operand` evaluated against one relation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Predicate {
    pub column: ColumnRef,
    pub op: CmpOp,
    pub operand: Operand,
}

impl Predicate {
    pub fn new(column: ColumnRef, op: CmpOp, operand: Operand) -> Self {
        Predicate { column, op, operand }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.op, self.operand)
    }
}

/// `left op right` where `left` resolves in the left input and `right` in
/// the right input of a join.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JoinCondition {
    pub left: ColumnRef,
    pub op: CmpOp,
    pub right: ColumnRef,
}

impl JoinCondition {
    pub fn new(left: ColumnRef, op: CmpOp, right: ColumnRef) -> Self {
        JoinCondition { left, op, right }
    }

    pub fn eq(left: ColumnRef, right: ColumnRef) -> Self {
        JoinCondition::new(left, CmpOp::Eq, right)
    }

    pub fn flipped(&self) -> Self {
        JoinCondition::new(self.right.clone(), self.op.flip(), self.left.clone())
    }
}

impl fmt::Display for JoinCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left, self.op, self.right)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JoinType {
    Inner,
    LeftOuter,
}

/// Where an output column of a join comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    Left(usize),
    Right(usize),
}

/// Positional form of a join, resolved against concrete schemas.
#[derive(Clone, Debug, Default)]
pub(crate) struct JoinKeys {
    /// Equality pairs (left index, right index).
    pub eq: Vec<(usize, usize)>,
    /// Remaining comparisons (left index, op, right index).
    pub residual: Vec<(usize, CmpOp, usize)>,
}

impl JoinKeys {
    pub fn resolve(left: &Schema, right: &Schema, conds: &[JoinCondition]) -> Result<Self> {
        let mut keys = JoinKeys::default();
        for c in conds {
            let l = left.resolve(&c.left)?;
            let r = right.resolve(&c.right)?;
            let (lk, rk) = (left.columns()[l].kind, right.columns()[r].kind);
            let compatible = if c.op == CmpOp::Eq {
                lk == rk
            } else {
                lk.comparable_with(rk)
            };
            if !compatible {
                return Err(kind_mismatch(&c.left, lk, &c.right, rk));
            }
            if c.op == CmpOp::Eq {
                keys.eq.push((l, r));
            } else {
                keys.residual.push((l, c.op, r));
            }
        }
        Ok(keys)
    }

    fn residual_ok(&self, l: &Row, r: &Row) -> bool {
        self.residual.iter().all(|&(li, op, ri)| op.eval(&l[li], &r[ri]))
    }

    fn all_ok(&self, l: &Row, r: &Row) -> bool {
        self.eq.iter().all(|&(li, ri)| l[li].sql_eq(&r[ri])) && self.residual_ok(l, r)
    }
}

pub(crate) fn kind_mismatch(l: &ColumnRef, lk: Kind, r: &ColumnRef, rk: Kind) -> Error {
    Error::KindMismatch {
        left: l.to_string(),
        left_kind: lk.to_string(),
        right: r.to_string(),
        right_kind: rk.to_string(),
    }
}

/// Work done by one join, for instrumentation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct JoinCounters {
    pub built: u64,
    pub probed: u64,
    pub emitted: u64,
}

/// Hash of the key columns of `row`, or `None` if any key is null.
pub(crate) fn key_hash<'a>(row: &'a Row, cols: impl Iterator<Item = usize>) -> Option<u64> {
    let mut h = FxHasher::default();
    for c in cols {
        let v: &'a Value = &row[c];
        if v.is_null() {
            return None;
        }
        v.hash(&mut h);
    }
    Some(h.finish())
}

/// Hash table over a build input, keyed on a set of columns.
pub(crate) struct HashIndex<'a> {
    rows: &'a [Row],
    buckets: FxHashMap<u64, Vec<u32>>,
}

impl<'a> HashIndex<'a> {
    pub fn build(rows: &'a [Row], cols: Vec<usize>) -> Self {
        let mut buckets: FxHashMap<u64, Vec<u32>> = FxHashMap::default();
        for (i, row) in rows.iter().enumerate() {
            if let Some(h) = key_hash(row, cols.iter().copied()) {
                buckets.entry(h).or_default().push(i as u32);
            }
        }
        HashIndex { rows, buckets }
    }

    /// Candidate rows for a probe key; equality still has to be verified by
    /// the caller because buckets are keyed on the hash.
    pub fn candidates(&self, probe: &Row, probe_cols: &[usize]) -> impl Iterator<Item = &'a Row> + '_ {
        let bucket = key_hash(probe, probe_cols.iter().copied())
            .and_then(|h| self.buckets.get(&h))
            .map(|b| b.as_slice())
            .unwrap_or(&[]);
        let rows = self.rows;
        bucket.iter().map(move |&i| &rows[i as usize])
    }
}

/// Core join loop shared by the public operators and the query runner.
pub(crate) fn join_rows(
    left: &[Row],
    right: &[Row],
    keys: &JoinKeys,
    join_type: JoinType,
    output: &[Side],
) -> (Vec<Row>, JoinCounters) {
    let mut out = Vec::new();
    let mut counters = JoinCounters {
        probed: left.len() as u64,
        ..Default::default()
    };
    let emit = |l: &Row, r: Option<&Row>| -> Row {
        output
            .iter()
            .map(|s| match *s {
                Side::Left(i) => l[i].clone(),
                Side::Right(i) => r.map_or(Value::Null, |r| r[i].clone()),
            })
            .collect()
    };
    if keys.eq.is_empty() {
        for l in left {
            let mut matched = false;
            for r in right {
                if keys.residual_ok(l, r) {
                    matched = true;
                    out.push(emit(l, Some(r)));
                }
            }
            if !matched && join_type == JoinType::LeftOuter {
                out.push(emit(l, None));
            }
        }
    } else {
        let right_cols: Vec<usize> = keys.eq.iter().map(|&(_, r)| r).collect();
        let left_cols: Vec<usize> = keys.eq.iter().map(|&(l, _)| l).collect();
        let index = HashIndex::build(right, right_cols);
        counters.built = right.len() as u64;
        for l in left {
            let mut matched = false;
            for r in index.candidates(l, &left_cols) {
                if keys.all_ok(l, r) {
                    matched = true;
                    out.push(emit(l, Some(r)));
                }
            }
            if !matched && join_type == JoinType::LeftOuter {
                out.push(emit(l, None));
            }
        }
    }
    counters.emitted = out.len() as u64;
    (out, counters)
}

fn full_output(left: &Schema, right: &Schema) -> Vec<Side> {
    (0..left.arity())
        .map(Side::Left)
        .chain((0..right.arity()).map(Side::Right))
        .collect()
}

/// General join on a list of conditions: hash path when any condition is an
/// equality, nested loop otherwise. Output schema is `left ++ right`.
pub fn join(left: &Relation, right: &Relation, conditions: &[JoinCondition], join_type: JoinType) -> Result<Relation> {
    let schema = left.schema().concat(right.schema())?;
    let keys = JoinKeys::resolve(left.schema(), right.schema(), conditions)?;
    let output = full_output(left.schema(), right.schema());
    let (rows, _) = join_rows(left.rows(), right.rows(), &keys, join_type, &output);
    Ok(Relation::from_parts(schema, rows))
}

/// Inner equi-join on one or more column pairs.
pub fn hash_inner_join(left: &Relation, right: &Relation, on: &[(ColumnRef, ColumnRef)]) -> Result<Relation> {
    join(left, right, &equalities(on), JoinType::Inner)
}

/// Left outer equi-join: every `outer` row appears at least once; unmatched
/// rows are padded with nulls on the `inner` columns.
pub fn hash_left_outer_join(outer: &Relation, inner: &Relation, on: &[(ColumnRef, ColumnRef)]) -> Result<Relation> {
    join(outer, inner, &equalities(on), JoinType::LeftOuter)
}

/// Nested-loop join on arbitrary comparisons.
pub fn nested_loop_join(
    left: &Relation,
    right: &Relation,
    conditions: &[JoinCondition],
    join_type: JoinType,
) -> Result<Relation> {
    let schema = left.schema().concat(right.schema())?;
    let keys = JoinKeys::resolve(left.schema(), right.schema(), conditions)?;
    let keys = JoinKeys {
        eq: Vec::new(),
        residual: keys
            .eq
            .iter()
            .map(|&(l, r)| (l, CmpOp::Eq, r))
            .chain(keys.residual.iter().copied())
            .collect(),
    };
    let output = full_output(left.schema(), right.schema());
    let (rows, _) = join_rows(left.rows(), right.rows(), &keys, join_type, &output);
    Ok(Relation::from_parts(schema, rows))
}

fn equalities(on: &[(ColumnRef, ColumnRef)]) -> Vec<JoinCondition> {
    on.iter()
        .map(|(l, r)| JoinCondition::eq(l.clone(), r.clone()))
        .collect()
}

/// Positional form of a conjunction of single-relation predicates.
pub(crate) struct CompiledFilter {
    terms: Vec<(usize, CmpOp, CompiledOperand)>,
}

enum CompiledOperand {
    Column(usize),
    Literal(Value),
}

impl CompiledFilter {
    pub fn compile(schema: &Schema, predicates: &[Predicate]) -> Result<Self> {
        let mut terms = Vec::with_capacity(predicates.len());
        for p in predicates {
            let i = schema.resolve(&p.column)?;
            let lk = schema.columns()[i].kind;
            let operand = match &p.operand {
                Operand::Column(c) => {
                    let j = schema.resolve(c)?;
                    let rk = schema.columns()[j].kind;
                    if !lk.comparable_with(rk) {
                        return Err(kind_mismatch(&p.column, lk, c, rk));
                    }
                    CompiledOperand::Column(j)
                }
                Operand::Literal(v) => {
                    if let Some(rk) = v.kind() {
                        if !lk.comparable_with(rk) {
                            return Err(Error::KindMismatch {
                                left: p.column.to_string(),
                                left_kind: lk.to_string(),
                                right: v.to_string(),
                                right_kind: rk.to_string(),
                            });
                        }
                    }
                    CompiledOperand::Literal(v.clone())
                }
            };
            terms.push((i, p.op, operand));
        }
        Ok(CompiledFilter { terms })
    }

    pub fn matches(&self, row: &Row) -> bool {
        self.terms.iter().all(|(i, op, rhs)| {
            let rhs = match rhs {
                CompiledOperand::Column(j) => &row[*j],
                CompiledOperand::Literal(v) => v,
            };
            op.eval(&row[*i], rhs)
        })
    }
}

/// Keep the rows satisfying every predicate. Null fails every comparison.
pub fn select(rel: &Relation, predicates: &[Predicate]) -> Result<Relation> {
    let filter = CompiledFilter::compile(rel.schema(), predicates)?;
    let rows = rel.rows().iter().filter(|r| filter.matches(r)).cloned().collect();
    Ok(Relation::from_parts(rel.schema().clone(), rows))
}

/// Column subset in the requested order, optionally collapsed to a set
/// (first occurrence kept).
pub fn project(rel: &Relation, columns: &[ColumnRef], dedup: bool) -> Result<Relation> {
    let idx = columns
        .iter()
        .map(|c| rel.schema().resolve(c))
        .collect::<Result<Vec<_>>>()?;
    let schema = rel.schema().project(&idx)?;
    let mut rows: Vec<Row> = rel
        .rows()
        .iter()
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
        .collect();
    if dedup {
        rows = dedup_rows(rows);
    }
    Ok(Relation::from_parts(schema, rows))
}

/// Remove duplicate rows, keeping first occurrences in order.
pub fn dedup_rows(rows: Vec<Row>) -> Vec<Row> {
    let mut seen = HashSet::with_capacity(rows.len());
    rows.into_iter().filter(|r| seen.insert(r.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(alias: &str, col: &str, vals: &[Option<i64>]) -> Relation {
        Relation::new(
            Schema::for_table(alias, &[(col, Kind::Int)]).unwrap(),
            vals.iter().map(|v| vec![Value::from(*v)]).collect(),
        )
        .unwrap()
    }

    fn key(a: &str, b: &str) -> Vec<(ColumnRef, ColumnRef)> {
        vec![(ColumnRef::new(a, "k"), ColumnRef::new(b, "k"))]
    }

    #[test]
    fn inner_join_hand_checked() {
        let r = single("R", "k", &[Some(1), Some(2)]);
        let s = single("S", "k", &[Some(2), Some(2), Some(3)]);
        let out = hash_inner_join(&r, &s, &key("R", "S")).unwrap();
        assert_eq!(
            out.sorted_rows(),
            vec![vec![Value::Int(2), Value::Int(2)], vec![Value::Int(2), Value::Int(2)]]
        );
    }

    #[test]
    fn join_with_empty_is_empty() {
        let r = single("R", "k", &[Some(1), Some(2)]);
        let s = single("S", "k", &[]);
        assert!(hash_inner_join(&r, &s, &key("R", "S")).unwrap().is_empty());
    }

    #[test]
    fn outer_join_hand_checked() {
        let r = single("R", "k", &[Some(1), Some(2)]);
        let s = single("S", "k", &[Some(2)]);
        let out = hash_left_outer_join(&r, &s, &key("R", "S")).unwrap();
        assert_eq!(
            out.sorted_rows(),
            vec![vec![Value::Int(1), Value::Null], vec![Value::Int(2), Value::Int(2)]]
        );
    }

    #[test]
    fn outer_join_with_empty_inner_pads_everything() {
        let r = single("R", "k", &[Some(1), None]);
        let s = single("S", "k", &[]);
        let out = hash_left_outer_join(&r, &s, &key("R", "S")).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.rows().iter().all(|row| row[1].is_null()));
    }

    #[test]
    fn null_keys_never_match() {
        let r = single("R", "k", &[None, Some(1)]);
        let s = single("S", "k", &[None, Some(1)]);
        let out = hash_inner_join(&r, &s, &key("R", "S")).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn kind_mismatch_and_unknown_column() {
        let r = single("R", "k", &[Some(1)]);
        let s = Relation::new(
            Schema::for_table("S", &[("k", Kind::Text)]).unwrap(),
            vec![vec![Value::text("1")]],
        )
        .unwrap();
        assert!(matches!(
            hash_inner_join(&r, &s, &key("R", "S")),
            Err(Error::KindMismatch { .. })
        ));
        assert!(matches!(
            hash_inner_join(
                &r,
                &r.with_alias("Q"),
                &[(ColumnRef::new("R", "zz"), ColumnRef::new("Q", "k"))]
            ),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn non_equality_uses_nested_loop() {
        let r = single("R", "k", &[Some(1), Some(2), Some(3)]);
        let s = single("S", "k", &[Some(2)]);
        let out = join(
            &r,
            &s,
            &[JoinCondition::new(
                ColumnRef::new("R", "k"),
                CmpOp::Lt,
                ColumnRef::new("S", "k"),
            )],
            JoinType::Inner,
        )
        .unwrap();
        assert_eq!(out.rows(), &[vec![Value::Int(1), Value::Int(2)]]);
    }

    #[test]
    fn select_filters() {
        let r = single("R", "k", &[Some(5), Some(6)]);
        let p = Predicate::new(ColumnRef::new("R", "k"), CmpOp::Eq, Operand::Literal(Value::Int(5)));
        assert_eq!(select(&r, &[p]).unwrap().rows(), &[vec![Value::Int(5)]]);
        let n = single("R", "k", &[None]);
        let self_eq = Predicate::new(
            ColumnRef::new("R", "k"),
            CmpOp::Eq,
            Operand::Column(ColumnRef::new("R", "k")),
        );
        assert!(select(&n, &[self_eq]).unwrap().is_empty());
    }

    #[test]
    fn project_dedup_and_identity() {
        let rel = Relation::new(
            Schema::for_table("T", &[("a", Kind::Int), ("b", Kind::Text)]).unwrap(),
            vec![
                vec![Value::Int(1), Value::text("x")],
                vec![Value::Int(1), Value::text("y")],
            ],
        )
        .unwrap();
        let a = project(&rel, &[ColumnRef::new("T", "a")], true).unwrap();
        assert_eq!(a.rows(), &[vec![Value::Int(1)]]);
        let all = project(&rel, &[ColumnRef::new("T", "a"), ColumnRef::new("T", "b")], false).unwrap();
        assert_eq!(all, rel);
    }
}
