//! Schemas and in-memory relations.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Kind, Value};

pub type Row = Vec<Value>;

/// `alias.column`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub alias: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(alias: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            alias: alias.into(),
            column: column.into(),
        }
    }

    /// Parse `alias.column`.
    pub fn parse(s: &str) -> Option<Self> {
        let (alias, column) = s.split_once('.')?;
        if alias.is_empty() || column.is_empty() {
            return None;
        }
        Some(ColumnRef::new(alias, column))
    }

    pub fn with_alias(&self, alias: impl Into<String>) -> Self {
        ColumnRef::new(alias, self.column.clone())
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.alias, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub qualifier: String,
    pub name: String,
    pub kind: Kind,
}

impl Column {
    pub fn new(qualifier: impl Into<String>, name: impl Into<String>, kind: Kind) -> Self {
        Column {
            qualifier: qualifier.into(),
            name: name.into(),
            kind,
        }
    }

    pub fn qualified_name(&self) -> String {
        format!("{}.{}", self.qualifier, self.name)
    }

    pub fn column_ref(&self) -> ColumnRef {
        ColumnRef::new(self.qualifier.clone(), self.name.clone())
    }
}

/// Ordered, uniquely named columns.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert((c.qualifier.as_str(), c.name.as_str())) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.qualified_name())));
            }
        }
        Ok(Schema { columns })
    }

    /// Like [`Schema::new`], but a repeated column is renamed `name_2`,
    /// `name_3`, ... instead of rejected. Used for result schemas, where a
    /// query may select the same column twice.
    pub fn unique(columns: Vec<Column>) -> Self {
        let mut seen: HashSet<(String, String)> = HashSet::new();
        let mut out = Vec::with_capacity(columns.len());
        for mut c in columns {
            let base = c.name.clone();
            let mut k = 1;
            while !seen.insert((c.qualifier.clone(), c.name.clone())) {
                k += 1;
                c.name = format!("{base}_{k}");
            }
            out.push(c);
        }
        Schema { columns: out }
    }

    /// Schema of a stored table: every column qualified by the table name.
    pub fn for_table(table: &str, columns: &[(&str, Kind)]) -> Result<Self> {
        Schema::new(columns.iter().map(|(n, k)| Column::new(table, *n, *k)).collect())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn index_of(&self, col: &ColumnRef) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.qualifier == col.alias && c.name == col.column)
    }

    pub fn resolve(&self, col: &ColumnRef) -> Result<usize> {
        self.index_of(col).ok_or_else(|| Error::UnknownColumn(col.to_string()))
    }

    /// Index of a column by bare name (ignoring the qualifier).
    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Same columns, re-qualified with `qualifier`.
    pub fn requalify(&self, qualifier: &str) -> Schema {
        Schema {
            columns: self
                .columns
                .iter()
                .map(|c| Column::new(qualifier, c.name.clone(), c.kind))
                .collect(),
        }
    }

    /// `self ++ other`; fails on a name clash.
    pub fn concat(&self, other: &Schema) -> Result<Schema> {
        let mut cols = self.columns.clone();
        cols.extend(other.columns.iter().cloned());
        Schema::new(cols)
    }

    pub fn project(&self, indices: &[usize]) -> Result<Schema> {
        Schema::new(indices.iter().map(|&i| self.columns[i].clone()).collect())
    }
}

/// A multiset of rows under one schema.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    schema: Schema,
    rows: Vec<Row>,
}

impl Relation {
    /// Build a relation, checking arity and kinds of every row.
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.arity() {
                return Err(Error::Schema(format!(
                    "row {i} has {} values, schema has {} columns",
                    row.len(),
                    schema.arity()
                )));
            }
            for (v, c) in row.iter().zip(schema.columns()) {
                if let Some(k) = v.kind() {
                    if k != c.kind {
                        return Err(Error::Schema(format!(
                            "row {i}: value {v} is {k}, column `{}` is {}",
                            c.qualified_name(),
                            c.kind
                        )));
                    }
                }
            }
        }
        Ok(Relation { schema, rows })
    }

    /// Build without validation; callers guarantee the row shape.
    pub(crate) fn from_parts(schema: Schema, rows: Vec<Row>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == schema.arity()));
        Relation { schema, rows }
    }

    pub fn empty(schema: Schema) -> Self {
        Relation {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same rows under a schema re-qualified with `alias`.
    pub fn with_alias(&self, alias: &str) -> Relation {
        Relation {
            schema: self.schema.requalify(alias),
            rows: self.rows.clone(),
        }
    }

    /// Rows sorted structurally; handy for multiset comparison.
    pub fn sorted_rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        rows.sort();
        rows
    }

    /// Serialized size under the page-accounting row encoding.
    pub fn encoded_bytes(&self) -> u64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(Value::encoded_len).sum::<usize>() as u64)
            .sum()
    }
}
