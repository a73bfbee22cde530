//! Table storage, statistics and CSV ingestion.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::relation::{Relation, Row, Schema};
use crate::value::{Kind, Value};

pub const DEFAULT_PAGE_SIZE: u64 = 8192;

/// `max(1, ceil(bytes / page_size))`: even an empty table occupies a page.
pub fn page_count(bytes: u64, page_size: u64) -> u64 {
    bytes.div_ceil(page_size.max(1)).max(1)
}

/// Per-column statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    /// Distinct non-null values.
    pub distinct: u64,
    /// Average encoded bytes per row.
    pub avg_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub cardinality: u64,
    pub total_bytes: u64,
    pub page_count: u64,
    /// Keyed by bare column name.
    pub columns: BTreeMap<String, ColumnStats>,
}

impl TableStats {
    pub fn compute(rel: &Relation, page_size: u64) -> TableStats {
        let arity = rel.schema().arity();
        let mut seen: Vec<HashSet<&Value>> = vec![HashSet::new(); arity];
        let mut bytes = vec![0u64; arity];
        for row in rel.rows() {
            for (i, v) in row.iter().enumerate() {
                bytes[i] += v.encoded_len() as u64;
                if !v.is_null() {
                    seen[i].insert(v);
                }
            }
        }
        let n = rel.len() as u64;
        let total_bytes: u64 = bytes.iter().sum();
        let columns = rel
            .schema()
            .columns()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let avg_width = if n == 0 {
                    // nominal width of a value of the declared kind
                    nominal_width(c.kind)
                } else {
                    bytes[i] as f64 / n as f64
                };
                (
                    c.name.clone(),
                    ColumnStats {
                        distinct: seen[i].len() as u64,
                        avg_width,
                    },
                )
            })
            .collect();
        TableStats {
            cardinality: n,
            total_bytes,
            page_count: page_count(total_bytes, page_size),
            columns,
        }
    }

    pub fn distinct(&self, column: &str) -> Option<u64> {
        self.columns.get(column).map(|c| c.distinct)
    }

    pub fn avg_width(&self, column: &str) -> Option<f64> {
        self.columns.get(column).map(|c| c.avg_width)
    }

    pub fn row_width(&self) -> f64 {
        self.columns.values().map(|c| c.avg_width).sum()
    }
}

fn nominal_width(kind: Kind) -> f64 {
    match kind {
        Kind::Bool => 2.0,
        Kind::Int | Kind::Float => 9.0,
        Kind::Text => 13.0,
    }
}

/// Anything that can answer statistics lookups for the cost model.
pub trait StatsSource {
    fn table_stats(&self, table: &str) -> Option<&TableStats>;
    fn page_size(&self) -> u64;
}

/// Extra (typically estimated) table statistics layered over a base source.
pub struct StatsOverlay<'a> {
    base: &'a dyn StatsSource,
    extra: BTreeMap<String, TableStats>,
}

impl<'a> StatsOverlay<'a> {
    pub fn new(base: &'a dyn StatsSource) -> Self {
        StatsOverlay {
            base,
            extra: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, table: impl Into<String>, stats: TableStats) {
        self.extra.insert(table.into(), stats);
    }
}

impl StatsSource for StatsOverlay<'_> {
    fn table_stats(&self, table: &str) -> Option<&TableStats> {
        self.extra.get(table).or_else(|| self.base.table_stats(table))
    }

    fn page_size(&self) -> u64 {
        self.base.page_size()
    }
}

/// Named tables with statistics. Relations are shared behind `Arc`, so
/// cloning a database is cheap and leaves the original untouched.
#[derive(Clone, Debug)]
pub struct Database {
    tables: BTreeMap<String, Arc<Relation>>,
    stats: BTreeMap<String, TableStats>,
    page_size: u64,
    bytes_materialized: u64,
}

impl Default for Database {
    fn default() -> Self {
        Database::new(DEFAULT_PAGE_SIZE)
    }
}

impl Database {
    pub fn new(page_size: u64) -> Self {
        Database {
            tables: BTreeMap::new(),
            stats: BTreeMap::new(),
            page_size: page_size.max(1),
            bytes_materialized: 0,
        }
    }

    pub fn page_size(&self) -> u64 {
        self.page_size
    }

    /// Register a relation under `name`. Its columns are re-qualified with
    /// the table name.
    pub fn insert(&mut self, name: &str, rel: Relation) -> Result<&TableStats> {
        if self.tables.contains_key(name) {
            return Err(Error::DuplicateTable(name.to_string()));
        }
        let rel = if rel.schema().columns().iter().all(|c| c.qualifier == name) {
            rel
        } else {
            let schema = rel.schema().requalify(name);
            Relation::from_parts(schema, rel.into_rows())
        };
        let stats = TableStats::compute(&rel, self.page_size);
        self.tables.insert(name.to_string(), Arc::new(rel));
        self.stats.insert(name.to_string(), stats);
        Ok(&self.stats[name])
    }

    /// Register a derived relation (a view) and account for the bytes
    /// written.
    pub fn materialize(&mut self, rel: Relation, view: &str) -> Result<TableStats> {
        let bytes = rel.encoded_bytes();
        let stats = self.insert(view, rel)?.clone();
        self.bytes_materialized += bytes;
        Ok(stats)
    }

    /// Total encoded bytes written by [`Database::materialize`].
    pub fn bytes_materialized(&self) -> u64 {
        self.bytes_materialized
    }

    pub fn table(&self, name: &str) -> Result<&Arc<Relation>> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tables.contains_key(name)
    }

    pub fn stats(&self, name: &str) -> Result<&TableStats> {
        self.stats
            .get(name)
            .ok_or_else(|| Error::MissingStats(name.to_string()))
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    /// Parse delimited text with a header row and register it.
    pub fn load_table<R: Read>(
        &mut self,
        name: &str,
        source: R,
        columns: &[(String, Kind)],
        delimiter: u8,
    ) -> Result<&TableStats> {
        if self.tables.contains_key(name) {
            return Err(Error::DuplicateTable(name.to_string()));
        }
        let rel = read_delimited(name, source, columns, delimiter)?;
        self.insert(name, rel)
    }

    /// SHA-256 over table names and encoded rows, in catalog order.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        for (name, rel) in &self.tables {
            hasher.update((name.len() as u32).to_le_bytes());
            hasher.update(name.as_bytes());
            hasher.update((rel.len() as u64).to_le_bytes());
            for row in rel.rows() {
                buf.clear();
                for v in row {
                    v.encode_into(&mut buf);
                }
                hasher.update(&buf);
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Load every table listed in a catalog file. Relative CSV paths are
    /// resolved against the catalog's directory.
    pub fn from_catalog_file(path: &Path) -> Result<Database> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let catalog: CatalogFile = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        catalog.load(base)
    }

    /// Write every table as `<dir>/<name>.csv` plus `<dir>/catalog.json`.
    pub fn write_catalog(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tables = Vec::new();
        for (name, rel) in &self.tables {
            let file = format!("{name}.csv");
            let path = dir.join(&file);
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(rel.schema().columns().iter().map(|c| c.name.as_str()))?;
            for row in rel.rows() {
                w.write_record(row.iter().map(|v| match v {
                    Value::Null => String::new(),
                    v => v.to_string(),
                }))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            tables.push(CatalogTable {
                name: name.clone(),
                path: PathBuf::from(file),
                columns: rel
                    .schema()
                    .columns()
                    .iter()
                    .map(|c| CatalogColumn {
                        name: c.name.clone(),
                        kind: c.kind,
                    })
                    .collect(),
            });
        }
        let catalog = CatalogFile {
            tables,
            delimiter: None,
            page_size: Some(self.page_size),
        };
        let path = dir.join("catalog.json");
        std::fs::write(&path, serde_json::to_string_pretty(&catalog)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

impl StatsSource for Database {
    fn table_stats(&self, table: &str) -> Option<&TableStats> {
        self.stats.get(table)
    }

    fn page_size(&self) -> u64 {
        self.page_size
    }
}

fn read_delimited<R: Read>(table: &str, source: R, columns: &[(String, Kind)], delimiter: u8) -> Result<Relation> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(source);
    let expected: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => {
            return Err(Error::HeaderMismatch {
                table: table.to_string(),
                expected,
                found: Vec::new(),
            })
        }
    };
    let found: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if found != expected {
        return Err(Error::HeaderMismatch {
            table: table.to_string(),
            expected,
            found,
        });
    }
    let mut rows: Vec<Row> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != columns.len() {
            return Err(Error::MalformedRow {
                table: table.to_string(),
                line,
                column: String::new(),
                message: format!("expected {} fields, found {}", columns.len(), rec.len()),
            });
        }
        let row = rec
            .iter()
            .zip(columns)
            .map(|(field, (name, kind))| {
                Value::parse_as(field, *kind).map_err(|message| Error::MalformedRow {
                    table: table.to_string(),
                    line,
                    column: name.clone(),
                    message,
                })
            })
            .collect::<Result<Row>>()?;
        rows.push(row);
    }
    let pairs: Vec<(&str, Kind)> = columns.iter().map(|(n, k)| (n.as_str(), *k)).collect();
    let schema = Schema::for_table(table, &pairs)?;
    Ok(Relation::from_parts(schema, rows))
}

/// On-disk catalog: one JSON document listing tables, columns, kinds and
/// CSV paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub tables: Vec<CatalogTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<char>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_size: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogTable {
    pub name: String,
    pub path: PathBuf,
    pub columns: Vec<CatalogColumn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogColumn {
    pub name: String,
    pub kind: Kind,
}

impl CatalogFile {
    pub fn load(&self, base: &Path) -> Result<Database> {
        let delimiter = match self.delimiter {
            None => b',',
            Some(c) if c.is_ascii() => c as u8,
            Some(c) => return Err(Error::Config(format!("delimiter `{c}` is not ASCII"))),
        };
        let mut db = Database::new(self.page_size.unwrap_or(DEFAULT_PAGE_SIZE));
        for t in &self.tables {
            let path = base.join(&t.path);
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let cols: Vec<(String, Kind)> = t.columns.iter().map(|c| (c.name.clone(), c.kind)).collect();
            db.load_table(&t.name, file, &cols, delimiter)?;
        }
        Ok(db)
    }
}
