use std::path::PathBuf;

use thiserror::Error;

use crate::dsl::{Diagnostic, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown value kind `{0}`")]
    UnknownKind(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("table `{table}`, line {line}, column `{column}`: {message}")]
    MalformedRow {
        table: String,
        line: u64,
        column: String,
        message: String,
    },

    #[error("table `{table}`: header {found:?} does not match declared columns {expected:?}")]
    HeaderMismatch {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("table `{0}` already exists")]
    DuplicateTable(String),

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("cannot compare `{left}` ({left_kind}) with `{right}` ({right_kind})")]
    KindMismatch {
        left: String,
        left_kind: String,
        right: String,
        right_kind: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("model failed validation with {} diagnostic(s); first: {}", .0.len(), .0.first().map(|d| d.message.as_str()).unwrap_or(""))]
    Validation(Vec<Diagnostic>),

    #[error("query is disconnected (cartesian product); partitions: {partitions:?}")]
    Disconnected { partitions: Vec<Vec<String>> },

    #[error("invalid join graph: {0}")]
    InvalidGraph(String),

    #[error("queries `{0}` and `{1}` have no common join")]
    NoCommonJoin(String, String),

    #[error("join graph has {vertices} vertices; at most {limit} are supported")]
    CapExceeded { vertices: usize, limit: usize },

    #[error("occurrences of view `{view}` overlap in query `{query}`")]
    OccurrenceOverlap { view: String, query: String },

    #[error("query `{query}` does not consume view `{view}`")]
    NotAConsumer { view: String, query: String },

    #[error("view `{view}` references `{table}`, which is neither a base table nor an earlier view")]
    ViewOrder { view: String, table: String },

    #[error("no statistics for table `{0}`")]
    MissingStats(String),

    #[error("edge `{label}`: endpoint id {id} has no `{vertex}` vertex")]
    DanglingEdge { label: String, vertex: String, id: String },

    #[error("vertex `{label}`: id {id} is {problem}")]
    BadVertexId {
        label: String,
        id: String,
        problem: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
