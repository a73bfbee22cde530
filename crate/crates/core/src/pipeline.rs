//! End-to-end extraction: validate the model, plan the edge queries, run
//! the plan and assemble the property graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::catalog::Database;
use crate::cost::CostParams;
use crate::dsl::{validate_against_catalog, GraphModelDef, VertexDef};
use crate::error::{Error, Result};
use crate::graph::build_join_graph;
use crate::js_mv::materialize_views;
use crate::js_oj::execute_merged;
use crate::planner::{optimize, EstimatedCost, ExtractionPlan, Mode};
use crate::query::{execute_graph, BoundQuery, ExecStats};
use crate::relation::{ColumnRef, Relation};
use crate::value::Value;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLines,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json-lines" | "jsonl" => Ok(OutputFormat::JsonLines),
            _ => Err(Error::Config(format!("unknown output format `{s}` (csv, json-lines)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    /// Collapse parallel edges with equal properties.
    pub dedup_edges: bool,
    pub format: OutputFormat,
    pub params: CostParams,
    /// Keep edges whose endpoints are not extracted vertices.
    pub allow_dangling: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Hybrid,
            dedup_edges: true,
            format: OutputFormat::Csv,
            params: CostParams::default(),
            allow_dangling: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: Value,
    pub properties: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: Value,
    pub dst: Value,
    pub properties: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexSet {
    pub property_names: Vec<String>,
    /// Sorted by id.
    pub records: Vec<VertexRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    pub src_label: String,
    pub dst_label: String,
    pub property_names: Vec<String>,
    /// Sorted by (src, dst, properties).
    pub records: Vec<EdgeRecord>,
}

/// Extracted graph in canonical order: labels sorted, records sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyGraph {
    pub vertices: BTreeMap<String, VertexSet>,
    pub edges: BTreeMap<String, EdgeSet>,
}

impl PropertyGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.values().map(|v| v.records.len()).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(|e| e.records.len()).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitTiming {
    pub unit: String,
    pub millis: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: Mode,
    pub wall_millis: f64,
    pub plan_millis: f64,
    pub vertex_millis: f64,
    pub units: Vec<UnitTiming>,
    pub baseline_cost: f64,
    pub estimated_cost: f64,
    pub rewrites: Vec<String>,
    pub exec: ExecStats,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub graph: PropertyGraph,
    pub metrics: Metrics,
    pub plan: ExtractionPlan,
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// Edge queries of a model, in declaration order.
pub fn bound_queries(model: &GraphModelDef) -> Result<Vec<BoundQuery>> {
    model.edges.iter().map(BoundQuery::from_edge).collect()
}

/// Plan the model's edge queries under `cfg.mode` against `db`'s statistics.
pub fn plan_model(model: &GraphModelDef, db: &Database, cfg: &RunConfig) -> Result<ExtractionPlan> {
    let oracle = EstimatedCost::new(db, cfg.params.clone());
    optimize(bound_queries(model)?, cfg.mode, &oracle)
}

/// Run every unit of a plan. Views are materialized first; then plain and
/// merged units run against the augmented catalog. Results are keyed by
/// query label.
pub fn execute_plan(
    plan: &ExtractionPlan,
    db: &Database,
    stats: &mut ExecStats,
    timings: &mut Vec<UnitTiming>,
) -> Result<(BTreeMap<String, Relation>, Database)> {
    let t = Instant::now();
    let db = materialize_views(&plan.views, db, stats)?;
    if !plan.views.is_empty() {
        timings.push(UnitTiming {
            unit: format!(
                "views {}",
                plan.views.iter().map(|v| v.name.as_str()).collect::<Vec<_>>().join(",")
            ),
            millis: millis(t),
        });
    }
    let mut out = BTreeMap::new();
    for q in &plan.queries {
        let t = Instant::now();
        out.insert(q.label.clone(), execute_graph(&q.graph, &q.outputs, &db, stats)?);
        timings.push(UnitTiming {
            unit: q.label.clone(),
            millis: millis(t),
        });
    }
    for m in &plan.merged {
        let t = Instant::now();
        let [a, b] = execute_merged(m, &db, stats)?;
        out.insert(m.origins[0].label.clone(), a);
        out.insert(m.origins[1].label.clone(), b);
        timings.push(UnitTiming {
            unit: format!("{} + {}", m.origins[0].label, m.origins[1].label),
            millis: millis(t),
        });
    }
    Ok((out, db))
}

fn extract_vertices(v: &VertexDef, db: &Database, stats: &mut ExecStats) -> Result<VertexSet> {
    let g = build_join_graph(&v.query)?;
    let alias = v.query.from[0].alias.clone();
    let mut outputs = vec![ColumnRef::new(alias.clone(), v.id_column.clone())];
    outputs.extend(v.properties.iter().map(|p| ColumnRef::new(alias.clone(), p.clone())));
    let rel = execute_graph(&g, &outputs, db, stats)?;
    let mut records: Vec<VertexRecord> = rel
        .into_rows()
        .into_iter()
        .map(|mut r| {
            let id = r.remove(0);
            VertexRecord { id, properties: r }
        })
        .collect();
    records.sort_by(|a, b| (&a.id, &a.properties).cmp(&(&b.id, &b.properties)));
    for w in records.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::BadVertexId {
                label: v.label.clone(),
                id: w[0].id.to_string(),
                problem: "duplicate",
            });
        }
    }
    if let Some(r) = records.iter().find(|r| r.id.is_null()) {
        return Err(Error::BadVertexId {
            label: v.label.clone(),
            id: r.id.to_string(),
            problem: "null",
        });
    }
    Ok(VertexSet {
        property_names: v.properties.clone(),
        records,
    })
}

/// Parse-free entry point: validate, plan, execute and assemble.
pub fn extract(model: &GraphModelDef, db: &Database, cfg: &RunConfig) -> Result<Extraction> {
    let start = Instant::now();
    let diags = validate_against_catalog(model, db);
    if !diags.is_empty() {
        return Err(Error::Validation(diags));
    }
    let mut metrics = Metrics {
        mode: cfg.mode,
        ..Default::default()
    };

    let t = Instant::now();
    let plan = plan_model(model, db, cfg)?;
    metrics.plan_millis = millis(t);
    metrics.baseline_cost = plan.baseline_cost;
    metrics.estimated_cost = plan.estimated_cost;
    metrics.rewrites = plan.rewrites().into_iter().map(String::from).collect();

    let t = Instant::now();
    let mut graph = PropertyGraph::default();
    for v in &model.vertices {
        let set = extract_vertices(v, db, &mut metrics.exec)?;
        graph.vertices.insert(v.label.clone(), set);
    }
    metrics.vertex_millis = millis(t);

    let (results, _) = execute_plan(&plan, db, &mut metrics.exec, &mut metrics.units)?;
    for e in &model.edges {
        let rel = &results[&e.label];
        let mut records: Vec<EdgeRecord> = rel
            .rows()
            .iter()
            .map(|r| EdgeRecord {
                src: r[0].clone(),
                dst: r[1].clone(),
                properties: r[2..].to_vec(),
            })
            .collect();
        records.sort_by(|a, b| (&a.src, &a.dst, &a.properties).cmp(&(&b.src, &b.dst, &b.properties)));
        if cfg.dedup_edges {
            records.dedup();
        }
        if !cfg.allow_dangling {
            for (label, pick) in [(&e.src_label, true), (&e.dst_label, false)] {
                let ids: BTreeSet<&Value> = graph
                    .vertices
                    .get(label)
                    .map(|s| s.records.iter().map(|r| &r.id).collect())
                    .unwrap_or_default();
                if let Some(r) = records
                    .iter()
                    .find(|r| !ids.contains(if pick { &r.src } else { &r.dst }))
                {
                    return Err(Error::DanglingEdge {
                        label: e.label.clone(),
                        vertex: label.clone(),
                        id: (if pick { &r.src } else { &r.dst }).to_string(),
                    });
                }
            }
        }
        graph.edges.insert(
            e.label.clone(),
            EdgeSet {
                src_label: e.src_label.clone(),
                dst_label: e.dst_label.clone(),
                property_names: e.query.select.iter().map(|c| c.column.clone()).collect(),
                records,
            },
        );
    }
    metrics.wall_millis = millis(start);
    Ok(Extraction { graph, metrics, plan })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Write `vertices_<label>` and `edges_<label>` files into `dir`; returns
/// the paths written.
pub fn write_graph(graph: &PropertyGraph, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::JsonLines => "jsonl",
    };
    for (label, set) in &graph.vertices {
        let path = dir.join(format!("vertices_{label}.{ext}"));
        let header: Vec<&str> = std::iter::once("id")
            .chain(set.property_names.iter().map(String::as_str))
            .collect();
        let rows = set
            .records
            .iter()
            .map(|r| std::iter::once(&r.id).chain(r.properties.iter()).collect::<Vec<_>>());
        write_rows(&path, format, &header, rows)?;
        written.push(path);
    }
    for (label, set) in &graph.edges {
        let path = dir.join(format!("edges_{label}.{ext}"));
        let header: Vec<&str> = ["src", "dst"]
            .into_iter()
            .chain(set.property_names.iter().map(String::as_str))
            .collect();
        let rows = set.records.iter().map(|r| {
            [&r.src, &r.dst]
                .into_iter()
                .chain(r.properties.iter())
                .collect::<Vec<_>>()
        });
        write_rows(&path, format, &header, rows)?;
        written.push(path);
    }
    Ok(written)
}

fn write_rows<'a>(
    path: &Path,
    format: OutputFormat,
    header: &[&str],
    rows: impl Iterator<Item = Vec<&'a Value>>,
) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r.iter().map(|v| cell(v)))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        OutputFormat::JsonLines => {
            let mut w = create(path)?;
            for r in rows {
                // header order, not map order
                let fields = header
                    .iter()
                    .zip(r)
                    .map(|(k, v)| Ok(format!("{}:{}", serde_json::to_string(k)?, serde_json::to_string(v)?)))
                    .collect::<Result<Vec<_>>>()?;
                write!(w, "{{{}}}", fields.join(",")).map_err(|e| Error::io(path, e))?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}
