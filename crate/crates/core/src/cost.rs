//! Cardinality estimation and plan costing.
//!
//! Hash joins run left-deep: the first table `T1` is probed through the
//! hash tables built on every other table.
//!
//! ```text
//! Join(Q)      = Σ_{i≥2} Build(T_i) + Probe(T_1)
//! Build(T)     = A_D·N_P(T) + c_build·|T|
//! Probe(T_1)   = A_D·N_P(T_1) + Σ_steps (c_probe·|in| + c_out·|out|)
//! Join(Q_M)    = Join(SQ_S) + Σ Join(SQ_i) + Outer
//! Outer        = Σ Build(SQ_i) + Probe(SQ_S)
//! Cost(P_MV)   = Σ (Join(V) + A_D·N_P(V)) + Σ Join(Q')
//! ```
//!
//! `N_P` counts storage pages (`max(1, ceil(bytes / page_size))`). Probing
//! the shared result through the outer joins multiplies the row count by
//! each attachment's fan-out, `max(1, |SQ_i|·sel)`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{page_count, ColumnStats, StatsOverlay, StatsSource, TableStats, DEFAULT_PAGE_SIZE};
use crate::error::{Error, Result};
use crate::graph::{JoinEdge, JoinGraph};
use crate::js_mv::ViewDef;
use crate::js_oj::MergedUnit;
use crate::ops::{CmpOp, Operand};
use crate::planner::ExtractionPlan;
use crate::query::BoundQuery;
use crate::relation::ColumnRef;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Cost of reading or writing one page.
    pub a_d: f64,
    pub c_build: f64,
    pub c_probe: f64,
    pub c_out: f64,
    pub page_size: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            a_d: 4.0,
            c_build: 1.0,
            c_probe: 1.0,
            c_out: 0.5,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_d", self.a_d),
            ("c_build", self.c_build),
            ("c_probe", self.c_probe),
            ("c_out", self.c_out),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.page_size == 0 {
            return Err(Error::Config("page_size must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: CostParams = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }

    /// Every per-unit constant multiplied by `lambda`; page size unchanged.
    pub fn scaled(&self, lambda: f64) -> CostParams {
        CostParams {
            a_d: self.a_d * lambda,
            c_build: self.c_build * lambda,
            c_probe: self.c_probe * lambda,
            c_out: self.c_out * lambda,
            page_size: self.page_size,
        }
    }

    fn pages(&self, bytes: f64) -> f64 {
        page_count(bytes.max(0.0).ceil() as u64, self.page_size) as f64
    }
}

/// One left-deep join step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepEstimate {
    /// The instance joined in at this step (its hash table is built).
    pub alias: String,
    pub input_rows: f64,
    pub build_rows: f64,
    pub output_rows: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardinalityEstimate {
    pub rows: f64,
    /// Bytes per result row over the estimated columns.
    pub width: f64,
    pub pages: f64,
    /// Left-deep order; the first alias is the probe side.
    pub order: Vec<String>,
    pub steps: Vec<StepEstimate>,
    /// Filtered row estimate per instance.
    pub base_rows: BTreeMap<String, f64>,
    /// Distinct-value estimate per column of the result.
    pub distinct: BTreeMap<ColumnRef, f64>,
    pub widths: BTreeMap<ColumnRef, f64>,
}

impl CardinalityEstimate {
    pub fn distinct_of(&self, c: &ColumnRef) -> f64 {
        self.distinct.get(c).copied().unwrap_or(self.rows).min(self.rows)
    }
}

struct Part {
    rows: f64,
    distinct: BTreeMap<ColumnRef, f64>,
}

fn instance_stats<'s>(stats: &'s dyn StatsSource, g: &JoinGraph, alias: &str) -> Result<&'s TableStats> {
    let v = g
        .vertex(alias)
        .ok_or_else(|| Error::InvalidGraph(format!("unknown alias `{alias}`")))?;
    stats
        .table_stats(&v.table)
        .ok_or_else(|| Error::MissingStats(v.table.clone()))
}

fn eq_selectivity(dl: f64, dr: f64) -> f64 {
    let d = dl.max(dr);
    if d <= 0.0 {
        0.0
    } else {
        1.0 / d
    }
}

fn cmp_selectivity(op: CmpOp, dl: f64, dr: f64) -> f64 {
    match op {
        CmpOp::Eq => eq_selectivity(dl, dr),
        CmpOp::Ne => 1.0 - eq_selectivity(dl, dr),
        _ => 1.0 / 3.0,
    }
}

fn base_part(stats: &dyn StatsSource, g: &JoinGraph, alias: &str) -> Result<Part> {
    let v = g.vertex(alias).expect("alias checked");
    let ts = instance_stats(stats, g, alias)?;
    let card = ts.cardinality as f64;
    let dist = |c: &str| ts.distinct(c).map_or(card, |d| d as f64).min(card);
    let mut sel = 1.0;
    for p in &v.filters {
        let dl = dist(&p.column.column);
        sel *= match &p.operand {
            Operand::Literal(_) => cmp_selectivity(p.op, dl, 0.0),
            Operand::Column(c) => cmp_selectivity(p.op, dl, dist(&c.column)),
        };
    }
    let rows = card * sel;
    let distinct = ts
        .columns
        .keys()
        .map(|c| (ColumnRef::new(alias, c.clone()), dist(c).min(rows)))
        .collect();
    Ok(Part { rows, distinct })
}

fn step_rows(left: &Part, right: &Part, conds: &[&JoinEdge]) -> f64 {
    let mut sel = 1.0;
    for e in conds {
        let c = &e.condition;
        let d = |col: &ColumnRef| {
            let (part, rows) = if left.distinct.contains_key(col) {
                (left, left.rows)
            } else {
                (right, right.rows)
            };
            part.distinct.get(col).copied().unwrap_or(rows).min(rows)
        };
        sel *= cmp_selectivity(c.op, d(&c.left), d(&c.right));
    }
    left.rows * right.rows * sel
}

fn merge_parts(left: Part, right: Part, rows: f64) -> Part {
    let mut distinct = left.distinct;
    distinct.extend(right.distinct);
    for d in distinct.values_mut() {
        *d = d.min(rows);
    }
    Part { rows, distinct }
}

/// Edges between `alias` and any member of `joined`.
fn edges_to<'g>(g: &'g JoinGraph, joined: &BTreeSet<String>, alias: &str) -> Vec<&'g JoinEdge> {
    g.edges
        .iter()
        .filter(|e| e.touches(alias) && joined.contains(e.other(alias)))
        .collect()
}

/// Greedy left-deep estimate. `columns` limits the width computation to the
/// given result columns; `None` counts every column of every instance.
pub fn estimate_cardinality(
    g: &JoinGraph,
    stats: &dyn StatsSource,
    columns: Option<&[ColumnRef]>,
) -> Result<CardinalityEstimate> {
    if g.vertices.is_empty() {
        return Err(Error::InvalidGraph("empty join graph".into()));
    }
    let mut parts: BTreeMap<String, Part> = BTreeMap::new();
    for v in &g.vertices {
        parts.insert(v.alias.clone(), base_part(stats, g, &v.alias)?);
    }
    let base_rows: BTreeMap<String, f64> = parts.iter().map(|(a, p)| (a.clone(), p.rows)).collect();
    let mut widths: BTreeMap<ColumnRef, f64> = BTreeMap::new();
    for v in &g.vertices {
        let ts = instance_stats(stats, g, &v.alias)?;
        for (c, cs) in &ts.columns {
            widths.insert(ColumnRef::new(v.alias.clone(), c.clone()), cs.avg_width);
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut steps = Vec::new();
    let mut joined: BTreeSet<String> = BTreeSet::new();
    let current: Part;
    if g.vertices.len() == 1 {
        let a = g.vertices[0].alias.clone();
        current = parts.remove(&a).unwrap();
        order.push(a);
    } else {
        // first pair: smallest estimated join; ties by alias pair
        let aliases: Vec<String> = parts.keys().cloned().collect();
        let mut best: Option<(f64, String, String)> = None;
        let mut any_adjacent = false;
        for (i, a) in aliases.iter().enumerate() {
            for b in &aliases[i + 1..] {
                let conds: Vec<&JoinEdge> = g.edges.iter().filter(|e| e.touches(a) && e.other(a) == b).collect();
                if conds.is_empty() {
                    continue;
                }
                any_adjacent = true;
                let rows = step_rows(&parts[a], &parts[b], &conds);
                if best.as_ref().is_none_or(|(r, _, _)| rows < *r) {
                    best = Some((rows, a.clone(), b.clone()));
                }
            }
        }
        if !any_adjacent {
            return Err(Error::InvalidGraph("join graph has no join predicate".into()));
        }
        let (rows, a, b) = best.unwrap();
        // the larger input is probed; ties keep the lesser alias as T1
        let (t1, t2) = if parts[&b].rows > parts[&a].rows {
            (b, a)
        } else {
            (a, b)
        };
        let p1 = parts.remove(&t1).unwrap();
        let p2 = parts.remove(&t2).unwrap();
        steps.push(StepEstimate {
            alias: t2.clone(),
            input_rows: p1.rows,
            build_rows: p2.rows,
            output_rows: rows,
        });
        joined.insert(t1.clone());
        joined.insert(t2.clone());
        order.push(t1);
        order.push(t2);
        let mut cur = merge_parts(p1, p2, rows);
        while !parts.is_empty() {
            let mut best: Option<(f64, String)> = None;
            for (a, p) in &parts {
                let conds = edges_to(g, &joined, a);
                if conds.is_empty() {
                    continue;
                }
                let rows = step_rows(&cur, p, &conds);
                if best.as_ref().is_none_or(|(r, _)| rows < *r) {
                    best = Some((rows, a.clone()));
                }
            }
            let (rows, a) = match best {
                Some(b) => b,
                None => {
                    // disconnected remainder: cross product with the
                    // smallest instance
                    let a = parts
                        .iter()
                        .min_by(|x, y| x.1.rows.total_cmp(&y.1.rows))
                        .map(|(a, _)| a.clone())
                        .unwrap();
                    (cur.rows * parts[&a].rows, a)
                }
            };
            let p = parts.remove(&a).unwrap();
            steps.push(StepEstimate {
                alias: a.clone(),
                input_rows: cur.rows,
                build_rows: p.rows,
                output_rows: rows,
            });
            joined.insert(a.clone());
            order.push(a);
            cur = merge_parts(cur, p, rows);
        }
        current = cur;
    }
    let width: f64 = match columns {
        Some(cols) => cols.iter().map(|c| widths.get(c).copied().unwrap_or(0.0)).sum(),
        None => widths.values().sum(),
    };
    let rows = current.rows;
    Ok(CardinalityEstimate {
        rows,
        width,
        pages: 0.0,
        order,
        steps,
        base_rows,
        distinct: current.distinct,
        widths,
    }
    .with_pages(stats.page_size()))
}

impl CardinalityEstimate {
    fn with_pages(mut self, page_size: u64) -> Self {
        self.pages = page_count((self.rows * self.width).ceil() as u64, page_size) as f64;
        self
    }

    /// Page count of the result under `p.page_size`.
    pub fn pages_under(&self, p: &CostParams) -> f64 {
        p.pages(self.rows * self.width)
    }
}

/// Eq. terms of one hash-join query.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinCost {
    /// Σ Build(T_i) over every instance but the first.
    pub build: f64,
    pub probe: f64,
    pub total: f64,
}

fn table_pages(stats: &dyn StatsSource, g: &JoinGraph, alias: &str, p: &CostParams) -> Result<f64> {
    Ok(p.pages(instance_stats(stats, g, alias)?.total_bytes as f64))
}

/// `Join(Q)` for a given estimate.
pub fn join_cost(
    g: &JoinGraph,
    est: &CardinalityEstimate,
    stats: &dyn StatsSource,
    p: &CostParams,
) -> Result<JoinCost> {
    let mut build = 0.0;
    for s in &est.steps {
        build += p.a_d * table_pages(stats, g, &s.alias, p)? + p.c_build * s.build_rows;
    }
    let mut probe = p.a_d * table_pages(stats, g, &est.order[0], p)?;
    for s in &est.steps {
        probe += p.c_probe * s.input_rows + p.c_out * s.output_rows;
    }
    Ok(JoinCost {
        build,
        probe,
        total: build + probe,
    })
}

/// `Join(Q)` of a graph against catalog statistics.
pub fn cost_query(g: &JoinGraph, stats: &dyn StatsSource, p: &CostParams) -> Result<f64> {
    let est = estimate_cardinality(g, stats, None)?;
    Ok(join_cost(g, &est, stats, p)?.total)
}

/// Terms of one merged (outer-join) unit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MergedCost {
    /// `Join(SQ_S)`.
    pub shared: f64,
    /// `Join(SQ_i)` per non-shared subquery.
    pub parts: Vec<f64>,
    /// `Build(SQ_i)` per non-shared subquery.
    pub builds: Vec<f64>,
    /// `Probe(SQ_S)`.
    pub probe: f64,
    /// `Σ Build(SQ_i) + Probe(SQ_S)`.
    pub outer: f64,
    pub total: f64,
    pub shared_rows: f64,
    pub part_rows: Vec<f64>,
}

/// Join(Q_M) for a merged unit.
pub fn cost_merged(unit: &MergedUnit, stats: &dyn StatsSource, p: &CostParams) -> Result<MergedCost> {
    let s_graph = unit.shared_graph();
    let s_cols = unit.shared_columns();
    let s_est = estimate_cardinality(&s_graph, stats, Some(&s_cols))?;
    let shared = join_cost(&s_graph, &s_est, stats, p)?.total;
    let mut parts = Vec::new();
    let mut builds = Vec::new();
    let mut part_rows = Vec::new();
    let mut fanouts = Vec::new();
    for (i, part) in unit.parts.iter().enumerate() {
        let cols = unit.part_columns(i);
        let est = estimate_cardinality(&part.graph, stats, Some(&cols))?;
        parts.push(join_cost(&part.graph, &est, stats, p)?.total);
        builds.push(p.a_d * est.pages_under(p) + p.c_build * est.rows);
        part_rows.push(est.rows);
        let mut sel = 1.0;
        for e in &part.connecting {
            let c = &e.condition;
            let d = |col: &ColumnRef| {
                if part.graph.vertex(&col.alias).is_some() {
                    est.distinct_of(col)
                } else {
                    s_est.distinct_of(col)
                }
            };
            sel *= cmp_selectivity(c.op, d(&c.left), d(&c.right));
        }
        fanouts.push((est.rows * sel).max(1.0));
    }
    // probe chain in ascending fan-out, ties by position
    let mut idx: Vec<usize> = (0..fanouts.len()).collect();
    idx.sort_by(|&a, &b| fanouts[a].total_cmp(&fanouts[b]).then(a.cmp(&b)));
    let mut probe = p.a_d * s_est.pages_under(p);
    let mut rows = s_est.rows;
    for i in idx {
        let out = rows * fanouts[i];
        probe += p.c_probe * rows + p.c_out * out;
        rows = out;
    }
    let outer = builds.iter().sum::<f64>() + probe;
    let total = shared + parts.iter().sum::<f64>() + outer;
    Ok(MergedCost {
        shared,
        parts,
        builds,
        probe,
        outer,
        total,
        shared_rows: s_est.rows,
        part_rows,
    })
}

/// Creation cost of one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewCost {
    pub name: String,
    pub join: f64,
    /// `A_D·N_P(V)`.
    pub materialize: f64,
    pub total: f64,
    pub rows: f64,
    pub pages: f64,
}

/// Estimate every view in order, registering estimated statistics so that
/// later views and rewritten queries can be costed against them.
pub fn cost_views<'a>(
    views: &[ViewDef],
    stats: &'a dyn StatsSource,
    p: &CostParams,
) -> Result<(Vec<ViewCost>, StatsOverlay<'a>)> {
    let mut overlay = StatsOverlay::new(stats);
    let mut out = Vec::new();
    for v in views {
        let cols: Vec<ColumnRef> = v.columns.iter().map(|c| c.source.clone()).collect();
        let est = estimate_cardinality(&v.definition, &overlay, Some(&cols))?;
        let join = join_cost(&v.definition, &est, &overlay, p)?.total;
        let pages = est.pages_under(p);
        let materialize = p.a_d * pages;
        out.push(ViewCost {
            name: v.name.clone(),
            join,
            materialize,
            total: join + materialize,
            rows: est.rows,
            pages,
        });
        let columns = v
            .columns
            .iter()
            .map(|c| {
                (
                    c.name.clone(),
                    ColumnStats {
                        distinct: est.distinct_of(&c.source).round() as u64,
                        avg_width: est.widths.get(&c.source).copied().unwrap_or(0.0),
                    },
                )
            })
            .collect();
        let bytes = (est.rows * est.width).ceil() as u64;
        overlay.insert(
            v.name.clone(),
            TableStats {
                cardinality: est.rows.round() as u64,
                total_bytes: bytes,
                page_count: page_count(bytes, p.page_size),
                columns,
            },
        );
    }
    Ok((out, overlay))
}

/// View creation plus every (rewritten) query.
pub fn cost_mv_plan(
    views: &[ViewDef],
    rewritten: &[JoinGraph],
    stats: &dyn StatsSource,
    p: &CostParams,
) -> Result<f64> {
    let (vc, overlay) = cost_views(views, stats, p)?;
    let mut total: f64 = vc.iter().map(|v| v.total).sum();
    for g in rewritten {
        total += cost_query(g, &overlay, p)?;
    }
    Ok(total)
}

/// Cost of one plan unit in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnitCost {
    Query { label: String, cost: JoinCost },
    Merged { labels: [String; 2], cost: MergedCost },
}

impl UnitCost {
    pub fn total(&self) -> f64 {
        match self {
            UnitCost::Query { cost, .. } => cost.total,
            UnitCost::Merged { cost, .. } => cost.total,
        }
    }
}

/// Per-unit breakdown of a plan's estimated cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub views: Vec<ViewCost>,
    pub units: Vec<UnitCost>,
    pub total: f64,
}

/// Cost of a whole plan: views, then plain (possibly rewritten) queries,
/// then merged units. The total is the plain sum of the listed parts.
pub fn cost_plan(plan: &ExtractionPlan, stats: &dyn StatsSource, p: &CostParams) -> Result<CostReport> {
    let (views, overlay) = cost_views(&plan.views, stats, p)?;
    let mut units = Vec::new();
    for q in &plan.queries {
        units.push(UnitCost::Query {
            label: q.label.clone(),
            cost: query_join_cost(q, &overlay, p)?,
        });
    }
    for m in &plan.merged {
        units.push(UnitCost::Merged {
            labels: [m.origins[0].label.clone(), m.origins[1].label.clone()],
            cost: cost_merged(m, &overlay, p)?,
        });
    }
    let mut total = 0.0;
    for v in &views {
        total += v.total;
    }
    for u in &units {
        total += u.total();
    }
    Ok(CostReport { views, units, total })
}

fn query_join_cost(q: &BoundQuery, stats: &dyn StatsSource, p: &CostParams) -> Result<JoinCost> {
    let est = estimate_cardinality(&q.graph, stats, Some(&q.outputs))?;
    join_cost(&q.graph, &est, stats, p)
}
