//! Greedy hybrid planning: starting from one unit per query, repeatedly
//! apply the single cheapest outer-join merge or view introduction, as long
//! as it strictly lowers the plan cost.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::StatsSource;
use crate::cost::{cost_merged, cost_plan, cost_views, CostParams, CostReport, UnitCost};
use crate::error::{Error, Result};
use crate::graph::JoinGraph;
use crate::js_mv::{propose_views, rewrite_with_view, ViewDef};
use crate::js_oj::{merge_pair, MergedUnit};
use crate::query::BoundQuery;

/// Which rewrites the planner may apply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Naive,
    JsOjOnly,
    JsMvOnly,
    #[default]
    Hybrid,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Naive, Mode::JsOjOnly, Mode::JsMvOnly, Mode::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Naive => "naive",
            Mode::JsOjOnly => "js-oj-only",
            Mode::JsMvOnly => "js-mv-only",
            Mode::Hybrid => "hybrid",
        }
    }

    fn allows_merge(self) -> bool {
        matches!(self, Mode::JsOjOnly | Mode::Hybrid)
    }

    fn allows_views(self) -> bool {
        matches!(self, Mode::JsMvOnly | Mode::Hybrid)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (naive, js-oj-only, js-mv-only, hybrid)")))
    }
}

/// One accepted rewrite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceStep {
    /// `JS-OJ(<shared pattern>)` or `JS-MV(<view pattern>)`.
    pub rewrite: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionPlan {
    /// Materialized before anything else, in order.
    pub views: Vec<ViewDef>,
    /// Queries run on their own, possibly rewritten over views.
    pub queries: Vec<BoundQuery>,
    pub merged: Vec<MergedUnit>,
    pub baseline_cost: f64,
    pub estimated_cost: f64,
    pub provenance: Vec<ProvenanceStep>,
}

/// Coarse shape of a plan, as reported by EXPLAIN.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum PlanUnit {
    ViewStage { views: Vec<String>, queries: Vec<String> },
    Plain { query: String },
    Merged { queries: [String; 2], shared: String },
}

impl ExtractionPlan {
    /// One plain unit per query, no rewrites; costs are filled in by the
    /// planner.
    pub fn baseline(queries: Vec<BoundQuery>) -> ExtractionPlan {
        ExtractionPlan {
            views: Vec::new(),
            queries,
            merged: Vec::new(),
            baseline_cost: 0.0,
            estimated_cost: 0.0,
            provenance: Vec::new(),
        }
    }

    /// Whether `q` scans at least one of this plan's views.
    pub fn reads_views(&self, g: &JoinGraph) -> bool {
        g.vertices.iter().any(|v| self.views.iter().any(|w| w.name == v.table))
    }

    pub fn units(&self) -> Vec<PlanUnit> {
        let mut out = Vec::new();
        if !self.views.is_empty() {
            out.push(PlanUnit::ViewStage {
                views: self.views.iter().map(|v| v.name.clone()).collect(),
                queries: self
                    .queries
                    .iter()
                    .filter(|q| self.reads_views(&q.graph))
                    .map(|q| q.label.clone())
                    .collect(),
            });
        }
        for q in self.queries.iter().filter(|q| !self.reads_views(&q.graph)) {
            out.push(PlanUnit::Plain { query: q.label.clone() });
        }
        for m in &self.merged {
            out.push(PlanUnit::Merged {
                queries: [m.origins[0].label.clone(), m.origins[1].label.clone()],
                shared: m.shared_label(),
            });
        }
        out
    }

    /// Labels of every query the plan answers.
    pub fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = self.queries.iter().map(|q| q.label.clone()).collect();
        for m in &self.merged {
            v.extend(m.origins.iter().map(|q| q.label.clone()));
        }
        v
    }

    pub fn rewrites(&self) -> Vec<&str> {
        self.provenance.iter().map(|s| s.rewrite.as_str()).collect()
    }
}

/// Prices plans and merged units. The estimated implementation evaluates
/// the cost model; tests inject fixed costs.
pub trait CostOracle {
    fn plan_cost(&self, plan: &ExtractionPlan) -> Result<f64>;
    /// Cost of a merged unit built inside `plan` (whose views it may read).
    fn merged_cost(&self, plan: &ExtractionPlan, unit: &MergedUnit) -> Result<f64>;
}

pub struct EstimatedCost<'a> {
    pub stats: &'a dyn StatsSource,
    pub params: CostParams,
}

impl<'a> EstimatedCost<'a> {
    pub fn new(stats: &'a dyn StatsSource, params: CostParams) -> Self {
        EstimatedCost { stats, params }
    }

    pub fn report(&self, plan: &ExtractionPlan) -> Result<CostReport> {
        cost_plan(plan, self.stats, &self.params)
    }
}

impl CostOracle for EstimatedCost<'_> {
    fn plan_cost(&self, plan: &ExtractionPlan) -> Result<f64> {
        Ok(self.report(plan)?.total)
    }

    fn merged_cost(&self, plan: &ExtractionPlan, unit: &MergedUnit) -> Result<f64> {
        let (_, overlay) = cost_views(&plan.views, self.stats, &self.params)?;
        Ok(cost_merged(unit, &overlay, &self.params)?.total)
    }
}

/// A plan one rewrite away from the current one.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub rewrite: String,
    pub plan: ExtractionPlan,
    pub cost: f64,
}

/// Every single-rewrite successor of `plan` allowed by `mode`, costed:
/// first one merge per pair of plain queries sharing a join, then one view
/// per pattern proposal.
pub fn enumerate_candidates(plan: &ExtractionPlan, mode: Mode, oracle: &dyn CostOracle) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    let mut push = |rewrite: String, mut next: ExtractionPlan| -> Result<()> {
        next.provenance.push(ProvenanceStep {
            rewrite: rewrite.clone(),
            before: plan.estimated_cost,
            after: 0.0,
        });
        let cost = oracle.plan_cost(&next)?;
        next.estimated_cost = cost;
        next.provenance.last_mut().unwrap().after = cost;
        out.push(Candidate {
            rewrite,
            plan: next,
            cost,
        });
        Ok(())
    };
    if mode.allows_merge() {
        let qs = &plan.queries;
        for i in 0..qs.len() {
            for j in i + 1..qs.len() {
                let (unit, _) = match merge_pair(&qs[i], &qs[j], &|u| oracle.merged_cost(plan, u)) {
                    Ok(r) => r,
                    Err(Error::NoCommonJoin(..)) => continue,
                    Err(e) => return Err(e),
                };
                let mut next = plan.clone();
                next.queries = qs
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i && k != j)
                    .map(|(_, q)| q.clone())
                    .collect();
                let label = format!("JS-OJ({})", unit.shared_label());
                next.merged.push(unit);
                push(label, next)?;
            }
        }
    }
    if mode.allows_views() {
        let index = plan.views.len() + 1;
        for mut v in propose_views(&plan.queries, index) {
            // each candidate adds one view, so all take the next free name
            v.name = format!("MV{index}");
            let mut next = plan.clone();
            let consumers = v.consumer_labels();
            next.queries = plan
                .queries
                .iter()
                .map(|q| {
                    if consumers.contains(&q.label.as_str()) {
                        rewrite_with_view(q, &v)
                    } else {
                        Ok(q.clone())
                    }
                })
                .collect::<Result<_>>()?;
            let label = format!("JS-MV({})", v.pattern_label());
            next.views.push(v);
            push(label, next)?;
        }
    }
    Ok(out)
}

/// Greedy hill climbing from the baseline plan. A candidate replaces the
/// current plan only if it is strictly cheaper; the first of equally cheap
/// candidates wins.
pub fn optimize(queries: Vec<BoundQuery>, mode: Mode, oracle: &dyn CostOracle) -> Result<ExtractionPlan> {
    let mut plan = ExtractionPlan::baseline(queries);
    plan.baseline_cost = oracle.plan_cost(&plan)?;
    plan.estimated_cost = plan.baseline_cost;
    loop {
        let cands = enumerate_candidates(&plan, mode, oracle)?;
        let best = cands.into_iter().reduce(|a, b| if b.cost < a.cost { b } else { a });
        match best {
            Some(c) if c.cost < plan.estimated_cost => {
                log::info!("accepted {} ({} -> {})", c.rewrite, plan.estimated_cost, c.cost);
                plan = c.plan;
            }
            _ => return Ok(plan),
        }
    }
}

/// Machine-readable plan description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explain {
    pub units: Vec<PlanUnit>,
    pub views: Vec<ExplainView>,
    pub graphs: Vec<ExplainGraph>,
    pub provenance: Vec<ProvenanceStep>,
    pub baseline_cost: f64,
    pub estimated_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CostReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainView {
    pub name: String,
    pub pattern: String,
    pub definition: Vec<String>,
    pub columns: Vec<String>,
    pub occurrences: usize,
    pub consumers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_rows: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_pages: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_rows: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_pages: Option<u64>,
}

/// Join graph of one executed query or merged unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainGraph {
    pub name: String,
    pub instances: Vec<String>,
    pub joins: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
}

fn describe(name: String, g: &JoinGraph, cost: Option<f64>) -> ExplainGraph {
    ExplainGraph {
        name,
        instances: g
            .vertices
            .iter()
            .map(|v| {
                let mut s = format!("{} AS {}", v.table, v.alias);
                for p in &v.filters {
                    let _ = write!(s, " [{p}]");
                }
                s
            })
            .collect(),
        joins: g.edges.iter().map(|e| e.to_string()).collect(),
        cost,
    }
}

/// Describe `plan`; costs are included when a report is given.
pub fn explain(plan: &ExtractionPlan, report: Option<&CostReport>) -> Explain {
    let views = plan
        .views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let vc = report.and_then(|r| r.views.get(i));
            ExplainView {
                name: v.name.clone(),
                pattern: v.pattern_label(),
                definition: v.definition.edges.iter().map(|e| e.to_string()).collect(),
                columns: v.columns.iter().map(|c| format!("{} = {}", c.name, c.source)).collect(),
                occurrences: v.occurrence_count(),
                consumers: v.consumer_labels().into_iter().map(String::from).collect(),
                estimated_rows: vc.map(|c| c.rows),
                estimated_pages: vc.map(|c| c.pages),
                actual_rows: None,
                actual_pages: None,
            }
        })
        .collect();
    let unit_cost = |k: usize| report.and_then(|r| r.units.get(k)).map(UnitCost::total);
    let mut graphs = Vec::new();
    for (k, q) in plan.queries.iter().enumerate() {
        graphs.push(describe(q.label.clone(), &q.graph, unit_cost(k)));
    }
    for (k, m) in plan.merged.iter().enumerate() {
        let name = format!("{} + {}", m.origins[0].label, m.origins[1].label);
        graphs.push(describe(name, &m.graph, unit_cost(plan.queries.len() + k)));
    }
    Explain {
        units: plan.units(),
        views,
        graphs,
        provenance: plan.provenance.clone(),
        baseline_cost: plan.baseline_cost,
        estimated_cost: plan.estimated_cost,
        report: report.cloned(),
    }
}

impl Explain {
    /// Fill in actual view sizes from a catalog the views were
    /// materialized into.
    pub fn attach_actuals(&mut self, db: &crate::catalog::Database) {
        for v in &mut self.views {
            if let Ok(s) = db.stats(&v.name) {
                v.actual_rows = Some(s.cardinality);
                v.actual_pages = Some(s.page_count);
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("explain serializes")
    }

    pub fn from_json(s: &str) -> Result<Explain> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "baseline cost   {:.2}", self.baseline_cost);
        let _ = writeln!(s, "estimated cost  {:.2}", self.estimated_cost);
        if !self.provenance.is_empty() {
            s.push_str("\nrewrites:\n");
            for (i, p) in self.provenance.iter().enumerate() {
                let _ = writeln!(s, "  {}. {}  {:.2} -> {:.2}", i + 1, p.rewrite, p.before, p.after);
            }
        }
        s.push_str("\nunits:\n");
        for u in &self.units {
            match u {
                PlanUnit::ViewStage { views, queries } => {
                    let _ = writeln!(s, "  view stage  {} -> {}", views.join(", "), queries.join(", "));
                }
                PlanUnit::Plain { query } => {
                    let _ = writeln!(s, "  plain       {query}");
                }
                PlanUnit::Merged { queries, shared } => {
                    let _ = writeln!(s, "  merged      {} + {} on {shared}", queries[0], queries[1]);
                }
            }
        }
        for v in &self.views {
            let _ = writeln!(
                s,
                "\nview {} ({}), {} occurrences in {}",
                v.name,
                v.pattern,
                v.occurrences,
                v.consumers.join(", ")
            );
            for d in &v.definition {
                let _ = writeln!(s, "    {d}");
            }
            let _ = writeln!(s, "    columns: {}", v.columns.join(", "));
            if let (Some(r), Some(p)) = (v.estimated_rows, v.estimated_pages) {
                let _ = writeln!(s, "    estimated {r:.0} rows, {p:.0} pages");
            }
            if let (Some(r), Some(p)) = (v.actual_rows, v.actual_pages) {
                let _ = writeln!(s, "    actual    {r} rows, {p} pages");
            }
        }
        for g in &self.graphs {
            let _ = write!(s, "\n{}", g.name);
            if let Some(c) = g.cost {
                let _ = write!(s, "  cost {c:.2}");
            }
            s.push('\n');
            for i in &g.instances {
                let _ = writeln!(s, "    {i}");
            }
            for j in &g.joins {
                let _ = writeln!(s, "    {j}");
            }
        }
        s
    }
}
