use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use joinshare::calibrate::calibrate;
use joinshare::catalog::Database;
use joinshare::cost::CostParams;
use joinshare::dsl::{parse_model, validate_against_catalog, GraphModelDef};
use joinshare::pipeline::{extract, plan_model, write_graph, OutputFormat, RunConfig};
use joinshare::planner::{explain, EstimatedCost, Mode};
use joinshare::synth::{generate_synthetic, SynthSpec};
use joinshare::Error;

#[derive(Parser)]
#[command(
    name = "joinshare",
    version,
    about = "Extract property graphs from relational tables"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load a catalog and print table statistics.
    Load {
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Parse a model file; with a catalog, also check tables and columns.
    Parse {
        model: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Print the normalized model.
        #[arg(long)]
        render: bool,
    },
    /// Print the optimized plan.
    Plan {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        json: bool,
    },
    /// Extract the graph and write it to a directory.
    Extract {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv", value_parser = ["csv", "json-lines"])]
        format: String,
        /// Keep parallel edges.
        #[arg(long)]
        no_dedup: bool,
        #[arg(long)]
        allow_dangling: bool,
    },
    /// Generate the synthetic retail tables.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        store_sales: usize,
        #[arg(long, default_value_t = 2_000)]
        catalog_sales: usize,
        #[arg(long, default_value_t = 500)]
        customers: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 50)]
        promotions: usize,
        #[arg(long, default_value_t = 20)]
        stores: usize,
        #[arg(long, default_value_t = 1.0)]
        skew: f64,
    },
    /// Run all four modes and compare.
    Bench {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
    },
    /// Measure cost constants on this machine.
    Calibrate {
        #[arg(long, default_value_t = 200_000)]
        rows: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long, default_value = "hybrid", value_parser = ["naive", "js-oj-only", "js-mv-only", "hybrid"])]
    mode: String,
    /// Cost constants (TOML).
    #[arg(long)]
    params: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Error> {
        Ok(RunConfig {
            mode: self.mode.parse()?,
            params: match &self.params {
                Some(p) => CostParams::load(p)?,
                None => CostParams::default(),
            },
            ..Default::default()
        })
    }
}

fn read_model(path: &Path) -> Result<GraphModelDef, Error> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(parse_model(&src)?)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Load { catalog } => {
            let db = Database::from_catalog_file(&catalog)?;
            println!("{:<12} {:>10} {:>8} {:>12}", "table", "rows", "pages", "bytes");
            for t in db.table_names() {
                let s = db.stats(t)?;
                println!(
                    "{t:<12} {:>10} {:>8} {:>12}",
                    s.cardinality, s.page_count, s.total_bytes
                );
            }
            println!("checksum {}", db.checksum());
        }
        Cmd::Parse { model, catalog, render } => {
            let m = read_model(&model)?;
            if let Some(c) = catalog {
                let db = Database::from_catalog_file(&c)?;
                let diags = validate_against_catalog(&m, &db);
                if !diags.is_empty() {
                    return Err(Error::Validation(diags));
                }
            }
            if render {
                print!("{}", m.render());
            } else {
                println!(
                    "graph {}: {} vertex definitions, {} edge definitions",
                    m.graph_name,
                    m.vertices.len(),
                    m.edges.len()
                );
            }
        }
        Cmd::Plan { model, run, json } => {
            let m = read_model(&model)?;
            let db = Database::from_catalog_file(&run.catalog)?;
            let cfg = run.config()?;
            let diags = validate_against_catalog(&m, &db);
            if !diags.is_empty() {
                return Err(Error::Validation(diags));
            }
            let plan = plan_model(&m, &db, &cfg)?;
            let report = EstimatedCost::new(&db, cfg.params.clone()).report(&plan)?;
            let ex = explain(&plan, Some(&report));
            if json {
                println!("{}", ex.to_json());
            } else {
                print!("{}", ex.render_text());
            }
        }
        Cmd::Extract {
            model,
            run,
            out,
            format,
            no_dedup,
            allow_dangling,
        } => {
            let m = read_model(&model)?;
            let db = Database::from_catalog_file(&run.catalog)?;
            let cfg = RunConfig {
                format: format.parse::<OutputFormat>()?,
                dedup_edges: !no_dedup,
                allow_dangling,
                ..run.config()?
            };
            let x = extract(&m, &db, &cfg)?;
            let files = write_graph(&x.graph, &out, cfg.format)?;
            let metrics = out.join("metrics.json");
            std::fs::write(&metrics, serde_json::to_string_pretty(&x.metrics)?).map_err(|e| Error::Io {
                path: metrics.clone(),
                source: e,
            })?;
            println!(
                "{} vertices, {} edges, {} files in {:.1} ms",
                x.graph.vertex_count(),
                x.graph.edge_count(),
                files.len() + 1,
                x.metrics.wall_millis
            );
        }
        Cmd::Gen {
            out,
            seed,
            store_sales,
            catalog_sales,
            customers,
            items,
            promotions,
            stores,
            skew,
        } => {
            let spec = SynthSpec {
                store_sales,
                catalog_sales,
                customers,
                items,
                promotions,
                stores,
                skew,
            };
            let db = generate_synthetic(&spec, seed)?;
            let path = db.write_catalog(&out)?;
            println!("wrote {} (checksum {})", path.display(), db.checksum());
        }
        Cmd::Bench { model, run, repeat } => {
            let m = read_model(&model)?;
            let db = Database::from_catalog_file(&run.catalog)?;
            let base = run.config()?;
            println!("{:<12} {:>12} {:>16}  rewrites", "mode", "wall ms", "estimated cost");
            for mode in Mode::ALL {
                let cfg = RunConfig { mode, ..base.clone() };
                let mut best = f64::INFINITY;
                let mut last = None;
                for _ in 0..repeat.max(1) {
                    let t = Instant::now();
                    let x = extract(&m, &db, &cfg)?;
                    best = best.min(t.elapsed().as_secs_f64() * 1000.0);
                    last = Some(x);
                }
                let x = last.unwrap();
                println!(
                    "{:<12} {:>12.1} {:>16.1}  {}",
                    mode.name(),
                    best,
                    x.metrics.estimated_cost,
                    x.metrics.rewrites.join(", ")
                );
            }
        }
        Cmd::Calibrate { rows, out } => {
            let c = calibrate(rows, 1)?;
            log::info!("timings (ns): {:?}", c.timings);
            let toml = c.params.to_toml_string();
            match out {
                Some(p) => std::fs::write(&p, &toml).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?,
                None => print!("{toml}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Validation(diags)) => {
            for d in diags {
                eprintln!("{}", d.to_json_line());
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
