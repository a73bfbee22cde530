//! Measure the executor's per-page and per-tuple costs and turn them into
//! cost constants, normalized so that one probe costs 1.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{page_count, DEFAULT_PAGE_SIZE};
use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::ops::{join_rows, CompiledFilter, HashIndex, JoinKeys, JoinType, Side};
use crate::relation::{Relation, Row, Schema};
use crate::value::{Kind, Value};

/// Raw timings, nanoseconds per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub page: f64,
    pub build: f64,
    pub probe: f64,
    pub output: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub rows: usize,
    pub timings: Timings,
    pub params: CostParams,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn time(reps: usize, mut f: impl FnMut() -> usize) -> f64 {
    median(
        (0..reps)
            .map(|_| {
                let t = Instant::now();
                std::hint::black_box(f());
                t.elapsed().as_nanos() as f64
            })
            .collect(),
    )
}

/// Time scans, hash builds, probes and output on `rows`-row random tables.
pub fn calibrate(rows: usize, seed: u64) -> Result<Calibration> {
    if rows < 1000 {
        return Err(Error::Config("calibration needs at least 1000 rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = Schema::for_table("R", &[("k", Kind::Int), ("v", Kind::Int)])?;
    let build: Vec<Row> = (0..rows as i64)
        .map(|i| vec![Value::Int(i), Value::Int(rng.random_range(0..1000))])
        .collect();
    // probe keys outside the build range never match
    let miss: Vec<Row> = (0..rows as i64)
        .map(|i| vec![Value::Int(-1 - i), Value::Int(0)])
        .collect();
    let hit: Vec<Row> = (0..rows as i64)
        .map(|_| vec![Value::Int(rng.random_range(0..rows as i64)), Value::Int(0)])
        .collect();
    let rel = Relation::new(schema.clone(), build.clone())?;
    let pages = page_count(rel.encoded_bytes(), DEFAULT_PAGE_SIZE) as f64;
    let n = rows as f64;
    let reps = 5;

    let filter = CompiledFilter::compile(&schema, &[])?;
    let scan = time(reps, || {
        rel.rows()
            .iter()
            .filter(|r| filter.matches(r))
            .map(|r| std::hint::black_box(r.to_vec()))
            .fold(0usize, |n, _| n + 1)
    });
    let t_build = time(reps, || {
        let ix = HashIndex::build(&build, vec![0]);
        std::hint::black_box(&ix);
        build.len()
    });
    let keys = JoinKeys {
        eq: vec![(0, 0)],
        residual: Vec::new(),
    };
    let out = [Side::Left(1), Side::Right(1)];
    let t_miss = time(reps, || join_rows(&miss, &build, &keys, JoinType::Inner, &out).0.len());
    let t_hit = time(reps, || join_rows(&hit, &build, &keys, JoinType::Inner, &out).0.len());

    let build_ns = t_build / n;
    let probe_ns = ((t_miss - t_build) / n).max(build_ns * 0.1);
    let output_ns = ((t_hit - t_miss) / n).max(probe_ns * 0.1);
    let page_ns = scan / pages;
    let timings = Timings {
        page: page_ns,
        build: build_ns,
        probe: probe_ns,
        output: output_ns,
    };
    let params = CostParams {
        a_d: page_ns / probe_ns,
        c_build: build_ns / probe_ns,
        c_probe: 1.0,
        c_out: output_ns / probe_ns,
        page_size: DEFAULT_PAGE_SIZE,
    };
    params.validate()?;
    Ok(Calibration { rows, timings, params })
}
