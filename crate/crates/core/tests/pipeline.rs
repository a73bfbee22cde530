mod common;

use std::collections::BTreeSet;

use joinshare::catalog::Database;
use joinshare::dsl::parse_model;
use joinshare::pipeline::{bound_queries, extract, write_graph, OutputFormat, RunConfig};
use joinshare::planner::Mode;
use joinshare::relation::{Relation, Schema};
use joinshare::synth::{generate_synthetic, SynthSpec, INTEGRATED_WORKLOAD, RETAIL_MODEL};
use joinshare::value::{Kind, Value};
use joinshare::Error;

fn int(v: i64) -> Value {
    Value::Int(v)
}

fn table(db: &mut Database, name: &str, cols: &[(&str, Kind)], rows: Vec<Vec<Value>>) {
    db.insert(
        name,
        Relation::new(Schema::for_table(name, cols).unwrap(), rows).unwrap(),
    )
    .unwrap();
}

/// Three customers, three items, two promotions, five sales.
fn tiny_retail() -> Database {
    let mut db = Database::default();
    table(
        &mut db,
        "C",
        &[("c_id", Kind::Int), ("name", Kind::Text)],
        (1..=3).map(|i| vec![int(i), Value::text(format!("c{i}"))]).collect(),
    );
    table(
        &mut db,
        "I",
        &[("i_no", Kind::Int), ("name", Kind::Text), ("price", Kind::Float)],
        (1..=3)
            .map(|i| vec![int(i), Value::text(format!("i{i}")), Value::Float(i as f64 * 1.5)])
            .collect(),
    );
    table(
        &mut db,
        "P",
        &[("p_no", Kind::Int), ("i_no", Kind::Int)],
        vec![vec![int(1), int(1)], vec![int(2), int(3)]],
    );
    table(
        &mut db,
        "SS",
        &[("c_id", Kind::Int), ("i_no", Kind::Int), ("p_no", Kind::Int)],
        vec![
            vec![int(1), int(1), int(1)],
            vec![int(2), int(1), int(2)],
            vec![int(2), int(3), int(2)],
            vec![int(3), int(2), Value::Null],
            vec![int(3), int(3), int(1)],
        ],
    );
    db
}

fn edge_pairs(x: &joinshare::pipeline::Extraction, label: &str) -> Vec<(Value, Value)> {
    x.graph.edges[label]
        .records
        .iter()
        .map(|r| (r.src.clone(), r.dst.clone()))
        .collect()
}

#[test]
fn retail_model_on_a_tiny_catalog() {
    let db = tiny_retail();
    let model = parse_model(RETAIL_MODEL).unwrap();
    let x = extract(&model, &db, &RunConfig::default()).unwrap();
    assert_eq!(x.graph.vertices["Customer"].records.len(), 3);
    assert_eq!(x.graph.vertices["Item"].property_names, vec!["name", "price"]);

    // promotion matches the sold item only for (c1, i1) and (c2, i3)
    assert_eq!(edge_pairs(&x, "GetDisc"), vec![(int(1), int(1)), (int(2), int(3))]);
    // expected pairs from the reference evaluator
    for q in bound_queries(&model).unwrap() {
        let rows = common::nested_loop(&q.graph, &q.outputs[..2], &db);
        let want: Vec<(Value, Value)> = common::set(rows)
            .into_iter()
            .map(|r| (r[0].clone(), r[1].clone()))
            .collect();
        assert_eq!(edge_pairs(&x, &q.label), want, "{}", q.label);
    }
}

#[test]
fn every_mode_extracts_the_same_graph() {
    for (seed, n) in [(1, 1000), (2, 5000)] {
        let spec = SynthSpec {
            store_sales: n,
            catalog_sales: n / 5,
            ..Default::default()
        };
        let db = generate_synthetic(&spec, seed).unwrap();
        let model = parse_model(INTEGRATED_WORKLOAD).unwrap();
        let graphs: Vec<_> = Mode::ALL
            .iter()
            .map(|&mode| {
                let cfg = RunConfig {
                    mode,
                    ..Default::default()
                };
                extract(&model, &db, &cfg).unwrap().graph
            })
            .collect();
        for g in &graphs[1..] {
            assert_eq!(g, &graphs[0], "seed {seed}");
        }
    }
}

#[test]
fn parallel_edges_are_kept_on_request() {
    let db = tiny_retail();
    let model = parse_model(RETAIL_MODEL).unwrap();
    let kept = extract(
        &model,
        &db,
        &RunConfig {
            dedup_edges: false,
            ..Default::default()
        },
    )
    .unwrap();
    let deduped = extract(&model, &db, &RunConfig::default()).unwrap();
    let a = kept.graph.edges["CoPur"].records.len();
    let b = deduped.graph.edges["CoPur"].records.len();
    assert!(a > b, "{a} vs {b}");
    let distinct: BTreeSet<_> = edge_pairs(&kept, "CoPur").into_iter().collect();
    assert_eq!(distinct.len(), b);
}

#[test]
fn vertex_ids_must_be_unique_and_present() {
    let model = parse_model(RETAIL_MODEL).unwrap();
    let mut db = tiny_retail();
    let c = db.table("C").unwrap().clone();
    let mut rows = c.rows().to_vec();
    rows.push(vec![int(2), Value::text("again")]);
    let mut dup = Database::default();
    for name in ["I", "P", "SS"] {
        dup.insert(name, db.table(name).unwrap().as_ref().clone()).unwrap();
    }
    table(&mut dup, "C", &[("c_id", Kind::Int), ("name", Kind::Text)], rows);
    let err = extract(&model, &dup, &RunConfig::default()).unwrap_err();
    assert!(
        matches!(
            err,
            Error::BadVertexId {
                problem: "duplicate",
                ..
            }
        ),
        "{err}"
    );

    db = tiny_retail();
    let mut nul = Database::default();
    for name in ["I", "P", "SS"] {
        nul.insert(name, db.table(name).unwrap().as_ref().clone()).unwrap();
    }
    table(
        &mut nul,
        "C",
        &[("c_id", Kind::Int), ("name", Kind::Text)],
        vec![
            vec![Value::Null, Value::text("nobody")],
            vec![int(1), Value::text("c1")],
        ],
    );
    let err = extract(&model, &nul, &RunConfig::default()).unwrap_err();
    assert!(matches!(err, Error::BadVertexId { problem: "null", .. }), "{err}");
}

#[test]
fn dangling_edges_are_reported_unless_allowed() {
    let src = "CREATE GRAPH(Graph_Name: G);
CREATE VERTEX(Graph_Name: G, Label: Customer, ID_Column: c_id, Query: SELECT name FROM C WHERE C.c_id < 3);
CREATE VERTEX(Graph_Name: G, Label: Item, ID_Column: i_no, Query: SELECT name FROM I);
CREATE EDGE(Graph_Name: G, Label: Buy, Src_Label: Customer, Dst_Label: Item,
  Query: SELECT null FROM C, SS, I WHERE C.c_id = SS.c_id AND SS.i_no = I.i_no);";
    let model = parse_model(src).unwrap();
    let db = tiny_retail();
    let err = extract(&model, &db, &RunConfig::default()).unwrap_err();
    assert!(
        matches!(&err, Error::DanglingEdge { label, id, .. } if label == "Buy" && id == "3"),
        "{err}"
    );
    let cfg = RunConfig {
        allow_dangling: true,
        ..Default::default()
    };
    let x = extract(&model, &db, &cfg).unwrap();
    assert_eq!(x.graph.edges["Buy"].records.len(), 5);
}

#[test]
fn selecting_the_id_column_twice_is_fine() {
    let src = "CREATE GRAPH(Graph_Name: G);
CREATE VERTEX(Graph_Name: G, Label: Customer, ID_Column: c_id, Query: SELECT c_id, name FROM C);
CREATE EDGE(Graph_Name: G, Label: Knows, Src_Label: Customer, Dst_Label: Customer,
  Query: SELECT C1.c_id FROM C1, C2 WHERE C1.c_id = C2.c_id);";
    let x = extract(&parse_model(src).unwrap(), &tiny_retail(), &RunConfig::default()).unwrap();
    let e = &x.graph.edges["Knows"];
    assert_eq!(e.records.len(), 3);
    assert!(e
        .records
        .iter()
        .all(|r| r.src == r.dst && r.properties == vec![r.src.clone()]));
}

#[test]
fn output_files_in_both_formats() {
    let db = tiny_retail();
    let x = extract(&parse_model(RETAIL_MODEL).unwrap(), &db, &RunConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_graph(&x.graph, dir.path(), OutputFormat::Csv).unwrap();
    assert_eq!(files.len(), 4);
    let items = std::fs::read_to_string(dir.path().join("vertices_Item.csv")).unwrap();
    assert_eq!(items.lines().next(), Some("id,name,price"));
    assert_eq!(items.lines().count(), 4);
    let get_disc = std::fs::read_to_string(dir.path().join("edges_GetDisc.csv")).unwrap();
    assert_eq!(get_disc, "src,dst\n1,1\n2,3\n");

    write_graph(&x.graph, dir.path(), OutputFormat::JsonLines).unwrap();
    let lines = std::fs::read_to_string(dir.path().join("vertices_Item.jsonl")).unwrap();
    let first = lines.lines().next().unwrap();
    assert!(first.starts_with("{\"id\":1,\"name\":"), "{first}");
    let v: serde_json::Value = serde_json::from_str(first).unwrap();
    assert_eq!(v["price"], 1.5);
}

#[test]
fn output_format_names() {
    assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
    assert_eq!("json-lines".parse::<OutputFormat>().unwrap(), OutputFormat::JsonLines);
    assert!("xml".parse::<OutputFormat>().is_err());
}

#[test]
fn metrics_describe_the_run() {
    let db = generate_synthetic(&SynthSpec::default(), 3).unwrap();
    let x = extract(&parse_model(INTEGRATED_WORKLOAD).unwrap(), &db, &RunConfig::default()).unwrap();
    let m = &x.metrics;
    assert_eq!(m.mode, Mode::Hybrid);
    assert!(m.estimated_cost <= m.baseline_cost);
    assert!(!m.units.is_empty());
    assert!(m.wall_millis >= m.plan_millis);
    let json = serde_json::to_value(m).unwrap();
    assert!(json["exec"]["joins"].is_object());
}

#[test]
fn synthetic_data_is_reproducible() {
    let spec = SynthSpec::default();
    let a = generate_synthetic(&spec, 42).unwrap();
    let b = generate_synthetic(&spec, 42).unwrap();
    let c = generate_synthetic(&spec, 43).unwrap();
    assert_eq!(a.checksum(), b.checksum());
    assert_ne!(a.checksum(), c.checksum());
    assert_eq!(a.stats("SS").unwrap().cardinality, 10_000);
    assert_eq!(a.stats("CS").unwrap().cardinality, 2_000);

    let dir = tempfile::tempdir().unwrap();
    let path = a.write_catalog(dir.path()).unwrap();
    assert_eq!(Database::from_catalog_file(&path).unwrap().checksum(), a.checksum());
}

#[test]
fn synthetic_keys_are_skewed_and_in_range() {
    let spec = SynthSpec {
        store_sales: 20_000,
        ..Default::default()
    };
    let db = generate_synthetic(&spec, 6).unwrap();
    let ss = db.table("SS").unwrap();
    let mut counts = vec![0usize; spec.customers + 1];
    for r in ss.rows() {
        let Value::Int(c) = r[0] else { panic!("null key") };
        assert!((1..=spec.customers as i64).contains(&c));
        counts[c as usize] += 1;
    }
    let top = *counts.iter().max().unwrap();
    // uniform keys would give about 40 sales per customer
    assert!(
        top > 10 * spec.store_sales / spec.customers,
        "top customer has {top} sales"
    );
}

#[test]
fn empty_fact_tables_and_bad_specs() {
    let spec = SynthSpec {
        store_sales: 0,
        catalog_sales: 0,
        ..Default::default()
    };
    let db = generate_synthetic(&spec, 1).unwrap();
    let x = extract(&parse_model(INTEGRATED_WORKLOAD).unwrap(), &db, &RunConfig::default()).unwrap();
    assert_eq!(x.graph.edge_count(), 0);
    assert_eq!(x.graph.vertex_count(), 500 + 200 + 20);

    for bad in [
        SynthSpec {
            customers: 0,
            ..Default::default()
        },
        SynthSpec {
            skew: -1.0,
            ..Default::default()
        },
        SynthSpec {
            skew: f64::NAN,
            ..Default::default()
        },
    ] {
        assert!(matches!(generate_synthetic(&bad, 1), Err(Error::Config(_))));
    }
}
