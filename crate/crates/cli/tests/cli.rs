use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use joinshare::synth::{INTEGRATED_WORKLOAD, RETAIL_MODEL};

fn joinshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_joinshare"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic catalog and both retail model files.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = joinshare(&[
        "gen",
        "--out",
        path(&data),
        "--seed",
        "3",
        "--store-sales",
        "2000",
        "--catalog-sales",
        "400",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("wrote "));
    std::fs::write(dir.path().join("sample.model"), RETAIL_MODEL).unwrap();
    std::fs::write(dir.path().join("retail.model"), INTEGRATED_WORKLOAD).unwrap();
    let catalog = data.join("catalog.json");
    (dir, catalog)
}

#[test]
fn load_prints_table_statistics() {
    let (_dir, catalog) = workspace();
    let o = joinshare(&["load", "--catalog", path(&catalog)]);
    assert!(o.status.success());
    let text = stdout(&o);
    let ss = text.lines().find(|l| l.starts_with("SS ")).unwrap();
    assert_eq!(ss.split_whitespace().nth(1), Some("2000"));
    assert!(text.lines().last().unwrap().starts_with("checksum "));
}

#[test]
fn gen_is_reproducible() {
    let (a, _) = workspace();
    let (b, _) = workspace();
    let ca = stdout(&joinshare(&[
        "load",
        "--catalog",
        path(&a.path().join("data/catalog.json")),
    ]));
    let cb = stdout(&joinshare(&[
        "load",
        "--catalog",
        path(&b.path().join("data/catalog.json")),
    ]));
    assert_eq!(ca, cb);
}

#[test]
fn parse_reports_counts_and_renders() {
    let (dir, catalog) = workspace();
    let model = dir.path().join("sample.model");
    let o = joinshare(&["parse", path(&model), "--catalog", path(&catalog)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        stdout(&o).trim(),
        "graph RetailG: 2 vertex definitions, 2 edge definitions"
    );

    let o = joinshare(&["parse", path(&model), "--render"]);
    let rendered = dir.path().join("rendered.model");
    std::fs::write(&rendered, &o.stdout).unwrap();
    let again = joinshare(&["parse", path(&rendered), "--render"]);
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn bad_models_fail_with_a_position() {
    let (dir, catalog) = workspace();
    let bad = dir.path().join("bad.model");
    std::fs::write(&bad, "CREATE GRAPH(Graph_Name: G)").unwrap();
    let o = joinshare(&["parse", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("line 1, column 28"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let unknown = dir.path().join("unknown.model");
    std::fs::write(
        &unknown,
        "CREATE GRAPH(Graph_Name: G);\nCREATE VERTEX(Graph_Name: G, Label: V, ID_Column: id, Query: SELECT x FROM Nope);",
    )
    .unwrap();
    let o = joinshare(&["parse", path(&unknown), "--catalog", path(&catalog)]);
    assert_eq!(o.status.code(), Some(2));
    let line = String::from_utf8_lossy(&o.stderr).lines().next().unwrap().to_string();
    let diag: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(diag["code"], "unknown-table");
}

#[test]
fn plan_json_lists_the_rewrites() {
    let (dir, catalog) = workspace();
    let model = dir.path().join("retail.model");
    let o = joinshare(&["plan", path(&model), "--catalog", path(&catalog), "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(plan["estimated_cost"].as_f64().unwrap() <= plan["baseline_cost"].as_f64().unwrap());
    assert!(!plan["units"].as_array().unwrap().is_empty());

    let text = joinshare(&["plan", path(&model), "--catalog", path(&catalog), "--mode", "naive"]);
    assert!(text.status.success());
}

#[test]
fn extract_writes_both_formats() {
    let (dir, catalog) = workspace();
    let model = dir.path().join("retail.model");
    for (format, ext) in [("csv", "csv"), ("json-lines", "jsonl")] {
        let out = dir.path().join(format);
        let o = joinshare(&[
            "extract",
            path(&model),
            "--catalog",
            path(&catalog),
            "--out",
            path(&out),
            "--format",
            format,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for label in ["Sell", "Buy", "CoPur", "SamePro"] {
            assert!(out.join(format!("edges_{label}.{ext}")).exists(), "{format} {label}");
        }
        let metrics: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
        assert_eq!(metrics["mode"], "hybrid");
    }
    let csv_items = std::fs::read_to_string(dir.path().join("csv/vertices_Item.csv")).unwrap();
    let json_items = std::fs::read_to_string(dir.path().join("json-lines/vertices_Item.jsonl")).unwrap();
    assert_eq!(csv_items.lines().count() - 1, json_items.lines().count());
}

#[test]
fn usage_errors_exit_with_two() {
    let (dir, catalog) = workspace();
    let model = dir.path().join("retail.model");
    let out = dir.path().join("out");
    let o = joinshare(&[
        "extract",
        path(&model),
        "--catalog",
        path(&catalog),
        "--out",
        path(&out),
        "--format",
        "xml",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        joinshare(&["plan", path(&model), "--catalog", path(&catalog), "--mode", "fast"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(joinshare(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_catalog_is_an_error() {
    let o = joinshare(&["load", "--catalog", "/nonexistent/catalog.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
}
