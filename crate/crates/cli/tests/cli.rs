use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use serde_json::json;
use topicfield::topic_model::ModelParts;
use topicfield::{DocumentId, FrameRecord, NodeKind, TopicModel};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topicfield"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: u64, docs: usize, topics: usize, vocab: usize) -> (PathBuf, PathBuf) {
    let out = run(&[
        "synth",
        "--seed",
        &seed.to_string(),
        "--docs",
        &docs.to_string(),
        "--topics",
        &topics.to_string(),
        "--vocab",
        &vocab.to_string(),
        "--out",
        s(dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir.join("corpus.jsonl"), dir.to_path_buf())
}

#[test]
fn synth_output_validates() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, model) = synth(dir.path(), 5, 40, 9, 60);
    let out = run(&["validate", "--corpus", s(&corpus), "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(out.stdout.is_empty());
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), 3, 20, 7, 30);
    synth(b.path(), 3, 20, 7, 30);
    for name in ["model.json", "beta.csv", "theta.csv", "corpus.jsonl"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn validate_reports_one_line_per_violation() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, model) = synth(dir.path(), 8, 10, 7, 20);
    let theta = fs::read_to_string(model.join("theta.csv")).unwrap();
    let mut lines: Vec<String> = theta.lines().map(str::to_owned).collect();
    for row in [2, 5] {
        let mut cells: Vec<f64> = lines[row].split(',').map(|c| c.parse().unwrap()).collect();
        cells[0] += 1e-3;
        lines[row] = cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    }
    fs::write(model.join("theta.csv"), lines.join("\n") + "\n").unwrap();
    let out = run(&["validate", "--corpus", s(&corpus), "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
    let report = String::from_utf8(out.stdout).unwrap();
    let report: Vec<&str> = report.lines().collect();
    assert_eq!(report.len(), 2, "{report:?}");
    assert!(report[0].contains("theta row 2"));
    assert!(report[1].contains("theta row 5"));
}

#[test]
fn validate_missing_file_is_a_failure() {
    let out = run(&["validate", "--corpus", "/nonexistent.jsonl", "--model", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["validate"]).status.code(), Some(2));
    assert_eq!(run(&["query", "--corpus", "x", "-q", "a", "--sort", "colour"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let (corpus, model) = synth(dir.path(), 1, 10, 7, 20);
    let ids = dir.path().join("ids.txt");
    fs::write(&ids, "d0\n").unwrap();
    let out = run(&[
        "layout", "--corpus", s(&corpus), "--model", s(&model), "--docs", s(&ids), "--out", "layout.png",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(run(&["layout", "--help"]).status.success());
}

fn parse_tsv(stdout: &[u8]) -> Vec<(String, f64, String, String)> {
    String::from_utf8(stdout.to_vec())
        .unwrap()
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert_eq!(f.len(), 4, "{l}");
            (f[0].to_owned(), f[1].parse().unwrap(), f[2].to_owned(), f[3].to_owned())
        })
        .collect()
}

#[test]
fn query_matches_hand_computed_bm25() {
    let corpus = fixture("bm25_3docs.jsonl");
    let out = run(&["query", "--corpus", s(&corpus), "-q", "names"]);
    assert!(out.status.success());
    let rows = parse_tsv(&out.stdout);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].0, "d2");
    assert!((rows[0].1 - 0.5791807490540533).abs() < 1e-9);
    assert_eq!(rows[0].2, "Person names and place names");
    assert_eq!(rows[0].3, "1999");
    assert_eq!(rows[1].0, "d1");
    assert!((rows[1].1 - 0.4937678576907448).abs() < 1e-9);

    let out = run(&["query", "--corpus", s(&corpus), "-q", "parsing"]);
    let rows = parse_tsv(&out.stdout);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].0, "d3");
    assert!((rows[0].1 - 1.1149852298674336).abs() < 1e-9);
}

#[test]
fn query_index_cache_is_reused_and_invalidated() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    fs::copy(fixture("bm25_3docs.jsonl"), &corpus).unwrap();
    let cache = dir.path().join("index.json");
    let args = ["query", "--corpus", s(&corpus), "--index-cache", s(&cache), "-q", "names with"];
    let first = run(&args);
    assert!(first.status.success());
    assert!(cache.exists());
    let cached = fs::read(&cache).unwrap();
    let second = run(&args);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(cached, fs::read(&cache).unwrap());

    let mut text = fs::read_to_string(&corpus).unwrap();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str("{\"id\": \"d4\", \"title\": \"names names names\", \"text\": \"\"}\n");
    fs::write(&corpus, text).unwrap();
    let third = parse_tsv(&run(&args).stdout);
    assert!(third.iter().any(|r| r.0 == "d4"), "{third:?}");
    assert_ne!(cached, fs::read(&cache).unwrap());
}

#[test]
fn query_sort_and_limit() {
    let corpus = fixture("bm25_3docs.jsonl");
    let out = run(&["query", "--corpus", s(&corpus), "-q", "names with", "--sort", "year", "--limit", "2"]);
    let rows = parse_tsv(&out.stdout);
    assert_eq!(rows.len(), 2);
    let years: Vec<i32> = rows.iter().map(|r| r.3.parse().unwrap()).collect();
    assert!(years[0] >= years[1]);
}

/// One document entirely on topic 3 of an 8-topic model.
fn single_topic_data(dir: &Path) -> (PathBuf, PathBuf) {
    let topics = 8;
    let vocabulary: Vec<String> = (0..topics).map(|i| format!("term{i}")).collect();
    let beta = Array2::from_shape_fn((topics, topics), |(i, j)| if i == j { 1.0 } else { 0.0 });
    let ids = ["solo", "other"];
    let theta = Array2::from_shape_fn((2, topics), |(d, t)| match d {
        0 => f64::from(t == 3),
        _ => 1.0 / topics as f64,
    });
    let model = TopicModel::from_parts(ModelParts {
        vocabulary,
        document_ids: ids.iter().map(|&i| DocumentId::from(i)).collect(),
        beta,
        theta,
        labels: None,
    })
    .unwrap();
    let model_dir = dir.join("model");
    model.write_dir(&model_dir).unwrap();
    let corpus = dir.join("corpus.jsonl");
    let lines: Vec<String> = ids
        .iter()
        .map(|id| json!({"id": id, "title": format!("{id} study"), "text": "term3"}).to_string())
        .collect();
    fs::write(&corpus, lines.join("\n")).unwrap();
    (corpus, model_dir)
}

fn svg_circle(svg: &str, class: &str, reference: &str) -> (f64, f64) {
    let needle = format!(r#"class="{class}" data-ref="{reference}""#);
    let line = svg.lines().find(|l| l.contains(&needle)).unwrap_or_else(|| panic!("{needle} missing"));
    let attr = |name: &str| -> f64 {
        let start = line.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
        let end = start + line[start..].find('"').unwrap();
        line[start..end].parse().unwrap()
    };
    (attr("cx"), attr("cy"))
}

#[test]
fn single_topic_document_sits_on_its_magnet() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, model) = single_topic_data(dir.path());
    let ids = dir.path().join("ids.txt");
    fs::write(&ids, "solo\n").unwrap();
    let out_svg = dir.path().join("layout.svg");
    let out = run(&[
        "layout", "--corpus", s(&corpus), "--model", s(&model), "--docs", s(&ids), "--out", s(&out_svg),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(&out_svg).unwrap();
    assert_eq!(svg.matches(r#"class="topic""#).count(), 7);
    let (dx, dy) = svg_circle(&svg, "document", "solo");
    let (mx, my) = svg_circle(&svg, "topic", "3");
    assert!(((dx - mx).powi(2) + (dy - my).powi(2)).sqrt() < 1e-3, "({dx}, {dy}) vs ({mx}, {my})");
}

#[test]
fn layout_is_idempotent_and_leaves_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, model) = synth(dir.path(), 21, 30, 10, 40);
    let before: Vec<Vec<u8>> = ["corpus.jsonl", "model.json", "beta.csv", "theta.csv"]
        .iter()
        .map(|n| fs::read(dir.path().join(n)).unwrap())
        .collect();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let steps = dir.path().join("steps.json");
    for out in [&a, &b] {
        let o = run(&[
            "layout", "--corpus", s(&corpus), "--model", s(&model), "--query", "w1 w2 w3", "--limit", "12", "--k", "5",
            "--steps-out", s(&steps), "--out", s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let after: Vec<Vec<u8>> = ["corpus.jsonl", "model.json", "beta.csv", "theta.csv"]
        .iter()
        .map(|n| fs::read(dir.path().join(n)).unwrap())
        .collect();
    assert_eq!(before, after);

    let frame: FrameRecord = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(frame.nodes.iter().filter(|n| n.kind == NodeKind::Topic).count(), 5);
    assert!(frame.max_displacement < 1e-4);
    let frames: Vec<FrameRecord> = serde_json::from_slice(&fs::read(&steps).unwrap()).unwrap();
    assert_eq!(frames.last().unwrap(), &frame);
    assert!(frames.windows(2).all(|w| w[0].step < w[1].step));
}

#[test]
fn layout_json_equals_service_export() {
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    let dir = tempfile::tempdir().unwrap();
    let (corpus_path, model_path) = synth(dir.path(), 33, 50, 12, 60);
    let ids = dir.path().join("ids.txt");
    fs::write(&ids, "d3\nd17\nd4\nd40\nd22\nd9\n").unwrap();
    let out_json = dir.path().join("layout.json");
    let o = run(&[
        "layout", "--corpus", s(&corpus_path), "--model", s(&model_path), "--docs", s(&ids), "--k", "6", "--out",
        s(&out_json),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let from_cli: FrameRecord = serde_json::from_slice(&fs::read(&out_json).unwrap()).unwrap();

    let corpus = topicfield::Corpus::load_path(&corpus_path).unwrap();
    let model = TopicModel::load(&model_path, &corpus).unwrap();
    let mut config = topicfield_service::AppConfig::new(corpus, model);
    config.session.simulate = false;
    let app = topicfield_service::router(topicfield_service::AppState::new(config));

    let rt = tokio::runtime::Runtime::new().unwrap();
    let from_service: FrameRecord = rt.block_on(async move {
        let call = |method: &str, uri: String, body: Option<serde_json::Value>| {
            let app = app.clone();
            let req = Request::builder()
                .method(method)
                .uri(uri)
                .header("content-type", "application/json")
                .body(body.map(|b| Body::from(b.to_string())).unwrap_or_default())
                .unwrap();
            async move {
                let resp = app.oneshot(req).await.unwrap();
                assert!(resp.status().is_success(), "{}", resp.status());
                let bytes = resp.into_body().collect().await.unwrap().to_bytes();
                serde_json::from_slice::<serde_json::Value>(&bytes).unwrap()
            }
        };
        let id = call("POST", "/sessions".into(), None).await["id"].as_str().unwrap().to_owned();
        call("PATCH", format!("/sessions/{id}/settings"), Some(json!({"k": 6}))).await;
        call(
            "POST",
            format!("/sessions/{id}/field/documents"),
            Some(json!({"ids": ["d3", "d17", "d4", "d40", "d22", "d9"]})),
        )
        .await;
        serde_json::from_value(call("GET", format!("/sessions/{id}/export.json"), None).await).unwrap()
    });
    assert_eq!(from_cli, from_service);
}

#[test]
fn serve_reads_environment() {
    let out = bin()
        .arg("serve")
        .env("TOPICFIELD_CORPUS", "/nonexistent/corpus.jsonl")
        .env("TOPICFIELD_MODEL", "/nonexistent/model")
        .env("TOPICFIELD_BIND", "127.0.0.1:0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/corpus.jsonl"));
}
