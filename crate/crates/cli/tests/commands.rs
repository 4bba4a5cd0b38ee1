use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use facerep::mesh::load_obj;
use facerep::metrics::e_avd_aligned;
use facerep_cli::RunConfig;

fn facerep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facerep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = facerep(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small corpus and network so the full pipeline runs in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    fs::write(
        &path,
        r#"{
  "corpus": {"cols": 5, "rows": 5, "identities": 4, "expressions": 4, "held_out": 2, "seed": 4},
  "arch": {"conv_width": 4, "dense_width": 8, "latent_id": 3, "latent_exp": 2},
  "train": {"epochs_per_stage": 1, "batch_size": 4}
}
"#,
    )
    .unwrap();
    path
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let cfg = tiny_config(t.path());
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["synth", "--config", s(&cfg), "--seed", "9", "--out", s(&a)]);
    ok(&["synth", "--config", s(&cfg), "--seed", "9", "--out", s(&b)]);
    // run.json records each run's own output path
    let outputs = |d: &Path| -> Vec<_> {
        files_under(d)
            .into_iter()
            .filter(|(n, _)| n != "run.json")
            .collect()
    };
    let (fa, fb) = (outputs(&a), outputs(&b));
    assert!(fa.iter().any(|(n, _)| n == "manifest.json"));
    assert_eq!(fa, fb);
    let resolved = RunConfig::load(&a.join("run.json")).unwrap();
    assert_eq!(resolved.seed, Some(9));
    assert_eq!(resolved.corpus.seed, 9);
    assert_eq!(resolved.corpus.cols, 5);
}

#[test]
fn dr_roundtrip_through_files() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    ok(&["synth", "--out", s(&corpus)]);
    let reference = corpus.join("reference.obj");
    let input = corpus.join("3_7.obj");
    let drf = t.path().join("x.drf");
    let back = t.path().join("x.obj");
    ok(&[
        "dr-encode",
        "--ref",
        s(&reference),
        "--in",
        s(&input),
        "--out",
        s(&drf),
    ]);
    ok(&[
        "dr-decode",
        "--ref",
        s(&reference),
        "--in",
        s(&drf),
        "--out",
        s(&back),
    ]);
    assert!(t.path().join("x.drf.run.json").is_file());
    let original = load_obj(&input).unwrap();
    let decoded = load_obj(&back).unwrap();
    let err = e_avd_aligned(&decoded, &original).unwrap();
    assert!(
        err < 1e-3 * original.bbox_diagonal(),
        "roundtrip error {err} mm"
    );
}

#[test]
fn full_pipeline_on_a_tiny_corpus() {
    let t = tempfile::tempdir().unwrap();
    let cfg = tiny_config(t.path());
    let c = |p: &str| t.path().join(p);
    ok(&["synth", "--config", s(&cfg), "--out", s(&c("corpus"))]);
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--corpus",
        s(&c("corpus")),
        "--out",
        s(&c("model")),
    ]);
    let log = fs::read_to_string(c("model/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3);
    assert!(c("model/run.json").is_file());

    let a = c("corpus/2_1.obj");
    let b = c("corpus/3_2.obj");
    ok(&[
        "decompose",
        "--model",
        s(&c("model")),
        "--in",
        s(&a),
        "--out",
        s(&c("dec")),
    ]);
    for f in ["identity.obj", "expression.obj", "reconstruction.obj"] {
        load_obj(c("dec").join(f)).unwrap();
    }
    ok(&[
        "transfer",
        "--model",
        s(&c("model")),
        "--source",
        s(&a),
        "--target",
        s(&b),
        "--out",
        s(&c("tr.obj")),
    ]);
    load_obj(c("tr.obj")).unwrap();

    ok(&[
        "interp",
        "--model",
        s(&c("model")),
        "--from",
        s(&a),
        "--to",
        s(&b),
        "--out",
        s(&c("interp")),
    ]);
    let meshes = fs::read_dir(c("interp"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension() == Some("obj".as_ref()))
        .count();
    assert_eq!(meshes, 25);

    ok(&[
        "eval",
        "--model",
        s(&c("model")),
        "--corpus",
        s(&c("corpus")),
        "--out",
        s(&c("eval")),
    ]);
    let metrics = parse_metrics(&c("eval/metrics.csv"));
    for m in ["E_avd", "E_sed", "E_id", "E_exp"] {
        assert!(metrics.iter().any(|(name, _, _)| name == m), "missing {m}");
    }
    // two held-out identities with four expressions each
    assert_eq!(per_mesh(&metrics, "E_avd"), 8);
    assert!(metrics.iter().any(|r| r.0 == "E_avd" && r.1 == "mean"));

    ok(&[
        "bilinear-build",
        "--corpus",
        s(&c("corpus")),
        "--latent-id",
        "2",
        "--latent-exp",
        "2",
        "--out",
        s(&c("bl")),
    ]);
    ok(&[
        "bilinear-fit",
        "--model",
        s(&c("bl")),
        "--in",
        s(&a),
        "--out",
        s(&c("fit")),
    ]);
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(c("fit/fit.json")).unwrap()).unwrap();
    assert_eq!(fit["alpha_id"].as_array().unwrap().len(), 2);
    ok(&[
        "bilinear-transfer",
        "--model",
        s(&c("bl")),
        "--source",
        s(&a),
        "--target",
        s(&b),
        "--out",
        s(&c("bltr.obj")),
    ]);
    ok(&[
        "eval",
        "--model",
        s(&c("bl")),
        "--corpus",
        s(&c("corpus")),
        "--out",
        s(&c("bleval")),
    ]);
    assert_eq!(
        per_mesh(&parse_metrics(&c("bleval/metrics.csv")), "E_avd"),
        8
    );

    ok(&[
        "augment",
        "--corpus",
        s(&c("corpus")),
        "--count",
        "3",
        "--m",
        "2",
        "--out",
        s(&c("aug")),
    ]);
    for k in 0..3 {
        assert!(c("aug").join(format!("aug_{k}.drf")).is_file());
    }
}

fn per_mesh(rows: &[(String, String, f64)], metric: &str) -> usize {
    rows.iter()
        .filter(|r| r.0 == metric && r.1 != "mean" && r.1 != "median")
        .count()
}

fn parse_metrics(path: &Path) -> Vec<(String, String, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("metric,mesh_id,value"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 3, "{l}");
            let v: f64 = f[2].parse().unwrap();
            assert!(v.is_finite() && v >= 0.0);
            (f[0].to_owned(), f[1].to_owned(), v)
        })
        .collect()
}

#[test]
fn exit_codes() {
    assert_eq!(facerep(&["--help"]).status.code(), Some(0));
    assert_eq!(facerep(&["--version"]).status.code(), Some(0));
    assert_eq!(facerep(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(facerep(&["synth"]).status.code(), Some(1));
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("missing.obj");
    let out = facerep(&[
        "dr-encode",
        "--ref",
        s(&missing),
        "--in",
        s(&missing),
        "--out",
        s(&t.path().join("x.drf")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.obj"));

    let bad = t.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"epochz": 1}}"#).unwrap();
    let out = facerep(&["synth", "--config", s(&bad), "--out", s(t.path())]);
    assert_eq!(out.status.code(), Some(2));

    let out = facerep(&[
        "interp",
        "--model",
        s(t.path()),
        "--from",
        s(&missing),
        "--to",
        s(&missing),
        "--stride",
        "0.3",
        "--out",
        s(t.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
