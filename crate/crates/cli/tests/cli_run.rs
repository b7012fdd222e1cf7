use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use dtb_cli::{run, EXIT_IO, EXIT_OK, EXIT_VALIDATION};
use dtb_core::fdeb::import_bundles;
use dtb_core::Dataset;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let mut argv = vec!["dtb-engine"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    Outcome { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// F1 written once through `synth`, shared by the read-only tests.
fn f1_store() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("f1");
        let o = cli(&["synth", "--seed", "42", "--preset", "human", "--out", s(&dir)]);
        assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
        (tmp, dir)
    })
    .1
}

fn small_store(tmp: &Path) -> PathBuf {
    let dir = tmp.join("mac");
    let o = cli(&["synth", "--seed", "7", "--preset", "macaque", "--dti-entries", "2000", "--out", s(&dir)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    dir
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let again = tmp.path().join("again");
    let o = cli(&["synth", "--seed", "42", "--preset", "human", "--out", s(&again)]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("116 regions"), "{}", o.stdout);
    assert!(o.stdout.contains("380360 DTI entries"), "{}", o.stdout);
    let a = tree(f1_store());
    let b = tree(&again);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    assert!(a == b, "trees differ");
}

#[test]
fn bundle_selects_top_tenth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bundles.json");
    let f1 = f1_store();
    let o = cli(&[
        "bundle", "--edges", s(&f1.join("dti.csv")), "--atlas", s(&f1.join("atlas.json")),
        "--fraction", "0.1", "--cycles", "6", "--kp", "0.1", "--out", s(&out), "--dry-run",
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.lines().any(|l| l == "selected 38036 edges"), "{}", o.stdout);
    assert!(!out.exists());
}

#[test]
fn bundle_writes_document_independent_of_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let store = small_store(tmp.path());
    let mut docs = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("b{threads}.json"));
        let o = cli(&[
            "--threads", threads, "bundle", "--edges", s(&store.join("dti.csv")), "--atlas",
            s(&store.join("atlas.json")), "--fraction", "0.05", "--cycles", "4", "--kp", "0.1", "--out", s(&out),
        ]);
        assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
        assert!(o.stdout.starts_with("selected 100 edges\n"), "{}", o.stdout);
        docs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
    let doc = import_bundles(&tmp.path().join("b1.json")).unwrap();
    assert_eq!(doc.edges.len(), 100);
    assert_eq!(doc.params.n_cycles, 4);
    assert!(doc.edges.iter().all(|e| e.points.len() == 17));
}

#[test]
fn stats_compare_reports_planted_lag() {
    let o = cli(&["stats", "--store", s(f1_store()), "--compare"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.lines().any(|l| l == "lag = 3"), "{}", o.stdout);
    assert!(o.stdout.lines().any(|l| l == "peak time = 119"), "{}", o.stdout);

    let o = cli(&["stats", "--store", s(f1_store()), "--compare", "--top-regions", "3", "--t", "119", "--format", "json"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["compare"]["lag"], 3);
    assert_eq!(v["peak_time"], 119);
    assert_eq!(v["top_regions_t"], 119);
    assert_eq!(v["top_regions"][0]["label"], 35);
    assert_eq!(v["top_regions"][0]["name"], "Hippocampus_L");
    assert_eq!(v["top_regions"].as_array().unwrap().len(), 3);
    assert_eq!(v["n_functional_regions"], 92);
}

#[test]
fn stats_scoped_compare() {
    let o = cli(&["stats", "--store", s(f1_store()), "--compare", "--scope", "regions:35", "--format", "json"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["compare"]["lag"], 3);
    let o = cli(&["stats", "--store", s(f1_store()), "--compare", "--scope", "regions:999"]);
    assert_eq!(o.code, EXIT_VALIDATION);
}

#[test]
fn slice_writes_prefix_and_directory_forms() {
    let tmp = tempfile::tempdir().unwrap();
    let store = small_store(tmp.path());
    let prefix = tmp.path().join("out/cut");
    let o = cli(&["slice", "--store", s(&store), "--axis", "sagittal", "--coord", "0", "--t", "3", "--out", s(&prefix)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let pgm = std::fs::read_to_string(tmp.path().join("out/cut.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n"));
    let side: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/cut.json")).unwrap()).unwrap();
    assert_eq!(side["axis"], "sagittal");
    assert_eq!(side["t"], 3);

    let dir = tmp.path().join("slices");
    std::fs::create_dir(&dir).unwrap();
    let o = cli(&["slice", "--store", s(&store), "--axis", "coronal", "--coord", "-4", "--t", "0", "--out", s(&dir)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(dir.join("slice_coronal_-4_t0.pgm").is_file());
    assert!(dir.join("slice_coronal_-4_t0.json").is_file());
}

#[test]
fn ingest_round_trips_a_store() {
    let tmp = tempfile::tempdir().unwrap();
    let store = small_store(tmp.path());
    let out = tmp.path().join("ingested");
    let o = cli(&[
        "ingest", "--atlas", s(&store.join("atlas.json")), "--bold", s(&store.join("bold_biological.csv")),
        "--bold-dtb", s(&store.join("bold_dtb.csv")), "--dti", s(&store.join("dti.csv")), "--out", s(&out),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let a = Dataset::load(&store).unwrap();
    let b = Dataset::load(&out).unwrap();
    assert_eq!(a.atlas, b.atlas);
    assert_eq!(a.biological, b.biological);
    assert_eq!(a.dtb, b.dtb);
    assert_eq!(a.dti, b.dti);
    for f in ["atlas.json", "bold_biological.csv", "bold_dtb.csv", "dti.csv"] {
        assert_eq!(std::fs::read(store.join(f)).unwrap(), std::fs::read(out.join(f)).unwrap(), "{f}");
    }

    let solo = tmp.path().join("solo");
    let o = cli(&[
        "ingest", "--atlas", s(&store.join("atlas.json")), "--bold", s(&store.join("bold_biological.csv")),
        "--dti", s(&store.join("dti.csv")), "--out", s(&solo),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let c = Dataset::load(&solo).unwrap();
    assert_eq!(c.dtb.iter().collect::<Vec<_>>(), c.biological.iter().collect::<Vec<_>>());
}

#[test]
fn ingest_rejects_mismatched_files_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let store = small_store(tmp.path());
    let f1 = f1_store();
    let out = tmp.path().join("bad");
    let o = cli(&[
        "ingest", "--atlas", s(&store.join("atlas.json")), "--bold", s(&f1.join("bold_biological.csv")),
        "--dti", s(&store.join("dti.csv")), "--out", s(&out),
    ]);
    assert_eq!(o.code, EXIT_VALIDATION);
    assert_eq!(o.stderr.lines().count(), 1, "{}", o.stderr);
    assert!(!out.exists());
}

#[test]
fn exit_codes_and_single_line_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");

    let o = cli(&["stats", "--store", s(&missing)]);
    assert_eq!(o.code, EXIT_IO);
    assert_eq!(o.stderr.lines().count(), 1, "{}", o.stderr);

    let o = cli(&["synth", "--seed", "1", "--preset", "rat", "--out", s(&missing)]);
    assert_eq!(o.code, EXIT_VALIDATION);
    assert_eq!(o.stderr.lines().count(), 1, "{}", o.stderr);
    assert!(!missing.exists());

    let o = cli(&["frobnicate"]);
    assert_eq!(o.code, EXIT_VALIDATION);
    assert_eq!(o.stderr.lines().count(), 1, "{}", o.stderr);

    let o = cli(&["slice", "--store", s(&missing), "--axis", "oblique", "--coord", "0", "--t", "0", "--out", "x"]);
    assert_eq!(o.code, EXIT_VALIDATION);

    let out = tmp.path().join("b.json");
    let o = cli(&["bundle", "--edges", "e", "--atlas", "a", "--fraction", "1.5", "--out", s(&out)]);
    assert_eq!(o.code, EXIT_VALIDATION);
    assert!(!out.exists());

    let o = cli(&["bundle", "--edges", s(&missing), "--atlas", s(&missing), "--out", s(&out)]);
    assert_eq!(o.code, EXIT_IO);
    assert!(!out.exists());

    let o = cli(&["--threads", "0", "stats", "--store", s(&missing)]);
    assert_eq!(o.code, EXIT_VALIDATION);

    let store = small_store(tmp.path());
    let o = cli(&["slice", "--store", s(&store), "--axis", "sagittal", "--coord", "0", "--t", "9999", "--out", s(&out)]);
    assert_eq!(o.code, EXIT_VALIDATION);
    assert_eq!(o.stderr.lines().count(), 1, "{}", o.stderr);
}

#[test]
fn failed_synth_keeps_existing_output() {
    let tmp = tempfile::tempdir().unwrap();
    let store = small_store(tmp.path());
    let before = tree(&store);
    // More entries than the directed pairs of the macaque atlas can hold.
    let o = cli(&["synth", "--seed", "7", "--preset", "macaque", "--dti-entries", "999999999", "--out", s(&store)]);
    assert_eq!(o.code, EXIT_VALIDATION, "{}", o.stderr);
    assert!(tree(&store) == before);
}

#[test]
fn help_exits_zero() {
    let o = cli(&["--help"]);
    assert_eq!(o.code, EXIT_OK);
    for sub in ["synth", "ingest", "bundle", "slice", "stats", "serve"] {
        assert!(o.stdout.contains(sub), "{sub}");
    }
}
