use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use clap::CommandFactory;
use tempdistill_cli::Cli;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempdistill"))
        .args(args)
        .env("TEMPDISTILL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_record(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().last().expect("an error record on stderr");
    serde_json::from_str(line).expect("the error record is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_every_flag() {
    let root = Cli::command();
    let root_help = String::from_utf8(run(&["--help"]).stdout).unwrap();
    for arg in root.get_arguments() {
        if let Some(long) = arg.get_long() {
            assert!(root_help.contains(&format!("--{long}")), "--{long} missing from top-level help");
        }
    }
    for sub in root.get_subcommands() {
        let name = sub.get_name();
        if name == "help" {
            continue;
        }
        assert!(root_help.contains(name), "{name} missing from top-level help");
        let out = run(&[name, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        let help = stdout(&out);
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(help.contains(&format!("--{long}")), "{name}: --{long} missing from help");
            }
        }
        // Global flags are accepted after the subcommand too.
        for global in ["--seed", "--log-level", "--out"] {
            assert!(help.contains(global), "{name}: {global} missing from help");
        }
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["gen-corpus", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let missing_out = run(&["gen-corpus", "--n-docs", "1"]);
    assert_eq!(missing_out.status.code(), Some(2));
    assert_eq!(error_record(&missing_out)["error"], "UsageError");
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_tempdistill"))
        .args(["gen-corpus", "--out", "/nonexistent/x"])
        .env("TEMPDISTILL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(2));
}

#[test]
fn contradiction_exits_1_with_witness_and_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let rel = dir.path().join("rel.tsv");
    fs::write(&rel, "d1\ta\tBEFORE\tb\nd1\tb\tBEFORE\tc\nd1\tc\tBEFORE\ta\n").unwrap();
    let closed = dir.path().join("closed.tsv");
    let o = run(&["check-consistency", "--relations", p(&rel), "--out", p(&closed)]);
    assert_eq!(o.status.code(), Some(1));
    let line = stdout(&o);
    assert!(line.starts_with("d1\tinconsistent\t"), "{line}");
    assert_eq!(line.trim_end().split('\t').count(), 5, "doc, verdict and a witness triple");
    let rec = error_record(&o);
    assert_eq!(rec["error"], "Inconsistent");
    assert_eq!(rec["details"]["doc_id"], "d1");
    assert!(!closed.exists(), "no output on failure");

    fs::write(&rel, "d1\ta\tBEFORE\tb\nd1\tb\tINCLUDES\tc\n").unwrap();
    let o = run(&["check-consistency", "--relations", p(&rel), "--out", p(&closed)]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&closed).unwrap();
    assert!(text.contains("d1\ta\tBEFORE\tc"), "{text}");
}

#[test]
fn missing_input_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-consistency", "--relations", p(&dir.path().join("nope.tsv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_record(&o)["error"], "IoError");
}

#[test]
fn build_dataset_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(run(&["gen-corpus", "--n-docs", "12", "--seed", "7", "--out", p(&corpus)]).status.success());
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("qa{k}.jsonl"));
        let o = run(&[
            "build-dataset", "--corpus", p(&corpus), "--closure", "--bidirectional", "--seed", "7", "--out", p(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let manifest = dir.path().join(format!("qa{k}.jsonl.manifest.json"));
        outputs.push((fs::read(&out).unwrap(), fs::read(&manifest).unwrap()));
    }
    assert!(!outputs[0].0.is_empty());
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn kd_eval_reports_values_and_gradchecks() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    let s = dir.path().join("s.txt");
    fs::write(&t, "0.1 0.5 -0.2\n0.3 -0.1 0.4\n-0.5 0.2 0.1\n0.0 0.3 0.3\n").unwrap();
    fs::write(&s, "0.2 0.4 -0.1\n0.1 -0.3 0.5\n-0.4 0.1 0.2\n0.2 0.2 0.1\n").unwrap();
    let o = run(&["kd-eval", "--teacher", p(&t), "--student", p(&s)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    for r in results {
        assert!(r["value"].as_f64().unwrap().is_finite());
        assert_eq!(r["gradcheck"]["passes_1e-4"], true, "{r}");
    }
    let same = run(&["kd-eval", "--teacher", p(&t), "--student", p(&t), "--loss", "pkt"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&same)).unwrap();
    assert!(v["results"][0]["value"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn smoke_pipeline() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = run(&["gen-corpus", "--n-docs", "20", "--events-per-doc", "4", "--out", p(&corpus)]);
    assert!(o.status.success());
    let qa = dir.path().join("qa.jsonl");
    let o = run(&["build-dataset", "--corpus", p(&corpus), "--closure", "--out", p(&qa)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let matrix = dir.path().join("matrix.toml");
    fs::write(
        &matrix,
        r#"
n_test_docs = 20
n_probe_docs = 4
teacher_steps = 100
steps = 50
gate_margin = -1.0
conditions = ["kd_temporal", "tl_only", "joint"]

[corpus]
n_docs = 200
events_per_doc = 4
vocab_size = 10

[teacher]
d_model = 16
d_mlp = 32
n_layers = 2
n_heads = 2

[student]
d_model = 8
d_mlp = 16
n_layers = 1
n_heads = 2
"#,
    )
    .unwrap();
    let runs = dir.path().join("runs");
    let o = run(&["distill-toy", "--matrix", p(&matrix), "--seeds", "2", "--out", p(&runs)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(runs.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    assert!(fs::read_to_string(runs.join("summary.txt")).unwrap().contains("kd_temporal"));

    let traces: Vec<_> = fs::read_dir(runs.join("traces")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(traces.len(), 6);
    let cka = dir.path().join("cka.csv");
    let o = run(&["cka", "--trace-a", p(&traces[0]), "--trace-b", p(&traces[1]), "--out", p(&cka)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["sweep_a"][0].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(fs::read_to_string(&cka).unwrap().lines().next(), Some("layer_a,layer_b,cka"));
    assert!(t0.elapsed() < Duration::from_secs(600));
}

#[test]
fn gate_failure_exits_1_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.toml");
    fs::write(
        &matrix,
        "teacher_steps = 5\nsteps = 5\ngate_margin = 0.99\nn_test_docs = 10\nn_probe_docs = 2\nseeds = [0]\n\
         [corpus]\nn_docs = 30\nevents_per_doc = 3\nvocab_size = 6\n\
         [teacher]\nd_model = 8\nd_mlp = 8\nn_layers = 1\nn_heads = 1\n\
         [student]\nd_model = 4\nd_mlp = 4\nn_layers = 1\nn_heads = 1\n",
    )
    .unwrap();
    let runs = dir.path().join("runs");
    let o = run(&["distill-toy", "--matrix", p(&matrix), "--out", p(&runs)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_record(&o)["error"], "DidNotConverge");
    assert!(!runs.join("results.csv").exists());

    fs::write(&matrix, "no_such_field = 1\n").unwrap();
    let o = run(&["distill-toy", "--matrix", p(&matrix), "--out", p(&runs)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_record(&o)["error"], "InvalidConfig");
}
