//! End-to-end runs of the `nvset` binary: determinism, psync accounting,
//! crash schedules, and the check/recover pipeline.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_nvset")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn nvset")
}

fn stdout_text(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

/// First stderr line that is a JSON object with the given field.
fn json_line_with(out: &Output, field: &str) -> serde_json::Value {
    for line in stderr_text(out).lines() {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(line) {
            if v.get(field).is_some() {
                return v;
            }
        }
    }
    panic!("no stderr JSON line with {field:?}:\n{}", stderr_text(out));
}

fn tmp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("nvset_cli_{}_{name}", std::process::id()))
}

#[test]
fn same_seed_gives_bit_identical_csv() {
    let args = [
        "bench", "--mode", "sim", "--threads", "3", "--keyrange", "16", "--ops", "60",
        "--iters", "3", "--search-pct", "60", "--insert-pct", "20", "--remove-pct", "20",
        "--seed", "7",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout, "CSV differs between identical runs");
    let text = stdout_text(&a);
    assert_eq!(text.lines().count(), 4, "header plus one row per iteration");
}

#[test]
fn persist_free_searches_report_zero_psyncs_per_search() {
    // Mostly-search persistence-free workload on a small key range; the
    // search class must stay at exactly zero flushes and fences.
    let out = run(&[
        "bench", "--mode", "sim", "--impl", "pd", "--contains", "pf", "--threads", "2",
        "--keyrange", "50", "--ops", "400", "--iters", "1", "--search-pct", "99",
        "--insert-pct", "1", "--remove-pct", "0", "--seed", "11",
    ]);
    assert!(out.status.success());
    let row = stdout_text(&out).lines().nth(1).unwrap().to_string();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[7], "0", "psyncs_per_search: {row}");
    let rep = json_line_with(&out, "iter");
    assert_eq!(rep["search_flushes"], 0);
    assert_eq!(rep["search_fences"], 0);
    assert!(rep["search_ops"].as_u64().unwrap() > 300);
}

#[test]
fn crash_schedule_reports_the_recovered_set_and_round_trips() {
    let sched = tmp_path("sched.txt");
    let image = tmp_path("img.jsonl");
    let log = tmp_path("run.jsonl");
    let mut script = String::new();
    for i in 0..40 {
        script.push_str(&format!("step {}\n", i % 2));
    }
    script.push_str("crash\n");
    std::fs::write(&sched, script).unwrap();

    let out = run(&[
        "bench", "--mode", "sim", "--threads", "2", "--keyrange", "8", "--iters", "1",
        "--seed", "3", "--search-pct", "20", "--insert-pct", "40", "--remove-pct", "40",
        "--schedule", sched.to_str().unwrap(),
        "--image", image.to_str().unwrap(),
        "--eventlog", log.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_text(&out));
    let rep = json_line_with(&out, "iter");
    assert_eq!(rep["crashed"], true);
    let recovered = rep["recovered_set_size"].as_u64().expect("set size");

    // recover on the dumped image names the same number of keys.
    let rec = run(&["recover", image.to_str().unwrap(), "--impl", "pd"]);
    assert!(rec.status.success(), "{}", stderr_text(&rec));
    let rec_json: serde_json::Value =
        serde_json::from_str(stdout_text(&rec).lines().next().unwrap()).unwrap();
    assert_eq!(rec_json["size"].as_u64().unwrap(), recovered);

    // check on the dumped event log reads the meta init and passes.
    let chk = run(&["check", log.to_str().unwrap()]);
    assert!(chk.status.success(), "{}", stdout_text(&chk));
    let chk_json: serde_json::Value =
        serde_json::from_str(stdout_text(&chk).lines().next().unwrap()).unwrap();
    assert_eq!(chk_json["crashes"], 1);
    assert_eq!(chk_json["durable"]["pass"], true);

    for p in [sched, image, log] {
        let _ = std::fs::remove_file(p);
    }
}

#[test]
fn volatile_probe_log_fails_the_check_command() {
    let log = tmp_path("probe.jsonl");
    let scen = run(&["scenario", "volatile-probe", "--eventlog", log.to_str().unwrap()]);
    assert!(scen.status.success());
    let scen_json: serde_json::Value =
        serde_json::from_str(stdout_text(&scen).lines().next().unwrap()).unwrap();
    assert_eq!(scen_json["probe_result"], true);
    assert_eq!(scen_json["post_result"], false);
    assert_eq!(scen_json["sle"]["pass"], false);

    let chk = run(&["check", log.to_str().unwrap()]);
    assert_eq!(chk.status.code(), Some(1), "{}", stdout_text(&chk));
    let chk_json: serde_json::Value =
        serde_json::from_str(stdout_text(&chk).lines().next().unwrap()).unwrap();
    assert_eq!(chk_json["sle"]["pass"], false);
    assert!(chk_json["sle"]["certificate"]
        .as_str()
        .unwrap()
        .contains("no valid linearization"));
    let _ = std::fs::remove_file(log);
}

#[test]
fn oversized_histories_are_refused_not_guessed() {
    let log = tmp_path("big.jsonl");
    let out = run(&[
        "bench", "--mode", "sim", "--threads", "2", "--keyrange", "8", "--ops", "40",
        "--iters", "1", "--seed", "9", "--eventlog", log.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let chk = run(&["check", log.to_str().unwrap()]);
    assert_eq!(chk.status.code(), Some(2), "{}", stdout_text(&chk));
    let chk_json: serde_json::Value =
        serde_json::from_str(stdout_text(&chk).lines().next().unwrap()).unwrap();
    assert!(chk_json["durable"]["refused"].is_string());
    let _ = std::fs::remove_file(log);
}

#[test]
fn recover_faults_on_a_damaged_image() {
    let img = tmp_path("bad.jsonl");
    // A head whose durable link points at a cell missing from the image.
    std::fs::write(
        &img,
        format!(
            "{}\n",
            serde_json::json!({
                "cell": 0x40, "next": 0x81, "old": 0,
                "key": i64::MIN, "value": 0
            })
        ),
    )
    .unwrap();
    let out = run(&["recover", img.to_str().unwrap(), "--impl", "pd"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_text(&out).contains("not in the image"), "{}", stderr_text(&out));
    let _ = std::fs::remove_file(img);
}

#[test]
fn config_errors_exit_nonzero_with_clear_messages() {
    let cases: [(&[&str], &str); 5] = [
        (&["bench", "--keyrange", "1"], "key range"),
        (
            &["bench", "--search-pct", "50", "--insert-pct", "20", "--remove-pct", "20"],
            "percentages sum",
        ),
        (&["bench", "--impl", "soft"], "unknown impl"),
        (&["bench", "--dist", "zipf:-1"], "nonnegative"),
        (&["bench", "--mode", "native", "--schedule", "/nonexistent"], "unsupported"),
    ];
    for (args, needle) in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(
            stderr_text(&out).contains(needle),
            "{args:?}: {}",
            stderr_text(&out)
        );
    }
}

#[test]
fn ld_sim_bench_runs_and_charges_updates_only() {
    let out = run(&[
        "bench", "--mode", "sim", "--impl", "ld", "--contains", "pa", "--threads", "3",
        "--keyrange", "20", "--ops", "150", "--iters", "1", "--seed", "21",
        "--search-pct", "40", "--insert-pct", "30", "--remove-pct", "30", "--audit",
    ]);
    assert!(out.status.success(), "{}", stderr_text(&out));
    let rep = json_line_with(&out, "iter");
    let ppu = rep["psyncs_per_update"].as_f64().unwrap();
    assert!(ppu >= 1.0, "psyncs_per_update {ppu}");
}
