use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stepqos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepqos")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    format!("{}/../../scenarios/{name}.scn", env!("CARGO_MANIFEST_DIR"))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn identical_invocations_write_identical_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = stepqos(&[
            "run",
            "--scenario",
            &scenario("overload"),
            "--qdisc",
            "wfq",
            "--duration",
            "8",
            "--seed",
            "4",
            "--set",
            "run.drop_log=true",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = dir_bytes(&a);
    let names: Vec<_> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["drops.csv", "effective-scenario", "series.csv", "summary.json"]);
    assert_eq!(files, dir_bytes(&b));
}

#[test]
fn flags_are_echoed_in_the_effective_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stepqos(&[
        "run",
        "--scenario",
        &scenario("sweep"),
        "--qdisc",
        "pq",
        "--duration",
        "2.5",
        "--seed",
        "77",
        "--set",
        "voip.0.payload_bytes=320",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = fs::read_to_string(tmp.path().join("effective-scenario")).unwrap();
    for line in ["kind = pq", "duration_s = 2.5", "seed = 77", "payload_bytes = 320"] {
        assert!(echoed.lines().any(|l| l == line), "missing `{line}` in\n{echoed}");
    }
    // The summary on stdout is the one written to disk.
    let summary = fs::read_to_string(tmp.path().join("summary.json")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), summary);
}

#[test]
fn compare_exit_status_follows_the_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let ok = stepqos(&["compare", "--scenario", &scenario("uncongested"), "--out", out]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PassByTie"));
    for kind in ["fifo", "pq", "wfq"] {
        assert!(tmp.path().join(kind).join("summary.json").exists());
    }
    assert!(tmp.path().join("report.json").exists());

    // One PQ level makes PQ a FIFO, so WFQ beats it and the ordering breaks.
    let bad = stepqos(&[
        "compare",
        "--scenario",
        &scenario("overload"),
        "--set",
        "qdisc.pq_levels=1",
        "--set",
        "run.duration_s=20",
        "--out",
        out,
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("Fail"));
}

#[test]
fn topo_prints_one_line_per_directed_link() {
    let o = stepqos(&["topo", "--scenario", &scenario("overload")]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    // S = 4, H = 3: 2(S-1) backbone + 2SH access links.
    assert_eq!(text.lines().count(), 2 * 3 + 2 * 4 * 3);
    for line in text.lines() {
        assert_eq!(line.split(' ').count(), 5, "{line}");
    }
}

#[test]
fn bundled_names_resolve_without_a_path() {
    let o = stepqos(&["topo", "--scenario", "uncongested"]);
    assert!(o.status.success());
}

#[test]
fn bad_input_is_reported() {
    let o = stepqos(&["run", "--scenario", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(2));
    let o = stepqos(&["run", "--scenario", "uncongested", "--set", "run.colour=red"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    let o = stepqos(&["run", "--scenario", "uncongested", "--qdisc", "red"]);
    assert!(!o.status.success());
}
