//! End-to-end checks of the batch front end: exit codes, resolved-config
//! echo, and byte-identical reruns across worker counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qperc")
}

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qperc-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn invalid_probability_exits_2_and_names_the_field() {
    let dir = scratch_dir("badp");
    let cfg = write_config(&dir, "run.conf", "[law]\np = 1.5\n");
    let out = Command::new(bin()).arg("ids").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("p"), "stderr was: {stderr}");
}

#[test]
fn unknown_key_exits_2() {
    let dir = scratch_dir("badkey");
    let cfg = write_config(&dir, "run.conf", "[run]\nwat = 1\n");
    let out = Command::new(bin())
        .arg("validate-config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_block_exits_3() {
    // p = 1 on a 72x72 box is a single connected block of 5184 > 4096
    let dir = scratch_dir("cap");
    let cfg = write_config(
        &dir,
        "run.conf",
        "[graph]\npreset = square\n[law]\np = 1\n[run]\nsizes = 72\ngrid_points = 11\n",
    );
    let out = Command::new(bin()).arg("ids").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn validate_config_prints_resolved_form() {
    let dir = scratch_dir("validate");
    let cfg = write_config(&dir, "run.conf", "[graph]\npreset = chain\n");
    let out = Command::new(bin())
        .arg("validate-config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("preset = chain"));
    assert!(stdout.contains("buffer = 6"));
    assert!(stdout.contains("# digest = "));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = scratch_dir("repro");
    let body = "\
[graph]
preset = square
[law]
p = 0.7
seed = 42
[run]
sizes = 8,20
grid_points = 201
realizations = 4
estimator = trace
[output]
dir = out
";
    let cfg = write_config(&dir, "run.conf", body);
    let out_dir = dir.join("out");

    let mut snapshots = Vec::new();
    for (workers, subcommand) in [("1", "ids"), ("2", "ids"), ("1", "moments"), ("2", "moments")]
    {
        let status = Command::new(bin())
            .arg(subcommand)
            .arg(&cfg)
            .env("QPERC_WORKERS", workers)
            .status()
            .unwrap();
        assert!(status.success());
        snapshots.push((subcommand, read_outputs(&out_dir)));
    }
    // ids with 1 worker == ids with 2 workers, likewise moments
    assert_eq!(snapshots[0].1, snapshots[1].1, "ids outputs differ");
    assert_eq!(snapshots[2].1, snapshots[3].1, "moments outputs differ");
}

#[test]
fn gnuplot_hints_flag_writes_script() {
    let dir = scratch_dir("gnuplot");
    let body = "[graph]\npreset = chain\n[law]\np = 1\n[run]\nsizes = 8\ngrid_points = 11\n";
    let cfg = write_config(&dir, "run.conf", body);
    let status = Command::new(bin())
        .arg("ids")
        .arg(&cfg)
        .arg("--emit-gnuplot-hints")
        .status()
        .unwrap();
    assert!(status.success());
    let script = fs::read_to_string(dir.join("out").join("plot_ids.gnuplot")).unwrap();
    assert!(script.contains("ids_L8.csv"));
}

#[test]
fn custom_crystal_graph_file_is_accepted() {
    let dir = scratch_dir("custom-graph");
    fs::write(
        dir.join("ladder.graph"),
        "1 2\n0 0 1\n1 1 1\n0 1 0\n",
    )
    .unwrap();
    let body = "[graph]\nfile = ladder.graph\n[law]\np = 1\n[run]\nsizes = 8\ngrid_points = 51\n";
    let cfg = write_config(&dir, "run.conf", body);
    let out = Command::new(bin()).arg("ids").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.join("out").join("ids_L8.csv")).unwrap();
    // two orbits per cell: mass 1 with the box normalizer at p = 1
    assert!(csv.contains("# mass=1.0000000000000000e0"), "csv: {csv}");
}

#[test]
fn molecular_command_finds_the_fixture_state() {
    let dir = scratch_dir("molecular");
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/molecular_z2.cfg")
        .canonicalize()
        .unwrap();
    let body = format!(
        "[graph]\npreset = square\n[law]\np = 0\nexplicit_file = {}\n[run]\nsizes = 12\nenergy = 0\n",
        fixture.display()
    );
    let cfg = write_config(&dir, "run.conf", &body);
    let out = Command::new(bin())
        .arg("molecular")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.join("out").join("molecular_states.txt")).unwrap();
    assert!(report.contains("states=1"), "report: {report}");
    let vector = fs::read_to_string(dir.join("out").join("molecular_state_0.csv")).unwrap();
    assert_eq!(vector.lines().count(), 2 + 2); // header comment + columns + 2 support rows
}
