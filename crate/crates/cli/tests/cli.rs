use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const SCENARIO: &str = r#"
duration_ticks = 60
noise_amplitude = 5.0
seed = 3

[[phases]]
start_tick = 0
end_tick = 30
profile = "attack"

[[phases]]
start_tick = 30
end_tick = 60
profile = "normal"

[[antigen_schedule]]
antigen_type = "bad"
active_phases = [0]
emission_rate = 2.0

[[antigen_schedule]]
antigen_type = "good"
active_phases = [1]
emission_rate = 2.0
"#;

fn dca(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dca"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn dca")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scenario.toml"), SCENARIO).unwrap();
    dir
}

#[test]
fn generated_files_reproduce_scenario_run() {
    let dir = setup();
    let d = dir.path();
    ok(dca(
        &[
            "generate",
            "--scenario",
            "scenario.toml",
            "--seed",
            "9",
            "-o",
            "gen",
        ],
        d,
    ));
    for f in ["signals.csv", "antigen.csv", "truth.csv"] {
        assert!(d.join("gen").join(f).exists(), "{f} missing");
    }
    ok(dca(
        &[
            "run",
            "--signals",
            "gen/signals.csv",
            "--antigen",
            "gen/antigen.csv",
            "--seed",
            "9",
            "-o",
            "files.json",
        ],
        d,
    ));
    ok(dca(
        &[
            "run",
            "--scenario",
            "scenario.toml",
            "--seed",
            "9",
            "-o",
            "scenario.json",
        ],
        d,
    ));
    assert_eq!(
        fs::read(d.join("files.json")).unwrap(),
        fs::read(d.join("scenario.json")).unwrap()
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = setup();
    let d = dir.path();
    for name in ["a.csv", "b.csv"] {
        ok(dca(
            &[
                "run",
                "--scenario",
                "scenario.toml",
                "--seed",
                "1",
                "-o",
                name,
            ],
            d,
        ));
    }
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("a.ticks.csv")).unwrap(),
        fs::read(d.join("b.ticks.csv")).unwrap()
    );
}

#[test]
fn report_has_one_entry_per_type() {
    let dir = setup();
    let d = dir.path();
    fs::write(
        d.join("s.csv"),
        "0,error_rate,80\n0,packet_rate,90\n1,error_rate,70\n",
    )
    .unwrap();
    fs::write(d.join("a.csv"), "0,alpha\n0,beta\n1,alpha\n1,gamma\n").unwrap();
    ok(dca(
        &[
            "run",
            "--signals",
            "s.csv",
            "--antigen",
            "a.csv",
            "-o",
            "report.json",
        ],
        d,
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("report.json")).unwrap()).unwrap();
    let types: Vec<&str> = report["antigens"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["antigen_type"].as_str().unwrap())
        .collect();
    assert_eq!(types, ["alpha", "beta", "gamma"]);
}

#[test]
fn two_sources_is_config_error() {
    let dir = setup();
    let d = dir.path();
    fs::write(d.join("s.csv"), "0,error_rate,1\n").unwrap();
    let out = dca(
        &["run", "--signals", "s.csv", "--scenario", "scenario.toml"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("more than one input source"));
}

#[test]
fn bad_input_line_reports_line_number() {
    let dir = setup();
    let d = dir.path();
    fs::write(d.join("s.csv"), "0,error_rate,1\n1,error_rate\n").unwrap();
    let out = dca(&["run", "--signals", "s.csv"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn stdin_stream_matches_files() {
    let dir = setup();
    let d = dir.path();
    ok(dca(
        &["generate", "--scenario", "scenario.toml", "-o", "gen"],
        d,
    ));
    ok(dca(
        &[
            "run",
            "--signals",
            "gen/signals.csv",
            "--antigen",
            "gen/antigen.csv",
            "-o",
            "files.json",
        ],
        d,
    ));

    let signals = fs::read_to_string(d.join("gen/signals.csv")).unwrap();
    let antigen = fs::read_to_string(d.join("gen/antigen.csv")).unwrap();
    let tick = |l: &str| l.split(',').next().unwrap().parse::<u64>().unwrap();
    let mut lines: Vec<&str> = signals.lines().chain(antigen.lines()).collect();
    lines.sort_by_key(|l| tick(l));
    let mut child = Command::new(env!("CARGO_BIN_EXE_dca"))
        .args(["run", "--stream", "-o", "stream.json"])
        .current_dir(d)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    for l in lines {
        writeln!(stdin, "{l}").unwrap();
    }
    drop(stdin);
    assert!(child.wait().unwrap().success());
    assert_eq!(
        fs::read(d.join("files.json")).unwrap(),
        fs::read(d.join("stream.json")).unwrap()
    );
}

#[test]
fn inspect_sorts_by_mcav() {
    let dir = setup();
    let d = dir.path();
    ok(dca(
        &["run", "--scenario", "scenario.toml", "-o", "r.csv"],
        d,
    ));
    let out = ok(dca(&["inspect", "r.csv"], d));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("ticks="))
        .collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert!(rows[0].starts_with("bad"), "{text}");
    assert!(rows[1].starts_with("good"), "{text}");
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let cfg = dca_cli::config::RunConfig::load(&root.join("configs/run.toml")).unwrap();
    cfg.validate().unwrap();
    dca_cli::config::load_scenario(&root.join("configs/split.toml")).unwrap();
}
