use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn adsorb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adsorb"))
        .args(args)
        .env_remove("ADSORB_AGENT_API_KEY")
        .output()
        .expect("binary runs")
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn mocks() -> String {
    format!("mock:{}", fixture("mocks"))
}

const H_PT: [&str; 8] = [
    "--adsorbate",
    "H",
    "--catalyst",
    "Pt",
    "--miller",
    "1,1,1",
    "--seed",
    "7",
];

#[test]
fn evaluate_prints_text_and_json() {
    let o = adsorb(&[
        "evaluate",
        &fixture("table1.csv"),
        "--solutions",
        &fixture("solutions.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("LEDR") && text.contains("35.0 %  (7/20)"), "{text}");
    assert!(text.contains("consistency") && text.contains("85.0 %"), "{text}");

    let o = adsorb(&["evaluate", &fixture("tableS1.csv"), "--json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rsr"]["min"]["system_id"], 1);
    assert_eq!(v["rsr"]["max"]["system_id"], 15);
}

#[test]
fn evaluate_rejects_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = adsorb(&["evaluate", empty.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error"), "{}", stderr(&o));
}

#[test]
fn build_slab_then_enumerate() {
    let dir = tempfile::tempdir().unwrap();
    let slab = dir.path().join("pt111.extxyz");
    let o = adsorb(&[
        "build-slab",
        "--catalyst",
        "Pt",
        "--miller",
        "1,1,1",
        "--out",
        slab.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = adsorb(&[
        "enumerate",
        "--slab",
        slab.to_str().unwrap(),
        "--random",
        "5",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    // 2×2 fcc(111): one ontop, three bridges and two hollows per surface atom
    assert_eq!(v["counts"], serde_json::json!({"ontop": 4, "bridge": 12, "hollow": 8}));
    assert_eq!(v["random"].as_array().unwrap().len(), 5);
}

fn write_dimer(path: &Path, element: &str, r: f64) {
    let text = format!(
        "2\nLattice=\"30 0 0 0 30 0 0 0 30\" Properties=species:S:1:pos:R:3 pbc=\"F F F\"\n{element} 5 5 5\n{element} {} 5 5\n",
        5.0 + r
    );
    std::fs::write(path, text).unwrap();
}

#[test]
fn relax_reaches_the_dimer_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("dimer.extxyz");
    let sigma = 2.754 / 2f64.powf(1.0 / 6.0);
    write_dimer(&input, "Pt", 1.3 * sigma);
    let out = dir.path().join("relaxed.extxyz");
    let o = adsorb(&[
        "relax",
        "--in",
        input.to_str().unwrap(),
        "--fmax",
        "1e-6",
        "--max-steps",
        "5000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("status converged"), "{text}");
    let energy: f64 = text.split_whitespace().nth(3).unwrap().parse().unwrap();
    let epsilon = 0.080 * 0.0433641;
    assert!((energy + epsilon).abs() < 1e-4, "{energy}");
    assert!(out.is_file());
}

#[test]
fn relax_rejects_an_element_without_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("fe.extxyz");
    write_dimer(&input, "Fe", 2.5);
    let o = adsorb(&["relax", "--in", input.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Fe"), "{}", stderr(&o));
}

#[test]
fn heuristic_run_reports_the_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "run",
        "--strategy",
        "heuristic",
        "--calculator",
        "builtin",
        "--no-timestamps",
        "-o",
    ];
    args.push(dir.path().to_str().unwrap());
    args.extend(H_PT);
    let o = adsorb(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    for key in [
        "system",
        "solution",
        "transcript",
        "configurations",
        "delta_e",
        "delta_e_ads",
        "argmin",
        "n_init",
        "seed",
    ] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["seed"], 7);
    assert_eq!(r["n_init"], 24);
    assert!(r.get("wall_time_s").is_none());
    let valid_min = r["configurations"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c.get("rejection").is_none())
        .map(|c| c["delta_e"].as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(r["delta_e_ads"].as_f64().unwrap(), valid_min);
    assert!(dir.path().join("best.extxyz").is_file());
}

#[test]
fn agent_run_is_byte_identical_and_smaller() {
    let a = tempfile::tempdir().unwrap();
    let run = |dir: &Path, threads: &str| {
        let llm = mocks();
        let mut args = vec![
            "run",
            "--strategy",
            "agent",
            "--llm",
            &llm,
            "--no-timestamps",
            "--parallelism",
            threads,
            "-o",
        ];
        args.push(dir.to_str().unwrap());
        args.extend(H_PT);
        let o = adsorb(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(dir.join("report.json")).unwrap()
    };
    // the config echo includes the output path, so rerun into the same place
    let first = run(a.path(), "2");
    assert_eq!(first, run(a.path(), "2"));
    let r = report(a.path());
    assert_eq!(r["solution"]["site_type"], "hollow");
    assert!(r["n_init"].as_u64().unwrap() < 24);
    assert!(a.path().join("transcript.json").is_file());
}

#[test]
fn agent_failure_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let llm = mocks();
    let base = [
        "run",
        "--adsorbate",
        "NNH",
        "--catalyst",
        "Pt",
        "--miller",
        "1,1,1",
        "--strategy",
        "agent",
        "--llm",
        &llm,
    ];
    let mut args = base.to_vec();
    args.extend(["-o", dir.path().to_str().unwrap()]);
    let o = adsorb(&args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    args.extend(["--fallback", "heuristic", "--fmax", "0.01"]);
    let o = adsorb(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(report(dir.path())["fallback_reason"].is_string());
}

#[test]
fn live_mode_without_key_names_the_variable() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "run",
        "--strategy",
        "agent",
        "--llm",
        "live",
        "-o",
        dir.path().to_str().unwrap(),
    ];
    args.extend(H_PT);
    let o = adsorb(&args);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("ADSORB_AGENT_API_KEY"), "{}", stderr(&o));
}

#[test]
fn config_file_with_flag_override_and_all_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "[system]\nadsorbate = \"H\"\ncatalyst = \"Pt\"\nminer = 1\n[run]\nstrategy = \"all\"\nseed = 3\nn_random = 10\n[llm]\nmock = {:?}\n",
            fixture("mocks")
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = adsorb(&["run", "--config", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(!o.status.success(), "unknown keys are rejected");

    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("miner = 1", "miller = [1, 1, 1]");
    std::fs::write(&cfg, text).unwrap();
    let o = adsorb(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--n-random",
        "6",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for s in ["agent", "heuristic", "random"] {
        assert!(out.join(s).join("report.json").is_file(), "{s}");
    }
    let cmp: Value = serde_json::from_slice(&std::fs::read(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["random"]["n_init"], 6);
    assert_eq!(cmp["algorithm"]["n_init"], 24 + 6);
    assert_eq!(report(&out.join("random"))["seed"], 3);
}

#[test]
fn run_against_an_http_calculator() {
    let mut server = Command::new(env!("CARGO_BIN_EXE_adsorb"))
        .args(["calculator", "--http", "127.0.0.1:0", "--adsorbate", "H"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().trim_start_matches("listening on ").to_string();

    let (remote, local) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let go = |dir: &Path, calc: &str| {
        let mut args = vec![
            "run",
            "--strategy",
            "heuristic",
            "--calculator",
            calc,
            "--no-timestamps",
            "-o",
        ];
        args.push(dir.to_str().unwrap());
        args.extend(H_PT);
        let o = adsorb(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        report(dir)
    };
    let a = go(remote.path(), &url);
    let b = go(local.path(), "builtin");
    server.kill().unwrap();
    let _ = server.wait();
    assert_eq!(a["delta_e"], b["delta_e"]);
}
