use std::path::PathBuf;
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn clubsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clubsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn last_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .last()
        .unwrap_or_default()
        .to_string()
}

fn value(line: &str, key: &str) -> f64 {
    line.strip_prefix(&format!("{key}="))
        .unwrap_or_else(|| panic!("{line} lacks {key}"))
        .parse()
        .unwrap()
}

#[test]
fn solve_reports_fixed_point() {
    let out = clubsim(&["solve", config("single_q0.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!((value(&last_line(&out), "n_total") - 58.2812).abs() < 1e-4);
    assert!(String::from_utf8_lossy(&out.stdout).contains("stable=true"));

    let out = clubsim(&["solve", config("single_n60.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(last_line(&out), "n_total=0");
}

#[test]
fn solve_non_convergence_exits_2() {
    let out = clubsim(&["solve", config("mixed_q010.json").to_str().unwrap(), "--max-iter", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(last_line(&out).starts_with("n_total="));
}

#[test]
fn invalid_config_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(config("single_q0.json"))
        .unwrap()
        .replace("\"supply\": [1, 0]", "\"supply\": [0.5, 0.4]");
    std::fs::write(&path, text).unwrap();
    let out = clubsim(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("classes[0].supply"));

    let out = clubsim(&["viability", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn viability_verdicts() {
    let check = |name: &str, line: &str| {
        let out = clubsim(&["viability", config(name).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8_lossy(&out.stdout).to_string();
        assert!(text.lines().any(|l| l == line), "{name}: {text}");
    };
    check("single_q020.json", "sufficient=true");
    check("single_q0.json", "necessary=false");
    check("single_n60.json", "sufficient=false");
    check("seeded_incentive.json", "necessary=true");
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg = config("single_q0.json");
    let run = |p: &PathBuf| {
        clubsim(&[
            "simulate",
            cfg.to_str().unwrap(),
            "--rounds",
            "2000",
            "--warmup",
            "200",
            "--seed",
            "9",
            "--out",
            p.to_str().unwrap(),
        ])
    };
    let (oa, ob) = (run(&a), run(&b));
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(oa.stdout, ob.stdout);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("round,class_0,total\n"));
    assert_eq!(text.lines().count(), 2002);
}

#[test]
fn simulate_rejects_short_runs() {
    let out = clubsim(&[
        "simulate",
        config("single_q0.json").to_str().unwrap(),
        "--rounds",
        "110",
        "--warmup",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_mean_near_fixed_point() {
    let out = clubsim(&["simulate", config("single_q0.json").to_str().unwrap(), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let mean = value(&last_line(&out), "n_total");
    assert!((mean - 58.2812).abs() / 58.2812 < 0.05, "{mean}");
}

#[test]
fn fig2_single_row_and_bad_mode() {
    let out = clubsim(&["fig2", "--q-max", "0", "--steps", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "q,n1,n2,n_mixed,gain\n0,58.2812,58.2812,116.562,1\n"
    );
    let out = clubsim(&["fig2", "--mode", "quantum"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fig_csvs_parse_and_repeat() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, header, cols) in [
        ("fig2", "q,n1,n2,n_mixed,gain", 5),
        ("fig3", "q,N2,type2_participation", 3),
    ] {
        let path = dir.path().join(format!("{cmd}.csv"));
        let args = [
            cmd,
            "--mode",
            "stochastic",
            "--steps",
            "3",
            "--rounds",
            "600",
            "--warmup",
            "100",
            "--seed",
            "17",
            "--out",
            path.to_str().unwrap(),
        ];
        assert_eq!(clubsim(&args).status.code(), Some(0));
        let first = std::fs::read_to_string(&path).unwrap();
        assert_eq!(clubsim(&args).status.code(), Some(0));
        assert_eq!(first, std::fs::read_to_string(&path).unwrap());
        let mut lines = first.lines();
        assert_eq!(lines.next(), Some(header));
        for line in lines {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert_eq!(fields.len(), cols);
        }
    }
}

#[test]
fn help_exits_zero() {
    assert_eq!(clubsim(&["--help"]).status.code(), Some(0));
    assert_eq!(clubsim(&[]).status.code(), Some(1));
}
