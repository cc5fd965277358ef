use std::path::Path;
use std::process::{Command, Output};

use hmopt_core::capacity::{rate_hp, rate_lp, ChannelSpec, QuadratureSpec};
use hmopt_core::constellation::{hqam, HqamParams};
use hmopt_core::optimizer::{max_hp_rate, ProblemSpec, Symmetry};
use num_complex::Complex64;
use serde_json::Value;

fn hmopt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmopt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn number(out: &Output) -> f64 {
    String::from_utf8_lossy(&out.stdout).trim().parse().expect("numeric output")
}

fn scenario1() -> ProblemSpec {
    ProblemSpec {
        m_h: 2,
        m_l: 2,
        snr_h_db: 2.92,
        snr_l_db: 10.05,
        r_star: 0.0,
        power: 1.0,
        papr_limit: None,
        symmetry: Symmetry::None,
    }
}

#[test]
fn coverage_lookups() {
    let dir = tempfile::tempdir().unwrap();
    let paper = ["--ps", "66", "--pn", "-95", "--radius", "4", "--sigma", "8"];
    let out = hmopt(dir.path(), &[&["coverage", "--percent", "90"][..], &paper].concat());
    assert!(out.status.success());
    assert!((number(&out) - 2.92).abs() <= 0.05);

    let out = hmopt(dir.path(), &[&["coverage", "--snr", "2.92"][..], &paper].concat());
    assert!(out.status.success());
    assert!((number(&out) - 0.90).abs() <= 0.002);
    assert!(dir.path().join("hmopt-coverage.manifest.json").exists());

    let out = hmopt(dir.path(), &["coverage", "--percent", "150"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fraction must be in (0,1)"));

    for bad in [&["coverage"][..], &["coverage", "--percent", "90", "--snr", "3"], &["coverage", "--radius", "4"]] {
        assert_eq!(hmopt(dir.path(), bad).status.code(), Some(2), "{bad:?}");
    }
    let out = hmopt(dir.path(), &["coverage", "--percent", "50", "--json"]);
    let v = json(&out);
    assert!((v["result"]["snr_db"].as_f64().unwrap() - 15.29).abs() <= 0.05);
}

#[test]
fn capacity_reports() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("qpsk.json"),
        r#"{"m_h":2,"m_l":0,"points":[[1,1],[-1,1],[1,-1],[-1,-1]]}"#,
    )
    .unwrap();
    let out = hmopt(dir.path(), &["capacity", "--constellation", "qpsk.json", "--snr-h", "10"]);
    assert!(out.status.success());
    let v = json(&out);
    // Each quadrature arm is a BPSK at half the SNR.
    let bpsk = {
        let c = hmopt_core::constellation::Constellation::new_natural(
            1,
            0,
            vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        )
        .unwrap();
        rate_hp(&c, &ChannelSpec::new(10.0, 2.0).unwrap(), &QuadratureSpec::with_nodes(160)).unwrap()
    };
    assert!((v["r_h"].as_f64().unwrap() - 2.0 * bpsk).abs() < 1e-5);
    assert!(v["r_l"].is_null());

    let out = hmopt(dir.path(), &["capacity", "--constellation", "qpsk.json", "--snr-h", "10", "--snr-l", "12"]);
    assert_eq!(out.status.code(), Some(3));

    let collapsed = hqam(&HqamParams::new(0.7, 0.0, 2).unwrap()).unwrap();
    std::fs::write(dir.path().join("flat.json"), collapsed.to_json()).unwrap();
    let out = hmopt(
        dir.path(),
        &["capacity", "--constellation", "flat.json", "--snr-h", "3", "--snr-l", "10", "--nodes", "24"],
    );
    assert!(json(&out)["r_l"].as_f64().unwrap() < 1e-6);

    let c = hqam(&HqamParams::new(0.6, 0.3, 2).unwrap()).unwrap();
    std::fs::write(dir.path().join("h.json"), c.to_json()).unwrap();
    let out = hmopt(
        dir.path(),
        &["capacity", "--constellation", "h.json", "--snr-h", "3", "--snr-l", "10", "--mc-check", "--mc-samples", "50000"],
    );
    let v = json(&out);
    for layer in ["hp", "lp"] {
        for bit in v["mc_check"][layer].as_array().unwrap() {
            let gap = (bit["quadrature"].as_f64().unwrap() - bit["estimate"].as_f64().unwrap()).abs();
            assert!(gap < 3.0 * bit["stderr"].as_f64().unwrap(), "{bit}");
        }
    }

    std::fs::write(dir.path().join("bad.json"), "{\"m_h\": 2").unwrap();
    let out = hmopt(dir.path(), &["capacity", "--constellation", "bad.json", "--snr-h", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hmopt(dir.path(), &["capacity", "--constellation", "missing.json", "--snr-h", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

const FAST: [&str; 6] = ["--nodes", "24", "--starts", "2", "--seed", "3"];

fn scenario_args<'a>(cmd: &'a str, rstar: &'a str) -> Vec<&'a str> {
    vec![cmd, "--ml", "2", "--snr-h", "2.92", "--snr-l", "10.05", "--rstar", rstar]
}

#[test]
fn hqam_matches_shell_scan() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = scenario_args("hqam", "0.8");
    args.extend(FAST);
    args.extend(["--out", "h.json"]);
    let out = hmopt(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let (d1, d2) = (v["d1"].as_f64().unwrap(), v["d2"].as_f64().unwrap());
    assert!((v["power"].as_f64().unwrap() - 2.0 * (d1 * d1 + d2 * d2)).abs() < 1e-9);
    assert!(dir.path().join("h.json").exists());
    assert!(dir.path().join("h.json.manifest.json").exists());

    // At full power the design reduces to the angle of (d1, d2).
    let q = QuadratureSpec::with_nodes(24);
    let (ch_h, ch_l) = (ChannelSpec::new(2.92, 1.0).unwrap(), ChannelSpec::new(10.05, 1.0).unwrap());
    let r_l_at = |t: f64| -> Option<f64> {
        let r = 0.5f64.sqrt();
        let c = hqam(&HqamParams::new(r * t.cos(), r * t.sin(), 2).ok()?).ok()?;
        (rate_hp(&c, &ch_h, &q).unwrap() >= 0.8).then(|| rate_lp(&c, &ch_l, &q).unwrap())
    };
    let step = std::f64::consts::FRAC_PI_2 / 400.0;
    let coarse = (0..=400)
        .filter_map(|k| r_l_at(k as f64 * step).map(|r| (k, r)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    // The optimum sits on the HP constraint, so refine around the coarse best.
    let best = (-1000..=1000)
        .filter_map(|j| r_l_at((coarse.0 as f64 + j as f64 / 1000.0) * step))
        .fold(coarse.1, f64::max);
    let r_l = v["r_l"].as_f64().unwrap();
    assert!(r_l >= best - 1e-3 && r_l <= best + 1e-3, "{r_l} vs {best}");
}

#[test]
fn hqam_near_maximum_threshold_collapses() {
    let dir = tempfile::tempdir().unwrap();
    let q = QuadratureSpec::with_nodes(24);
    let top = max_hp_rate(&scenario1(), &q).unwrap();
    let rstar = format!("{}", top - 1e-7);
    let mut args = scenario_args("hqam", &rstar);
    args.extend(FAST);
    let out = hmopt(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["d2"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn optimize_infeasible_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = scenario_args("optimize", "2.0");
    args.splice(1..1, ["--mh", "2"]);
    args.extend(FAST);
    args.extend(["--out", "c.json"]);
    assert_eq!(hmopt(dir.path(), &args).status.code(), Some(4));
    assert!(!dir.path().join("c.json").exists());

    let mut args = scenario_args("optimize", "1.0");
    args.splice(1..1, ["--mh", "2"]);
    args.extend(["--nodes", "0", "--out", "c.json"]);
    assert_eq!(hmopt(dir.path(), &args).status.code(), Some(2));
    assert_eq!(hmopt(dir.path(), &["optimize", "--mh", "2"]).status.code(), Some(2));
}

fn central_run(dir: &Path) -> (Output, Vec<u8>) {
    let mut args = scenario_args("optimize", "1.2");
    args.splice(1..1, ["--mh", "2"]);
    args.extend(FAST);
    args.extend(["--symmetry", "central", "--out", "c.json"]);
    let out = hmopt(dir, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(dir.join("c.json")).unwrap();
    (out, bytes)
}

#[test]
fn optimize_is_deterministic_and_replayable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (out_a, file_a) = central_run(a.path());
    let (out_b, file_b) = central_run(b.path());
    assert_eq!(file_a, file_b);
    assert_eq!(out_a.stdout, out_b.stdout);

    let v = json(&out_a);
    assert!(v["r_h"].as_f64().unwrap() >= 1.2 - 1e-5);
    assert!((v["power"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    let c = hmopt_core::constellation::Constellation::from_json(&String::from_utf8(file_a).unwrap()).unwrap();
    assert_eq!(c.len(), 16);

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("c.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);

    let out = hmopt(a.path(), &["replay", "c.json.manifest.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("identical") && !text.contains("DIFFERENT"), "{text}");
}

#[test]
fn region_writes_frontiers() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "region", "--mh", "2", "--ml", "2", "--snr-h", "2.92", "--snr-l", "10.05", "--points", "4",
        "--schemes", "hqam,td,hull", "--td-points", "21", "--out", "r.csv",
    ];
    args.extend(FAST);
    let out = hmopt(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["r.csv", "r_hqam_optimized.csv", "r_td_gaussian.csv", "r_hull.csv", "r_summary.json", "r.csv.manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let td = std::fs::read_to_string(dir.path().join("r_td_gaussian.csv")).unwrap();
    let rows: Vec<Vec<f64>> = td
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(2).take(2).map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    let cap = |db: f64| (1.0 + 10f64.powf(db / 10.0)).log2();
    assert!((rows[0][1] - cap(10.05)).abs() < 1e-6);
    assert!((rows[20][0] - cap(2.92)).abs() < 1e-6);
    let combined = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(combined.starts_with("scheme,r_star,r_h,r_l,power,papr\n"));
    assert!(combined.lines().any(|l| l.starts_with("hull,")));

    let out = hmopt(dir.path(), &["region", "--mh", "2", "--ml", "2", "--snr-h", "3", "--snr-l", "10", "--schemes", "hull", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
