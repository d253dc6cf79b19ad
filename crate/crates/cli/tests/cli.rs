use std::path::Path;
use std::process::{Command, Output};

fn hypfrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypfrac"))
        .args(args)
        .env("HYPFRAC_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn kernel_table_has_one_row_per_radius() {
    let o = hypfrac(&["kernel", "--n", "3", "--gamma", "0.5", "--rho-grid", "log:0.01:10:50"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("# alpha_gamma:"));
    assert!(out.lines().any(|l| l == "rho,value"));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 50);
    // positive and decreasing for γ > 0
    let vals: Vec<f64> = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0));
}

#[test]
fn kernel_rejects_orders_outside_the_range() {
    for g in ["1.2", "0", "-1"] {
        assert_eq!(code(&hypfrac(&["kernel", "--gamma", g])), 2, "gamma {g}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&hypfrac(&["frac-apply", "--function", "cosine:1"])), 2);
    assert_eq!(code(&hypfrac(&["kernel", "--rho-grid", "cube:0:1:3"])), 2);
    assert_eq!(code(&hypfrac(&["no-such-command"])), 2);
    assert_eq!(code(&hypfrac(&["verify", "--only", "no-such-criterion"])), 2);
}

#[test]
fn frac_apply_routes_agree_and_constants_vanish() {
    let o = hypfrac(&["frac-apply", "--function", "gaussian:1", "--rho-grid", "0.5,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("rho,spectral,pv,neumann,max_pairwise_reldiff"));
    for row in data_rows(&out) {
        let d: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(d < 1e-4, "{row}");
    }

    let o = hypfrac(&["frac-apply", "--function", "constant:3", "--rho-grid", "0.5,2"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    for row in data_rows(&out) {
        for v in row.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap().abs() < 1e-10, "{row}");
        }
    }
}

#[test]
fn a_missed_gate_exits_1() {
    let o = hypfrac(&["frac-apply", "--function", "gaussian:1", "--rho-grid", "2", "--gate", "1e-12"]);
    assert_eq!(code(&o), 1);
    // the table is still written
    assert_eq!(data_rows(&String::from_utf8(o.stdout).unwrap()).len(), 1);
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_hypfrac"))
            .args(["kernel", "--rho-grid", "log:0.05:8:20", "--output"])
            .arg(&path)
            .env("HYPFRAC_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        std::fs::read(&path).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("4", "b.csv"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test run\ngamma = 0.25\nrho_grid = lin:0.5:1.5:3\nformat = json\n").unwrap();
    let o = hypfrac(&["kernel", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["gamma"], "0.25");
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);

    let o = hypfrac(&["kernel", "--config", cfg.to_str().unwrap(), "--format", "csv", "--gamma", "0.5"]);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("# gamma: 0.5\n"));

    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(code(&hypfrac(&["kernel", "--config", cfg.to_str().unwrap()])), 2);
}

fn descriptor(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn admissibility_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let verdict = |body: &str| {
        let o = hypfrac(&["admissible", &descriptor(dir.path(), "d.txt", body)]);
        (code(&o), serde_json::from_slice::<serde_json::Value>(&o.stdout).ok())
    };

    let (c, v) = verdict("kind = rotsym\nname = hyperbolic\nn = 3\nphi = sinh(r)\n");
    assert_eq!(c, 0);
    let v = v.unwrap();
    assert_eq!(v["admissible"], true);
    assert_eq!(v["bishop"]["holds"], true);

    let (c, v) = verdict("kind = geomfinite\nn = 3\ndelta = 0.5\ncusp_ranks = 1\n");
    assert_eq!(c, 0);
    assert_eq!(v.unwrap()["rule"], "i");

    // β = 1, rank 2 < (n-1)² - β² = 3
    let (c, v) = verdict("kind = geomfinite\nn = 3\ndelta = 1.5\ncusp_ranks = 2\nhas_maximal_cusp = true\n");
    assert_eq!(c, 0);
    assert_eq!(v.unwrap()["rule"], "ii");

    let (c, v) = verdict("kind = geomfinite\nn = 3\ndelta = 0.8\ncusp_ranks = 2\nhas_maximal_cusp = true\n");
    assert_eq!(c, 0);
    let v = v.unwrap();
    assert_eq!(v["admissible"], false);
    assert_eq!(v["rule"], "none");

    assert_eq!(verdict("kind = rotsym\nn = 3\nphi = sinh((r\n").0, 2);
    assert_eq!(verdict("kind = torus\n").0, 2);
    assert_eq!(verdict("kind = geomfinite\nn = 3\n").0, 2);
}

#[test]
fn heat_table_rows_and_rejection() {
    let o = hypfrac(&["heat-table", "--profile", "sinh(r)", "--t-grid", "0.5,1", "--rho-grid", "0,1,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().any(|l| l == "t,r,value"));
    assert_eq!(data_rows(&out).len(), 6);
    assert_eq!(code(&hypfrac(&["heat-table", "--profile", "r^2"])), 2);
}

#[test]
fn verify_single_criterion_is_reproducible() {
    let run = || {
        let o = hypfrac(&["verify", "--only", "energy-constant", "--no-timings"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("[PASS]"));
        o.stdout
    };
    let a = run();
    assert_eq!(a, run());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["all_pass"], true);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 1);
    assert!(v["criteria"][0].get("seconds").is_none());
}

#[test]
fn verify_failure_exits_1() {
    // the growth-exponent criterion is not attainable at the stated exponent
    let o = hypfrac(&["verify", "--only", "10", "--no-timings"]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["all_pass"], false);
}
