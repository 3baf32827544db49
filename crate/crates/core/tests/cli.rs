use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hfgse::io::fixtures::make_mini_ames;
use tempfile::TempDir;

fn hfgse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfgse"))
        .args(args)
        .env_remove("HFG_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_instance(dir: &Path, regions: usize) -> String {
    let path = dir.join(format!("mini_ames_{regions}.json"));
    fs::write(&path, make_mini_ames(regions).unwrap().to_json()).unwrap();
    path.display().to_string()
}

#[test]
fn estimate_writes_the_result_bundle() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance(dir.path(), 2);
    let out_dir = dir.path().join("out");
    let out = hfgse(&["estimate", &inst, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "flows.csv",
        "errors.csv",
        "sankey.json",
        "choropleth.csv",
        "interstate.csv",
        "result.json",
        "instance.json",
    ] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let flows = fs::read_to_string(out_dir.join("flows.csv")).unwrap();
    assert!(flows.starts_with("capability,step,value\n"));
    // 54 capabilities over 12 steps
    assert_eq!(flows.lines().count(), 1 + 54 * 12);
    let interstate = fs::read_to_string(out_dir.join("interstate.csv")).unwrap();
    assert_eq!(interstate.lines().count(), 1 + 6 * 12);
    assert!(interstate
        .lines()
        .skip(1)
        .all(|l| l.starts_with("north,south,")));
    let sankey: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("sankey.json")).unwrap()).unwrap();
    assert_eq!(sankey["steps"].as_array().unwrap().len(), 12);
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("status optimal"), "{summary}");

    let report = hfgse(&["report", out_dir.to_str().unwrap(), "--group-by", "process"]);
    assert_eq!(code(&report), 0, "{}", stderr(&report));
    let table = fs::read_to_string(out_dir.join("report_process.csv")).unwrap();
    assert!(table.starts_with("group,imposed,absolute_error,weighted_error\n"));
    let errors: Vec<f64> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(errors.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn dump_and_provenance_files() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance(dir.path(), 1);
    let qp = dir.path().join("qp.txt");
    let prov = dir.path().join("rows.csv");
    let out = hfgse(&[
        "estimate",
        &inst,
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--alpha",
        "1e-6",
        "--tol",
        "1e-9",
        "--dump-qp",
        qp.to_str().unwrap(),
        "--provenance",
        prov.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&prov).unwrap();
    assert!(text.starts_with("row,equation,k,entity\n"));
    assert!(text.contains(",measurement,"));
    let dumped =
        hfgse::qp::QuadraticProgram::read_dump(&mut fs::read(&qp).unwrap().as_slice()).unwrap();
    let problem = make_mini_ames(1).unwrap().problem().unwrap();
    let a = hfgse::wlse::assemble_wlse(&problem, hfgse::wlse::AlphaRule::Fixed(1e-6)).unwrap();
    assert_eq!(dumped, a.program.qp);
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance(dir.path(), 1);
    let o = dir.path().join("o");
    let o = o.to_str().unwrap();
    for args in [
        vec!["estimate", &inst, "--out", o, "--tol", "-1"],
        vec!["estimate", &inst, "--out", o, "--tol", "abc"],
        vec!["estimate", &inst, "--out", o, "--alpha", "-3"],
        vec!["estimate", &inst],
        vec!["report", o, "--group-by", "planet"],
        vec!["fixture", "mini-ames", "--regions", "3", "--out", o],
        vec!["frobnicate"],
    ] {
        let out = hfgse(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn help_and_version_on_every_subcommand() {
    for sub in [
        vec![],
        vec!["validate"],
        vec!["simulate"],
        vec!["estimate"],
        vec!["report"],
        vec!["fixture"],
        vec!["fixture", "mini-ames"],
    ] {
        for flag in ["--help", "--version"] {
            let mut args = sub.clone();
            args.push(flag);
            let out = hfgse(&args);
            assert_eq!(code(&out), 0, "{args:?}");
            assert!(!out.stdout.is_empty());
        }
    }
}

#[test]
fn instance_errors_have_distinct_codes() {
    let dir = TempDir::new().unwrap();
    let good = make_mini_ames(1).unwrap();

    let mut broken = good.clone();
    broken.capabilities[3].origin = "atlantis".into();
    broken.capabilities[3].destination = "atlantis".into();
    let p = dir.path().join("broken.json");
    fs::write(&p, broken.to_json()).unwrap();
    let out = hfgse(&["validate", p.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(
        stderr(&out).contains("unknown origin buffer"),
        "{}",
        stderr(&out)
    );

    let mut v: serde_json::Value = serde_json::from_str(&good.to_json()).unwrap();
    v["foo"] = serde_json::json!(true);
    let p = dir.path().join("extra.json");
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let out = hfgse(&["validate", p.to_str().unwrap()]);
    assert_eq!(code(&out), 6);
    assert!(stderr(&out).contains("foo"));

    let p = dir.path().join("syntax.json");
    fs::write(&p, "{\n  \"operands\": [\n}").unwrap();
    let out = hfgse(&["validate", p.to_str().unwrap()]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let out = hfgse(&["validate", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    let out = hfgse(&["validate", &write_instance(dir.path(), 2)]);
    assert_eq!(code(&out), 0);
}

#[test]
fn simulate_reports_violations() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance(dir.path(), 1);
    let sched = dir.path().join("schedule.json");
    let mut dig = vec![0.0; 12];
    dig[0] = 5.0;
    let mut burn = vec![0.0; 12];
    burn[1] = 3.0;
    burn[2] = 3.0;
    fs::write(
        &sched,
        serde_json::json!({
            "u_minus": {"mine_coal_north": dig, "use_coal_north": burn, "rail_coal_city_north": dig},
        })
        .to_string(),
    )
    .unwrap();
    let traj = dir.path().join("trajectory.json");
    let out = hfgse(&[
        "simulate",
        &inst,
        sched.to_str().unwrap(),
        "--out",
        traj.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = String::from_utf8(out.stdout).unwrap();
    let count: usize = summary
        .split_whitespace()
        .nth(3)
        .and_then(|w| w.parse().ok())
        .expect("violation count");
    assert!(count > 0, "{summary}");
    assert_eq!(summary.lines().count(), 1 + count);
    assert!(summary.contains("coal@city_north"));
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(&traj).unwrap()).unwrap();
    assert_eq!(t["places"].as_array().unwrap().len(), 13);

    fs::write(&sched, r#"{"u_minus": {"teleport": [1.0]}}"#).unwrap();
    let out = hfgse(&["simulate", &inst, sched.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    fs::write(&sched, r#"{"u_minus": {}, "extra": 1}"#).unwrap();
    let out = hfgse(&["simulate", &inst, sched.to_str().unwrap()]);
    assert_eq!(code(&out), 6);
}

#[test]
fn logging_goes_to_stderr_only() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance(dir.path(), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_hfgse"))
        .args([
            "estimate",
            &inst,
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .env("HFG_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("assembled"));
    assert!(!String::from_utf8(out.stdout).unwrap().contains("assembled"));
}

#[test]
fn fixture_subcommand_round_trips() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("f.json");
    let out = hfgse(&[
        "fixture",
        "mini-ames",
        "--regions",
        "2",
        "--out",
        p.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let loaded = hfgse::io::read_instance(&p).unwrap();
    assert_eq!(loaded, make_mini_ames(2).unwrap());
}
