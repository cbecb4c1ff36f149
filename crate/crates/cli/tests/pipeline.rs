use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use unlearn_cli::config::RunConfig;
use unlearn_cli::report::RunSummary;
use unlearn_core::dataset::load_uds;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unlearn"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen(dir: &Path) {
    run(bin().args(["gen-data", "--spec"]).arg(configs().join("quick.cfg")).arg("--out").arg(dir));
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn gen_data_default_sizes_and_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let spec = tmp.path().join("default.cfg");
    fs::write(&spec, "").unwrap();
    run(bin().args(["gen-data", "--spec"]).arg(&spec).arg("--out").arg(&a));
    let sizes: Vec<usize> =
        ["train", "val", "test"].iter().map(|s| load_uds(a.join(format!("{s}.uds"))).unwrap().len()).collect();
    assert_eq!(sizes, vec![2000, 500, 500]);
    assert!(fs::read_to_string(a.join("resolved.cfg")).unwrap().contains("seed = 7"));

    let b = tmp.path().join("b");
    run(bin().args(["gen-data", "--spec"]).arg(&spec).arg("--out").arg(&b));
    for f in ["train.uds", "val.uds", "test.uds", "manifest.json", "labels.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_key_exits_2_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.cfg");
    fs::write(&spec, "[poison]\nmethod = errmax\nepsillon = 8/255\n").unwrap();
    let out = bin().args(["gen-data", "--spec"]).arg(&spec).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("epsillon"), "{err}");
}

#[test]
fn poison_synthetic_summary_and_zero_epsilon() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data);
    let syn = tmp.path().join("syn");
    run(bin().args(["poison", "--method", "synthetic", "--in"]).arg(&data).arg("--out").arg(&syn));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(syn.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["details"]["patches"], 16);
    assert!(summary["achieved_linf"].as_f64().unwrap() <= 8.0 / 255.0 + 1e-12);
    assert!(syn.join("noise.upr").exists());

    let zero = tmp.path().join("zero");
    run(bin()
        .args(["poison", "--method", "errmax", "--epsilon", "0", "--cfg"])
        .arg(configs().join("quick.cfg"))
        .arg("--in")
        .arg(&data)
        .arg("--out")
        .arg(&zero));
    assert_eq!(load_uds(zero.join("train.uds")).unwrap(), load_uds(data.join("train.uds")).unwrap());
}

#[test]
fn class_wise_errmax_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data);
    let out = bin()
        .args(["poison", "--method", "errmax", "--class-wise", "--in"])
        .arg(&data)
        .arg("--out")
        .arg(tmp.path().join("p"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_method_is_rejected() {
    let out = bin().args(["poison", "--method", "blend", "--in", "x", "--out", "y"]).output().unwrap();
    assert!(!out.status.success());
}

fn break_run(data: &Path, train: &Path, mode: &str, cfg: &Path, out: &Path) -> RunSummary {
    run(bin()
        .args(["break", "--mode", mode, "--train"])
        .arg(train)
        .arg("--val")
        .arg(data.join("val.uds"))
        .arg("--test")
        .arg(data.join("test.uds"))
        .arg("--cfg")
        .arg(cfg)
        .arg("--out")
        .arg(out));
    serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap()
}

#[test]
fn break_modes_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data);
    let quick = configs().join("quick.cfg");
    let train = data.join("train.uds");

    let k0 = tmp.path().join("k0.cfg");
    fs::write(&k0, format!("{}\n[output]\nname = k0\n", fs::read_to_string(&quick).unwrap().replace("iterations = 2", "iterations = 0"))).unwrap();
    let r = break_run(&data, &train, "nonlinear", &k0, &tmp.path().join("nl0"));
    assert_eq!(r.defense_accuracy, r.no_defense_accuracy);
    assert!(tmp.path().join("nl0/break_report.csv").exists());

    let opa = break_run(&data, &train, "opa", &k0, &tmp.path().join("opa"));
    assert!(opa.metrics["orthogonality_residual"] < 1e-8);
    assert!(opa.metrics["max_projection_residual"] < 1e-8);

    let adv = break_run(&data, &train, "advtrain", &k0, &tmp.path().join("adv"));
    assert!((0.0..=1.0).contains(&adv.defense_accuracy));

    let table = tmp.path().join("out/table.csv");
    let stdout = run(bin()
        .args(["report", "--runs"])
        .arg(tmp.path().join("nl0"))
        .arg(tmp.path().join("opa"))
        .arg(tmp.path().join("adv"))
        .arg("--out")
        .arg(&table))
    .stdout;
    let csv = fs::read_to_string(&table).unwrap();
    assert_eq!(csv, String::from_utf8(stdout).unwrap());
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(csv.starts_with("approach,no_defense,opa,nonlinear,improvement_pct,adv_train\n"));
}

#[test]
fn break_with_missing_split_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["break", "--mode", "opa", "--train", "nope.uds", "--val", "nope.uds", "--test", "nope.uds", "--out"])
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn report_refuses_mixed_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    for (dir, seed) in [("a", 7), ("b", 8)] {
        let d = tmp.path().join(dir);
        fs::create_dir_all(&d).unwrap();
        let s = RunSummary {
            name: "x".into(),
            mode: if seed == 7 { "opa" } else { "nonlinear" }.into(),
            dataset_seed: seed,
            no_defense_accuracy: 0.3,
            defense_accuracy: 0.6,
            metrics: Default::default(),
        };
        fs::write(d.join("run.json"), serde_json::to_string(&s).unwrap()).unwrap();
    }
    let out = bin()
        .args(["report", "--runs"])
        .arg(tmp.path().join("a"))
        .arg(tmp.path().join("b"))
        .arg("--out")
        .arg(tmp.path().join("t.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn binary_pipeline_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let quick = configs().join("quick.cfg");
    let go = |root: &Path| {
        gen(&root.join("data"));
        run(bin()
            .args(["poison", "--method", "ops", "--cfg"])
            .arg(&quick)
            .arg("--in")
            .arg(root.join("data"))
            .arg("--out")
            .arg(root.join("ops")));
        break_run(&root.join("data"), &root.join("ops/train.uds"), "nonlinear", &quick, &root.join("run"));
        run(bin().args(["report", "--runs"]).arg(root.join("run")).arg("--out").arg(root.join("table.json")));
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    go(&a);
    go(&b);
    for f in [
        "data/train.uds",
        "ops/train.uds",
        "ops/noise.upr",
        "ops/summary.json",
        "run/run.json",
        "run/metrics.csv",
        "run/break_report.json",
        "run/break_report.csv",
        "run/resolved.cfg",
        "table.json",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
