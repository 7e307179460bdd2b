use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ssr_core::harness::{read_results, ExperimentPlan, Method};

fn ssr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ssr(args);
    assert!(
        out.status.success(),
        "ssr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_train_calibrate_eval_time() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "gen", "--n", "12", "--l", "4", "--p", "0.2", "--seed", "9", "--sizes", "600,150,120", "--out", path(&data),
    ]);
    for f in ["scenario.toml", "train.ssup", "validation.ssup", "test.ssup"] {
        assert!(data.join(f).exists(), "{f} missing");
    }

    let out = ok(&["train", "--data", path(&data), "--epochs", "3"]);
    assert!(out.contains("r_star="), "{out}");
    let model = data.join("model.ssae");
    assert!(model.exists());

    let csv = dir.path().join("grid.csv");
    let out = ok(&["calibrate", "--data", path(&data), "--checkpoint", path(&model), "--csv", path(&csv)]);
    assert!(out.starts_with("r_star="));
    assert!(fs::read_to_string(&csv).unwrap().starts_with("r,P_E\n"));

    let results = dir.path().join("eval.csv");
    ok(&[
        "eval", "--data", path(&data), "--methods", "lasso,amp", "--calibration-samples", "60", "--out", path(&results),
    ]);
    let rows = read_results(&results).unwrap();
    let methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, [Method::Proposed, Method::Lasso, Method::Amp]);
    assert!(rows.iter().all(|r| r.test_hash == rows[0].test_hash));
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.error_rate.unwrap())));

    let out = ok(&["time", "--data", path(&data), "--timing-samples", "50"]);
    assert!(out.contains("proposed") && out.contains("s/sample"), "{out}");
}

#[test]
fn sweep_from_flags_writes_one_row_per_method_and_value() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    ok(&[
        "sweep", "--n", "12", "--l", "4", "--axis", "L_over_N", "--values", "0.5", "--methods", "lasso", "--sizes",
        "200,100,50", "--out", path(&out_dir),
    ]);
    let rows = read_results(out_dir.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].method, rows[0].l), (Method::Lasso, 6));
    let plan = ExperimentPlan::from_toml(&fs::read_to_string(out_dir.join("plan.toml")).unwrap()).unwrap();
    assert_eq!(plan.methods, Some(vec![Method::Lasso]));
}

#[test]
fn sweep_from_plan_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.toml");
    fs::write(
        &plan_path,
        r#"
output_dir = "unused"
methods = ["amp"]

[scenario]
n = 12
l = 4
case = "group_correlated"
p_u = 1.0
group_count = 4
p = 0.1
sigma2 = 0.1
seed = 1

[sizes]
train = 100
validation = 60
test = 40

[sweep]
axis = "p_u"
values = [0.5, 1.0]
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    ok(&["sweep", "--plan", path(&plan_path), "--seed", "4", "--out", path(&out_dir)]);
    let rows = read_results(out_dir.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.seed == 4 && r.is_ok()));
}

#[test]
fn invalid_requests_fail_with_a_message() {
    let out = ssr(&["sweep", "--axis", "p_u", "--values", "0.5", "--out", "/tmp/never"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_u"));

    let out = ssr(&["sweep", "--axis", "sideways", "--values", "0.5"]);
    assert!(!out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let out = ssr(&["eval", "--data", path(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.toml"));
}

#[test]
fn shipped_plans_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("plans");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let plan = ExperimentPlan::from_toml(&fs::read_to_string(&p).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(plan.train.seed, plan.scenario.seed, "{}", p.display());
        count += 1;
    }
    assert!(count >= 4);
}
