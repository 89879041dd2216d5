//! End-to-end runs of the binary: every command, artifact determinism, and
//! the cross-checks between artifacts of different commands.

use std::path::{Path, PathBuf};
use std::process::Command;

struct Run {
    status: std::process::ExitStatus,
    stdout: String,
    stderr: String,
}

fn lssboost(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_lssboost"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        status: out.status,
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Run {
    let run = lssboost(dir, args);
    assert!(
        run.status.success(),
        "command {:?} failed:\n{}\n{}",
        args,
        run.stdout,
        run.stderr
    );
    run
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const SIM_SPEC: &str = r#"
family = "gaussian"
n = 150

[[covariates]]
name = "x1"
[covariates.dist.Uniform]
lo = -1.0
hi = 1.0

[[covariates]]
name = "x2"
[covariates.dist.Normal]
mean = 0.0
sd = 1.0

[[etas]]
intercept = 1.0
[[etas.terms]]
[etas.terms.Linear]
covariate = "x1"
coef = 2.0

[[etas]]
intercept = -0.5
[[etas.terms]]
[etas.terms.Linear]
covariate = "x2"
coef = 0.3
"#;

const FIT_CONFIG: &str = r#"
family = "gaussian"
response = "y"

[control]
mstop = [60]

[[term]]
parameter = "all"
learner = "linear"
covariate = "x1"

[[term]]
parameter = "all"
learner = "linear"
covariate = "x2"

[[term]]
parameter = "mu"
learner = "pspline"
covariate = "x1"

[grid]
max = [40, 40]
min = 5
length_out = 3

[folds]
b = 3
"#;

/// Simulate a dataset and write the fit config; returns the data path.
fn setup(dir: &Path) -> String {
    std::fs::write(dir.join("sim.toml"), SIM_SPEC).unwrap();
    std::fs::write(dir.join("fit.toml"), FIT_CONFIG).unwrap();
    ok(
        dir,
        &["simulate", "--config", "sim.toml", "--out-dir", "sim", "--seed", "7"],
    );
    "sim/data.csv".to_string()
}

#[test]
fn simulate_is_deterministic_and_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("sim.toml"), SIM_SPEC).unwrap();
    ok(dir, &["simulate", "--config", "sim.toml", "--out-dir", "a", "--seed", "9"]);
    ok(dir, &["simulate", "--config", "sim.toml", "--out-dir", "b", "--seed", "9"]);
    ok(dir, &["simulate", "--config", "sim.toml", "--out-dir", "c", "--seed", "10"]);
    assert_eq!(read(dir.join("a/data.csv")), read(dir.join("b/data.csv")));
    assert_eq!(
        read(dir.join("a/true_params.csv")),
        read(dir.join("b/true_params.csv"))
    );
    assert_ne!(read(dir.join("a/data.csv")), read(dir.join("c/data.csv")));

    let bad = lssboost(
        dir,
        &["simulate", "--config", "sim.toml", "--out-dir", "z", "--n", "0"],
    );
    assert!(!bad.status.success());
    assert!(bad.stderr.contains("error:"));
}

#[test]
fn fit_is_deterministic_and_reproducible_from_its_own_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = setup(dir);
    ok(dir, &["fit", "--data", &data, "--config", "fit.toml", "--out-dir", "f1"]);
    ok(dir, &["fit", "--data", &data, "--config", "fit.toml", "--out-dir", "f2"]);
    assert_eq!(read(dir.join("f1/model.json")), read(dir.join("f2/model.json")));
    assert_eq!(
        read(dir.join("f1/risk_trace.csv")),
        read(dir.join("f2/risk_trace.csv"))
    );

    // the resolved config echo re-runs to the identical model
    ok(
        dir,
        &["fit", "--data", &data, "--config", "f1/config_resolved.toml", "--out-dir", "f3"],
    );
    assert_eq!(read(dir.join("f1/model.json")), read(dir.join("f3/model.json")));

    // one risk value per iteration, one selection per parameter per iteration
    let risk = read(dir.join("f1/risk_trace.csv"));
    assert_eq!(risk.lines().count(), 2 + 60);
    let selected = read(dir.join("f1/selected.csv"));
    assert_eq!(selected.lines().count(), 2 + 2 * 60);
}

#[test]
fn predict_on_training_data_matches_the_fitted_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = setup(dir);
    ok(dir, &["fit", "--data", &data, "--config", "fit.toml", "--out-dir", "fit"]);
    ok(
        dir,
        &["predict", "--model", "fit/model.json", "--data", &data, "--out-dir", "pred"],
    );
    let fitted = read(dir.join("fit/fitted.csv"));
    let predicted = read(dir.join("pred/predictions.csv"));
    let body = |text: &str| text.lines().skip(1).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(body(&fitted), body(&predicted));
}

#[test]
fn cv_is_core_count_invariant_and_seed_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = setup(dir);
    let base = [
        "cv", "--data", &data, "--config", "fit.toml", "--seed", "1907",
    ];
    ok(dir, &[&base[..], &["--out-dir", "c1", "--cores", "1"]].concat());
    ok(dir, &[&base[..], &["--out-dir", "c4", "--cores", "4"]].concat());
    assert_eq!(read(dir.join("c1/cv_risk.csv")), read(dir.join("c4/cv_risk.csv")));
    assert_eq!(read(dir.join("c1/folds.csv")), read(dir.join("c4/folds.csv")));
    assert_eq!(
        read(dir.join("c1/chosen_mstop.toml")),
        read(dir.join("c4/chosen_mstop.toml"))
    );

    // same seed, same folds, byte for byte
    ok(dir, &[&base[..], &["--out-dir", "c5", "--cores", "1"]].concat());
    assert_eq!(read(dir.join("c1/folds.csv")), read(dir.join("c5/folds.csv")));
}

#[test]
fn cv_single_point_grid_chooses_that_point_and_refits() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = setup(dir);
    let config = FIT_CONFIG.replace(
        "[grid]\nmax = [40, 40]\nmin = 5\nlength_out = 3",
        "[grid]\nmax = [25, 25]\nmin = 25\nlength_out = 2",
    );
    assert!(config.contains("min = 25"), "fixture edit failed");
    std::fs::write(dir.join("single.toml"), config).unwrap();
    ok(
        dir,
        &["cv", "--data", &data, "--config", "single.toml", "--out-dir", "cv", "--refit"],
    );
    let chosen = read(dir.join("cv/chosen_mstop.toml"));
    assert!(chosen.contains("mstop = [25, 25]"), "{chosen}");
    assert!(dir.join("cv/model_optimal.json").exists());
}

#[test]
fn predint_emits_nested_interval_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = setup(dir);
    ok(dir, &["fit", "--data", &data, "--config", "fit.toml", "--out-dir", "fit"]);
    ok(
        dir,
        &[
            "predint", "--model", "fit/model.json", "--data", &data,
            "--which", "x1", "--pi", "0.8,0.9", "--out-dir", "pi",
        ],
    );
    let text = read(dir.join("pi/predint.csv"));
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# lssboost predint"));
    assert_eq!(lines.next().unwrap(), "grid,median,lo80,hi80,lo90,hi90");
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (median, lo80, hi80, lo90, hi90) = (v[1], v[2], v[3], v[4], v[5]);
        assert!(lo90 <= lo80 && lo80 <= median);
        assert!(median <= hi80 && hi80 <= hi90);
        rows += 1;
    }
    assert_eq!(rows, 150);
}

/// Same shape as SIM_SPEC with the response blown up by 600: mu and its
/// slope times 600, log sigma shifted by ln 600.
const BIG_SIM_SPEC: &str = r#"
family = "gaussian"
n = 150

[[covariates]]
name = "x1"
[covariates.dist.Uniform]
lo = -1.0
hi = 1.0

[[covariates]]
name = "x2"
[covariates.dist.Normal]
mean = 0.0
sd = 1.0

[[etas]]
intercept = 600.0
[[etas.terms]]
[etas.terms.Linear]
covariate = "x1"
coef = 1200.0

[[etas]]
intercept = 5.896929655216146
[[etas.terms]]
[etas.terms.Linear]
covariate = "x2"
coef = 0.3
"#;

#[test]
fn rescaled_fit_equals_manual_division_and_maps_quantiles_back() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("sim.toml"), BIG_SIM_SPEC).unwrap();
    std::fs::write(dir.join("fit.toml"), FIT_CONFIG).unwrap();
    ok(dir, &["simulate", "--config", "sim.toml", "--out-dir", "big", "--seed", "7"]);

    // divide the response column by hand, exactly as --rescale does
    let big = read(dir.join("big/data.csv"));
    let mut small = String::from("y,x1,x2\n");
    for line in big.lines().skip(1) {
        let (y, rest) = line.split_once(',').unwrap();
        let y: f64 = y.parse().unwrap();
        small.push_str(&format!("{:.16e},{rest}\n", y / 600.0));
    }
    std::fs::write(dir.join("small.csv"), small).unwrap();

    ok(
        dir,
        &["fit", "--data", "big/data.csv", "--config", "fit.toml", "--rescale", "600", "--out-dir", "scaled"],
    );
    ok(dir, &["fit", "--data", "small.csv", "--config", "fit.toml", "--out-dir", "manual"]);

    // identical fit state except for the recorded rescale factor
    let scaled = read(dir.join("scaled/model.json"));
    assert!(scaled.contains("\"rescale\": 600.0"), "rescale not recorded");
    assert_eq!(
        scaled.replace("\"rescale\": 600.0", "\"rescale\": 1.0"),
        read(dir.join("manual/model.json"))
    );

    // quantiles (and only quantiles) come back in original response units
    ok(
        dir,
        &[
            "predint", "--model", "scaled/model.json", "--data", "big/data.csv",
            "--which", "x1", "--pi", "0.9", "--out-dir", "qs",
        ],
    );
    ok(
        dir,
        &[
            "predint", "--model", "manual/model.json", "--data", "small.csv",
            "--which", "x1", "--pi", "0.9", "--out-dir", "qm",
        ],
    );
    let parse = |name: &str| -> Vec<Vec<f64>> {
        read(dir.join(name).join("predint.csv"))
            .lines()
            .skip(2)
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect()
    };
    let qs = parse("qs");
    let qm = parse("qm");
    assert_eq!(qs.len(), 150);
    for (s, m) in qs.iter().zip(&qm) {
        assert_eq!(s[0].to_bits(), m[0].to_bits());
        for c in 1..4 {
            assert_eq!(s[c].to_bits(), (600.0 * m[c]).to_bits(), "column {c}");
        }
    }
}

#[test]
fn partials_selector_picks_matching_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = setup(dir);
    ok(dir, &["fit", "--data", &data, "--config", "fit.toml", "--out-dir", "fit"]);
    ok(
        dir,
        &[
            "partials", "--model", "fit/model.json", "--data", &data,
            "--learner", "pspline", "--out-dir", "part",
        ],
    );
    let files: Vec<String> = std::fs::read_dir(dir.join("part"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(files, vec!["partial_01_mu_pspline-x1.csv".to_string()]);
    let table = read(dir.join("part/partial_01_mu_pspline-x1.csv"));
    assert!(table.lines().next().unwrap().contains("learner=pspline(x1)"));
    assert_eq!(table.lines().count(), 2 + 150);

    let none = lssboost(
        dir,
        &[
            "partials", "--model", "fit/model.json", "--data", &data,
            "--learner", "nonesuch", "--out-dir", "z",
        ],
    );
    assert!(!none.status.success());
}

#[test]
fn region_summary_writes_one_value_per_region() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let rows: String = (0..30)
        .map(|i| {
            let district = ["east", "north", "south"][i % 3];
            let y = 1.0 + 0.3 * (i % 3) as f64 + 0.01 * i as f64;
            format!("{y},{district}\n")
        })
        .collect();
    std::fs::write(dir.join("data.csv"), format!("y,district\n{rows}")).unwrap();
    std::fs::write(dir.join("adj.csv"), "north,south\nsouth,east\n").unwrap();
    std::fs::write(
        dir.join("fit.toml"),
        r#"
family = "gaussian"
response = "y"

[control]
mstop = [30]

[[term]]
parameter = "all"
learner = "mrf"
covariate = "district"
adjacency = "adj.csv"
df = 1.5
"#,
    )
    .unwrap();
    ok(dir, &["fit", "--data", "data.csv", "--config", "fit.toml", "--out-dir", "fit"]);
    ok(
        dir,
        &[
            "region-summary", "--model", "fit/model.json", "--data", "data.csv",
            "--region", "district", "--parameter", "mu", "--out-dir", "rs",
        ],
    );
    let text = read(dir.join("rs/region_summary.csv"));
    let regions: Vec<&str> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(regions, vec!["east", "north", "south"]);
}

#[test]
fn missing_rows_are_dropped_with_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("data.csv"),
        "y,x1,x2\n1.0,0.1,0.2\n2.0,NA,0.4\n1.5,0.3,0.1\n0.5,-0.2,0.3\n\
         1.1,0.25,-0.1\n0.9,-0.1,0.15\n1.3,0.05,0.05\n1.7,0.4,-0.3\n\
         0.8,-0.3,0.2\n1.2,0.2,-0.2\n1.6,0.35,0.25\n1.0,0.0,0.0\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("fit.toml"),
        r#"
family = "gaussian"
response = "y"

[control]
mstop = [10]

[[term]]
learner = "linear"
covariate = "x1"

[[term]]
learner = "linear"
covariate = "x2"
"#,
    )
    .unwrap();
    let run = ok(dir, &["fit", "--data", "data.csv", "--config", "fit.toml", "--out-dir", "fit"]);
    assert!(run.stderr.contains("dropped 1 rows"), "{}", run.stderr);
    assert!(run.stdout.contains("11 observations"), "{}", run.stdout);
}

#[test]
fn invalid_inputs_fail_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = setup(dir);

    // unknown family
    std::fs::write(
        dir.join("bad.toml"),
        "family = \"cauchy\"\nresponse = \"y\"\n\n[[term]]\nlearner = \"linear\"\ncovariate = \"x1\"\n",
    )
    .unwrap();
    let run = lssboost(dir, &["fit", "--data", &data, "--config", "bad.toml", "--out-dir", "o"]);
    assert!(!run.status.success());
    assert!(run.stderr.contains("cauchy"), "{}", run.stderr);

    // cv without a grid section
    let no_grid = FIT_CONFIG.split("[grid]").next().unwrap().to_string();
    std::fs::write(dir.join("nogrid.toml"), no_grid).unwrap();
    let run = lssboost(dir, &["cv", "--data", &data, "--config", "nogrid.toml", "--out-dir", "o"]);
    assert!(!run.status.success());
    assert!(run.stderr.contains("[grid]"), "{}", run.stderr);

    // missing model file
    let run = lssboost(dir, &["predict", "--model", "nope.json", "--data", &data, "--out-dir", "o"]);
    assert!(!run.status.success());
    assert!(run.stderr.contains("error:"), "{}", run.stderr);
}
