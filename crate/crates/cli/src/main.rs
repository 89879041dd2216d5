//! Command-line front end for distributional gradient boosting: fit models
//! from CSV data and a TOML config, tune stopping iterations by subsampled
//! out-of-bag risk, and export predictions, prediction intervals, partial
//! effects, and region summaries as deterministic CSV artifacts.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lssboost::boost::{fit, BoostModel, PredictScale};
use lssboost::data::{ingest_csv, Column, ColumnData, Dataset, TypeHint};
use lssboost::family::family_by_name;
use lssboost::infer;
use lssboost::learner::ResolvedBasis;
use lssboost::model_io;
use lssboost::sim;
use lssboost::tune;

use output::{comment_header, dataset_csv, sig, write_file};

#[derive(Parser)]
#[command(
    name = "lssboost",
    version,
    about = "Gradient boosting for distributional regression models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write model.json plus fit artifacts
    Fit(FitArgs),
    /// Search stopping iterations by subsampled out-of-bag risk
    Cv(CvArgs),
    /// Predict all distribution parameters for a dataset
    Predict(PredictArgs),
    /// Marginal prediction intervals along one covariate
    Predint(PredintArgs),
    /// Partial-effect tables for plotting
    Partials(PartialsArgs),
    /// Aggregate a categorical or spatial effect per region
    RegionSummary(RegionSummaryArgs),
    /// Generate synthetic data with known true parameters
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the seed in the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the rescale factor in the config file
    #[arg(long)]
    rescale: Option<f64>,
    /// Print iteration progress to stderr
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Fold-level parallelism
    #[arg(long, default_value_t = 1)]
    cores: usize,
    /// Also write model_optimal.json, the model continued or truncated to
    /// the chosen stopping vector
    #[arg(long)]
    refit: bool,
}

#[derive(Args)]
struct ModelDataArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Optional config supplying column type hints for extra columns
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    io: ModelDataArgs,
}

#[derive(Args)]
struct PredintArgs {
    #[command(flatten)]
    io: ModelDataArgs,
    /// Covariate the interval is marginal over
    #[arg(long)]
    which: String,
    /// Coverage levels in (0, 1)
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.8, 0.9])]
    pi: Vec<f64>,
    #[arg(long, default_value_t = 150)]
    grid_points: usize,
}

#[derive(Args)]
struct PartialsArgs {
    #[command(flatten)]
    io: ModelDataArgs,
    /// Parameter selector: name substring, 1-based index, or empty for all
    #[arg(long, default_value = "")]
    parameter: String,
    /// Learner selector: name substring, 1-based index, or empty for all
    #[arg(long, default_value = "")]
    learner: String,
    #[arg(long, default_value_t = 150)]
    grid_points: usize,
}

#[derive(Args)]
struct RegionSummaryArgs {
    #[command(flatten)]
    io: ModelDataArgs,
    /// Categorical covariate carrying the regions
    #[arg(long)]
    region: String,
    #[arg(long, default_value = "")]
    parameter: String,
    /// Average the full fitted parameter instead of the region effect alone
    #[arg(long)]
    response_scale: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Generator spec (family, covariates, true predictors)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Overrides the row count in the generator config
    #[arg(long)]
    n: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args).map(|_| ()),
        Command::Cv(args) => cmd_cv(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Predint(args) => cmd_predint(args),
        Command::Partials(args) => cmd_partials(args),
        Command::RegionSummary(args) => cmd_region_summary(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Divide the response column by `factor`, leaving everything else alone.
fn rescale_response(data: Dataset, response: &str, factor: f64) -> Result<Dataset> {
    if factor == 1.0 {
        return Ok(data);
    }
    let columns = data
        .columns()
        .iter()
        .map(|c| {
            if c.name == response {
                match &c.data {
                    ColumnData::Continuous(v) => Ok(Column {
                        name: c.name.clone(),
                        data: ColumnData::Continuous(v.iter().map(|x| x / factor).collect()),
                    }),
                    ColumnData::Categorical { .. } => {
                        bail!("response column '{}' is categorical", c.name)
                    }
                }
            } else {
                Ok(c.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::from_columns(columns)?)
}

/// Column typing a loaded model implies: its covariates must be ingested
/// exactly as they were at fit time. A config's [types] section can add
/// hints for columns the model does not use.
fn model_hints(
    model: &BoostModel,
    include_response: bool,
    extra_config: Option<&Path>,
) -> Result<Vec<(String, TypeHint)>> {
    let mut hints: Vec<(String, TypeHint)> = Vec::new();
    if let Some(path) = extra_config {
        hints = config::type_hints(&config::load(path)?)?;
    }
    let mut add = |name: &str, hint: TypeHint| {
        if !hints.iter().any(|(n, _)| n == name) {
            hints.push((name.to_string(), hint));
        }
    };
    if include_response {
        add(&model.response, TypeHint::Continuous);
    }
    for term in &model.terms {
        for learner in term {
            let hint = match learner.basis {
                ResolvedBasis::Linear { .. } | ResolvedBasis::PSpline { .. } => {
                    TypeHint::Continuous
                }
                ResolvedBasis::Categories { .. } | ResolvedBasis::Regions { .. } => {
                    TypeHint::Categorical
                }
            };
            add(&learner.covariate, hint);
        }
    }
    Ok(hints)
}

fn model_used_columns(model: &BoostModel, include_response: bool) -> Vec<String> {
    let mut used = Vec::new();
    if include_response {
        used.push(model.response.clone());
    }
    for term in &model.terms {
        for learner in term {
            if !used.contains(&learner.covariate) {
                used.push(learner.covariate.clone());
            }
        }
    }
    used
}

/// Load a model and re-attach its training data, re-applying the recorded
/// response rescaling so the fingerprints line up.
fn load_attached(io: &ModelDataArgs) -> Result<BoostModel> {
    let mut model = model_io::read_model(&io.model)?;
    let hints = model_hints(&model, true, io.config.as_deref())?;
    let used = model_used_columns(&model, true);
    let (data, dropped) = ingest_csv(&io.data, &hints, Some(&used))?;
    if dropped > 0 {
        eprintln!("dropped {dropped} rows with missing values in used columns");
    }
    let data = rescale_response(data, &model.response.clone(), model.rescale)?;
    model.attach(data)?;
    Ok(model)
}

fn param_names(model: &BoostModel) -> Result<Vec<String>> {
    Ok(family_by_name(&model.family_name)?
        .param_names()
        .iter()
        .map(|s| s.to_string())
        .collect())
}

fn prediction_csv(
    command: &str,
    model: &BoostModel,
    data: &Dataset,
    extras: &str,
) -> Result<String> {
    let names = param_names(model)?;
    let eta = model.predict(data, PredictScale::Link)?;
    let theta = model.predict(data, PredictScale::Response)?;
    let mut out = comment_header(command, model.fingerprint, extras);
    out.push_str("row");
    for p in &names {
        out.push_str(&format!(",eta_{p}"));
    }
    for p in &names {
        out.push_str(&format!(",{p}"));
    }
    out.push('\n');
    for i in 0..data.n() {
        out.push_str(&format!("{}", i + 1));
        for col in eta.iter().chain(theta.iter()) {
            out.push(',');
            out.push_str(&sig(col[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

fn control_summary(model: &BoostModel) -> String {
    format!(
        "family={} response={} mstop={} nu={}",
        model.family_name,
        model.response,
        model
            .visible
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join("/"),
        model
            .nu
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("/")
    )
}

fn cmd_fit(args: FitArgs) -> Result<BoostModel> {
    let file = config::load(&args.config)?;
    let config_dir = args.config.parent().unwrap_or(Path::new("."));
    let resolved = config::resolve(file, config_dir, args.seed, args.rescale, args.trace)?;
    let hints = config::type_hints(&resolved.file)?;
    let used = config::used_columns(&resolved.spec);
    let (raw, dropped) = ingest_csv(&args.data, &hints, Some(&used))?;
    if dropped > 0 {
        eprintln!("dropped {dropped} rows with missing values in used columns");
    }
    let data = rescale_response(raw, &resolved.spec.response, resolved.rescale)?;
    let mut model = fit(&resolved.spec, &data, None, &resolved.control)?;
    model.rescale = resolved.rescale;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    model_io::write_model(&model, &args.out_dir.join("model.json"))?;
    write_file(
        &args.out_dir.join("config_resolved.toml"),
        &config::resolved_toml(&resolved)?,
    )?;

    let names = param_names(&model)?;
    let mut risk = comment_header("fit", model.fingerprint, &control_summary(&model));
    risk.push_str("iteration,risk\n");
    for (i, r) in model.risk().iter().enumerate() {
        risk.push_str(&format!("{},{}\n", i + 1, sig(*r)));
    }
    write_file(&args.out_dir.join("risk_trace.csv"), &risk)?;

    let mut selected = comment_header("fit", model.fingerprint, &control_summary(&model));
    selected.push_str("iteration,parameter,learner\n");
    for rec in &model.history {
        if rec.iteration <= model.visible[rec.param] {
            selected.push_str(&format!(
                "{},{},{}\n",
                rec.iteration, names[rec.param], model.terms[rec.param][rec.learner].name
            ));
        }
    }
    write_file(&args.out_dir.join("selected.csv"), &selected)?;

    let fitted = prediction_csv("fit", &model, model.training_data()?, &control_summary(&model))?;
    write_file(&args.out_dir.join("fitted.csv"), &fitted)?;

    println!(
        "fitted {} model on {} observations; artifacts in {}",
        model.family_name,
        model.training_data()?.n(),
        args.out_dir.display()
    );
    Ok(model)
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    let out_dir = args.fit.out_dir.clone();
    let file = config::load(&args.fit.config)?;
    let config_dir = args.fit.config.parent().unwrap_or(Path::new("."));
    let resolved = config::resolve(
        file,
        config_dir,
        args.fit.seed,
        args.fit.rescale,
        args.fit.trace,
    )?;
    let grid_cfg = resolved
        .file
        .grid
        .clone()
        .ok_or_else(|| anyhow!("cv needs a [grid] section with per-parameter max values"))?;
    let folds_cfg = resolved.file.folds.clone().unwrap_or_default();

    let mut model = cmd_fit(args.fit)?;
    let grid = tune::make_grid(
        &grid_cfg.max,
        grid_cfg.min.unwrap_or(20),
        grid_cfg.length_out.unwrap_or(10),
        grid_cfg.log_scale.unwrap_or(true),
        grid_cfg.dense_mu.unwrap_or(true),
    )?;
    let folds = tune::make_folds(
        model.training_data()?.n(),
        folds_cfg.b.unwrap_or(25),
        folds_cfg.fraction.unwrap_or(0.5),
        resolved.seed,
    )?;
    let cvr = tune::cv_risk(&model, &grid, &folds, args.cores.max(1))?;
    let best = tune::optimal_mstop(&cvr)?;
    if best.on_boundary {
        eprintln!(
            "warning: optimal mstop {:?} lies on the stopping grid boundary; re-run with a wider grid",
            best.mstop
        );
    }

    let names = param_names(&model)?;
    let mstop_cols: Vec<String> = names.iter().map(|p| format!("mstop_{p}")).collect();
    let extras = format!(
        "{} seed={} folds={} fraction={}",
        control_summary(&model),
        resolved.seed,
        folds.columns.len(),
        folds.fraction
    );

    let mut grid_csv = mstop_cols.join(",");
    grid_csv.push('\n');
    for point in &grid.points {
        let row: Vec<String> = point.iter().map(|m| m.to_string()).collect();
        grid_csv.push_str(&row.join(","));
        grid_csv.push('\n');
    }
    write_file(&out_dir.join("grid.csv"), &grid_csv)?;

    let mut folds_csv = String::from("row");
    for b in 1..=folds.columns.len() {
        folds_csv.push_str(&format!(",fold_{b}"));
    }
    folds_csv.push('\n');
    for i in 0..folds.columns[0].len() {
        folds_csv.push_str(&format!("{}", i + 1));
        for col in &folds.columns {
            folds_csv.push_str(&format!(",{}", col[i] as u8));
        }
        folds_csv.push('\n');
    }
    write_file(&out_dir.join("folds.csv"), &folds_csv)?;

    let mut risk_csv = comment_header("cv", model.fingerprint, &extras);
    risk_csv.push_str(&format!("fold,{},oob_risk\n", mstop_cols.join(",")));
    for (b, row) in cvr.risks.iter().enumerate() {
        for (point, risk) in grid.points.iter().zip(row) {
            let cells: Vec<String> = point.iter().map(|m| m.to_string()).collect();
            risk_csv.push_str(&format!(
                "{},{},{}\n",
                b + 1,
                cells.join(","),
                sig(risk.unwrap_or(f64::NAN))
            ));
        }
    }
    write_file(&out_dir.join("cv_risk.csv"), &risk_csv)?;

    let avg = cvr.averaged();
    let best_index = grid.points.iter().position(|p| *p == best.mstop).unwrap();
    let mstop_list: Vec<String> = best.mstop.iter().map(|m| m.to_string()).collect();
    let chosen = format!(
        "mstop = [{}]\non_boundary = {}\nrisk = {}\n",
        mstop_list.join(", "),
        best.on_boundary,
        sig(avg[best_index])
    );
    write_file(&out_dir.join("chosen_mstop.toml"), &chosen)?;

    if args.refit {
        model.subset(&best.mstop)?;
        model_io::write_model(&model, &out_dir.join("model_optimal.json"))?;
    }

    println!(
        "optimal mstop: {} (on grid boundary: {})",
        names
            .iter()
            .zip(&best.mstop)
            .map(|(p, m)| format!("{p}={m}"))
            .collect::<Vec<_>>()
            .join(" "),
        best.on_boundary
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = model_io::read_model(&args.io.model)?;
    let hints = model_hints(&model, false, args.io.config.as_deref())?;
    let used = model_used_columns(&model, false);
    let (data, dropped) = ingest_csv(&args.io.data, &hints, Some(&used))?;
    if dropped > 0 {
        eprintln!("dropped {dropped} rows with missing values in used columns");
    }
    std::fs::create_dir_all(&args.io.out_dir)?;
    let csv = prediction_csv("predict", &model, &data, &control_summary(&model))?;
    write_file(&args.io.out_dir.join("predictions.csv"), &csv)?;
    println!("wrote predictions for {} rows", data.n());
    Ok(())
}

fn cmd_predint(args: PredintArgs) -> Result<()> {
    let model = load_attached(&args.io)?;
    let table = infer::predint(&model, &args.which, &args.pi, args.grid_points)?;
    // quantiles are the one output in response units: scale them back
    let r = model.rescale;

    let fixed: Vec<String> = table
        .fixed
        .iter()
        .map(|(name, v)| match v {
            infer::FixedValue::Mean(m) => format!("{name}={}", sig(*m)),
            infer::FixedValue::Mode(l) => format!("{name}={l}"),
        })
        .collect();
    let pi_list: Vec<String> = table.levels.iter().map(|p| p.to_string()).collect();
    let extras = format!(
        "which={} pi={} fixed={} rescale={}",
        table.covariate,
        pi_list.join(";"),
        fixed.join(";"),
        r
    );
    let mut csv = comment_header("predint", model.fingerprint, &extras);
    csv.push_str("grid,median");
    for p in &table.levels {
        let pct = (p * 100.0).round() as u32;
        csv.push_str(&format!(",lo{pct},hi{pct}"));
    }
    csv.push('\n');
    for i in 0..table.grid.len() {
        csv.push_str(&sig(table.grid[i]));
        csv.push(',');
        csv.push_str(&sig(table.median[i] * r));
        for l in 0..table.levels.len() {
            csv.push_str(&format!(
                ",{},{}",
                sig(table.lower[l][i] * r),
                sig(table.upper[l][i] * r)
            ));
        }
        csv.push('\n');
    }
    std::fs::create_dir_all(&args.io.out_dir)?;
    write_file(&args.io.out_dir.join("predint.csv"), &csv)?;
    println!(
        "wrote prediction intervals along {} at pi={}",
        table.covariate,
        pi_list.join(",")
    );
    Ok(())
}

/// Learner names become file names; keep only portable characters.
fn sanitize(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    while out.contains("--") {
        out = out.replace("--", "-");
    }
    out.trim_matches('-').to_string()
}

fn cmd_partials(args: PartialsArgs) -> Result<()> {
    let model = load_attached(&args.io)?;
    let tables =
        infer::partial_effects(&model, &args.parameter, &args.learner, args.grid_points)?;
    std::fs::create_dir_all(&args.io.out_dir)?;
    for (i, t) in tables.iter().enumerate() {
        let extras = format!(
            "parameter={} learner={} covariate={} selected={}",
            t.parameter, t.learner, t.covariate, t.selected
        );
        let mut csv = comment_header("partials", model.fingerprint, &extras);
        match &t.labels {
            Some(labels) => {
                csv.push_str("level,contribution\n");
                for (label, c) in labels.iter().zip(&t.contribution) {
                    csv.push_str(&format!("{label},{}\n", sig(*c)));
                }
            }
            None => {
                csv.push_str("grid,contribution\n");
                for (g, c) in t.grid.iter().zip(&t.contribution) {
                    csv.push_str(&format!("{},{}\n", sig(*g), sig(*c)));
                }
            }
        }
        let file = format!(
            "partial_{:02}_{}_{}.csv",
            i + 1,
            t.parameter,
            sanitize(&t.learner)
        );
        write_file(&args.io.out_dir.join(file), &csv)?;
    }
    println!("wrote {} partial-effect tables", tables.len());
    Ok(())
}

fn cmd_region_summary(args: RegionSummaryArgs) -> Result<()> {
    let model = load_attached(&args.io)?;
    let table = infer::region_summary(
        &model,
        &args.region,
        &args.parameter,
        args.response_scale,
    )?;
    let extras = format!(
        "parameter={} learner={} scale={}",
        table.parameter,
        table.learner,
        if table.response_scale { "response" } else { "link" }
    );
    let mut csv = comment_header("region-summary", model.fingerprint, &extras);
    csv.push_str("region,value\n");
    for (region, value) in table.regions.iter().zip(&table.values) {
        csv.push_str(&format!("{region},{}\n", sig(*value)));
    }
    std::fs::create_dir_all(&args.io.out_dir)?;
    write_file(&args.io.out_dir.join("region_summary.csv"), &csv)?;
    println!("wrote {} region values", table.regions.len());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read spec {}", args.config.display()))?;
    let mut spec: sim::SimSpec = toml::from_str(&text)
        .with_context(|| format!("cannot parse spec {}", args.config.display()))?;
    if let Some(n) = args.n {
        spec.n = n;
    }
    let (data, thetas) = sim::generate(&spec, args.seed)?;

    std::fs::create_dir_all(&args.out_dir)?;
    write_file(&args.out_dir.join("data.csv"), &dataset_csv(&data))?;

    let names: Vec<&str> = family_by_name(&spec.family)?.param_names().to_vec();
    let mut truth = String::from("row");
    for p in &names {
        truth.push_str(&format!(",{p}"));
    }
    truth.push('\n');
    for i in 0..data.n() {
        truth.push_str(&format!("{}", i + 1));
        for col in &thetas {
            truth.push(',');
            truth.push_str(&sig(col[i]));
        }
        truth.push('\n');
    }
    write_file(&args.out_dir.join("true_params.csv"), &truth)?;
    println!(
        "simulated {} observations from the {} family",
        data.n(),
        spec.family
    );
    Ok(())
}
