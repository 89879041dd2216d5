//! Model configuration files: parsing, flag overrides, and the resolved
//! echo written next to fit artifacts so a run can be reproduced from its
//! own output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use lssboost::boost::{BoostControl, ModelSpec, Stabilization};
use lssboost::data::TypeHint;
use lssboost::family::family_by_name;
use lssboost::learner::{BaseLearnerSpec, LearnerKind, MrfGraph};

/// On-disk configuration. Every field a command needs can also arrive as a
/// flag; flags win over file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileConfig {
    pub family: String,
    pub response: String,
    /// The response column is divided by this before fitting; quantile
    /// outputs are multiplied back.
    pub rescale: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default, rename = "term")]
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub control: ControlConfig,
    pub grid: Option<GridConfig>,
    pub folds: Option<FoldsConfig>,
    /// Column type overrides: name -> "continuous" | "categorical".
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub types: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermConfig {
    /// Family parameter name, 1-based index, or "all" (the default) to add
    /// the learner to every parameter.
    #[serde(default = "all_parameters")]
    pub parameter: String,
    /// linear | pspline | ridge | mrf
    pub learner: String,
    pub covariate: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_knots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff_order: Option<usize>,
    /// Adjacency file (edge list or 0/1 matrix) for mrf learners.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<PathBuf>,
}

fn all_parameters() -> String {
    "all".to_string()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ControlConfig {
    pub mstop: Option<Vec<usize>>,
    pub nu: Option<Vec<f64>>,
    /// "none" | "mad"
    pub stabilization: Option<String>,
    pub trace: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub max: Vec<usize>,
    pub min: Option<usize>,
    pub length_out: Option<usize>,
    pub log_scale: Option<bool>,
    pub dense_mu: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FoldsConfig {
    pub b: Option<usize>,
    pub fraction: Option<f64>,
}

/// A config with flags folded in and every default made explicit.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: FileConfig,
    pub spec: ModelSpec,
    pub control: BoostControl,
    pub rescale: f64,
    pub seed: u64,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let config: FileConfig = toml::from_str(&text)
        .with_context(|| format!("cannot parse config {}", path.display()))?;
    Ok(config)
}

/// Column type hints in the form the ingester expects.
pub fn type_hints(config: &FileConfig) -> Result<Vec<(String, TypeHint)>> {
    config
        .types
        .iter()
        .map(|(name, kind)| match kind.as_str() {
            "continuous" => Ok((name.clone(), TypeHint::Continuous)),
            "categorical" => Ok((name.clone(), TypeHint::Categorical)),
            other => Err(anyhow!(
                "column type for '{name}' must be continuous or categorical, got '{other}'"
            )),
        })
        .collect()
}

fn build_learner(term: &TermConfig, config_dir: &Path) -> Result<BaseLearnerSpec> {
    let mut spec = match term.learner.as_str() {
        "linear" => {
            if term.intercept == Some(false) {
                BaseLearnerSpec::linear_no_intercept(&term.covariate)
            } else {
                BaseLearnerSpec::linear(&term.covariate)
            }
        }
        "pspline" => {
            let mut spec = BaseLearnerSpec::pspline(&term.covariate);
            if let LearnerKind::PSpline {
                degree,
                inner_knots,
                diff_order,
            } = &mut spec.kind
            {
                *degree = term.degree.unwrap_or(*degree);
                *inner_knots = term.inner_knots.unwrap_or(*inner_knots);
                *diff_order = term.diff_order.unwrap_or(*diff_order);
            }
            spec
        }
        "ridge" => BaseLearnerSpec::ridge_cat(&term.covariate),
        "mrf" => {
            let rel = term
                .adjacency
                .as_ref()
                .ok_or_else(|| anyhow!("mrf learner on '{}' needs an adjacency file", term.covariate))?;
            // adjacency paths are relative to the config file
            let path = if rel.is_absolute() {
                rel.clone()
            } else {
                config_dir.join(rel)
            };
            let graph = MrfGraph::from_csv(&path)
                .with_context(|| format!("adjacency {}", path.display()))?;
            BaseLearnerSpec::mrf(&term.covariate, graph)
        }
        other => bail!("unknown learner kind '{other}' (use linear, pspline, ridge, or mrf)"),
    };
    if let Some(df) = term.df {
        spec = spec.with_df(df);
    }
    Ok(spec)
}

/// Parameter indices a term applies to.
fn term_targets(parameter: &str, names: &[&str]) -> Result<Vec<usize>> {
    if parameter == "all" {
        return Ok((0..names.len()).collect());
    }
    if let Some(k) = names.iter().position(|n| *n == parameter) {
        return Ok(vec![k]);
    }
    if let Ok(i) = parameter.parse::<usize>() {
        if i >= 1 && i <= names.len() {
            return Ok(vec![i - 1]);
        }
    }
    bail!(
        "parameter '{parameter}' does not name one of {} (or an index 1..={})",
        names.join(", "),
        names.len()
    )
}

/// Fold flags into the file config and expand it to engine inputs.
pub fn resolve(
    mut file: FileConfig,
    config_dir: &Path,
    seed_flag: Option<u64>,
    rescale_flag: Option<f64>,
    trace_flag: bool,
) -> Result<Resolved> {
    if let Some(seed) = seed_flag {
        file.seed = Some(seed);
    }
    if let Some(rescale) = rescale_flag {
        file.rescale = Some(rescale);
    }
    if trace_flag {
        file.control.trace = Some(true);
    }

    let family = family_by_name(&file.family)?;
    let names = family.param_names();
    let mut terms: Vec<Vec<BaseLearnerSpec>> = vec![Vec::new(); names.len()];
    for term in &file.terms {
        let learner = build_learner(term, config_dir)?;
        for k in term_targets(&term.parameter, names)? {
            terms[k].push(learner.clone());
        }
    }
    if let Some(k) = terms.iter().position(|t| t.is_empty()) {
        bail!("no learners configured for parameter '{}'", names[k]);
    }

    let defaults = BoostControl::default();
    let control = BoostControl {
        mstop: file.control.mstop.clone().unwrap_or(defaults.mstop),
        nu: file.control.nu.clone().unwrap_or(defaults.nu),
        stabilization: match file.control.stabilization.as_deref() {
            None | Some("none") => Stabilization::None,
            Some("mad") => Stabilization::Mad,
            Some(other) => bail!("unknown stabilization '{other}' (use none or mad)"),
        },
        trace: file.control.trace.unwrap_or(false),
    };
    let rescale = file.rescale.unwrap_or(1.0);
    if !(rescale.is_finite() && rescale > 0.0) {
        bail!("rescale factor must be a positive number, got {rescale}");
    }

    Ok(Resolved {
        spec: ModelSpec {
            family: file.family.clone(),
            response: file.response.clone(),
            terms,
        },
        control,
        rescale,
        seed: file.seed.unwrap_or(1),
        file,
    })
}

/// Echo of the effective configuration; parsing and resolving it again
/// reproduces the same fit.
pub fn resolved_toml(resolved: &Resolved) -> Result<String> {
    let mut file = resolved.file.clone();
    file.seed = Some(resolved.seed);
    file.rescale = Some(resolved.rescale);
    file.control = ControlConfig {
        mstop: Some(resolved.control.mstop.clone()),
        nu: Some(resolved.control.nu.clone()),
        stabilization: Some(
            match resolved.control.stabilization {
                Stabilization::None => "none",
                Stabilization::Mad => "mad",
            }
            .to_string(),
        ),
        trace: Some(resolved.control.trace),
    };
    Ok(toml::to_string_pretty(&file)?)
}

/// Covariate and response columns the model reads; rows with missing
/// values anywhere else are kept.
pub fn used_columns(spec: &ModelSpec) -> Vec<String> {
    let mut used = vec![spec.response.clone()];
    for term in &spec.terms {
        for learner in term {
            if !used.contains(&learner.covariate) {
                used.push(learner.covariate.clone());
            }
        }
    }
    used
}
