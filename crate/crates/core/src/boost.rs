//! Cyclic component-wise gradient boosting over several distribution
//! parameters at once.
//!
//! Each distribution parameter gets its own additive predictor and its own
//! candidate learners. One outer iteration cycles through the parameters in
//! order: compute the negative-gradient of the log-likelihood with respect
//! to that parameter's predictor at the current state, fit every candidate
//! learner to it, keep only the best one, and add a small multiple of its
//! fit to the predictor. Updates made earlier in the same cycle are already
//! visible to later parameters.
//!
//! The fitted model keeps the full ordered update history, so reducing the
//! iteration counts is a cheap view change and does not destroy fitted
//! state; restoring or extending a model replays or continues that history
//! whenever the requested counts lie on the same fitting path, and silently
//! refits from the longest shared prefix when they do not.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{check_response, compute_offset, family_by_name, kahan_sum, Family};
use crate::learner::{build_workspace, resolve, BaseLearnerSpec, LearnerWorkspace, ResolvedLearner};

/// Gradient rescaling applied before each least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stabilization {
    None,
    Mad,
}

/// Fitting controls. `mstop` and `nu` hold either one shared value or one
/// value per distribution parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostControl {
    pub mstop: Vec<usize>,
    pub nu: Vec<f64>,
    pub stabilization: Stabilization,
    pub trace: bool,
}

impl Default for BoostControl {
    fn default() -> Self {
        BoostControl {
            mstop: vec![100],
            nu: vec![0.1],
            stabilization: Stabilization::None,
            trace: false,
        }
    }
}

/// Model structure: family, response column, and candidate learners per
/// distribution parameter. A single learner list is shared by all
/// parameters.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub family: String,
    pub response: String,
    pub terms: Vec<Vec<BaseLearnerSpec>>,
}

/// One selected-and-scaled learner fit: the complete record of a single
/// boosting update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    /// Outer iteration, 1-based.
    pub iteration: usize,
    /// Distribution parameter index.
    pub param: usize,
    /// Index of the selected learner within the parameter's candidate list.
    pub learner: usize,
    /// Step-length-scaled coefficient increment.
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictScale {
    Link,
    Response,
}

/// A fitted model: everything needed to reproduce its predictions, plus an
/// optional runtime attachment of the training data for continued fitting.
#[derive(Serialize, Deserialize)]
pub struct BoostModel {
    pub family_name: String,
    pub response: String,
    /// Candidate learners per parameter, bound to the training data.
    pub terms: Vec<Vec<ResolvedLearner>>,
    /// Constant predictor starting values, one per parameter.
    pub offsets: Vec<f64>,
    pub nu: Vec<f64>,
    pub stabilization: Stabilization,
    pub trace: bool,
    /// Iteration counts the stored history actually covers.
    pub retained: Vec<usize>,
    /// Iteration counts the model currently exposes; at most `retained`.
    pub visible: Vec<usize>,
    /// Every update in creation order, covering the retained counts.
    pub history: Vec<UpdateRecord>,
    /// Total weighted negative log-likelihood after each completed outer
    /// iteration of the retained path.
    pub risk_trace: Vec<f64>,
    pub weights: Vec<f64>,
    pub fingerprint: (u64, u64),
    /// Factor the response column was divided by before fitting; quantile
    /// outputs are multiplied back by this.
    pub rescale: f64,
    #[serde(skip)]
    runtime: Option<Runtime>,
}

struct Runtime {
    data: Dataset,
    workspaces: Vec<Vec<LearnerWorkspace>>,
    /// Per-parameter training predictors at the visible iteration counts.
    etas: Vec<Vec<f64>>,
}

/// Divide a gradient vector by its median absolute deviation. Falls back to
/// the mean absolute deviation about the median when the MAD degenerates,
/// and leaves the vector untouched when both do.
pub fn stabilize(u: &mut [f64], mode: Stabilization) {
    if mode == Stabilization::None || u.is_empty() {
        return;
    }
    let mut tmp = u.to_vec();
    let med = median(&mut tmp);
    for (t, &x) in tmp.iter_mut().zip(u.iter()) {
        *t = (x - med).abs();
    }
    let mad = median(&mut tmp);
    let scale = if mad >= 1e-10 {
        mad
    } else {
        let mean_abs = kahan_sum(tmp.iter().cloned()) / tmp.len() as f64;
        if mean_abs >= 1e-10 {
            mean_abs
        } else {
            return;
        }
    };
    for x in u.iter_mut() {
        *x /= scale;
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Expand a 1-or-K vector to length K.
fn broadcast<T: Clone>(values: &[T], k: usize, what: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); k]),
        n if n == k => Ok(values.to_vec()),
        n => Err(Error::InvalidControl(format!(
            "{what} has {n} entries; expected 1 or {k}"
        ))),
    }
}

fn validated_control(control: &BoostControl, k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let mstop = broadcast(&control.mstop, k, "mstop")?;
    let nu = broadcast(&control.nu, k, "nu")?;
    if let Some(m) = mstop.iter().find(|&&m| m == 0) {
        return Err(Error::InvalidControl(format!(
            "mstop must be at least 1, got {m}"
        )));
    }
    if let Some(v) = nu.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidControl(format!(
            "step length must lie strictly between 0 and 1, got {v}"
        )));
    }
    Ok((mstop, nu))
}

/// The per-iteration update machinery, shared by fitting, continuation, and
/// out-of-bag risk evaluation so all of them walk numerically identical
/// paths.
pub(crate) struct Engine<'a> {
    pub family: &'a dyn Family,
    pub y: &'a [f64],
    pub weights: &'a [f64],
    pub workspaces: &'a [Vec<LearnerWorkspace>],
    pub nu: &'a [f64],
    pub stabilization: Stabilization,
}

impl<'a> Engine<'a> {
    /// One boosting update for parameter `k` at outer iteration `m`:
    /// gradient, candidate fits, selection, predictor update. Returns the
    /// selected learner index and the scaled coefficient increment.
    pub(crate) fn step_param(
        &self,
        etas: &mut [Vec<f64>],
        m: usize,
        k: usize,
    ) -> Result<(usize, Vec<f64>)> {
        let n = self.y.len();
        let links = self.family.links();
        let mut theta = vec![0.0; links.len()];
        let mut u = vec![0.0; n];
        for i in 0..n {
            for (j, link) in links.iter().enumerate() {
                theta[j] = link.to_param(etas[j][i]);
            }
            let g = self.family.grad_eta(k, self.y[i], &theta);
            if g.is_finite() {
                u[i] = g;
            } else if self.weights[i] == 0.0 {
                // zero-weight rows cannot influence the fit; keep the
                // gradient vector finite for them
                u[i] = 0.0;
            } else {
                return Err(Error::NonFiniteGradient {
                    iteration: m,
                    param: self.family.param_names()[k].to_string(),
                    observation: i,
                });
            }
        }
        stabilize(&mut u, self.stabilization);

        let mut best: Option<(usize, f64, DVector<f64>)> = None;
        for (j, ws) in self.workspaces[k].iter().enumerate() {
            let fit = ws.fit(&u);
            let better = match &best {
                None => true,
                Some((_, ssr, _)) => fit.ssr < *ssr,
            };
            if better {
                best = Some((j, fit.ssr, fit.coef));
            }
        }
        let (j, _, beta) = best.expect("candidate learner lists are non-empty");
        let coef: Vec<f64> = beta.iter().map(|b| b * self.nu[k]).collect();
        let inc = self.workspaces[k][j].apply_coef(&coef);
        for i in 0..n {
            etas[k][i] += inc[i];
        }
        Ok((j, coef))
    }

    /// Total weighted negative log-likelihood over positive-weight rows.
    pub(crate) fn risk(&self, etas: &[Vec<f64>]) -> f64 {
        risk_at(self.family, self.y, self.weights, etas)
    }
}

fn risk_at(family: &dyn Family, y: &[f64], weights: &[f64], etas: &[Vec<f64>]) -> f64 {
    let links = family.links();
    let mut theta = vec![0.0; links.len()];
    kahan_sum((0..y.len()).filter(|&i| weights[i] > 0.0).map(|i| {
        for (j, link) in links.iter().enumerate() {
            theta[j] = link.to_param(etas[j][i]);
        }
        -weights[i] * family.loglik(y[i], &theta)
    }))
}

/// Drive the engine from `start` up to the maximum target, appending update
/// records and one risk value per completed outer iteration.
fn run_iterations(
    engine: &Engine,
    etas: &mut [Vec<f64>],
    history: &mut Vec<UpdateRecord>,
    risk_trace: &mut Vec<f64>,
    targets: &[usize],
    start: usize,
    trace: bool,
) -> Result<()> {
    let max_m = targets.iter().copied().max().unwrap_or(0);
    for m in start..=max_m {
        for (k, &target) in targets.iter().enumerate() {
            if m > target {
                continue;
            }
            let (learner, coef) = engine.step_param(etas, m, k)?;
            history.push(UpdateRecord {
                iteration: m,
                param: k,
                learner,
                coef,
            });
        }
        let risk = engine.risk(etas);
        // A divergent fit can keep its gradients finite (for the Gaussian,
        // sigma growing without bound sends the sigma gradient to -1) while
        // the likelihood collapses, so guard the risk itself.
        if !risk.is_finite() {
            return Err(Error::Diverged { iteration: m });
        }
        risk_trace.push(risk);
        if trace {
            if (m - start) % 35 == 0 {
                eprint!("[{m:>5}] ");
            }
            eprint!(".");
            if (m - start) % 35 == 34 || m == max_m {
                eprintln!(" -- risk: {risk:.6}");
            }
        }
    }
    Ok(())
}

/// Rebuild per-parameter predictors from the offsets and the history,
/// applying only records up to each parameter's cap. Increments are applied
/// in creation order, reproducing the fitting-time accumulation bitwise.
fn replay_etas(
    offsets: &[f64],
    history: &[UpdateRecord],
    workspaces: &[Vec<LearnerWorkspace>],
    caps: &[usize],
    n: usize,
) -> Vec<Vec<f64>> {
    let mut etas: Vec<Vec<f64>> = offsets.iter().map(|&o| vec![o; n]).collect();
    for rec in history {
        if rec.iteration <= caps[rec.param] {
            let inc = workspaces[rec.param][rec.learner].apply_coef(&rec.coef);
            for i in 0..n {
                etas[rec.param][i] += inc[i];
            }
        }
    }
    etas
}

pub(crate) fn build_all_workspaces(
    terms: &[Vec<ResolvedLearner>],
    data: &Dataset,
    weights: &[f64],
) -> Result<Vec<Vec<LearnerWorkspace>>> {
    terms
        .iter()
        .map(|list| {
            list.iter()
                .map(|r| build_workspace(r, data, weights))
                .collect()
        })
        .collect()
}

/// Fit a model by cyclic component-wise boosting.
pub fn fit(
    spec: &ModelSpec,
    data: &Dataset,
    weights: Option<&[f64]>,
    control: &BoostControl,
) -> Result<BoostModel> {
    let family = family_by_name(&spec.family)?;
    let k_count = family.param_count();
    let term_specs: Vec<Vec<BaseLearnerSpec>> = match spec.terms.len() {
        1 => vec![spec.terms[0].clone(); k_count],
        n if n == k_count => spec.terms.clone(),
        n => {
            return Err(Error::InvalidArgument(format!(
                "{n} learner lists for {k_count} distribution parameters"
            )))
        }
    };
    for (k, list) in term_specs.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no learners declared for parameter '{}'",
                family.param_names()[k]
            )));
        }
    }
    let (mstop, nu) = validated_control(control, k_count)?;

    let y = data.continuous(&spec.response)?.to_vec();
    check_response(family.as_ref(), &y)?;
    let weights = match weights {
        Some(w) => {
            if w.len() != data.n() {
                return Err(Error::InvalidArgument(format!(
                    "{} weights for {} rows",
                    w.len(),
                    data.n()
                )));
            }
            w.to_vec()
        }
        None => vec![1.0; data.n()],
    };
    let offsets = compute_offset(family.as_ref(), &y, &weights)?;

    let terms: Vec<Vec<ResolvedLearner>> = term_specs
        .iter()
        .map(|list| list.iter().map(|s| resolve(s, data)).collect())
        .collect::<Result<_>>()?;
    let workspaces = build_all_workspaces(&terms, data, &weights)?;

    let mut etas: Vec<Vec<f64>> = offsets.iter().map(|&o| vec![o; data.n()]).collect();
    let mut history = Vec::new();
    let mut risk_trace = Vec::new();
    let engine = Engine {
        family: family.as_ref(),
        y: &y,
        weights: &weights,
        workspaces: &workspaces,
        nu: &nu,
        stabilization: control.stabilization,
    };
    run_iterations(
        &engine,
        &mut etas,
        &mut history,
        &mut risk_trace,
        &mstop,
        1,
        control.trace,
    )?;

    Ok(BoostModel {
        family_name: spec.family.clone(),
        response: spec.response.clone(),
        terms,
        offsets,
        nu,
        stabilization: control.stabilization,
        trace: control.trace,
        retained: mstop.clone(),
        visible: mstop,
        history,
        risk_trace,
        weights,
        fingerprint: data.fingerprint(),
        rescale: 1.0,
        runtime: Some(Runtime {
            data: data.clone(),
            workspaces,
            etas,
        }),
    })
}

impl BoostModel {
    pub fn param_count(&self) -> usize {
        self.offsets.len()
    }

    fn family(&self) -> Result<Box<dyn Family>> {
        family_by_name(&self.family_name)
    }

    pub fn is_attached(&self) -> bool {
        self.runtime.is_some()
    }

    /// Bind the original training data back to a deserialized model,
    /// enabling continued fitting and training-state queries.
    pub fn attach(&mut self, data: Dataset) -> Result<()> {
        let found = data.fingerprint();
        if found != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.0,
                expected_content: self.fingerprint.1,
                found: found.0,
                found_content: found.1,
            });
        }
        let workspaces = build_all_workspaces(&self.terms, &data, &self.weights)?;
        let etas = replay_etas(
            &self.offsets,
            &self.history,
            &workspaces,
            &self.visible,
            data.n(),
        );
        self.runtime = Some(Runtime {
            data,
            workspaces,
            etas,
        });
        Ok(())
    }

    pub fn detach(&mut self) {
        self.runtime = None;
    }

    pub fn training_data(&self) -> Result<&Dataset> {
        self.runtime
            .as_ref()
            .map(|rt| &rt.data)
            .ok_or(Error::DataNotAttached)
    }

    /// Per-parameter training predictors at the visible iteration counts.
    pub fn training_predictors(&self) -> Result<&[Vec<f64>]> {
        self.runtime
            .as_ref()
            .map(|rt| rt.etas.as_slice())
            .ok_or(Error::DataNotAttached)
    }

    /// Change the exposed iteration counts. A scalar broadcasts to all
    /// parameters.
    ///
    /// Counts that lie on the already-fitted path are a pure view change
    /// (reducing all parameters, or restoring previously fitted counts) and
    /// need no data. Anything else reuses the longest history prefix shared
    /// with the requested counts and refits from there, which requires
    /// attached training data; on such a refit the discarded tail of the
    /// old history is gone for good.
    pub fn subset(&mut self, new_mstop: &[usize]) -> Result<()> {
        let k_count = self.param_count();
        let targets = broadcast(new_mstop, k_count, "mstop")?;
        if targets == self.visible {
            return Ok(());
        }
        let max_target = targets.iter().copied().max().unwrap_or(0);
        let on_path = targets
            .iter()
            .zip(&self.retained)
            .all(|(&g, &r)| g <= r && (g == r || g == max_target));
        if on_path {
            self.visible = targets;
            if let Some(rt) = self.runtime.as_mut() {
                rt.etas = replay_etas(
                    &self.offsets,
                    &self.history,
                    &rt.workspaces,
                    &self.visible,
                    rt.data.n(),
                );
            }
            return Ok(());
        }

        let rt = self.runtime.as_mut().ok_or(Error::DataNotAttached)?;
        // longest iteration prefix both paths share: up to there, the same
        // parameters were active with the same states
        let prefix = targets
            .iter()
            .zip(&self.retained)
            .filter(|&(&g, &r)| g != r)
            .map(|(&g, &r)| g.min(r))
            .min()
            .expect("targets differ from retained counts");
        self.history.retain(|rec| rec.iteration <= prefix);
        self.risk_trace.truncate(prefix);
        let caps = vec![prefix; k_count];
        rt.etas = replay_etas(&self.offsets, &self.history, &rt.workspaces, &caps, rt.data.n());

        let family = family_by_name(&self.family_name)?;
        let y = rt.data.continuous(&self.response)?.to_vec();
        let engine = Engine {
            family: family.as_ref(),
            y: &y,
            weights: &self.weights,
            workspaces: &rt.workspaces,
            nu: &self.nu,
            stabilization: self.stabilization,
        };
        run_iterations(
            &engine,
            &mut rt.etas,
            &mut self.history,
            &mut self.risk_trace,
            &targets,
            prefix + 1,
            self.trace,
        )?;
        self.retained = targets.clone();
        self.visible = targets;
        Ok(())
    }

    /// Per-parameter predictions on new data.
    pub fn predict(&self, data: &Dataset, scale: PredictScale) -> Result<Vec<Vec<f64>>> {
        let n = data.n();
        let mut etas: Vec<Vec<f64>> = self.offsets.iter().map(|&o| vec![o; n]).collect();
        let mut designs: HashMap<(usize, usize), DMatrix<f64>> = HashMap::new();
        for rec in &self.history {
            if rec.iteration > self.visible[rec.param] {
                continue;
            }
            let key = (rec.param, rec.learner);
            if !designs.contains_key(&key) {
                designs.insert(key, self.terms[key.0][key.1].design(data)?);
            }
            let beta = DVector::from_column_slice(&rec.coef);
            let inc = &designs[&key] * &beta;
            for i in 0..n {
                etas[rec.param][i] += inc[i];
            }
        }
        if scale == PredictScale::Response {
            let family = self.family()?;
            for (k, link) in family.links().iter().enumerate() {
                for v in etas[k].iter_mut() {
                    *v = link.to_param(*v);
                }
            }
        }
        Ok(etas)
    }

    /// A single learner's link-scale contribution on new data, without the
    /// offset. The level is arbitrary; only differences are interpretable.
    pub fn predict_partial(&self, data: &Dataset, param: usize, learner: usize) -> Result<Vec<f64>> {
        self.check_indices(param, learner)?;
        let n = data.n();
        let mut out = vec![0.0; n];
        let mut design: Option<DMatrix<f64>> = None;
        for rec in &self.history {
            if rec.param != param
                || rec.learner != learner
                || rec.iteration > self.visible[param]
            {
                continue;
            }
            if design.is_none() {
                design = Some(self.terms[param][learner].design(data)?);
            }
            let beta = DVector::from_column_slice(&rec.coef);
            let inc = design.as_ref().unwrap() * &beta;
            for i in 0..n {
                out[i] += inc[i];
            }
        }
        Ok(out)
    }

    fn check_indices(&self, param: usize, learner: usize) -> Result<()> {
        if param >= self.terms.len() || learner >= self.terms[param].len() {
            return Err(Error::InvalidArgument(format!(
                "no learner ({param}, {learner}) in the model"
            )));
        }
        Ok(())
    }

    /// Accumulated coefficient vector for one learner at the visible counts.
    pub fn coef(&self, param: usize, learner: usize) -> Result<Vec<f64>> {
        self.check_indices(param, learner)?;
        let mut total = vec![0.0; self.terms[param][learner].width()];
        for rec in &self.history {
            if rec.param == param
                && rec.learner == learner
                && rec.iteration <= self.visible[param]
            {
                for (t, &c) in total.iter_mut().zip(&rec.coef) {
                    *t += c;
                }
            }
        }
        Ok(total)
    }

    /// Selected learner indices for one parameter, in iteration order,
    /// respecting the visible counts.
    pub fn selected(&self, param: usize) -> Vec<usize> {
        self.history
            .iter()
            .filter(|rec| rec.param == param && rec.iteration <= self.visible[param])
            .map(|rec| rec.learner)
            .collect()
    }

    /// Risk trace up to the largest visible iteration count.
    pub fn risk(&self) -> &[f64] {
        let max_visible = self.visible.iter().copied().max().unwrap_or(0);
        &self.risk_trace[..max_visible]
    }
}
