//! Choosing `(epsilon, alpha)` by hold-out grid search, and the
//! pixel-count schedule for `epsilon` from the consistency rate.

use serde::{Deserialize, Serialize};

use crate::aggregate::{Alpha, CobraParams, MachineOutputs};
use crate::error::{Error, Result};
use crate::filters::{apply_bank_for, FilterBank};
use crate::image::Image;
use crate::metrics::{score_all, Metric, Scores};
use crate::pool::Aggregator;

/// `scale * n_pixels^(-1 / (machines + 2))`.
pub fn theoretical_epsilon(n_pixels: u64, machines: usize, scale: f64) -> Result<f64> {
    if n_pixels == 0 || machines == 0 || !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "theoretical_epsilon needs n_pixels >= 1, machines >= 1, scale > 0 (got {n_pixels}, {machines}, {scale})"
        )));
    }
    Ok(scale * (n_pixels as f64).powf(-1.0 / (machines as f64 + 2.0)))
}

/// Candidate values and the objective to optimize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningGrid {
    /// Ascending, all > 0.
    pub epsilons: Vec<f64>,
    /// `None` means every `k / M` for `k = 1..=M`.
    pub alphas: Option<Vec<Alpha>>,
    pub objective: Metric,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            epsilons: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.4],
            alphas: None,
            objective: Metric::Rmse,
        }
    }
}

impl TuningGrid {
    pub fn single(epsilon: f64, alpha: Alpha, objective: Metric) -> Self {
        Self { epsilons: vec![epsilon], alphas: Some(vec![alpha]), objective }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::EmptyInput("tuning grid has no epsilon values".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidParameter("grid epsilons must be finite and > 0".into()));
        }
        if self.epsilons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("grid epsilons must be strictly ascending".into()));
        }
        if let Some(a) = &self.alphas {
            if a.is_empty() {
                return Err(Error::EmptyInput("tuning grid has no alpha values".into()));
            }
            if a.iter().any(|a| a.value() <= 0.0 || a.value() > 1.0) {
                return Err(Error::InvalidParameter("grid alphas must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Alpha candidates for a bank of `machines`.
    pub fn alphas_for(&self, machines: usize) -> Vec<Alpha> {
        self.alphas.clone().unwrap_or_else(|| Alpha::fractions_of(machines))
    }

    pub fn len_for(&self, machines: usize) -> usize {
        self.epsilons.len() * self.alphas_for(machines).len()
    }
}

/// A noisy image and its clean counterpart. `id` names the pair in reports
/// and is the file stem external machines look up.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub id: String,
    pub noisy: Image,
    pub clean: Image,
}

impl ImagePair {
    pub fn new(id: impl Into<String>, noisy: Image, clean: Image) -> Result<Self> {
        noisy.ensure_same_dims(&clean)?;
        Ok(Self { id: id.into(), noisy, clean })
    }
}

/// Pairs used to choose parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TuneSet(pub Vec<ImagePair>);

/// Held-out pairs used only to score chosen parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSet(pub Vec<ImagePair>);

/// Hold-out split. The two halves have distinct types so the search can
/// only ever be handed the tuning half.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataSplit {
    pub tune: TuneSet,
    pub eval: EvalSet,
}

/// One grid point and its objective averaged over the tuning pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub epsilon: f64,
    pub alpha: Alpha,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: CobraParams,
    pub best_objective: f64,
    pub objective: Metric,
    /// Every grid point, epsilon-major in grid order.
    pub table: Vec<GridRow>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("epsilon,alpha,{}\n", self.objective.name());
        for row in &self.table {
            out.push_str(&format!(
                "{},{},{}\n",
                row.epsilon,
                row.alpha,
                crate::metrics::format_value(row.objective)
            ));
        }
        out
    }
}

/// `true` when `a` should replace the current best `b`: strictly better
/// objective, or equal objective with smaller epsilon, or equal epsilon with
/// larger alpha. NaN objectives never win.
fn preferred(metric: Metric, a: &GridRow, b: &GridRow) -> bool {
    if a.objective.is_nan() {
        return false;
    }
    if b.objective.is_nan() || metric.better(a.objective, b.objective) {
        return true;
    }
    if a.objective != b.objective {
        return false;
    }
    a.epsilon < b.epsilon || (a.epsilon == b.epsilon && a.alpha.value() > b.alpha.value())
}

/// Exhaustive search over `grid`, scoring each point as the mean objective
/// over `tune`. `base` supplies the window and patch radius.
pub fn grid_search(
    tune: &TuneSet,
    bank: &FilterBank,
    grid: &TuningGrid,
    aggregator: &Aggregator,
    base: &CobraParams,
) -> Result<GridResult> {
    grid_search_observed(tune, bank, grid, aggregator, base, &mut |_, _| {})
}

/// As [`grid_search`]; `observer` is called with every (pair id, params)
/// evaluation.
pub fn grid_search_observed(
    tune: &TuneSet,
    bank: &FilterBank,
    grid: &TuningGrid,
    aggregator: &Aggregator,
    base: &CobraParams,
    observer: &mut dyn FnMut(&str, &CobraParams),
) -> Result<GridResult> {
    grid.validate()?;
    if tune.0.is_empty() {
        return Err(Error::EmptyInput("no tuning pairs".into()));
    }
    if bank.is_empty() {
        return Err(Error::EmptyInput("filter bank has no machines".into()));
    }
    let m = bank.len();
    let alphas = grid.alphas_for(m);
    let needs: Vec<usize> = alphas.iter().map(|a| a.required_votes(m)).collect();
    let outputs = tune
        .0
        .iter()
        .map(|p| {
            apply_bank_for(bank, &p.noisy, Some(&p.id))
                .and_then(MachineOutputs::new)
                .map_err(|e| e.context(format!("tuning pair {}", p.id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Vec::with_capacity(grid.epsilons.len() * alphas.len());
    for &epsilon in &grid.epsilons {
        let point = CobraParams { epsilon, ..*base };
        let mut totals = vec![0.0; alphas.len()];
        for (pair, outs) in tune.0.iter().zip(&outputs) {
            let images = aggregator.sweep(&pair.noisy, outs, &point, &needs)?;
            for (i, img) in images.iter().enumerate() {
                observer(&pair.id, &CobraParams { alpha: alphas[i], ..point });
                totals[i] += score_all(img, &pair.clean)?.get(grid.objective);
            }
        }
        for (alpha, total) in alphas.iter().zip(totals) {
            table.push(GridRow { epsilon, alpha: *alpha, objective: total / tune.0.len() as f64 });
        }
    }

    let mut best = table[0];
    for row in &table[1..] {
        if preferred(grid.objective, row, &best) {
            best = *row;
        }
    }
    Ok(GridResult {
        best: CobraParams { epsilon: best.epsilon, alpha: best.alpha, ..*base },
        best_objective: best.objective,
        objective: grid.objective,
        table,
    })
}

/// Scores of fixed parameters on one held-out pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub pair_id: String,
    pub params: CobraParams,
    pub scores: Scores,
}

/// Score `params` on every held-out pair, in pair order.
pub fn evaluate_params(
    params: &CobraParams,
    eval: &EvalSet,
    bank: &FilterBank,
    aggregator: &Aggregator,
) -> Result<Vec<EvalRow>> {
    if eval.0.is_empty() {
        return Err(Error::EmptyInput("no evaluation pairs".into()));
    }
    eval.0
        .iter()
        .map(|pair| {
            let outs = MachineOutputs::new(apply_bank_for(bank, &pair.noisy, Some(&pair.id))?)?;
            let img = aggregator.aggregate(&pair.noisy, &outs, params)?;
            Ok(EvalRow { pair_id: pair.id.clone(), params: *params, scores: score_all(&img, &pair.clean)? })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e: Error| e.context("evaluating parameters"))
}
