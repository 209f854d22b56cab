//! Mean classifiers on learned representations, their supervised risk, and
//! the computable right-hand sides of the downstream corollaries.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundMode, BoundReport};
use crate::data::{ClassId, LatentClassModel};
use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;
use crate::loss::LossKind;
use crate::net::NetworkParams;
use crate::par;

/// Linear classifier whose row `c` is the mean representation of class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanClassifier {
    classes: Vec<ClassId>,
    weights: DenseMatrix,
}

impl MeanClassifier {
    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    /// `W f(x)`.
    pub fn class_scores(&self, representation: &[f64]) -> Vec<f64> {
        self.weights.matvec(representation)
    }

    pub fn predict(&self, params: &NetworkParams, x: &[f64]) -> Result<ClassId> {
        let g = self.class_scores(&params.forward(x)?);
        let best = g
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > g[b] { i } else { b });
        Ok(self.classes[best])
    }
}

/// Draws `size` distinct classes from the model, in the drawn order.
pub fn sample_task(model: &LatentClassModel, size: usize, seed: u64) -> Result<Vec<ClassId>> {
    if size < 2 || size > model.classes().len() {
        return invalid(format!(
            "task size must be between 2 and {}, got {size}",
            model.classes().len()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(model.classes().choose_multiple(&mut rng, size).copied().collect())
}

pub fn fit_mean_classifier(params: &NetworkParams, model: &LatentClassModel, task: &[ClassId]) -> Result<MeanClassifier> {
    if task.len() < 2 {
        return invalid("a task needs at least two classes");
    }
    let d = params.output_dim();
    let mut rows = Vec::with_capacity(task.len());
    for (i, c) in task.iter().enumerate() {
        if task[..i].contains(c) {
            return invalid(format!("class {c} repeated in task"));
        }
        let pool = model
            .pool(*c)
            .ok_or_else(|| Error::InvalidInput(format!("class {c} has no samples")))?;
        let reps = par::map_items(pool, |x| params.forward(x))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mean: Vec<f64> = (0..d)
            .map(|j| {
                let col: Vec<f64> = reps.iter().map(|r| r[j]).collect();
                par::pairwise_sum(&col) / reps.len() as f64
            })
            .collect();
        rows.push(mean);
    }
    Ok(MeanClassifier {
        classes: task.to_vec(),
        weights: DenseMatrix::from_rows(&rows)?,
    })
}

/// Loss of the class-score vector `g` for true class index `label`: the
/// input is `{g_label − g_c'}` over the other task classes, in task order.
pub fn supervised_loss(g: &[f64], label: usize, loss: &LossKind) -> Result<f64> {
    if label >= g.len() {
        return invalid("label index out of range");
    }
    let diffs: Vec<f64> = g
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label)
        .map(|(_, v)| g[label] - v)
        .collect();
    loss.value(&diffs)
}

/// Mean supervised loss over labeled samples, all of which must belong to the task.
pub fn supervised_risk(
    clf: &MeanClassifier,
    params: &NetworkParams,
    samples: &[(&[f64], ClassId)],
    loss: &LossKind,
) -> Result<f64> {
    if samples.is_empty() {
        return invalid("supervised risk of an empty sample");
    }
    let values = par::map_items(samples, |(x, c)| -> Result<f64> {
        let label = clf
            .classes
            .iter()
            .position(|t| t == c)
            .ok_or_else(|| Error::InvalidInput(format!("sample label {c} is not in the task")))?;
        supervised_loss(&clf.class_scores(&params.forward(x)?), label, loss)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(par::pairwise_sum(&values) / values.len() as f64)
}

/// Labeled samples of the task classes, pool by pool.
pub fn task_samples<'a>(model: &'a LatentClassModel, task: &[ClassId]) -> Vec<(&'a [f64], ClassId)> {
    task.iter()
        .filter_map(|c| model.pool(*c).map(|p| (c, p)))
        .flat_map(|(c, p)| p.iter().map(move |x| (&x[..], *c)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorollaryKind {
    /// Adds the full all-layer augmented bound.
    NormBased,
    /// Adds the full parameter-counting bound.
    ParamCounting,
}

/// Empirical unsupervised risk plus the matching full-mode bound.
pub fn corollary_rhs(report: &BoundReport, empirical_risk: f64, which: CorollaryKind) -> Result<f64> {
    let name = match which {
        CorollaryKind::NormBased => "thm3",
        CorollaryKind::ParamCounting => "thm4",
    };
    let term = report
        .get(name, BoundMode::Full)
        .ok_or_else(|| Error::InvalidInput(format!("report has no full {name} entry")))?;
    Ok(empirical_risk + term)
}

/// Fraction of samples whose nearest class mean (by score) is their own.
pub fn accuracy(clf: &MeanClassifier, params: &NetworkParams, samples: &[(&[f64], ClassId)]) -> Result<f64> {
    if samples.is_empty() {
        return invalid("accuracy of an empty sample");
    }
    let mut hits = 0usize;
    for (x, c) in samples {
        if clf.predict(params, x)? == *c {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}
