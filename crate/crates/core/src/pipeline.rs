//! End-to-end fitting: paths, groups, structural links and the classifier.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ci::{CiOracle, DataCiTest};
use crate::data::NodeData;
use crate::error::{Error, Result};
use crate::facts::{
    group_variables, search_facts, search_facts_relative_to_y, CheckMode, FactMode, FactSet,
    GroupPartition, SearchOptions,
};
use crate::graph::Pdag;
use crate::predictor::{prediction_inputs, train_predictor, Predictor, TrainConfig, TrainingTrace};
use crate::structural::{
    fit_conditional_models, fit_structural_model, Residuals, StructuralModel, MIN_STRATUM,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: FactMode,
    /// Fit separate links within each outcome stratum.
    pub conditional: bool,
    pub seed: u64,
    /// Check undirected-edge orientations against CI tests on the data at this level.
    pub ci_alpha: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: FactMode::Marginal,
            conditional: false,
            seed: 0,
            ci_alpha: None,
        }
    }
}

pub struct Explainer {
    pub facts: FactSet,
    pub partition: GroupPartition,
    pub model: StructuralModel,
    pub residuals: Residuals,
}

impl Explainer {
    pub fn labels(&self, graph: &Pdag) -> Vec<String> {
        (0..self.partition.paths.len())
            .map(|i| self.partition.display_path(graph, i))
            .collect()
    }

    /// Residuals of other rows under the already fitted links.
    pub fn residuals_for(&self, data: &NodeData) -> Result<Residuals> {
        self.model.residuals(data)
    }
}

pub fn find_paths(graph: &Pdag, mode: FactMode, opts: &SearchOptions<'_>) -> Result<FactSet> {
    match mode {
        FactMode::Marginal => search_facts(graph, opts),
        FactMode::RelativeToY => search_facts_relative_to_y(graph, opts),
    }
}

pub fn fit_explainer(graph: &Pdag, data: &NodeData, config: &PipelineConfig) -> Result<Explainer> {
    let ci = config
        .ci_alpha
        .map(|alpha| DataCiTest::new(data.ci_columns(), alpha));
    let opts = SearchOptions {
        check: if ci.is_some() {
            CheckMode::CiChecked
        } else {
            CheckMode::Structural
        },
        ci: ci.as_ref().map(|c| c as &dyn CiOracle),
        ..Default::default()
    };
    let facts = find_paths(graph, config.mode, &opts)?;
    if facts.is_empty() {
        return Err(Error::NoPaths);
    }
    let partition = group_variables(graph, &facts)?;
    let (model, residuals) = if config.conditional {
        fit_conditional_models(graph, data, &facts, &partition, config.seed, MIN_STRATUM)?
    } else {
        fit_structural_model(graph, data, &facts, &partition, config.seed)?
    };
    Ok(Explainer {
        facts,
        partition,
        model,
        residuals,
    })
}

/// Train a built-in classifier on the prediction inputs and outcome of `data`.
pub fn train_on(
    graph: &Pdag,
    data: &NodeData,
    config: &TrainConfig,
) -> Result<(Predictor, TrainingTrace)> {
    if !data.has_outcome() {
        return Err(Error::MissingOutcome(
            "training needs an outcome column".into(),
        ));
    }
    let (inputs, dim) = prediction_inputs(graph, data);
    let labels: Vec<f64> = (0..data.rows())
        .map(|r| data.outcome(r).expect("outcome present"))
        .collect();
    train_predictor(&inputs, &labels, dim, config)
}

/// Seeded shuffle of `0..rows` split into a training share and the rest, each sorted.
pub fn train_test_split(rows: usize, train_share: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((rows as f64) * train_share).round() as usize;
    let mut train = idx[..cut].to_vec();
    let mut test = idx[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
