//! Path-level decomposition of classifier disparity over a causal graph.

pub mod ci;
pub mod data;
pub mod decomposition;
pub mod error;
pub mod facts;
pub mod fixtures;
pub mod graph;
pub mod pipeline;
pub mod predictor;
pub mod protocol;
pub mod regress;
pub mod selection;
pub mod structural;
pub mod synthetic;

pub use data::{ColumnType, Dataset, NodeData, Schema};
pub use decomposition::{
    aggregate_to_features, disparity_contributions, equalized_odds_contributions,
    utility_contributions, Coalition, ContributionReport, Engine, MetricKind, PathContribution,
    PermutationPlan,
};
pub use error::{Error, Result};
pub use facts::{
    compute_order_relations, group_variables, is_potential_active, search_facts,
    search_facts_relative_to_y, CheckMode, FactMode, FactSet, GroupPartition, OrderRelation,
    Potential, SearchOptions, Unit,
};
pub use graph::{Dag, Edge, Mark, NodeId, NodeKind, Orientation, Path, Pdag};
pub use pipeline::{fit_explainer, train_on, Explainer, PipelineConfig};
pub use predictor::{OutputMode, Predictor, PredictorKind, Scorer, TrainConfig};
pub use selection::{exhaustive_select, greedy_select, sweep, SelectionResult, TradeoffPoint};
pub use structural::{Residuals, StructuralModel};
