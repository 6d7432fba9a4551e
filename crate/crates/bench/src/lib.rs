//! Fitted synthetic instances for the benchmarks in `benches/`.

use pathshap_core::predictor::ModelKind;
use pathshap_core::synthetic::{generate, GeneratorConfig, SyntheticInstance};
use pathshap_core::{
    fit_explainer, train_on, Explainer, NodeData, PipelineConfig, Predictor, TrainConfig,
};

pub struct Fixture {
    pub instance: SyntheticInstance,
    pub data: NodeData,
    pub predictor: Predictor,
    pub explainer: Explainer,
}

/// First generated instance at or after `seed` with between `min_paths` and `max_paths` paths.
pub fn fixture(rows: usize, seed: u64, min_paths: usize, max_paths: usize) -> Fixture {
    let mut seed = seed;
    loop {
        let instance = generate(&GeneratorConfig {
            rows,
            seed,
            ..Default::default()
        })
        .expect("valid generator config");
        seed += 1;
        let data =
            NodeData::from_dataset(&instance.graph, &instance.dataset).expect("generated data");
        let Ok(explainer) = fit_explainer(&instance.graph, &data, &PipelineConfig::default())
        else {
            continue;
        };
        let n = explainer.facts.len();
        if n < min_paths || n > max_paths {
            continue;
        }
        let cfg = TrainConfig {
            kind: ModelKind::Logistic,
            ..Default::default()
        };
        let (predictor, _) = train_on(&instance.graph, &data, &cfg).expect("two classes");
        return Fixture {
            instance,
            data,
            predictor,
            explainer,
        };
    }
}
