mod common;

use std::collections::BTreeSet;

use pathshap_core::graph::d_separated;
use pathshap_core::{
    compute_order_relations, group_variables, is_potential_active, search_facts,
    search_facts_relative_to_y, Dag, FactMode, NodeId, Path, Potential, SearchOptions, Unit,
};
use proptest::prelude::*;

#[test]
fn search_matches_brute_force_on_random_pdags() {
    let opts = SearchOptions::default();
    let (mut total, mut with_undirected) = (0, 0);
    for seed in 0..200 {
        let g = common::random_pdag(seed, 5, seed % 2 == 0);
        let found = search_facts(&g, &opts).unwrap();
        total += found.len();
        with_undirected += found
            .paths
            .iter()
            .filter(|p| p.marks(&g).contains(&pathshap_core::Mark::Undirected))
            .count();
        assert_eq!(
            common::ids(&found.paths),
            common::brute_force_facts(&g, false),
            "seed {seed}\n{}",
            g.to_text()
        );
    }
    assert!(
        total > 400 && with_undirected > 100,
        "{total} paths, {with_undirected} undirected"
    );
}

#[test]
fn relative_search_matches_brute_force_on_random_pdags() {
    let opts = SearchOptions::default();
    for seed in 0..200 {
        let g = common::random_pdag(1000 + seed, 5, true);
        let found = search_facts_relative_to_y(&g, &opts).unwrap();
        assert_eq!(
            common::ids(&found.paths),
            common::brute_force_facts(&g, true),
            "seed {seed}\n{}",
            g.to_text()
        );
    }
}

#[test]
fn every_subpath_of_a_fact_is_potential_active() {
    let opts = SearchOptions::default();
    for seed in 0..200 {
        let g = common::random_pdag(seed, 5, true);
        for mode in [FactMode::Marginal, FactMode::RelativeToY] {
            let facts = match mode {
                FactMode::Marginal => search_facts(&g, &opts),
                FactMode::RelativeToY => search_facts_relative_to_y(&g, &opts),
            }
            .unwrap();
            for p in &facts.paths {
                for i in 0..p.len() {
                    for j in i + 1..p.len() {
                        let sub = Path::new(&g, p.nodes()[i..=j].to_vec()).unwrap();
                        assert_eq!(
                            is_potential_active(&g, &sub, mode, &opts).unwrap(),
                            Potential::Active,
                            "seed {seed} {}",
                            sub.display(&g)
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn groups_partition_involved_features_with_complete_order() {
    let opts = SearchOptions::default();
    for seed in 0..200 {
        let g = common::random_pdag(seed, 5, false);
        let facts = search_facts(&g, &opts).unwrap();
        let part = group_variables(&g, &facts).unwrap();
        assert!(part.order.complete, "seed {seed}");
        let mut members: Vec<NodeId> = part.groups.iter().flatten().copied().collect();
        let total = members.len();
        members.sort();
        members.dedup();
        assert_eq!(members.len(), total, "groups overlap");
        assert_eq!(members.into_iter().collect::<BTreeSet<_>>(), facts.involved);
        for path in &part.paths {
            assert_eq!(path.first(), Some(&Unit::Sensitive));
            assert_eq!(path.last(), Some(&Unit::Prediction));
            assert!(path.windows(2).all(|w| w[0] != w[1]));
        }
    }
}

#[test]
fn dags_with_a_source_sensitive_node_are_completely_ordered() {
    let opts = SearchOptions::default();
    let mut checked = 0;
    for seed in 0..400 {
        let g = common::random_pdag(seed, 5, false);
        if !g.is_fully_directed() {
            continue;
        }
        checked += 1;
        let facts = search_facts(&g, &opts).unwrap();
        assert!(compute_order_relations(&g, &facts).complete, "seed {seed}");
    }
    assert!(checked > 20);
}

#[test]
fn no_fact_means_independence() {
    let opts = SearchOptions::default();
    for seed in 0..200 {
        let g = common::random_pdag(seed, 5, false);
        if !g.is_fully_directed() {
            continue;
        }
        let facts = search_facts(&g, &opts).unwrap();
        let dag = Dag::new(g.clone()).unwrap();
        let separated = d_separated(&dag, g.sensitive(), g.prediction(), &BTreeSet::new());
        assert_eq!(facts.is_empty(), separated, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn search_is_deterministic_and_sorted(seed in 0u64..10_000) {
        let g = common::random_pdag(seed, 5, true);
        let opts = SearchOptions::default();
        let a = search_facts(&g, &opts).unwrap();
        let b = search_facts(&g, &opts).unwrap();
        let ia = common::ids(&a.paths);
        prop_assert_eq!(&ia, &common::ids(&b.paths));
        let mut sorted = ia.clone();
        sorted.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
        prop_assert_eq!(ia, sorted);
    }
}
