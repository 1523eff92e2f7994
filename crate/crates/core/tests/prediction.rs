use lmmg::metrics::auc;
use lmmg::prediction::{
    classify_nodes, fold_in_node, predict_links, predict_missing_features, Observe,
};
use lmmg::synth::{synth_generate, Planted, Preset, Synthetic};
use lmmg::{fit, fit_holdout, Hyperparams};

fn sample(seed: u64) -> Synthetic {
    synth_generate(80, 8, 2, &Planted::Preset(Preset::Homophily), seed, false).unwrap()
}

fn hyper() -> Hyperparams {
    Hyperparams {
        gamma_phi: 0.02,
        gamma_f: 0.05,
        max_outer_iters: 150,
        rel_tol: 1e-5,
        ..Hyperparams::default()
    }
}

#[test]
fn fold_in_recovers_a_fitted_row() {
    let s = sample(4);
    let (state, _) = fit(&s.data, 2, &hyper()).unwrap();
    // Folding in a node whose row was fitted with the same channels should
    // land near that row.
    let mut near = 0;
    for u in 0..10 {
        let row = fold_in_node(&state, &s.data, u, Observe::Both).unwrap();
        let dist: f64 = row
            .iter()
            .zip(state.memberships.row(u))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        near += usize::from(dist < 0.15);
    }
    assert!(near >= 8, "{near} of 10 rows recovered");
}

#[test]
fn masked_features_beat_chance() {
    let s = sample(6);
    let (state, _) = fit(&s.data, 2, &hyper()).unwrap();
    let mut pairs = Vec::new();
    for u in 0..20 {
        let all: Vec<usize> = (0..8).collect();
        let masked = s.data.with_masked_features(u, &all);
        let truth = s.data.features().row(u).to_vec();
        let r = predict_missing_features(&state, &masked, u, Some(&truth)).unwrap();
        assert_eq!(r.scores.len(), 8);
        pairs.extend(r.scores.iter().map(|sc| (sc.prob, sc.truth.unwrap())));
    }
    let a = auc(&pairs).unwrap();
    assert!(a > 0.6, "feature AUC {a}");
}

#[test]
fn held_out_links_rank_above_chance() {
    let s = sample(8);
    let held: Vec<usize> = (0..6).collect();
    let (state, _) = fit_holdout(&s.data, 2, &hyper(), &held).unwrap();
    let mut pairs = Vec::new();
    for &u in &held {
        let p = predict_links(&state, &s.data, u).unwrap();
        assert_eq!(p.outgoing.scores.len(), 79);
        pairs.extend(
            p.outgoing
                .scores
                .iter()
                .map(|sc| (sc.prob, sc.truth.unwrap())),
        );
    }
    let a = auc(&pairs).unwrap();
    assert!(a > 0.55, "link AUC {a}");
}

#[test]
fn classification_scores_every_test_node() {
    let s = sample(9);
    let train: Vec<bool> = (0..80).map(|i| i % 4 != 0).collect();
    let results = classify_nodes(&s.data, 0, &train, 2, &hyper()).unwrap();
    assert_eq!(results.len(), 20);
    for r in &results {
        assert_eq!(r.scores.len(), 1);
        assert!(r.scores[0].truth.is_some());
        assert!((0.0..=1.0).contains(&r.scores[0].prob));
    }
}
