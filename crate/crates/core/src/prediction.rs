//! Missing-feature prediction, held-out link prediction and node
//! classification on top of a fitted model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::fit;
use crate::gradients::{phi_gradient, FeatureScaling, PhiTerms};
use crate::metrics::log_prob;
use crate::model::{
    feature_prob, node_feature_loglik, pair_surrogate, Dataset, Hyperparams, ModelState,
};

/// Starting membership for a folded-in node.
pub const FOLD_IN_START: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Features,
    Links,
    Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub index: usize,
    pub prob: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truth: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub target: TaskKind,
    pub node: String,
    pub scores: Vec<Score>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loglik: Option<f64>,
}

/// Which of the new node's channels are observed during fold-in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observe {
    FeaturesOnly,
    LinksOnly,
    Both,
}

impl Observe {
    fn features(self) -> bool {
        matches!(self, Observe::FeaturesOnly | Observe::Both)
    }

    fn links(self) -> bool {
        matches!(self, Observe::LinksOnly | Observe::Both)
    }
}

/// The part of the surrogate objective that depends on row `u`, with the
/// feature term averaged when `u` has missing cells so that the averaged
/// feature gradient is its exact derivative.
fn partial_objective(
    state: &ModelState,
    data: &Dataset,
    u: usize,
    observe: Observe,
    mask: &[bool],
) -> f64 {
    let phi = &state.memberships.phi;
    let mut total = 0.0;
    for k in 0..state.k_groups() {
        let [a1, a2] = state.hyper.alpha_for(k);
        let p = phi[[u, k]];
        if a1 != 1.0 || a2 != 1.0 {
            total += (a1 - 1.0) * p.ln() + (a2 - 1.0) * (1.0 - p).ln();
        }
    }
    if observe.features() {
        let observed = data.observed_count(u);
        if observed > 0 {
            let lf = node_feature_loglik(state, data, u);
            total += if data.has_missing(u) {
                lf / observed as f64
            } else {
                lf
            };
        }
    }
    if observe.links() {
        let theta = &state.affinities.theta;
        let log_theta = state.affinities.log_tables();
        let sq = state.affinities.squared_tables();
        let row = |i: usize| phi.row(i).to_vec();
        let own = row(u);
        for j in 0..data.n_nodes() {
            if j == u || !mask[j] {
                continue;
            }
            let other = row(j);
            total += pair_surrogate(&own, &other, theta, &log_theta, &sq, data.has_edge(u, j));
            total += pair_surrogate(&other, &own, theta, &log_theta, &sq, data.has_edge(j, u));
        }
    }
    total
}

/// Estimates row `u` of φ from its observed channel while every other
/// parameter stays fixed. Starts from [`FOLD_IN_START`] in every group.
pub fn fold_in_node(
    model: &ModelState,
    data: &Dataset,
    u: usize,
    observe: Observe,
) -> Result<Vec<f64>> {
    model.check_dims(data)?;
    if u >= model.n_nodes() {
        return Err(Error::IndexOutOfRange {
            what: "node",
            index: u,
            bound: model.n_nodes(),
        });
    }
    let k = model.k_groups();
    let eps = model.hyper.clamp_eps;
    let mut state = model.clone();
    for g in 0..k {
        state.memberships.phi[[u, g]] = FOLD_IN_START;
    }
    // u's own links count only when asked for; other held-out nodes stay out
    let mut mask = model.network_mask();
    mask[u] = false;
    let terms = PhiTerms {
        features: observe.features(),
        network: observe.links(),
        scaling: FeatureScaling::AverageWhenMissing,
    };

    let base_rate = model.hyper.gamma_phi;
    let min_rate = base_rate * 0.5f64.powi(crate::fitting::MAX_HALVINGS as i32);
    let mut rate = base_rate;
    let mut prev = partial_objective(&state, data, u, observe, &mask);
    for _ in 0..model.hyper.foldin_iters {
        let saved: Vec<f64> = state.memberships.phi.row(u).to_vec();
        for g in 0..k {
            let grad = phi_gradient(&state, data, u, g, terms, &mask, observe.links()).total;
            let p = &mut state.memberships.phi[[u, g]];
            *p = (*p + rate * grad).clamp(eps, 1.0 - eps);
        }
        let now = partial_objective(&state, data, u, observe, &mask);
        if !now.is_finite() {
            return Err(Error::NonFinite { block: "fold-in" });
        }
        if now < prev {
            for g in 0..k {
                state.memberships.phi[[u, g]] = saved[g];
            }
            rate *= 0.5;
            if rate < min_rate {
                break;
            }
            continue;
        }
        let change = (now - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = now;
        if change < model.hyper.rel_tol {
            break;
        }
    }
    Ok(state.memberships.phi.row(u).to_vec())
}

fn with_row(model: &ModelState, u: usize, row: &[f64]) -> ModelState {
    let mut s = model.clone();
    for (g, &p) in row.iter().enumerate() {
        s.memberships.phi[[u, g]] = p;
    }
    s
}

/// Scores every missing feature of node `u` in `data`. `truth`, when given,
/// is the node's full true feature row and yields the held-out log-likelihood.
pub fn predict_missing_features(
    model: &ModelState,
    data: &Dataset,
    u: usize,
    truth: Option<&[Option<bool>]>,
) -> Result<PredictionResult> {
    let observe = if model.is_heldout(u) {
        Observe::FeaturesOnly
    } else {
        Observe::Both
    };
    let row = fold_in_node(model, data, u, observe)?;
    let state = with_row(model, u, &row);
    let mut scores = Vec::new();
    let mut loglik = None;
    for l in (0..data.n_features()).filter(|&l| data.feature(u, l).is_none()) {
        let prob = feature_prob(&state, u, l);
        let t = truth.and_then(|t| t[l]);
        if let Some(t) = t {
            *loglik.get_or_insert(0.0) += log_prob(prob, t);
        }
        scores.push(Score {
            index: l,
            prob,
            truth: t,
        });
    }
    Ok(PredictionResult {
        target: TaskKind::Features,
        node: data.node_ids()[u].clone(),
        scores,
        loglik,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPrediction {
    /// Scores for `u -> j`.
    pub outgoing: PredictionResult,
    /// Scores for `j -> u`.
    pub incoming: PredictionResult,
}

impl LinkPrediction {
    /// Pair scores `1 - (1 - p_uj)(1 - p_ju)` for undirected evaluation.
    pub fn undirected(&self) -> Vec<Score> {
        self.outgoing
            .scores
            .iter()
            .zip(&self.incoming.scores)
            .map(|(o, i)| Score {
                index: o.index,
                prob: 1.0 - (1.0 - o.prob) * (1.0 - i.prob),
                truth: o.truth.zip(i.truth).map(|(a, b)| a || b),
            })
            .collect()
    }
}

/// Link scores of a node whose links were held out of the fit. Candidates
/// are every other node; truth comes from `data`'s adjacency.
pub fn predict_links(model: &ModelState, data: &Dataset, u: usize) -> Result<LinkPrediction> {
    model.check_dims(data)?;
    if u >= data.n_nodes() {
        return Err(Error::IndexOutOfRange {
            what: "node",
            index: u,
            bound: data.n_nodes(),
        });
    }
    if !model.is_heldout(u) {
        return Err(Error::NotHeldOut(data.node_ids()[u].clone()));
    }
    let row = fold_in_node(model, data, u, Observe::FeaturesOnly)?;
    let state = with_row(model, u, &row);
    let mut out = Vec::new();
    let mut inc = Vec::new();
    let (mut ll_out, mut ll_in) = (0.0, 0.0);
    for j in (0..data.n_nodes()).filter(|&j| j != u) {
        let p_out = crate::model::expected_edge_prob(&state, u, j, 1)?;
        let p_in = crate::model::expected_edge_prob(&state, j, u, 1)?;
        let (t_out, t_in) = (data.has_edge(u, j), data.has_edge(j, u));
        ll_out += log_prob(p_out, t_out);
        ll_in += log_prob(p_in, t_in);
        out.push(Score {
            index: j,
            prob: p_out,
            truth: Some(t_out),
        });
        inc.push(Score {
            index: j,
            prob: p_in,
            truth: Some(t_in),
        });
    }
    let node = data.node_ids()[u].clone();
    Ok(LinkPrediction {
        outgoing: PredictionResult {
            target: TaskKind::Links,
            node: node.clone(),
            scores: out,
            loglik: Some(ll_out),
        },
        incoming: PredictionResult {
            target: TaskKind::Links,
            node,
            scores: inc,
            loglik: Some(ll_in),
        },
    })
}

/// Fits once with the label column hidden on test nodes and reports the
/// label probability for each of them.
pub fn classify_nodes(
    data: &Dataset,
    label_feature: usize,
    train_mask: &[bool],
    k: usize,
    hyper: &Hyperparams,
) -> Result<Vec<PredictionResult>> {
    if label_feature >= data.n_features() {
        return Err(Error::IndexOutOfRange {
            what: "feature",
            index: label_feature,
            bound: data.n_features(),
        });
    }
    if train_mask.len() != data.n_nodes() {
        return Err(Error::InvalidParameter(
            "train mask length differs from node count".into(),
        ));
    }
    let labelled = (0..data.n_nodes())
        .filter(|&i| train_mask[i] && data.feature(i, label_feature).is_some())
        .count();
    if labelled == 0 {
        return Err(Error::Data(
            "label column has no observed training values".into(),
        ));
    }
    let mut masked = data.clone();
    for i in (0..data.n_nodes()).filter(|&i| !train_mask[i]) {
        masked.set_feature(i, label_feature, None);
    }
    let (state, _) = fit(&masked, k, hyper)?;
    Ok((0..data.n_nodes())
        .filter(|&i| !train_mask[i])
        .map(|i| {
            let prob = feature_prob(&state, i, label_feature);
            let truth = data.feature(i, label_feature);
            PredictionResult {
                target: TaskKind::Label,
                node: data.node_ids()[i].clone(),
                scores: vec![Score {
                    index: label_feature,
                    prob,
                    truth,
                }],
                loglik: truth.map(|t| log_prob(prob, t)),
            }
        })
        .collect())
}
