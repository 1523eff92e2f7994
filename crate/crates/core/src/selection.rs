//! Cross-validated choice of the number of groups.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit, fit_holdout};
use crate::model::{Dataset, Hyperparams};
use crate::prediction::{predict_links, predict_missing_features};

pub const DEFAULT_REPS: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvTask {
    /// Mask every feature of the validation node and score them.
    #[default]
    Features,
    /// Hold the validation node's links out and score them.
    Link,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub logliks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub candidates: Vec<usize>,
    pub cv_loglik: Vec<CandidateScore>,
    pub chosen_k: usize,
    pub folds: usize,
    pub validation_nodes: Vec<String>,
    pub task: CvTask,
}

/// `{ceil(log2 N) - 2, ..., ceil(log2 N) + 2}` clipped to `[1, min(N, L)]`.
pub fn default_candidates(n: usize, l: usize) -> Vec<usize> {
    let center = (n.max(1) as f64).log2().ceil() as i64;
    let hi = n.min(l) as i64;
    (center - 2..=center + 2)
        .filter(|&k| k >= 1 && k <= hi)
        .map(|k| k as usize)
        .collect()
}

/// Validation nodes for `reps` repetitions: a seeded permutation of the
/// eligible nodes, cycled when `reps` exceeds their count.
fn validation_nodes(data: &Dataset, reps: usize, seed: u64, task: CvTask) -> Result<Vec<usize>> {
    let mut eligible: Vec<usize> = (0..data.n_nodes())
        .filter(|&i| match task {
            CvTask::Features => data.observed_count(i) > 0,
            CvTask::Link => true,
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::Data(
            "no node has observed features to validate on".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    Ok((0..reps).map(|r| eligible[r % eligible.len()]).collect())
}

fn cv_loglik(data: &Dataset, k: usize, hyper: &Hyperparams, v: usize, task: CvTask) -> Result<f64> {
    match task {
        CvTask::Features => {
            let observed: Vec<usize> = (0..data.n_features())
                .filter(|&l| data.feature(v, l).is_some())
                .collect();
            let masked = data.with_masked_features(v, &observed);
            let (state, _) = fit(&masked, k, hyper)?;
            let truth: Vec<Option<bool>> = data.features().row(v).to_vec();
            let r = predict_missing_features(&state, &masked, v, Some(&truth))?;
            Ok(r.loglik.unwrap_or(0.0))
        }
        CvTask::Link => {
            let (state, _) = fit_holdout(data, k, hyper, &[v])?;
            let p = predict_links(&state, data, v)?;
            Ok(p.outgoing.loglik.unwrap_or(0.0) + p.incoming.loglik.unwrap_or(0.0))
        }
    }
}

pub fn select_k(
    data: &Dataset,
    hyper: &Hyperparams,
    candidates: Option<&[usize]>,
    reps: usize,
    task: CvTask,
) -> Result<KSelectionReport> {
    let (n, l) = (data.n_nodes(), data.n_features());
    if n < 3 {
        return Err(Error::Data(format!(
            "K selection needs at least 3 nodes, got {n}"
        )));
    }
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    let mut cands: Vec<usize> = match candidates {
        Some(c) => c
            .iter()
            .copied()
            .filter(|&k| k >= 1 && k <= n.min(l))
            .collect(),
        None => default_candidates(n, l),
    };
    cands.sort_unstable();
    cands.dedup();
    if cands.is_empty() {
        return Err(Error::InvalidParameter(
            "no candidate K left after clipping to [1, min(N, L)]".into(),
        ));
    }
    let nodes = validation_nodes(data, reps, hyper.seed, task)?;

    let jobs: Vec<(usize, usize)> = cands
        .iter()
        .flat_map(|&k| nodes.iter().map(move |&v| (k, v)))
        .collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(k, v)| cv_loglik(data, k, hyper, v, task))
        .collect();

    let mut scores = Vec::with_capacity(cands.len());
    let mut it = results.into_iter();
    for &k in &cands {
        let logliks: Vec<f64> = it.by_ref().take(nodes.len()).collect::<Result<_>>()?;
        let m = logliks.len() as f64;
        let mean = logliks.iter().sum::<f64>() / m;
        let var = logliks.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
        scores.push(CandidateScore {
            k,
            mean,
            std: var.sqrt(),
            logliks,
        });
    }
    // strict improvement needed, so ties stay with the smaller K
    let mut best = &scores[0];
    for s in &scores[1..] {
        if s.mean > best.mean {
            best = s;
        }
    }
    Ok(KSelectionReport {
        candidates: cands.clone(),
        chosen_k: best.k,
        cv_loglik: scores,
        folds: reps,
        validation_nodes: nodes.iter().map(|&v| data.node_ids()[v].clone()).collect(),
        task,
    })
}
