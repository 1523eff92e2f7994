//! Initialization and the alternating φ → W → Θ ascent loop.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gradients::{
    grad_theta_all, grad_w_all, lasso_step, phi_gradient, phi_gradient_cached, NodeFactors,
    PhiTerms,
};
use crate::model::{
    feature_term, l1_term, network_term, objective, outcome_weights, pair_expectation,
    AffinityTensor, Dataset, FeatureWeights, Hyperparams, Memberships, ModelState,
    ObjectiveBreakdown, PhiSweep, Table,
};

/// Maximum number of step halvings the backtracking guard tries per block.
pub const MAX_HALVINGS: usize = 20;

/// Affinity used for every entry when the graph has no edges.
pub const EMPTY_GRAPH_AFFINITY: f64 = 0.1;

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub initial: ObjectiveBreakdown,
    pub objective_trace: Vec<ObjectiveBreakdown>,
    pub outer_iters_run: usize,
    pub converged: bool,
    pub wall_time: f64,
    pub nonzero_weights: Vec<usize>,
}

/// Column means over observed cells; `None` for fully missing columns.
fn observed_means(data: &Dataset) -> Vec<Option<f64>> {
    (0..data.n_features())
        .map(|l| {
            let (mut ones, mut seen) = (0usize, 0usize);
            for i in 0..data.n_nodes() {
                if let Some(f) = data.feature(i, l) {
                    seen += 1;
                    ones += usize::from(f);
                }
            }
            (seen > 0).then(|| ones as f64 / seen as f64)
        })
        .collect()
}

/// Top-`k` singular triplets `(sigma, u, v)` of an N×L matrix, from the
/// eigendecomposition of its Gram matrix. Signs are fixed so that each `v`
/// has a nonnegative sum (first nonzero entry positive on ties).
pub fn truncated_svd(matrix: &Array2<f64>, k: usize) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    let (n, l) = matrix.dim();
    let m = DMatrix::from_fn(n, l, |i, j| matrix[[i, j]]);
    let gram = m.transpose() * &m;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(k)
        .map(|c| {
            let sigma = eig.eigenvalues[c].max(0.0).sqrt();
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let sum: f64 = v.iter().sum();
            let flip = if sum.abs() > 1e-12 {
                sum < 0.0
            } else {
                v.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0)
            };
            if flip {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            let u = if sigma > 1e-12 {
                (0..n)
                    .map(|i| (0..l).map(|j| matrix[[i, j]] * v[j]).sum::<f64>() / sigma)
                    .collect()
            } else {
                vec![0.0; n]
            };
            (sigma, u, v)
        })
        .collect()
}

/// SVD-based starting point for φ and W.
pub fn init_svd(
    data: &Dataset,
    k: usize,
    lambda: f64,
    clamp_eps: f64,
) -> Result<(Memberships, FeatureWeights)> {
    let (n, l) = (data.n_nodes(), data.n_features());
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    if k > n.min(l) {
        return Err(Error::TooManyGroups { k, max: n.min(l) });
    }
    let means = observed_means(data);
    let mut weights = FeatureWeights::zeros(l, k);
    for (f, m) in means.iter().enumerate() {
        let p = m.unwrap_or(0.5).clamp(clamp_eps, 1.0 - clamp_eps);
        weights.w[[f, k]] = (p / (1.0 - p)).ln();
    }

    let filled = Array2::from_shape_fn((n, l), |(i, f)| match data.feature(i, f) {
        Some(b) => f64::from(u8::from(b)),
        None => means[f].unwrap_or(0.5),
    });
    let first = filled[[0, 0]];
    if filled.iter().all(|&x| x == first) {
        log::warn!("feature matrix is constant; starting from uniform memberships");
        return Ok((Memberships::uniform(n, k, 0.5), weights));
    }

    let mut phi = Array2::from_elem((n, k), 0.5);
    for (g, (sigma, u, v)) in truncated_svd(&filled, k).into_iter().enumerate() {
        for f in 0..l {
            let w = sigma * v[f];
            weights.w[[f, g]] = if w.abs() < lambda { 0.0 } else { w };
        }
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-12 {
            for i in 0..n {
                phi[[i, g]] = clamp_eps + (1.0 - 2.0 * clamp_eps) * (u[i] - lo) / (hi - lo);
            }
        }
    }
    Ok((Memberships::new(phi), weights))
}

/// `sum E[p_ij]` over ordered pairs of network nodes.
pub fn expected_edge_count(phi: &Array2<f64>, theta: &[Table], mask: &[bool]) -> f64 {
    let n = phi.nrows();
    crate::model::ordered_sum(n, |i| {
        if !mask[i] {
            return 0.0;
        }
        let mut s = 0.0;
        for j in 0..n {
            if j == i || !mask[j] {
                continue;
            }
            let mut p = 1.0;
            for (g, t) in theta.iter().enumerate() {
                p *= pair_expectation(phi[[i, g]], phi[[j, g]], t);
            }
            s += p;
        }
        s
    })
}

fn scaled(ratios: &[Table], s: f64, eps: f64) -> Vec<Table> {
    ratios
        .iter()
        .map(|t| crate::model::map_table(t, |x| (s * x).clamp(eps, 1.0 - eps)))
        .collect()
}

/// Ratio-based Θ with a global scale matching the observed edge count.
pub fn init_theta(
    data: &Dataset,
    memberships: &Memberships,
    clamp_eps: f64,
    heldout: &[usize],
) -> AffinityTensor {
    let n = data.n_nodes();
    let k = memberships.k_groups();
    let phi = &memberships.phi;
    let mut mask = vec![true; n];
    for &u in heldout {
        mask[u] = false;
    }
    let edges: Vec<(usize, usize)> = data.edges().filter(|&(i, j)| mask[i] && mask[j]).collect();
    if edges.is_empty() {
        log::warn!("graph has no edges; using uniform affinities {EMPTY_GRAPH_AFFINITY}");
        return AffinityTensor::constant(k, EMPTY_GRAPH_AFFINITY);
    }
    let target = edges.len() as f64;

    let mut ratios = vec![[[0.0; 2]; 2]; k];
    for &(i, j) in &edges {
        for (g, r) in ratios.iter_mut().enumerate() {
            let w = outcome_weights(phi[[i, g]], phi[[j, g]]);
            for x1 in 0..2 {
                for x2 in 0..2 {
                    r[x1][x2] += w[x1][x2];
                }
            }
        }
    }
    for r in &mut ratios {
        let max = r.iter().flatten().copied().fold(0.0, f64::max);
        *r = crate::model::map_table(r, |x| (1.0 - clamp_eps) * x / max);
    }

    let count = |s: f64| expected_edge_count(phi, &scaled(&ratios, s, clamp_eps), &mask);
    let current = count(1.0);
    let mut s = (target / current).powf(1.0 / k as f64);
    let rel = |e: f64| (e - target).abs() / target;
    if rel(count(s)) >= 1e-3 {
        // clamping binds; the count is nondecreasing in s
        let min_pos = ratios
            .iter()
            .flatten()
            .flatten()
            .copied()
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (0.0, (1.0 - clamp_eps) / min_pos);
        if count(hi) < target {
            log::warn!("edge count {target} is out of reach of clamped affinities");
            s = hi;
        } else {
            for _ in 0..200 {
                s = 0.5 * (lo + hi);
                let e = count(s);
                if rel(e) < 1e-3 {
                    break;
                }
                if e < target {
                    lo = s;
                } else {
                    hi = s;
                }
            }
        }
    }
    AffinityTensor::new(scaled(&ratios, s, clamp_eps))
}

fn check_finite(b: ObjectiveBreakdown, block: &'static str) -> Result<ObjectiveBreakdown> {
    if b.is_finite() {
        Ok(b)
    } else {
        Err(Error::NonFinite { block })
    }
}

/// Objective terms a block can change; the rest are carried over.
#[derive(Clone, Copy)]
enum Touches {
    All,
    Weights,
    Affinities,
}

fn rescore(
    state: &ModelState,
    data: &Dataset,
    before: ObjectiveBreakdown,
    t: Touches,
) -> ObjectiveBreakdown {
    let b = before;
    match t {
        Touches::All => objective(state, data),
        Touches::Weights => ObjectiveBreakdown::from_parts(
            b.l_phi,
            feature_term(state, data),
            b.l_a_surrogate,
            l1_term(state),
        ),
        Touches::Affinities => {
            ObjectiveBreakdown::from_parts(b.l_phi, b.l_f, network_term(state, data), b.l1_penalty)
        }
    }
}

/// Applies `step(state, rate)` and keeps it only if the objective did not
/// drop; otherwise halves the rate and retries from the saved state.
fn guarded_block<F>(
    state: &mut ModelState,
    data: &Dataset,
    before: ObjectiveBreakdown,
    rate: f64,
    (block, touches): (&'static str, Touches),
    mut step: F,
) -> Result<ObjectiveBreakdown>
where
    F: FnMut(&mut ModelState, f64, usize),
{
    let saved = state.clone();
    let passes = state.hyper.inner_passes;
    let backtracking = state.hyper.backtracking;
    let mut rate = rate;
    for _ in 0..=MAX_HALVINGS {
        for pass in 0..passes {
            step(state, rate, pass);
        }
        let after = check_finite(rescore(state, data, before, touches), block)?;
        if !backtracking || after.total >= before.total {
            return Ok(after);
        }
        *state = saved.clone();
        rate *= 0.5;
    }
    *state = saved;
    Ok(before)
}

/// One sweep of membership updates over every `(i, k)`.
pub(crate) fn phi_pass(state: &mut ModelState, data: &Dataset, rate: f64) {
    let eps = state.hyper.clamp_eps;
    let (n, k) = (state.n_nodes(), state.k_groups());
    let mask = state.network_mask();
    let terms = PhiTerms::default();
    match state.hyper.sweep {
        PhiSweep::GaussSeidel => {
            for i in 0..n {
                let mut cache = mask[i].then(|| NodeFactors::new(state, i));
                for g in 0..k {
                    let grad =
                        phi_gradient_cached(state, data, i, g, terms, &mask, cache.as_ref()).total;
                    let p = &mut state.memberships.phi[[i, g]];
                    *p = (*p + rate * grad).clamp(eps, 1.0 - eps);
                    if let Some(c) = cache.as_mut() {
                        c.refresh(state, g);
                    }
                }
            }
        }
        PhiSweep::Frozen => {
            use rayon::prelude::*;
            let snapshot = &*state;
            let grads: Vec<f64> = (0..n * k)
                .into_par_iter()
                .map(|c| {
                    let (i, g) = (c / k, c % k);
                    phi_gradient(snapshot, data, i, g, terms, &mask, mask[i]).total
                })
                .collect();
            for (c, grad) in grads.into_iter().enumerate() {
                let p = &mut state.memberships.phi[[c / k, c % k]];
                *p = (*p + rate * grad).clamp(eps, 1.0 - eps);
            }
        }
    }
}

fn w_pass(state: &mut ModelState, grad: &Array2<f64>, rate: f64) {
    let k = state.k_groups();
    let lambda = state.hyper.lambda;
    for ((l, g), w) in state.weights.w.indexed_iter_mut() {
        let d = grad[[l, g]];
        *w = if g == k {
            *w + rate * d
        } else {
            lasso_step(*w, d, rate, lambda)
        };
    }
}

fn theta_pass(state: &mut ModelState, grad: &[Table], rate: f64) {
    let eps = state.hyper.clamp_eps;
    for (t, d) in state.affinities.theta.iter_mut().zip(grad) {
        for x1 in 0..2 {
            for x2 in 0..2 {
                t[x1][x2] = (t[x1][x2] + rate * d[x1][x2]).clamp(eps, 1.0 - eps);
            }
        }
    }
}

/// Initial state for `fit`: SVD start for φ/W and ratio start for Θ.
pub fn initialize(
    data: &Dataset,
    k: usize,
    hyper: &Hyperparams,
    heldout: &[usize],
) -> Result<ModelState> {
    let hyper = hyper.for_groups(k)?;
    let (memberships, weights) = init_svd(data, k, hyper.lambda, hyper.clamp_eps)?;
    let affinities = init_theta(data, &memberships, hyper.clamp_eps, heldout);
    let mut state = ModelState::new(memberships, weights, affinities, hyper)?;
    let mut heldout = heldout.to_vec();
    heldout.sort_unstable();
    heldout.dedup();
    state.heldout = heldout;
    Ok(state)
}

pub fn fit(data: &Dataset, k: usize, hyper: &Hyperparams) -> Result<(ModelState, FitReport)> {
    fit_holdout(data, k, hyper, &[])
}

/// Fits with the links of `heldout` nodes excluded from every network sum.
/// Their features still take part.
pub fn fit_holdout(
    data: &Dataset,
    k: usize,
    hyper: &Hyperparams,
    heldout: &[usize],
) -> Result<(ModelState, FitReport)> {
    if let Some(&bad) = heldout.iter().find(|&&u| u >= data.n_nodes()) {
        return Err(Error::IndexOutOfRange {
            what: "node",
            index: bad,
            bound: data.n_nodes(),
        });
    }
    let state = initialize(data, k, hyper, heldout)?;
    run(state, data)
}

/// Runs the alternating ascent from a given state.
pub fn run(mut state: ModelState, data: &Dataset) -> Result<(ModelState, FitReport)> {
    state.check_dims(data)?;
    state.hyper.validate()?;
    let started = Instant::now();
    let hyper = state.hyper.clone();
    let initial = check_finite(objective(&state, data), "initialization")?;
    let mut current = initial;
    let mut trace = Vec::new();
    let mut nonzero = Vec::new();
    let mut converged = false;

    for _ in 0..hyper.max_outer_iters {
        let start = current;
        current = guarded_block(
            &mut state,
            data,
            current,
            hyper.gamma_phi,
            ("phi", Touches::All),
            |s, r, _| phi_pass(s, data, r),
        )?;
        // the first pass of a retry starts from the saved state, so its
        // gradient is computed once per block
        let w_grad = grad_w_all(&state, data);
        current = guarded_block(
            &mut state,
            data,
            current,
            hyper.gamma_f,
            ("W", Touches::Weights),
            |s, r, pass| {
                if pass == 0 {
                    w_pass(s, &w_grad, r);
                } else {
                    let g = grad_w_all(s, data);
                    w_pass(s, &g, r);
                }
            },
        )?;
        let theta_grad = grad_theta_all(&state, data);
        current = guarded_block(
            &mut state,
            data,
            current,
            hyper.gamma_a,
            ("theta", Touches::Affinities),
            |s, r, pass| {
                if pass == 0 {
                    theta_pass(s, &theta_grad, r);
                } else {
                    let g = grad_theta_all(s, data);
                    theta_pass(s, &g, r);
                }
            },
        )?;
        trace.push(current);
        nonzero.push(state.weights.nonzero_count());
        let change = (current.total - start.total).abs() / start.total.abs().max(f64::MIN_POSITIVE);
        if change < hyper.rel_tol {
            converged = true;
            break;
        }
    }

    let report = FitReport {
        initial,
        outer_iters_run: trace.len(),
        objective_trace: trace,
        converged,
        wall_time: started.elapsed().as_secs_f64(),
        nonzero_weights: nonzero,
    };
    Ok((state, report))
}
