//! Brute-force network likelihoods for tiny instances.
//!
//! [`oracle_exact_loglik`] marginalizes every indicator assignment, and
//! [`jensen_bound`] is `E[log P(A | Z)]` with exact `log(1 - p)` for
//! non-links. Both are exponential and only meant for checking the
//! closed-form surrogate.

use crate::error::{Error, Result};
use crate::model::{pair_expectation, Dataset, ModelState};

/// Maximum `N * K` accepted by the enumerations.
pub const ENUMERATION_BOUND: usize = 16;

fn check_bound(state: &ModelState) -> Result<()> {
    let nk = state.n_nodes() * state.k_groups();
    if nk > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound {
            nk,
            bound: ENUMERATION_BOUND,
        });
    }
    Ok(())
}

/// Ordered pairs that enter the network likelihood.
pub fn scored_pairs(state: &ModelState) -> Vec<(usize, usize)> {
    let mask = state.network_mask();
    let n = state.n_nodes();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && mask[i] && mask[j])
        .collect()
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log p_ij` for a fixed indicator assignment, `bits` indexed `i * K + k`.
fn link_prob(state: &ModelState, bits: u32, i: usize, j: usize) -> f64 {
    let k = state.k_groups();
    (0..k)
        .map(|g| {
            let zi = (bits >> (i * k + g)) & 1;
            let zj = (bits >> (j * k + g)) & 1;
            state.affinities.theta[g][zi as usize][zj as usize]
        })
        .product()
}

/// `log sum_Z P(A | Z) P(Z | phi)` over the given pairs.
pub fn oracle_exact_loglik_pairs(
    state: &ModelState,
    data: &Dataset,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    check_bound(state)?;
    let (n, k) = (state.n_nodes(), state.k_groups());
    let phi = &state.memberships.phi;
    let nk = n * k;
    let terms = (0u32..1 << nk).map(|bits| {
        let mut lp = 0.0;
        for i in 0..n {
            for g in 0..k {
                let p = phi[[i, g]];
                lp += if (bits >> (i * k + g)) & 1 == 1 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                };
            }
        }
        for &(i, j) in pairs {
            let p = link_prob(state, bits, i, j);
            lp += if data.has_edge(i, j) {
                p.ln()
            } else {
                (1.0 - p).ln()
            };
        }
        lp
    });
    Ok(log_sum_exp(terms))
}

pub fn oracle_exact_loglik(state: &ModelState, data: &Dataset) -> Result<f64> {
    oracle_exact_loglik_pairs(state, data, &scored_pairs(state))
}

/// `E[log p_ij]`, which factorizes over groups.
pub fn expected_log_link(state: &ModelState, i: usize, j: usize) -> f64 {
    let phi = &state.memberships.phi;
    let logs = state.affinities.log_tables();
    logs.iter()
        .enumerate()
        .map(|(g, t)| pair_expectation(phi[[i, g]], phi[[j, g]], t))
        .sum()
}

/// `E[log(1 - p_ij)]` by enumerating the `4^K` joint indicator outcomes of
/// the two endpoints.
pub fn expected_log_nonlink(state: &ModelState, i: usize, j: usize) -> f64 {
    let k = state.k_groups();
    let phi = &state.memberships.phi;
    let theta = &state.affinities.theta;
    let mut total = 0.0;
    for outcome in 0u32..1 << (2 * k) {
        let mut weight = 1.0;
        let mut p = 1.0;
        for g in 0..k {
            let zi = (outcome >> (2 * g)) & 1;
            let zj = (outcome >> (2 * g + 1)) & 1;
            let (a, b) = (phi[[i, g]], phi[[j, g]]);
            weight *= if zi == 1 { a } else { 1.0 - a };
            weight *= if zj == 1 { b } else { 1.0 - b };
            p *= theta[g][zi as usize][zj as usize];
        }
        if weight > 0.0 {
            total += weight * (1.0 - p).ln();
        }
    }
    total
}

/// `E[log P(A | Z)]` over the given pairs.
pub fn jensen_bound_pairs(
    state: &ModelState,
    data: &Dataset,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    check_bound(state)?;
    Ok(pairs
        .iter()
        .map(|&(i, j)| {
            if data.has_edge(i, j) {
                expected_log_link(state, i, j)
            } else {
                expected_log_nonlink(state, i, j)
            }
        })
        .sum())
}

pub fn jensen_bound(state: &ModelState, data: &Dataset) -> Result<f64> {
    jensen_bound_pairs(state, data, &scored_pairs(state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AffinityTensor, FeatureWeights, Hyperparams, Memberships};
    use ndarray::{array, Array2};

    fn state(phi: Array2<f64>, theta: Vec<crate::model::Table>) -> ModelState {
        let k = phi.ncols();
        ModelState::new(
            Memberships::new(phi),
            FeatureWeights::zeros(0, k),
            AffinityTensor::new(theta),
            Hyperparams::default(),
        )
        .unwrap()
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> Dataset {
        Dataset::new(
            (0..n).map(|i| i.to_string()).collect(),
            vec![],
            edges.iter().copied(),
            Array2::from_elem((n, 0), None),
        )
        .unwrap()
    }

    #[test]
    fn single_pair_example() {
        let s = state(array![[0.5], [0.5]], vec![[[0.1, 0.3], [0.3, 0.8]]]);
        let d = graph(2, &[(0, 1)]);
        let exact = oracle_exact_loglik_pairs(&s, &d, &[(0, 1)]).unwrap();
        let bound = jensen_bound_pairs(&s, &d, &[(0, 1)]).unwrap();
        assert!((exact - 0.375f64.ln()).abs() < 1e-12);
        assert!((exact + 0.98083).abs() < 1e-5);
        assert!((bound + 1.23342).abs() < 1e-5);
        assert!(bound <= exact);
    }

    #[test]
    fn constant_affinity_is_indicator_free() {
        let c: f64 = 0.4;
        let s = state(
            array![[0.2, 0.9], [0.6, 0.3], [0.5, 0.5]],
            vec![[[c; 2]; 2]; 2],
        );
        let d = graph(3, &[(0, 1), (2, 0)]);
        let (e, m) = (2.0, 4.0);
        let want = e * (c * c).ln() + m * (1.0 - c * c).ln();
        let exact = oracle_exact_loglik(&s, &d).unwrap();
        assert!((exact - want).abs() < 1e-12, "{exact} vs {want}");
        assert!((jensen_bound(&s, &d).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn bound_enforced() {
        let s = state(Array2::from_elem((9, 2), 0.5), vec![[[0.5; 2]; 2]; 2]);
        let d = graph(9, &[]);
        assert!(matches!(
            oracle_exact_loglik(&s, &d),
            Err(Error::EnumerationBound { nk: 18, bound: 16 })
        ));
    }
}
