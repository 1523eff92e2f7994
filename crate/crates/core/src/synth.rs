//! Sampling datasets from the generative model.
//!
//! Draw order is fixed (memberships, indicators, links over ordered pairs in
//! row-major order, then features), so a seed reproduces a dataset exactly.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::expected_edge_count;
use crate::model::{pair_expectation, sigmoid, Dataset, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Diagonal-dominant affinities: nodes that agree on a group link more.
    Homophily,
    /// Members of a group link to members and non-members alike; non-members
    /// rarely link to each other. Few nodes belong to each group.
    CorePeriphery,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homophily" => Ok(Self::Homophily),
            "core-periphery" => Ok(Self::CorePeriphery),
            other => Err(Error::InvalidParameter(format!(
                "unknown preset '{other}' (expected homophily or core-periphery)"
            ))),
        }
    }
}

/// Logit step between a feature's owning group being fully on and fully off.
const FEATURE_STRENGTH: f64 = 6.0;
/// Within-group to cross-group affinity ratio of the homophily preset.
const HOMOPHILY_RATIO: f64 = 8.0;

/// Ground-truth parameters a dataset is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub alpha: Vec<[f64; 2]>,
    /// `L x (K + 1)`, last column is the intercept.
    pub weights: Array2<f64>,
    pub affinities: Vec<Table>,
}

impl PlantedModel {
    pub fn preset(preset: Preset, n: usize, l: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        // target link density, about a dozen out-links per node
        let density = (12.0 / n.max(2) as f64).min(0.1);
        let per_group = density.powf(1.0 / k as f64);
        let (alpha, table): ([f64; 2], Table) = match preset {
            Preset::Homophily => {
                let hi = 2.0 * per_group * HOMOPHILY_RATIO / (1.0 + HOMOPHILY_RATIO);
                let lo = hi / HOMOPHILY_RATIO;
                ([0.25, 0.25], [[hi, lo], [lo, hi]])
            }
            Preset::CorePeriphery => {
                // with about a quarter of nodes in each group, scale so the
                // expected per-group factor matches `per_group`
                let (core, mid, low) = (1.0, 0.5, 0.1);
                let q = 0.25;
                let mean = q * q * core + 2.0 * q * (1.0 - q) * mid + (1.0 - q) * (1.0 - q) * low;
                let s = (per_group / mean).min(1.0);
                ([1.0, 3.0], [[low * s, mid * s], [mid * s, core * s]])
            }
        };
        let mut weights = Array2::zeros((l, k + 1));
        for f in 0..l {
            let g = f % k;
            let sign = if (f / k).is_multiple_of(2) { 1.0 } else { -1.0 };
            weights[[f, g]] = sign * FEATURE_STRENGTH;
            weights[[f, k]] = -sign * FEATURE_STRENGTH / 2.0;
        }
        Ok(Self {
            alpha: vec![alpha; k],
            weights,
            affinities: vec![table; k],
        })
    }

    pub fn k_groups(&self) -> usize {
        self.affinities.len()
    }

    fn validate(&self, l: usize) -> Result<()> {
        let k = self.k_groups();
        if k == 0 {
            return Err(Error::InvalidParameter(
                "planted model has no groups".into(),
            ));
        }
        if self.alpha.len() != k || self.weights.dim() != (l, k + 1) {
            return Err(Error::InvalidParameter(format!(
                "planted model shapes disagree: {} alpha pairs, weights {:?}, expected K = {k}, L = {l}",
                self.alpha.len(),
                self.weights.dim()
            )));
        }
        if self
            .alpha
            .iter()
            .flatten()
            .any(|&a| !(a > 0.0 && a.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "Beta parameters must be positive".into(),
            ));
        }
        if self
            .affinities
            .iter()
            .flatten()
            .flatten()
            .any(|&t| !(0.0..=1.0).contains(&t))
        {
            return Err(Error::InvalidParameter(
                "affinities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Planted {
    Preset(Preset),
    Model(PlantedModel),
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub data: Dataset,
    pub z: Array2<bool>,
    pub phi: Array2<f64>,
    pub planted: PlantedModel,
}

pub fn synth_generate(
    n: usize,
    l: usize,
    k: usize,
    planted: &Planted,
    seed: u64,
    features_from_z: bool,
) -> Result<Synthetic> {
    let model = match planted {
        Planted::Preset(p) => PlantedModel::preset(*p, n, l, k)?,
        Planted::Model(m) => m.clone(),
    };
    model.validate(l)?;
    if model.k_groups() != k {
        return Err(Error::InvalidParameter(format!(
            "planted model has {} groups, asked for {k}",
            model.k_groups()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let betas = model
        .alpha
        .iter()
        .map(|&[a, b]| Beta::new(a, b).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut phi = Array2::zeros((n, k));
    for i in 0..n {
        for g in 0..k {
            phi[[i, g]] = betas[g].sample(&mut rng);
        }
    }
    let z = phi.map(|&p: &f64| rng.random_bool(p.clamp(0.0, 1.0)));

    let expected = expected_edge_count(&phi, &model.affinities, &vec![true; n]);
    if expected > 0.5 * (n * n.saturating_sub(1)) as f64 {
        log::warn!("dense regime: {expected:.0} expected links among {n} nodes");
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let p: f64 = (0..k)
                .map(|g| model.affinities[g][usize::from(z[[i, g]])][usize::from(z[[j, g]])])
                .product();
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }

    let mut features = Array2::from_elem((n, l), None);
    for i in 0..n {
        for f in 0..l {
            let mut eta = model.weights[[f, k]];
            for g in 0..k {
                let x = if features_from_z {
                    f64::from(u8::from(z[[i, g]]))
                } else {
                    phi[[i, g]]
                };
                eta += model.weights[[f, g]] * x;
            }
            features[[i, f]] = Some(rng.random_bool(sigmoid(eta)));
        }
    }

    let data = Dataset::new(
        (0..n).map(|i| format!("n{i}")).collect(),
        (0..l).map(|f| format!("f{f}")).collect(),
        edges,
        features,
    )?;
    Ok(Synthetic {
        data,
        z,
        phi,
        planted: model,
    })
}

/// Expected link probability between two nodes under the planted model,
/// marginalizing indicators given the sampled memberships.
pub fn planted_edge_prob(s: &Synthetic, i: usize, j: usize) -> f64 {
    (0..s.planted.k_groups())
        .map(|g| pair_expectation(s.phi[[i, g]], s.phi[[j, g]], &s.planted.affinities[g]))
        .product()
}
