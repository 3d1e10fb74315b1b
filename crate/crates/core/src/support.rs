//! Unknown-support estimation: two-layer pair fits, permutation alignment of
//! their memberships, hard thresholding of the pairwise correlation
//! estimates, and a final constrained refit.

use crate::assignment;
use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig, FitResult};
use crate::model::{
    block_index, blocks, empirical_density, n_blocks, Membership, MultilayerNetwork,
    ParameterSpace, Scenario, SupportSet,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Configuration of the four-stage procedure.
#[derive(Debug, Clone)]
pub struct SupportConfig {
    /// Hard threshold; `None` selects `2 * sqrt(log M / n_min)` with `n_min`
    /// the smallest nonempty block pair count under the reference pair's
    /// membership.
    pub lambda: Option<f64>,
    /// Layer pairs to fit. `None` fits all b < d; a banded subset is the
    /// budget escape hatch for large M (unfitted pairs are treated as
    /// independent).
    pub pair_set: Option<Vec<(usize, usize)>>,
    pub inner_fit: FitConfig,
    pub final_fit: FitConfig,
}

impl Default for SupportConfig {
    fn default() -> Self {
        let mut inner = FitConfig::default();
        // two-layer warm-ups are cheap but numerous; keep them lean
        inner.restarts = 0;
        inner.t2_max = 25;
        SupportConfig { lambda: None, pair_set: None, inner_fit: inner, final_fit: FitConfig::default() }
    }
}

/// Estimates from one two-layer fit: the scalar correlation per unordered
/// block and the pair's membership.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEstimate {
    pub b: usize,
    pub d: usize,
    /// Indexed by unordered block (`block_index`).
    pub sigma0: Vec<f64>,
    pub membership: Membership,
}

/// Fit the model on the two-layer sub-network `(A^(b), A^(d))` with full 2x2
/// support.
pub fn fit_layer_pair(
    net: &MultilayerNetwork,
    b: usize,
    d: usize,
    n_communities: usize,
    template: &ParameterSpace,
    config: &FitConfig,
) -> Result<PairEstimate> {
    if b >= d {
        return Err(Error::Domain(format!("fit_layer_pair requires b < d, got ({b}, {d})")));
    }
    let sub = net.extract_layers(&[b, d])?;
    let rho = empirical_density(&sub)?;
    let space = pair_space(template, rho, n_communities)?;
    let result = fit(&sub, n_communities, &space, config)?;
    let sigma0 = blocks(n_communities)
        .map(|(k, l)| result.theta_hat.sigma_block(k, l)[(0, 1)])
        .collect();
    Ok(PairEstimate { b, d, sigma0, membership: result.membership_hat })
}

fn pair_space(template: &ParameterSpace, rho: f64, k: usize) -> Result<ParameterSpace> {
    let rho = rho.clamp(1e-6, 1.0 - 1e-6);
    let c_u = template.c_u.min((1.0 - 1e-9) / rho).max(1.0 + 1e-9);
    ParameterSpace::with_uniform_support(
        template.c_l.min(0.999),
        c_u,
        rho,
        template.dep_bound,
        Scenario::SparseCovariance,
        SupportSet::full(2),
        k,
        2,
    )
}

/// The permutation aligning `other`'s labels to `reference`'s: reference
/// community k corresponds to other community `perm[k]`. Solved exactly via
/// the assignment solver; equals brute-force enumeration.
pub fn align_memberships(reference: &Membership, other: &Membership) -> Result<Vec<usize>> {
    let (perm, _) = assignment::alignment(reference, other)?;
    Ok(perm)
}

/// Hard-threshold aligned pairwise estimates into per-block support sets.
/// `expected_pairs` lists the layer pairs that must be present; a missing
/// estimate is an error.
pub fn threshold_support(
    pair_estimates: &[PairEstimate],
    lambda: f64,
    n_communities: usize,
    n_layers: usize,
    expected_pairs: &[(usize, usize)],
) -> Result<Vec<SupportSet>> {
    if lambda <= 0.0 {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    for &(b, d) in expected_pairs {
        if !pair_estimates.iter().any(|e| (e.b, e.d) == (b, d)) {
            return Err(Error::Dimension(format!("missing estimate for layer pair ({b}, {d})")));
        }
    }
    let mut supports = vec![SupportSet::empty(); n_blocks(n_communities)];
    for est in pair_estimates {
        if est.d >= n_layers {
            return Err(Error::Dimension(format!(
                "estimate for pair ({}, {}) out of range",
                est.b, est.d
            )));
        }
        for (k, l) in blocks(n_communities) {
            let v = est.sigma0[block_index(k, l, n_communities)];
            if v.abs() > lambda {
                supports[block_index(k, l, n_communities)].insert(est.b, est.d);
            }
        }
    }
    Ok(supports)
}

/// Result of the four-stage procedure: the final refit plus the estimated
/// supports and any pair fits that failed (treated as independent).
#[derive(Debug, Clone)]
pub struct UnknownSupportResult {
    pub fit: FitResult,
    pub supports: Vec<SupportSet>,
    pub failed_pairs: Vec<(usize, usize)>,
    pub lambda: f64,
}

/// Stages: (1) fit every requested layer pair on its two-layer sub-network,
/// (2) align each pair's membership to the first fitted pair's labeling,
/// (3) hard-threshold the aligned correlation estimates into supports,
/// (4) refit the full network under the estimated supports.
pub fn fit_unknown_support(
    net: &MultilayerNetwork,
    n_communities: usize,
    space_template: &ParameterSpace,
    sconfig: &SupportConfig,
) -> Result<UnknownSupportResult> {
    let m = net.n_layers();
    if m < 2 {
        return Err(Error::Domain("support estimation needs at least two layers".into()));
    }
    let pairs: Vec<(usize, usize)> = match &sconfig.pair_set {
        Some(p) => {
            if p.is_empty() {
                return Err(Error::Config("pair_set must be nonempty".into()));
            }
            let mut p = p.clone();
            p.sort_unstable();
            p.dedup();
            for &(b, d) in &p {
                if b >= d || d >= m {
                    return Err(Error::Config(format!("invalid layer pair ({b}, {d})")));
                }
            }
            p
        }
        None => crate::model::layer_pairs(m).collect(),
    };

    // Stage 1: pair fits (independent, run in parallel).
    let outcomes: Vec<((usize, usize), Result<PairEstimate>)> = pairs
        .par_iter()
        .map(|&(b, d)| {
            ((b, d), fit_layer_pair(net, b, d, n_communities, space_template, &sconfig.inner_fit))
        })
        .collect();
    let mut estimates = Vec::new();
    let mut failed = Vec::new();
    for ((b, d), out) in outcomes {
        match out {
            Ok(e) => estimates.push(e),
            Err(_) => failed.push((b, d)),
        }
    }
    if estimates.is_empty() {
        return Err(Error::Numerical("every pair fit failed".into()));
    }

    // Stage 2: align block labels to the first fitted pair's membership.
    let reference = estimates[0].membership.clone();
    let aligned: Vec<PairEstimate> = estimates
        .into_iter()
        .map(|est| {
            let perm = align_memberships(&reference, &est.membership)?;
            let sigma0 = blocks(n_communities)
                .map(|(k, l)| est.sigma0[block_index(perm[k], perm[l], n_communities)])
                .collect();
            Ok(PairEstimate { b: est.b, d: est.d, sigma0, membership: est.membership })
        })
        .collect::<Result<_>>()?;

    // Stage 3: threshold.
    let lambda = match sconfig.lambda {
        Some(l) => l,
        None => {
            let counts =
                crate::likelihood::compute_counts(&net.pair_bits(), &reference)?;
            let n_min = blocks(n_communities)
                .map(|(k, l)| counts.pairs_in_block(k, l))
                .filter(|&c| c > 0)
                .min()
                .unwrap_or(1);
            2.0 * ((m as f64).ln() / n_min as f64).sqrt()
        }
    };
    let fitted_pairs: Vec<(usize, usize)> = aligned.iter().map(|e| (e.b, e.d)).collect();
    let supports = threshold_support(&aligned, lambda, n_communities, m, &fitted_pairs)?;

    // Stage 4: final refit under the estimated supports.
    let mut space = space_template.clone();
    space.set_supports(supports.clone())?;
    let final_fit = fit(net, n_communities, &space, &sconfig.final_fit)?;

    Ok(UnknownSupportResult { fit: final_fit, supports, failed_pairs: failed, lambda })
}
