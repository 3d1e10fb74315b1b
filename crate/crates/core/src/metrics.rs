//! Evaluation metrics: pair-mismatch error, permutation-minimized community
//! distance, averaged Hellinger distance, weighted parameter errors and
//! support-recovery rates.

use crate::assignment;
use crate::error::{Error, Result};
use crate::likelihood::cell_probs;
use crate::model::{layer_pairs, BlockParams, Membership, SupportSet};
use crate::probkit::{self, Corr};
use serde::{Deserialize, Serialize};

/// Flat record of all evaluation metrics for one fitted instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Fraction of node pairs on which the two clusterings disagree about
    /// co-membership.
    pub err_pair: f64,
    /// Permutation-minimized average misassignment mass.
    pub dist_perm: f64,
    /// Averaged squared Hellinger distance between cell-probability tables.
    pub hellinger_sq: f64,
    pub mu_mse: f64,
    pub sigma_weighted_mse: f64,
    pub support_fpr: Option<f64>,
    pub support_fnr: Option<f64>,
}

/// Pair-mismatch error: the fraction of node pairs i < j where exactly one of
/// the two clusterings puts i and j together. Invariant under relabeling of
/// either argument.
pub fn err_pair_mismatch(e_true: &Membership, e_hat: &Membership) -> Result<f64> {
    let n = e_true.n_nodes();
    if e_hat.n_nodes() != n {
        return Err(Error::Dimension("memberships cover different node counts".into()));
    }
    if n < 2 {
        return Ok(0.0);
    }
    let mut mismatched = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let same_true = e_true.get(i) == e_true.get(j);
            let same_hat = e_hat.get(i) == e_hat.get(j);
            if same_true != same_hat {
                mismatched += 1;
            }
        }
    }
    Ok(2.0 * mismatched as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Minimum over label permutations of the average per-community
/// misassignment mass; computed exactly via the assignment solver.
pub fn dist_min_permutation(e_true: &Membership, e_hat: &Membership) -> Result<f64> {
    let (_, obj) = assignment::alignment(e_true, e_hat)?;
    Ok(obj)
}

/// The permutation achieving [`dist_min_permutation`]: true community k is
/// matched to estimated community `perm[k]`.
pub fn dist_argmin_permutation(e_true: &Membership, e_hat: &Membership) -> Result<Vec<usize>> {
    let (perm, _) = assignment::alignment(e_true, e_hat)?;
    Ok(perm)
}

fn check_metric_dims(
    theta_hat: &BlockParams,
    e_hat: &Membership,
    theta_true: &BlockParams,
    e_true: &Membership,
) -> Result<(usize, usize)> {
    let n = e_true.n_nodes();
    if e_hat.n_nodes() != n {
        return Err(Error::Dimension("memberships cover different node counts".into()));
    }
    if theta_hat.n_layers() != theta_true.n_layers() {
        return Err(Error::Dimension("parameter sets have different layer counts".into()));
    }
    if theta_hat.n_communities() != e_hat.n_communities()
        || theta_true.n_communities() != e_true.n_communities()
    {
        return Err(Error::Dimension("membership/parameter community mismatch".into()));
    }
    Ok((n, theta_true.n_layers()))
}

/// Joint label counts: joint[p][q] = #{i : e_hat_i = p, e_true_i = q}.
fn joint_label_counts(e_hat: &Membership, e_true: &Membership) -> Vec<Vec<f64>> {
    let kh = e_hat.n_communities();
    let kt = e_true.n_communities();
    let mut joint = vec![vec![0.0f64; kt]; kh];
    for i in 0..e_true.n_nodes() {
        joint[e_hat.get(i)][e_true.get(i)] += 1.0;
    }
    joint
}

/// Averaged squared Hellinger distance between the estimated and true cell
/// probability tables over all ordered node pairs (i, j) and layer pairs
/// b < d, normalized by N^2 M^2. The sum depends on the estimates only
/// through block lookups indexed by the estimated labels, so it is invariant
/// to label switching as written.
pub fn hellinger_avg(
    theta_hat: &BlockParams,
    e_hat: &Membership,
    theta_true: &BlockParams,
    e_true: &Membership,
) -> Result<f64> {
    let (n, m) = check_metric_dims(theta_hat, e_hat, theta_true, e_true)?;
    let joint = joint_label_counts(e_hat, e_true);
    let kh = e_hat.n_communities();
    let kt = e_true.n_communities();

    let mut total = 0.0;
    for p1 in 0..kh {
        for q1 in 0..kt {
            if joint[p1][q1] == 0.0 {
                continue;
            }
            for p2 in 0..kh {
                for q2 in 0..kt {
                    let weight = joint[p1][q1] * joint[p2][q2];
                    if weight == 0.0 {
                        continue;
                    }
                    let mu_h = theta_hat.mu_block(p1, p2);
                    let sig_h = theta_hat.sigma_block(p1, p2);
                    let mu_t = theta_true.mu_block(q1, q2);
                    let sig_t = theta_true.sigma_block(q1, q2);
                    let mut h2 = 0.0;
                    for (b, d) in layer_pairs(m) {
                        let ch = cell_probs(mu_h[b], mu_h[d], Corr::clamped(sig_h[(b, d)]));
                        let ct = cell_probs(mu_t[b], mu_t[d], Corr::clamped(sig_t[(b, d)]));
                        for (a, b_) in ch.as_array().iter().zip(ct.as_array().iter()) {
                            let diff = a.sqrt() - b_.sqrt();
                            h2 += diff * diff;
                        }
                    }
                    total += weight * h2;
                }
            }
        }
    }
    Ok(total / (n as f64 * n as f64 * m as f64 * m as f64))
}

/// The two parameter-error norms, reported separately and combined:
/// an unweighted mean-square error over the mean entries and a
/// `(1 - D) B / (M^2 N^2)`-weighted sum over the correlation entries, with
/// `B = (Phi^-1(rho))^2`. Sums run over ordered node pairs as displayed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ParamErrors {
    pub mu_mse: f64,
    pub sigma_weighted_mse: f64,
    pub combined: f64,
}

pub fn param_errors(
    theta_hat: &BlockParams,
    e_hat: &Membership,
    theta_true: &BlockParams,
    e_true: &Membership,
    dep_bound: f64,
    rho: f64,
) -> Result<ParamErrors> {
    let (n, m) = check_metric_dims(theta_hat, e_hat, theta_true, e_true)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0,1), got {rho}")));
    }
    let joint = joint_label_counts(e_hat, e_true);
    let kh = e_hat.n_communities();
    let kt = e_true.n_communities();

    let mut mu_sum = 0.0;
    let mut sigma_sum = 0.0;
    for p1 in 0..kh {
        for q1 in 0..kt {
            if joint[p1][q1] == 0.0 {
                continue;
            }
            for p2 in 0..kh {
                for q2 in 0..kt {
                    let weight = joint[p1][q1] * joint[p2][q2];
                    if weight == 0.0 {
                        continue;
                    }
                    let mu_h = theta_hat.mu_block(p1, p2);
                    let mu_t = theta_true.mu_block(q1, q2);
                    let mut dm = 0.0;
                    for b in 0..m {
                        let d = mu_h[b] - mu_t[b];
                        dm += d * d;
                    }
                    mu_sum += weight * dm;
                    let sig_h = theta_hat.sigma_block(p1, p2);
                    let sig_t = theta_true.sigma_block(q1, q2);
                    let mut ds = 0.0;
                    for (b, d) in layer_pairs(m) {
                        let v = sig_h[(b, d)] - sig_t[(b, d)];
                        ds += v * v;
                    }
                    sigma_sum += weight * ds;
                }
            }
        }
    }
    let n2 = n as f64 * n as f64;
    let b_const = probkit::phi_inv(rho).powi(2);
    let mu_mse = mu_sum / (m as f64 * n2);
    let sigma_weighted_mse = (1.0 - dep_bound) * b_const * sigma_sum / (m as f64 * m as f64 * n2);
    Ok(ParamErrors { mu_mse, sigma_weighted_mse, combined: mu_mse + sigma_weighted_mse })
}

/// False-positive and false-negative rates of estimated supports against the
/// truth, over off-diagonal layer-pair positions, averaged over blocks.
/// Blocks with no possible positives (or negatives) contribute zero to the
/// corresponding rate.
pub fn support_recovery_rates(
    est_supports: &[SupportSet],
    true_supports: &[SupportSet],
    n_layers: usize,
) -> Result<(f64, f64)> {
    if est_supports.len() != true_supports.len() {
        return Err(Error::Dimension("support lists have different lengths".into()));
    }
    if est_supports.is_empty() {
        return Ok((0.0, 0.0));
    }
    let all_pairs: Vec<(usize, usize)> = layer_pairs(n_layers).collect();
    let mut fpr_sum = 0.0;
    let mut fnr_sum = 0.0;
    for (est, truth) in est_supports.iter().zip(true_supports.iter()) {
        let mut fp = 0usize;
        let mut fnn = 0usize;
        let mut pos = 0usize;
        for &(b, d) in &all_pairs {
            let t = truth.contains(b, d);
            let e = est.contains(b, d);
            if t {
                pos += 1;
                if !e {
                    fnn += 1;
                }
            } else if e {
                fp += 1;
            }
        }
        let neg = all_pairs.len() - pos;
        fpr_sum += if neg > 0 { fp as f64 / neg as f64 } else { 0.0 };
        fnr_sum += if pos > 0 { fnn as f64 / pos as f64 } else { 0.0 };
    }
    let nb = est_supports.len() as f64;
    Ok((fpr_sum / nb, fnr_sum / nb))
}

/// Assemble a full report for one fitted instance.
pub fn evaluate(
    theta_hat: &BlockParams,
    e_hat: &Membership,
    theta_true: &BlockParams,
    e_true: &Membership,
    dep_bound: f64,
    rho: f64,
    supports: Option<(&[SupportSet], &[SupportSet])>,
) -> Result<EvalReport> {
    let err_pair = err_pair_mismatch(e_true, e_hat)?;
    let dist_perm = dist_min_permutation(e_true, e_hat)?;
    let hellinger_sq = hellinger_avg(theta_hat, e_hat, theta_true, e_true)?;
    let pe = param_errors(theta_hat, e_hat, theta_true, e_true, dep_bound, rho)?;
    let (support_fpr, support_fnr) = match supports {
        Some((est, truth)) => {
            let (fpr, fnr) = support_recovery_rates(est, truth, theta_true.n_layers())?;
            (Some(fpr), Some(fnr))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        err_pair,
        dist_perm,
        hellinger_sq,
        mu_mse: pe.mu_mse,
        sigma_weighted_mse: pe.sigma_weighted_mse,
        support_fpr,
        support_fnr,
    })
}
