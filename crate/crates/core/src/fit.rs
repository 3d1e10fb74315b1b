//! The alternating estimator: projected-gradient updates of the block
//! parameters and greedy membership sweeps, with spectral initialization,
//! backtracking line search, random warm-up restarts and the two-level
//! stopping rules.

use crate::error::{Error, Result};
use crate::likelihood::{
    block_loglik, compute_counts, compute_cross_counts, grad_block, node_move_delta, BlockCells,
    BlockCounts, LogCellTable,
};
use crate::linalg::min_eigenvalue;
use crate::model::{
    blocks, layer_pairs, project_mu, project_sigma_scenario, BlockParams, Membership,
    MultilayerNetwork, PairBits, ParameterSpace,
};
use crate::probkit;
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Tuning knobs of the alternating optimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Inner (per-block) relative-error stopping threshold.
    pub delta1: f64,
    /// Outer relative-error stopping threshold.
    pub delta2: f64,
    /// Inner iteration cap per block update.
    pub t1_max: usize,
    /// Outer iteration cap.
    pub t2_max: usize,
    /// Initial line-search step size.
    pub step0: f64,
    /// Multiplicative backtracking factor in (0, 1).
    pub backtrack: f64,
    /// Sufficient-increase constant.
    pub armijo: f64,
    /// Maximum backtracking halvings per step.
    pub max_backtracks: usize,
    /// Number of additional random warm-up runs beyond the deterministic
    /// initialization.
    pub restarts: usize,
    pub seed: u64,
    /// Eigenvalue floor used by the correlation projection.
    pub pd_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            delta1: 1e-6,
            delta2: 1e-6,
            t1_max: 100,
            t2_max: 50,
            step0: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            max_backtracks: 40,
            restarts: 3,
            seed: 0,
            pd_floor: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta1 > 0.0 && self.delta2 > 0.0) {
            return Err(Error::Config("stopping thresholds must be positive".into()));
        }
        if self.t1_max < 1 || self.t2_max < 1 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtrack factor must lie in (0,1)".into()));
        }
        if !(self.step0 > 0.0 && self.pd_floor > 0.0) {
            return Err(Error::Config("step0 and pd_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: BlockParams,
    pub membership_hat: Membership,
    /// Total pairwise log-likelihood after initialization and after each
    /// outer step; nondecreasing within slack 1e-8.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    /// Which warm-up won (0 = deterministic initialization).
    pub restart_index: usize,
    pub final_loglik: f64,
}

// ---------------------------------------------------------------------------
// Spectral initialization
// ---------------------------------------------------------------------------

/// Leading-eigenvector embedding of the aggregate adjacency followed by
/// k-means. Deterministic given the seed; the first k-means restart uses a
/// value-based farthest-point initialization so that node relabelings
/// permute the output consistently.
pub fn init_membership_spectral(
    net: &MultilayerNetwork,
    n_communities: usize,
    seed: u64,
) -> Result<Membership> {
    if n_communities == 0 {
        return Err(Error::Domain("need at least one community".into()));
    }
    let n = net.n_nodes();
    if n_communities == 1 || n <= n_communities {
        let assign: Vec<usize> = (0..n).map(|i| if n_communities == 1 { 0 } else { i % n_communities }).collect();
        return Membership::new(assign, n_communities);
    }
    let agg = net.aggregate_adjacency();
    let eig = nalgebra::SymmetricEigen::new(agg);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigensolver produced non-finite eigenvalues".into()));
    }
    // leading K by algebraic eigenvalue; magnitude ordering would admit
    // eigenvectors from the negative noise edge, which wreck the embedding
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b))
    });
    // scale columns by sqrt(|lambda|): the usual adjacency spectral embedding
    let mut points = vec![vec![0.0f64; n_communities]; n];
    for (c, &col) in order.iter().take(n_communities).enumerate() {
        let scale = eig.eigenvalues[col].abs().sqrt();
        for i in 0..n {
            points[i][c] = eig.eigenvectors[(i, col)] * scale;
        }
    }
    let assign = kmeans(&points, n_communities, seed);
    Membership::new(assign, n_communities)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    const RESTARTS: usize = 30;
    const MAX_ITER: usize = 100;
    let n = points.len();
    let dim = points[0].len();
    let mut best_assign = vec![0usize; n];
    let mut best_inertia = f64::INFINITY;

    for restart in 0..RESTARTS {
        let mut centroids: Vec<Vec<f64>> = if restart == 0 {
            // farthest-point init: start from the point of largest norm
            let mut chosen: Vec<usize> = Vec::with_capacity(k);
            let first = (0..n)
                .max_by(|&a, &b| {
                    let na: f64 = points[a].iter().map(|v| v * v).sum();
                    let nb: f64 = points[b].iter().map(|v| v * v).sum();
                    na.partial_cmp(&nb).unwrap().then(b.cmp(&a))
                })
                .unwrap();
            chosen.push(first);
            while chosen.len() < k {
                let next = (0..n)
                    .max_by(|&a, &b| {
                        let da = chosen.iter().map(|&c| sq_dist(&points[a], &points[c])).fold(f64::INFINITY, f64::min);
                        let db = chosen.iter().map(|&c| sq_dist(&points[b], &points[c])).fold(f64::INFINITY, f64::min);
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                chosen.push(next);
            }
            chosen.iter().map(|&i| points[i].clone()).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.truncate(k);
            idx.iter().map(|&i| points[i].clone()).collect()
        };

        let mut assign = vec![0usize; n];
        for _ in 0..MAX_ITER {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (c, cent) in centroids.iter().enumerate() {
                    let d = sq_dist(p, cent);
                    if d < best_d - 1e-15 {
                        best_d = d;
                        best = c;
                    }
                }
                if assign[i] != best {
                    assign[i] = best;
                    changed = true;
                }
            }
            // recompute centroids; refill empty clusters with the worst-fit point
            let mut counts = vec![0usize; k];
            let mut sums = vec![vec![0.0f64; dim]; k];
            for (i, p) in points.iter().enumerate() {
                counts[assign[i]] += 1;
                for d in 0..dim {
                    sums[assign[i]][d] += p[d];
                }
            }
            for c in 0..k {
                if counts[c] == 0 {
                    let worst = (0..n)
                        .max_by(|&a, &b| {
                            let da = sq_dist(&points[a], &centroids[assign[a]]);
                            let db = sq_dist(&points[b], &centroids[assign[b]]);
                            da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                        })
                        .unwrap();
                    centroids[c] = points[worst].clone();
                    assign[worst] = c;
                    changed = true;
                } else {
                    for d in 0..dim {
                        centroids[c][d] = sums[c][d] / counts[c] as f64;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = points.iter().enumerate().map(|(i, p)| sq_dist(p, &centroids[assign[i]])).sum();
        if inertia < best_inertia * (1.0 - 1e-9) {
            best_inertia = inertia;
            best_assign = assign;
        }
    }
    best_assign
}

// ---------------------------------------------------------------------------
// Parameter initialization
// ---------------------------------------------------------------------------

/// Deterministic initialization: identity correlation blocks and means from
/// (clamped, box-projected) empirical block-layer edge frequencies; empty
/// blocks fall back to the space's global density.
pub fn init_theta(
    net: &MultilayerNetwork,
    e: &Membership,
    space: &ParameterSpace,
) -> Result<BlockParams> {
    let counts = compute_counts(&net.pair_bits(), e)?;
    init_theta_from_counts(&counts, space)
}

pub(crate) fn init_theta_from_counts(
    counts: &BlockCounts,
    space: &ParameterSpace,
) -> Result<BlockParams> {
    let k = counts.n_communities();
    let m = counts.n_layers();
    let mut theta = BlockParams::identity(k, m);
    let fallback = probkit::phi_inv(space.rho.clamp(1e-12, 1.0 - 1e-12));
    for (a, b) in blocks(k) {
        let n_pairs = counts.pairs_in_block(a, b);
        let mu: Vec<f64> = if n_pairs == 0 {
            vec![fallback; m]
        } else {
            (0..m)
                .map(|layer| {
                    let freq = counts.layer_ones(a, b, layer) as f64 / n_pairs as f64;
                    probkit::phi_inv(freq.clamp(1e-6, 1.0 - 1e-6))
                })
                .collect()
        };
        let mu = project_mu(&mu, space);
        theta.set_block(a, b, &mu, DMatrix::identity(m, m));
    }
    Ok(theta)
}

/// Random feasible warm start used by the restart mechanism.
fn random_theta(space: &ParameterSpace, k: usize, m: usize, seed: u64, stream: u64) -> BlockParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (lo, hi) = space.mu_bounds();
    // confine the draw to a plausible sub-box around the global density
    let center = probkit::phi_inv(space.rho.clamp(1e-12, 1.0 - 1e-12));
    let lo_r = lo.max(center - 1.0);
    let hi_r = if hi.is_finite() { hi.min(center + 1.0) } else { center + 1.0 };
    let mut theta = BlockParams::identity(k, m);
    for (a, b) in blocks(k) {
        let mu: Vec<f64> = (0..m).map(|_| rng.random_range(lo_r..hi_r)).collect();
        let mut sig = DMatrix::<f64>::identity(m, m);
        let support = space.support(a, b);
        for (x, y) in layer_pairs(m) {
            if support.contains(x, y) {
                let half = 0.5 * space.dep_bound;
                let v = rng.random_range(-half..half);
                sig[(x, y)] = v;
                sig[(y, x)] = v;
            }
        }
        theta.set_block(a, b, &mu, sig);
    }
    theta
}

// ---------------------------------------------------------------------------
// Block update (projected gradient ascent with backtracking)
// ---------------------------------------------------------------------------

/// Result of one block update.
#[derive(Debug, Clone)]
pub struct BlockUpdate {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub loglik: f64,
    pub inner_iterations: usize,
    pub line_search_exhausted: bool,
}

/// Projected gradient ascent on one block's parameters with a backtracking
/// line search on the projected point; stops when the relative likelihood
/// change drops below `delta1` or after `t1_max` steps. The final likelihood
/// never falls below the (post-projection) initial one.
pub fn update_theta_block(
    mu0: &[f64],
    sigma0: &DMatrix<f64>,
    cells: &BlockCells,
    space: &ParameterSpace,
    k: usize,
    l: usize,
    config: &FitConfig,
) -> Result<BlockUpdate> {
    let m = cells.n_layers;
    let support = space.support(k, l);

    // feasible start: an infeasible warm start is projected once up front
    let mut mu = project_mu(mu0, space);
    let mut sigma = project_sigma_scenario(sigma0, space, k, l, config.pd_floor)?.matrix;
    let mut ll = block_loglik(&mu, &sigma, cells);
    let mut exhausted = false;
    let mut iterations = 0usize;

    for _ in 0..config.t1_max {
        iterations += 1;
        let (g_mu, g_sigma) = grad_block(&mu, &sigma, cells, support);
        let g_norm2: f64 = g_mu.iter().map(|v| v * v).sum::<f64>()
            + layer_pairs(m).map(|(b, d)| g_sigma[(b, d)].powi(2)).sum::<f64>();
        if g_norm2 < 1e-24 {
            break;
        }

        let mut beta = config.step0;
        let mut accepted = false;
        for _ in 0..config.max_backtracks {
            let cand_mu_raw: Vec<f64> =
                mu.iter().zip(&g_mu).map(|(v, g)| v + beta * g).collect();
            let cand_mu = project_mu(&cand_mu_raw, space);
            let mut cand_sig_raw = sigma.clone();
            for (b, d) in layer_pairs(m) {
                let v = sigma[(b, d)] + beta * g_sigma[(b, d)];
                cand_sig_raw[(b, d)] = v;
                cand_sig_raw[(d, b)] = v;
            }
            let cand_sigma =
                project_sigma_scenario(&cand_sig_raw, space, k, l, config.pd_floor)?.matrix;

            // directional increase along the projected step
            let mut ip: f64 = cand_mu.iter().zip(&mu).zip(&g_mu).map(|((c, v), g)| g * (c - v)).sum();
            for (b, d) in layer_pairs(m) {
                ip += g_sigma[(b, d)] * (cand_sigma[(b, d)] - sigma[(b, d)]);
            }
            if ip <= 0.0 {
                // projected point does not move uphill; shrink the step
                beta *= config.backtrack;
                continue;
            }
            let cand_ll = block_loglik(&cand_mu, &cand_sigma, cells);
            if cand_ll >= ll + config.armijo * ip {
                let rel = (cand_ll - ll).abs() / ll.abs().max(1e-12);
                mu = cand_mu;
                sigma = cand_sigma;
                ll = cand_ll;
                accepted = true;
                if rel < config.delta1 {
                    return Ok(BlockUpdate {
                        mu,
                        sigma,
                        loglik: ll,
                        inner_iterations: iterations,
                        line_search_exhausted: false,
                    });
                }
                break;
            }
            beta *= config.backtrack;
        }
        if !accepted {
            exhausted = true;
            break;
        }
    }

    Ok(BlockUpdate { mu, sigma, loglik: ll, inner_iterations: iterations, line_search_exhausted: exhausted })
}

// ---------------------------------------------------------------------------
// Membership sweep
// ---------------------------------------------------------------------------

/// One greedy membership sweep against fixed parameters. All node argmaxes
/// are computed against the sweep-start snapshot and applied jointly; if the
/// joint application would decrease the total likelihood (possible under
/// simultaneous moves) the sweep falls back to a sequential pass, which is
/// monotone by construction. Ties break toward the smallest community index.
pub fn sweep_membership(
    theta: &BlockParams,
    bits: &PairBits,
    e: &Membership,
) -> Result<Membership> {
    let table = LogCellTable::new(theta);
    let mut cross = compute_cross_counts(bits, e)?;
    let n = e.n_nodes();
    let k = e.n_communities();

    let argmax_for = |node: usize, e_view: &Membership, cross_view: &crate::likelihood::NodeCrossCounts| -> usize {
        let cur = e_view.get(node);
        let mut best = cur;
        let mut best_delta = 0.0f64;
        for cand in 0..k {
            let delta = node_move_delta(node, cand, e_view, cross_view, &table);
            if delta > best_delta + 1e-12 || (delta > best_delta - 1e-12 && cand < best) {
                best_delta = delta.max(best_delta);
                best = cand;
            }
        }
        best
    };

    // Jacobi pass against the frozen snapshot.
    let targets: Vec<usize> = (0..n).into_par_iter().map(|i| argmax_for(i, e, &cross)).collect();
    let mut joint = e.clone();
    for (i, &t) in targets.iter().enumerate() {
        joint.set(i, t);
    }
    if joint == *e {
        return Ok(joint);
    }

    let before = crate::likelihood::total_loglik(theta, &compute_counts(bits, e)?);
    let after = crate::likelihood::total_loglik(theta, &compute_counts(bits, &joint)?);
    if after >= before - 1e-9 * before.abs().max(1.0) {
        return Ok(joint);
    }

    // Sequential fallback with incremental cross-count maintenance.
    let mut seq = e.clone();
    for i in 0..n {
        let cur = seq.get(i);
        let best = argmax_for(i, &seq, &cross);
        if best != cur {
            let delta = node_move_delta(i, best, &seq, &cross, &table);
            if delta >= -1e-12 {
                cross.move_node(bits, i, cur, best);
                seq.set(i, best);
            }
        }
    }
    Ok(seq)
}

// ---------------------------------------------------------------------------
// Full alternating fit
// ---------------------------------------------------------------------------

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-12)
}

/// Verify that every block satisfies the feasibility constraints.
pub(crate) fn check_feasibility(
    theta: &BlockParams,
    space: &ParameterSpace,
    pd_floor: f64,
) -> Result<()> {
    let (lo, hi) = space.mu_bounds();
    for (k, l) in blocks(theta.n_communities()) {
        for &v in theta.mu_block(k, l) {
            if v < lo - 1e-9 || v > hi + 1e-9 {
                return Err(Error::Numerical(format!("mu[{k}][{l}] escaped the box: {v}")));
            }
        }
        let sig = theta.sigma_block(k, l);
        let support = space.support(k, l);
        for (b, d) in layer_pairs(theta.n_layers()) {
            let v = sig[(b, d)];
            if !support.contains(b, d) && v != 0.0 {
                return Err(Error::Numerical(format!("sigma[{k}][{l}] off-support at ({b},{d})")));
            }
            if v.abs() > space.dep_bound + 1e-9 {
                return Err(Error::Numerical(format!("sigma[{k}][{l}] exceeds dependence bound")));
            }
        }
        if space.scenario == crate::model::Scenario::SparseCovariance
            && min_eigenvalue(sig) < pd_floor - 1e-6
        {
            return Err(Error::Numerical(format!("sigma[{k}][{l}] lost positive definiteness")));
        }
    }
    Ok(())
}

struct RunOutcome {
    theta: BlockParams,
    membership: Membership,
    trace: Vec<f64>,
    converged: bool,
    outer: usize,
}

fn run_once(
    bits: &PairBits,
    z0: &Membership,
    theta0: BlockParams,
    space: &ParameterSpace,
    config: &FitConfig,
) -> Result<RunOutcome> {
    let k = z0.n_communities();
    let mut z = z0.clone();
    let mut theta = theta0;
    let mut counts = compute_counts(bits, &z)?;
    let mut ll = crate::likelihood::total_loglik(&theta, &counts);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut outer = 0usize;

    for _ in 0..config.t2_max {
        outer += 1;
        // Theta phase: blocks are disjoint, update them in parallel.
        let block_list: Vec<(usize, usize)> = blocks(k).collect();
        let updates: Vec<Result<Option<BlockUpdate>>> = block_list
            .par_iter()
            .map(|&(a, b)| {
                if counts.pairs_in_block(a, b) == 0 {
                    return Ok(None); // frozen at initialization this round
                }
                let cells = counts.block_cells(a, b);
                update_theta_block(
                    theta.mu_block(a, b),
                    theta.sigma_block(a, b),
                    &cells,
                    space,
                    a,
                    b,
                    config,
                )
                .map(Some)
            })
            .collect();
        for (&(a, b), upd) in block_list.iter().zip(updates) {
            if let Some(u) = upd? {
                theta.set_block(a, b, &u.mu, u.sigma);
            }
        }
        check_feasibility(&theta, space, config.pd_floor)?;

        // Z phase.
        z = sweep_membership(&theta, bits, &z)?;
        counts = compute_counts(bits, &z)?;
        let new_ll = crate::likelihood::total_loglik(&theta, &counts);
        debug_assert!(
            new_ll >= ll - 1e-8 * ll.abs().max(1.0),
            "likelihood decreased: {ll} -> {new_ll}"
        );
        trace.push(new_ll);
        let rel = relative_change(new_ll, ll);
        ll = new_ll;
        if rel < config.delta2 {
            converged = true;
            break;
        }
    }
    Ok(RunOutcome { theta, membership: z, trace, converged, outer })
}

/// Alternating maximization of the constrained pairwise log-likelihood:
/// spectral initialization, then repeated (block updates, membership sweep)
/// rounds, restarted from `config.restarts` random parameter warm-ups; the
/// run with the highest final likelihood wins.
pub fn fit(
    net: &MultilayerNetwork,
    n_communities: usize,
    space: &ParameterSpace,
    config: &FitConfig,
) -> Result<FitResult> {
    let z0 = init_membership_spectral(net, n_communities, config.seed)?;
    fit_with_init(net, &z0, space, config)
}

/// [`fit`] with a caller-supplied starting membership instead of the
/// spectral initialization.
pub fn fit_with_init(
    net: &MultilayerNetwork,
    z0: &Membership,
    space: &ParameterSpace,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let n_communities = z0.n_communities();
    if n_communities == 0 {
        return Err(Error::Domain("need at least one community".into()));
    }
    if space.n_communities() != n_communities || space.n_layers() != net.n_layers() {
        return Err(Error::Dimension("parameter space does not match network/K".into()));
    }
    if z0.n_nodes() != net.n_nodes() {
        return Err(Error::Dimension("starting membership does not match network".into()));
    }
    let bits = net.pair_bits();
    let theta_init = init_theta(net, z0, space)?;

    let mut best: Option<(usize, f64, RunOutcome)> = None;
    for restart in 0..=config.restarts {
        let (z_start, theta0) = if restart == 0 {
            (z0.clone(), theta_init.clone())
        } else {
            // Random warm-up: draw a feasible random parameter set and let it
            // drive one membership sweep before the regular alternation, so
            // distinct warm-ups explore distinct basins; the winner is chosen
            // by final likelihood.
            let raw = random_theta(space, n_communities, net.n_layers(), config.seed, 1000 + restart as u64);
            let mut warm = raw.clone();
            for (a, b) in blocks(n_communities) {
                let sig = project_sigma_scenario(raw.sigma_block(a, b), space, a, b, config.pd_floor)?;
                let mu = project_mu(raw.mu_block(a, b), space);
                warm.set_block(a, b, &mu, sig.matrix);
            }
            let z_warm = sweep_membership(&warm, &bits, z0)?;
            (z_warm, warm)
        };
        let outcome = run_once(&bits, &z_start, theta0, space, config)?;
        let final_ll = *outcome.trace.last().unwrap();
        let better = match &best {
            None => true,
            Some((_, best_ll, _)) => final_ll > *best_ll + 1e-12,
        };
        if better {
            best = Some((restart, final_ll, outcome));
        }
    }
    let (restart_index, final_loglik, out) = best.unwrap();
    Ok(FitResult {
        theta_hat: out.theta,
        membership_hat: out.membership,
        loglik_trace: out.trace,
        converged: out.converged,
        outer_iterations: out.outer,
        restart_index,
        final_loglik,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{cell_probs, total_loglik};
    use crate::model::{Scenario, SupportSet};
    use crate::probkit::Corr;
    use approx::assert_abs_diff_eq;

    fn planted_cliques(n_per: usize, m: usize) -> MultilayerNetwork {
        let n = 2 * n_per;
        let mut net = MultilayerNetwork::empty(n, m);
        for b in 0..m {
            for i in 0..n {
                for j in (i + 1)..n {
                    if (i < n_per) == (j < n_per) {
                        net.set_edge(b, i, j, true);
                    }
                }
            }
        }
        net
    }

    #[test]
    fn spectral_recovers_disconnected_cliques() {
        let net = planted_cliques(6, 2);
        let z = init_membership_spectral(&net, 2, 0).unwrap();
        let truth = Membership::new(
            (0..12).map(|i| if i < 6 { 0 } else { 1 }).collect(),
            2,
        )
        .unwrap();
        assert_eq!(crate::metrics::err_pair_mismatch(&truth, &z).unwrap(), 0.0);
    }

    #[test]
    fn spectral_k1_single_community() {
        let net = planted_cliques(4, 2);
        let z = init_membership_spectral(&net, 1, 0).unwrap();
        assert!(z.as_slice().iter().all(|&c| c == 0));
    }

    fn default_space(k: usize, m: usize, rho: f64) -> ParameterSpace {
        ParameterSpace::with_uniform_support(
            0.1,
            (0.999 / rho).min(10.0).max(1.0 + 1e-9),
            rho,
            0.9,
            Scenario::SparseCovariance,
            SupportSet::full(m),
            k,
            m,
        )
        .unwrap()
    }

    #[test]
    fn init_theta_boundary_and_fallback() {
        let net = planted_cliques(5, 2);
        let rho = crate::model::empirical_density(&net).unwrap();
        let space = default_space(2, 2, rho);
        // membership with an empty cross block: all nodes in community 0
        let z = Membership::new(vec![0; 10], 2).unwrap();
        let theta = init_theta(&net, &z, &space).unwrap();
        let fallback = crate::probkit::phi_inv(rho);
        let (lo, hi) = space.mu_bounds();
        for &v in theta.mu_block(0, 1) {
            assert_abs_diff_eq!(v, fallback.clamp(lo, hi), epsilon = 1e-12);
        }
        // the dense within-block frequency is clamped into the box
        for &v in theta.mu_block(0, 0) {
            assert!(v <= hi + 1e-12 && v >= lo - 1e-12);
        }
    }

    #[test]
    fn block_update_stationary_at_matched_counts() {
        let m = 2;
        let mu = vec![-0.6, -0.8];
        let mut sigma = nalgebra::DMatrix::<f64>::identity(m, m);
        sigma[(0, 1)] = 0.3;
        sigma[(1, 0)] = 0.3;
        let n = 500.0;
        let c = cell_probs(mu[0], mu[1], Corr::new(0.3).unwrap());
        let cells = BlockCells {
            n_layers: m,
            n_pairs: n,
            cells: vec![[n * c.a1, n * c.a2, n * c.a3, n * c.a4]],
        };
        let space = default_space(1, 2, 0.25);
        let config = FitConfig::default();
        let upd = update_theta_block(&mu, &sigma, &cells, &space, 0, 0, &config).unwrap();
        for (a, b) in upd.mu.iter().zip(&mu) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(upd.sigma[(0, 1)], 0.3, epsilon = 1e-6);
    }

    #[test]
    fn block_update_matches_grid_search() {
        // K=1, M=2 synthetic counts; compare with a two-stage dense grid
        // search of the same constrained objective.
        let n = 400.0;
        let c = cell_probs(-0.7, -1.0, Corr::new(0.4).unwrap());
        // perturb the table so the optimum is not exactly the generator
        let cells = BlockCells {
            n_layers: 2,
            n_pairs: n,
            cells: vec![[n * c.a1 + 5.0, n * c.a2 - 2.0, n * c.a3 + 1.0, n * c.a4 - 4.0]],
        };
        let space = default_space(1, 2, 0.2);
        let mut config = FitConfig::default();
        config.delta1 = 1e-12;
        config.t1_max = 3000;
        let upd = update_theta_block(&[-0.5, -0.5], &nalgebra::DMatrix::identity(2, 2), &cells, &space, 0, 0, &config).unwrap();

        let eval = |m0: f64, m1: f64, s: f64| {
            let mut sig = nalgebra::DMatrix::<f64>::identity(2, 2);
            sig[(0, 1)] = s;
            sig[(1, 0)] = s;
            block_loglik(&[m0, m1], &sig, &cells)
        };
        let (lo, hi) = space.mu_bounds();
        let hi = hi.min(0.0);
        // coarse grid, then refine around the best cell
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
        let grid = |a: f64, b: f64, steps: usize| -> Vec<f64> {
            (0..=steps).map(|i| a + (b - a) * i as f64 / steps as f64).collect()
        };
        for &m0 in &grid(lo.max(-3.0), hi, 60) {
            for &m1 in &grid(lo.max(-3.0), hi, 60) {
                for &s in &grid(-0.89, 0.89, 60) {
                    let v = eval(m0, m1, s);
                    if v > best.0 {
                        best = (v, m0, m1, s);
                    }
                }
            }
        }
        let step = 0.06;
        let mut fine = best;
        for &m0 in &grid(best.1 - step, best.1 + step, 120) {
            for &m1 in &grid(best.2 - step, best.2 + step, 120) {
                for &s in &grid((best.3 - step).max(-0.9), (best.3 + step).min(0.9), 120) {
                    let v = eval(m0, m1, s);
                    if v > fine.0 {
                        fine = (v, m0, m1, s);
                    }
                }
            }
        }
        assert_abs_diff_eq!(upd.mu[0], fine.1, epsilon = 1e-3);
        assert_abs_diff_eq!(upd.mu[1], fine.2, epsilon = 1e-3);
        assert_abs_diff_eq!(upd.sigma[(0, 1)], fine.3, epsilon = 1e-3);
        assert!(upd.loglik >= fine.0 - 1e-6);
    }

    #[test]
    fn block_update_zeroes_off_support_start() {
        let space = ParameterSpace::with_uniform_support(
            0.1,
            3.0,
            0.3,
            0.9,
            Scenario::SparseCovariance,
            SupportSet::empty(),
            1,
            2,
        )
        .unwrap();
        let mut sig = nalgebra::DMatrix::<f64>::identity(2, 2);
        sig[(0, 1)] = 0.5;
        sig[(1, 0)] = 0.5;
        let cells = BlockCells {
            n_layers: 2,
            n_pairs: 10.0,
            cells: vec![[4.0, 2.0, 2.0, 2.0]],
        };
        let upd = update_theta_block(&[-0.5, -0.5], &sig, &cells, &space, 0, 0, &FitConfig::default()).unwrap();
        assert_eq!(upd.sigma[(0, 1)], 0.0);
    }

    fn assortative_theta(k: usize, m: usize) -> BlockParams {
        let mut theta = BlockParams::identity(k, m);
        for (a, b) in blocks(k) {
            let mu = vec![if a == b { 0.5 } else { -1.2 }; m];
            theta.set_block(a, b, &mu, nalgebra::DMatrix::identity(m, m));
        }
        theta
    }

    #[test]
    fn sweep_fixed_point_on_planted_partition() {
        let net = planted_cliques(6, 2);
        let truth = Membership::new((0..12).map(|i| (i >= 6) as usize).collect(), 2).unwrap();
        let theta = assortative_theta(2, 2);
        let bits = net.pair_bits();
        let out = sweep_membership(&theta, &bits, &truth).unwrap();
        assert_eq!(out, truth);
    }

    #[test]
    fn sweep_restores_single_flip() {
        let net = planted_cliques(6, 2);
        let mut start = Membership::new((0..12).map(|i| (i >= 6) as usize).collect(), 2).unwrap();
        start.set(3, 1);
        let theta = assortative_theta(2, 2);
        let out = sweep_membership(&theta, &net.pair_bits(), &start).unwrap();
        assert_eq!(out.get(3), 0);
    }

    #[test]
    fn sweep_k1_identity() {
        let net = planted_cliques(4, 2);
        let z = Membership::new(vec![0; 8], 1).unwrap();
        let theta = assortative_theta(1, 2);
        let out = sweep_membership(&theta, &net.pair_bits(), &z).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn fit_k1_converges_to_marginal() {
        let mut net = MultilayerNetwork::empty(30, 2);
        // density about 0.2
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for b in 0..2 {
            for i in 0..30 {
                for j in (i + 1)..30 {
                    if rng.random::<f64>() < 0.2 {
                        net.set_edge(b, i, j, true);
                    }
                }
            }
        }
        let rho = crate::model::empirical_density(&net).unwrap();
        let space = default_space(1, 2, rho);
        let mut config = FitConfig::default();
        config.restarts = 0;
        let result = fit(&net, 1, &space, &config).unwrap();
        assert!(result.converged);
        let expect = crate::probkit::phi_inv(rho);
        for &v in result.theta_hat.mu_block(0, 0) {
            assert!((v - expect).abs() < 0.15, "mu {v} vs {expect}");
        }
        // monotone trace
        for w in result.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn fit_permutation_equivariance() {
        // two cliques of unequal size; an exactly symmetric instance has
        // interchangeable communities and no stable labeling exists
        let n = 17;
        let split = 7;
        let mut net = MultilayerNetwork::empty(n, 3);
        for b in 0..3 {
            for i in 0..n {
                for j in (i + 1)..n {
                    if (i < split) == (j < split) {
                        net.set_edge(b, i, j, true);
                    }
                }
            }
        }
        let rho = crate::model::empirical_density(&net).unwrap();
        let space = default_space(2, 3, rho);
        let mut config = FitConfig::default();
        config.restarts = 1;
        config.t2_max = 10;
        let base = fit(&net, 2, &space, &config).unwrap();

        // reverse the node order
        let perm: Vec<usize> = (0..n).rev().collect();
        let permuted = net.permute_nodes(&perm).unwrap();
        let other = fit(&permuted, 2, &space, &config).unwrap();
        for i in 0..n {
            assert_eq!(other.membership_hat.get(i), base.membership_hat.get(perm[i]));
        }
        for (a, b) in base.loglik_trace.iter().zip(&other.loglik_trace) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-7 * a.abs().max(1.0));
        }
    }

    #[test]
    fn fit_monotone_and_feasible_on_random_instance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let (n, m, k) = (24, 3, 2);
        let mut net = MultilayerNetwork::empty(n, m);
        for b in 0..m {
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.25 {
                        net.set_edge(b, i, j, true);
                    }
                }
            }
        }
        let rho = crate::model::empirical_density(&net).unwrap();
        let space = default_space(k, m, rho);
        let mut config = FitConfig::default();
        config.restarts = 2;
        config.t2_max = 8;
        let result = fit(&net, k, &space, &config).unwrap();
        for w in result.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "trace decreased: {w:?}");
        }
        check_feasibility(&result.theta_hat, &space, config.pd_floor).unwrap();
        // final likelihood equals a fresh recomputation
        let counts = compute_counts(&net.pair_bits(), &result.membership_hat).unwrap();
        assert_abs_diff_eq!(
            result.final_loglik,
            total_loglik(&result.theta_hat, &counts),
            epsilon = 1e-9 * result.final_loglik.abs().max(1.0)
        );
    }
}
