//! Synthetic multilayer network generation under the latent Gaussian
//! construction: block means and inter-layer correlation matrices per
//! community block, plus an optional shared edge-correlation matrix inducing
//! intra-layer dependence. Includes the nine simulation presets and an
//! external Ising-model preset for mis-specification experiments.

use crate::error::{Error, Result};
use crate::linalg::{blocked_cholesky, lanczos_extremes, lower_tri_matvec, min_eigenvalue, psd_sqrt, SparseSym};
use crate::model::{
    blocks, layer_pairs, node_pair_index, BlockParams, Membership, MultilayerNetwork, SupportSet,
};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Smallest admissible eigenvalue of the repaired edge-correlation matrix.
pub const EDGE_CORR_FLOOR: f64 = 1e-4;

const SHRINK_MAX_ROUNDS: usize = 5;
const LANCZOS_STEPS: usize = 140;

/// Sparse symmetric edge-correlation matrix over edge indices, unit diagonal
/// implied. Values are post-repair.
#[derive(Debug, Clone)]
pub struct EdgeCorrelation {
    entries: SparseSym,
    pub target_density: f64,
    /// Cumulative off-diagonal shrink factor applied by the PSD repair
    /// (1.0 when the nominal draw was already feasible).
    pub shrink_applied: f64,
    /// Smallest eigenvalue after repair (Lanczos estimate; exact for small
    /// dimensions).
    pub lambda_min: f64,
    pub seed: u64,
}

impl EdgeCorrelation {
    pub fn identity(dim: usize) -> Self {
        EdgeCorrelation {
            entries: SparseSym { dim, ..Default::default() },
            target_density: 0.0,
            shrink_applied: 1.0,
            lambda_min: 1.0,
            seed: 0,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.entries.dim
    }

    pub fn nnz_offdiag(&self) -> usize {
        self.entries.vals.len()
    }

    pub fn is_identity(&self) -> bool {
        self.entries.vals.is_empty()
    }

    /// Correlation between edges p and q (0 when not stored).
    pub fn lookup(&self, p: usize, q: usize) -> f64 {
        if p == q {
            return 1.0;
        }
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        for t in 0..self.entries.vals.len() {
            if self.entries.rows[t] as usize == a && self.entries.cols[t] as usize == b {
                return self.entries.vals[t];
            }
        }
        0.0
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.entries.vals.len()).map(|t| {
            (self.entries.rows[t] as usize, self.entries.cols[t] as usize, self.entries.vals[t])
        })
    }

    /// Densify to a full matrix (memory permitting) for factorization.
    fn to_dense(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let bytes = n.checked_mul(n).and_then(|x| x.checked_mul(8));
        match bytes {
            Some(b) if b <= 6 * 1024 * 1024 * 1024 => {}
            _ => {
                return Err(Error::Numerical(format!(
                    "edge-correlation dimension {n} too large for dense factorization"
                )))
            }
        }
        let mut dense = vec![0.0f64; n * n];
        for i in 0..n {
            dense[i * n + i] = 1.0;
        }
        for (r, c, v) in self.iter_entries() {
            dense[r * n + c] = v;
            dense[c * n + r] = v;
        }
        Ok(dense)
    }
}

/// Sample a sparse symmetric edge-correlation matrix with per-row expected
/// off-diagonal density `tau` and values uniform over `corr_range`, then
/// repair to positive definiteness by uniform off-diagonal shrinkage
/// (factor (1 - floor)/(1 - lambda_min), at most five rounds).
pub fn build_edge_correlation(
    n_edges: usize,
    tau: f64,
    corr_range: (f64, f64),
    seed: u64,
) -> Result<EdgeCorrelation> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0,1], got {tau}")));
    }
    let (lo, hi) = corr_range;
    if !(lo <= hi && lo > -1.0 && hi < 1.0) {
        return Err(Error::Domain(format!("corr_range must lie inside (-1,1), got [{lo}, {hi}]")));
    }
    if tau == 0.0 || n_edges < 2 {
        return Ok(EdgeCorrelation::identity(n_edges));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = SparseSym { dim: n_edges, ..Default::default() };
    for p in 0..n_edges {
        for q in (p + 1)..n_edges {
            if rng.random::<f64>() < tau {
                let v = if hi > lo { rng.random_range(lo..hi) } else { lo };
                entries.rows.push(p as u32);
                entries.cols.push(q as u32);
                entries.vals.push(v);
            }
        }
    }
    if entries.vals.is_empty() {
        return Ok(EdgeCorrelation::identity(n_edges));
    }

    let mut shrink = 1.0f64;
    let mut lambda_min = 0.0f64;
    let mut feasible = false;
    for _ in 0..SHRINK_MAX_ROUNDS {
        let (lo_o, _) = lanczos_extremes(&entries, LANCZOS_STEPS, seed ^ 0xA5A5_5A5A);
        lambda_min = 1.0 + lo_o;
        if lambda_min >= EDGE_CORR_FLOOR {
            feasible = true;
            break;
        }
        let zeta = (1.0 - EDGE_CORR_FLOOR) / (1.0 - lambda_min);
        entries.scale(zeta);
        shrink *= zeta;
    }
    if !feasible {
        // one final check after the last shrink
        let (lo_o, _) = lanczos_extremes(&entries, LANCZOS_STEPS, seed ^ 0xA5A5_5A5A);
        lambda_min = 1.0 + lo_o;
        if lambda_min < EDGE_CORR_FLOOR * 0.99 {
            return Err(Error::Numerical(format!(
                "edge-correlation repair failed after {SHRINK_MAX_ROUNDS} rounds: \
                 lambda_min = {lambda_min:.3e}, total shrink {shrink:.3e}"
            )));
        }
    }
    Ok(EdgeCorrelation { entries, target_density: tau, shrink_applied: shrink, lambda_min, seed })
}

// ---------------------------------------------------------------------------
// Generation configuration
// ---------------------------------------------------------------------------

/// Per-block mean sampling rule: within-community and between-community
/// normal means with a shared standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuScheme {
    pub diag_mean: f64,
    pub offdiag_mean: f64,
    pub sd: f64,
}

/// Rule producing each block's inter-layer correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SigmaScheme {
    Identity,
    /// First off-diagonal entries drawn Uniform(-half_width, half_width).
    FirstOffDiag { half_width: f64 },
    /// Band |b - d| <= width with entries N(base - slope*|b-d|, sd^2).
    BandNormal { width: usize, base: f64, slope: f64, sd: f64 },
    /// `count` random upper-triangular positions per block, magnitudes
    /// Uniform(lo, hi) with random sign.
    RandomSupport { count: usize, lo: f64, hi: f64 },
    /// Every off-diagonal entry set to `value` (full support).
    FullConstant { value: f64 },
}

/// External multilayer Ising generator (mis-specification preset): per edge
/// position, layer indicators follow a Gibbs chain with conditional logit
/// `u + within_bonus * 1{same community} + coupling * sum(other layers)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingScheme {
    pub u: f64,
    pub within_bonus: f64,
    pub coupling: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EdgeModel {
    /// The latent Gaussian construction of this crate's estimator.
    Probit,
    /// External model; the probit parameters stored in the ground truth are
    /// nominal.
    Ising(IsingScheme),
}

/// Full generation configuration. Identical configs (including seed) produce
/// bitwise-identical networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub n_communities: usize,
    pub community_probs: Vec<f64>,
    pub mu_scheme: MuScheme,
    pub sigma_scheme: SigmaScheme,
    pub edge_model: EdgeModel,
    /// Edge-correlation density in [0, 1].
    pub tau: f64,
    pub corr_range: (f64, f64),
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 || self.n_layers < 1 || self.n_communities < 1 {
            return Err(Error::Config("need N >= 2, M >= 1, K >= 1".into()));
        }
        if self.community_probs.len() != self.n_communities {
            return Err(Error::Config("community_probs length must equal K".into()));
        }
        let sum: f64 = self.community_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.community_probs.iter().any(|&p| p < 0.0) {
            return Err(Error::Config("community_probs must be a probability vector".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0,1], got {}", self.tau)));
        }
        Ok(())
    }
}

/// Everything the generator knows about an emitted network.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub membership: Membership,
    pub theta: BlockParams,
    pub edge_corr: EdgeCorrelation,
}

impl GroundTruth {
    /// Off-diagonal supports of the true correlation blocks.
    pub fn supports(&self) -> Vec<SupportSet> {
        let k = self.theta.n_communities();
        let m = self.theta.n_layers();
        blocks(k)
            .map(|(a, b)| {
                let sig = self.theta.sigma_block(a, b);
                SupportSet::from_pairs(
                    layer_pairs(m).filter(|&(x, y)| sig[(x, y)].abs() > 1e-12),
                    m,
                )
                .expect("pairs in range")
            })
            .collect()
    }

    /// Largest off-diagonal correlation magnitude over blocks.
    pub fn max_dependence(&self) -> f64 {
        let k = self.theta.n_communities();
        let m = self.theta.n_layers();
        let mut best = 0.0f64;
        for (a, b) in blocks(k) {
            let sig = self.theta.sigma_block(a, b);
            for (x, y) in layer_pairs(m) {
                best = best.max(sig[(x, y)].abs());
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

fn sample_membership(config: &GenConfig, rng: &mut ChaCha8Rng) -> Membership {
    let mut cumulative = Vec::with_capacity(config.n_communities);
    let mut acc = 0.0;
    for &p in &config.community_probs {
        acc += p;
        cumulative.push(acc);
    }
    let assign: Vec<usize> = (0..config.n_nodes)
        .map(|_| {
            let u: f64 = rng.random();
            cumulative.iter().position(|&c| u < c).unwrap_or(config.n_communities - 1)
        })
        .collect();
    Membership::new(assign, config.n_communities).expect("labels in range")
}

/// Uniform off-diagonal shrinkage of a block correlation matrix until its
/// smallest eigenvalue clears the floor.
fn repair_block_sigma(sig: &mut DMatrix<f64>) {
    let m = sig.nrows();
    for _ in 0..SHRINK_MAX_ROUNDS {
        let lmin = min_eigenvalue(sig);
        if lmin >= EDGE_CORR_FLOOR {
            return;
        }
        let zeta = (1.0 - EDGE_CORR_FLOOR) / (1.0 - lmin);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    sig[(i, j)] *= zeta;
                }
            }
        }
    }
}

fn sample_theta(config: &GenConfig, rng: &mut ChaCha8Rng) -> BlockParams {
    let k = config.n_communities;
    let m = config.n_layers;
    let mut theta = BlockParams::identity(k, m);
    let ms = &config.mu_scheme;
    for (a, b) in blocks(k) {
        let mean = if a == b { ms.diag_mean } else { ms.offdiag_mean };
        let normal = rand_distr::Normal::new(mean, ms.sd).expect("valid normal");
        let mu: Vec<f64> = (0..m).map(|_| normal.sample(rng)).collect();
        let mut sig = DMatrix::<f64>::identity(m, m);
        match &config.sigma_scheme {
            SigmaScheme::Identity => {}
            SigmaScheme::FirstOffDiag { half_width } => {
                if *half_width > 0.0 {
                    for x in 0..m.saturating_sub(1) {
                        let v = rng.random_range(-half_width..*half_width);
                        sig[(x, x + 1)] = v;
                        sig[(x + 1, x)] = v;
                    }
                }
            }
            SigmaScheme::BandNormal { width, base, slope, sd } => {
                for (x, y) in layer_pairs(m) {
                    if y - x <= *width {
                        let dist = rand_distr::Normal::new(base - slope * (y - x) as f64, *sd)
                            .expect("valid normal");
                        let v = dist.sample(rng);
                        sig[(x, y)] = v;
                        sig[(y, x)] = v;
                    }
                }
            }
            SigmaScheme::RandomSupport { count, lo, hi } => {
                let mut positions: Vec<(usize, usize)> = layer_pairs(m).collect();
                positions.shuffle(rng);
                positions.truncate(*count);
                for (x, y) in positions {
                    let mag = if hi > lo { rng.random_range(*lo..*hi) } else { *lo };
                    let v = if rng.random::<bool>() { mag } else { -mag };
                    sig[(x, y)] = v;
                    sig[(y, x)] = v;
                }
            }
            SigmaScheme::FullConstant { value } => {
                for (x, y) in layer_pairs(m) {
                    sig[(x, y)] = *value;
                    sig[(y, x)] = *value;
                }
            }
        }
        repair_block_sigma(&mut sig);
        theta.set_block(a, b, &mu, sig);
    }
    theta
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw a network and its ground truth from the configuration.
/// Deterministic given the config; layer sampling uses per-layer random
/// streams so thread scheduling never changes the output.
pub fn sample_network(config: &GenConfig) -> Result<(MultilayerNetwork, GroundTruth)> {
    config.validate()?;
    let membership = sample_membership(config, &mut rng_stream(config.seed, 0));
    let theta = sample_theta(config, &mut rng_stream(config.seed, 1));

    match &config.edge_model {
        EdgeModel::Probit => sample_probit(config, membership, theta),
        EdgeModel::Ising(scheme) => sample_ising(config, membership, theta, *scheme),
    }
}

fn sample_probit(
    config: &GenConfig,
    membership: Membership,
    theta: BlockParams,
) -> Result<(MultilayerNetwork, GroundTruth)> {
    let n = config.n_nodes;
    let m = config.n_layers;
    let n_pairs = n * (n - 1) / 2;
    let edge_corr = build_edge_correlation(n_pairs, config.tau, config.corr_range, config.seed ^ 0x5EED)?;

    // u[b][p]: per-layer latent edge variables with shared correlation R.
    let mut latent: Vec<Vec<f64>> = Vec::with_capacity(m);
    if edge_corr.is_identity() {
        latent = (0..m)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng_stream(config.seed, 10 + b as u64);
                let normal = rand_distr::StandardNormal;
                (0..n_pairs).map(|_| normal.sample(&mut rng)).collect()
            })
            .collect();
    } else {
        let mut dense = edge_corr.to_dense()?;
        blocked_cholesky(&mut dense, n_pairs).map_err(|e| {
            Error::Numerical(format!("edge-correlation factorization failed post repair: {e}"))
        })?;
        let factor = dense;
        latent.par_extend((0..m).into_par_iter().map(|b| {
            let mut rng = rng_stream(config.seed, 10 + b as u64);
            let normal = rand_distr::StandardNormal;
            let z: Vec<f64> = (0..n_pairs).map(|_| normal.sample(&mut rng)).collect();
            let mut u = vec![0.0f64; n_pairs];
            lower_tri_matvec(&factor, n_pairs, &z, &mut u);
            u
        }));
    }

    // Per-block square roots of the inter-layer correlation matrices.
    let k = config.n_communities;
    let sqrts: Vec<DMatrix<f64>> =
        blocks(k).map(|(a, b)| psd_sqrt(theta.sigma_block(a, b))).collect();

    let mut net = MultilayerNetwork::empty(n, m);
    let mut u_edge = vec![0.0f64; m];
    let mut eps = vec![0.0f64; m];
    for i in 0..n {
        for j in (i + 1)..n {
            let p = node_pair_index(i, j, n);
            for b in 0..m {
                u_edge[b] = latent[b][p];
            }
            let blk = crate::model::block_index(membership.get(i), membership.get(j), k);
            let sq = &sqrts[blk];
            for b in 0..m {
                let mut s = 0.0;
                for d in 0..m {
                    s += sq[(b, d)] * u_edge[d];
                }
                eps[b] = s;
            }
            let mu = theta.mu_block(membership.get(i), membership.get(j));
            for b in 0..m {
                if mu[b] + eps[b] > 0.0 {
                    net.set_edge(b, i, j, true);
                }
            }
        }
    }

    Ok((net, GroundTruth { membership, theta, edge_corr }))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sample_ising(
    config: &GenConfig,
    membership: Membership,
    theta: BlockParams,
    scheme: IsingScheme,
) -> Result<(MultilayerNetwork, GroundTruth)> {
    let n = config.n_nodes;
    let m = config.n_layers;
    let mut rng = rng_stream(config.seed, 5);
    let mut net = MultilayerNetwork::empty(n, m);
    let mut state = vec![false; m];
    for i in 0..n {
        for j in (i + 1)..n {
            let field =
                scheme.u + if membership.get(i) == membership.get(j) { scheme.within_bonus } else { 0.0 };
            for s in state.iter_mut() {
                *s = rng.random::<f64>() < sigmoid(field);
            }
            for _ in 0..scheme.sweeps {
                for b in 0..m {
                    let others = state.iter().enumerate().filter(|&(d, &v)| d != b && v).count();
                    let p = sigmoid(field + scheme.coupling * others as f64);
                    state[b] = rng.random::<f64>() < p;
                }
            }
            for (b, &s) in state.iter().enumerate() {
                if s {
                    net.set_edge(b, i, j, true);
                }
            }
        }
    }
    let n_pairs = n * (n - 1) / 2;
    Ok((net, GroundTruth { membership, theta, edge_corr: EdgeCorrelation::identity(n_pairs) }))
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Knob grids of the nine simulation presets.
pub const PRESET_KNOBS: [(usize, &str, &[f64]); 9] = [
    (1, "sigma", &[0.0, 0.2, 0.4, 0.6]),
    (2, "v", &[0.5, 0.8, 1.2]),
    (3, "a", &[1.0, 2.0, 3.0, 4.0]),
    (4, "n", &[80.0, 120.0, 160.0, 180.0]),
    (5, "m", &[10.0, 20.0, 30.0, 40.0]),
    (6, "gamma", &[0.05, 0.10, 0.15]),
    (7, "tau", &[0.0, 0.3, 0.6]),
    (8, "u", &[-5.0, -5.5, -6.0]),
    (9, "m", &[20.0, 25.0, 30.0]),
];

fn knob_in_grid(example: usize, value: f64) -> Result<()> {
    let (_, _, grid) = PRESET_KNOBS
        .iter()
        .find(|(id, _, _)| *id == example)
        .ok_or_else(|| Error::Config(format!("unknown example id {example}")))?;
    if grid.iter().any(|&g| (g - value).abs() < 1e-9) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "knob value {value} not in example {example}'s grid {grid:?}"
        )))
    }
}

/// The simulation presets. `knob_name` must match the example's knob; the
/// value must lie on its grid.
pub fn preset(example: usize, knob_name: &str, value: f64, seed: u64) -> Result<GenConfig> {
    let expected = PRESET_KNOBS
        .iter()
        .find(|(id, _, _)| *id == example)
        .map(|(_, name, _)| *name)
        .ok_or_else(|| Error::Config(format!("unknown example id {example}")))?;
    if knob_name != expected {
        return Err(Error::Config(format!(
            "example {example} takes knob '{expected}', got '{knob_name}'"
        )));
    }
    knob_in_grid(example, value)?;

    let uniform5 = vec![0.2; 5];
    let mu_v = |v: f64| MuScheme { diag_mean: -v, offdiag_mean: -v - 0.3, sd: 0.1 };
    let base = GenConfig {
        n_nodes: 100,
        n_layers: 20,
        n_communities: 5,
        community_probs: uniform5.clone(),
        mu_scheme: mu_v(0.5),
        sigma_scheme: SigmaScheme::FirstOffDiag { half_width: 0.2 },
        edge_model: EdgeModel::Probit,
        tau: 0.2,
        corr_range: (-0.5, 0.5),
        seed,
    };

    let config = match example {
        1 => GenConfig {
            mu_scheme: MuScheme { diag_mean: -0.5, offdiag_mean: -0.8, sd: 0.1 },
            sigma_scheme: SigmaScheme::FirstOffDiag { half_width: value },
            ..base
        },
        2 => GenConfig { mu_scheme: mu_v(value), ..base },
        3 => GenConfig {
            sigma_scheme: SigmaScheme::BandNormal {
                width: value as usize,
                base: 0.25,
                slope: 0.05,
                sd: 0.1,
            },
            ..base
        },
        4 => GenConfig { n_nodes: value as usize, ..base },
        5 => GenConfig { n_layers: value as usize, ..base },
        6 => {
            let g = value;
            GenConfig {
                community_probs: vec![g, g, g, 0.4 - g, 0.6 - 2.0 * g],
                ..base
            }
        }
        7 => GenConfig { tau: value, corr_range: (-0.2, 0.2), ..base },
        8 => GenConfig {
            n_nodes: 200,
            n_layers: 8,
            edge_model: EdgeModel::Ising(IsingScheme {
                u: value,
                within_bonus: 2.0,
                coupling: 0.3,
                sweeps: 100,
            }),
            sigma_scheme: SigmaScheme::FullConstant { value: 0.2 },
            tau: 0.0,
            ..base
        },
        9 => {
            let m = value as usize;
            GenConfig {
                n_layers: m,
                sigma_scheme: SigmaScheme::RandomSupport { count: m / 2, lo: 0.2, hi: 0.6 },
                corr_range: (-0.3, 0.3),
                ..base
            }
        }
        _ => unreachable!(),
    };
    Ok(config)
}
