//! Core data types: multilayer networks, memberships, block parameters, the
//! feasible parameter space, and the projection operators used by the
//! estimator.

use crate::error::{Error, Result, Violation};
use crate::linalg::{floor_eigenvalues, min_eigenvalue};
use crate::probkit;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

// ---------------------------------------------------------------------------
// Index helpers for unordered block pairs (k <= l) and layer pairs (b < d).
// ---------------------------------------------------------------------------

/// Number of unordered community blocks for `k` communities.
#[inline]
pub fn n_blocks(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Flat index of the unordered block (k, l); arguments may come in any order.
#[inline]
pub fn block_index(k: usize, l: usize, n_comm: usize) -> usize {
    let (a, b) = if k <= l { (k, l) } else { (l, k) };
    a * n_comm - a * (a + 1) / 2 + b
}

/// Number of unordered layer pairs b < d.
#[inline]
pub fn n_layer_pairs(m: usize) -> usize {
    m * (m.saturating_sub(1)) / 2
}

/// Flat index of the layer pair (b, d) with b < d.
#[inline]
pub fn layer_pair_index(b: usize, d: usize, m: usize) -> usize {
    debug_assert!(b < d && d < m);
    b * (2 * m - b - 1) / 2 + (d - b - 1)
}

/// Iterate all (b, d) layer pairs with b < d in flat-index order.
pub fn layer_pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |b| (b + 1..m).map(move |d| (b, d)))
}

/// Iterate all unordered blocks (k, l) with k <= l in flat-index order.
pub fn blocks(n_comm: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_comm).flat_map(move |k| (k..n_comm).map(move |l| (k, l)))
}

/// Number of node pairs i < j.
#[inline]
pub fn n_node_pairs(n: usize) -> usize {
    n * (n.saturating_sub(1)) / 2
}

/// Flat index of the node pair (i, j) with i < j.
#[inline]
pub fn node_pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

// ---------------------------------------------------------------------------
// MultilayerNetwork
// ---------------------------------------------------------------------------

/// A multilayer network: `n_layers` symmetric binary adjacency matrices with
/// zero diagonal over a shared node set.
///
/// Layers are stored densely (one byte per entry) so that structural
/// violations in external data remain representable; [`validate_network`]
/// performs the full check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultilayerNetwork {
    n_nodes: usize,
    layers: Vec<Vec<u8>>,
}

impl MultilayerNetwork {
    /// All-zero network.
    pub fn empty(n_nodes: usize, n_layers: usize) -> Self {
        MultilayerNetwork { n_nodes, layers: vec![vec![0u8; n_nodes * n_nodes]; n_layers] }
    }

    /// Wrap dense row-major layers. Shapes are checked; content is not (use
    /// [`validate_network`]).
    pub fn from_layers(n_nodes: usize, layers: Vec<Vec<u8>>) -> Result<Self> {
        for (b, layer) in layers.iter().enumerate() {
            if layer.len() != n_nodes * n_nodes {
                let rows = layer.len() / n_nodes.max(1);
                return Err(Error::InvalidNetwork(vec![Violation::LayerShape {
                    layer: b,
                    rows,
                    cols: n_nodes,
                }]));
            }
        }
        Ok(MultilayerNetwork { n_nodes, layers })
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn edge(&self, layer: usize, i: usize, j: usize) -> bool {
        self.layers[layer][i * self.n_nodes + j] != 0
    }

    /// Set A[i][j] = A[j][i] = value in the given layer.
    pub fn set_edge(&mut self, layer: usize, i: usize, j: usize, value: bool) {
        let n = self.n_nodes;
        let v = value as u8;
        self.layers[layer][i * n + j] = v;
        self.layers[layer][j * n + i] = v;
    }

    /// Raw entry access, for validation and I/O.
    #[inline]
    pub fn raw(&self, layer: usize, i: usize, j: usize) -> u8 {
        self.layers[layer][i * self.n_nodes + j]
    }

    #[cfg(test)]
    pub(crate) fn raw_layer_mut(&mut self, layer: usize) -> &mut [u8] {
        &mut self.layers[layer]
    }

    /// Total edge count over all layers (each undirected edge counted once).
    pub fn total_edges(&self) -> usize {
        let mut c = 0usize;
        for b in 0..self.n_layers() {
            for i in 0..self.n_nodes {
                for j in (i + 1)..self.n_nodes {
                    c += self.edge(b, i, j) as usize;
                }
            }
        }
        c
    }

    /// Per-pair layer bitmasks, for the counting kernels.
    pub fn pair_bits(&self) -> PairBits {
        let n = self.n_nodes;
        let m = self.n_layers();
        let words = m.div_ceil(64);
        let n_pairs = n_node_pairs(n);
        let mut bits = vec![0u64; n_pairs * words];
        for b in 0..m {
            let (w, s) = (b / 64, b % 64);
            let layer = &self.layers[b];
            let mut p = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    if layer[i * n + j] != 0 {
                        bits[p * words + w] |= 1u64 << s;
                    }
                    p += 1;
                }
            }
        }
        PairBits { n_nodes: n, n_layers: m, words, bits }
    }

    /// Sum of adjacency matrices over layers, as a dense float matrix.
    pub fn aggregate_adjacency(&self) -> DMatrix<f64> {
        let n = self.n_nodes;
        let mut agg = DMatrix::<f64>::zeros(n, n);
        for layer in &self.layers {
            for i in 0..n {
                for j in 0..n {
                    agg[(i, j)] += layer[i * n + j] as f64;
                }
            }
        }
        agg
    }

    /// Extract the sub-network consisting of the given layers, in order.
    pub fn extract_layers(&self, which: &[usize]) -> Result<Self> {
        let mut layers = Vec::with_capacity(which.len());
        for &b in which {
            if b >= self.n_layers() {
                return Err(Error::Dimension(format!(
                    "layer {b} out of range (network has {})",
                    self.n_layers()
                )));
            }
            layers.push(self.layers[b].clone());
        }
        Ok(MultilayerNetwork { n_nodes: self.n_nodes, layers })
    }

    /// Relabel nodes: node i of the result is node `perm[i]` of the input.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes;
        if perm.len() != n {
            return Err(Error::Dimension("permutation length != node count".into()));
        }
        let mut out = MultilayerNetwork::empty(n, self.n_layers());
        for b in 0..self.n_layers() {
            for i in 0..n {
                for j in 0..n {
                    out.layers[b][i * n + j] = self.layers[b][perm[i] * n + perm[j]];
                }
            }
        }
        Ok(out)
    }
}

/// Per-node-pair layer bitmasks: word `w` of pair `p` holds layers
/// 64w..64w+63.
#[derive(Debug, Clone)]
pub struct PairBits {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub words: usize,
    bits: Vec<u64>,
}

impl PairBits {
    #[inline]
    pub fn pair_words(&self, pair: usize) -> &[u64] {
        &self.bits[pair * self.words..(pair + 1) * self.words]
    }
}

/// Check symmetry, binarity, zero diagonal and consistent shapes; every
/// violation is reported with its layer and indices.
pub fn validate_network(net: &MultilayerNetwork) -> Result<()> {
    let n = net.n_nodes();
    let mut violations = Vec::new();
    for b in 0..net.n_layers() {
        for i in 0..n {
            if net.raw(b, i, i) != 0 {
                violations.push(Violation::Diagonal { layer: b, i });
            }
            for j in (i + 1)..n {
                let x = net.raw(b, i, j);
                let y = net.raw(b, j, i);
                if x > 1 {
                    violations.push(Violation::NotBinary { layer: b, i, j });
                }
                if y > 1 {
                    violations.push(Violation::NotBinary { layer: b, i: j, j: i });
                }
                if x != y {
                    violations.push(Violation::Symmetry { layer: b, i, j });
                }
            }
        }
    }
    if violations.is_empty() { Ok(()) } else { Err(Error::InvalidNetwork(violations)) }
}

/// Empirical edge density: the fraction of present edges over all
/// `N(N-1)/2 * M` slots.
pub fn empirical_density(net: &MultilayerNetwork) -> Result<f64> {
    let n = net.n_nodes();
    if n < 2 {
        return Err(Error::Domain("empirical_density requires at least 2 nodes".into()));
    }
    let m = net.n_layers().max(1);
    Ok(2.0 * net.total_edges() as f64 / (n as f64 * (n as f64 - 1.0) * m as f64))
}

// ---------------------------------------------------------------------------
// Membership
// ---------------------------------------------------------------------------

/// Assignment of each node to one of `n_communities` communities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    assign: Vec<usize>,
    n_communities: usize,
}

impl Membership {
    pub fn new(assign: Vec<usize>, n_communities: usize) -> Result<Self> {
        if n_communities == 0 {
            return Err(Error::Domain("need at least one community".into()));
        }
        if let Some(&bad) = assign.iter().find(|&&c| c >= n_communities) {
            return Err(Error::Domain(format!(
                "community label {bad} out of range [0, {n_communities})"
            )));
        }
        Ok(Membership { assign, n_communities })
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.assign.len()
    }

    #[inline]
    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    #[inline]
    pub fn get(&self, node: usize) -> usize {
        self.assign[node]
    }

    pub fn set(&mut self, node: usize, community: usize) {
        debug_assert!(community < self.n_communities);
        self.assign[node] = community;
    }

    #[inline]
    pub fn as_slice(&self) -> &[usize] {
        &self.assign
    }

    pub fn community_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_communities];
        for &c in &self.assign {
            sizes[c] += 1;
        }
        sizes
    }

    /// Apply a label permutation: new label of a node in community c is
    /// `perm[c]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_communities {
            return Err(Error::Dimension("label permutation length != community count".into()));
        }
        Membership::new(self.assign.iter().map(|&c| perm[c]).collect(), self.n_communities)
    }
}

// ---------------------------------------------------------------------------
// BlockParams
// ---------------------------------------------------------------------------

/// Block-level parameters: per-layer means for each unordered community block
/// and an inter-layer correlation matrix per block. Blocks (k, l) and (l, k)
/// alias the same storage.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    n_communities: usize,
    n_layers: usize,
    /// Block-major: mu[block * n_layers + b].
    mu: Vec<f64>,
    sigma: Vec<DMatrix<f64>>,
}

impl BlockParams {
    /// Means all zero, correlation matrices all identity.
    pub fn identity(n_communities: usize, n_layers: usize) -> Self {
        let nb = n_blocks(n_communities);
        BlockParams {
            n_communities,
            n_layers,
            mu: vec![0.0; nb * n_layers],
            sigma: vec![DMatrix::identity(n_layers, n_layers); nb],
        }
    }

    #[inline]
    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    #[inline]
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    #[inline]
    pub fn mu_block(&self, k: usize, l: usize) -> &[f64] {
        let b = block_index(k, l, self.n_communities);
        &self.mu[b * self.n_layers..(b + 1) * self.n_layers]
    }

    #[inline]
    pub fn mu_block_mut(&mut self, k: usize, l: usize) -> &mut [f64] {
        let b = block_index(k, l, self.n_communities);
        &mut self.mu[b * self.n_layers..(b + 1) * self.n_layers]
    }

    #[inline]
    pub fn sigma_block(&self, k: usize, l: usize) -> &DMatrix<f64> {
        &self.sigma[block_index(k, l, self.n_communities)]
    }

    #[inline]
    pub fn sigma_block_mut(&mut self, k: usize, l: usize) -> &mut DMatrix<f64> {
        let b = block_index(k, l, self.n_communities);
        &mut self.sigma[b]
    }

    pub fn set_block(&mut self, k: usize, l: usize, mu: &[f64], sigma: DMatrix<f64>) {
        assert_eq!(mu.len(), self.n_layers);
        assert_eq!(sigma.nrows(), self.n_layers);
        let b = block_index(k, l, self.n_communities);
        self.mu[b * self.n_layers..(b + 1) * self.n_layers].copy_from_slice(mu);
        self.sigma[b] = sigma;
    }

    /// Structural checks: unit diagonals, symmetry and positive definiteness
    /// of every correlation block.
    pub fn validate(&self) -> Result<()> {
        for (k, l) in blocks(self.n_communities) {
            let s = self.sigma_block(k, l);
            if s.nrows() != self.n_layers || s.ncols() != self.n_layers {
                return Err(Error::Dimension(format!("sigma[{k}][{l}] has wrong shape")));
            }
            for b in 0..self.n_layers {
                if (s[(b, b)] - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain(format!(
                        "sigma[{k}][{l}] diagonal entry {b} is {}, expected 1",
                        s[(b, b)]
                    )));
                }
                for d in 0..b {
                    if (s[(b, d)] - s[(d, b)]).abs() > 1e-9 {
                        return Err(Error::Domain(format!("sigma[{k}][{l}] not symmetric")));
                    }
                }
            }
            if min_eigenvalue(s) <= 0.0 {
                return Err(Error::Domain(format!("sigma[{k}][{l}] not positive definite")));
            }
        }
        Ok(())
    }

    /// Relabel community indices: block (k, l) of the result is block
    /// (perm[k], perm[l]) of the input.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_communities {
            return Err(Error::Dimension("label permutation length != community count".into()));
        }
        let mut out = BlockParams::identity(self.n_communities, self.n_layers);
        for (k, l) in blocks(self.n_communities) {
            let mu = self.mu_block(perm[k], perm[l]).to_vec();
            let sig = self.sigma_block(perm[k], perm[l]).clone();
            out.set_block(k, l, &mu, sig);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Support sets and the parameter space
// ---------------------------------------------------------------------------

/// Off-diagonal support of a block correlation matrix: the set of layer pairs
/// (b, d), b < d, allowed to be nonzero. Diagonal entries are always in the
/// support and are not stored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SupportSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl SupportSet {
    pub fn empty() -> Self {
        SupportSet::default()
    }

    pub fn full(n_layers: usize) -> Self {
        SupportSet { pairs: layer_pairs(n_layers).collect() }
    }

    /// Band support: pairs with |b - d| <= width.
    pub fn band(n_layers: usize, width: usize) -> Self {
        SupportSet { pairs: layer_pairs(n_layers).filter(|&(b, d)| d - b <= width).collect() }
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(
        pairs: I,
        n_layers: usize,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (b, d) in pairs {
            if b == d {
                continue; // diagonal is implicit
            }
            let (b, d) = if b < d { (b, d) } else { (d, b) };
            if d >= n_layers {
                return Err(Error::Dimension(format!(
                    "support pair ({b}, {d}) out of range for {n_layers} layers"
                )));
            }
            set.insert((b, d));
        }
        Ok(SupportSet { pairs: set })
    }

    /// True when (b, d) may be nonzero; diagonal positions always are.
    #[inline]
    pub fn contains(&self, b: usize, d: usize) -> bool {
        if b == d {
            return true;
        }
        let key = if b < d { (b, d) } else { (d, b) };
        self.pairs.contains(&key)
    }

    pub fn insert(&mut self, b: usize, d: usize) {
        if b != d {
            self.pairs.insert(if b < d { (b, d) } else { (d, b) });
        }
    }

    /// Number of off-diagonal stored pairs (the paper-style s counts one per
    /// unordered pair).
    pub fn n_offdiag(&self) -> usize {
        self.pairs.len()
    }

    pub fn iter_offdiag(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.pairs.is_subset(&other.pairs)
    }
}

/// Shape-constraint scenario for the block correlation matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Support constraint applies to the correlation matrix itself.
    SparseCovariance,
    /// Support constraint applies to its inverse (handled approximately).
    SparsePrecision,
}

/// The feasible parameter space: density box constants, dependence bound,
/// scenario and per-block support sets.
#[derive(Debug, Clone)]
pub struct ParameterSpace {
    pub c_l: f64,
    pub c_u: f64,
    pub rho: f64,
    pub dep_bound: f64,
    pub scenario: Scenario,
    supports: Vec<SupportSet>,
    n_communities: usize,
    n_layers: usize,
}

impl ParameterSpace {
    pub fn new(
        c_l: f64,
        c_u: f64,
        rho: f64,
        dep_bound: f64,
        scenario: Scenario,
        supports: Vec<SupportSet>,
        n_communities: usize,
        n_layers: usize,
    ) -> Result<Self> {
        if !(c_l > 0.0 && c_l < 1.0 && c_u > 1.0) {
            return Err(Error::Domain(format!("need 0 < c_l < 1 < c_u, got c_l={c_l}, c_u={c_u}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain(format!("density rho must lie in (0,1), got {rho}")));
        }
        if c_u * rho > 1.0 {
            return Err(Error::Domain(format!(
                "c_u * rho = {} exceeds 1; cap c_u at 1/rho",
                c_u * rho
            )));
        }
        if !(dep_bound > 0.0 && dep_bound < 1.0) {
            return Err(Error::Domain(format!("dependence bound must lie in (0,1), got {dep_bound}")));
        }
        if supports.len() != n_blocks(n_communities) {
            return Err(Error::Dimension(format!(
                "expected {} support sets, got {}",
                n_blocks(n_communities),
                supports.len()
            )));
        }
        for s in &supports {
            for (b, d) in s.iter_offdiag() {
                if d >= n_layers {
                    return Err(Error::Dimension(format!(
                        "support pair ({b}, {d}) out of range for {n_layers} layers"
                    )));
                }
            }
        }
        Ok(ParameterSpace {
            c_l,
            c_u,
            rho,
            dep_bound,
            scenario,
            supports,
            n_communities,
            n_layers,
        })
    }

    /// Convenience constructor with the same support in every block.
    pub fn with_uniform_support(
        c_l: f64,
        c_u: f64,
        rho: f64,
        dep_bound: f64,
        scenario: Scenario,
        support: SupportSet,
        n_communities: usize,
        n_layers: usize,
    ) -> Result<Self> {
        let supports = vec![support; n_blocks(n_communities)];
        ParameterSpace::new(c_l, c_u, rho, dep_bound, scenario, supports, n_communities, n_layers)
    }

    #[inline]
    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    #[inline]
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    #[inline]
    pub fn support(&self, k: usize, l: usize) -> &SupportSet {
        &self.supports[block_index(k, l, self.n_communities)]
    }

    pub fn supports(&self) -> &[SupportSet] {
        &self.supports
    }

    pub fn set_supports(&mut self, supports: Vec<SupportSet>) -> Result<()> {
        if supports.len() != n_blocks(self.n_communities) {
            return Err(Error::Dimension("wrong number of support sets".into()));
        }
        self.supports = supports;
        Ok(())
    }

    /// The box for each mean coordinate: [Phi^-1(c_l rho), Phi^-1(c_u rho)].
    /// The upper bound is +inf when c_u * rho reaches 1.
    pub fn mu_bounds(&self) -> (f64, f64) {
        let lo = probkit::phi_inv((self.c_l * self.rho).clamp(1e-300, 1.0 - 1e-16));
        let hi_p = self.c_u * self.rho;
        let hi = if hi_p >= 1.0 - 1e-12 { f64::INFINITY } else { probkit::phi_inv(hi_p) };
        (lo, hi)
    }
}

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

/// Euclidean projection of a mean vector onto the density box: each
/// coordinate clamps to [Phi^-1(c_l rho), Phi^-1(c_u rho)].
pub fn project_mu(mu_block: &[f64], space: &ParameterSpace) -> Vec<f64> {
    let (lo, hi) = space.mu_bounds();
    mu_block.iter().map(|&v| v.clamp(lo, hi)).collect()
}

/// Result of a correlation-matrix projection.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub matrix: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set for the sparse-precision scenario, whose projection is heuristic.
    pub approximate: bool,
}

const DYKSTRA_MAX_ITER: usize = 200;
const DYKSTRA_TOL: f64 = 1e-10;

/// Elementwise projection onto {unit diagonal, zero off-support,
/// |off-diagonal| <= d_bound}.
fn box_project(m: &DMatrix<f64>, support: &SupportSet, d_bound: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let v = if support.contains(j, i) { m[(i, j)].clamp(-d_bound, d_bound) } else { 0.0 };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn check_symmetric(s: &DMatrix<f64>) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::Domain("projection input must be square".into()));
    }
    for i in 0..s.nrows() {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-10 {
                return Err(Error::Domain(format!(
                    "projection input not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Projection onto the sparse-covariance constraint set
/// {X : X >= pd_floor I, diag = 1, Supp(X) = support, |off-diag| <= d_bound}
/// via Dykstra's alternating projections. The returned matrix satisfies the
/// diagonal/support/bound constraints exactly and the eigenvalue floor within
/// 1e-10.
pub fn project_sigma(
    s: &DMatrix<f64>,
    support: &SupportSet,
    d_bound: f64,
    pd_floor: f64,
) -> Result<ProjectionOutcome> {
    check_symmetric(s)?;
    let n = s.nrows();
    let mut x = 0.5 * (s + s.transpose());
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut converged = false;
    let mut iterations = 0usize;

    for it in 0..DYKSTRA_MAX_ITER {
        iterations = it + 1;
        let y = floor_eigenvalues(&(&x + &p), pd_floor);
        p = &x + &p - &y;
        let x_new = box_project(&(&y + &q), support, d_bound);
        q = &y + &q - &x_new;
        let diff = (&x_new - &x).norm();
        x = x_new;
        if diff < DYKSTRA_TOL {
            converged = true;
            break;
        }
    }

    // The Dykstra limit is taken after the box step, so diagonal/support/
    // bound constraints hold exactly; polish the eigenvalue floor with plain
    // alternating projections if the stop tolerance left it slightly short.
    let mut polish = 0usize;
    while min_eigenvalue(&x) < pd_floor - 1e-10 && polish < 300 {
        x = box_project(&floor_eigenvalues(&x, pd_floor), support, d_bound);
        polish += 1;
    }
    if min_eigenvalue(&x) < pd_floor - 1e-10 {
        converged = false;
    }

    Ok(ProjectionOutcome { matrix: x, converged, iterations, approximate: false })
}

/// Approximate projection for the sparse-precision scenario: invert, zero the
/// off-support entries of the inverse, re-invert, rescale to unit diagonal,
/// clamp. Flagged approximate; the exact projection has no known
/// construction.
pub fn project_sigma_precision(
    s: &DMatrix<f64>,
    support: &SupportSet,
    d_bound: f64,
    pd_floor: f64,
) -> Result<ProjectionOutcome> {
    check_symmetric(s)?;
    let n = s.nrows();
    let sym = floor_eigenvalues(&(0.5 * (s + s.transpose())), pd_floor.max(1e-8));
    let inv = sym
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("precision projection: matrix not invertible".into()))?;
    let mut masked = inv;
    for i in 0..n {
        for j in 0..i {
            if !support.contains(j, i) {
                masked[(i, j)] = 0.0;
                masked[(j, i)] = 0.0;
            } else {
                let v = 0.5 * (masked[(i, j)] + masked[(j, i)]);
                masked[(i, j)] = v;
                masked[(j, i)] = v;
            }
        }
    }
    let masked = floor_eigenvalues(&masked, 1e-8);
    let back = masked
        .try_inverse()
        .ok_or_else(|| Error::Numerical("precision projection: masked inverse singular".into()))?;
    // Rescale to unit diagonal, then clamp magnitudes.
    let mut out = back.clone();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = back[(i, j)] / (back[(i, i)] * back[(j, j)]).sqrt();
        }
    }
    for i in 0..n {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            let v = v.clamp(-d_bound, d_bound);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    let out = if min_eigenvalue(&out) < pd_floor {
        floor_eigenvalues(&out, pd_floor)
    } else {
        out
    };
    Ok(ProjectionOutcome { matrix: out, converged: true, iterations: 1, approximate: true })
}

/// Scenario dispatch used by the estimator.
pub fn project_sigma_scenario(
    s: &DMatrix<f64>,
    space: &ParameterSpace,
    k: usize,
    l: usize,
    pd_floor: f64,
) -> Result<ProjectionOutcome> {
    match space.scenario {
        Scenario::SparseCovariance => {
            project_sigma(s, space.support(k, l), space.dep_bound, pd_floor)
        }
        Scenario::SparsePrecision => {
            project_sigma_precision(s, space.support(k, l), space.dep_bound, pd_floor)
        }
    }
}
