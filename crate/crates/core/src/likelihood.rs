//! Pairwise log-likelihood machinery: joint edge-pattern counts, cell
//! probabilities, analytic gradients and per-node move deltas.
//!
//! Sufficient statistics are stored compactly: per unordered block, the pair
//! count, the per-layer edge totals and the per-layer-pair joint totals; the
//! 2x2 pattern table of any (block, b, d) derives from those in O(1).

use crate::error::{Error, Result};
use crate::model::{
    block_index, blocks, layer_pair_index, layer_pairs, n_blocks, n_layer_pairs, Membership,
    PairBits, SupportSet,
};
use crate::probkit::{self, Corr};
use nalgebra::DMatrix;

/// Cells are floored at this value inside logarithms and gradient
/// denominators; below the floor the floored objective is flat, so the
/// analytic gradient of a floored cell is zero.
pub const CELL_FLOOR: f64 = 1e-12;

/// The four joint probabilities of a pair of edge indicators:
/// a1 = P(1,1), a2 = P(1,0), a3 = P(0,1), a4 = P(0,0). Each is floored at
/// [`CELL_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProbs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl CellProbs {
    #[inline]
    pub fn as_array(&self) -> [f64; 4] {
        [self.a1, self.a2, self.a3, self.a4]
    }
}

/// Joint cell probabilities of `(A^(b), A^(d))` under means `(mu_b, mu_d)`
/// and latent correlation `sigma_bd`, by inclusion-exclusion on the
/// bivariate normal CDF.
pub fn cell_probs(mu_b: f64, mu_d: f64, sigma_bd: Corr) -> CellProbs {
    let f_b = probkit::phi(mu_b);
    let f_d = probkit::phi(mu_d);
    let a1 = probkit::phi2(mu_b, mu_d, sigma_bd.get());
    cells_from_marginals(f_b, f_d, a1)
}

#[inline]
fn cells_from_marginals(f_b: f64, f_d: f64, a1: f64) -> CellProbs {
    let a2 = (f_b - a1).max(0.0);
    let a3 = (f_d - a1).max(0.0);
    let a4 = (1.0 - f_b - f_d + a1).max(0.0);
    CellProbs {
        a1: a1.max(CELL_FLOOR),
        a2: a2.max(CELL_FLOOR),
        a3: a3.max(CELL_FLOOR),
        a4: a4.max(CELL_FLOOR),
    }
}

// ---------------------------------------------------------------------------
// Sufficient statistics
// ---------------------------------------------------------------------------

/// Joint edge-pattern counts per unordered community block and layer pair.
///
/// Convention: node pairs i < j are assigned to the unordered block
/// {e_i, e_j}; diagonal blocks count each pair once and off-diagonal blocks
/// aggregate both orientations into the single unordered block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCounts {
    n_communities: usize,
    n_layers: usize,
    n_pairs: Vec<u64>,
    ones: Vec<u64>,
    both: Vec<u64>,
}

impl BlockCounts {
    #[inline]
    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    #[inline]
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    /// Number of node pairs in the unordered block (k, l).
    #[inline]
    pub fn pairs_in_block(&self, k: usize, l: usize) -> u64 {
        self.n_pairs[block_index(k, l, self.n_communities)]
    }

    /// Number of edges of layer b within block (k, l).
    #[inline]
    pub fn layer_ones(&self, k: usize, l: usize, b: usize) -> u64 {
        self.ones[block_index(k, l, self.n_communities) * self.n_layers + b]
    }

    /// 2x2 pattern counts [n11, n10, n01, n00] for block (k, l) and layer
    /// pair (b, d), b < d.
    pub fn cells(&self, k: usize, l: usize, b: usize, d: usize) -> [u64; 4] {
        let blk = block_index(k, l, self.n_communities);
        let np = n_layer_pairs(self.n_layers);
        let n11 = self.both[blk * np + layer_pair_index(b, d, self.n_layers)];
        let ob = self.ones[blk * self.n_layers + b];
        let od = self.ones[blk * self.n_layers + d];
        let n = self.n_pairs[blk];
        // n + n11 >= ob + od by inclusion-exclusion, so this order never
        // underflows
        [n11, ob - n11, od - n11, n + n11 - ob - od]
    }

    /// Materialize the per-pair cell table of one block as floats.
    pub fn block_cells(&self, k: usize, l: usize) -> BlockCells {
        let m = self.n_layers;
        let mut cells = Vec::with_capacity(n_layer_pairs(m));
        for (b, d) in layer_pairs(m) {
            let c = self.cells(k, l, b, d);
            cells.push([c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64]);
        }
        BlockCells { n_layers: m, n_pairs: self.pairs_in_block(k, l) as f64, cells }
    }
}

/// Float-valued per-layer-pair cell tables of one block; the likelihood and
/// its gradients operate on these (fractional tables are meaningful, e.g.
/// expected proportions).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCells {
    pub n_layers: usize,
    /// Total weight (pair count) of the block.
    pub n_pairs: f64,
    /// Indexed by `layer_pair_index`; entries are [n11, n10, n01, n00].
    pub cells: Vec<[f64; 4]>,
}

impl BlockCells {
    /// Table with all mass on the (0,0) cell, for n pairs.
    pub fn all_zero_pattern(n_layers: usize, n: f64) -> Self {
        BlockCells {
            n_layers,
            n_pairs: n,
            cells: vec![[0.0, 0.0, 0.0, n]; n_layer_pairs(n_layers)],
        }
    }
}

/// Exact pattern counts over all node pairs i < j and layer pairs b < d.
pub fn compute_counts(bits: &PairBits, e: &Membership) -> Result<BlockCounts> {
    if e.n_nodes() != bits.n_nodes {
        return Err(Error::Dimension(format!(
            "membership covers {} nodes, network has {}",
            e.n_nodes(),
            bits.n_nodes
        )));
    }
    let n = bits.n_nodes;
    let m = bits.n_layers;
    let k = e.n_communities();
    let nb = n_blocks(k);
    let np = n_layer_pairs(m);
    let mut counts = BlockCounts {
        n_communities: k,
        n_layers: m,
        n_pairs: vec![0; nb],
        ones: vec![0; nb * m],
        both: vec![0; nb * np],
    };
    let mut set_bits: Vec<usize> = Vec::with_capacity(m);
    let mut pair = 0usize;
    for i in 0..n {
        let ei = e.get(i);
        for j in (i + 1)..n {
            let blk = block_index(ei, e.get(j), k);
            counts.n_pairs[blk] += 1;
            set_bits.clear();
            for (w, &word) in bits.pair_words(pair).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    set_bits.push(w * 64 + word.trailing_zeros() as usize);
                    word &= word - 1;
                }
            }
            for (t, &b) in set_bits.iter().enumerate() {
                counts.ones[blk * m + b] += 1;
                for &d in &set_bits[t + 1..] {
                    counts.both[blk * np + layer_pair_index(b, d, m)] += 1;
                }
            }
            pair += 1;
        }
    }
    Ok(counts)
}

// ---------------------------------------------------------------------------
// Log-likelihood and gradients
// ---------------------------------------------------------------------------

/// Pairwise log-likelihood contribution of one block:
/// sum over b < d and the four cells of count * log(cell probability).
pub fn block_loglik(mu: &[f64], sigma: &DMatrix<f64>, cells: &BlockCells) -> f64 {
    let m = cells.n_layers;
    debug_assert_eq!(mu.len(), m);
    let marg: Vec<f64> = mu.iter().map(|&v| probkit::phi(v)).collect();
    let mut total = 0.0;
    for (t, (b, d)) in layer_pairs(m).enumerate() {
        let n = &cells.cells[t];
        if n[0] + n[1] + n[2] + n[3] == 0.0 {
            continue;
        }
        let a1 = probkit::phi2(mu[b], mu[d], sigma[(b, d)]);
        let c = cells_from_marginals(marg[b], marg[d], a1);
        total += n[0] * c.a1.ln() + n[1] * c.a2.ln() + n[2] * c.a3.ln() + n[3] * c.a4.ln();
    }
    total
}

/// Total pairwise log-likelihood: sum of block contributions over unordered
/// blocks.
pub fn total_loglik(theta: &crate::model::BlockParams, counts: &BlockCounts) -> f64 {
    let mut total = 0.0;
    for (k, l) in blocks(theta.n_communities()) {
        if counts.pairs_in_block(k, l) == 0 {
            continue;
        }
        let cells = counts.block_cells(k, l);
        total += block_loglik(theta.mu_block(k, l), theta.sigma_block(k, l), &cells);
    }
    total
}

/// Analytic gradient of [`block_loglik`] in the block mean vector and the
/// (off-diagonal, support-masked) correlation entries. Matches central
/// finite differences of the floored objective.
pub fn grad_block(
    mu: &[f64],
    sigma: &DMatrix<f64>,
    cells: &BlockCells,
    support: &SupportSet,
) -> (Vec<f64>, DMatrix<f64>) {
    let m = cells.n_layers;
    let marg: Vec<f64> = mu.iter().map(|&v| probkit::phi(v)).collect();
    let dens: Vec<f64> = mu.iter().map(|&v| probkit::phi_pdf(v)).collect();
    let mut g_mu = vec![0.0; m];
    let mut g_sigma = DMatrix::<f64>::zeros(m, m);

    for (t, (b, d)) in layer_pairs(m).enumerate() {
        let n = &cells.cells[t];
        if n[0] + n[1] + n[2] + n[3] == 0.0 {
            continue;
        }
        let rho = sigma[(b, d)];
        let a1 = probkit::phi2(mu[b], mu[d], rho);
        let c = cells_from_marginals(marg[b], marg[d], a1);
        // weights n_c / alpha_c, zeroed where the floor is active
        let raw = [a1, marg[b] - a1, marg[d] - a1, 1.0 - marg[b] - marg[d] + a1];
        let mut w = [0.0f64; 4];
        for (i, (&nc, &ac)) in n.iter().zip(c.as_array().iter()).enumerate() {
            w[i] = if raw[i] > CELL_FLOOR { nc / ac } else { 0.0 };
        }
        let (da1_db, da1_dd, da1_dr) = probkit::phi2_grad(mu[b], mu[d], rho);
        // alpha partials in mu_b: (dA1, f_b - dA1, -dA1, dA1 - f_b)
        g_mu[b] += w[0] * da1_db + w[1] * (dens[b] - da1_db) - w[2] * da1_db
            + w[3] * (da1_db - dens[b]);
        g_mu[d] += w[0] * da1_dd - w[1] * da1_dd + w[2] * (dens[d] - da1_dd)
            + w[3] * (da1_dd - dens[d]);
        if support.contains(b, d) {
            let g = (w[0] - w[1] - w[2] + w[3]) * da1_dr;
            g_sigma[(b, d)] = g;
            g_sigma[(d, b)] = g;
        }
    }
    (g_mu, g_sigma)
}

// ---------------------------------------------------------------------------
// Node-level cross counts and move deltas
// ---------------------------------------------------------------------------

/// Per-node cross counts: for node i and partner community l, the pattern
/// statistics of the pairs {i, j} over partners j currently in community l.
///
/// Convention: summing `cross(i, l)` over nodes i in community k recovers the
/// block table once for k != l and twice for k == l (each within-block pair
/// is seen from both endpoints).
#[derive(Debug, Clone)]
pub struct NodeCrossCounts {
    n_nodes: usize,
    n_communities: usize,
    n_layers: usize,
    cnt: Vec<u32>,
    ones: Vec<u32>,
    both: Vec<u32>,
}

impl NodeCrossCounts {
    #[inline]
    fn np(&self) -> usize {
        n_layer_pairs(self.n_layers)
    }

    /// Pattern cells [n11, n10, n01, n00] of node `i` against community `l`
    /// at layer pair (b, d).
    pub fn cells(&self, i: usize, l: usize, b: usize, d: usize) -> [f64; 4] {
        let m = self.n_layers;
        let np = self.np();
        let base_o = (i * self.n_communities + l) * m;
        let base_b = (i * self.n_communities + l) * np;
        let n11 = self.both[base_b + layer_pair_index(b, d, m)] as f64;
        let ob = self.ones[base_o + b] as f64;
        let od = self.ones[base_o + d] as f64;
        let n = self.cnt[i * self.n_communities + l] as f64;
        [n11, ob - n11, od - n11, n - ob - od + n11]
    }

    pub fn partner_count(&self, i: usize, l: usize) -> u32 {
        self.cnt[i * self.n_communities + l]
    }

    /// Account for node `moved` changing community `from -> to`: every other
    /// node's table shifts the pair {i, moved} between partner communities.
    /// O(N M^2) per accepted move. `moved`'s own rows are unaffected.
    pub fn move_node(&mut self, bits: &PairBits, moved: usize, from: usize, to: usize) {
        if from == to {
            return;
        }
        let n = self.n_nodes;
        let k = self.n_communities;
        let m = self.n_layers;
        let np = self.np();
        let mut set_bits: Vec<usize> = Vec::with_capacity(m);
        for i in 0..n {
            if i == moved {
                continue;
            }
            let (a, b) = if i < moved { (i, moved) } else { (moved, i) };
            let pair = crate::model::node_pair_index(a, b, n);
            set_bits.clear();
            for (w, &word) in bits.pair_words(pair).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    set_bits.push(w * 64 + word.trailing_zeros() as usize);
                    word &= word - 1;
                }
            }
            self.cnt[i * k + from] -= 1;
            self.cnt[i * k + to] += 1;
            for (t, &bb) in set_bits.iter().enumerate() {
                self.ones[(i * k + from) * m + bb] -= 1;
                self.ones[(i * k + to) * m + bb] += 1;
                for &dd in &set_bits[t + 1..] {
                    let pi = layer_pair_index(bb, dd, m);
                    self.both[(i * k + from) * np + pi] -= 1;
                    self.both[(i * k + to) * np + pi] += 1;
                }
            }
        }
    }
}

/// Build the cross counts of every node against the current membership.
pub fn compute_cross_counts(bits: &PairBits, e: &Membership) -> Result<NodeCrossCounts> {
    if e.n_nodes() != bits.n_nodes {
        return Err(Error::Dimension("membership/network node count mismatch".into()));
    }
    let n = bits.n_nodes;
    let m = bits.n_layers;
    let k = e.n_communities();
    let np = n_layer_pairs(m);
    let mut cross = NodeCrossCounts {
        n_nodes: n,
        n_communities: k,
        n_layers: m,
        cnt: vec![0; n * k],
        ones: vec![0; n * k * m],
        both: vec![0; n * k * np],
    };
    let mut set_bits: Vec<usize> = Vec::with_capacity(m);
    let mut pair = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let (ei, ej) = (e.get(i), e.get(j));
            set_bits.clear();
            for (w, &word) in bits.pair_words(pair).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    set_bits.push(w * 64 + word.trailing_zeros() as usize);
                    word &= word - 1;
                }
            }
            for &(node, comm) in &[(i, ej), (j, ei)] {
                cross.cnt[node * k + comm] += 1;
                let base_o = (node * k + comm) * m;
                let base_b = (node * k + comm) * np;
                for (t, &b) in set_bits.iter().enumerate() {
                    cross.ones[base_o + b] += 1;
                    for &d in &set_bits[t + 1..] {
                        cross.both[base_b + layer_pair_index(b, d, m)] += 1;
                    }
                }
            }
            pair += 1;
        }
    }
    Ok(cross)
}

/// Precomputed log cell probabilities for every (block, layer pair, cell).
#[derive(Debug, Clone)]
pub struct LogCellTable {
    n_communities: usize,
    n_layers: usize,
    logs: Vec<[f64; 4]>,
}

impl LogCellTable {
    pub fn new(theta: &crate::model::BlockParams) -> Self {
        let k = theta.n_communities();
        let m = theta.n_layers();
        let np = n_layer_pairs(m);
        let mut logs = vec![[0.0; 4]; n_blocks(k) * np];
        for (a, b_comm) in blocks(k) {
            let blk = block_index(a, b_comm, k);
            let mu = theta.mu_block(a, b_comm);
            let sigma = theta.sigma_block(a, b_comm);
            let marg: Vec<f64> = mu.iter().map(|&v| probkit::phi(v)).collect();
            for (t, (b, d)) in layer_pairs(m).enumerate() {
                let a1 = probkit::phi2(mu[b], mu[d], sigma[(b, d)]);
                let c = cells_from_marginals(marg[b], marg[d], a1);
                logs[blk * np + t] = [c.a1.ln(), c.a2.ln(), c.a3.ln(), c.a4.ln()];
            }
        }
        LogCellTable { n_communities: k, n_layers: m, logs }
    }

    #[inline]
    pub fn logs(&self, k: usize, l: usize, pair: usize) -> &[f64; 4] {
        let np = n_layer_pairs(self.n_layers);
        &self.logs[block_index(k, l, self.n_communities) * np + pair]
    }
}

/// Change in the total pairwise log-likelihood from reassigning `node` to
/// community `k_to`, restricted to the terms involving that node; exact
/// against full recomputation.
pub fn node_move_delta(
    node: usize,
    k_to: usize,
    e: &Membership,
    cross: &NodeCrossCounts,
    table: &LogCellTable,
) -> f64 {
    let k_cur = e.get(node);
    if k_to == k_cur {
        return 0.0;
    }
    let k = cross.n_communities;
    let m = cross.n_layers;
    let np = n_layer_pairs(m);
    let mut delta = 0.0;
    for l in 0..k {
        if cross.partner_count(node, l) == 0 {
            continue;
        }
        let base_o = (node * k + l) * m;
        let base_b = (node * k + l) * np;
        let n = cross.cnt[node * k + l] as f64;
        for (t, (b, d)) in layer_pairs(m).enumerate() {
            let n11 = cross.both[base_b + t] as f64;
            let ob = cross.ones[base_o + b] as f64;
            let od = cross.ones[base_o + d] as f64;
            let cells = [n11, ob - n11, od - n11, n - ob - od + n11];
            let to = table.logs(k_to, l, t);
            let cur = table.logs(k_cur, l, t);
            for c in 0..4 {
                delta += cells[c] * (to[c] - cur[c]);
            }
        }
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockParams, MultilayerNetwork};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn corr(v: f64) -> Corr {
        Corr::new(v).unwrap()
    }

    #[test]
    fn cell_probs_trivial_cases() {
        let c = cell_probs(0.0, 0.0, corr(0.0));
        for v in c.as_array() {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }

        let c = cell_probs(0.0, 0.0, corr(0.5));
        assert_abs_diff_eq!(c.a1, 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.a2, 1.0 / 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.a3, 1.0 / 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.a4, 1.0 / 3.0, epsilon = 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mu_b: f64 = rng.random_range(-2.0..2.0);
            let mu_d: f64 = rng.random_range(-2.0..2.0);
            let c = cell_probs(mu_b, mu_d, corr(0.0));
            assert_abs_diff_eq!(c.a1, probkit::phi(mu_b) * probkit::phi(mu_d), epsilon = 1e-14);
        }
    }

    #[test]
    fn cell_probs_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let mu_b: f64 = rng.random_range(-2.5..2.5);
            let mu_d: f64 = rng.random_range(-2.5..2.5);
            let rho: f64 = rng.random_range(-0.95..0.95);
            // pre-flooring cells telescope to exactly one
            let f_b = probkit::phi(mu_b);
            let f_d = probkit::phi(mu_d);
            let a1 = probkit::phi2(mu_b, mu_d, rho);
            let raw_sum = a1 + (f_b - a1) + (f_d - a1) + (1.0 - f_b - f_d + a1);
            assert_abs_diff_eq!(raw_sum, 1.0, epsilon = 1e-12);
            // floored cells stay nonnegative and near-normalized
            let c = cell_probs(mu_b, mu_d, corr(rho));
            let s: f64 = c.as_array().iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 5e-12);
            assert!(c.as_array().iter().all(|&v| v >= CELL_FLOOR));
        }
    }

    fn hand_network() -> (MultilayerNetwork, Membership) {
        // N=3 single block, M=2; layer0 {(0,1)}, layer1 {(0,1),(0,2)}
        let mut net = MultilayerNetwork::empty(3, 2);
        net.set_edge(0, 0, 1, true);
        net.set_edge(1, 0, 1, true);
        net.set_edge(1, 0, 2, true);
        (net, Membership::new(vec![0, 0, 0], 1).unwrap())
    }

    #[test]
    fn counts_hand_enumeration() {
        let (net, e) = hand_network();
        let counts = compute_counts(&net.pair_bits(), &e).unwrap();
        // pairs: (0,1) pattern (1,1); (0,2) pattern (0,1); (1,2) pattern (0,0)
        assert_eq!(counts.cells(0, 0, 0, 1), [1, 0, 1, 1]);
        assert_eq!(counts.pairs_in_block(0, 0), 3);
    }

    #[test]
    fn counts_all_zero_network() {
        let net = MultilayerNetwork::empty(5, 3);
        let e = Membership::new(vec![0, 0, 1, 1, 1], 2).unwrap();
        let counts = compute_counts(&net.pair_bits(), &e).unwrap();
        assert_eq!(counts.cells(0, 0, 0, 1), [0, 0, 0, 1]);
        assert_eq!(counts.cells(0, 1, 1, 2), [0, 0, 0, 6]);
        assert_eq!(counts.cells(1, 1, 0, 2), [0, 0, 0, 3]);
    }

    /// Brute-force recount: iterate every pair and layer pair directly.
    fn brute_force_counts(
        net: &MultilayerNetwork,
        e: &Membership,
        k: usize,
        l: usize,
        b: usize,
        d: usize,
    ) -> [u64; 4] {
        let mut out = [0u64; 4];
        let n = net.n_nodes();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, c) = (e.get(i).min(e.get(j)), e.get(i).max(e.get(j)));
                if (a, c) != (k.min(l), k.max(l)) {
                    continue;
                }
                let x = net.edge(b, i, j);
                let y = net.edge(d, i, j);
                let idx = match (x, y) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                out[idx] += 1;
            }
        }
        out
    }

    #[test]
    fn counts_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, m, k) = (14, 5, 3);
        let mut net = MultilayerNetwork::empty(n, m);
        for b in 0..m {
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.3 {
                        net.set_edge(b, i, j, true);
                    }
                }
            }
        }
        let e = Membership::new((0..n).map(|_| rng.random_range(0..k)).collect(), k).unwrap();
        let counts = compute_counts(&net.pair_bits(), &e).unwrap();
        for (a, c) in blocks(k) {
            for (b, d) in layer_pairs(m) {
                assert_eq!(counts.cells(a, c, b, d), brute_force_counts(&net, &e, a, c, b, d));
            }
            let total: u64 = counts.cells(a, c, 0, 1).iter().sum();
            assert_eq!(total, counts.pairs_in_block(a, c));
        }
    }

    #[test]
    fn counts_reject_mismatched_membership() {
        let (net, _) = hand_network();
        let bad = Membership::new(vec![0, 0], 1).unwrap();
        assert!(compute_counts(&net.pair_bits(), &bad).is_err());
    }

    #[test]
    fn block_loglik_trivial_values() {
        // single (b,d), counts (1,1):1 only, theta = (0, 0, 0) -> log(1/4)
        let cells = BlockCells { n_layers: 2, n_pairs: 1.0, cells: vec![[1.0, 0.0, 0.0, 0.0]] };
        let sigma = DMatrix::identity(2, 2);
        let ll = block_loglik(&[0.0, 0.0], &sigma, &cells);
        assert_abs_diff_eq!(ll, 0.25f64.ln(), epsilon = 1e-12);

        // counts all at (0,0) with very negative mu: log alpha4 ~ 0
        let cells = BlockCells::all_zero_pattern(2, 50.0);
        let ll = block_loglik(&[-8.0, -8.0], &sigma, &cells);
        assert!(ll.abs() < 1e-6, "got {ll}");

        // M = 1: no layer pairs, zero log-likelihood
        let cells = BlockCells { n_layers: 1, n_pairs: 10.0, cells: vec![] };
        assert_eq!(block_loglik(&[0.3], &DMatrix::identity(1, 1), &cells), 0.0);
    }

    /// Direct per-edge evaluation of the pairwise log-likelihood.
    fn per_edge_loglik(net: &MultilayerNetwork, e: &Membership, theta: &BlockParams) -> f64 {
        let n = net.n_nodes();
        let m = net.n_layers();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let (k, l) = (e.get(i), e.get(j));
                let mu = theta.mu_block(k, l);
                let sigma = theta.sigma_block(k, l);
                for (b, d) in layer_pairs(m) {
                    let c = cell_probs(mu[b], mu[d], Corr::clamped(sigma[(b, d)]));
                    let v = match (net.edge(b, i, j), net.edge(d, i, j)) {
                        (true, true) => c.a1,
                        (true, false) => c.a2,
                        (false, true) => c.a3,
                        (false, false) => c.a4,
                    };
                    total += v.ln();
                }
            }
        }
        total
    }

    fn random_instance(seed: u64, n: usize, m: usize, k: usize) -> (MultilayerNetwork, Membership, BlockParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = MultilayerNetwork::empty(n, m);
        for b in 0..m {
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.35 {
                        net.set_edge(b, i, j, true);
                    }
                }
            }
        }
        let e = Membership::new((0..n).map(|_| rng.random_range(0..k)).collect(), k).unwrap();
        let mut theta = BlockParams::identity(k, m);
        for (a, c) in blocks(k) {
            let mu: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..0.5)).collect();
            let mut sig = DMatrix::<f64>::identity(m, m);
            for (b, d) in layer_pairs(m) {
                let v = rng.random_range(-0.25..0.25);
                sig[(b, d)] = v;
                sig[(d, b)] = v;
            }
            theta.set_block(a, c, &mu, sig);
        }
        (net, e, theta)
    }

    #[test]
    fn total_loglik_matches_per_edge_oracle() {
        for seed in [3, 4] {
            let (net, e, theta) = random_instance(seed, 12, 4, 2);
            let counts = compute_counts(&net.pair_bits(), &e).unwrap();
            let fast = total_loglik(&theta, &counts);
            let slow = per_edge_loglik(&net, &e, &theta);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-9 * slow.abs().max(1.0));
        }
    }

    #[test]
    fn grad_zero_at_matched_counts() {
        // counts exactly proportional to the cell probabilities -> score 0
        let m = 3;
        let mu = vec![-0.4, -0.9, -0.2];
        let mut sigma = DMatrix::<f64>::identity(m, m);
        sigma[(0, 1)] = 0.3;
        sigma[(1, 0)] = 0.3;
        let n = 1000.0;
        let mut cells = Vec::new();
        for (b, d) in layer_pairs(m) {
            let c = cell_probs(mu[b], mu[d], corr(sigma[(b, d)]));
            cells.push([n * c.a1, n * c.a2, n * c.a3, n * c.a4]);
        }
        let cells = BlockCells { n_layers: m, n_pairs: n, cells };
        let support = SupportSet::full(m);
        let (g_mu, g_sigma) = grad_block(&mu, &sigma, &cells, &support);
        for g in g_mu {
            assert!(g.abs() <= 1e-8 * n, "mu gradient {g}");
        }
        for (b, d) in layer_pairs(m) {
            assert!(g_sigma[(b, d)].abs() <= 1e-8 * n);
        }
    }

    #[test]
    fn grad_masks_off_support() {
        let (_, _, theta) = random_instance(7, 10, 4, 2);
        let cells = BlockCells {
            n_layers: 4,
            n_pairs: 10.0,
            cells: vec![[3.0, 3.0, 2.0, 2.0]; n_layer_pairs(4)],
        };
        let support = SupportSet::band(4, 1);
        let (_, g_sigma) =
            grad_block(theta.mu_block(0, 0), theta.sigma_block(0, 0), &cells, &support);
        for (b, d) in layer_pairs(4) {
            if !support.contains(b, d) {
                assert_eq!(g_sigma[(b, d)], 0.0);
            }
        }
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-6;
        for _ in 0..120 {
            let m = rng.random_range(2..5);
            let mu: Vec<f64> = (0..m).map(|_| rng.random_range(-1.6..0.2)).collect();
            let mut sigma = DMatrix::<f64>::identity(m, m);
            for (b, d) in layer_pairs(m) {
                let v: f64 = rng.random_range(-0.5..0.5);
                sigma[(b, d)] = v;
                sigma[(d, b)] = v;
            }
            let cells_v: Vec<[f64; 4]> = (0..n_layer_pairs(m))
                .map(|_| {
                    let mut c = [0.0f64; 4];
                    for v in c.iter_mut() {
                        *v = rng.random_range(0.0..30.0);
                    }
                    c
                })
                .collect();
            let cells = BlockCells { n_layers: m, n_pairs: 100.0, cells: cells_v };
            let support = SupportSet::full(m);
            let (g_mu, g_sigma) = grad_block(&mu, &sigma, &cells, &support);
            for b in 0..m {
                let mut mp = mu.clone();
                mp[b] += h;
                let mut mm = mu.clone();
                mm[b] -= h;
                let fd = (block_loglik(&mp, &sigma, &cells) - block_loglik(&mm, &sigma, &cells))
                    / (2.0 * h);
                let denom = g_mu[b].abs().max(1e-4);
                assert!(
                    ((g_mu[b] - fd) / denom).abs() < 1e-5,
                    "mu[{b}]: analytic {} vs fd {fd}",
                    g_mu[b]
                );
            }
            for (b, d) in layer_pairs(m) {
                let mut sp = sigma.clone();
                sp[(b, d)] += h;
                sp[(d, b)] += h;
                let mut sm = sigma.clone();
                sm[(b, d)] -= h;
                sm[(d, b)] -= h;
                let fd = (block_loglik(&mu, &sp, &cells) - block_loglik(&mu, &sm, &cells))
                    / (2.0 * h);
                let denom = g_sigma[(b, d)].abs().max(1e-4);
                assert!(
                    ((g_sigma[(b, d)] - fd) / denom).abs() < 1e-5,
                    "sigma[{b}{d}]: analytic {} vs fd {fd}",
                    g_sigma[(b, d)]
                );
            }
        }
    }

    #[test]
    fn cross_counts_aggregate_to_block_counts() {
        let (net, e, _) = random_instance(15, 13, 4, 3);
        let bits = net.pair_bits();
        let counts = compute_counts(&bits, &e).unwrap();
        let cross = compute_cross_counts(&bits, &e).unwrap();
        for (k, l) in blocks(3) {
            for (b, d) in layer_pairs(4) {
                let cells = counts.cells(k, l, b, d);
                let mut agg = [0.0f64; 4];
                for i in 0..net.n_nodes() {
                    if e.get(i) == k {
                        let c = cross.cells(i, l, b, d);
                        for t in 0..4 {
                            agg[t] += c[t];
                        }
                    }
                }
                let factor = if k == l { 2.0 } else { 1.0 };
                for t in 0..4 {
                    assert_eq!(agg[t], factor * cells[t] as f64, "block ({k},{l}) pair ({b},{d})");
                }
            }
        }
    }

    #[test]
    fn node_move_delta_matches_full_recomputation() {
        let (net, e, theta) = random_instance(31, 6, 2, 2);
        let bits = net.pair_bits();
        let counts = compute_counts(&bits, &e).unwrap();
        let cross = compute_cross_counts(&bits, &e).unwrap();
        let table = LogCellTable::new(&theta);
        let base = total_loglik(&theta, &counts);
        for node in 0..6 {
            for k_to in 0..2 {
                let delta = node_move_delta(node, k_to, &e, &cross, &table);
                if k_to == e.get(node) {
                    assert_eq!(delta, 0.0);
                    continue;
                }
                let mut moved = e.clone();
                moved.set(node, k_to);
                let moved_counts = compute_counts(&bits, &moved).unwrap();
                let full = total_loglik(&theta, &moved_counts);
                assert_abs_diff_eq!(base + delta, full, epsilon = 1e-9 * full.abs().max(1.0));
            }
        }
    }

    #[test]
    fn delta_consistency_many_random_moves() {
        let (net, mut e, theta) = random_instance(37, 18, 3, 3);
        let bits = net.pair_bits();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let table = LogCellTable::new(&theta);
        for _ in 0..200 {
            let counts = compute_counts(&bits, &e).unwrap();
            let cross = compute_cross_counts(&bits, &e).unwrap();
            let before = total_loglik(&theta, &counts);
            let node = rng.random_range(0..18);
            let k_to = rng.random_range(0..3);
            let delta = node_move_delta(node, k_to, &e, &cross, &table);
            e.set(node, k_to);
            let counts_after = compute_counts(&bits, &e).unwrap();
            let after = total_loglik(&theta, &counts_after);
            assert_abs_diff_eq!(before + delta, after, epsilon = 1e-8 * after.abs().max(1.0));
            // count conservation under the move
            let total: u64 = blocks(3).map(|(k, l)| counts_after.pairs_in_block(k, l)).sum();
            assert_eq!(total, 18 * 17 / 2);
        }
    }

    #[test]
    fn fisher_consistency_surface_small_grid() {
        // With counts at exact expected proportions, the block likelihood
        // peaks at the generating parameters (K=1, M=2).
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..5 {
            let mu_star = [rng.random_range(-1.2..-0.2), rng.random_range(-1.2..-0.2)];
            let s_star: f64 = rng.random_range(-0.5..0.5);
            let n = 1.0;
            let c = cell_probs(mu_star[0], mu_star[1], corr(s_star));
            let cells = BlockCells {
                n_layers: 2,
                n_pairs: n,
                cells: vec![[c.a1, c.a2, c.a3, c.a4]],
            };
            let eval = |m0: f64, m1: f64, s: f64| {
                let mut sig = DMatrix::<f64>::identity(2, 2);
                sig[(0, 1)] = s;
                sig[(1, 0)] = s;
                block_loglik(&[m0, m1], &sig, &cells)
            };
            let base = eval(mu_star[0], mu_star[1], s_star);
            let step = 0.05;
            for dm0 in [-step, 0.0, step] {
                for dm1 in [-step, 0.0, step] {
                    for ds in [-step, 0.0, step] {
                        let v = eval(mu_star[0] + dm0, mu_star[1] + dm1, (s_star + ds).clamp(-0.95, 0.95));
                        assert!(v <= base + 1e-12, "perturbed {v} > base {base}");
                    }
                }
            }
        }
    }
}
