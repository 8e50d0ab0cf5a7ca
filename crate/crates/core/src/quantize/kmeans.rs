use log::warn;

use crate::error::{Error, Result};
use crate::numerics::{RngStream, StreamId, StreamPurpose};

pub const KMEANS_MAX_ITER: usize = 300;
/// Bounds on independent k-means++ seedings per compression.
pub const KMEANS_RESTARTS: (usize, usize) = (4, 64);

/// Restarts for `n` values and `k` clusters: as many as fit a fixed work
/// budget of `n·k` seeding steps, within [`KMEANS_RESTARTS`].
fn restarts_for(n: usize, k: usize) -> usize {
    const WORK_BUDGET: usize = 50_000_000;
    (WORK_BUDGET / (n * k).max(1)).clamp(KMEANS_RESTARTS.0, KMEANS_RESTARTS.1)
}

/// Cluster centers of an offline-compressed weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centers: Vec<f64>,
    center_bits: u32,
}

impl Codebook {
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn center_bits(&self) -> u32 {
        self.center_bits
    }

    /// Replaces each index by its center value.
    pub fn decode(&self, assignments: &[usize]) -> Vec<f64> {
        assignments.iter().map(|&i| self.centers[i]).collect()
    }
}

/// Extra storage for the codebook, `k · center_bits`.
pub fn codebook_memory_bits(codebook: &Codebook) -> u64 {
    codebook.k() as u64 * u64::from(codebook.center_bits)
}

#[derive(Debug, Clone)]
pub struct LloydOutcome {
    /// Non-empty cluster centers, ascending.
    pub centers: Vec<f64>,
    /// Cluster index of every input value (input order).
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each iteration.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
}

impl LloydOutcome {
    pub fn cost(&self) -> f64 {
        *self.cost_trace.last().unwrap_or(&0.0)
    }
}

/// Compresses `weights` to `k` shared values.
///
/// Lloyd's algorithm in one dimension, seeded with k-means++ from `seed`,
/// stops at an assignment fixpoint or after [`KMEANS_MAX_ITER`] iterations.
/// Lloyd fixpoints are then polished with single-point boundary transfers and
/// Lloyd is resumed, until neither step changes the partition. The best of
/// several seedings is kept (see [`KMEANS_RESTARTS`]).
/// Centers are then rounded to `center_bits` of precision on a uniform grid
/// of `2^center_bits` values over `[-1, 1]`. Empty clusters are dropped and
/// centers that collide after rounding are merged, so the codebook can hold
/// fewer than `k` entries.
pub fn kmeans_compress(weights: &[f64], k: usize, center_bits: u32, seed: u64) -> Result<(Codebook, Vec<usize>)> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("cannot cluster an empty weight list".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if !(1..=64).contains(&center_bits) {
        return Err(Error::InvalidArgument(format!(
            "center precision must be 1..=64 bits, got {center_bits}"
        )));
    }
    if let Some(bad) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::InvalidValue(format!("non-finite weight {bad}")));
    }

    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| weights[i]).collect();

    let distinct = 1 + sorted.windows(2).filter(|w| w[0] != w[1]).count();
    let k = if k > distinct {
        warn!("k = {k} exceeds the {distinct} distinct weight values; using k = {distinct}");
        distinct
    } else {
        k
    };

    let outcome = if k == distinct {
        exact_partition(&sorted)
    } else {
        let mut best: Option<LloydOutcome> = None;
        for restart in 0..restarts_for(sorted.len(), k) {
            let mut rng = RngStream::new(seed, StreamId::new(StreamPurpose::KMeans, 0, 0, restart));
            let init = kmeans_pp_init(&sorted, k, &mut rng);
            let run = cluster_sorted(&sorted, init, k);
            if best.as_ref().is_none_or(|b| run.cost() < b.cost()) {
                best = Some(run);
            }
        }
        best.expect("at least one restart")
    };

    // Round centers, merge collisions, and map clusters onto the merged list.
    let rounded: Vec<f64> = outcome
        .centers
        .iter()
        .map(|&c| round_center(c, center_bits))
        .collect();
    let mut centers = rounded.clone();
    centers.dedup();
    let cluster_to_center: Vec<usize> = rounded
        .iter()
        .map(|c| centers.partition_point(|x| x < c))
        .collect();

    let mut assignments = vec![0; weights.len()];
    for (pos, &orig) in order.iter().enumerate() {
        assignments[orig] = cluster_to_center[outcome.assignments[pos]];
    }
    Ok((Codebook { centers, center_bits }, assignments))
}

fn round_center(c: f64, bits: u32) -> f64 {
    let c = c.clamp(-1.0, 1.0);
    if bits > 52 {
        return c;
    }
    let steps = ((1u64 << bits) - 1) as f64;
    let j = ((c + 1.0) / 2.0 * steps).round();
    (-1.0 + 2.0 * j / steps).clamp(-1.0, 1.0)
}

/// One cluster per distinct value; `sorted` must be ascending.
fn exact_partition(sorted: &[f64]) -> LloydOutcome {
    let mut centers: Vec<f64> = sorted.to_vec();
    centers.dedup();
    let mut assignments = Vec::with_capacity(sorted.len());
    let mut j = 0;
    for &x in sorted {
        while centers[j] != x {
            j += 1;
        }
        assignments.push(j);
    }
    LloydOutcome {
        centers,
        assignments,
        cost_trace: vec![0.0],
        iterations: 0,
    }
}

/// k-means++ seeding over ascending `sorted`: the first center is drawn
/// uniformly, each further one with probability proportional to the squared
/// distance to the nearest chosen center.
fn kmeans_pp_init(sorted: &[f64], k: usize, rng: &mut RngStream) -> Vec<f64> {
    let n = sorted.len();
    let mut centers = Vec::with_capacity(k);
    let first = sorted[rng.below(n)];
    centers.push(first);
    let mut d2: Vec<f64> = sorted.iter().map(|x| (x - first).powi(2)).collect();

    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if acc > target && d > 0.0 {
                pick = i;
                break;
            }
        }
        // Rounding in the running sum can land on a zero-weight tail.
        while d2[pick] == 0.0 {
            pick -= 1;
        }
        let c = sorted[pick];
        centers.push(c);
        // Points that move to the new center form a contiguous run around it.
        d2[pick] = 0.0;
        for i in (0..pick).rev() {
            let d = (sorted[i] - c).powi(2);
            if d >= d2[i] {
                break;
            }
            d2[i] = d;
        }
        for i in pick + 1..n {
            let d = (sorted[i] - c).powi(2);
            if d >= d2[i] {
                break;
            }
            d2[i] = d;
        }
    }
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    centers
}

/// Lloyd iterations on ascending `sorted` from the given initial centers.
///
/// Each point joins the nearest center (the lower one on an exact midpoint
/// tie); centers move to their cluster means; empty clusters are removed.
pub fn lloyd_1d(sorted: &[f64], mut centers: Vec<f64>, max_iter: usize) -> LloydOutcome {
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    centers.sort_by(f64::total_cmp);
    centers.dedup();

    let mut assignments = assign(sorted, &centers);
    let mut cost_trace = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        // Update step: means of non-empty clusters.
        let mut sums = vec![0.0; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (&x, &a) in sorted.iter().zip(&assignments) {
            sums[a] += x;
            counts[a] += 1;
        }
        let mut remap = vec![usize::MAX; centers.len()];
        let mut next = Vec::with_capacity(centers.len());
        for j in 0..centers.len() {
            if counts[j] > 0 {
                remap[j] = next.len();
                next.push(sums[j] / counts[j] as f64);
            }
        }
        for a in assignments.iter_mut() {
            *a = remap[*a];
        }
        centers = next;
        cost_trace.push(cost(sorted, &centers, &assignments));

        let reassigned = assign(sorted, &centers);
        if reassigned == assignments {
            break;
        }
        assignments = reassigned;
    }

    LloydOutcome {
        centers,
        assignments,
        cost_trace,
        iterations,
    }
}

/// Alternates Lloyd, boundary transfers and merge/split moves until none of
/// them changes the partition. Never uses more than `k` clusters.
fn cluster_sorted(sorted: &[f64], init: Vec<f64>, k: usize) -> LloydOutcome {
    let mut outcome = lloyd_1d(sorted, init, KMEANS_MAX_ITER);
    for _ in 0..KMEANS_MAX_ITER {
        let mut ends = run_ends(&outcome.assignments);
        if !transfer_refine(sorted, &mut ends) && !merge_split(sorted, &mut ends, k) {
            break;
        }
        let centers: Vec<f64> = ends
            .iter()
            .enumerate()
            .map(|(j, &end)| {
                let start = if j == 0 { 0 } else { ends[j - 1] };
                sorted[start..end].iter().sum::<f64>() / (end - start) as f64
            })
            .collect();
        let mut trace = std::mem::take(&mut outcome.cost_trace);
        let iterations = outcome.iterations;
        outcome = lloyd_1d(sorted, centers, KMEANS_MAX_ITER);
        trace.append(&mut outcome.cost_trace);
        outcome.cost_trace = trace;
        outcome.iterations += iterations;
    }
    outcome
}

/// Within-run sums of squares from prefix sums of `sorted`.
struct RunCosts {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl RunCosts {
    fn new(sorted: &[f64]) -> Self {
        let mut s1 = Vec::with_capacity(sorted.len() + 1);
        let mut s2 = Vec::with_capacity(sorted.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        s1.push(0.0);
        s2.push(0.0);
        for &x in sorted {
            a += x;
            b += x * x;
            s1.push(a);
            s2.push(b);
        }
        Self { s1, s2 }
    }

    fn sse(&self, lo: usize, hi: usize) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let s = self.s1[hi] - self.s1[lo];
        (self.s2[hi] - self.s2[lo] - s * s / (hi - lo) as f64).max(0.0)
    }

    /// Largest cost reduction from cutting run `[lo, hi)` in two, and where.
    fn best_split(&self, sorted: &[f64], lo: usize, hi: usize) -> Option<(f64, usize)> {
        let whole = self.sse(lo, hi);
        (lo + 1..hi)
            .filter(|&cut| sorted[cut - 1] != sorted[cut])
            .map(|cut| (whole - self.sse(lo, cut) - self.sse(cut, hi), cut))
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// Merges the two adjacent clusters that are cheapest to join and splits the
/// cluster that gains most from a cut, if that lowers the total cost. With
/// fewer than `k` clusters the best split is applied on its own.
fn merge_split(sorted: &[f64], ends: &mut Vec<usize>, k: usize) -> bool {
    let costs = RunCosts::new(sorted);
    let start = |j: usize| if j == 0 { 0 } else { ends[j - 1] };
    let splits: Vec<Option<(f64, usize)>> = (0..ends.len())
        .map(|j| costs.best_split(sorted, start(j), ends[j]))
        .collect();
    let tolerance = 1e-12 * (1.0 + costs.s2[sorted.len()]);

    if ends.len() < k {
        if let Some((j, (gain, cut))) = splits
            .iter()
            .enumerate()
            .filter_map(|(j, s)| s.map(|s| (j, s)))
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        {
            if gain > tolerance {
                ends.insert(j, cut);
                return true;
            }
        }
        return false;
    }

    let mut best: Option<(f64, usize, usize, usize)> = None;
    for pair in 0..ends.len().saturating_sub(1) {
        let (lo, mid, hi) = (start(pair), ends[pair], ends[pair + 1]);
        let merge_cost = costs.sse(lo, hi) - costs.sse(lo, mid) - costs.sse(mid, hi);
        for (j, split) in splits.iter().enumerate() {
            if j == pair || j == pair + 1 {
                continue;
            }
            if let Some((gain, cut)) = *split {
                let improvement = gain - merge_cost;
                if improvement > tolerance && best.is_none_or(|b| improvement > b.0) {
                    best = Some((improvement, pair, j, cut));
                }
            }
        }
    }
    let Some((_, pair, j, cut)) = best else {
        return false;
    };
    // Insert the new boundary first so the merge index stays valid.
    ends.insert(j, cut);
    let pair = if j < pair { pair + 1 } else { pair };
    ends.remove(pair);
    true
}

/// End offsets of the runs of equal labels in a monotone assignment.
fn run_ends(assignments: &[usize]) -> Vec<usize> {
    let mut ends = Vec::new();
    for i in 1..assignments.len() {
        if assignments[i] != assignments[i - 1] {
            ends.push(i);
        }
    }
    ends.push(assignments.len());
    ends
}

/// Single-point transfers across cluster boundaries (Hartigan's rule).
///
/// A point at the edge of cluster `a` moves to the neighbouring cluster `b`
/// when `n_b/(n_b+1)·(x-μ_b)² < n_a/(n_a-1)·(x-μ_a)²`, which strictly lowers
/// the within-cluster sum of squares. Runs until no transfer helps. Clusters
/// are contiguous runs of `sorted`, described by their end offsets.
fn transfer_refine(sorted: &[f64], ends: &mut [usize]) -> bool {
    let k = ends.len();
    let start = |ends: &[usize], j: usize| if j == 0 { 0 } else { ends[j - 1] };
    let mut sums: Vec<f64> = (0..k)
        .map(|j| sorted[start(ends, j)..ends[j]].iter().sum())
        .collect();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for j in 0..k.saturating_sub(1) {
            loop {
                let (lo, mid, hi) = (start(ends, j), ends[j], ends[j + 1]);
                let (na, nb) = ((mid - lo) as f64, (hi - mid) as f64);
                let (ma, mb) = (sums[j] / na, sums[j + 1] / nb);
                // Last point of the left cluster to the right one.
                if na > 1.0 {
                    let x = sorted[mid - 1];
                    let gain = na / (na - 1.0) * (x - ma).powi(2) - nb / (nb + 1.0) * (x - mb).powi(2);
                    if gain > 1e-15 * (1.0 + x * x) {
                        ends[j] -= 1;
                        sums[j] -= x;
                        sums[j + 1] += x;
                        moved = true;
                        continue;
                    }
                }
                // First point of the right cluster to the left one.
                if nb > 1.0 {
                    let x = sorted[mid];
                    let gain = nb / (nb - 1.0) * (x - mb).powi(2) - na / (na + 1.0) * (x - ma).powi(2);
                    if gain > 1e-15 * (1.0 + x * x) {
                        ends[j] += 1;
                        sums[j] += x;
                        sums[j + 1] -= x;
                        moved = true;
                        continue;
                    }
                }
                break;
            }
        }
        if !moved {
            return moved_any;
        }
        moved_any = true;
    }
}

fn assign(sorted: &[f64], centers: &[f64]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sorted.len());
    let mut j = 0;
    for &x in sorted {
        while j + 1 < centers.len() && x > 0.5 * (centers[j] + centers[j + 1]) {
            j += 1;
        }
        out.push(j);
    }
    out
}

fn cost(sorted: &[f64], centers: &[f64], assignments: &[usize]) -> f64 {
    sorted
        .iter()
        .zip(assignments)
        .map(|(x, &a)| (x - centers[a]).powi(2))
        .sum()
}
