//! Regression-tree growth on binned features, shared by forests and boosting.

use rand::seq::index;
use rand::Rng;

use super::binning::{BinnedFeatures, MAX_BINS};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub idx: u32,
    /// Multiplicity, used for the minimum leaf size.
    pub count: u32,
    /// Weight in the split criterion.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: u32,
    pub mtry: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Node {
    Split {
        feature: u32,
        bin: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    pub nodes: Vec<Node>,
    pub n_leaves: usize,
}

impl Tree {
    pub fn leaf(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(l) => return l as usize,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => k = if x[feature as usize] <= threshold { left } else { right } as usize,
            }
        }
    }

    pub fn leaf_binned(&self, b: &BinnedFeatures, i: usize) -> usize {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(l) => return l as usize,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => k = if b.column(feature as usize)[i] <= bin { left } else { right } as usize,
            }
        }
    }
}

/// Grows one tree. On return `samples` is permuted so that each leaf owns a
/// contiguous range, given by `spans[leaf]`.
pub(crate) fn grow(
    b: &BinnedFeatures,
    target: &[f64],
    samples: &mut [Sample],
    params: &GrowParams,
    rng: &mut impl Rng,
) -> (Tree, Vec<(usize, usize)>) {
    let d = b.n_features();
    let mtry = params.mtry.clamp(1, d.max(1));
    let mut nodes = vec![Node::Leaf(0)];
    let mut spans = Vec::new();
    let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
    let mut scratch = Scratch::default();
    while let Some((node, start, end, depth)) = stack.pop() {
        let part = &mut samples[start..end];
        let split = if depth < params.max_depth && d > 0 {
            let mut feats: Vec<usize> = if mtry < d {
                index::sample(rng, d, mtry).into_vec()
            } else {
                (0..d).collect()
            };
            feats.sort_unstable();
            best_split(b, target, part, &feats, params.min_leaf, &mut scratch)
        } else {
            None
        };
        match split {
            None => {
                nodes[node] = Node::Leaf(spans.len() as u32);
                spans.push((start, end));
            }
            Some((feature, bin)) => {
                let col = b.column(feature);
                let mut mid = 0;
                for k in 0..part.len() {
                    if col[part[k].idx as usize] <= bin {
                        part.swap(k, mid);
                        mid += 1;
                    }
                }
                let left = nodes.len();
                nodes.push(Node::Leaf(0));
                nodes.push(Node::Leaf(0));
                nodes[node] = Node::Split {
                    feature: feature as u32,
                    bin,
                    threshold: b.threshold(feature, bin),
                    left: left as u32,
                    right: left as u32 + 1,
                };
                // Right first so the left subtree is expanded first.
                stack.push((left + 1, start + mid, end, depth + 1));
                stack.push((left, start, start + mid, depth + 1));
            }
        }
    }
    let n_leaves = spans.len();
    (Tree { nodes, n_leaves }, spans)
}

#[derive(Default)]
struct Scratch {
    runs: Vec<(u8, f64, f64, u32)>,
}

/// Below this many samples a node sorts by bin instead of filling a histogram.
const SORT_BELOW: usize = 48;

/// Best variance-reduction split as `(feature, bin)`; samples with bin at
/// most `bin` go left. Exact ties keep the lowest feature, then the lowest
/// bin.
fn best_split(
    b: &BinnedFeatures,
    target: &[f64],
    s: &[Sample],
    feats: &[usize],
    min_leaf: u32,
    scratch: &mut Scratch,
) -> Option<(usize, u8)> {
    let total_w: f64 = s.iter().map(|x| x.weight).sum();
    let total_c: u32 = s.iter().map(|x| x.count).sum();
    if !(total_w > 0.0) || total_c < 2 * min_leaf.max(1) {
        return None;
    }
    let mean = s.iter().map(|x| x.weight * target[x.idx as usize]).sum::<f64>() / total_w;
    let mut sse = 0.0;
    let mut total_s = 0.0;
    for x in s {
        let r = target[x.idx as usize] - mean;
        sse += x.weight * r * r;
        total_s += x.weight * r;
    }
    if !(sse > 0.0) {
        return None;
    }
    let parent = total_s * total_s / total_w;
    let mut best: Option<(usize, u8)> = None;
    let mut best_gain = 1e-12 * sse;

    let mut hw = [0.0f64; MAX_BINS];
    let mut hs = [0.0f64; MAX_BINS];
    let mut hc = [0u32; MAX_BINS];
    for &j in feats {
        let col = b.column(j);
        let runs = &mut scratch.runs;
        runs.clear();
        if s.len() < SORT_BELOW {
            for x in s {
                runs.push((col[x.idx as usize], x.weight, x.weight * (target[x.idx as usize] - mean), x.count));
            }
            runs.sort_by_key(|r| r.0);
            let mut out = 0;
            for k in 0..runs.len() {
                if out > 0 && runs[out - 1].0 == runs[k].0 {
                    runs[out - 1].1 += runs[k].1;
                    runs[out - 1].2 += runs[k].2;
                    runs[out - 1].3 += runs[k].3;
                } else {
                    runs[out] = runs[k];
                    out += 1;
                }
            }
            runs.truncate(out);
        } else {
            let nb = b.n_bins(j);
            hw[..nb].fill(0.0);
            hs[..nb].fill(0.0);
            hc[..nb].fill(0);
            for x in s {
                let k = col[x.idx as usize] as usize;
                hw[k] += x.weight;
                hs[k] += x.weight * (target[x.idx as usize] - mean);
                hc[k] += x.count;
            }
            for k in 0..nb {
                if hc[k] > 0 {
                    runs.push((k as u8, hw[k], hs[k], hc[k]));
                }
            }
        }
        let (mut wl, mut sl, mut cl) = (0.0, 0.0, 0u32);
        for r in &runs[..runs.len().saturating_sub(1)] {
            wl += r.1;
            sl += r.2;
            cl += r.3;
            let (wr, sr, cr) = (total_w - wl, total_s - sl, total_c - cl);
            if cl < min_leaf || cr < min_leaf || !(wl > 0.0) || !(wr > 0.0) {
                continue;
            }
            let gain = sl * sl / wl + sr * sr / wr - parent;
            if gain > best_gain {
                best_gain = gain;
                best = Some((j, r.0));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlkit::Matrix;
    use crate::rng;

    fn samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                idx: i as u32,
                count: 1,
                weight: 1.0,
            })
            .collect()
    }

    #[test]
    fn stump_picks_best_threshold() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]]);
        let y = [0.0, 0.0, 10.0, 11.0];
        let b = BinnedFeatures::new(&x);
        let p = GrowParams {
            max_depth: 1,
            min_leaf: 1,
            mtry: 2,
        };
        let mut s = samples(4);
        let (t, spans) = grow(&b, &y, &mut s, &p, &mut rng::rng_for(0, &[]));
        assert_eq!(t.n_leaves, 2);
        assert_eq!(t.leaf(&[2.4, 0.0]), t.leaf(&[1.0, 0.0]));
        assert_ne!(t.leaf(&[2.6, 0.0]), t.leaf(&[2.4, 0.0]));
        assert_eq!(spans.iter().map(|s| s.1 - s.0).sum::<usize>(), 4);
    }

    #[test]
    fn tie_prefers_lowest_feature_and_bin() {
        // Both features separate the data identically.
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]);
        let b = BinnedFeatures::new(&x);
        let p = GrowParams {
            max_depth: 1,
            min_leaf: 1,
            mtry: 2,
        };
        let (t, _) = grow(&b, &[0.0, 1.0], &mut samples(2), &p, &mut rng::rng_for(0, &[]));
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn raw_and_binned_routing_agree() {
        let mut g = rng::rng_for(3, &[]);
        let rows: Vec<[f64; 3]> = (0..200)
            .map(|_| [g.random::<f64>(), (g.random::<f64>() * 5.0).floor(), g.random::<f64>()])
            .collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 4.0).floor() + r[1]).collect();
        let b = BinnedFeatures::new(&x);
        let p = GrowParams {
            max_depth: 64,
            min_leaf: 1,
            mtry: 3,
        };
        let (t, _) = grow(&b, &y, &mut samples(200), &p, &mut rng::rng_for(1, &[]));
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(t.leaf(r), t.leaf_binned(&b, i));
        }
    }
}
