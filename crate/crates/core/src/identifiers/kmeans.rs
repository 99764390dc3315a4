//! Seeded k-means with k-means++ initialization over sparse, L2-normalized
//! points. Ties always resolve to the lowest index.

use rand::Rng;

use crate::par;

/// Sparse vector: (dimension, value) pairs sorted by dimension.
pub type SparsePoint = Vec<(usize, f64)>;

pub const MAX_ITERS: usize = 20;

fn sq_norm(p: &[(usize, f64)]) -> f64 {
    p.iter().map(|(_, v)| v * v).sum()
}

fn sparse_sq_dist(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        let d = match (a.get(i), b.get(j)) {
            (Some(&(da, va)), Some(&(db, vb))) if da == db => {
                i += 1;
                j += 1;
                va - vb
            }
            (Some(&(da, va)), Some(&(db, _))) if da < db => {
                i += 1;
                va
            }
            (Some(_), Some(&(_, vb))) => {
                j += 1;
                -vb
            }
            (Some(&(_, va)), None) => {
                i += 1;
                va
            }
            (None, Some(&(_, vb))) => {
                j += 1;
                -vb
            }
            (None, None) => unreachable!(),
        };
        acc += d * d;
    }
    acc
}

struct Centroid {
    dense: Vec<f64>,
    sq_norm: f64,
}

impl Centroid {
    fn from_sparse(p: &[(usize, f64)], dims: usize) -> Self {
        let mut dense = vec![0.0; dims];
        for &(d, v) in p {
            dense[d] = v;
        }
        Centroid { dense, sq_norm: sq_norm(p) }
    }

    fn sq_dist(&self, p: &[(usize, f64)], p_sq: f64) -> f64 {
        let dot: f64 = p.iter().map(|&(d, v)| v * self.dense[d]).sum();
        (p_sq + self.sq_norm - 2.0 * dot).max(0.0)
    }
}

/// Clusters `points` (dimensions must be `< dims`) into at most `k` groups.
/// Returns one cluster index per point; indices are compact (`0..m`, in
/// centroid order) and `m` may be smaller than `k` when the data has fewer
/// distinct points.
pub fn kmeans<R: Rng>(points: &[&SparsePoint], dims: usize, k: usize, rng: &mut R) -> (Vec<usize>, usize) {
    let n = points.len();
    if n == 0 {
        return (Vec::new(), 0);
    }
    let k = k.clamp(1, n);
    let sq: Vec<f64> = points.iter().map(|p| sq_norm(p)).collect();

    // k-means++ seeding
    let mut seeds = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = points.iter().map(|p| sparse_sq_dist(p, points[seeds[0]])).collect();
    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, &d) in nearest.iter().enumerate() {
            acc += d;
            if acc > target && d > 0.0 {
                pick = i;
                break;
            }
        }
        if nearest[pick] <= 0.0 {
            // rounding pushed the pick onto an already covered point
            match nearest.iter().position(|&d| d > 0.0) {
                Some(i) => pick = i,
                None => break,
            }
        }
        seeds.push(pick);
        for (i, p) in points.iter().enumerate() {
            let d = sparse_sq_dist(p, points[pick]);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }

    let mut centroids: Vec<Centroid> =
        seeds.iter().map(|&s| Centroid::from_sparse(points[s], dims)).collect();
    let mut assign: Vec<usize> = vec![usize::MAX; n];
    for _ in 0..MAX_ITERS {
        let next = par::map_indexed(n, |i| {
            let mut best = (0, f64::INFINITY);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = centroid.sq_dist(points[i], sq[i]);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        });
        if next == assign {
            break;
        }
        assign = next;
        let mut sums = vec![vec![0.0; dims]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for &(d, v) in points[i] {
                sums[c][d] += v;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            centroid.dense = sums[c].iter().map(|v| v * inv).collect();
            centroid.sq_norm = centroid.dense.iter().map(|v| v * v).sum();
        }
    }

    // compact away empty clusters, keeping centroid order
    let mut remap = vec![usize::MAX; centroids.len()];
    let mut used = 0;
    for c in 0..centroids.len() {
        if assign.contains(&c) {
            remap[c] = used;
            used += 1;
        }
    }
    (assign.into_iter().map(|c| remap[c]).collect(), used)
}
