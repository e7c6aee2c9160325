//! Permutohedral lattice geometry.
//!
//! The lattice lives in the zero-sum hyperplane of `R^{d+1}`. Positions are
//! elevated there by a linear map whose columns are mutually orthogonal,
//! sum to zero, and all have squared norm `(d+1)^2`, so the embedding is a
//! similarity transform. Lattice points are the vectors whose `d+1`
//! coordinates are congruent modulo `d+1` and sum to zero; the Delaunay
//! cells are uniform simplices, and the enclosing simplex of a query plus
//! its barycentric weights come out of a rounding pass in `O(d^2)`.

mod keymap;
pub mod map;

pub use keymap::KeyMap;
pub use map::{build_feature_map, FeatureMap, Incidence, LatticeLink, LatticeMap, NeighborTable};

use crate::error::{Error, Result};

/// Integer coordinates of one lattice point. Only the first `d` of the
/// `d+1` homogeneous coordinates are stored; the last is the negated sum.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticeKey {
    pub coords: Vec<i32>,
}

impl LatticeKey {
    pub fn new(coords: Vec<i32>) -> Self {
        LatticeKey { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Reconstruct the full `d+1` homogeneous coordinate vector.
    pub fn full(&self) -> Vec<i32> {
        let mut v = self.coords.clone();
        let last: i32 = -v.iter().sum::<i32>();
        v.push(last);
        v
    }

    /// Zero-sum and congruence checks on the reconstructed vector.
    pub fn is_canonical(&self) -> bool {
        let full = self.full();
        let m = full.len() as i32;
        let sum: i64 = full.iter().map(|&c| c as i64).sum();
        if sum != 0 {
            return false;
        }
        let r0 = full[0].rem_euclid(m);
        full.iter().all(|&c| c.rem_euclid(m) == r0)
    }

    /// Remainder class of the key (all coordinates share it).
    pub fn remainder(&self) -> i32 {
        let m = self.coords.len() as i32 + 1;
        self.coords
            .first()
            .map(|&c| c.rem_euclid(m))
            .unwrap_or(0)
    }
}

/// A position lifted into the zero-sum hyperplane, in lattice-cell units.
#[derive(Debug, Clone, PartialEq)]
pub struct ElevatedPoint {
    pub coords: Vec<f64>,
}

impl ElevatedPoint {
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn hyperplane_residual(&self) -> f64 {
        self.coords.iter().sum::<f64>().abs()
    }
}

/// Enclosing-simplex vertices and barycentric weights for one point.
///
/// Vertices are ordered by remainder class `0..d`, so `vertices[0]` is the
/// remainder-0 vertex used for relative-position features.
#[derive(Debug, Clone)]
pub struct SimplexFootprint {
    pub vertices: Vec<LatticeKey>,
    pub weights: Vec<f64>,
    /// Rank of each of the `d+1` elevated coordinates in the descending
    /// differential order; a permutation of `0..d`.
    pub ranks: Vec<u8>,
}

/// Per-level lattice scaling factors. Larger factors mean finer lattices,
/// so a downsampling cascade uses strictly decreasing entries.
#[derive(Debug, Clone)]
pub struct ScaleSchedule {
    pub base_scale: f64,
    pub levels: Vec<f64>,
}

impl ScaleSchedule {
    /// `levels[l] = base * ratio^l`, ratio in (0,1).
    pub fn geometric(base: f64, ratio: f64, n: usize) -> Result<Self> {
        if !(base > 0.0 && base.is_finite()) {
            return Err(Error::Config(format!("base scale must be positive, got {base}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!("scale ratio must be in (0,1), got {ratio}")));
        }
        let levels = (0..n).map(|l| base * ratio.powi(l as i32)).collect();
        Ok(ScaleSchedule { base_scale: base, levels })
    }

    pub fn validate_decreasing(&self) -> Result<()> {
        if self.levels.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("scale factors must be strictly positive".into()));
        }
        if self.levels.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "scale factors must strictly decrease across downsampling levels".into(),
            ));
        }
        Ok(())
    }

    /// Edge length, in position units, of a simplex at scaling factor `s`.
    pub fn simplex_edge(d: usize, s: f64) -> f64 {
        let d = d as f64;
        (d * (d + 1.0)).sqrt() / ((d + 1.0) * s)
    }
}

/// Per-dimension factors of the elevation basis. Column `i` of the basis is
/// `factors[i] * (1,..,1,-(i+1),0,..,0)` with `i+1` leading ones, which makes
/// the columns orthogonal with squared norm `(d+1)^2` and zero column sums.
pub fn elevation_factors(d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| (d as f64 + 1.0) / (((i + 1) * (i + 2)) as f64).sqrt())
        .collect()
}

/// Kernel form of [`elevate`]: writes the `d+1` elevated coordinates of
/// `scale * position` into `out`.
#[inline]
pub fn elevate_into(position: &[f64], scale: f64, factors: &[f64], out: &mut [f64]) {
    let d = position.len();
    debug_assert_eq!(factors.len(), d);
    debug_assert_eq!(out.len(), d + 1);
    let mut sm = 0.0;
    for i in (1..=d).rev() {
        let cf = position[i - 1] * scale * factors[i - 1];
        out[i] = sm - i as f64 * cf;
        sm += cf;
    }
    out[0] = sm;
}

/// Lift a position onto the zero-sum hyperplane at the given lattice scale.
pub fn elevate(position: &[f64], scale: f64) -> Result<ElevatedPoint> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("scale must be positive and finite, got {scale}")));
    }
    if position.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite position coordinate".into()));
    }
    let d = position.len();
    let factors = elevation_factors(d);
    let mut out = vec![0.0; d + 1];
    elevate_into(position, scale, &factors, &mut out);
    Ok(ElevatedPoint { coords: out })
}

/// Project an elevated vector back to position space (pseudo-inverse of the
/// elevation at scale 1). Used by tests; the network never needs it because
/// rescaling between lattice levels is a pure scalar multiply in elevated
/// space.
pub fn project_down(elevated: &[f64]) -> Vec<f64> {
    let d = elevated.len() - 1;
    let factors = elevation_factors(d);
    let norm = ((d + 1) * (d + 1)) as f64;
    (0..d)
        .map(|i| {
            // dot with basis column i
            let mut dot = 0.0;
            for (j, &e) in elevated.iter().enumerate().take(i + 1) {
                let _ = j;
                dot += e;
            }
            dot -= (i as f64 + 1.0) * elevated[i + 1];
            dot * factors[i] / norm
        })
        .collect()
}

/// Scratch buffers for the simplex lookup, reusable across points.
#[derive(Debug, Default, Clone)]
pub struct SimplexScratch {
    greedy: Vec<i32>,
    rank: Vec<i32>,
    bary: Vec<f64>,
}

/// Result view of one simplex lookup written into caller storage:
/// `vertex_keys` holds `(d+1)*d` coordinates (vertex-major, remainder order),
/// `weights` the `d+1` barycentric weights, `ranks` the coordinate ranks.
pub fn enclosing_simplex_into(
    elevated: &[f64],
    scratch: &mut SimplexScratch,
    vertex_keys: &mut [i32],
    weights: &mut [f64],
    ranks: &mut [u8],
) {
    let dp1 = elevated.len();
    let d = dp1 - 1;
    let dp1f = dp1 as f64;
    let dp1i = dp1 as i32;
    scratch.greedy.clear();
    scratch.greedy.resize(dp1, 0);
    scratch.rank.clear();
    scratch.rank.resize(dp1, 0);
    scratch.bary.clear();
    scratch.bary.resize(dp1 + 1, 0.0);
    let greedy = &mut scratch.greedy;
    let rank = &mut scratch.rank;
    let bary = &mut scratch.bary;

    // Round each coordinate to the nearest multiple of d+1
    // (round-half-away-from-zero, the fixed rule for determinism).
    for i in 0..dp1 {
        greedy[i] = (elevated[i] / dp1f).round() as i32 * dp1i;
    }
    let h: i32 = greedy.iter().map(|&g| g / dp1i).sum();

    // Rank coordinates by descending differential; ties break by index.
    for i in 0..dp1 {
        let di = elevated[i] - greedy[i] as f64;
        for j in (i + 1)..dp1 {
            if di < elevated[j] - greedy[j] as f64 {
                rank[i] += 1;
            } else {
                rank[j] += 1;
            }
        }
    }

    // Walk the rounded point back onto the lattice if the sum is off.
    if h > 0 {
        for i in 0..dp1 {
            if rank[i] >= dp1i - h {
                greedy[i] -= dp1i;
                rank[i] += h - dp1i;
            } else {
                rank[i] += h;
            }
        }
    } else if h < 0 {
        for i in 0..dp1 {
            if rank[i] < -h {
                greedy[i] += dp1i;
                rank[i] += h + dp1i;
            } else {
                rank[i] += h;
            }
        }
    }

    // Barycentric weights from the sorted differentials.
    for i in 0..dp1 {
        let delta = (elevated[i] - greedy[i] as f64) / dp1f;
        let r = rank[i] as usize;
        bary[d - r] += delta;
        bary[d + 1 - r] -= delta;
    }
    bary[0] += 1.0 + bary[dp1];

    // One vertex per remainder class, ascending.
    for rem in 0..dp1 {
        let base = rem * d;
        for i in 0..d {
            let mut c = greedy[i] + rem as i32;
            if rank[i] > (d - rem) as i32 {
                c -= dp1i;
            }
            vertex_keys[base + i] = c;
        }
        weights[rem] = bary[rem];
    }
    for i in 0..dp1 {
        ranks[i] = rank[i] as u8;
    }
}

/// Enclosing-simplex vertices and barycentric weights of an elevated point.
/// Runtime depends only on `d`, never on lattice occupancy.
pub fn enclosing_simplex(e: &ElevatedPoint) -> SimplexFootprint {
    let d = e.dim();
    let mut scratch = SimplexScratch::default();
    let mut keys = vec![0i32; (d + 1) * d];
    let mut weights = vec![0.0; d + 1];
    let mut ranks = vec![0u8; d + 1];
    enclosing_simplex_into(&e.coords, &mut scratch, &mut keys, &mut weights, &mut ranks);
    let vertices = (0..=d)
        .map(|rem| LatticeKey::new(keys[rem * d..(rem + 1) * d].to_vec()))
        .collect();
    SimplexFootprint { vertices, weights, ranks }
}

/// The 1-ring stencil: the zero offset plus `±((1,..,1) - (d+1) e_k)` for
/// every axis `k`, giving `2(d+1)+1` offsets. Offsets are arranged so that
/// [`mirror_offset`] maps each index to its negation.
pub fn neighbor_offsets(d: usize) -> Vec<LatticeKey> {
    assert!(d >= 1, "lattice dimension must be at least 1");
    let mut out = Vec::with_capacity(2 * (d + 1) + 1);
    out.push(LatticeKey::new(vec![0; d]));
    for k in 0..=d {
        let mut plus = vec![1i32; d];
        if k < d {
            plus[k] = -(d as i32);
        }
        let minus: Vec<i32> = plus.iter().map(|&c| -c).collect();
        out.push(LatticeKey::new(plus));
        out.push(LatticeKey::new(minus));
    }
    out
}

/// Index of the negated offset within the [`neighbor_offsets`] ordering.
#[inline]
pub fn mirror_offset(idx: usize) -> usize {
    if idx == 0 {
        0
    } else if idx % 2 == 1 {
        idx + 1
    } else {
        idx - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn reconstruct(fp: &SimplexFootprint) -> Vec<f64> {
        let dp1 = fp.weights.len();
        let mut acc = vec![0.0; dp1];
        for (v, &w) in fp.vertices.iter().zip(&fp.weights) {
            for (a, &c) in acc.iter_mut().zip(v.full().iter()) {
                *a += w * c as f64;
            }
        }
        acc
    }

    #[test]
    fn elevate_zero_is_zero() {
        let e = elevate(&[0.0, 0.0, 0.0], 1.7).unwrap();
        assert!(e.coords.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn elevate_scale_linearity() {
        let p = [0.3, -1.2, 2.5];
        let p2: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let a = elevate(&p, 2.0 * 0.9).unwrap();
        let b = elevate(&p2, 0.9).unwrap();
        for (x, y) in a.coords.iter().zip(&b.coords) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn elevate_lands_in_hyperplane() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let e = elevate(&p, 1.3).unwrap();
            assert!(e.hyperplane_residual() <= 1e-9);
        }
    }

    #[test]
    fn elevate_rejects_non_finite() {
        assert!(elevate(&[f64::NAN, 0.0], 1.0).is_err());
        assert!(elevate(&[0.0, 0.0], 0.0).is_err());
        assert!(elevate(&[0.0, 0.0], f64::INFINITY).is_err());
    }

    #[test]
    fn project_down_inverts_elevate() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..50 {
            let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let e = elevate(&p, 1.0).unwrap();
            let back = project_down(&e.coords);
            for (a, b) in p.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn simplex_at_lattice_point_has_unit_weight() {
        // remainder-1 point for d=2: (1,1,-2)
        let e = ElevatedPoint { coords: vec![1.0, 1.0, -2.0] };
        let fp = enclosing_simplex(&e);
        let w_max = fp.weights.iter().cloned().fold(f64::MIN, f64::max);
        assert!((w_max - 1.0).abs() < 1e-12);
        let at = fp.weights.iter().position(|&w| (w - 1.0).abs() < 1e-12).unwrap();
        assert_eq!(fp.vertices[at].full(), vec![1, 1, -2]);
        for (i, &w) in fp.weights.iter().enumerate() {
            if i != at {
                assert!(w.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simplex_at_centroid_has_equal_weights() {
        let d = 3;
        // centroid of the canonical simplex whose remainder-k vertex is
        // built from greedy = 0
        let zero = ElevatedPoint { coords: vec![0.0; d + 1] };
        let base = enclosing_simplex(&zero);
        let mut centroid = vec![0.0; d + 1];
        for v in &base.vertices {
            for (c, &x) in centroid.iter_mut().zip(v.full().iter()) {
                *c += x as f64 / (d + 1) as f64;
            }
        }
        let fp = enclosing_simplex(&ElevatedPoint { coords: centroid });
        for &w in &fp.weights {
            assert!((w - 1.0 / (d + 1) as f64).abs() < 1e-9, "weight {w}");
        }
    }

    #[test]
    fn simplex_invariants_random_sweep() {
        let mut rng = StdRng::seed_from_u64(42);
        let factors = elevation_factors(3);
        for _ in 0..10_000 {
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let mut e = vec![0.0; 4];
            elevate_into(&p, 1.0, &factors, &mut e);
            let fp = enclosing_simplex(&ElevatedPoint { coords: e.clone() });
            let sum: f64 = fp.weights.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
            assert!(fp.weights.iter().all(|&w| w >= -1e-12));
            for (rem, v) in fp.vertices.iter().enumerate() {
                assert!(v.is_canonical());
                assert_eq!(v.remainder(), rem as i32);
            }
            let rec = reconstruct(&fp);
            for (a, b) in rec.iter().zip(&e) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn simplex_lookup_is_deterministic() {
        let e = elevate(&[0.123, -4.56, 7.89], 2.5).unwrap();
        let a = enclosing_simplex(&e);
        let b = enclosing_simplex(&e);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.ranks, b.ranks);
    }

    #[test]
    fn offsets_counts_match_ring_formula() {
        assert_eq!(neighbor_offsets(2).len(), 7);
        assert_eq!(neighbor_offsets(3).len(), 9);
    }

    #[test]
    fn offsets_are_symmetric_and_canonical() {
        for d in 1..=4 {
            let offs = neighbor_offsets(d);
            assert_eq!(offs[0].coords, vec![0; d]);
            for (i, o) in offs.iter().enumerate() {
                assert!(o.is_canonical(), "offset {:?}", o);
                let neg: Vec<i32> = o.coords.iter().map(|&c| -c).collect();
                assert_eq!(offs[mirror_offset(i)].coords, neg);
                assert!(offs.iter().any(|q| q.coords == neg));
            }
        }
    }
}
