//! Occupied-key bookkeeping: the hash index over lattice points, the
//! point-to-vertex footprint blocks, and their transposed incidence lists.
//!
//! Everything downstream (splat, conv, slice and all their backward passes)
//! runs as gathers over these structures, so they are built once per
//! geometry and reused across forward/backward sweeps.

use super::{
    elevate_into, elevation_factors, enclosing_simplex_into, neighbor_offsets, LatticeKey,
    SimplexFootprint, SimplexScratch,
};
use crate::error::{Error, Result};
use crate::signal::SignalMatrix;
use ndarray::{Array2, ArrayView2};

pub const NO_ROW: u32 = u32::MAX;

/// Hash-indexed set of occupied lattice points at one scale.
#[derive(Debug, Clone)]
pub struct LatticeMap {
    pub d: usize,
    pub scale: f64,
    index: super::KeyMap,
    /// Row-major key storage in insertion order, `len * d` entries.
    keys: Vec<i32>,
}

impl LatticeMap {
    pub fn new(d: usize, scale: f64) -> Self {
        LatticeMap { d, scale, index: super::KeyMap::new(d), keys: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.keys.len() / self.d.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    #[inline]
    pub fn row_of(&self, key: &[i32]) -> Option<u32> {
        self.index.get(key)
    }

    #[inline]
    pub fn key_of(&self, row: u32) -> &[i32] {
        let r = row as usize;
        &self.keys[r * self.d..(r + 1) * self.d]
    }

    /// Insert a key if new; returns its row id.
    pub fn insert(&mut self, key: &[i32]) -> u32 {
        let next = self.len() as u32;
        let row = self.index.insert(key, next);
        if row == next {
            self.keys.extend_from_slice(key);
        }
        row
    }

    pub fn keys(&self) -> &[i32] {
        &self.keys
    }

    /// Elevated coordinates (full `d+1` vector) of an occupied lattice point.
    pub fn elevated_of(&self, row: u32) -> Vec<f64> {
        let key = self.key_of(row);
        let mut v: Vec<f64> = key.iter().map(|&c| c as f64).collect();
        let last: i32 = -key.iter().sum::<i32>();
        v.push(last as f64);
        v
    }

    /// Occupied keys as `LatticeKey` values, row order.
    pub fn key_list(&self) -> Vec<LatticeKey> {
        (0..self.len() as u32)
            .map(|r| LatticeKey::new(self.key_of(r).to_vec()))
            .collect()
    }

    /// Row ids of the 1-ring neighbors of every occupied point.
    pub fn neighbor_table(&self) -> NeighborTable {
        let offsets = neighbor_offsets(self.d);
        let k = offsets.len();
        let m = self.len();
        let mut rows = vec![NO_ROW; m * k];
        let mut probe = vec![0i32; self.d];
        for r in 0..m {
            let key = &self.keys[r * self.d..(r + 1) * self.d];
            for (oi, off) in offsets.iter().enumerate() {
                for i in 0..self.d {
                    probe[i] = key[i] + off.coords[i];
                }
                if let Some(nr) = self.index.get(&probe) {
                    rows[r * k + oi] = nr;
                }
            }
        }
        NeighborTable { k, rows }
    }
}

/// Row ids of stencil neighbors for each occupied point; `NO_ROW` markers
/// stand in for unoccupied neighbors, which contribute zero features.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    pub k: usize,
    pub rows: Vec<u32>,
}

impl NeighborTable {
    #[inline]
    pub fn row(&self, point: usize, offset: usize) -> u32 {
        self.rows[point * self.k + offset]
    }
}

/// Resolved footprints of a point set against one lattice map: for every
/// point, the map rows of its `d+1` simplex vertices and the barycentric
/// weights. A `NO_ROW` vertex means the vertex is not occupied (possible
/// when slicing to targets outside the splatted hull) and contributes zero.
#[derive(Debug, Clone)]
pub struct FootprintBlock {
    pub n: usize,
    pub verts: usize,
    pub rows: Vec<u32>,
    pub weights: Vec<f64>,
    /// Relative position of each point inside its simplex: elevated
    /// coordinates minus the remainder-0 vertex, `n x (d+1)`, flat.
    pub rel_pos: Vec<f64>,
}

impl FootprintBlock {
    #[inline]
    pub fn row(&self, point: usize, v: usize) -> u32 {
        self.rows[point * self.verts + v]
    }

    #[inline]
    pub fn weight(&self, point: usize, v: usize) -> f64 {
        self.weights[point * self.verts + v]
    }

    /// Relative-position features as an `n x (d+1)` matrix.
    pub fn rel_pos_matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.verts), self.rel_pos.clone())
            .expect("rel_pos storage shape")
    }
}

/// Transpose of a footprint block, grouped by map row: for lattice point
/// `j`, the list of `(point id, weight)` pairs of every point whose simplex
/// touches `j`, plus the per-row weight sums used by density normalization.
#[derive(Debug, Clone)]
pub struct Incidence {
    pub n_points: usize,
    pub offsets: Vec<u32>,
    pub entries: Vec<(u32, f64)>,
    pub weight_sum: Vec<f64>,
}

impl Incidence {
    pub fn rows(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    #[inline]
    pub fn list(&self, row: usize) -> &[(u32, f64)] {
        &self.entries[self.offsets[row] as usize..self.offsets[row + 1] as usize]
    }

    /// Build from a footprint block whose vertices all resolve into a map
    /// of `m` rows. Entry order within a row follows point order, so the
    /// construction is deterministic.
    pub fn from_footprints(fp: &FootprintBlock, m: usize) -> Incidence {
        let mut counts = vec![0u32; m + 1];
        for &r in &fp.rows {
            if r != NO_ROW {
                counts[r as usize + 1] += 1;
            }
        }
        for i in 0..m {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut entries = vec![(0u32, 0.0f64); fp.rows.iter().filter(|&&r| r != NO_ROW).count()];
        for p in 0..fp.n {
            for v in 0..fp.verts {
                let r = fp.row(p, v);
                if r != NO_ROW {
                    let at = cursor[r as usize] as usize;
                    entries[at] = (p as u32, fp.weight(p, v));
                    cursor[r as usize] += 1;
                }
            }
        }
        let mut weight_sum = vec![0.0; m];
        for (j, ws) in weight_sum.iter_mut().enumerate() {
            for &(_, w) in &entries[offsets[j] as usize..offsets[j + 1] as usize] {
                *ws += w;
            }
        }
        Incidence { n_points: fp.n, offsets, entries, weight_sum }
    }
}

/// One point-set-to-lattice connection: footprints plus their transpose.
/// Serves splat and slice in both directions of the network.
#[derive(Debug, Clone)]
pub struct LatticeLink {
    pub fp: FootprintBlock,
    pub inc: Incidence,
}

/// Footprint every row of `elevated` (an `n x (d+1)` view of hyperplane
/// points), inserting fresh vertices into `map` as they appear.
pub fn footprint_and_insert(map: &mut LatticeMap, elevated: ArrayView2<f64>) -> FootprintBlock {
    let d = map.d;
    let verts = d + 1;
    let n = elevated.nrows();
    let mut rows = vec![NO_ROW; n * verts];
    let mut weights = vec![0.0; n * verts];
    let mut rel_pos = vec![0.0; n * verts];
    let mut scratch = SimplexScratch::default();
    let mut keybuf = vec![0i32; verts * d];
    let mut wbuf = vec![0.0; verts];
    let mut ranks = vec![0u8; verts];
    for p in 0..n {
        let e = elevated.row(p);
        enclosing_simplex_into(e.as_slice().expect("row contiguity"), &mut scratch, &mut keybuf, &mut wbuf, &mut ranks);
        for v in 0..verts {
            let key = &keybuf[v * d..(v + 1) * d];
            rows[p * verts + v] = map.insert(key);
            weights[p * verts + v] = wbuf[v];
        }
        // remainder-0 vertex is index 0 by construction
        let v0 = &keybuf[0..d];
        let mut sum0 = 0i32;
        for i in 0..d {
            rel_pos[p * verts + i] = e[i] - v0[i] as f64;
            sum0 += v0[i];
        }
        rel_pos[p * verts + d] = e[d] + sum0 as f64;
    }
    FootprintBlock { n, verts, rows, weights, rel_pos }
}

/// Footprint rows of `elevated` against a fixed map; unoccupied vertices
/// are left as `NO_ROW`.
pub fn footprint_lookup(map: &LatticeMap, elevated: ArrayView2<f64>) -> FootprintBlock {
    let d = map.d;
    let verts = d + 1;
    let n = elevated.nrows();
    let mut rows = vec![NO_ROW; n * verts];
    let mut weights = vec![0.0; n * verts];
    let mut rel_pos = vec![0.0; n * verts];
    let mut scratch = SimplexScratch::default();
    let mut keybuf = vec![0i32; verts * d];
    let mut wbuf = vec![0.0; verts];
    let mut ranks = vec![0u8; verts];
    for p in 0..n {
        let e = elevated.row(p);
        enclosing_simplex_into(e.as_slice().expect("row contiguity"), &mut scratch, &mut keybuf, &mut wbuf, &mut ranks);
        for v in 0..verts {
            let key = &keybuf[v * d..(v + 1) * d];
            if let Some(r) = map.row_of(key) {
                rows[p * verts + v] = r;
            }
            weights[p * verts + v] = wbuf[v];
        }
        let v0 = &keybuf[0..d];
        let mut sum0 = 0i32;
        for i in 0..d {
            rel_pos[p * verts + i] = e[i] - v0[i] as f64;
            sum0 += v0[i];
        }
        rel_pos[p * verts + d] = e[d] + sum0 as f64;
    }
    FootprintBlock { n, verts, rows, weights, rel_pos }
}

/// Elevate raw positions (`n x d`) at `scale` into an `n x (d+1)` block.
pub fn elevate_positions(positions: ArrayView2<f64>, scale: f64) -> Result<Array2<f64>> {
    let n = positions.nrows();
    let d = positions.ncols();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("scale must be positive and finite, got {scale}")));
    }
    if positions.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite position coordinate".into()));
    }
    let factors = elevation_factors(d);
    let mut out = Array2::zeros((n, d + 1));
    let mut buf = vec![0.0; d + 1];
    let mut pos = vec![0.0; d];
    for p in 0..n {
        for i in 0..d {
            pos[i] = positions[(p, i)];
        }
        elevate_into(&pos, scale, &factors, &mut buf);
        for i in 0..=d {
            out[(p, i)] = buf[i];
        }
    }
    Ok(out)
}

/// Build the map occupied by a point set and the link connecting them.
pub fn build_link(positions: ArrayView2<f64>, scale: f64) -> Result<(LatticeMap, LatticeLink)> {
    let d = positions.ncols();
    let elevated = elevate_positions(positions, scale)?;
    let mut map = LatticeMap::new(d, scale);
    let fp = footprint_and_insert(&mut map, elevated.view());
    let inc = Incidence::from_footprints(&fp, map.len());
    Ok((map, LatticeLink { fp, inc }))
}

/// Same as [`build_link`] but the inputs are already elevated (used when
/// chaining lattice levels, where rescaling is a scalar multiply).
pub fn build_link_elevated(elevated: ArrayView2<f64>, d: usize, scale: f64) -> (LatticeMap, LatticeLink) {
    let mut map = LatticeMap::new(d, scale);
    let fp = footprint_and_insert(&mut map, elevated);
    let inc = Incidence::from_footprints(&fp, map.len());
    (map, LatticeLink { fp, inc })
}

/// Hash map from occupied lattice points to feature rows, with the
/// incidence lists realizing which input points splat where.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub map: LatticeMap,
    pub incidence: Incidence,
    pub features: SignalMatrix,
}

impl FeatureMap {
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Splat a point set onto a fresh lattice: builds the occupied-key index,
/// the incidence lists, and fills the feature rows (density-normalized when
/// `normalize` is set). Also returns the per-point footprints.
///
/// An empty point set yields an empty, still-valid map.
pub fn build_feature_map(
    positions: ArrayView2<f64>,
    signals: ArrayView2<f64>,
    scale: f64,
    normalize: bool,
) -> Result<(FeatureMap, Vec<SimplexFootprint>)> {
    if positions.nrows() != signals.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "positions have {} rows but signals have {}",
            positions.nrows(),
            signals.nrows()
        )));
    }
    let (map, link) = build_link(positions, scale)?;
    let features = crate::bclops::splat(&link.inc, signals, normalize)?;
    let d = map.d;
    let footprints = (0..link.fp.n)
        .map(|p| SimplexFootprint {
            vertices: (0..=d)
                .map(|v| LatticeKey::new(map.key_of(link.fp.row(p, v)).to_vec()))
                .collect(),
            weights: (0..=d).map(|v| link.fp.weight(p, v)).collect(),
            ranks: Vec::new(),
        })
        .collect();
    Ok((FeatureMap { map, incidence: link.inc, features: SignalMatrix::new(features) }, footprints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_cloud(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-10.0..10.0))
    }

    #[test]
    fn single_point_occupies_at_most_d_plus_one_keys() {
        let pos = array![[0.37, -0.11, 0.52]];
        let sig = array![[1.0]];
        let (fm, fps) = build_feature_map(pos.view(), sig.view(), 1.0, true).unwrap();
        assert!(fm.len() <= 4);
        assert!(fm.len() >= 1);
        assert_eq!(fps.len(), 1);
    }

    #[test]
    fn identical_points_share_a_footprint() {
        let mut pos = Array2::zeros((40, 3));
        for mut row in pos.rows_mut() {
            row.assign(&ndarray::arr1(&[0.21, 0.43, -0.65]));
        }
        let sig = Array2::ones((40, 2));
        let (fm, _) = build_feature_map(pos.view(), sig.view(), 1.0, true).unwrap();
        assert!(fm.len() <= 4);
    }

    #[test]
    fn duplicating_points_leaves_key_set_unchanged() {
        let pos = random_cloud(60, 3, 3);
        let sig = Array2::ones((60, 1));
        let (fm1, _) = build_feature_map(pos.view(), sig.view(), 0.8, true).unwrap();
        let mut doubled = Array2::zeros((120, 3));
        for i in 0..60 {
            doubled.row_mut(i).assign(&pos.row(i));
            doubled.row_mut(60 + i).assign(&pos.row(i));
        }
        let sig2 = Array2::ones((120, 1));
        let (fm2, _) = build_feature_map(doubled.view(), sig2.view(), 0.8, true).unwrap();
        assert_eq!(fm1.len(), fm2.len());
        let mut keys1: Vec<Vec<i32>> = fm1.map.key_list().into_iter().map(|k| k.coords).collect();
        let mut keys2: Vec<Vec<i32>> = fm2.map.key_list().into_iter().map(|k| k.coords).collect();
        keys1.sort();
        keys2.sort();
        assert_eq!(keys1, keys2);
    }

    #[test]
    fn empty_input_yields_empty_map() {
        let pos = Array2::<f64>::zeros((0, 3));
        let sig = Array2::<f64>::zeros((0, 2));
        let (fm, fps) = build_feature_map(pos.view(), sig.view(), 1.0, true).unwrap();
        assert!(fm.is_empty());
        assert!(fps.is_empty());
    }

    #[test]
    fn hash_index_round_trips_every_key() {
        let pos = random_cloud(200, 3, 11);
        let (map, _) = build_link(pos.view(), 1.5).unwrap();
        for r in 0..map.len() as u32 {
            let key = map.key_of(r).to_vec();
            assert_eq!(map.row_of(&key), Some(r));
        }
    }

    #[test]
    fn coarser_scale_never_increases_occupancy() {
        let pos = random_cloud(500, 3, 19);
        for (fine, coarse) in [(2.0, 1.0), (1.0, 0.5), (0.5, 0.25)] {
            let (m_fine, _) = build_link(pos.view(), fine).unwrap();
            let (m_coarse, _) = build_link(pos.view(), coarse).unwrap();
            assert!(m_coarse.len() <= m_fine.len());
        }
    }

    #[test]
    fn occupied_count_bounded_by_footprint_union() {
        let pos = random_cloud(100, 3, 23);
        let (map, link) = build_link(pos.view(), 1.0).unwrap();
        assert!(map.len() <= 4 * 100);
        // every occupied key appears in some footprint
        let mut seen = vec![false; map.len()];
        for &r in &link.fp.rows {
            seen[r as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
        // incidence realizes the transpose exactly
        for p in 0..link.fp.n {
            for v in 0..link.fp.verts {
                let r = link.fp.row(p, v);
                let w = link.fp.weight(p, v);
                let hit = link
                    .inc
                    .list(r as usize)
                    .iter()
                    .any(|&(k, kw)| k == p as u32 && kw == w);
                assert!(hit);
            }
        }
    }

    #[test]
    fn neighbor_table_matches_manual_lookup() {
        let pos = random_cloud(80, 2, 31);
        let (map, _) = build_link(pos.view(), 1.0).unwrap();
        let table = map.neighbor_table();
        let offsets = neighbor_offsets(2);
        for r in 0..map.len() {
            let key = map.key_of(r as u32);
            for (oi, off) in offsets.iter().enumerate() {
                let probe: Vec<i32> = key.iter().zip(&off.coords).map(|(&a, &b)| a + b).collect();
                let expect = map.row_of(&probe).unwrap_or(NO_ROW);
                assert_eq!(table.row(r, oi), expect);
            }
        }
    }
}
