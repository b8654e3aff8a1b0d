use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positions of the fiber cores inside a `width × height` pixel grid.
///
/// Coordinates are 0-based pixel units and may be sub-pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreMap {
    width: usize,
    height: usize,
    positions: Vec<[f64; 2]>,
}

impl CoreMap {
    pub fn new(width: usize, height: usize, positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::param("core map must contain at least one core"));
        }
        let mut seen = HashSet::with_capacity(positions.len());
        for (i, p) in positions.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::param(format!("core {i} has a non-finite coordinate")));
            }
            if p[0] < 0.0 || p[1] < 0.0 || p[0] >= width as f64 || p[1] >= height as f64 {
                return Err(Error::param(format!(
                    "core {i} at ({}, {}) lies outside the {width}x{height} grid",
                    p[0], p[1]
                )));
            }
            if !seen.insert((p[0].to_bits(), p[1].to_bits())) {
                return Err(Error::param(format!("core {i} duplicates an earlier position")));
            }
        }
        Ok(CoreMap { width, height, positions })
    }

    /// Hexagonal lattice with the given center-to-center spacing, kept at least
    /// `margin` pixels from every border. `jitter` > 0 displaces each core by a
    /// uniform offset in `[-jitter, jitter]²` drawn from `seed`.
    pub fn hex_lattice(
        width: usize,
        height: usize,
        spacing: f64,
        margin: f64,
        jitter: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::param("lattice spacing must be positive"));
        }
        if !(margin >= 0.0) || !(jitter >= 0.0) {
            return Err(Error::param("margin and jitter must be non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let row_step = spacing * 3f64.sqrt() / 2.0;
        let (w, h) = (width as f64, height as f64);
        let mut positions = Vec::new();
        let mut row = 0usize;
        loop {
            let y = margin + row as f64 * row_step;
            if y >= h - margin {
                break;
            }
            let offset = if row % 2 == 1 { spacing / 2.0 } else { 0.0 };
            let mut col = 0usize;
            loop {
                let x = margin + offset + col as f64 * spacing;
                if x >= w - margin {
                    break;
                }
                let (mut px, mut py) = (x, y);
                if jitter > 0.0 {
                    px += rng.random_range(-jitter..=jitter);
                    py += rng.random_range(-jitter..=jitter);
                }
                positions.push([px.clamp(0.0, w - 1e-9), py.clamp(0.0, h - 1e-9)]);
                col += 1;
            }
            row += 1;
        }
        CoreMap::new(width, height, positions)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> [f64; 2] {
        self.positions[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(self.positions[i], self.positions[j])
    }

    /// Core position rounded to the nearest pixel, clamped to the grid.
    pub fn pixel(&self, i: usize) -> (usize, usize) {
        let [x, y] = self.positions[i];
        let px = (x.round() as usize).min(self.width - 1);
        let py = (y.round() as usize).min(self.height - 1);
        (px, py)
    }

    /// For every core, the cores (itself included) within `radius`, with distances.
    /// A non-positive or infinite radius returns all pairs.
    pub fn neighbors_within(&self, radius: f64) -> Vec<Vec<(usize, f64)>> {
        let n = self.len();
        if !(radius > 0.0) || !radius.is_finite() {
            return (0..n)
                .map(|i| (0..n).map(|j| (j, self.distance(i, j))).collect())
                .collect();
        }
        let cell = |p: [f64; 2]| ((p[0] / radius).floor() as i64, (p[1] / radius).floor() as i64);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &p) in self.positions.iter().enumerate() {
            buckets.entry(cell(p)).or_default().push(i);
        }
        (0..n)
            .map(|i| {
                let (cx, cy) = cell(self.positions[i]);
                let mut out = Vec::new();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(b) = buckets.get(&(cx + dx, cy + dy)) {
                            for &j in b {
                                let d = self.distance(i, j);
                                if d <= radius {
                                    out.push((j, d));
                                }
                            }
                        }
                    }
                }
                out.sort_by_key(|&(j, _)| j);
                out
            })
            .collect()
    }

    /// Indices of the `k` nearest other cores for each core (brute force within
    /// an expanding radius).
    pub fn k_nearest(&self, k: usize) -> Vec<Vec<usize>> {
        let n = self.len();
        let k = k.min(n.saturating_sub(1));
        (0..n)
            .map(|i| {
                if k == 0 {
                    return Vec::new();
                }
                let mut d: Vec<(f64, usize)> =
                    (0..n).filter(|&j| j != i).map(|j| (self.distance(i, j), j)).collect();
                d.select_nth_unstable_by(k - 1, |a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                });
                d.truncate(k);
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().map(|(_, j)| j).collect()
            })
            .collect()
    }

    /// Median nearest-neighbour distance, or 0 for a single core.
    pub fn median_spacing(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        let mut nn: Vec<f64> = self
            .k_nearest(1)
            .iter()
            .enumerate()
            .map(|(i, v)| self.distance(i, v[0]))
            .collect();
        nn.sort_by(f64::total_cmp);
        nn[nn.len() / 2]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self> {
        let positions = self.positions.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
        CoreMap::new(self.width, self.height, positions)
    }

    /// Fraction of image pixels occupied by core centers.
    pub fn coverage(&self) -> f64 {
        self.len() as f64 / (self.width * self.height) as f64
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_bounds_and_duplicates() {
        assert!(CoreMap::new(4, 4, vec![]).is_err());
        assert!(CoreMap::new(4, 4, vec![[4.0, 1.0]]).is_err());
        assert!(CoreMap::new(4, 4, vec![[-0.1, 1.0]]).is_err());
        assert!(CoreMap::new(4, 4, vec![[1.0, 1.0], [1.0, 1.0]]).is_err());
        assert!(CoreMap::new(4, 4, vec![[1.0, 1.0], [1.0, 1.5]]).is_ok());
    }

    #[test]
    fn hex_lattice_spacing() {
        let m = CoreMap::hex_lattice(64, 64, 3.3, 4.0, 0.0, 0).unwrap();
        assert!((m.median_spacing() - 3.3).abs() < 1e-9);
        for p in m.positions() {
            assert!(p[0] >= 4.0 && p[0] < 60.0 && p[1] >= 4.0 && p[1] < 60.0);
        }
        let cells = 56.0 * 56.0 / (3.3 * 3.3 * 3f64.sqrt() / 2.0);
        assert!((m.len() as f64 - cells).abs() / cells < 0.1, "{} vs {cells}", m.len());
    }

    #[test]
    fn acceptance_lattice_has_about_1400_cores() {
        let m = CoreMap::hex_lattice(128, 128, 3.3, 6.0, 0.0, 0).unwrap();
        assert!((1300..1500).contains(&m.len()), "{}", m.len());
    }

    #[test]
    fn bucketed_neighbors_match_brute_force() {
        let m = CoreMap::hex_lattice(40, 30, 3.3, 1.0, 0.8, 7).unwrap();
        let r = 7.5;
        let fast = m.neighbors_within(r);
        for i in 0..m.len() {
            let brute: Vec<usize> = (0..m.len()).filter(|&j| m.distance(i, j) <= r).collect();
            let got: Vec<usize> = fast[i].iter().map(|&(j, _)| j).collect();
            assert_eq!(got, brute);
        }
    }
}
