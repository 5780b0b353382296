use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::numeric::rng;

/// Removes points within `radius` of `center` when projected on `axes`.
///
/// `axes = [0, 1]`, `center = [0, 0]` cuts a tube around the line `x1 = x2 = 0`;
/// a single axis cuts a slab.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub axes: Vec<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Exclusion {
    pub fn excludes(&self, x: &[f64]) -> bool {
        let d2: f64 = self.axes.iter().zip(&self.center).map(|(&a, c)| (x[a] - c).powi(2)).sum();
        d2 < self.radius * self.radius
    }
}

/// Axis-aligned sampling region with grid and random samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Grid points per axis; 1 means the axis midpoint only.
    pub grid: Vec<usize>,
    /// Additional uniformly random samples.
    pub random: usize,
    pub seed: u64,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BoxError {
    #[error("box bounds, grid counts and state dimension disagree ({0})")]
    Dimension(String),
    #[error("axis {0}: lower bound must be below upper bound")]
    EmptyAxis(usize),
    #[error("axis {0}: grid count must be at least 1")]
    ZeroGrid(usize),
    #[error("exclusion references axis {0} outside the box")]
    ExclusionAxis(usize),
}

impl SampleBox {
    /// Box with the same grid count on every axis and no random samples.
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>, grid: usize) -> Self {
        let n = lower.len();
        Self { lower, upper, grid: vec![grid; n], random: 0, seed: 0, exclusions: Vec::new() }
    }

    pub fn with_random(mut self, random: usize, seed: u64) -> Self {
        self.random = random;
        self.seed = seed;
        self
    }

    pub fn with_exclusion(mut self, ex: Exclusion) -> Self {
        self.exclusions.push(ex);
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self, n: usize) -> Result<(), BoxError> {
        if self.lower.len() != n || self.upper.len() != n || self.grid.len() != n {
            return Err(BoxError::Dimension(format!(
                "state dimension {n}, {} lower, {} upper, {} grid entries",
                self.lower.len(),
                self.upper.len(),
                self.grid.len()
            )));
        }
        for k in 0..n {
            if !(self.lower[k] < self.upper[k]) {
                return Err(BoxError::EmptyAxis(k));
            }
            if self.grid[k] == 0 {
                return Err(BoxError::ZeroGrid(k));
            }
        }
        for ex in &self.exclusions {
            if let Some(&a) = ex.axes.iter().find(|&&a| a >= n) {
                return Err(BoxError::ExclusionAxis(a));
            }
            if ex.axes.len() != ex.center.len() {
                return Err(BoxError::Dimension("exclusion axes and center differ in length".into()));
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| *l <= *v && *v <= *u)
    }

    /// Inside the bounds and outside every exclusion.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.in_bounds(x) && !self.exclusions.iter().any(|e| e.excludes(x))
    }

    /// Grid coordinate `k` of `count` on axis `axis`; exact at both ends and,
    /// for symmetric bounds with odd counts, exactly zero in the middle.
    pub fn axis_value(&self, axis: usize, k: usize, count: usize) -> f64 {
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        if count == 1 {
            return 0.5 * (lo + hi);
        }
        let t = k as f64 / (count - 1) as f64;
        lo * (1.0 - t) + hi * t
    }

    /// Grid points (first axis slowest) that pass the exclusions.
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        self.grid_with(&self.grid)
    }

    /// Like [`grid_points`](Self::grid_points) with other per-axis counts.
    pub fn grid_with(&self, counts: &[usize]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let x: Vec<f64> = (0..n).map(|a| self.axis_value(a, idx[a], counts[a])).collect();
            if self.contains(&x) {
                out.push(x);
            }
            for a in (0..n).rev() {
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    /// `count` seeded uniform points passing the exclusions.
    pub fn random_points_with(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng(seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count && attempts < count.saturating_mul(100).max(1000) {
            attempts += 1;
            let x: Vec<f64> = (0..self.dim()).map(|a| r.gen_range(self.lower[a]..=self.upper[a])).collect();
            if self.contains(&x) {
                out.push(x);
            }
        }
        out
    }

    pub fn random_points(&self) -> Vec<Vec<f64>> {
        self.random_points_with(self.random, self.seed)
    }

    /// Grid points followed by random points.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut p = self.grid_points();
        p.extend(self.random_points());
        p
    }

    /// Box enlarged by `margin` times the width on each side; used for the
    /// open neighbourhood of the analysis region.
    pub fn inflate(&self, margin: f64) -> SampleBox {
        let mut b = self.clone();
        for k in 0..self.dim() {
            let w = self.upper[k] - self.lower[k];
            b.lower[k] -= margin * w;
            b.upper[k] += margin * w;
        }
        b
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for k in 0..x.len() {
            x[k] = x[k].clamp(self.lower[k], self.upper[k]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_grid_hits_zero_exactly() {
        let b = SampleBox::uniform(vec![-1.0; 3], vec![1.0; 3], 41);
        let pts = b.grid_points();
        assert_eq!(pts.len(), 41 * 41 * 41);
        assert_eq!(pts.iter().filter(|p| p[2] == 0.0).count(), 41 * 41);
        assert_eq!(pts[0], vec![-1.0; 3]);
        assert_eq!(pts.last().unwrap(), &vec![1.0; 3]);
    }

    #[test]
    fn tube_exclusion() {
        let b = SampleBox::uniform(vec![-1.0; 3], vec![1.0; 3], 5).with_exclusion(Exclusion {
            axes: vec![0, 1],
            center: vec![0.0, 0.0],
            radius: 0.3,
        });
        let pts = b.grid_points();
        assert_eq!(pts.len(), 125 - 5);
        assert!(pts.iter().all(|p| p[0].hypot(p[1]) >= 0.3));
    }

    #[test]
    fn random_points_are_seeded() {
        let b = SampleBox::uniform(vec![0.0; 2], vec![1.0; 2], 2).with_random(50, 9);
        assert_eq!(b.random_points(), b.random_points());
        assert_ne!(b.random_points(), b.clone().with_random(50, 10).random_points());
        assert!(b.random_points().iter().all(|p| b.contains(p)));
    }

    #[test]
    fn validation() {
        let mut b = SampleBox::uniform(vec![0.0; 2], vec![1.0; 2], 2);
        assert!(b.validate(2).is_ok());
        assert!(matches!(b.validate(3), Err(BoxError::Dimension(_))));
        b.upper[1] = 0.0;
        assert_eq!(b.validate(2), Err(BoxError::EmptyAxis(1)));
    }
}
