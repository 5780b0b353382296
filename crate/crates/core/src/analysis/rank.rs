use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::fiber::{injectivity_scan, InjectivityOptions, InjectivityReport};
use super::sample::SampleBox;
use crate::lie::{LieTable, ObservabilityMap};
use crate::numeric::rank_info;

#[derive(Clone, Debug, Serialize)]
pub struct RankPoint {
    pub x: Vec<f64>,
    /// `None` where the Jacobian could not be evaluated.
    pub rank: Option<usize>,
    pub sigma_min: f64,
    /// `σ_min / σ_max`, compared against the rank tolerance.
    pub rel_sigma_min: f64,
}

/// A coordinate plane `x[axis] = value` on which every sample is rank deficient.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularSlice {
    pub axis: usize,
    pub value: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankReport {
    pub order: usize,
    pub n: usize,
    /// `min(order, n)`; a point is deficient when its rank is below this.
    pub full_rank: usize,
    pub rank_tol: f64,
    pub points: Vec<RankPoint>,
    /// Indices into `points` with rank below `full_rank`.
    pub deficient: Vec<usize>,
    pub undefined: usize,
    /// Smallest relative singular value over defined points.
    pub min_rel_sigma: f64,
    pub singular_slices: Vec<SingularSlice>,
    /// Deficient points not explained by any slice.
    pub isolated_deficient: usize,
}

impl RankReport {
    /// True when every defined point has rank `n` (an immersion on the samples).
    pub fn immersion_everywhere(&self) -> bool {
        self.points.iter().all(|p| p.rank.is_none_or(|r| r == self.n))
    }

    pub fn deficient_points(&self) -> impl Iterator<Item = &RankPoint> {
        self.deficient.iter().map(|&k| &self.points[k])
    }
}

/// SVD rank of `∂H_i/∂x` at each point.
pub fn rank_profile(map: &ObservabilityMap, points: &[Vec<f64>], rank_tol: f64) -> RankReport {
    let n = map.n();
    let full_rank = map.order.min(n);
    let ranked: Vec<RankPoint> = points
        .par_iter()
        .map(|x| match map.jacobian_at(x) {
            Ok(j) if j.iter().all(|v| v.is_finite()) => {
                let info = rank_info(&j, rank_tol);
                RankPoint { x: x.clone(), rank: Some(info.rank), sigma_min: info.sigma_min(), rel_sigma_min: info.relative_sigma_min() }
            }
            _ => RankPoint { x: x.clone(), rank: None, sigma_min: f64::NAN, rel_sigma_min: f64::NAN },
        })
        .collect();
    let deficient: Vec<usize> =
        (0..ranked.len()).filter(|&k| ranked[k].rank.is_some_and(|r| r < full_rank)).collect();
    let undefined = ranked.iter().filter(|p| p.rank.is_none()).count();
    let min_rel_sigma = ranked.iter().filter(|p| p.rank.is_some()).map(|p| p.rel_sigma_min).fold(f64::INFINITY, f64::min);

    let mut singular_slices = Vec::new();
    for axis in 0..n {
        let mut planes: BTreeMap<u64, (f64, usize, usize)> = BTreeMap::new();
        for p in ranked.iter().filter(|p| p.rank.is_some()) {
            let v = p.x[axis];
            let e = planes.entry((v + 0.0).to_bits()).or_insert((v, 0, 0));
            e.1 += 1;
            if p.rank.unwrap() < full_rank {
                e.2 += 1;
            }
        }
        let mut found: Vec<SingularSlice> = planes
            .into_values()
            .filter(|&(_, total, bad)| total >= 2 && bad == total)
            .map(|(value, samples, _)| SingularSlice { axis, value, samples })
            .collect();
        found.sort_by(|a, b| a.value.total_cmp(&b.value));
        singular_slices.extend(found);
    }
    let isolated_deficient = deficient
        .iter()
        .filter(|&&k| !singular_slices.iter().any(|s| ranked[k].x[s.axis] == s.value))
        .count();

    RankReport {
        order: map.order,
        n,
        full_rank,
        rank_tol,
        points: ranked,
        deficient,
        undefined,
        min_rel_sigma,
        singular_slices,
        isolated_deficient,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderEvidence {
    pub order: usize,
    pub immersion: bool,
    pub min_rel_sigma: f64,
    pub deficient_points: usize,
    pub collisions: usize,
}

impl OrderEvidence {
    pub fn new(rank: &RankReport, scan: &InjectivityReport) -> Self {
        Self {
            order: rank.order,
            immersion: rank.immersion_everywhere(),
            min_rel_sigma: rank.min_rel_sigma,
            deficient_points: rank.deficient.len(),
            collisions: scan.total_collisions,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderSearch {
    /// Smallest order whose map is an injective immersion on the samples.
    pub strong_order: Option<usize>,
    /// Smallest order whose map showed no collisions.
    pub weak_order: Option<usize>,
    pub evidence: Vec<OrderEvidence>,
}

impl OrderSearch {
    /// Orders from per-order evidence listed in increasing order.
    pub fn from_evidence(evidence: Vec<OrderEvidence>) -> Self {
        let weak_order = evidence.iter().find(|e| e.collisions == 0).map(|e| e.order);
        let strong_order = evidence.iter().find(|e| e.collisions == 0 && e.immersion).map(|e| e.order);
        Self { strong_order, weak_order, evidence }
    }
}

/// Searches orders `1..=max_order` for immersion (full rank `n` at every
/// sample) and injectivity.
pub fn strong_order_search(
    table: &mut LieTable,
    max_order: usize,
    sample: &SampleBox,
    neighbourhood: &SampleBox,
    rank_tol: f64,
    inj: &InjectivityOptions,
) -> OrderSearch {
    let points = sample.points();
    let mut evidence = Vec::new();
    for order in 1..=max_order {
        let map = table.observability_map(order);
        let rank = rank_profile(&map, &points, rank_tol);
        let scan = injectivity_scan(&map, &points, neighbourhood, inj);
        evidence.push(OrderEvidence::new(&rank, &scan));
    }
    OrderSearch::from_evidence(evidence)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lie::build_h;
    use crate::system::parse_system;

    fn example(f2: &str) -> Arc<crate::system::ControlAffineSystem> {
        let text = format!("system t\nstates x1 x2 x3\ninputs u\nf = [x2, {f2}, 1]\ng = [[0],[0],[1]]\nh = x1\n");
        Arc::new(parse_system(&text).unwrap())
    }

    #[test]
    fn example_one_order_three_drops_on_plane() {
        let b = SampleBox::uniform(vec![-1.0; 3], vec![1.0; 3], 9);
        let r = rank_profile(&build_h(&example("x3^3"), 3), &b.points(), 1e-8);
        for p in &r.points {
            assert_eq!(p.rank, Some(if p.x[2] == 0.0 { 2 } else { 3 }), "{:?}", p.x);
        }
        assert_eq!(r.singular_slices, vec![SingularSlice { axis: 2, value: 0.0, samples: 81 }]);
        assert_eq!(r.isolated_deficient, 0);
    }

    #[test]
    fn wide_maps_are_full_rank_but_not_immersions() {
        let b = SampleBox::uniform(vec![-1.0; 3], vec![1.0; 3], 3);
        let r = rank_profile(&build_h(&example("x3^3"), 2), &b.points(), 1e-8);
        assert!(r.deficient.is_empty());
        assert!(!r.immersion_everywhere());
    }

    #[test]
    fn linear_chain_has_order_two() {
        let sys = Arc::new(parse_system("states x1 x2\ninputs u\nf = [x2, 0]\ng = [[0],[1]]\nh = x1\n").unwrap());
        let b = SampleBox::uniform(vec![-1.0; 2], vec![1.0; 2], 7);
        let s = strong_order_search(&mut LieTable::new(sys), 3, &b, &b.inflate(0.05), 1e-8, &InjectivityOptions::default());
        assert_eq!(s.strong_order, Some(2));
        assert_eq!(s.weak_order, Some(2));
    }
}
