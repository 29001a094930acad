//! State spaces, a-priori probabilities and configuration grids.
//!
//! Every space here is a finite list of atoms. Continuous spaces (the circle,
//! the unit interval) are represented by uniform quadrature nodes, and the
//! discrete quadrature measure is treated as *the* a-priori measure, so all
//! operator identities hold to floating point precision.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default upper bound on the number of tuples in a dense grid.
pub const DEFAULT_GRID_CAP: usize = 1_000_000;

/// Weight sums further than this from 1 are rejected unless renormalization
/// is requested.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Integer labels `0..d` with the discrete 0/1 metric.
    FiniteAlphabet,
    /// Angles `2πj/N` with arc-length metric.
    CircleGrid,
    /// Left quadrature nodes `j/N` of `[0,1]` with the absolute-difference metric.
    IntervalGrid,
    /// Strictly increasing points of `[0,1)` accumulating at 1.
    TruncatedCountable,
}

impl SpaceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SpaceKind::FiniteAlphabet => "finite",
            SpaceKind::CircleGrid => "circle",
            SpaceKind::IntervalGrid => "interval",
            SpaceKind::TruncatedCountable => "countable",
        }
    }

    /// Spaces whose atoms are genuinely discrete symbols (cylinder entropies
    /// make sense there).
    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            SpaceKind::FiniteAlphabet | SpaceKind::TruncatedCountable
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    kind: SpaceKind,
    atoms: Vec<f64>,
    /// Accumulation point for truncated countable alphabets.
    accumulation: Option<f64>,
}

impl StateSpace {
    pub fn finite(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSpace("alphabet must be non-empty".into()));
        }
        Ok(StateSpace {
            kind: SpaceKind::FiniteAlphabet,
            atoms: (0..d).map(|i| i as f64).collect(),
            accumulation: None,
        })
    }

    pub fn circle(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpace("circle grid needs at least one node".into()));
        }
        Ok(StateSpace {
            kind: SpaceKind::CircleGrid,
            atoms: (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect(),
            accumulation: None,
        })
    }

    pub fn interval(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpace("interval grid needs at least one node".into()));
        }
        Ok(StateSpace {
            kind: SpaceKind::IntervalGrid,
            atoms: (0..n).map(|j| j as f64 / n as f64).collect(),
            accumulation: None,
        })
    }

    /// The first `n` points `z_i = 1 - 2^{-i}` of a sequence in `[0,1)`
    /// accumulating at 1. `z_0 = 0`.
    pub fn truncated_countable(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpace("countable alphabet needs at least one atom".into()));
        }
        let atoms = (0..n).map(|i| 1.0 - 0.5f64.powi(i as i32)).collect();
        Self::countable_from_atoms(atoms)
    }

    pub fn countable_from_atoms(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidSpace("countable alphabet needs at least one atom".into()));
        }
        if atoms.iter().any(|z| !(0.0..1.0).contains(z)) {
            return Err(Error::InvalidSpace("countable atoms must lie in [0,1)".into()));
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpace(
                "countable atoms must be strictly increasing".into(),
            ));
        }
        Ok(StateSpace {
            kind: SpaceKind::TruncatedCountable,
            atoms,
            accumulation: Some(1.0),
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> f64 {
        self.atoms[i]
    }

    pub fn accumulation(&self) -> Option<f64> {
        self.accumulation
    }

    /// Distance between two points of the underlying space (not necessarily atoms).
    pub fn point_distance(&self, a: f64, b: f64) -> f64 {
        match self.kind {
            SpaceKind::FiniteAlphabet => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            SpaceKind::CircleGrid => {
                // ordered so that d(a, b) and d(b, a) round identically
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let d = (hi - lo).rem_euclid(2.0 * PI);
                d.min(2.0 * PI - d)
            }
            SpaceKind::IntervalGrid | SpaceKind::TruncatedCountable => (a - b).abs(),
        }
    }

    pub fn atom_distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.point_distance(self.atoms[i], self.atoms[j])
        }
    }

    /// Diameter of the compact space the atoms approximate.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            SpaceKind::FiniteAlphabet => {
                if self.atoms.len() > 1 {
                    1.0
                } else {
                    0.0
                }
            }
            SpaceKind::CircleGrid => PI,
            SpaceKind::IntervalGrid | SpaceKind::TruncatedCountable => 1.0,
        }
    }
}

/// How to build an a-priori probability.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSpec {
    /// Uniform over `d` labels.
    Uniform { d: usize },
    /// Explicit weights on a finite alphabet.
    Weights {
        weights: Vec<f64>,
        auto_renormalize: bool,
    },
    /// `n` equally spaced nodes on the circle, weight `1/n` each.
    Circle { n: usize },
    /// `n` left nodes of `[0,1]`, weight `1/n` each.
    Interval { n: usize },
    /// `p_i ∝ q^i` on the first `n` atoms of a countable alphabet.
    Geometric { q: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AprioriMeasure {
    space: StateSpace,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl AprioriMeasure {
    pub fn new(space: StateSpace, weights: Vec<f64>, auto_renormalize: bool) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {} atoms",
                weights.len(),
                space.len()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidMeasure(format!(
                "weight {i} is {w}; all weights must be positive"
            )));
        }
        let total: f64 = weights.iter().sum();
        let weights = if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            if !auto_renormalize {
                return Err(Error::InvalidMeasure(format!(
                    "weights sum to {total}, not 1"
                )));
            }
            weights.iter().map(|w| w / total).collect()
        } else if total != 1.0 {
            weights.iter().map(|w| w / total).collect()
        } else {
            weights
        };
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(AprioriMeasure {
            space,
            weights,
            log_weights,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Log of the product weight `ν^r` of a tuple.
    pub fn tuple_log_weight(&self, tuple: &[usize]) -> f64 {
        tuple.iter().map(|&i| self.log_weights[i]).sum()
    }
}

pub fn build_apriori(spec: &MeasureSpec) -> Result<AprioriMeasure> {
    match spec {
        MeasureSpec::Uniform { d } => {
            let space = StateSpace::finite(*d)?;
            AprioriMeasure::new(space, vec![1.0 / *d as f64; *d], false)
        }
        MeasureSpec::Weights {
            weights,
            auto_renormalize,
        } => {
            let space = StateSpace::finite(weights.len())?;
            AprioriMeasure::new(space, weights.clone(), *auto_renormalize)
        }
        MeasureSpec::Circle { n } => {
            let space = StateSpace::circle(*n)?;
            AprioriMeasure::new(space, vec![1.0 / *n as f64; *n], false)
        }
        MeasureSpec::Interval { n } => {
            let space = StateSpace::interval(*n)?;
            AprioriMeasure::new(space, vec![1.0 / *n as f64; *n], false)
        }
        MeasureSpec::Geometric { q, n } => {
            if !(*q > 0.0 && *q < 1.0) {
                return Err(Error::InvalidMeasure(format!(
                    "geometric ratio must lie in (0,1), got {q}"
                )));
            }
            let space = StateSpace::truncated_countable(*n)?;
            let raw: Vec<f64> = (0..*n).map(|i| q.powi(i as i32)).collect();
            AprioriMeasure::new(space, raw, true)
        }
    }
}

/// `Σ_{n=1..depth} 2^{-n} d_M(x_n, y_n)` on tuples of atom indices.
pub fn truncated_metric(space: &StateSpace, x: &[usize], y: &[usize], depth: usize) -> Result<f64> {
    if depth > x.len() || depth > y.len() {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} exceeds tuple lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut scale = 1.0;
    let mut total = 0.0;
    for n in 0..depth {
        scale *= 0.5;
        total += scale * space.atom_distance(x[n], y[n]);
    }
    Ok(total)
}

/// All `rank`-tuples of atoms in lexicographic order, first coordinate most
/// significant: index of `(a_{i_1}, ..., a_{i_r})` is `Σ i_j n^{r-j}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigurationGrid {
    n_atoms: usize,
    rank: usize,
    size: usize,
}

impl ConfigurationGrid {
    pub fn new(n_atoms: usize, rank: usize) -> Result<Self> {
        Self::with_cap(n_atoms, rank, DEFAULT_GRID_CAP)
    }

    pub fn with_cap(n_atoms: usize, rank: usize, cap: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidArgument("grid rank must be at least 1".into()));
        }
        if n_atoms == 0 {
            return Err(Error::InvalidSpace("grid over an empty alphabet".into()));
        }
        let size = (n_atoms as u128).checked_pow(rank as u32).unwrap_or(u128::MAX);
        if size > cap as u128 {
            return Err(Error::GridCap { size, cap });
        }
        Ok(ConfigurationGrid {
            n_atoms,
            rank,
            size: size as usize,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn index_of(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.rank);
        tuple.iter().fold(0, |acc, &i| acc * self.n_atoms + i)
    }

    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = index % self.n_atoms;
            index /= self.n_atoms;
        }
    }

    pub fn tuple(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.rank];
        self.decode_into(index, &mut out);
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size).map(move |i| self.tuple(i))
    }
}

/// `log ν^r(b)` for every block `b` of the rank-`rank` grid.
pub fn log_product_weights(nu: &AprioriMeasure, rank: usize) -> Vec<f64> {
    let lw = nu.log_weights();
    let mut out = vec![0.0];
    for _ in 0..rank {
        out = out
            .iter()
            .flat_map(|p| lw.iter().map(move |w| p + w))
            .collect();
    }
    out
}

pub fn enumerate_grid(space: &StateSpace, rank: usize) -> Result<ConfigurationGrid> {
    ConfigurationGrid::new(space.len(), rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_labels() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 2 }).unwrap();
        assert_eq!(nu.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn circle_quadrature_nodes() {
        let nu = build_apriori(&MeasureSpec::Circle { n: 4 }).unwrap();
        let atoms = nu.space().atoms();
        for (a, b) in atoms.iter().zip([0.0, PI / 2.0, PI, 3.0 * PI / 2.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(nu.weights().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn geometric_weights() {
        let nu = build_apriori(&MeasureSpec::Geometric { q: 0.5, n: 3 }).unwrap();
        let expected = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (w, e) in nu.weights().iter().zip(expected) {
            assert!((w - e).abs() < 1e-15);
        }
        assert_eq!(nu.space().atoms(), &[0.0, 0.5, 0.75]);
    }

    #[test]
    fn rejects_bad_weights() {
        let neg = MeasureSpec::Weights {
            weights: vec![0.5, 0.0, 0.5],
            auto_renormalize: true,
        };
        assert!(build_apriori(&neg).is_err());
        let off = MeasureSpec::Weights {
            weights: vec![0.5, 0.6],
            auto_renormalize: false,
        };
        assert!(matches!(build_apriori(&off), Err(Error::InvalidMeasure(_))));
        let fixed = MeasureSpec::Weights {
            weights: vec![0.5, 0.6],
            auto_renormalize: true,
        };
        let nu = build_apriori(&fixed).unwrap();
        assert!((nu.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_examples() {
        let fin = StateSpace::finite(3).unwrap();
        assert_eq!(truncated_metric(&fin, &[1, 2], &[1, 2], 2).unwrap(), 0.0);
        assert_eq!(truncated_metric(&fin, &[1, 2], &[2, 2], 2).unwrap(), 0.5);

        let interval = StateSpace::interval(4).unwrap();
        // atoms 0, 0.25, 0.5, 0.75
        let d = truncated_metric(&interval, &[2, 0], &[0, 1], 2).unwrap();
        assert!((d - 0.3125).abs() < 1e-15);

        assert!(truncated_metric(&fin, &[0], &[1], 2).is_err());
    }

    #[test]
    fn circle_arc_length() {
        let c = StateSpace::circle(8).unwrap();
        assert!((c.atom_distance(0, 7) - PI / 4.0).abs() < 1e-14);
        assert!((c.atom_distance(0, 4) - PI).abs() < 1e-14);
    }

    #[test]
    fn grid_indexing() {
        let g = ConfigurationGrid::new(2, 1).unwrap();
        assert_eq!(g.size(), 2);
        let g = ConfigurationGrid::new(2, 3).unwrap();
        assert_eq!(g.size(), 8);
        assert_eq!(g.tuple(0), vec![0, 0, 0]);
        let g = ConfigurationGrid::new(3, 2).unwrap();
        assert_eq!(g.index_of(&[2, 1]), 7);
        assert_eq!(g.tuple(7), vec![2, 1]);
    }

    #[test]
    fn grid_cap_is_named() {
        match ConfigurationGrid::with_cap(10, 4, 1000) {
            Err(Error::GridCap { size, cap }) => {
                assert_eq!(size, 10_000);
                assert_eq!(cap, 1000);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn countable_atoms_validated() {
        assert!(StateSpace::countable_from_atoms(vec![0.0, 0.5, 0.5]).is_err());
        assert!(StateSpace::countable_from_atoms(vec![0.0, 1.0]).is_err());
        let s = StateSpace::truncated_countable(4).unwrap();
        assert_eq!(s.accumulation(), Some(1.0));
    }
}
