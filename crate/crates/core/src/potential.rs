//! Finite-range potentials and their diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{truncated_metric, AprioriMeasure, ConfigurationGrid, StateSpace, DEFAULT_GRID_CAP};

#[derive(Debug, Clone, PartialEq)]
pub enum Evaluator {
    /// Dense table over `k`-tuples of atom indices, lexicographic order.
    Table { n_atoms: usize, values: Vec<f64> },
    Constant(f64),
    /// `cos(x₂ − x₁ − α) + γ cos(2x₁)`.
    Xy { alpha: f64, gamma: f64 },
    /// `log(c/(1 − e^{−c}) · e^{−c x₁})`.
    ExpInterval { c: f64 },
    /// `−Σ_{i≤k} 2^{−i} d_M(x_i, 0)`.
    NegDistanceToZero,
    Scaled { beta: f64, inner: Box<Potential> },
}

/// A potential depending on the first `range` lattice coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    range: usize,
    evaluator: Evaluator,
}

impl Potential {
    pub fn table(n_atoms: usize, range: usize, values: Vec<f64>) -> Result<Self> {
        if range == 0 {
            return Err(Error::InvalidArgument("potential range must be at least 1".into()));
        }
        let grid = ConfigurationGrid::new(n_atoms, range)?;
        if values.len() != grid.size() {
            return Err(Error::InvalidArgument(format!(
                "table of range {range} over {n_atoms} atoms needs {} values, got {}",
                grid.size(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("table value {v} is not finite")));
        }
        Ok(Potential {
            range,
            evaluator: Evaluator::Table { n_atoms, values },
        })
    }

    pub fn constant(c: f64) -> Self {
        Potential {
            range: 1,
            evaluator: Evaluator::Constant(c),
        }
    }

    pub fn xy(alpha: f64, gamma: f64) -> Self {
        Potential {
            range: 2,
            evaluator: Evaluator::Xy { alpha, gamma },
        }
    }

    pub fn exp_interval(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("ExpInterval needs c > 0, got {c}")));
        }
        Ok(Potential {
            range: 1,
            evaluator: Evaluator::ExpInterval { c },
        })
    }

    pub fn neg_distance_to_zero(range: usize) -> Result<Self> {
        if range == 0 {
            return Err(Error::InvalidArgument("potential range must be at least 1".into()));
        }
        Ok(Potential {
            range,
            evaluator: Evaluator::NegDistanceToZero,
        })
    }

    pub fn scaled(&self, beta: f64) -> Self {
        Potential {
            range: self.range,
            evaluator: Evaluator::Scaled {
                beta,
                inner: Box::new(self.clone()),
            },
        }
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    /// Range used by the operators: range-1 potentials are lifted to range 2
    /// so the eigenfunction always lives on at least one coordinate.
    pub fn effective_range(&self) -> usize {
        self.range.max(2)
    }

    /// Evaluate at a tuple of atom indices.
    pub fn eval(&self, space: &StateSpace, tuple: &[usize]) -> Result<f64> {
        if tuple.len() != self.range {
            return Err(Error::Arity {
                expected: self.range,
                got: tuple.len(),
            });
        }
        if let Some(&i) = tuple.iter().find(|&&i| i >= space.len()) {
            return Err(Error::InvalidArgument(format!(
                "atom index {i} out of range for {} atoms",
                space.len()
            )));
        }
        Ok(self.eval_unchecked(space, tuple))
    }

    fn eval_unchecked(&self, space: &StateSpace, tuple: &[usize]) -> f64 {
        match &self.evaluator {
            Evaluator::Table { n_atoms, values } => {
                let idx = tuple.iter().fold(0, |acc, &i| acc * n_atoms + i);
                values[idx]
            }
            Evaluator::Scaled { beta, inner } => beta * inner.eval_unchecked(space, tuple),
            Evaluator::NegDistanceToZero => {
                let mut scale = 1.0;
                let mut total = 0.0;
                for &i in tuple {
                    scale *= 0.5;
                    total += scale * space.point_distance(space.atom(i), 0.0);
                }
                -total
            }
            _ => {
                let pts: Vec<f64> = tuple.iter().map(|&i| space.atom(i)).collect();
                self.eval_points_unchecked(&pts)
            }
        }
    }

    /// Evaluate an analytic builtin at arbitrary points of the state space.
    pub fn eval_points(&self, points: &[f64]) -> Result<f64> {
        if points.len() != self.range {
            return Err(Error::Arity {
                expected: self.range,
                got: points.len(),
            });
        }
        if !self.is_analytic() {
            return Err(Error::Unsupported(
                "point evaluation needs an analytic builtin".into(),
            ));
        }
        Ok(self.eval_points_unchecked(points))
    }

    fn eval_points_unchecked(&self, p: &[f64]) -> f64 {
        match &self.evaluator {
            Evaluator::Constant(c) => *c,
            Evaluator::Xy { alpha, gamma } => (p[1] - p[0] - alpha).cos() + gamma * (2.0 * p[0]).cos(),
            Evaluator::ExpInterval { c } => exp_interval_log_norm(*c) - c * p[0],
            Evaluator::Scaled { beta, inner } => beta * inner.eval_points_unchecked(p),
            Evaluator::Table { .. } | Evaluator::NegDistanceToZero => unreachable!(),
        }
    }

    /// True when the potential can be evaluated off the atom grid and has
    /// analytic coordinate derivatives.
    pub fn is_analytic(&self) -> bool {
        match &self.evaluator {
            Evaluator::Constant(_) | Evaluator::Xy { .. } | Evaluator::ExpInterval { .. } => true,
            Evaluator::Scaled { inner, .. } => inner.is_analytic(),
            Evaluator::Table { .. } | Evaluator::NegDistanceToZero => false,
        }
    }

    /// `D_j A` at a point (1-based coordinate). Coordinates beyond the range
    /// have derivative zero.
    pub fn coordinate_derivative(&self, points: &[f64], j: usize) -> Result<f64> {
        if points.len() != self.range {
            return Err(Error::Arity {
                expected: self.range,
                got: points.len(),
            });
        }
        if j == 0 {
            return Err(Error::InvalidArgument("coordinates are numbered from 1".into()));
        }
        if !self.is_analytic() {
            return Err(Error::Unsupported(
                "analytic derivatives exist only for the XY, ExpInterval and constant builtins".into(),
            ));
        }
        if j > self.range {
            return Ok(0.0);
        }
        Ok(self.derivative_unchecked(points, j))
    }

    fn derivative_unchecked(&self, p: &[f64], j: usize) -> f64 {
        match &self.evaluator {
            Evaluator::Constant(_) => 0.0,
            Evaluator::Xy { alpha, gamma } => {
                let s = (p[1] - p[0] - alpha).sin();
                if j == 1 {
                    s - 2.0 * gamma * (2.0 * p[0]).sin()
                } else {
                    -s
                }
            }
            Evaluator::ExpInterval { c } => -c,
            Evaluator::Scaled { beta, inner } => beta * inner.derivative_unchecked(p, j),
            Evaluator::Table { .. } | Evaluator::NegDistanceToZero => unreachable!(),
        }
    }

    /// Bound on the error made by truncating the infinite-range potential
    /// this builtin approximates.
    pub fn truncation_bound(&self, space: &StateSpace) -> f64 {
        match &self.evaluator {
            Evaluator::NegDistanceToZero => 0.5f64.powi(self.range as i32) * space.diameter(),
            Evaluator::Scaled { beta, inner } => beta.abs() * inner.truncation_bound(space),
            _ => 0.0,
        }
    }

    /// Dense table over `effective_range()`-tuples.
    pub fn tabulate(&self, space: &StateSpace) -> Result<PotentialTable> {
        self.tabulate_with_cap(space, DEFAULT_GRID_CAP)
    }

    pub fn tabulate_with_cap(&self, space: &StateSpace, cap: usize) -> Result<PotentialTable> {
        if let Evaluator::Table { n_atoms, .. } = &self.evaluator {
            if *n_atoms != space.len() {
                return Err(Error::InvalidArgument(format!(
                    "table is over {n_atoms} atoms but the space has {}",
                    space.len()
                )));
            }
        }
        let k = self.effective_range();
        let grid = ConfigurationGrid::with_cap(space.len(), k, cap)?;
        let mut values = Vec::with_capacity(grid.size());
        let mut tuple = vec![0; k];
        for t in 0..grid.size() {
            grid.decode_into(t, &mut tuple);
            values.push(self.eval_unchecked(space, &tuple[..self.range]));
        }
        PotentialTable::new(space.len(), k, values)
    }
}

/// `log(c / (1 − e^{−c}))`.
pub fn exp_interval_log_norm(c: f64) -> f64 {
    c.ln() - (-(-c).exp()).ln_1p()
}

/// A potential stored densely on `range`-tuples (range ≥ 2). This is the form
/// every solver works with.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    n_atoms: usize,
    range: usize,
    values: Vec<f64>,
}

impl PotentialTable {
    pub fn new(n_atoms: usize, range: usize, values: Vec<f64>) -> Result<Self> {
        if range < 2 {
            return Err(Error::InvalidArgument("tables need range at least 2".into()));
        }
        let grid = ConfigurationGrid::new(n_atoms, range)?;
        if grid.size() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.size(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("table value {v} is not finite")));
        }
        Ok(PotentialTable {
            n_atoms,
            range,
            values,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn range(&self) -> usize {
        self.range
    }

    /// Rank of the grid carrying eigenfunctions: `range − 1`.
    pub fn block_rank(&self) -> usize {
        self.range - 1
    }

    /// Number of blocks (`n^{range−1}`).
    pub fn n_blocks(&self) -> usize {
        self.values.len() / self.n_atoms
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize) -> f64 {
        self.values[t]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, beta: f64) -> PotentialTable {
        PotentialTable {
            n_atoms: self.n_atoms,
            range: self.range,
            values: self.values.iter().map(|v| beta * v).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> PotentialTable {
        PotentialTable {
            n_atoms: self.n_atoms,
            range: self.range,
            values: self.values.iter().enumerate().map(|(t, &v)| f(t, v)).collect(),
        }
    }

    /// Block of the first `range − 1` coordinates of tuple `t`.
    pub fn head(&self, t: usize) -> usize {
        t / self.n_atoms
    }

    /// Block of the last `range − 1` coordinates of tuple `t`.
    pub fn tail(&self, t: usize) -> usize {
        t % self.n_blocks()
    }

    /// Lift to a higher range by ignoring extra trailing coordinates.
    pub fn lift(&self, range: usize) -> Result<PotentialTable> {
        if range < self.range {
            return Err(Error::RankMismatch {
                expected: self.range,
                got: range,
            });
        }
        let extra = ConfigurationGrid::new(self.n_atoms, range - self.range + 1)?.size() / self.n_atoms;
        let mut values = Vec::with_capacity(self.values.len() * extra);
        for &v in &self.values {
            values.extend(std::iter::repeat(v).take(extra));
        }
        PotentialTable::new(self.n_atoms, range, values)
    }
}

pub fn eval_potential(a: &Potential, space: &StateSpace, tuple: &[usize]) -> Result<f64> {
    a.eval(space, tuple)
}

/// `S_n A = Σ_{j<n} A(w_{j+1} .. w_{j+k})` over a word of atom indices.
pub fn birkhoff_sum(a: &Potential, space: &StateSpace, word: &[usize], n: usize) -> Result<f64> {
    let k = a.range();
    if word.len() + 1 < n + k {
        return Err(Error::InvalidArgument(format!(
            "a Birkhoff sum of length {n} for range {k} needs {} coordinates, got {}",
            n + k - 1,
            word.len()
        )));
    }
    let mut total = 0.0;
    for j in 0..n {
        total += a.eval(space, &word[j..j + k])?;
    }
    Ok(total)
}

/// `max_x |Σ_a w_a e^{B(ax)} − 1|`.
pub fn normalization_residual(b: &PotentialTable, nu: &AprioriMeasure) -> f64 {
    let n = b.n_atoms();
    let blocks = b.n_blocks();
    let mut worst: f64 = 0.0;
    for x in 0..blocks {
        let mut s = 0.0;
        for a in 0..n {
            s += nu.weights()[a] * b.get(a * blocks + x).exp();
        }
        worst = worst.max((s - 1.0).abs());
    }
    worst
}

pub fn normalization_residual_of(b: &Potential, nu: &AprioriMeasure) -> Result<f64> {
    Ok(normalization_residual(&b.tabulate(nu.space())?, nu))
}

/// Exhaustive up to this many pairs, sampled beyond.
const HOLDER_PAIR_BUDGET: usize = 1 << 20;

/// Empirical Hölder constant `max |A(x) − A(y)| / d(x,y)^α` over pairs of
/// `rank`-tuples, using the metric truncated at depth `rank`. A lower bound on
/// the true constant.
pub fn holder_constant_estimate(a: &Potential, space: &StateSpace, rank: usize, alpha: f64) -> Result<f64> {
    if rank < a.range() {
        return Err(Error::RankMismatch {
            expected: a.range(),
            got: rank,
        });
    }
    let grid = ConfigurationGrid::new(space.len(), rank)?;
    let vals: Vec<f64> = (0..grid.size())
        .map(|i| a.eval_unchecked(space, &grid.tuple(i)[..a.range()]))
        .collect();
    holder_of_values(space, &grid, &vals, alpha)
}

/// Hölder estimate of an arbitrary function given on a grid.
pub fn holder_of_values(space: &StateSpace, grid: &ConfigurationGrid, vals: &[f64], alpha: f64) -> Result<f64> {
    let size = grid.size();
    if vals.len() != size {
        return Err(Error::RankMismatch {
            expected: size,
            got: vals.len(),
        });
    }
    let rank = grid.rank();
    let ratio = |i: usize, j: usize| -> f64 {
        let d = truncated_metric(space, &grid.tuple(i), &grid.tuple(j), rank).unwrap_or(0.0);
        if d > 0.0 {
            (vals[i] - vals[j]).abs() / d.powf(alpha)
        } else {
            0.0
        }
    };
    let mut best: f64 = 0.0;
    if size.saturating_mul(size) <= HOLDER_PAIR_BUDGET {
        for i in 0..size {
            for j in i + 1..size {
                best = best.max(ratio(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..HOLDER_PAIR_BUDGET {
            let i = rng.gen_range(0..size);
            // nearby pairs carry the largest ratios; sample them half the time
            let j = if rng.gen_bool(0.5) {
                let mut t = grid.tuple(i);
                let pos = rng.gen_range(0..rank);
                let step = if rng.gen_bool(0.5) { 1 } else { space.len() - 1 };
                t[pos] = (t[pos] + step) % space.len();
                grid.index_of(&t)
            } else {
                rng.gen_range(0..size)
            };
            best = best.max(ratio(i, j));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_apriori, MeasureSpec};
    use std::f64::consts::PI;

    #[test]
    fn builtin_values() {
        let circle = StateSpace::circle(2).unwrap();
        let xy = Potential::xy(0.0, 0.0);
        assert_eq!(xy.eval(&circle, &[0, 0]).unwrap(), 1.0);
        let xy1 = Potential::xy(0.0, 1.0);
        assert!(xy1.eval(&circle, &[0, 1]).unwrap().abs() < 1e-15);
        assert!(xy1.eval_points(&[0.0, PI]).unwrap().abs() < 1e-15);

        let interval = StateSpace::interval(4).unwrap();
        let e = Potential::exp_interval(1.0).unwrap();
        // log(1/(1 - e^{-1})), evaluated directly
        let expected = (1.0f64 / (1.0 - (-1.0f64).exp())).ln();
        assert!((e.eval(&interval, &[0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.45868).abs() < 1e-5);
    }

    #[test]
    fn arity_checked() {
        let s = StateSpace::finite(2).unwrap();
        assert!(matches!(
            Potential::xy(0.0, 0.0).eval(&s, &[0]),
            Err(Error::Arity { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn birkhoff_examples() {
        let s = StateSpace::finite(2).unwrap();
        let c = Potential::constant(0.7);
        let w = [0, 1, 1, 0, 1];
        assert!((birkhoff_sum(&c, &s, &w, 5).unwrap() - 3.5).abs() < 1e-15);

        let t = Potential::table(2, 2, vec![0.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!(birkhoff_sum(&t, &s, &[0, 1, 0], 2).unwrap(), 3.0);
        assert!(birkhoff_sum(&t, &s, &[0, 1], 2).is_err());

        let circle = StateSpace::circle(2).unwrap();
        let xy = Potential::xy(0.0, 0.0);
        assert!((birkhoff_sum(&xy, &circle, &[0, 1, 0], 2).unwrap() + 2.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_of_exp_interval_shrinks() {
        let e = Potential::exp_interval(1.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in [16, 64, 256] {
            let nu = build_apriori(&MeasureSpec::Interval { n }).unwrap();
            let r = normalization_residual_of(&e, &nu).unwrap();
            // left-endpoint rule: error ≈ c/(2N) for this integrand
            assert!(r < 1.0 / n as f64);
            assert!(r < prev);
            prev = r;
        }
        let nu = build_apriori(&MeasureSpec::Uniform { d: 3 }).unwrap();
        assert!(normalization_residual_of(&Potential::constant(0.0), &nu).unwrap() < 1e-15);
    }

    #[test]
    fn holder_examples() {
        let s = StateSpace::finite(2).unwrap();
        let c = Potential::constant(3.0);
        assert_eq!(holder_constant_estimate(&c, &s, 2, 1.0).unwrap(), 0.0);
        let t = Potential::table(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(holder_constant_estimate(&t, &s, 1, 1.0).unwrap(), 2.0);
        assert_eq!(holder_constant_estimate(&t, &s, 3, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn xy_holder_stable_under_refinement() {
        let xy = Potential::xy(0.0, 0.5);
        let a = holder_constant_estimate(&xy, &StateSpace::circle(16).unwrap(), 2, 1.0).unwrap();
        let b = holder_constant_estimate(&xy, &StateSpace::circle(32).unwrap(), 2, 1.0).unwrap();
        assert!(a.is_finite() && b.is_finite());
        assert!((a - b).abs() / b < 0.1, "{a} vs {b}");
    }

    #[test]
    fn derivatives() {
        let xy = Potential::xy(0.3, 0.5);
        let p = [0.4, 1.3];
        let h = 1e-5;
        for j in 1..=2 {
            let mut up = p;
            let mut dn = p;
            up[j - 1] += h;
            dn[j - 1] -= h;
            let fd = (xy.eval_points(&up).unwrap() - xy.eval_points(&dn).unwrap()) / (2.0 * h);
            assert!((fd - xy.coordinate_derivative(&p, j).unwrap()).abs() < 1e-9);
        }
        assert_eq!(xy.coordinate_derivative(&p, 3).unwrap(), 0.0);
        let t = Potential::table(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(matches!(t.coordinate_derivative(&[0.0], 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn tabulation_lifts_range_one() {
        let s = StateSpace::finite(2).unwrap();
        let t = Potential::table(2, 1, vec![0.0, 2.0]).unwrap().tabulate(&s).unwrap();
        assert_eq!(t.range(), 2);
        assert_eq!(t.values(), &[0.0, 0.0, 2.0, 2.0]);
        let l = t.lift(3).unwrap();
        assert_eq!(l.values(), &[0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn neg_distance_values() {
        let s = StateSpace::truncated_countable(3).unwrap(); // 0, 0.5, 0.75
        let a = Potential::neg_distance_to_zero(2).unwrap();
        assert!((a.eval(&s, &[1, 2]).unwrap() + (0.25 + 0.1875)).abs() < 1e-15);
        assert_eq!(a.truncation_bound(&s), 0.25);
    }
}
