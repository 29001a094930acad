//! Periodic-orbit approximations of the pressure, recurrence ratios on
//! truncated countable alphabets and Birkhoff sups.
//!
//! All three are read off powers of the block transfer matrix
//! `B[b][σt] = w_{t_k} e^{A(t)}` (nodes are `(k−1)`-blocks). Closed walks of
//! length `n` in the block graph are exactly the period-`n` words, so
//! `tr Bⁿ = ∫ e^{S_nA(a^∞)} dνⁿ(a)` for every range.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potential::PotentialTable;
use crate::space::{AprioriMeasure, ConfigurationGrid, DEFAULT_GRID_CAP};
use crate::transfer::{SolverOptions, TransferOperator};

/// Dense block matrices larger than this are refused.
pub const MAX_DENSE_BLOCKS: usize = 1024;

/// Nonnegative square matrix stored as `e^{log_scale}·data`.
#[derive(Debug, Clone)]
struct ScaledMatrix {
    n: usize,
    data: Vec<f64>,
    log_scale: f64,
}

impl ScaledMatrix {
    fn mul(&self, other: &ScaledMatrix) -> ScaledMatrix {
        let n = self.n;
        let mut data: Vec<f64> = (0..n)
            .into_par_iter()
            .with_min_len(16)
            .flat_map_iter(|i| {
                let row = &self.data[i * n..(i + 1) * n];
                (0..n).map(move |j| {
                    let mut acc = 0.0;
                    for (k, r) in row.iter().enumerate() {
                        acc += r * other.data[k * n + j];
                    }
                    acc
                })
            })
            .collect();
        let m = data.iter().cloned().fold(0.0, f64::max);
        let mut log_scale = self.log_scale + other.log_scale;
        if m > 0.0 {
            data.iter_mut().for_each(|x| *x /= m);
            log_scale += m.ln();
        }
        ScaledMatrix { n, data, log_scale }
    }

    fn log_trace(&self) -> f64 {
        let t: f64 = (0..self.n).map(|i| self.data[i * self.n + i]).sum();
        t.ln() + self.log_scale
    }

    fn log_diag_sum(&self, nodes: &[usize]) -> f64 {
        let t: f64 = nodes.iter().map(|&i| self.data[i * self.n + i]).sum();
        t.ln() + self.log_scale
    }
}

fn block_matrix(table: &PotentialTable, nu: &AprioriMeasure) -> Result<ScaledMatrix> {
    let n = table.n_atoms();
    if n != nu.len() {
        return Err(Error::Provenance("potential and measure alphabets differ".into()));
    }
    let nb = table.n_blocks();
    if nb > MAX_DENSE_BLOCKS {
        return Err(Error::GridCap {
            size: nb as u128,
            cap: MAX_DENSE_BLOCKS,
        });
    }
    let lw = nu.log_weights();
    let logs: Vec<f64> = (0..table.values().len()).map(|t| lw[t % n] + table.get(t)).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut data = vec![0.0; nb * nb];
    for (t, l) in logs.iter().enumerate() {
        data[table.head(t) * nb + table.tail(t)] = (l - top).exp();
    }
    Ok(ScaledMatrix {
        n: nb,
        data,
        log_scale: top,
    })
}

/// `log tr Bⁿ` for `n = 1..=n_max`.
fn log_traces(b: &ScaledMatrix, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max);
    let mut p = b.clone();
    out.push(p.log_trace());
    for _ in 1..n_max {
        p = p.mul(b);
        out.push(p.log_trace());
    }
    out
}

/// `log Σ_{a ∈ Mⁿ} νⁿ(a) e^{S_nA(a^∞)}` by enumerating every word.
pub fn periodic_partition_exhaustive(table: &PotentialTable, nu: &AprioriMeasure, n: usize) -> Result<f64> {
    let d = nu.len();
    let grid = ConfigurationGrid::with_cap(d, n, DEFAULT_GRID_CAP)?;
    let k = table.range();
    let lw = nu.log_weights();
    let terms: Vec<f64> = (0..grid.size())
        .into_par_iter()
        .with_min_len(256)
        .map(|code| {
            let w = grid.tuple(code);
            let mut s = 0.0;
            for j in 0..n {
                let t = (0..k).fold(0, |acc, i| acc * d + w[(j + i) % n]);
                s += lw[w[j]] + table.get(t);
            }
            s
        })
        .collect();
    Ok(crate::numeric::log_sum_exp(&terms))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPoint {
    pub n: usize,
    /// `(1/n) log tr Bⁿ`.
    pub value: f64,
    /// The same quantity by word enumeration, where affordable.
    pub exhaustive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPressureSeries {
    pub points: Vec<PeriodicPoint>,
    pub log_lambda: f64,
}

impl PeriodicPressureSeries {
    /// `max n·|value_n − log λ|` over `n` in `[lo, hi]`.
    pub fn fitted_constant(&self, lo: usize, hi: usize) -> f64 {
        self.points
            .iter()
            .filter(|p| p.n >= lo && p.n <= hi)
            .map(|p| p.n as f64 * (p.value - self.log_lambda).abs())
            .fold(0.0, f64::max)
    }

    /// Largest gap between the trace and the enumeration.
    pub fn exhaustive_gap(&self) -> f64 {
        self.points
            .iter()
            .filter_map(|p| p.exhaustive.map(|e| (e - p.value).abs()))
            .fold(0.0, f64::max)
    }
}

/// `C = (k − 1)·osc(A) + |log min ψ|` bounds `n·|value_n − log λ|`: a periodic
/// word differs from an arbitrary continuation only in the last `k − 1`
/// windows, and `∫ e^{S_nA(ax)} dνⁿ` lies within `[min ψ, 1/min ψ]·λⁿ`.
pub fn periodic_rate_bound(table: &PotentialTable, min_log_psi: f64) -> f64 {
    (table.range() - 1) as f64 * (table.max() - table.min()) + min_log_psi.abs()
}

pub fn pressure_periodic(
    table: &PotentialTable,
    nu: &AprioriMeasure,
    n_list: &[usize],
    exhaustive_up_to: usize,
    opts: &SolverOptions,
) -> Result<PeriodicPressureSeries> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidArgument("period list must be non-empty and positive".into()));
    }
    let b = block_matrix(table, nu)?;
    let n_max = *n_list.iter().max().unwrap();
    let traces = log_traces(&b, n_max);
    let eig = TransferOperator::new(table, nu)?.principal(opts)?;
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let exhaustive = if n <= exhaustive_up_to {
            match periodic_partition_exhaustive(table, nu, n) {
                Ok(v) => Some(v / n as f64),
                Err(e) if e.is_resource_cap() => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        points.push(PeriodicPoint {
            n,
            value: traces[n - 1] / n as f64,
            exhaustive,
        });
    }
    Ok(PeriodicPressureSeries {
        points,
        log_lambda: eig.log_lambda,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceRatioSeries {
    pub anchor: usize,
    /// `(n, Z_n / λⁿ)`.
    pub points: Vec<(usize, f64)>,
    /// `M` fitted on the first half of the list: every early ratio lies in `[1/M, M]`.
    pub fitted_m: f64,
    /// Whether the second half stays inside `[1/M, M]`, widened by the
    /// eigenvalue tolerance.
    pub bounded: bool,
}

/// `Z_n(B, a) / λⁿ` where `Z_n` sums `e^{S_nB}` over period-`n` words starting
/// with `a` and `B = A + log p`.
pub fn recurrence_ratio(
    table: &PotentialTable,
    nu: &AprioriMeasure,
    anchor: usize,
    n_list: &[usize],
    opts: &SolverOptions,
) -> Result<RecurrenceRatioSeries> {
    if anchor >= nu.len() {
        return Err(Error::InvalidArgument(format!("anchor {anchor} is not an atom")));
    }
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidArgument("period list must be non-empty and positive".into()));
    }
    let eig = TransferOperator::new(table, nu)?.principal(opts)?;
    if !eig.log_lambda.is_finite() {
        return Err(Error::NonPositive("eigenvalue is zero".into()));
    }
    let b = block_matrix(table, nu)?;
    let nb = table.n_blocks();
    let per_symbol = nb / nu.len();
    let nodes: Vec<usize> = (anchor * per_symbol..(anchor + 1) * per_symbol).collect();
    let n_max = *n_list.iter().max().unwrap();
    let mut ratios = Vec::with_capacity(n_max);
    let mut p = b.clone();
    ratios.push(p.log_diag_sum(&nodes) - eig.log_lambda);
    for n in 2..=n_max {
        p = p.mul(&b);
        ratios.push(p.log_diag_sum(&nodes) - n as f64 * eig.log_lambda);
    }
    let points: Vec<(usize, f64)> = n_list.iter().map(|&n| (n, ratios[n - 1].exp())).collect();
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::NonPositive("no periodic orbit through the anchor".into()));
    }
    let half = points.len().div_ceil(2);
    let fitted_m = points[..half]
        .iter()
        .map(|&(_, r)| r.max(1.0 / r))
        .fold(1.0, f64::max);
    // log λ is only certified to the solver tolerance, so `λⁿ` drifts by `n·δ`.
    let delta = opts.tol * (1.0 + table.sup_norm());
    let bounded = points[half..].iter().all(|&(n, r)| {
        let slack = (n as f64 * delta).exp() * (1.0 + 1e-12);
        r <= fitted_m * slack && r * slack >= 1.0 / fitted_m
    });
    Ok(RecurrenceRatioSeries {
        anchor,
        points,
        fitted_m,
        bounded,
    })
}

/// Max-plus matrix over block nodes, `-inf` where there is no edge.
fn maxplus_matrix(table: &PotentialTable) -> Result<(usize, Vec<f64>)> {
    let nb = table.n_blocks();
    if nb > MAX_DENSE_BLOCKS {
        return Err(Error::GridCap {
            size: nb as u128,
            cap: MAX_DENSE_BLOCKS,
        });
    }
    let mut m = vec![f64::NEG_INFINITY; nb * nb];
    for t in 0..table.values().len() {
        m[table.head(t) * nb + table.tail(t)] = table.get(t);
    }
    Ok((nb, m))
}

fn maxplus_mul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .with_min_len(16)
        .flat_map_iter(|i| {
            (0..n).map(move |j| {
                let mut best = f64::NEG_INFINITY;
                for k in 0..n {
                    let v = a[i * n + k] + b[k * n + j];
                    if v > best {
                        best = v;
                    }
                }
                best
            })
        })
        .collect()
}

/// `(1/n) max S_nA` over period-`n` words, for `n = 1..=n_max`.
pub fn birkhoff_sup_series(table: &PotentialTable, n_max: usize) -> Result<Vec<f64>> {
    let (nb, m) = maxplus_matrix(table)?;
    let mut p = m.clone();
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        if n > 1 {
            p = maxplus_mul(nb, &p, &m);
        }
        let best = (0..nb).map(|i| p[i * nb + i]).fold(f64::NEG_INFINITY, f64::max);
        out.push(best / n as f64);
    }
    Ok(out)
}

pub fn birkhoff_sup(table: &PotentialTable, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    Ok(*birkhoff_sup_series(table, n)?.last().unwrap())
}

/// `(1/n) sup_x S_nA(x)` over all configurations, not only periodic ones.
pub fn birkhoff_sup_free(table: &PotentialTable, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let (nb, m) = maxplus_matrix(table)?;
    let mut v: Vec<f64> = vec![0.0; nb];
    for _ in 0..n {
        v = (0..nb)
            .map(|j| (0..nb).map(|i| v[i] + m[i * nb + j]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
    }
    Ok(v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / n as f64)
}
