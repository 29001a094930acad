//! The Ruelle operator on block functions and its principal eigendata.
//!
//! A potential of (effective) range `k` is a table over `k`-tuples; functions
//! live on blocks of `r = k − 1` coordinates. For a full tuple `t` (index in
//! the `k`-grid) the leading block is `t / n` and the trailing block is
//! `t mod n^r`.
//!
//! * `L` (the Ruelle operator) writes to the trailing block and reads the
//!   leading one: `(Lφ)(x) = Σ_a w_a e^{A(ax)} φ(ax)`.
//! * `L̄` integrates over the last variable:
//!   `(L̄g)(x) = Σ_y w_y e^{A(xy)} g(σ(xy))`. Its principal eigenfunction is the
//!   density of the eigenmeasure `ρ` against `ν^r`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{argmax, extrapolate_to_zero, log_add_exp, max_of};
use crate::potential::{Potential, PotentialTable};
use crate::space::{AprioriMeasure, ConfigurationGrid};

/// Below this many tuples operator application stays on one thread.
const PAR_THRESHOLD: usize = 1 << 14;

/// A real function on the grid of blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: ConfigurationGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: ConfigurationGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::RankMismatch {
                expected: grid.size(),
                got: values.len(),
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: ConfigurationGrid, c: f64) -> Self {
        GridFunction {
            values: vec![c; grid.size()],
            grid,
        }
    }

    pub fn grid(&self) -> &ConfigurationGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Power,
    Contraction,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Power => "power",
            Method::Contraction => "contraction",
        }
    }
}

/// Values reported at every `s` of the contraction schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionStep {
    pub s: f64,
    pub log_lambda: f64,
    /// `(1 − s)·max u_s`; equals `log_lambda` by construction.
    pub scaled_max: f64,
    /// `max u_s`.
    pub max_u: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// `log λ`; λ itself overflows at large β.
    pub log_lambda: f64,
    /// `log ψ`, with maximum exactly 0.
    pub log_psi: Vec<f64>,
    pub grid: ConfigurationGrid,
    pub method: Method,
    pub iterations: usize,
    /// `‖Lψ − λψ‖_∞ / λ`.
    pub residual: f64,
    /// Contraction only: per-`s` trace.
    pub schedule: Vec<ContractionStep>,
    /// Contraction only: values extrapolated to `s → 1`.
    pub extrapolated: Option<(f64, Vec<f64>)>,
}

impl EigenPair {
    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    pub fn psi(&self) -> Vec<f64> {
        self.log_psi.iter().map(|v| v.exp()).collect()
    }

    pub fn psi_function(&self) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.psi(),
        }
    }

    /// Extrapolated values if present, final values otherwise.
    pub fn best_log_lambda(&self) -> f64 {
        self.extrapolated.as_ref().map_or(self.log_lambda, |e| e.0)
    }

    pub fn best_log_psi(&self) -> &[f64] {
        self.extrapolated.as_ref().map_or(&self.log_psi, |e| &e.1)
    }
}

/// The eigenmeasure `ρ` on blocks: `ρ(b) = ν^r(b)·ḡ(b)`, scaled so `Σ ψρ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenMeasure {
    /// `log ḡ`, the dual eigenfunction (density against `ν^r`), max 0.
    pub log_density: Vec<f64>,
    /// `log ρ(b)` per block.
    pub log_weights: Vec<f64>,
    pub total_mass: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl EigenMeasure {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|v| v.exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `max |log Lψ − log λ − log ψ| ≤ tol·(1 + ‖A‖_∞)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// The operator pair `(L, L̄)` for one table and one a-priori measure.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    n: usize,
    blocks: usize,
    rank: usize,
    /// `log w_{t_1} + A(t)`.
    fwd: Vec<f64>,
    /// `log w_{t_k} + A(t)`.
    bwd: Vec<f64>,
    sup_a: f64,
}

impl TransferOperator {
    pub fn new(table: &PotentialTable, nu: &AprioriMeasure) -> Result<Self> {
        let n = table.n_atoms();
        if n != nu.len() {
            return Err(Error::Provenance(format!(
                "potential over {n} atoms, measure over {}",
                nu.len()
            )));
        }
        let blocks = table.n_blocks();
        let lw = nu.log_weights();
        let vals = table.values();
        let fwd = (0..vals.len()).map(|t| lw[t / blocks] + vals[t]).collect();
        let bwd = (0..vals.len()).map(|t| lw[t % n] + vals[t]).collect();
        Ok(TransferOperator {
            n,
            blocks,
            rank: table.block_rank(),
            fwd,
            bwd,
            sup_a: table.sup_norm(),
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks
    }

    pub fn grid(&self) -> ConfigurationGrid {
        ConfigurationGrid::with_cap(self.n, self.rank, usize::MAX).expect("grid already fits")
    }

    fn map_blocks(&self, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
        if self.fwd.len() >= PAR_THRESHOLD {
            (0..self.blocks).into_par_iter().map(f).collect()
        } else {
            (0..self.blocks).map(f).collect()
        }
    }

    /// `log L e^{s·u}` (with `s = 1` this is `log L e^u`).
    pub fn apply_log_scaled(&self, s: f64, log_phi: &[f64]) -> Vec<f64> {
        let (n, blocks) = (self.n, self.blocks);
        self.map_blocks(|out| {
            let mut m = f64::NEG_INFINITY;
            for a in 0..n {
                let t = a * blocks + out;
                m = m.max(self.fwd[t] + s * log_phi[t / n]);
            }
            if m == f64::NEG_INFINITY {
                return m;
            }
            let mut acc = 0.0;
            for a in 0..n {
                let t = a * blocks + out;
                acc += (self.fwd[t] + s * log_phi[t / n] - m).exp();
            }
            m + acc.ln()
        })
    }

    pub fn apply_log(&self, log_phi: &[f64]) -> Vec<f64> {
        self.apply_log_scaled(1.0, log_phi)
    }

    /// `log L̄ e^g`.
    pub fn apply_dual_log(&self, log_g: &[f64]) -> Vec<f64> {
        let (n, blocks) = (self.n, self.blocks);
        self.map_blocks(|out| {
            let mut m = f64::NEG_INFINITY;
            for y in 0..n {
                let t = out * n + y;
                m = m.max(self.bwd[t] + log_g[t % blocks]);
            }
            if m == f64::NEG_INFINITY {
                return m;
            }
            let mut acc = 0.0;
            for y in 0..n {
                let t = out * n + y;
                acc += (self.bwd[t] + log_g[t % blocks] - m).exp();
            }
            m + acc.ln()
        })
    }

    /// Linear application on arbitrary-sign functions.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let (n, blocks) = (self.n, self.blocks);
        self.map_blocks(|out| {
            let mut acc = 0.0;
            for a in 0..n {
                let t = a * blocks + out;
                acc += self.fwd[t].exp() * phi[t / n];
            }
            acc
        })
    }

    /// Linear application of `L̄`.
    pub fn apply_dual(&self, g: &[f64]) -> Vec<f64> {
        let (n, blocks) = (self.n, self.blocks);
        self.map_blocks(|out| {
            let mut acc = 0.0;
            for y in 0..n {
                let t = out * n + y;
                acc += self.bwd[t].exp() * g[t % blocks];
            }
            acc
        })
    }

    fn tolerance(&self, opts: &SolverOptions) -> f64 {
        opts.tol * (1.0 + self.sup_a)
    }

    /// Shifted power iteration in the log domain. Each step replaces `φ` by
    /// `Lφ/ℓ + φ` (ℓ the running eigenvalue estimate) and rescales to max 0.
    /// The shift leaves the principal eigenvector alone and damps eigenvalues
    /// near `−λ`, which appear for nearly periodic potentials at large β.
    fn power_log(&self, dual: bool, opts: &SolverOptions) -> Result<(f64, Vec<f64>, usize, f64)> {
        let apply = |v: &[f64]| {
            if dual {
                self.apply_dual_log(v)
            } else {
                self.apply_log(v)
            }
        };
        let tol = self.tolerance(opts);
        let mut phi = vec![0.0; self.blocks];
        let mut last = f64::INFINITY;
        for it in 0..opts.max_iter {
            let lphi = apply(&phi);
            let top = argmax(&phi);
            let log_l = lphi[top] - phi[top];
            let res = lphi
                .iter()
                .zip(&phi)
                .fold(0.0f64, |m, (a, b)| m.max((a - log_l - b).abs()));
            if !res.is_finite() {
                return Err(Error::Overflow {
                    beta: f64::NAN,
                    detail: "non-finite iterate in power iteration".into(),
                });
            }
            if res <= tol {
                return Ok((log_l, phi, it + 1, res));
            }
            last = res;
            let next: Vec<f64> = lphi
                .iter()
                .zip(&phi)
                .map(|(a, b)| log_add_exp(a - log_l, *b))
                .collect();
            let m = max_of(&next);
            phi = next.into_iter().map(|v| v - m).collect();
        }
        Err(Error::NotConverged {
            method: if dual { "dual power iteration" } else { "power iteration" }.into(),
            iterations: opts.max_iter,
            residual: last,
        })
    }

    /// `‖Lψ − λψ‖_∞ / λ` for `ψ = e^{log_psi}`.
    pub fn sup_residual(&self, log_lambda: f64, log_psi: &[f64]) -> f64 {
        let l = self.apply_log(log_psi);
        l.iter()
            .zip(log_psi)
            .fold(0.0, |m, (a, b)| m.max(((a - log_lambda).exp() - b.exp()).abs()))
    }

    pub fn principal(&self, opts: &SolverOptions) -> Result<EigenPair> {
        let (log_lambda, log_psi, iterations, _) = self.power_log(false, opts)?;
        let residual = self.sup_residual(log_lambda, &log_psi);
        Ok(EigenPair {
            log_lambda,
            log_psi,
            grid: self.grid(),
            method: Method::Power,
            iterations,
            residual,
            schedule: Vec::new(),
            extrapolated: None,
        })
    }

    pub fn eigenmeasure(&self, eig: &EigenPair, nu: &AprioriMeasure, opts: &SolverOptions) -> Result<EigenMeasure> {
        let (log_mu, log_g, iterations, residual) = self.power_log(true, opts)?;
        let _ = log_mu;
        let grid = self.grid();
        let mut tuple = vec![0; self.rank];
        let log_nu: Vec<f64> = (0..self.blocks)
            .map(|b| {
                grid.decode_into(b, &mut tuple);
                nu.tuple_log_weight(&tuple)
            })
            .collect();
        let raw: Vec<f64> = (0..self.blocks).map(|b| log_nu[b] + log_g[b]).collect();
        let pair: Vec<f64> = raw.iter().zip(&eig.log_psi).map(|(a, b)| a + b).collect();
        let log_c = crate::numeric::log_sum_exp(&pair);
        let log_weights: Vec<f64> = raw.iter().map(|v| v - log_c).collect();
        let total_mass = crate::numeric::log_sum_exp(&log_weights).exp();
        Ok(EigenMeasure {
            log_density: log_g,
            log_weights,
            total_mass,
            iterations,
            residual,
        })
    }

    /// Fixed point of `T_s(u) = log L e^{s u}` for one `s`, iterated in the
    /// coordinates `u = v + c` with `max v = 0`. Since `T_s(v + c) = T_s(v) + sc`,
    /// the constant obeys `c = max T_s(v) / (1 − s)` at the fixed point and only
    /// `v` needs iterating; this removes the slow `s`-rate mode along constants.
    fn contraction_fixed_point(&self, s: f64, start: &[f64], opts: &SolverOptions) -> Result<(f64, Vec<f64>, usize)> {
        let tol = self.tolerance(opts);
        let mut v = start.to_vec();
        let mut last = f64::INFINITY;
        for it in 0..opts.max_iter {
            let tv = self.apply_log_scaled(s, &v);
            let m = max_of(&tv);
            let res = tv.iter().zip(&v).fold(0.0f64, |acc, (a, b)| acc.max((a - m - b).abs()));
            v = tv.into_iter().map(|x| x - m).collect();
            if res <= tol {
                return Ok((m, v, it + 1));
            }
            last = res;
        }
        Err(Error::NotConverged {
            method: format!("contraction at s = {s}"),
            iterations: opts.max_iter,
            residual: last,
        })
    }
}

/// `(Lφ)(x) = Σ_a w_a e^{A(ax)} φ(ax)` on the block grid.
pub fn apply_transfer(a: &Potential, nu: &AprioriMeasure, phi: &GridFunction) -> Result<GridFunction> {
    let table = a.tabulate(nu.space())?;
    let op = TransferOperator::new(&table, nu)?;
    if phi.grid().rank() != table.block_rank() || phi.grid().n_atoms() != nu.len() {
        return Err(Error::RankMismatch {
            expected: table.block_rank(),
            got: phi.grid().rank(),
        });
    }
    GridFunction::new(*phi.grid(), op.apply(phi.values()))
}

pub fn eigenpair_power(table: &PotentialTable, nu: &AprioriMeasure, opts: &SolverOptions) -> Result<(EigenPair, EigenMeasure)> {
    let op = TransferOperator::new(table, nu)?;
    let eig = op.principal(opts)?;
    let rho = op.eigenmeasure(&eig, nu, opts)?;
    Ok((eig, rho))
}

/// `1 − 2^{−m}` for `m = 1..=12`.
pub fn default_schedule() -> Vec<f64> {
    (1..=12).map(|m| 1.0 - 0.5f64.powi(m)).collect()
}

/// Number of trailing schedule points used for extrapolation in `s`.
const EXTRAPOLATION_POINTS: usize = 4;

pub fn eigenpair_contraction(
    table: &PotentialTable,
    nu: &AprioriMeasure,
    schedule: &[f64],
    opts: &SolverOptions,
) -> Result<EigenPair> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty s schedule".into()));
    }
    if schedule.iter().any(|s| !(*s > 0.0 && *s < 1.0)) || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "s schedule must be strictly increasing inside (0,1)".into(),
        ));
    }
    if *schedule.last().unwrap() < 1.0 - 1e-3 {
        return Err(Error::InvalidArgument(
            "the last s must be at least 1 − 1e−3".into(),
        ));
    }
    let op = TransferOperator::new(table, nu)?;
    let mut v = vec![0.0; op.n_blocks()];
    let mut steps = Vec::with_capacity(schedule.len());
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(schedule.len());
    let mut total_iter = 0;
    for &s in schedule {
        let (m, next, iters) = op.contraction_fixed_point(s, &v, opts)?;
        total_iter += iters;
        let max_u = m / (1.0 - s);
        steps.push(ContractionStep {
            s,
            log_lambda: m,
            scaled_max: (1.0 - s) * max_u,
            max_u,
            iterations: iters,
        });
        vs.push(next.clone());
        v = next;
    }
    let last = steps.last().unwrap();
    let log_lambda = last.log_lambda;
    // ψ = e^{u_s − max u_s} = e^{v}
    let log_psi = v;
    let residual = op.sup_residual(log_lambda, &log_psi);

    let extrapolated = if steps.len() >= 2 {
        let take = EXTRAPOLATION_POINTS.min(steps.len());
        let from = steps.len() - take;
        let hs: Vec<f64> = steps[from..].iter().map(|st| 1.0 - st.s).collect();
        let ls: Vec<f64> = steps[from..].iter().map(|st| st.log_lambda).collect();
        let ll = extrapolate_to_zero(&hs, &ls);
        let mut lp: Vec<f64> = (0..log_psi.len())
            .map(|b| {
                let ys: Vec<f64> = vs[from..].iter().map(|x| x[b]).collect();
                extrapolate_to_zero(&hs, &ys)
            })
            .collect();
        let m = max_of(&lp);
        lp.iter_mut().for_each(|x| *x -= m);
        Some((ll, lp))
    } else {
        None
    };

    Ok(EigenPair {
        log_lambda,
        log_psi,
        grid: op.grid(),
        method: Method::Contraction,
        iterations: total_iter,
        residual,
        schedule: steps,
        extrapolated,
    })
}

/// `Ā = A + log ψ − log ψ∘σ − log λ` on `k`-tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPotential {
    pub table: PotentialTable,
    pub log_lambda: f64,
    pub log_psi: Vec<f64>,
}

pub fn normalize_potential(table: &PotentialTable, eig: &EigenPair) -> Result<NormalizedPotential> {
    if eig.log_psi.len() != table.n_blocks() {
        return Err(Error::RankMismatch {
            expected: table.n_blocks(),
            got: eig.log_psi.len(),
        });
    }
    if let Some(v) = eig.log_psi.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonPositive(format!("eigenfunction has log value {v}")));
    }
    let lp = &eig.log_psi;
    let normalized = table.map(|t, a| a + lp[table.head(t)] - lp[table.tail(t)] - eig.log_lambda);
    Ok(NormalizedPotential {
        table: normalized,
        log_lambda: eig.log_lambda,
        log_psi: eig.log_psi.clone(),
    })
}

/// Outcome of the deflated iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGap {
    /// Estimated modulus of the second eigenvalue of `L_Ā`.
    pub second_modulus: f64,
    /// True when the estimate is numerically indistinguishable from 1.
    pub no_gap_warning: bool,
    pub iterations: usize,
}

const GAP_WARMUP: usize = 200;
const GAP_WINDOW: usize = 200;

/// Second-largest modulus of `L_Ā` on `{w : ∫w dμ = 0}` by power iteration
/// with re-centering, from a seeded random start. The rate is the geometric
/// mean growth over a window, which averages out rotation of complex pairs.
pub fn spectral_gap_estimate(normalized: &NormalizedPotential, nu: &AprioriMeasure) -> Result<SpectralGap> {
    use rand::{Rng, SeedableRng};
    let op = TransferOperator::new(&normalized.table, nu)?;
    let opts = SolverOptions::default();
    // μ on blocks: the eigenmeasure of L_Ā, whose eigenfunction is 1.
    let one = EigenPair {
        log_lambda: 0.0,
        log_psi: vec![0.0; op.n_blocks()],
        grid: op.grid(),
        method: Method::Power,
        iterations: 0,
        residual: 0.0,
        schedule: Vec::new(),
        extrapolated: None,
    };
    let mu = op.eigenmeasure(&one, nu, &opts)?.weights();
    let center = |f: &mut Vec<f64>| {
        let mean: f64 = f.iter().zip(&mu).map(|(a, b)| a * b).sum();
        f.iter_mut().for_each(|x| *x -= mean);
    };
    let norm = |f: &[f64]| f.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9a9);
    let mut f: Vec<f64> = (0..op.n_blocks()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    center(&mut f);
    let n0 = norm(&f);
    if n0 == 0.0 {
        return Ok(SpectralGap {
            second_modulus: 0.0,
            no_gap_warning: false,
            iterations: 0,
        });
    }
    f.iter_mut().for_each(|x| *x /= n0);
    let floor = 1e-200;
    let mut log_growth = Vec::with_capacity(GAP_WARMUP + GAP_WINDOW);
    for it in 0..GAP_WARMUP + GAP_WINDOW {
        let mut g = op.apply(&f);
        center(&mut g);
        let ng = norm(&g);
        if ng < floor {
            // the centered part is annihilated after finitely many steps
            return Ok(SpectralGap {
                second_modulus: 0.0,
                no_gap_warning: false,
                iterations: it + 1,
            });
        }
        log_growth.push(ng.ln());
        f = g.into_iter().map(|x| x / ng).collect();
        // drop from the warmup once the centered part has died out numerically
        if ng < 1e-14 && it < GAP_WARMUP {
            let geo = log_growth.iter().sum::<f64>() / log_growth.len() as f64;
            if geo.exp() < 1e-6 {
                return Ok(SpectralGap {
                    second_modulus: 0.0,
                    no_gap_warning: false,
                    iterations: it + 1,
                });
            }
        }
    }
    let window = &log_growth[GAP_WARMUP..];
    let rate = (window.iter().sum::<f64>() / window.len() as f64).exp();
    let rate = rate.min(1.0);
    Ok(SpectralGap {
        second_modulus: rate,
        no_gap_warning: rate >= 1.0 - 1e-9,
        iterations: GAP_WARMUP + GAP_WINDOW,
    })
}
