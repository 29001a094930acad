//! Gibbs measures as block Markov chains, entropy, pressure and the
//! quantities built from them.
//!
//! For a table of range `k` (`r = k − 1`) the Gibbs measure is a Markov chain
//! on `r`-blocks with stationary density `θ` against `ν^r` and transition
//! density `K(t)` against the a-priori weight of the new symbol:
//!
//! `θ = ψψ̄/π`, `K(t) = e^{A(t)} ψ̄(σt) / (ψ̄(t_{1..r}) λ)`.
//!
//! A cylinder `[w_1..w_q]` with `q ≥ r` has mass
//! `ν^q(w)·θ(w_{1..r})·Π K(w_{j..j+r})`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, max_of};
use crate::potential::{Potential, PotentialTable};
use crate::space::{log_product_weights, AprioriMeasure, ConfigurationGrid, DEFAULT_GRID_CAP};
use crate::transfer::{
    eigenpair_power, normalize_potential, spectral_gap_estimate, EigenMeasure, EigenPair, NormalizedPotential,
    SolverOptions, TransferOperator,
};

/// Tolerance for validating hand-built chains.
pub const HAND_BUILT_TOLERANCE: f64 = 1e-9;

/// Anything that can integrate finite-range tables and weigh cylinders.
pub trait InvariantMeasure: Sync {
    fn n_atoms(&self) -> usize;
    /// `μ[w_1 .. w_q]`.
    fn cylinder_mass(&self, word: &[usize]) -> f64;
    /// `∫ A dμ` for a table of any range.
    fn integrate(&self, table: &PotentialTable) -> f64 {
        let k = table.range();
        let grid = ConfigurationGrid::with_cap(self.n_atoms(), k, usize::MAX).expect("table grid exists");
        let mut word = vec![0; k];
        let mut total = 0.0;
        for t in 0..grid.size() {
            grid.decode_into(t, &mut word);
            let m = self.cylinder_mass(&word);
            if m > 0.0 {
                total += m * table.get(t);
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGibbs {
    n_atoms: usize,
    rank: usize,
    log_nu: Vec<f64>,
    log_nu_blocks: Vec<f64>,
    log_theta: Vec<f64>,
    log_kernel: Vec<f64>,
    log_lambda: f64,
}

/// Largest violations of the chain identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainResiduals {
    /// `max_b |Σ_y w_y K(b y) − 1|`.
    pub row_sum: f64,
    /// `max_b' |Σ_x w_x θ(x ·) K(x ·) − θ(b')|`.
    pub stationarity: f64,
    /// `|Σ_b ν^r(b) θ(b) − 1|`.
    pub mass: f64,
}

impl ChainResiduals {
    pub fn max(&self) -> f64 {
        self.row_sum.max(self.stationarity).max(self.mass)
    }
}

impl MarkovGibbs {
    /// Build from a solved eigenpair and the dual eigenfunction.
    pub fn from_eigendata(table: &PotentialTable, nu: &AprioriMeasure, eig: &EigenPair, rho: &EigenMeasure) -> Result<Self> {
        let n = table.n_atoms();
        let rank = table.block_rank();
        let log_nu_blocks = log_product_weights(nu, rank);
        let lg = &rho.log_density;
        let lp = &eig.log_psi;
        let joint: Vec<f64> = (0..lp.len()).map(|b| log_nu_blocks[b] + lp[b] + lg[b]).collect();
        let log_pi = log_sum_exp(&joint);
        let log_theta: Vec<f64> = (0..lp.len()).map(|b| lp[b] + lg[b] - log_pi).collect();
        let log_kernel = (0..table.values().len())
            .map(|t| table.get(t) + lg[table.tail(t)] - lg[table.head(t)] - eig.log_lambda)
            .collect();
        Ok(MarkovGibbs {
            n_atoms: n,
            rank,
            log_nu: nu.log_weights().to_vec(),
            log_nu_blocks,
            log_theta,
            log_kernel,
            log_lambda: eig.log_lambda,
        })
    }

    /// Build from explicit `(θ, K)` over `rank`-blocks and validate the chain
    /// identities to `HAND_BUILT_TOLERANCE`.
    pub fn from_parts(nu: &AprioriMeasure, rank: usize, theta: &[f64], kernel: &[f64]) -> Result<Self> {
        let grid = ConfigurationGrid::new(nu.len(), rank)?;
        if theta.len() != grid.size() || kernel.len() != grid.size() * nu.len() {
            return Err(Error::RankMismatch {
                expected: grid.size(),
                got: theta.len(),
            });
        }
        if let Some(v) = theta.iter().chain(kernel).find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NonPositive(format!(
                "chain entries must be positive and finite, found {v}"
            )));
        }
        let g = MarkovGibbs {
            n_atoms: nu.len(),
            rank,
            log_nu: nu.log_weights().to_vec(),
            log_nu_blocks: log_product_weights(nu, rank),
            log_theta: theta.iter().map(|v| v.ln()).collect(),
            log_kernel: kernel.iter().map(|v| v.ln()).collect(),
            log_lambda: 0.0,
        };
        let res = g.residuals();
        if res.max() > HAND_BUILT_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "chain violates its identities: row sums {:.3e}, stationarity {:.3e}, mass {:.3e}",
                res.row_sum, res.stationarity, res.mass
            )));
        }
        Ok(g)
    }

    pub fn n_blocks(&self) -> usize {
        self.log_theta.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn range(&self) -> usize {
        self.rank + 1
    }

    pub fn log_theta(&self) -> &[f64] {
        &self.log_theta
    }

    pub fn log_kernel(&self) -> &[f64] {
        &self.log_kernel
    }

    pub fn theta(&self) -> Vec<f64> {
        self.log_theta.iter().map(|v| v.exp()).collect()
    }

    pub fn kernel(&self) -> Vec<f64> {
        self.log_kernel.iter().map(|v| v.exp()).collect()
    }

    pub fn log_lambda(&self) -> f64 {
        self.log_lambda
    }

    fn head(&self, t: usize) -> usize {
        t / self.n_atoms
    }

    fn tail(&self, t: usize) -> usize {
        t % self.n_blocks()
    }

    /// `log μ(b)` for each block.
    pub fn block_log_masses(&self) -> Vec<f64> {
        self.log_theta.iter().zip(&self.log_nu_blocks).map(|(a, b)| a + b).collect()
    }

    /// `log μ[t]` for every `k`-tuple.
    pub fn tuple_log_masses(&self) -> Vec<f64> {
        let bm = self.block_log_masses();
        (0..self.log_kernel.len())
            .map(|t| bm[self.head(t)] + self.log_kernel[t] + self.log_nu[t % self.n_atoms])
            .collect()
    }

    pub fn residuals(&self) -> ChainResiduals {
        let n = self.n_atoms;
        let nb = self.n_blocks();
        let mut row_sum: f64 = 0.0;
        for b in 0..nb {
            let s: f64 = (0..n).map(|y| (self.log_nu[y] + self.log_kernel[b * n + y]).exp()).sum();
            row_sum = row_sum.max((s - 1.0).abs());
        }
        let mut stationarity: f64 = 0.0;
        for out in 0..nb {
            let s: f64 = (0..n)
                .map(|x| {
                    let t = x * nb + out;
                    (self.log_nu[x] + self.log_theta[self.head(t)] + self.log_kernel[t]).exp()
                })
                .sum();
            stationarity = stationarity.max((s - self.log_theta[out].exp()).abs());
        }
        let mass = (log_sum_exp(&self.block_log_masses()).exp() - 1.0).abs();
        ChainResiduals {
            row_sum,
            stationarity,
            mass,
        }
    }

    /// `Ā(t) = log(θ(head) K(t) / θ(tail))`, the normalized potential whose
    /// Gibbs measure this is.
    pub fn normalized_table(&self) -> PotentialTable {
        let values = (0..self.log_kernel.len())
            .map(|t| self.log_theta[self.head(t)] + self.log_kernel[t] - self.log_theta[self.tail(t)])
            .collect();
        PotentialTable::new(self.n_atoms, self.range(), values).expect("shape is consistent")
    }

    /// `log μ[w]` for any word; shorter words than a block are marginalized.
    pub fn cylinder_log_mass(&self, word: &[usize]) -> f64 {
        let n = self.n_atoms;
        let r = self.rank;
        if word.len() < r {
            let missing = r - word.len();
            let ext = n.pow(missing as u32);
            let mut buf = word.to_vec();
            buf.resize(r, 0);
            let mut terms = Vec::with_capacity(ext);
            for e in 0..ext {
                let mut c = e;
                for slot in buf[word.len()..].iter_mut().rev() {
                    *slot = c % n;
                    c /= n;
                }
                terms.push(self.cylinder_log_mass(&buf));
            }
            return log_sum_exp(&terms);
        }
        let block = word[..r].iter().fold(0, |acc, &i| acc * n + i);
        let mut total = self.log_theta[block] + word[..r].iter().map(|&i| self.log_nu[i]).sum::<f64>();
        let mut t = block;
        for &sym in &word[r..] {
            t = t * n + sym;
            total += self.log_kernel[t] + self.log_nu[sym];
            t %= self.n_blocks();
        }
        total
    }
}

impl InvariantMeasure for MarkovGibbs {
    fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    fn cylinder_mass(&self, word: &[usize]) -> f64 {
        self.cylinder_log_mass(word).exp()
    }

    fn integrate(&self, table: &PotentialTable) -> f64 {
        let k = self.range();
        if table.range() <= k {
            let lifted = table.lift(k).expect("lifting to a larger range");
            self.tuple_log_masses()
                .iter()
                .zip(lifted.values())
                .map(|(m, a)| m.exp() * a)
                .sum()
        } else {
            let grid = ConfigurationGrid::with_cap(self.n_atoms, table.range(), usize::MAX).expect("grid");
            (0..grid.size())
                .map(|t| self.cylinder_log_mass(&grid.tuple(t)).exp() * table.get(t))
                .sum()
        }
    }
}

/// The invariant measure equidistributed on a periodic orbit; a fixed point
/// gives a Dirac mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    n_atoms: usize,
    word: Vec<usize>,
}

impl PeriodicOrbit {
    pub fn new(n_atoms: usize, word: Vec<usize>) -> Result<Self> {
        if word.is_empty() || word.iter().any(|&i| i >= n_atoms) {
            return Err(Error::InvalidArgument("periodic word must be non-empty over the alphabet".into()));
        }
        Ok(PeriodicOrbit { n_atoms, word })
    }

    pub fn dirac(n_atoms: usize, atom: usize) -> Result<Self> {
        Self::new(n_atoms, vec![atom])
    }

    pub fn period(&self) -> usize {
        self.word.len()
    }
}

impl InvariantMeasure for PeriodicOrbit {
    fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    fn cylinder_mass(&self, w: &[usize]) -> f64 {
        let p = self.word.len();
        let hits = (0..p)
            .filter(|&j| w.iter().enumerate().all(|(i, &s)| self.word[(j + i) % p] == s))
            .count();
        hits as f64 / p as f64
    }

    fn integrate(&self, table: &PotentialTable) -> f64 {
        let p = self.word.len();
        let k = table.range();
        let n = self.n_atoms;
        (0..p)
            .map(|j| {
                let t = (0..k).fold(0, |acc, i| acc * n + self.word[(j + i) % p]);
                table.get(t)
            })
            .sum::<f64>()
            / p as f64
    }
}

/// A convex combination of invariant measures.
pub struct Mixture<'a> {
    parts: Vec<(f64, &'a dyn InvariantMeasure)>,
}

impl<'a> Mixture<'a> {
    pub fn new(parts: Vec<(f64, &'a dyn InvariantMeasure)>) -> Result<Self> {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if parts.is_empty() || parts.iter().any(|p| p.0 < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("mixture weights must be a probability vector".into()));
        }
        let n = parts[0].1.n_atoms();
        if parts.iter().any(|p| p.1.n_atoms() != n) {
            return Err(Error::InvalidArgument("mixture components live on different alphabets".into()));
        }
        Ok(Mixture { parts })
    }
}

impl InvariantMeasure for Mixture<'_> {
    fn n_atoms(&self) -> usize {
        self.parts[0].1.n_atoms()
    }

    fn cylinder_mass(&self, word: &[usize]) -> f64 {
        self.parts.iter().map(|(e, m)| e * m.cylinder_mass(word)).sum()
    }

    fn integrate(&self, table: &PotentialTable) -> f64 {
        self.parts.iter().map(|(e, m)| e * m.integrate(table)).sum()
    }
}

/// Everything produced by one solve.
#[derive(Debug, Clone)]
pub struct GibbsSolution {
    pub table: PotentialTable,
    pub eig: EigenPair,
    pub rho: EigenMeasure,
    pub normalized: NormalizedPotential,
    pub gibbs: MarkovGibbs,
}

pub fn solve_gibbs(table: &PotentialTable, nu: &AprioriMeasure, opts: &SolverOptions) -> Result<GibbsSolution> {
    let (eig, rho) = eigenpair_power(table, nu, opts)?;
    let normalized = normalize_potential(table, &eig)?;
    let gibbs = MarkovGibbs::from_eigendata(table, nu, &eig, &rho)?;
    Ok(GibbsSolution {
        table: table.clone(),
        eig,
        rho,
        normalized,
        gibbs,
    })
}

pub fn gibbs_markov(a: &Potential, nu: &AprioriMeasure) -> Result<MarkovGibbs> {
    let table = a.tabulate(nu.space())?;
    Ok(solve_gibbs(&table, nu, &SolverOptions::default())?.gibbs)
}

/// `A = log K`, whose eigenvalue is 1, with `ψ = θ` (max-normalized).
#[derive(Debug, Clone)]
pub struct KernelPotential {
    pub potential: PotentialTable,
    pub normalized: NormalizedPotential,
}

pub fn potential_from_kernel(nu: &AprioriMeasure, rank: usize, theta: &[f64], kernel: &[f64]) -> Result<KernelPotential> {
    if let Some(v) = kernel.iter().find(|v| **v <= 0.0) {
        return Err(Error::NonPositive(format!(
            "kernel entry {v}: log K needs a fully supported kernel"
        )));
    }
    let chain = MarkovGibbs::from_parts(nu, rank, theta, kernel)?;
    let potential = PotentialTable::new(nu.len(), rank + 1, chain.log_kernel.clone())?;
    let top = max_of(&chain.log_theta);
    let log_psi: Vec<f64> = chain.log_theta.iter().map(|v| v - top).collect();
    let normalized = NormalizedPotential {
        table: chain.normalized_table(),
        log_lambda: 0.0,
        log_psi,
    };
    Ok(KernelPotential { potential, normalized })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMethod {
    Gibbs,
    Markov,
    Cylinder,
    UpperBound,
}

impl EntropyMethod {
    pub fn name(&self) -> &'static str {
        match self {
            EntropyMethod::Gibbs => "gibbs",
            EntropyMethod::Markov => "markov",
            EntropyMethod::Cylinder => "cylinder",
            EntropyMethod::UpperBound => "upper_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntropyValue {
    Finite(f64),
    /// The entropy is `−∞`; the certified upper bounds found are attached.
    NegInfinity { bounds: Vec<f64> },
}

impl EntropyValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            EntropyValue::Finite(v) => Some(*v),
            EntropyValue::NegInfinity { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub value: EntropyValue,
    pub method: EntropyMethod,
    /// Cylinder length for the cylinder method.
    pub level: Option<usize>,
    /// Cylinder method: `n·term_n − (n−1)·term_{n−1}`, exact for Markov chains
    /// of block order 1.
    pub conditional: Option<f64>,
    /// Cylinder method: classical block entropy rate `−(1/n) Σ μ log μ`.
    pub classical: Option<f64>,
    pub classical_conditional: Option<f64>,
    /// Upper-bound method: every bound, in family order.
    pub bounds: Vec<f64>,
    pub argmin: Option<usize>,
}

impl EntropyReport {
    fn finite(value: f64, method: EntropyMethod) -> Self {
        EntropyReport {
            value: EntropyValue::Finite(value),
            method,
            level: None,
            conditional: None,
            classical: None,
            classical_conditional: None,
            bounds: Vec::new(),
            argmin: None,
        }
    }
}

fn check_provenance(normalized: &PotentialTable, mu: &MarkovGibbs) -> Result<()> {
    let own = mu.normalized_table();
    if own.n_atoms() != normalized.n_atoms() {
        return Err(Error::Provenance("alphabets differ".into()));
    }
    let k = own.range().max(normalized.range());
    let a = own.lift(k)?;
    let b = normalized.lift(k)?;
    let gap = crate::numeric::max_abs_diff(a.values(), b.values());
    if gap > 1e-8 * (1.0 + b.sup_norm()) {
        return Err(Error::Provenance(format!(
            "normalized potential differs from the measure's own by {gap:.3e}"
        )));
    }
    Ok(())
}

/// `h = −∫ Ā dμ`.
pub fn entropy_gibbs(normalized: &NormalizedPotential, mu: &MarkovGibbs) -> Result<EntropyReport> {
    check_provenance(&normalized.table, mu)?;
    let h = -mu.integrate(&normalized.table);
    Ok(EntropyReport::finite(h, EntropyMethod::Gibbs))
}

/// `S(θK) = −∫∫ θ K log K`.
pub fn entropy_markov(mu: &MarkovGibbs) -> EntropyReport {
    let h = -mu
        .tuple_log_masses()
        .iter()
        .zip(&mu.log_kernel)
        .map(|(m, lk)| m.exp() * lk)
        .sum::<f64>();
    EntropyReport::finite(h, EntropyMethod::Markov)
}

/// Sums `Σ μ[w] log μ[w]` and `Σ μ[w] log ν^n(w)` over words of length `n`.
fn cylinder_sums(mu: &dyn InvariantMeasure, log_nu: &[f64], n: usize) -> (f64, f64) {
    let d = mu.n_atoms();
    let total = d.pow(n as u32);
    (0..total)
        .into_par_iter()
        .with_min_len(1024)
        .map(|code| {
            let mut c = code;
            let mut word = vec![0; n];
            for slot in word.iter_mut().rev() {
                *slot = c % d;
                c /= d;
            }
            let m = mu.cylinder_mass(&word);
            if m > 0.0 {
                let lnu: f64 = word.iter().map(|&i| log_nu[i]).sum();
                (m * m.ln(), m * lnu)
            } else {
                (0.0, 0.0)
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
}

/// Relative entropy rate of `n`-cylinders,
/// `−(1/n) Σ μ[w] log(μ[w]/ν^n(w))`, enumerated exactly.
pub fn entropy_cylinder(mu: &dyn InvariantMeasure, nu: &AprioriMeasure, n: usize) -> Result<EntropyReport> {
    if !nu.space().kind().is_discrete() {
        return Err(Error::Unsupported("cylinder entropy needs a discrete alphabet".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cylinder length must be at least 1".into()));
    }
    ConfigurationGrid::with_cap(nu.len(), n, DEFAULT_GRID_CAP)?;
    let lw = nu.log_weights();
    let (ml, mn) = cylinder_sums(mu, lw, n);
    let term = -(ml - mn) / n as f64;
    let classical = -ml / n as f64;
    let (conditional, classical_conditional) = if n >= 2 {
        let (pl, pn) = cylinder_sums(mu, lw, n - 1);
        let prev_term = -(pl - pn) / (n - 1) as f64;
        let prev_classical = -pl / (n - 1) as f64;
        (
            Some(n as f64 * term - (n - 1) as f64 * prev_term),
            Some(n as f64 * classical - (n - 1) as f64 * prev_classical),
        )
    } else {
        (None, None)
    };
    let mut rep = EntropyReport::finite(term, EntropyMethod::Cylinder);
    rep.level = Some(n);
    rep.conditional = conditional;
    rep.classical = Some(classical);
    rep.classical_conditional = classical_conditional;
    Ok(rep)
}

/// `min_A {−∫A dμ + log λ_A}` over a family: an upper bound on the entropy.
/// For atomic measures on a quadrature of a continuum the entropy of the
/// continuum model is `−∞`, which is reported with the bounds attached.
pub fn entropy_upper_bound(
    mu: &dyn InvariantMeasure,
    nu: &AprioriMeasure,
    family: &[Potential],
    opts: &SolverOptions,
    atomic: bool,
) -> Result<EntropyReport> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty potential family".into()));
    }
    let mut bounds = Vec::with_capacity(family.len());
    for a in family {
        let table = a.tabulate(nu.space())?;
        let eig = TransferOperator::new(&table, nu)?.principal(opts)?;
        bounds.push(-mu.integrate(&table) + eig.log_lambda);
    }
    let argmin = crate::numeric::argmax(&bounds.iter().map(|b| -b).collect::<Vec<_>>());
    let continuum = !nu.space().kind().is_discrete();
    let value = if atomic && continuum {
        EntropyValue::NegInfinity { bounds: bounds.clone() }
    } else {
        EntropyValue::Finite(bounds[argmin])
    };
    Ok(EntropyReport {
        value,
        method: EntropyMethod::UpperBound,
        level: None,
        conditional: None,
        classical: None,
        classical_conditional: None,
        bounds,
        argmin: Some(argmin),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureReport {
    pub pressure: f64,
    pub entropy: f64,
    pub integral: f64,
    /// `|P − h − ∫A dμ|`.
    pub residual: f64,
}

pub fn pressure_of(sol: &GibbsSolution) -> Result<PressureReport> {
    let h = entropy_gibbs(&sol.normalized, &sol.gibbs)?
        .value
        .finite()
        .expect("Gibbs entropy is finite");
    let integral = sol.gibbs.integrate(&sol.table);
    Ok(PressureReport {
        pressure: sol.eig.log_lambda,
        entropy: h,
        integral,
        residual: (sol.eig.log_lambda - h - integral).abs(),
    })
}

pub fn pressure(a: &Potential, nu: &AprioriMeasure, opts: &SolverOptions) -> Result<PressureReport> {
    let table = a.tabulate(nu.space())?;
    pressure_of(&solve_gibbs(&table, nu, opts)?)
}

/// `∫ log(L_A u / u) dμ` for a positive `u` given by its logarithm on the
/// grid of `u_rank`-tuples.
pub fn minimax_value(table: &PotentialTable, nu: &AprioriMeasure, mu: &MarkovGibbs, log_u: &[f64], u_rank: usize) -> Result<f64> {
    let n = nu.len();
    let ugrid = ConfigurationGrid::new(n, u_rank)?;
    if log_u.len() != ugrid.size() {
        return Err(Error::RankMismatch {
            expected: ugrid.size(),
            got: log_u.len(),
        });
    }
    if let Some(v) = log_u.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonPositive(format!("u must be positive, log u = {v}")));
    }
    let k = table.range();
    // L_A u depends on the first max(k − 1, u_rank − 1) coordinates
    let q = (k - 1).max(u_rank);
    let qgrid = ConfigurationGrid::new(n, q)?;
    let lw = nu.log_weights();
    let value: f64 = (0..qgrid.size())
        .into_par_iter()
        .map(|i| {
            let x = qgrid.tuple(i);
            let mut ax = Vec::with_capacity(q + 1);
            let terms: Vec<f64> = (0..n)
                .map(|a| {
                    ax.clear();
                    ax.push(a);
                    ax.extend_from_slice(&x);
                    let t = ax[..k].iter().fold(0, |acc, &s| acc * n + s);
                    let ui = ax[..u_rank].iter().fold(0, |acc, &s| acc * n + s);
                    lw[a] + table.get(t) + log_u[ui]
                })
                .collect();
            let lu_x = log_u[x[..u_rank].iter().fold(0, |acc, &s| acc * n + s)];
            mu.cylinder_log_mass(&x).exp() * (log_sum_exp(&terms) - lu_x)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    /// `C_n` for `n = 1..=n_max`.
    pub values: Vec<f64>,
    /// Modulus of the second eigenvalue used for the envelope.
    pub rate: f64,
    /// Smallest `C` with `|C_n| ≤ C·rateⁿ` on the computed range.
    pub envelope: f64,
}

/// `C_n = ∫ (v∘σⁿ) w dμ` for block functions, with `w` centered.
pub fn correlation_sequence(mu: &MarkovGibbs, nu: &AprioriMeasure, v: &[f64], w: &[f64], n_max: usize) -> Result<CorrelationSeries> {
    let nb = mu.n_blocks();
    if v.len() != nb || w.len() != nb {
        return Err(Error::RankMismatch {
            expected: nb,
            got: v.len().min(w.len()),
        });
    }
    let n = mu.n_atoms;
    let m: Vec<f64> = mu.block_log_masses().iter().map(|x| x.exp()).collect();
    let mean_w: f64 = w.iter().zip(&m).map(|(a, b)| a * b).sum();
    let wc: Vec<f64> = w.iter().map(|x| x - mean_w).collect();
    let lw = nu.log_weights();
    let step = |f: &[f64]| -> Vec<f64> {
        (0..nb)
            .map(|b| {
                (0..n)
                    .map(|y| {
                        let t = b * n + y;
                        (lw[y] + mu.log_kernel[t]).exp() * f[t % nb]
                    })
                    .sum()
            })
            .collect()
    };
    let mut f = v.to_vec();
    let mut values: Vec<f64> = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        f = step(&f);
        values.push((0..nb).map(|b| m[b] * wc[b] * f[b]).sum());
    }
    let normalized = NormalizedPotential {
        table: mu.normalized_table(),
        log_lambda: 0.0,
        log_psi: vec![0.0; nb],
    };
    let rate = spectral_gap_estimate(&normalized, nu)?.second_modulus;
    let envelope = values
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if rate > 0.0 {
                c.abs() / rate.powi(i as i32 + 1)
            } else if c.abs() > 1e-15 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(CorrelationSeries { values, rate, envelope })
}

/// The system seen by `σⁿ`: alphabet `Mⁿ`, a-priori `νⁿ` and the Birkhoff sum
/// `S_n A` as a potential of the new symbols.
#[derive(Debug, Clone)]
pub struct IteratedSystem {
    pub nu: AprioriMeasure,
    pub table: PotentialTable,
    pub power: usize,
}

pub fn iterate_system(table: &PotentialTable, nu: &AprioriMeasure, n: usize) -> Result<IteratedSystem> {
    if n == 0 {
        return Err(Error::InvalidArgument("iterate power must be at least 1".into()));
    }
    let d = nu.len();
    let big = ConfigurationGrid::new(d, n)?;
    let k = table.range();
    let new_range = (n + k - 1).div_ceil(n).max(2);
    let new_grid = ConfigurationGrid::new(big.size(), new_range)?;
    let weights: Vec<f64> = log_product_weights(nu, n).iter().map(|v| v.exp()).collect();
    let space = crate::space::StateSpace::finite(big.size())?;
    let nu_n = AprioriMeasure::new(space, weights, true)?;
    let mut symbols = vec![0; new_range];
    let mut word = vec![0; n * new_range];
    let mut values = Vec::with_capacity(new_grid.size());
    for t in 0..new_grid.size() {
        new_grid.decode_into(t, &mut symbols);
        for (i, &s) in symbols.iter().enumerate() {
            big.decode_into(s, &mut word[i * n..(i + 1) * n]);
        }
        let s: f64 = (0..n)
            .map(|j| table.get(word[j..j + k].iter().fold(0, |acc, &x| acc * d + x)))
            .sum();
        values.push(s);
    }
    Ok(IteratedSystem {
        nu: nu_n,
        table: PotentialTable::new(big.size(), new_range, values)?,
        power: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{bessel_i, eigen_2x2, stationary_distribution};
    use crate::space::{build_apriori, MeasureSpec};

    fn uniform(d: usize) -> AprioriMeasure {
        build_apriori(&MeasureSpec::Uniform { d }).unwrap()
    }

    fn solve(t: &PotentialTable, nu: &AprioriMeasure) -> GibbsSolution {
        solve_gibbs(t, nu, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn zero_potential_is_product_measure() {
        let nu = uniform(3);
        let g = gibbs_markov(&Potential::constant(0.0), &nu).unwrap();
        assert!(g.theta().iter().all(|v| (v - 1.0).abs() < 1e-13));
        assert!(g.kernel().iter().all(|v| (v - 1.0).abs() < 1e-13));
        assert_eq!(entropy_markov(&g).value.finite().unwrap().abs() < 1e-13, true);
    }

    #[test]
    fn symmetric_two_state_chain() {
        let nu = uniform(2);
        let l2 = 2f64.ln();
        let t = PotentialTable::new(2, 2, vec![l2, 0.0, 0.0, l2]).unwrap();
        let sol = solve(&t, &nu);
        // (Lφ)(x) = ½ Σ_a e^{A(a,x)} φ(a): matrix [[1, ½],[½, 1]], λ = 3/2
        let (l1, _) = eigen_2x2([[1.0, 0.5], [0.5, 1.0]]);
        assert!((sol.eig.lambda() - l1).abs() < 1e-13);
        let k = sol.gibbs.kernel();
        // K(a,a) = 2/λ, K(a,b) = 1/λ
        assert!((k[0] - 2.0 / l1).abs() < 1e-13 && (k[1] - 1.0 / l1).abs() < 1e-13);
        assert!(sol.gibbs.theta().iter().all(|v| (v - 1.0).abs() < 1e-13));
        assert!(sol.gibbs.residuals().max() < 1e-13);
    }

    #[test]
    fn xy_kernel_is_von_mises() {
        let nu = build_apriori(&MeasureSpec::Circle { n: 64 }).unwrap();
        let t = Potential::xy(0.0, 0.0).tabulate(nu.space()).unwrap();
        let sol = solve(&t, &nu);
        let atoms = nu.space().atoms();
        let i0 = bessel_i(0, 1.0);
        for (idx, k) in sol.gibbs.kernel().iter().enumerate() {
            let expect = (atoms[idx % 64] - atoms[idx / 64]).cos().exp() / i0;
            assert!((k - expect).abs() < 1e-12);
        }
        let h = entropy_gibbs(&sol.normalized, &sol.gibbs).unwrap().value.finite().unwrap();
        let expect = -bessel_i(1, 1.0) / i0 + i0.ln();
        assert!((h - expect).abs() < 1e-12);
        let hm = entropy_markov(&sol.gibbs).value.finite().unwrap();
        assert!((h - hm).abs() < 1e-12);
    }

    #[test]
    fn kernel_round_trip() {
        let nu = uniform(3);
        let k = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.6, 0.3],
            vec![0.4, 0.4, 0.2],
        ];
        let pi = stationary_distribution(&k);
        // densities against the uniform a-priori weight 1/3
        let theta: Vec<f64> = pi.iter().map(|p| 3.0 * p).collect();
        let kernel: Vec<f64> = k.iter().flatten().map(|p| 3.0 * p).collect();
        let kp = potential_from_kernel(&nu, 1, &theta, &kernel).unwrap();
        let sol = solve(&kp.potential, &nu);
        assert!(sol.eig.log_lambda.abs() < 1e-12);
        assert!(crate::numeric::max_abs_diff(&sol.gibbs.theta(), &theta) < 1e-10);
        assert!(crate::numeric::max_abs_diff(&sol.gibbs.kernel(), &kernel) < 1e-10);
    }

    #[test]
    fn kernel_with_zero_rejected() {
        let nu = uniform(2);
        assert!(matches!(
            potential_from_kernel(&nu, 1, &[1.0, 1.0], &[2.0, 0.0, 0.0, 2.0]),
            Err(Error::NonPositive(_))
        ));
    }

    #[test]
    fn hand_built_chain_validated() {
        let nu = uniform(2);
        assert!(MarkovGibbs::from_parts(&nu, 1, &[1.0, 1.0], &[1.5, 0.4, 0.5, 1.5]).is_err());
        assert!(MarkovGibbs::from_parts(&nu, 1, &[1.0, 1.0], &[1.5, 0.5, 0.5, 1.5]).is_ok());
    }

    #[test]
    fn provenance_mismatch_detected() {
        let nu = uniform(2);
        let a = solve(&PotentialTable::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(), &nu);
        let b = solve(&PotentialTable::new(2, 2, vec![0.0, 0.3, 1.0, 0.0]).unwrap(), &nu);
        assert!(matches!(
            entropy_gibbs(&a.normalized, &b.gibbs),
            Err(Error::Provenance(_))
        ));
    }

    #[test]
    fn bernoulli_cylinder_entropy_is_zero() {
        let nu = build_apriori(&MeasureSpec::Weights {
            weights: vec![0.2, 0.3, 0.5],
            auto_renormalize: false,
        })
        .unwrap();
        let g = gibbs_markov(&Potential::constant(0.0), &nu).unwrap();
        for n in 1..=5 {
            let r = entropy_cylinder(&g, &nu, n).unwrap();
            assert!(r.value.finite().unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn cylinder_terms_converge_for_two_state_chain() {
        let nu = uniform(2);
        let sol = solve(&PotentialTable::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(), &nu);
        let h = entropy_gibbs(&sol.normalized, &sol.gibbs).unwrap().value.finite().unwrap();
        let mut prev = f64::INFINITY;
        for n in 1..=8 {
            let r = entropy_cylinder(&sol.gibbs, &nu, n).unwrap();
            let gap = (r.value.finite().unwrap() - h).abs();
            assert!(gap < prev);
            prev = gap;
            if let Some(c) = r.conditional {
                assert!((c - h).abs() < 1e-12);
            }
            // uniform p: term_n + log d equals the classical rate
            assert!((r.value.finite().unwrap() + 2f64.ln() - r.classical.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_is_nonpositive() {
        let nu = uniform(3);
        let t = PotentialTable::new(3, 2, vec![0.1, -0.5, 2.0, 0.3, 0.0, -1.0, 0.7, 0.2, 0.4]).unwrap();
        let sol = solve(&t, &nu);
        let h = entropy_gibbs(&sol.normalized, &sol.gibbs).unwrap().value.finite().unwrap();
        assert!(h <= 1e-12);
        let p = pressure_of(&sol).unwrap();
        assert!(p.residual < 1e-10);
    }

    #[test]
    fn upper_bound_examples() {
        let nu = uniform(2);
        let b = PotentialTable::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let sol = solve(&b, &nu);
        let h = entropy_gibbs(&sol.normalized, &sol.gibbs).unwrap().value.finite().unwrap();
        let family = vec![
            Potential::constant(0.0),
            Potential::table(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
        ];
        let rep = entropy_upper_bound(&sol.gibbs, &nu, &family, &SolverOptions::default(), false).unwrap();
        assert!((rep.value.finite().unwrap() - h).abs() < 1e-10);
        assert_eq!(rep.argmin, Some(1));

        let product = gibbs_markov(&Potential::constant(0.0), &nu).unwrap();
        let rep = entropy_upper_bound(&product, &nu, &[Potential::constant(0.0)], &SolverOptions::default(), false).unwrap();
        assert!(rep.value.finite().unwrap().abs() < 1e-14);
    }

    #[test]
    fn dirac_on_interval_has_unbounded_bounds() {
        let n = 512;
        let nu = build_apriori(&MeasureSpec::Interval { n }).unwrap();
        let dirac = PeriodicOrbit::dirac(n, 0).unwrap();
        let cs = [1.0, 2.0, 4.0, 8.0];
        let family: Vec<Potential> = cs.iter().map(|&c| Potential::exp_interval(c).unwrap()).collect();
        let rep = entropy_upper_bound(&dirac, &nu, &family, &SolverOptions::default(), true).unwrap();
        let EntropyValue::NegInfinity { bounds } = &rep.value else {
            panic!("expected the −∞ sentinel")
        };
        for (b, c) in bounds.iter().zip(cs) {
            // left-endpoint quadrature overshoots the unit integral by at most c/N
            let closed = -crate::potential::exp_interval_log_norm(c);
            assert!(*b <= closed + c / n as f64, "{b} vs {closed}");
        }
        assert!(bounds.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn minimax_examples() {
        let nu = uniform(2);
        let a = PotentialTable::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let sol = solve(&a, &nu);
        let h = entropy_gibbs(&sol.normalized, &sol.gibbs).unwrap().value.finite().unwrap();
        let ia = sol.gibbs.integrate(&a);
        let one = minimax_value(&a, &nu, &sol.gibbs, &[0.0, 0.0], 1).unwrap();
        assert!(one >= h + ia - 1e-9);
        // ũ = e^{−A + Ā}
        let lu: Vec<f64> = a
            .values()
            .iter()
            .zip(sol.normalized.table.values())
            .map(|(x, b)| -x + b)
            .collect();
        let eq = minimax_value(&a, &nu, &sol.gibbs, &lu, 2).unwrap();
        assert!((eq - h - ia).abs() < 1e-9);

        let zero = Potential::constant(0.0).tabulate(nu.space()).unwrap();
        let prod = solve(&zero, &nu);
        assert!(minimax_value(&zero, &nu, &prod.gibbs, &[0.0, 0.0], 1).unwrap().abs() < 1e-14);
        assert!(minimax_value(&zero, &nu, &prod.gibbs, &[0.3, -0.2], 1).unwrap() >= 0.0);
    }

    #[test]
    fn correlations_of_two_state_chain_are_geometric() {
        let nu = uniform(2);
        let sol = solve(&PotentialTable::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(), &nu);
        let v = [1.0, -1.0];
        let c = correlation_sequence(&sol.gibbs, &nu, &v, &v, 8).unwrap();
        let e = 1f64.exp();
        let (l1, l2) = eigen_2x2([[0.5, 0.5 * e], [0.5 * e, 0.5]]);
        let ratio = l2 / l1;
        for w in c.values.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        let prod = gibbs_markov(&Potential::constant(0.0), &nu).unwrap();
        let c = correlation_sequence(&prod, &nu, &v, &v, 5).unwrap();
        assert!(c.values.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn iterated_system_scales_entropy() {
        let nu = uniform(2);
        let a = PotentialTable::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let sol = solve(&a, &nu);
        let h = entropy_gibbs(&sol.normalized, &sol.gibbs).unwrap().value.finite().unwrap();
        for n in [2, 3] {
            let it = iterate_system(&a, &nu, n).unwrap();
            let s2 = solve(&it.table, &it.nu);
            assert!((s2.eig.log_lambda - n as f64 * sol.eig.log_lambda).abs() < 1e-10);
            let h2 = entropy_gibbs(&s2.normalized, &s2.gibbs).unwrap().value.finite().unwrap();
            assert!((h2 - n as f64 * h).abs() < 1e-9, "{h2} vs {}", n as f64 * h);
        }
    }
}
