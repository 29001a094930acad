//! Involution kernel `W(y|x)`, the dual potential `A*` on the reversed
//! lattice, reconstruction of `ψ_A` from the dual eigenmeasure, and
//! coordinate derivatives of `ψ_A`.
//!
//! Blocks are `r = k − 1` tuples. A y-block lists `(y₁, …, y_r)` with `y₁`
//! most significant, so the dual system is an ordinary one-sided system in
//! the coordinates `z = (y₁, y₂, …)` and `ya` corresponds to `(a, y₁, …)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::MarkovGibbs;
use crate::numeric::{log_sum_exp, max_abs_diff, max_of};
use crate::potential::{Potential, PotentialTable};
use crate::space::{AprioriMeasure, ConfigurationGrid, SpaceKind};
use crate::transfer::{EigenMeasure, EigenPair, SolverOptions, TransferOperator};

/// Tolerance for `x`-independence of `A*` and the cocycle identity,
/// relative to `1 + ‖A‖_∞`.
pub const COCYCLE_TOLERANCE: f64 = 1e-10;

/// Default step for central differences, in radians.
pub const DERIVATIVE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionKernel {
    n_atoms: usize,
    rank: usize,
    x_ref: Vec<usize>,
    /// `W(y|x)` at `y_block * n_blocks + x_block`.
    values: Vec<f64>,
}

impl InvolutionKernel {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_blocks(&self) -> usize {
        self.n_atoms.pow(self.rank as u32)
    }

    pub fn reference(&self) -> &[usize] {
        &self.x_ref
    }

    /// Number of surviving terms in the defining series.
    pub fn depth(&self) -> usize {
        self.rank
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.n_blocks() + x]
    }
}

/// Partial sum `Σ_{n=1}^{depth} A(y_n..y_1, x) − A(y_n..y_1, x′)` for
/// explicit coordinate lists (`ys[0] = y₁`, `xs[0] = x₁`).
pub fn kernel_partial_sum(table: &PotentialTable, ys: &[usize], xs: &[usize], x_ref: &[usize], depth: usize) -> f64 {
    let k = table.range();
    let n_atoms = table.n_atoms();
    let index = |n: usize, x: &[usize]| -> usize {
        // tuple (y_n, …, y_1, x_1, …, x_{k−n}) truncated to k coordinates
        (0..k).fold(0, |acc, i| {
            let c = if i < n { ys[n - 1 - i] } else { x[i - n] };
            acc * n_atoms + c
        })
    };
    (1..=depth)
        .map(|n| {
            if n >= k {
                // all k coordinates come from y, so the two terms cancel
                0.0
            } else {
                table.get(index(n, xs)) - table.get(index(n, x_ref))
            }
        })
        .sum()
}

/// Build `W` on block pairs, with reference configuration `x_ref` (an
/// `r`-block; `None` means all-first-atom).
pub fn involution_kernel(table: &PotentialTable, x_ref: Option<&[usize]>) -> Result<InvolutionKernel> {
    let r = table.block_rank();
    let n = table.n_atoms();
    let x_ref = match x_ref {
        None => vec![0; r],
        Some(x) if x.len() == r && x.iter().all(|&a| a < n) => x.to_vec(),
        Some(x) => {
            return Err(Error::Arity {
                expected: r,
                got: x.len(),
            })
        }
    };
    let grid = ConfigurationGrid::with_cap(n, r, usize::MAX)?;
    let nb = grid.size();
    let values: Vec<f64> = (0..nb * nb)
        .into_par_iter()
        .with_min_len(1024)
        .map(|p| {
            let ys = grid.tuple(p / nb);
            let xs = grid.tuple(p % nb);
            kernel_partial_sum(table, &ys, &xs, &x_ref, r)
        })
        .collect();
    Ok(InvolutionKernel {
        n_atoms: n,
        rank: r,
        x_ref,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPotential {
    /// `A*` as a range-`k` table in the reversed coordinates `z`.
    pub table: PotentialTable,
    /// `max |A*(z; x) − A*(z; x′)|` over all `x`-blocks.
    pub x_dependence: f64,
    /// `max |(A*+W)(ya|x) − (A+W)(y|ax)|` over all block triples.
    pub cocycle_residual: f64,
}

/// `A*(z) = A(z₁x) + W(z₂…z_k | z₁x) − W(z₁…z_r | x)`, evaluated for every
/// `x`-block to confirm it depends on `z` alone.
pub fn dual_potential(table: &PotentialTable, kernel: &InvolutionKernel) -> Result<DualPotential> {
    let n = table.n_atoms();
    let nb = table.n_blocks();
    if kernel.n_blocks() != nb || kernel.n_atoms != n {
        return Err(Error::RankMismatch {
            expected: nb,
            got: kernel.n_blocks(),
        });
    }
    let per = nb / n;
    // A*(z) at block x, where z = z₁·z_tail with z_tail = (z₂…z_k)
    let at = |z: usize, x: usize| -> f64 {
        let z1 = z / nb;
        let z_tail = z % nb;
        let z_head = z / n;
        table.get(z1 * nb + x) + kernel.get(z_tail, z1 * per + x / n) - kernel.get(z_head, x)
    };
    let x0 = block_of(&kernel.x_ref, n);
    let values: Vec<f64> = (0..nb * n).map(|z| at(z, x0)).collect();
    let x_dependence = (0..nb * n)
        .into_par_iter()
        .map(|z| (0..nb).map(|x| (at(z, x) - values[z]).abs()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    let star = PotentialTable::new(n, table.range(), values)?;
    let cocycle_residual = cocycle_residual(table, &star, kernel);
    let tol = COCYCLE_TOLERANCE * (1.0 + table.sup_norm());
    if x_dependence > tol {
        return Err(Error::Provenance(format!(
            "dual potential varies with x by {x_dependence:e} (tolerance {tol:e})"
        )));
    }
    Ok(DualPotential {
        table: star,
        x_dependence,
        cocycle_residual,
    })
}

fn block_of(tuple: &[usize], n: usize) -> usize {
    tuple.iter().fold(0, |acc, &a| acc * n + a)
}

/// `max |A*(a y) + W(a y_{<r} | x) − A(a x) − W(y | a x_{<r})|`.
pub fn cocycle_residual(table: &PotentialTable, star: &PotentialTable, kernel: &InvolutionKernel) -> f64 {
    let n = table.n_atoms();
    let nb = table.n_blocks();
    let per = nb / n;
    (0..nb)
        .into_par_iter()
        .map(|y| {
            let mut worst = 0.0f64;
            for a in 0..n {
                let ya = a * per + y / n;
                for x in 0..nb {
                    let lhs = star.get(a * nb + y) + kernel.get(ya, x);
                    let rhs = table.get(a * nb + x) + kernel.get(y, a * per + x / n);
                    worst = worst.max((lhs - rhs).abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct InvolutionSystem {
    pub table: PotentialTable,
    pub kernel: InvolutionKernel,
    pub dual: DualPotential,
    pub eig: EigenPair,
    pub rho: EigenMeasure,
    pub dual_eig: EigenPair,
    pub dual_rho: EigenMeasure,
    /// `c` with `∬ e^{W−c} dρ_{A*} dρ_A = 1`.
    pub log_c: f64,
}

impl InvolutionSystem {
    /// `|λ_{A*} − λ_A| / λ_A`.
    pub fn lambda_gap(&self) -> f64 {
        (self.dual_eig.log_lambda - self.eig.log_lambda).exp_m1().abs()
    }
}

/// Solve the direct and dual systems and calibrate `c`.
pub fn involution_system(table: &PotentialTable, nu: &AprioriMeasure, x_ref: Option<&[usize]>, opts: &SolverOptions) -> Result<InvolutionSystem> {
    let kernel = involution_kernel(table, x_ref)?;
    let dual = dual_potential(table, &kernel)?;
    let op = TransferOperator::new(table, nu)?;
    let eig = op.principal(opts)?;
    let rho = op.eigenmeasure(&eig, nu, opts)?;
    let dual_op = TransferOperator::new(&dual.table, nu)?;
    let dual_eig = dual_op.principal(opts)?;
    let dual_rho = dual_op.eigenmeasure(&dual_eig, nu, opts)?;
    let log_c = calibration_constant(&kernel, &dual_rho, &rho);
    Ok(InvolutionSystem {
        table: table.clone(),
        kernel,
        dual,
        eig,
        rho,
        dual_eig,
        dual_rho,
        log_c,
    })
}

pub fn calibration_constant(kernel: &InvolutionKernel, dual_rho: &EigenMeasure, rho: &EigenMeasure) -> f64 {
    let nb = kernel.n_blocks();
    // deterministic order: y outer, x inner
    let per_y: Vec<f64> = (0..nb)
        .map(|y| {
            let terms: Vec<f64> = (0..nb).map(|x| kernel.get(y, x) + rho.log_weights[x]).collect();
            dual_rho.log_weights[y] + log_sum_exp(&terms)
        })
        .collect();
    log_sum_exp(&per_y)
}

/// `log ψ_rec(x) = log Σ_y ρ*(y) e^{W(y|x) − c}`; with `c` calibrated this is
/// `ψ_A` in the normalization `∫ψ dρ_A = 1`.
pub fn reconstruct_eigenfunction(kernel: &InvolutionKernel, dual_rho: &EigenMeasure, log_c: f64) -> Vec<f64> {
    let nb = kernel.n_blocks();
    (0..nb)
        .into_par_iter()
        .map(|x| {
            let terms: Vec<f64> = (0..nb).map(|y| dual_rho.log_weights[y] + kernel.get(y, x)).collect();
            log_sum_exp(&terms) - log_c
        })
        .collect()
}

/// `ψ_A` in the normalization `∫ψ dρ_A = 1`, from the direct solve.
pub fn direct_log_psi(sys: &InvolutionSystem) -> Vec<f64> {
    let pair: Vec<f64> = sys.eig.log_psi.iter().zip(&sys.rho.log_weights).map(|(a, b)| a + b).collect();
    let shift = log_sum_exp(&pair);
    sys.eig.log_psi.iter().map(|v| v - shift).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionReport {
    /// Sup gap of the max-normalized functions.
    pub sup_gap: f64,
    /// Sup gap with both sides normalized by `∫ψ dρ_A = 1`.
    pub calibrated_gap: f64,
}

pub fn reconstruction_report(sys: &InvolutionSystem) -> ReconstructionReport {
    let rec = reconstruct_eigenfunction(&sys.kernel, &sys.dual_rho, sys.log_c);
    let direct = direct_log_psi(sys);
    let max_norm = |v: &[f64]| {
        let m = max_of(v);
        v.iter().map(|x| (x - m).exp()).collect::<Vec<f64>>()
    };
    let exp = |v: &[f64]| v.iter().map(|x| x.exp()).collect::<Vec<f64>>();
    ReconstructionReport {
        sup_gap: max_abs_diff(&max_norm(&rec), &max_norm(&direct)),
        calibrated_gap: max_abs_diff(&exp(&rec), &exp(&direct)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaturalExtensionReport {
    /// Exchange identity between the direct and dual operators, relative to
    /// `1 + |value|`.
    pub exchange_residual: f64,
    /// `|∬ f∘σ̂ dμ̂ − ∬ f dμ̂|`.
    pub invariance_residual: f64,
    /// `|∬ f(x) dμ̂ − ∫ f dμ_A|`.
    pub projection_residual: f64,
    /// `|μ̂(total) − 1|`.
    pub mass_residual: f64,
}

impl NaturalExtensionReport {
    pub fn max(&self) -> f64 {
        self.exchange_residual
            .max(self.invariance_residual)
            .max(self.projection_residual)
            .max(self.mass_residual)
    }
}

/// Sample test functions on block pairs drawn from a seeded generator, one
/// constant function first.
pub fn sample_block_functions(n_blocks: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![1.0; n_blocks * n_blocks]];
    for _ in 1..count {
        out.push((0..n_blocks * n_blocks).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    out
}

/// Checks on the two-sided measure `dμ̂ = e^{W−c} dρ_{A*} dρ_A` for sample
/// functions `f(y-block, x-block)` (as returned by
/// [`sample_block_functions`]); each residual is the worst over samples.
pub fn natural_extension_check(sys: &InvolutionSystem, nu: &AprioriMeasure, mu: &MarkovGibbs, samples: &[Vec<f64>]) -> Result<NaturalExtensionReport> {
    let table = &sys.table;
    let star = &sys.dual.table;
    let kernel = &sys.kernel;
    let n = table.n_atoms();
    let nb = table.n_blocks();
    let per = nb / n;
    if samples.iter().any(|f| f.len() != nb * nb) {
        return Err(Error::RankMismatch {
            expected: nb * nb,
            got: samples.iter().map(|f| f.len()).find(|&l| l != nb * nb).unwrap_or(0),
        });
    }
    let lw = nu.log_weights();
    let log_lambda = sys.eig.log_lambda;
    let rho = &sys.rho.log_weights;
    let rho_star = &sys.dual_rho.log_weights;
    let mu_blocks = mu.block_log_masses();
    // density of μ̂ on block pairs
    let hat: Vec<f64> = (0..nb * nb)
        .map(|p| (kernel.values[p] - sys.log_c + rho_star[p / nb] + rho[p % nb]).exp())
        .collect();
    let mass_residual = (hat.iter().sum::<f64>() - 1.0).abs();
    let mut exchange = 0.0f64;
    let mut invariance = 0.0f64;
    let mut projection = 0.0f64;
    for f in samples {
        let fv = |y: usize, x: usize| f[y * nb + x];
        exchange = exchange.max(
            (0..nb)
                .into_par_iter()
                .map(|y| {
                    let mut worst = 0.0f64;
                    for x in 0..nb {
                        let mut lhs = 0.0;
                        let mut rhs = 0.0;
                        for a in 0..n {
                            let ya = a * per + y / n;
                            let ax = a * per + x / n;
                            lhs += (lw[a] + star.get(a * nb + y) + kernel.get(ya, x)).exp() * fv(ya, x);
                            rhs += (lw[a] + table.get(a * nb + x) + kernel.get(y, ax)).exp() * fv(ya, x);
                        }
                        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
                    }
                    worst
                })
                .reduce(|| 0.0, f64::max),
        );
        let plain: f64 = (0..nb * nb).map(|p| f[p] * hat[p]).sum();
        // ∬ f∘σ̂ dμ̂ with σ̂(y | a x) = (y a | x) needs ρ_A on (r+1)-cylinders
        let shifted: f64 = (0..nb)
            .map(|y| {
                let mut s = 0.0;
                for a in 0..n {
                    let ya = a * per + y / n;
                    for x in 0..nb {
                        let ax = a * per + x / n;
                        let log_cyl = lw[a] + table.get(a * nb + x) + rho[x] - log_lambda;
                        s += fv(ya, x) * (kernel.get(y, ax) - sys.log_c + rho_star[y] + log_cyl).exp();
                    }
                }
                s
            })
            .sum();
        invariance = invariance.max((shifted - plain).abs());
        let g: Vec<f64> = (0..nb).map(|x| fv(0, x)).collect();
        let lifted: f64 = (0..nb * nb).map(|p| g[p % nb] * hat[p]).sum();
        let direct: f64 = (0..nb).map(|x| g[x] * mu_blocks[x].exp()).sum();
        projection = projection.max((lifted - direct).abs());
    }
    Ok(NaturalExtensionReport {
        exchange_residual: exchange,
        invariance_residual: invariance,
        projection_residual: projection,
        mass_residual,
    })
}

fn require_circle_analytic(a: &Potential, nu: &AprioriMeasure) -> Result<()> {
    if nu.space().kind() != SpaceKind::CircleGrid {
        return Err(Error::Unsupported("coordinate derivatives are defined on the circle".into()));
    }
    if !a.is_analytic() {
        return Err(Error::Unsupported(
            "derivatives need a smooth builtin potential; tables and truncated distances are not differentiable".into(),
        ));
    }
    Ok(())
}

/// Points `(y_n, …, y_1, x_1, …)` truncated to the potential's own range.
fn term_points(a: &Potential, ys: &[f64], xs: &[f64], n: usize) -> Vec<f64> {
    (0..a.range())
        .map(|i| if i < n { ys[n - 1 - i] } else { xs[i - n] })
        .collect()
}

/// `W(y|x)` at continuous points: `ys = (y₁…y_r)`, `xs = (x₁…x_r)`.
pub fn kernel_at_points(a: &Potential, ys: &[f64], xs: &[f64], x_ref: &[f64]) -> Result<f64> {
    let r = ys.len();
    let mut w = 0.0;
    for n in 1..=r {
        if n >= a.range() {
            break;
        }
        w += a.eval_points(&term_points(a, ys, xs, n))? - a.eval_points(&term_points(a, ys, x_ref, n))?;
    }
    Ok(w)
}

/// `∂W/∂x_j(y|x) = Σ_{n≥1} D_{n+j}A(y_n…y_1, x)`; zero when `n + j` exceeds
/// the range for every surviving `n`.
pub fn kernel_derivative_at(a: &Potential, ys: &[f64], xs: &[f64], j: usize) -> Result<f64> {
    let mut d = 0.0;
    for n in 1..=ys.len() {
        if n + j > a.range() {
            break;
        }
        d += a.coordinate_derivative(&term_points(a, ys, xs, n), n + j)?;
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDerivative {
    pub j: usize,
    /// `∂W/∂x_j` at `y_block * n_blocks + x_block`.
    pub values: Vec<f64>,
    /// True when `j` lies beyond the potential's reach and the values are 0.
    pub beyond_range: bool,
}

pub fn kernel_derivative(a: &Potential, nu: &AprioriMeasure, kernel: &InvolutionKernel, j: usize) -> Result<KernelDerivative> {
    require_circle_analytic(a, nu)?;
    if j == 0 {
        return Err(Error::InvalidArgument("coordinates are numbered from 1".into()));
    }
    let nb = kernel.n_blocks();
    let beyond_range = j + 1 > a.range();
    if beyond_range {
        return Ok(KernelDerivative {
            j,
            values: vec![0.0; nb * nb],
            beyond_range,
        });
    }
    let grid = ConfigurationGrid::with_cap(kernel.n_atoms, kernel.rank, usize::MAX)?;
    let pts = |b: usize| grid.tuple(b).iter().map(|&i| nu.space().atom(i)).collect::<Vec<f64>>();
    let values = (0..nb * nb)
        .into_par_iter()
        .map(|p| kernel_derivative_at(a, &pts(p / nb), &pts(p % nb), j))
        .collect::<Result<Vec<f64>>>()?;
    Ok(KernelDerivative { j, values, beyond_range })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenfunctionDerivative {
    pub j: usize,
    /// Integral formula `∫ e^{W−c} ∂W/∂x_j dρ_{A*}` per grid block.
    pub theorem: Vec<f64>,
    /// Range-2 closed form `(1/λ) ∫ e^{A(y,x)} D₂A(y,x) ψ(y) dν(y)`.
    pub closed_form: Option<Vec<f64>>,
    /// Central differences (step `h`) of the continuous reconstruction
    /// `x ↦ ∫ e^{W(y|x)−c} dρ_{A*}(y)`.
    pub nystrom_fd: Vec<f64>,
    /// Central differences of `ψ` across neighbouring grid nodes (range 2).
    pub grid_fd: Option<Vec<f64>>,
    /// Values of `ψ` at the grid blocks in the same normalization.
    pub psi: Vec<f64>,
    pub beyond_range: bool,
}

/// `sup |a − b| / sup |b|`; 0 when both vanish.
pub fn relative_sup_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = max_abs_diff(a, b);
    if scale == 0.0 {
        gap
    } else {
        gap / scale
    }
}

/// Derivative of `ψ_A` (normalized by `∫ψ dρ_A = 1`) in coordinate `j`.
pub fn eigenfunction_derivative(a: &Potential, nu: &AprioriMeasure, sys: &InvolutionSystem, j: usize, h: f64) -> Result<EigenfunctionDerivative> {
    require_circle_analytic(a, nu)?;
    let kernel = &sys.kernel;
    let r = kernel.rank;
    let nb = kernel.n_blocks();
    let n = kernel.n_atoms;
    if j == 0 {
        return Err(Error::InvalidArgument("coordinates are numbered from 1".into()));
    }
    let space = nu.space();
    let grid = ConfigurationGrid::with_cap(n, r, usize::MAX)?;
    let pts = |b: usize| grid.tuple(b).iter().map(|&i| space.atom(i)).collect::<Vec<f64>>();
    let x_ref: Vec<f64> = kernel.x_ref.iter().map(|&i| space.atom(i)).collect();
    let psi: Vec<f64> = direct_log_psi(sys).into_iter().map(f64::exp).collect();
    let beyond_range = j > r || j + 1 > a.range();
    let kd = kernel_derivative(a, nu, kernel, j.min(r.max(1)))?;
    let rho_star = &sys.dual_rho.log_weights;
    let theorem: Vec<f64> = if beyond_range {
        vec![0.0; nb]
    } else {
        (0..nb)
            .map(|x| (0..nb).map(|y| (rho_star[y] + kernel.get(y, x) - sys.log_c).exp() * kd.values[y * nb + x]).sum())
            .collect()
    };
    let continuous = |xs: &[f64]| -> Result<f64> {
        let mut s = 0.0;
        for y in 0..nb {
            s += (rho_star[y] + kernel_at_points(a, &pts(y), xs, &x_ref)? - sys.log_c).exp();
        }
        Ok(s)
    };
    let nystrom_fd = (0..nb)
        .into_par_iter()
        .map(|x| {
            if j > r {
                return Ok(0.0);
            }
            let mut plus = pts(x);
            let mut minus = plus.clone();
            plus[j - 1] += h;
            minus[j - 1] -= h;
            Ok((continuous(&plus)? - continuous(&minus)?) / (2.0 * h))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (closed_form, grid_fd) = if r == 1 && j == 1 {
        let lw = nu.log_weights();
        let lambda = sys.eig.log_lambda;
        let closed = (0..n)
            .map(|x| {
                let mut s = 0.0;
                for y in 0..n {
                    let p = [space.atom(y), space.atom(x)];
                    let p = &p[..a.range().min(2)];
                    let d2 = if a.range() >= 2 { a.coordinate_derivative(p, 2)? } else { 0.0 };
                    s += (lw[y] + sys.table.get(y * n + x) - lambda).exp() * d2 * psi[y];
                }
                Ok(s)
            })
            .collect::<Result<Vec<f64>>>()?;
        let step = 2.0 * std::f64::consts::PI / n as f64;
        let fd = (0..n).map(|i| (psi[(i + 1) % n] - psi[(i + n - 1) % n]) / (2.0 * step)).collect();
        (Some(closed), Some(fd))
    } else {
        (None, None)
    };
    Ok(EigenfunctionDerivative {
        j,
        theorem,
        closed_form,
        nystrom_fd,
        grid_fd,
        psi,
        beyond_range,
    })
}

/// `max 2^j |(A(x + h e_j) − A(x))/h − D_jA(x)|` over sample points and
/// coordinates `j ≤ range`; membership in the smooth class at `(ε, h)` means
/// this is at most `ε`.
pub fn class_d_defect(a: &Potential, samples: &[Vec<f64>], h: f64) -> Result<f64> {
    if !a.is_analytic() {
        return Err(Error::Unsupported("difference quotients need point evaluation".into()));
    }
    let mut worst = 0.0f64;
    for p in samples {
        let base = a.eval_points(p)?;
        for j in 1..=a.range() {
            let mut q = p.clone();
            q[j - 1] += h;
            let quotient = (a.eval_points(&q)? - base) / h;
            let d = a.coordinate_derivative(p, j)?;
            worst = worst.max(2f64.powi(j as i32) * (quotient - d).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::solve_gibbs;
    use crate::space::{build_apriori, MeasureSpec};
    use crate::zerotemp::max_mean_cycle;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn range_two_kernel_is_single_term() {
        let t = PotentialTable::new(3, 2, (0..9).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let w = involution_kernel(&t, None).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(w.get(y, x), t.get(y * 3 + x) - t.get(y * 3));
            }
            assert_eq!(w.get(y, 0), 0.0);
        }
    }

    #[test]
    fn constant_kernel_vanishes() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 3 }).unwrap();
        let t = Potential::constant(0.4).tabulate(nu.space()).unwrap();
        let w = involution_kernel(&t, None).unwrap();
        assert!(w.values().iter().all(|v| *v == 0.0));
        let d = dual_potential(&t, &w).unwrap();
        assert!(d.table.values().iter().all(|v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn range_three_truncation_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = PotentialTable::new(2, 3, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let w = involution_kernel(&t, None).unwrap();
        assert_eq!(w.depth(), 2);
        for _ in 0..20 {
            let ys: Vec<usize> = (0..5).map(|_| rng.gen_range(0..2)).collect();
            let xs: Vec<usize> = (0..2).map(|_| rng.gen_range(0..2)).collect();
            let deep = kernel_partial_sum(&t, &ys, &xs, &[0, 0], 5);
            let block = w.get(ys[0] * 2 + ys[1], xs[0] * 2 + xs[1]);
            assert!((deep - block).abs() < 1e-14);
        }
        let d = dual_potential(&t, &w).unwrap();
        assert!(d.cocycle_residual < 1e-14);
    }

    #[test]
    fn symmetric_range_two_dual_formula() {
        // A(a,b) = A(b,a); x′₁ = 1
        let vals = vec![0.3, -0.2, 0.9, -0.2, 0.5, 0.1, 0.9, 0.1, -0.7];
        let t = PotentialTable::new(3, 2, vals).unwrap();
        let w = involution_kernel(&t, Some(&[1])).unwrap();
        let d = dual_potential(&t, &w).unwrap();
        for y1 in 0..3 {
            for y2 in 0..3 {
                let expect = t.get(y2 * 3 + y1) + t.get(y1 * 3 + 1) - t.get(y2 * 3 + 1);
                assert!((d.table.get(y1 * 3 + y2) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn xy_dual_formula_and_cocycle() {
        let nu = build_apriori(&MeasureSpec::Circle { n: 32 }).unwrap();
        let a = Potential::xy(0.0, 0.0);
        let t = a.tabulate(nu.space()).unwrap();
        let w = involution_kernel(&t, None).unwrap();
        let d = dual_potential(&t, &w).unwrap();
        assert!(d.cocycle_residual < 1e-12);
        let s = nu.space();
        for y1 in 0..32 {
            for y2 in 0..32 {
                let (p, q) = (s.atom(y1), s.atom(y2));
                let expect = (p - q).cos() + p.cos() - q.cos();
                assert!((d.table.get(y1 * 32 + y2) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_state_pipeline() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 2 }).unwrap();
        let t = PotentialTable::new(2, 2, vec![0.2, -0.4, 1.1, 0.9]).unwrap();
        let sys = involution_system(&t, &nu, None, &opts()).unwrap();
        assert!(sys.lambda_gap() < 1e-12);
        let rep = reconstruction_report(&sys);
        assert!(rep.sup_gap < 1e-9 && rep.calibrated_gap < 1e-9);
        let mu = solve_gibbs(&t, &nu, &opts()).unwrap().gibbs;
        let ne = natural_extension_check(&sys, &nu, &mu, &sample_block_functions(2, 4, 1)).unwrap();
        assert!(ne.max() < 1e-12, "{ne:?}");
        // m(A) = m(A*)
        let m = max_mean_cycle(&t).unwrap().m;
        let m_star = max_mean_cycle(&sys.dual.table).unwrap().m;
        assert!((m - m_star).abs() < 1e-12);
    }

    #[test]
    fn reference_point_does_not_change_reconstruction() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 3 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = PotentialTable::new(3, 3, (0..27).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let a = involution_system(&t, &nu, None, &opts()).unwrap();
        let b = involution_system(&t, &nu, Some(&[2, 1]), &opts()).unwrap();
        assert!((a.log_c - b.log_c).abs() > 1e-6);
        let ra = reconstruct_eigenfunction(&a.kernel, &a.dual_rho, a.log_c);
        let rb = reconstruct_eigenfunction(&b.kernel, &b.dual_rho, b.log_c);
        assert!(max_abs_diff(&ra, &rb) < 1e-9);
        assert!(reconstruction_report(&a).sup_gap < 1e-9);
    }

    #[test]
    fn xy_symmetric_reconstruction_is_flat() {
        let nu = build_apriori(&MeasureSpec::Circle { n: 64 }).unwrap();
        let a = Potential::xy(0.0, 0.0);
        let t = a.tabulate(nu.space()).unwrap();
        let sys = involution_system(&t, &nu, None, &opts()).unwrap();
        let rec = reconstruct_eigenfunction(&sys.kernel, &sys.dual_rho, sys.log_c);
        let spread = max_of(&rec) - rec.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-8);
        let der = eigenfunction_derivative(&a, &nu, &sys, 1, DERIVATIVE_STEP).unwrap();
        assert!(der.theorem.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn xy_kernel_derivative_matches_sine() {
        let nu = build_apriori(&MeasureSpec::Circle { n: 16 }).unwrap();
        let a = Potential::xy(0.0, 0.0);
        let t = a.tabulate(nu.space()).unwrap();
        let w = involution_kernel(&t, None).unwrap();
        let kd = kernel_derivative(&a, &nu, &w, 1).unwrap();
        let s = nu.space();
        let h = DERIVATIVE_STEP;
        for y in 0..16 {
            for x in 0..16 {
                let (p, q) = (s.atom(y), s.atom(x));
                assert!((kd.values[y * 16 + x] + (q - p).sin()).abs() < 1e-15);
                let fd = (kernel_at_points(&a, &[p], &[q + h], &[0.0]).unwrap()
                    - kernel_at_points(&a, &[p], &[q - h], &[0.0]).unwrap())
                    / (2.0 * h);
                assert!((fd - kd.values[y * 16 + x]).abs() < 1e-8);
            }
        }
        assert!(kernel_derivative(&a, &nu, &w, 2).unwrap().beyond_range);
    }

    #[test]
    fn xy_half_three_way_derivative() {
        let a = Potential::xy(0.0, 0.5);
        let mut grid_gaps = vec![];
        for n in [128, 256] {
            let nu = build_apriori(&MeasureSpec::Circle { n }).unwrap();
            let t = a.tabulate(nu.space()).unwrap();
            let sys = involution_system(&t, &nu, None, &opts()).unwrap();
            let der = eigenfunction_derivative(&a, &nu, &sys, 1, DERIVATIVE_STEP).unwrap();
            let closed = der.closed_form.as_ref().unwrap();
            assert!(relative_sup_gap(&der.theorem, closed) < 1e-6);
            assert!(relative_sup_gap(&der.nystrom_fd, &der.theorem) < 1e-6);
            assert!(der.theorem.iter().any(|v| v.abs() > 1e-2));
            grid_gaps.push(relative_sup_gap(der.grid_fd.as_ref().unwrap(), &der.theorem));
        }
        // second-order grid differences: halving the step quarters the gap
        assert!(grid_gaps[1] < 1e-3, "{grid_gaps:?}");
        assert!((grid_gaps[0] / grid_gaps[1] - 4.0).abs() < 0.2, "{grid_gaps:?}");
    }

    #[test]
    fn tables_are_not_differentiable() {
        let nu = build_apriori(&MeasureSpec::Circle { n: 8 }).unwrap();
        let a = Potential::table(8, 2, vec![0.0; 64]).unwrap();
        let t = a.tabulate(nu.space()).unwrap();
        let sys = involution_system(&t, &nu, None, &opts()).unwrap();
        assert!(matches!(
            eigenfunction_derivative(&a, &nu, &sys, 1, DERIVATIVE_STEP),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn xy_is_smooth_class() {
        let a = Potential::xy(0.3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28)])
            .collect();
        // second derivatives are bounded by 1 + 4γ = 3, so the defect is ≤ 4·3h/2
        for (eps, h) in [(1e-2, 1e-3), (1e-4, 1e-5)] {
            assert!(class_d_defect(&a, &samples, h).unwrap() <= eps);
        }
    }
}
