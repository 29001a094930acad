//! Zero-temperature limits: β-sweeps, calibrated subactions, maximizing
//! measures and an independent max-mean-cycle computation of `m(A)`.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::MarkovGibbs;
use crate::numeric::{log_sum_exp, max_abs_diff, max_of};
use crate::potential::PotentialTable;
use crate::space::{AprioriMeasure, ConfigurationGrid, StateSpace};
use crate::transfer::{SolverOptions, TransferOperator};

/// Declared selection threshold on `‖V_{β_max} − V_{β_prev}‖_∞`.
pub const SELECTION_THRESHOLD: f64 = 1e-3;

/// Graphs with at most this many nodes are cross-checked by enumerating
/// simple cycles.
pub const EXHAUSTIVE_NODE_LIMIT: usize = 8;

pub fn default_betas() -> Vec<f64> {
    (0..=10).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleMethod {
    Karp,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMeanReport {
    /// `m(A)`, the mean of the reported cycle.
    pub m: f64,
    /// Karp's value, computed independently of the cycle.
    pub karp_value: f64,
    /// Block nodes of an optimal cycle, starting at its smallest node.
    pub cycle: Vec<usize>,
    pub method: CycleMethod,
    /// Exhaustive simple-cycle maximum, for small graphs.
    pub exhaustive: Option<f64>,
    /// Indices of the `k`-tuples lying on some optimal cycle.
    pub critical_tuples: Vec<usize>,
}

/// Karp's theorem on the block digraph: nodes are blocks, each tuple `t` is an
/// edge `head(t) → tail(t)` weighted `A(t)`.
fn karp_value(table: &PotentialTable) -> f64 {
    let nb = table.n_blocks();
    let n_atoms = table.n_atoms();
    // d[k][v]: best weight of a k-edge walk ending at v
    let mut d = vec![vec![f64::NEG_INFINITY; nb]; nb + 1];
    d[0].iter_mut().for_each(|x| *x = 0.0);
    for k in 1..=nb {
        let (prev, cur) = d.split_at_mut(k);
        let prev = &prev[k - 1];
        cur[0]
            .par_iter_mut()
            .with_min_len(64)
            .enumerate()
            .for_each(|(v, slot)| {
                // edges into v come from tuples a·v for a in atoms
                let mut best = f64::NEG_INFINITY;
                for a in 0..n_atoms {
                    let t = a * nb + v;
                    let cand = prev[table.head(t)] + table.get(t);
                    if cand > best {
                        best = cand;
                    }
                }
                *slot = best;
            });
    }
    let n = nb;
    (0..nb)
        .filter(|&v| d[n][v].is_finite())
        .map(|v| {
            (0..n)
                .filter(|&k| d[k][v].is_finite())
                .map(|k| (d[n][v] - d[k][v]) / (n - k) as f64)
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Longest-path potential for weights `A − m`: `V(σt) ≥ V(head t) + A(t) − m`.
fn bellman_ford_potential(table: &PotentialTable, m: f64) -> Vec<f64> {
    let nb = table.n_blocks();
    let mut v = vec![0.0; nb];
    for _ in 0..nb + 1 {
        let mut changed = false;
        for t in 0..table.values().len() {
            let cand = v[table.head(t)] + table.get(t) - m;
            let tail = table.tail(t);
            if cand > v[tail] + 1e-15 * (1.0 + v[tail].abs()) {
                v[tail] = cand;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    v
}

/// Strongly connected component label per node (iterative Tarjan).
fn scc_labels(nb: usize, succ: &[Vec<usize>]) -> Vec<usize> {
    let mut index = vec![usize::MAX; nb];
    let mut low = vec![0; nb];
    let mut on_stack = vec![false; nb];
    let mut stack = Vec::new();
    let mut label = vec![usize::MAX; nb];
    let mut next_index = 0;
    let mut next_label = 0;
    for root in 0..nb {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        label[w] = next_label;
                        if w == v {
                            break;
                        }
                    }
                    next_label += 1;
                }
            }
        }
    }
    label
}

fn exhaustive_check(table: &PotentialTable) -> Option<(f64, Vec<usize>)> {
    let nb = table.n_blocks();
    let mut adj = vec![vec![None; nb]; nb];
    for t in 0..table.values().len() {
        adj[table.head(t)][table.tail(t)] = Some(table.get(t));
    }
    crate::oracles::max_mean_simple_cycle(&adj)
}

pub fn max_mean_cycle(table: &PotentialTable) -> Result<MaxMeanReport> {
    let nb = table.n_blocks();
    let karp = karp_value(table);
    let scale = 1.0 + table.sup_norm();
    let v = bellman_ford_potential(table, karp);
    let tol = 1e-9 * scale;
    let tight: Vec<bool> = (0..table.values().len())
        .map(|t| table.get(t) - karp + v[table.head(t)] - v[table.tail(t)] >= -tol)
        .collect();
    let mut succ = vec![Vec::new(); nb];
    for (t, &ok) in tight.iter().enumerate() {
        if ok {
            succ[table.head(t)].push(table.tail(t));
        }
    }
    succ.iter_mut().for_each(|s| {
        s.sort_unstable();
        s.dedup();
    });
    let label = scc_labels(nb, &succ);
    let critical_tuples: Vec<usize> = (0..table.values().len())
        .filter(|&t| tight[t] && label[table.head(t)] == label[table.tail(t)])
        .collect();
    let start = critical_tuples
        .iter()
        .map(|&t| table.head(t))
        .min()
        .ok_or_else(|| Error::NotConverged {
            method: "critical cycle search".into(),
            iterations: nb,
            residual: f64::NAN,
        })?;
    // shortest tight cycle through `start`, smallest successors first
    let mut parent = vec![usize::MAX; nb];
    let mut queue = VecDeque::from([start]);
    let mut closing = None;
    'bfs: while let Some(u) = queue.pop_front() {
        for &w in &succ[u] {
            if label[w] != label[start] {
                continue;
            }
            if w == start {
                closing = Some(u);
                break 'bfs;
            }
            if parent[w] == usize::MAX {
                parent[w] = u;
                queue.push_back(w);
            }
        }
    }
    let mut cycle = vec![];
    let mut u = closing.expect("critical component contains a cycle");
    while u != start {
        cycle.push(u);
        u = parent[u];
    }
    cycle.push(start);
    cycle.reverse();
    let n_atoms = table.n_atoms();
    let len = cycle.len();
    let sum: f64 = (0..len)
        .map(|i| {
            let (a, b) = (cycle[i], cycle[(i + 1) % len]);
            table.get(a * n_atoms + b % n_atoms)
        })
        .sum();
    let m = sum / len as f64;
    let (method, exhaustive) = if nb <= EXHAUSTIVE_NODE_LIMIT {
        (CycleMethod::Exhaustive, exhaustive_check(table).map(|e| e.0))
    } else {
        (CycleMethod::Karp, None)
    };
    Ok(MaxMeanReport {
        m,
        karp_value: karp,
        cycle,
        method,
        exhaustive,
        critical_tuples,
    })
}

#[derive(Debug, Clone)]
pub struct BetaRecord {
    pub beta: f64,
    pub log_lambda: f64,
    /// `(1/β) log λ_β`.
    pub scaled_log_lambda: f64,
    /// `V_β = (1/β) log ψ_β`, max 0.
    pub v: Vec<f64>,
    pub gibbs: MarkovGibbs,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct BetaSweep {
    pub records: Vec<BetaRecord>,
    pub sup_norm: f64,
}

impl BetaSweep {
    /// `|(1/β) log λ_β| ≤ ‖A‖_∞` at every β, with float slack.
    pub fn pressure_bound_holds(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.scaled_log_lambda.abs() <= self.sup_norm * (1.0 + 1e-12) + 1e-15)
    }

    /// `sup |V_β − V_{β_prev}|` per record (0 for the first).
    pub fn v_gaps(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for w in self.records.windows(2) {
            out.push(max_abs_diff(&w[0].v, &w[1].v));
        }
        out
    }

    pub fn last(&self) -> &BetaRecord {
        self.records.last().expect("sweeps are non-empty")
    }

    /// `|(1/β_max) log λ − (1/β_prev) log λ|`.
    pub fn tail_gap(&self) -> f64 {
        let n = self.records.len();
        if n < 2 {
            return 0.0;
        }
        (self.records[n - 1].scaled_log_lambda - self.records[n - 2].scaled_log_lambda).abs()
    }
}

pub fn beta_sweep(table: &PotentialTable, nu: &AprioriMeasure, betas: &[f64], opts: &SolverOptions) -> Result<BetaSweep> {
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0)) || betas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("betas must be positive and increasing".into()));
    }
    let records: Vec<Result<BetaRecord>> = betas
        .par_iter()
        .map(|&beta| {
            let scaled = table.scaled(beta);
            let op = TransferOperator::new(&scaled, nu)?;
            let name_beta = |e: Error| match e {
                Error::Overflow { detail, .. } => Error::Overflow { beta, detail },
                Error::NotConverged {
                    method,
                    iterations,
                    residual,
                } => Error::NotConverged {
                    method: format!("{method} at beta = {beta}"),
                    iterations,
                    residual,
                },
                other => other,
            };
            let eig = op.principal(opts).map_err(name_beta)?;
            let rho = op.eigenmeasure(&eig, nu, opts).map_err(name_beta)?;
            let gibbs = MarkovGibbs::from_eigendata(&scaled, nu, &eig, &rho)?;
            if !eig.log_lambda.is_finite() {
                return Err(Error::Overflow {
                    beta,
                    detail: "eigenvalue is not finite".into(),
                });
            }
            Ok(BetaRecord {
                beta,
                log_lambda: eig.log_lambda,
                scaled_log_lambda: eig.log_lambda / beta,
                v: eig.log_psi.iter().map(|x| x / beta).collect(),
                gibbs,
                iterations: eig.iterations + rho.iterations,
            })
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BetaSweep {
        records,
        sup_norm: table.sup_norm(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subaction {
    pub v: Vec<f64>,
    pub m: f64,
    /// `R₋(t) = A(t) + V(head t) − V(tail t) − m` on tuples.
    pub residual: Vec<f64>,
    /// `max_t R₋(t)`.
    pub max_residual: f64,
    /// `max_x |max_a R₋(a x)|`.
    pub calibration_error: f64,
    /// Tuples where `R₋` vanishes to `1e−9`; not claimed to be the support.
    pub zero_set: Vec<usize>,
}

pub fn subaction_of(table: &PotentialTable, v: &[f64], m: f64) -> Result<Subaction> {
    if v.len() != table.n_blocks() {
        return Err(Error::RankMismatch {
            expected: table.n_blocks(),
            got: v.len(),
        });
    }
    let residual: Vec<f64> = (0..table.values().len())
        .map(|t| table.get(t) + v[table.head(t)] - v[table.tail(t)] - m)
        .collect();
    let nb = table.n_blocks();
    let n = table.n_atoms();
    let calibration_error = (0..nb)
        .map(|x| (0..n).map(|a| residual[a * nb + x]).fold(f64::NEG_INFINITY, f64::max).abs())
        .fold(0.0, f64::max);
    let scale = 1e-9 * (1.0 + table.sup_norm());
    let zero_set = (0..residual.len()).filter(|&t| residual[t].abs() <= scale).collect();
    Ok(Subaction {
        v: v.to_vec(),
        m,
        max_residual: max_of(&residual),
        calibration_error,
        residual,
        zero_set,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubactionOutcome {
    /// Whether `‖V_{β_max} − V_{β_prev}‖_∞` fell below the threshold.
    pub selected: bool,
    pub gap: f64,
    /// Tolerance `10·(gap + log(grid size)/β_max)`.
    pub tol: f64,
    /// Built from `V` at the largest β either way.
    pub subaction: Subaction,
    /// `V` at the previous β, kept as the second candidate on non-selection.
    pub previous: Option<Vec<f64>>,
}

pub fn subaction_extract(sweep: &BetaSweep, table: &PotentialTable, m: f64) -> Result<SubactionOutcome> {
    let last = sweep.last();
    let gap = *sweep.v_gaps().last().unwrap();
    let tol = 10.0 * (gap + (table.n_blocks() as f64).ln().max(1.0) / last.beta);
    let subaction = subaction_of(table, &last.v, m)?;
    let previous = (sweep.records.len() >= 2).then(|| sweep.records[sweep.records.len() - 2].v.clone());
    Ok(SubactionOutcome {
        selected: gap < SELECTION_THRESHOLD,
        gap,
        tol,
        subaction,
        previous,
    })
}

/// `max_x |(1/β) log Σ_a w_a e^{βW(a)} − max_a W(a)|` for
/// `W(a) = A(ax) + V(ax) − V(x)`, together with the bound `log(1/min w)/β`.
pub fn laplace_gap(table: &PotentialTable, nu: &AprioriMeasure, v: &[f64], beta: f64) -> (f64, f64) {
    let nb = table.n_blocks();
    let n = table.n_atoms();
    let lw = nu.log_weights();
    let gap = (0..nb)
        .map(|x| {
            let w: Vec<f64> = (0..n)
                .map(|a| {
                    let t = a * nb + x;
                    table.get(t) + v[table.head(t)] - v[x]
                })
                .collect();
            let terms: Vec<f64> = (0..n).map(|a| lw[a] + beta * w[a]).collect();
            (log_sum_exp(&terms) / beta - max_of(&w)).abs()
        })
        .fold(0.0, f64::max);
    let bound = (-crate::numeric::min_of(lw)).max((n as f64).ln()) / beta;
    (gap, bound)
}

/// `Σ_i d_M(t_i, c_i)` minimized over the given tuples `c`.
fn tuple_distances(space: &StateSpace, k: usize, targets: &[usize]) -> Vec<f64> {
    let grid = ConfigurationGrid::with_cap(space.len(), k, usize::MAX).expect("grid");
    let decoded: Vec<Vec<usize>> = targets.iter().map(|&c| grid.tuple(c)).collect();
    (0..grid.size())
        .into_par_iter()
        .with_min_len(256)
        .map(|t| {
            let x = grid.tuple(t);
            decoded
                .iter()
                .map(|c| x.iter().zip(c).map(|(&a, &b)| space.atom_distance(a, b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// `(β, μ_β{t : dist(t, critical tuples) > ε})` for every record.
pub fn concentration_report(sweep: &BetaSweep, space: &StateSpace, critical_tuples: &[usize], eps: f64) -> Vec<(f64, f64)> {
    let k = sweep.last().gibbs.range();
    let dist = tuple_distances(space, k, critical_tuples);
    sweep
        .records
        .iter()
        .map(|r| {
            let mass: f64 = r
                .gibbs
                .tuple_log_masses()
                .iter()
                .zip(&dist)
                .filter(|(_, d)| **d > eps)
                .map(|(m, _)| m.exp())
                .sum();
            (r.beta, mass)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport {
    pub hypothesis_holds: bool,
    /// `min (A(..0..) − A(..proxy..))` over the tested swaps.
    pub hypothesis_margin: f64,
    /// Per β: `min_x (log ψ_β(0·x) − log ψ_β(proxy·x))`; empty when the
    /// hypothesis fails.
    pub claim_margins: Vec<(f64, f64)>,
    pub claim_holds: bool,
}

/// Check the ordering hypothesis on the first `range` coordinates (the
/// last atom stands in for the accumulation point) and, when it holds, that
/// `ψ_β(proxy·x) < ψ_β(0·x)` for every block `x` and every β.
pub fn ordering_condition_check(
    table: &PotentialTable,
    range: usize,
    nu: &AprioriMeasure,
    betas: &[f64],
    opts: &SolverOptions,
) -> Result<OrderingReport> {
    if nu.space().kind() != crate::space::SpaceKind::TruncatedCountable {
        return Err(Error::Unsupported("ordering check needs a truncated countable alphabet".into()));
    }
    if range == 0 || range > table.range() {
        return Err(Error::InvalidArgument(format!("range {range} outside 1..={}", table.range())));
    }
    let n = table.n_atoms();
    let proxy = n - 1;
    let k = table.range();
    let stride = |p: usize| n.pow((k - 1 - p) as u32);
    let mut margin = f64::INFINITY;
    for p in 0..range {
        let s = stride(p);
        for t in 0..table.values().len() {
            if (t / s) % n != 0 {
                continue;
            }
            margin = margin.min(table.get(t) - table.get(t + proxy * s));
        }
    }
    let hypothesis_holds = margin > 0.0;
    if !hypothesis_holds {
        return Ok(OrderingReport {
            hypothesis_holds,
            hypothesis_margin: margin,
            claim_margins: Vec::new(),
            claim_holds: false,
        });
    }
    let sweep = beta_sweep(table, nu, betas, opts)?;
    let nb = table.n_blocks();
    let per = nb / n;
    let claim_margins: Vec<(f64, f64)> = sweep
        .records
        .iter()
        .map(|r| {
            let m = (0..per)
                .map(|x| (r.v[x] - r.v[proxy * per + x]) * r.beta)
                .fold(f64::INFINITY, f64::min);
            (r.beta, m)
        })
        .collect();
    let claim_holds = claim_margins.iter().all(|(_, m)| *m > 0.0);
    Ok(OrderingReport {
        hypothesis_holds,
        hypothesis_margin: margin,
        claim_margins,
        claim_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;
    use crate::space::{build_apriori, MeasureSpec};

    fn two_state() -> PotentialTable {
        PotentialTable::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn karp_two_state() {
        let r = max_mean_cycle(&two_state()).unwrap();
        assert_eq!(r.m, 1.0);
        assert_eq!(r.cycle, vec![0, 1]);
        assert_eq!(r.exhaustive, Some(1.0));
        assert_eq!(r.critical_tuples, vec![1, 2]);
    }

    #[test]
    fn karp_constant_and_xy() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 3 }).unwrap();
        let c = Potential::constant(-0.3).tabulate(nu.space()).unwrap();
        let r = max_mean_cycle(&c).unwrap();
        assert!((r.m + 0.3).abs() < 1e-15);
        assert_eq!(r.cycle, vec![0]);

        let circle = build_apriori(&MeasureSpec::Circle { n: 16 }).unwrap();
        let xy = Potential::xy(0.0, 0.0).tabulate(circle.space()).unwrap();
        let r = max_mean_cycle(&xy).unwrap();
        assert!((r.m - 1.0).abs() < 1e-12);
        assert_eq!(r.cycle.len(), 1);
        // every diagonal fixed point is critical
        assert_eq!(r.critical_tuples.len(), 16);
    }

    #[test]
    fn karp_matches_enumeration_on_random_tables() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = PotentialTable::new(2, 3, vals).unwrap();
            let r = max_mean_cycle(&t).unwrap();
            let e = r.exhaustive.unwrap();
            assert!((r.m - e).abs() < 1e-12, "{} vs {e}", r.m);
            assert!((r.karp_value - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_of_constant() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 2 }).unwrap();
        let t = Potential::constant(0.6).tabulate(nu.space()).unwrap();
        let s = beta_sweep(&t, &nu, &default_betas(), &SolverOptions::default()).unwrap();
        for r in &s.records {
            assert!((r.scaled_log_lambda - 0.6).abs() < 1e-12);
            assert_eq!(max_of(&r.v), 0.0);
        }
        assert!(s.pressure_bound_holds());
    }

    #[test]
    fn xy_sweep_tracks_bessel() {
        let nu = build_apriori(&MeasureSpec::Circle { n: 256 }).unwrap();
        let t = Potential::xy(0.0, 0.0).tabulate(nu.space()).unwrap();
        let s = beta_sweep(&t, &nu, &[16.0, 64.0], &SolverOptions::default()).unwrap();
        let at64 = s.records[1].scaled_log_lambda;
        let oracle = crate::oracles::log_bessel_i(0, 64.0) / 64.0;
        assert!((at64 - oracle).abs() < 1e-9);
        assert!((at64 - 0.953).abs() < 1e-3);
        assert!(at64 > s.records[0].scaled_log_lambda);
    }

    #[test]
    fn two_state_subaction() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 2 }).unwrap();
        let s = beta_sweep(&two_state(), &nu, &default_betas(), &SolverOptions::default()).unwrap();
        let out = subaction_extract(&s, &two_state(), 1.0).unwrap();
        assert!(out.selected);
        let r = &out.subaction.residual;
        assert!(r[1].abs() < 1e-12 && r[2].abs() < 1e-12);
        assert!(r[0] < -0.5 && r[3] < -0.5);
        assert!(out.subaction.calibration_error < 1e-12);
    }

    #[test]
    fn zero_potential_concentration_is_trivial() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 2 }).unwrap();
        let t = Potential::constant(0.0).tabulate(nu.space()).unwrap();
        let mm = max_mean_cycle(&t).unwrap();
        assert_eq!(mm.critical_tuples.len(), 4);
        let s = beta_sweep(&t, &nu, &[1.0, 8.0], &SolverOptions::default()).unwrap();
        for (_, m) in concentration_report(&s, nu.space(), &mm.critical_tuples, 0.5) {
            assert_eq!(m, 0.0);
        }
    }

    #[test]
    fn two_state_self_loops_lose_mass() {
        let nu = build_apriori(&MeasureSpec::Uniform { d: 2 }).unwrap();
        let mm = max_mean_cycle(&two_state()).unwrap();
        let s = beta_sweep(&two_state(), &nu, &default_betas(), &SolverOptions::default()).unwrap();
        let masses = concentration_report(&s, nu.space(), &mm.critical_tuples, 0.5);
        for ((beta, m), r) in masses.iter().zip(&s.records) {
            // μ_β of the diagonal is 1/(1 + e^β)
            let expect = 1.0 / (1.0 + beta.exp());
            assert!((m - expect).abs() < 1e-12 * (1.0 + expect), "{m} {expect}");
            let _ = r;
        }
    }

    #[test]
    fn ordering_examples() {
        let nu = build_apriori(&MeasureSpec::Geometric { q: 0.5, n: 8 }).unwrap();
        let a = Potential::neg_distance_to_zero(2).unwrap().tabulate(nu.space()).unwrap();
        let rep = ordering_condition_check(&a, 2, &nu, &[1.0, 16.0, 256.0], &SolverOptions::default()).unwrap();
        assert!(rep.hypothesis_holds && rep.claim_holds);

        let zero = Potential::constant(0.0).tabulate(nu.space()).unwrap();
        let rep = ordering_condition_check(&zero, 1, &nu, &[1.0], &SolverOptions::default()).unwrap();
        assert!(!rep.hypothesis_holds);
        assert_eq!(rep.hypothesis_margin, 0.0);

        // decreasing in each coordinate: margins equal the table gaps
        let vals: Vec<f64> = (0..64).map(|t| -(((t / 8) as f64) * 0.3 + ((t % 8) as f64) * 0.1)).collect();
        let tab = PotentialTable::new(8, 2, vals).unwrap();
        let rep = ordering_condition_check(&tab, 2, &nu, &[1.0, 4.0], &SolverOptions::default()).unwrap();
        assert!((rep.hypothesis_margin - 0.7).abs() < 1e-12);
        assert!(rep.claim_holds);
    }
}
