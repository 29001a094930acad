//! Job execution: each command renders its result files into an [`Emitter`]
//! and the caller writes them out with a manifest.

use std::path::Path;

use serde_json::{json, Value};

use ruelle_core::gibbs::{entropy_cylinder, entropy_gibbs, entropy_markov, pressure_of, solve_gibbs};
use ruelle_core::involution::{
    eigenfunction_derivative, involution_system, natural_extension_check, reconstruction_report,
    sample_block_functions,
};
use ruelle_core::numeric::min_of;
use ruelle_core::orbits::{periodic_rate_bound, pressure_periodic, recurrence_ratio};
use ruelle_core::potential::{normalization_residual, PotentialTable};
use ruelle_core::space::ConfigurationGrid;
use ruelle_core::transfer::{default_schedule, eigenpair_contraction, TransferOperator};
use ruelle_core::zerotemp::{
    beta_sweep, concentration_report, default_betas, laplace_gap, max_mean_cycle, subaction_extract,
    CycleMethod,
};

use crate::config::{Command, JobConfig, System};
use crate::emit::{fmt_f64, fmt_tuple, jf, CheckRecord, Emitter, RunManifest};
use crate::error::CliError;
use crate::scenarios::default_escape_radius;
use crate::suite::{run_criterion, CriterionOutcome, SuiteContext, CRITERIA};

/// Files, checks and the verification verdict of one job, before writing.
pub struct Rendered {
    pub emitter: Emitter,
    pub checks: Vec<CheckRecord>,
    pub failure: Option<String>,
}

/// Run `cfg`, write its files and manifest under `out_dir`.
pub fn run_job(cfg: &JobConfig, out_dir: &Path, verify: bool) -> Result<RunManifest, CliError> {
    let rendered = render(cfg, verify)?;
    rendered.emitter.write_all(out_dir)?;
    let manifest = RunManifest::build(cfg.command.name(), &cfg.canonical(), &rendered.emitter, rendered.checks, out_dir);
    manifest.write()?;
    match rendered.failure {
        Some(f) => Err(CliError::Verification(f)),
        None => Ok(manifest),
    }
}

pub fn render(cfg: &JobConfig, verify: bool) -> Result<Rendered, CliError> {
    let mut out = Rendered {
        emitter: Emitter::new(),
        checks: Vec::new(),
        failure: None,
    };
    if cfg.command == Command::VerifyAll {
        verify_all(cfg, &mut out)?;
        return Ok(out);
    }
    let sys = cfg.system()?;
    let table = sys.potential.tabulate(sys.nu.space())?;
    let e = &mut out.emitter;
    match cfg.command {
        Command::Solve => solve(cfg, &sys, &table, e)?,
        Command::Gibbs => gibbs(cfg, &sys, &table, e)?,
        Command::Entropy => entropy(cfg, &sys, &table, e)?,
        Command::PressurePeriodic => periodic(cfg, &sys, &table, e)?,
        Command::Zerotemp => zerotemp(cfg, &sys, &table, e)?,
        Command::Involution => involution(cfg, &sys, &table, e)?,
        Command::VerifyAll => unreachable!(),
    }
    if verify {
        system_checks(cfg, &sys, &table, &mut out)?;
    }
    Ok(out)
}

fn block_grid(n_atoms: usize, rank: usize) -> Result<ConfigurationGrid, CliError> {
    Ok(ConfigurationGrid::with_cap(n_atoms, rank, usize::MAX)?)
}

fn header(sys: &System, table: &PotentialTable) -> Value {
    json!({
        "potential": sys.label,
        "space": sys.nu.space().kind().name(),
        "atoms": sys.nu.len(),
        "range": table.range(),
        "blocks": table.n_blocks(),
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(x)) = (&mut base, extra) {
        b.extend(x);
    }
    base
}

fn solve(cfg: &JobConfig, sys: &System, table: &PotentialTable, e: &mut Emitter) -> Result<(), CliError> {
    let opts = cfg.solver_options();
    let sol = e.timed("solve", || solve_gibbs(table, &sys.nu, &opts))?;
    let schedule = cfg.solver.schedule.clone().unwrap_or_else(default_schedule);
    let con = e.timed("contraction", || eigenpair_contraction(table, &sys.nu, &schedule, &opts))?;
    let p = pressure_of(&sol)?;
    let grid = block_grid(table.n_atoms(), table.block_rank())?;
    let rows = (0..grid.size()).map(|b| {
        vec![
            b.to_string(),
            fmt_tuple(&grid.tuple(b)),
            fmt_f64(sol.eig.log_psi[b]),
            fmt_f64(sol.eig.log_psi[b].exp()),
            fmt_f64(sol.rho.log_weights[b]),
        ]
    });
    e.csv("eigen.csv", &["block", "tuple", "log_psi", "psi", "log_rho"], rows);
    let psi_gap = ruelle_core::numeric::max_abs_diff(&sol.eig.psi(), &con.best_log_psi().iter().map(|v| v.exp()).collect::<Vec<_>>());
    let steps: Vec<Value> = con
        .schedule
        .iter()
        .map(|s| json!({"s": jf(s.s), "log_lambda": jf(s.log_lambda), "iterations": s.iterations}))
        .collect();
    let summary = merge(
        header(sys, table),
        json!({
            "lambda": jf(sol.eig.lambda()),
            "log_lambda": jf(sol.eig.log_lambda),
            "pressure": jf(p.pressure),
            "entropy": jf(p.entropy),
            "integral": jf(p.integral),
            "variational_residual": jf(p.residual),
            "power": {"iterations": sol.eig.iterations, "residual": jf(sol.eig.residual)},
            "contraction": {
                "log_lambda": jf(con.best_log_lambda()),
                "relative_lambda_gap": jf((con.best_log_lambda() - sol.eig.log_lambda).exp_m1().abs()),
                "psi_gap": jf(psi_gap),
                "extrapolated": con.extrapolated.is_some(),
                "schedule": steps,
            },
        }),
    );
    e.json("summary.json", &summary);
    Ok(())
}

fn gibbs(cfg: &JobConfig, sys: &System, table: &PotentialTable, e: &mut Emitter) -> Result<(), CliError> {
    let sol = e.timed("solve", || solve_gibbs(table, &sys.nu, &cfg.solver_options()))?;
    let mu = &sol.gibbs;
    let blocks = block_grid(table.n_atoms(), mu.rank())?;
    let theta = mu.log_theta();
    e.csv(
        "theta.csv",
        &["block", "tuple", "log_theta", "theta"],
        (0..blocks.size()).map(|b| vec![b.to_string(), fmt_tuple(&blocks.tuple(b)), fmt_f64(theta[b]), fmt_f64(theta[b].exp())]),
    );
    let tuples = block_grid(table.n_atoms(), mu.range())?;
    let kernel = mu.log_kernel();
    e.csv(
        "kernel.csv",
        &["tuple_index", "tuple", "log_kernel", "kernel"],
        (0..tuples.size()).map(|t| vec![t.to_string(), fmt_tuple(&tuples.tuple(t)), fmt_f64(kernel[t]), fmt_f64(kernel[t].exp())]),
    );
    let r = mu.residuals();
    let summary = merge(
        header(sys, table),
        json!({
            "log_lambda": jf(sol.eig.log_lambda),
            "normalization_residual": jf(normalization_residual(&sol.normalized.table, &sys.nu)),
            "residuals": {"row_sum": jf(r.row_sum), "stationarity": jf(r.stationarity), "mass": jf(r.mass)},
        }),
    );
    e.json("summary.json", &summary);
    Ok(())
}

fn entropy(cfg: &JobConfig, sys: &System, table: &PotentialTable, e: &mut Emitter) -> Result<(), CliError> {
    let sol = e.timed("solve", || solve_gibbs(table, &sys.nu, &cfg.solver_options()))?;
    let gibbs_h = entropy_gibbs(&sol.normalized, &sol.gibbs)?;
    let markov_h = entropy_markov(&sol.gibbs);
    let level = cfg.entropy.level;
    let cylinder = if sys.nu.space().kind().is_discrete() {
        match e.timed("cylinder", || entropy_cylinder(&sol.gibbs, &sys.nu, level)) {
            Ok(rep) => json!({
                "level": level,
                "rate": rep.value.finite().map(jf),
                "conditional": rep.conditional.map(jf),
                "classical": rep.classical.map(jf),
                "classical_conditional": rep.classical_conditional.map(jf),
            }),
            Err(err) if err.is_resource_cap() => json!({"level": level, "skipped": err.to_string()}),
            Err(err) => return Err(err.into()),
        }
    } else {
        json!({"level": level, "skipped": "cylinder entropy needs a discrete alphabet"})
    };
    let p = pressure_of(&sol)?;
    let summary = merge(
        header(sys, table),
        json!({
            "gibbs": gibbs_h.value.finite().map(jf),
            "markov": markov_h.value.finite().map(jf),
            "cylinder": cylinder,
            "pressure": jf(p.pressure),
            "integral": jf(p.integral),
            "variational_residual": jf(p.residual),
        }),
    );
    e.json("entropy.json", &summary);
    Ok(())
}

fn periodic(cfg: &JobConfig, sys: &System, table: &PotentialTable, e: &mut Emitter) -> Result<(), CliError> {
    let opts = cfg.solver_options();
    let pc = &cfg.periodic;
    let n_list: Vec<usize> = (1..=pc.max_n).collect();
    let series = e.timed("periodic", || pressure_periodic(table, &sys.nu, &n_list, pc.exhaustive_up_to, &opts))?;
    let ll = series.log_lambda;
    e.csv(
        "periodic.csv",
        &["n", "value", "exhaustive", "abs_error", "n_times_error"],
        series.points.iter().map(|p| {
            let err = (p.value - ll).abs();
            vec![
                p.n.to_string(),
                fmt_f64(p.value),
                p.exhaustive.map(fmt_f64).unwrap_or_default(),
                fmt_f64(err),
                fmt_f64(p.n as f64 * err),
            ]
        }),
    );
    let eig = TransferOperator::new(table, &sys.nu)?.principal(&opts)?;
    let lo = 8.min(pc.max_n);
    let mut summary = merge(
        header(sys, table),
        json!({
            "log_lambda": jf(ll),
            "fitted_constant": jf(series.fitted_constant(lo, pc.max_n)),
            "fit_window": [lo, pc.max_n],
            "constant_bound": jf(periodic_rate_bound(table, min_of(&eig.log_psi))),
            "exhaustive_gap": jf(series.exhaustive_gap()),
        }),
    );
    if sys.nu.space().kind().is_discrete() {
        let ns: Vec<usize> = (1..=pc.recurrence_max_n).collect();
        let rec = e.timed("recurrence", || recurrence_ratio(table, &sys.nu, pc.recurrence_anchor, &ns, &opts))?;
        e.csv(
            "recurrence.csv",
            &["n", "ratio"],
            rec.points.iter().map(|(n, r)| vec![n.to_string(), fmt_f64(*r)]),
        );
        summary["recurrence"] = json!({"anchor": rec.anchor, "fitted_m": jf(rec.fitted_m), "bounded": rec.bounded});
    }
    e.json("summary.json", &summary);
    Ok(())
}

fn zerotemp(cfg: &JobConfig, sys: &System, table: &PotentialTable, e: &mut Emitter) -> Result<(), CliError> {
    let opts = cfg.solver_options();
    let betas = cfg.zerotemp.betas.clone().unwrap_or_else(default_betas);
    let mm = e.timed("max_mean_cycle", || max_mean_cycle(table))?;
    let sweep = e.timed("beta_sweep", || beta_sweep(table, &sys.nu, &betas, &opts))?;
    let eps = cfg.zerotemp.escape_radius.unwrap_or_else(|| default_escape_radius(sys.nu.space().kind()));
    let escape = concentration_report(&sweep, sys.nu.space(), &mm.critical_tuples, eps);
    let gaps = sweep.v_gaps();
    e.csv(
        "sweep.csv",
        &["beta", "log_lambda", "scaled_log_lambda", "v_gap", "escaping_mass"],
        sweep.records.iter().zip(&gaps).zip(&escape).map(|((r, g), (_, m))| {
            vec![fmt_f64(r.beta), fmt_f64(r.log_lambda), fmt_f64(r.scaled_log_lambda), fmt_f64(*g), fmt_f64(*m)]
        }),
    );
    let out = subaction_extract(&sweep, table, mm.m)?;
    let nb = table.n_blocks();
    let blocks = block_grid(table.n_atoms(), table.block_rank())?;
    e.csv(
        "subaction.csv",
        &["block", "tuple", "v", "max_residual"],
        (0..nb).map(|x| {
            let best = (0..table.n_atoms()).map(|a| out.subaction.residual[a * nb + x]).fold(f64::NEG_INFINITY, f64::max);
            vec![x.to_string(), fmt_tuple(&blocks.tuple(x)), fmt_f64(out.subaction.v[x]), fmt_f64(best)]
        }),
    );
    let last = sweep.last();
    let (lgap, lbound) = laplace_gap(table, &sys.nu, &last.v, last.beta);
    let summary = merge(
        header(sys, table),
        json!({
            "m": jf(mm.m),
            "karp_value": jf(mm.karp_value),
            "cycle": mm.cycle.iter().map(|&b| fmt_tuple(&blocks.tuple(b))).collect::<Vec<_>>(),
            "cycle_method": match mm.method { CycleMethod::Karp => "karp", CycleMethod::Exhaustive => "exhaustive" },
            "exhaustive_value": mm.exhaustive.map(jf),
            "critical_tuples": mm.critical_tuples.len(),
            "escape_radius": jf(eps),
            "pressure_bound_every_beta": sweep.pressure_bound_holds(),
            "scaled_pressure_error": jf((last.scaled_log_lambda - mm.m).abs()),
            "tail_gap": jf(sweep.tail_gap()),
            "laplace_gap": jf(lgap),
            "laplace_bound": jf(lbound),
            "subaction": {
                "selected": out.selected,
                "gap": jf(out.gap),
                "tol": jf(out.tol),
                "calibration_error": jf(out.subaction.calibration_error),
                "max_residual": jf(out.subaction.max_residual),
                "zero_set_size": out.subaction.zero_set.len(),
            },
        }),
    );
    e.json("summary.json", &summary);
    Ok(())
}

fn involution(cfg: &JobConfig, sys: &System, table: &PotentialTable, e: &mut Emitter) -> Result<(), CliError> {
    let opts = cfg.solver_options();
    let ic = &cfg.involution;
    let inv = e.timed("involution", || involution_system(table, &sys.nu, ic.reference.as_deref(), &opts))?;
    let nb = inv.kernel.n_blocks();
    let blocks = block_grid(table.n_atoms(), inv.kernel.rank())?;
    let labels: Vec<String> = (0..nb).map(|b| fmt_tuple(&blocks.tuple(b))).collect();
    e.csv(
        "w_table.csv",
        &["y", "x", "w"],
        (0..nb).flat_map(|y| (0..nb).map(move |x| (y, x))).map(|(y, x)| vec![labels[y].clone(), labels[x].clone(), fmt_f64(inv.kernel.get(y, x))]),
    );
    let tuples = block_grid(table.n_atoms(), inv.dual.table.range())?;
    e.csv(
        "dual_table.csv",
        &["tuple", "a", "a_star"],
        (0..tuples.size()).map(|t| vec![fmt_tuple(&tuples.tuple(t)), fmt_f64(table.get(t)), fmt_f64(inv.dual.table.get(t))]),
    );
    let mu = solve_gibbs(table, &sys.nu, &opts)?.gibbs;
    let samples = sample_block_functions(table.n_blocks(), ic.samples, 0x1f);
    let ne = e.timed("natural_extension", || natural_extension_check(&inv, &sys.nu, &mu, &samples))?;
    let rec = reconstruction_report(&inv);
    let derivative = match eigenfunction_derivative(&sys.potential, &sys.nu, &inv, 1, ic.derivative_step) {
        Ok(d) => {
            e.csv(
                "derivative.csv",
                &["block", "theorem", "closed_form", "point_fd", "grid_fd"],
                (0..d.theorem.len()).map(|b| {
                    vec![
                        labels[b].clone(),
                        fmt_f64(d.theorem[b]),
                        d.closed_form.as_ref().map(|v| fmt_f64(v[b])).unwrap_or_default(),
                        fmt_f64(d.nystrom_fd[b]),
                        d.grid_fd.as_ref().map(|v| fmt_f64(v[b])).unwrap_or_default(),
                    ]
                }),
            );
            json!({"coordinate": 1, "beyond_range": d.beyond_range})
        }
        Err(ruelle_core::Error::Unsupported(why)) => json!({"skipped": why}),
        Err(err) => return Err(err.into()),
    };
    let summary = merge(
        header(sys, table),
        json!({
            "reference": inv.kernel.reference(),
            "log_lambda": jf(inv.eig.log_lambda),
            "log_lambda_dual": jf(inv.dual_eig.log_lambda),
            "relative_lambda_gap": jf(inv.lambda_gap()),
            "log_c": jf(inv.log_c),
            "x_dependence": jf(inv.dual.x_dependence),
            "cocycle_residual": jf(inv.dual.cocycle_residual),
            "reconstruction_gap": jf(rec.sup_gap),
            "calibrated_reconstruction_gap": jf(rec.calibrated_gap),
            "natural_extension": {
                "exchange": jf(ne.exchange_residual),
                "invariance": jf(ne.invariance_residual),
                "projection": jf(ne.projection_residual),
                "mass": jf(ne.mass_residual),
            },
            "derivative": derivative,
        }),
    );
    e.json("dual_summary.json", &summary);
    Ok(())
}

/// Invariants checked after a single-system job when `--verify` is given.
fn system_checks(cfg: &JobConfig, sys: &System, table: &PotentialTable, out: &mut Rendered) -> Result<(), CliError> {
    let sol = solve_gibbs(table, &sys.nu, &cfg.solver_options())?;
    let p = pressure_of(&sol)?;
    let checks = [
        ("normalization_residual", normalization_residual(&sol.normalized.table, &sys.nu), 1e-10),
        ("chain_residual", sol.gibbs.residuals().max(), 1e-10),
        ("variational_residual", p.residual, 1e-8),
    ];
    for (name, value, limit) in checks {
        let passed = value <= limit;
        if !passed && out.failure.is_none() {
            out.failure = Some(format!("{name} = {value:e} exceeds {limit:e}"));
        }
        out.checks.push(CheckRecord {
            criterion: 0,
            name: name.to_string(),
            passed,
        });
    }
    Ok(())
}

fn verify_all(cfg: &JobConfig, out: &mut Rendered) -> Result<(), CliError> {
    let ctx = SuiteContext::new()?;
    let mut outcomes: Vec<CriterionOutcome> = Vec::new();
    for (id, _) in CRITERIA {
        let o = run_criterion(&ctx, id);
        let failed = !o.passed();
        if failed && out.failure.is_none() {
            out.failure = o.first_failure();
        }
        outcomes.push(o);
        if failed && cfg.verify.fail_fast {
            break;
        }
    }
    for (label, secs) in ctx.timings() {
        out.emitter.record_time(&label, secs);
    }
    for o in &outcomes {
        for c in &o.checks {
            out.checks.push(CheckRecord {
                criterion: o.id,
                name: c.name.clone(),
                passed: c.passed,
            });
        }
    }
    write_suite(&outcomes, &mut out.emitter);
    Ok(())
}

fn write_suite(outcomes: &[CriterionOutcome], e: &mut Emitter) {
    e.csv(
        "criteria.csv",
        &["criterion", "title", "checks", "passed"],
        outcomes.iter().map(|o| vec![o.id.to_string(), o.title.to_string(), o.checks.len().to_string(), o.passed().to_string()]),
    );
    e.csv(
        "checks.csv",
        &["criterion", "name", "value", "relation", "limit", "passed"],
        outcomes.iter().flat_map(|o| {
            o.checks.iter().map(move |c| {
                vec![
                    o.id.to_string(),
                    c.name.clone(),
                    c.value.map(fmt_f64).unwrap_or_default(),
                    c.relation.to_string(),
                    fmt_f64(c.limit),
                    c.passed.to_string(),
                ]
            })
        }),
    );
    let ran: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "criterion": o.id,
                "title": o.title,
                "passed": o.passed(),
                "error": o.error,
                "notes": o.notes,
            })
        })
        .collect();
    e.json(
        "summary.json",
        &json!({
            "criteria_run": outcomes.len(),
            "criteria_total": CRITERIA.len(),
            "all_passed": outcomes.len() == CRITERIA.len() && outcomes.iter().all(|o| o.passed()),
            "criteria": ran,
        }),
    );
}

const PROBE_JOBS: [&str; 6] = [
    "command = \"solve\"\n[space]\nkind = \"circle\"\nn = 32\n[potential]\nkind = \"xy\"\ngamma = 0.5\n",
    "command = \"gibbs\"\n[space]\nkind = \"finite\"\nd = 3\n[measure]\nkind = \"weights\"\nweights = [0.5, 0.3, 0.2]\n[potential]\nkind = \"table\"\nvalues = [0.1, -0.4, 0.3, 0.0, 0.9, -0.2, 0.5, 0.2, -0.7]\n",
    "command = \"entropy\"\n[space]\nkind = \"finite\"\nd = 2\n[potential]\nkind = \"table\"\nvalues = [0.0, 1.0, 1.0, 0.0]\n[entropy]\nlevel = 8\n",
    "command = \"pressure-periodic\"\n[space]\nkind = \"countable\"\nn = 6\n[potential]\nkind = \"neg-distance\"\nrange = 2\n[periodic]\nmax_n = 24\nexhaustive_up_to = 6\n",
    "command = \"zerotemp\"\n[space]\nkind = \"circle\"\nn = 16\n[potential]\nkind = \"xy\"\n",
    "command = \"involution\"\n[space]\nkind = \"circle\"\nn = 24\n[potential]\nkind = \"xy\"\ngamma = 0.5\n",
];

/// Render a fixed set of small jobs twice and compare every result byte.
pub fn determinism_probe() -> Result<bool, CliError> {
    for text in PROBE_JOBS {
        let cfg = JobConfig::parse(text)?;
        let a = render(&cfg, false)?;
        let b = render(&cfg, false)?;
        if a.emitter.files() != b.emitter.files() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Byte-level comparison of two output directories, ignoring `manifest.json`
/// (the only file with timings). Returns the names that differ.
pub fn compare_outputs(a: &Path, b: &Path) -> Result<Vec<String>, CliError> {
    let list = |d: &Path| -> Result<std::collections::BTreeMap<String, Vec<u8>>, CliError> {
        let mut m = std::collections::BTreeMap::new();
        for entry in std::fs::read_dir(d).map_err(|e| crate::emit::io_error(d, e))? {
            let entry = entry.map_err(|e| crate::emit::io_error(d, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == "manifest.json" {
                continue;
            }
            let bytes = std::fs::read(entry.path()).map_err(|e| crate::emit::io_error(&entry.path(), e))?;
            m.insert(name, bytes);
        }
        Ok(m)
    };
    let (ma, mb) = (list(a)?, list(b)?);
    let mut names: Vec<String> = ma.keys().chain(mb.keys()).cloned().collect();
    names.sort();
    names.dedup();
    Ok(names.into_iter().filter(|n| ma.get(n) != mb.get(n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_potential_solve() {
        let cfg = JobConfig::parse("command = \"solve\"\n[space]\nkind = \"finite\"\nd = 2\n[potential]\nkind = \"zero\"\n").unwrap();
        let r = render(&cfg, true).unwrap();
        let s: Value = serde_json::from_slice(&r.emitter.files()["summary.json"]).unwrap();
        assert!((s["lambda"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(s["entropy"].as_f64().unwrap().abs() < 1e-12);
        assert!(r.failure.is_none());
        assert_eq!(r.checks.len(), 3);
    }

    #[test]
    fn every_command_renders() {
        for text in PROBE_JOBS {
            let cfg = JobConfig::parse(text).unwrap();
            let r = render(&cfg, false).unwrap();
            assert!(!r.emitter.files().is_empty(), "{text}");
        }
    }

    #[test]
    fn probe_is_deterministic() {
        assert!(determinism_probe().unwrap());
    }
}
