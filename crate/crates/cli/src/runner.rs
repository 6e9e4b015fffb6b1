//! Orchestration of the six command verbs over the solver core.

use crate::artifacts::ArtifactSink;
use crate::config::{InitialConfig, Mode, RunConfig};
use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::Path;
use westerly_core::barriers::{build_barrier_set_with_cap, sandwich_check, BarrierError};
use westerly_core::cubic::{root_a, scaled_roots};
use westerly_core::fields::reconstruct_uv;
use westerly_core::initial::{build_default_w0, InitialData, InitialProfile, SeparableProfile};
use westerly_core::march::{derivative_diagnostics, march, EpsDomain, SolutionField};
use westerly_core::ode::{fitted_decay_rate, shoot, threshold_scan};
use westerly_core::profiles::{GyreSetup, KAPPA_ROOT_THRESHOLD};

/// Owned initial data built from the configuration.
pub enum BuiltInitial {
    Profile(InitialProfile),
    Separable(SeparableProfile),
}

impl BuiltInitial {
    pub fn as_dyn(&self) -> &dyn InitialData {
        match self {
            BuiltInitial::Profile(p) => p,
            BuiltInitial::Separable(p) => p,
        }
    }
}

fn build_initial(config: &RunConfig, setup: &GyreSetup) -> Result<BuiltInitial, CliError> {
    match &config.initial {
        InitialConfig::Default { b } => {
            if *b <= 0.0 {
                return Err(CliError::Config(format!(
                    "initial slope b must be positive, got {b}"
                )));
            }
            build_default_w0(setup, *b)
                .map(BuiltInitial::Profile)
                .map_err(|e| CliError::Solver(format!("initial data: {e}")))
        }
        InitialConfig::Separable => {
            let alpha = config.setup.lambda0 * config.setup.psi0.deriv(0.0);
            let sol = shoot(alpha, config.ode.xi_max, config.ode.tol)
                .map_err(|e| CliError::Solver(format!("shooting at lambda0*alpha={alpha}: {e}")))?;
            let psi00 = config.setup.psi0.value(0.0);
            SeparableProfile::new(sol, psi00)
                .map(BuiltInitial::Separable)
                .map_err(|e| CliError::Solver(format!("separable profile: {e}")))
        }
    }
}

fn solve_field(
    config: &RunConfig,
    setup: &GyreSetup,
    initial: &BuiltInitial,
) -> Result<SolutionField, CliError> {
    let domain = EpsDomain::new(
        setup,
        config.solver.eps,
        config.solver.n_s,
        config.solver.stretching,
    )
    .map_err(|e| CliError::Config(format!("domain: {e}")))?;
    let mut field = march(initial.as_dyn(), setup, &domain, &config.solver.step_config())
        .map_err(|e| CliError::Solver(e.to_string()))?;
    derivative_diagnostics(&mut field, setup);
    Ok(field)
}

fn check_mode(config: &RunConfig, verb: Mode) -> Result<(), CliError> {
    if let Some(mode) = config.mode {
        if mode != verb {
            return Err(CliError::Config(format!(
                "config mode {mode:?} does not match the {verb:?} command"
            )));
        }
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_solve_artifacts(
    sink: &mut ArtifactSink,
    config: &RunConfig,
    setup: &GyreSetup,
    initial: &BuiltInitial,
    field: &SolutionField,
) -> Result<(), CliError> {
    let eps = field.domain.eps;
    let psi00 = setup.psi0.value(0.0);
    let data = initial.as_dyn();
    let n_init = 512;
    sink.write_csv(
        "initial.csv",
        "psi,w0,w0_p,w0_pp",
        (0..=n_init).map(|k| {
            let psi = psi00 * k as f64 / n_init as f64;
            format!(
                "{},{},{},{}",
                fmt(psi),
                fmt(data.w0(psi)),
                fmt(data.w0_p(psi)),
                fmt(data.w0_pp(psi))
            )
        }),
    )?;
    let n_roots = 100;
    let mut root_rows = Vec::new();
    for k in 0..=n_roots {
        let y = setup.y_span * k as f64 / n_roots as f64;
        let kappa = setup
            .kappa_of(y)
            .map_err(|e| CliError::Solver(format!("kappa({y}): {e}")))?;
        match root_a(setup, y) {
            Ok(band) => root_rows.push(format!(
                "{},{},{},{},{}",
                fmt(y),
                fmt(kappa),
                fmt(band.a),
                fmt(band.a_second),
                band.is_double
            )),
            Err(e) => return Err(CliError::Solver(format!("root at y={y}: {e}"))),
        }
    }
    sink.write_csv("roots.csv", "y,kappa,a,a_second,is_double", root_rows)?;
    let cadence = config.output.cadence.max(1);
    let p = field.p.as_ref();
    let q = field.q.as_ref();
    let r = field.r.as_ref();
    let mut rows = Vec::new();
    let last = field.y_levels.len() - 1;
    for k in (0..=last).filter(|k| k % cadence == 0 || *k == last) {
        let y = field.y_levels[k];
        let big_l = field.domain.width(setup, y);
        for (i, &s) in field.domain.s_nodes.iter().enumerate() {
            let get = |m: Option<&Vec<Vec<f64>>>| m.map_or(String::new(), |m| fmt(m[k][i]));
            rows.push(format!(
                "{},{},{},{},{},{},{}",
                fmt(y),
                fmt(s),
                fmt(s * big_l),
                fmt(field.w[k][i]),
                get(p),
                get(q),
                get(r)
            ));
        }
    }
    sink.write_csv("field.csv", "y,s,psi,w,p,q,r", rows)?;
    sink.write_json("field.json", field)?;
    sink.check(
        "march_completed",
        true,
        format!(
            "{} levels, {} rejected steps, eps = {eps}",
            field.y_levels.len(),
            field.step_log.rejected_steps
        ),
    );
    Ok(())
}

/// Record the hypothesis checks; returns the names of the failed ones.
fn record_validation(
    sink: &mut ArtifactSink,
    setup: &GyreSetup,
) -> Result<Vec<String>, CliError> {
    let report = setup.validate(512);
    sink.write_json("validation.json", &report)?;
    for c in &report.checks {
        sink.check(
            &format!("hypothesis_{}", c.name),
            c.passed,
            format!("worst {} at y = {} (bound {})", c.worst_value, c.worst_y, c.bound),
        );
    }
    Ok(report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect())
}

pub fn run_solve(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    check_mode(config, Mode::Solve)?;
    let setup = config.setup.build()?;
    let mut sink = ArtifactSink::new(out)?;
    let failed = record_validation(&mut sink, &setup)?;
    if !failed.is_empty() {
        sink.finish("solve", config)?;
        return Err(CliError::Hypothesis(failed.join(", ")));
    }
    let initial = build_initial(config, &setup)?;
    let field = solve_field(config, &setup, &initial)?;
    write_solve_artifacts(&mut sink, config, &setup, &initial, &field)?;
    sink.finish("solve", config)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct VerifyReport {
    barrier_set: westerly_core::barriers::BarrierSet,
    report: westerly_core::barriers::BarrierReport,
}

fn map_barrier_err(e: BarrierError) -> CliError {
    match e {
        BarrierError::NoAdmissibleAlpha { cap } => {
            CliError::Verify(format!("no admissible alpha0 found on the ladder up to {cap}"))
        }
        BarrierError::NoFeasibleDelta => CliError::Verify(e.to_string()),
        other => CliError::Solver(other.to_string()),
    }
}

pub fn run_verify(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    check_mode(config, Mode::Verify)?;
    let setup = config.setup.build()?;
    let mut sink = ArtifactSink::new(out)?;
    let initial = build_initial(config, &setup)?;
    let field = match &config.verify.field {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SolutionField>(&text)
                .map_err(|e| CliError::Io(format!("bad field file {}: {e}", path.display())))?
        }
        None => solve_field(config, &setup, &initial)?,
    };
    let result = build_barrier_set_with_cap(
        &field,
        initial.as_dyn(),
        &setup,
        config.barrier.mu,
        config.barrier.alpha_ladder_cap,
    )
    .and_then(|bset| {
        sandwich_check(&field, &bset, initial.as_dyn(), &setup).map(|report| (bset, report))
    });
    match result {
        Ok((bset, report)) => {
            let passed = report.passed;
            let detail = format!(
                "worst violations: global lower {} at (y={}, psi={}), global upper {}, zone3 lower {}, zone3 upper {}, left upper {}",
                report.global_lower.worst,
                report.global_lower.at_y,
                report.global_lower.at_psi,
                report.global_upper.worst,
                report.zone3_lower.worst,
                report.zone3_upper.worst,
                report.left_upper.worst
            );
            sink.check("sandwich", passed, detail.clone());
            sink.write_json(
                "verify.json",
                &VerifyReport {
                    barrier_set: bset,
                    report,
                },
            )?;
            sink.finish("verify", config)?;
            if passed {
                Ok(())
            } else {
                Err(CliError::Verify(detail))
            }
        }
        Err(e) => {
            let mapped = map_barrier_err(e);
            sink.check("sandwich", false, mapped.to_string());
            sink.finish("verify", config)?;
            Err(mapped)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DecayRow {
    y: f64,
    rate: f64,
    a: f64,
    rel_gap: f64,
}

pub fn run_fields(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    check_mode(config, Mode::Fields)?;
    let setup = config.setup.build()?;
    let mut sink = ArtifactSink::new(out)?;
    let initial = build_initial(config, &setup)?;
    let field = solve_field(config, &setup, &initial)?;
    let phys = reconstruct_uv(&field, &setup, &config.output.levels)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let mut decay_rows = Vec::new();
    for (i, level) in phys.levels.iter().enumerate() {
        sink.write_csv(
            &format!("fields_level{i}.csv"),
            "xi,psi,v,u",
            (0..level.xi.len()).map(|j| {
                format!(
                    "{},{},{},{}",
                    fmt(level.xi[j]),
                    fmt(level.psi[j]),
                    fmt(level.v[j]),
                    fmt(level.u[j])
                )
            }),
        )?;
        sink.check(
            &format!("u_wall_level{i}"),
            level.u[0].abs() <= 1e-8,
            format!("u(0, y={}) = {}", level.y, level.u[0]),
        );
        if let Some(fit) = &level.decay {
            let a = root_a(&setup, level.y)
                .map_err(|e| CliError::Solver(e.to_string()))?
                .a;
            let rel_gap = (fit.rate - a).abs() / a;
            sink.check(
                &format!("decay_level{i}"),
                rel_gap <= 0.05,
                format!("rate {} vs a(y) {}", fit.rate, a),
            );
            decay_rows.push(DecayRow {
                y: level.y,
                rate: fit.rate,
                a,
                rel_gap,
            });
        }
    }
    sink.write_json("decay.json", &decay_rows)?;
    sink.finish("fields", config)?;
    Ok(())
}

pub fn run_ode(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    check_mode(config, Mode::Ode)?;
    let mut sink = ArtifactSink::new(out)?;
    let alpha = config.ode.alpha_param;
    let sol = shoot(alpha, config.ode.xi_max, config.ode.tol)
        .map_err(|e| CliError::Solver(format!("shooting at lambda0*alpha={alpha}: {e}")))?;
    sink.write_csv(
        "ode.csv",
        "xi,phi,dphi,d2phi",
        (0..sol.xi.len()).map(|i| {
            format!(
                "{},{},{},{}",
                fmt(sol.xi[i]),
                fmt(sol.phi[i]),
                fmt(sol.dphi[i]),
                fmt(sol.d2phi[i])
            )
        }),
    )?;
    sink.check(
        "shoot_converged",
        sol.far_residual <= 1e-6,
        format!(
            "phi''(0) = {}, far residual {}, monotone {}",
            sol.shoot_value, sol.far_residual, sol.monotone
        ),
    );
    if alpha >= KAPPA_ROOT_THRESHOLD {
        let a = scaled_roots(alpha)
            .map_err(|e| CliError::Solver(e.to_string()))?
            .0;
        if let Some(rate) = fitted_decay_rate(&sol, 1e-4, 1e-2) {
            sink.check(
                "decay_rate",
                (rate - a).abs() / a <= 0.01,
                format!("fitted {rate} vs root {a}"),
            );
        }
    }
    if let Some([lo, hi]) = config.ode.scan {
        let critical = threshold_scan(lo, hi, config.ode.scan_tol)
            .map_err(|e| CliError::Solver(format!("threshold scan: {e}")))?;
        sink.check(
            "threshold_scan",
            true,
            format!("critical lambda0*alpha = {critical} in [{lo}, {hi}]"),
        );
    }
    sink.finish("ode", config)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub a: Option<f64>,
    pub monotone: Option<bool>,
    pub decay_gap: Option<f64>,
    pub sandwich_pass: Option<bool>,
    pub error: Option<String>,
}

fn sweep_row(config: &RunConfig, kappa: f64) -> SweepRow {
    let mut row = SweepRow {
        kappa,
        a: None,
        monotone: None,
        decay_gap: None,
        sandwich_pass: None,
        error: None,
    };
    let sol = match shoot(kappa, config.ode.xi_max, config.ode.tol) {
        Ok(sol) => sol,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.monotone = Some(sol.monotone);
    if kappa < KAPPA_ROOT_THRESHOLD {
        return row;
    }
    let a = match scaled_roots(kappa) {
        Ok(r) => r.0,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.a = Some(a);
    if let Some(rate) = fitted_decay_rate(&sol, 1e-4, 1e-2) {
        row.decay_gap = Some((rate - a).abs() / a);
    }
    if !sol.monotone {
        return row;
    }
    // Per-row sandwich on the matching affine setup ψ⁰ = 1 + κ·y, ν ≡ 1.
    let result = (|| -> Result<bool, String> {
        let setup = GyreSetup::new(
            1.0,
            1.0,
            config.setup.eta,
            westerly_core::profiles::Profile::Zero,
            westerly_core::profiles::Profile::Affine { c0: 1.0, c1: kappa },
        )
        .map_err(|e| e.to_string())?;
        let profile = SeparableProfile::new(sol, 1.0).map_err(|e| e.to_string())?;
        let domain = EpsDomain::new(
            &setup,
            config.solver.eps,
            config.solver.n_s,
            config.solver.stretching,
        )
        .map_err(|e| e.to_string())?;
        let field = march(&profile, &setup, &domain, &config.solver.step_config())
            .map_err(|e| e.to_string())?;
        let bset = build_barrier_set_with_cap(
            &field,
            &profile,
            &setup,
            config.barrier.mu,
            config.barrier.alpha_ladder_cap,
        )
        .map_err(|e| e.to_string())?;
        let report = sandwich_check(&field, &bset, &profile, &setup).map_err(|e| e.to_string())?;
        Ok(report.passed)
    })();
    match result {
        Ok(pass) => row.sandwich_pass = Some(pass),
        Err(e) => row.error = Some(e),
    }
    row
}

pub fn run_sweep(config: &RunConfig, out: &Path, workers: Option<usize>) -> Result<(), CliError> {
    check_mode(config, Mode::Sweep)?;
    if config.sweep.kappas.is_empty() {
        return Err(CliError::Config("sweep range is empty".into()));
    }
    let mut sink = ArtifactSink::new(out)?;
    let rows: Vec<SweepRow> = {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
        // Parallel evaluation, deterministic merge in parameter order.
        pool.install(|| {
            config
                .sweep
                .kappas
                .par_iter()
                .map(|&k| sweep_row(config, k))
                .collect()
        })
    };
    let opt = |v: Option<f64>| v.map_or(String::new(), fmt);
    let optb = |v: Option<bool>| v.map_or(String::new(), |b| b.to_string());
    sink.write_csv(
        "sweep.csv",
        "kappa,a,monotone,decay_gap,sandwich_pass,error",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                fmt(r.kappa),
                opt(r.a),
                optb(r.monotone),
                opt(r.decay_gap),
                optb(r.sandwich_pass),
                r.error.clone().unwrap_or_default()
            )
        }),
    )?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    sink.check(
        "sweep_rows",
        failed < rows.len(),
        format!("{} of {} rows failed", failed, rows.len()),
    );
    sink.finish("sweep", config)?;
    if failed == rows.len() {
        return Err(CliError::AllRowsFailed);
    }
    Ok(())
}

fn interp_linear(x: &[f64], v: &[f64], xq: f64) -> f64 {
    let n = x.len();
    if xq <= x[0] {
        return v[0];
    }
    if xq >= x[n - 1] {
        return v[n - 1];
    }
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x[mid] <= xq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = (xq - x[lo]) / (x[hi] - x[lo]);
    v[lo] + t * (v[hi] - v[lo])
}

pub fn run_convergence(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    check_mode(config, Mode::Convergence)?;
    let ladder = &config.convergence.eps_ladder;
    if ladder.len() < 2 {
        return Err(CliError::Config(
            "eps ladder needs at least two entries".into(),
        ));
    }
    for pair in ladder.windows(2) {
        if pair[1] >= pair[0] {
            return Err(CliError::Config(
                "eps ladder must be strictly decreasing".into(),
            ));
        }
    }
    let setup = config.setup.build()?;
    let mut sink = ArtifactSink::new(out)?;
    let initial = build_initial(config, &setup)?;
    let y_end = setup.y_span;
    // Final-latitude rows on each grid, then pairwise sups on the coarsest
    // common ψ range.
    let mut samples: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for &eps in ladder {
        let mut sub = config.clone();
        sub.solver.eps = eps;
        let field = solve_field(&sub, &setup, &initial)?;
        let big_l = field.domain.width(&setup, y_end);
        let psis: Vec<f64> = field.domain.s_nodes.iter().map(|&s| s * big_l).collect();
        let row = field.w.last().unwrap().clone();
        samples.push((eps, psis, row));
    }
    let mut sups: Vec<f64> = Vec::new();
    for pair in samples.windows(2) {
        let (_, psis_a, w_a) = &pair[0];
        let (_, psis_b, w_b) = &pair[1];
        let mut sup = 0f64;
        for (psi, wa) in psis_a.iter().zip(w_a) {
            sup = sup.max((wa - interp_linear(psis_b, w_b, *psi)).abs());
        }
        sups.push(sup);
    }
    let mut rows = Vec::new();
    for (i, &eps) in ladder.iter().enumerate() {
        let sup = if i > 0 { fmt(sups[i - 1]) } else { String::new() };
        let ratio = if i > 1 {
            fmt(sups[i - 1] / sups[i - 2])
        } else {
            String::new()
        };
        rows.push(format!("{},{},{}", fmt(eps), sup, ratio));
    }
    sink.write_csv("convergence.csv", "eps,sup_diff,ratio", rows)?;
    let mut ok = true;
    for w in sups.windows(2) {
        if w[1] > config.convergence.ratio_bound * w[0] {
            ok = false;
        }
    }
    sink.check(
        "eps_contraction",
        ok,
        format!("sup diffs {sups:?}, ratio bound {}", config.convergence.ratio_bound),
    );
    sink.finish("convergence", config)?;
    if !ok {
        return Err(CliError::Verify(format!(
            "eps ladder sup differences do not contract: {sups:?}"
        )));
    }
    Ok(())
}
