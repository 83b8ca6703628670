use std::path::Path;
use std::time::Instant;

use becsim_core::config::{load_config, RunConfig, SweepAxis};
use becsim_core::diagnostics::{check_contraction, onset_detect, ContractionReport, Tolerance};
use becsim_core::equilibrium::fit;
use becsim_core::grid::l1_between;
use becsim_core::model::{onset_time_bound, BoundEnvelopes, CutoffProfile};
use becsim_core::solver::{initial_state, run, run_pair, FluxMode, Smoothing, Trajectory};
use becsim_core::verify::{
    audit, bound_region, evaluate, run_scenario, scenarios, AuditSettings, Check, Level, Outcome,
    Status,
};
use becsim_core::{Error, Grid, State};
use rayon::prelude::*;
use serde_json::json;

use crate::output::{finish, prefixed, print_checks, ManifestInput, Outputs};
use crate::{CliError, Globals};

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn settings(cfg: &RunConfig, globals: &Globals) -> AuditSettings {
    AuditSettings {
        tol: Tolerance {
            constant: cfg.checks.tol_constant * globals.tol_scale,
        },
        energy_tol: cfg.checks.energy_tol,
        onset_threshold: cfg.checks.onset_threshold,
        entropy_tol: cfg.checks.entropy_tol,
        bounds_left_of: bound_region(&cfg.solver.mode),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))
}

/// Integrates one configuration; on a non-finite state the last good state
/// is written next to the other outputs before aborting.
fn simulate(
    cfg: &RunConfig,
    out: &mut Outputs,
    label: &str,
) -> Result<(Grid, State, Trajectory), CliError> {
    let grid = cfg.grid.build()?;
    let init = initial_state(
        &cfg.initial.spec,
        &grid,
        cfg.initial.smoothing,
        &cfg.solver.mode,
    )?;
    let env = BoundEnvelopes::from_initial(&init, &grid);
    match run(&init, &grid, &cfg.solver, &env) {
        Ok(traj) => Ok((grid, init, traj)),
        Err(e) => Err(abort(e, &grid, out, label)),
    }
}

fn abort(e: Error, grid: &Grid, out: &mut Outputs, label: &str) -> CliError {
    if let Error::NonFinite { last_good, .. } = &e {
        let mut dump = String::from("x,n\n");
        for (x, n) in grid.centers().iter().zip(last_good.iter()) {
            dump.push_str(&format!("{x:?},{n:?}\n"));
        }
        let name = format!("{label}_abort_state.csv");
        if out.write(&name, &dump).is_ok() {
            return CliError::Abort(format!(
                "{e}; last good state in {}",
                out.path(&name).display()
            ));
        }
    }
    CliError::from(e)
}

pub fn cmd_run(path: &Path, globals: &Globals) -> Result<Status, CliError> {
    let started = Instant::now();
    let cfg = load_config(path)?;
    let stem = stem(path);
    let mut out = Outputs::new(&globals.out_dir)?;
    let (grid, init, traj) = simulate(&cfg, &mut out, &stem)?;
    let settings = settings(&cfg, globals);
    let checks = audit(&traj, &grid, &settings)?;

    let number0 = grid.quad(&init.n, 0.0)?;
    let last = traj.reports.last().expect("initial report");
    let onset_bound = if number0 > 0.5 {
        Some(onset_time_bound(number0)?)
    } else {
        None
    };
    let fit = match fit(traj.last_state(), last.number, &grid, cfg.checks.fit_floor) {
        Ok(f) => serde_json::to_value(f).unwrap_or_default(),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let details = json!({
        "initial_number": number0,
        "final_number": last.number,
        "final_ledger": last.ledger,
        "onset_time": onset_detect(&traj, cfg.checks.onset_threshold),
        "onset_time_bound": onset_bound,
        "tol_disc": settings.tol.disc(&grid, traj.max_dt),
        "steps": traj.steps,
        "max_dt": traj.max_dt,
        "equilibrium_fit": fit,
    });

    out.write(
        &format!("{stem}_trajectory.csv"),
        &traj.trajectory_csv(&grid),
    )?;
    out.write(&format!("{stem}_summary.csv"), &traj.summary_csv())?;
    print_checks(&checks);
    finish(
        &mut out,
        &stem,
        ManifestInput {
            command: "run",
            config_path: Some(path),
            config: Some(&cfg.file),
            tol_scale: globals.tol_scale,
            started,
            checks,
            details,
        },
    )
}

fn contraction_csv(plain: &ContractionReport, weighted: &ContractionReport) -> String {
    let mut s = String::from("t,d,d_plus,envelope,d_p,d_plus_p,envelope_p\n");
    for k in 0..plain.times.len() {
        s.push_str(&format!(
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            plain.times[k],
            plain.distance[k],
            plain.positive_part[k],
            plain.envelope[k],
            weighted.distance[k],
            weighted.positive_part[k],
            weighted.envelope[k]
        ));
    }
    s
}

pub fn cmd_compare(path: &Path, globals: &Globals) -> Result<Status, CliError> {
    let started = Instant::now();
    let cfg = load_config(path)?;
    let Some(initial_b) = &cfg.initial_b else {
        return Err(CliError::Config(format!(
            "{}: compare needs an [initial_b] section",
            path.display()
        )));
    };
    let stem = stem(path);
    let mut out = Outputs::new(&globals.out_dir)?;
    let grid = cfg.grid.build()?;
    let mode = &cfg.solver.mode;
    let a = initial_state(&cfg.initial.spec, &grid, cfg.initial.smoothing, mode)?;
    let b = initial_state(&initial_b.spec, &grid, initial_b.smoothing, mode)?;
    let (ta, tb) =
        run_pair(&a, &b, &grid, &cfg.solver).map_err(|e| abort(e, &grid, &mut out, &stem))?;

    let settings = settings(&cfg, globals);
    let tol = cfg.checks.contraction_tol;
    let plain = check_contraction(&ta, &tb, 0.0, &grid, tol)?;
    let weighted = check_contraction(&ta, &tb, cfg.checks.p, &grid, tol)?;
    let mut checks = prefixed("a", audit(&ta, &grid, &settings)?);
    checks.extend(prefixed("b", audit(&tb, &grid, &settings)?));
    checks.push(Check::at_most("l1_increase", plain.max_increase, tol));
    checks.push(Check::at_most(
        "gronwall_flags",
        weighted.flags.len() as f64,
        0.0,
    ));

    out.write(
        &format!("{stem}_a_trajectory.csv"),
        &ta.trajectory_csv(&grid),
    )?;
    out.write(
        &format!("{stem}_b_trajectory.csv"),
        &tb.trajectory_csv(&grid),
    )?;
    out.write(&format!("{stem}_a_summary.csv"), &ta.summary_csv())?;
    out.write(&format!("{stem}_b_summary.csv"), &tb.summary_csv())?;
    out.write(
        &format!("{stem}_contraction.csv"),
        &contraction_csv(&plain, &weighted),
    )?;
    print_checks(&checks);
    let details = json!({
        "p": cfg.checks.p,
        "gronwall_constant": becsim_core::model::gronwall_constant(cfg.checks.p),
        "crossing_ratio": plain.crossing_ratio,
        "gronwall_flags": weighted.flags,
        "steps": ta.steps,
    });
    finish(
        &mut out,
        &stem,
        ManifestInput {
            command: "compare",
            config_path: Some(path),
            config: Some(&cfg.file),
            tol_scale: globals.tol_scale,
            started,
            checks,
            details,
        },
    )
}

struct SweepJob {
    axis: SweepAxis,
    /// `None` for the plain-mode reference of an `h` sweep.
    value: Option<f64>,
    cfg: RunConfig,
}

impl SweepJob {
    fn label(&self) -> String {
        match self.value {
            Some(v) => format!("{}_{v}", self.axis.name()),
            None => format!("{}_plain", self.axis.name()),
        }
    }
}

fn sweep_jobs(cfg: &RunConfig) -> Result<Vec<SweepJob>, CliError> {
    let mut jobs = Vec::new();
    for (axis, values) in &cfg.sweep {
        if *axis == SweepAxis::H {
            let mut plain = cfg.clone();
            plain.solver.mode = FluxMode::Plain;
            jobs.push(SweepJob {
                axis: *axis,
                value: None,
                cfg: plain,
            });
        }
        for &v in values {
            let mut c = cfg.clone();
            match axis {
                SweepAxis::Epsilon => c.grid.epsilon = v,
                SweepAxis::Kappa => {
                    c.initial.spec.kappa = v;
                    c.initial.smoothing = Smoothing::Mollified;
                }
                SweepAxis::H => c.solver.mode = FluxMode::Cutoff(CutoffProfile::new(v)?),
                SweepAxis::Cells => {
                    // keep the mesh family: r^(M₀/M)
                    c.grid.cells = v as usize;
                    c.grid.grading = cfg.grid.grading.powf(cfg.grid.cells as f64 / v);
                }
            }
            jobs.push(SweepJob {
                axis: *axis,
                value: Some(v),
                cfg: c,
            });
        }
    }
    Ok(jobs)
}

fn sweep_one(job: &SweepJob) -> Result<(Grid, Trajectory), Error> {
    let cfg = &job.cfg;
    let grid = cfg.grid.build()?;
    let init = initial_state(
        &cfg.initial.spec,
        &grid,
        cfg.initial.smoothing,
        &cfg.solver.mode,
    )?;
    let env = BoundEnvelopes::from_initial(&init, &grid);
    let traj = run(&init, &grid, &cfg.solver, &env)?;
    Ok((grid, traj))
}

pub fn cmd_sweep(path: &Path, globals: &Globals) -> Result<Status, CliError> {
    let started = Instant::now();
    let cfg = load_config(path)?;
    if cfg.sweep.is_empty() {
        return Err(CliError::Config(format!(
            "{}: sweep needs a [sweep] section",
            path.display()
        )));
    }
    let stem = stem(path);
    let mut out = Outputs::new(&globals.out_dir)?;
    let jobs = sweep_jobs(&cfg)?;
    let results: Vec<Result<(Grid, Trajectory), Error>> =
        pool(globals.jobs)?.install(|| jobs.par_iter().map(sweep_one).collect());

    let mut finished = Vec::with_capacity(jobs.len());
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(r) => finished.push(r),
            Err(e) => {
                let grid = job.cfg.grid.build()?;
                return Err(abort(
                    e,
                    &grid,
                    &mut out,
                    &format!("{stem}_{}", job.label()),
                ));
            }
        }
    }

    let p = cfg.initial.spec.p;
    let mut checks = Vec::new();
    let mut table = String::from("axis,value,reference,distance\n");
    let mut rows = Vec::new();
    for (axis, values) in &cfg.sweep {
        let idx: Vec<usize> = (0..jobs.len()).filter(|&i| jobs[i].axis == *axis).collect();
        let mut distances = Vec::new();
        if *axis == SweepAxis::H {
            let (gp, tp) = &finished[idx[0]];
            for (&i, v) in idx[1..].iter().zip(values) {
                let (g, t) = &finished[i];
                let d = l1_between(g, &t.last_state().n, gp, &tp.last_state().n, p)?;
                rows.push(format!("h,{v:?},plain,{d:?}"));
                distances.push(d);
            }
        } else {
            for (w, v) in idx.windows(2).zip(values.windows(2)) {
                let (ga, ta) = &finished[w[0]];
                let (gb, tb) = &finished[w[1]];
                let d = l1_between(ga, &ta.last_state().n, gb, &tb.last_state().n, p)?;
                rows.push(format!("{},{:?},{:?},{d:?}", axis.name(), v[0], v[1]));
                distances.push(d);
            }
        }
        for (k, w) in distances.windows(2).enumerate() {
            let name = format!("{}_distance_decreases_{}", axis.name(), k + 1);
            checks.push(Check::below(name, w[1] - w[0], 0.0).soft());
        }
    }
    for row in rows {
        table.push_str(&row);
        table.push('\n');
    }

    for (job, (grid, traj)) in jobs.iter().zip(&finished) {
        let label = job.label();
        checks.extend(prefixed(
            &label,
            audit(traj, grid, &settings(&job.cfg, globals))?,
        ));
        out.write(&format!("{stem}_{label}_summary.csv"), &traj.summary_csv())?;
    }
    out.write(&format!("{stem}_sweep.csv"), &table)?;
    print!("{table}");
    print_checks(&checks);
    finish(
        &mut out,
        &stem,
        ManifestInput {
            command: "sweep",
            config_path: Some(path),
            config: Some(&cfg.file),
            tol_scale: globals.tol_scale,
            started,
            checks,
            details: json!({ "runs": jobs.iter().map(SweepJob::label).collect::<Vec<_>>() }),
        },
    )
}

pub fn cmd_verify(level: Level, globals: &Globals) -> Result<Status, CliError> {
    let started = Instant::now();
    let mut out = Outputs::new(&globals.out_dir)?;
    let list = scenarios(level);
    let runs = pool(globals.jobs)?.install(|| {
        list.par_iter()
            .map(run_scenario)
            .collect::<Result<Vec<_>, _>>()
    })?;
    let board = evaluate(level, &Tolerance::scaled(globals.tol_scale), &runs)?;

    for run in &runs {
        match &run.outcome {
            Ok(Outcome::Single(t)) => {
                out.write(
                    &format!("verify_{}_summary.csv", run.scenario.name),
                    &t.summary_csv(),
                )?;
            }
            Ok(Outcome::Pair(a, b)) => {
                out.write(
                    &format!("verify_{}_a_summary.csv", run.scenario.name),
                    &a.summary_csv(),
                )?;
                out.write(
                    &format!("verify_{}_b_summary.csv", run.scenario.name),
                    &b.summary_csv(),
                )?;
            }
            Err(msg) => eprintln!("scenario {} aborted: {msg}", run.scenario.name),
        }
    }
    out.write("verify_scoreboard.csv", &board.csv())?;
    for c in &board.criteria {
        println!("{:<5} {:>2} {}", c.status.as_str(), c.id, c.title);
    }
    let warnings = board
        .soft
        .iter()
        .filter(|c| c.status == Status::Warn)
        .count();
    if warnings > 0 {
        println!("{warnings} soft check(s) raised warnings");
    }
    let checks = board
        .criteria
        .iter()
        .flat_map(|c| prefixed(&format!("c{}", c.id), c.checks.clone()))
        .chain(board.soft.iter().cloned())
        .collect();
    let status = finish(
        &mut out,
        "verify",
        ManifestInput {
            command: match level {
                Level::Quick => "verify --quick",
                Level::Full => "verify --full",
            },
            config_path: None,
            config: None,
            tol_scale: globals.tol_scale,
            started,
            checks,
            details: json!({ "criteria": board.criteria }),
        },
    )?;
    debug_assert_eq!(status == Status::Fail, !board.passed());
    Ok(status)
}
