//! Audits of single runs and the fixed verification suite.
//!
//! The suite is a list of [`Scenario`]s, run independently (possibly in
//! parallel), then scored by [`evaluate`] into one [`Criterion`] per
//! acceptance property. Every check carries the measured value and the limit
//! it was held to.

use serde::Serialize;

use crate::diagnostics::{
    check_contraction, check_persistence, entropy_increases, max_oleinik_violation,
    max_sup_violation, min_energy_slack, onset_detect, photon_balance_error, violations_left_of,
    weighted_l1, Tolerance,
};
use crate::equilibrium::{dominating_envelope, equilibrium_state, fit, DEFAULT_FIT_FLOOR};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::initdata::{cutoff_compatible, Family, InitialSpec};
use crate::model::{equilibrium_number, onset_time_bound, solve_mu, BoundEnvelopes, CutoffProfile};
use crate::solver::{
    initial_state, run_pair, run_with, FluxMode, GridSpec, Scheme, Smoothing, SolverConfig,
    Trajectory,
};
use crate::state::State;

/// Photon balance closes by telescoping, so only round-off is allowed.
pub const PHOTON_BALANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Warn => "warn",
            Status::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub relation: &'static str,
    pub limit: f64,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, relation: &'static str, limit: f64) -> Self {
        let holds = match relation {
            "<=" => value <= limit,
            ">=" => value >= limit,
            "<" => value < limit,
            _ => false,
        };
        Self {
            name: name.into(),
            status: if holds { Status::Pass } else { Status::Fail },
            value,
            relation,
            limit,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, "<=", limit)
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, ">=", limit)
    }

    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, "<", limit)
    }

    /// Downgrades a failure to a warning.
    pub fn soft(mut self) -> Self {
        if self.status == Status::Fail {
            self.status = Status::Warn;
        }
        self
    }

    fn failed_run(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Fail,
            value: f64::NAN,
            relation: "ok",
            limit: f64::NAN,
        }
    }
}

pub fn worst(checks: &[Check]) -> Status {
    checks
        .iter()
        .map(|c| c.status)
        .max()
        .unwrap_or(Status::Pass)
}

/// Thresholds for [`audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub tol: Tolerance,
    pub energy_tol: f64,
    pub onset_threshold: f64,
    pub entropy_tol: f64,
    /// Restricts the pointwise bounds to `x < bounds_left_of` (cut-off runs).
    pub bounds_left_of: Option<f64>,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            energy_tol: 1e-3,
            onset_threshold: 1e-4,
            entropy_tol: 1e-9,
            bounds_left_of: None,
        }
    }
}

/// Where the pointwise bounds apply for a run in `mode`.
pub fn bound_region(mode: &FluxMode) -> Option<f64> {
    match mode {
        FluxMode::Plain => None,
        FluxMode::Cutoff(p) => Some(p.strip_start()),
    }
}

fn pointwise_violations(
    traj: &Trajectory,
    grid: &Grid,
    left_of: Option<f64>,
) -> Result<(f64, f64)> {
    match left_of {
        None => Ok((max_sup_violation(traj), max_oleinik_violation(traj))),
        Some(x) => violations_left_of(traj, grid, x),
    }
}

/// The bound checks every run is held to. The persistence check is added
/// only when an onset is detected at a positive time; the entropy check is
/// soft. In cut-off runs the pointwise bounds are checked left of the strip.
pub fn audit(traj: &Trajectory, grid: &Grid, settings: &AuditSettings) -> Result<Vec<Check>> {
    let tol = settings.tol.disc(grid, traj.max_dt);
    let (sup, oleinik) = pointwise_violations(traj, grid, settings.bounds_left_of)?;
    let mut checks = vec![
        Check::at_most("sup_violation", sup, tol),
        Check::at_most("oleinik_violation", oleinik, tol),
        Check::at_least(
            "energy_slack",
            min_energy_slack(traj, grid)?,
            -settings.energy_tol,
        ),
        Check::at_most(
            "photon_balance",
            photon_balance_error(traj, grid)?,
            PHOTON_BALANCE_TOL,
        ),
    ];
    match check_persistence(traj, settings.onset_threshold, tol) {
        Ok(p) => checks.push(Check::at_least("persistence_margin", p.min_margin, -tol)),
        Err(Error::NoOnset) => {}
        Err(e) => return Err(e),
    }
    let increases = entropy_increases(traj, settings.entropy_tol).len();
    checks.push(Check::at_most("entropy_increases", increases as f64, 0.0).soft());
    Ok(checks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    Single(InitialSpec),
    Pair(InitialSpec, InitialSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    pub config: SolverConfig,
    pub kind: ScenarioKind,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Single(Trajectory),
    Pair(Trajectory, Trajectory),
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub grid: Grid,
    /// The error message when the run aborted.
    pub outcome: std::result::Result<Outcome, String>,
}

impl ScenarioRun {
    pub fn trajectories(&self) -> Vec<&Trajectory> {
        match &self.outcome {
            Ok(Outcome::Single(t)) => vec![t],
            Ok(Outcome::Pair(a, b)) => vec![a, b],
            Err(_) => Vec::new(),
        }
    }

    fn single(&self) -> Option<&Trajectory> {
        match &self.outcome {
            Ok(Outcome::Single(t)) => Some(t),
            _ => None,
        }
    }

    fn pair(&self) -> Option<(&Trajectory, &Trajectory)> {
        match &self.outcome {
            Ok(Outcome::Pair(a, b)) => Some((a, b)),
            _ => None,
        }
    }
}

const EQ_MU: f64 = 0.5;
const EQ_DRIFT: f64 = 5e-3;
const EQ_RATIO: f64 = 1.5;
const ABSENCE_LEDGER: f64 = 1e-8;
const ABSENCE_NUMBER: f64 = 1e-3;
const MU_AGREEMENT: f64 = 2e-2;
const LIMIT_RESIDUAL: f64 = 1e-2;
const ONSET_LEDGER: f64 = 1e-6;
/// Photon number of the condensing data `n ≡ 2` on `(0, 1]`.
const CONDENSING_NUMBER: f64 = 2.0;
const CONTRACTION_TOL: f64 = 1e-8;
const CUTOFF_RESIDUAL: f64 = 1e-8;
const CUTOFF_WIDTHS: [f64; 3] = [0.2, 0.1, 0.05];
const ROUND_TRIP: f64 = 1e-10;
const NUMBER_ORACLE: f64 = 1e-12;

fn uniform(cells: usize) -> GridSpec {
    GridSpec {
        epsilon: 1e-3,
        cells,
        grading: 1.0,
    }
}

fn solver(t_end: f64, dt_max: f64) -> SolverConfig {
    SolverConfig {
        t_end,
        dt_max,
        ..SolverConfig::default()
    }
}

fn single(name: &str, grid: GridSpec, config: SolverConfig, family: Family) -> Scenario {
    Scenario {
        name: name.into(),
        grid,
        config,
        kind: ScenarioKind::Single(InitialSpec::new(family)),
    }
}

/// The scenario list for a level, in a fixed order.
pub fn scenarios(level: Level) -> Vec<Scenario> {
    let graded = GridSpec {
        epsilon: 1e-3,
        cells: 400,
        grading: 1.02,
    };
    let eq = Family::ScaledEquilibrium { a: 1.0, mu: EQ_MU };
    let levels = match level {
        Level::Quick => 2,
        Level::Full => 3,
    };
    let mut out = Vec::new();
    for l in 0..levels {
        let spec = graded.refined(l);
        out.push(single(
            &format!("equilibrium_m{}", spec.cells),
            spec,
            solver(10.0, 1e-2 / (1u32 << l) as f64),
            eq.clone(),
        ));
    }
    out.push(single(
        "equilibrium_m400_repeat",
        graded,
        solver(10.0, 1e-2),
        eq,
    ));
    out.push(single(
        "condensing",
        uniform(400),
        solver(100.0, 1e-2),
        Family::Constant(CONDENSING_NUMBER),
    ));
    if level == Level::Full {
        out.push(single(
            "condensing_m800",
            uniform(800),
            solver(100.0, 5e-3),
            Family::Constant(CONDENSING_NUMBER),
        ));
    }
    out.push(single(
        "absence",
        GridSpec {
            epsilon: 1e-4,
            cells: 400,
            grading: 1.02,
        },
        solver(50.0, 1e-2),
        Family::LinearMultiple(0.5),
    ));
    out.push(Scenario {
        name: "pair_crossing".into(),
        grid: uniform(400),
        config: solver(10.0, 1e-2),
        kind: ScenarioKind::Pair(
            InitialSpec::new(Family::Constant(CONDENSING_NUMBER)),
            InitialSpec::new(Family::LinearMultiple(3.0)),
        ),
    });
    out.push(Scenario {
        name: "pair_ordered".into(),
        grid: uniform(400),
        config: solver(10.0, 1e-2),
        kind: ScenarioKind::Pair(
            InitialSpec::new(Family::LinearMultiple(0.5)),
            InitialSpec::new(Family::LinearMultiple(1.0)),
        ),
    });
    let adjacent = Family::ScaledEquilibrium { a: 1.2, mu: EQ_MU };
    out.push(single(
        "cutoff_plain",
        uniform(400),
        solver(1.0, 1e-2),
        adjacent.clone(),
    ));
    for h in CUTOFF_WIDTHS {
        let mut config = solver(1.0, 1e-2);
        config.mode = FluxMode::Cutoff(CutoffProfile::new(h).expect("width in range"));
        out.push(single(
            &format!("cutoff_h{h}"),
            uniform(400),
            config,
            adjacent.clone(),
        ));
    }
    out
}

fn execute(scenario: &Scenario, grid: &Grid, sign: f64) -> Result<Outcome> {
    let config = &scenario.config;
    config.validate()?;
    match &scenario.kind {
        ScenarioKind::Single(spec) => {
            let init = initial_state(spec, grid, Smoothing::Raw, &config.mode)?;
            let env = BoundEnvelopes::from_initial(&init, grid);
            let mut scheme = Scheme::new(grid, config);
            scheme.convective_sign = sign;
            Ok(Outcome::Single(run_with(
                &scheme, &init, grid, config, &env,
            )?))
        }
        ScenarioKind::Pair(a, b) => {
            let ia = initial_state(a, grid, Smoothing::Raw, &config.mode)?;
            let ib = initial_state(b, grid, Smoothing::Raw, &config.mode)?;
            let (ta, tb) = run_pair(&ia, &ib, grid, config)?;
            Ok(Outcome::Pair(ta, tb))
        }
    }
}

fn run_scenario_signed(scenario: &Scenario, sign: f64) -> Result<ScenarioRun> {
    let grid = scenario.grid.build()?;
    let outcome = execute(scenario, &grid, sign).map_err(|e| e.to_string());
    Ok(ScenarioRun {
        scenario: scenario.clone(),
        grid,
        outcome,
    })
}

/// Runs one scenario. Solver aborts are recorded in the outcome; only an
/// invalid grid is an error.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun> {
    run_scenario_signed(scenario, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub status: Status,
    pub checks: Vec<Check>,
}

impl Criterion {
    fn new(id: u32, title: &'static str, checks: Vec<Check>) -> Self {
        Self {
            id,
            title,
            status: worst(&checks),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scoreboard {
    pub level: Level,
    pub criteria: Vec<Criterion>,
    /// Soft checks; warnings never fail the suite.
    pub soft: Vec<Check>,
}

impl Scoreboard {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.status != Status::Fail)
    }

    pub fn criterion(&self, id: u32) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.id == id)
    }

    /// `id,title,check,status,value,relation,limit`, soft checks last with id 0.
    pub fn csv(&self) -> String {
        let mut out = String::from("id,title,check,status,value,relation,limit\n");
        let rows = self
            .criteria
            .iter()
            .flat_map(|c| c.checks.iter().map(move |k| (c.id, c.title, k)))
            .chain(self.soft.iter().map(|k| (0, "soft", k)));
        for (id, title, k) in rows {
            out.push_str(&format!(
                "{id},{title},{},{},{:?},{},{:?}\n",
                k.name,
                k.status.as_str(),
                k.value,
                k.relation,
                k.limit
            ));
        }
        out
    }
}

struct Runs<'a> {
    runs: &'a [ScenarioRun],
}

impl<'a> Runs<'a> {
    fn get(&self, name: &str) -> Option<&'a ScenarioRun> {
        self.runs.iter().find(|r| r.scenario.name == name)
    }

    fn single(&self, name: &str) -> Option<(&'a Grid, &'a Trajectory)> {
        self.get(name)
            .and_then(|r| r.single().map(|t| (&r.grid, t)))
    }

    fn pair(&self, name: &str) -> Option<(&'a Grid, &'a Trajectory, &'a Trajectory)> {
        self.get(name)
            .and_then(|r| r.pair().map(|(a, b)| (&r.grid, a, b)))
    }
}

fn max_distance_to(traj: &Trajectory, target: &State, grid: &Grid) -> Result<f64> {
    let mut worst = 0.0_f64;
    for s in &traj.states {
        worst = worst.max(weighted_l1(s, target, 0.0, grid)?);
    }
    Ok(worst)
}

fn equilibrium_drift(runs: &Runs, name: &str) -> Result<Option<f64>> {
    match runs.single(name) {
        Some((grid, traj)) => Ok(Some(max_distance_to(
            traj,
            &equilibrium_state(EQ_MU, grid)?,
            grid,
        )?)),
        None => Ok(None),
    }
}

fn criterion_equilibrium(runs: &Runs) -> Result<Criterion> {
    let mut names: Vec<&str> = runs
        .runs
        .iter()
        .map(|r| r.scenario.name.as_str())
        .filter(|n| n.starts_with("equilibrium_m") && !n.ends_with("_repeat"))
        .collect();
    names.sort_by_key(|n| n["equilibrium_m".len()..].parse::<usize>().unwrap_or(0));
    let mut checks = Vec::new();
    let mut drifts = Vec::new();
    for name in &names {
        match equilibrium_drift(runs, name)? {
            Some(d) => drifts.push(d),
            None => {
                checks.push(Check::failed_run(format!("{name}_run")));
                return Ok(Criterion::new(1, "equilibrium preservation", checks));
            }
        }
    }
    if let Some(&d) = drifts.first() {
        checks.push(Check::at_most("drift", d, EQ_DRIFT));
    }
    for (k, w) in drifts.windows(2).enumerate() {
        let ratio = if w[1] > 0.0 {
            w[0] / w[1]
        } else {
            f64::INFINITY
        };
        let name = if k == 0 {
            "refinement_ratio".to_string()
        } else {
            format!("refinement_ratio_{}", k + 1)
        };
        checks.push(Check::at_least(name, ratio, EQ_RATIO));
    }
    Ok(Criterion::new(1, "equilibrium preservation", checks))
}

/// Per-run bound checks for criteria 2 to 5.
fn per_run(runs: &Runs, tol: &Tolerance, energy_tol: f64) -> Result<[Vec<Check>; 4]> {
    let mut out: [Vec<Check>; 4] = Default::default();
    for run in runs.runs {
        let name = &run.scenario.name;
        if run.outcome.is_err() {
            for list in out.iter_mut() {
                list.push(Check::failed_run(format!("{name}_run")));
            }
            continue;
        }
        let trajs = run.trajectories();
        for (k, traj) in trajs.iter().enumerate() {
            let label = if trajs.len() == 2 {
                format!("{name}_{}", ["a", "b"][k])
            } else {
                name.clone()
            };
            let t = tol.disc(&run.grid, traj.max_dt);
            let region = bound_region(&run.scenario.config.mode);
            let (sup, oleinik) = pointwise_violations(traj, &run.grid, region)?;
            out[0].push(Check::at_most(format!("{label}_sup"), sup, t));
            out[1].push(Check::at_most(format!("{label}_oleinik"), oleinik, t));
            out[2].push(Check::at_least(
                format!("{label}_energy_slack"),
                min_energy_slack(traj, &run.grid)?,
                -energy_tol,
            ));
            out[3].push(Check::at_most(
                format!("{label}_balance"),
                photon_balance_error(traj, &run.grid)?,
                PHOTON_BALANCE_TOL,
            ));
        }
    }
    Ok(out)
}

/// Violations at the finer level must not exceed the coarser ones.
fn shrink_checks(runs: &Runs, pairs: &[(&str, &str)]) -> Vec<Check> {
    let mut checks = Vec::new();
    for (coarse, fine) in pairs {
        if let (Some((_, a)), Some((_, b))) = (runs.single(coarse), runs.single(fine)) {
            checks.push(Check::at_most(
                format!("{fine}_sup_minus_{coarse}"),
                max_sup_violation(b) - max_sup_violation(a),
                0.0,
            ));
        }
    }
    checks
}

fn criterion_onset(runs: &Runs, tol: &Tolerance) -> Result<Criterion> {
    let title = "condensation onset";
    let Some((grid, traj)) = runs.single("condensing") else {
        return Ok(Criterion::new(
            6,
            title,
            vec![Check::failed_run("condensing_run")],
        ));
    };
    let bound = onset_time_bound(CONDENSING_NUMBER)?;
    // latest output not after the bound; the ledger is nondecreasing
    let k = traj.times.iter().rposition(|&t| t <= bound).unwrap_or(0);
    let t = tol.disc(grid, traj.max_dt);
    let mut checks = vec![
        Check::at_least("ledger_by_onset_bound", traj.ledger[k], ONSET_LEDGER),
        Check::at_most(
            "onset_time",
            onset_detect(traj, 1e-4).unwrap_or(f64::INFINITY),
            bound,
        ),
    ];
    match check_persistence(traj, 1e-4, t) {
        Ok(p) => checks.push(Check::at_least("persistence_margin", p.min_margin, -t)),
        Err(_) => checks.push(Check::failed_run("persistence_onset")),
    }
    Ok(Criterion::new(6, title, checks))
}

fn criterion_absence(runs: &Runs) -> Result<(Criterion, Criterion)> {
    let (t7, t8) = ("absence of condensation", "conserved-mass limit");
    let Some((grid, traj)) = runs.single("absence") else {
        return Ok((
            Criterion::new(7, t7, vec![Check::failed_run("absence_run")]),
            Criterion::new(8, t8, vec![Check::failed_run("absence_run")]),
        ));
    };
    let last = traj.reports.last().expect("initial report");
    let c7 = Criterion::new(
        7,
        t7,
        vec![
            Check::at_most("ledger", last.ledger, ABSENCE_LEDGER),
            Check::at_most("number_error", (last.number - 0.25).abs(), ABSENCE_NUMBER),
        ],
    );
    let f = fit(traj.last_state(), last.number, grid, DEFAULT_FIT_FLOOR)?;
    let c8 = Criterion::new(
        8,
        t8,
        vec![
            Check::at_most("mu_error", (f.mu - solve_mu(0.25)?).abs(), MU_AGREEMENT),
            Check::at_most("residual_l1", f.residual_l1, LIMIT_RESIDUAL),
        ],
    );
    Ok((c7, c8))
}

fn criterion_dominating(runs: &Runs, tol: &Tolerance) -> Result<Criterion> {
    let title = "dominating-data limit";
    let Some((grid, traj)) = runs.single("condensing") else {
        return Ok(Criterion::new(
            9,
            title,
            vec![Check::failed_run("condensing_run")],
        ));
    };
    let t_end = *traj.times.last().expect("times");
    let maximal = State::from_fn(grid, |x| x);
    let last = traj.last_state();
    let number = traj.reports.last().expect("report").number;
    let f = fit(last, number, grid, DEFAULT_FIT_FLOOR)?;
    Ok(Criterion::new(
        9,
        title,
        vec![
            Check::at_most(
                "distance_to_maximal",
                weighted_l1(last, &maximal, 0.0, grid)?,
                dominating_envelope(t_end) + tol.disc(grid, traj.max_dt),
            ),
            Check::at_most("mu", f.mu, MU_AGREEMENT),
        ],
    ))
}

fn criterion_contraction(runs: &Runs) -> Result<Criterion> {
    let title = "L1 contraction";
    let Some((grid, a, b)) = runs.pair("pair_crossing") else {
        return Ok(Criterion::new(
            10,
            title,
            vec![Check::failed_run("pair_crossing_run")],
        ));
    };
    let rep = check_contraction(a, b, 0.0, grid, CONTRACTION_TOL)?;
    let k1 = a
        .times
        .iter()
        .position(|&t| t >= 1.0)
        .unwrap_or(a.len() - 1);
    Ok(Criterion::new(
        10,
        title,
        vec![
            Check::at_most("max_increase", rep.max_increase, CONTRACTION_TOL),
            Check::below("distance_ratio_t1", rep.distance[k1] / rep.distance[0], 1.0),
        ],
    ))
}

fn criterion_comparison(runs: &Runs, tol: &Tolerance) -> Result<Criterion> {
    let title = "comparison";
    let Some((grid, a, b)) = runs.pair("pair_ordered") else {
        return Ok(Criterion::new(
            11,
            title,
            vec![Check::failed_run("pair_ordered_run")],
        ));
    };
    let t = tol.disc(grid, a.max_dt);
    let plain = check_contraction(a, b, 0.0, grid, CONTRACTION_TOL)?;
    let weighted = check_contraction(a, b, 2.0, grid, CONTRACTION_TOL)?;
    let dplus = plain.positive_part.iter().copied().fold(0.0, f64::max);
    Ok(Criterion::new(
        11,
        title,
        vec![
            Check::at_most("positive_part", dplus, t),
            Check::at_most("gronwall_flags", weighted.flags.len() as f64, 0.0),
            Check::at_most("weighted_increase", weighted.max_increase, CONTRACTION_TOL),
        ],
    ))
}

fn criterion_cutoff(runs: &Runs) -> Result<Criterion> {
    let title = "cut-off consistency";
    let Some((grid, plain)) = runs.single("cutoff_plain") else {
        return Ok(Criterion::new(
            12,
            title,
            vec![Check::failed_run("cutoff_plain_run")],
        ));
    };
    let mut checks = Vec::new();
    let mut distances = Vec::new();
    let mut residual = 0.0_f64;
    for h in CUTOFF_WIDTHS {
        let name = format!("cutoff_h{h}");
        let Some(run) = runs.get(&name) else {
            continue;
        };
        let (Some(traj), ScenarioKind::Single(spec)) = (run.single(), &run.scenario.kind) else {
            checks.push(Check::failed_run(format!("{name}_run")));
            continue;
        };
        let profile = CutoffProfile::new(h)?;
        let raw = initial_state(spec, grid, Smoothing::Raw, &FluxMode::Plain)?;
        residual =
            residual.max(cutoff_compatible(&raw, &profile, grid)?.flux_matching_residual(&profile));
        distances.push((
            h,
            weighted_l1(traj.last_state(), plain.last_state(), 0.0, grid)?,
        ));
    }
    for w in distances.windows(2) {
        checks.push(Check::below(
            format!("distance_ratio_h{}_h{}", w[1].0, w[0].0),
            w[1].1 / w[0].1,
            1.0,
        ));
    }
    checks.push(Check::at_most(
        "flux_matching_residual",
        residual,
        CUTOFF_RESIDUAL,
    ));
    Ok(Criterion::new(12, title, checks))
}

/// Adaptive Simpson on `[a, b]`, used as an independent quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

fn criterion_oracles() -> Result<Criterion> {
    let mut worst = 0.0_f64;
    for k in 0..100 {
        let mu = 10f64.powf(-4.0 + 7.0 * k as f64 / 99.0);
        let back = solve_mu(equilibrium_number(mu)?)?;
        worst = worst.max((back - mu).abs() / mu);
    }
    let oracle = simpson(&|x| x * x / (x + 1.0), 0.0, 1.0, 1e-15);
    Ok(Criterion::new(
        13,
        "oracle round-trips",
        vec![
            Check::at_most("round_trip_relative", worst, ROUND_TRIP),
            Check::at_most(
                "number_at_one",
                (equilibrium_number(1.0)? - oracle).abs(),
                NUMBER_ORACLE,
            ),
        ],
    ))
}

fn criterion_determinism(runs: &Runs) -> Criterion {
    let title = "determinism";
    let check = match (
        runs.single("equilibrium_m400"),
        runs.single("equilibrium_m400_repeat"),
    ) {
        (Some((g, a)), Some((_, b))) => {
            let same =
                a.summary_csv() == b.summary_csv() && a.trajectory_csv(g) == b.trajectory_csv(g);
            Check::at_most("differing_outputs", if same { 0.0 } else { 1.0 }, 0.0)
        }
        _ => Check::failed_run("equilibrium_m400_repeat_run"),
    };
    Criterion::new(14, title, vec![check])
}

/// Scores finished scenario runs.
pub fn evaluate(level: Level, tol: &Tolerance, runs: &[ScenarioRun]) -> Result<Scoreboard> {
    let runs = Runs { runs };
    let [mut sup, oleinik, energy, balance] = per_run(&runs, tol, 1e-3)?;
    sup.extend(shrink_checks(
        &runs,
        &[
            ("equilibrium_m400", "equilibrium_m800"),
            ("equilibrium_m800", "equilibrium_m1600"),
            ("condensing", "condensing_m800"),
        ],
    ));
    let (c7, c8) = criterion_absence(&runs)?;
    let criteria = vec![
        criterion_equilibrium(&runs)?,
        Criterion::new(2, "universal super-solution", sup),
        Criterion::new(3, "one-sided slope bound", oleinik),
        Criterion::new(4, "energy inequality", energy),
        Criterion::new(5, "photon balance", balance),
        criterion_onset(&runs, tol)?,
        c7,
        c8,
        criterion_dominating(&runs, tol)?,
        criterion_contraction(&runs)?,
        criterion_comparison(&runs, tol)?,
        criterion_cutoff(&runs)?,
        criterion_oracles()?,
        criterion_determinism(&runs),
    ];
    let mut soft = Vec::new();
    for run in runs.runs {
        for (k, traj) in run.trajectories().into_iter().enumerate() {
            let n = entropy_increases(traj, 1e-9).len();
            soft.push(
                Check::at_most(
                    format!("{}_{k}_entropy_increases", run.scenario.name),
                    n as f64,
                    0.0,
                )
                .soft(),
            );
        }
    }
    Ok(Scoreboard {
        level,
        criteria,
        soft,
    })
}

/// Runs and scores the suite sequentially.
pub fn run_suite(level: Level, tol: &Tolerance) -> Result<(Scoreboard, Vec<ScenarioRun>)> {
    let runs = scenarios(level)
        .iter()
        .map(run_scenario)
        .collect::<Result<Vec<_>>>()?;
    Ok((evaluate(level, tol, &runs)?, runs))
}
