//! IMEX finite-volume solver on the truncated domain.
//!
//! Each step treats the convective flux `n² − 2xn` (Rusanov, explicit) and
//! the linear diffusion `x² ∂x n` (θ-implicit, one tridiagonal solve).
//! Boundary fluxes are `J = n₁²` at `x = ε`, upwinded from the first cell,
//! and `J = 0` at `x = 1`. Because every interior flux enters two cells with
//! opposite signs, the photon number changes by exactly `−dt · n₁²` per step
//! up to rounding; that increment is what the ledger accumulates.

use crate::diagnostics::{check_bounds, BoundReport};
use crate::error::{invalid, Error, Result};
use crate::grid::{build_grid, l1_between, Grid};
use crate::initdata::{cutoff_compatible, mollify, sample_raw, InitialSpec};
use crate::model::{convective_flux, entropy, BoundEnvelopes, CutoffProfile};
use crate::state::State;

/// Added to the characteristic speed so `adaptive_dt` never divides by zero.
pub const SPEED_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxMode {
    Plain,
    Cutoff(CutoffProfile),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub t_end: f64,
    /// Courant number for the explicit convective part.
    pub cfl: f64,
    pub dt_max: f64,
    pub mode: FluxMode,
    /// Implicitness of the diffusion, in `[0.5, 1]`; 1 is backward Euler.
    pub theta: f64,
    /// Spacing of the output (report) times.
    pub output_every: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            cfl: 0.5,
            dt_max: 1e-2,
            mode: FluxMode::Plain,
            theta: 1.0,
            output_every: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(invalid(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(invalid(format!("dt_max must be > 0, got {}", self.dt_max)));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(invalid(format!(
                "theta must lie in [0.5, 1], got {}",
                self.theta
            )));
        }
        if !(self.output_every > 0.0 && self.output_every.is_finite()) {
            return Err(invalid(format!(
                "output_every must be > 0, got {}",
                self.output_every
            )));
        }
        Ok(())
    }
}

/// How the raw family is turned into the discrete initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Point samples at the cell centres.
    #[default]
    Raw,
    /// Mollified data with the prescribed endpoint laws.
    Mollified,
}

/// Builds the initial state for a run: samples or mollifies the family, then
/// in cut-off mode replaces the strip by flux-compatible data.
pub fn initial_state(
    spec: &InitialSpec,
    grid: &Grid,
    smoothing: Smoothing,
    mode: &FluxMode,
) -> Result<State> {
    let base = match smoothing {
        Smoothing::Raw => sample_raw(spec, grid)?,
        Smoothing::Mollified => mollify(spec, grid)?,
    };
    match mode {
        FluxMode::Plain => Ok(base),
        FluxMode::Cutoff(profile) => Ok(cutoff_compatible(&base, profile, grid)?.state),
    }
}

/// Per-grid coefficients reused across steps.
#[derive(Debug, Clone)]
pub(crate) struct Scheme {
    /// `x_{j}` at interior interfaces `j = 1..M`, index `j − 1`.
    x: Vec<f64>,
    /// `x_j² / (x_{c,j} − x_{c,j−1})`.
    diffusion: Vec<f64>,
    gap: Vec<f64>,
    chi: Vec<f64>,
    /// χ at cell centres, for the speed bound.
    chi_center: Vec<f64>,
    widths: Vec<f64>,
    centers: Vec<f64>,
    theta: f64,
    /// −1 flips the convective flux; only used for negative controls.
    pub(crate) convective_sign: f64,
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: State,
    /// Mass through `x = ε` during the step, `dt · n₁²`.
    pub outflow: f64,
    /// Mass added by clipping negative undershoots.
    pub clipped: f64,
    /// `dt · (∫ n² + ∫ x² (∂x n)²)` on the new state with the scheme's slopes.
    pub dissipation: f64,
}

impl Scheme {
    pub(crate) fn new(grid: &Grid, config: &SolverConfig) -> Self {
        let m = grid.len();
        let ifs = grid.interfaces();
        let x: Vec<f64> = ifs[1..m].to_vec();
        let gap: Vec<f64> = (1..m).map(|j| grid.center_gap(j)).collect();
        let diffusion = x.iter().zip(&gap).map(|(x, g)| x * x / g).collect();
        let (chi, chi_center) = match &config.mode {
            FluxMode::Plain => (vec![0.0; m - 1], vec![0.0; m]),
            FluxMode::Cutoff(p) => (
                x.iter().map(|&x| p.chi(x)).collect(),
                grid.centers().iter().map(|&x| p.chi(x)).collect(),
            ),
        };
        Self {
            x,
            diffusion,
            gap,
            chi,
            chi_center,
            widths: grid.widths().to_vec(),
            centers: grid.centers().to_vec(),
            theta: config.theta,
            convective_sign: 1.0,
        }
    }

    fn len(&self) -> usize {
        self.widths.len()
    }

    /// Characteristic speed bound per cell: the largest of its own speed, its
    /// neighbours' speeds and, in the first cell, the outflow speed `2n₁`.
    fn cell_speeds(&self, n: &[f64]) -> Vec<f64> {
        let m = self.len();
        let own: Vec<f64> = (0..m)
            .map(|i| {
                let c = self.chi_center[i];
                (2.0 * n[i] * (1.0 - c) + 3.0 * c - 2.0 * self.centers[i]).abs()
            })
            .collect();
        (0..m)
            .map(|i| {
                let mut a = own[i];
                if i > 0 {
                    a = a.max(own[i - 1]);
                }
                if i + 1 < m {
                    a = a.max(own[i + 1]);
                }
                if i == 0 {
                    a = a.max(2.0 * n[0]);
                }
                a + SPEED_GUARD
            })
            .collect()
    }

    fn adaptive_dt(&self, n: &[f64], config: &SolverConfig) -> f64 {
        let speeds = self.cell_speeds(n);
        let mut dt = config.dt_max;
        for (i, (&w, &a)) in self.widths.iter().zip(&speeds).enumerate() {
            dt = dt.min(config.cfl * w / a);
            if self.theta < 1.0 {
                let left = if i > 0 { self.diffusion[i - 1] } else { 0.0 };
                let right = if i + 1 < self.len() {
                    self.diffusion[i]
                } else {
                    0.0
                };
                let d = (1.0 - self.theta) * (left + right);
                if d > 0.0 {
                    dt = dt.min(config.cfl * w / d);
                }
            }
        }
        dt
    }

    fn step(&self, state: &State, dt: f64) -> Result<StepOutput> {
        let m = self.len();
        let n = &state.n;
        let explicit_diffusion = 1.0 - self.theta;

        // explicit interface fluxes, index j = 0..=m
        let mut flux = vec![0.0; m + 1];
        let outflow_rate = n[0] * n[0];
        flux[0] = outflow_rate;
        for j in 1..m {
            let k = j - 1;
            let mut f =
                self.convective_sign * convective_flux(n[j - 1], n[j], self.x[k], self.chi[k]);
            if explicit_diffusion > 0.0 {
                f += explicit_diffusion * self.diffusion[k] * (n[j] - n[j - 1]);
            }
            flux[j] = f;
        }
        flux[m] = 0.0;

        let mut rhs: Vec<f64> = (0..m)
            .map(|i| n[i] + dt * (flux[i + 1] - flux[i]) / self.widths[i])
            .collect();

        // θ-implicit diffusion: tridiagonal M-matrix with zero-flux ends
        let mut lower = vec![0.0; m];
        let mut diag = vec![1.0; m];
        let mut upper = vec![0.0; m];
        for i in 0..m {
            let scale = dt * self.theta / self.widths[i];
            if i > 0 {
                let a = self.diffusion[i - 1];
                lower[i] = -scale * a;
                diag[i] += scale * a;
            }
            if i + 1 < m {
                let a = self.diffusion[i];
                upper[i] = -scale * a;
                diag[i] += scale * a;
            }
        }
        let explicit = rhs.clone();
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs)?;
        // rebuild in flux form so the update telescopes exactly
        let mut diffusive = vec![0.0; m + 1];
        for j in 1..m {
            diffusive[j] = self.theta * self.diffusion[j - 1] * (rhs[j] - rhs[j - 1]);
        }
        for i in 0..m {
            rhs[i] = explicit[i] + dt * (diffusive[i + 1] - diffusive[i]) / self.widths[i];
        }

        let mut clipped = 0.0;
        for (i, v) in rhs.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    t: state.t + dt,
                    cell: i,
                    last_good: Box::new(state.n.clone()),
                });
            }
            if *v < 0.0 {
                clipped -= *v * self.widths[i];
                *v = 0.0;
            }
        }

        let mut dissipation: f64 = self
            .widths
            .iter()
            .zip(rhs.iter())
            .map(|(w, v)| w * v * v)
            .sum();
        for j in 1..m {
            let k = j - 1;
            let slope = (rhs[j] - rhs[j - 1]) / self.gap[k];
            dissipation += self.gap[k] * self.x[k] * self.x[k] * slope * slope;
        }

        Ok(StepOutput {
            state: State::new(state.t + dt, rhs),
            outflow: dt * outflow_rate,
            clipped,
            dissipation: dt * dissipation,
        })
    }
}

/// Thomas algorithm; overwrites `rhs` with the solution. `lower[0]` and
/// `upper[n−1]` are ignored.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
) -> Result<()> {
    let n = rhs.len();
    if lower.len() != n || diag.len() != n || upper.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: diag.len(),
        });
    }
    if n == 0 {
        return Ok(());
    }
    let mut c = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::SingularSystem { row: 0 });
    }
    c[0] = upper[0] / pivot;
    rhs[0] /= pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        c[i] = upper[i] / pivot;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// One IMEX step of size `dt` from time `t`.
pub fn step(
    state: &State,
    t: f64,
    dt: f64,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<StepOutput> {
    state.check_len(grid)?;
    if !(dt > 0.0) {
        return Err(invalid(format!("dt must be > 0, got {dt}")));
    }
    let scheme = Scheme::new(grid, config);
    let start = State::new(t, state.n.clone());
    scheme.step(&start, dt)
}

/// `min(dt_max, cfl · Δx_i / α_i)` with `α_i` the local characteristic speed
/// bound of the convective part `|2n − 2x|` (cut-off aware).
pub fn adaptive_dt(state: &State, grid: &Grid, config: &SolverConfig) -> Result<f64> {
    state.check_len(grid)?;
    Ok(Scheme::new(grid, config).adaptive_dt(&state.n, config))
}

/// Time-ordered output of a run.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Cumulative mass through `x = ε`, `∫ n(ε, τ)² dτ`.
    pub ledger: Vec<f64>,
    /// Cumulative `∫∫ (n² + x² (∂x n)²)`, accumulated step by step.
    pub dissipation: Vec<f64>,
    /// Cumulative mass added by clipping.
    pub clip: Vec<f64>,
    pub reports: Vec<BoundReport>,
    /// Largest step actually taken.
    pub max_dt: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &State {
        self.states
            .last()
            .expect("trajectory has the initial state")
    }

    /// `t,x,n`, one row per output time and cell.
    pub fn trajectory_csv(&self, grid: &Grid) -> String {
        let mut out = String::from("t,x,n\n");
        for (s, t) in self.states.iter().zip(&self.times) {
            for (n, x) in s.n.iter().zip(grid.centers()) {
                out.push_str(&format!("{t:?},{x:?},{n:?}\n"));
            }
        }
        out
    }

    /// The bound reports, one row per output time.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(BoundReport::CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    fn push(
        &mut self,
        state: State,
        ledger: f64,
        dissipation: f64,
        clip: f64,
        grid: &Grid,
        envelopes: &BoundEnvelopes,
    ) -> Result<()> {
        let t = state.t;
        let mut report = check_bounds(&state, t, envelopes, grid)?;
        report.ledger = ledger;
        report.clip_mass = clip;
        report.entropy = entropy(&state, grid, None)?;
        if let (Some(prev_state), Some(&prev_t), Some(&prev_d)) = (
            self.states.last(),
            self.times.last(),
            self.dissipation.last(),
        ) {
            let e_prev = energy(&prev_state.n, grid);
            let e_now = energy(&state.n, grid);
            report.energy_slack =
                e_prev + 8.0 / 3.0 * (t - prev_t) - e_now - (dissipation - prev_d);
        } else {
            report.energy_slack = 0.0;
        }
        self.times.push(t);
        self.states.push(state);
        self.ledger.push(ledger);
        self.dissipation.push(dissipation);
        self.clip.push(clip);
        self.reports.push(report);
        Ok(())
    }
}

/// `∫ n²` with the midpoint rule.
pub(crate) fn energy(n: &[f64], grid: &Grid) -> f64 {
    n.iter().zip(grid.widths()).map(|(v, w)| v * v * w).sum()
}

/// Running totals carried alongside the state.
#[derive(Debug, Clone, Copy, Default)]
struct Totals {
    ledger: f64,
    dissipation: f64,
    clip: f64,
}

impl Totals {
    fn add(&mut self, out: &StepOutput) {
        self.ledger += out.outflow;
        self.dissipation += out.dissipation;
        self.clip += out.clipped;
    }
}

fn output_times(config: &SolverConfig) -> Vec<f64> {
    let count = (config.t_end / config.output_every).ceil() as usize;
    let mut times: Vec<f64> = (1..=count)
        .map(|k| (k as f64 * config.output_every).min(config.t_end))
        .collect();
    times.dedup();
    if times.last().is_none_or(|&t| t < config.t_end) {
        times.push(config.t_end);
    }
    times
}

fn check_initial(initial: &State, grid: &Grid) -> Result<()> {
    initial.check_len(grid)?;
    if let Some(i) = initial.n.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!(
            "initial state must be finite and nonnegative (cell {i}: {})",
            initial.n[i]
        )));
    }
    Ok(())
}

/// Integrates to `config.t_end`, emitting a report at every output time.
pub fn run(
    initial: &State,
    grid: &Grid,
    config: &SolverConfig,
    envelopes: &BoundEnvelopes,
) -> Result<Trajectory> {
    config.validate()?;
    check_initial(initial, grid)?;
    let scheme = Scheme::new(grid, config);
    run_with(&scheme, initial, grid, config, envelopes)
}

pub(crate) fn run_with(
    scheme: &Scheme,
    initial: &State,
    grid: &Grid,
    config: &SolverConfig,
    envelopes: &BoundEnvelopes,
) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    let mut state = State::new(0.0, initial.n.clone());
    let mut totals = Totals::default();
    traj.push(state.clone(), 0.0, 0.0, 0.0, grid, envelopes)?;

    for target in output_times(config) {
        while state.t < target {
            let mut dt = scheme.adaptive_dt(&state.n, config);
            if state.t + dt >= target || target - (state.t + dt) < 1e-12 * target {
                dt = target - state.t;
            }
            let out = scheme.step(&state, dt)?;
            totals.add(&out);
            traj.max_dt = traj.max_dt.max(dt);
            traj.steps += 1;
            state = out.state;
            if state.t >= target - 1e-12 * target {
                state.t = target;
            }
        }
        traj.push(
            state.clone(),
            totals.ledger,
            totals.dissipation,
            totals.clip,
            grid,
            envelopes,
        )?;
    }
    Ok(traj)
}

/// Advances two initial states in lockstep with a shared step size, so that
/// both trajectories are produced by the same discrete evolution operator.
pub fn run_pair(
    a: &State,
    b: &State,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<(Trajectory, Trajectory)> {
    config.validate()?;
    check_initial(a, grid)?;
    check_initial(b, grid)?;
    let scheme = Scheme::new(grid, config);
    let env = [
        BoundEnvelopes::from_initial(a, grid),
        BoundEnvelopes::from_initial(b, grid),
    ];
    let mut trajs = [Trajectory::default(), Trajectory::default()];
    let mut states = [State::new(0.0, a.n.clone()), State::new(0.0, b.n.clone())];
    let mut totals = [Totals::default(); 2];
    for k in 0..2 {
        trajs[k].push(states[k].clone(), 0.0, 0.0, 0.0, grid, &env[k])?;
    }
    let mut t = 0.0;
    for target in output_times(config) {
        while t < target {
            let mut dt = scheme
                .adaptive_dt(&states[0].n, config)
                .min(scheme.adaptive_dt(&states[1].n, config));
            if t + dt >= target || target - (t + dt) < 1e-12 * target {
                dt = target - t;
            }
            for k in 0..2 {
                let out = scheme.step(&states[k], dt)?;
                totals[k].add(&out);
                trajs[k].max_dt = trajs[k].max_dt.max(dt);
                trajs[k].steps += 1;
                states[k] = out.state;
            }
            t += dt;
            if t >= target - 1e-12 * target {
                t = target;
            }
            for s in &mut states {
                s.t = t;
            }
        }
        for k in 0..2 {
            let tot = totals[k];
            trajs[k].push(
                states[k].clone(),
                tot.ledger,
                tot.dissipation,
                tot.clip,
                grid,
                &env[k],
            )?;
        }
    }
    let [ta, tb] = trajs;
    Ok((ta, tb))
}

/// Mesh parameters for refinement studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub epsilon: f64,
    pub cells: usize,
    pub grading: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        build_grid(self.epsilon, self.cells, self.grading)
    }

    /// The grid at refinement level `level`: cells doubled and the grading
    /// ratio square-rooted per level, so interfaces nest.
    pub fn refined(&self, level: u32) -> GridSpec {
        let factor = 1usize << level;
        GridSpec {
            epsilon: self.epsilon,
            cells: self.cells * factor,
            grading: self.grading.powf(1.0 / factor as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    pub cells: usize,
    pub dt_max: f64,
    /// Weighted L¹ distance at `t_end` to the next finer level.
    pub difference: Option<f64>,
    /// `log₂` of successive difference ratios.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<RefinementRow>,
}

impl ConvergenceTable {
    pub fn differences(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.difference).collect()
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }
}

/// Runs the same data at `cells · 2^ℓ`, `ℓ = 0..levels`, halving `dt_max`
/// with the mesh, and reports successive `L¹(x^p dx)` differences at `t_end`.
pub fn refine_study(
    spec: &InitialSpec,
    base: GridSpec,
    levels: usize,
    config: &SolverConfig,
    smoothing: Smoothing,
) -> Result<ConvergenceTable> {
    if levels < 2 {
        return Err(invalid(format!(
            "refinement needs >= 2 levels, got {levels}"
        )));
    }
    let mut finals = Vec::with_capacity(levels);
    for level in 0..levels as u32 {
        let gs = base.refined(level);
        let grid = gs.build()?;
        let mut cfg = config.clone();
        cfg.dt_max = config.dt_max / (1u32 << level) as f64;
        let initial = initial_state(spec, &grid, smoothing, &cfg.mode)?;
        let env = BoundEnvelopes::from_initial(&initial, &grid);
        let traj = run(&initial, &grid, &cfg, &env)?;
        finals.push((grid, traj.last_state().n.clone(), cfg.dt_max));
    }
    let mut diffs = Vec::with_capacity(levels - 1);
    for w in finals.windows(2) {
        diffs.push(l1_between(&w[0].0, &w[0].1, &w[1].0, &w[1].1, spec.p)?);
    }
    let rows = finals
        .iter()
        .enumerate()
        .map(|(k, (grid, _, dt))| RefinementRow {
            cells: grid.len(),
            dt_max: *dt,
            difference: diffs.get(k).copied(),
            order: match (diffs.get(k), diffs.get(k + 1)) {
                (Some(&a), Some(&b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
                _ => None,
            },
        })
        .collect();
    Ok(ConvergenceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initdata::Family;
    use crate::model::equilibrium_density;
    use approx::assert_relative_eq;

    fn uniform(m: usize) -> Grid {
        build_grid(1e-3, m, 1.0).unwrap()
    }

    #[test]
    fn thomas_solves_known_system() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] → x = [1 1 1]
        let mut rhs = vec![1.0, 0.0, 1.0];
        solve_tridiagonal(&[0.0, -1.0, -1.0], &[2.0; 3], &[-1.0, -1.0, 0.0], &mut rhs).unwrap();
        for v in rhs {
            assert_relative_eq!(v, 1.0, epsilon = 1e-15);
        }
        let mut rhs = vec![1.0, 1.0];
        assert!(matches!(
            solve_tridiagonal(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &mut rhs),
            Err(Error::SingularSystem { row: 0 })
        ));
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = uniform(50);
        let out = step(&State::zeros(&g), 0.0, 1e-2, &g, &SolverConfig::default()).unwrap();
        assert!(out.state.n.iter().all(|&v| v == 0.0));
        assert_eq!(out.outflow, 0.0);
    }

    #[test]
    fn equilibrium_barely_moves_in_one_step() {
        let g = uniform(400);
        let s = State::from_fn(&g, |x| equilibrium_density(0.5, x).unwrap());
        let dt = 1e-3;
        let out = step(&s, 0.0, dt, &g, &SolverConfig::default()).unwrap();
        let drift: f64 = out
            .state
            .n
            .iter()
            .zip(&s.n)
            .zip(g.widths())
            .map(|((a, b), w)| (a - b).abs() * w)
            .sum();
        // O(dt · Δx) per step
        assert!(drift < 10.0 * dt * g.max_width(), "drift {drift}");
    }

    #[test]
    fn constant_data_loses_mass_at_the_left_boundary() {
        let g = uniform(400);
        let s = State::from_fn(&g, |_| 2.0);
        let cfg = SolverConfig::default();
        let dt = adaptive_dt(&s, &g, &cfg).unwrap();
        let out = step(&s, 0.0, dt, &g, &cfg).unwrap();
        let before = g.quad(&s.n, 0.0).unwrap();
        let after = g.quad(&out.state.n, 0.0).unwrap();
        assert_relative_eq!(before - after, 4.0 * dt, max_relative = 1e-10);
        assert_relative_eq!(out.outflow, 4.0 * dt, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_dt_examples() {
        let g = uniform(400);
        let cfg = SolverConfig {
            cfl: 0.5,
            dt_max: 0.1,
            ..SolverConfig::default()
        };
        let x = State::from_fn(&g, |x| x);
        assert_eq!(adaptive_dt(&x, &g, &cfg).unwrap(), 0.1);

        let two = State::from_fn(&g, |_| 2.0);
        let dt = adaptive_dt(&two, &g, &cfg).unwrap();
        assert_relative_eq!(dt, 0.5 * g.widths()[0] / 4.0, max_relative = 1e-3);

        let fine = build_grid(1e-3, 800, 1.0).unwrap();
        let dt_fine = adaptive_dt(&State::from_fn(&fine, |_| 2.0), &fine, &cfg).unwrap();
        assert_relative_eq!(dt / dt_fine, 2.0, max_relative = 1e-3);
    }

    #[test]
    fn photon_balance_is_exact() {
        let g = build_grid(1e-3, 200, 1.01).unwrap();
        let s = State::from_fn(&g, |_| 2.0);
        let cfg = SolverConfig {
            t_end: 3.0,
            output_every: 0.25,
            ..SolverConfig::default()
        };
        let env = BoundEnvelopes::from_initial(&s, &g);
        let traj = run(&s, &g, &cfg, &env).unwrap();
        let n0 = g.quad(&s.n, 0.0).unwrap();
        for (st, &l) in traj.states.iter().zip(&traj.ledger) {
            let n = g.quad(&st.n, 0.0).unwrap();
            assert!((n + l - n0).abs() <= 1e-10 * (1.0 + n0));
        }
        assert!(traj.ledger.windows(2).all(|w| w[1] >= w[0]));
        assert!(*traj.clip.last().unwrap() <= 1e-12 * n0);
    }

    #[test]
    fn zero_run_stays_zero() {
        let g = uniform(64);
        let s = State::zeros(&g);
        let cfg = SolverConfig {
            t_end: 1.0,
            ..SolverConfig::default()
        };
        let traj = run(&s, &g, &cfg, &BoundEnvelopes::from_initial(&s, &g)).unwrap();
        assert!(traj.states.iter().all(|st| st.n.iter().all(|&v| v == 0.0)));
        assert_eq!(*traj.ledger.last().unwrap(), 0.0);
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn output_times_end_exactly() {
        let cfg = SolverConfig {
            t_end: 1.0,
            output_every: 0.3,
            ..SolverConfig::default()
        };
        assert_eq!(output_times(&cfg), vec![0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    #[test]
    fn rejects_bad_config_and_state() {
        let g = uniform(16);
        let s = State::from_fn(&g, |x| x);
        let env = BoundEnvelopes::from_initial(&s, &g);
        let bad = SolverConfig {
            theta: 0.3,
            ..SolverConfig::default()
        };
        assert!(run(&s, &g, &bad, &env).is_err());
        let neg = State::from_fn(&g, |_| -1.0);
        assert!(run(&neg, &g, &SolverConfig::default(), &env).is_err());
        assert!(run(
            &State::new(0.0, vec![1.0; 3]),
            &g,
            &SolverConfig::default(),
            &env
        )
        .is_err());
    }

    #[test]
    fn crank_nicolson_mode_runs() {
        let g = uniform(100);
        let s = State::from_fn(&g, |x| 0.5 * x + 0.2);
        let cfg = SolverConfig {
            theta: 0.5,
            t_end: 1.0,
            ..SolverConfig::default()
        };
        let traj = run(&s, &g, &cfg, &BoundEnvelopes::from_initial(&s, &g)).unwrap();
        assert!(traj
            .last_state()
            .n
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn cutoff_mode_runs_and_balances() {
        let g = uniform(200);
        let profile = CutoffProfile::new(0.1).unwrap();
        let cfg = SolverConfig {
            t_end: 1.0,
            mode: FluxMode::Cutoff(profile),
            ..SolverConfig::default()
        };
        let spec = InitialSpec::new(Family::ScaledEquilibrium { a: 0.9, mu: 0.5 });
        let s = initial_state(&spec, &g, Smoothing::Raw, &cfg.mode).unwrap();
        let traj = run(&s, &g, &cfg, &BoundEnvelopes::from_initial(&s, &g)).unwrap();
        let n0 = g.quad(&s.n, 0.0).unwrap();
        let n1 = g.quad(&traj.last_state().n, 0.0).unwrap();
        assert!((n1 + traj.ledger.last().unwrap() - n0).abs() < 1e-12);
    }

    #[test]
    fn refine_study_rejects_single_level() {
        let spec = InitialSpec::new(Family::Constant(1.0));
        let base = GridSpec {
            epsilon: 1e-3,
            cells: 50,
            grading: 1.0,
        };
        assert!(refine_study(&spec, base, 1, &SolverConfig::default(), Smoothing::Raw).is_err());
    }

    #[test]
    fn refined_grids_nest() {
        let base = GridSpec {
            epsilon: 1e-3,
            cells: 40,
            grading: 1.05,
        };
        let coarse = base.build().unwrap();
        let fine = base.refined(1).build().unwrap();
        for (k, &x) in coarse.interfaces().iter().enumerate() {
            assert_relative_eq!(fine.interfaces()[2 * k], x, max_relative = 1e-12);
        }
    }
}
