//! Checks of discrete states and trajectories against the continuum bounds:
//! the universal super-solution, the one-sided slope bound, the energy
//! inequality, photon balance, weighted-L¹ stability and persistence of the
//! condensate.
//!
//! Continuum inequalities are tested up to `tol_disc = C (Δx + dt)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{quad, Grid};
use crate::model::{gronwall_constant, persistence_floor, supersolution, BoundEnvelopes};
use crate::solver::{energy, Trajectory};
use crate::state::State;

/// Default constant in `tol_disc = C (Δx + dt)`.
pub const DEFAULT_TOL_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub constant: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            constant: DEFAULT_TOL_CONSTANT,
        }
    }
}

impl Tolerance {
    pub fn scaled(scale: f64) -> Self {
        Self {
            constant: DEFAULT_TOL_CONSTANT * scale,
        }
    }

    /// `C (max Δx + dt)`.
    pub fn disc(&self, grid: &Grid, dt: f64) -> f64 {
        self.constant * (grid.max_width() + dt)
    }
}

/// Per-output-time audit record.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundReport {
    pub t: f64,
    /// Photon number over `[ε, 1]`.
    pub number: f64,
    pub ledger: f64,
    /// `max (n − S(x, t + τ₁))₊`
    pub sup_violation: f64,
    /// `max (−slope − 4/(t + τ₂))₊` over interior interfaces.
    pub oleinik_violation: f64,
    /// Energy inequality slack since the previous report.
    pub energy_slack: f64,
    pub entropy: f64,
    /// First-cell trace `n(ε, t)`.
    pub n_eps: f64,
    pub clip_mass: f64,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str =
        "t,number,ledger,sup_violation,oleinik_violation,energy_slack,entropy,n_eps,clip_mass";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.t,
            self.number,
            self.ledger,
            self.sup_violation,
            self.oleinik_violation,
            self.energy_slack,
            self.entropy,
            self.n_eps,
            self.clip_mass
        )
    }
}

/// Violation magnitudes of the super-solution and the slope bound. Fields
/// other than `t`, `number` and `n_eps` are left at zero for the caller.
pub fn check_bounds(
    state: &State,
    t: f64,
    envelopes: &BoundEnvelopes,
    grid: &Grid,
) -> Result<BoundReport> {
    state.check_len(grid)?;
    let mut sup_violation = 0.0_f64;
    if t + envelopes.tau1 > 0.0 {
        for (&n, &x) in state.n.iter().zip(grid.centers()) {
            let s = supersolution(x, t, envelopes.tau1)?;
            sup_violation = sup_violation.max(n - s);
        }
    }
    let mut oleinik_violation = 0.0_f64;
    if t + envelopes.tau2 > 0.0 {
        let bound = envelopes.oleinik_bound(t);
        for slope in grid.slopes(&state.n) {
            oleinik_violation = oleinik_violation.max(-slope - bound);
        }
    }
    Ok(BoundReport {
        t,
        number: quad(&state.n, 0.0, grid)?,
        sup_violation,
        oleinik_violation,
        n_eps: state.trace(),
        ..BoundReport::default()
    })
}

/// `∫ x^p |a − b| dx`.
pub fn weighted_l1(a: &State, b: &State, p: f64, grid: &Grid) -> Result<f64> {
    a.check_len(grid)?;
    b.check_len(grid)?;
    let d: Vec<f64> = a.n.iter().zip(&b.n).map(|(u, v)| (u - v).abs()).collect();
    quad(&d, p, grid)
}

/// `∫ x^p (a − b)₊ dx`.
pub fn weighted_positive_part(a: &State, b: &State, p: f64, grid: &Grid) -> Result<f64> {
    a.check_len(grid)?;
    b.check_len(grid)?;
    let d: Vec<f64> =
        a.n.iter()
            .zip(&b.n)
            .map(|(u, v)| (u - v).max(0.0))
            .collect();
    quad(&d, p, grid)
}

/// Largest relative photon-balance defect `|N(t) + ledger(t) − N(0)| / (1 + N(0))`.
pub fn photon_balance_error(traj: &Trajectory, grid: &Grid) -> Result<f64> {
    let n0 = quad(&traj.states[0].n, 0.0, grid)?;
    let mut worst = 0.0_f64;
    for (s, &l) in traj.states.iter().zip(&traj.ledger) {
        let n = quad(&s.n, 0.0, grid)?;
        worst = worst.max((n + l - n0).abs() / (1.0 + n0));
    }
    Ok(worst)
}

pub fn max_sup_violation(traj: &Trajectory) -> f64 {
    traj.reports
        .iter()
        .map(|r| r.sup_violation)
        .fold(0.0, f64::max)
}

pub fn max_oleinik_violation(traj: &Trajectory) -> f64 {
    traj.reports
        .iter()
        .map(|r| r.oleinik_violation)
        .fold(0.0, f64::max)
}

/// Largest super-solution and slope-bound violations over cells and
/// interfaces left of `x_max`, with envelopes taken from the first state.
/// Used for cut-off runs, whose equation differs from the plain one only on
/// `[1 − 2h, 1]`.
pub fn violations_left_of(traj: &Trajectory, grid: &Grid, x_max: f64) -> Result<(f64, f64)> {
    let Some(first) = traj.states.first() else {
        return Ok((0.0, 0.0));
    };
    let env = BoundEnvelopes::from_initial(first, grid);
    let cells = grid.centers().partition_point(|&x| x < x_max);
    let slopes = grid.interfaces()[1..grid.len()].partition_point(|&x| x < x_max);
    let (mut sup, mut oleinik) = (0.0_f64, 0.0_f64);
    for (s, &t) in traj.states.iter().zip(&traj.times) {
        if t + env.tau1 > 0.0 {
            for (&n, &x) in s.n[..cells].iter().zip(grid.centers()) {
                sup = sup.max(n - supersolution(x, t, env.tau1)?);
            }
        }
        if t + env.tau2 > 0.0 {
            let bound = env.oleinik_bound(t);
            for slope in grid.slopes(&s.n).into_iter().take(slopes) {
                oleinik = oleinik.max(-slope - bound);
            }
        }
    }
    Ok((sup, oleinik))
}

/// Most negative discrete slope over all output times (0 if none negative).
pub fn min_slope(traj: &Trajectory, grid: &Grid) -> f64 {
    traj.states
        .iter()
        .flat_map(|s| grid.slopes(&s.n))
        .fold(0.0, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContractionFlagKind {
    /// `d₊(t)` above the Gronwall envelope.
    Gronwall,
    /// `d(t)` increased (p = 0 only).
    Increase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionFlag {
    pub t: f64,
    pub kind: ContractionFlagKind,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub p: f64,
    pub times: Vec<f64>,
    /// `∫ x^p |a − b|`
    pub distance: Vec<f64>,
    /// `∫ x^p (a − b)₊`
    pub positive_part: Vec<f64>,
    /// `e^{c_p t} d₊(0)`
    pub envelope: Vec<f64>,
    pub flags: Vec<ContractionFlag>,
    /// Largest step-to-step increase of `d` (0 if nonincreasing).
    pub max_increase: f64,
    /// `d(t_end)/d(0)` when the initial states cross.
    pub crossing_ratio: Option<f64>,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Weighted-L¹ stability between two trajectories on the same grid and
/// output times.
pub fn check_contraction(
    a: &Trajectory,
    b: &Trajectory,
    p: f64,
    grid: &Grid,
    tol: f64,
) -> Result<ContractionReport> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::TrajectoryMismatch(format!(
            "{} vs {} output times",
            a.len(),
            b.len()
        )));
    }
    if a.times.iter().zip(&b.times).any(|(s, t)| s != t) {
        return Err(Error::TrajectoryMismatch("output times differ".into()));
    }
    let c_p = gronwall_constant(p);
    let mut distance = Vec::with_capacity(a.len());
    let mut positive_part = Vec::with_capacity(a.len());
    for (sa, sb) in a.states.iter().zip(&b.states) {
        distance.push(weighted_l1(sa, sb, p, grid)?);
        positive_part.push(weighted_positive_part(sa, sb, p, grid)?);
    }
    let envelope: Vec<f64> = a
        .times
        .iter()
        .map(|&t| (c_p * t).exp() * positive_part[0])
        .collect();

    let mut flags = Vec::new();
    for k in 0..a.len() {
        let limit = if positive_part[0] > 0.0 {
            envelope[k] * (1.0 + tol)
        } else {
            tol
        };
        if positive_part[k] > limit {
            flags.push(ContractionFlag {
                t: a.times[k],
                kind: ContractionFlagKind::Gronwall,
                amount: positive_part[k] - envelope[k],
            });
        }
    }
    let mut max_increase = 0.0_f64;
    for k in 1..a.len() {
        let inc = distance[k] - distance[k - 1];
        max_increase = max_increase.max(inc);
        if p == 0.0 && inc > tol {
            flags.push(ContractionFlag {
                t: a.times[k],
                kind: ContractionFlagKind::Increase,
                amount: inc,
            });
        }
    }
    let (a0, b0) = (&a.states[0].n, &b.states[0].n);
    let above = a0.iter().zip(b0).any(|(u, v)| u > v);
    let below = a0.iter().zip(b0).any(|(u, v)| u < v);
    let crossing_ratio =
        (above && below && distance[0] > 0.0).then(|| distance[distance.len() - 1] / distance[0]);

    Ok(ContractionReport {
        p,
        times: a.times.clone(),
        distance,
        positive_part,
        envelope,
        flags,
        max_increase,
        crossing_ratio,
    })
}

/// `∫ n² + ∫ x² (∂x n)²` with the scheme's interface slopes.
pub fn dissipation_density(n: &[f64], grid: &Grid) -> f64 {
    let mut total = energy(n, grid);
    let ifs = grid.interfaces();
    for j in 1..grid.len() {
        let gap = grid.center_gap(j);
        let slope = (n[j] - n[j - 1]) / gap;
        total += gap * ifs[j] * ifs[j] * slope * slope;
    }
    total
}

/// Slack of the energy inequality between output indices `s < t`:
///
/// ```text
/// ∫n²(s) + (8/3)(t − s) − ∫n²(t) − ∫_s^t ∫ [n² + x² (∂x n)²]
/// ```
///
/// The dissipation integral uses the solver's per-step accumulation when the
/// trajectory carries it, and the trapezoid rule over output states otherwise.
pub fn check_energy(traj: &Trajectory, s: usize, t: usize, grid: &Grid) -> Result<f64> {
    if s >= t || t >= traj.len() {
        return Err(Error::InvalidParameter(format!(
            "energy check needs s < t < {}, got s = {s}, t = {t}",
            traj.len()
        )));
    }
    let (ts, tt) = (traj.times[s], traj.times[t]);
    let dissipated = if traj.dissipation.len() == traj.len() {
        traj.dissipation[t] - traj.dissipation[s]
    } else {
        (s..t)
            .map(|k| {
                let h = traj.times[k + 1] - traj.times[k];
                0.5 * h
                    * (dissipation_density(&traj.states[k].n, grid)
                        + dissipation_density(&traj.states[k + 1].n, grid))
            })
            .sum()
    };
    Ok(energy(&traj.states[s].n, grid) + 8.0 / 3.0 * (tt - ts)
        - energy(&traj.states[t].n, grid)
        - dissipated)
}

/// Smallest energy slack over all output pairs `s < t`.
pub fn min_energy_slack(traj: &Trajectory, grid: &Grid) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for s in 0..traj.len() {
        for t in s + 1..traj.len() {
            worst = worst.min(check_energy(traj, s, t, grid)?);
        }
    }
    Ok(if worst.is_finite() { worst } else { 0.0 })
}

/// First output time at which the trace exceeds `threshold`.
pub fn onset_detect(traj: &Trajectory, threshold: f64) -> Option<f64> {
    traj.states
        .iter()
        .zip(&traj.times)
        .find(|(s, _)| s.trace() > threshold)
        .map(|(_, &t)| t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceReport {
    pub t_star: f64,
    pub n0_star: f64,
    /// Smallest `trace − floor` after onset.
    pub min_margin: f64,
    /// Output times with `trace < floor − tol`.
    pub violations: Vec<f64>,
}

impl PersistenceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `n(ε, t) ≥ b(t) x̂ − tol` after the first positive output time at
/// which the trace exceeds `threshold`.
pub fn check_persistence(traj: &Trajectory, threshold: f64, tol: f64) -> Result<PersistenceReport> {
    let onset = traj
        .states
        .iter()
        .zip(&traj.times)
        .position(|(s, &t)| t > 0.0 && s.trace() > threshold)
        .ok_or(Error::NoOnset)?;
    let t_star = traj.times[onset];
    let n0_star = traj.states[onset].trace();
    let mut min_margin = f64::INFINITY;
    let mut violations = Vec::new();
    for k in onset..traj.len() {
        let floor = persistence_floor(traj.times[k], t_star, n0_star)?;
        let margin = traj.states[k].trace() - floor;
        min_margin = min_margin.min(margin);
        if margin < -tol {
            violations.push(traj.times[k]);
        }
    }
    Ok(PersistenceReport {
        t_star,
        n0_star,
        min_margin,
        violations,
    })
}

/// Entropy increases beyond `tol` between consecutive reports. The entropy
/// dissipation inequality is a soft check, so these are warnings.
pub fn entropy_increases(traj: &Trajectory, tol: f64) -> Vec<f64> {
    traj.reports
        .windows(2)
        .filter(|w| w[1].entropy > w[0].entropy + tol)
        .map(|w| w[1].t)
        .collect()
}
