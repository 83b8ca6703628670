//! Identification of the large-time limit `n_μ = x²/(x + μ)`.
//!
//! Two independent estimates of μ are always produced: inverting the photon
//! number relation, and fitting the profile through `g(x) = x − x²/n`, which
//! is the constant `−μ` on an equilibrium. Their discrepancy is reported with
//! every fit.

use serde::Serialize;

use crate::diagnostics::weighted_l1;
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::model::{equilibrium_density, solve_mu};
use crate::solver::Trajectory;
use crate::state::State;

/// Default density below which cells are left out of the profile fit.
pub const DEFAULT_FIT_FLOOR: f64 = 1e-6;

/// Weighted spread of `g + μ` below which a state counts as equilibrated.
pub const PROFILE_SPREAD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Number,
    Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumFit {
    pub mu_from_number: f64,
    pub mu_from_profile: f64,
    /// Weighted standard deviation of `g(x) + μ_profile`.
    pub profile_spread: f64,
    pub selected: Estimator,
    pub mu: f64,
    /// `|mu_from_number − mu_from_profile|`
    pub discrepancy: f64,
    /// `∫ |n − n_μ|` for the selected μ.
    pub residual_l1: f64,
}

/// Samples of `n_μ` on the grid.
pub fn equilibrium_state(mu: f64, grid: &Grid) -> Result<State> {
    let n = grid
        .centers()
        .iter()
        .map(|&x| equilibrium_density(mu, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(State::new(0.0, n))
}

/// Fits μ to a (near-)stationary state.
///
/// The profile estimate is the weighted mean of `−g(x_i)` over cells with
/// `n_i > floor`, weights `Δx_i n_i`. The number estimate is preferred when
/// the profile is flat (spread below [`PROFILE_SPREAD`]), otherwise the
/// profile estimate is used.
pub fn fit(final_state: &State, number: f64, grid: &Grid, floor: f64) -> Result<EquilibriumFit> {
    final_state.check_len(grid)?;
    if !(floor > 0.0) {
        return Err(invalid(format!("fit floor must be > 0, got {floor}")));
    }
    if !(number > 0.0) {
        return Err(invalid(format!("photon number must be > 0, got {number}")));
    }
    let mu_from_number = solve_mu(number.min(0.5))?;

    let mut wsum = 0.0;
    let mut gsum = 0.0;
    let mut samples = Vec::new();
    for ((&n, &x), &w) in final_state.n.iter().zip(grid.centers()).zip(grid.widths()) {
        if n > floor {
            let g = x - x * x / n;
            let weight = w * n;
            wsum += weight;
            gsum += weight * g;
            samples.push((weight, g));
        }
    }
    if samples.is_empty() {
        return Err(Error::Vacuum);
    }
    let mean = gsum / wsum;
    let spread = (samples
        .iter()
        .map(|(w, g)| w * (g - mean) * (g - mean))
        .sum::<f64>()
        / wsum)
        .sqrt();
    let mu_from_profile = (-mean).max(0.0);

    let (selected, mu) = if spread <= PROFILE_SPREAD {
        (Estimator::Number, mu_from_number)
    } else {
        (Estimator::Profile, mu_from_profile)
    };
    let target = equilibrium_state(mu, grid)?;
    Ok(EquilibriumFit {
        mu_from_number,
        mu_from_profile,
        profile_spread: spread,
        selected,
        mu,
        discrepancy: (mu_from_number - mu_from_profile).abs(),
        residual_l1: weighted_l1(final_state, &target, 0.0, grid)?,
    })
}

/// First output time at which `∫ |n − n_μ| < tol` for the fitted μ.
pub fn convergence_time(
    traj: &Trajectory,
    fit: &EquilibriumFit,
    tol: f64,
    grid: &Grid,
) -> Result<Option<f64>> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be > 0, got {tol}")));
    }
    let target = equilibrium_state(fit.mu, grid)?;
    for (s, &t) in traj.states.iter().zip(&traj.times) {
        if weighted_l1(s, &target, 0.0, grid)? < tol {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// `1/t + 2/√t`, the pointwise bound on `|n − x|` for data dominating `x`.
pub fn dominating_envelope(t: f64) -> f64 {
    1.0 / t + 2.0 / t.sqrt()
}

/// Largest excess of `max |n − x|` over the dominating-data envelope, across
/// positive output times (0 when the envelope holds everywhere).
pub fn dominating_envelope_excess(traj: &Trajectory, grid: &Grid) -> f64 {
    traj.states
        .iter()
        .zip(&traj.times)
        .filter(|(_, &t)| t > 0.0)
        .map(|(s, &t)| {
            let dev =
                s.n.iter()
                    .zip(grid.centers())
                    .map(|(n, x)| (n - x).abs())
                    .fold(0.0, f64::max);
            (dev - dominating_envelope(t)).max(0.0)
        })
        .fold(0.0, f64::max)
}
