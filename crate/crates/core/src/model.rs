//! Closed-form pieces of the model: fluxes, equilibria `x²/(x+μ)`, bound
//! envelopes and the constants that appear in the stability and condensation
//! estimates.
//!
//! Sign convention throughout: `∂t n = ∂x J`, so a positive flux at the left
//! boundary carries mass out of the domain.

use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::state::State;

/// Switch-over to the large-μ series in [`equilibrium_number`].
pub const SERIES_MU: f64 = 4.0;

/// Relative bisection tolerance on μ in [`solve_mu`].
pub const MU_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Mollifier kernel
// ---------------------------------------------------------------------------

/// Unnormalised bump `exp(−1/(1−u²))` on `(−1, 1)`.
fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

const CHI_PANELS: usize = 4096;

struct ChiTable {
    mass: f64,
    // cumulative unnormalised integral at the panel edges
    cumulative: Vec<f64>,
}

fn chi_table() -> &'static ChiTable {
    static TABLE: OnceLock<ChiTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        // three-point Gauss-Legendre on each panel
        let nodes = [-(0.6_f64).sqrt(), 0.0, (0.6_f64).sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let h = 2.0 / CHI_PANELS as f64;
        let mut cumulative = Vec::with_capacity(CHI_PANELS + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..CHI_PANELS {
            let mid = -1.0 + (k as f64 + 0.5) * h;
            let panel: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(t, w)| w * bump(mid + 0.5 * h * t))
                .sum();
            acc += 0.5 * h * panel;
            cumulative.push(acc);
        }
        ChiTable {
            mass: acc,
            cumulative,
        }
    })
}

/// Normalised kernel ρ: smooth, nonnegative, supported in `(−1, 1)`, unit mass.
pub fn mollifier(u: f64) -> f64 {
    bump(u) / chi_table().mass
}

/// `ρ_κ(u) = ρ(u/κ)/κ`.
pub fn mollifier_scaled(u: f64, kappa: f64) -> f64 {
    mollifier(u / kappa) / kappa
}

/// Smooth step `χ(z) = ∫_{−∞}^z ρ`: 0 for `z ≤ −1`, 1 for `z ≥ 1`.
///
/// Tabulated once and evaluated by cubic Hermite interpolation, using ρ as
/// the exact derivative at the table nodes.
pub fn smooth_step(z: f64) -> f64 {
    if z <= -1.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let table = chi_table();
    let h = 2.0 / CHI_PANELS as f64;
    let s = (z + 1.0) / h;
    let k = (s.floor() as usize).min(CHI_PANELS - 1);
    let t = s - k as f64;
    let x0 = -1.0 + k as f64 * h;
    let (y0, y1) = (table.cumulative[k], table.cumulative[k + 1]);
    let (d0, d1) = (bump(x0), bump(x0 + h));
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    (v / table.mass).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Fluxes
// ---------------------------------------------------------------------------

/// Rusanov (local Lax-Friedrichs) interface flux for the convective part
/// `g(n, x) = n² − 2xn + (3n − n²) χ`, with `χ = 0` outside cut-off mode.
#[inline]
pub fn convective_flux(n_left: f64, n_right: f64, x: f64, chi: f64) -> f64 {
    let g = |n: f64| n * n * (1.0 - chi) + n * (3.0 * chi - 2.0 * x);
    let speed = |n: f64| (2.0 * n * (1.0 - chi) + 3.0 * chi - 2.0 * x).abs();
    let alpha = speed(n_left).max(speed(n_right));
    0.5 * (g(n_left) + g(n_right)) + 0.5 * alpha * (n_right - n_left)
}

/// Interface flux `J = x² ∂x n + n² − 2xn` with the convective part upwinded.
pub fn flux_model(n_left: f64, n_right: f64, x: f64, dn_dx: f64) -> f64 {
    x * x * dn_dx + convective_flux(n_left, n_right, x, 0.0)
}

/// Pointwise cut-off flux `J_h = x² ∂x n − 2xn + n² + (3n − n²) χ_h(x)`.
pub fn cutoff_flux(n: f64, dn_dx: f64, x: f64, profile: &CutoffProfile) -> f64 {
    x * x * dn_dx - 2.0 * x * n + n * n + (3.0 * n - n * n) * profile.chi(x)
}

/// Pointwise un-cut flux `x² ∂x n − 2xn + n²`.
pub fn pointwise_flux(n: f64, dn_dx: f64, x: f64) -> f64 {
    x * x * dn_dx - 2.0 * x * n + n * n
}

/// `χ_h(x) = χ(1 + (x − 1)/h)`; vanishes left of `1 − 2h`, equals 1 at `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    h: f64,
}

impl CutoffProfile {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 0.5) {
            return Err(invalid(format!(
                "cut-off width must lie in (0, 0.5), got {h}"
            )));
        }
        Ok(Self { h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Left edge of the strip where the cut-off is active.
    pub fn strip_start(&self) -> f64 {
        1.0 - 2.0 * self.h
    }

    pub fn chi(&self, x: f64) -> f64 {
        smooth_step(1.0 + (x - 1.0) / self.h)
    }
}

// ---------------------------------------------------------------------------
// Envelopes and closed forms
// ---------------------------------------------------------------------------

/// Time shifts for the super-solution and the one-sided slope bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEnvelopes {
    /// `S(x, t + τ₁)` dominates the solution; `τ₁ = 4/‖n_in‖∞²`.
    pub tau1: f64,
    /// `∂x n ≥ −4/(t + τ₂)`; `τ₂ = ∞` for nondecreasing data.
    pub tau2: f64,
}

impl BoundEnvelopes {
    pub fn new(sup: f64, min_slope: f64) -> Self {
        let tau1 = if sup > 0.0 {
            4.0 / (sup * sup)
        } else {
            f64::INFINITY
        };
        let steepest = (-min_slope).max(0.0);
        let tau2 = if steepest > 0.0 {
            4.0 / steepest
        } else {
            f64::INFINITY
        };
        Self { tau1, tau2 }
    }

    /// Envelopes of discrete initial data.
    pub fn from_initial(initial: &State, grid: &Grid) -> Self {
        let min_slope = grid
            .slopes(&initial.n)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        Self::new(initial.max(), min_slope)
    }

    /// `4/(t + τ₂)`, infinite at `t + τ₂ = 0`.
    pub fn oleinik_bound(&self, t: f64) -> f64 {
        if self.tau2.is_infinite() {
            0.0
        } else {
            4.0 / (t + self.tau2)
        }
    }
}

/// `S(x, t) = x + (1 − x)/t + 2/√t`, evaluated at `t + τ₁`.
pub fn supersolution(x: f64, t: f64, tau1: f64) -> Result<f64> {
    if tau1.is_infinite() && tau1 > 0.0 {
        return Ok(x);
    }
    let s = t + tau1;
    if !(s > 0.0) {
        return Err(invalid(format!("shifted time must be positive, got {s}")));
    }
    Ok(x + (1.0 - x) / s + 2.0 / s.sqrt())
}

/// `n_μ(x) = x²/(x + μ)`.
pub fn equilibrium_density(mu: f64, x: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(invalid(format!("mu must be >= 0, got {mu}")));
    }
    if mu == 0.0 {
        return Ok(x);
    }
    Ok(x * x / (x + mu))
}

/// Photon number of the equilibrium, `½ − μ + μ² log(1 + 1/μ)`.
///
/// For `μ ≥ SERIES_MU` the closed form cancels badly; the alternating series
/// `Σ_{k≥3} (−1)^{k+1} μ^{2−k}/k` is summed to machine precision instead.
pub fn equilibrium_number(mu: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(invalid(format!("mu must be >= 0, got {mu}")));
    }
    if mu == 0.0 {
        return Ok(0.5);
    }
    if mu.is_infinite() {
        return Ok(0.0);
    }
    if mu < SERIES_MU {
        return Ok(0.5 - mu + mu * mu * (1.0 / mu).ln_1p());
    }
    let q = -1.0 / mu;
    let mut power = 1.0 / mu; // (−1)^{k+1} μ^{2−k} at k = 3
    let mut sum = 0.0;
    for k in 3..200 {
        let term = power / k as f64;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        power *= q;
    }
    Ok(sum)
}

/// Inverts [`equilibrium_number`] by bisection on the decreasing map.
pub fn solve_mu(number: f64) -> Result<f64> {
    if !(number > 0.0) {
        return Err(invalid(format!("photon number must be > 0, got {number}")));
    }
    if number > 0.5 {
        return Err(Error::NoEquilibrium(number));
    }
    if number == 0.5 {
        return Ok(0.0);
    }
    let f = |mu: f64| equilibrium_number(mu).expect("mu >= 0");
    let mut hi = 1.0;
    while f(hi) > number {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(invalid(format!(
                "photon number {number} too small to invert"
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > MU_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > number {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Time after which condensation is guaranteed for data with more than ½
/// photons: `t* = 1/(4(√(1+δ) − 1)²)`, `δ = (N − ½)/2`.
pub fn onset_time_bound(initial_number: f64) -> Result<f64> {
    if !(initial_number > 0.5) {
        return Err(invalid(format!(
            "no onset guarantee for photon number {initial_number} <= 1/2"
        )));
    }
    let delta = 0.5 * (initial_number - 0.5);
    let gap = (1.0 + delta).sqrt() - 1.0;
    Ok(1.0 / (4.0 * gap * gap))
}

/// Lower bound `b(t) x̂` on the trace after onset at `t*` with trace `n*`.
pub fn persistence_floor(t: f64, t_star: f64, n0_star: f64) -> Result<f64> {
    if !(t_star > 0.0) {
        return Err(invalid(format!("onset time must be > 0, got {t_star}")));
    }
    if !(t >= t_star) {
        return Err(invalid(format!("t = {t} precedes onset {t_star}")));
    }
    if !(n0_star > 0.0) {
        return Err(invalid(format!("onset trace must be > 0, got {n0_star}")));
    }
    let b = 1.0 / ((1.0 + 0.25 * t_star) * (2.0 * (t - t_star)).exp() - 1.0);
    let x_hat = (0.25 * t_star * n0_star).min(1.0);
    Ok(b * x_hat)
}

/// Growth rate `c_p = p(p + 3)` of the weighted-L¹ stability estimate.
pub fn gronwall_constant(p: f64) -> f64 {
    p * (p + 3.0)
}

/// `H[n] = ∫ (x n − x² log n) dx` with `n` clamped below by `floor`. The
/// default floor is `1e-30 · max n`.
pub fn entropy(state: &State, grid: &Grid, floor: Option<f64>) -> Result<f64> {
    state.check_len(grid)?;
    let floor = floor.unwrap_or(1e-30 * state.max()).max(f64::MIN_POSITIVE);
    Ok(state
        .n
        .iter()
        .zip(grid.centers())
        .zip(grid.widths())
        .map(|((&n, &x), &w)| w * (x * n - x * x * n.max(floor).ln()))
        .sum())
}
