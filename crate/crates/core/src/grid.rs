//! Cell-centred mesh on `[ε, 1]`.
//!
//! States live at cell centres and fluxes at interfaces. With `grading > 1`
//! the widths grow geometrically away from `ε`, where the diffusion
//! coefficient `x²` degenerates.

use crate::error::{invalid, Error, Result};

pub const MIN_CELLS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    epsilon: f64,
    grading: f64,
    interfaces: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
}

/// Builds the mesh. Widths are taken as differences of the interfaces so that
/// they telescope to `1 − ε`.
pub fn build_grid(epsilon: f64, cells: usize, grading: f64) -> Result<Grid> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if cells < MIN_CELLS {
        return Err(invalid(format!(
            "need at least {MIN_CELLS} cells, got {cells}"
        )));
    }
    if !(grading >= 1.0 && grading.is_finite()) {
        return Err(invalid(format!("grading must be >= 1, got {grading}")));
    }

    let length = 1.0 - epsilon;
    let mut interfaces = Vec::with_capacity(cells + 1);
    interfaces.push(epsilon);
    if grading == 1.0 {
        for i in 1..cells {
            interfaces.push(epsilon + length * i as f64 / cells as f64);
        }
    } else {
        // Δx_i = Δx_0 r^i, Σ Δx_i = 1 − ε
        let total = (grading.powi(cells as i32) - 1.0) / (grading - 1.0);
        let first = length / total;
        let mut acc = 0.0;
        let mut w = first;
        for _ in 1..cells {
            acc += w;
            interfaces.push(epsilon + acc);
            w *= grading;
        }
    }
    interfaces.push(1.0);

    if interfaces.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            "cells too small to resolve: interfaces not strictly increasing",
        ));
    }

    let widths = interfaces.windows(2).map(|w| w[1] - w[0]).collect();
    let centers = interfaces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(Grid {
        epsilon,
        grading,
        interfaces,
        centers,
        widths,
    })
}

impl Grid {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_width(&self) -> f64 {
        self.widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Distance between the centres adjacent to interior interface `j`
    /// (`1 <= j < len`).
    pub fn center_gap(&self, j: usize) -> f64 {
        self.centers[j] - self.centers[j - 1]
    }

    /// Discrete slopes at the interior interfaces, `(n_j − n_{j−1}) / gap_j`
    /// for `j = 1..len`.
    pub fn slopes(&self, values: &[f64]) -> Vec<f64> {
        (1..self.len())
            .map(|j| (values[j] - values[j - 1]) / self.center_gap(j))
            .collect()
    }

    /// Midpoint rule for `∫_ε^1 x^p n dx` with per-cell samples.
    pub fn quad(&self, values: &[f64], p: f64) -> Result<f64> {
        quad(values, p, self)
    }
}

/// Midpoint rule for `∫_ε^1 x^p n(x) dx`.
pub fn quad(values: &[f64], weight_exponent: f64, grid: &Grid) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            actual: values.len(),
        });
    }
    if !(weight_exponent >= 0.0) {
        return Err(invalid(format!(
            "weight exponent must be >= 0, got {weight_exponent}"
        )));
    }
    let sum = if weight_exponent == 0.0 {
        values.iter().zip(&grid.widths).map(|(n, w)| n * w).sum()
    } else {
        values
            .iter()
            .zip(&grid.widths)
            .zip(&grid.centers)
            .map(|((n, w), x)| x.powf(weight_exponent) * n * w)
            .sum()
    };
    Ok(sum)
}

/// `∫ x^p |a − b| dx` between two piecewise-constant functions on different
/// meshes, over the overlap of their supports. The integral is split on the
/// union of both interface sets and each piece uses the midpoint weight.
pub fn l1_between(ga: &Grid, a: &[f64], gb: &Grid, b: &[f64], p: f64) -> Result<f64> {
    for (g, v) in [(ga, a), (gb, b)] {
        if v.len() != g.len() {
            return Err(Error::LengthMismatch {
                expected: g.len(),
                actual: v.len(),
            });
        }
    }
    let lo = ga.epsilon.max(gb.epsilon);
    let (ia, ib) = (&ga.interfaces, &gb.interfaces);
    let mut i = ia.partition_point(|&x| x <= lo).saturating_sub(1);
    let mut k = ib.partition_point(|&x| x <= lo).saturating_sub(1);
    let mut left = lo;
    let mut total = 0.0;
    while i < ga.len() && k < gb.len() {
        let right = ia[i + 1].min(ib[k + 1]);
        if right > left {
            let mid = 0.5 * (left + right);
            let w = if p == 0.0 { 1.0 } else { mid.powf(p) };
            total += w * (a[i] - b[k]).abs() * (right - left);
        }
        left = right;
        if ia[i + 1] <= right {
            i += 1;
        }
        if ib[k + 1] <= right {
            k += 1;
        }
    }
    Ok(total)
}
