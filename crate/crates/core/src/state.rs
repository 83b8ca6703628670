use crate::error::{Error, Result};
use crate::grid::Grid;

/// Cell-averaged density at a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub n: Vec<f64>,
}

impl State {
    pub fn new(t: f64, n: Vec<f64>) -> Self {
        Self { t, n }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::new(0.0, vec![0.0; grid.len()])
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::new(0.0, grid.centers().iter().map(|&x| f(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// First-cell value, the discrete trace n(ε, t).
    pub fn trace(&self) -> f64 {
        self.n.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.n.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn check_len(&self, grid: &Grid) -> Result<()> {
        if self.n.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: self.n.len(),
            });
        }
        Ok(())
    }
}
