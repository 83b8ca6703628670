//! Initial data: analytic families, a tabulated family read from CSV, the
//! mollified regularisation with prescribed endpoint laws, and data adjusted
//! so that the cut-off flux matches the plain flux at `t = 0`.

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::model::{mollifier_scaled, smooth_step, CutoffProfile};
use crate::state::State;

/// Midpoint sub-points per κ-width in the mollification integral.
pub const MOLLIFY_SUBPOINTS: usize = 32;

/// RK4 sub-steps per grid interval when building cut-off compatible data.
pub const CUTOFF_SUBSTEPS: usize = 16;

/// Values above this (or non-finite) during the cut-off ODE count as blow-up.
const BLOW_UP: f64 = 1e8;

/// Piecewise-linear tabulated density.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    ns: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ns: Vec<f64>) -> Result<Self> {
        if xs.len() != ns.len() {
            return Err(Error::LengthMismatch {
                expected: xs.len(),
                actual: ns.len(),
            });
        }
        if xs.len() < 2 {
            return Err(Error::Table("need at least two rows".into()));
        }
        if let Some(i) = xs.iter().chain(&ns).position(|v| !v.is_finite()) {
            return Err(Error::Table(format!("non-finite value (entry {i})")));
        }
        if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Table(format!(
                "x must be strictly increasing (rows {} and {})",
                i + 1,
                i + 2
            )));
        }
        if let Some(i) = ns.iter().position(|&n| n < 0.0) {
            return Err(Error::Table(format!("negative density in row {}", i + 1)));
        }
        Ok(Self { xs, ns })
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Linear interpolation; the caller checks coverage.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|&v| v <= x);
        if k == 0 {
            return self.ns[0];
        }
        if k == self.xs.len() {
            return self.ns[k - 1];
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let w = (x - x0) / (x1 - x0);
        self.ns[k - 1] * (1.0 - w) + self.ns[k] * w
    }

    fn covers(&self, lo: f64, hi: f64) -> Result<()> {
        let (table_lo, table_hi) = self.x_range();
        if table_lo > lo || table_hi < hi {
            return Err(Error::TableCoverage {
                lo,
                hi,
                table_lo,
                table_hi,
            });
        }
        Ok(())
    }
}

/// Parses a two-column CSV `x,n` with a header row.
pub fn parse_table_csv(input: &[u8]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Table(e.to_string()))?
        .clone();
    if headers.len() != 2 {
        return Err(Error::Table(format!(
            "expected 2 columns (x, n), found {}",
            headers.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ns = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Table(e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::Table(format!("row {}: expected 2 fields", row + 1)));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Table(format!("row {}: {s:?}: {e}", row + 1)))
        };
        xs.push(parse(&record[0])?);
        ns.push(parse(&record[1])?);
    }
    Table::new(xs, ns)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Constant(f64),
    /// `a x`
    LinearMultiple(f64),
    /// `a x²/(x + μ)`
    ScaledEquilibrium {
        a: f64,
        mu: f64,
    },
    /// Smooth bump `height · exp(1 − 1/(1 − u²))`, `u = (x − center)/width`.
    Bump {
        center: f64,
        width: f64,
        height: f64,
    },
    Table(Table),
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        match self {
            Family::Constant(c) => nonneg("constant", *c),
            Family::LinearMultiple(a) => nonneg("slope", *a),
            Family::ScaledEquilibrium { a, mu } => {
                nonneg("scale", *a)?;
                nonneg("mu", *mu)
            }
            Family::Bump {
                center,
                width,
                height,
            } => {
                nonneg("height", *height)?;
                if !(*width > 0.0 && width.is_finite() && center.is_finite()) {
                    return Err(invalid("bump needs finite center and width > 0"));
                }
                Ok(())
            }
            Family::Table(_) => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Family::Constant(c) => *c,
            Family::LinearMultiple(a) => a * x,
            Family::ScaledEquilibrium { a, mu } => a * x * x / (x + mu),
            Family::Bump {
                center,
                width,
                height,
            } => {
                let u = (x - center) / width;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - 1.0 / (1.0 - u * u)).exp()
                }
            }
            Family::Table(t) => t.eval(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    pub family: Family,
    /// Mollification parameter κ ∈ (0, 0.1].
    pub kappa: f64,
    /// Admissibility weight exponent: `x^p n_in` integrable.
    pub p: f64,
}

impl InitialSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            kappa: 0.05,
            p: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if !(self.kappa > 0.0 && self.kappa <= 0.1) {
            return Err(invalid(format!(
                "kappa must lie in (0, 0.1], got {}",
                self.kappa
            )));
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(invalid(format!("p must be >= 0, got {}", self.p)));
        }
        Ok(())
    }
}

/// Pointwise samples of the raw family at the cell centres.
pub fn sample_raw(spec: &InitialSpec, grid: &Grid) -> Result<State> {
    spec.validate()?;
    if let Family::Table(t) = &spec.family {
        t.covers(grid.epsilon(), 1.0)?;
    }
    Ok(State::from_fn(grid, |x| spec.family.eval(x)))
}

/// Midpoint lattice on `[2κ, 1 − 2κ]` used by the mollification integral.
struct MollifyLattice {
    start: f64,
    step: f64,
    count: usize,
}

impl MollifyLattice {
    fn new(kappa: f64) -> Self {
        let (start, end) = (2.0 * kappa, 1.0 - 2.0 * kappa);
        let target = kappa / MOLLIFY_SUBPOINTS as f64;
        let count = ((end - start) / target).ceil() as usize;
        Self {
            start,
            step: (end - start) / count as f64,
            count,
        }
    }

    fn node(&self, k: usize) -> f64 {
        self.start + (k as f64 + 0.5) * self.step
    }
}

fn mollified_value(spec: &InitialSpec, lattice: &MollifyLattice, x: f64) -> f64 {
    let kappa = spec.kappa;
    // lattice nodes inside (x − κ, x + κ)
    let lo = ((x - kappa - lattice.start) / lattice.step - 0.5)
        .floor()
        .max(0.0) as usize;
    let hi = (((x + kappa - lattice.start) / lattice.step - 0.5)
        .ceil()
        .max(0.0) as usize)
        .min(lattice.count);
    let mut integral = 0.0;
    for k in lo..hi {
        let y = lattice.node(k);
        let w = mollifier_scaled(x - y, kappa);
        if w > 0.0 {
            integral += w * y.powf(spec.p) * spec.family.eval(y);
        }
    }
    integral *= lattice.step;
    let tail = kappa * x * x / (1.0 + kappa * x * smooth_step(4.0 * x - 2.0));
    integral / x.powf(spec.p) + tail
}

/// The mollified datum `n_κ` at a single point `x ∈ (0, 1]`.
pub fn mollify_at(spec: &InitialSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(invalid(format!("x must lie in (0, 1], got {x}")));
    }
    if let Family::Table(t) = &spec.family {
        t.covers(2.0 * spec.kappa, 1.0 - 2.0 * spec.kappa)?;
    }
    Ok(mollified_value(spec, &MollifyLattice::new(spec.kappa), x))
}

/// Mollified initial data at the cell centres:
///
/// ```text
/// x^p n_κ(x) = ∫_{2κ}^{1−2κ} ρ_κ(x−y) y^p n_in(y) dy + κ x^{2+p} / (1 + κx χ(4x−2))
/// ```
///
/// so that `n_κ = κx²` below `κ` and `n_κ = κx²/(κx+1)` above `1 − κ`.
pub fn mollify(spec: &InitialSpec, grid: &Grid) -> Result<State> {
    spec.validate()?;
    if let Family::Table(t) = &spec.family {
        t.covers(2.0 * spec.kappa, 1.0 - 2.0 * spec.kappa)?;
    }
    let lattice = MollifyLattice::new(spec.kappa);
    Ok(State::from_fn(grid, |x| mollified_value(spec, &lattice, x)))
}

/// Second-order slopes at the cell centres (one-sided at the ends).
pub fn center_slopes(xs: &[f64], ns: &[f64]) -> Vec<f64> {
    let m = xs.len();
    if m < 3 {
        return vec![
            if m == 2 {
                (ns[1] - ns[0]) / (xs[1] - xs[0])
            } else {
                0.0
            };
            m
        ];
    }
    // derivative at xs[at] of the parabola through points i, i+1, i+2
    let parabola = |i: usize, at: usize| {
        let (x0, x1, x2) = (xs[i], xs[i + 1], xs[i + 2]);
        let x = xs[at];
        let l0 = (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
        l0 * ns[i] + l1 * ns[i + 1] + l2 * ns[i + 2]
    };
    let mut out = Vec::with_capacity(m);
    out.push(parabola(0, 0));
    for i in 1..m - 1 {
        out.push(parabola(i - 1, i));
    }
    out.push(parabola(m - 3, m - 1));
    out
}

/// Initial data for cut-off mode together with the dense ODE solution on
/// the strip, kept so the flux matching can be audited.
#[derive(Debug, Clone)]
pub struct CutoffInitial {
    pub state: State,
    /// `n_h(1)`, from continuing the ODE to the right boundary.
    pub endpoint: f64,
    /// Dense solution, one block of `CUTOFF_SUBSTEPS + 1` nodes per interval.
    blocks: Vec<DenseBlock>,
}

#[derive(Debug, Clone)]
struct DenseBlock {
    x: Vec<f64>,
    n: Vec<f64>,
    target: Vec<f64>,
}

impl CutoffInitial {
    /// Largest `|J_h(n_h) − J_target|` on the dense nodes, with `∂x n_h` from
    /// a five-point difference of the ODE solution.
    pub fn flux_matching_residual(&self, profile: &CutoffProfile) -> f64 {
        let mut worst = 0.0_f64;
        for b in &self.blocks {
            let len = b.x.len();
            for j in 2..len.saturating_sub(2) {
                let step = b.x[j + 1] - b.x[j];
                let dn =
                    (b.n[j - 2] - 8.0 * b.n[j - 1] + 8.0 * b.n[j + 1] - b.n[j + 2]) / (12.0 * step);
                let jh = crate::model::cutoff_flux(b.n[j], dn, b.x[j], profile);
                worst = worst.max((jh - b.target[j]).abs());
            }
        }
        worst
    }

    pub fn strip_is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Replaces the data on `[1 − 2h, 1]` by the solution of
/// `x² n' = J_target + 2xn − n² − (3n − n²) χ_h` so that the cut-off flux of
/// the result equals the plain flux of the input. `J_target` is built from
/// second-order centre slopes and interpolated linearly between centres; the
/// ODE is stepped with classical RK4 from the last centre left of the strip.
pub fn cutoff_compatible(
    state: &State,
    profile: &CutoffProfile,
    grid: &Grid,
) -> Result<CutoffInitial> {
    state.check_len(grid)?;
    let xs = grid.centers();
    let m = xs.len();
    let first = xs.partition_point(|&x| x < profile.strip_start());
    if first == m {
        return Ok(CutoffInitial {
            state: state.clone(),
            endpoint: state.n[m - 1],
            blocks: Vec::new(),
        });
    }
    if first == 0 {
        return Err(invalid(format!(
            "cut-off strip [{}, 1] covers the whole grid",
            profile.strip_start()
        )));
    }

    let slopes = center_slopes(xs, &state.n);
    let target: Vec<f64> = (0..m)
        .map(|i| crate::model::pointwise_flux(state.n[i], slopes[i], xs[i]))
        .collect();

    let rhs = |x: f64, n: f64, j: f64| {
        let chi = profile.chi(x);
        (j + 2.0 * x * n - n * n - (3.0 * n - n * n) * chi) / (x * x)
    };

    let mut out = state.n.clone();
    let mut blocks = Vec::with_capacity(m - first + 1);
    let mut n = state.n[first - 1];
    let mut endpoint = n;
    // intervals [x_i, x_{i+1}] for i = first−1 .. m−2, then [x_{m−1}, 1]
    for i in first - 1..m {
        let (x0, x1, j0, j1) = if i + 1 < m {
            (xs[i], xs[i + 1], target[i], target[i + 1])
        } else {
            // extrapolate the target linearly to the boundary
            let s = (target[m - 1] - target[m - 2]) / (xs[m - 1] - xs[m - 2]);
            (
                xs[m - 1],
                1.0,
                target[m - 1],
                target[m - 1] + s * (1.0 - xs[m - 1]),
            )
        };
        if x1 <= x0 {
            break;
        }
        let jt = |x: f64| j0 + (j1 - j0) * (x - x0) / (x1 - x0);
        let step = (x1 - x0) / CUTOFF_SUBSTEPS as f64;
        let mut block = DenseBlock {
            x: Vec::with_capacity(CUTOFF_SUBSTEPS + 1),
            n: Vec::with_capacity(CUTOFF_SUBSTEPS + 1),
            target: Vec::with_capacity(CUTOFF_SUBSTEPS + 1),
        };
        block.x.push(x0);
        block.n.push(n);
        block.target.push(j0);
        for s in 0..CUTOFF_SUBSTEPS {
            let x = x0 + s as f64 * step;
            let k1 = rhs(x, n, jt(x));
            let xm = x + 0.5 * step;
            let k2 = rhs(xm, n + 0.5 * step * k1, jt(xm));
            let k3 = rhs(xm, n + 0.5 * step * k2, jt(xm));
            let xe = x + step;
            let k4 = rhs(xe, n + step * k3, jt(xe));
            n += step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            if !n.is_finite() || n.abs() > BLOW_UP || n < 0.0 {
                return Err(Error::CutoffBlowUp { x: xe, n });
            }
            block.x.push(xe);
            block.n.push(n);
            block.target.push(jt(xe));
        }
        blocks.push(block);
        if i + 1 < m {
            out[i + 1] = n;
        } else {
            endpoint = n;
        }
    }

    Ok(CutoffInitial {
        state: State::new(state.t, out),
        endpoint,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::model::equilibrium_density;
    use approx::assert_relative_eq;

    fn spec(family: Family, kappa: f64) -> InitialSpec {
        InitialSpec {
            family,
            kappa,
            p: 0.0,
        }
    }

    #[test]
    fn raw_families() {
        let g = build_grid(1e-3, 40, 1.0).unwrap();
        let c = sample_raw(&InitialSpec::new(Family::Constant(2.0)), &g).unwrap();
        assert!(c.n.iter().all(|&v| v == 2.0));
        let l = sample_raw(&InitialSpec::new(Family::LinearMultiple(1.0)), &g).unwrap();
        assert_eq!(l.n, g.centers());
        let e = sample_raw(
            &InitialSpec::new(Family::ScaledEquilibrium { a: 1.0, mu: 0.5 }),
            &g,
        )
        .unwrap();
        for (v, &x) in e.n.iter().zip(g.centers()) {
            assert_relative_eq!(
                *v,
                equilibrium_density(0.5, x).unwrap(),
                max_relative = 1e-15
            );
        }
        let b = sample_raw(
            &InitialSpec::new(Family::Bump {
                center: 0.5,
                width: 0.2,
                height: 3.0,
            }),
            &g,
        )
        .unwrap();
        assert!(b.max() <= 3.0 && b.max() > 2.9);
        assert!(b.n.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn invalid_families_rejected() {
        let g = build_grid(1e-3, 10, 1.0).unwrap();
        assert!(sample_raw(&InitialSpec::new(Family::Constant(-1.0)), &g).is_err());
        assert!(sample_raw(
            &InitialSpec::new(Family::ScaledEquilibrium { a: 1.0, mu: -0.1 }),
            &g
        )
        .is_err());
        let mut s = InitialSpec::new(Family::Constant(1.0));
        s.kappa = 0.2;
        assert!(s.validate().is_err());
    }

    #[test]
    fn table_parsing_and_coverage() {
        let t = parse_table_csv(b"x,n\n0.0,0.0\n0.5,1.0\n1.0,0.5\n").unwrap();
        assert_eq!(t.eval(0.25), 0.5);
        assert_eq!(t.eval(0.75), 0.75);
        let g = build_grid(1e-3, 10, 1.0).unwrap();
        assert!(sample_raw(&InitialSpec::new(Family::Table(t)), &g).is_ok());

        let short = parse_table_csv(b"x,n\n0.1,1\n1.0,1\n").unwrap();
        assert!(matches!(
            sample_raw(&InitialSpec::new(Family::Table(short)), &g),
            Err(Error::TableCoverage { .. })
        ));
        assert!(parse_table_csv(b"x,n\n0.5,1\n0.2,1\n").is_err());
        assert!(parse_table_csv(b"x,n\n0.1,-1\n0.2,1\n").is_err());
        assert!(parse_table_csv(b"x,n,z\n0.1,1,1\n0.2,1,1\n").is_err());
        assert!(parse_table_csv(b"x,n\n0.1,abc\n0.2,1\n").is_err());
        assert!(parse_table_csv(b"x,n\n0.1,1\n").is_err());
        assert!(parse_table_csv(b"x,n\n0.1,NaN\n0.2,1\n").is_err());
    }

    #[test]
    fn mollified_endpoint_laws() {
        let kappa = 0.08;
        for family in [
            Family::Constant(2.0),
            Family::LinearMultiple(3.0),
            Family::Bump {
                center: 0.3,
                width: 0.5,
                height: 1.0,
            },
        ] {
            let s = spec(family, kappa);
            let x = kappa / 2.0;
            assert_relative_eq!(mollify_at(&s, x).unwrap(), kappa * x * x, epsilon = 1e-12);
            assert_relative_eq!(
                mollify_at(&s, 1.0).unwrap(),
                kappa / (kappa + 1.0),
                epsilon = 1e-12
            );
            let x = 1.0 - kappa / 3.0;
            assert_relative_eq!(
                mollify_at(&s, x).unwrap(),
                kappa * x * x / (kappa * x + 1.0),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn mollified_is_positive_and_close_to_raw_in_the_bulk() {
        let g = build_grid(1e-3, 400, 1.0).unwrap();
        let s = spec(Family::Constant(1.0), 0.05);
        let m = mollify(&s, &g).unwrap();
        assert!(m.n.iter().all(|&v| v > 0.0));
        for (v, &x) in m.n.iter().zip(g.centers()) {
            if x > 0.2 && x < 0.8 {
                let tail = 0.05 * x * x / (1.0 + 0.05 * x * smooth_step(4.0 * x - 2.0));
                assert!((v - 1.0 - tail).abs() < 1e-3, "x={x} v={v}");
            }
        }
    }

    #[test]
    fn mollified_converges_as_kappa_shrinks() {
        let g = build_grid(1e-3, 800, 1.0).unwrap();
        let raw = vec![1.0; g.len()];
        let dists: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&k| {
                let m = mollify(&spec(Family::Constant(1.0), k), &g).unwrap();
                let d: Vec<f64> = m.n.iter().zip(&raw).map(|(a, b)| (a - b).abs()).collect();
                g.quad(&d, 0.0).unwrap()
            })
            .collect();
        assert!(dists.windows(2).all(|w| w[1] < w[0]), "{dists:?}");
        assert!(dists[3] < 0.06);
    }

    #[test]
    fn mollify_is_monotone_in_the_data() {
        let g = build_grid(1e-3, 200, 1.0).unwrap();
        let lower = mollify(&spec(Family::LinearMultiple(1.0), 0.05), &g).unwrap();
        let upper = mollify(&spec(Family::LinearMultiple(1.5), 0.05), &g).unwrap();
        assert!(lower.n.iter().zip(&upper.n).all(|(a, b)| a <= b));
    }

    #[test]
    fn mollified_second_differences_stay_bounded() {
        let s = spec(Family::Constant(1.0), 0.1);
        let mut prev = 0.0;
        for &m in &[200usize, 400, 800] {
            let g = build_grid(1e-3, m, 1.0).unwrap();
            let v = mollify(&s, &g).unwrap();
            let h = g.widths()[0];
            let worst =
                v.n.windows(3)
                    .map(|w| ((w[0] - 2.0 * w[1] + w[2]) / (h * h)).abs())
                    .fold(0.0, f64::max);
            if prev > 0.0 {
                assert!(
                    worst < 1.5 * prev,
                    "second differences grew: {prev} -> {worst}"
                );
            }
            prev = worst;
        }
    }

    #[test]
    fn center_slopes_exact_for_quadratics() {
        let g = build_grid(0.01, 30, 1.07).unwrap();
        let ns: Vec<f64> = g.centers().iter().map(|x| 2.0 * x * x - x + 3.0).collect();
        for (s, &x) in center_slopes(g.centers(), &ns).iter().zip(g.centers()) {
            assert_relative_eq!(*s, 4.0 * x - 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cutoff_degenerate_strip_is_identity() {
        let g = build_grid(1e-3, 100, 1.0).unwrap();
        let s = mollify(&spec(Family::Constant(1.0), 0.05), &g).unwrap();
        // strip narrower than the last half-cell holds no centre
        let profile = CutoffProfile::new(0.002).unwrap();
        let c = cutoff_compatible(&s, &profile, &g).unwrap();
        assert!(c.strip_is_empty());
        assert_eq!(c.state, s);
    }

    #[test]
    fn cutoff_leaves_bulk_alone_and_matches_flux() {
        let g = build_grid(1e-3, 400, 1.0).unwrap();
        let s = mollify(&spec(Family::Constant(1.0), 0.1), &g).unwrap();
        let profile = CutoffProfile::new(0.05).unwrap();
        let c = cutoff_compatible(&s, &profile, &g).unwrap();
        for (i, &x) in g.centers().iter().enumerate() {
            if x < profile.strip_start() {
                assert_eq!(c.state.n[i], s.n[i]);
            }
        }
        let r = c.flux_matching_residual(&profile);
        assert!(r <= 1e-8, "residual {r}");
        assert!(c.state.n.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn cutoff_flux_matching_on_raw_equilibrium() {
        let g = build_grid(1e-3, 400, 1.0).unwrap();
        let s = State::from_fn(&g, |x| 0.9 * x * x / (x + 0.5));
        for &h in &[0.2, 0.1, 0.05] {
            let profile = CutoffProfile::new(h).unwrap();
            let c = cutoff_compatible(&s, &profile, &g).unwrap();
            let r = c.flux_matching_residual(&profile);
            assert!(r <= 1e-8, "h={h} residual {r}");
        }
    }

    /// Independent RK4 at half the step size, with its own target flux.
    fn endpoint_oracle(state: &State, grid: &Grid, profile: &CutoffProfile) -> f64 {
        let xs = grid.centers();
        let m = xs.len();
        let slope = |i: usize| -> f64 {
            let (im, ip) = if i == 0 {
                (0, 2)
            } else if i == m - 1 {
                (m - 3, m - 1)
            } else {
                (i - 1, i + 1)
            };
            // Lagrange derivative through three points
            let idx = [im, (im + ip) / 2, ip];
            let x = xs[i];
            let mut d = 0.0;
            for a in 0..3 {
                let mut term = 0.0;
                for b in 0..3 {
                    if b == a {
                        continue;
                    }
                    let mut prod = 1.0 / (xs[idx[a]] - xs[idx[b]]);
                    for c in 0..3 {
                        if c != a && c != b {
                            prod *= (x - xs[idx[c]]) / (xs[idx[a]] - xs[idx[c]]);
                        }
                    }
                    term += prod;
                }
                d += term * state.n[idx[a]];
            }
            d
        };
        let target: Vec<f64> = (0..m)
            .map(|i| xs[i] * xs[i] * slope(i) - 2.0 * xs[i] * state.n[i] + state.n[i] * state.n[i])
            .collect();
        let jt = |x: f64| -> f64 {
            if x >= xs[m - 1] {
                let s = (target[m - 1] - target[m - 2]) / (xs[m - 1] - xs[m - 2]);
                return target[m - 1] + s * (x - xs[m - 1]);
            }
            let k = xs.partition_point(|&v| v <= x);
            let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
            target[k - 1] * (1.0 - w) + target[k] * w
        };
        let f = |x: f64, n: f64| {
            let chi = profile.chi(x);
            (jt(x) + 2.0 * x * n - n * n - (3.0 * n - n * n) * chi) / (x * x)
        };
        let first = xs.partition_point(|&x| x < profile.strip_start());
        let mut n = state.n[first - 1];
        let mut nodes: Vec<f64> = xs[first - 1..].to_vec();
        nodes.push(1.0);
        for w in nodes.windows(2) {
            let steps = 2 * CUTOFF_SUBSTEPS;
            let h = (w[1] - w[0]) / steps as f64;
            for s in 0..steps {
                let x = w[0] + s as f64 * h;
                let k1 = f(x, n);
                let k2 = f(x + h / 2.0, n + h / 2.0 * k1);
                let k3 = f(x + h / 2.0, n + h / 2.0 * k2);
                let k4 = f(x + h, n + h * k3);
                n += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            }
        }
        n
    }

    #[test]
    fn cutoff_endpoint_matches_fine_step_oracle() {
        let g = build_grid(1e-3, 400, 1.0).unwrap();
        let s = mollify(&spec(Family::Constant(1.0), 0.1), &g).unwrap();
        let profile = CutoffProfile::new(0.05).unwrap();
        let c = cutoff_compatible(&s, &profile, &g).unwrap();
        let oracle = endpoint_oracle(&s, &g, &profile);
        assert!(
            (c.endpoint - oracle).abs() <= 1e-8,
            "{} vs {oracle}",
            c.endpoint
        );
    }

    #[test]
    fn cutoff_rejects_strip_over_whole_grid() {
        let g = build_grid(0.3, 10, 1.0).unwrap();
        let s = State::from_fn(&g, |x| x);
        let profile = CutoffProfile::new(0.4).unwrap();
        assert!(cutoff_compatible(&s, &profile, &g).is_err());
    }
}
