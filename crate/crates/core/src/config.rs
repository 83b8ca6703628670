//! TOML run configuration.
//!
//! Sections `[grid]`, `[initial]`, `[solver]` and `[checks]`, plus
//! `[initial_b]` for comparison pairs and `[sweep]` for parameter sweeps.
//! Every field has a default. Errors carry the line of the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::build_grid;
use crate::initdata::{parse_table_csv, Family, InitialSpec};
use crate::model::CutoffProfile;
use crate::solver::{FluxMode, GridSpec, Smoothing, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub epsilon: f64,
    pub cells: usize,
    pub grading: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            cells: 400,
            grading: 1.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Constant,
    Linear,
    Equilibrium,
    Bump,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKind {
    Raw,
    Mollified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub family: FamilyKind,
    /// `constant`: the value.
    pub value: f64,
    /// `linear`: `n = slope · x`.
    pub slope: f64,
    /// `equilibrium`: `n = scale · x²/(x + mu)`.
    pub scale: f64,
    pub mu: f64,
    pub center: f64,
    pub width: f64,
    pub height: f64,
    /// `table`: CSV with columns `x,n`, relative to the config file.
    pub path: Option<PathBuf>,
    pub kappa: f64,
    pub p: f64,
    pub smoothing: SmoothingKind,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            family: FamilyKind::Equilibrium,
            value: 1.0,
            slope: 1.0,
            scale: 1.0,
            mu: 0.5,
            center: 0.5,
            width: 0.25,
            height: 1.0,
            path: None,
            kappa: 0.05,
            p: 0.0,
            smoothing: SmoothingKind::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Plain,
    Cutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub t_end: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub theta: f64,
    pub output_every: f64,
    pub mode: ModeKind,
    /// Cut-off width, used when `mode = "cutoff"`.
    pub h: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            t_end: s.t_end,
            cfl: s.cfl,
            dt_max: s.dt_max,
            theta: s.theta,
            output_every: s.output_every,
            mode: ModeKind::Plain,
            h: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    /// `C` in `tol_disc = C (Δx + dt)`.
    pub tol_constant: f64,
    /// Allowed negative energy slack.
    pub energy_tol: f64,
    pub onset_threshold: f64,
    pub fit_floor: f64,
    /// Allowed entropy increase between reports (warning only).
    pub entropy_tol: f64,
    /// Weight exponent for the weighted stability check in `compare`.
    pub p: f64,
    /// Allowed step-to-step increase of the L¹ distance in `compare`.
    pub contraction_tol: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            tol_constant: crate::diagnostics::DEFAULT_TOL_CONSTANT,
            energy_tol: 1e-3,
            onset_threshold: 1e-4,
            fit_floor: crate::equilibrium::DEFAULT_FIT_FLOOR,
            entropy_tol: 1e-9,
            p: 2.0,
            contraction_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub epsilon: Vec<f64>,
    pub kappa: Vec<f64>,
    pub h: Vec<f64>,
    pub cells: Vec<usize>,
}

/// The file as written, with defaults filled in. Serialized into manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridSection,
    pub initial: InitialSection,
    pub initial_b: Option<InitialSection>,
    pub solver: SolverSection,
    pub checks: ChecksSection,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initial {
    pub spec: InitialSpec,
    pub smoothing: Smoothing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepAxis {
    Epsilon,
    Kappa,
    H,
    Cells,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Kappa => "kappa",
            SweepAxis::H => "h",
            SweepAxis::Cells => "cells",
        }
    }
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub grid: GridSpec,
    pub initial: Initial,
    pub initial_b: Option<Initial>,
    pub solver: SolverConfig,
    pub checks: ChecksSection,
    /// Swept axes with their values, in a fixed order.
    pub sweep: Vec<(SweepAxis, Vec<f64>)>,
}

/// Maps keys to 1-based line numbers in the source.
struct Locator<'a> {
    src: &'a str,
}

impl Locator<'_> {
    fn line_of(&self, section: &str, key: Option<&str>) -> Option<usize> {
        let mut current = String::new();
        let mut header = None;
        for (i, raw) in self.src.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.trim().to_string();
                if current == section {
                    header = Some(i + 1);
                }
                continue;
            }
            if current != section {
                continue;
            }
            if let Some(key) = key {
                let lhs = line.split('=').next().unwrap_or("").trim();
                if line.contains('=') && lhs == key {
                    return Some(i + 1);
                }
            }
        }
        header
    }

    fn error(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
        match self.line_of(section, Some(key)) {
            Some(line) => Error::Config(format!("line {line}: [{section}] {key}: {msg}")),
            None => Error::Config(format!("[{section}] {key}: {msg}")),
        }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src.as_bytes()[..offset.min(src.len())];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = before.len()
        - before
            .iter()
            .rposition(|&b| b == b'\n')
            .map_or(0, |i| i + 1)
        + 1;
    (line, col)
}

/// Parses and validates a configuration. Table paths are resolved against
/// `base_dir`.
pub fn parse_config(src: &str, base_dir: &Path) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(src).map_err(|e| {
        let msg = e.message().trim().replace('\n', "; ");
        match e.span() {
            Some(span) => {
                let (line, col) = line_col(src, span.start);
                Error::Config(format!("line {line}, column {col}: {msg}"))
            }
            None => Error::Config(msg),
        }
    })?;
    let loc = Locator { src };

    let g = &file.grid;
    if !(g.epsilon > 0.0 && g.epsilon < 1.0) {
        return Err(loc.error(
            "grid",
            "epsilon",
            format!("must lie in (0, 1), got {}", g.epsilon),
        ));
    }
    if g.cells < crate::grid::MIN_CELLS {
        return Err(loc.error(
            "grid",
            "cells",
            format!("must be >= {}, got {}", crate::grid::MIN_CELLS, g.cells),
        ));
    }
    if !(g.grading >= 1.0 && g.grading.is_finite()) {
        return Err(loc.error(
            "grid",
            "grading",
            format!("must be >= 1, got {}", g.grading),
        ));
    }
    build_grid(g.epsilon, g.cells, g.grading).map_err(|e| loc.error("grid", "grading", e))?;
    let grid = GridSpec {
        epsilon: g.epsilon,
        cells: g.cells,
        grading: g.grading,
    };

    let solver = solver_config(&file.solver, &loc)?;
    let initial = initial(&file.initial, "initial", base_dir, &loc)?;
    let initial_b = match &file.initial_b {
        Some(sec) => Some(self::initial(sec, "initial_b", base_dir, &loc)?),
        None => None,
    };
    let checks = file.checks.clone();
    for (key, v) in [
        ("tol_constant", checks.tol_constant),
        ("onset_threshold", checks.onset_threshold),
        ("fit_floor", checks.fit_floor),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(loc.error("checks", key, format!("must be > 0, got {v}")));
        }
    }
    for (key, v) in [
        ("energy_tol", checks.energy_tol),
        ("entropy_tol", checks.entropy_tol),
        ("p", checks.p),
        ("contraction_tol", checks.contraction_tol),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(loc.error("checks", key, format!("must be >= 0, got {v}")));
        }
    }

    let sweep = match &file.sweep {
        Some(s) => sweep_axes(s, &loc)?,
        None => Vec::new(),
    };

    Ok(RunConfig {
        file,
        grid,
        initial,
        initial_b,
        solver,
        checks,
        sweep,
    })
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&src, base)
}

fn solver_config(s: &SolverSection, loc: &Locator) -> Result<SolverConfig> {
    let mode = match s.mode {
        ModeKind::Plain => FluxMode::Plain,
        ModeKind::Cutoff => {
            FluxMode::Cutoff(CutoffProfile::new(s.h).map_err(|e| loc.error("solver", "h", e))?)
        }
    };
    let config = SolverConfig {
        t_end: s.t_end,
        cfl: s.cfl,
        dt_max: s.dt_max,
        mode,
        theta: s.theta,
        output_every: s.output_every,
    };
    // validate field by field so the error points at the right line
    let probe = |key: &str, c: SolverConfig| c.validate().map_err(|e| loc.error("solver", key, e));
    let base = SolverConfig {
        mode: FluxMode::Plain,
        ..SolverConfig::default()
    };
    probe(
        "t_end",
        SolverConfig {
            t_end: s.t_end,
            ..base.clone()
        },
    )?;
    probe(
        "cfl",
        SolverConfig {
            cfl: s.cfl,
            ..base.clone()
        },
    )?;
    probe(
        "dt_max",
        SolverConfig {
            dt_max: s.dt_max,
            ..base.clone()
        },
    )?;
    probe(
        "theta",
        SolverConfig {
            theta: s.theta,
            ..base.clone()
        },
    )?;
    probe(
        "output_every",
        SolverConfig {
            output_every: s.output_every,
            ..base
        },
    )?;
    Ok(config)
}

fn initial(sec: &InitialSection, name: &str, base_dir: &Path, loc: &Locator) -> Result<Initial> {
    let family = match sec.family {
        FamilyKind::Constant => Family::Constant(sec.value),
        FamilyKind::Linear => Family::LinearMultiple(sec.slope),
        FamilyKind::Equilibrium => Family::ScaledEquilibrium {
            a: sec.scale,
            mu: sec.mu,
        },
        FamilyKind::Bump => Family::Bump {
            center: sec.center,
            width: sec.width,
            height: sec.height,
        },
        FamilyKind::Table => {
            let rel = sec
                .path
                .as_ref()
                .ok_or_else(|| loc.error(name, "path", "required for family = \"table\""))?;
            let path = base_dir.join(rel);
            let bytes = std::fs::read(&path)
                .map_err(|e| loc.error(name, "path", format!("{}: {e}", path.display())))?;
            Family::Table(parse_table_csv(&bytes).map_err(|e| loc.error(name, "path", e))?)
        }
    };
    let key = match sec.family {
        FamilyKind::Constant => "value",
        FamilyKind::Linear => "slope",
        FamilyKind::Equilibrium => "mu",
        FamilyKind::Bump => "width",
        FamilyKind::Table => "path",
    };
    family.validate().map_err(|e| loc.error(name, key, e))?;
    let mut spec = InitialSpec::new(family);
    spec.kappa = sec.kappa;
    spec.p = sec.p;
    if !(spec.kappa > 0.0 && spec.kappa <= 0.1) {
        return Err(loc.error(
            name,
            "kappa",
            format!("must lie in (0, 0.1], got {}", spec.kappa),
        ));
    }
    if !(spec.p >= 0.0 && spec.p.is_finite()) {
        return Err(loc.error(name, "p", format!("must be >= 0, got {}", spec.p)));
    }
    let smoothing = match sec.smoothing {
        SmoothingKind::Raw => Smoothing::Raw,
        SmoothingKind::Mollified => Smoothing::Mollified,
    };
    Ok(Initial { spec, smoothing })
}

fn sweep_axes(s: &SweepSection, loc: &Locator) -> Result<Vec<(SweepAxis, Vec<f64>)>> {
    let axes = [
        (SweepAxis::Epsilon, s.epsilon.clone()),
        (SweepAxis::Kappa, s.kappa.clone()),
        (SweepAxis::H, s.h.clone()),
        (
            SweepAxis::Cells,
            s.cells.iter().map(|&c| c as f64).collect::<Vec<_>>(),
        ),
    ];
    for (axis, values) in &axes {
        let key = axis.name();
        for &v in values {
            let ok = match axis {
                SweepAxis::Epsilon => v > 0.0 && v < 1.0,
                SweepAxis::Kappa => v > 0.0 && v <= 0.1,
                SweepAxis::H => v > 0.0 && v < 0.5,
                SweepAxis::Cells => v >= crate::grid::MIN_CELLS as f64,
            };
            if !ok {
                return Err(loc.error("sweep", key, format!("value {v} out of range")));
            }
        }
    }
    let swept: Vec<_> = axes.into_iter().filter(|(_, v)| v.len() >= 2).collect();
    if swept.is_empty() {
        return Err(Error::Config(match loc.line_of("sweep", None) {
            Some(line) => format!("line {line}: [sweep] needs >= 2 values on at least one axis"),
            None => "[sweep] needs >= 2 values on at least one axis".into(),
        }));
    }
    Ok(swept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Result<RunConfig> {
        parse_config(src, Path::new("."))
    }

    fn message(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.file, ConfigFile::default());
        assert_eq!(c.grid.cells, 400);
        assert_eq!(c.grid.grading, 1.02);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(
            c.initial.spec.family,
            Family::ScaledEquilibrium { a: 1.0, mu: 0.5 }
        );
        assert!(c.initial_b.is_none());
        assert!(c.sweep.is_empty());
    }

    #[test]
    fn three_line_config() {
        let c = parse("[initial]\nfamily = \"constant\"\nvalue = 2.0\n").unwrap();
        assert_eq!(c.initial.spec.family, Family::Constant(2.0));
    }

    #[test]
    fn syntax_error_has_line() {
        let m = message(parse("[grid]\ncells = 10\nepsilon = = 3\n"));
        assert!(m.starts_with("line 3"), "{m}");
    }

    #[test]
    fn unknown_key_has_line() {
        let m = message(parse("[grid]\ncells = 10\n\n[solver]\ncfll = 0.3\n"));
        assert!(m.starts_with("line 5"), "{m}");
        assert!(m.contains("cfll"), "{m}");
    }

    #[test]
    fn wrong_type_has_line() {
        let m = message(parse("[grid]\ncells = \"many\"\n"));
        assert!(m.starts_with("line 2"), "{m}");
    }

    #[test]
    fn range_errors_point_at_key() {
        let m = message(parse("[grid]\ncells = 10\nepsilon = 2.0\n"));
        assert!(m.starts_with("line 3: [grid] epsilon"), "{m}");
        let m = message(parse("[solver]\nt_end = 1\ncfl = 1.5\n"));
        assert!(m.starts_with("line 3: [solver] cfl"), "{m}");
        let m = message(parse("[solver]\nmode = \"cutoff\"\nh = 0.7\n"));
        assert!(m.starts_with("line 3: [solver] h"), "{m}");
        let m = message(parse("[initial]\nkappa = 0.5\n"));
        assert!(m.starts_with("line 2: [initial] kappa"), "{m}");
        let m = message(parse("[initial_b]\nfamily = \"constant\"\nvalue = -1\n"));
        assert!(m.starts_with("line 3: [initial_b] value"), "{m}");
        let m = message(parse("[checks]\nfit_floor = 0\n"));
        assert!(m.starts_with("line 2: [checks] fit_floor"), "{m}");
    }

    #[test]
    fn table_needs_path() {
        let m = message(parse("[initial]\nfamily = \"table\"\n"));
        assert!(m.starts_with("line 1: [initial] path"), "{m}");
        let m = message(parse(
            "[initial]\nfamily = \"table\"\npath = \"nope.csv\"\n",
        ));
        assert!(m.starts_with("line 3"), "{m}");
    }

    #[test]
    fn table_resolves_relative_to_base() {
        let dir = std::env::temp_dir().join(format!("becsim-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("t.csv"), "x,n\n0,1\n1,2\n").unwrap();
        let c = parse_config("[initial]\nfamily = \"table\"\npath = \"t.csv\"\n", &dir).unwrap();
        match &c.initial.spec.family {
            Family::Table(t) => assert_eq!(t.eval(0.5), 1.5),
            f => panic!("{f:?}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sweep_needs_two_values() {
        let m = message(parse("[sweep]\nepsilon = [1e-3]\n"));
        assert!(m.starts_with("line 1"), "{m}");
        let c = parse("[sweep]\nepsilon = [4e-3, 2e-3, 1e-3]\nh = [0.1]\n").unwrap();
        assert_eq!(c.sweep.len(), 1);
        assert_eq!(c.sweep[0].0, SweepAxis::Epsilon);
        let m = message(parse("[sweep]\nh = [0.2, 0.6]\n"));
        assert!(m.starts_with("line 2: [sweep] h"), "{m}");
    }

    #[test]
    fn pair_section() {
        let c = parse(
            "[initial]\nfamily = \"linear\"\nslope = 0.5\n[initial_b]\nfamily = \"linear\"\n",
        )
        .unwrap();
        assert_eq!(c.initial.spec.family, Family::LinearMultiple(0.5));
        assert_eq!(
            c.initial_b.unwrap().spec.family,
            Family::LinearMultiple(1.0)
        );
    }

    #[test]
    fn echo_round_trips() {
        let c = parse("[grid]\ncells = 50\n[solver]\nmode = \"cutoff\"\n").unwrap();
        let text = toml::to_string(&c.file).unwrap();
        let again = parse(&text).unwrap();
        assert_eq!(again.file, c.file);
    }
}
