//! Acceptance suite. Runs `becsim verify --quick` twice, then re-judges the
//! scoreboard of the first run against thresholds pinned here and compares
//! the CSV outputs of both runs byte for byte.
//!
//! Prints one `PASS`/`FAIL` line per criterion.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

const EQ_DRIFT: f64 = 5e-3;
const EQ_RATIO: f64 = 1.5;
const ENERGY_SLACK: f64 = -1e-3;
const BALANCE: f64 = 1e-10;
const ONSET_LEDGER: f64 = 1e-6;
const ONSET_TIME: f64 = 2.398;
const ABSENCE_LEDGER: f64 = 1e-8;
const ABSENCE_NUMBER: f64 = 1e-3;
const MU_AGREEMENT: f64 = 2e-2;
const LIMIT_RESIDUAL: f64 = 1e-2;
const CONTRACTION: f64 = 1e-8;
const FLUX_RESIDUAL: f64 = 1e-8;
const ROUND_TRIP: f64 = 1e-10;
const NUMBER_AT_ONE: f64 = 1e-12;
/// Every suite grid has `max Δx + dt` well below this.
const TOL_CAP: f64 = 0.05;

struct Row {
    id: u32,
    check: String,
    value: f64,
    limit: f64,
}

fn verify(dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_becsim"))
        .args(["--out-dir"])
        .arg(dir)
        .args(["verify", "--quick"])
        .output()
        .expect("spawn becsim")
}

fn scoreboard(dir: &Path) -> Vec<Row> {
    let text = fs::read_to_string(dir.join("verify_scoreboard.csv")).expect("scoreboard");
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 7, "bad scoreboard row {line}");
            Row {
                id: f[0].parse().unwrap(),
                check: f[2].to_string(),
                value: f[4].parse().unwrap(),
                limit: f[6].parse().unwrap(),
            }
        })
        .collect()
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

struct Board<'a> {
    rows: &'a [Row],
    results: Vec<(u32, &'static str, bool, String)>,
}

impl<'a> Board<'a> {
    fn of(&self, id: u32) -> Vec<&'a Row> {
        self.rows.iter().filter(|r| r.id == id).collect()
    }

    fn get(&self, id: u32, check: &str) -> Option<&'a Row> {
        self.rows.iter().find(|r| r.id == id && r.check == check)
    }

    fn record(&mut self, id: u32, title: &'static str, ok: bool, detail: String) {
        self.results.push((id, title, ok, detail));
    }
}

/// Bound checks carry their own `tol_disc` as the limit; it must be a
/// plausible discretisation tolerance, and the value must respect it.
fn within_tol(rows: &[&Row], suffix: &str) -> (bool, f64, usize) {
    let picked: Vec<&&Row> = rows.iter().filter(|r| r.check.ends_with(suffix)).collect();
    let ok = !picked.is_empty()
        && picked
            .iter()
            .all(|r| r.limit > 0.0 && r.limit < TOL_CAP && r.value <= r.limit);
    let worst = picked
        .iter()
        .map(|r| r.value - r.limit)
        .fold(f64::NEG_INFINITY, f64::max);
    (ok, worst, picked.len())
}

#[test]
fn acceptance() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let out_a = verify(first.path());
    let out_b = verify(second.path());
    assert!(
        matches!(out_a.status.code(), Some(0) | Some(1)),
        "verify crashed: {}",
        String::from_utf8_lossy(&out_a.stderr)
    );

    let rows = scoreboard(first.path());
    let mut b = Board {
        rows: &rows,
        results: Vec::new(),
    };

    // 1
    let drift = b.get(1, "drift").map(|r| r.value);
    let ratios: Vec<f64> = b
        .of(1)
        .iter()
        .filter(|r| r.check.starts_with("refinement_ratio"))
        .map(|r| r.value)
        .collect();
    let ok = drift.is_some_and(|d| d <= EQ_DRIFT)
        && !ratios.is_empty()
        && ratios.iter().all(|&r| r >= EQ_RATIO);
    b.record(
        1,
        "equilibrium preservation",
        ok,
        format!("drift {drift:?} <= {EQ_DRIFT}, ratios {ratios:?} >= {EQ_RATIO}"),
    );

    // 2
    let rows2 = b.of(2);
    let (ok_sup, worst, n) = within_tol(&rows2, "_sup");
    let shrink: Vec<&&Row> = rows2
        .iter()
        .filter(|r| r.check.contains("_sup_minus_"))
        .collect();
    let ok = ok_sup && !shrink.is_empty() && shrink.iter().all(|r| r.value <= 0.0);
    b.record(
        2,
        "universal super-solution",
        ok,
        format!(
            "{n} runs, worst excess {worst:e} over tol_disc; refinement does not grow violations"
        ),
    );

    // 3
    let (ok, worst, n) = within_tol(&b.of(3), "_oleinik");
    let ok = ok && b.get(3, "condensing_oleinik").is_some();
    b.record(
        3,
        "one-sided slope bound",
        ok,
        format!("{n} runs incl. condensing, worst excess {worst:e} over tol_disc"),
    );

    // 4
    let slack: Vec<f64> = b.of(4).iter().map(|r| r.value).collect();
    let min = slack.iter().copied().fold(f64::INFINITY, f64::min);
    b.record(
        4,
        "energy inequality",
        !slack.is_empty() && min >= ENERGY_SLACK,
        format!("min slack {min:e} >= {ENERGY_SLACK}"),
    );

    // 5
    let bal: Vec<f64> = b.of(5).iter().map(|r| r.value).collect();
    let max = bal.iter().copied().fold(0.0, f64::max);
    b.record(
        5,
        "photon balance",
        !bal.is_empty() && max <= BALANCE,
        format!("max defect {max:e} <= {BALANCE:e}"),
    );

    // 6
    let ledger = b.get(6, "ledger_by_onset_bound");
    let onset = b.get(6, "onset_time");
    let margin = b.get(6, "persistence_margin");
    let tol_cond = b.get(2, "condensing_sup").map(|r| r.limit);
    let ok = ledger.is_some_and(|r| r.value > ONSET_LEDGER)
        && onset
            .is_some_and(|r| r.value <= ONSET_TIME + 1e-3 && (r.limit - ONSET_TIME).abs() < 1e-3)
        && margin.is_some_and(|r| Some(-r.limit) == tol_cond && r.value >= r.limit);
    b.record(
        6,
        "condensation onset",
        ok,
        format!(
            "ledger {:?} > {ONSET_LEDGER:e} by t = {ONSET_TIME}; floor margin {:?} >= -tol_disc",
            ledger.map(|r| r.value),
            margin.map(|r| r.value)
        ),
    );

    // 7
    let l = b.get(7, "ledger").map(|r| r.value);
    let e = b.get(7, "number_error").map(|r| r.value);
    let ok = l.is_some_and(|v| v <= ABSENCE_LEDGER) && e.is_some_and(|v| v <= ABSENCE_NUMBER);
    b.record(
        7,
        "absence of condensation",
        ok,
        format!("ledger {l:?} <= {ABSENCE_LEDGER:e}, |N - 0.25| {e:?} <= {ABSENCE_NUMBER:e}"),
    );

    // 8
    let mu = b.get(8, "mu_error").map(|r| r.value);
    let res = b.get(8, "residual_l1").map(|r| r.value);
    let ok = mu.is_some_and(|v| v <= MU_AGREEMENT) && res.is_some_and(|v| v <= LIMIT_RESIDUAL);
    b.record(
        8,
        "conserved-mass limit",
        ok,
        format!("mu error {mu:?} <= {MU_AGREEMENT}, residual {res:?} <= {LIMIT_RESIDUAL}"),
    );

    // 9: 1/T + 2/sqrt(T) at T = 100.
    let envelope = 1.0 / 100.0 + 2.0 / 100f64.sqrt();
    let dist = b.get(9, "distance_to_maximal").map(|r| r.value);
    let mu9 = b.get(9, "mu").map(|r| r.value);
    let ok = match (dist, tol_cond) {
        (Some(d), Some(t)) => d <= envelope + t && mu9.is_some_and(|m| m <= MU_AGREEMENT),
        _ => false,
    };
    b.record(
        9,
        "dominating-data limit",
        ok,
        format!("distance {dist:?} <= {envelope} + tol_disc, mu {mu9:?} <= {MU_AGREEMENT}"),
    );

    // 10
    let inc = b.get(10, "max_increase").map(|r| r.value);
    let ratio = b.get(10, "distance_ratio_t1").map(|r| r.value);
    let ok = inc.is_some_and(|v| v <= CONTRACTION) && ratio.is_some_and(|v| v < 1.0);
    b.record(
        10,
        "L1 contraction",
        ok,
        format!("max increase {inc:?} <= {CONTRACTION:e}, d(1)/d(0) {ratio:?} < 1"),
    );

    // 11
    let pos = b.get(11, "positive_part");
    let flags = b.get(11, "gronwall_flags").map(|r| r.value);
    let winc = b.get(11, "weighted_increase").map(|r| r.value);
    let ok = pos.is_some_and(|r| r.limit > 0.0 && r.limit < TOL_CAP && r.value <= r.limit)
        && flags == Some(0.0)
        && winc.is_some_and(|v| v <= CONTRACTION);
    b.record(
        11,
        "comparison",
        ok,
        format!(
            "(n - m)+ {:?} <= tol_disc, gronwall flags {flags:?}, weighted increase {winc:?}",
            pos.map(|r| r.value)
        ),
    );

    // 12
    let h_ratios: Vec<f64> = b
        .of(12)
        .iter()
        .filter(|r| r.check.starts_with("distance_ratio"))
        .map(|r| r.value)
        .collect();
    let flux = b.get(12, "flux_matching_residual").map(|r| r.value);
    let ok = h_ratios.len() == 2
        && h_ratios.iter().all(|&r| r < 1.0)
        && flux.is_some_and(|v| v <= FLUX_RESIDUAL);
    b.record(
        12,
        "cut-off consistency",
        ok,
        format!("h-halving ratios {h_ratios:?} < 1, flux residual {flux:?} <= {FLUX_RESIDUAL:e}"),
    );

    // 13
    let rt = b.get(13, "round_trip_relative").map(|r| r.value);
    let one = b.get(13, "number_at_one").map(|r| r.value);
    let ok = rt.is_some_and(|v| v <= ROUND_TRIP) && one.is_some_and(|v| v <= NUMBER_AT_ONE);
    b.record(
        13,
        "oracle round-trips",
        ok,
        format!("round trip {rt:?} <= {ROUND_TRIP:e}, N(1) error {one:?} <= {NUMBER_AT_ONE:e}"),
    );

    // 14
    let a = csv_files(first.path());
    let c = csv_files(second.path());
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != c.get(*k)).collect();
    let ok = out_b.status.code() == out_a.status.code()
        && a.len() > 1
        && a.keys().eq(c.keys())
        && differing.is_empty();
    b.record(
        14,
        "determinism",
        ok,
        format!("{} CSV files, differing {differing:?}", a.len()),
    );

    let mut failed = Vec::new();
    for (id, title, ok, detail) in &b.results {
        println!(
            "{} {id:>2} {title}: {detail}",
            if *ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(*id);
        }
    }
    assert_eq!(b.results.len(), 14);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
