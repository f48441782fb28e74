//! Experiment orchestration: building initial data, executing runs,
//! writing artifacts, replaying verification from disk, and parameter
//! sweeps over `k` or `chi`.
//!
//! Everything is deterministic: the same configuration produces
//! byte-identical CSV files and snapshots. Sweep members run in a worker
//! pool (capped by the `KSLG_THREADS` environment variable) and are merged
//! back in sweep order by a single thread.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::{ExperimentConfig, InitSpec, SweepAxis};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::snapshot;
use crate::solver::{self, State, Trajectory};
use crate::weakform::{self, CheckRow};

/// Environment variable capping the sweep worker pool.
pub const THREADS_ENV: &str = "KSLG_THREADS";

pub const SWEEP_CSV_HEADER: &str =
    "param,defect_integral,final_mass_u,final_energy,gronwall_slack,aborted";

/// Initial data from a named profile or a snapshot file.
pub fn build_initial_field(grid: &Grid, spec: &InitSpec) -> Result<Field> {
    match spec {
        InitSpec::Profile(profile) => profile.evaluate(grid),
        InitSpec::Snapshot(path) => snapshot::read_snapshot(path)?.into_field(grid),
    }
}

/// Scalar summary of one run; the numbers equal the corresponding CSV
/// entries exactly.
#[derive(Debug, Clone, Copy)]
pub struct RunSummary {
    pub final_mass_u: f64,
    pub final_mass_v: f64,
    pub final_energy: f64,
    pub gronwall_max_slack: f64,
    pub defect_integral: f64,
    pub verification_failures: usize,
    pub verification_rows: usize,
}

pub struct RunArtifacts {
    pub trajectory: Trajectory,
    pub verification: Vec<CheckRow>,
    pub summary: RunSummary,
}

/// Left-rectangle time integral of the defect column.
pub fn defect_time_integral(records: &[DiagnosticsRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| w[0].defect * (w[1].t - w[0].t))
        .sum()
}

/// Runs the configured experiment in memory; optionally evaluates the
/// weak-form verification over the retained states.
pub fn execute_run(cfg: &ExperimentConfig, with_verification: bool) -> Result<RunArtifacts> {
    let grid = cfg.grid.build()?;
    let u0 = build_initial_field(&grid, &cfg.init_u)?;
    let v0 = build_initial_field(&grid, &cfg.init_v)?;
    let trajectory = solver::run(&u0, &v0, &cfg.model, &cfg.solver, |_| {})?;

    let verification = if with_verification && cfg.solver.t_end > 0.0 {
        weakform::verify_trajectory(&trajectory, &cfg.model, &cfg.weakform)?
    } else {
        Vec::new()
    };

    let records = &trajectory.records;
    let gronwall = diagnostics::gronwall_check(records, &cfg.model, cfg.weakform.tolerance)?;
    let last = records.last().expect("run produces at least one record");
    let summary = RunSummary {
        final_mass_u: last.mass_u,
        final_mass_v: last.mass_v,
        final_energy: last.energy,
        gronwall_max_slack: gronwall.max_slack,
        defect_integral: defect_time_integral(records),
        verification_failures: verification.iter().filter(|r| !r.pass).count(),
        verification_rows: verification.len(),
    };
    Ok(RunArtifacts {
        trajectory,
        verification,
        summary,
    })
}

fn write_state_snapshots(dir: &Path, idx: usize, state: &State) -> Result<()> {
    snapshot::write_snapshot(dir.join(format!("snap_u_{idx:06}.kslg")), &state.u, state.t)?;
    snapshot::write_snapshot(dir.join(format!("snap_v_{idx:06}.kslg")), &state.v, state.t)?;
    Ok(())
}

/// Writes diagnostics CSV, verification CSV (when present), snapshot pairs,
/// and the canonical config echo into `dir`.
pub fn write_artifacts(cfg: &ExperimentConfig, artifacts: &RunArtifacts, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("diagnostics.csv"))?;
    diagnostics::write_diagnostics_csv(&artifacts.trajectory.records, &mut f)?;
    f.flush()?;
    if !artifacts.verification.is_empty() {
        let mut f = fs::File::create(dir.join("verification.csv"))?;
        weakform::write_verification_csv(&artifacts.verification, &mut f)?;
        f.flush()?;
    }
    for (idx, state) in artifacts.trajectory.states.iter().enumerate() {
        write_state_snapshots(dir, idx, state)?;
    }
    fs::write(dir.join("experiment.cfg"), crate::config::serialize(cfg))?;
    Ok(())
}

/// Runs and, when an output directory is configured, persists artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let artifacts = execute_run(cfg, true)?;
    if let Some(dir) = &cfg.output_dir {
        write_artifacts(cfg, &artifacts, dir)?;
    }
    Ok(artifacts)
}

/// Reconstructs the retained states of a previous run from its artifact
/// directory and replays the weak-form verification on them.
pub fn verify_artifacts(dir: &Path) -> Result<Vec<CheckRow>> {
    let cfg = crate::config::parse_file(dir.join("experiment.cfg"))?;
    let grid = cfg.grid.build()?;
    let mut states = Vec::new();
    for idx in 0.. {
        let u_path = dir.join(format!("snap_u_{idx:06}.kslg"));
        let v_path = dir.join(format!("snap_v_{idx:06}.kslg"));
        if !u_path.exists() {
            break;
        }
        let u_snap = snapshot::read_snapshot(&u_path)?;
        let v_snap = snapshot::read_snapshot(&v_path)?;
        let t = u_snap.time;
        if (v_snap.time - t).abs() > 1e-12 * t.abs().max(1.0) {
            return Err(Error::Snapshot(format!(
                "snapshot pair {idx} has mismatched times {t} vs {}",
                v_snap.time
            )));
        }
        states.push(State {
            t,
            u: u_snap.into_field(&grid)?,
            v: v_snap.into_field(&grid)?,
        });
    }
    if states.len() < 2 {
        return Err(Error::Snapshot(format!(
            "artifact directory {} holds fewer than two snapshot pairs",
            dir.display()
        )));
    }
    let trajectory = Trajectory {
        grid,
        params: cfg.model,
        states,
        records: Vec::new(),
    };
    weakform::verify_trajectory(&trajectory, &cfg.model, &cfg.weakform)
}

/// One row of the sweep summary.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub param: f64,
    pub defect_integral: f64,
    pub final_mass_u: f64,
    pub final_energy: f64,
    pub gronwall_slack: f64,
    pub aborted: bool,
}

fn aborted_row(param: f64) -> SweepRow {
    SweepRow {
        param,
        defect_integral: f64::NAN,
        final_mass_u: f64::NAN,
        final_energy: f64::NAN,
        gronwall_slack: f64::NAN,
        aborted: true,
    }
}

fn member_config(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> ExperimentConfig {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::K => cfg.model.k = value,
        SweepAxis::Chi => cfg.model.chi = value,
    }
    cfg.sweep = None;
    cfg.output_dir = base.output_dir.as_ref().map(|dir| {
        let axis_name = match axis {
            SweepAxis::K => "k",
            SweepAxis::Chi => "chi",
        };
        dir.join(format!("{axis_name}_{value}"))
    });
    cfg
}

fn worker_count(members: usize) -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(available);
    cap.min(members).max(1)
}

/// Runs one member per sweep value. Members whose parameters are
/// inadmissible (unless `force`) or whose run aborts are recorded as
/// aborted rows; the sweep continues. Rows come back in sweep order.
pub fn run_sweep(cfg: &ExperimentConfig, force: bool) -> Result<Vec<SweepRow>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no sweep section".into()))?
        .clone();
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
    }
    let members: Vec<(usize, f64)> = sweep.values.iter().cloned().enumerate().collect();
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; members.len()]);
    let next: AtomicUsize = AtomicUsize::new(0);
    let workers = worker_count(members.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= members.len() {
                    break;
                }
                let (_, value) = members[idx];
                let member = member_config(cfg, sweep.axis, value);
                let admissible = member.model.admissibility().admissible;
                let row = if !admissible && !force {
                    aborted_row(value)
                } else {
                    match execute_run(&member, false) {
                        Ok(artifacts) => {
                            let persisted = match &member.output_dir {
                                Some(dir) => write_artifacts(&member, &artifacts, dir),
                                None => Ok(()),
                            };
                            if persisted.is_err() {
                                aborted_row(value)
                            } else {
                                SweepRow {
                                    param: value,
                                    defect_integral: artifacts.summary.defect_integral,
                                    final_mass_u: artifacts.summary.final_mass_u,
                                    final_energy: artifacts.summary.final_energy,
                                    gronwall_slack: artifacts.summary.gronwall_max_slack,
                                    aborted: false,
                                }
                            }
                        }
                        Err(_) => aborted_row(value),
                    }
                };
                rows.lock().unwrap()[idx] = Some(row);
            });
        }
    });

    let rows = rows
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every member produces a row"))
        .collect();
    Ok(rows)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_sweep_csv(rows: &[SweepRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt(r.param),
            fmt(r.defect_integral),
            fmt(r.final_mass_u),
            fmt(r.final_energy),
            fmt(r.gronwall_slack),
            r.aborted
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;

    fn steady_config(out: Option<&Path>) -> ExperimentConfig {
        // u = 1 with k = 2 sources sat(1) = 2/3 into v; starting v there
        // keeps the run at a fixed point.
        let text = format!(
            "\
model.chi = 1.0
model.a = 1.0
model.b = 1.0
model.k = 2.0
grid.dims = 1
grid.extents = 1.0
grid.cells = 16
init_u.profile = constant
init_u.value = 1.0
init_v.profile = constant
init_v.value = 0.6666666666666666
solver.scheme = explicit
solver.dt_max = 0.001
solver.t_end = 0.2
solver.record_stride = 1
solver.snapshot_stride = 8
{}",
            out.map(|d| format!("output.dir = {}\n", d.display()))
                .unwrap_or_default()
        );
        config::parse(&text).unwrap()
    }

    #[test]
    fn steady_run_summary_matches_closed_form() {
        let cfg = steady_config(None);
        let artifacts = execute_run(&cfg, true).unwrap();
        let s = artifacts.summary;
        assert!((s.final_mass_u - 1.0).abs() < 1e-12);
        // defect density: 1/(2+1) = 1/3, integrated over t in [0, 0.2).
        assert!((s.defect_integral - 0.2 / 3.0).abs() < 1e-4);
        assert_eq!(s.verification_failures, 0);
        assert!(s.verification_rows > 0);
    }

    #[test]
    fn artifacts_are_deterministic_bytes() {
        let tmp = tempdir("determinism");
        let cfg = steady_config(Some(&tmp));
        let a1 = run_experiment(&cfg).unwrap();
        let d1 = fs::read(tmp.join("diagnostics.csv")).unwrap();
        let v1 = fs::read(tmp.join("verification.csv")).unwrap();
        let s1 = fs::read(tmp.join("snap_u_000001.kslg")).unwrap();
        let a2 = run_experiment(&cfg).unwrap();
        let d2 = fs::read(tmp.join("diagnostics.csv")).unwrap();
        let v2 = fs::read(tmp.join("verification.csv")).unwrap();
        let s2 = fs::read(tmp.join("snap_u_000001.kslg")).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(v1, v2);
        assert_eq!(s1, s2);
        assert_eq!(
            a1.summary.defect_integral.to_bits(),
            a2.summary.defect_integral.to_bits()
        );
        fs::remove_dir_all(&tmp).ok();
    }

    #[test]
    fn t_end_zero_single_record() {
        let mut cfg = steady_config(None);
        cfg.solver.t_end = 0.0;
        let artifacts = execute_run(&cfg, true).unwrap();
        assert_eq!(artifacts.trajectory.records.len(), 1);
        assert!(artifacts.verification.is_empty());
    }

    #[test]
    fn verify_artifacts_replays_from_disk() {
        let tmp = tempdir("verify");
        let cfg = steady_config(Some(&tmp));
        let artifacts = run_experiment(&cfg).unwrap();
        let rows = verify_artifacts(&tmp).unwrap();
        assert_eq!(rows.len(), artifacts.verification.len());
        for (a, b) in rows.iter().zip(&artifacts.verification) {
            assert_eq!(a.check, b.check);
            assert_eq!(a.pass, b.pass);
            assert_eq!(a.lhs.to_bits(), b.lhs.to_bits());
        }
        fs::remove_dir_all(&tmp).ok();
    }

    #[test]
    fn sweep_k_rows_in_order_and_defect_decreasing() {
        let mut cfg = steady_config(None);
        cfg.sweep = Some(crate::config::SweepSpec {
            axis: SweepAxis::K,
            values: vec![2.0, 4.0, 8.0, 16.0],
        });
        let rows = run_sweep(&cfg, false).unwrap();
        assert_eq!(rows.len(), 4);
        for (row, expect) in rows.iter().zip([2.0, 4.0, 8.0, 16.0]) {
            assert_eq!(row.param, expect);
            assert!(!row.aborted);
        }
        for pair in rows.windows(2) {
            assert!(
                pair[1].defect_integral < pair[0].defect_integral,
                "defect integral must decrease in k"
            );
        }
    }

    #[test]
    fn sweep_chi_marks_inadmissible_members_aborted() {
        let mut cfg = steady_config(None);
        // b = 1, a = 1: the frontier sits at chi^2 = 4 b (b+a+1)/(a (a+1)^2) = 3.
        cfg.sweep = Some(crate::config::SweepSpec {
            axis: SweepAxis::Chi,
            values: vec![1.0, 1.5, 2.0, 5.0],
        });
        let rows = run_sweep(&cfg, false).unwrap();
        assert!(!rows[0].aborted);
        assert!(!rows[1].aborted);
        assert!(rows[3].aborted);
        assert!(rows[3].defect_integral.is_nan());
    }

    #[test]
    fn sweep_empty_values_ok() {
        let mut cfg = steady_config(None);
        cfg.sweep = Some(crate::config::SweepSpec {
            axis: SweepAxis::K,
            values: vec![],
        });
        let rows = run_sweep(&cfg, false).unwrap();
        assert!(rows.is_empty());
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{SWEEP_CSV_HEADER}\n"));
    }

    #[test]
    fn missing_sweep_section_is_config_error() {
        let cfg = steady_config(None);
        assert!(matches!(run_sweep(&cfg, false), Err(Error::Config(_))));
    }

    fn tempdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "kslg_test_{tag}_{}_{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }
}
