//! Scheduler × seed × load sweeps.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::report::{
    compare, comparison_csv, latency_cdf_csv, load_curve_csv, slot_csv, write_atomic, ComparisonTable, ReportError,
    RunSummary,
};
use crate::sim::run;
use crate::spec::{ScenarioSpec, SchedulerKind};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub base: ScenarioSpec,
    /// Names as given by the user; unknown names fail their cells only.
    pub schedulers: Vec<String>,
    pub seeds: Vec<u64>,
    /// UE counts; empty means the base spec's `n_ues`.
    pub loads: Vec<u32>,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub scheduler: String,
    pub seed: u64,
    pub n_ues: u32,
    pub result: Result<(RunSummary, PathBuf), String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub cells: Vec<CellOutcome>,
    /// One table per load, ascending.
    pub comparisons: Vec<(u32, ComparisonTable)>,
    pub errors: Vec<String>,
}

impl SweepOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.errors.is_empty() && self.cells.iter().all(|c| c.result.is_ok())
    }
}

fn report_name(scheduler: SchedulerKind, n_ues: u32, seed: u64, multi_load: bool) -> String {
    if multi_load {
        format!("report_{}_n{}_seed{}.csv", scheduler.name(), n_ues, seed)
    } else {
        format!("report_{}_seed{}.csv", scheduler.name(), seed)
    }
}

fn run_cell(base: &ScenarioSpec, name: &str, seed: u64, n_ues: u32, multi: bool, out: &Path) -> Result<(RunSummary, PathBuf), String> {
    let scheduler: SchedulerKind = name.parse().map_err(|e| format!("{e}"))?;
    let spec = ScenarioSpec { scheduler, seed, n_ues, ..base.clone() };
    let report = run(spec).map_err(|e| e.to_string())?;
    report.verify()?;
    let path = out.join(report_name(scheduler, n_ues, seed, multi));
    let bytes = slot_csv(&report).map_err(|e| e.to_string())?;
    write_atomic(&path, &bytes).map_err(|e| e.to_string())?;
    let cdf = out.join(format!(
        "plot_latency_cdf_{}",
        path.file_name().and_then(|f| f.to_str()).unwrap_or_default().trim_start_matches("report_")
    ));
    write_atomic(&cdf, &latency_cdf_csv(&report).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    Ok((RunSummary::from(&report), path))
}

/// Run every cell, write per-run reports, then one comparison table per
/// load and the load curves. A failing cell is recorded and skipped.
pub fn run_sweep(plan: &SweepPlan, out: &Path) -> Result<SweepOutcome, ReportError> {
    std::fs::create_dir_all(out)?;
    let loads = if plan.loads.is_empty() { vec![plan.base.n_ues] } else { plan.loads.clone() };
    let multi = loads.len() > 1;
    let cells: Vec<(String, u64, u32)> = loads
        .iter()
        .flat_map(|&n| {
            plan.schedulers.iter().flat_map(move |s| plan.seeds.iter().map(move |&seed| (s.clone(), seed, n)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| ReportError::Io(std::io::Error::other(e)))?;
    let results: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|(s, seed, n)| CellOutcome {
                scheduler: s.clone(),
                seed: *seed,
                n_ues: *n,
                result: run_cell(&plan.base, s, *seed, *n, multi, out),
            })
            .collect()
    });

    let mut comparisons = Vec::new();
    let mut errors = Vec::new();
    for &n in &loads {
        let runs: Vec<RunSummary> = results
            .iter()
            .filter(|c| c.n_ues == n)
            .filter_map(|c| c.result.as_ref().ok().map(|(r, _)| r.clone()))
            .collect();
        match compare(&runs) {
            Ok(t) => {
                let name = if multi { format!("comparison_n{n}.csv") } else { "comparison.csv".into() };
                write_atomic(&out.join(name), &comparison_csv(&t)?)?;
                comparisons.push((n, t));
            }
            Err(e) => errors.push(format!("comparison at {n} UEs: {e}")),
        }
    }
    if !comparisons.is_empty() {
        write_atomic(&out.join("plot_se_vs_load.csv"), &load_curve_csv(&comparisons, |r| r.mean_se, "mean_se")?)?;
        write_atomic(
            &out.join("plot_latency_vs_load.csv"),
            &load_curve_csv(&comparisons, |r| r.mean_latency_ms, "mean_latency_ms")?,
        )?;
    }
    Ok(SweepOutcome { cells: results, comparisons, errors })
}

/// Parse `N..M` (inclusive) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range start `{a}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range end `{b}`"))?;
        if b < a {
            return Err(format!("empty seed range {a}..{b}"));
        }
        return Ok((a..=b).collect());
    }
    let seeds: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad seed `{x}`")))
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_syntax() {
        assert_eq!(parse_seeds("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_seeds("3..=4").unwrap(), vec![3, 4]);
        assert_eq!(parse_seeds("7, 9").unwrap(), vec![7, 9]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
