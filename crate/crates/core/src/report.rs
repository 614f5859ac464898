//! Cross-run comparison and CSV / plot-data output.
//!
//! Every file starts with a block of `# ` lines holding the effective
//! scenario as TOML, so each CSV can be traced back to the run that made it.
//! Files are written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::config::to_toml;
use crate::metrics;
use crate::sim::{Aggregates, SimulationReport};
use crate::spec::{ScenarioSpec, SchedulerKind};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("need at least two reports to compare, got {0}")]
    TooFewReports(usize),
    #[error("reports differ in more than scheduler and seed (seed {a} vs seed {b})")]
    IncomparableSpecs { a: u64, b: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The parts of a report needed for comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub spec: ScenarioSpec,
    pub aggregates: Aggregates,
}

impl From<&SimulationReport> for RunSummary {
    fn from(r: &SimulationReport) -> Self {
        Self { spec: r.spec.clone(), aggregates: r.aggregates.clone() }
    }
}

/// Seed-averaged aggregates of one scheduler.
#[derive(Clone, Debug, PartialEq)]
pub struct SchedulerRow {
    pub scheduler: SchedulerKind,
    pub seeds: Vec<u64>,
    pub mean_se: Option<f64>,
    pub mean_latency_ms: Option<f64>,
    pub p95_latency_ms: Option<f64>,
    pub p99_latency_ms: Option<f64>,
    pub latency_variance_ms2: Option<f64>,
    pub mean_jain: Option<f64>,
    pub throughput_bps: f64,
    pub drop_fraction: Option<f64>,
    pub rejected_requests: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseDelta {
    pub scheduler: SchedulerKind,
    pub baseline: SchedulerKind,
    /// (SE_a − SE_b) / SE_b in percent.
    pub se_improvement_pct: Option<f64>,
    pub latency_delta_ms: Option<f64>,
    pub latency_variance_delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub spec: ScenarioSpec,
    pub rows: Vec<SchedulerRow>,
    /// Every ordered pair of rows, diagonal included.
    pub pairwise: Vec<PairwiseDelta>,
}

impl ComparisonTable {
    pub fn row(&self, s: SchedulerKind) -> Option<&SchedulerRow> {
        self.rows.iter().find(|r| r.scheduler == s)
    }

    pub fn delta(&self, scheduler: SchedulerKind, baseline: SchedulerKind) -> Option<&PairwiseDelta> {
        self.pairwise.iter().find(|p| p.scheduler == scheduler && p.baseline == baseline)
    }
}

fn mean_some(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    metrics::mean(&v)
}

/// Group runs by scheduler, average their aggregates across seeds and
/// compute pairwise deltas.
pub fn compare(runs: &[RunSummary]) -> Result<ComparisonTable, ReportError> {
    if runs.len() < 2 {
        return Err(ReportError::TooFewReports(runs.len()));
    }
    let first = &runs[0];
    for r in &runs[1..] {
        if !first.spec.comparable_with(&r.spec) {
            return Err(ReportError::IncomparableSpecs { a: first.spec.seed, b: r.spec.seed });
        }
    }
    let mut groups: BTreeMap<SchedulerKind, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.spec.scheduler).or_default().push(r);
    }
    let rows: Vec<SchedulerRow> = groups
        .into_iter()
        .map(|(scheduler, g)| {
            let a = |f: fn(&Aggregates) -> Option<f64>| mean_some(g.iter().map(|r| f(&r.aggregates)));
            SchedulerRow {
                scheduler,
                seeds: g.iter().map(|r| r.spec.seed).collect(),
                mean_se: a(|x| x.mean_se),
                mean_latency_ms: a(|x| x.mean_latency_ms),
                p95_latency_ms: a(|x| x.p95_latency_ms),
                p99_latency_ms: a(|x| x.p99_latency_ms),
                latency_variance_ms2: a(|x| x.latency_variance_ms2),
                mean_jain: a(|x| x.mean_jain),
                throughput_bps: a(|x| Some(x.throughput_bps)).unwrap_or(0.0),
                drop_fraction: a(|x| {
                    let total = x.dropped_packets + x.completed_packets;
                    (total > 0).then(|| x.dropped_packets as f64 / total as f64)
                }),
                rejected_requests: a(|x| Some(x.rejected_requests as f64)).unwrap_or(0.0),
            }
        })
        .collect();
    let mut pairwise = Vec::new();
    for a in &rows {
        for b in &rows {
            let diff = |x: Option<f64>, y: Option<f64>| x.zip(y).map(|(x, y)| x - y);
            pairwise.push(PairwiseDelta {
                scheduler: a.scheduler,
                baseline: b.scheduler,
                se_improvement_pct: a
                    .mean_se
                    .zip(b.mean_se)
                    .filter(|(_, y)| *y > 0.0)
                    .map(|(x, y)| (x - y) / y * 100.0),
                latency_delta_ms: diff(a.mean_latency_ms, b.mean_latency_ms),
                latency_variance_delta: diff(a.latency_variance_ms2, b.latency_variance_ms2),
            });
        }
    }
    Ok(ComparisonTable { spec: first.spec.clone(), rows, pairwise })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn spec_header(spec: &ScenarioSpec, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    for line in to_toml(spec).lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    for (k, v) in extra {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out
}

fn aggregate_lines(a: &Aggregates) -> Vec<(String, String)> {
    let o = |name: &str, v: Option<f64>| (format!("aggregate.{name}"), opt(v));
    vec![
        ("aggregate.measured_slots".into(), a.measured_slots.to_string()),
        ("aggregate.completed_packets".into(), a.completed_packets.to_string()),
        ("aggregate.dropped_packets".into(), a.dropped_packets.to_string()),
        o("mean_latency_ms", a.mean_latency_ms),
        o("p50_latency_ms", a.p50_latency_ms),
        o("p95_latency_ms", a.p95_latency_ms),
        o("p99_latency_ms", a.p99_latency_ms),
        o("latency_variance_ms2", a.latency_variance_ms2),
        o("mean_se", a.mean_se),
        o("mean_jain", a.mean_jain),
        o("throughput_bps", Some(a.throughput_bps)),
        ("aggregate.rejected_requests".into(), a.rejected_requests.to_string()),
    ]
}

/// Write `contents` to `path` through a temporary file in the same
/// directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn csv_body(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| ReportError::Io(e.into_error()))
}

/// Per-slot metrics, one row per slot.
pub fn slot_csv(report: &SimulationReport) -> Result<Vec<u8>, ReportError> {
    let mut out = spec_header(&report.spec, &aggregate_lines(&report.aggregates)).into_bytes();
    let scheduler = report.spec.scheduler.name();
    let rows = report.slots.iter().map(|s| {
        let mut lat = s.latency_samples_ms.clone();
        lat.sort_by(f64::total_cmp);
        vec![
            s.slot.to_string(),
            scheduler.to_string(),
            opt(s.mean_se),
            opt(metrics::percentile_sorted(&lat, 50.0)),
            opt(metrics::percentile_sorted(&lat, 95.0)),
            opt(s.jain),
            s.rejected_requests.to_string(),
            s.latency_samples_ms.len().to_string(),
            s.dropped_packets.to_string(),
            s.allocated_prbs.to_string(),
            s.delivered_bits.to_string(),
        ]
    });
    out.extend(csv_body(
        &[
            "slot",
            "scheduler",
            "mean_se",
            "p50_latency_ms",
            "p95_latency_ms",
            "jain",
            "rejected",
            "completed_packets",
            "dropped_packets",
            "allocated_prbs",
            "delivered_bits",
        ],
        rows,
    )?);
    Ok(out)
}

/// Orchestrator decisions, one row per request.
pub fn plan_csv(report: &SimulationReport) -> Result<Vec<u8>, ReportError> {
    let mut out = spec_header(&report.spec, &[]).into_bytes();
    let rows = report.plans.iter().map(|p| {
        vec![
            p.slot.to_string(),
            p.request_id.to_string(),
            format!("{:?}", p.functionality),
            format!("{:?}", p.latency_class),
            p.model_id.clone().unwrap_or_default(),
            p.host.map(|h| h.to_string()).unwrap_or_default(),
            p.app_type.map(|a| format!("{a:?}")).unwrap_or_default(),
            opt(p.control_latency_ms),
            if p.reject_reason.is_none() { "accepted" } else { "rejected" }.to_string(),
            p.reject_reason.map(|r| format!("{r:?}")).unwrap_or_default(),
        ]
    });
    out.extend(csv_body(
        &[
            "slot",
            "request_id",
            "functionality",
            "latency_class",
            "model_id",
            "host",
            "app_type",
            "control_latency_ms",
            "status",
            "reason",
        ],
        rows,
    )?);
    Ok(out)
}

/// Empirical latency CDF over the measured window at 1% steps.
pub fn latency_cdf_csv(report: &SimulationReport) -> Result<Vec<u8>, ReportError> {
    let mut lat: Vec<f64> = report
        .slots
        .iter()
        .filter(|s| s.slot >= report.spec.warmup_slots)
        .flat_map(|s| s.latency_samples_ms.iter().copied())
        .collect();
    lat.sort_by(f64::total_cmp);
    let mut out = spec_header(&report.spec, &[]).into_bytes();
    let scheduler = report.spec.scheduler.name();
    let rows = (1..=100).filter_map(|p| {
        metrics::percentile_sorted(&lat, p as f64)
            .map(|x| vec![scheduler.to_string(), x.to_string(), (p as f64 / 100.0).to_string()])
    });
    out.extend(csv_body(&["series", "latency_ms", "cdf"], rows)?);
    Ok(out)
}

pub fn comparison_csv(table: &ComparisonTable) -> Result<Vec<u8>, ReportError> {
    let seeds: Vec<String> = table
        .rows
        .iter()
        .flat_map(|r| r.seeds.iter())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|s| s.to_string())
        .collect();
    let extra = vec![
        ("compared_schedulers".to_string(), table.rows.iter().map(|r| r.scheduler.name()).collect::<Vec<_>>().join(",")),
        ("seeds".to_string(), seeds.join(",")),
    ];
    let mut out = spec_header(&table.spec, &extra).into_bytes();
    let mut header: Vec<String> = [
        "scheduler",
        "runs",
        "mean_se",
        "mean_latency_ms",
        "p95_latency_ms",
        "p99_latency_ms",
        "latency_variance_ms2",
        "mean_jain",
        "throughput_bps",
        "drop_fraction",
        "rejected_requests",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for b in &table.rows {
        header.push(format!("se_improvement_vs_{}_pct", b.scheduler.name()));
        header.push(format!("latency_delta_vs_{}_ms", b.scheduler.name()));
    }
    let rows = table.rows.iter().map(|r| {
        let mut row = vec![
            r.scheduler.name().to_string(),
            r.seeds.len().to_string(),
            opt(r.mean_se),
            opt(r.mean_latency_ms),
            opt(r.p95_latency_ms),
            opt(r.p99_latency_ms),
            opt(r.latency_variance_ms2),
            opt(r.mean_jain),
            r.throughput_bps.to_string(),
            opt(r.drop_fraction),
            r.rejected_requests.to_string(),
        ];
        for b in &table.rows {
            let d = table.delta(r.scheduler, b.scheduler).expect("all pairs present");
            row.push(opt(d.se_improvement_pct));
            row.push(opt(d.latency_delta_ms));
        }
        row
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.extend(csv_body(&header_refs, rows)?);
    Ok(out)
}

/// Curves over the load axis, one series per scheduler.
pub fn load_curve_csv(
    tables: &[(u32, ComparisonTable)],
    value: fn(&SchedulerRow) -> Option<f64>,
    y_name: &str,
) -> Result<Vec<u8>, ReportError> {
    let mut out = Vec::new();
    if let Some((_, t)) = tables.first() {
        let loads: Vec<String> = tables.iter().map(|(n, _)| n.to_string()).collect();
        out = spec_header(&t.spec, &[("loads".into(), loads.join(","))]).into_bytes();
    }
    let mut rows = Vec::new();
    for (n, t) in tables {
        for r in &t.rows {
            rows.push((r.scheduler, *n, value(r)));
        }
    }
    rows.sort_by_key(|(s, n, _)| (*s, *n));
    out.extend(csv_body(
        &["series", "n_ues", y_name],
        rows.into_iter().map(|(s, n, y)| vec![s.name().to_string(), n.to_string(), opt(y)]),
    )?);
    Ok(out)
}

/// Write the per-slot CSV, plan CSV and latency CDF of a single run.
pub fn write_run(report: &SimulationReport, dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("report.csv"), &slot_csv(report)?)?;
    write_atomic(&dir.join("plans.csv"), &plan_csv(report)?)?;
    write_atomic(&dir.join("plot_latency_cdf.csv"), &latency_cdf_csv(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::run;

    fn tiny(s: SchedulerKind, seed: u64) -> SimulationReport {
        run(ScenarioSpec { scheduler: s, seed, n_ues: 30, n_slots: 60, warmup_slots: 10, ..Default::default() })
            .unwrap()
    }

    #[test]
    fn self_comparison_is_zero() {
        let r = RunSummary::from(&tiny(SchedulerKind::RoundRobin, 1));
        let t = compare(&[r.clone(), r]).unwrap();
        assert_eq!(t.rows.len(), 1);
        for d in &t.pairwise {
            assert_eq!(d.se_improvement_pct, Some(0.0));
            assert_eq!(d.latency_delta_ms, Some(0.0));
        }
    }

    #[test]
    fn mismatched_specs_are_refused() {
        let a = RunSummary::from(&tiny(SchedulerKind::RoundRobin, 1));
        let mut b = a.clone();
        b.spec.n_ues = 31;
        assert!(matches!(compare(&[a.clone(), b]), Err(ReportError::IncomparableSpecs { .. })));
        assert!(matches!(compare(&[a]), Err(ReportError::TooFewReports(1))));
    }

    #[test]
    fn improvement_percentages() {
        let a = RunSummary::from(&tiny(SchedulerKind::RoundRobin, 1));
        let mut b = a.clone();
        b.spec.scheduler = SchedulerKind::OrchestRAN;
        b.aggregates.mean_se = a.aggregates.mean_se.map(|x| x * 1.2);
        let t = compare(&[a, b]).unwrap();
        let d = t.delta(SchedulerKind::OrchestRAN, SchedulerKind::RoundRobin).unwrap();
        assert!((d.se_improvement_pct.unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn csv_header_embeds_spec() {
        let r = tiny(SchedulerKind::ProportionalFair, 2);
        let bytes = slot_csv(&r).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let header: String = text
            .lines()
            .take_while(|l| l.starts_with("# "))
            .filter(|l| !l.starts_with("# aggregate."))
            .map(|l| format!("{}\n", &l[2..]))
            .collect();
        assert_eq!(crate::config::parse_config(&header).unwrap(), r.spec);
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        assert_eq!(rdr.records().count(), 60);
    }
}
