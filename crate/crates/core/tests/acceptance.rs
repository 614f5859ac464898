//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. The
//! process fails if any criterion outside `KNOWN_UNMET` fails, or if a
//! known-unmet criterion starts passing (so the list cannot go stale).

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use airan_core::catalog::default_catalog;
use airan_core::channel::{draw_realization, path_loss_db, ChannelConfig, LinkGeometry};
use airan_core::orchestrator::{apply_plan, plan, OrchestratorConfig};
use airan_core::report::ComparisonTable;
use airan_core::rng::{substream, Stream};
use airan_core::sched::{schedule_maxmin, UeDemand};
use airan_core::sim::Simulation;
use airan_core::spec::{ScenarioSpec, SchedulerKind};
use airan_core::sweep::{run_sweep, SweepPlan};
use airan_core::topology::{build_topology, TopologyConfig};
use airan_core::traffic::{generate_requests, LatencyClass, TrafficConfig, UeId};

/// Criteria the model does not meet; the analysis is in the README.
const KNOWN_UNMET: &[u32] = &[2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SCHEDULERS: [SchedulerKind; 4] = SchedulerKind::ALL;

fn comparison_sweep(out: &Path) -> BTreeMap<u32, ComparisonTable> {
    let plan = SweepPlan {
        base: ScenarioSpec::default(),
        schedulers: SCHEDULERS.iter().map(|s| s.name().to_string()).collect(),
        seeds: SEEDS.to_vec(),
        loads: vec![200, 400],
        jobs: 0,
    };
    let outcome = run_sweep(&plan, out).expect("sweep runs");
    assert!(outcome.all_succeeded(), "sweep errors: {:?}", outcome.errors);
    outcome.comparisons.into_iter().collect()
}

fn se(t: &ComparisonTable, s: SchedulerKind) -> f64 {
    t.row(s).and_then(|r| r.mean_se).expect("SE for every scheduler")
}

fn criterion_1(t: &ComparisonTable) -> Verdict {
    use SchedulerKind::*;
    let o = se(t, OrchestRAN);
    let (rr, pf, mm) = (se(t, RoundRobin), se(t, ProportionalFair), se(t, MaxMinFairness));
    let pass = o >= 1.10 * rr && o >= 1.05 * pf && o >= 1.05 * mm;
    verdict(
        pass,
        format!(
            "400 UEs, {} seeds: SE OrchestRAN {o:.4}, RR {rr:.4} (x{:.3}), PF {pf:.4} (x{:.3}), MMF {mm:.4} (x{:.3}); need x1.10/x1.05/x1.05",
            SEEDS.len(),
            o / rr,
            o / pf,
            o / mm
        ),
    )
}

fn criterion_2(t: &ComparisonTable) -> Verdict {
    use SchedulerKind::*;
    let lat = |s| t.row(s).and_then(|r| r.mean_latency_ms).expect("latency for every scheduler");
    let var = |s| t.row(s).and_then(|r| r.latency_variance_ms2).expect("variance for every scheduler");
    let o = lat(OrchestRAN);
    let latency_ok = [RoundRobin, ProportionalFair, MaxMinFairness].iter().all(|&s| o < lat(s));
    let variance_ok = [ProportionalFair, MaxMinFairness, OrchestRAN].iter().all(|&s| var(RoundRobin) > var(s));
    let cols: Vec<String> = SCHEDULERS
        .iter()
        .map(|&s| format!("{} {:.3} ms / {:.1} ms^2", s.name(), lat(s), var(s)))
        .collect();
    verdict(
        latency_ok && variance_ok,
        format!(
            "200 UEs, {} seeds: mean/variance {}; OrchestRAN lowest mean: {latency_ok}; RR largest variance: {variance_ok}",
            SEEDS.len(),
            cols.join(", ")
        ),
    )
}

/// (d2d, h_bs, h_ut, fc_ghz, los, expected dB). Expected values evaluated
/// by hand from the UMa closed forms with c = 3.0e8 m/s and h_E = 1 m:
///   d'BP = 4 (h_bs - 1)(h_ut - 1) fc / c
///   PL1  = 28 + 22 log10(d3d) + 20 log10(fc)                 d2d <= d'BP
///   PL2  = 28 + 40 log10(d3d) + 20 log10(fc)
///          - 9 log10(d'BP^2 + (h_bs - h_ut)^2)                d2d >  d'BP
///   NLOS = max(PL_LOS, 13.54 + 39.08 log10(d3d) + 20 log10(fc) - 0.6 (h_ut - 1.5))
const PATH_LOSS_FIXTURES: [(f64, f64, f64, f64, bool, f64); 10] = [
    // d3d 25.5392, d'BP 4480: PL1 = 28 + 30.9586 + 28.9432
    (10.0, 25.0, 1.5, 28.0, true, 87.9017),
    // d3d 67.2402: PL1 = 28 + 40.2078 + 28.9432
    (63.0, 25.0, 1.5, 28.0, true, 97.1510),
    // NLOS' = 13.54 + 71.4237 + 28.9432 > PL1
    (63.0, 25.0, 1.5, 28.0, false, 113.9069),
    // d3d 251.1021: PL1 = 28 + 52.7967 + 28.9432
    (250.0, 25.0, 1.5, 28.0, true, 109.7399),
    // NLOS' = 13.54 + 93.7861 + 28.9432
    (250.0, 25.0, 1.5, 28.0, false, 136.2693),
    // d3d 1000.2761: NLOS' = 13.54 + 117.2446 + 28.9432
    (1000.0, 25.0, 1.5, 28.0, false, 159.7278),
    // beyond d'BP = 4480: PL2 = 28 + 147.2499 + 28.9432 - 65.7231
    (4800.0, 25.0, 1.5, 28.0, true, 138.4699),
    // fc 3.5 GHz, d'BP 560, d3d 300.9190: PL1 = 28 + 54.5259 + 10.8814
    (300.0, 25.0, 1.5, 3.5, true, 93.4073),
    // beyond d'BP = 560, d3d 900.3068: PL2 = 28 + 118.1756 + 10.8814 - 49.4743
    (900.0, 25.0, 1.5, 3.5, true, 107.5827),
    // h_ut 10 m, d'BP 10080, d3d 900.1250: NLOS' = 13.54 + 115.4542 + 10.8814 - 5.1
    (900.0, 25.0, 10.0, 3.5, false, 134.7755),
];

fn criterion_3() -> Verdict {
    let mut worst: f64 = 0.0;
    for (d2d, h_bs, h_ut, fc, los, expected) in PATH_LOSS_FIXTURES {
        let got = path_loss_db(&LinkGeometry::new(d2d, h_bs, h_ut, fc), los).expect("inside validity range");
        worst = worst.max((got - expected).abs());
    }
    verdict(worst <= 0.01, format!("10 geometries, worst |error| {worst:.5} dB (tolerance 0.01 dB)"))
}

fn exhaustive_max_min(rates: &[u32], prbs: u32) -> u32 {
    fn go(rates: &[u32], left: u32, cur: u32) -> u32 {
        match rates.split_first() {
            None => cur,
            Some((r, rest)) => (0..=left).map(|n| go(rest, left - n, cur.min(n * r))).max().unwrap_or(cur),
        }
    }
    go(rates, prbs, u32::MAX)
}

fn criterion_4() -> Verdict {
    let start = std::time::Instant::now();
    let mut instances = 0u32;
    let mut mismatches = 0u32;
    for n_ues in 1..=4u32 {
        for code in 0..3u32.pow(n_ues) {
            let rates: Vec<u32> = (0..n_ues).map(|i| code / 3u32.pow(i) % 3 + 1).collect();
            for prbs in 0..=12 {
                let demands: Vec<UeDemand> = rates
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| UeDemand {
                        ue: UeId(i as u32),
                        bits_per_prb: r as f64,
                        backlog_bits: u64::MAX / 4,
                        hol_delay_ms: 0.0,
                    })
                    .collect();
                let alloc = schedule_maxmin(&demands, prbs);
                let got = rates.iter().enumerate().map(|(i, r)| alloc.get(UeId(i as u32)) * r).min().unwrap_or(0);
                instances += 1;
                if got != exhaustive_max_min(&rates, prbs) || alloc.allocated() > prbs {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed.as_secs_f64() < 1.0,
        format!("{instances} instances enumerated, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

#[derive(Default)]
struct Violations {
    prb: u64,
    backlog: u64,
    shannon: u64,
    capacity: u64,
    work: u64,
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5107);
    let mut v = Violations::default();
    let mut slots = 0u64;
    let mut ue_slots = 0u64;
    while slots < 10_000 {
        let n_slots = 1000;
        let spec = ScenarioSpec {
            seed: rng.random(),
            scheduler: SCHEDULERS[rng.random_range(0..SCHEDULERS.len())],
            n_ues: rng.random_range(10..=300),
            n_slots,
            warmup_slots: 0,
            requests_per_slot: rng.random_range(0..=200),
            ..ScenarioSpec::default()
        };
        let prb_hz = spec.radio.prb_bandwidth_hz();
        let slot_s = spec.slot_duration_ms / 1000.0;
        let mut sim = Simulation::new(spec).expect("valid randomized spec");
        for _ in 0..n_slots {
            let t = sim.step().expect("engine accepts its own slot");
            slots += 1;
            let mut per_cell: BTreeMap<_, u32> = BTreeMap::new();
            for u in &t.ues {
                ue_slots += 1;
                *per_cell.entry(u.ru).or_default() += u.prbs;
                let inflow = u.backlog_before + u.arrived_bits;
                if inflow < u.dropped_bits + u.served_bits
                    || u.backlog_after != inflow - u.dropped_bits - u.served_bits
                    || u.queued_bits != u.backlog_after
                {
                    v.backlog += 1;
                }
                let shannon = u.prbs as f64 * prb_hz * slot_s * (1.0 + 10f64.powf(u.sinr_db / 10.0)).log2();
                if u.served_bits as f64 > shannon * (1.0 + 1e-12) {
                    v.shannon += 1;
                }
            }
            for c in &t.cells {
                let granted = per_cell.get(&c.ru).copied().unwrap_or(0);
                if granted != c.allocated_prbs || c.allocated_prbs > c.total_prbs {
                    v.prb += 1;
                }
                // a cell with spare PRBs must have cleared every servable UE
                if c.allocated_prbs < c.total_prbs
                    && t.ues.iter().any(|u| u.ru == c.ru && u.spectral_efficiency > 0.0 && u.prbs < u.demand_prbs)
                {
                    v.work += 1;
                }
            }
            v.capacity += t.compute.iter().filter(|c| c.used > c.capacity).count() as u64;
        }
    }
    let total = v.prb + v.backlog + v.shannon + v.capacity + v.work;
    verdict(
        total == 0,
        format!(
            "{slots} slots, {ue_slots} UE-slots: violations PRB {}, backlog {}, Shannon {}, capacity {}, work {}",
            v.prb, v.backlog, v.shannon, v.capacity, v.work
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c1a55);
    let catalog = default_catalog();
    let (mut requests, mut accepted_rt, mut bad_class, mut bad_partition, mut bad_capacity, mut bad_control) =
        (0usize, 0usize, 0usize, 0usize, 0usize, 0usize);
    for batch in 0..1000u64 {
        let mut topology =
            build_topology(&TopologyConfig::default(), &mut substream(batch, Stream::Topology, 0, 0)).expect("default");
        let traffic = TrafficConfig { location_constraint_prob: rng.random(), ..TrafficConfig::default() };
        let cfg = OrchestratorConfig { allow_cu_hosts: rng.random() };
        let load = rng.random_range(1..=300);
        let reqs = generate_requests(&mut rng, batch, load, &traffic, &topology);
        let p = plan(&reqs, &catalog, &topology, &cfg).expect("plan");
        requests += reqs.len();
        if p.accepted.len() + p.rejected.len() != reqs.len() {
            bad_partition += 1;
        }
        for d in &p.accepted {
            let control = d
                .target_rus
                .iter()
                .map(|ru| topology.control_loop_latency(d.host, *ru).expect("host above target"))
                .fold(0.0, f64::max);
            if (control - d.control_latency_ms).abs() > 1e-12 {
                bad_control += 1;
            }
            if d.latency_class == LatencyClass::RealTime {
                accepted_rt += 1;
                if control + d.inference_latency_ms > 10.0 {
                    bad_class += 1;
                }
            }
        }
        apply_plan(&mut topology, &p).expect("fresh plan applies");
        bad_capacity += topology.nodes().iter().filter(|n| n.compute_used > n.compute_capacity).count();
    }
    verdict(
        bad_class + bad_partition + bad_capacity + bad_control == 0,
        format!(
            "1000 batches, {requests} requests, {accepted_rt} RealTime accepted: class violations {bad_class}, partition violations {bad_partition}, control-latency mismatches {bad_control}, over-capacity nodes {bad_capacity}"
        ),
    )
}

fn criterion_7(multi_load_dir: &Path, scratch: &Path) -> Verdict {
    // the same runs again, serially and as a single-load sweep
    let plan = SweepPlan {
        base: ScenarioSpec::default(),
        schedulers: vec!["OrchestRAN".into(), "RoundRobin".into()],
        seeds: vec![1],
        loads: vec![],
        jobs: 1,
    };
    let outcome = run_sweep(&plan, scratch).expect("sweep runs");
    let mut compared = 0;
    let mut differing = Vec::new();
    for s in ["OrchestRAN", "RoundRobin"] {
        for (a, b) in [
            (format!("report_{s}_n200_seed1.csv"), format!("report_{s}_seed1.csv")),
            (format!("plot_latency_cdf_{s}_n200_seed1.csv"), format!("plot_latency_cdf_{s}_seed1.csv")),
        ] {
            let x = std::fs::read(multi_load_dir.join(&a)).expect("parallel sweep output");
            let y = std::fs::read(scratch.join(&b)).expect("serial sweep output");
            compared += 1;
            if x != y {
                differing.push(b);
            }
        }
    }
    verdict(
        outcome.all_succeeded() && differing.is_empty(),
        format!("{compared} CSV pairs from jobs=0 vs jobs=1 runs of the default scenario; differing: {differing:?}"),
    )
}

fn criterion_8() -> Verdict {
    let cfg = ChannelConfig::default();
    let geom = LinkGeometry::new(63.0, 25.0, 1.5, cfg.fc_ghz);
    let mut rng = substream(8, Stream::LargeScale, 0, 0);
    let draws = 100_000;
    let mut los = 0usize;
    let mut nlos_shadow = Vec::new();
    for _ in 0..draws {
        let r = draw_realization(&geom, &cfg, &mut rng).expect("valid geometry");
        if r.los {
            los += 1;
        } else {
            nlos_shadow.push(r.shadow_db);
        }
    }
    let frac = los as f64 / draws as f64;
    let n = nlos_shadow.len() as f64;
    let mean = nlos_shadow.iter().sum::<f64>() / n;
    let sigma = (nlos_shadow.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    verdict(
        (frac - 0.5485).abs() <= 0.01 && (sigma - 6.0).abs() <= 0.1,
        format!("{draws} draws at 63 m: LOS fraction {frac:.4} (target 0.5485 +- 0.01), NLOS shadow sigma {sigma:.3} dB (target 6 +- 0.1)"),
    )
}

fn main() {
    // `cargo test -- --list` and filters from other targets must not start the suite
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }

    let sweep_dir = tempfile::tempdir().expect("temp dir");
    let scratch = tempfile::tempdir().expect("temp dir");
    let tables = comparison_sweep(sweep_dir.path());

    let results: Vec<(u32, Verdict)> = vec![
        (1, criterion_1(&tables[&400])),
        (2, criterion_2(&tables[&200])),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7(sweep_dir.path(), scratch.path())),
        (8, criterion_8()),
    ];

    let mut unexpected = Vec::new();
    for (n, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && KNOWN_UNMET.contains(n) { " (known, see README)" } else { "" };
        println!("criterion {n}: {tag}{note}: {}", v.detail);
        if v.pass == KNOWN_UNMET.contains(n) {
            unexpected.push(*n);
        }
    }
    let passed = results.iter().filter(|(_, v)| v.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if !unexpected.is_empty() {
        eprintln!("criteria with an unexpected outcome: {unexpected:?}");
        std::process::exit(1);
    }
}
