//! Plain-text renderings of service reports.

use std::fmt::Write;

use pcmg_api::*;
use pcmg_core::balancer::BalancingPlan;
use pcmg_core::dtree::format_threshold;
use pcmg_core::lsgen::{Direction, Origin};

fn pct(f: f64) -> String {
    format_threshold(f * 100.0)
}

pub fn header(out: &mut String, command: &str, h: &ReportHeader) {
    let _ = writeln!(out, "pcmg {command}");
    let _ = writeln!(out, "scenario: {}", h.scenario);
    let _ = writeln!(out, "digest:   {}", h.digest);
    let _ = write!(out, "seed: {}  samples: {}", h.seed, h.samples);
    if !h.levels.is_empty() {
        let levels: Vec<String> = h.levels.iter().map(|&l| pct(l)).collect();
        let _ = write!(out, "  levels: {}", levels.join(","));
    }
    out.push_str("\n\n");
}

fn direction(d: Direction) -> &'static str {
    match d {
        Direction::Deficit => "deficit",
        Direction::Excess => "excess",
    }
}

fn origin(o: Origin) -> String {
    match o {
        Origin::DgLoss { bus } => format!("loss of DG at bus {bus}"),
        Origin::LoadDeviation => "load deviation".into(),
        Origin::Islanding => "islanding".into(),
    }
}

/// Best rule per level followed by every True rule in merit order.
pub fn plan(out: &mut String, p: &BalancingPlan) {
    let r = &p.requirement;
    let _ = writeln!(
        out,
        "{} balancing for hour {}: {:.1} kW ({})",
        direction(p.direction),
        p.hour,
        r.magnitude_kw,
        origin(r.origin)
    );
    if let Some(note) = &p.note {
        let _ = writeln!(out, "no schedule: {note}");
        return;
    }
    let _ = writeln!(out, "samples attempted: {}  skipped: {}\n", p.attempted, p.skipped);
    let _ = writeln!(out, "{:<16}  Rule", "DT Schedule");
    for l in &p.levels {
        let name = format!("Top-{}% profit", pct(l.top_pct));
        match l.rules.first() {
            Some(rule) => {
                let _ = writeln!(out, "{name:<16}  {rule}");
            }
            None => {
                let _ = writeln!(out, "{name:<16}  No rule could be extracted");
            }
        }
    }
    out.push('\n');
    for l in &p.levels {
        let _ = write!(
            out,
            "Top-{}%: threshold {:.4}, {:.1}% True",
            pct(l.top_pct),
            l.threshold,
            l.true_fraction * 100.0
        );
        if let Some(m) = &l.mr {
            let _ = write!(out, ", mr {:.2}%, mrr {:.2}% over {}", m.mr * 100.0, m.mrr * 100.0, m.test_size);
        }
        out.push('\n');
        for (i, rule) in l.rules.iter().enumerate() {
            let _ = writeln!(
                out,
                "  {}. {rule}  support {}, mean profit {:.4}",
                i + 1,
                rule.support,
                rule.mean_profit
            );
        }
    }
}

pub fn hour(r: &HourReport) -> String {
    let mut out = String::new();
    header(&mut out, "plan-hour", &r.header);
    plan(&mut out, &r.deficit);
    out.push('\n');
    plan(&mut out, &r.excess);
    out
}

pub fn islanding(r: &IslandingReport) -> String {
    let mut out = String::new();
    header(&mut out, "plan-islanding", &r.header);
    plan(&mut out, &r.plan);
    out
}

pub fn mr(r: &MrReport) -> String {
    let mut out = String::new();
    header(&mut out, "evaluate-mr", &r.header);
    let _ = writeln!(out, "repeats: {}\n", r.repeats);
    let mut rows = [
        format!("{:<14}", "Profit Level"),
        format!("{:<14}", "mr (%)"),
        format!("{:<14}", "mrr (%)"),
        format!("{:<14}", "runs"),
    ];
    for l in &r.levels {
        let _ = write!(rows[0], "{:>9}", format!("Top-{}%", pct(l.top_pct)));
        let _ = write!(rows[1], "{:>9.2}", l.mean_mr * 100.0);
        let _ = write!(rows[2], "{:>9.2}", l.mean_mrr * 100.0);
        let _ = write!(rows[3], "{:>9}", l.runs);
    }
    for row in rows {
        let _ = writeln!(out, "{}", row.trim_end());
    }
    out
}

pub fn storage(r: &StorageReport) -> String {
    let mut out = String::new();
    header(&mut out, "plan-storage", &r.header);
    let e = &r.events;
    let _ = writeln!(
        out,
        "events: load {}, pv {}, wind {}; {} combined instances, {} inside the {:.1} kW deadband\n",
        e.raw_load, e.raw_pv, e.raw_wind, e.combined, e.dropped, e.deadband_kw
    );
    let _ = writeln!(
        out,
        "{:>10}  {:>5}  {:>14}  {:>14}  {:>14}",
        "kWh", "SOC", "deficit", "excess", "total"
    );
    for row in &r.table.rows {
        let o = &row.option;
        let money = |v: f64| format!("£ {v:.2}");
        let (deficit, total) = if row.suitable {
            (money(row.deficit_cost), money(row.total_cost))
        } else {
            ("not suitable".to_string(), "not suitable".to_string())
        };
        let _ = writeln!(
            out,
            "{:>10}  {:>4}%  {:>14}  {:>14}  {:>14}",
            format_threshold(o.capacity_kwh),
            pct(o.preferred_soc),
            deficit,
            money(row.excess_cost),
            total
        );
    }
    out.push_str("\nrequirement bins (kW: events)\n");
    for (bin, n) in &r.table.bin_counts {
        let _ = writeln!(out, "  {} {:>6}: {n}", direction(bin.direction()), format_threshold(bin.magnitude_kw()));
    }
    out
}

pub fn distributed(r: &DistributedReport) -> String {
    let mut out = String::new();
    header(&mut out, "run-distributed", &r.header);
    let q = &r.requirement;
    let _ = writeln!(
        out,
        "requirement: {} {:.1} kW ({})",
        direction(q.direction),
        q.magnitude_kw,
        origin(q.origin)
    );
    let _ = writeln!(out, "attempted {}  kept {}  skipped {}", r.attempted, r.kept, r.skipped);
    let _ = writeln!(out, "learning set sha256: {}", r.ls_sha256);
    out
}

/// Endpoints, failovers and timings; kept out of the report files.
pub fn deployment(r: &DistributedReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "workers: {}", r.workers.join(", "));
    for f in &r.failovers {
        let _ = writeln!(
            out,
            "failover: [{}, {}) moved from {} to {} ({})",
            f.start, f.end, f.failed, f.reassigned_to, f.reason
        );
    }
    for t in &r.timings {
        let _ = writeln!(out, "  {} [{}, {}) {:.3} s", t.endpoint, t.start, t.end, t.seconds);
    }
    let _ = writeln!(out, "  wall {:.3} s", r.wall_seconds);
    out
}
