//! Monthly gains, reverse power flow series, and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::calibrate::CalibrationConfig;
use super::data::{format_timestamp, IntervalRecord};
use super::scenario::{MemberFigures, ScenarioRun};
use super::tariff::NettingPeriod;
use crate::error::{Error, Result};
use crate::pricing::Zone;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemberClass {
    All,
    Adopters,
    NonAdopters,
}

impl MemberClass {
    pub const ALL: [MemberClass; 3] = [MemberClass::All, MemberClass::Adopters, MemberClass::NonAdopters];

    pub fn as_str(&self) -> &'static str {
        match self {
            MemberClass::All => "all",
            MemberClass::Adopters => "adopters",
            MemberClass::NonAdopters => "non_adopters",
        }
    }

    fn includes(&self, adopter: bool) -> bool {
        match self {
            MemberClass::All => true,
            MemberClass::Adopters => adopter,
            MemberClass::NonAdopters => !adopter,
        }
    }
}

/// Monthly totals of one member class, community against benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyGain {
    /// `YYYY-MM`.
    pub month: String,
    pub class: MemberClass,
    pub members: usize,
    pub intervals: usize,
    pub community_surplus: f64,
    pub benchmark_surplus: f64,
    /// `community − benchmark` surplus.
    pub surplus_gain: f64,
    /// `surplus_gain / |benchmark_surplus|`, percent.
    pub surplus_gain_pct: Option<f64>,
    pub community_payment: f64,
    pub benchmark_payment: f64,
    /// `benchmark − community` payment.
    pub payment_gain: f64,
    pub payment_gain_pct: Option<f64>,
    /// A benchmark total was zero, so only absolute gains are reported.
    pub zero_denominator: bool,
    /// Whether the surplus gain is non-negative within the summed audit
    /// tolerances.
    pub surplus_gain_nonnegative: bool,
}

fn month_of(ts: &DateTime<Utc>) -> String {
    ts.format("%Y-%m").to_string()
}

#[derive(Default)]
struct Totals {
    intervals: usize,
    community: MemberFigures,
    benchmark: MemberFigures,
    tolerance: f64,
}

fn pct(gain: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * gain / base.abs())
}

/// Sum member surplus and payment per month and class. Classes without
/// members are omitted. Rows are ordered by month, then class.
pub fn compute_gains(run: &ScenarioRun) -> Vec<MonthlyGain> {
    let mut totals: BTreeMap<(String, MemberClass), Totals> = BTreeMap::new();
    for r in &run.intervals {
        let month = month_of(&r.start);
        for class in MemberClass::ALL {
            let members: Vec<usize> = (0..run.member_ids.len())
                .filter(|&i| class.includes(run.adopters[i]))
                .collect();
            if members.is_empty() {
                continue;
            }
            let t = totals.entry((month.clone(), class)).or_default();
            t.intervals += 1;
            t.tolerance += r.audit_tolerance * members.len() as f64;
            for i in members {
                t.community.surplus += r.community[i].surplus;
                t.community.payment += r.community[i].payment;
                t.benchmark.surplus += r.benchmark[i].surplus;
                t.benchmark.payment += r.benchmark[i].payment;
            }
        }
    }
    totals
        .into_iter()
        .map(|((month, class), t)| {
            let surplus_gain = t.community.surplus - t.benchmark.surplus;
            let payment_gain = t.benchmark.payment - t.community.payment;
            let surplus_gain_pct = pct(surplus_gain, t.benchmark.surplus);
            let payment_gain_pct = pct(payment_gain, t.benchmark.payment);
            MonthlyGain {
                month,
                class,
                members: run.adopters.iter().filter(|&&a| class.includes(a)).count(),
                intervals: t.intervals,
                community_surplus: t.community.surplus,
                benchmark_surplus: t.benchmark.surplus,
                surplus_gain,
                surplus_gain_pct,
                community_payment: t.community.payment,
                benchmark_payment: t.benchmark.payment,
                payment_gain,
                payment_gain_pct,
                zero_denominator: surplus_gain_pct.is_none() || payment_gain_pct.is_none(),
                surplus_gain_nonnegative: surplus_gain >= -t.tolerance,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RpfMode {
    /// Observed nets with no response to prices.
    Passive,
    /// Standalone NEM X optima.
    Benchmark,
    /// The community's flow at the point of common coupling.
    Community,
}

/// Reverse power flow per interval, kW.
///
/// Net-zero community intervals report zero: the flow there is balanced by
/// construction and any remainder is solver tolerance.
pub fn compute_rpf(run: &ScenarioRun, mode: RpfMode) -> Vec<f64> {
    run.intervals
        .iter()
        .map(|r| {
            let kwh = match mode {
                RpfMode::Passive => r.passive_nets.iter().map(|z| export_of(*z)).sum(),
                RpfMode::Benchmark => r.benchmark.iter().map(|m| export_of(m.net)).sum(),
                RpfMode::Community if r.price.zone == Zone::NetZero => 0.0,
                RpfMode::Community => export_of(r.aggregate_net),
            };
            kwh / r.hours()
        })
        .collect()
}

fn export_of(net: f64) -> f64 {
    (-net).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpfPoint {
    pub timestamp: DateTime<Utc>,
    pub passive_kw: f64,
    pub benchmark_kw: f64,
    pub community_kw: f64,
}

pub fn rpf_series(run: &ScenarioRun) -> Vec<RpfPoint> {
    let passive = compute_rpf(run, RpfMode::Passive);
    let benchmark = compute_rpf(run, RpfMode::Benchmark);
    let community = compute_rpf(run, RpfMode::Community);
    run.intervals
        .iter()
        .enumerate()
        .map(|(k, r)| RpfPoint {
            timestamp: r.start,
            passive_kw: passive[k],
            benchmark_kw: benchmark[k],
            community_kw: community[k],
        })
        .collect()
}

/// Passive reverse power flow straight from records, kW per netting interval.
pub fn passive_rpf(records: &[IntervalRecord], netting: NettingPeriod) -> Vec<(DateTime<Utc>, f64)> {
    let mut nets: BTreeMap<DateTime<Utc>, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in records {
        *nets
            .entry(netting.window_start(r.timestamp))
            .or_default()
            .entry(&r.member_id)
            .or_default() += r.load - r.generation;
    }
    nets.into_iter()
        .map(|(t, by_member)| (t, by_member.values().map(|z| export_of(*z)).sum::<f64>() / netting.hours()))
        .collect()
}

/// Months in which some member's data-resolution net changes sign within
/// one `window`.
pub fn sign_flip_months(records: &[IntervalRecord], window: NettingPeriod) -> BTreeSet<String> {
    let mut signs: BTreeMap<(DateTime<Utc>, &str), (bool, bool)> = BTreeMap::new();
    for r in records {
        let net = r.load - r.generation;
        let e = signs.entry((window.window_start(r.timestamp), &r.member_id)).or_default();
        e.0 |= net > 0.0;
        e.1 |= net < 0.0;
    }
    signs
        .into_iter()
        .filter(|(_, (pos, neg))| *pos && *neg)
        .map(|((t, _), _)| month_of(&t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneCounts {
    pub net_consuming: usize,
    pub net_zero: usize,
    pub net_producing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub netting: String,
    pub calibration: CalibrationConfig,
    pub seed: u64,
    pub members: usize,
    pub adopters: usize,
    pub intervals: usize,
    pub skipped_intervals: usize,
    pub zone_counts: ZoneCounts,
    pub audits_passed: usize,
    pub audits_failed: usize,
    pub max_abs_operator_profit: f64,
    pub surplus_gains_nonnegative: bool,
    pub monthly: Vec<MonthlyGain>,
}

impl ScenarioSummary {
    pub fn new(
        run: &ScenarioRun,
        monthly: Vec<MonthlyGain>,
        netting: NettingPeriod,
        calibration: CalibrationConfig,
        seed: u64,
    ) -> Self {
        let [nc, nz, np] = run.zone_counts();
        let passed = run.audits_passed();
        Self {
            netting: netting.to_string(),
            calibration,
            seed,
            members: run.member_ids.len(),
            adopters: run.adopters.iter().filter(|&&a| a).count(),
            intervals: run.intervals.len(),
            skipped_intervals: run.skipped.len(),
            zone_counts: ZoneCounts {
                net_consuming: nc,
                net_zero: nz,
                net_producing: np,
            },
            audits_passed: passed,
            audits_failed: run.intervals.len() - passed,
            max_abs_operator_profit: run.max_abs_operator_profit(),
            surplus_gains_nonnegative: monthly.iter().all(|m| m.surplus_gain_nonnegative),
            monthly,
        }
    }

    pub fn all_audits_passed(&self) -> bool {
        self.audits_failed == 0
    }

    /// One-line human summary.
    pub fn digest(&self) -> String {
        let z = &self.zone_counts;
        format!(
            "netting={} intervals={} skipped={} zones(NetConsuming,NetZero,NetProducing)=({},{},{}) audits={}/{} {} max|profit|={:e} surplus_gains_nonnegative={}",
            self.netting,
            self.intervals,
            self.skipped_intervals,
            z.net_consuming,
            z.net_zero,
            z.net_producing,
            self.audits_passed,
            self.intervals,
            if self.all_audits_passed() { "PASS" } else { "FAIL" },
            self.max_abs_operator_profit,
            self.surplus_gains_nonnegative,
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flush(w: csv::Writer<impl Write>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io("<csv writer>", e.into_error()))?
        .flush()
        .map_err(|e| Error::io("<csv writer>", e))
}

pub const MONTHLY_HEADER: [&str; 14] = [
    "month",
    "class",
    "members",
    "intervals",
    "community_surplus",
    "benchmark_surplus",
    "surplus_gain",
    "surplus_gain_pct",
    "community_payment",
    "benchmark_payment",
    "payment_gain",
    "payment_gain_pct",
    "zero_denominator",
    "surplus_gain_nonnegative",
];

pub fn write_monthly_csv<W: Write>(rows: &[MonthlyGain], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MONTHLY_HEADER)?;
    for r in rows {
        w.write_record([
            r.month.clone(),
            r.class.as_str().to_string(),
            r.members.to_string(),
            r.intervals.to_string(),
            r.community_surplus.to_string(),
            r.benchmark_surplus.to_string(),
            r.surplus_gain.to_string(),
            opt(r.surplus_gain_pct),
            r.community_payment.to_string(),
            r.benchmark_payment.to_string(),
            r.payment_gain.to_string(),
            opt(r.payment_gain_pct),
            r.zero_denominator.to_string(),
            r.surplus_gain_nonnegative.to_string(),
        ])?;
    }
    flush(w)
}

pub fn write_rpf_csv<W: Write>(points: &[RpfPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "passive_kw", "benchmark_kw", "community_kw"])?;
    for p in points {
        w.write_record([
            format_timestamp(&p.timestamp),
            p.passive_kw.to_string(),
            p.benchmark_kw.to_string(),
            p.community_kw.to_string(),
        ])?;
    }
    flush(w)
}

/// Per-interval, per-member community and benchmark figures.
pub fn write_outcomes_csv<W: Write>(run: &ScenarioRun, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "interval",
        "member_id",
        "zone",
        "rate",
        "d",
        "z",
        "payment",
        "surplus",
        "benchmark_d",
        "benchmark_z",
        "benchmark_payment",
        "benchmark_surplus",
    ])?;
    for r in &run.intervals {
        let start = format_timestamp(&r.start);
        for (i, id) in run.member_ids.iter().enumerate() {
            let (c, b) = (&r.community[i], &r.benchmark[i]);
            w.write_record([
                start.clone(),
                id.clone(),
                r.price.zone.to_string(),
                r.price.rate.to_string(),
                c.consumption.to_string(),
                c.net.to_string(),
                c.payment.to_string(),
                c.surplus.to_string(),
                b.consumption.to_string(),
                b.net.to_string(),
                b.payment.to_string(),
                b.surplus.to_string(),
            ])?;
        }
    }
    flush(w)
}
