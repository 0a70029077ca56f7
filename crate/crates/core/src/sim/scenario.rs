//! Per-interval community and benchmark runs over a time series.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrate::CalibratedMember;
use super::data::{format_timestamp, IntervalRecord};
use super::tariff::{NettingPeriod, TouSchedule};
use crate::axioms::{audit, Axiom};
use crate::error::{Error, Result};
use crate::model::{Community, Member, NemTariff};
use crate::pricing::{CommunityPrice, Zone};
use crate::welfare::{benchmark_outcomes, decentralized_outcome_with_tol, MemberOutcome};

/// Solver tolerance relative to `max(1, Σ upper)`.
const SOLVER_REL_TOL: f64 = 1e-12;
/// Audit tolerance relative to `max(1, Σ upper)`.
const AUDIT_REL_TOL: f64 = 1e-9;

/// One netting interval ready to price.
#[derive(Debug, Clone)]
pub struct IntervalInput {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub tariff: NemTariff,
    /// Members in a fixed order shared by every interval of a run.
    pub community: Community,
    /// Observed `Σ load − Σ generation` per member.
    pub passive_nets: Vec<f64>,
}

/// Totals of one member in one interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MemberFigures {
    pub consumption: f64,
    pub net: f64,
    pub payment: f64,
    pub surplus: f64,
}

impl From<&MemberOutcome> for MemberFigures {
    fn from(o: &MemberOutcome) -> Self {
        Self {
            consumption: o.total_consumption(),
            net: o.net,
            payment: o.payment,
            surplus: o.surplus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub tariff: NemTariff,
    pub price: CommunityPrice,
    pub generation: f64,
    pub aggregate_net: f64,
    pub community_payment: f64,
    pub operator_profit: f64,
    pub welfare: f64,
    /// Same order as [`ScenarioRun::member_ids`].
    pub community: Vec<MemberFigures>,
    pub benchmark: Vec<MemberFigures>,
    pub passive_nets: Vec<f64>,
    pub audit_tolerance: f64,
    pub failed_axioms: Vec<Axiom>,
}

impl IntervalResult {
    pub fn hours(&self) -> f64 {
        (self.end - self.start).num_seconds() as f64 / 3600.0
    }

    pub fn audit_passed(&self) -> bool {
        self.failed_axioms.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedInterval {
    pub start: DateTime<Utc>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub member_ids: Vec<String>,
    /// Whether each member generates in any interval.
    pub adopters: Vec<bool>,
    /// Ordered by start time.
    pub intervals: Vec<IntervalResult>,
    pub skipped: Vec<SkippedInterval>,
}

impl ScenarioRun {
    /// Interval counts for NetConsuming, NetZero, NetProducing.
    pub fn zone_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for r in &self.intervals {
            counts[Zone::ALL.iter().position(|z| *z == r.price.zone).expect("known zone")] += 1;
        }
        counts
    }

    pub fn audits_passed(&self) -> usize {
        self.intervals.iter().filter(|r| r.audit_passed()).count()
    }

    pub fn max_abs_operator_profit(&self) -> f64 {
        self.intervals.iter().map(|r| r.operator_profit.abs()).fold(0.0, f64::max)
    }
}

/// Price every interval and audit it against the benchmark. Intervals run
/// in parallel; results keep the input order.
pub fn run_intervals(inputs: &[IntervalInput]) -> Result<ScenarioRun> {
    let member_ids: Vec<String> = match inputs.first() {
        Some(first) => first.community.members.iter().map(|m| m.id.clone()).collect(),
        None => Vec::new(),
    };
    for input in inputs {
        let ids = input.community.members.iter().map(|m| &m.id);
        if ids.ne(member_ids.iter()) || input.passive_nets.len() != member_ids.len() {
            return Err(Error::MemberMismatch(format!(
                "interval {} does not list the run's members in order",
                format_timestamp(&input.start)
            )));
        }
    }
    let intervals = inputs.par_iter().map(solve_interval).collect::<Result<Vec<_>>>()?;
    let adopters = (0..member_ids.len())
        .map(|i| inputs.iter().any(|x| x.community.members[i].generation > 0.0))
        .collect();
    Ok(ScenarioRun {
        member_ids,
        adopters,
        intervals,
        skipped: Vec::new(),
    })
}

fn solve_interval(input: &IntervalInput) -> Result<IntervalResult> {
    let scale = input.community.upper_total().max(1.0);
    let generation = input.community.generation();
    let outcome = decentralized_outcome_with_tol(&input.community, generation, &input.tariff, SOLVER_REL_TOL * scale)?;
    let benchmarks = benchmark_outcomes(&input.community, &input.tariff)?;
    let audit_tolerance = AUDIT_REL_TOL * scale;
    let verdict = audit(&outcome, &benchmarks, audit_tolerance)?;
    let failed_axioms: Vec<Axiom> = verdict.failed().collect();
    if !failed_axioms.is_empty() {
        log::error!(
            "interval {} failed {:?}",
            format_timestamp(&input.start),
            failed_axioms
        );
    }
    Ok(IntervalResult {
        start: input.start,
        end: input.end,
        tariff: input.tariff,
        price: outcome.price,
        generation,
        aggregate_net: outcome.aggregate_net,
        community_payment: outcome.community_payment,
        operator_profit: outcome.operator_profit,
        welfare: outcome.welfare,
        community: outcome.members.iter().map(MemberFigures::from).collect(),
        benchmark: benchmarks.iter().map(MemberFigures::from).collect(),
        passive_nets: input.passive_nets.clone(),
        audit_tolerance,
        failed_axioms,
    })
}

/// Group records into netting intervals and build each interval's community.
///
/// A member gets one device per data sub-interval, anchored so its demand at
/// the retail rate equals the observed load. Intervals where any member lacks
/// a sub-interval are skipped.
pub fn build_intervals(
    records: &[IntervalRecord],
    schedule: &TouSchedule,
    netting: NettingPeriod,
    resolution_minutes: u32,
    members: &[CalibratedMember],
) -> Result<(Vec<IntervalInput>, Vec<SkippedInterval>)> {
    let per_window = netting.sub_intervals(resolution_minutes)? as usize;
    let index: BTreeMap<&str, usize> = members.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();

    let mut windows: BTreeMap<DateTime<Utc>, Vec<Vec<&IntervalRecord>>> = BTreeMap::new();
    for r in records {
        let Some(&i) = index.get(r.member_id.as_str()) else {
            return Err(Error::MemberMismatch(format!("member `{}` was not calibrated", r.member_id)));
        };
        windows
            .entry(netting.window_start(r.timestamp))
            .or_insert_with(|| vec![Vec::new(); members.len()])[i]
            .push(r);
    }

    let mut inputs = Vec::with_capacity(windows.len());
    let mut skipped = Vec::new();
    for (start, by_member) in windows {
        let missing: Vec<String> = by_member
            .iter()
            .zip(members)
            .filter(|(rs, _)| rs.len() != per_window)
            .map(|(_, m)| m.id.clone())
            .collect();
        if !missing.is_empty() {
            log::warn!("skipping interval {}: incomplete data for {:?}", format_timestamp(&start), missing);
            skipped.push(SkippedInterval { start, missing });
            continue;
        }
        let end = start + Duration::minutes(netting.minutes as i64);
        let tariff = schedule.tariff_at(start, end);
        let mut community = Vec::with_capacity(members.len());
        let mut passive_nets = Vec::with_capacity(members.len());
        for (rs, cal) in by_member.iter().zip(members) {
            let devices = rs
                .iter()
                .map(|r| cal.device_for(r.timestamp.hour(), r.load, tariff.retail))
                .collect();
            let load: f64 = rs.iter().map(|r| r.load).sum();
            let generation: f64 = rs.iter().map(|r| r.generation).sum();
            community.push(Member::new(cal.id.clone(), devices, generation)?);
            passive_nets.push(load - generation);
        }
        inputs.push(IntervalInput {
            start,
            end,
            tariff,
            community: Community::new(community)?,
            passive_nets,
        });
    }
    Ok((inputs, skipped))
}

/// Build, price, and audit every netting interval of `records`.
pub fn run_scenario(
    records: &[IntervalRecord],
    schedule: &TouSchedule,
    netting: NettingPeriod,
    resolution_minutes: u32,
    members: &[CalibratedMember],
) -> Result<ScenarioRun> {
    let (inputs, skipped) = build_intervals(records, schedule, netting, resolution_minutes, members)?;
    let mut run = run_intervals(&inputs)?;
    if run.member_ids.is_empty() {
        run.member_ids = members.iter().map(|m| m.id.clone()).collect();
        run.adopters = vec![false; members.len()];
    }
    run.skipped = skipped;
    Ok(run)
}
