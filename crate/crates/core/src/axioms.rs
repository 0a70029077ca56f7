//! Audit of an outcome against the six cost-causation axioms.
//!
//! Every check is a pure function of the recorded outcome. Failures carry
//! witnesses naming the members involved and the offending values.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricing::community_payment;
use crate::welfare::{MemberOutcome, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axiom {
    IndividualRationality,
    ProfitNeutrality,
    Equity,
    Monotonicity,
    CostCausationPenalty,
    CostMitigationReward,
}

impl Axiom {
    pub const ALL: [Axiom; 6] = [
        Axiom::IndividualRationality,
        Axiom::ProfitNeutrality,
        Axiom::Equity,
        Axiom::Monotonicity,
        Axiom::CostCausationPenalty,
        Axiom::CostMitigationReward,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub members: Vec<String>,
    pub values: Vec<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub axiom: Axiom,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
    /// Cases on the edge of a strict inequality that are reported but do not
    /// fail the axiom: a zero volumetric rate gives zero adjusted payment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary_witnesses: Vec<Witness>,
    pub tolerance: f64,
}

impl AxiomReport {
    fn new(axiom: Axiom, tolerance: f64, witnesses: Vec<Witness>) -> Self {
        Self {
            axiom,
            passed: witnesses.is_empty(),
            witnesses,
            boundary_witnesses: Vec::new(),
            tolerance,
        }
    }
}

/// Community surplus must be at least the standalone benchmark surplus.
pub fn check_individual_rationality(
    outcome: &Outcome,
    benchmarks: &[MemberOutcome],
    tol: f64,
) -> Result<AxiomReport> {
    let by_id: HashMap<&str, &MemberOutcome> =
        benchmarks.iter().map(|b| (b.member_id.as_str(), b)).collect();
    if by_id.len() != benchmarks.len() || benchmarks.len() != outcome.members.len() {
        return Err(Error::MemberMismatch(format!(
            "{} outcome members vs {} benchmarks",
            outcome.members.len(),
            benchmarks.len()
        )));
    }
    let mut witnesses = Vec::new();
    for m in &outcome.members {
        let b = by_id.get(m.member_id.as_str()).ok_or_else(|| {
            Error::MemberMismatch(format!("no benchmark for member `{}`", m.member_id))
        })?;
        if m.surplus < b.surplus - tol {
            witnesses.push(Witness {
                members: vec![m.member_id.clone()],
                values: vec![m.surplus, b.surplus],
                note: "community surplus below benchmark surplus".into(),
            });
        }
    }
    Ok(AxiomReport::new(Axiom::IndividualRationality, tol, witnesses))
}

/// Operator profit: member payments minus the community bill recomputed from
/// the tariff at the members' aggregate net consumption.
pub fn operator_profit(outcome: &Outcome) -> f64 {
    let aggregate_net: f64 = outcome.members.iter().map(|m| m.net).sum();
    outcome.member_payments() - community_payment(&outcome.tariff, aggregate_net)
}

pub fn check_profit_neutrality(outcome: &Outcome, tol: f64) -> AxiomReport {
    let psi = operator_profit(outcome);
    let mut witnesses = Vec::new();
    if psi.is_nan() || psi.abs() > tol {
        witnesses.push(Witness {
            members: outcome.members.iter().map(|m| m.member_id.clone()).collect(),
            values: vec![psi],
            note: "operator profit is nonzero".into(),
        });
    }
    AxiomReport::new(Axiom::ProfitNeutrality, tol, witnesses)
}

/// Members with equal net consumption pay equally.
pub fn check_equity(outcome: &Outcome, tol: f64) -> AxiomReport {
    let rate = outcome.price.rate.abs();
    let mut witnesses = Vec::new();
    for_each_pair(&outcome.members, |i, j| {
        if (i.net - j.net).abs() <= tol && (i.payment - j.payment).abs() > tol * rate + tol {
            witnesses.push(Witness {
                members: vec![i.member_id.clone(), j.member_id.clone()],
                values: vec![i.net, j.net, i.payment, j.payment],
                note: "equal net consumption, unequal payment".into(),
            });
        }
    });
    AxiomReport::new(Axiom::Equity, tol, witnesses)
}

/// Among same-sign members, larger |net| means larger |adjusted payment|.
pub fn check_monotonicity(outcome: &Outcome, tol: f64) -> AxiomReport {
    let fixed = outcome.price.fixed_share;
    let mut witnesses = Vec::new();
    for_each_pair(&outcome.members, |i, j| {
        if i.net * j.net < 0.0 {
            return;
        }
        let (big, small) = if i.net.abs() >= j.net.abs() { (i, j) } else { (j, i) };
        let (pb, ps) = ((big.payment - fixed).abs(), (small.payment - fixed).abs());
        if pb < ps - tol {
            witnesses.push(Witness {
                members: vec![big.member_id.clone(), small.member_id.clone()],
                values: vec![big.net, small.net, pb, ps],
                note: "larger net consumption with smaller adjusted payment".into(),
            });
        }
    });
    AxiomReport::new(Axiom::Monotonicity, tol, witnesses)
}

fn for_each_pair<'a>(members: &'a [MemberOutcome], mut f: impl FnMut(&'a MemberOutcome, &'a MemberOutcome)) {
    for (k, i) in members.iter().enumerate() {
        for j in &members[k + 1..] {
            f(i, j);
        }
    }
}

/// Net consumers pay a positive adjusted payment (penalty) and net producers
/// receive one (reward). `|net| <= tol` counts as zero.
pub fn check_cost_causation(outcome: &Outcome, tol: f64) -> [AxiomReport; 2] {
    [
        sign_check(outcome, tol, Axiom::CostCausationPenalty, 1.0),
        sign_check(outcome, tol, Axiom::CostMitigationReward, -1.0),
    ]
}

fn sign_check(outcome: &Outcome, tol: f64, axiom: Axiom, sign: f64) -> AxiomReport {
    let fixed = outcome.price.fixed_share;
    let zero_rate = outcome.price.rate.abs() <= tol;
    let mut witnesses = Vec::new();
    let mut boundary = Vec::new();
    for m in &outcome.members {
        if m.net * sign <= tol {
            continue;
        }
        let adjusted = m.payment - fixed;
        if adjusted * sign > 0.0 {
            continue;
        }
        let w = Witness {
            members: vec![m.member_id.clone()],
            values: vec![m.net, adjusted],
            note: match axiom {
                Axiom::CostCausationPenalty => "net consumer not charged",
                _ => "net producer not rewarded",
            }
            .into(),
        };
        if zero_rate && adjusted.abs() <= tol {
            boundary.push(Witness {
                note: format!("{} at zero volumetric rate", w.note),
                ..w
            });
        } else {
            witnesses.push(w);
        }
    }
    let mut report = AxiomReport::new(axiom, tol, witnesses);
    report.boundary_witnesses = boundary;
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub passed: bool,
    pub reports: Vec<AxiomReport>,
}

impl AuditVerdict {
    pub fn failed(&self) -> impl Iterator<Item = Axiom> + '_ {
        self.reports.iter().filter(|r| !r.passed).map(|r| r.axiom)
    }
}

/// Run all six checks. Passing requires every axiom to pass.
pub fn audit(outcome: &Outcome, benchmarks: &[MemberOutcome], tol: f64) -> Result<AuditVerdict> {
    let [penalty, reward] = check_cost_causation(outcome, tol);
    let reports = vec![
        check_individual_rationality(outcome, benchmarks, tol)?,
        check_profit_neutrality(outcome, tol),
        check_equity(outcome, tol),
        check_monotonicity(outcome, tol),
        penalty,
        reward,
    ];
    Ok(AuditVerdict {
        passed: reports.iter().all(|r| r.passed),
        reports,
    })
}
