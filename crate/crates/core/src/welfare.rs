//! Centralized and decentralized community optima, the standalone NEM X
//! benchmark, and surplus accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Community, Member, NemTariff};
use crate::pricing::{
    self, benchmark_payment, community_payment, compute_thresholds, member_payment,
    CommunityPrice, Thresholds, Zone, NET_ZERO_REL_TOL,
};

/// One member's decisions and money for a pricing interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberOutcome {
    pub member_id: String,
    /// Consumption per device, kWh.
    pub consumption: Vec<f64>,
    pub generation: f64,
    /// Net consumption `Σ consumption − generation`, kWh.
    pub net: f64,
    pub payment: f64,
    /// Utility of `consumption` minus `payment`.
    pub surplus: f64,
}

impl MemberOutcome {
    pub fn total_consumption(&self) -> f64 {
        self.consumption.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub price: CommunityPrice,
    pub tariff: NemTariff,
    /// Aggregate generation `g_H`.
    pub generation: f64,
    pub members: Vec<MemberOutcome>,
    /// Net consumption at the point of common coupling, `Σ net`.
    pub aggregate_net: f64,
    /// The community's NEM X bill.
    pub community_payment: f64,
    pub welfare: f64,
    /// Member payments collected minus the community bill.
    pub operator_profit: f64,
}

impl Outcome {
    pub fn member_payments(&self) -> f64 {
        self.members.iter().map(|m| m.payment).sum()
    }

    pub fn member(&self, id: &str) -> Option<&MemberOutcome> {
        self.members.iter().find(|m| m.member_id == id)
    }
}

/// `max{d_plus, min{g, d_minus}}`.
pub fn optimal_aggregate_consumption(community: &Community, generation: f64, tariff: &NemTariff) -> f64 {
    compute_thresholds(community, tariff).clamp(generation)
}

/// Solve the operator's welfare program in closed form.
///
/// Consumptions are the zone-appropriate clamped demands. The community bill
/// is evaluated from the thresholds rather than from the member nets, and
/// welfare is total utility minus that bill. Member transfers are valued at
/// the multiplier of the aggregate balance, using each member's own
/// `generation` field for its net.
pub fn centralized_optimum(community: &Community, generation: f64, tariff: &NemTariff) -> Result<Outcome> {
    let thresholds = compute_thresholds(community, tariff);
    let zone = thresholds.zone(generation);
    let multiplier = match zone {
        Zone::NetConsuming => tariff.retail,
        Zone::NetProducing => tariff.export,
        Zone::NetZero => {
            pricing::solve_net_zero_price(
                community,
                generation,
                tariff,
                pricing::default_tolerance(community),
            )?
            .price
        }
    };
    let price = CommunityPrice {
        zone,
        rate: multiplier,
        fixed_share: tariff.fixed / community.len() as f64,
    };

    let members: Vec<MemberOutcome> = community
        .members
        .iter()
        .map(|m| member_best_response(m, &price))
        .collect();
    let total_utility: f64 = community
        .members
        .iter()
        .zip(&members)
        .map(|(m, o)| m.utility(&o.consumption))
        .sum();
    let bill = optimal_community_bill(&thresholds, generation, tariff);
    let aggregate_net = members.iter().map(|m| m.total_consumption()).sum::<f64>() - generation;
    let collected: f64 = members.iter().map(|m| m.payment).sum();

    Ok(Outcome {
        price,
        tariff: *tariff,
        generation,
        members,
        aggregate_net,
        community_payment: bill,
        welfare: total_utility - bill,
        operator_profit: collected - bill,
    })
}

/// Community bill under optimal decisions, as a function of generation only.
fn optimal_community_bill(thresholds: &Thresholds, generation: f64, tariff: &NemTariff) -> f64 {
    let volumetric = match thresholds.zone(generation) {
        Zone::NetConsuming => tariff.retail * (thresholds.d_plus - generation),
        Zone::NetZero => 0.0,
        Zone::NetProducing => tariff.export * (thresholds.d_minus - generation),
    };
    tariff.fixed + volumetric
}

/// Member surplus maximization under an announced price.
pub fn member_best_response(member: &Member, price: &CommunityPrice) -> MemberOutcome {
    let consumption: Vec<f64> = member.devices.iter().map(|d| d.demand_at(price.rate)).collect();
    let net = consumption.iter().sum::<f64>() - member.generation;
    let payment = member_payment(price, net);
    let surplus = member.utility(&consumption) - payment;
    MemberOutcome {
        member_id: member.id.clone(),
        consumption,
        generation: member.generation,
        net,
        payment,
        surplus,
    }
}

/// Announce the Dynamic NEM price for `generation` and let every member
/// best-respond. `generation` must equal the members' total generation.
pub fn decentralized_outcome(community: &Community, generation: f64, tariff: &NemTariff) -> Result<Outcome> {
    decentralized_outcome_with_tol(community, generation, tariff, pricing::default_tolerance(community))
}

/// [`decentralized_outcome`] with an explicit net-zero solver tolerance, kWh.
pub fn decentralized_outcome_with_tol(
    community: &Community,
    generation: f64,
    tariff: &NemTariff,
    tol: f64,
) -> Result<Outcome> {
    let carried = community.generation();
    if (carried - generation).abs() > 1e-9 * generation.abs().max(1.0) {
        return Err(Error::invalid(
            "generation",
            format!("aggregate generation {generation} differs from the members' total {carried}"),
        ));
    }
    let price = pricing::community_price_with_tol(community, generation, tariff, tol)?;
    let members: Vec<MemberOutcome> = community
        .members
        .iter()
        .map(|m| member_best_response(m, &price))
        .collect();
    Ok(assemble(price, *tariff, generation, members))
}

fn assemble(price: CommunityPrice, tariff: NemTariff, generation: f64, members: Vec<MemberOutcome>) -> Outcome {
    let aggregate_net: f64 = members.iter().map(|m| m.net).sum();
    let bill = community_payment(&tariff, aggregate_net);
    let collected: f64 = members.iter().map(|m| m.payment).sum();
    let welfare = members.iter().map(|m| m.surplus).sum();
    Outcome {
        price,
        tariff,
        generation,
        members,
        aggregate_net,
        community_payment: bill,
        welfare,
        operator_profit: collected - bill,
    }
}

/// The member's own thresholds under NEM X, outside any community.
pub fn member_thresholds(member: &Member, tariff: &NemTariff) -> Thresholds {
    pricing::thresholds_of(member.devices.iter(), tariff)
}

/// Zone of a standalone member: its generation against its own thresholds.
pub fn member_zone(member: &Member, tariff: &NemTariff) -> Zone {
    member_thresholds(member, tariff).zone(member.generation)
}

/// Optimal standalone customer under the utility's NEM X tariff, with the
/// fixed charge split over `members` customers.
pub fn benchmark_standalone_optimum(member: &Member, tariff: &NemTariff, members: usize) -> Result<MemberOutcome> {
    let thresholds = member_thresholds(member, tariff);
    let price = match thresholds.zone(member.generation) {
        Zone::NetConsuming => tariff.retail,
        Zone::NetProducing => tariff.export,
        Zone::NetZero => {
            pricing::solve_on_devices(
                member.devices.iter(),
                member.generation,
                tariff,
                NET_ZERO_REL_TOL * member.upper_total(),
            )?
            .price
        }
    };
    let consumption: Vec<f64> = member.devices.iter().map(|d| d.demand_at(price)).collect();
    let net = consumption.iter().sum::<f64>() - member.generation;
    let payment = benchmark_payment(tariff, net, members);
    let surplus = member.utility(&consumption) - payment;
    Ok(MemberOutcome {
        member_id: member.id.clone(),
        consumption,
        generation: member.generation,
        net,
        payment,
        surplus,
    })
}

/// Benchmark outcomes for every member of a community.
pub fn benchmark_outcomes(community: &Community, tariff: &NemTariff) -> Result<Vec<MemberOutcome>> {
    community
        .members
        .iter()
        .map(|m| benchmark_standalone_optimum(m, tariff, community.len()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurplusGain {
    pub absolute: f64,
    /// `absolute / |benchmark surplus|`; absent when the benchmark surplus is 0.
    pub relative: Option<f64>,
}

pub fn surplus_gain(community: &MemberOutcome, benchmark: &MemberOutcome) -> Result<SurplusGain> {
    if community.member_id != benchmark.member_id {
        return Err(Error::MemberMismatch(format!(
            "`{}` compared against `{}`",
            community.member_id, benchmark.member_id
        )));
    }
    let absolute = community.surplus - benchmark.surplus;
    let relative = (benchmark.surplus != 0.0).then(|| absolute / benchmark.surplus.abs());
    Ok(SurplusGain { absolute, relative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Device;

    fn member(id: &str, g: f64) -> Member {
        Member::new(id, vec![Device::new(1.0, 1.0, 0.0, 2.0).unwrap()], g).unwrap()
    }

    fn tariff() -> NemTariff {
        NemTariff::new(0.4, 0.1, 0.0).unwrap()
    }

    /// Exhaustive welfare maximization over a 1e-3 grid on [0, 2]², with the
    /// NEM X bill applied at the point of common coupling.
    fn grid_welfare(g: f64, t: &NemTariff) -> (f64, f64, f64) {
        let u = |d: f64| d - 0.5 * d * d;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=2000 {
            let d1 = i as f64 * 1e-3;
            for j in 0..=2000 {
                let d2 = j as f64 * 1e-3;
                let w = u(d1) + u(d2) - community_payment(t, d1 + d2 - g);
                if w > best.0 {
                    best = (w, d1, d2);
                }
            }
        }
        best
    }

    #[test]
    fn optimal_aggregate_examples() {
        let c = Community::new(vec![member("1", 1.5), member("2", 0.0)]).unwrap();
        let t = tariff();
        assert!((optimal_aggregate_consumption(&c, 0.5, &t) - 1.2).abs() < 1e-12);
        assert_eq!(optimal_aggregate_consumption(&c, 1.5, &t), 1.5);
        assert!((optimal_aggregate_consumption(&c, 2.0, &t) - 1.8).abs() < 1e-12);
        let (_, d1, d2) = grid_welfare(0.5, &t);
        assert!((d1 + d2 - 1.2).abs() < 2e-3);
        let (_, d1, d2) = grid_welfare(2.0, &t);
        assert!((d1 + d2 - 1.8).abs() < 2e-3);
    }

    #[test]
    fn centralized_examples() {
        let c = Community::new(vec![member("1", 1.5), member("2", 0.0)]).unwrap();
        let t = tariff();
        let o = centralized_optimum(&c, 1.5, &t).unwrap();
        for m in &o.members {
            assert!((m.consumption[0] - 0.75).abs() < 1e-12);
        }
        assert!((o.welfare - 0.9375).abs() < 1e-12);
        assert_eq!(o.community_payment, 0.0);
        let (w, _, _) = grid_welfare(1.5, &t);
        assert!((w - 0.9375).abs() < 1e-5);

        let c = Community::new(vec![member("1", 0.5), member("2", 0.0)]).unwrap();
        let o = centralized_optimum(&c, 0.5, &t).unwrap();
        for m in &o.members {
            assert!((m.consumption[0] - 0.6).abs() < 1e-12);
        }
        assert!((o.welfare - 0.56).abs() < 1e-12);
        assert!((o.community_payment - 0.28).abs() < 1e-12);
        let (w, _, _) = grid_welfare(0.5, &t);
        assert!((w - 0.56).abs() < 1e-5);

        // degenerate NEM 1.0 single member: textbook price-taking optimum
        let single = Community::new(vec![member("s", 0.0)]).unwrap();
        let flat = NemTariff::new(0.3, 0.3, 0.0).unwrap();
        let o = centralized_optimum(&single, 0.0, &flat).unwrap();
        assert!((o.members[0].consumption[0] - 0.7).abs() < 1e-12);
    }

    fn grid_member(g: f64, rate: f64) -> (f64, f64) {
        (0..=20_000)
            .map(|i| i as f64 * 1e-4)
            .map(|d| (d, d - 0.5 * d * d - rate * (d - g)))
            .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
    }

    #[test]
    fn best_response_examples() {
        let price = CommunityPrice {
            zone: Zone::NetZero,
            rate: 0.25,
            fixed_share: 0.0,
        };
        let r = member_best_response(&member("2", 0.0), &price);
        assert!((r.consumption[0] - 0.75).abs() < 1e-12);
        assert!((r.net - 0.75).abs() < 1e-12);
        assert!((r.payment - 0.1875).abs() < 1e-12);
        assert!((r.surplus - 0.28125).abs() < 1e-12);
        let (d, s) = grid_member(0.0, 0.25);
        assert!((d - 0.75).abs() < 1e-4 && (s - 0.28125).abs() < 1e-8);

        let r = member_best_response(&member("1", 1.5), &price);
        assert!((r.net + 0.75).abs() < 1e-12);
        assert!((r.payment + 0.1875).abs() < 1e-12);
        assert!((r.surplus - 0.65625).abs() < 1e-12);
        let (_, s) = grid_member(1.5, 0.25);
        assert!((s - 0.65625).abs() < 1e-8);

        let priced_out = CommunityPrice {
            zone: Zone::NetConsuming,
            rate: 1.2,
            fixed_share: 0.05,
        };
        let r = member_best_response(&member("p", 0.3), &priced_out);
        assert_eq!(r.consumption[0], 0.0);
        assert!((r.surplus - (-0.05 + 1.2 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn decentralized_examples() {
        let t = tariff();
        let c = Community::new(vec![member("1", 1.5), member("2", 0.0)]).unwrap();
        let o = decentralized_outcome(&c, 1.5, &t).unwrap();
        assert!((o.members[0].payment + 0.1875).abs() < 1e-12);
        assert!((o.members[1].payment - 0.1875).abs() < 1e-12);
        assert!(o.operator_profit.abs() < 1e-12);
        assert!((o.welfare - 0.9375).abs() < 1e-12);
        assert!(o.aggregate_net.abs() < 1e-12);

        let c = Community::new(vec![member("1", 0.5), member("2", 0.0)]).unwrap();
        let o = decentralized_outcome(&c, 0.5, &t).unwrap();
        assert!((o.members[0].net - 0.1).abs() < 1e-12);
        assert!((o.members[1].net - 0.6).abs() < 1e-12);
        assert!((o.members[0].payment - 0.04).abs() < 1e-12);
        assert!((o.members[1].payment - 0.24).abs() < 1e-12);
        assert!((o.member_payments() - 0.28).abs() < 1e-12);
        assert!((o.community_payment - 0.28).abs() < 1e-12);
        let cen = centralized_optimum(&c, 0.5, &t).unwrap();
        assert!((cen.welfare - o.welfare).abs() < 1e-12);

        assert!(decentralized_outcome(&c, 0.7, &t).is_err());
    }

    #[test]
    fn single_member_nem1_matches_benchmark() {
        let flat = NemTariff::new(0.3, 0.3, 0.5).unwrap();
        for g in [0.0, 0.4, 0.7, 1.0, 3.0] {
            let c = Community::new(vec![member("s", g)]).unwrap();
            let o = decentralized_outcome(&c, g, &flat).unwrap();
            let b = benchmark_standalone_optimum(&c.members[0], &flat, 1).unwrap();
            assert!((o.members[0].surplus - b.surplus).abs() < 1e-9);
            assert!((o.members[0].payment - b.payment).abs() < 1e-9);
        }
    }

    /// Standalone NEM X optimum by grid search over d ∈ [0, 2].
    fn grid_benchmark(g: f64, t: &NemTariff) -> (f64, f64) {
        (0..=20_000)
            .map(|i| i as f64 * 1e-4)
            .map(|d| (d, d - 0.5 * d * d - benchmark_payment(t, d - g, 2)))
            .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
    }

    #[test]
    fn benchmark_examples() {
        let t = tariff();
        for (g, d, s) in [(0.0, 0.6, 0.18), (0.75, 0.75, 0.46875), (1.5, 0.9, 0.555)] {
            let b = benchmark_standalone_optimum(&member("x", g), &t, 2).unwrap();
            assert!((b.consumption[0] - d).abs() < 1e-9, "g = {g}");
            assert!((b.surplus - s).abs() < 1e-9, "g = {g}");
            let (gd, gs) = grid_benchmark(g, &t);
            assert!((gd - d).abs() < 1e-4 && (gs - s).abs() < 1e-7, "g = {g}");
        }
    }

    #[test]
    fn surplus_gain_examples() {
        let t = tariff();
        let c = Community::new(vec![member("1", 1.5), member("2", 0.0)]).unwrap();
        let o = decentralized_outcome(&c, 1.5, &t).unwrap();
        let bench = benchmark_outcomes(&c, &t).unwrap();
        let g2 = surplus_gain(&o.members[1], &bench[1]).unwrap();
        assert!((g2.absolute - 0.10125).abs() < 1e-12);
        assert!((g2.relative.unwrap() - 0.10125 / 0.18).abs() < 1e-12);
        let g1 = surplus_gain(&o.members[0], &bench[0]).unwrap();
        assert!((g1.absolute - 0.10125).abs() < 1e-12);
        assert!(surplus_gain(&o.members[0], &bench[1]).is_err());

        // both the community and the member are net consuming: same price
        let c = Community::new(vec![member("1", 0.2), member("2", 0.0)]).unwrap();
        let o = decentralized_outcome(&c, 0.2, &t).unwrap();
        let bench = benchmark_outcomes(&c, &t).unwrap();
        for (m, b) in o.members.iter().zip(&bench) {
            assert!(surplus_gain(m, b).unwrap().absolute.abs() < 1e-15);
        }

        let zero = MemberOutcome {
            member_id: "z".into(),
            consumption: vec![0.0],
            generation: 0.0,
            net: 0.0,
            payment: 0.0,
            surplus: 0.0,
        };
        let better = MemberOutcome { surplus: 0.1, ..zero.clone() };
        let g = surplus_gain(&better, &zero).unwrap();
        assert_eq!(g.relative, None);
        assert_eq!(g.absolute, 0.1);
    }
}
