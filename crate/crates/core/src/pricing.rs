//! Dynamic NEM price announcement and payment rules.
//!
//! The operator compares aggregate generation `g_H` with two thresholds, the
//! community's aggregate price-taking demand at the retail and at the export
//! rate. Below the first threshold members face the retail rate, above the
//! second they face the export rate, and in between they face the price that
//! makes aggregate demand equal to `g_H`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Community, Device, NemTariff};

/// Relative tolerance of the net-zero price solver, scaled by the sum of
/// device upper bounds.
pub const NET_ZERO_REL_TOL: f64 = 1e-10;

/// Safety cap on bisection steps. Normal instances need well under 60.
const MAX_BISECTION_STEPS: u32 = 200;

/// Aggregate price-taking demand of the community at price `mu`.
pub fn aggregate_demand_at_price(community: &Community, mu: f64) -> f64 {
    demand_of(community.devices(), mu)
}

fn demand_of<'a>(devices: impl Iterator<Item = &'a Device>, mu: f64) -> f64 {
    devices.map(|d| d.demand_at(mu)).sum()
}

/// Demand at the retail rate (`d_plus`) and at the export rate (`d_minus`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub d_plus: f64,
    pub d_minus: f64,
}

impl Thresholds {
    /// Zone of generation `g`; both thresholds belong to the net-zero zone.
    pub fn zone(&self, g: f64) -> Zone {
        if g < self.d_plus {
            Zone::NetConsuming
        } else if g > self.d_minus {
            Zone::NetProducing
        } else {
            Zone::NetZero
        }
    }

    /// Optimal aggregate consumption: `g` clamped to `[d_plus, d_minus]`.
    pub fn clamp(&self, g: f64) -> f64 {
        self.d_plus.max(g.min(self.d_minus))
    }
}

pub fn compute_thresholds(community: &Community, tariff: &NemTariff) -> Thresholds {
    thresholds_of(community.devices(), tariff)
}

pub(crate) fn thresholds_of<'a>(
    devices: impl Iterator<Item = &'a Device> + Clone,
    tariff: &NemTariff,
) -> Thresholds {
    Thresholds {
        d_plus: demand_of(devices.clone(), tariff.retail),
        d_minus: demand_of(devices, tariff.export),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Zone {
    NetConsuming,
    NetZero,
    NetProducing,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::NetConsuming, Zone::NetZero, Zone::NetProducing];

    pub fn as_str(&self) -> &'static str {
        match self {
            Zone::NetConsuming => "NetConsuming",
            Zone::NetZero => "NetZero",
            Zone::NetProducing => "NetProducing",
        }
    }
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of the net-zero price search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetZeroSolution {
    /// The announced price `μ*`, within `[export, retail]`.
    pub price: f64,
    /// Bisection steps taken.
    pub iterations: u32,
    /// `demand(price) − g`.
    pub residual: f64,
    /// Whether demand is flat around `price`, so a whole interval of prices
    /// clears the balance and the returned one is a tie-break.
    pub plateau: bool,
}

/// Solve aggregate demand = `generation` for the price, on `[export, retail]`.
///
/// `generation` must lie in the net-zero zone (up to `tol`). When demand is
/// flat at the solution, the plateau is located exactly from device
/// breakpoints and its midpoint is returned, except that a plateau touching
/// the retail (export) rate returns that rate so the announced price stays
/// continuous with the adjacent zone.
pub fn solve_net_zero_price(
    community: &Community,
    generation: f64,
    tariff: &NemTariff,
    tol: f64,
) -> Result<NetZeroSolution> {
    solve_on_devices(community.devices(), generation, tariff, tol)
}

pub(crate) fn solve_on_devices<'a, I>(
    devices: I,
    generation: f64,
    tariff: &NemTariff,
    tol: f64,
) -> Result<NetZeroSolution>
where
    I: Iterator<Item = &'a Device> + Clone,
{
    let (low, high) = (tariff.export, tariff.retail);
    let demand = |mu: f64| demand_of(devices.clone(), mu);
    let d_plus = demand(high);
    let d_minus = demand(low);
    if !(generation >= d_plus - tol && generation <= d_minus + tol) {
        return Err(Error::OutsideNetZeroZone {
            generation,
            d_plus,
            d_minus,
            tol,
        });
    }

    let mut iterations = 0;
    let found = if (d_plus - generation).abs() <= tol {
        high
    } else if (d_minus - generation).abs() <= tol {
        low
    } else {
        // demand(lo) > g + tol and demand(hi) < g − tol throughout
        let (mut lo, mut hi) = (low, high);
        loop {
            let mid = 0.5 * (lo + hi);
            iterations += 1;
            let r = demand(mid) - generation;
            if r.abs() <= tol || mid <= lo || mid >= hi || iterations >= MAX_BISECTION_STEPS {
                break mid;
            }
            if r > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    };

    let (price, plateau) = match plateau_around(devices.clone(), found) {
        Some((left, right)) => {
            let left = left.max(low);
            let right = right.min(high);
            let touches_high = right >= high;
            let touches_low = left <= low;
            let price = match (touches_low, touches_high) {
                (false, true) => high,
                (true, false) => low,
                _ => 0.5 * (left + right),
            };
            (price, true)
        }
        None => (found, false),
    };

    Ok(NetZeroSolution {
        price,
        iterations,
        residual: demand(price) - generation,
        plateau,
    })
}

/// If every device is pinned to a bound at `mu`, return the maximal price
/// interval around `mu` on which that stays true.
fn plateau_around<'a>(devices: impl Iterator<Item = &'a Device>, mu: f64) -> Option<(f64, f64)> {
    let (mut left, mut right) = (f64::NEG_INFINITY, f64::INFINITY);
    for dev in devices {
        if !dev.is_clamped_at(mu) {
            return None;
        }
        if dev.bounds.lower == dev.bounds.upper {
            continue;
        }
        let [at_upper, at_lower] = dev.breakpoints();
        if mu <= at_upper {
            // pinned at the upper bound until the price rises past `at_upper`
            right = right.min(at_upper);
        } else {
            left = left.max(at_lower);
        }
    }
    Some((left, right))
}

/// The announced price `(zone, rate, fixed_share)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunityPrice {
    pub zone: Zone,
    /// Volumetric rate for both imports and exports, $/kWh.
    pub rate: f64,
    /// Per-member share of the fixed charge, $.
    pub fixed_share: f64,
}

impl CommunityPrice {
    /// Payment with the fixed charge share removed.
    pub fn volumetric(&self, payment: f64) -> f64 {
        payment - self.fixed_share
    }
}

/// Default solver tolerance for a community, in kWh.
pub fn default_tolerance(community: &Community) -> f64 {
    NET_ZERO_REL_TOL * community.upper_total()
}

pub fn community_price(
    community: &Community,
    generation: f64,
    tariff: &NemTariff,
) -> Result<CommunityPrice> {
    community_price_with_tol(community, generation, tariff, default_tolerance(community))
}

pub fn community_price_with_tol(
    community: &Community,
    generation: f64,
    tariff: &NemTariff,
    tol: f64,
) -> Result<CommunityPrice> {
    if generation.is_nan() || generation < 0.0 {
        return Err(Error::Domain(format!(
            "aggregate generation must be >= 0, got {generation}"
        )));
    }
    let thresholds = compute_thresholds(community, tariff);
    let zone = thresholds.zone(generation);
    let rate = match zone {
        Zone::NetConsuming => tariff.retail,
        Zone::NetProducing => tariff.export,
        Zone::NetZero => solve_net_zero_price(community, generation, tariff, tol)?.price,
    };
    Ok(CommunityPrice {
        zone,
        rate,
        fixed_share: tariff.fixed / community.len() as f64,
    })
}

/// Member-to-operator payment: one rate for imports and exports.
pub fn member_payment(price: &CommunityPrice, net: f64) -> f64 {
    price.rate * net + price.fixed_share
}

/// NEM X bill at the point of common coupling.
pub fn community_payment(tariff: &NemTariff, net: f64) -> f64 {
    nem_x_volumetric(tariff, net) + tariff.fixed
}

/// Standalone NEM X bill with the fixed charge split over `members`.
pub fn benchmark_payment(tariff: &NemTariff, net: f64, members: usize) -> f64 {
    assert!(members >= 1, "benchmark payment needs at least one member");
    nem_x_volumetric(tariff, net) + tariff.fixed / members as f64
}

fn nem_x_volumetric(tariff: &NemTariff, net: f64) -> f64 {
    tariff.retail * net.max(0.0) + tariff.export * net.min(0.0)
}
