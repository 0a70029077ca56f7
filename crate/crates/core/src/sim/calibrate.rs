//! Quadratic utility fits from observed load.
//!
//! Each member gets one fit per UTC hour of day. The fit makes the
//! price-taking optimum at that hour's retail rate equal the bucket's mean
//! load, `a − b·d̄ = π⁺`, with `b` from the configured policy and the upper
//! bound at `κ · max load`. During a run the intercept is re-anchored to each
//! observed load so the member's retail-rate demand reproduces it exactly.

use std::collections::BTreeMap;

use chrono::Timelike;
use serde::{Deserialize, Serialize};

use super::data::IntervalRecord;
use super::tariff::TouSchedule;
use crate::error::{Error, Result};
use crate::model::{Device, Member};

/// How the demand slope `b` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BPolicy {
    /// `b = π⁺ / (ε · d̄)`: price elasticity `ε` at the calibration point.
    Elasticity(f64),
    /// The same `b` for every bucket.
    Fixed(f64),
}

impl Default for BPolicy {
    fn default() -> Self {
        BPolicy::Elasticity(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default)]
    pub b_policy: BPolicy,
    /// Upper bound headroom over the largest observed load.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    2.0
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            b_policy: BPolicy::default(),
            kappa: default_kappa(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        match self.b_policy {
            BPolicy::Elasticity(e) if !(e.is_finite() && e > 0.0) => {
                return Err(Error::invalid("calibration.b_policy.elasticity", "must be finite and > 0"))
            }
            BPolicy::Fixed(b) if !(b.is_finite() && b > 0.0) => {
                return Err(Error::invalid("calibration.b_policy.fixed", "must be finite and > 0"))
            }
            _ => {}
        }
        if !(self.kappa.is_finite() && self.kappa >= 1.0) {
            return Err(Error::invalid("calibration.kappa", "must be finite and >= 1"));
        }
        Ok(())
    }
}

/// Fitted parameters of one (member, hour) bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketFit {
    pub a: f64,
    pub b: f64,
    pub upper: f64,
    pub mean_load: f64,
    pub max_load: f64,
    pub observations: usize,
    /// Borrowed from neighbouring hours because the bucket was empty.
    pub pooled: bool,
}

impl BucketFit {
    fn new(loads: &[f64], retail: f64, config: &CalibrationConfig, pooled: bool) -> Self {
        let n = loads.len();
        let mean = loads.iter().sum::<f64>() / n as f64;
        let max = loads.iter().copied().fold(0.0, f64::max);
        let b = match config.b_policy {
            _ if max == 0.0 => 1.0,
            BPolicy::Elasticity(e) => retail / (e * mean),
            BPolicy::Fixed(b) => b,
        };
        Self {
            a: retail + b * mean,
            b,
            upper: config.kappa * max,
            mean_load: mean,
            max_load: max,
            observations: n,
            pooled,
        }
    }

    /// Inflexible bucket: never consumes.
    pub fn is_inflexible(&self) -> bool {
        self.upper == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedMember {
    pub id: String,
    /// Indexed by UTC hour of day.
    pub buckets: Vec<BucketFit>,
}

impl CalibratedMember {
    pub fn fit(&self, hour: u32) -> &BucketFit {
        &self.buckets[hour as usize % 24]
    }

    /// The bucket's device, anchored at its mean load.
    pub fn device(&self, hour: u32) -> Device {
        let f = self.fit(hour);
        Device::new(f.a, f.b, 0.0, f.upper).expect("calibrated device is valid")
    }

    /// The bucket's device with the intercept moved so that demand at
    /// `retail` equals `load`. The upper bound is raised to `load` if needed.
    pub fn device_for(&self, hour: u32, load: f64, retail: f64) -> Device {
        let f = self.fit(hour);
        Device::new(retail + f.b * load, f.b, 0.0, f.upper.max(load)).expect("anchored device is valid")
    }

    /// Single-device member for one hour of day, with no generation.
    pub fn member_at(&self, hour: u32) -> Member {
        Member::new(self.id.clone(), vec![self.device(hour)], 0.0).expect("calibrated member is valid")
    }
}

/// Fit every member found in `history`. Members come back sorted by id.
pub fn calibrate_utilities(
    history: &[IntervalRecord],
    schedule: &TouSchedule,
    config: &CalibrationConfig,
) -> Result<Vec<CalibratedMember>> {
    config.validate()?;
    let mut loads: BTreeMap<&str, [Vec<f64>; 24]> = BTreeMap::new();
    for r in history {
        loads.entry(&r.member_id).or_default()[r.timestamp.hour() as usize].push(r.load);
    }
    Ok(loads
        .into_iter()
        .map(|(id, by_hour)| {
            let buckets = (0..24u32)
                .map(|h| {
                    let retail = schedule.retail_for_hour(h);
                    if !by_hour[h as usize].is_empty() {
                        return BucketFit::new(&by_hour[h as usize], retail, config, false);
                    }
                    let pool = neighbour_pool(&by_hour, h);
                    log::debug!("member {id}: hour {h} has no observations; pooled {} neighbours", pool.len());
                    BucketFit::new(&pool, retail, config, true)
                })
                .collect();
            CalibratedMember {
                id: id.to_string(),
                buckets,
            }
        })
        .collect())
}

/// Observations of the nearest non-empty hours, both sides at equal distance.
fn neighbour_pool(by_hour: &[Vec<f64>; 24], hour: u32) -> Vec<f64> {
    for step in 1..=12u32 {
        let before = ((hour + 24 - step) % 24) as usize;
        let after = ((hour + step) % 24) as usize;
        let mut pool = by_hour[before].clone();
        if after != before {
            pool.extend_from_slice(&by_hour[after]);
        }
        if !pool.is_empty() {
            return pool;
        }
    }
    unreachable!("a member with records has a non-empty bucket")
}
