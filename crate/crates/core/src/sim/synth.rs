//! Seeded synthetic household load and rooftop solar.

use chrono::{DateTime, Datelike, Duration, Months, NaiveDate, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::data::IntervalRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub members: usize,
    /// The first `adopters` members have rooftop solar.
    pub adopters: usize,
    pub start: NaiveDate,
    pub months: u32,
    pub resolution_minutes: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            members: 24,
            adopters: 19,
            start: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            months: 12,
            resolution_minutes: 15,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(Error::invalid("members", "must be >= 1"));
        }
        if self.adopters > self.members {
            return Err(Error::invalid("adopters", "cannot exceed members"));
        }
        if self.months == 0 {
            return Err(Error::invalid("months", "must be >= 1"));
        }
        if self.resolution_minutes == 0 || 60 % self.resolution_minutes != 0 {
            return Err(Error::invalid("resolution_minutes", "must divide 60"));
        }
        Ok(())
    }

    pub fn member_id(&self, i: usize) -> String {
        let width = self.members.to_string().len().max(2);
        format!("h{:0width$}", i + 1)
    }
}

struct Household {
    id: String,
    base_kw: f64,
    evening_kw: f64,
    cooling_kw: f64,
    heating_kw: f64,
    solar_kw: f64,
}

/// Hours of daylight either side of solar noon.
fn half_day(doy: f64) -> f64 {
    6.0 + 1.2 * (2.0 * PI * (doy - 172.0) / 365.0).cos()
}

/// 1 in midsummer, 0 in midwinter.
fn summerness(doy: f64) -> f64 {
    0.5 * (1.0 + (2.0 * PI * (doy - 200.0) / 365.0).cos())
}

/// Records sorted by `(timestamp, member_id)`; the same seed gives the same
/// records.
pub fn generate_synthetic_scenario(config: &SynthConfig, seed: u64) -> Result<Vec<IntervalRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let homes: Vec<Household> = (0..config.members)
        .map(|i| Household {
            id: config.member_id(i),
            base_kw: rng.gen_range(0.35..0.75),
            evening_kw: rng.gen_range(0.3..0.9),
            cooling_kw: rng.gen_range(1.2..2.8),
            heating_kw: rng.gen_range(0.1..0.4),
            solar_kw: if i < config.adopters { rng.gen_range(2.5..6.0) } else { 0.0 },
        })
        .collect();

    let start = Utc.from_utc_datetime(&config.start.and_hms_opt(0, 0, 0).expect("midnight"));
    let end: DateTime<Utc> = start
        .checked_add_months(Months::new(config.months))
        .ok_or_else(|| Error::invalid("months", "date overflow"))?;
    let step = Duration::minutes(config.resolution_minutes as i64);
    let step_hours = config.resolution_minutes as f64 / 60.0;

    let mut records = Vec::new();
    let mut t = start;
    let mut clear_sky = 1.0;
    while t < end {
        if t.hour() == 0 && t.minute() == 0 {
            clear_sky = if rng.gen_bool(0.25) { rng.gen_range(0.2..0.7) } else { rng.gen_range(0.85..1.0) };
        }
        let doy = t.ordinal() as f64;
        let hour = t.hour() as f64 + (t.minute() as f64 + 0.5 * config.resolution_minutes as f64) / 60.0;
        let summer = summerness(doy);
        let daylight = half_day(doy);
        let from_noon = hour - 13.0;
        let sun = if from_noon.abs() < daylight {
            (0.5 * PI * from_noon / daylight).cos().powi(2) * (0.8 + 0.2 * summer)
        } else {
            0.0
        };
        let evening = (-(hour - 19.5).powi(2) / 4.0).exp() + 0.5 * (-(hour - 7.5).powi(2) / 2.0).exp();
        let cooling = summer.powf(1.5) * (PI * (hour - 10.0) / 14.0).sin().max(0.0) * if hour >= 10.0 { 1.0 } else { 0.0 };
        let heating = (1.0 - summer).powi(2) * (1.0 - sun);

        for h in &homes {
            let kw = h.base_kw * (1.0 + 0.2 * (2.0 * PI * (hour - 16.0) / 24.0).sin())
                + h.evening_kw * evening
                + h.cooling_kw * cooling
                + h.heating_kw * heating;
            let load = (kw * rng.gen_range(0.75..1.25) * step_hours).max(0.0);
            let generation = if h.solar_kw > 0.0 {
                h.solar_kw * sun * clear_sky * rng.gen_range(0.8..1.0) * step_hours
            } else {
                0.0
            };
            records.push(IntervalRecord {
                timestamp: t,
                member_id: h.id.clone(),
                load,
                generation,
            });
        }
        t += step;
    }
    Ok(records)
}
