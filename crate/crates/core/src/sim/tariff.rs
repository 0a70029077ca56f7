//! Time-of-use retail rates, export prices, netting periods, and the
//! simulation config document.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::calibrate::CalibrationConfig;
use crate::error::{Error, Result};
use crate::model::NemTariff;

/// Export rate: one value, or a step series keyed by interval start.
#[derive(Debug, Clone, PartialEq)]
pub enum ExportRate {
    Scalar(f64),
    Series(BTreeMap<DateTime<Utc>, f64>),
}

impl ExportRate {
    /// Mean export rate over `[start, end)`. Series entries inside the
    /// window are averaged; otherwise the latest entry at or before `start`
    /// applies (the first entry if none precedes it).
    pub fn over(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> f64 {
        match self {
            ExportRate::Scalar(v) => *v,
            ExportRate::Series(series) => {
                let inside: Vec<f64> = series.range(start..end).map(|(_, v)| *v).collect();
                if !inside.is_empty() {
                    return inside.iter().sum::<f64>() / inside.len() as f64;
                }
                series
                    .range(..=start)
                    .next_back()
                    .or_else(|| series.iter().next())
                    .map(|(_, v)| *v)
                    .unwrap_or(0.0)
            }
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            ExportRate::Scalar(v) => Box::new(std::iter::once(*v)),
            ExportRate::Series(s) => Box::new(s.values().copied()),
        }
    }

    /// Read `timestamp,export_rate` rows.
    pub fn series_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Json(format!("{}: {e}", path.display())))?;
        let mut series = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::MalformedRow { line, message };
            if row.len() != 2 {
                return Err(bad(format!("expected 2 fields, found {}", row.len())));
            }
            let ts = DateTime::parse_from_rfc3339(&row[0])
                .map_err(|e| bad(format!("timestamp `{}`: {e}", &row[0])))?
                .with_timezone(&Utc);
            let v: f64 = row[1]
                .parse()
                .map_err(|_| bad(format!("export rate `{}` is not a number", &row[1])))?;
            series.insert(ts, v);
        }
        if series.is_empty() {
            return Err(Error::invalid("export_rate", format!("{} has no rows", path.display())));
        }
        Ok(ExportRate::Series(series))
    }
}

/// Peak/off-peak retail rates by UTC hour of day, plus the export rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TouSchedule {
    pub peak_rate: f64,
    pub offpeak_rate: f64,
    pub peak_hours: BTreeSet<u32>,
    pub export: ExportRate,
    /// Fixed charge per hour, $; prorated over each netting interval.
    pub fixed: f64,
}

impl TouSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.offpeak_rate.is_finite() && self.offpeak_rate > 0.0) {
            return Err(Error::invalid("tou.offpeak_rate", "must be finite and > 0"));
        }
        if !(self.peak_rate.is_finite() && self.peak_rate >= self.offpeak_rate) {
            return Err(Error::invalid("tou.peak_rate", "must be finite and >= offpeak_rate"));
        }
        if let Some(h) = self.peak_hours.iter().find(|&&h| h > 23) {
            return Err(Error::invalid("tou.peak_hours", format!("hour {h} is not in 0..=23")));
        }
        if let Some(v) = self
            .export
            .values()
            .find(|v| !(v.is_finite() && *v >= 0.0 && *v <= self.offpeak_rate))
        {
            return Err(Error::invalid(
                "export_rate",
                format!("export rate {v} must lie in [0, offpeak_rate]"),
            ));
        }
        if !(self.fixed.is_finite() && self.fixed >= 0.0) {
            return Err(Error::invalid("fixed", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn retail_for_hour(&self, hour: u32) -> f64 {
        if self.peak_hours.contains(&hour) {
            self.peak_rate
        } else {
            self.offpeak_rate
        }
    }

    /// NEM X tariff of the netting interval `[start, end)`; the retail rate
    /// is taken at the hour of `start`.
    pub fn tariff_at(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> NemTariff {
        let hours = (end - start).num_seconds() as f64 / 3600.0;
        NemTariff {
            retail: self.retail_for_hour(start.hour()),
            export: self.export.over(start, end),
            fixed: self.fixed * hours,
        }
    }
}

/// Length of the NEM billing (netting) interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NettingPeriod {
    pub minutes: u32,
}

impl NettingPeriod {
    pub const FIFTEEN_MINUTES: NettingPeriod = NettingPeriod { minutes: 15 };
    pub const ONE_HOUR: NettingPeriod = NettingPeriod { minutes: 60 };

    pub fn new(minutes: u32) -> Result<Self> {
        if minutes == 0 || 1440 % minutes != 0 {
            return Err(Error::invalid(
                "netting_minutes",
                format!("{minutes} does not divide a day into whole intervals"),
            ));
        }
        Ok(Self { minutes })
    }

    /// Accepts `15m`, `1h`, `60m`, or bare minutes.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let minutes = if let Some(h) = s.strip_suffix('h') {
            h.parse::<u32>().ok().map(|h| h * 60)
        } else {
            s.strip_suffix('m').unwrap_or(s).parse::<u32>().ok()
        };
        match minutes {
            Some(m) => Self::new(m),
            None => Err(Error::invalid("netting", format!("cannot parse `{s}`; use 15m or 1h"))),
        }
    }

    pub fn hours(&self) -> f64 {
        self.minutes as f64 / 60.0
    }

    /// Sub-intervals of data per netting interval.
    pub fn sub_intervals(&self, resolution_minutes: u32) -> Result<u32> {
        if resolution_minutes == 0 || !self.minutes.is_multiple_of(resolution_minutes) {
            return Err(Error::invalid(
                "netting_minutes",
                format!(
                    "netting period of {} min is not a multiple of the {} min data resolution",
                    self.minutes, resolution_minutes
                ),
            ));
        }
        Ok(self.minutes / resolution_minutes)
    }

    /// Start of the netting interval containing `ts`.
    pub fn window_start(&self, ts: DateTime<Utc>) -> DateTime<Utc> {
        let secs = ts.timestamp();
        let len = self.minutes as i64 * 60;
        DateTime::from_timestamp(secs - secs.rem_euclid(len), 0).expect("in range")
    }
}

impl std::fmt::Display for NettingPeriod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.minutes.is_multiple_of(60) {
            write!(f, "{}h", self.minutes / 60)
        } else {
            write!(f, "{}m", self.minutes)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouSpec {
    pub peak_rate: f64,
    pub offpeak_rate: f64,
    pub peak_hours: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExportRateSpec {
    Scalar(f64),
    /// CSV path, relative to the config file.
    Path(PathBuf),
}

/// The simulation config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub tou: TouSpec,
    pub export_rate: ExportRateSpec,
    #[serde(default)]
    pub fixed: f64,
    #[serde(default = "default_netting")]
    pub netting_minutes: u32,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_netting() -> u32 {
    15
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tou: TouSpec {
                peak_rate: 0.40,
                offpeak_rate: 0.20,
                peak_hours: (16..21).collect(),
            },
            export_rate: ExportRateSpec::Scalar(0.04),
            fixed: 0.0,
            netting_minutes: 15,
            calibration: CalibrationConfig::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: SimConfig = serde_path_to_error::deserialize(de)?;
        cfg.calibration.validate()?;
        NettingPeriod::new(cfg.netting_minutes)?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_json_str(&text)?, base))
    }

    /// Build the schedule, resolving a CSV export path against `base_dir`.
    pub fn schedule(&self, base_dir: &Path) -> Result<TouSchedule> {
        let export = match &self.export_rate {
            ExportRateSpec::Scalar(v) => ExportRate::Scalar(*v),
            ExportRateSpec::Path(p) => ExportRate::series_from_csv(base_dir.join(p))?,
        };
        let schedule = TouSchedule {
            peak_rate: self.tou.peak_rate,
            offpeak_rate: self.tou.offpeak_rate,
            peak_hours: self.tou.peak_hours.iter().copied().collect(),
            export,
            fixed: self.fixed,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn netting(&self) -> Result<NettingPeriod> {
        NettingPeriod::new(self.netting_minutes)
    }
}
