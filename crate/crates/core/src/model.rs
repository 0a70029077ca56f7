//! Community members, their devices, and the utility-side NEM tariff.
//!
//! Every member owns one or more devices. A device carries a concave quadratic
//! utility `U(d) = a·d − (b/2)·d²` and consumption bounds. Price response is
//! always the inverse marginal utility clamped to the device bounds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concave quadratic utility `U(d) = a·d − (b/2)·d²` in $ for `d` kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticUtility {
    /// Marginal utility at zero consumption, $/kWh.
    pub a: f64,
    /// Decay of marginal utility, $/kWh².
    pub b: f64,
}

impl QuadraticUtility {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let u = Self { a, b };
        u.validate("utility")?;
        Ok(u)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::invalid(
                format!("{path}.a"),
                format!("must be finite and > 0, got {}", self.a),
            ));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::invalid(
                format!("{path}.b"),
                format!("must be finite and > 0, got {}", self.b),
            ));
        }
        Ok(())
    }

    /// Utility of consuming `d` kWh. Negative consumption is rejected.
    pub fn value(&self, d: f64) -> Result<f64> {
        check_consumption(d)?;
        Ok(self.eval(d))
    }

    /// Marginal utility `a − b·d`.
    pub fn marginal(&self, d: f64) -> Result<f64> {
        check_consumption(d)?;
        Ok(self.a - self.b * d)
    }

    /// Inverse of the marginal utility, `(a − mu)/b`. The result may be
    /// negative; clamping to device bounds happens in [`Device::demand_at`].
    pub fn inverse_marginal(&self, mu: f64) -> f64 {
        (self.a - mu) / self.b
    }

    /// Unchecked evaluation for consumptions already known to lie in bounds.
    pub(crate) fn eval(&self, d: f64) -> f64 {
        self.a * d - 0.5 * self.b * d * d
    }
}

fn check_consumption(d: f64) -> Result<()> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::Domain(format!("consumption must be >= 0, got {d}")));
    }
    Ok(())
}

/// Consumption limits of a single device, kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceBounds {
    pub lower: f64,
    pub upper: f64,
}

impl DeviceBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let bounds = Self { lower, upper };
        bounds.validate("bounds")?;
        Ok(bounds)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.lower.is_finite() && self.lower >= 0.0) {
            return Err(Error::invalid(
                format!("{path}.lower"),
                format!("must be finite and >= 0, got {}", self.lower),
            ));
        }
        if !(self.upper.is_finite() && self.upper >= self.lower) {
            return Err(Error::invalid(
                format!("{path}.upper"),
                format!("must be finite and >= lower ({}), got {}", self.lower, self.upper),
            ));
        }
        Ok(())
    }

    pub fn clamp(&self, d: f64) -> f64 {
        self.lower.max(d.min(self.upper))
    }
}

/// Price-taking demand of a device: `max{lower, min{f(mu), upper}}`.
pub fn clamped_demand(utility: &QuadraticUtility, bounds: &DeviceBounds, mu: f64) -> f64 {
    bounds.clamp(utility.inverse_marginal(mu))
}

/// A controllable device. Serialized flat as `{a, b, lower, upper}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "DeviceSpec", into = "DeviceSpec")]
pub struct Device {
    pub utility: QuadraticUtility,
    pub bounds: DeviceBounds,
}

#[derive(Serialize, Deserialize)]
struct DeviceSpec {
    a: f64,
    b: f64,
    lower: f64,
    upper: f64,
}

impl From<DeviceSpec> for Device {
    fn from(s: DeviceSpec) -> Self {
        Device {
            utility: QuadraticUtility { a: s.a, b: s.b },
            bounds: DeviceBounds {
                lower: s.lower,
                upper: s.upper,
            },
        }
    }
}

impl From<Device> for DeviceSpec {
    fn from(d: Device) -> Self {
        DeviceSpec {
            a: d.utility.a,
            b: d.utility.b,
            lower: d.bounds.lower,
            upper: d.bounds.upper,
        }
    }
}

impl Device {
    pub fn new(a: f64, b: f64, lower: f64, upper: f64) -> Result<Self> {
        Ok(Self {
            utility: QuadraticUtility::new(a, b)?,
            bounds: DeviceBounds::new(lower, upper)?,
        })
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        self.utility.validate(path)?;
        self.bounds.validate(path)
    }

    pub fn demand_at(&self, mu: f64) -> f64 {
        clamped_demand(&self.utility, &self.bounds, mu)
    }

    /// Whether the device's demand is pinned to a bound at price `mu`, so
    /// the demand curve is locally flat in this device's contribution.
    pub(crate) fn is_clamped_at(&self, mu: f64) -> bool {
        let f = self.utility.inverse_marginal(mu);
        f <= self.bounds.lower || f >= self.bounds.upper
    }

    /// Prices at which this device's demand switches between clamped and
    /// interior: the marginal utilities at its two bounds.
    pub(crate) fn breakpoints(&self) -> [f64; 2] {
        [
            self.utility.a - self.utility.b * self.bounds.upper,
            self.utility.a - self.utility.b * self.bounds.lower,
        ]
    }
}

/// A community member with its devices and renewable generation (kWh).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
    pub devices: Vec<Device>,
    #[serde(default)]
    pub generation: f64,
}

impl Member {
    pub fn new(id: impl Into<String>, devices: Vec<Device>, generation: f64) -> Result<Self> {
        let m = Self {
            id: id.into(),
            devices,
            generation,
        };
        m.validate("member")?;
        Ok(m)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.devices.is_empty() {
            return Err(Error::invalid(
                format!("{path}.devices"),
                "a member needs at least one device",
            ));
        }
        for (k, dev) in self.devices.iter().enumerate() {
            dev.validate(&format!("{path}.devices[{k}]"))?;
        }
        if !(self.generation.is_finite() && self.generation >= 0.0) {
            return Err(Error::invalid(
                format!("{path}.generation"),
                format!("must be finite and >= 0, got {}", self.generation),
            ));
        }
        Ok(())
    }

    /// Total utility of a consumption bundle, one entry per device.
    pub fn utility(&self, consumption: &[f64]) -> f64 {
        self.devices
            .iter()
            .zip(consumption)
            .map(|(dev, &d)| dev.utility.eval(d))
            .sum()
    }

    pub fn is_adopter(&self) -> bool {
        self.generation > 0.0
    }

    pub fn upper_total(&self) -> f64 {
        self.devices.iter().map(|d| d.bounds.upper).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub members: Vec<Member>,
}

impl Community {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        let c = Self { members };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::invalid("members", "a community needs at least one member"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, m) in self.members.iter().enumerate() {
            let path = format!("members[{i}]");
            m.validate(&path)?;
            if !seen.insert(m.id.as_str()) {
                return Err(Error::invalid(
                    format!("{path}.id"),
                    format!("duplicate member id `{}`", m.id),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Aggregate generation `g_H`.
    pub fn generation(&self) -> f64 {
        self.members.iter().map(|m| m.generation).sum()
    }

    pub fn devices(&self) -> impl Iterator<Item = &Device> + Clone {
        self.members.iter().flat_map(|m| m.devices.iter())
    }

    /// Sum of all device upper bounds; the natural energy scale for tolerances.
    pub fn upper_total(&self) -> f64 {
        self.devices().map(|d| d.bounds.upper).sum()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let c: Community = serde_path_to_error::deserialize(de)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// The utility's NEM X tariff `(π⁺, π⁻, π⁰)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NemTariff {
    /// Import (retail) rate, $/kWh.
    pub retail: f64,
    /// Export rate, $/kWh.
    pub export: f64,
    /// Fixed charge per billing period, $.
    #[serde(default)]
    pub fixed: f64,
}

impl NemTariff {
    pub fn new(retail: f64, export: f64, fixed: f64) -> Result<Self> {
        let t = Self {
            retail,
            export,
            fixed,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.export.is_finite() && self.export >= 0.0) {
            return Err(Error::invalid(
                "export",
                format!("must be finite and >= 0, got {}", self.export),
            ));
        }
        if !(self.retail.is_finite() && self.retail >= self.export) {
            return Err(Error::invalid(
                "retail",
                format!("must be finite and >= export ({}), got {}", self.export, self.retail),
            ));
        }
        if !(self.fixed.is_finite() && self.fixed >= 0.0) {
            return Err(Error::invalid(
                "fixed",
                format!("must be finite and >= 0, got {}", self.fixed),
            ));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let t: NemTariff = serde_path_to_error::deserialize(de)?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}
