//! Dynamic NEM pricing for energy communities.
//!
//! An operator behind a single NEM revenue meter announces one volumetric
//! rate per interval, chosen from the community's aggregate renewable
//! generation. Members best-respond to that rate; the result coincides with
//! the community welfare optimum and satisfies the cost-causation axioms.
//!
//! * [`model`]: utilities, devices, members, tariffs
//! * [`pricing`]: thresholds, net-zero price solver, payment rules
//! * [`welfare`]: centralized/decentralized optima and the NEM X benchmark
//! * [`axioms`]: cost-causation audit
//! * [`sim`]: time-series harness on interval data
//! * [`instances`]: seeded random instances for property suites

pub mod axioms;
pub mod error;
pub mod instances;
pub mod model;
pub mod pricing;
pub mod sim;
pub mod welfare;

pub use error::{Error, Result};
pub use model::{clamped_demand, Community, Device, DeviceBounds, Member, NemTariff, QuadraticUtility};
pub use pricing::{CommunityPrice, Thresholds, Zone};
pub use welfare::{MemberOutcome, Outcome};
