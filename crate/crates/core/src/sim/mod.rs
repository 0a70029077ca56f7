//! Time-series experiments: load data, fit utilities, run the community and
//! the standalone benchmark per netting interval, and report gains and
//! reverse power flow.

pub mod calibrate;
pub mod data;
pub mod report;
pub mod scenario;
pub mod synth;
pub mod tariff;

pub use calibrate::{calibrate_utilities, BPolicy, CalibratedMember, CalibrationConfig};
pub use data::{load_timeseries, load_timeseries_file, write_timeseries, IntervalRecord, TimeSeries};
pub use report::{compute_gains, compute_rpf, rpf_series, MonthlyGain, RpfMode, ScenarioSummary};
pub use scenario::{run_intervals, run_scenario, IntervalInput, IntervalResult, ScenarioRun};
pub use synth::{generate_synthetic_scenario, SynthConfig};
pub use tariff::{ExportRate, NettingPeriod, SimConfig, TouSchedule};
