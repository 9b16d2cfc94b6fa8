//! Time-domain simulation of an inverter-based DG on a weak grid with a
//! parallel RLC load, together with a hybrid islanding detector (slip-mode
//! frequency shift armed by a ROCOF relay) and its non-detection-zone analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod ndz;
pub mod plant;
pub mod scenarios;
pub mod signals;

pub use error::{Error, Result};
pub use scenarios::{run_scenario, ScenarioResult, ScenarioSpec};
