//! Experiment campaigns over temperature grids, their configuration and
//! reports, and the fast invariant battery.

pub mod battery;
pub mod campaigns;
pub mod config;
pub mod report;
