//! Age of processed information (AoPI) for edge video analytics.
//!
//! [`model`] holds the system model: video configurations, rate and accuracy
//! profiles, slot inputs and decisions with their feasibility check.
//! [`analytics`] has the closed-form AoPI of FCFS and LCFS-with-preemption
//! queues and the quantities derived from it. [`sim`] is a discrete-event
//! simulator that cross-checks the closed forms.

pub mod analytics;
pub mod model;
pub mod sim;

pub use analytics::{aopi, aopi_fcfs, aopi_lcfsp, best_policy, AnalyticsError, AopiValue};
pub use model::{
    AopiInputs, ModelError, ModelId, Policy, Resolution, SlotContext, SlotDecision, VideoConfig,
};
