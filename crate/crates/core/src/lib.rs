//! Capped, fair ad allocation by signature grouping.
//!
//! Subscribers that are eligible for exactly the same campaigns and share a
//! frequency cap are interchangeable, so the subscriber × campaign integer
//! program can be written over groups instead. The pipeline is
//! [`grouping::build_groups`] → [`optimizer::formulate`] → [`optimizer::solve`]
//! → [`disaggregation::assemble`].

pub mod disaggregation;
pub mod domain;
pub mod formats;
pub mod grouping;
pub mod optimizer;
pub mod pipeline;
pub mod synth;
pub mod targeting;

pub use domain::{
    objective_value, validate_instance, AllocationResult, Campaign, CategoryId, FairnessConfig,
    Instance, KpiAttribute, KpiKind, KpiSchema, KpiValue, KpiVector, Money, Subscriber, Violation,
    ViolationKind,
};
pub use grouping::{build_groups, GroupKey, GroupStats, Grouping, SubscriberGroup};
pub use optimizer::{GroupAllocation, IpModel};
pub use targeting::{parse_predicate, EligibilitySignature, TargetPredicate};
