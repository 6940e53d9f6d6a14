//! Composite Monte Carlo estimators built on the quenched survival
//! probability of linear-fractional environments.

mod phi;
mod survival;
mod theorem;
mod theta;

pub use phi::{PhiForm, PhiSpec};
pub use survival::{
    conditioned_ratio, conditioned_ratio_with, joint_probability, survival_pass, tower_comparison,
    verify_survival, ConditionedRatio, SurvivalPass, SurvivalReport, SurvivalRow, TowerReport,
};
pub use theorem::{small_deviation_ratio, verify_theorem, CorollaryReport, RatioRow, TheoremReport};
pub use theta::{
    estimate_plus_factor, estimate_theta, estimate_theta_j, MPolicy, PlusFactor, ThetaBudget, ThetaReport,
    ThetaTerm,
};
