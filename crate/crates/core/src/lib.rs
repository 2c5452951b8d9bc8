//! Budget-constrained tripartite classification rules for a scalar risk
//! score: rules `(l, u]` that call scores at or below `l` negative, scores
//! above `u` positive, and send the rest to a gold-standard test whose use is
//! capped at a fraction `phi` of subjects.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cohort;
pub mod decision;
pub mod empirical;
pub mod error;
pub mod logistic;
pub mod resample;
pub mod roc;
pub mod select;
pub mod simulate;
pub mod special;
pub mod tilt;

pub use cohort::{parse_cohort, Cohort, Observation, Schema};
pub use decision::{apply_rule, brute_force_space, build_decision_space, Decision, DecisionSpace, Diagnosis, TripartiteRule};
pub use empirical::{ecdf_set, h_phi, CdfTable, EcdfSet, BELOW_SUPPORT};
pub use error::{Error, ErrorKind, Result};
pub use logistic::{fit_logistic, fit_score, LogisticFit};
pub use roc::{auc, auc_lower_bound, auc_variance_plugin, roc_curve, RocCurve};
pub use select::{risk_report, select_min_risk, select_rule, select_tilt_min_tmr, Method, RiskReport, SelectionCriterion};
pub use tilt::{fit_tilt, solve_nu, TiltModel};
