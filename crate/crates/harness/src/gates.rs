//! Three-state tolerance gates.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStatus {
    Pass,
    Fail,
    /// The budget was too small to decide.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub status: GateStatus,
    pub detail: String,
}

impl Gate {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Gate {
            name: name.into(),
            status: if pass { GateStatus::Pass } else { GateStatus::Fail },
            detail,
        }
    }

    /// Like [`Gate::new`], but inconclusive when the relative standard
    /// error of the decisive estimate exceeds `max_rel`.
    pub fn with_precision(name: &str, pass: bool, rel_se: f64, max_rel: f64, detail: String) -> Self {
        let mut g = Self::new(name, pass, detail);
        // NaN counts as imprecise
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(rel_se <= max_rel) {
            g.status = GateStatus::Inconclusive;
            g.detail.push_str(&format!(" (relative SE {rel_se:.3} above {max_rel})"));
        }
        g
    }

    pub fn passed(&self) -> bool {
        self.status == GateStatus::Pass
    }
}

/// `0` if every gate passed, `1` if any failed, `3` if none failed but
/// some were inconclusive.
pub fn exit_code(gates: &[Gate]) -> i32 {
    if gates.iter().any(|g| g.status == GateStatus::Fail) {
        1
    } else if gates.iter().any(|g| g.status == GateStatus::Inconclusive) {
        3
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let pass = Gate::new("a", true, String::new());
        let fail = Gate::new("b", false, String::new());
        let vague = Gate::with_precision("c", false, 0.5, 0.1, String::new());
        assert_eq!(vague.status, GateStatus::Inconclusive);
        assert_eq!(exit_code(std::slice::from_ref(&pass)), 0);
        assert_eq!(exit_code(&[pass.clone(), vague.clone()]), 3);
        assert_eq!(exit_code(&[pass, vague, fail]), 1);
        assert_eq!(Gate::with_precision("d", true, f64::NAN, 0.1, String::new()).status, GateStatus::Inconclusive);
    }
}
