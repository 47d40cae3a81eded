//! Scripted and random fault injection for module servers.

use crate::protocol::{Command, FaultHook, InjectedFault};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Busy,
    Fail,
}

/// Forces a fault on the `at`-th command (1-based, meta-actions excluded)
/// that a module receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedFault {
    pub at: u64,
    pub fault: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModuleFaults {
    pub busy_probability: f64,
    pub fail_probability: f64,
    pub script: Vec<ScriptedFault>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultPlan {
    pub seed: u64,
    pub modules: BTreeMap<String, ModuleFaults>,
}

impl FaultPlan {
    pub fn validate(&self) -> Result<(), String> {
        for (name, f) in &self.modules {
            for p in [f.busy_probability, f.fail_probability] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("fault probability {p} for module {name} is outside [0, 1]"));
                }
            }
            if f.script.iter().any(|s| s.at == 0) {
                return Err(format!("scripted fault for module {name} has at = 0; ordinals start at 1"));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.modules.values().all(|m| m.script.is_empty() && m.busy_probability == 0.0 && m.fail_probability == 0.0)
    }

    /// Scripted faults across all modules, by kind.
    pub fn scripted_count(&self, kind: FaultKind) -> usize {
        self.modules.values().flat_map(|m| &m.script).filter(|s| s.fault == kind).count()
    }

    pub fn injector_for(&self, module: &str) -> Option<FaultInjector> {
        let faults = self.modules.get(module)?.clone();
        let salt = module.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3));
        Some(FaultInjector { faults, received: 0, rng: ChaCha8Rng::seed_from_u64(self.seed ^ salt) })
    }
}

pub struct FaultInjector {
    faults: ModuleFaults,
    received: u64,
    rng: ChaCha8Rng,
}

impl FaultHook for FaultInjector {
    fn before(&mut self, _cmd: &Command) -> Option<InjectedFault> {
        self.received += 1;
        // draw both numbers every time so the random stream does not depend on the script
        let (busy, fail) = (self.rng.gen::<f64>(), self.rng.gen::<f64>());
        if let Some(s) = self.faults.script.iter().find(|s| s.at == self.received) {
            return Some(match s.fault {
                FaultKind::Busy => InjectedFault::Busy,
                FaultKind::Fail => InjectedFault::Fail(format!("injected failure on command #{}", self.received)),
            });
        }
        if busy < self.faults.busy_probability {
            return Some(InjectedFault::Busy);
        }
        if fail < self.faults.fail_probability {
            return Some(InjectedFault::Fail(format!("random failure on command #{}", self.received)));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_fires_at_ordinals() {
        let plan: FaultPlan = serde_yaml::from_str(
            "seed: 1\nmodules:\n  pf400:\n    script:\n      - {at: 2, fault: busy}\n      - {at: 3, fault: fail}\n",
        )
        .unwrap();
        plan.validate().unwrap();
        let mut inj = plan.injector_for("pf400").unwrap();
        let cmd = Command::new("x", "pf400", "transfer");
        assert_eq!(inj.before(&cmd), None);
        assert_eq!(inj.before(&cmd), Some(InjectedFault::Busy));
        assert!(matches!(inj.before(&cmd), Some(InjectedFault::Fail(_))));
        assert_eq!(inj.before(&cmd), None);
        assert!(plan.injector_for("ot2").is_none());
        assert_eq!(plan.scripted_count(FaultKind::Busy), 1);
    }

    #[test]
    fn probabilities_are_validated() {
        let mut plan = FaultPlan::default();
        plan.modules.insert("ot2".into(), ModuleFaults { busy_probability: 1.5, ..Default::default() });
        assert!(plan.validate().is_err());
    }

    #[test]
    fn certain_busy() {
        let mut plan = FaultPlan::default();
        plan.modules.insert("ot2".into(), ModuleFaults { busy_probability: 1.0, ..Default::default() });
        let mut inj = plan.injector_for("ot2").unwrap();
        for _ in 0..10 {
            assert_eq!(inj.before(&Command::new("x", "ot2", "a")), Some(InjectedFault::Busy));
        }
    }
}
