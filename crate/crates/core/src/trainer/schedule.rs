use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Only the cosine map learns, ascending the cosine loss.
    Maximize,
    /// Everything but the cosine map learns, descending the total loss.
    Minimize,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Maximize => "max",
            Phase::Minimize => "min",
        })
    }
}

/// Alternation of max and min phases, starting with a max phase. When
/// `adversarial` is off every step is a min step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialSchedule {
    pub max_phase_iters: usize,
    pub min_phase_iters: usize,
    pub adversarial: bool,
}

impl Default for AdversarialSchedule {
    fn default() -> Self {
        AdversarialSchedule {
            max_phase_iters: 20,
            min_phase_iters: 50,
            adversarial: true,
        }
    }
}

impl AdversarialSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_phase_iters == 0 || self.min_phase_iters == 0 {
            return Err(Error::Config("schedule phase lengths must be > 0".into()));
        }
        Ok(())
    }

    pub fn cycle_len(&self) -> usize {
        self.max_phase_iters + self.min_phase_iters
    }

    /// Phase and position within it for a zero-based global step.
    pub fn position(&self, step: usize) -> (Phase, usize) {
        if !self.adversarial {
            return (Phase::Minimize, step % self.min_phase_iters);
        }
        let r = step % self.cycle_len();
        if r < self.max_phase_iters {
            (Phase::Maximize, r)
        } else {
            (Phase::Minimize, r - self.max_phase_iters)
        }
    }

    pub fn phase_at(&self, step: usize) -> Phase {
        self.position(step).0
    }

    /// Run-length encoding of the phases over the first `steps` steps.
    pub fn trace(&self, steps: usize) -> Vec<(Phase, usize)> {
        let mut out: Vec<(Phase, usize)> = Vec::new();
        for s in 0..steps {
            let p = self.phase_at(s);
            match out.last_mut() {
                Some((q, n)) if *q == p && self.position(s).1 != 0 => *n += 1,
                _ => out.push((p, 1)),
            }
        }
        out
    }
}
