use serde::{Deserialize, Serialize};

/// Learning-rate multiplier over a run of `total` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Constant, then linear decay to zero over the final `fraction` of steps.
    Cooldown { fraction: f64 },
    /// Linear ramp from `1/w` to one over the first `fraction` of steps, then constant.
    Warmup { fraction: f64 },
}

impl Schedule {
    /// Multiplier for zero-based `step`.
    pub fn multiplier(&self, step: usize, total: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Cooldown { fraction } => {
                let len = span(fraction, total);
                let start = total - len;
                if len == 0 || step < start {
                    1.0
                } else {
                    (total.saturating_sub(step)) as f64 / len as f64
                }
            }
            Schedule::Warmup { fraction } => {
                let len = span(fraction, total);
                if step < len {
                    (step + 1) as f64 / len as f64
                } else {
                    1.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Schedule::Constant => Ok(()),
            Schedule::Cooldown { fraction } | Schedule::Warmup { fraction } => {
                if (0.0..=1.0).contains(&fraction) {
                    Ok(())
                } else {
                    Err(format!("fraction must be in [0, 1], got {fraction}"))
                }
            }
        }
    }
}

fn span(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).round() as usize).min(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cooldown_reaches_zero() {
        let s = Schedule::Cooldown { fraction: 0.2 };
        let m: Vec<f64> = (0..10).map(|t| s.multiplier(t, 10)).collect();
        assert_eq!(&m[..8], &[1.0; 8]);
        assert_eq!(m[8], 1.0);
        assert_eq!(m[9], 0.5);
        assert_eq!(s.multiplier(10, 10), 0.0);
    }

    #[test]
    fn warmup_ramps() {
        let s = Schedule::Warmup { fraction: 0.4 };
        let m: Vec<f64> = (0..5).map(|t| s.multiplier(t, 10)).collect();
        assert_eq!(m, vec![0.25, 0.5, 0.75, 1.0, 1.0]);
        assert!(Schedule::Warmup { fraction: 1.5 }.validate().is_err());
    }
}
