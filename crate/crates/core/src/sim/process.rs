use rand::Rng as _;

use crate::rng::Rng;

const ON: usize = 0;
const OFF1: usize = 1;
const OFF2: usize = 2;
const READY: usize = 3;

/// Spell chain with marginal on-probability equal to a target path.
///
/// States: on, two forced off months, then ready. On persists with
/// probability `a`; ready turns on with a month-specific probability solved
/// from the state law so that `P(on at m) = p[m]` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SpellChain {
    persistence: f64,
    initial: [f64; 4],
    /// `entry[m]` is the ready-to-on probability for the move from m to m + 1.
    entry: Vec<f64>,
}

const TOL: f64 = 1e-12;

impl SpellChain {
    pub fn new(persistence: f64, path: &[f64]) -> Result<Self, String> {
        let a = persistence;
        if path.is_empty() {
            return Err("empty rate path".into());
        }
        if let Some((m, p)) = path.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(format!("rate {p} at month index {m} outside [0, 1]"));
        }
        let initial = stationary(a, path[0])?;
        let mut law = initial;
        let mut entry = Vec::with_capacity(path.len().saturating_sub(1));
        for (m, &next) in path.iter().enumerate().skip(1) {
            let need = next - a * law[ON];
            let b = if law[READY] <= TOL {
                if need.abs() > 1e-10 {
                    return Err(format!("rate at month index {m} unreachable: no ready mass"));
                }
                0.0
            } else {
                need / law[READY]
            };
            if !(-TOL..=1.0 + TOL).contains(&b) {
                return Err(format!(
                    "rate change at month index {m} needs entry probability {b:.4} (persistence {a})"
                ));
            }
            let b = b.clamp(0.0, 1.0);
            law = [
                a * law[ON] + b * law[READY],
                (1.0 - a) * law[ON],
                law[OFF1],
                law[OFF2] + (1.0 - b) * law[READY],
            ];
            entry.push(b);
        }
        Ok(Self {
            persistence: a,
            initial,
            entry,
        })
    }

    pub fn len(&self) -> usize {
        self.entry.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// One path of on/off indicators.
    pub fn sample(&self, rng: &mut Rng) -> Vec<u8> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut state = READY;
        for (s, p) in self.initial.iter().enumerate() {
            acc += p;
            if u < acc {
                state = s;
                break;
            }
        }
        let mut out = Vec::with_capacity(self.len());
        out.push((state == ON) as u8);
        for &b in &self.entry {
            state = match state {
                ON => {
                    if rng.gen::<f64>() < self.persistence {
                        ON
                    } else {
                        OFF1
                    }
                }
                OFF1 => OFF2,
                OFF2 => READY,
                _ => {
                    if rng.gen::<f64>() < b {
                        ON
                    } else {
                        READY
                    }
                }
            };
            out.push((state == ON) as u8);
        }
        out
    }
}

/// Stationary law of the chain with on-probability `p`.
fn stationary(a: f64, p: f64) -> Result<[f64; 4], String> {
    if p <= 0.0 {
        return Ok([0.0, 0.0, 0.0, 1.0]);
    }
    let off = (1.0 - a) * p;
    let ready = 1.0 - p - 2.0 * off;
    if ready < -TOL || (ready <= TOL && off > TOL) {
        return Err(format!("initial rate {p} too high for persistence {a}"));
    }
    Ok([p, off, off, ready.max(0.0)])
}
