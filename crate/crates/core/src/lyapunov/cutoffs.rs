//! Quintic smoothstep cutoffs.
//!
//! `S(t) = 6t^5 - 15t^4 + 10t^3` on `[0, 1]` has `S' = S'' = 0` at both
//! ends and `max S' = 15/8`, so every unit-width ramp below stays within the
//! derivative bound 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(S, S', S'')` clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let t2 = t * t;
        let u = 1.0 - t;
        (
            t2 * t * (10.0 + t * (-15.0 + 6.0 * t)),
            30.0 * t2 * u * u,
            60.0 * t * u * (1.0 - 2.0 * t),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cutoff {
    /// 0 for `z <= lo`, 1 for `z >= hi`.
    Rising { lo: f64, hi: f64 },
    /// 1 for `z <= lo`, 0 for `z >= hi`.
    Falling { lo: f64, hi: f64 },
    /// 1 for `|z| <= inner`, 0 for `|z| >= outer`.
    Bump { inner: f64, outer: f64 },
    /// `1 - Bump`.
    Notch { inner: f64, outer: f64 },
}

impl Cutoff {
    pub fn rising(lo: f64, hi: f64) -> Result<Self> {
        check_gate(lo, hi)?;
        Ok(Cutoff::Rising { lo, hi })
    }

    pub fn falling(lo: f64, hi: f64) -> Result<Self> {
        check_gate(lo, hi)?;
        Ok(Cutoff::Falling { lo, hi })
    }

    pub fn bump(inner: f64, outer: f64) -> Result<Self> {
        check_gate(inner, outer)?;
        if inner < 0.0 {
            return Err(Error::Usage("cutoff: bump radius must be nonnegative".into()));
        }
        Ok(Cutoff::Bump { inner, outer })
    }

    pub fn notch(inner: f64, outer: f64) -> Result<Self> {
        Cutoff::bump(inner, outer).map(|_| Cutoff::Notch { inner, outer })
    }

    /// `(f, f', f'')` at `z`.
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        match *self {
            Cutoff::Rising { lo, hi } => {
                let w = hi - lo;
                let (s, s1, s2) = smoothstep((z - lo) / w);
                (s, s1 / w, s2 / (w * w))
            }
            Cutoff::Falling { lo, hi } => {
                let w = hi - lo;
                let (s, s1, s2) = smoothstep((z - lo) / w);
                (1.0 - s, -s1 / w, -s2 / (w * w))
            }
            Cutoff::Bump { inner, outer } => {
                let w = outer - inner;
                let (s, s1, s2) = smoothstep((z.abs() - inner) / w);
                let sg = z.signum();
                (1.0 - s, -sg * s1 / w, -s2 / (w * w))
            }
            Cutoff::Notch { inner, outer } => {
                let (f, f1, f2) = Cutoff::Bump { inner, outer }.eval(z);
                (1.0 - f, -f1, -f2)
            }
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        self.eval(z).0
    }
}

fn check_gate(lo: f64, hi: f64) -> Result<()> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Usage(format!("cutoff: inverted gate interval [{lo}, {hi}]")));
    }
    Ok(())
}

/// The cutoffs of the Nosé-Hoover construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub f0: Cutoff,
    pub f1: Cutoff,
    pub f2: Cutoff,
    pub f3: Cutoff,
    pub h1: Cutoff,
    pub h3: Cutoff,
    pub h: Cutoff,
    pub h0: Cutoff,
}

pub fn build_cutoffs(k_star: f64, y_star: f64, r1: f64) -> Result<CutoffFamily> {
    Ok(CutoffFamily {
        f0: Cutoff::falling(-1.0, 0.0)?,
        f1: Cutoff::falling(k_star, k_star + 1.0)?,
        f2: Cutoff::bump(1.0, 2.0)?,
        f3: Cutoff::notch(1.0, 2.0)?,
        h1: Cutoff::falling(-y_star - 1.0, -y_star)?,
        h3: Cutoff::bump(3.0, 4.0)?,
        h: Cutoff::rising(r1 - 1.0, r1)?,
        h0: Cutoff::rising(1.0, 2.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus() {
        let c = build_cutoffs(3.0, 5.0, 4.0).unwrap();
        assert_eq!(c.f0.value(-1.0), 1.0);
        assert_eq!(c.f0.value(0.0), 0.0);
        assert_eq!(c.h0.value(1.5), 0.5);
        assert_eq!(c.f2.value(-1.0), 1.0);
        assert_eq!(c.f3.value(2.5), 1.0);
        assert_eq!(c.h1.value(-6.0), 1.0);
        assert_eq!(c.h.value(3.0), 0.0);
    }

    #[test]
    fn slope_bound() {
        let c = build_cutoffs(3.0, 5.0, 4.0).unwrap();
        for cut in [c.f0, c.f1, c.f2, c.f3, c.h1, c.h3, c.h, c.h0] {
            for i in 0..10_000 {
                let z = -10.0 + 20.0 * i as f64 / 9999.0;
                assert!(cut.eval(z).1.abs() <= 2.0);
            }
        }
    }

    #[test]
    fn inverted_gate() {
        assert!(Cutoff::rising(1.0, 1.0).is_err());
    }
}
