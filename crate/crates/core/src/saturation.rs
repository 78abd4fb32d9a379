//! Componentwise input saturation.
//!
//! A bound set `[lower_k, upper_k]` with `lower_k < 0 < upper_k` is kept per
//! control channel, or once for all channels. The control law of every
//! bounded strategy is `u = sat(-eta)`, which for symmetric bounds equals the
//! familiar `-rho(eta)` with `rho(eta) = sgn(eta) min(|eta|, U)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Saturation {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Saturation {
    /// `|u_k| <= u_bar` on every channel.
    pub fn symmetric(u_bar: f64) -> Result<Self> {
        Self::new(vec![-u_bar], vec![u_bar])
    }

    /// Per-channel bounds; a single entry broadcasts to every channel.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidParameter {
                name: "saturation",
                reason: format!(
                    "lower and upper bounds need the same nonzero length (got {} and {})",
                    lower.len(),
                    upper.len()
                ),
            });
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(*lo < 0.0 && *hi > 0.0) || lo.is_nan() || hi.is_nan() {
                return Err(Error::InvalidParameter {
                    name: "saturation",
                    reason: format!("channel {k}: need lower < 0 < upper, got [{lo}, {hi}]"),
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Number of channels with their own bounds, or `None` when one bound
    /// pair is shared.
    pub fn channels(&self) -> Option<usize> {
        (self.lower.len() > 1).then_some(self.lower.len())
    }

    pub fn fits(&self, len: usize) -> bool {
        self.lower.len() == 1 || self.lower.len() == len
    }

    #[inline]
    pub fn lower(&self, k: usize) -> f64 {
        if self.lower.len() == 1 {
            self.lower[0]
        } else {
            self.lower[k]
        }
    }

    #[inline]
    pub fn upper(&self, k: usize) -> f64 {
        if self.upper.len() == 1 {
            self.upper[0]
        } else {
            self.upper[k]
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(lo, hi)| -lo == *hi)
    }

    /// Clamp of channel `k`. NaN passes through.
    #[inline]
    pub fn clamp(&self, k: usize, v: f64) -> f64 {
        v.clamp(self.lower(k), self.upper(k))
    }

    /// Componentwise clamp of `v`.
    pub fn sat(&self, v: &[f64]) -> Vec<f64> {
        v.iter().enumerate().map(|(k, x)| self.clamp(k, *x)).collect()
    }

    /// Bounded control `sat(-eta)` for channel `k`.
    #[inline]
    pub fn control(&self, k: usize, eta: f64) -> f64 {
        self.clamp(k, -eta)
    }

    /// `int_0^g rho_k(t) dt` where `rho_k(t) = -sat_k(-t)` is the feedback
    /// nonlinearity seen by the state.
    pub fn rho_integral(&self, k: usize, g: f64) -> f64 {
        sat_integral_bounds(g, -self.upper(k), -self.lower(k))
    }
}

/// `int_0^g clamp(t, -u_bar, u_bar) dt`: `g^2 / 2` inside the bound and
/// `u_bar |g| - u_bar^2 / 2` outside. Even, nonnegative, radially unbounded.
pub fn sat_integral(g: f64, u_bar: f64) -> f64 {
    sat_integral_bounds(g, -u_bar, u_bar)
}

/// `int_0^g clamp(t, lo, hi) dt` with `lo < 0 < hi`.
pub fn sat_integral_bounds(g: f64, lo: f64, hi: f64) -> f64 {
    if g >= 0.0 {
        if g <= hi {
            0.5 * g * g
        } else {
            hi * g - 0.5 * hi * hi
        }
    } else if g >= lo {
        0.5 * g * g
    } else {
        lo * g - 0.5 * lo * lo
    }
}
