//! Power-law entropy, its Legendre dual, the weight generated by the dual
//! curvature, and the weight antiderivative whose moments are the conserved
//! quantities.
//!
//! With `s(f) = f^p` the dual objects come out in closed form:
//!
//! * `s*(l) = c_p (l_+)^{p/(p-1)}` with `c_p = (p-1)/p^{p/(p-1)}`,
//! * `w(l) = c_bar (l_-)^q` with `q = (2-p)/(p-1)`,
//! * `W(l) = -(c_bar/(q+1)) (l_-)^{q+1}`, normalized by `W(0) = 0`.
//!
//! The exponent range `1 < p < 6/5` gives `q > 4`, so the weight keeps four
//! continuous derivatives across `l = 0` and all weighted integrands are
//! compactly supported once the dual state is positive outside a ball.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const P_MIN: f64 = 1.0;
pub const P_MAX: f64 = 1.2;

/// Parameters of the power entropy family. Construct with [`EntropyParams::new`];
/// the derived exponents are cached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    p: f64,
    c_bar: f64,
    q: f64,
    c_p: f64,
}

impl EntropyParams {
    pub fn new(p: f64, c_bar: f64) -> Result<Self> {
        if !(p > P_MIN && p < P_MAX) || !p.is_finite() {
            return Err(Error::InvalidParam(format!(
                "entropy exponent p = {p} must lie in ({P_MIN}, {P_MAX})"
            )));
        }
        if !(c_bar > 0.0) || !c_bar.is_finite() {
            return Err(Error::InvalidParam(format!(
                "weight scale c_bar = {c_bar} must be positive"
            )));
        }
        let q = (2.0 - p) / (p - 1.0);
        debug_assert!(q > 4.0);
        // q + 1 = 1/(p-1) is an algebraic identity of the family.
        debug_assert!(((q + 1.0) - 1.0 / (p - 1.0)).abs() <= 1e-9 * (q + 1.0));
        let c_p = (p - 1.0) / p.powf(p / (p - 1.0));
        Ok(Self { p, c_bar, q, c_p })
    }

    /// The scale `c_bar = q + 1` makes the primal density `-W(l) = (l_-)^{1/(p-1)}`
    /// carry unit constant.
    pub fn with_unit_density(p: f64) -> Result<Self> {
        let q = (2.0 - p) / (p - 1.0);
        Self::new(p, q + 1.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn c_bar(&self) -> f64 {
        self.c_bar
    }

    pub fn c_p(&self) -> f64 {
        self.c_p
    }

    /// Entropy density `s(f) = f^p` for a nonnegative kinetic density.
    pub fn s_primal(&self, f: f64) -> Result<f64> {
        if f < 0.0 {
            return Err(Error::Domain(format!(
                "s_primal requires f >= 0, got {f}"
            )));
        }
        Ok(f.powf(self.p))
    }

    /// Legendre dual `s*(l) = c_p (l_+)^{p/(p-1)}`.
    pub fn s_star(&self, l: f64) -> f64 {
        let lp = l.max(0.0);
        if lp == 0.0 {
            0.0
        } else {
            self.c_p * lp.powf(self.p / (self.p - 1.0))
        }
    }

    /// Weight `w(l) = c_bar (l_-)^q`; vanishes for `l >= 0`.
    pub fn weight(&self, l: f64) -> f64 {
        let lm = (-l).max(0.0);
        if lm == 0.0 {
            0.0
        } else {
            self.c_bar * lm.powf(self.q)
        }
    }

    /// Antiderivative `W` of the weight with `W(0) = 0`; nonpositive everywhere.
    pub fn w_antideriv(&self, l: f64) -> f64 {
        let lm = (-l).max(0.0);
        if lm == 0.0 {
            0.0
        } else {
            -(self.c_bar / (self.q + 1.0)) * lm.powf(self.q + 1.0)
        }
    }

    /// Primal kinetic density reconstructed from the dual variable; equals
    /// `-W(l)` and vanishes exactly where `l >= 0`.
    pub fn density_from_dual(&self, l: f64) -> f64 {
        -self.w_antideriv(l)
    }
}

impl Default for EntropyParams {
    /// `p = 9/8` gives the integer exponent `q = 7`, and `c_bar = q + 1 = 8`
    /// the unit-constant density.
    fn default() -> Self {
        Self::with_unit_density(1.125).expect("default entropy parameters are valid")
    }
}
