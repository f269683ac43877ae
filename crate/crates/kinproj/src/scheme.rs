//! The two time-stepping schemes and their continuous-in-time interpolants.
//!
//! One transport-projection step shifts the state along characteristics and
//! projects back onto the closure span in the weighted inner product of the
//! *lagged* state. The BGK variant first blends the shifted state toward its
//! equilibrium projection, at sample level, before the final projection; both
//! projections of a step use the lagged weight.
//!
//! The run loop re-checks the nondegeneracy property after every step (the
//! guard); a failed guard aborts the run and returns the partial trajectory
//! rather than truncating silently.

use crate::basis::{check_property_p, PropertyPParams};
use crate::diagnostics::{InitialRecord, RunLedger};
use crate::entropy::EntropyParams;
use crate::error::{Error, Result};
use crate::field::{sup_ball_l2_distance, DualField};
use crate::projection::{project_field, ProjectionSpace, Tolerances};
use crate::quad::VQuadrature;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeVariant {
    TransportProjection,
    Bgk,
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub variant: SchemeVariant,
    /// Time step, in (0, 1]; strictly below 1 for the BGK blend.
    pub h: f64,
    pub t_final: f64,
    pub guard: PropertyPParams,
    pub guard_sample_density: f64,
    /// Check the guard every this many steps (the final state is always
    /// checked). 1 = every step.
    pub guard_stride: usize,
    pub tol: Tolerances,
    /// Coefficients of the constant reference state.
    pub reference: Vec<f64>,
    /// Admission bound on `sup_x int_{B_R} |l0 - l_bar|^2 dv`; infinite
    /// disables the check.
    pub init_distance_max: f64,
    pub ledger_on: bool,
}

impl SchemeConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "time step h = {} must lie in (0, 1]",
                self.h
            )));
        }
        if self.variant == SchemeVariant::Bgk && self.h >= 1.0 {
            return Err(Error::InvalidParam(
                "the BGK blend requires h < 1".into(),
            ));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidParam(format!(
                "final time T = {} must be positive",
                self.t_final
            )));
        }
        if self.guard_stride == 0 {
            return Err(Error::InvalidParam("guard stride must be >= 1".into()));
        }
        if self.reference.len() != k {
            return Err(Error::Mismatch(format!(
                "reference state has {} coefficients for a basis of size {k}",
                self.reference.len()
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.h).ceil() as usize
    }
}

/// Why and where a run stopped early.
#[derive(Debug)]
pub struct AbortInfo {
    pub step: usize,
    pub cause: Error,
}

/// The sequence of accepted states, plus (for BGK) the per-step equilibrium
/// projections needed to reconstruct the relaxation blends.
#[derive(Debug)]
pub struct Trajectory {
    pub states: Vec<DualField>,
    /// BGK only: the equilibrium projection of the shifted state, one per
    /// completed step. The blend target is
    /// `(1-h) l^n(x - h v, v) + h pi0^n(x, v)`.
    pub equilibrium_projections: Vec<DualField>,
    pub h: f64,
    pub variant: SchemeVariant,
    pub ledger: RunLedger,
    pub abort: Option<AbortInfo>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.abort.is_none()
    }

    pub fn completed_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn t_span(&self) -> f64 {
        self.completed_steps() as f64 * self.h
    }

    pub fn final_state(&self) -> &DualField {
        self.states.last().unwrap()
    }

    /// Value of the blend target of step n at arbitrary (x, v).
    pub fn check_value(&self, n: usize, x: f64, v: &[f64; 3]) -> Result<f64> {
        let pi0 = self.equilibrium_projections.get(n).ok_or_else(|| {
            Error::InvalidParam(format!("no blend state at step {n}"))
        })?;
        let shifted = self.states[n].eval_xv(x - self.h * v[0], v);
        Ok((1.0 - self.h) * shifted + self.h * pi0.eval_xv(x, v))
    }

    /// Piecewise interpolant of the transport-projection scheme: transport at
    /// doubled speed over the first half-step, then a linear blend of the
    /// shifted state into the next accepted state.
    pub fn interpolant_tp(&self, x: f64, t: f64, v: &[f64; 3]) -> Result<f64> {
        let (n, tau) = self.locate(t)?;
        let h = self.h;
        if tau <= 0.5 * h {
            Ok(self.states[n].eval_xv(x - 2.0 * tau * v[0], v))
        } else {
            let lam = 2.0 * (h - tau) / h;
            let ahead = self.states[n + 1].eval_xv(x, v);
            let behind = self.states[n].eval_xv(x - h * v[0], v);
            Ok((1.0 - lam) * ahead + lam * behind)
        }
    }

    /// Piecewise interpolant of the BGK scheme: transport at tripled speed,
    /// then blends through the relaxation target into the next state.
    pub fn interpolant_bgk(&self, x: f64, t: f64, v: &[f64; 3]) -> Result<f64> {
        if self.equilibrium_projections.len() != self.completed_steps() {
            return Err(Error::InvalidParam(
                "trajectory carries no blend states (not a BGK run)".into(),
            ));
        }
        let (n, tau) = self.locate(t)?;
        let h = self.h;
        let third = h / 3.0;
        if tau <= third {
            Ok(self.states[n].eval_xv(x - 3.0 * tau * v[0], v))
        } else if tau <= 2.0 * third {
            let s = 3.0 * (tau - third) / h;
            let shifted = self.states[n].eval_xv(x - h * v[0], v);
            Ok((1.0 - s) * shifted + s * self.check_value(n, x, v)?)
        } else {
            let s = 3.0 * (tau - 2.0 * third) / h;
            let ahead = self.states[n + 1].eval_xv(x, v);
            Ok((1.0 - s) * self.check_value(n, x, v)? + s * ahead)
        }
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let t_max = self.t_span();
        if !(0.0..=t_max * (1.0 + 1e-12)).contains(&t) || self.completed_steps() == 0 {
            return Err(Error::TimeOutOfRange { t, t_max });
        }
        let n = ((t / self.h).floor() as usize).min(self.completed_steps() - 1);
        Ok((n, t - n as f64 * self.h))
    }
}

/// One transport-projection step.
pub fn step_tp(
    prev: &DualField,
    h: f64,
    entropy: &EntropyParams,
    quad: &VQuadrature,
    tol: &Tolerances,
) -> Result<DualField> {
    let shifted = prev.transport(h, quad)?;
    project_field(&shifted, prev, ProjectionSpace::Full, entropy, quad, tol)
}

/// One BGK step. Returns the accepted state and the equilibrium projection
/// of the shifted state (the coefficient part of the blend target).
pub fn step_bgk(
    prev: &DualField,
    h: f64,
    entropy: &EntropyParams,
    quad: &VQuadrature,
    tol: &Tolerances,
) -> Result<(DualField, DualField)> {
    let shifted = prev.transport(h, quad)?;
    let pi0 = project_field(
        &shifted,
        prev,
        ProjectionSpace::Equilibrium,
        entropy,
        quad,
        tol,
    )?;
    let pi0_samples = pi0.sample_at_nodes(quad)?;
    let blend = shifted.lin_comb(1.0 - h, &pi0_samples, h)?;
    let next = project_field(&blend, prev, ProjectionSpace::Full, entropy, quad, tol)?;
    Ok((next, pi0))
}

/// Outcome of scanning the guard over all grid points.
pub(crate) struct GuardScan {
    pub margins: [f64; 3],
    pub first_violation: Option<usize>,
}

pub(crate) fn scan_guard(
    field: &DualField,
    guard: &PropertyPParams,
    sample_density: f64,
) -> Result<GuardScan> {
    let mut margins = [f64::INFINITY; 3];
    let mut first_violation = None;
    for j in 0..field.grid().n() {
        let gamma = field.gamma_at(j);
        match check_property_p(field.basis(), &gamma, guard, sample_density) {
            Ok(report) => {
                for (m, r) in margins.iter_mut().zip(report.margins.iter()) {
                    *m = m.min(*r);
                }
                if !report.holds && first_violation.is_none() {
                    first_violation = Some(j);
                }
            }
            Err(Error::TailUnbounded { .. }) => {
                if first_violation.is_none() {
                    first_violation = Some(j);
                }
                margins[0] = f64::NEG_INFINITY;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(GuardScan {
        margins,
        first_violation,
    })
}

/// Run the configured scheme from an admissible initial state. Aborts are
/// embedded in the returned trajectory; a hard error is returned only for
/// structurally invalid inputs.
pub fn run(
    config: &SchemeConfig,
    l0: DualField,
    entropy: &EntropyParams,
    quad: &VQuadrature,
) -> Result<Trajectory> {
    config.validate(l0.k())?;
    let reference = DualField::constant(l0.grid(), l0.basis().clone(), &config.reference)?;

    let mut traj = Trajectory {
        states: Vec::new(),
        equilibrium_projections: Vec::new(),
        h: config.h,
        variant: config.variant,
        ledger: RunLedger::default(),
        abort: None,
    };

    // Admission: the initial state must carry the property and start close
    // enough to the reference.
    let scan = scan_guard(&l0, &config.guard, config.guard_sample_density)?;
    let mut admitted = true;
    if let Some(j) = scan.first_violation {
        traj.abort = Some(AbortInfo {
            step: 0,
            cause: Error::HypothesisViolation { step: 0, x_index: j },
        });
        admitted = false;
    } else if config.init_distance_max.is_finite() {
        let dist = sup_ball_l2_distance(&l0, &reference, quad, config.guard.r_outer)?;
        if dist > config.init_distance_max {
            traj.abort = Some(AbortInfo {
                step: 0,
                cause: Error::InvalidParam(format!(
                    "initial state too far from the reference: sup-ball distance {dist:.3e} > {:.3e}",
                    config.init_distance_max
                )),
            });
            admitted = false;
        }
    }

    if config.ledger_on {
        traj.ledger.initial = Some(InitialRecord::measure(
            &l0,
            &reference,
            entropy,
            quad,
            scan.margins,
        )?);
    }
    traj.states.push(l0);
    if !admitted {
        return Ok(traj);
    }

    let n_steps = config.n_steps();
    for n in 1..=n_steps {
        let start = Instant::now();
        let prev = traj.states.last().unwrap();
        let stepped = match config.variant {
            SchemeVariant::TransportProjection => {
                step_tp(prev, config.h, entropy, quad, &config.tol).map(|next| (next, None))
            }
            SchemeVariant::Bgk => step_bgk(prev, config.h, entropy, quad, &config.tol)
                .map(|(next, pi0)| (next, Some(pi0))),
        };
        let (next, pi0) = match stepped {
            Ok(v) => v,
            Err(e) => {
                traj.abort = Some(AbortInfo {
                    step: n,
                    cause: e.with_step(n),
                });
                return Ok(traj);
            }
        };

        let scan = scan_guard(&next, &config.guard, config.guard_sample_density)?;
        let guard_active = n % config.guard_stride == 0 || n == n_steps;
        if guard_active {
            if let Some(j) = scan.first_violation {
                traj.abort = Some(AbortInfo {
                    step: n,
                    cause: Error::HypothesisViolation { step: n, x_index: j },
                });
                return Ok(traj);
            }
        }

        if config.ledger_on {
            let record = crate::diagnostics::ledger_step(
                traj.states.last().unwrap(),
                &next,
                n,
                config.h,
                &reference,
                entropy,
                quad,
                config.guard.r_outer,
                scan.margins,
                start.elapsed().as_secs_f64() * 1e3,
            )?;
            traj.ledger.records.push(record);
        }

        traj.states.push(next);
        if let Some(p) = pi0 {
            traj.equilibrium_projections.push(p);
        }
    }
    Ok(traj)
}
