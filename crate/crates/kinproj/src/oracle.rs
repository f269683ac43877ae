//! Independent realization of the limiting moment system: the moment map
//! `U_i = int l_i W(l) dv`, its Newton inversion (the Jacobian is the
//! weighted Gram matrix, positive definite under the nondegeneracy
//! property), the advective flux, and a Lax-Friedrichs finite-volume solver
//! for `dU/dt + dF(U)/dx = 0` on the periodic line.
//!
//! The solver exists to cross-validate the splitting scheme's small-step
//! limit, so it favors robustness over accuracy order.

use crate::basis::PolyBasis;
use crate::entropy::EntropyParams;
use crate::error::{Error, Result};
use crate::field::DualField;
use crate::linalg::{spd_solve, sym_extremal_eigenvalues};
use crate::quad::VQuadrature;
use crate::scheme::Trajectory;
use rayon::prelude::*;
use std::io::Write;

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Largest admissible Courant number of the reference solver.
pub const CFL_LIMIT: f64 = 0.4;

/// Moments of the weight antiderivative: `U_i = int l_i(v) W(l) dv`.
pub fn moments_from_coeffs(
    gamma: &[f64],
    basis: &PolyBasis,
    quad: &VQuadrature,
    entropy: &EntropyParams,
) -> Result<Vec<f64>> {
    let k = basis.len();
    if gamma.len() != k {
        return Err(Error::Mismatch(format!(
            "{} coefficients for a basis of size {k}",
            gamma.len()
        )));
    }
    let mut u = vec![0.0; k];
    for (v, &wq) in quad.nodes().iter().zip(quad.weights().iter()) {
        let l = basis.eval_dual(gamma, v)?;
        let big_w = entropy.w_antideriv(l);
        if big_w == 0.0 {
            continue;
        }
        let vals = basis.eval(v);
        for i in 0..k {
            u[i] += wq * vals[i] * big_w;
        }
    }
    Ok(u)
}

/// Advective flux of the moment system (one spatial direction):
/// `F_i = int v_1 l_i(v) W(l) dv`.
pub fn flux_from_coeffs(
    gamma: &[f64],
    basis: &PolyBasis,
    quad: &VQuadrature,
    entropy: &EntropyParams,
) -> Result<Vec<f64>> {
    let k = basis.len();
    if gamma.len() != k {
        return Err(Error::Mismatch(format!(
            "{} coefficients for a basis of size {k}",
            gamma.len()
        )));
    }
    let mut f = vec![0.0; k];
    for (v, &wq) in quad.nodes().iter().zip(quad.weights().iter()) {
        let l = basis.eval_dual(gamma, v)?;
        let big_w = entropy.w_antideriv(l);
        if big_w == 0.0 {
            continue;
        }
        let vals = basis.eval(v);
        for i in 0..k {
            f[i] += wq * v[0] * vals[i] * big_w;
        }
    }
    Ok(f)
}

/// Weighted Gram at `gamma`; this is the Jacobian of the moment map.
pub fn moment_jacobian(
    gamma: &[f64],
    basis: &PolyBasis,
    quad: &VQuadrature,
    entropy: &EntropyParams,
) -> Result<Vec<f64>> {
    let k = basis.len();
    let mut j = vec![0.0; k * k];
    for (v, &wq) in quad.nodes().iter().zip(quad.weights().iter()) {
        let l = basis.eval_dual(gamma, v)?;
        let w = entropy.weight(l);
        if w == 0.0 {
            continue;
        }
        let vals = basis.eval(v);
        for a in 0..k {
            for b in a..k {
                j[a * k + b] += wq * w * vals[a] * vals[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            j[a * k + b] = j[b * k + a];
        }
    }
    Ok(j)
}

/// Invert the moment map by damped Newton iteration from a nondegenerate
/// initial guess. The step is damped by halving until the residual drops.
pub fn coeffs_from_moments(
    u_target: &[f64],
    gamma_guess: &[f64],
    basis: &PolyBasis,
    quad: &VQuadrature,
    entropy: &EntropyParams,
) -> Result<Vec<f64>> {
    let k = basis.len();
    if u_target.len() != k || gamma_guess.len() != k {
        return Err(Error::Mismatch(
            "moment vector and guess must match the basis size".into(),
        ));
    }
    let u_scale = 1.0 + u_target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual_at = |gamma: &[f64]| -> Result<Vec<f64>> {
        let u = moments_from_coeffs(gamma, basis, quad, entropy)?;
        Ok(u.iter().zip(u_target.iter()).map(|(a, b)| a - b).collect())
    };

    let mut gamma = gamma_guess.to_vec();
    let mut res = residual_at(&gamma)?;
    let mut res_norm = sup(&res);
    for _iter in 0..NEWTON_MAX_ITER {
        if res_norm <= NEWTON_TOL * u_scale {
            return Ok(gamma);
        }
        let jac = moment_jacobian(&gamma, basis, quad, entropy)?;
        let trace: f64 = (0..k).map(|i| jac[i * k + i]).sum();
        let floor = 1e-12 * trace / k as f64;
        let lambda_min = sym_extremal_eigenvalues(&jac, k).0;
        if trace <= 0.0 || lambda_min <= floor {
            return Err(Error::DegenerateWeight {
                step: None,
                x_index: None,
                lambda_min,
                floor,
            });
        }
        let delta = spd_solve(&jac, k, &res, 1e-12)?;
        let mut lambda = 1.0f64;
        loop {
            let trial: Vec<f64> = gamma
                .iter()
                .zip(delta.iter())
                .map(|(g, d)| g - lambda * d)
                .collect();
            let trial_res = residual_at(&trial)?;
            let trial_norm = sup(&trial_res);
            if trial_norm < res_norm || lambda < 1e-6 {
                gamma = trial;
                res = trial_res;
                res_norm = trial_norm;
                break;
            }
            lambda *= 0.5;
        }
    }
    if res_norm <= NEWTON_TOL * u_scale {
        Ok(gamma)
    } else {
        Err(Error::NoConvergence {
            cell: None,
            iters: NEWTON_MAX_ITER,
            residual: res_norm,
        })
    }
}

/// Moment vectors on a periodic cell grid.
#[derive(Debug, Clone)]
pub struct MomentField {
    pub n_cells: usize,
    pub l_period: f64,
    pub k: usize,
    /// Row-major: `values[j * k + i]`.
    pub values: Vec<f64>,
}

impl MomentField {
    pub fn cell(&self, j: usize) -> &[f64] {
        &self.values[j * self.k..(j + 1) * self.k]
    }

    pub fn dx(&self) -> f64 {
        self.l_period / self.n_cells as f64
    }

    /// Cell totals `sum_j U_i(x_j) dx`, the conserved quantities of the
    /// finite-volume update.
    pub fn totals(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.k];
        for j in 0..self.n_cells {
            for i in 0..self.k {
                t[i] += self.cell(j)[i] * self.dx();
            }
        }
        t
    }

    /// Conservative block average down to `n_coarse` cells.
    pub fn block_average(&self, n_coarse: usize) -> Result<MomentField> {
        if n_coarse == 0 || self.n_cells % n_coarse != 0 {
            return Err(Error::Mismatch(format!(
                "{} cells cannot be averaged down to {n_coarse}",
                self.n_cells
            )));
        }
        let factor = self.n_cells / n_coarse;
        let mut values = vec![0.0; n_coarse * self.k];
        for jc in 0..n_coarse {
            for f in 0..factor {
                let j = jc * factor + f;
                for i in 0..self.k {
                    values[jc * self.k + i] += self.cell(j)[i] / factor as f64;
                }
            }
        }
        Ok(MomentField {
            n_cells: n_coarse,
            l_period: self.l_period,
            k: self.k,
            values,
        })
    }

    /// CSV rows `(x_index, U_1..U_k)`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut header = String::from("x_index");
        for i in 1..=self.k {
            header.push_str(&format!(",U_{i}"));
        }
        writeln!(out, "{header}")?;
        for j in 0..self.n_cells {
            let mut row = format!("{j}");
            for i in 0..self.k {
                row.push_str(&format!(",{:.17e}", self.cell(j)[i]));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Moment field of a dual state, one vector per grid point.
pub fn moment_field_of(
    field: &DualField,
    quad: &VQuadrature,
    entropy: &EntropyParams,
) -> Result<MomentField> {
    let n = field.grid().n();
    let k = field.k();
    let mut values = vec![0.0; n * k];
    for j in 0..n {
        let u = moments_from_coeffs(&field.gamma_at(j), field.basis(), quad, entropy)?;
        values[j * k..(j + 1) * k].copy_from_slice(&u);
    }
    Ok(MomentField {
        n_cells: n,
        l_period: field.grid().l_period(),
        k,
        values,
    })
}

/// Moment field of a dual state resampled on a finer periodic grid via the
/// band-limited interpolant of its coefficients.
pub fn moment_field_resampled(
    field: &DualField,
    n_cells: usize,
    quad: &VQuadrature,
    entropy: &EntropyParams,
) -> Result<MomentField> {
    let k = field.k();
    let l_period = field.grid().l_period();
    let mut values = vec![0.0; n_cells * k];
    for j in 0..n_cells {
        let x = j as f64 * l_period / n_cells as f64;
        let gamma = field.interp_gamma(x);
        let u = moments_from_coeffs(&gamma, field.basis(), quad, entropy)?;
        values[j * k..(j + 1) * k].copy_from_slice(&u);
    }
    Ok(MomentField {
        n_cells,
        l_period,
        k,
        values,
    })
}

/// Lax-Friedrichs finite-volume integration of the closed moment system on
/// the periodic line. `dt` must respect `dt <= CFL_LIMIT * dx / R_quad`; it
/// is shortened so the final time is hit exactly. Newton inversions reuse
/// each cell's coefficients from the previous time level as the guess; the
/// very first sweep continues spatially from `gamma_init`.
pub fn solve_moment_pde(
    u0: &MomentField,
    dt: f64,
    t_final: f64,
    gamma_init: &[f64],
    basis: &PolyBasis,
    quad: &VQuadrature,
    entropy: &EntropyParams,
) -> Result<MomentField> {
    let dx = u0.dx();
    let v_max = quad.r_quad();
    let dt_max = CFL_LIMIT * dx / v_max;
    if dt > dt_max * (1.0 + 1e-12) {
        return Err(Error::InvalidParam(format!(
            "dt = {dt:.6e} violates the CFL bound {dt_max:.6e} (CFL {CFL_LIMIT}, dx = {dx:.6e}, v_max = {v_max})"
        )));
    }
    if !(t_final > 0.0) {
        return Err(Error::InvalidParam("t_final must be positive".into()));
    }
    let n_steps = (t_final / dt).ceil() as usize;
    let dt = t_final / n_steps as f64;

    let n = u0.n_cells;
    let k = u0.k;
    let mut u = u0.values.clone();
    // Initial spatial continuation sweep for the inversion guesses.
    let mut gammas: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut guess = gamma_init.to_vec();
    for j in 0..n {
        let g = coeffs_from_moments(&u[j * k..(j + 1) * k], &guess, basis, quad, entropy)
            .map_err(|e| attach_cell(e, j))?;
        guess = g.clone();
        gammas.push(g);
    }

    for _step in 0..n_steps {
        let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let g = coeffs_from_moments(
                    &u[j * k..(j + 1) * k],
                    &gammas[j],
                    basis,
                    quad,
                    entropy,
                )
                .map_err(|e| attach_cell(e, j))?;
                let f = flux_from_coeffs(&g, basis, quad, entropy)?;
                Ok((g, f))
            })
            .collect();
        let mut fluxes = vec![0.0; n * k];
        for (j, res) in results.into_iter().enumerate() {
            let (g, f) = res?;
            fluxes[j * k..(j + 1) * k].copy_from_slice(&f);
            gammas[j] = g;
        }
        let mut u_next = vec![0.0; n * k];
        for j in 0..n {
            let jm = (j + n - 1) % n;
            let jp = (j + 1) % n;
            for i in 0..k {
                u_next[j * k + i] = 0.5 * (u[jm * k + i] + u[jp * k + i])
                    - dt / (2.0 * dx) * (fluxes[jp * k + i] - fluxes[jm * k + i]);
            }
        }
        u = u_next;
    }
    Ok(MomentField {
        n_cells: n,
        l_period: u0.l_period,
        k,
        values: u,
    })
}

fn attach_cell(e: Error, j: usize) -> Error {
    match e {
        Error::NoConvergence {
            iters, residual, ..
        } => Error::NoConvergence {
            cell: Some(j),
            iters,
            residual,
        },
        other => other.with_x_index(j),
    }
}

/// Relative L1 distance of the moment components, each normalized by the
/// largest component norm of the reference (component-wise normalization is
/// ill-posed for odd moments that vanish identically at the start).
pub fn moment_rel_l1_errors(a: &MomentField, b: &MomentField) -> Result<Vec<f64>> {
    if a.n_cells != b.n_cells || a.k != b.k {
        return Err(Error::Mismatch("moment fields are incompatible".into()));
    }
    let mut norms = vec![0.0; a.k];
    let mut diffs = vec![0.0; a.k];
    for j in 0..a.n_cells {
        for i in 0..a.k {
            norms[i] += b.cell(j)[i].abs() * b.dx();
            diffs[i] += (a.cell(j)[i] - b.cell(j)[i]).abs() * a.dx();
        }
    }
    let scale = norms.iter().fold(0.0f64, |m, v| m.max(*v));
    if scale == 0.0 {
        return Err(Error::InvalidParam("reference moment field is zero".into()));
    }
    Ok(diffs.iter().map(|d| d / scale).collect())
}

/// Run the finite-volume reference from the trajectory's initial data to the
/// trajectory's final time, and return the worst relative L1 moment error.
pub fn compare_with_reference(
    traj: &Trajectory,
    l0: &DualField,
    entropy: &EntropyParams,
    quad: &VQuadrature,
    n_cells: usize,
    cfl: f64,
) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= CFL_LIMIT) {
        return Err(Error::InvalidParam(format!(
            "CFL number {cfl} outside (0, {CFL_LIMIT}]"
        )));
    }
    let basis = l0.basis();
    let u0 = moment_field_resampled(l0, n_cells, quad, entropy)?;
    let dt = cfl * u0.dx() / quad.r_quad();
    let gamma_init = l0.gamma_at(0);
    let u_ref = solve_moment_pde(&u0, dt, traj.t_span(), &gamma_init, basis, quad, entropy)?;
    let u_ref_coarse = u_ref.block_average(l0.grid().n())?;
    let u_scheme = moment_field_of(traj.final_state(), quad, entropy)?;
    let errs = moment_rel_l1_errors(&u_scheme, &u_ref_coarse)?;
    Ok(errs.iter().fold(0.0f64, |m, v| m.max(*v)))
}

/// Smooth space-time test profile: a compactly supported bump in time times
/// a periodic harmonic in x.
#[derive(Debug, Clone, Copy)]
pub struct TestFunction {
    pub mode: i32,
    pub phase: f64,
    pub amplitude: f64,
    pub l_period: f64,
    pub t_final: f64,
}

impl TestFunction {
    fn bump(&self, t: f64) -> (f64, f64) {
        // eta(s) = exp(4 - 1/(s(1-s))) on (0,1); value and time derivative.
        let s = t / self.t_final;
        if s <= 0.0 || s >= 1.0 {
            return (0.0, 0.0);
        }
        let u = s * (1.0 - s);
        let eta = (4.0 - 1.0 / u).exp();
        if eta == 0.0 {
            return (0.0, 0.0);
        }
        let deta = eta * (1.0 - 2.0 * s) / (u * u) / self.t_final;
        (eta, deta)
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (eta, _) = self.bump(t);
        let arg = std::f64::consts::TAU * self.mode as f64 * x / self.l_period + self.phase;
        self.amplitude * eta * arg.cos()
    }

    pub fn dt(&self, x: f64, t: f64) -> f64 {
        let (_, deta) = self.bump(t);
        let arg = std::f64::consts::TAU * self.mode as f64 * x / self.l_period + self.phase;
        self.amplitude * deta * arg.cos()
    }

    pub fn dx(&self, x: f64, t: f64) -> f64 {
        let (eta, _) = self.bump(t);
        let kx = std::f64::consts::TAU * self.mode as f64 / self.l_period;
        let arg = kx * x + self.phase;
        -self.amplitude * eta * kx * arg.sin()
    }
}

/// Deterministic family of test profiles.
pub fn seeded_test_functions(
    count: usize,
    seed: u64,
    l_period: f64,
    t_final: f64,
) -> Vec<TestFunction> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| TestFunction {
            mode: (i % 3) as i32 + 1,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            amplitude: 1.0,
            l_period,
            t_final,
        })
        .collect()
}

/// Space-time weak-form residuals of the limiting equations along a
/// transport-projection trajectory:
/// `| triple-int W(l^h) l_i (dpsi/dt + v dpsi/dx) dv dx dt |` per test
/// function and moment. Time integration is composite Gauss on each
/// interpolant sub-segment, so the piecewise structure is resolved exactly.
pub fn weak_residual(
    traj: &Trajectory,
    test_functions: &[TestFunction],
    entropy: &EntropyParams,
    quad: &VQuadrature,
) -> Result<Vec<Vec<f64>>> {
    let n_steps = traj.completed_steps();
    if n_steps == 0 {
        return Err(Error::InvalidParam("empty trajectory".into()));
    }
    let h = traj.h;
    let state0 = &traj.states[0];
    let grid = state0.grid();
    let n = grid.n();
    let nq = quad.len();
    let dx = grid.dx();
    let k = state0.k();
    let basis_table = state0.basis().values_at_nodes(quad);
    let (t_nodes, t_weights) = crate::quad::gauss_legendre(5);

    let mut acc = vec![vec![0.0f64; k]; test_functions.len()];
    let mut add_slab = |t: f64, wt: f64, samples: &crate::field::SampledField| -> Result<()> {
        for (p, psi) in test_functions.iter().enumerate() {
            for j in 0..n {
                let x = grid.point(j);
                let dpsi_dt = psi.dt(x, t);
                let dpsi_dx = psi.dx(x, t);
                let mut per_i = vec![0.0; k];
                for q in 0..nq {
                    let big_w = entropy.w_antideriv(samples.value(j, q));
                    if big_w == 0.0 {
                        continue;
                    }
                    let factor = quad.weights()[q]
                        * big_w
                        * (dpsi_dt + quad.nodes()[q][0] * dpsi_dx);
                    for i in 0..k {
                        per_i[i] += factor * basis_table[i * nq + q];
                    }
                }
                for i in 0..k {
                    acc[p][i] += wt * dx * per_i[i];
                }
            }
        }
        Ok(())
    };

    for step in 0..n_steps {
        let t0 = step as f64 * h;
        // First half: transport of the accepted state at doubled speed.
        for (node, gw) in t_nodes.iter().zip(t_weights.iter()) {
            let tau = 0.25 * h * (node + 1.0);
            let t = t0 + tau;
            let samples = traj.states[step].transport(2.0 * tau, quad)?;
            add_slab(t, gw * 0.25 * h, &samples)?;
        }
        // Second half: linear blend of the fully shifted state into the next.
        let shifted = traj.states[step].transport(h, quad)?;
        let ahead = traj.states[step + 1].sample_at_nodes(quad)?;
        for (node, gw) in t_nodes.iter().zip(t_weights.iter()) {
            let tau = 0.5 * h + 0.25 * h * (node + 1.0);
            let t = t0 + tau;
            let lam = 2.0 * (h - tau) / h;
            let samples = ahead.lin_comb(1.0 - lam, &shifted, lam)?;
            add_slab(t, gw * 0.25 * h, &samples)?;
        }
    }

    Ok(acc
        .into_iter()
        .map(|row| row.into_iter().map(f64::abs).collect())
        .collect())
}
