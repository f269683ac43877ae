//! Discrete dual states on a periodic spatial grid.
//!
//! A [`DualField`] stores the coefficient functions `gamma_i(x_j)` of a dual
//! state `l(x, v) = sum_i gamma_i(x) l_i(v)`; the representation is exact in
//! `v`. The semi-Lagrangian shift, spatial derivatives and single-point
//! interpolation all go through the Fourier side, so band-limited data is
//! handled exactly and the scheme's O(h) error is not polluted by
//! interpolation error.

use crate::basis::PolyBasis;
use crate::entropy::EntropyParams;
use crate::error::{Error, Result};
use crate::fft;
use crate::quad::VQuadrature;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Periodic uniform grid in the spatial variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XGrid {
    d_x: usize,
    l_period: f64,
    n: usize,
}

impl XGrid {
    pub fn new(d_x: usize, l_period: f64, n: usize) -> Result<Self> {
        if d_x != 1 {
            return Err(Error::InvalidParam(format!(
                "spatial dimension d_x = {d_x} is not supported (only d_x = 1)"
            )));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "grid size N = {n} must be even and >= 8"
            )));
        }
        if !(l_period > 0.0) || !l_period.is_finite() {
            return Err(Error::InvalidParam(format!(
                "period L = {l_period} must be positive"
            )));
        }
        Ok(Self { d_x, l_period, n })
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l_period(&self) -> f64 {
        self.l_period
    }

    pub fn dx(&self) -> f64 {
        self.l_period / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    /// Wrap a coordinate into [0, L).
    pub fn wrap(&self, x: f64) -> f64 {
        x.rem_euclid(self.l_period)
    }
}

/// Coefficient representation of a dual state on an [`XGrid`].
#[derive(Debug, Clone)]
pub struct DualField {
    grid: XGrid,
    basis: Arc<PolyBasis>,
    /// Row-major: `coeffs[i * n + j]` is `gamma_i(x_j)`.
    coeffs: Vec<f64>,
}

impl DualField {
    pub fn from_coeffs(grid: XGrid, basis: Arc<PolyBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() * grid.n() {
            return Err(Error::Mismatch(format!(
                "coefficient array of length {} for k = {} and N = {}",
                coeffs.len(),
                basis.len(),
                grid.n()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParam("non-finite coefficient value".into()));
        }
        Ok(Self { grid, basis, coeffs })
    }

    /// Build from a closure `(i, x) -> gamma_i(x)`.
    pub fn from_fn(
        grid: XGrid,
        basis: Arc<PolyBasis>,
        f: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let n = grid.n();
        let k = basis.len();
        let mut coeffs = vec![0.0; k * n];
        for i in 0..k {
            for j in 0..n {
                coeffs[i * n + j] = f(i, grid.point(j));
            }
        }
        Self::from_coeffs(grid, basis, coeffs)
    }

    /// Spatially constant state.
    pub fn constant(grid: XGrid, basis: Arc<PolyBasis>, gamma: &[f64]) -> Result<Self> {
        if gamma.len() != basis.len() {
            return Err(Error::Mismatch(format!(
                "constant state with {} coefficients for a basis of size {}",
                gamma.len(),
                basis.len()
            )));
        }
        Self::from_fn(grid, basis, |i, _| gamma[i])
    }

    pub fn grid(&self) -> XGrid {
        self.grid
    }

    pub fn basis(&self) -> &Arc<PolyBasis> {
        &self.basis
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.grid.n() + j]
    }

    pub fn coeff_row(&self, i: usize) -> &[f64] {
        let n = self.grid.n();
        &self.coeffs[i * n..(i + 1) * n]
    }

    /// Coefficient vector at grid point j.
    pub fn gamma_at(&self, j: usize) -> Vec<f64> {
        (0..self.k()).map(|i| self.coeff(i, j)).collect()
    }

    /// Value of the state at grid point j and velocity v.
    pub fn eval_node(&self, j: usize, v: &[f64; 3]) -> f64 {
        let vals = self.basis.eval(v);
        vals.iter()
            .enumerate()
            .map(|(i, lv)| self.coeff(i, j) * lv)
            .sum()
    }

    fn spectra(&self) -> Vec<Vec<Complex<f64>>> {
        (0..self.k()).map(|i| fft::forward(self.coeff_row(i))).collect()
    }

    /// Trigonometric interpolation of coefficient i at an arbitrary point;
    /// exact below the Nyquist wavenumber.
    pub fn interp_coeff(&self, i: usize, x: f64) -> f64 {
        let spec = fft::forward(self.coeff_row(i));
        fft::point_eval(&spec, self.grid.l_period(), self.grid.wrap(x))
    }

    /// All k coefficients interpolated at x, reusing one transform each.
    pub fn interp_gamma(&self, x: f64) -> Vec<f64> {
        let xw = self.grid.wrap(x);
        (0..self.k())
            .map(|i| {
                let spec = fft::forward(self.coeff_row(i));
                fft::point_eval(&spec, self.grid.l_period(), xw)
            })
            .collect()
    }

    /// Value of the state at arbitrary (x, v).
    pub fn eval_xv(&self, x: f64, v: &[f64; 3]) -> f64 {
        let gamma = self.interp_gamma(x);
        let vals = self.basis.eval(v);
        gamma.iter().zip(vals.iter()).map(|(g, l)| g * l).sum()
    }

    /// Semi-Lagrangian shift: samples of `l(x_j - h v_q, v_q)` on the grid
    /// and quadrature nodes. `h = 0` reduces to node-wise evaluation.
    pub fn transport(&self, h: f64, quad: &VQuadrature) -> Result<SampledField> {
        if h < 0.0 {
            return Err(Error::InvalidParam(format!("time step h = {h} must be >= 0")));
        }
        if quad.dim() != self.basis.dim() || self.basis.dim() != self.grid.d_x() {
            return Err(Error::Mismatch(
                "transport requires matching velocity and spatial dimensions".into(),
            ));
        }
        let n = self.grid.n();
        let nq = quad.len();
        let l = self.grid.l_period();
        let spectra = self.spectra();
        let basis_table = self.basis.values_at_nodes(quad);

        let columns: Vec<Vec<f64>> = (0..nq)
            .into_par_iter()
            .map(|q| {
                let a = h * quad.nodes()[q][0];
                let mut col = vec![0.0; n];
                for (i, spec) in spectra.iter().enumerate() {
                    let lv = basis_table[i * nq + q];
                    if lv == 0.0 {
                        continue;
                    }
                    let shifted = fft::inverse_real(&fft::shift_spectrum(spec, l, a));
                    for (j, s) in shifted.iter().enumerate() {
                        col[j] += s * lv;
                    }
                }
                col
            })
            .collect();

        let mut values = vec![0.0; n * nq];
        for (q, col) in columns.iter().enumerate() {
            for (j, s) in col.iter().enumerate() {
                values[j * nq + q] = *s;
            }
        }
        Ok(SampledField {
            grid: self.grid,
            n_nodes: nq,
            values,
        })
    }

    /// Node-wise samples without any shift.
    pub fn sample_at_nodes(&self, quad: &VQuadrature) -> Result<SampledField> {
        let n = self.grid.n();
        let nq = quad.len();
        let basis_table = self.basis.values_at_nodes(quad);
        let mut values = vec![0.0; n * nq];
        for j in 0..n {
            for q in 0..nq {
                let mut s = 0.0;
                for i in 0..self.k() {
                    s += self.coeff(i, j) * basis_table[i * nq + q];
                }
                values[j * nq + q] = s;
            }
        }
        Ok(SampledField {
            grid: self.grid,
            n_nodes: nq,
            values,
        })
    }

    /// Spectral spatial derivative of every coefficient; orders above 3 are
    /// outside the regularity the scheme tracks and are rejected.
    pub fn x_derivative(&self, order: usize) -> Result<DualField> {
        if order > 3 {
            return Err(Error::InvalidParam(format!(
                "derivative order {order} above the tracked regularity (<= 3)"
            )));
        }
        if order == 0 {
            return Ok(self.clone());
        }
        let n = self.grid.n();
        let l = self.grid.l_period();
        let mut coeffs = vec![0.0; self.k() * n];
        for i in 0..self.k() {
            let spec = fft::forward(self.coeff_row(i));
            let der = fft::inverse_real(&fft::derivative_spectrum(&spec, l, order));
            coeffs[i * n..(i + 1) * n].copy_from_slice(&der);
        }
        DualField::from_coeffs(self.grid, self.basis.clone(), coeffs)
    }

    /// Coefficient-wise difference `self - other`.
    pub fn sub(&self, other: &DualField) -> Result<DualField> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(a, b)| a - b)
            .collect();
        DualField::from_coeffs(self.grid, self.basis.clone(), coeffs)
    }

    /// Coefficient-wise `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &DualField, b: f64) -> Result<DualField> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(x, y)| a * x + b * y)
            .collect();
        DualField::from_coeffs(self.grid, self.basis.clone(), coeffs)
    }

    /// Largest coefficient deviation from `other` over all grid points.
    pub fn sup_coeff_distance(&self, other: &DualField) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    fn check_compatible(&self, other: &DualField) -> Result<()> {
        if self.grid != other.grid || self.k() != other.k() {
            return Err(Error::Mismatch(
                "fields live on different grids or bases".into(),
            ));
        }
        Ok(())
    }

    /// Columnar CSV: header `x_index,gamma_1..gamma_k`, one row per point.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let k = self.k();
        let mut header = String::from("x_index");
        for i in 1..=k {
            header.push_str(&format!(",gamma_{i}"));
        }
        writeln!(out, "{header}")?;
        for j in 0..self.grid.n() {
            let mut row = format!("{j}");
            for i in 0..k {
                row.push_str(&format!(",{:.17e}", self.coeff(i, j)));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(grid: XGrid, basis: Arc<PolyBasis>, input: R) -> Result<Self> {
        let k = basis.len();
        let mut coeffs = vec![0.0; k * grid.n()];
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParam("empty state CSV".into()))??;
        let expected_cols = k + 1;
        if header.split(',').count() != expected_cols {
            return Err(Error::InvalidParam(format!(
                "state CSV header has {} columns, expected {expected_cols}",
                header.split(',').count()
            )));
        }
        let mut rows = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected_cols {
                return Err(Error::InvalidParam(format!(
                    "state CSV row has {} columns, expected {expected_cols}",
                    fields.len()
                )));
            }
            let j: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad x_index '{}'", fields[0])))?;
            if j >= grid.n() {
                return Err(Error::InvalidParam(format!("x_index {j} out of range")));
            }
            for i in 0..k {
                coeffs[i * grid.n() + j] = fields[i + 1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidParam(format!("bad value '{}'", fields[i + 1])))?;
            }
            rows += 1;
        }
        if rows != grid.n() {
            return Err(Error::InvalidParam(format!(
                "state CSV has {rows} rows, expected {}",
                grid.n()
            )));
        }
        DualField::from_coeffs(grid, basis, coeffs)
    }
}

/// Point samples `s(x_j, v_q)` of a transported (or blended) state; such
/// fields are generally no longer inside the closure span point-wise in x.
#[derive(Debug, Clone)]
pub struct SampledField {
    grid: XGrid,
    n_nodes: usize,
    /// Row-major: `values[j * n_nodes + q]`.
    values: Vec<f64>,
}

impl SampledField {
    pub fn grid(&self) -> XGrid {
        self.grid
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn value(&self, j: usize, q: usize) -> f64 {
        self.values[j * self.n_nodes + q]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_nodes..(j + 1) * self.n_nodes]
    }

    /// Sample-level blend `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &SampledField, b: f64) -> Result<SampledField> {
        if self.grid != other.grid || self.n_nodes != other.n_nodes {
            return Err(Error::Mismatch("sampled fields are incompatible".into()));
        }
        Ok(SampledField {
            grid: self.grid,
            n_nodes: self.n_nodes,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }
}

/// Weighted H3-in-x, L2-in-v seminorm sum: the square root of
/// `sum_{|alpha| <= 3} integral |D^alpha_x measured|^2 w(weight_from) dv dx`,
/// with the x-integral taken as the grid Riemann sum.
pub fn weighted_h3_norm(
    measured: &DualField,
    weight_from: &DualField,
    entropy: &EntropyParams,
    quad: &VQuadrature,
) -> Result<f64> {
    if measured.grid() != weight_from.grid() {
        return Err(Error::Mismatch("norm operands on different grids".into()));
    }
    let weight_samples = weight_from.sample_at_nodes(quad)?;
    let n = measured.grid().n();
    let nq = quad.len();
    let dx = measured.grid().dx();
    let mut total = 0.0;
    for order in 0..=3 {
        let der = measured.x_derivative(order)?;
        let samples = der.sample_at_nodes(quad)?;
        for j in 0..n {
            let mut vint = 0.0;
            for q in 0..nq {
                let w = entropy.weight(weight_samples.value(j, q));
                let s = samples.value(j, q);
                vint += quad.weights()[q] * s * s * w;
            }
            total += dx * vint;
        }
    }
    Ok(total.sqrt())
}

/// The state measured in its own weight.
pub fn x_norm(field: &DualField, entropy: &EntropyParams, quad: &VQuadrature) -> Result<f64> {
    weighted_h3_norm(field, field, entropy, quad)
}

/// `max_j integral_{B_r} |l_a - l_b|^2 dv` (unweighted), using a rule with
/// the same panel layout scaled to the ball.
pub fn sup_ball_l2_distance(
    a: &DualField,
    b: &DualField,
    quad: &VQuadrature,
    r_ball: f64,
) -> Result<f64> {
    if a.grid() != b.grid() || a.k() != b.k() {
        return Err(Error::Mismatch("fields are incompatible".into()));
    }
    let ball = quad.with_radius(r_ball)?;
    let diff = a.sub(b)?;
    let samples = diff.sample_at_nodes(&ball)?;
    let mut sup = 0.0f64;
    for j in 0..a.grid().n() {
        let mut vint = 0.0;
        for q in 0..ball.len() {
            let s = samples.value(j, q);
            vint += ball.weights()[q] * s * s;
        }
        sup = sup.max(vint);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PolyBasis;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn grid(n: usize) -> XGrid {
        XGrid::new(1, 1.0, n).unwrap()
    }

    fn k3() -> Arc<PolyBasis> {
        Arc::new(PolyBasis::from_preset("1d-k3").unwrap())
    }

    #[test]
    fn grid_validation() {
        assert!(XGrid::new(2, 1.0, 64).is_err());
        assert!(XGrid::new(1, 1.0, 7).is_err());
        assert!(XGrid::new(1, 1.0, 6).is_err());
        assert!(XGrid::new(1, -1.0, 64).is_err());
    }

    #[test]
    fn interp_coeff_harmonic_and_constant() {
        let g = grid(32);
        let f = DualField::from_fn(g, k3(), |i, x| match i {
            0 => (TAU * x).sin(),
            1 => 0.7,
            _ => (TAU * 3.0 * x).sin() + 0.5 * (TAU * x).cos(),
        })
        .unwrap();
        for &x in &[0.079, 0.3, 0.5, 0.911] {
            assert_relative_eq!(f.interp_coeff(0, x), (TAU * x).sin(), epsilon = 1e-12);
            assert_relative_eq!(f.interp_coeff(1, x), 0.7, epsilon = 1e-13);
            assert_relative_eq!(
                f.interp_coeff(2, x),
                (TAU * 3.0 * x).sin() + 0.5 * (TAU * x).cos(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn transport_identity_at_zero_step() {
        let g = grid(16);
        let quad = VQuadrature::new(1, 1.5, 4, 4).unwrap();
        let f = DualField::from_fn(g, k3(), |i, x| (TAU * x).sin() + i as f64).unwrap();
        let moved = f.transport(0.0, &quad).unwrap();
        let direct = f.sample_at_nodes(&quad).unwrap();
        for j in 0..16 {
            for q in 0..quad.len() {
                assert_relative_eq!(moved.value(j, q), direct.value(j, q), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transport_homogeneous_field_invisible() {
        let g = grid(16);
        let quad = VQuadrature::new(1, 1.5, 4, 4).unwrap();
        let f = DualField::constant(g, k3(), &[-1.0, 0.0, 1.0]).unwrap();
        let moved = f.transport(0.37, &quad).unwrap();
        let still = f.sample_at_nodes(&quad).unwrap();
        for j in 0..16 {
            for q in 0..quad.len() {
                assert_relative_eq!(moved.value(j, q), still.value(j, q), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn transport_harmonic_closed_form() {
        let g = grid(64);
        let quad = VQuadrature::new(1, 1.5, 4, 4).unwrap();
        let f = DualField::from_fn(g, k3(), |i, x| if i == 0 { (TAU * x).sin() } else { 0.0 })
            .unwrap();
        let h = 0.21;
        let moved = f.transport(h, &quad).unwrap();
        for j in 0..64 {
            let x = g.point(j);
            for (q, v) in quad.nodes().iter().enumerate() {
                let expect = (TAU * (x - h * v[0])).sin();
                assert_relative_eq!(moved.value(j, q), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn derivative_closed_forms() {
        let g = grid(64);
        let f = DualField::from_fn(g, k3(), |i, x| if i == 0 { (TAU * x).sin() } else { 0.0 })
            .unwrap();
        let d0 = f.x_derivative(0).unwrap();
        assert_eq!(d0.coeff(0, 5), f.coeff(0, 5));
        let d1 = f.x_derivative(1).unwrap();
        let d2 = f.x_derivative(2).unwrap();
        for j in 0..64 {
            let x = g.point(j);
            assert_relative_eq!(d1.coeff(0, j), TAU * (TAU * x).cos(), epsilon = 1e-10);
            assert_relative_eq!(d2.coeff(0, j), -TAU * TAU * (TAU * x).sin(), epsilon = 1e-8);
        }
        let c = DualField::constant(g, k3(), &[2.0, -1.0, 0.5]).unwrap();
        let dc = c.x_derivative(1).unwrap();
        assert!(dc.coeff_row(0).iter().all(|v| v.abs() < 1e-12));
        assert!(f.x_derivative(4).is_err());
    }

    #[test]
    fn derivative_commutes_with_transport_per_column() {
        let g = grid(64);
        let quad = VQuadrature::new(1, 1.5, 4, 4).unwrap();
        let f = DualField::from_fn(g, k3(), |i, x| match i {
            0 => (TAU * x).sin() + 0.3 * (TAU * 2.0 * x).cos(),
            1 => 0.1 * (TAU * x).cos(),
            _ => 1.0,
        })
        .unwrap();
        let h = 0.17;
        let t_of_d = f.x_derivative(1).unwrap().transport(h, &quad).unwrap();
        let t_of_f = f.transport(h, &quad).unwrap();
        // Differentiate each fixed-velocity column of the transported field.
        for q in 0..quad.len() {
            let col: Vec<f64> = (0..64).map(|j| t_of_f.value(j, q)).collect();
            let spec = fft::forward(&col);
            let dcol = fft::inverse_real(&fft::derivative_spectrum(&spec, 1.0, 1));
            for j in 0..64 {
                assert!((dcol[j] - t_of_d.value(j, q)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn x_norm_zero_and_homogeneous() {
        let g = grid(16);
        let e = EntropyParams::default();
        let quad = VQuadrature::new(1, 1.8, 16, 6).unwrap();
        let lbar = DualField::constant(g, k3(), &[-1.0, 0.0, 1.0]).unwrap();
        let zero = lbar.sub(&lbar).unwrap();
        assert_eq!(weighted_h3_norm(&zero, &lbar, &e, &quad).unwrap(), 0.0);

        // x-independent field: only the order-zero term contributes and the
        // x-average is exact: ||l||^2 = L * int l^2 w(l) dv.
        let norm = x_norm(&lbar, &e, &quad).unwrap();
        let mut vint = 0.0;
        for (v, &w) in quad.nodes().iter().zip(quad.weights().iter()) {
            let l = v[0] * v[0] - 1.0;
            vint += w * l * l * e.weight(l);
        }
        assert_relative_eq!(norm, vint.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn x_norm_reproducible_under_grid_refinement() {
        // Self-refinement oracle: the canonical perturbed state measured at
        // N = 64 must reproduce the fine-grid value.
        let e = EntropyParams::default();
        let perturbed = |g: XGrid| {
            DualField::from_fn(g, k3(), |i, x| match i {
                0 => -1.0 + 0.01 * (TAU * x).sin(),
                2 => 1.0,
                _ => 0.0,
            })
            .unwrap()
        };
        let fine = x_norm(
            &perturbed(XGrid::new(1, 1.0, 512).unwrap()),
            &e,
            &VQuadrature::new(1, 1.8, 64, 6).unwrap(),
        )
        .unwrap();
        let coarse = x_norm(
            &perturbed(XGrid::new(1, 1.0, 64).unwrap()),
            &e,
            &VQuadrature::new(1, 1.8, 16, 6).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(coarse, fine, max_relative = 1e-6);
    }

    #[test]
    fn sup_ball_distance_cases() {
        let g = grid(32);
        let quad = VQuadrature::new(1, 1.8, 16, 6).unwrap();
        let a = DualField::constant(g, k3(), &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(sup_ball_l2_distance(&a, &a, &quad, 1.2).unwrap(), 0.0);

        // Constant offset c in the first coefficient: c^2 * vol(B_R).
        let b = DualField::constant(g, k3(), &[-1.0 + 0.3, 0.0, 1.0]).unwrap();
        assert_relative_eq!(
            sup_ball_l2_distance(&a, &b, &quad, 1.2).unwrap(),
            0.09 * 2.4,
            max_relative = 1e-12
        );

        // Sinusoidal perturbation: sup of sin^2 over the grid is 1 up to
        // O(N^-2) grid placement.
        let c = DualField::from_fn(g, k3(), |i, x| match i {
            0 => -1.0 + 0.01 * (TAU * x).sin(),
            2 => 1.0,
            _ => 0.0,
        })
        .unwrap();
        let got = sup_ball_l2_distance(&a, &c, &quad, 1.2).unwrap();
        let expect = 0.01f64.powi(2) * 2.4;
        assert!(got <= expect * (1.0 + 1e-12));
        assert!(got >= expect * 0.98);
    }

    #[test]
    fn discrete_shift_inequality_band_limited() {
        // Discrete analogue of the H1 shift bound, with 5% slack at N = 64.
        let n = 64;
        let l = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let modes: Vec<(f64, f64, f64)> = (1..=(n / 4))
                .map(|m| (m as f64, rng.random_range(-1.0..1.0), rng.random_range(0.0..TAU)))
                .collect();
            let f = |x: f64| -> f64 {
                modes.iter().map(|(m, a, p)| a * (TAU * m * x / l + p).sin()).sum()
            };
            let vals: Vec<f64> = (0..n).map(|j| f(j as f64 * l / n as f64)).collect();
            let spec = fft::forward(&vals);
            let a = rng.random_range(0.001..0.25);
            let shifted = fft::inverse_real(&fft::shift_spectrum(&spec, l, -a));
            let deriv = fft::inverse_real(&fft::derivative_spectrum(&spec, l, 1));
            let dx = l / n as f64;
            let lhs: f64 = vals
                .iter()
                .zip(shifted.iter())
                .map(|(v, s)| (s - v) * (s - v) * dx)
                .sum();
            let rhs: f64 = deriv.iter().map(|d| d * d * dx).sum::<f64>() * a * a;
            assert!(
                lhs <= rhs * 1.05,
                "shift bound violated: lhs = {lhs}, rhs = {rhs}"
            );
        }
    }

    #[test]
    fn csv_roundtrip() {
        let g = grid(16);
        let f = DualField::from_fn(g, k3(), |i, x| (i as f64 + 1.0) * (TAU * x).cos()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = DualField::read_csv(g, k3(), std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(f.sup_coeff_distance(&back).unwrap(), 0.0);
    }
}
