//! Ordered polynomial basis of the closure space, the equilibrium sub-basis,
//! and the nondegeneracy check that keeps the projection weight alive.
//!
//! The basis always starts with the constant polynomial and ends with the
//! radial element `|v|^{m0}` (`m0` even). The nondegeneracy condition on a
//! dual state `l = sum_i gamma_i l_i` is checked by dense sampling of a box
//! around the origin together with a sign certificate for the far tail.

use crate::error::{Error, Result};
use crate::linalg::sym_extremal_eigenvalues;
use crate::quad::VQuadrature;
use std::collections::BTreeMap;

/// Default sampling densities (points per unit length per axis).
pub const DEFAULT_SAMPLE_DENSITY_1D: f64 = 200.0;
pub const DEFAULT_SAMPLE_DENSITY_ND: f64 = 50.0;
/// Configured minimum below which the sampled check is meaningless.
pub const MIN_SAMPLE_DENSITY: f64 = 8.0;

/// One monomial term `coeff * v1^a1 * v2^a2 * v3^a3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: [u32; 3],
}

impl Monomial {
    pub fn new(coeff: f64, powers: [u32; 3]) -> Self {
        Self { coeff, powers }
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }

    pub fn eval(&self, v: &[f64; 3]) -> f64 {
        let mut out = self.coeff;
        for a in 0..3 {
            if self.powers[a] > 0 {
                out *= v[a].powi(self.powers[a] as i32);
            }
        }
        out
    }
}

/// The ordered basis `{l_i}` spanning the closure's dual space.
#[derive(Debug, Clone)]
pub struct PolyBasis {
    d: usize,
    entries: Vec<Vec<Monomial>>,
    m0: u32,
    e0_indices: Option<Vec<usize>>,
}

impl PolyBasis {
    /// Validates ordering, the radial top element, degree bounds and linear
    /// independence (via the unweighted Gram on the unit box).
    pub fn new(d: usize, entries: Vec<Vec<Monomial>>) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParam(format!(
                "basis dimension d = {d} must be 1, 2 or 3"
            )));
        }
        if entries.len() < 2 {
            return Err(Error::InvalidParam(
                "basis needs at least the constant and the radial element".into(),
            ));
        }
        for (i, entry) in entries.iter().enumerate() {
            if entry.is_empty() {
                return Err(Error::InvalidParam(format!("basis entry {i} is empty")));
            }
            for m in entry {
                if m.powers[d..].iter().any(|&p| p != 0) {
                    return Err(Error::InvalidParam(format!(
                        "basis entry {i} uses velocity components beyond dimension {d}"
                    )));
                }
            }
        }

        let one = canonical(&[Monomial::new(1.0, [0, 0, 0])]);
        if canonical(&entries[0]) != one {
            return Err(Error::InvalidParam(
                "first basis entry must be the constant polynomial 1".into(),
            ));
        }

        let last = entries.last().unwrap();
        let m0 = last.iter().map(Monomial::degree).max().unwrap();
        if m0 == 0 || m0 % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "top element degree m0 = {m0} must be a positive even integer"
            )));
        }
        if canonical(last) != canonical(&radial_power(d, m0)) {
            return Err(Error::InvalidParam(format!(
                "last basis entry must equal |v|^{m0}"
            )));
        }
        for (i, entry) in entries.iter().enumerate() {
            let deg = entry.iter().map(Monomial::degree).max().unwrap();
            if deg > m0 {
                return Err(Error::InvalidParam(format!(
                    "basis entry {i} has degree {deg} above the top degree {m0}"
                )));
            }
        }

        let mut basis = Self {
            d,
            entries,
            m0,
            e0_indices: None,
        };
        basis.check_independence()?;
        basis.e0_indices = basis.detect_e0();
        Ok(basis)
    }

    /// Named presets exposed through scenario files.
    pub fn from_preset(name: &str) -> Result<Self> {
        let mono = |pows: [u32; 3]| vec![Monomial::new(1.0, pows)];
        match name {
            "1d-k3" => Self::new(1, vec![mono([0, 0, 0]), mono([1, 0, 0]), mono([2, 0, 0])]),
            "1d-k5" => Self::new(
                1,
                vec![
                    mono([0, 0, 0]),
                    mono([1, 0, 0]),
                    mono([2, 0, 0]),
                    mono([3, 0, 0]),
                    mono([4, 0, 0]),
                ],
            ),
            "3d-euler" => Self::new(
                3,
                vec![
                    mono([0, 0, 0]),
                    mono([1, 0, 0]),
                    mono([0, 1, 0]),
                    mono([0, 0, 1]),
                    radial_power(3, 2),
                ],
            ),
            other => Err(Error::InvalidParam(format!("unknown basis preset '{other}'"))),
        }
    }

    /// Unweighted Gram on the unit box must be well conditioned.
    fn check_independence(&self) -> Result<()> {
        let nodes = (self.m0 as usize + 2).max(4);
        let quad = VQuadrature::new(self.d, 1.0, 1, nodes)?;
        let k = self.len();
        let mut gram = vec![0.0; k * k];
        for (v, &w) in quad.nodes().iter().zip(quad.weights().iter()) {
            let vals = self.eval(v);
            for i in 0..k {
                for j in 0..k {
                    gram[i * k + j] += w * vals[i] * vals[j];
                }
            }
        }
        let (lo, hi) = sym_extremal_eigenvalues(&gram, k);
        if lo <= 0.0 || hi / lo > 1e12 {
            return Err(Error::InvalidParam(format!(
                "basis entries are numerically dependent (Gram spectrum [{lo:.3e}, {hi:.3e}])"
            )));
        }
        Ok(())
    }

    fn detect_e0(&self) -> Option<Vec<usize>> {
        let mut wanted: Vec<Vec<Monomial>> = vec![vec![Monomial::new(1.0, [0, 0, 0])]];
        for a in 0..self.d {
            let mut pows = [0, 0, 0];
            pows[a] = 1;
            wanted.push(vec![Monomial::new(1.0, pows)]);
        }
        wanted.push(radial_power(self.d, 2));

        let mut indices = Vec::with_capacity(wanted.len());
        for target in &wanted {
            let canon = canonical(target);
            let idx = self
                .entries
                .iter()
                .position(|entry| canonical(entry) == canon)?;
            indices.push(idx);
        }
        Some(indices)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of basis elements k.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn m0(&self) -> u32 {
        self.m0
    }

    pub fn entries(&self) -> &[Vec<Monomial>] {
        &self.entries
    }

    /// Indices of `{1, v_1..v_d, |v|^2}` inside the basis, when all present.
    pub fn e0_indices(&self) -> Option<&[usize]> {
        self.e0_indices.as_deref()
    }

    /// Values `(l_1(v), .., l_k(v))`.
    pub fn eval(&self, v: &[f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(v, &mut out);
        out
    }

    pub fn eval_into(&self, v: &[f64; 3], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        for (slot, entry) in out.iter_mut().zip(self.entries.iter()) {
            *slot = entry.iter().map(|m| m.eval(v)).sum();
        }
    }

    /// `sum_i gamma_i l_i(v)`.
    pub fn eval_dual(&self, gamma: &[f64], v: &[f64; 3]) -> Result<f64> {
        if gamma.len() != self.len() {
            return Err(Error::Mismatch(format!(
                "eval_dual: {} coefficients for a basis of size {}",
                gamma.len(),
                self.len()
            )));
        }
        Ok(self
            .entries
            .iter()
            .zip(gamma.iter())
            .map(|(entry, g)| g * entry.iter().map(|m| m.eval(v)).sum::<f64>())
            .sum())
    }

    /// Table of basis values at quadrature nodes, row i = element i.
    pub fn values_at_nodes(&self, quad: &VQuadrature) -> Vec<f64> {
        let k = self.len();
        let nq = quad.len();
        let mut table = vec![0.0; k * nq];
        for (q, v) in quad.nodes().iter().enumerate() {
            for (i, entry) in self.entries.iter().enumerate() {
                table[i * nq + q] = entry.iter().map(|m| m.eval(v)).sum();
            }
        }
        table
    }
}

/// Canonical monomial map for polynomial comparison.
fn canonical(poly: &[Monomial]) -> BTreeMap<[u32; 3], i64> {
    let mut map: BTreeMap<[u32; 3], f64> = BTreeMap::new();
    for m in poly {
        *map.entry(m.powers).or_insert(0.0) += m.coeff;
    }
    map.into_iter()
        .filter(|(_, c)| c.abs() > 1e-12)
        .map(|(p, c)| (p, (c * 1e9).round() as i64))
        .collect()
}

/// Expansion of `|v|^{m0}` = `(v_1^2 + .. + v_d^2)^{m0/2}` into monomials.
pub fn radial_power(d: usize, m0: u32) -> Vec<Monomial> {
    let half = m0 / 2;
    let mut terms = Vec::new();
    // multinomial over k_1 + .. + k_d = half
    fn rec(d: usize, rem: u32, axis: usize, ks: &mut [u32; 3], out: &mut Vec<Monomial>) {
        if axis == d - 1 {
            ks[axis] = rem;
            let mut coeff = 1.0;
            let mut total = 0u32;
            for &k in ks.iter().take(d) {
                for j in 1..=k {
                    total += 1;
                    coeff *= total as f64 / j as f64;
                }
            }
            let powers = [2 * ks[0], 2 * ks[1], 2 * ks[2]];
            out.push(Monomial::new(coeff, powers));
            return;
        }
        for k in 0..=rem {
            ks[axis] = k;
            rec(d, rem - k, axis + 1, ks, out);
        }
    }
    let mut ks = [0u32; 3];
    rec(d, half, 0, &mut ks, &mut terms);
    terms
}

/// Parameters of the nondegeneracy check: nonnegative tail beyond
/// `r_outer`, lower bound `-delta1` inside, and a core ball of radius
/// `r_core` on which the state stays below `-delta2`.
#[derive(Debug, Clone)]
pub struct PropertyPParams {
    pub r_outer: f64,
    pub delta1: f64,
    pub r_core: f64,
    pub delta2: f64,
    /// Candidate centers for the core ball.
    pub centers: Vec<[f64; 3]>,
}

impl PropertyPParams {
    /// Default candidate grid: lattice of step `r_core / 2` over the region
    /// where the core ball fits inside the outer ball.
    pub fn new(d: usize, r_outer: f64, delta1: f64, r_core: f64, delta2: f64) -> Result<Self> {
        if !(r_outer > r_core && r_core > 0.0) {
            return Err(Error::InvalidParam(format!(
                "need R > r > 0, got R = {r_outer}, r = {r_core}"
            )));
        }
        if !(delta1 > 0.0 && delta2 > 0.0) {
            return Err(Error::InvalidParam(
                "property-P margins delta1, delta2 must be positive".into(),
            ));
        }
        let reach = r_outer - r_core;
        let step = r_core / 2.0;
        let mut offsets = vec![0.0];
        let mut k = 1;
        while (k as f64) * step <= reach + 1e-12 {
            offsets.push(k as f64 * step);
            offsets.push(-(k as f64) * step);
            k += 1;
        }
        let mut centers = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            let mut c = [0.0; 3];
            for (axis, &i) in idx.iter().enumerate() {
                c[axis] = offsets[i];
            }
            if norm(&c) <= reach + 1e-12 {
                centers.push(c);
            }
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < offsets.len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == d {
                    break;
                }
            }
            if axis == d {
                break;
            }
        }
        Ok(Self {
            r_outer,
            delta1,
            r_core,
            delta2,
            centers,
        })
    }

    pub fn with_centers(mut self, centers: Vec<[f64; 3]>) -> Self {
        self.centers = centers;
        self
    }
}

/// Outcome of the sampled nondegeneracy check. `margins` are slacks, one per
/// condition, nonnegative exactly when the condition held on the samples:
/// `[min l over the annulus, min l + delta1 inside, -delta2 - max l over the
/// best core ball]`.
#[derive(Debug, Clone)]
pub struct PropertyPReport {
    pub holds: bool,
    pub margins: [f64; 3],
    /// Slack of the far-tail sign certificate beyond `2 * r_outer`
    /// (normalized minimum of the reciprocal-radius polynomial).
    pub tail_margin: f64,
    pub best_center: Option<[f64; 3]>,
}

/// Sampled check of the nondegeneracy property, with a dominant-term
/// certificate covering the region beyond twice the outer radius.
///
/// Errors with `TailUnbounded` when the radial top coefficient is negative:
/// no outer radius can then give a nonnegative tail.
pub fn check_property_p(
    basis: &PolyBasis,
    gamma: &[f64],
    params: &PropertyPParams,
    sample_density: f64,
) -> Result<PropertyPReport> {
    if gamma.len() != basis.len() {
        return Err(Error::Mismatch(format!(
            "check_property_p: {} coefficients for a basis of size {}",
            gamma.len(),
            basis.len()
        )));
    }
    if sample_density < MIN_SAMPLE_DENSITY {
        return Err(Error::InvalidParam(format!(
            "sample density {sample_density} below the configured minimum {MIN_SAMPLE_DENSITY}"
        )));
    }
    let d = basis.dim();
    let r_ext = 2.0 * params.r_outer;
    let tail_margin = tail_certificate(basis, gamma, r_ext)?;

    let step = 1.0 / sample_density;
    let n_per_axis = (2.0 * r_ext / step).ceil() as usize + 1;
    let mut margin_annulus = f64::INFINITY;
    let mut margin_inner = f64::INFINITY;
    // Collect samples of the inner region for the core-ball search.
    let mut core_samples: Vec<([f64; 3], f64)> = Vec::new();

    let mut idx = vec![0usize; d];
    loop {
        let mut v = [0.0; 3];
        for (axis, &i) in idx.iter().enumerate() {
            v[axis] = -r_ext + i as f64 * step;
        }
        let r = norm(&v);
        if r <= r_ext {
            let value = basis.eval_dual(gamma, &v)?;
            if r > params.r_outer {
                margin_annulus = margin_annulus.min(value);
            }
            if r < params.r_outer {
                margin_inner = margin_inner.min(value + params.delta1);
            }
            if r <= params.r_outer {
                core_samples.push((v, value));
            }
        }
        let mut axis = 0;
        loop {
            idx[axis] += 1;
            if idx[axis] < n_per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
            if axis == d {
                break;
            }
        }
        if axis == d {
            break;
        }
    }

    let mut margin_core = f64::NEG_INFINITY;
    let mut best_center = None;
    for c in &params.centers {
        let mut max_on_ball = f64::NEG_INFINITY;
        let mut covered = false;
        for (v, value) in &core_samples {
            let dist2: f64 = (0..d).map(|a| (v[a] - c[a]) * (v[a] - c[a])).sum();
            if dist2 <= params.r_core * params.r_core {
                covered = true;
                max_on_ball = max_on_ball.max(*value);
            }
        }
        if covered {
            let slack = -params.delta2 - max_on_ball;
            if slack > margin_core {
                margin_core = slack;
                best_center = Some(*c);
            }
        }
    }

    let margins = [margin_annulus, margin_inner, margin_core];
    let holds = margins.iter().all(|&m| m >= 0.0) && tail_margin >= 0.0;
    Ok(PropertyPReport {
        holds,
        margins,
        tail_margin,
        best_center,
    })
}

/// Sample count for the reciprocal-radius polynomial of the tail check.
const TAIL_SAMPLES: usize = 1024;
/// Coefficients whose contribution at the certificate radius falls below
/// this fraction of the state's scale there are quadrature-invisible solve
/// noise and are ignored by the sign test.
const TAIL_COEFF_FLOOR: f64 = 1e-9;

/// Sign certificate for `l >= 0` on `|v| >= r_ext`. Returns the certificate
/// slack (nonnegative means certified); errors with `TailUnbounded` when the
/// leading coefficient is genuinely negative, since then no radius can give
/// a nonnegative tail.
///
/// In one dimension, per sign of v, the substitution `s = r_ext / r` maps
/// the tail onto `s in (0, 1]`:
/// `p(r) / r^{m*} = q(s) = sum_j b_{m*-j} r_ext^{-j} s^j`,
/// so `p >= 0` beyond `r_ext` iff the polynomial `q` is nonnegative on the
/// unit interval, which is checked by dense sampling (with the top
/// coefficient `q(0)` required to be positive). In higher dimensions the
/// bound is taken entry-wise against the radial top element, which requires
/// its coefficient to be positive.
fn tail_certificate(basis: &PolyBasis, gamma: &[f64], r_ext: f64) -> Result<f64> {
    if basis.dim() == 1 {
        let m0 = basis.m0() as usize;
        let mut a = vec![0.0; m0 + 1];
        for (i, entry) in basis.entries().iter().enumerate() {
            for m in entry {
                a[m.powers[0] as usize] += gamma[i] * m.coeff;
            }
        }
        let mut worst = f64::INFINITY;
        for sign in [1.0f64, -1.0] {
            let mut b: Vec<f64> = a
                .iter()
                .enumerate()
                .map(|(m, c)| c * sign.powi(m as i32))
                .collect();
            let scale = b
                .iter()
                .enumerate()
                .fold(0.0f64, |s, (m, c)| s.max(c.abs() * r_ext.powi(m as i32)));
            for (m, c) in b.iter_mut().enumerate() {
                if c.abs() * r_ext.powi(m as i32) <= TAIL_COEFF_FLOOR * scale {
                    *c = 0.0;
                }
            }
            let top = match b.iter().rposition(|&c| c != 0.0) {
                Some(m) => m,
                None => {
                    // The (numerically) zero polynomial has a flat tail.
                    worst = worst.min(0.0);
                    continue;
                }
            };
            if b[top] < 0.0 {
                return Err(Error::TailUnbounded { coeff: b[top] });
            }
            let q_coeffs: Vec<f64> = (0..=top)
                .map(|j| b[top - j] * r_ext.powi(-(j as i32)))
                .collect();
            let q_scale = q_coeffs.iter().fold(1.0f64, |s, c| s.max(c.abs()));
            let mut q_min = f64::INFINITY;
            for i in 0..=TAIL_SAMPLES {
                let s = i as f64 / TAIL_SAMPLES as f64;
                let mut q = 0.0;
                for c in q_coeffs.iter().rev() {
                    q = q * s + c;
                }
                q_min = q_min.min(q);
            }
            worst = worst.min(q_min / q_scale);
        }
        Ok(worst)
    } else {
        let top = gamma[basis.len() - 1];
        if top < 0.0 {
            return Err(Error::TailUnbounded { coeff: top });
        }
        let mut slack = top;
        for (i, entry) in basis.entries().iter().enumerate().take(basis.len() - 1) {
            let mut bound = 0.0;
            for m in entry {
                bound += m.coeff.abs() * r_ext.powi(m.degree() as i32 - basis.m0() as i32);
            }
            slack -= gamma[i].abs() * bound;
        }
        Ok(slack)
    }
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
