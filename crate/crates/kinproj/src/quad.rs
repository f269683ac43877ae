//! Composite tensor-product Gauss-Legendre quadrature on the velocity box
//! `[-R_quad, R_quad]^d`.
//!
//! One fixed rule is used for every v-integral of a run: the discrete
//! conservation identity of the projection holds node-wise under a single
//! rule, so the rule must not change between steps. Adaptive quadrature is
//! deliberately out.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct VQuadrature {
    d: usize,
    r_quad: f64,
    panels: usize,
    nodes_per_panel: usize,
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl VQuadrature {
    /// Build the composite rule: `panels` equal panels per axis, a
    /// Gauss-Legendre rule of `nodes_per_panel` points on each.
    pub fn new(d: usize, r_quad: f64, panels: usize, nodes_per_panel: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParam(format!(
                "velocity dimension d = {d} must be 1, 2 or 3"
            )));
        }
        if panels < 1 {
            return Err(Error::InvalidParam("panels must be >= 1".into()));
        }
        if nodes_per_panel < 2 {
            return Err(Error::InvalidParam("nodes_per_panel must be >= 2".into()));
        }
        if !(r_quad > 0.0) || !r_quad.is_finite() {
            return Err(Error::InvalidParam(format!(
                "quadrature half-width R_quad = {r_quad} must be positive"
            )));
        }

        let (ref_nodes, ref_weights) = gauss_legendre(nodes_per_panel);
        let width = 2.0 * r_quad / panels as f64;
        let mut axis_nodes = Vec::with_capacity(panels * nodes_per_panel);
        let mut axis_weights = Vec::with_capacity(panels * nodes_per_panel);
        for p in 0..panels {
            let lo = -r_quad + p as f64 * width;
            for (x, w) in ref_nodes.iter().zip(ref_weights.iter()) {
                axis_nodes.push(lo + 0.5 * width * (x + 1.0));
                axis_weights.push(0.5 * width * w);
            }
        }

        let per_axis = axis_nodes.len();
        let total = per_axis.pow(d as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        loop {
            let mut point = [0.0; 3];
            let mut w = 1.0;
            for (axis, &i) in idx.iter().enumerate() {
                point[axis] = axis_nodes[i];
                w *= axis_weights[i];
            }
            nodes.push(point);
            weights.push(w);
            // odometer over the tensor index
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < per_axis {
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

        let quad = Self {
            d,
            r_quad,
            panels,
            nodes_per_panel,
            nodes,
            weights,
        };
        quad.verify()?;
        Ok(quad)
    }

    /// Construction checks: total measure and per-axis monomial exactness up
    /// to degree `2 * nodes_per_panel - 1`.
    fn verify(&self) -> Result<()> {
        let measure = (2.0 * self.r_quad).powi(self.d as i32);
        let total: f64 = self.weights.iter().sum();
        if ((total - measure) / measure).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!(
                "quadrature weights sum to {total}, expected {measure}"
            )));
        }
        for deg in 1..=(2 * self.nodes_per_panel - 1) {
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 * self.r_quad.powi(deg as i32 + 1) / (deg as f64 + 1.0)
                    * (2.0 * self.r_quad).powi(self.d as i32 - 1)
            };
            let got: f64 = self
                .nodes
                .iter()
                .zip(self.weights.iter())
                .map(|(v, w)| w * v[0].powi(deg as i32))
                .sum();
            let scale = self.r_quad.powi(deg as i32 + 1).max(1.0);
            if (got - exact).abs() > 1e-11 * scale {
                return Err(Error::InvalidParam(format!(
                    "quadrature not exact for degree {deg}: got {got}, expected {exact}"
                )));
            }
        }
        Ok(())
    }

    /// Same panel/node layout on a different box `[-r, r]^d`.
    pub fn with_radius(&self, r: f64) -> Result<Self> {
        Self::new(self.d, r, self.panels, self.nodes_per_panel)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn r_quad(&self) -> f64 {
        self.r_quad
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.nodes_per_panel
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of `weight_q * samples_q`.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.weights.len() {
            return Err(Error::Mismatch(format!(
                "integrate: {} samples for {} nodes",
                samples.len(),
                self.weights.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(samples.iter())
            .map(|(w, s)| w * s)
            .sum())
    }

    /// Integrate a function given at nodes through a closure.
    pub fn integrate_fn<F: FnMut(&[f64; 3]) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(v, w)| w * f(v))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_with_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
