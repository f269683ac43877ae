//! Scenario files: flat `key = value` text with dotted sections, documented
//! keys only, and hard rejection of anything unknown. Misconfiguration is the
//! dominant failure mode of solver front ends, so every key is validated at
//! load time with line context.

use crate::basis::{Monomial, PolyBasis, PropertyPParams, DEFAULT_SAMPLE_DENSITY_1D};
use crate::entropy::EntropyParams;
use crate::error::{Error, Result};
use crate::field::{DualField, XGrid};
use crate::projection::Tolerances;
use crate::quad::VQuadrature;
use crate::scheme::{SchemeConfig, SchemeVariant};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

/// A parsed and fully validated scenario, ready to execute.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub entropy: EntropyParams,
    pub basis: Arc<PolyBasis>,
    pub grid: XGrid,
    pub quad: VQuadrature,
    pub config: SchemeConfig,
    pub l0: DualField,
    pub oracle_n_cells: usize,
    pub oracle_cfl: f64,
    pub study_h_list: Vec<f64>,
    pub study_cloud_size: usize,
    pub state_stride: usize,
    pub seed: u64,
}

struct KeyTable {
    entries: BTreeMap<String, (usize, String)>,
    consumed: BTreeMap<String, bool>,
}

impl KeyTable {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    msg: "empty key or value".into(),
                });
            }
            if entries.contains_key(&key) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("duplicate key '{key}'"),
                });
            }
            entries.insert(key, (line_no, value));
        }
        Ok(Self {
            entries,
            consumed: BTreeMap::new(),
        })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.consumed.insert(key.to_string(), true);
        self.entries.get(key).cloned()
    }

    fn req(&mut self, key: &str) -> Result<(usize, String)> {
        self.take(key).ok_or_else(|| Error::Config {
            line: 0,
            msg: format!("missing required key '{key}'"),
        })
    }

    fn req_f64(&mut self, key: &str) -> Result<f64> {
        let (line, v) = self.req(key)?;
        parse_f64(&v, line, key)
    }

    fn opt_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some((line, v)) => parse_f64(&v, line, key),
            None => Ok(default),
        }
    }

    fn req_usize(&mut self, key: &str) -> Result<usize> {
        let (line, v) = self.req(key)?;
        v.parse().map_err(|_| Error::Config {
            line,
            msg: format!("key '{key}': '{v}' is not a nonnegative integer"),
        })
    }

    fn opt_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            Some((line, v)) => v.parse().map_err(|_| Error::Config {
                line,
                msg: format!("key '{key}': '{v}' is not a nonnegative integer"),
            }),
            None => Ok(default),
        }
    }

    fn reject_unknown(&self) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !self.consumed.contains_key(key) {
                return Err(Error::Config {
                    line: *line,
                    msg: format!("unknown key '{key}'"),
                });
            }
        }
        Ok(())
    }
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64> {
    match v {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => v.parse().map_err(|_| Error::Config {
            line,
            msg: format!("key '{key}': '{v}' is not a number"),
        }),
    }
}

fn parse_f64_list(v: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_f64(s.trim(), line, key))
        .collect()
}

/// Parse `1; v; v^2; ...` into a d = 1 monomial basis.
fn parse_monomial_list(v: &str, line: usize) -> Result<PolyBasis> {
    let mut entries = Vec::new();
    for item in v.split(';') {
        let item = item.trim();
        let power: u32 = if item == "1" {
            0
        } else if item == "v" {
            1
        } else if let Some(rest) = item.strip_prefix("v^") {
            rest.parse().map_err(|_| Error::Config {
                line,
                msg: format!("bad monomial '{item}'"),
            })?
        } else {
            return Err(Error::Config {
                line,
                msg: format!("bad monomial '{item}' (use '1', 'v' or 'v^k')"),
            });
        };
        entries.push(vec![Monomial::new(1.0, [power, 0, 0])]);
    }
    PolyBasis::new(1, entries)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut keys = KeyTable::parse(text)?;

    let p = keys.req_f64("entropy.p")?;
    let c_bar = keys.req_f64("entropy.c_bar")?;
    let entropy = EntropyParams::new(p, c_bar)?;

    let basis = match (keys.take("basis.preset"), keys.take("basis.monomials")) {
        (Some((_, preset)), None) => PolyBasis::from_preset(&preset)?,
        (None, Some((line, list))) => parse_monomial_list(&list, line)?,
        (Some((line, _)), Some(_)) => {
            return Err(Error::Config {
                line,
                msg: "give either basis.preset or basis.monomials, not both".into(),
            })
        }
        (None, None) => {
            return Err(Error::Config {
                line: 0,
                msg: "missing basis.preset or basis.monomials".into(),
            })
        }
    };
    let basis = Arc::new(basis);
    let k = basis.len();

    let d_x = keys.opt_usize("grid.d_x", 1)?;
    let l_period = keys.req_f64("grid.l")?;
    let n = keys.req_usize("grid.n")?;
    let grid = XGrid::new(d_x, l_period, n)?;

    let r_outer = keys.req_f64("property_p.r_outer")?;
    let delta1 = keys.req_f64("property_p.delta1")?;
    let r_core = keys.req_f64("property_p.r_core")?;
    let delta2 = keys.req_f64("property_p.delta2")?;
    let guard = PropertyPParams::new(basis.dim(), r_outer, delta1, r_core, delta2)?;

    let r_factor = keys.opt_f64("quad.r_factor", 1.5)?;
    if !(r_factor >= 1.0) {
        return Err(Error::Config {
            line: 0,
            msg: format!("quad.r_factor = {r_factor} must be >= 1 so the box covers the outer ball"),
        });
    }
    let panels = keys.opt_usize("quad.panels", 16)?;
    let nodes_per_panel = keys.opt_usize("quad.nodes_per_panel", 6)?;
    let quad = VQuadrature::new(basis.dim(), r_factor * r_outer, panels, nodes_per_panel)?;

    let (base_line, base_str) = keys.req("initial.base")?;
    let base = parse_f64_list(&base_str, base_line, "initial.base")?;
    if base.len() != k {
        return Err(Error::Config {
            line: base_line,
            msg: format!("initial.base has {} entries for a basis of size {k}", base.len()),
        });
    }

    let (preset_line, preset) = keys.req("initial.preset")?;
    let mut amplitudes = vec![0.0; k];
    let mut wavenumbers = vec![1.0; k];
    match preset.as_str() {
        "constant" => {}
        "sin-perturb" => {
            for i in 1..=k {
                if let Some((line, v)) = keys.take(&format!("initial.amplitude.{i}")) {
                    amplitudes[i - 1] = parse_f64(&v, line, "initial.amplitude")?;
                }
                if let Some((line, v)) = keys.take(&format!("initial.wavenumber.{i}")) {
                    wavenumbers[i - 1] = parse_f64(&v, line, "initial.wavenumber")?;
                    if wavenumbers[i - 1] >= n as f64 / 2.0 {
                        return Err(Error::Config {
                            line,
                            msg: format!(
                                "wavenumber {} at or above the grid Nyquist limit {}",
                                wavenumbers[i - 1],
                                n / 2
                            ),
                        });
                    }
                }
            }
        }
        other => {
            return Err(Error::Config {
                line: preset_line,
                msg: format!("unknown initial preset '{other}' (use constant | sin-perturb)"),
            })
        }
    }
    let l0 = DualField::from_fn(grid, basis.clone(), |i, x| {
        base[i] + amplitudes[i] * (TAU * wavenumbers[i] * x / l_period).sin()
    })?;

    let (variant_line, variant_str) = keys.req("scheme.variant")?;
    let variant = match variant_str.as_str() {
        "transport_projection" => SchemeVariant::TransportProjection,
        "bgk" => SchemeVariant::Bgk,
        other => {
            return Err(Error::Config {
                line: variant_line,
                msg: format!("unknown variant '{other}' (use transport_projection | bgk)"),
            })
        }
    };
    let h = keys.req_f64("scheme.h")?;
    let t_final = keys.req_f64("scheme.t_final")?;
    let guard_sample_density =
        keys.opt_f64("scheme.guard_sample_density", DEFAULT_SAMPLE_DENSITY_1D)?;
    let guard_stride = keys.opt_usize("scheme.guard_stride", 1)?;
    let init_distance_max = keys.opt_f64("scheme.init_distance_max", f64::INFINITY)?;
    let tol = Tolerances {
        tol_proj: keys.opt_f64("scheme.tol_proj", Tolerances::default().tol_proj)?,
        eps_gram: keys.opt_f64("scheme.eps_gram", Tolerances::default().eps_gram)?,
    };
    let ledger_on = keys.opt_usize("output.ledger", 1)? != 0;

    let config = SchemeConfig {
        variant,
        h,
        t_final,
        guard,
        guard_sample_density,
        guard_stride,
        tol,
        reference: base,
        init_distance_max,
        ledger_on,
    };
    config.validate(k)?;

    let oracle_n_cells = keys.opt_usize("oracle.n_cells", 256)?;
    let oracle_cfl = keys.opt_f64("oracle.cfl", 0.4)?;
    if !(oracle_cfl > 0.0 && oracle_cfl <= crate::oracle::CFL_LIMIT) {
        return Err(Error::Config {
            line: 0,
            msg: format!(
                "oracle.cfl = {oracle_cfl} outside (0, {}]",
                crate::oracle::CFL_LIMIT
            ),
        });
    }
    let study_h_list = match keys.take("study.h_list") {
        Some((line, v)) => parse_f64_list(&v, line, "study.h_list")?,
        None => vec![0.02, 0.01, 0.005, 0.0025],
    };
    // A sup statistic needs a dense cloud to saturate; 8192 points keep the
    // observed orders stable across seeds at negligible cost.
    let study_cloud_size = keys.opt_usize("study.cloud_size", 8192)?;
    let state_stride = keys.opt_usize("output.state_stride", 0)?;
    let seed = keys.opt_usize("seed", 0)? as u64;

    keys.reject_unknown()?;

    Ok(Scenario {
        entropy,
        basis,
        grid,
        quad,
        config,
        l0,
        oracle_n_cells,
        oracle_cfl,
        study_h_list,
        study_cloud_size,
        state_stride,
        seed,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// The canonical desk-scale scenario used throughout the test suite.
pub const CANONICAL_SCENARIO: &str = "\
# canonical perturbed reference run
entropy.p = 1.125
entropy.c_bar = 8.0
basis.preset = 1d-k3
grid.l = 1.0
grid.n = 64
quad.panels = 16
quad.nodes_per_panel = 6
quad.r_factor = 1.5
property_p.r_outer = 1.2
property_p.delta1 = 1.05
property_p.r_core = 0.5
property_p.delta2 = 0.7
initial.preset = sin-perturb
initial.base = -1, 0, 1
initial.amplitude.1 = 0.01
initial.wavenumber.1 = 1
scheme.variant = transport_projection
scheme.h = 0.01
scheme.t_final = 0.2
oracle.n_cells = 256
oracle.cfl = 0.4
study.h_list = 0.02, 0.01, 0.005, 0.0025
study.cloud_size = 8192
seed = 42
";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_scenario_parses() {
        let s = parse_scenario(CANONICAL_SCENARIO).unwrap();
        assert_eq!(s.basis.len(), 3);
        assert_eq!(s.grid.n(), 64);
        assert_eq!(s.config.n_steps(), 20);
        assert_eq!(s.config.reference, vec![-1.0, 0.0, 1.0]);
        assert_eq!(s.study_h_list.len(), 4);
        assert_eq!(s.seed, 42);
        // Initial data: gamma_1 = -1 + 0.01 sin(2 pi x).
        let x = s.grid.point(16);
        let got = s.l0.coeff(0, 16);
        assert!((got - (-1.0 + 0.01 * (TAU * x).sin())).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = format!("{CANONICAL_SCENARIO}\nbogus.key = 1\n");
        match parse_scenario(&text) {
            Err(Error::Config { line, msg }) => {
                assert!(line > 0);
                assert!(msg.contains("bogus.key"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_entropy_exponent_rejected() {
        let text = CANONICAL_SCENARIO.replace("entropy.p = 1.125", "entropy.p = 1.5");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn odd_grid_rejected() {
        let text = CANONICAL_SCENARIO.replace("grid.n = 64", "grid.n = 63");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn h_out_of_range_rejected() {
        let text = CANONICAL_SCENARIO.replace("scheme.h = 0.01", "scheme.h = 1.5");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn cfl_out_of_range_rejected() {
        let text = CANONICAL_SCENARIO.replace("oracle.cfl = 0.4", "oracle.cfl = 0.9");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = format!("{CANONICAL_SCENARIO}seed = 43\n");
        assert!(matches!(parse_scenario(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn monomial_basis_list() {
        let text = CANONICAL_SCENARIO
            .replace("basis.preset = 1d-k3", "basis.monomials = 1; v; v^2; v^3; v^4")
            .replace("initial.base = -1, 0, 1", "initial.base = -1, 0, 1, 0, 0.2");
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.basis.len(), 5);
        assert_eq!(s.basis.m0(), 4);
    }

    #[test]
    fn bad_monomial_rejected() {
        let text = CANONICAL_SCENARIO
            .replace("basis.preset = 1d-k3", "basis.monomials = 1; v; w^2");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn out_of_range_amplitude_index_rejected() {
        let text = format!("{CANONICAL_SCENARIO}initial.amplitude.7 = 0.1\n");
        assert!(matches!(parse_scenario(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn amplitude_keys_rejected_for_constant_preset() {
        let text = CANONICAL_SCENARIO
            .replace("initial.preset = sin-perturb", "initial.preset = constant");
        assert!(matches!(parse_scenario(&text), Err(Error::Config { .. })));
    }
}
