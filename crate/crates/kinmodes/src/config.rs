//! Run configuration: a TOML (or JSON) key tree, named presets and sweeps.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::Discretization;
use crate::error::{Error, Result};
use crate::evolve::{IntegratorConfig, Scheme};
use crate::initial::InitialDatum;
use crate::potential::{normalize, Family, NormalizeOptions, PolyTable, Potential, RawPotential};
use crate::witten::SpectrumRequest;

/// Smallest velocity order that still represents `h_perp` and `E[h_perp]`.
pub const MIN_VELOCITY_ORDER: usize = 4;

pub const PRESETS: [&str; 6] = ["harmonic-d1", "quartic-d1", "radial-d2", "aniso-d2", "harmonic-d2", "smoke-d1"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub exponents: Vec<usize>,
    pub coef: f64,
}

/// Family name plus the parameters that family reads; the rest must be absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// fully-harmonic | anisotropic-harmonic | power-law | polynomial | radial-polynomial
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    /// Radial: `sum_k coeffs[k] |x|^(2k)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    /// Polynomial as a list of monomials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<PolyTerm>>,
    /// Polynomial as nested arrays; the outer index is the power of `x_1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<serde_json::Value>,
    #[serde(default)]
    pub generalized: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub d: usize,
    pub n_x: usize,
    /// Half-width of the box; per-axis widths from the density rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    pub n_v: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionConfig {
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_stride() -> usize {
    100
}
fn default_scheme() -> Scheme {
    Scheme::Strang
}
fn default_safety() -> f64 {
    0.5
}

impl IntegratorSection {
    pub fn to_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            t_end: self.t_end,
            output_stride: self.output_stride,
            scheme: self.scheme,
            safety: self.safety,
            snapshot_times: self.snapshot_times.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// maxwellian-perturbation | mode:<name> | hermite-mode:(i,j,...) | random-seeded[:N]
    pub datum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub lyapunov: bool,
    pub epsilon: f64,
    /// Admissible range of `F2 / ||h||^2`.
    pub band: [f64; 2],
    /// Lyapunov checks start at `settle / rate`.
    pub settle: f64,
    /// Allowed per-output increase of `F2`, relative to `||h0||^2`.
    pub monotone_slack: f64,
    pub htheorem: bool,
    pub htheorem_budget: f64,
    /// Drift of the conserved quantities per unit time, relative to `||h0||`.
    pub drift_tol: f64,
    /// Required `dist_mode(t_end) / dist_mode(0)`; absent disables the check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Compute c_P, c_K and the functional inequalities after the run.
    pub constants: bool,
    /// auto | dense | partial:<k>
    pub spectrum: String,
    pub inequality_samples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            lyapunov: false,
            epsilon: 1e-2,
            band: [0.5, 2.0],
            settle: 3.0,
            monotone_slack: 1e-6,
            htheorem: true,
            htheorem_budget: crate::diagnostics::HTHEOREM_BUDGET,
            drift_tol: 1e-8,
            decay_ratio: None,
            fit_window: None,
            constants: true,
            spectrum: "auto".into(),
            inequality_samples: 50,
        }
    }
}

impl DiagnosticsConfig {
    pub fn spectrum_request(&self) -> Result<SpectrumRequest> {
        match self.spectrum.as_str() {
            "auto" => Ok(SpectrumRequest::Auto),
            "dense" => Ok(SpectrumRequest::Dense),
            s => match s.strip_prefix("partial:").map(|k| k.trim().parse::<usize>()) {
                Some(Ok(k)) if k >= 2 => Ok(SpectrumRequest::Partial(k)),
                _ => Err(Error::Config(format!("diagnostics.spectrum: unknown value '{s}'"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "kinmodes-out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub potential: PotentialConfig,
    pub discretization: DiscretizationConfig,
    pub collision: CollisionConfig,
    pub integrator: IntegratorSection,
    pub initial: InitialConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Dotted key -> list of values; runs the cartesian product.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
}

/// JSON Schema of the configuration tree.
pub const CONFIG_SCHEMA: &str = r##"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "kinmodes run configuration",
  "type": "object",
  "additionalProperties": false,
  "required": ["potential", "discretization", "collision", "integrator", "initial"],
  "properties": {
    "preset": {"type": "string", "enum": ["harmonic-d1", "quartic-d1", "radial-d2", "aniso-d2", "harmonic-d2", "smoke-d1"]},
    "seed": {"type": "integer", "minimum": 0},
    "potential": {
      "type": "object", "additionalProperties": false, "required": ["family"],
      "properties": {
        "family": {"enum": ["fully-harmonic", "anisotropic-harmonic", "power-law", "polynomial", "radial-polynomial"]},
        "p": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "gamma": {"type": "number", "exclusiveMinimum": 1},
        "a": {"type": "number"},
        "z": {"type": "number"},
        "coeffs": {"type": "array", "items": {"type": "number"}},
        "terms": {"type": "array", "items": {"type": "object", "additionalProperties": false,
          "required": ["exponents", "coef"],
          "properties": {"exponents": {"type": "array", "items": {"type": "integer", "minimum": 0}}, "coef": {"type": "number"}}}},
        "table": {"type": "array"},
        "generalized": {"type": "boolean", "default": false}
      }
    },
    "discretization": {
      "type": "object", "additionalProperties": false, "required": ["d", "n_x", "n_v"],
      "properties": {
        "d": {"type": "integer", "minimum": 1},
        "n_x": {"type": "integer", "minimum": 8},
        "half_width": {"type": "number", "exclusiveMinimum": 0},
        "n_v": {"type": "integer", "minimum": 4}
      }
    },
    "collision": {
      "type": "object", "additionalProperties": false, "required": ["rate"],
      "properties": {"rate": {"type": "number", "exclusiveMinimum": 0}}
    },
    "integrator": {
      "type": "object", "additionalProperties": false, "required": ["dt", "t_end"],
      "properties": {
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "t_end": {"type": "number", "minimum": 0},
        "output_stride": {"type": "integer", "minimum": 1, "default": 100},
        "scheme": {"enum": ["strang", "rk4-full"], "default": "strang"},
        "safety": {"type": "number", "exclusiveMinimum": 0, "default": 0.5},
        "snapshot_times": {"type": "array", "items": {"type": "number"}}
      }
    },
    "initial": {
      "type": "object", "additionalProperties": false, "required": ["datum"],
      "properties": {"datum": {"type": "string",
        "pattern": "^(maxwellian-perturbation|mode:.+|hermite-mode:\\(\\d+(,\\d+)*\\)|random-seeded(:\\d+)?)$"}}
    },
    "diagnostics": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "lyapunov": {"type": "boolean", "default": false},
        "epsilon": {"type": "number", "default": 0.01},
        "band": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2, "default": [0.5, 2.0]},
        "settle": {"type": "number", "default": 3.0},
        "monotone_slack": {"type": "number", "default": 1e-6},
        "htheorem": {"type": "boolean", "default": true},
        "htheorem_budget": {"type": "number", "default": 1e-12},
        "drift_tol": {"type": "number", "default": 1e-8},
        "decay_ratio": {"type": "number"},
        "fit_window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "constants": {"type": "boolean", "default": true},
        "spectrum": {"type": "string", "pattern": "^(auto|dense|partial:\\d+)$", "default": "auto"},
        "inequality_samples": {"type": "integer", "minimum": 0, "default": 50}
      }
    },
    "output": {
      "type": "object", "additionalProperties": false,
      "properties": {"dir": {"type": "string", "default": "kinmodes-out"}}
    },
    "sweep": {"type": "object", "additionalProperties": {"type": "array"}}
  }
}"##;

fn preset_toml(name: &str) -> Option<&'static str> {
    Some(match name {
        "harmonic-d1" => {
            r#"
seed = 1
[potential]
family = "fully-harmonic"
[discretization]
d = 1
n_x = 128
n_v = 8
[collision]
rate = 1.0
[integrator]
dt = 2e-3
t_end = 55.0
output_stride = 25
[initial]
datum = "random-seeded"
[diagnostics]
lyapunov = true
decay_ratio = 1e-3
"#
        }
        "quartic-d1" => {
            r#"
seed = 1
[potential]
family = "power-law"
gamma = 4.0
a = 1.0
z = 0.0
[discretization]
d = 1
n_x = 128
n_v = 8
[collision]
rate = 1.0
[integrator]
dt = 2e-3
t_end = 400.0
output_stride = 50
[initial]
datum = "random-seeded"
[diagnostics]
lyapunov = true
decay_ratio = 1e-3
"#
        }
        "radial-d2" => {
            r#"
seed = 1
[potential]
family = "radial-polynomial"
coeffs = [0.0, 0.5, 0.25]
[discretization]
d = 2
n_x = 96
n_v = 6
[collision]
rate = 1.0
[integrator]
dt = 8e-3
t_end = 220.0
output_stride = 25
[initial]
datum = "random-seeded"
[diagnostics]
decay_ratio = 1e-3
spectrum = "partial:8"
inequality_samples = 0
"#
        }
        "aniso-d2" => {
            r#"
seed = 1
[potential]
family = "anisotropic-harmonic"
p = [1.0, 2.0]
generalized = true
[discretization]
d = 2
n_x = 32
n_v = 6
[collision]
rate = 1.0
[integrator]
dt = 1e-2
t_end = 60.0
output_stride = 5
[initial]
datum = "random-seeded"
[diagnostics]
decay_ratio = 1e-3
"#
        }
        "harmonic-d2" => {
            r#"
seed = 1
[potential]
family = "fully-harmonic"
[discretization]
d = 2
n_x = 32
n_v = 6
[collision]
rate = 1.0
[integrator]
dt = 1e-2
t_end = 12.566370614359172
output_stride = 10
[initial]
datum = "mode:pulsating+"
"#
        }
        "smoke-d1" => {
            r#"
seed = 1
[potential]
family = "fully-harmonic"
[discretization]
d = 1
n_x = 64
n_v = 6
[collision]
rate = 1.0
[integrator]
dt = 5e-3
t_end = 5.0
output_stride = 20
[initial]
datum = "random-seeded"
[diagnostics]
lyapunov = true
"#
        }
        _ => return None,
    })
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn preset_table(name: &str) -> Result<toml::Table> {
    let src = preset_toml(name)
        .ok_or_else(|| Error::Config(format!("unknown preset '{name}' (known: {})", PRESETS.join(", "))))?;
    let mut t: toml::Table = src.parse().expect("preset is valid TOML");
    t.insert("preset".into(), toml::Value::String(name.into()));
    Ok(t)
}

/// Accepts `N_x`, `L` and `N_v` as spellings of the discretization keys.
fn canonical_keys(t: &mut toml::Table) {
    if let Some(toml::Value::Table(dc)) = t.get_mut("discretization") {
        for (from, to) in [("N_x", "n_x"), ("L", "half_width"), ("N_v", "n_v")] {
            if let Some(v) = dc.remove(from) {
                dc.insert(to.into(), v);
            }
        }
    }
}

fn json_to_toml(v: serde_json::Value) -> Result<toml::Value> {
    toml::Value::try_from(v).map_err(|e| Error::Config(format!("JSON config: {e}")))
}

/// Parses a configuration file; `.json` files are read as JSON, everything else as TOML.
pub fn parse_table(text: &str, json: bool) -> Result<toml::Table> {
    if json {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("JSON config: {e}")))?;
        match json_to_toml(v)? {
            toml::Value::Table(t) => Ok(t),
            _ => Err(Error::Config("JSON config must be an object".into())),
        }
    } else {
        text.parse::<toml::Table>().map_err(|e| Error::Config(format!("TOML config: {e}")))
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_table(preset_table(name)?)
    }

    /// Layers `text` over the preset it names (or `preset`, which wins).
    pub fn from_str_with_preset(text: &str, json: bool, preset: Option<&str>) -> Result<Self> {
        let mut user = parse_table(text, json)?;
        canonical_keys(&mut user);
        let name = preset
            .map(str::to_string)
            .or_else(|| user.get("preset").and_then(|v| v.as_str()).map(str::to_string));
        let mut base = match &name {
            Some(n) => preset_table(n)?,
            None => toml::Table::new(),
        };
        // A new family replaces the preset's potential instead of mixing parameters.
        if user.get("potential").and_then(|p| p.get("family")).is_some() {
            base.remove("potential");
        }
        merge(&mut base, user);
        if let Some(n) = name {
            base.insert("preset".into(), toml::Value::String(n));
        }
        Self::from_table(base)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_str_with_preset(text, false, None)
    }

    /// Reads a file, optionally on top of a preset.
    pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                let json = p.extension().is_some_and(|e| e == "json");
                Self::from_str_with_preset(&text, json, preset)
            }
            None => Self::preset(preset.unwrap_or("harmonic-d1")),
        }
    }

    pub fn from_table(t: toml::Table) -> Result<Self> {
        let cfg: RunConfig = toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Schema rules that serde alone does not enforce.
    pub fn validate(&self) -> Result<()> {
        let dc = &self.discretization;
        let bad = |m: String| Err(Error::Config(m));
        if dc.d == 0 {
            return bad("discretization.d must be at least 1".into());
        }
        if dc.n_v < MIN_VELOCITY_ORDER {
            return bad(format!(
                "discretization.n_v = {} is below {MIN_VELOCITY_ORDER}: the micro part and its energy moment are not representable",
                dc.n_v
            ));
        }
        if dc.n_x < 8 {
            return bad(format!("discretization.n_x = {} is below 8", dc.n_x));
        }
        if dc.half_width.is_some_and(|l| !(l > 0.0)) {
            return bad("discretization.half_width must be positive".into());
        }
        if !(self.collision.rate > 0.0) {
            return bad(format!("collision.rate = {} must be positive", self.collision.rate));
        }
        let ig = &self.integrator;
        if !(ig.dt > 0.0) || !(ig.t_end >= 0.0) || ig.output_stride == 0 || !(ig.safety > 0.0) {
            return bad("integrator: need dt > 0, t_end >= 0, output_stride >= 1, safety > 0".into());
        }
        let dg = &self.diagnostics;
        if !(dg.band[0] > 0.0 && dg.band[0] < dg.band[1]) {
            return bad(format!("diagnostics.band {:?} is not an interval of positive numbers", dg.band));
        }
        if !(dg.epsilon > 0.0 && dg.epsilon < 1.0) {
            return bad("diagnostics.epsilon must lie in (0, 1)".into());
        }
        dg.spectrum_request()?;
        self.initial_datum()?;
        self.raw_potential()?;
        for (k, vals) in &self.sweep {
            if vals.is_empty() {
                return bad(format!("sweep.{k} is empty"));
            }
        }
        Ok(())
    }

    pub fn initial_datum(&self) -> Result<InitialDatum> {
        self.initial.datum.parse()
    }

    pub fn raw_potential(&self) -> Result<RawPotential> {
        let pc = &self.potential;
        let d = self.discretization.d;
        let need = |v: &Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("potential.{name} is required for family '{}'", pc.family)))
        };
        let only = |allowed: &[&str]| -> Result<()> {
            let present = [
                ("p", pc.p.is_some()),
                ("gamma", pc.gamma.is_some()),
                ("a", pc.a.is_some()),
                ("z", pc.z.is_some()),
                ("coeffs", pc.coeffs.is_some()),
                ("terms", pc.terms.is_some()),
                ("table", pc.table.is_some()),
            ];
            for (name, set) in present {
                if set && !allowed.contains(&name) {
                    return Err(Error::Config(format!("potential.{name} is not a parameter of family '{}'", pc.family)));
                }
            }
            Ok(())
        };
        let family = match pc.family.as_str() {
            "fully-harmonic" => {
                only(&[])?;
                Family::FullyHarmonic
            }
            "anisotropic-harmonic" => {
                only(&["p"])?;
                let p = pc.p.clone().ok_or_else(|| Error::Config("potential.p is required".into()))?;
                Family::AnisotropicHarmonic { p }
            }
            "power-law" => {
                only(&["gamma", "a", "z"])?;
                Family::PowerLaw { gamma: need(&pc.gamma, "gamma")?, a: pc.a.unwrap_or(1.0), z: pc.z.unwrap_or(0.0) }
            }
            "radial-polynomial" => {
                only(&["coeffs"])?;
                let coeffs = pc.coeffs.clone().ok_or_else(|| Error::Config("potential.coeffs is required".into()))?;
                Family::RadialPolynomial { coeffs }
            }
            "polynomial" => {
                only(&["terms", "table"])?;
                match (&pc.terms, &pc.table) {
                    (Some(terms), None) => {
                        if terms.iter().any(|t| t.exponents.len() != d) {
                            return Err(Error::Config(format!("potential.terms: every exponent list needs {d} entries")));
                        }
                        let pairs: Vec<(Vec<usize>, f64)> = terms.iter().map(|t| (t.exponents.clone(), t.coef)).collect();
                        Family::Polynomial(PolyTable::from_terms(d, &pairs))
                    }
                    (None, Some(table)) => Family::Polynomial(PolyTable::from_nested(d, table)?),
                    _ => return Err(Error::Config("potential: give exactly one of terms or table".into())),
                }
            }
            other => return Err(Error::Config(format!("unknown potential family '{other}'"))),
        };
        RawPotential::new(d, family)
    }

    pub fn normalized_potential(&self) -> Result<Potential> {
        normalize(&self.raw_potential()?, NormalizeOptions { generalized: self.potential.generalized, ..Default::default() })
    }

    pub fn discretization(&self, pot: Arc<Potential>) -> Result<Discretization> {
        let dc = &self.discretization;
        Discretization::new(pot, dc.n_x, dc.half_width, dc.n_v)
    }

    /// One configuration per point of the sweep product, labelled by its settings.
    pub fn expand_sweep(&self) -> Result<Vec<(String, RunConfig)>> {
        if self.sweep.is_empty() {
            return Ok(vec![(String::new(), self.clone())]);
        }
        let mut base = self.clone();
        base.sweep.clear();
        let base_value = toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        let keys: Vec<&String> = self.sweep.keys().collect();
        let sizes: Vec<usize> = keys.iter().map(|k| self.sweep[*k].len()).collect();
        let total: usize = sizes.iter().product();
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut v = base_value.clone();
            let mut rem = idx;
            let mut label = Vec::new();
            for (k, &n) in keys.iter().zip(&sizes) {
                let val = self.sweep[*k][rem % n].clone();
                rem /= n;
                set_dotted(&mut v, k, val.clone())?;
                label.push(format!("{k}={}", val.to_string().trim_matches('"')));
            }
            let t = match v {
                toml::Value::Table(t) => t,
                _ => unreachable!(),
            };
            out.push((label.join(","), RunConfig::from_table(t)?));
        }
        Ok(out)
    }
}

fn set_dotted(root: &mut toml::Value, key: &str, val: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, p) in parts.iter().enumerate() {
        let table = cur.as_table_mut().ok_or_else(|| Error::Config(format!("sweep key '{key}' does not name a table path")))?;
        if i + 1 == parts.len() {
            table.insert(p.to_string(), val);
            return Ok(());
        }
        cur = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for p in PRESETS {
            let c = RunConfig::preset(p).unwrap();
            assert_eq!(c.preset.as_deref(), Some(p));
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let e = RunConfig::from_str_with_preset("[collision]\nrate = 1.0\nfoo = 2\n", false, Some("smoke-d1"));
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn low_velocity_order_rejected() {
        let e = RunConfig::from_str_with_preset("[discretization]\nn_v = 2\n", false, Some("smoke-d1")).unwrap_err();
        assert!(e.to_string().contains("n_v"));
    }

    #[test]
    fn aliases_accepted() {
        let c = RunConfig::from_str_with_preset("[discretization]\nd = 1\nN_x = 40\nL = 9.0\nN_v = 5\n", false, Some("smoke-d1"))
            .unwrap();
        assert_eq!((c.discretization.n_x, c.discretization.half_width, c.discretization.n_v), (40, Some(9.0), 5));
    }

    #[test]
    fn schema_is_json_and_lists_sections() {
        let v: serde_json::Value = serde_json::from_str(CONFIG_SCHEMA).unwrap();
        let props = v["properties"].as_object().unwrap();
        let c = RunConfig::preset("harmonic-d1").unwrap();
        let t: toml::Table = c.to_toml().parse().unwrap();
        for k in t.keys() {
            assert!(props.contains_key(k), "{k} missing from schema");
        }
        for k in t["diagnostics"].as_table().unwrap().keys() {
            assert!(props["diagnostics"]["properties"].get(k).is_some(), "{k} missing from schema");
        }
    }

    #[test]
    fn sweep_product() {
        let c = RunConfig::from_str_with_preset(
            "[sweep]\n\"collision.rate\" = [0.5, 1.0, 2.0]\nseed = [1, 2]\n",
            false,
            Some("smoke-d1"),
        )
        .unwrap();
        let runs = c.expand_sweep().unwrap();
        assert_eq!(runs.len(), 6);
        assert_eq!(runs[1].1.collision.rate, 1.0);
        assert!(runs.iter().all(|(_, r)| r.sweep.is_empty()));
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::preset("quartic-d1").unwrap();
        let j = serde_json::to_string(&c).unwrap();
        let back = RunConfig::from_str_with_preset(&j, true, None).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn family_parameters_checked() {
        let e = RunConfig::from_str_with_preset("[potential]\nfamily = \"fully-harmonic\"\ngamma = 4.0\n", false, Some("smoke-d1"));
        assert!(e.is_err());
        let c = RunConfig::from_str_with_preset(
            "[potential]\nfamily = \"polynomial\"\nterms = [{exponents = [4], coef = 0.25}, {exponents = [2], coef = 0.5}]\n",
            false,
            Some("smoke-d1"),
        )
        .unwrap();
        assert!(c.raw_potential().is_ok());
    }
}
