//! Run configuration: a strict JSON document.
//!
//! ```json
//! {
//!   "system": { "two_j": 10, "hbar": 1.0 },
//!   "hamiltonian": { "model": "phase_coupling", "lambda": 0.5 },
//!   "initial_state": { "sx": [1.0, 0.0], "sy": [0.5, 0.5] },
//!   "time": { "t_max": 0.2, "num_points": 21 },
//!   "integrator": { "rel_tol": 1e-10, "abs_tol": 1e-12 },
//!   "outputs": { "path": "purity.csv" },
//!   "sweep": { "parameter": "lambda", "values": [0.1, 0.2] }
//! }
//! ```
//!
//! Unknown keys anywhere are rejected. `integrator`, `sweep`,
//! `outputs.quantities` and `system.hbar` are optional.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{build_operator_model, exchange_model, free_model, phase_coupling_model, OperatorTerm, PhaseCouplingParams, SpinFactor, BUILTIN_MODELS};
use crate::numerics::IntegratorConfig;
use crate::spin::{CoherentLabel, HamiltonianModel, SpinSystem};

/// Column names a run can emit, in CSV order after `t`.
pub const QUANTITIES: &[&str] = &["p_exact", "p_sc", "slin_exact", "slin_sc", "residual_detM", "residual_energy", "residual_im_psc"];

/// Largest `two_j` accepted; the exact engine diagonalises a dense
/// `(two_j + 1)^2` square matrix.
pub const MAX_TWO_J: u32 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub hamiltonian: HamiltonianSection,
    pub initial_state: InitialStateSection,
    pub time: TimeSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    pub outputs: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub two_j: u32,
    #[serde(default = "one")]
    pub hbar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    /// Defaults to `operator_terms` when only `terms` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TermSpec>>,
}

/// `coefficient * hbar * x.op^x.power (x) y.op^y.power`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coefficient: [f64; 2],
    pub x: FactorSpec,
    pub y: FactorSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub op: SpinFactor,
    #[serde(default = "one_u32")]
    pub power: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSection {
    pub sx: [f64; 2],
    pub sy: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_max: f64,
    pub num_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { rel_tol: default_rel_tol(), abs_tol: default_abs_tol(), max_step: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: PathBuf,
    #[serde(default = "all_quantities")]
    pub quantities: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Lambda,
    B3,
    Hbar,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::B3 => "b3",
            SweepParameter::Hbar => "hbar",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

fn default_rel_tol() -> f64 {
    1e-10
}

fn default_abs_tol() -> f64 {
    1e-12
}

fn all_quantities() -> Vec<String> {
    QUANTITIES.iter().map(|q| q.to_string()).collect()
}

/// Parses and validates a configuration document.
///
/// Malformed JSON yields `Parse` with a 1-based line and column; a
/// well-formed document with a wrong key, type or value yields `Validation`
/// naming the dotted key path.
pub fn parse_config(document: &str) -> Result<RunConfig> {
    let mut de = serde_json::Deserializer::from_str(document);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let key = e.path().to_string();
        json_error(e.into_inner(), key)
    })?;
    de.end().map_err(|e| json_error(e, String::new()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn json_error(e: serde_json::Error, key: String) -> Error {
    let message = strip_position(&e.to_string());
    match e.classify() {
        serde_json::error::Category::Data => Error::Validation { key, message },
        _ => Error::Parse { line: e.line(), column: e.column(), message },
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn finite(key: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(key, "must be finite"))
    }
}

fn positive(key: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(key, format!("must be a positive finite number, got {x}")))
    }
}

impl RunConfig {
    /// Model name after applying the `terms`-only shorthand.
    pub fn model_name(&self) -> &str {
        match (&self.hamiltonian.model, &self.hamiltonian.terms) {
            (Some(m), _) => m,
            (None, Some(_)) => "operator_terms",
            (None, None) => "",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.system.two_j == 0 || self.system.two_j > MAX_TWO_J {
            return Err(Error::validation("system.two_j", format!("must lie in 1..={MAX_TWO_J}")));
        }
        positive("system.hbar", self.system.hbar)?;
        self.validate_hamiltonian()?;
        for (key, v) in [("initial_state.sx", self.initial_state.sx), ("initial_state.sy", self.initial_state.sy)] {
            finite(key, v[0])?;
            finite(key, v[1])?;
        }
        positive("time.t_max", self.time.t_max)?;
        if self.time.num_points < 2 {
            return Err(Error::validation("time.num_points", "must be at least 2"));
        }
        positive("integrator.rel_tol", self.integrator.rel_tol)?;
        positive("integrator.abs_tol", self.integrator.abs_tol)?;
        if let Some(h) = self.integrator.max_step {
            positive("integrator.max_step", h)?;
        }
        if self.outputs.path.as_os_str().is_empty() || self.outputs.path.file_stem().is_none() {
            return Err(Error::validation("outputs.path", "must name a file"));
        }
        for (i, q) in self.outputs.quantities.iter().enumerate() {
            if !QUANTITIES.contains(&q.as_str()) {
                return Err(Error::validation(format!("outputs.quantities[{i}]"), format!("unknown quantity `{q}`; available: {}", QUANTITIES.join(", "))));
            }
            if self.outputs.quantities[..i].contains(q) {
                return Err(Error::validation(format!("outputs.quantities[{i}]"), format!("duplicate quantity `{q}`")));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::validation("sweep.values", "must not be empty"));
            }
            let applicable = match sweep.parameter {
                SweepParameter::Lambda => matches!(self.model_name(), "phase_coupling" | "exchange"),
                SweepParameter::B3 => self.model_name() == "free",
                SweepParameter::Hbar => true,
            };
            if !applicable {
                return Err(Error::validation("sweep.parameter", format!("`{}` is not a parameter of model `{}`", sweep.parameter.name(), self.model_name())));
            }
            for (i, &v) in sweep.values.iter().enumerate() {
                let key = format!("sweep.values[{i}]");
                match sweep.parameter {
                    SweepParameter::Hbar => positive(&key, v)?,
                    _ => finite(&key, v)?,
                }
            }
        }
        Ok(())
    }

    fn validate_hamiltonian(&self) -> Result<()> {
        let h = &self.hamiltonian;
        let name = self.model_name();
        if !BUILTIN_MODELS.iter().any(|(m, _)| *m == name) {
            let available: Vec<&str> = BUILTIN_MODELS.iter().map(|(m, _)| *m).collect();
            return Err(Error::validation("hamiltonian.model", format!("unknown model `{name}`; available: {}", available.join(", "))));
        }
        let (needs_lambda, needs_b3, needs_terms) = match name {
            "phase_coupling" | "exchange" => (true, false, false),
            "free" => (false, true, false),
            _ => (false, false, true),
        };
        for (key, present, needed) in [
            ("hamiltonian.lambda", h.lambda.is_some(), needs_lambda),
            ("hamiltonian.b3", h.b3.is_some(), needs_b3),
            ("hamiltonian.terms", h.terms.is_some(), needs_terms),
        ] {
            if present && !needed {
                return Err(Error::validation(key, format!("not a parameter of model `{name}`")));
            }
            if needed && !present && !self.sweep_covers(key) {
                return Err(Error::validation(key, format!("required by model `{name}`")));
            }
        }
        if let Some(l) = h.lambda {
            finite("hamiltonian.lambda", l)?;
        }
        if let Some(b) = h.b3 {
            finite("hamiltonian.b3", b)?;
        }
        if let Some(terms) = &h.terms {
            if terms.is_empty() {
                return Err(Error::validation("hamiltonian.terms", "must not be empty"));
            }
            for (i, t) in terms.iter().enumerate() {
                finite(&format!("hamiltonian.terms[{i}].coefficient"), t.coefficient[0])?;
                finite(&format!("hamiltonian.terms[{i}].coefficient"), t.coefficient[1])?;
            }
        }
        Ok(())
    }

    fn sweep_covers(&self, key: &str) -> bool {
        match &self.sweep {
            Some(s) => key == format!("hamiltonian.{}", s.parameter.name()),
            None => false,
        }
    }

    /// One configuration per sweep value, in order, with the value
    /// substituted; a single entry without a value when there is no sweep.
    pub fn cases(&self) -> Vec<(Option<f64>, RunConfig)> {
        let Some(sweep) = &self.sweep else {
            return vec![(None, self.clone())];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut c = self.clone();
                c.sweep = None;
                match sweep.parameter {
                    SweepParameter::Lambda => c.hamiltonian.lambda = Some(v),
                    SweepParameter::B3 => c.hamiltonian.b3 = Some(v),
                    SweepParameter::Hbar => c.system.hbar = v,
                }
                (Some(v), c)
            })
            .collect()
    }

    pub fn spin_system(&self) -> Result<SpinSystem> {
        SpinSystem::new(self.system.two_j, self.system.hbar)
    }

    pub fn initial_label(&self) -> Result<CoherentLabel> {
        let [a, b] = self.initial_state.sx;
        let [c, d] = self.initial_state.sy;
        CoherentLabel::new(Complex64::new(a, b), Complex64::new(c, d))
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig> {
        let cfg = IntegratorConfig::with_tolerances(self.integrator.rel_tol, self.integrator.abs_tol)?;
        match self.integrator.max_step {
            Some(h) => cfg.with_max_step(h),
            None => Ok(cfg),
        }
    }

    /// Uniform grid `t_k = k t_max / (num_points - 1)`.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = self.time.num_points;
        (0..n).map(|k| self.time.t_max * k as f64 / (n - 1) as f64).collect()
    }

    /// Builds the Hamiltonian of a sweep-free configuration.
    pub fn build_model(&self) -> Result<HamiltonianModel> {
        let sys = self.spin_system()?;
        let h = &self.hamiltonian;
        let missing = |key: &str| Error::validation(key, "no value after sweep substitution");
        match self.model_name() {
            "phase_coupling" => Ok(phase_coupling_model(&PhaseCouplingParams::new(sys, h.lambda.ok_or_else(|| missing("hamiltonian.lambda"))?)?)),
            "exchange" => exchange_model(&sys, h.lambda.ok_or_else(|| missing("hamiltonian.lambda"))?),
            "free" => free_model(&sys, h.b3.ok_or_else(|| missing("hamiltonian.b3"))?),
            _ => {
                let terms: Vec<OperatorTerm> = h
                    .terms
                    .as_deref()
                    .unwrap_or_default()
                    .iter()
                    .map(|t| OperatorTerm::new(Complex64::new(t.coefficient[0], t.coefficient[1]), (t.x.op, t.x.power), (t.y.op, t.y.power)))
                    .collect();
                build_operator_model(&sys, &terms)
            }
        }
    }

    pub fn wants(&self, quantity: &str) -> bool {
        self.outputs.quantities.iter().any(|q| q == quantity)
    }
}
