use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::problem::{Model, ModelParams};
use crate::sam::MacroScheme;
use crate::splitting::{Sequence, SplittingOrder};

/// A time value written either as a number or as a multiple of pi,
/// e.g. `"pi/32"`, `"3*pi/4"`, `"2pi/512"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeValue {
    value: f64,
    /// `(numerator, denominator)` of a multiple of pi, kept for display.
    pi_fraction: Option<(f64, f64)>,
}

impl TimeValue {
    pub fn new(value: f64) -> Self {
        Self { value, pi_fraction: None }
    }

    /// `num * pi / den`.
    pub fn pi(num: f64, den: f64) -> Self {
        Self { value: num * PI / den, pi_fraction: Some((num, den)) }
    }

    pub fn get(self) -> f64 {
        self.value
    }
}

impl fmt::Display for TimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pi_fraction {
            Some((n, d)) => {
                if n != 1.0 {
                    write!(f, "{n}*")?;
                }
                write!(f, "pi")?;
                if d != 1.0 {
                    write!(f, "/{d}")?;
                }
                Ok(())
            }
            None => write!(f, "{}", self.value),
        }
    }
}

impl FromStr for TimeValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("cannot parse time value {s:?}"));
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let Some(at) = t.find("pi") else {
            return t.parse::<f64>().map(TimeValue::new).map_err(|_| bad());
        };
        let head = t[..at].trim_end_matches('*');
        let tail = &t[at + 2..];
        let num = if head.is_empty() { 1.0 } else { head.parse::<f64>().map_err(|_| bad())? };
        let den = match tail.strip_prefix('/') {
            Some(d) => d.parse::<f64>().map_err(|_| bad())?,
            None if tail.is_empty() => 1.0,
            None => return Err(bad()),
        };
        if !(den > 0.0) {
            return Err(bad());
        }
        Ok(TimeValue::pi(num, den))
    }
}

impl Serialize for TimeValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.pi_fraction {
            Some(_) => s.serialize_str(&self.to_string()),
            None => s.serialize_f64(self.value),
        }
    }
}

impl<'de> Deserialize<'de> for TimeValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(TimeValue::new(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    AccuracySweep,
    SplittingTable,
    Efficiency,
    InvariantsLongTime,
    ModeEvolution,
}

impl Experiment {
    /// Stem of the CSV file written for this experiment.
    pub fn file_stem(self) -> &'static str {
        match self {
            Experiment::AccuracySweep => "accuracy",
            Experiment::SplittingTable => "table",
            Experiment::Efficiency => "efficiency",
            Experiment::InvariantsLongTime => "invariants",
            Experiment::ModeEvolution => "modes",
        }
    }
}

/// Grid overrides; unset fields fall back to the model's desk or paper
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default)]
    pub nodes: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
}

/// How reference solutions are produced for a given epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePolicy {
    /// Full-interval splitting is used for `eps >= splitting_min_eps`, SAM
    /// below.
    pub splitting_min_eps: f64,
    /// Splitting step. When `scale_with_eps` is set the step is
    /// `eps * splitting_h`.
    pub splitting_h: TimeValue,
    #[serde(default)]
    pub scale_with_eps: bool,
    /// SAM reference: `eps_eff H`, `h`, stencil order.
    pub sam_eps_h: TimeValue,
    pub sam_h: TimeValue,
    #[serde(default = "default_ref_delta")]
    pub sam_delta: u32,
}

fn default_ref_delta() -> u32 {
    8
}

impl ReferencePolicy {
    /// The policy used for the published runs of `model`.
    pub fn paper(model: Model) -> Self {
        let splitting_min_eps = match model {
            Model::TorusNls1d => 2f64.powi(-8),
            _ => 2f64.powi(-7),
        };
        Self {
            splitting_min_eps,
            splitting_h: TimeValue::pi(1.0, 16384.0),
            scale_with_eps: true,
            sam_eps_h: TimeValue::pi(1.0, 4096.0),
            sam_h: TimeValue::pi(1.0, 4096.0),
            sam_delta: 8,
        }
    }

    /// Cheaper desk-scale policy: fixed splitting step `pi/2^11`.
    pub fn desk(model: Model) -> Self {
        Self {
            splitting_h: TimeValue::pi(1.0, 2048.0),
            scale_with_eps: false,
            ..Self::paper(model)
        }
    }

    pub fn select(&self, eps: f64) -> ReferenceMethod {
        if eps >= self.splitting_min_eps {
            let h = if self.scale_with_eps {
                eps * self.splitting_h.get()
            } else {
                self.splitting_h.get()
            };
            ReferenceMethod::Splitting { h }
        } else {
            ReferenceMethod::Sam {
                eps_h: self.sam_eps_h.get(),
                h: self.sam_h.get(),
                delta: self.sam_delta,
            }
        }
    }
}

/// Concrete reference computation chosen by a [`ReferencePolicy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ReferenceMethod {
    /// Fourth-order splitting over the whole interval.
    Splitting { h: f64 },
    /// SAM with RK4 macro steps and a fourth-order micro-integrator.
    Sam { eps_h: f64, h: f64, delta: u32 },
}

impl ReferenceMethod {
    pub fn is_splitting(&self) -> bool {
        matches!(self, ReferenceMethod::Splitting { .. })
    }
}

/// One experiment, as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: Model,
    /// Physical epsilon values (not squared for the 2D models).
    pub eps: Vec<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    /// Use the published grid sizes instead of the desk defaults.
    #[serde(default)]
    pub paper_scale: bool,
    /// Horizon numerator; the final time is `t0 / eps_eff^horizon_power`.
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default = "one")]
    pub horizon_power: i32,
    /// Macro steps, given as `eps_eff H`.
    #[serde(default)]
    pub eps_h: Vec<TimeValue>,
    /// Micro steps `h`; each must divide the period.
    #[serde(default)]
    pub h: Vec<TimeValue>,
    /// SAM micro steps of the efficiency experiment (`h` then holds the
    /// splitting steps).
    #[serde(default)]
    pub sam_h: Vec<TimeValue>,
    /// Fixed micro step of the macro-step sweep.
    #[serde(default)]
    pub fine_h: Option<TimeValue>,
    /// Fixed `eps_eff H` of the micro-step sweep.
    #[serde(default)]
    pub fine_eps_h: Option<TimeValue>,
    #[serde(default = "default_schemes")]
    pub macro_schemes: Vec<MacroScheme>,
    #[serde(default = "default_delta")]
    pub stencil: u32,
    #[serde(default = "default_micro_order")]
    pub micro_order: u32,
    #[serde(default)]
    pub sequence: Sequence,
    #[serde(default)]
    pub reference: Option<ReferencePolicy>,
    /// Reference step divisor of the splitting table.
    #[serde(default = "default_refinement")]
    pub table_refinement: u32,
    /// Inclusive bounds on SAM work in the efficiency experiment.
    #[serde(default)]
    pub n_step_range: Option<(u64, u64)>,
    /// Tracked `(kx, ky)` indices of the mode experiment.
    #[serde(default)]
    pub modes: Vec<(i64, i64)>,
    /// Sampling interval of observables; a multiple of the period.
    #[serde(default)]
    pub sample_every: Option<TimeValue>,
    /// FAM step `h_fam`.
    #[serde(default)]
    pub fam_h: Option<TimeValue>,
    #[serde(default = "default_n_quad")]
    pub n_quad: usize,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate stencil legs and quadrature nodes on the thread pool.
    #[serde(default)]
    pub parallel_legs: bool,
}

fn one() -> i32 {
    1
}
fn default_schemes() -> Vec<MacroScheme> {
    vec![MacroScheme::Rk4]
}
fn default_delta() -> u32 {
    4
}
fn default_micro_order() -> u32 {
    4
}
fn default_refinement() -> u32 {
    16
}
fn default_n_quad() -> usize {
    64
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(experiment: Experiment, model: Model, eps: Vec<f64>) -> Self {
        Self {
            experiment,
            model,
            eps,
            grid: GridConfig::default(),
            paper_scale: false,
            t0: None,
            horizon_power: 1,
            eps_h: Vec::new(),
            h: Vec::new(),
            sam_h: Vec::new(),
            fine_h: None,
            fine_eps_h: None,
            macro_schemes: default_schemes(),
            stencil: default_delta(),
            micro_order: default_micro_order(),
            sequence: Sequence::default(),
            reference: None,
            table_refinement: default_refinement(),
            n_step_range: None,
            modes: Vec::new(),
            sample_every: None,
            fam_h: None,
            n_quad: default_n_quad(),
            seed: 0,
            parallel_legs: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn micro_order(&self) -> Result<SplittingOrder> {
        SplittingOrder::from_order(self.micro_order)
    }

    pub fn reference_policy(&self) -> ReferencePolicy {
        self.reference.clone().unwrap_or_else(|| {
            if self.paper_scale {
                ReferencePolicy::paper(self.model)
            } else {
                ReferencePolicy::desk(self.model)
            }
        })
    }

    /// Model parameters for one epsilon.
    pub fn model_params(&self, eps: f64) -> ModelParams {
        let base = if self.paper_scale {
            self.model.paper_params(eps)
        } else {
            self.model.desk_params(eps)
        };
        let g = &self.grid;
        let mut p = ModelParams {
            nx: g.nx.unwrap_or(base.nx),
            ny: g.ny.unwrap_or(base.ny),
            nodes: g.nodes.or(base.nodes),
            beta: g.beta.unwrap_or(base.beta),
            ..base
        };
        let t0 = self.t0.unwrap_or_else(|| self.model.default_t0());
        p.t0 = Some(t0);
        p
    }

    /// Checks everything that does not need a built model. Step
    /// divisibility is checked per epsilon by [`super::prepare`].
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::config("eps list is empty"));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::config(format!("eps must be positive, got {e}")));
        }
        if self.horizon_power < 1 {
            return Err(Error::config("horizon_power must be at least 1"));
        }
        self.micro_order()?;
        crate::sam::Stencil::new(self.stencil)?;
        if self.macro_schemes.is_empty() {
            return Err(Error::config("macro_schemes is empty"));
        }
        if self.n_quad < 2 || self.n_quad % 2 != 0 {
            return Err(Error::config(format!("n_quad must be even and >= 2, got {}", self.n_quad)));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("{:?} needs {what}", self.experiment)))
            }
        };
        match self.experiment {
            Experiment::SplittingTable => {
                need(!self.h.is_empty(), "a non-empty h list")?;
                need(self.table_refinement >= 2, "table_refinement >= 2")?;
            }
            Experiment::AccuracySweep => {
                need(!self.eps_h.is_empty() || !self.h.is_empty(), "eps_h or h values")?;
                need(self.eps_h.is_empty() || self.fine_h.is_some(), "fine_h for the eps_h sweep")?;
                need(self.h.is_empty() || self.fine_eps_h.is_some(), "fine_eps_h for the h sweep")?;
            }
            Experiment::Efficiency => {
                need(!self.h.is_empty(), "splitting steps in h")?;
                need(!self.eps_h.is_empty(), "SAM macro steps in eps_h")?;
                need(!self.sam_h.is_empty(), "SAM micro steps in sam_h")?;
            }
            Experiment::InvariantsLongTime => {
                need(self.model == Model::TorusNls1d, "the torus model")?;
                need(self.eps_h.len() == 1 && self.h.len() == 1, "exactly one eps_h and one h")?;
            }
            Experiment::ModeEvolution => {
                need(self.model != Model::TorusNls1d, "a Gross-Pitaevskii or 2D model")?;
                need(!self.modes.is_empty(), "a non-empty mode list")?;
                need(self.eps_h.len() == 1 && self.h.len() == 1, "exactly one eps_h and one h")?;
                need(self.fam_h.is_some(), "fam_h")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_values_parse() {
        let cases = [
            ("pi/32", PI / 32.0),
            ("3*pi/4", 3.0 * PI / 4.0),
            ("2pi/512", 2.0 * PI / 512.0),
            ("pi", PI),
            (" 0.25 ", 0.25),
        ];
        for (s, v) in cases {
            assert_eq!(s.parse::<TimeValue>().unwrap().get(), v, "{s}");
        }
        for bad in ["pi/", "x", "pi*2", "pi/0", "pi/-2"] {
            assert!(bad.parse::<TimeValue>().is_err(), "{bad}");
        }
        let t: TimeValue = serde_json::from_str("\"pi/8\"").unwrap();
        assert_eq!(serde_json::to_string(&t).unwrap(), "\"pi/8\"");
        let n: TimeValue = serde_json::from_str("0.5").unwrap();
        assert_eq!(serde_json::to_string(&n).unwrap(), "0.5");
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"{
            "experiment": "splitting_table",
            "model": "torus_nls_1d",
            "eps": [0.125, 0.0625],
            "h": ["pi/16", "pi/32"]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.table_refinement, 16);
        let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, again);

        let missing = text.replace(r#""h": ["pi/16", "pi/32"]"#, r#""h": []"#);
        assert!(matches!(ExperimentConfig::from_json(&missing), Err(Error::Config(_))));
        let unknown = text.replace(r#""eps""#, r#""epsilon""#);
        assert!(ExperimentConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn reference_policy_branches() {
        let p = ReferencePolicy::paper(Model::TorusNls1d);
        assert!(p.select(2f64.powi(-3)).is_splitting());
        assert!(p.select(2f64.powi(-8)).is_splitting());
        assert!(!p.select(2f64.powi(-9)).is_splitting());
        match p.select(0.25) {
            ReferenceMethod::Splitting { h } => assert_eq!(h, 0.25 * PI / 16384.0),
            _ => unreachable!(),
        }
        let g = ReferencePolicy::paper(Model::GrossPitaevskii1d);
        assert!(g.select(2f64.powi(-7)).is_splitting());
        assert!(!g.select(2f64.powi(-8)).is_splitting());
    }
}
