//! Scenario files: a JSON document describing the Hilbert-space dimension,
//! named contexts, the measurement protocol, an optional meter and optional
//! sweep grids.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dim": 2,
//!   "contexts": {
//!     "z": {"kind": "computational"},
//!     "x": {"kind": "rotation", "theta": 1.5707963267948966}
//!   },
//!   "protocol": {"initial": {"context": "z", "index": 0}, "sequence": ["x"]},
//!   "meter": {"pointer": "x", "gram": {"kind": "uniform", "g": 0.5}},
//!   "sweep": {"g": [0.0, 0.5, 1.0], "m_count": [0, 1, 2], "phi": [0.0, 3.14159]}
//! }
//! ```
//!
//! `sequence` lists the contexts measured after preparation, so the protocol
//! visits `initial.context` followed by every entry of `sequence`.

use std::collections::BTreeMap;
use std::path::Path;

use csm_core::{Context, ContextSpec, GramMatrix, GramSpec, Protocol};
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub dim: usize,
    pub contexts: BTreeMap<String, ContextSpec>,
    pub protocol: ProtocolSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meter: Option<MeterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub initial: InitialSpec,
    pub sequence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub context: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterSpec {
    pub pointer: String,
    pub gram: GramSpec,
}

/// Parameter grids. `phi` drives an interferometer through the first
/// context of the sequence with arm phases `(0, φ, 2φ, ...)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m_count: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phi: Vec<f64>,
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ScenarioError::FileNotFound(path.to_path_buf())
        } else {
            ScenarioError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    /// Structural checks: names resolve, dimensions agree, parameters are in
    /// range. Orthonormality of explicit contexts is left to [`Scenario::build`]
    /// so that `verify` can report it as a residual.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::validation(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if self.dim < 2 {
            return Err(ScenarioError::validation("dim", "must be at least 2"));
        }
        if self.contexts.is_empty() {
            return Err(ScenarioError::validation("contexts", "no contexts defined"));
        }
        for (name, spec) in &self.contexts {
            spec.raw_basis(self.dim).map_err(|e| {
                let reason = match (spec, &e) {
                    (ContextSpec::Rotation { .. }, csm_core::Error::DimensionMismatch { .. }) => {
                        format!("rotation requires dim 2, scenario has dim {}", self.dim)
                    }
                    _ => e.to_string(),
                };
                ScenarioError::validation(format!("contexts.{name}"), reason)
            })?;
        }

        let initial = &self.protocol.initial;
        self.resolve("protocol.initial.context", &initial.context)?;
        if initial.index >= self.dim {
            return Err(ScenarioError::validation(
                "protocol.initial.index",
                format!("{} out of range for dim {}", initial.index, self.dim),
            ));
        }
        if self.protocol.sequence.is_empty() {
            return Err(ScenarioError::validation(
                "protocol.sequence",
                "protocol must have at least one step",
            ));
        }
        for (k, name) in self.protocol.sequence.iter().enumerate() {
            self.resolve(&format!("protocol.sequence[{k}]"), name)?;
        }

        if let Some(meter) = &self.meter {
            self.resolve("meter.pointer", &meter.pointer)?;
            meter
                .gram
                .build(self.dim)
                .map_err(|e| ScenarioError::validation("meter.gram", e.to_string()))?;
        }

        if let Some(sweep) = &self.sweep {
            if (!sweep.g.is_empty() || !sweep.m_count.is_empty()) && self.meter.is_none() {
                return Err(ScenarioError::validation(
                    "sweep",
                    "g and m_count sweeps need a `meter` section",
                ));
            }
            if let Some(g) = sweep.g.iter().find(|g| !(0.0..=1.0).contains(*g)) {
                return Err(ScenarioError::validation(
                    "sweep.g",
                    format!("{g} outside [0, 1]"),
                ));
            }
            if let Some(phi) = sweep.phi.iter().find(|p| !p.is_finite()) {
                return Err(ScenarioError::validation(
                    "sweep.phi",
                    format!("{phi} is not finite"),
                ));
            }
        }
        Ok(())
    }

    fn resolve(&self, field: &str, name: &str) -> Result<(), ScenarioError> {
        if self.contexts.contains_key(name) {
            Ok(())
        } else {
            Err(ScenarioError::validation(
                field,
                format!("undefined context `{name}`"),
            ))
        }
    }

    /// Constructs every context, the protocol and the meter.
    pub fn build(&self) -> Result<Built, ScenarioError> {
        let contexts = self
            .contexts
            .iter()
            .map(|(name, spec)| {
                csm_core::build_context(name.clone(), spec, self.dim)
                    .map(|c| (name.clone(), c))
                    .map_err(ScenarioError::domain(format!("contexts.{name}")))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;

        let lookup = |field: &str, name: &str| -> Result<Context, ScenarioError> {
            contexts.get(name).cloned().ok_or_else(|| {
                ScenarioError::validation(field, format!("undefined context `{name}`"))
            })
        };
        let mut sequence = vec![lookup(
            "protocol.initial.context",
            &self.protocol.initial.context,
        )?];
        for (k, name) in self.protocol.sequence.iter().enumerate() {
            sequence.push(lookup(&format!("protocol.sequence[{k}]"), name)?);
        }
        let protocol = Protocol::new(sequence, self.protocol.initial.index)
            .map_err(ScenarioError::domain("protocol"))?;

        let meter = match &self.meter {
            Some(m) => Some(BuiltMeter {
                pointer: lookup("meter.pointer", &m.pointer)?,
                gram: m
                    .gram
                    .build(self.dim)
                    .map_err(ScenarioError::domain("meter.gram"))?,
            }),
            None => None,
        };
        Ok(Built {
            contexts,
            protocol,
            meter,
        })
    }
}

/// Numerical objects described by a scenario.
#[derive(Debug, Clone)]
pub struct Built {
    pub contexts: BTreeMap<String, Context>,
    pub protocol: Protocol,
    pub meter: Option<BuiltMeter>,
}

#[derive(Debug, Clone)]
pub struct BuiltMeter {
    pub pointer: Context,
    pub gram: GramMatrix,
}
