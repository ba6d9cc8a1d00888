//! JSON experiment configuration.
//!
//! One document drives every subcommand; each command reads the fields it
//! needs and rejects requests the config cannot satisfy. Numeric entries may
//! be plain JSON numbers or rational strings like `"13/8"`, which are parsed
//! as exact integer pairs and divided once.

use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer};

use maxweight::model::{
    FairnessTarget, LoadVector, ServiceSet, ServiceVector, SystemSpec, WeightMatrix,
};
use maxweight::sim::{ArrivalKind, ArrivalModel};

/// A number parsed from JSON, accepting `4`, `0.5`, `"4"`, or `"13/8"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

fn parse_rational(text: &str) -> Result<f64, String> {
    let text = text.trim();
    if let Some((numer, denom)) = text.split_once('/') {
        let numer: f64 = numer
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in {text:?}"))?;
        let denom: f64 = denom
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in {text:?}"))?;
        if denom == 0.0 {
            return Err(format!("zero denominator in {text:?}"));
        }
        Ok(numer / denom)
    } else {
        text.parse()
            .map_err(|_| format!("expected a number or rational, got {text:?}"))
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct NumVisitor;
        impl Visitor<'_> for NumVisitor {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a number or a rational string like \"13/8\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                parse_rational(v).map(Num).map_err(E::custom)
            }
        }
        deserializer.deserialize_any(NumVisitor)
    }
}

fn to_f64(values: &[Num]) -> Vec<f64> {
    values.iter().map(|n| n.0).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub service_vectors: Vec<Vec<Num>>,
    pub rho: Vec<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalsKindSection {
    Uniform {
        rates: Option<Vec<Num>>,
    },
    Deterministic {
        rates: Option<Vec<Num>>,
    },
    Trace {
        path: PathBuf,
    },
    ModeSwitch {
        stable: Vec<Num>,
        unstable: Vec<Num>,
        #[serde(default = "default_period")]
        period: u64,
    },
}

fn default_period() -> u64 {
    500
}

#[derive(Debug, Deserialize)]
pub struct ArrivalsSection {
    #[serde(flatten)]
    pub kind: ArrivalsKindSection,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub integer_arrivals: bool,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    #[serde(default)]
    pub theta: Option<Vec<Num>>,
    #[serde(default)]
    pub d: Option<Vec<Num>>,
    #[serde(default)]
    pub arrivals: Option<ArrivalsSection>,
    #[serde(default)]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub initial_workloads: Option<Vec<Vec<Num>>>,
    #[serde(default)]
    pub stride: Option<u64>,
    #[serde(default)]
    pub tail_fraction: Option<f64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &PathBuf) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn service_set(&self) -> Result<ServiceSet, String> {
        let vectors = self
            .system
            .service_vectors
            .iter()
            .map(|row| ServiceVector::new(to_f64(row)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("system.service_vectors: {e}"))?;
        ServiceSet::new(vectors).map_err(|e| format!("system.service_vectors: {e}"))
    }

    pub fn rho(&self) -> Result<LoadVector, String> {
        LoadVector::new(to_f64(&self.system.rho)).map_err(|e| format!("system.rho: {e}"))
    }

    /// The fairness target, renormalized; warns on stderr when the raw
    /// entries were off normalization by more than 1e-9.
    pub fn theta(&self) -> Result<Option<FairnessTarget>, String> {
        let Some(raw) = &self.theta else {
            return Ok(None);
        };
        let raw = to_f64(raw);
        let sum: f64 = raw.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            eprintln!(
                "warning: theta sums to {sum}; normalizing (deviation {:.3e})",
                (sum - 1.0).abs()
            );
        }
        FairnessTarget::new(raw)
            .map(Some)
            .map_err(|e| format!("theta: {e}"))
    }

    pub fn weights(&self) -> Result<Option<WeightMatrix>, String> {
        let Some(raw) = &self.d else {
            return Ok(None);
        };
        WeightMatrix::new(to_f64(raw))
            .map(Some)
            .map_err(|e| format!("d: {e}"))
    }

    pub fn arrivals(&self) -> Result<Option<ArrivalModel>, String> {
        let Some(section) = &self.arrivals else {
            return Ok(None);
        };
        let default_rates = || to_f64(&self.system.rho);
        let kind = match &section.kind {
            ArrivalsKindSection::Uniform { rates } => ArrivalKind::Uniform {
                rates: rates.as_deref().map(to_f64).unwrap_or_else(default_rates),
            },
            ArrivalsKindSection::Deterministic { rates } => ArrivalKind::Deterministic {
                rates: rates.as_deref().map(to_f64).unwrap_or_else(default_rates),
            },
            ArrivalsKindSection::Trace { path } => ArrivalKind::Trace { path: path.clone() },
            ArrivalsKindSection::ModeSwitch {
                stable,
                unstable,
                period,
            } => ArrivalKind::ModeSwitch {
                stable: to_f64(stable),
                unstable: to_f64(unstable),
                period: *period,
            },
        };
        Ok(Some(ArrivalModel {
            kind,
            seed: section.seed,
            integer_arrivals: section.integer_arrivals,
        }))
    }

    pub fn initial_workloads(&self, q: usize) -> Vec<Vec<f64>> {
        match &self.initial_workloads {
            Some(list) if !list.is_empty() => list.iter().map(|row| to_f64(row)).collect(),
            _ => vec![vec![0.0; q]],
        }
    }

    /// Build the validated system with an explicit weight choice.
    pub fn system_with(&self, d: WeightMatrix) -> Result<SystemSpec, String> {
        maxweight::model::validate_system(self.service_set()?, self.rho()?, d)
            .map_err(|e| format!("system: {e}"))
    }
}
