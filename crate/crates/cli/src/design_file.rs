//! JSON design file: a spec to solve, or a pre-solved boundary, or both.

use std::fs;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use seqtrial_core::design::{solve_design, AlphaPolicy, DesignSpec, SolvedDesign};
use seqtrial_core::Design;

use crate::CliError;

/// Critical value that may be infinite; JSON has no infinity literal, so
/// `"inf"`, `"-inf"` and `null` (= +∞, never stop) are accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound(pub f64);

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Bound;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number, \"inf\", \"-inf\" or null")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Bound, E> {
                Ok(Bound(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Bound, E> {
                Ok(Bound(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Bound, E> {
                Ok(Bound(v as f64))
            }
            fn visit_unit<E: de::Error>(self) -> Result<Bound, E> {
                Ok(Bound(f64::INFINITY))
            }
            fn visit_none<E: de::Error>(self) -> Result<Bound, E> {
                Ok(Bound(f64::INFINITY))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Bound, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" | "+infinity" => Ok(Bound(f64::INFINITY)),
                    "-inf" | "-infinity" => Ok(Bound(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundaries {
    pub n: Vec<u64>,
    pub c: Vec<Bound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternatives: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundaries: Option<Boundaries>,
}

impl DesignFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        // serde_json errors carry "at line L column C"
        let file: DesignFile =
            serde_json::from_str(text).map_err(|e| CliError::input(format!("malformed design JSON: {e}")))?;
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.k == 0 {
            return Err(CliError::input("k must be at least 1"));
        }
        if let Some(alts) = &self.alternatives {
            if alts.len() != self.k {
                return Err(CliError::input(format!(
                    "alternatives has {} entries but k = {}",
                    alts.len(),
                    self.k
                )));
            }
        }
        if let Some(b) = &self.boundaries {
            if b.n.len() != self.k || b.c.len() != self.k {
                return Err(CliError::input(format!(
                    "boundaries need k = {} entries each, got n: {}, c: {}",
                    self.k,
                    b.n.len(),
                    b.c.len()
                )));
            }
        }
        if self.alternatives.is_none() && self.boundaries.is_none() {
            return Err(CliError::input("design file needs alternatives or boundaries"));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<DesignSpec, CliError> {
        let alts = self
            .alternatives
            .clone()
            .ok_or_else(|| CliError::input("design command needs alternatives"))?;
        let alpha = self.alpha.ok_or_else(|| CliError::input("alpha is required"))?;
        let power = self.power.ok_or_else(|| CliError::input("power is required"))?;
        let spec = match self.alpha0_override {
            Some(a0) => DesignSpec::with_common_alpha(alpha, power, alts, a0),
            None => DesignSpec::new(alpha, power, alts, AlphaPolicy::EqualConditional),
        };
        spec.map_err(CliError::from)
    }

    pub fn solve(&self) -> Result<SolvedDesign, CliError> {
        solve_design(&self.spec()?).map_err(CliError::from)
    }

    /// Boundaries win when present, so solved output round-trips unchanged.
    pub fn design(&self) -> Result<Design, CliError> {
        match &self.boundaries {
            Some(b) => Design::new(b.n.clone(), b.c.iter().map(|c| c.0).collect()).map_err(CliError::from),
            None => Ok(self.solve()?.design),
        }
    }

    pub fn with_design(&self, design: &Design) -> Self {
        Self {
            boundaries: Some(Boundaries {
                n: design.sizes().to_vec(),
                c: design.critical_values().iter().map(|&c| Bound(c)).collect(),
            }),
            ..self.clone()
        }
    }
}
