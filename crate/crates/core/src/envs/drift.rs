//! Environmental drift: shifted parameter sets and their sampling.
//!
//! Drift intensity is measured against a per-parameter range `[lo, hi]`. A
//! drift moves each ranged parameter away from its base value by a fraction
//! of the half-range `(hi - lo) / 2`:
//!
//! | intensity  | displacement / half-range |
//! |------------|---------------------------|
//! | `mild`     | (0, 0.25]                 |
//! | `moderate` | (0.25, 0.50]              |
//! | `severe`   | (0.50, 1.00]              |
//!
//! A displacement that would leave the range on both sides is clamped to the
//! roomier side, so a sampled drift never exceeds its band.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvKind, EnvParams, EnvSpec};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Mild,
    Moderate,
    Severe,
}

impl Intensity {
    /// Displacement band as fractions of the half-range, `(lower, upper]`.
    pub fn band(self) -> (f64, f64) {
        match self {
            Intensity::Mild => (0.0, 0.25),
            Intensity::Moderate => (0.25, 0.50),
            Intensity::Severe => (0.50, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Intensity::Mild => "mild",
            Intensity::Moderate => "moderate",
            Intensity::Severe => "severe",
        }
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Intensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mild" => Ok(Intensity::Mild),
            "moderate" => Ok(Intensity::Moderate),
            "severe" => Ok(Intensity::Severe),
            other => Err(Error::InvalidArgument(format!("unknown intensity `{other}`"))),
        }
    }
}

/// A shift from `base` to `shifted` parameters of one environment kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: EnvKind,
    pub intensity: Intensity,
    pub seed: u64,
    pub base: EnvParams,
    pub shifted: EnvParams,
}

impl DriftSpec {
    pub fn new(
        kind: EnvKind,
        base: EnvParams,
        shifted: EnvParams,
        intensity: Intensity,
        seed: u64,
    ) -> Result<Self> {
        let d = Self { kind, intensity, seed, base, shifted };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate(self.kind)?;
        self.shifted.validate(self.kind)?;
        let moved = self
            .kind
            .param_names()
            .iter()
            .any(|n| self.base.value(n).to_bits() != self.shifted.value(n).to_bits());
        if !moved {
            return Err(Error::InvalidArgument("drift leaves every parameter unchanged".into()));
        }
        Ok(())
    }

    /// The drifted environment: `original`'s limits and thresholds with the
    /// shifted parameters.
    pub fn apply(&self, original: &EnvSpec) -> Result<EnvSpec> {
        if original.kind != self.kind {
            return Err(Error::Schema(format!(
                "drift for {} applied to {} spec",
                self.kind, original.kind
            )));
        }
        original.with_params(self.shifted.clone())
    }

    pub fn from_spec(
        original: &EnvSpec,
        shifted: EnvParams,
        intensity: Intensity,
        seed: u64,
    ) -> Result<Self> {
        Self::new(original.kind, original.params.clone(), shifted.in_schema_order(original.kind), intensity, seed)
    }
}

/// Per-parameter `[lo, hi]` drift ranges for one environment kind.
/// Parameters without a range are never drifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DriftRanges {
    pub ranges: IndexMap<String, [f64; 2]>,
}

impl DriftRanges {
    /// Documented defaults; every default parameter value lies inside.
    pub fn defaults(kind: EnvKind) -> Self {
        let table: &[(&str, [f64; 2])] = match kind {
            EnvKind::CartPole => &[
                ("masspole", [0.05, 0.30]),
                ("lengthpole", [0.25, 1.00]),
                ("masscart", [0.50, 2.00]),
                ("friction", [0.0, 0.002]),
            ],
            EnvKind::MountainCar => &[
                ("force", [0.6e-3, 1.6e-3]),
                ("gravity", [1.5e-3, 4.5e-3]),
                ("goal_velocity", [0.0, 0.02]),
            ],
            EnvKind::Acrobot => &[
                ("link_length_1", [0.6, 1.6]),
                ("link_com_pos_1", [0.3, 0.8]),
                ("link_mass_1", [0.5, 2.0]),
                ("link_mass_2", [0.5, 2.0]),
            ],
        };
        Self { ranges: table.iter().map(|(n, r)| (n.to_string(), *r)).collect() }
    }

    fn validate(&self, kind: EnvKind, base: &EnvParams) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(Error::InvalidArgument("no drift ranges given".into()));
        }
        for (name, [lo, hi]) in &self.ranges {
            let b = base
                .get(name)
                .ok_or_else(|| Error::Schema(format!("{kind} has no parameter `{name}`")))?;
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "range for `{name}` is degenerate: [{lo}, {hi}]"
                )));
            }
            if b < *lo || b > *hi {
                return Err(Error::InvalidArgument(format!(
                    "base value {b} of `{name}` lies outside [{lo}, {hi}]"
                )));
            }
            let floor_ok = if kind.zero_allowed(name) { *lo >= 0.0 } else { *lo > 0.0 };
            if !floor_ok {
                return Err(Error::InvalidArgument(format!(
                    "range for `{name}` leaves the parameter's domain"
                )));
            }
        }
        Ok(())
    }
}

/// Samples `count` distinct drifts of `base` at the given intensity.
pub fn sample_drifts(
    kind: EnvKind,
    base: &EnvParams,
    ranges: &DriftRanges,
    intensity: Intensity,
    count: usize,
    seed: u64,
) -> Result<Vec<DriftSpec>> {
    base.validate(kind)?;
    ranges.validate(kind, base)?;
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let base = base.in_schema_order(kind);
    let (lower, upper) = intensity.band();
    let mut rng = seed::rng(seed::derive(seed, "drifts"));
    let mut out: Vec<DriftSpec> = Vec::with_capacity(count);
    let mut index = 0u64;
    while out.len() < count {
        let mut shifted = base.clone();
        for (name, &[lo, hi]) in &ranges.ranges {
            let b = base.value(name);
            let half = (hi - lo) / 2.0;
            // (lower, upper]: flip a [0, 1) draw so the band's top is reachable.
            let frac = upper - rng.gen::<f64>() * (upper - lower);
            let d = frac * half;
            let (room_up, room_down) = (hi - b, b - lo);
            let up = match (room_up >= d, room_down >= d) {
                (true, true) => rng.gen::<bool>(),
                (true, false) => true,
                (false, true) => false,
                (false, false) => room_up >= room_down,
            };
            let v = if up { (b + d).min(hi) } else { (b - d).max(lo) };
            shifted.set(name, v)?;
        }
        let drift_seed = seed::derive_indexed(seed, "drift", index);
        index += 1;
        let Ok(drift) = DriftSpec::new(kind, base.clone(), shifted, intensity, drift_seed) else {
            continue;
        };
        if out.iter().any(|d| d.shifted == drift.shifted) {
            continue;
        }
        out.push(drift);
    }
    Ok(out)
}

const DRIFT_FILE_FORMAT: &str = "healrl-drifts";
const DRIFT_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DriftFile {
    format: String,
    version: u32,
    #[serde(default, rename = "drift")]
    drifts: Vec<DriftSpec>,
}

/// Renders drifts as the TOML drift-file format (one `[[drift]]` table per
/// drift, in order; a drift's id is its position).
pub fn drifts_to_toml(drifts: &[DriftSpec]) -> Result<String> {
    let file = DriftFile {
        format: DRIFT_FILE_FORMAT.into(),
        version: DRIFT_FILE_VERSION,
        drifts: drifts.to_vec(),
    };
    toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))
}

pub fn drifts_from_toml(text: &str) -> Result<Vec<DriftSpec>> {
    let file: DriftFile = toml::from_str(text).map_err(|e| Error::Corrupt(format!("drift file: {e}")))?;
    if file.format != DRIFT_FILE_FORMAT {
        return Err(Error::Corrupt(format!("drift file: unexpected format `{}`", file.format)));
    }
    if file.version == 0 || file.version > DRIFT_FILE_VERSION {
        return Err(Error::Version { found: file.version, supported: DRIFT_FILE_VERSION });
    }
    for d in &file.drifts {
        d.validate()?;
    }
    Ok(file
        .drifts
        .into_iter()
        .map(|d| DriftSpec {
            base: d.base.in_schema_order(d.kind),
            shifted: d.shifted.in_schema_order(d.kind),
            ..d
        })
        .collect())
}

pub fn save_drifts(path: &Path, drifts: &[DriftSpec]) -> Result<()> {
    std::fs::write(path, drifts_to_toml(drifts)?)?;
    Ok(())
}

pub fn load_drifts(path: &Path) -> Result<Vec<DriftSpec>> {
    drifts_from_toml(&std::fs::read_to_string(path)?)
}
