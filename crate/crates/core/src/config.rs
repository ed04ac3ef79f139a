//! Run configuration: a TOML document with `[scenario]`, `[correlation]`,
//! `[fit]` and `[output]` tables. Physical keys carry their unit in the name.
//! Unknown keys are rejected.
//!
//! Documents are layered: built-in defaults, then an optional preset, then
//! an optional file, then `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::correlator::CorrelationConfig;
use crate::error::{Error, Result};
use crate::estimator::FitOptions;
use crate::photonsim::{DetectorSpec, FieldModel, ScenarioConfig};
use crate::quantities::{
    linewidth_from_wavelength_spread, Medium, Meters, Rate, Seconds, SourceSpec, Tick, Watts,
};
use crate::tagio::Quantization;

/// Built-in presets, `(name, TOML document)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("short-range", include_str!("../presets/short-range.toml")),
    ("long-range-1km", include_str!("../presets/long-range-1km.toml")),
    ("long-range-2km", include_str!("../presets/long-range-2km.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub efficiency: f64,
    pub jitter_fwhm_ps: f64,
    pub dead_time_ns: f64,
    pub dark_rate_hz: f64,
    pub saturation_rate_hz: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self::from(DetectorSpec::silicon_apd())
    }
}

impl From<DetectorSpec> for DetectorSection {
    fn from(d: DetectorSpec) -> Self {
        DetectorSection {
            efficiency: d.efficiency,
            jitter_fwhm_ps: d.jitter_fwhm * 1e12,
            dead_time_ns: d.dead_time * 1e9,
            dark_rate_hz: d.dark_rate,
            saturation_rate_hz: d.saturation_rate,
        }
    }
}

impl DetectorSection {
    pub fn spec(&self) -> Result<DetectorSpec> {
        let spec = DetectorSpec {
            efficiency: self.efficiency,
            jitter_fwhm: self.jitter_fwhm_ps * 1e-12,
            dead_time: self.dead_time_ns * 1e-9,
            dark_rate: self.dark_rate_hz,
            saturation_rate: self.saturation_rate_hz,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldModelName {
    Continuous,
    Stepped,
}

/// Source, geometry, optics and detectors. The spectral width is given by
/// exactly one of `coherence_time_ns`, `linewidth_hz` or
/// `wavelength_spread_nm`; the source flux by exactly one of
/// `photon_rate_hz` or `power_w`; the probe background by at most one of
/// `ambient_rate_probe_hz` or `probe_signal_fraction` (none means no
/// ambient light).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub seed: u64,
    pub duration_s: f64,
    pub distance_m: f64,
    pub refractive_index: f64,
    pub wavelength_nm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence_time_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linewidth_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength_spread_nm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub photon_rate_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
    pub split_ref: f64,
    pub split_probe: f64,
    pub probe_round_trip_transmission: f64,
    pub ambient_rate_ref_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambient_rate_probe_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_signal_fraction: Option<f64>,
    pub field_model: FieldModelName,
    /// Thinning ceiling of the continuous field model, in units of the mean rate.
    pub intensity_ceiling: f64,
    /// Grid spacing of the stepped field model; `τc/100` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_step_ps: Option<f64>,
    pub detector_ref: DetectorSection,
    pub detector_probe: DetectorSection,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            seed: 1,
            duration_s: 1.0,
            distance_m: 0.0,
            refractive_index: 1.0,
            wavelength_nm: 518.0,
            coherence_time_ns: Some(23.2),
            linewidth_hz: None,
            wavelength_spread_nm: None,
            photon_rate_hz: Some(1e7),
            power_w: None,
            split_ref: 0.04,
            split_probe: 0.92,
            probe_round_trip_transmission: 1.0,
            ambient_rate_ref_hz: 0.0,
            ambient_rate_probe_hz: None,
            probe_signal_fraction: None,
            field_model: FieldModelName::Continuous,
            intensity_ceiling: crate::photonsim::DEFAULT_INTENSITY_CEILING,
            field_step_ps: None,
            detector_ref: DetectorSection::default(),
            detector_probe: DetectorSection::default(),
        }
    }
}

fn exactly_one<T: Copy>(what: &str, options: &[(&str, Option<T>)]) -> Result<(usize, T)> {
    let set: Vec<_> = options.iter().enumerate().filter_map(|(i, (_, v))| v.map(|v| (i, v))).collect();
    match set.as_slice() {
        [one] => Ok(*one),
        _ => {
            let names: Vec<_> = options.iter().map(|(n, _)| *n).collect();
            Err(Error::Config(format!("{what}: set exactly one of {}", names.join(", "))))
        }
    }
}

impl ScenarioSection {
    pub fn source(&self) -> Result<SourceSpec> {
        let wavelength = Meters(self.wavelength_nm * 1e-9);
        let (which, width) = exactly_one(
            "spectral width",
            &[
                ("coherence_time_ns", self.coherence_time_ns),
                ("linewidth_hz", self.linewidth_hz),
                ("wavelength_spread_nm", self.wavelength_spread_nm),
            ],
        )?;
        let (flux_kind, flux) = exactly_one("source flux", &[("photon_rate_hz", self.photon_rate_hz), ("power_w", self.power_w)])?;
        let rate = Rate(if flux_kind == 0 { flux } else { 0.0 });
        let mut source = match which {
            0 => SourceSpec::new(wavelength, Seconds(width * 1e-9), rate)?,
            1 => SourceSpec::from_linewidth(wavelength, crate::quantities::Hertz(width), rate)?,
            _ => {
                let spread = Meters(width * 1e-9);
                let lw = linewidth_from_wavelength_spread(wavelength, spread)?;
                SourceSpec::from_linewidth(wavelength, lw, rate)?.with_wavelength_spread(spread)?
            }
        };
        if flux_kind == 1 {
            source = source.with_power(Watts(flux))?;
        }
        Ok(source)
    }

    pub fn to_scenario(&self) -> Result<ScenarioConfig> {
        let source = self.source()?;
        let mut cfg = ScenarioConfig::new(source, Meters(self.distance_m), Seconds(self.duration_s), self.seed);
        cfg.medium = Medium::new(self.refractive_index)?;
        cfg.split_ref = self.split_ref;
        cfg.split_probe = self.split_probe;
        cfg.probe_round_trip_transmission = self.probe_round_trip_transmission;
        cfg.ambient_rate_ref = self.ambient_rate_ref_hz;
        cfg.detector_ref = self.detector_ref.spec()?;
        cfg.detector_probe = self.detector_probe.spec()?;
        cfg.field_model = match self.field_model {
            FieldModelName::Continuous => FieldModel::Continuous {
                ceiling: self.intensity_ceiling,
            },
            FieldModelName::Stepped => FieldModel::Stepped,
        };
        if let Some(step) = self.field_step_ps {
            cfg.field_step = Seconds(step * 1e-12);
        }
        cfg.ambient_rate_probe = match (self.ambient_rate_probe_hz, self.probe_signal_fraction) {
            (None, None) => 0.0,
            (Some(rate), None) => rate,
            (None, Some(fraction)) => cfg.ambient_for_probe_signal_fraction(fraction)?,
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "probe background: set at most one of ambient_rate_probe_hz, probe_signal_fraction".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationSection {
    pub bin_width_ps: i64,
    pub window_start_ps: i64,
    pub window_end_ps: i64,
    /// Chunk length for parallel correlation; unchunked when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_ps: Option<i64>,
}

impl Default for CorrelationSection {
    fn default() -> Self {
        CorrelationSection {
            bin_width_ps: 1000,
            window_start_ps: -500_000,
            window_end_ps: 500_000,
            chunk_ps: None,
        }
    }
}

impl CorrelationSection {
    pub fn config(&self) -> Result<CorrelationConfig> {
        CorrelationConfig::new(Tick(self.bin_width_ps), Tick(self.window_start_ps), Tick(self.window_end_ps))
    }

    pub fn chunk(&self) -> Result<Option<Tick>> {
        match self.chunk_ps {
            Some(c) if c <= 0 => Err(Error::Config(format!("chunk_ps must be > 0, got {c}"))),
            c => Ok(c.map(Tick)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitOptions::<f64>::default();
        FitSection {
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> Result<FitOptions<f64>> {
        if self.max_iterations == 0 || !(self.tolerance >= 0.0) {
            return Err(Error::Config("fit needs max_iterations >= 1 and tolerance >= 0".into()));
        }
        Ok(FitOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            initial: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizationName {
    Exact,
    Rounded,
}

impl From<QuantizationName> for Quantization {
    fn from(q: QuantizationName) -> Self {
        match q {
            QuantizationName::Exact => Quantization::Exact,
            QuantizationName::Rounded => Quantization::Rounded,
        }
    }
}

/// Output file locations and tag file encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub resolution_ps: u64,
    pub quantization: QuantizationName,
    pub tags: PathBuf,
    pub truth: PathBuf,
    pub histogram: PathBuf,
    pub fit: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            resolution_ps: 1,
            quantization: QuantizationName::Exact,
            tags: "tags.bin".into(),
            truth: "truth.json".into(),
            histogram: "g2.csv".into(),
            fit: "fit.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub correlation: CorrelationSection,
    pub fit: FitSection,
    pub output: OutputSection,
}

fn parse_toml(text: &str, origin: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// literal, falling back to a plain string.
pub fn apply_override(doc: &mut Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key `{path}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut table = doc;
    for k in parents {
        let entry = table.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{k}` in `{path}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn preset_source(name: &str) -> Result<&'static str> {
        PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s).ok_or_else(|| {
            let known: Vec<_> = Self::preset_names().collect();
            Error::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::layered(Some(name), None, &[])
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_toml(text, "config")?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::layered(None, Some(path.as_ref()), &[])
    }

    fn from_table(table: Table) -> Result<Self> {
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Preset, then file, then overrides; missing keys take their defaults.
    pub fn layered(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = Table::new();
        if let Some(name) = preset {
            merge(&mut doc, parse_toml(Self::preset_source(name)?, name)?);
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            merge(&mut doc, parse_toml(&text, &path.display().to_string())?);
        }
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_table(doc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
