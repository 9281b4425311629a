//! Flat `key = value` run configuration.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. A
//! `preset` fills in defaults that later keys override regardless of their
//! position in the file. Rates are in MHz (converted to 2π·MHz) for
//! `units = physical` and in units of c/L for `units = natural`; geometry
//! keys (`z_min`, `z_max`, `medium_start`, `pulse_center`, `dz`) are in units
//! of the medium length and `t_end` in units of L/c.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CitError, Result};
use crate::params::{
    mhz_to_rate, PulseShape, PulseSpec, SystemParams, UnitSystem, DEFAULT_GAMMA_MHZ,
    SPEED_OF_LIGHT_M_PER_US,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    GroupVelocityTable,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    OracleValidate,
    Conditions,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::GroupVelocityTable,
        Scenario::Fig4,
        Scenario::Fig5,
        Scenario::Fig6,
        Scenario::Fig7,
        Scenario::OracleValidate,
        Scenario::Conditions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::GroupVelocityTable => "group_velocity_table",
            Scenario::Fig4 => "fig4",
            Scenario::Fig5 => "fig5",
            Scenario::Fig6 => "fig6",
            Scenario::Fig7 => "fig7",
            Scenario::OracleValidate => "oracle_validate",
            Scenario::Conditions => "conditions",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scenario '{s}'"))
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "scenario",
    "preset",
    "units",
    "G_MHz",
    "gn_MHz",
    "gamma_MHz",
    "kappa_MHz",
    "cavity_damping",
    "OD",
    "L",
    "Tp_us",
    "nbar",
    "output_dir",
    "threads",
    "seed",
    "z_min",
    "z_max",
    "n_points",
    "dz",
    "courant",
    "t_end",
    "medium_start",
    "pulse_center",
    "sample_every",
    "snapshot_every",
    "heatmap_stride",
    "ratios",
    "n_max",
];

pub const PRESETS: &[&str] = &["fig6", "fig7", "conditions"];

/// Preset entries, applied before the file's own keys.
fn preset_entries(name: &str) -> Option<&'static [(&'static str, &'static str)]> {
    Some(match name {
        // G = g√n = 500 c/L, Gaussian centred at z = 2.
        "fig6" => &[
            ("units", "natural"),
            ("G_MHz", "500"),
            ("gn_MHz", "500"),
            ("gamma_MHz", "100"),
            ("Tp_us", "0.7071067811865476"),
            ("z_min", "0"),
            ("z_max", "12"),
            ("n_points", "1024"),
            ("medium_start", "4.5"),
            ("pulse_center", "2"),
            ("t_end", "8"),
            ("courant", "0.5"),
            ("snapshot_every", "100"),
        ],
        // Weak coherent pulse, n̄ = 0.25, in a medium with L/c = 0.5 µs.
        "fig7" => &[
            ("units", "physical"),
            ("G_MHz", "3"),
            ("gamma_MHz", "3"),
            ("kappa_MHz", "0.1"),
            ("OD", "50"),
            ("L", "149.896229"),
            ("Tp_us", "1"),
            ("nbar", "0.25"),
            ("z_min", "-12"),
            ("z_max", "4"),
            ("dz", "0.02"),
            ("pulse_center", "-7"),
            ("t_end", "19"),
            ("courant", "0.5"),
            ("sample_every", "4"),
            ("snapshot_every", "200"),
            ("heatmap_stride", "8"),
        ],
        // Cooperativity 15 against OD 50.
        "conditions" => &[
            ("units", "physical"),
            ("G_MHz", "3"),
            ("gamma_MHz", "6"),
            ("kappa_MHz", "0.1"),
            ("OD", "50"),
            ("L", "149.896229"),
            ("Tp_us", "1"),
            ("nbar", "0.25"),
        ],
        _ => return None,
    })
}

/// Spatial and temporal resolution of solver scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub z_min: f64,
    pub z_max: f64,
    /// Explicit point count; otherwise derived from `dz`.
    pub n_points: Option<usize>,
    pub dz: Option<f64>,
    pub courant: f64,
    pub t_end: f64,
    pub medium_start: f64,
    pub sample_every: usize,
    pub snapshot_every: usize,
    pub heatmap_stride: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            z_min: -4.0,
            z_max: 4.0,
            n_points: None,
            dz: None,
            courant: 0.5,
            t_end: 8.0,
            medium_start: 0.0,
            sample_every: 1,
            snapshot_every: 0,
            heatmap_stride: 1,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> usize {
        match (self.n_points, self.dz) {
            (Some(n), _) => n,
            (None, Some(dz)) => {
                crate::grid::fft_size_at_least(((self.z_max - self.z_min) / dz).ceil() as usize)
            }
            (None, None) => 512,
        }
    }
}

/// Parsed and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub preset: Option<String>,
    /// Parameters as given (physical or natural).
    pub params: SystemParams,
    /// Optical depth when it fixed g√n.
    pub optical_depth: Option<f64>,
    /// Pulse in the units of `params`; `center` is in units of L.
    pub pulse: PulseSpec,
    pub grid: GridSpec,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    /// Reserved; every scenario is deterministic.
    pub seed: u64,
    pub ratios: Vec<f64>,
    pub n_max: usize,
    /// Whether κ enters the propagation. When off, κ only feeds the
    /// condition report.
    pub cavity_damping: bool,
    /// Effective key/value pairs after presets, for the manifest.
    pub entries: BTreeMap<String, String>,
}

fn key_error(key: &str, reason: impl Into<String>) -> CitError {
    CitError::ConfigKey {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Splits the text into key/value pairs, rejecting unknown and repeated keys.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CitError::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(CitError::Config(format!("line {}: missing key", lineno + 1)));
        }
        if !KEYS.contains(&key) {
            return Err(key_error(key, "unknown key"));
        }
        if out.iter().any(|(k, _)| k == key) {
            return Err(key_error(key, "given more than once"));
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

fn number<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| key_error(key, format!("cannot parse '{v}'"))))
        .transpose()
}

fn finite(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match number::<f64>(map, key)? {
        Some(x) if !x.is_finite() => Err(key_error(key, "must be finite")),
        other => Ok(other),
    }
}

fn positive(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match finite(map, key)? {
        Some(x) if x <= 0.0 => Err(key_error(key, "must be > 0")),
        other => Ok(other),
    }
}

fn non_negative(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match finite(map, key)? {
        Some(x) if x < 0.0 => Err(key_error(key, "must be >= 0")),
        other => Ok(other),
    }
}

fn count(map: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>> {
    match number::<usize>(map, key)? {
        Some(0) => Err(key_error(key, "must be >= 1")),
        other => Ok(other),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let own = parse_entries(text)?;
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        let preset = own.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.clone());
        if let Some(name) = &preset {
            let entries =
                preset_entries(name).ok_or_else(|| key_error("preset", format!("unknown preset '{name}'")))?;
            for (k, v) in entries {
                map.insert(k.to_string(), v.to_string());
            }
        }
        for (k, v) in own {
            map.insert(k, v);
        }
        Self::from_entries(map, preset)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CitError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn from_entries(map: BTreeMap<String, String>, preset: Option<String>) -> Result<Self> {
        let scenario: Scenario = map
            .get("scenario")
            .ok_or_else(|| key_error("scenario", "required"))?
            .parse()
            .map_err(|e: String| key_error("scenario", e))?;
        let units = match map.get("units").map(String::as_str) {
            None | Some("natural") => UnitSystem::Natural,
            Some("physical") => UnitSystem::Physical,
            Some(other) => return Err(key_error("units", format!("expected physical or natural, got '{other}'"))),
        };
        let rate = |x: f64| match units {
            UnitSystem::Physical => mhz_to_rate(x),
            UnitSystem::Natural => x,
        };
        let big_g = rate(positive(&map, "G_MHz")?.unwrap_or(1.0));
        let gamma = rate(non_negative(&map, "gamma_MHz")?.unwrap_or(match units {
                UnitSystem::Physical => DEFAULT_GAMMA_MHZ,
                UnitSystem::Natural => 0.0,
            }),
        );
        let kappa = rate(non_negative(&map, "kappa_MHz")?.unwrap_or(0.0));
        let (c, length) = match units {
            UnitSystem::Physical => (SPEED_OF_LIGHT_M_PER_US, positive(&map, "L")?.unwrap_or(1.0)),
            UnitSystem::Natural => {
                if let Some(l) = positive(&map, "L")? {
                    if l != 1.0 {
                        return Err(key_error("L", "natural units fix L = 1"));
                    }
                }
                (1.0, 1.0)
            }
        };
        let od = positive(&map, "OD")?;
        let gn = non_negative(&map, "gn_MHz")?;
        let probe = match (gn, od) {
            (Some(_), Some(_)) => return Err(key_error("OD", "conflicts with gn_MHz; give one of them")),
            (Some(g), None) => rate(g),
            (None, Some(od)) => {
                if !(gamma > 0.0) {
                    return Err(key_error("OD", "needs gamma_MHz > 0 to fix g√n"));
                }
                (od * gamma * c / length).sqrt()
            }
            (None, None) => big_g,
        };
        let params = SystemParams {
            cavity_coupling: big_g,
            probe_coupling: probe,
            gamma,
            kappa,
            c,
            length,
            units,
        };
        params.validate().map_err(|e| CitError::Config(e.to_string()))?;

        let t_p = positive(&map, "Tp_us")?.unwrap_or(1.0);
        let nbar = non_negative(&map, "nbar")?.unwrap_or(0.25);
        let pulse = PulseSpec {
            shape: PulseShape::Gaussian,
            t_p,
            center: finite(&map, "pulse_center")?.unwrap_or(-2.0),
            mean_photons: nbar,
        };

        let d = GridSpec::default();
        let grid = GridSpec {
            z_min: finite(&map, "z_min")?.unwrap_or(d.z_min),
            z_max: finite(&map, "z_max")?.unwrap_or(d.z_max),
            n_points: count(&map, "n_points")?,
            dz: positive(&map, "dz")?,
            courant: positive(&map, "courant")?.unwrap_or(d.courant),
            t_end: positive(&map, "t_end")?.unwrap_or(d.t_end),
            medium_start: finite(&map, "medium_start")?.unwrap_or(d.medium_start),
            sample_every: count(&map, "sample_every")?.unwrap_or(d.sample_every),
            snapshot_every: number::<usize>(&map, "snapshot_every")?.unwrap_or(d.snapshot_every),
            heatmap_stride: count(&map, "heatmap_stride")?.unwrap_or(d.heatmap_stride),
        };
        if !(grid.z_max > grid.z_min) {
            return Err(key_error("z_max", "must exceed z_min"));
        }
        if grid.n_points.is_some_and(|n| n < 8) {
            return Err(key_error("n_points", "must be >= 8"));
        }
        if grid.courant > 1.0 {
            return Err(key_error("courant", "must be <= 1"));
        }

        let ratios = match map.get("ratios") {
            None => vec![0.1, 1.0, 10.0],
            Some(v) => v
                .split(',')
                .map(|x| match x.trim().parse::<f64>() {
                    Ok(r) if r > 0.0 && r.is_finite() => Ok(r),
                    _ => Err(key_error("ratios", format!("'{}' is not a positive number", x.trim()))),
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if ratios.is_empty() {
            return Err(key_error("ratios", "empty list"));
        }
        let n_max = count(&map, "n_max")?.unwrap_or(match scenario {
            Scenario::Fig4 => 30,
            _ => 100,
        });
        if n_max > 150 {
            return Err(key_error("n_max", "must be <= 150"));
        }
        let cavity_damping = match map.get("cavity_damping").map(String::as_str) {
            None | Some("off") => false,
            Some("on") => true,
            Some(other) => return Err(key_error("cavity_damping", format!("expected on or off, got '{other}'"))),
        };
        let threads = count(&map, "threads")?;
        let seed = number::<u64>(&map, "seed")?.unwrap_or(0);
        let output_dir = PathBuf::from(map.get("output_dir").cloned().unwrap_or_else(|| "out".into()));
        if output_dir.as_os_str().is_empty() {
            return Err(key_error("output_dir", "must not be empty"));
        }
        Ok(ScenarioConfig {
            scenario,
            preset,
            params,
            optical_depth: od,
            pulse,
            grid,
            output_dir,
            threads,
            seed,
            ratios,
            n_max,
            cavity_damping,
            entries: map,
        })
    }

    /// Natural-unit parameters for the solvers, with κ dropped unless
    /// `cavity_damping = on`.
    pub fn propagation(&self) -> (SystemParams, PulseSpec) {
        let (mut p, pulse) = self.natural();
        if !self.cavity_damping {
            p.kappa = 0.0;
        }
        (p, pulse)
    }

    /// Parameters with `c = L = 1` and the pulse duration in units of L/c.
    pub fn natural(&self) -> (SystemParams, PulseSpec) {
        let p = self.params.nondimensionalize();
        let mut pulse = self.pulse;
        pulse.t_p = self.pulse.t_p / self.params.transit_time();
        (p, pulse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn comments_blank_lines_and_overrides() {
        let cfg = ScenarioConfig::parse(
            "# header\n\nscenario = fig6   # trailing\npreset = fig6\nn_points = 256\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::Fig6);
        assert_eq!(cfg.grid.n_points, Some(256));
        assert_eq!(cfg.params.cavity_coupling, 500.0);
        assert_eq!(cfg.params.units, UnitSystem::Natural);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ScenarioConfig::parse("scenario = fig4\nG_Mhz = 3\n").unwrap_err();
        match err {
            CitError::ConfigKey { key, .. } => assert_eq!(key, "G_Mhz"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err_key("scenario = fig4\nnbar = lots\n"), "nbar");
        assert_eq!(err_key("scenario = fig4\nnbar = 1\nnbar = 2\n"), "nbar");
        assert_eq!(err_key("scenario = fig9\n"), "scenario");
        assert_eq!(err_key("nbar = 1\n"), "scenario");
        assert_eq!(err_key("scenario = fig4\nunits = imperial\n"), "units");
        assert_eq!(err_key("scenario = fig4\npreset = fig8\n"), "preset");
        assert_eq!(err_key("scenario = fig4\ngn_MHz = 3\nOD = 5\n"), "OD");
        assert_eq!(err_key("scenario = fig4\nratios = 1, -2\n"), "ratios");
        assert_eq!(err_key("scenario = fig4\nTp_us = 0\n"), "Tp_us");
        assert_eq!(err_key("scenario = fig4\ncavity_damping = maybe\n"), "cavity_damping");
    }

    #[test]
    fn cavity_loss_enters_propagation_only_on_request() {
        let cfg = ScenarioConfig::parse("scenario = fig7\npreset = fig7\n").unwrap();
        assert!(cfg.natural().0.kappa > 0.0);
        assert_eq!(cfg.propagation().0.kappa, 0.0);
        let cfg = ScenarioConfig::parse("scenario = fig7\npreset = fig7\ncavity_damping = on\n").unwrap();
        assert_eq!(cfg.propagation().0.kappa, cfg.natural().0.kappa);
    }

    fn err_key(text: &str) -> String {
        match ScenarioConfig::parse(text).unwrap_err() {
            CitError::ConfigKey { key, .. } => key,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line() {
        assert!(matches!(
            ScenarioConfig::parse("scenario fig4\n"),
            Err(CitError::Config(_))
        ));
    }

    #[test]
    fn optical_depth_fixes_probe_coupling() {
        let cfg = ScenarioConfig::parse("scenario = conditions\npreset = fig7\n").unwrap();
        let d = crate::params::derive_quantities(&cfg.params).unwrap();
        assert!((d.od - 50.0).abs() < 1e-9);
        assert!((cfg.params.transit_time() - 0.5).abs() < 1e-9);
        let (p, pulse) = cfg.natural();
        assert!((pulse.t_p - 2.0).abs() < 1e-9);
        assert!((p.cavity_coupling - 2.0 * std::f64::consts::PI * 1.5).abs() < 1e-6);
    }

    #[test]
    fn conditions_preset_cooperativity() {
        let cfg = ScenarioConfig::parse("scenario = conditions\npreset = conditions\n").unwrap();
        let d = crate::params::derive_quantities(&cfg.params).unwrap();
        assert!((d.cooperativity - 15.0).abs() < 1e-9);
    }

    #[test]
    fn unicode_values_are_rejected_by_key() {
        assert_eq!(err_key("scenario = fig4\noutput_dir = x\nG_MHz = ３\n"), "G_MHz");
    }

    proptest! {
        #[test]
        fn parser_never_panics(text in "\\PC*") {
            let _ = ScenarioConfig::parse(&text);
        }

        #[test]
        fn numeric_round_trip(g in 0.01f64..1e3, n in 8usize..4096) {
            let cfg = ScenarioConfig::parse(&format!(
                "scenario = fig6\nunits = natural\nG_MHz = {g}\nn_points = {n}\n"
            )).unwrap();
            prop_assert_eq!(cfg.params.cavity_coupling, g);
            prop_assert_eq!(cfg.grid.points(), n);
        }
    }
}
