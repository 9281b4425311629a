//! Physical parameters, unit handling and the derived quantities that decide
//! whether a number-state filter can work for a given medium and cavity.
//!
//! Physical units are rad/µs for rates, metres for lengths, µs for times and
//! m/µs for the speed of light. Natural units set `c = L = 1`; the solvers
//! only ever see natural units.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{CitError, Result};

/// Speed of light in m/µs.
pub const SPEED_OF_LIGHT_M_PER_US: f64 = 299.792458;

/// Default atomic polarization decay for physical presets, 2π·3 MHz.
pub const DEFAULT_GAMMA_MHZ: f64 = 3.0;

/// Converts a frequency given in MHz (cycles) to an angular rate in rad/µs.
pub fn mhz_to_rate(mhz: f64) -> f64 {
    2.0 * PI * mhz
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitSystem {
    /// rad/µs, metres, µs.
    Physical,
    /// c = L = 1.
    Natural,
}

/// Couplings, decay rates and geometry of the medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Single-atom cavity coupling G.
    pub cavity_coupling: f64,
    /// Collective probe coupling g√n.
    pub probe_coupling: f64,
    /// Polarization decay γ of the excited state.
    pub gamma: f64,
    /// Cavity decay κ (zero disables cavity loss).
    pub kappa: f64,
    /// Vacuum speed of light.
    pub c: f64,
    /// Medium length L.
    pub length: f64,
    pub units: UnitSystem,
}

impl SystemParams {
    /// Natural-unit parameters with `c = L = 1` and no cavity loss.
    pub fn natural(cavity_coupling: f64, probe_coupling: f64, gamma: f64) -> Self {
        SystemParams {
            cavity_coupling,
            probe_coupling,
            gamma,
            kappa: 0.0,
            c: 1.0,
            length: 1.0,
            units: UnitSystem::Natural,
        }
    }

    /// Physical parameters where g√n is fixed by the requested optical depth,
    /// `OD = L g²n / (γ c)`.
    pub fn physical_from_optical_depth(
        cavity_coupling: f64,
        optical_depth: f64,
        gamma: f64,
        kappa: f64,
        length: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(CitError::Domain(
                "gamma must be positive to fix g√n from the optical depth".into(),
            ));
        }
        if !(optical_depth > 0.0) {
            return Err(CitError::Domain(format!(
                "optical depth must be positive, got {optical_depth}"
            )));
        }
        let c = SPEED_OF_LIGHT_M_PER_US;
        let p = SystemParams {
            cavity_coupling,
            probe_coupling: (optical_depth * gamma * c / length).sqrt(),
            gamma,
            kappa,
            c,
            length,
            units: UnitSystem::Physical,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.cavity_coupling,
            self.probe_coupling,
            self.gamma,
            self.kappa,
            self.c,
            self.length,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(CitError::Domain("parameters must be finite".into()));
        }
        if !(self.cavity_coupling > 0.0) {
            return Err(CitError::Domain("cavity coupling G must be > 0".into()));
        }
        if self.probe_coupling < 0.0 || self.gamma < 0.0 || self.kappa < 0.0 {
            return Err(CitError::Domain("rates must be non-negative".into()));
        }
        if !(self.c > 0.0) || !(self.length > 0.0) {
            return Err(CitError::Domain("c and L must be positive".into()));
        }
        Ok(())
    }

    /// Ratio r = G / (g√n).
    pub fn ratio(&self) -> f64 {
        self.cavity_coupling / self.probe_coupling
    }

    /// Time for light to cross the medium in vacuum, L/c.
    pub fn transit_time(&self) -> f64 {
        self.length / self.c
    }

    /// Rescales to `c = L = 1`: every rate is multiplied by L/c.
    pub fn nondimensionalize(&self) -> SystemParams {
        let s = self.transit_time();
        SystemParams {
            cavity_coupling: self.cavity_coupling * s,
            probe_coupling: self.probe_coupling * s,
            gamma: self.gamma * s,
            kappa: self.kappa * s,
            c: 1.0,
            length: 1.0,
            units: UnitSystem::Natural,
        }
    }

    /// Inverse of [`nondimensionalize`](Self::nondimensionalize) for a given
    /// physical `c` and `L`.
    pub fn to_physical(&self, c: f64, length: f64) -> SystemParams {
        let s = (self.length / self.c) / (length / c);
        SystemParams {
            cavity_coupling: self.cavity_coupling * s,
            probe_coupling: self.probe_coupling * s,
            gamma: self.gamma * s,
            kappa: self.kappa * s,
            c,
            length,
            units: UnitSystem::Physical,
        }
    }

    /// One- and two-excitation group velocities as fractions of c.
    pub fn group_velocities(&self) -> (f64, f64) {
        let x = self.cavity_coupling.powi(2);
        let y = self.probe_coupling.powi(2);
        let v1 = x / (x + y);
        let v2 = (2.0 * x * x + 2.0 * x * y) / (y * y + 4.0 * x * y + 2.0 * x * x);
        (v1, v2)
    }
}

/// Quantities that follow from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub od: f64,
    pub l_abs: f64,
    pub omega_tr: f64,
    /// Fractions of c.
    pub v1: f64,
    pub v2: f64,
    /// L(1/v1 − 1/v2) from the exact velocities.
    pub delta_tau_12: f64,
    /// Weak-coupling estimate γ·OD/(2G²).
    pub delta_tau_12_approx: f64,
    /// G²/(γκ); infinite without cavity loss.
    pub cooperativity: f64,
}

pub fn derive_quantities(p: &SystemParams) -> Result<DerivedQuantities> {
    p.validate()?;
    if !(p.gamma > 0.0) {
        return Err(CitError::Domain(
            "optical depth and transparency width need gamma > 0".into(),
        ));
    }
    let g2n = p.probe_coupling.powi(2);
    let big_g2 = p.cavity_coupling.powi(2);
    let l_abs = p.gamma * p.c / g2n;
    let od = p.length / l_abs;
    if !(od > 0.0) || !od.is_finite() {
        return Err(CitError::Domain(format!("optical depth must be positive, got {od}")));
    }
    let omega_tr = big_g2 / (p.gamma * od.sqrt());
    let (v1, v2) = p.group_velocities();
    // 1/v1 - 1/v2 in cancellation-free form.
    let delta_tau_12 = p.transit_time() * g2n * g2n / (2.0 * big_g2 * (big_g2 + g2n));
    let cooperativity = if p.kappa > 0.0 {
        big_g2 / (p.gamma * p.kappa)
    } else {
        f64::INFINITY
    };
    Ok(DerivedQuantities {
        od,
        l_abs,
        omega_tr,
        v1,
        v2,
        delta_tau_12,
        delta_tau_12_approx: p.gamma * od / (2.0 * big_g2),
        cooperativity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Gaussian,
}

/// Incident pulse. The field amplitude is `exp(-((z - center)/(c·t_p))²)`, so
/// `t_p` is the 1/e half-width of the amplitude in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub shape: PulseShape,
    pub t_p: f64,
    /// Initial position of the pulse centre.
    pub center: f64,
    /// n̄ = |α|².
    pub mean_photons: f64,
}

impl PulseSpec {
    pub fn gaussian(t_p: f64, center: f64, mean_photons: f64) -> Result<Self> {
        let p = PulseSpec {
            shape: PulseShape::Gaussian,
            t_p,
            center,
            mean_photons,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_p > 0.0) || !self.t_p.is_finite() {
            return Err(CitError::Domain("pulse duration must be > 0".into()));
        }
        if !(self.mean_photons >= 0.0) || !self.center.is_finite() {
            return Err(CitError::Domain("mean photon number must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub strong_coupling: bool,
    pub adiabatic: bool,
    /// T_p·ω_tr.
    pub adiabaticity: f64,
    /// Δτ₁₂ / T_p.
    pub separability_ratio: f64,
    /// ½√OD.
    pub separability_bound: f64,
    /// Δτ₁₂ / T_p > 1.
    pub separable: bool,
    /// C > OD.
    pub cavity_ok: bool,
    /// κ < v1/L in the same units as κ.
    pub cavity_lifetime_ok: bool,
    pub cooperativity: f64,
    pub od: f64,
    pub messages: Vec<String>,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

pub fn check_conditions(p: &SystemParams, pulse: &PulseSpec) -> Result<ConditionReport> {
    let d = derive_quantities(p)?;
    pulse.validate()?;
    let adiabaticity = pulse.t_p * d.omega_tr;
    let separability_ratio = d.delta_tau_12 / pulse.t_p;
    let separability_bound = 0.5 * d.od.sqrt();
    let kappa_limit = d.v1 * p.c / p.length;
    let strong_coupling = d.cooperativity > 1.0;
    let adiabatic = adiabaticity > 1.0;
    let separable = separability_ratio > 1.0;
    let cavity_ok = d.cooperativity > d.od;
    let cavity_lifetime_ok = p.kappa < kappa_limit;
    let messages = vec![
        format!(
            "strong coupling C > 1: C = {:.4} ... {}",
            d.cooperativity,
            verdict(strong_coupling)
        ),
        format!(
            "adiabaticity T_p*omega_tr > 1: {:.4} ... {}",
            adiabaticity,
            verdict(adiabatic)
        ),
        format!(
            "separability 1 < dtau12/T_p = {:.4} < sqrt(OD)/2 = {:.4} ... {}",
            separability_ratio,
            separability_bound,
            verdict(separable && separability_ratio < separability_bound)
        ),
        format!(
            "cavity C > OD: C = {:.4}, OD = {:.4} ... {}",
            d.cooperativity,
            d.od,
            verdict(cavity_ok)
        ),
        format!(
            "cavity lifetime kappa < v1/L: kappa = {:.4e}, v1/L = {:.4e} ... {}",
            p.kappa,
            kappa_limit,
            verdict(cavity_lifetime_ok)
        ),
    ];
    Ok(ConditionReport {
        strong_coupling,
        adiabatic,
        adiabaticity,
        separability_ratio,
        separability_bound,
        separable,
        cavity_ok,
        cavity_lifetime_ok,
        cooperativity: d.cooperativity,
        od: d.od,
        messages,
    })
}
