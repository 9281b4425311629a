//! Uniform periodic grids, the smoothed medium profile and spectral
//! translation shared by both propagation solvers.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{CitError, Result};

/// Weights below this are treated as exactly zero, above `1 - CLIP` as one.
const CLIP: f64 = 1e-12;

/// Spatial profile of the atomic density, normalized to one inside the medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Medium {
    /// Atoms everywhere.
    Uniform,
    /// Slab `[z_in, z_out]` with tanh edges of length scale `ramp`.
    /// Each edge sits `ramp / 2` outside the nominal boundary so that the
    /// coupling integral `∫ w² dz` equals `z_out - z_in`.
    Slab { z_in: f64, z_out: f64, ramp: f64 },
    /// No atoms.
    Vacuum,
}

impl Medium {
    pub fn weight(&self, z: f64) -> f64 {
        match *self {
            Medium::Uniform => 1.0,
            Medium::Vacuum => 0.0,
            Medium::Slab { z_in, z_out, ramp } => {
                let a = z_in - 0.5 * ramp;
                let b = z_out + 0.5 * ramp;
                let w = 0.5 * (((z - a) / ramp).tanh() - ((z - b) / ramp).tanh());
                if w < CLIP {
                    0.0
                } else if w > 1.0 - CLIP {
                    1.0
                } else {
                    w
                }
            }
        }
    }

    /// Medium length, if finite.
    pub fn length(&self) -> Option<f64> {
        match *self {
            Medium::Slab { z_in, z_out, .. } => Some(z_out - z_in),
            _ => None,
        }
    }
}

/// Photon absorber near the end of the periodic domain, used to stop
/// transmitted light from wrapping around into the medium again.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Absorber {
    pub start: f64,
    /// Peak damping rate at the domain end.
    pub strength: f64,
}

/// Periodic 1D grid `z_j = z_min + j dz`, `dz = (z_max - z_min) / n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
    pub medium: Medium,
    pub absorber: Option<Absorber>,
}

impl Grid1D {
    pub fn new(z_min: f64, z_max: f64, n_points: usize, medium: Medium) -> Result<Self> {
        let g = Grid1D {
            z_min,
            z_max,
            n_points,
            medium,
            absorber: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Slab medium `[z_in, z_out]` with the default ramp of four cells.
    pub fn with_slab(z_min: f64, z_max: f64, n_points: usize, z_in: f64, z_out: f64) -> Result<Self> {
        let dz = (z_max - z_min) / n_points as f64;
        Self::new(
            z_min,
            z_max,
            n_points,
            Medium::Slab {
                z_in,
                z_out,
                ramp: 4.0 * dz,
            },
        )
    }

    pub fn with_absorber(mut self, start: f64, strength: f64) -> Result<Self> {
        if !(start > self.z_min && start < self.z_max) || !(strength >= 0.0) {
            return Err(CitError::Setup("absorber must start inside the domain".into()));
        }
        self.absorber = Some(Absorber { start, strength });
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 8 {
            return Err(CitError::Setup("grid needs at least 8 points".into()));
        }
        if !(self.z_max > self.z_min) {
            return Err(CitError::Setup("grid bounds must satisfy z_min < z_max".into()));
        }
        if let Medium::Slab { z_in, z_out, ramp } = self.medium {
            if !(z_in < z_out && z_in > self.z_min && z_out < self.z_max && ramp > 0.0) {
                return Err(CitError::Setup(
                    "medium must satisfy z_min < z_in < z_out < z_max".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / self.n_points as f64
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.dz()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.z(j)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points().into_iter().map(|z| self.medium.weight(z)).collect()
    }

    /// Per-point photon damping rate from the absorber.
    pub fn absorption(&self) -> Vec<f64> {
        match self.absorber {
            None => vec![0.0; self.n_points],
            Some(a) => self
                .points()
                .into_iter()
                .map(|z| {
                    if z <= a.start {
                        0.0
                    } else {
                        a.strength * ((z - a.start) / (self.z_max - a.start)).powi(2)
                    }
                })
                .collect(),
        }
    }

    /// Index of the grid point nearest to `z`.
    pub fn index_of(&self, z: f64) -> usize {
        let j = ((z - self.z_min) / self.dz()).round();
        (j.max(0.0) as usize).min(self.n_points - 1)
    }
}

/// Smallest `m >= n` whose prime factors are all 2, 3 or 5.
pub fn fft_size_at_least(n: usize) -> usize {
    let smooth = |mut m: usize| {
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        m == 1
    };
    (n.max(1)..).find(|&m| smooth(m)).unwrap_or(n)
}

/// Angular wave numbers in FFT order; the Nyquist entry is zero so that the
/// induced real-space operator stays Hermitian.
pub fn wave_numbers(n: usize, dz: f64) -> Vec<f64> {
    let scale = 2.0 * PI / (n as f64 * dz);
    (0..n)
        .map(|j| {
            if 2 * j < n {
                j as f64 * scale
            } else if 2 * j == n {
                0.0
            } else {
                (j as f64 - n as f64) * scale
            }
        })
        .collect()
}

/// Exact translation `f(z) -> f(z - shift)` of periodic band-limited data.
pub struct SpectralShift {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    phases: Vec<Complex64>,
    scratch_len: usize,
}

impl SpectralShift {
    pub fn new(n: usize, dz: f64, shift: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let inv_n = 1.0 / n as f64;
        let phases = wave_numbers(n, dz)
            .into_iter()
            .map(|k| Complex64::from_polar(inv_n, -k * shift))
            .collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        SpectralShift {
            forward,
            inverse,
            phases,
            scratch_len,
        }
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len]
    }

    pub fn apply(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(data, scratch);
        for (x, p) in data.iter_mut().zip(&self.phases) {
            *x *= p;
        }
        self.inverse.process_with_scratch(data, scratch);
    }
}
