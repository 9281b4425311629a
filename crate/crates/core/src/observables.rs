//! Detector observables of a weak coherent pulse truncated to two photons,
//!
//! ```text
//! |ψ⟩ = |0⟩ + α |1⟩ + α²/√2 |2⟩,
//! ```
//!
//! built from the single- and two-excitation trajectories of the same input
//! envelope.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eom::Component;
use crate::error::{CitError, Result};
use crate::solver1::{AmplitudeField1, DetectorTrace1};
use crate::solver2::{detector_sample, product_state, AmplitudeField2, DetectorTrace2};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub z_detector: f64,
    pub times: Vec<f64>,
    /// ⟨ℰ†ℰ⟩ at the detector.
    pub intensity: Vec<f64>,
    /// ⟨ℰ†ℰ†ℰℰ⟩ at the detector.
    pub g2_unnorm: Vec<f64>,
    pub sector1_norm: Vec<f64>,
    pub sector2_norm: Vec<f64>,
}

/// `(⟨ℰ†ℰ⟩, ⟨ℰ†ℰ†ℰℰ⟩)` at grid index `j` for the composed state.
pub fn detector_expectations(
    alpha: Complex64,
    one: &AmplitudeField1,
    two: &AmplitudeField2,
    j: usize,
    dz: f64,
) -> (f64, f64) {
    let a2 = alpha.norm_sqr();
    let (pair, coincidence) = detector_sample(two, j, dz);
    (a2 * one.f[j].norm_sqr() + a2 * a2 * pair, a2 * a2 * coincidence)
}

/// Inputs of [`compose_coherent`]: initial states and detector traces of
/// the single- and two-photon runs.
pub struct CoherentRuns<'a> {
    pub initial1: &'a AmplitudeField1,
    pub trace1: &'a DetectorTrace1,
    pub initial2: &'a AmplitudeField2,
    pub trace2: &'a DetectorTrace2,
}

const ENVELOPE_TOLERANCE: f64 = 1e-10;

pub fn compose_coherent(alpha: Complex64, runs: &CoherentRuns<'_>, dz: f64) -> Result<ObservableSeries> {
    let a2 = alpha.norm_sqr();
    if a2 > 0.5 {
        return Err(CitError::Setup(format!(
            "|alpha|^2 = {a2} is too large for the two-photon truncation"
        )));
    }
    let expected = product_state(&runs.initial1.f);
    let mismatch = expected
        .get(Component::Ff)
        .iter()
        .zip(runs.initial2.get(Component::Ff))
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let other: f64 = [Component::Ef, Component::Ee, Component::Sf, Component::Es, Component::Ss]
        .iter()
        .map(|&c| runs.initial2.component_norm(c, dz))
        .sum();
    if runs.initial2.n != runs.initial1.f.len() || mismatch > ENVELOPE_TOLERANCE || other > 0.0 {
        return Err(CitError::Setup(
            "two-photon input is not the product of the single-photon envelope".into(),
        ));
    }
    let (t1, t2) = (runs.trace1, runs.trace2);
    if t1.times.len() != t2.times.len()
        || t1.times.iter().zip(&t2.times).any(|(a, b)| (a - b).abs() > 1e-9)
        || (t1.z_detector - t2.z_detector).abs() > 1e-12
    {
        return Err(CitError::Setup(
            "single- and two-photon traces use different samples".into(),
        ));
    }
    let a4 = a2 * a2;
    let intensity = t1
        .amplitude
        .par_iter()
        .zip(&t2.pair_marginal)
        .map(|(f, m)| a2 * f.norm_sqr() + a4 * m)
        .collect();
    Ok(ObservableSeries {
        z_detector: t1.z_detector,
        times: t1.times.clone(),
        intensity,
        g2_unnorm: t2.coincidence.iter().map(|c| a4 * c).collect(),
        sector1_norm: t1.norms.iter().map(|n| a2 * n).collect(),
        sector2_norm: t2.norms.iter().map(|n| 0.5 * a4 * n).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    /// Peak time of the signal minus peak time of the reference.
    pub peak_delay: f64,
    pub centroid_delay: f64,
    /// Sampling resolution.
    pub uncertainty: f64,
    pub signal_peak: f64,
    pub reference_peak: f64,
}

/// Peak time with parabolic refinement around the largest sample.
pub fn peak_time(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(CitError::Extraction("need at least three samples".into()));
    }
    let (k, &max) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > min) || !max.is_finite() {
        return Err(CitError::Extraction("series has no peak".into()));
    }
    if k == 0 || k + 1 == values.len() {
        return Ok(times[k]);
    }
    let (y0, y1, y2) = (values[k - 1], values[k], values[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let h = 0.5 * (times[k + 1] - times[k - 1]);
    let offset = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
    Ok(times[k] + offset.clamp(-1.0, 1.0) * h)
}

pub fn centroid_time(times: &[f64], values: &[f64]) -> Result<f64> {
    let total: f64 = values.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(CitError::Extraction("series has no weight".into()));
    }
    Ok(times.iter().zip(values).map(|(t, v)| t * v).sum::<f64>() / total)
}

/// Delay of `signal` relative to `reference`; both on the grid `times`.
pub fn extract_delay(times: &[f64], signal: &[f64], reference: &[f64]) -> Result<DelayStats> {
    if signal.len() != times.len() || reference.len() != times.len() {
        return Err(CitError::Extraction("series are not on a common time grid".into()));
    }
    let ts = peak_time(times, signal)?;
    let tr = peak_time(times, reference)?;
    let dt = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    Ok(DelayStats {
        peak_delay: ts - tr,
        centroid_delay: centroid_time(times, signal)? - centroid_time(times, reference)?,
        uncertainty: dt,
        signal_peak: ts,
        reference_peak: tr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{fields2_from_state, state_from_fields1, state_from_fields2, ModeGrid, ModeKind, SectorBasis};

    fn gaussian_series(times: &[f64], center: f64) -> Vec<f64> {
        times.iter().map(|t| (-((t - center) / 0.7).powi(2)).exp()).collect()
    }

    #[test]
    fn delay_of_shifted_gaussians() {
        let times: Vec<f64> = (0..400).map(|k| k as f64 * 0.025).collect();
        let a = gaussian_series(&times, 4.0);
        let b = gaussian_series(&times, 4.0 + 0.613);
        let d = extract_delay(&times, &b, &a).unwrap();
        assert!((d.peak_delay - 0.613).abs() <= d.uncertainty);
        assert!((d.centroid_delay - 0.613).abs() < 1e-9);
        let same = extract_delay(&times, &a, &a).unwrap();
        assert_eq!(same.peak_delay, 0.0);
        let flat = vec![1.0; times.len()];
        assert!(matches!(extract_delay(&times, &flat, &a), Err(CitError::Extraction(_))));
        assert!(extract_delay(&times[1..], &a, &a).is_err());
    }

    fn random_fields(n: usize, seed: u64) -> (AmplitudeField1, AmplitudeField2) {
        // Deterministic pseudo-random amplitudes.
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut one = AmplitudeField1::zeros(n);
        for v in [&mut one.f, &mut one.e, &mut one.s] {
            for x in v.iter_mut() {
                *x = Complex64::new(next(), next());
            }
        }
        let mut two = AmplitudeField2::zeros(n);
        for k in 0..6 {
            for x in two.component_mut(k).iter_mut() {
                *x = Complex64::new(next(), next());
            }
        }
        two.symmetrize();
        (one, two)
    }

    #[test]
    fn prefactors_match_lattice_expectations() {
        let n = 8;
        let grid = ModeGrid::uniform_ring(n, 2.0).unwrap();
        let dz = grid.spacing;
        let b1 = SectorBasis::new(n, 1).unwrap();
        let b2 = SectorBasis::new(n, 2).unwrap();
        let alpha = Complex64::new(0.4, -0.3);
        for seed in [1, 7, 42] {
            let (one, two) = random_fields(n, seed);
            let s1 = state_from_fields1(&grid, &b1, &one).unwrap();
            let s2 = state_from_fields2(&grid, &b2, &two).unwrap();
            // The mapping is faithful, so the lattice state is the composed one.
            let back = fields2_from_state(&grid, &b2, &s2);
            assert!((back.norm(dz) - two.norm(dz)).abs() < 1e-10);
            let w1 = alpha.norm_sqr();
            let w2 = alpha.norm_sqr().powi(2) / 2.0;
            for j in 0..n {
                let mut density = 0.0;
                let mut pairs = 0.0;
                for (label, a) in b1.states.iter().zip(&s1.amplitudes) {
                    let occ = label.iter().filter(|m| m.kind == ModeKind::Photon && m.site == j).count();
                    density += w1 * a.norm_sqr() * occ as f64;
                }
                for (label, a) in b2.states.iter().zip(&s2.amplitudes) {
                    let occ = label.iter().filter(|m| m.kind == ModeKind::Photon && m.site == j).count() as f64;
                    density += w2 * a.norm_sqr() * occ;
                    pairs += w2 * a.norm_sqr() * occ * (occ - 1.0);
                }
                let (i, g2) = detector_expectations(alpha, &one, &two, j, dz);
                assert!((i - density / dz).abs() < 1e-8, "site {j}: {i} vs {}", density / dz);
                assert!((g2 - pairs / (dz * dz)).abs() < 1e-8, "site {j}");
            }
        }
    }

    #[test]
    fn composition_scales_with_alpha() {
        let (one, two) = random_fields(8, 3);
        let a = Complex64::new(0.3, 0.0);
        let b = a * 2f64.sqrt();
        let (i_a, g_a) = detector_expectations(a, &one, &two, 2, 0.25);
        let (i_b, g_b) = detector_expectations(b, &one, &two, 2, 0.25);
        let (pair, _) = detector_sample(&two, 2, 0.25);
        let single = one.f[2].norm_sqr();
        assert!((i_b - (2.0 * 0.09 * single + 4.0 * 0.0081 * pair)).abs() < 1e-12);
        assert!((i_a - (0.09 * single + 0.0081 * pair)).abs() < 1e-12);
        assert!((g_b - 4.0 * g_a).abs() < 1e-12);
        let (i0, g0) = detector_expectations(Complex64::new(0.0, 0.0), &one, &two, 2, 0.25);
        assert_eq!((i0, g0), (0.0, 0.0));
    }

    #[test]
    fn mismatched_envelopes_are_rejected() {
        let n = 8;
        let mut one = AmplitudeField1::zeros(n);
        one.f[3] = Complex64::new(1.0, 0.0);
        let good = product_state(&one.f);
        let mut bad = good.clone();
        bad.get_mut(Component::Ff)[0] = Complex64::new(0.1, 0.0);
        let t1 = DetectorTrace1 {
            z_detector: 1.0,
            times: vec![0.0, 0.1, 0.2],
            amplitude: vec![Complex64::new(0.0, 0.0); 3],
            norms: vec![1.0; 3],
        };
        let t2 = DetectorTrace2 {
            z_detector: 1.0,
            times: vec![0.0, 0.1, 0.2],
            pair_marginal: vec![0.0; 3],
            coincidence: vec![0.0; 3],
            norms: vec![1.0; 3],
        };
        let runs = |init2| CoherentRuns {
            initial1: &one,
            trace1: &t1,
            initial2: init2,
            trace2: &t2,
        };
        let alpha = Complex64::new(0.5, 0.0);
        let s = compose_coherent(alpha, &runs(&good), 0.1).unwrap();
        assert_eq!(s.sector2_norm, vec![0.03125; 3]);
        assert!(matches!(
            compose_coherent(alpha, &runs(&bad), 0.1),
            Err(CitError::Setup(_))
        ));
        assert!(compose_coherent(Complex64::new(0.8, 0.0), &runs(&good), 0.1).is_err());
    }
}
