//! Transport experiments in natural units (`c = L = 1`) built on the
//! solvers: single-photon passage through a slab, two-photon arrival
//! structure versus initial separation, and the weak coherent pulse.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eom::Component;
use crate::error::{CitError, Result};
use crate::grid::{fft_size_at_least, Grid1D};
use crate::observables::{compose_coherent, extract_delay, CoherentRuns, DelayStats, ObservableSeries};
use crate::params::{derive_quantities, PulseSpec, SystemParams, UnitSystem};
use crate::solver1::{centroid_and_width, initial_gaussian, AmplitudeField1, DetectorTrace1, Scheme, Solver1};
use crate::solver2::{
    initial_gaussian2, kinematic_delay_model, AmplitudeField2, DetectorTrace2, Solver2,
};

fn require_natural(p: &SystemParams) -> Result<()> {
    if p.units != UnitSystem::Natural || p.c != 1.0 || p.length != 1.0 {
        return Err(CitError::Setup("experiments expect natural units (c = L = 1)".into()));
    }
    Ok(())
}

/// Detector plane a few cells past the medium exit.
const DETECTOR_CELLS: f64 = 8.0;

/// Single photon crossing a slab `[medium_start, medium_start + 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabSetup {
    pub params: SystemParams,
    pub pulse: PulseSpec,
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
    pub medium_start: f64,
    /// Absorbing layer from this position to `z_max`.
    pub absorber_start: Option<f64>,
    /// `c dt / dz`.
    pub courant: f64,
    pub t_end: f64,
}

impl SlabSetup {
    /// G = g√n = 500, γ = 100, Gaussian centred at z = 2 ahead of the slab
    /// `[4.5, 5.5]`.
    pub fn adiabatic_default() -> Self {
        SlabSetup {
            params: SystemParams::natural(500.0, 500.0, 100.0),
            pulse: PulseSpec {
                shape: crate::params::PulseShape::Gaussian,
                t_p: std::f64::consts::FRAC_1_SQRT_2,
                center: 2.0,
                mean_photons: 1.0,
            },
            z_min: 0.0,
            z_max: 12.0,
            n_points: 1024,
            medium_start: 4.5,
            absorber_start: Some(9.0),
            courant: 0.5,
            t_end: 8.0,
        }
    }

    /// Same geometry with a pulse far shorter than the inverse transparency
    /// width: g√n = 100, G = 10, γ = 20, T_p ω_tr ≈ 0.16.
    pub fn nonadiabatic_default() -> Self {
        let mut s = Self::adiabatic_default();
        s.params = SystemParams::natural(10.0, 100.0, 20.0);
        let (v1, _) = s.params.group_velocities();
        s.t_end = s.detector_guess() - s.pulse.center - 1.0 + 1.0 / v1 + 4.0 * s.pulse.t_p;
        s
    }

    pub fn grid(&self) -> Result<Grid1D> {
        let g = Grid1D::with_slab(
            self.z_min,
            self.z_max,
            self.n_points,
            self.medium_start,
            self.medium_start + 1.0,
        )?;
        match self.absorber_start {
            Some(a) => g.with_absorber(a, 40.0),
            None => Ok(g),
        }
    }

    fn detector_guess(&self) -> f64 {
        let dz = (self.z_max - self.z_min) / self.n_points as f64;
        self.medium_start + 1.0 + DETECTOR_CELLS * dz
    }
}

/// Measured and expected single-photon transport figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabTransport {
    pub z_detector: f64,
    /// `c ∫ |f(z_d, t)|² dt`.
    pub transmission: f64,
    /// Time spent inside the slab: arrival centroid minus vacuum travel over
    /// the rest of the path.
    pub transit_time: f64,
    pub expected_transit: f64,
    /// Polariton width at mid-slab over the incident width.
    pub compression: f64,
    pub expected_compression: f64,
    /// Time at which the compression was sampled.
    pub compression_time: f64,
    pub adiabaticity: f64,
    pub final_norm: f64,
}

/// Output of [`slab_transport`].
#[derive(Debug, Clone)]
pub struct SlabRun {
    pub summary: SlabTransport,
    pub trace: DetectorTrace1,
    pub snapshots: Vec<AmplitudeField1>,
}

fn excitation_density(st: &AmplitudeField1) -> Vec<f64> {
    st.f.iter()
        .zip(&st.e)
        .zip(&st.s)
        .map(|((f, e), s)| f.norm_sqr() + e.norm_sqr() + s.norm_sqr())
        .collect()
}

/// Runs one photon through the slab, keeping a snapshot every
/// `snapshot_every` steps when requested.
pub fn slab_transport(setup: &SlabSetup, snapshot_every: Option<usize>) -> Result<SlabRun> {
    require_natural(&setup.params)?;
    let grid = setup.grid()?;
    let dz = grid.dz();
    let z = grid.points();
    let initial = initial_gaussian(&grid, &setup.pulse)?;
    let solver = Solver1::new(grid, setup.params, Scheme::SplitStep, setup.courant * dz)?;
    let j = grid.index_of(setup.detector_guess());
    let z_d = grid.z(j);
    let mid = setup.medium_start + 0.5;
    let (_, width_in) = centroid_and_width(&z, &excitation_density(&initial));

    let mut trace = DetectorTrace1 {
        z_detector: z_d,
        ..Default::default()
    };
    let mut snapshots = vec![initial.clone()];
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut step = 0usize;
    let mut st = initial.clone();
    trace.times.push(st.time);
    trace.amplitude.push(st.f[j]);
    trace.norms.push(st.norm(dz));
    solver.run(&mut st, setup.t_end, |s| {
        step += 1;
        trace.times.push(s.time);
        trace.amplitude.push(s.f[j]);
        trace.norms.push(s.norm(dz));
        let (c, w) = centroid_and_width(&z, &excitation_density(s));
        if (c - mid).abs() < best.0 {
            best = ((c - mid).abs(), w, s.time);
        }
        if let Some(k) = snapshot_every {
            if k > 0 && step % k == 0 {
                snapshots.push(s.clone());
            }
        }
    })?;

    let intensity = trace.intensity();
    let dt = solver.dt;
    let flux: f64 = intensity.iter().sum::<f64>() * dt * setup.params.c;
    if !(flux > 0.0) {
        return Err(CitError::Extraction("no photon reached the detector".into()));
    }
    let t_c = trace.times.iter().zip(&intensity).map(|(t, i)| t * i).sum::<f64>() * dt / flux;
    let vacuum_path = z_d - setup.pulse.center - 1.0;
    let (v1, _) = setup.params.group_velocities();
    let adiabaticity = if setup.params.gamma > 0.0 {
        setup.pulse.t_p * derive_quantities(&setup.params)?.omega_tr
    } else {
        f64::INFINITY
    };
    let summary = SlabTransport {
        z_detector: z_d,
        transmission: flux,
        transit_time: t_c - vacuum_path,
        expected_transit: 1.0 / v1,
        compression: best.1 / width_in,
        expected_compression: v1,
        compression_time: best.2,
        adiabaticity,
        final_norm: st.norm(dz),
    };
    Ok(SlabRun {
        summary,
        trace,
        snapshots,
    })
}

/// Largest `|norm − 1|` of a lossless single-photon run through the slab.
pub fn norm_drift1(setup: &SlabSetup) -> Result<f64> {
    let mut s = *setup;
    s.params.gamma = 0.0;
    s.params.kappa = 0.0;
    s.absorber_start = None;
    let grid = s.grid()?;
    let dz = grid.dz();
    let mut st = initial_gaussian(&grid, &s.pulse)?;
    let n0 = st.norm(dz);
    let solver = Solver1::new(grid, s.params, Scheme::SplitStep, s.courant * dz)?;
    let mut worst: f64 = 0.0;
    solver.run(&mut st, s.t_end, |x| worst = worst.max((x.norm(dz) - n0).abs() / n0))?;
    Ok(worst)
}

/// A photon pair launched at separation `d` towards the slab `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSetup {
    pub params: SystemParams,
    /// Amplitude half-width of each photon.
    pub t_p: f64,
    /// Initial centre of the leading photon.
    pub lead_center: f64,
    pub dz: f64,
    pub courant: f64,
    /// Margin around the pulses, in units of `t_p`.
    pub margin: f64,
}

impl Default for PairSetup {
    fn default() -> Self {
        PairSetup {
            params: SystemParams::natural(500.0, 500.0, 100.0),
            t_p: 0.25,
            lead_center: -1.0,
            dz: 0.009,
            courant: 0.5,
            margin: 4.0,
        }
    }
}

/// Simulated and kinematic transit times of one pair run. Transit times are
/// measured from medium entry to medium exit of the respective photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTransit {
    pub separation: f64,
    pub n_points: usize,
    pub lead_transit: f64,
    pub trail_transit: f64,
    /// Transit of the co-located part `z1 = z2`.
    pub diagonal_transit: f64,
    pub model_lead_transit: f64,
    pub model_trail_transit: f64,
    pub final_norm: f64,
}

/// Centroids of the leading and trailing photon (ordered half `z1 > z2`)
/// and of the diagonal density.
fn ordered_centroids(st: &AmplitudeField2, z: &[f64]) -> (f64, f64, f64) {
    let n = z.len();
    let ff = st.get(Component::Ff);
    let (mut w, mut lead, mut trail) = (0.0, 0.0, 0.0);
    let (mut wd, mut diag) = (0.0, 0.0);
    for i in 0..n {
        let d = ff[i * n + i].norm_sqr();
        wd += d;
        diag += d * z[i];
        for j in 0..i {
            let x = ff[i * n + j].norm_sqr();
            w += x;
            lead += x * z[i];
            trail += x * z[j];
        }
    }
    (lead / w, trail / w, diag / wd)
}

fn pair_state(grid: &Grid1D, a: f64, b: f64, t_p: f64) -> AmplitudeField2 {
    let z = grid.points();
    let n = z.len();
    let g = |x: f64, c: f64| (-((x - c) / t_p).powi(2)).exp();
    let mut st = AmplitudeField2::zeros(n);
    let ff = st.get_mut(Component::Ff);
    for i in 0..n {
        for j in 0..n {
            ff[i * n + j] = Complex64::new(g(z[i], a) * g(z[j], b) + g(z[i], b) * g(z[j], a), 0.0);
        }
    }
    let norm = st.norm(grid.dz()).sqrt();
    st.get_mut(Component::Ff).iter_mut().for_each(|x| *x /= norm);
    st
}

/// Propagates a pair at separation `d` until both photons have left the
/// medium, then reads the transit times off the final free-space positions.
pub fn pair_transit(setup: &PairSetup, d: f64) -> Result<PairTransit> {
    require_natural(&setup.params)?;
    let model = kinematic_delay_model(d, &setup.params)?;
    let margin = setup.margin * setup.t_p;
    let lead = setup.lead_center;
    let trail = lead - d;
    let model_trail_transit = model.trail_exit - d;
    let t_end = -trail + model_trail_transit + margin;
    let lead_final = 1.0 + t_end - (-lead + model.lead_exit);
    let (lo, hi) = (trail - margin, lead_final + margin);
    let n = fft_size_at_least(((hi - lo) / setup.dz).ceil() as usize);
    let grid = Grid1D::with_slab(lo, hi, n, 0.0, 1.0)?;
    let z = grid.points();
    let dz = grid.dz();
    let mut st = pair_state(&grid, lead, trail, setup.t_p);
    let overlap: f64 = {
        let w = grid.weights();
        let ff = st.get(Component::Ff);
        (0..n * n).map(|k| ff[k].norm_sqr() * w[k / n].max(w[k % n])).sum::<f64>() * dz * dz
    };
    if overlap > 1e-8 {
        return Err(CitError::Setup(format!(
            "initial pair overlaps the medium (weighted norm {overlap:.3e})"
        )));
    }
    let (l0, t0, d0) = ordered_centroids(&st, &z);
    let solver = Solver2::new(grid, setup.params, Scheme::SplitStep, setup.courant * dz)?;
    solver.run_sampled(&mut st, t_end, usize::MAX, |_| {})?;
    let (l1, t1, d1) = ordered_centroids(&st, &z);
    // exit = L + T − z_final, entry = −z_initial.
    let transit = |z_init: f64, z_final: f64| 1.0 + st.time - z_final + z_init;
    Ok(PairTransit {
        separation: d,
        n_points: n,
        lead_transit: transit(l0, l1),
        trail_transit: transit(t0, t1),
        diagonal_transit: transit(d0, d1),
        model_lead_transit: model.lead_exit,
        model_trail_transit,
        final_norm: st.norm(dz),
    })
}

/// Weak coherent pulse through the slab `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentSetup {
    pub params: SystemParams,
    pub pulse: PulseSpec,
    pub z_min: f64,
    pub z_max: f64,
    pub dz: f64,
    pub courant: f64,
    pub t_end: f64,
    /// Detector sample stride in steps.
    pub sample_every: usize,
}

impl CoherentSetup {
    pub fn grid(&self) -> Result<Grid1D> {
        let n = fft_size_at_least(((self.z_max - self.z_min) / self.dz).ceil() as usize);
        Grid1D::with_slab(self.z_min, self.z_max, n, 0.0, 1.0)
    }
}

/// Output of [`coherent_pulse`].
#[derive(Debug, Clone)]
pub struct CoherentRun {
    pub series: ObservableSeries,
    pub trace1: DetectorTrace1,
    pub trace2: DetectorTrace2,
    /// Advance of the two-photon correlation peak over the intensity peak
    /// (negated delay).
    pub g2_vs_intensity: DelayStats,
    /// Same against the single-photon term alone.
    pub g2_vs_single: DelayStats,
    pub expected_advance: f64,
}

/// Runs the single- and two-photon parts of a weak coherent pulse and
/// composes the detector observables. `observe2` sees every sampled
/// two-photon state.
pub fn coherent_pulse<F>(setup: &CoherentSetup, observe2: F) -> Result<CoherentRun>
where
    F: FnMut(&AmplitudeField2),
{
    require_natural(&setup.params)?;
    let grid = setup.grid()?;
    let dz = grid.dz();
    let dt = setup.courant * dz;
    let z_d = 1.0 + DETECTOR_CELLS * dz;
    let every = setup.sample_every.max(1);

    let initial1 = initial_gaussian(&grid, &setup.pulse)?;
    let s1 = Solver1::new(grid, setup.params, Scheme::SplitStep, dt)?;
    let mut one = initial1.clone();
    let trace1 = crate::solver1::record_detector(&s1, &mut one, z_d, setup.t_end, every)?;

    let initial2 = initial_gaussian2(&grid, &setup.pulse)?;
    let s2 = Solver2::new(grid, setup.params, Scheme::SplitStep, dt)?;
    let mut two = initial2.clone();
    let mut observe2 = observe2;
    observe2(&two);
    let trace2 = {
        let j = grid.index_of(z_d);
        let mut trace = DetectorTrace2 {
            z_detector: grid.z(j),
            ..Default::default()
        };
        let mut push = |st: &AmplitudeField2| {
            let (m, c) = crate::solver2::detector_sample(st, j, dz);
            trace.times.push(st.time);
            trace.pair_marginal.push(m);
            trace.coincidence.push(c);
            trace.norms.push(st.norm(dz));
        };
        push(&two);
        s2.run_sampled(&mut two, setup.t_end, every, |st| {
            push(st);
            observe2(st);
        })?;
        trace
    };

    let alpha = Complex64::new(setup.pulse.mean_photons.sqrt(), 0.0);
    let runs = CoherentRuns {
        initial1: &initial1,
        trace1: &trace1,
        initial2: &initial2,
        trace2: &trace2,
    };
    let series = compose_coherent(alpha, &runs, dz)?;
    let g2_vs_intensity = negate(extract_delay(&series.times, &series.g2_unnorm, &series.intensity)?);
    let single: Vec<f64> = trace1.intensity();
    let g2_vs_single = negate(extract_delay(&series.times, &series.g2_unnorm, &single)?);
    Ok(CoherentRun {
        series,
        trace1,
        trace2,
        g2_vs_intensity,
        g2_vs_single,
        expected_advance: derive_quantities(&setup.params)?.delta_tau_12,
    })
}

fn negate(d: DelayStats) -> DelayStats {
    DelayStats {
        peak_delay: -d.peak_delay,
        centroid_delay: -d.centroid_delay,
        ..d
    }
}

/// Largest relative norm change of a lossless two-photon run.
pub fn norm_drift2(params: &SystemParams, n_points: usize, t_end: f64) -> Result<f64> {
    require_natural(params)?;
    let mut p = *params;
    p.gamma = 0.0;
    p.kappa = 0.0;
    let grid = Grid1D::with_slab(-3.0, 2.0, n_points, 0.0, 1.0)?;
    let dz = grid.dz();
    let pulse = PulseSpec::gaussian(0.25, -1.8, 1.0)?;
    let mut st = initial_gaussian2(&grid, &pulse)?;
    let n0 = st.norm(dz);
    let solver = Solver2::new(grid, p, Scheme::SplitStep, 0.5 * dz)?;
    let mut worst: f64 = 0.0;
    solver.run(&mut st, t_end, |x| worst = worst.max((x.norm(dz) - n0).abs() / n0))?;
    Ok(worst)
}
