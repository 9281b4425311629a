//! Propagation of a single-photon wave packet through the medium.
//!
//! Amplitudes: photon `f(z,t)`, excited atom `e(z,t)` and spin excitation
//! with one cavity photon `s(z,t)`:
//!
//! ```text
//! ∂t f = −c ∂z f + i g√n w(z) e
//! ∂t e = −γ e + i g√n w(z) f + i G s
//! ∂t s = i G e − κ/2 s
//! ```
//!
//! All quantities are in natural units (c = L = 1).

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CitError, Result};
use crate::grid::{Grid1D, SpectralShift};
use crate::params::{PulseSpec, SystemParams};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Time-integration scheme shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Strang splitting: exact spectral translation and exact local coupling
    /// propagators. Unitary when γ = κ = 0.
    #[default]
    SplitStep,
    /// Classical RK4 with first-order upwind advection.
    UpwindRk4,
}

impl Scheme {
    pub fn max_courant(&self) -> f64 {
        match self {
            Scheme::SplitStep => 1.0,
            Scheme::UpwindRk4 => 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeField1 {
    pub f: Vec<Complex64>,
    pub e: Vec<Complex64>,
    pub s: Vec<Complex64>,
    pub time: f64,
}

impl AmplitudeField1 {
    pub fn zeros(n: usize) -> Self {
        AmplitudeField1 {
            f: vec![ZERO; n],
            e: vec![ZERO; n],
            s: vec![ZERO; n],
            time: 0.0,
        }
    }

    /// ∫(|f|² + |e|² + |s|²) dz.
    pub fn norm(&self, dz: f64) -> f64 {
        self.photon_norm(dz) + sum_abs2(&self.e) * dz + sum_abs2(&self.s) * dz
    }

    pub fn photon_norm(&self, dz: f64) -> f64 {
        sum_abs2(&self.f) * dz
    }

    pub fn photon_density(&self) -> Vec<f64> {
        self.f.iter().map(|x| x.norm_sqr()).collect()
    }
}

pub(crate) fn sum_abs2(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Unit-norm Gaussian photon `f ∝ exp(-((z - center)/(c T_p))²)`; fails if the
/// weighted overlap with the medium exceeds 1e-8.
pub fn initial_gaussian(grid: &Grid1D, pulse: &PulseSpec) -> Result<AmplitudeField1> {
    grid.validate()?;
    pulse.validate()?;
    let width = pulse.t_p;
    let dz = grid.dz();
    let mut state = AmplitudeField1::zeros(grid.n_points);
    for (j, z) in grid.points().into_iter().enumerate() {
        let x = (z - pulse.center) / width;
        state.f[j] = Complex64::new((-x * x).exp(), 0.0);
    }
    let norm = state.photon_norm(dz).sqrt();
    if !(norm > 0.0) {
        return Err(CitError::Setup("pulse does not intersect the grid".into()));
    }
    state.f.iter_mut().for_each(|x| *x /= norm);
    let overlap: f64 = state
        .f
        .iter()
        .zip(grid.weights())
        .map(|(x, w)| x.norm_sqr() * w)
        .sum::<f64>()
        * dz;
    if overlap > 1e-8 {
        return Err(CitError::Setup(format!(
            "initial pulse overlaps the medium (weighted norm {overlap:.3e})"
        )));
    }
    Ok(state)
}

/// Local generator at medium weight `w`, acting on `(f, e, s)`.
pub(crate) fn local_generator(p: &SystemParams, w: f64) -> Matrix3<Complex64> {
    let g = I * p.probe_coupling * w;
    let big = I * p.cavity_coupling;
    Matrix3::new(
        ZERO,
        g,
        ZERO,
        g,
        Complex64::new(-p.gamma, 0.0),
        big,
        ZERO,
        big,
        Complex64::new(-0.5 * p.kappa, 0.0),
    )
}

/// Stepper for [`AmplitudeField1`].
pub struct Solver1 {
    pub grid: Grid1D,
    pub params: SystemParams,
    pub scheme: Scheme,
    pub dt: f64,
    weights: Vec<f64>,
    absorption: Vec<f64>,
    /// Index into `propagators` for each grid point.
    prop_index: Vec<usize>,
    propagators: Vec<Matrix3<Complex64>>,
    half_absorb: Vec<f64>,
    shift: SpectralShift,
}

impl Solver1 {
    pub fn new(grid: Grid1D, params: SystemParams, scheme: Scheme, dt: f64) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        let dz = grid.dz();
        let courant = params.c * dt / dz;
        if !(dt > 0.0) || courant > scheme.max_courant() {
            return Err(CitError::Config(format!(
                "Courant number c*dt/dz = {courant:.3} exceeds {} for {scheme:?}",
                scheme.max_courant()
            )));
        }
        let weights = grid.weights();
        let absorption = grid.absorption();
        let mut distinct: Vec<f64> = Vec::new();
        let prop_index = weights
            .iter()
            .map(|&w| match distinct.iter().position(|&d| d == w) {
                Some(i) => i,
                None => {
                    distinct.push(w);
                    distinct.len() - 1
                }
            })
            .collect();
        let propagators = distinct
            .iter()
            .map(|&w| (local_generator(&params, w) * Complex64::new(0.5 * dt, 0.0)).exp())
            .collect();
        let half_absorb = absorption.iter().map(|a| (-0.5 * a * dt).exp()).collect();
        let shift = SpectralShift::new(grid.n_points, dz, params.c * dt);
        Ok(Solver1 {
            grid,
            params,
            scheme,
            dt,
            weights,
            absorption,
            prop_index,
            propagators,
            half_absorb,
            shift,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn local_half_step(&self, st: &mut AmplitudeField1) {
        for j in 0..st.f.len() {
            let m = &self.propagators[self.prop_index[j]];
            let (f, e, s) = (st.f[j], st.e[j], st.s[j]);
            st.f[j] = (m[(0, 0)] * f + m[(0, 1)] * e + m[(0, 2)] * s) * self.half_absorb[j];
            st.e[j] = m[(1, 0)] * f + m[(1, 1)] * e + m[(1, 2)] * s;
            st.s[j] = m[(2, 0)] * f + m[(2, 1)] * e + m[(2, 2)] * s;
        }
    }

    fn rhs(&self, st: &AmplitudeField1, out: &mut AmplitudeField1) {
        let n = st.f.len();
        let inv_dz = self.params.c / self.grid.dz();
        let g = I * self.params.probe_coupling;
        let big = I * self.params.cavity_coupling;
        for j in 0..n {
            let jm = (j + n - 1) % n;
            let w = self.weights[j];
            out.f[j] = -(st.f[j] - st.f[jm]) * inv_dz + g * w * st.e[j] - self.absorption[j] * st.f[j];
            out.e[j] = -self.params.gamma * st.e[j] + g * w * st.f[j] + big * st.s[j];
            out.s[j] = big * st.e[j] - 0.5 * self.params.kappa * st.s[j];
        }
    }

    fn rk4(&self, st: &mut AmplitudeField1) {
        let n = st.f.len();
        let dt = self.dt;
        let mut k = [
            AmplitudeField1::zeros(n),
            AmplitudeField1::zeros(n),
            AmplitudeField1::zeros(n),
            AmplitudeField1::zeros(n),
        ];
        let mut tmp = st.clone();
        let axpy = |base: &AmplitudeField1, k: &AmplitudeField1, h: f64, out: &mut AmplitudeField1| {
            for j in 0..n {
                out.f[j] = base.f[j] + k.f[j] * h;
                out.e[j] = base.e[j] + k.e[j] * h;
                out.s[j] = base.s[j] + k.s[j] * h;
            }
        };
        self.rhs(st, &mut k[0]);
        axpy(st, &k[0], 0.5 * dt, &mut tmp);
        self.rhs(&tmp, &mut k[1]);
        axpy(st, &k[1], 0.5 * dt, &mut tmp);
        self.rhs(&tmp, &mut k[2]);
        axpy(st, &k[2], dt, &mut tmp);
        self.rhs(&tmp, &mut k[3]);
        let h = dt / 6.0;
        for j in 0..n {
            st.f[j] += (k[0].f[j] + k[1].f[j] * 2.0 + k[2].f[j] * 2.0 + k[3].f[j]) * h;
            st.e[j] += (k[0].e[j] + k[1].e[j] * 2.0 + k[2].e[j] * 2.0 + k[3].e[j]) * h;
            st.s[j] += (k[0].s[j] + k[1].s[j] * 2.0 + k[2].s[j] * 2.0 + k[3].s[j]) * h;
        }
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut AmplitudeField1) -> Result<()> {
        match self.scheme {
            Scheme::SplitStep => {
                self.local_half_step(state);
                let mut scratch = self.shift.scratch();
                self.shift.apply(&mut state.f, &mut scratch);
                self.local_half_step(state);
            }
            Scheme::UpwindRk4 => self.rk4(state),
        }
        for (j, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                state.e[j] = ZERO;
                state.s[j] = ZERO;
            }
        }
        state.time += self.dt;
        if !state.f.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return Err(CitError::Numerical(format!(
                "non-finite amplitude at t = {}",
                state.time
            )));
        }
        Ok(())
    }

    /// Steps until `t_end`, calling `observe` after every step.
    pub fn run<F>(&self, state: &mut AmplitudeField1, t_end: f64, mut observe: F) -> Result<()>
    where
        F: FnMut(&AmplitudeField1),
    {
        let n_steps = ((t_end - state.time) / self.dt).round().max(0.0) as usize;
        for _ in 0..n_steps {
            self.step(state)?;
            observe(state);
        }
        Ok(())
    }
}

/// Time trace of the photon amplitude at a fixed detector plane.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorTrace1 {
    pub z_detector: f64,
    pub times: Vec<f64>,
    #[serde(skip)]
    pub amplitude: Vec<Complex64>,
    pub norms: Vec<f64>,
}

impl DetectorTrace1 {
    pub fn intensity(&self) -> Vec<f64> {
        self.amplitude.iter().map(|x| x.norm_sqr()).collect()
    }
}

/// Runs `state` to `t_end` and records the photon amplitude at `z_detector`
/// every `every` steps, including the first and last samples.
pub fn record_detector(
    solver: &Solver1,
    state: &mut AmplitudeField1,
    z_detector: f64,
    t_end: f64,
    every: usize,
) -> Result<DetectorTrace1> {
    let j = solver.grid.index_of(z_detector);
    let dz = solver.grid.dz();
    let mut trace = DetectorTrace1 {
        z_detector: solver.grid.z(j),
        ..Default::default()
    };
    let mut push = |st: &AmplitudeField1| {
        trace.times.push(st.time);
        trace.amplitude.push(st.f[j]);
        trace.norms.push(st.norm(dz));
    };
    push(state);
    let every = every.max(1);
    let total = ((t_end - state.time) / solver.dt).round().max(0.0) as usize;
    let mut k = 0;
    solver.run(state, t_end, |st| {
        k += 1;
        if k % every == 0 || k == total {
            push(st);
        }
    })?;
    Ok(trace)
}

/// Analytic transport of an adiabatic single-photon pulse through the slab.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticReference {
    pub v1: f64,
    /// Time spent inside the medium, L / v1.
    pub transit_time: f64,
    /// Delay relative to vacuum propagation, L (1/v1 − 1/c).
    pub excess_delay: f64,
    /// Spatial compression inside the medium, v1 / c.
    pub compression: f64,
    pub t_p: f64,
    pub center: f64,
    pub c: f64,
}

impl AdiabaticReference {
    /// Arrival time of the pulse centre at a plane behind the medium.
    pub fn arrival_time(&self, z: f64) -> f64 {
        (z - self.center) / self.c + self.excess_delay
    }

    /// Predicted output intensity at a plane behind the medium, normalized as
    /// the input pulse (unit photon number).
    pub fn output_intensity(&self, z: f64, t: f64) -> f64 {
        let width = self.c * self.t_p;
        let norm = (2.0 / std::f64::consts::PI).sqrt() / width;
        let x = (self.c * (t - self.arrival_time(z))) / width;
        norm * (-2.0 * x * x).exp()
    }
}

pub fn adiabatic_reference(pulse: &PulseSpec, p: &SystemParams) -> AdiabaticReference {
    let (v1, _) = p.group_velocities();
    AdiabaticReference {
        v1,
        transit_time: p.length / (v1 * p.c),
        excess_delay: p.length / p.c * (1.0 / v1 - 1.0),
        compression: v1,
        t_p: pulse.t_p,
        center: pulse.center,
        c: p.c,
    }
}

/// Sum-weighted centroid and RMS width of a density on the grid.
pub fn centroid_and_width(z: &[f64], density: &[f64]) -> (f64, f64) {
    let total: f64 = density.iter().sum();
    let mean = z.iter().zip(density).map(|(z, d)| z * d).sum::<f64>() / total;
    let var = z
        .iter()
        .zip(density)
        .map(|(z, d)| (z - mean).powi(2) * d)
        .sum::<f64>()
        / total;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Medium;

    fn vacuum(n: usize) -> Grid1D {
        Grid1D::new(0.0, 10.0, n, Medium::Vacuum).unwrap()
    }

    #[test]
    fn initial_pulse_is_normalized_and_outside() {
        let grid = Grid1D::with_slab(0.0, 10.0, 1024, 4.0, 5.0).unwrap();
        // Amplitude standard deviation 0.25.
        let pulse = PulseSpec::gaussian(0.25 * 2f64.sqrt(), 2.0, 1.0).unwrap();
        let st = initial_gaussian(&grid, &pulse).unwrap();
        assert!((st.norm(grid.dz()) - 1.0).abs() < 1e-12);
        assert!(st.e.iter().chain(&st.s).all(|x| *x == ZERO));

        let bad = PulseSpec::gaussian(0.5, 3.8, 1.0).unwrap();
        assert!(matches!(initial_gaussian(&grid, &bad), Err(CitError::Setup(_))));
    }

    #[test]
    fn fig6_marginal_shape() {
        let grid = Grid1D::with_slab(0.0, 12.0, 1024, 4.5, 5.5).unwrap();
        let pulse = PulseSpec::gaussian(0.5f64.sqrt(), 2.0, 1.0).unwrap();
        let st = initial_gaussian(&grid, &pulse).unwrap();
        let j0 = grid.index_of(2.0);
        for j in [j0 + 10, j0 + 40, j0 - 25] {
            let (z, z0) = (grid.z(j), grid.z(j0));
            let ratio = st.f[j].re / st.f[j0].re;
            let expected = (-2.0 * ((z - 2.0).powi(2) - (z0 - 2.0).powi(2))).exp();
            assert!((ratio - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn courant_violation_is_rejected() {
        let p = SystemParams::natural(1.0, 1.0, 0.0);
        let g = vacuum(100);
        assert!(matches!(
            Solver1::new(g, p, Scheme::UpwindRk4, 0.095),
            Err(CitError::Config(_))
        ));
        assert!(Solver1::new(g, p, Scheme::UpwindRk4, 0.09).is_ok());
    }

    #[test]
    fn free_advection_moves_at_c() {
        let p = SystemParams::natural(1.0, 0.0, 0.0);
        let grid = vacuum(512);
        let pulse = PulseSpec::gaussian(0.5, 3.0, 1.0).unwrap();
        for scheme in [Scheme::SplitStep, Scheme::UpwindRk4] {
            let solver = Solver1::new(grid, p, scheme, 0.5 * grid.dz()).unwrap();
            let mut st = initial_gaussian(&grid, &pulse).unwrap();
            solver.run(&mut st, 1.0, |_| {}).unwrap();
            let (c0, _) = centroid_and_width(&grid.points(), &st.photon_density());
            assert!((c0 - 4.0).abs() <= grid.dz(), "{scheme:?}: {c0}");
        }
    }

    #[test]
    fn split_step_conserves_norm_without_decay() {
        let p = SystemParams::natural(50.0, 50.0, 0.0);
        let grid = Grid1D::with_slab(0.0, 8.0, 512, 3.0, 4.0).unwrap();
        let pulse = PulseSpec::gaussian(0.4, 1.5, 1.0).unwrap();
        let solver = Solver1::new(grid, p, Scheme::SplitStep, grid.dz()).unwrap();
        let mut st = initial_gaussian(&grid, &pulse).unwrap();
        solver.run(&mut st, 3.0, |_| {}).unwrap();
        assert!((st.norm(grid.dz()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reference_arithmetic() {
        let p = SystemParams::natural(3.0, 3.0, 1.0);
        let pulse = PulseSpec::gaussian(0.7, 2.0, 1.0).unwrap();
        let r = adiabatic_reference(&pulse, &p);
        assert!((r.excess_delay - 1.0).abs() < 1e-14);
        assert!((r.transit_time - 2.0).abs() < 1e-14);
        assert!((r.compression - 0.5).abs() < 1e-15);

        // No atoms: identity transport.
        let mut q = SystemParams::natural(3.0, 0.0, 1.0);
        q.probe_coupling = 0.0;
        let r = adiabatic_reference(&pulse, &q);
        assert_eq!(r.excess_delay, 0.0);
        assert_eq!(r.compression, 1.0);
        let z: f64 = 5.0;
        let t: f64 = 3.0;
        let x = (z - 2.0 - t) / 0.7;
        let input = (2.0 / std::f64::consts::PI).sqrt() / 0.7 * (-2.0 * x * x).exp();
        assert!((r.output_intensity(z, t) - input).abs() < 1e-14);
    }

    #[test]
    fn nan_is_reported() {
        let p = SystemParams::natural(1.0, 1.0, 0.0);
        let grid = vacuum(64);
        let solver = Solver1::new(grid, p, Scheme::SplitStep, grid.dz()).unwrap();
        let mut st = AmplitudeField1::zeros(64);
        st.f[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(solver.step(&mut st), Err(CitError::Numerical(_))));
    }
}
