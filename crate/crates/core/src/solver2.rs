//! Propagation of the two-excitation amplitudes `ff, ef, ee, sf, es, ss` on
//! a periodic square grid, driven by the coupling table in [`crate::eom`].
//!
//! Fields are stored as full `n × n` arrays, row-major with the second
//! coordinate contiguous. Exchange-symmetric fields are re-symmetrized after
//! every step.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::darkstate::group_velocity_exact;
use crate::eom::{pair_allowed, ArgOrder, Component, EomCoefficients, Rate, WeightOn, COMPONENTS};
use crate::error::{CitError, Result};
use crate::grid::{Grid1D, SpectralShift};
use crate::params::{PulseSpec, SystemParams};
use crate::solver1::{sum_abs2, Scheme};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Propagator entries smaller than this are dropped.
const DROP: f64 = 1e-15;

/// Edge of the square tiles used for cache-friendly pair loops.
const TILE: usize = 32;

/// Largest supported grid edge.
pub const MAX_POINTS_2D: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeField2 {
    pub n: usize,
    /// Components in the order of [`COMPONENTS`].
    pub fields: [Vec<Complex64>; 6],
    pub time: f64,
}

impl AmplitudeField2 {
    pub fn zeros(n: usize) -> Self {
        AmplitudeField2 {
            n,
            fields: std::array::from_fn(|_| vec![ZERO; n * n]),
            time: 0.0,
        }
    }

    pub fn component(&self, k: usize) -> &[Complex64] {
        &self.fields[k]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.fields[k]
    }

    pub fn get(&self, c: Component) -> &[Complex64] {
        &self.fields[c.index()]
    }

    pub fn get_mut(&mut self, c: Component) -> &mut [Complex64] {
        &mut self.fields[c.index()]
    }

    /// `Σ_k ∫∫ |X_k|² dz1 dz2`.
    pub fn norm(&self, dz: f64) -> f64 {
        self.fields.iter().map(|f| sum_abs2(f)).sum::<f64>() * dz * dz
    }

    pub fn component_norm(&self, c: Component, dz: f64) -> f64 {
        sum_abs2(self.get(c)) * dz * dz
    }

    /// Replaces `ff, ee, ss` by their exchange-symmetric parts.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        for c in COMPONENTS.iter().filter(|c| c.is_symmetric()) {
            symmetrize_square(&mut self.fields[c.index()], n);
        }
    }

    /// Largest `|X(z1,z2) − X(z2,z1)|` over the symmetric fields.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for c in COMPONENTS.iter().filter(|c| c.is_symmetric()) {
            let x = &self.fields[c.index()];
            for i in 0..n {
                for j in i + 1..n {
                    worst = worst.max((x[i * n + j] - x[j * n + i]).norm());
                }
            }
        }
        worst
    }

    /// Photon-pair density `|ff|²`.
    pub fn pair_density(&self) -> Vec<f64> {
        self.get(Component::Ff).iter().map(|x| x.norm_sqr()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.fields
            .iter()
            .all(|f| f.iter().all(|x| x.re.is_finite() && x.im.is_finite()))
    }
}

/// Two photons in identical copies of the single-photon envelope `f`:
/// `ff(z1, z2) = f(z1) f(z2)`.
pub fn product_state(f: &[Complex64]) -> AmplitudeField2 {
    let n = f.len();
    let mut out = AmplitudeField2::zeros(n);
    let ff = out.get_mut(Component::Ff);
    for i in 0..n {
        for j in 0..n {
            ff[i * n + j] = f[i] * f[j];
        }
    }
    out
}

/// Unit-norm product of two Gaussian photons, both outside the medium.
pub fn initial_gaussian2(grid: &Grid1D, pulse: &PulseSpec) -> Result<AmplitudeField2> {
    let one = crate::solver1::initial_gaussian(grid, pulse)?;
    Ok(product_state(&one.f))
}

/// Two-excitation dark configuration `(ff, sf, ss) ∝ (√2G², −2Gg√n, g²n)`
/// with spatial profile `profile(z1, z2)` (must be symmetric), unit norm.
pub fn dark_state2<F>(grid: &Grid1D, p: &SystemParams, profile: F) -> AmplitudeField2
where
    F: Fn(f64, f64) -> Complex64,
{
    let n = grid.n_points;
    let (g_c, g_p) = (p.cavity_coupling, p.probe_coupling);
    let coef = [
        (Component::Ff, 2f64.sqrt() * g_c * g_c),
        (Component::Sf, -2.0 * g_c * g_p),
        (Component::Ss, g_p * g_p),
    ];
    let z = grid.points();
    let mut out = AmplitudeField2::zeros(n);
    for (c, k) in coef {
        let x = out.get_mut(c);
        for i in 0..n {
            for j in 0..n {
                x[i * n + j] = profile(z[i], z[j]) * k;
            }
        }
    }
    let norm = out.norm(grid.dz()).sqrt();
    for f in out.fields.iter_mut() {
        f.iter_mut().for_each(|x| *x /= norm);
    }
    out
}

/// Nonzero entries of a cached local propagator.
#[derive(Debug, Clone)]
struct PairBlock {
    /// Variables that may be nonzero for this pair.
    vars: Vec<u8>,
    /// Sparse propagator over `dt / 2`.
    half: Vec<(u8, u8, Complex64)>,
    /// Sparse propagator over `dt`.
    full: Vec<(u8, u8, Complex64)>,
}

const IDENTITY: u32 = u32::MAX;

/// Stepper for [`AmplitudeField2`].
pub struct Solver2 {
    pub grid: Grid1D,
    pub params: SystemParams,
    pub scheme: Scheme,
    pub dt: f64,
    pub eom: EomCoefficients,
    weights: Vec<f64>,
    /// Grid indices with nonzero atomic density.
    medium: Vec<usize>,
    /// Block index per ordered pair `(i, j)` with `i <= j`.
    block_of: Vec<u32>,
    blocks: Vec<PairBlock>,
    shift: SpectralShift,
}


impl Solver2 {
    pub fn new(grid: Grid1D, params: SystemParams, scheme: Scheme, dt: f64) -> Result<Self> {
        Self::with_eom(grid, params, scheme, dt, crate::eom::derive_eom())
    }

    pub fn with_eom(
        grid: Grid1D,
        params: SystemParams,
        scheme: Scheme,
        dt: f64,
        eom: EomCoefficients,
    ) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        if grid.n_points > MAX_POINTS_2D {
            return Err(CitError::Capacity(format!(
                "two-photon grid is limited to {MAX_POINTS_2D} points per axis"
            )));
        }
        if grid.absorber.is_some() {
            return Err(CitError::Setup(
                "the two-photon solver does not support an absorber".into(),
            ));
        }
        let n = grid.n_points;
        let dz = grid.dz();
        let courant = params.c * dt / dz;
        if !(dt > 0.0) || courant > scheme.max_courant() {
            return Err(CitError::Config(format!(
                "Courant number c*dt/dz = {courant:.3} exceeds {} for {scheme:?}",
                scheme.max_courant()
            )));
        }
        let weights = grid.weights();
        let mut distinct: Vec<f64> = Vec::new();
        let widx: Vec<usize> = weights
            .iter()
            .map(|&w| match distinct.iter().position(|&d| d == w) {
                Some(i) => i,
                None => {
                    distinct.push(w);
                    distinct.len() - 1
                }
            })
            .collect();

        let mut block_of = vec![IDENTITY; n * n];
        let mut blocks = Vec::new();
        if scheme == Scheme::SplitStep {
            let mut cache: HashMap<(usize, usize), u32> = HashMap::new();
            for i in 0..n {
                for j in i..n {
                    let (wa, wb) = (weights[i], weights[j]);
                    if wa == 0.0 && wb == 0.0 {
                        continue;
                    }
                    let key = (widx[i], widx[j]);
                    let id = *cache.entry(key).or_insert_with(|| {
                        let gen = eom.pair_generator(&params, wa, wb);
                        let allowed = pair_allowed(wa, wb);
                        let sparse = |tau: f64| {
                            let m = (gen * Complex64::new(tau, 0.0)).exp();
                            let mut entries = Vec::new();
                            for r in 0..12 {
                                for c in 0..12 {
                                    if allowed[r] && allowed[c] && m[(r, c)].norm() > DROP {
                                        entries.push((r as u8, c as u8, m[(r, c)]));
                                    }
                                }
                            }
                            entries
                        };
                        let vars = (0..12u8).filter(|&v| allowed[v as usize]).collect();
                        blocks.push(PairBlock {
                            vars,
                            half: sparse(0.5 * dt),
                            full: sparse(dt),
                        });
                        (blocks.len() - 1) as u32
                    });
                    block_of[i * n + j] = id;
                }
            }
        }
        let shift = SpectralShift::new(n, dz, params.c * dt);
        let medium = (0..n).filter(|&i| weights[i] != 0.0).collect();
        Ok(Solver2 {
            grid,
            params,
            scheme,
            dt,
            eom,
            weights,
            medium,
            block_of,
            blocks,
            shift,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the pair propagators over `dt / 2` or, with `full`, over `dt`.
    fn local_step(&self, st: &mut AmplitudeField2, full: bool) {
        let n = st.n;
        let fields = &mut st.fields;
        // Tiled so that the mirrored element (j, i) stays in cache.
        for ib in (0..n).step_by(TILE) {
            for jb in (ib..n).step_by(TILE) {
                for i in ib..(ib + TILE).min(n) {
                    for j in jb.max(i)..(jb + TILE).min(n) {
                        let id = self.block_of[i * n + j];
                        if id == IDENTITY {
                            continue;
                        }
                        let block = &self.blocks[id as usize];
                        let at = |v: u8| {
                            let k = v as usize / 2;
                            (k, if v % 2 == 0 { i * n + j } else { j * n + i })
                        };
                        let mut x = [ZERO; 12];
                        for &v in &block.vars {
                            let (k, idx) = at(v);
                            x[v as usize] = fields[k][idx];
                        }
                        let mut y = [ZERO; 12];
                        let entries = if full { &block.full } else { &block.half };
                        for &(r, c, v) in entries {
                            y[r as usize] += v * x[c as usize];
                        }
                        for &v in &block.vars {
                            if i == j && v % 2 == 1 {
                                continue;
                            }
                            let (k, idx) = at(v);
                            fields[k][idx] = y[v as usize];
                        }
                    }
                }
            }
        }
    }

    /// Shifts every row, or only rows whose index lies in the medium when
    /// `medium_rows` is set (the other rows are identically zero).
    fn shift_rows(&self, x: &mut [Complex64], medium_rows: bool) {
        let n = self.grid.n_points;
        let w = &self.weights;
        x.par_chunks_mut(n).enumerate().for_each_init(
            || self.shift.scratch(),
            |scratch, (i, row)| {
                if !medium_rows || w[i] != 0.0 {
                    self.shift.apply(row, scratch)
                }
            },
        );
    }

    fn advect_spectral(&self, st: &mut AmplitudeField2) {
        let n = st.n;
        for c in COMPONENTS {
            let (a1, a2) = c.advected_axes();
            let (atomic1, _) = c.atomic_axes();
            let x = st.get_mut(c);
            if a2 {
                self.shift_rows(x, atomic1);
            }
            if a1 {
                transpose(x, n);
                self.shift_rows(x, false);
                transpose(x, n);
            }
        }
    }

    /// Time derivative for the RK4 scheme (upwind advection).
    fn rhs(&self, st: &AmplitudeField2, out: &mut AmplitudeField2) {
        let n = st.n;
        let w = &self.weights;
        let p = &self.params;
        let inv_dz = p.c / self.grid.dz();
        for c in COMPONENTS {
            let (ax1, ax2) = c.atomic_axes();
            let (ad1, ad2) = c.advected_axes();
            let decay = c.decay_rate(p);
            let terms: Vec<_> = self.eom.couplings.iter().filter(|t| t.target == c).collect();
            let x = st.get(c);
            let target = &mut out.fields[c.index()];
            target
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| {
                    for j in 0..n {
                        if (ax1 && w[i] == 0.0) || (ax2 && w[j] == 0.0) {
                            row[j] = ZERO;
                            continue;
                        }
                        let idx = i * n + j;
                        let mut acc = -decay * x[idx];
                        if ad1 {
                            acc -= (x[idx] - x[((i + n - 1) % n) * n + j]) * inv_dz;
                        }
                        if ad2 {
                            acc -= (x[idx] - x[i * n + (j + n - 1) % n]) * inv_dz;
                        }
                        for t in &terms {
                            let src = &st.fields[t.source.index()];
                            let v = match t.args {
                                ArgOrder::Same => src[idx],
                                ArgOrder::Swapped => src[j * n + i],
                            };
                            let rate = match t.rate {
                                Rate::Probe => p.probe_coupling,
                                Rate::Cavity => p.cavity_coupling,
                            };
                            let wt = match t.weight {
                                WeightOn::None => 1.0,
                                WeightOn::First => w[i],
                                WeightOn::Second => w[j],
                            };
                            acc += Complex64::new(0.0, t.factor * rate * wt) * v;
                        }
                        row[j] = acc;
                    }
                });
        }
    }

    fn rk4(&self, st: &mut AmplitudeField2) {
        let n = st.n;
        let dt = self.dt;
        let mut k: Vec<AmplitudeField2> = (0..4).map(|_| AmplitudeField2::zeros(n)).collect();
        let mut tmp = AmplitudeField2::zeros(n);
        let axpy = |base: &AmplitudeField2, k: &AmplitudeField2, h: f64, out: &mut AmplitudeField2| {
            for c in 0..6 {
                for ((o, b), d) in out.fields[c].iter_mut().zip(&base.fields[c]).zip(&k.fields[c]) {
                    *o = b + d * h;
                }
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
        for c in 0..6 {
            for (idx, x) in st.fields[c].iter_mut().enumerate() {
                *x += (k[0].fields[c][idx]
                    + k[1].fields[c][idx] * 2.0
                    + k[2].fields[c][idx] * 2.0
                    + k[3].fields[c][idx])
                    * h;
            }
        }
    }

    fn enforce_medium(&self, st: &mut AmplitudeField2) {
        let n = st.n;
        let w = &self.weights;
        for c in COMPONENTS {
            let (ax1, ax2) = c.atomic_axes();
            if !ax1 && !ax2 {
                continue;
            }
            let x = st.get_mut(c);
            for i in 0..n {
                for j in 0..n {
                    if (ax1 && w[i] == 0.0) || (ax2 && w[j] == 0.0) {
                        x[i * n + j] = ZERO;
                    }
                }
            }
        }
    }

    /// Symmetrizes `ff` everywhere and `ee, ss` on the medium block, the
    /// only place where they can be nonzero.
    fn symmetrize(&self, st: &mut AmplitudeField2) {
        let n = st.n;
        symmetrize_square(st.get_mut(Component::Ff), n);
        for c in [Component::Ee, Component::Ss] {
            let x = st.get_mut(c);
            for (a, &i) in self.medium.iter().enumerate() {
                for &j in &self.medium[a + 1..] {
                    let m = (x[i * n + j] + x[j * n + i]) * 0.5;
                    x[i * n + j] = m;
                    x[j * n + i] = m;
                }
            }
        }
    }

    fn is_finite(&self, st: &AmplitudeField2) -> bool {
        let n = st.n;
        let ok = |x: &[Complex64]| x.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        COMPONENTS.iter().all(|&c| {
            let x = st.get(c);
            if c.atomic_axes().0 {
                self.medium.iter().all(|&i| ok(&x[i * n..(i + 1) * n]))
            } else {
                ok(x)
            }
        })
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut AmplitudeField2) -> Result<()> {
        self.advance(state, 1)
    }

    /// Advances `state` by `n_steps` steps. Adjacent split-step half steps
    /// are fused, so intermediate states are not available.
    pub fn advance(&self, state: &mut AmplitudeField2, n_steps: usize) -> Result<()> {
        if state.n != self.grid.n_points {
            return Err(CitError::Setup("state and grid sizes differ".into()));
        }
        if n_steps == 0 {
            return Ok(());
        }
        match self.scheme {
            Scheme::SplitStep => {
                self.local_step(state, false);
                for k in 0..n_steps {
                    self.advect_spectral(state);
                    self.local_step(state, k + 1 < n_steps);
                }
            }
            Scheme::UpwindRk4 => {
                for _ in 0..n_steps {
                    self.rk4(state);
                    self.enforce_medium(state);
                }
            }
        }
        self.symmetrize(state);
        state.time += n_steps as f64 * self.dt;
        if !self.is_finite(state) {
            return Err(CitError::Numerical(format!(
                "non-finite two-photon amplitude at t = {}",
                state.time
            )));
        }
        Ok(())
    }

    /// Runs to `t_end`, calling `observe` after every step.
    pub fn run<F>(&self, state: &mut AmplitudeField2, t_end: f64, observe: F) -> Result<()>
    where
        F: FnMut(&AmplitudeField2),
    {
        self.run_sampled(state, t_end, 1, observe)
    }

    /// Runs to `t_end`, calling `observe` every `every` steps and at the end.
    pub fn run_sampled<F>(
        &self,
        state: &mut AmplitudeField2,
        t_end: f64,
        every: usize,
        mut observe: F,
    ) -> Result<()>
    where
        F: FnMut(&AmplitudeField2),
    {
        let every = every.max(1);
        let mut left = ((t_end - state.time) / self.dt).round().max(0.0) as usize;
        while left > 0 {
            let k = every.min(left);
            self.advance(state, k)?;
            observe(state);
            left -= k;
        }
        Ok(())
    }
}

/// Replaces an `n × n` array by its symmetric part.
fn symmetrize_square(x: &mut [Complex64], n: usize) {
    for ib in (0..n).step_by(TILE) {
        for jb in (ib..n).step_by(TILE) {
            for i in ib..(ib + TILE).min(n) {
                for j in jb.max(i + 1)..(jb + TILE).min(n) {
                    let m = (x[i * n + j] + x[j * n + i]) * 0.5;
                    x[i * n + j] = m;
                    x[j * n + i] = m;
                }
            }
        }
    }
}

fn transpose(x: &mut [Complex64], n: usize) {
    for ib in (0..n).step_by(TILE) {
        for jb in (ib..n).step_by(TILE) {
            for i in ib..(ib + TILE).min(n) {
                for j in jb.max(i + 1)..(jb + TILE).min(n) {
                    x.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Detector data of a two-photon run at the plane `z_d`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorTrace2 {
    pub z_detector: f64,
    pub times: Vec<f64>,
    /// `∫|ff(z_d, z')|² dz' + ½∫|ef(z', z_d)|² dz' + ½∫|sf(z', z_d)|² dz'`.
    pub pair_marginal: Vec<f64>,
    /// `|ff(z_d, z_d)|²`.
    pub coincidence: Vec<f64>,
    pub norms: Vec<f64>,
}

/// Detector quantities of one state.
pub fn detector_sample(state: &AmplitudeField2, j: usize, dz: f64) -> (f64, f64) {
    let n = state.n;
    let ff = state.get(Component::Ff);
    let ef = state.get(Component::Ef);
    let sf = state.get(Component::Sf);
    let row: f64 = ff[j * n..(j + 1) * n].iter().map(|x| x.norm_sqr()).sum();
    let ef_col: f64 = (0..n).map(|i| ef[i * n + j].norm_sqr()).sum();
    let sf_col: f64 = (0..n).map(|i| sf[i * n + j].norm_sqr()).sum();
    (
        (row + 0.5 * ef_col + 0.5 * sf_col) * dz,
        ff[j * n + j].norm_sqr(),
    )
}

/// Two-photon counterpart of [`record_detector`](crate::solver1::record_detector).
pub fn record_detector2(
    solver: &Solver2,
    state: &mut AmplitudeField2,
    z_detector: f64,
    t_end: f64,
    every: usize,
) -> Result<DetectorTrace2> {
    let j = solver.grid.index_of(z_detector);
    let dz = solver.grid.dz();
    let mut trace = DetectorTrace2 {
        z_detector: solver.grid.z(j),
        ..Default::default()
    };
    let mut push = |st: &AmplitudeField2| {
        let (m, c) = detector_sample(st, j, dz);
        trace.times.push(st.time);
        trace.pair_marginal.push(m);
        trace.coincidence.push(c);
        trace.norms.push(st.norm(dz));
    };
    push(state);
    solver.run_sampled(state, t_end, every, &mut push)?;
    Ok(trace)
}

/// Exit times of a photon pair whose leading photon enters the medium at
/// `t = 0` with the second photon a distance `d` behind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicArrival {
    pub lead_exit: f64,
    pub trail_exit: f64,
    /// Separation inside the medium, `d v1 / c`.
    pub compressed_separation: f64,
    /// Whether both photons share the medium at some time.
    pub overlapping: bool,
}

/// Piecewise-velocity model: a photon moves at `c` outside and at the group
/// velocity of the number of photons currently inside.
pub fn kinematic_delay_model(d: f64, p: &SystemParams) -> Result<KinematicArrival> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(CitError::Domain(format!("separation must be >= 0, got {d}")));
    }
    p.validate()?;
    let (v1, v2) = p.group_velocities();
    let (c, l) = (p.c, p.length);
    let dp = d * v1;
    Ok(if dp < l {
        let lead = d / c + (l - dp) / (v2 * c);
        KinematicArrival {
            lead_exit: lead,
            trail_exit: lead + d / c,
            compressed_separation: dp,
            overlapping: true,
        }
    } else {
        KinematicArrival {
            lead_exit: l / (v1 * c),
            trail_exit: d / c + l / (v1 * c),
            compressed_separation: dp,
            overlapping: false,
        }
    })
}

/// Event-driven version of [`kinematic_delay_model`] for any number of
/// photons at initial positions `positions` (medium `[0, L]`). Returns the
/// exit time of each photon in input order.
pub fn kinematic_exit_times(positions: &[f64], p: &SystemParams) -> Result<Vec<f64>> {
    p.validate()?;
    let (c, l) = (p.c, p.length);
    if positions.iter().any(|&x| !x.is_finite() || x > 0.0) {
        return Err(CitError::Domain("photons must start at or before the entrance".into()));
    }
    let r = p.ratio();
    let mut speeds = vec![c];
    for m in 1..=positions.len() {
        speeds.push(group_velocity_exact(m, r)? * c);
    }
    let mut x = positions.to_vec();
    let mut exit = vec![f64::NAN; x.len()];
    let mut t = 0.0;
    let inside = |x: f64| (0.0..l).contains(&x);
    while exit.iter().any(|e| e.is_nan()) {
        let m = x.iter().filter(|&&z| inside(z)).count();
        // Time to the next boundary crossing.
        let mut dt_next = f64::INFINITY;
        let mut v = vec![0.0; x.len()];
        for (k, &z) in x.iter().enumerate() {
            if !exit[k].is_nan() {
                continue;
            }
            v[k] = if inside(z) { speeds[m] } else { c };
            let boundary = if z < 0.0 { 0.0 } else { l };
            dt_next = dt_next.min((boundary - z) / v[k]);
        }
        t += dt_next;
        for k in 0..x.len() {
            if !exit[k].is_nan() {
                continue;
            }
            let boundary = if x[k] < 0.0 { 0.0 } else { l };
            let z = x[k] + v[k] * dt_next;
            x[k] = if (z - boundary).abs() <= 1e-12 * l { boundary } else { z };
            if x[k] >= l {
                exit[k] = t;
            }
        }
    }
    Ok(exit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Medium;

    #[test]
    fn kinematic_branches() {
        let p = SystemParams::natural(1.0, 1.0, 0.0);
        let (v1, v2) = p.group_velocities();
        let a = kinematic_delay_model(0.0, &p).unwrap();
        assert!((a.lead_exit - 1.0 / v2).abs() < 1e-14);
        assert_eq!(a.lead_exit, a.trail_exit);
        let far = kinematic_delay_model(2.5, &p).unwrap();
        assert!(!far.overlapping);
        assert!((far.lead_exit - 1.0 / v1).abs() < 1e-14);
        let dtau = far.lead_exit - a.lead_exit;
        assert!((dtau - (1.0 / v1 - 1.0 / v2)).abs() < 1e-14);
        assert!(kinematic_delay_model(-1.0, &p).is_err());
    }

    #[test]
    fn weak_coupling_delay() {
        let p = SystemParams::natural(0.01 * 30.0, 30.0, 1.0);
        let d = crate::params::derive_quantities(&p).unwrap();
        let (v1, v2) = p.group_velocities();
        let dtau = 1.0 / v1 - 1.0 / v2;
        assert!(((dtau - d.delta_tau_12_approx) / dtau).abs() < 0.01);
    }

    #[test]
    fn event_model_matches_closed_form() {
        let p = SystemParams::natural(1.3, 2.0, 0.0);
        for d in [0.0, 0.1, 0.3, 0.7, 1.5, 4.0, 10.0] {
            let k = kinematic_delay_model(d, &p).unwrap();
            let t = kinematic_exit_times(&[0.0, -d], &p).unwrap();
            assert!((t[0] - k.lead_exit).abs() < 1e-12, "{d}");
            assert!((t[1] - k.trail_exit).abs() < 1e-12, "{d}");
        }
        // Three co-located photons travel at the three-photon velocity.
        let t = kinematic_exit_times(&[0.0, 0.0, 0.0], &p).unwrap();
        let v3 = group_velocity_exact(3, p.ratio()).unwrap();
        assert!(t.iter().all(|&x| (x - 1.0 / v3).abs() < 1e-12));
    }

    #[test]
    fn vacuum_advection_is_diagonal() {
        let p = SystemParams::natural(1.0, 0.0, 0.0);
        let grid = Grid1D::new(0.0, 8.0, 64, Medium::Vacuum).unwrap();
        let pulse = PulseSpec::gaussian(0.6, 2.5, 1.0).unwrap();
        let mut st = initial_gaussian2(&grid, &pulse).unwrap();
        let start = st.clone();
        let solver = Solver2::new(grid, p, Scheme::SplitStep, grid.dz()).unwrap();
        solver.run(&mut st, 8.0 * grid.dz(), |_| {}).unwrap();
        let ff0 = start.get(Component::Ff);
        let ff1 = st.get(Component::Ff);
        for i in 0..64 {
            for j in 0..64 {
                let a = ff0[i * 64 + j];
                let b = ff1[((i + 8) % 64) * 64 + (j + 8) % 64];
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn split_step_conserves_norm_and_symmetry() {
        let p = SystemParams::natural(20.0, 20.0, 0.0);
        let grid = Grid1D::with_slab(0.0, 6.0, 192, 3.0, 4.0).unwrap();
        let pulse = PulseSpec::gaussian(0.3, 1.0, 1.0).unwrap();
        let mut st = initial_gaussian2(&grid, &pulse).unwrap();
        let solver = Solver2::new(grid, p, Scheme::SplitStep, grid.dz()).unwrap();
        let mut worst: f64 = 0.0;
        solver
            .run(&mut st, 2.5, |s| worst = worst.max(s.asymmetry()))
            .unwrap();
        assert!((st.norm(grid.dz()) - 1.0).abs() < 1e-10);
        assert!(worst <= 1e-12);
        // Something entered the medium.
        assert!(st.component_norm(Component::Ss, grid.dz()) > 1e-3);
    }

    #[test]
    fn upwind_vacuum_run_factorizes() {
        // Without atoms the pair evolves as a product of two single photons,
        // including the numerical diffusion of the upwind stencil.
        let mut p = SystemParams::natural(1.0, 0.0, 0.0);
        p.probe_coupling = 0.0;
        let grid = Grid1D::new(0.0, 6.0, 96, Medium::Vacuum).unwrap();
        let pulse = PulseSpec::gaussian(0.3, 2.0, 1.0).unwrap();
        let dt = 0.5 * grid.dz();
        let two = Solver2::new(grid, p, Scheme::UpwindRk4, dt).unwrap();
        let one = crate::solver1::Solver1::new(grid, p, Scheme::UpwindRk4, dt).unwrap();
        let mut s2 = initial_gaussian2(&grid, &pulse).unwrap();
        let mut s1 = crate::solver1::initial_gaussian(&grid, &pulse).unwrap();
        two.run(&mut s2, 1.0, |_| {}).unwrap();
        one.run(&mut s1, 1.0, |_| {}).unwrap();
        // RK4 of the sum matches the product of RK4 steps up to O(dt⁵).
        let expected = product_state(&s1.f);
        let err = s2
            .get(Component::Ff)
            .iter()
            .zip(expected.get(Component::Ff))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        assert!((s2.norm(grid.dz()) - s1.norm(grid.dz()).powi(2)).abs() < 1e-4);
        assert!(s1.norm(grid.dz()) < 0.95);
    }

    #[test]
    fn rejects_bad_setups() {
        let p = SystemParams::natural(1.0, 1.0, 0.0);
        let grid = Grid1D::new(0.0, 1.0, 16, Medium::Vacuum).unwrap();
        assert!(matches!(
            Solver2::new(grid, p, Scheme::UpwindRk4, grid.dz()),
            Err(CitError::Config(_))
        ));
        let absorbing = grid.with_absorber(0.8, 1.0).unwrap();
        assert!(Solver2::new(absorbing, p, Scheme::SplitStep, grid.dz()).is_err());
    }

    #[test]
    fn dark_configuration_is_normalized() {
        let p = SystemParams::natural(2.0, 3.0, 0.0);
        let grid = Grid1D::new(0.0, 8.0, 32, Medium::Uniform).unwrap();
        let st = dark_state2(&grid, &p, |a, b| {
            Complex64::new((-(a - 4.0).powi(2) - (b - 4.0).powi(2)).exp(), 0.0)
        });
        assert!((st.norm(grid.dz()) - 1.0).abs() < 1e-12);
        let ratio = st.get(Component::Ss)[5 * 32 + 7] / st.get(Component::Ff)[5 * 32 + 7];
        assert!((ratio.re - 9.0 / (2f64.sqrt() * 4.0)).abs() < 1e-12);
    }
}
