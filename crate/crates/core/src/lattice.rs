//! Brute-force reference dynamics on a lattice of probe modes.
//!
//! Every site `j` carries three bosonic modes: a probe photon `P_j`, a
//! collective excitation of the excited level `E_j` and a collective spin
//! excitation `S_j`. The cavity photon number equals the number of spin
//! excitations. With `i ∂t ψ = H ψ`:
//!
//! ```text
//! H = Σ K_jl P_j† P_l − Σ g√n w_j (E_j† P_j + h.c.) − G Σ (S_j† E_j a_c† + h.c.)
//!     − iγ N_E − iκ/2 N_S
//! ```
//!
//! Fock states with one or two excitations are enumerated explicitly and the
//! Schrödinger equation is integrated with a Taylor-series propagator.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CitError, Result};
use crate::grid::{wave_numbers, Grid1D, Medium};
use crate::params::SystemParams;
use crate::solver1::AmplitudeField1;
use crate::solver2::AmplitudeField2;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest basis that [`build_hamiltonian`] accepts.
pub const MAX_DIMENSION: usize = 200_000;

/// Photon hopping on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    /// Exact `ω_k = c k` on the ring.
    #[default]
    Spectral,
    /// First-order upwind difference, the same stencil as the solvers.
    Upwind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGrid {
    pub n_sites: usize,
    pub spacing: f64,
    pub z_min: f64,
    pub periodic: bool,
    pub medium_mask: Vec<f64>,
}

impl ModeGrid {
    /// Ring of `n_sites` sites and circumference `length`, filled with atoms.
    pub fn uniform_ring(n_sites: usize, length: f64) -> Result<Self> {
        let g = ModeGrid {
            n_sites,
            spacing: length / n_sites as f64,
            z_min: 0.0,
            periodic: true,
            medium_mask: vec![1.0; n_sites],
        };
        g.validate()?;
        Ok(g)
    }

    /// Ring matching a solver grid, including its medium profile.
    pub fn from_grid(grid: &Grid1D) -> Result<Self> {
        let g = ModeGrid {
            n_sites: grid.n_points,
            spacing: grid.dz(),
            z_min: grid.z_min,
            periodic: true,
            medium_mask: grid.weights(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 8 {
            return Err(CitError::Setup("lattice needs at least 8 sites".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(CitError::Setup("lattice spacing must be positive".into()));
        }
        if self.medium_mask.len() != self.n_sites
            || !self.medium_mask.iter().all(|w| (0.0..=1.0).contains(w))
        {
            return Err(CitError::Setup("medium mask must hold one weight in [0,1] per site".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.spacing * self.n_sites as f64
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.spacing
    }

    /// Solver grid covering the same sites.
    pub fn to_grid(&self, medium: Medium) -> Result<Grid1D> {
        Grid1D::new(self.z_min, self.z_min + self.length(), self.n_sites, medium)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeKind {
    Photon,
    Excited,
    Spin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode {
    pub kind: ModeKind,
    pub site: usize,
}

/// Occupied modes in non-decreasing order; repeated entries are multiply
/// occupied.
pub type FockLabel = Vec<Mode>;

/// Enumeration of all Fock states with a fixed number of excitations.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub sector: usize,
    pub n_sites: usize,
    pub states: Vec<FockLabel>,
    index: HashMap<FockLabel, usize>,
}

impl SectorBasis {
    pub fn new(n_sites: usize, sector: usize) -> Result<Self> {
        Self::with_sectors(n_sites, &[sector])
    }

    /// Basis spanning several excitation numbers at once.
    pub fn with_sectors(n_sites: usize, sectors: &[usize]) -> Result<Self> {
        let mut states = Vec::new();
        for &k in sectors {
            let dim = analytic_dimension(n_sites, k)
                .ok_or_else(|| CitError::Capacity(format!("sector {k} is not supported")))?;
            if states.len() + dim > MAX_DIMENSION {
                return Err(CitError::Capacity(format!(
                    "basis dimension exceeds {MAX_DIMENSION}"
                )));
            }
            let modes: Vec<Mode> = [ModeKind::Photon, ModeKind::Excited, ModeKind::Spin]
                .iter()
                .flat_map(|&kind| (0..n_sites).map(move |site| Mode { kind, site }))
                .collect();
            multisets(&modes, k, 0, &mut Vec::new(), &mut states);
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(SectorBasis {
            sector: sectors.iter().copied().max().unwrap_or(0),
            n_sites,
            states,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, label: &[Mode]) -> Option<usize> {
        self.index.get(label).copied()
    }
}

fn multisets(modes: &[Mode], k: usize, start: usize, cur: &mut Vec<Mode>, out: &mut Vec<FockLabel>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..modes.len() {
        cur.push(modes[i]);
        multisets(modes, k, i, cur, out);
        cur.pop();
    }
}

/// Number of Fock states with `sector` excitations on `n` sites.
pub fn analytic_dimension(n: usize, sector: usize) -> Option<usize> {
    match sector {
        0 => Some(1),
        1 => Some(3 * n),
        2 => Some(3 * n * (n + 1) / 2 + 3 * n * n),
        _ => None,
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<Complex64>,
}

impl SparseOperator {
    fn from_triplets(dim: usize, mut t: Vec<(usize, usize, Complex64)>) -> Self {
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.par_iter_mut().enumerate().with_min_len(256).for_each(|(r, out)| {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        });
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.dim];
        for (c, v) in self.cols.iter().zip(&self.vals) {
            col[*c] += v.norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// `max |H_rc − conj(H_cr)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                worst = worst.max((self.vals[k] - self.get(c, r).conj()).norm());
            }
        }
        worst
    }
}

/// Hopping amplitudes `K_{j, j-d}` as a function of the offset `d`.
fn hopping_kernel(grid: &ModeGrid, c: f64, dispersion: Dispersion) -> Result<Vec<Complex64>> {
    let n = grid.n_sites;
    let dz = grid.spacing;
    match dispersion {
        Dispersion::Spectral => {
            if !grid.periodic {
                return Err(CitError::Setup("spectral dispersion needs a periodic lattice".into()));
            }
            let k = wave_numbers(n, dz);
            Ok((0..n)
                .map(|d| {
                    k.iter()
                        .map(|&kk| Complex64::from_polar(c * kk / n as f64, kk * d as f64 * dz))
                        .sum()
                })
                .collect())
        }
        Dispersion::Upwind => {
            let mut kern = vec![ZERO; n];
            kern[0] = Complex64::new(0.0, -c / dz);
            kern[1] = Complex64::new(0.0, c / dz);
            Ok(kern)
        }
    }
}

fn occupation(label: &[Mode], m: Mode) -> usize {
    label.iter().filter(|&&x| x == m).count()
}

fn replace(label: &[Mode], from: Mode, to: Mode) -> FockLabel {
    let mut out = label.to_vec();
    let pos = out.iter().position(|&x| x == from).expect("mode is occupied");
    out[pos] = to;
    out.sort();
    out
}

/// Options for [`build_hamiltonian`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HamiltonianOptions {
    pub dispersion: Dispersion,
    /// Drop photon hopping and keep only the local light-matter terms.
    pub interaction_only: bool,
}

/// Effective non-Hermitian Hamiltonian on `basis`.
pub fn build_hamiltonian(
    grid: &ModeGrid,
    p: &SystemParams,
    basis: &SectorBasis,
    opts: HamiltonianOptions,
) -> Result<SparseOperator> {
    grid.validate()?;
    p.validate()?;
    if basis.n_sites != grid.n_sites {
        return Err(CitError::Setup("basis and lattice sizes differ".into()));
    }
    if basis.dim() > MAX_DIMENSION {
        return Err(CitError::Capacity(format!("basis dimension exceeds {MAX_DIMENSION}")));
    }
    let n = grid.n_sites;
    let kern = if opts.interaction_only {
        vec![ZERO; n]
    } else {
        hopping_kernel(grid, p.c, opts.dispersion)?
    };
    let upwind = opts.dispersion == Dispersion::Upwind;
    let big_g = p.cavity_coupling;
    let mut triplets = Vec::new();

    for (col, label) in basis.states.iter().enumerate() {
        let mut push = |target: FockLabel, amp: Complex64| {
            let row = basis
                .index_of(&target)
                .expect("excitation-conserving term leaves the basis");
            triplets.push((row, col, amp));
        };
        let n_e = label.iter().filter(|m| m.kind == ModeKind::Excited).count();
        let n_s = label.iter().filter(|m| m.kind == ModeKind::Spin).count();
        if n_e + n_s > 0 {
            push(
                label.clone(),
                Complex64::new(0.0, -(p.gamma * n_e as f64 + 0.5 * p.kappa * n_s as f64)),
            );
        }
        let mut distinct = label.clone();
        distinct.dedup();
        for &m in &distinct {
            let occ = occupation(label, m) as f64;
            let j = m.site;
            match m.kind {
                ModeKind::Photon => {
                    for (d, &amp) in kern.iter().enumerate() {
                        if amp == ZERO {
                            continue;
                        }
                        let target_site = (j + d) % n;
                        if upwind && !grid.periodic && j + d >= n {
                            continue;
                        }
                        let to = Mode {
                            kind: ModeKind::Photon,
                            site: target_site,
                        };
                        if to == m {
                            push(label.clone(), amp * occ);
                        } else {
                            let f = (occ * (occupation(label, to) + 1) as f64).sqrt();
                            push(replace(label, m, to), amp * f);
                        }
                    }
                    let gw = p.probe_coupling * grid.medium_mask[j];
                    if gw != 0.0 {
                        let to = Mode {
                            kind: ModeKind::Excited,
                            site: j,
                        };
                        let f = (occ * (occupation(label, to) + 1) as f64).sqrt();
                        push(replace(label, m, to), Complex64::new(-gw * f, 0.0));
                    }
                }
                ModeKind::Excited => {
                    let gw = p.probe_coupling * grid.medium_mask[j];
                    if gw != 0.0 {
                        let to = Mode {
                            kind: ModeKind::Photon,
                            site: j,
                        };
                        let f = (occ * (occupation(label, to) + 1) as f64).sqrt();
                        push(replace(label, m, to), Complex64::new(-gw * f, 0.0));
                    }
                    let to = Mode {
                        kind: ModeKind::Spin,
                        site: j,
                    };
                    // Cavity photon created alongside the spin excitation.
                    let f = (occ * (occupation(label, to) + 1) as f64 * (n_s + 1) as f64).sqrt();
                    push(replace(label, m, to), Complex64::new(-big_g * f, 0.0));
                }
                ModeKind::Spin => {
                    let to = Mode {
                        kind: ModeKind::Excited,
                        site: j,
                    };
                    let f = (occ * (occupation(label, to) + 1) as f64 * n_s as f64).sqrt();
                    push(replace(label, m, to), Complex64::new(-big_g * f, 0.0));
                }
            }
        }
    }
    Ok(SparseOperator::from_triplets(basis.dim(), triplets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl LatticeState {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Integrates `i dψ/dt = H ψ` for `n_steps` steps of length `dt`, returning
/// the initial state and every `stride`-th state.
pub fn evolve(
    state: &LatticeState,
    h: &SparseOperator,
    dt: f64,
    n_steps: usize,
    stride: usize,
) -> Result<Vec<LatticeState>> {
    if h.dim != state.amplitudes.len() {
        return Err(CitError::Setup("state and operator dimensions differ".into()));
    }
    if !(dt > 0.0) || stride == 0 {
        return Err(CitError::Setup("time step and stride must be positive".into()));
    }
    let hermitian = h.hermiticity_defect() == 0.0;
    let substeps = (h.norm1() * dt).ceil().max(1.0) as usize;
    let tau = dt / substeps as f64;
    let norm0 = state.norm();
    let mut psi = state.amplitudes.clone();
    let mut term = vec![ZERO; h.dim];
    let mut next = vec![ZERO; h.dim];
    let mut out = vec![state.clone()];
    for step in 1..=n_steps {
        for _ in 0..substeps {
            term.copy_from_slice(&psi);
            for k in 1..=60 {
                h.apply(&term, &mut next);
                let scale = Complex64::new(0.0, -tau / k as f64);
                let mut size = 0.0;
                for ((t, nx), p) in term.iter_mut().zip(&next).zip(psi.iter_mut()) {
                    *t = nx * scale;
                    *p += *t;
                    size += t.norm_sqr();
                }
                if size.sqrt() <= 1e-17 * norm0.max(1e-300) {
                    break;
                }
            }
        }
        let current = LatticeState {
            amplitudes: psi.clone(),
            time: state.time + step as f64 * dt,
        };
        let norm = current.norm();
        if !norm.is_finite() || (hermitian && (norm - norm0).abs() > 1e-6 * norm0) {
            return Err(CitError::Numerical(format!(
                "lattice norm drifted to {norm} at t = {}",
                current.time
            )));
        }
        if step % stride == 0 {
            out.push(current);
        }
    }
    Ok(out)
}

fn site_mode(kind: ModeKind, site: usize) -> Mode {
    Mode { kind, site }
}

/// Lattice state equivalent to single-excitation fields (`A = X √dz`).
pub fn state_from_fields1(
    grid: &ModeGrid,
    basis: &SectorBasis,
    field: &AmplitudeField1,
) -> Result<LatticeState> {
    if basis.sector != 1 || field.f.len() != grid.n_sites {
        return Err(CitError::Setup("field does not match the single-excitation basis".into()));
    }
    let scale = grid.spacing.sqrt();
    let mut amp = vec![ZERO; basis.dim()];
    for j in 0..grid.n_sites {
        for (kind, x) in [
            (ModeKind::Photon, field.f[j]),
            (ModeKind::Excited, field.e[j]),
            (ModeKind::Spin, field.s[j]),
        ] {
            amp[basis.index_of(&[site_mode(kind, j)]).unwrap()] = x * scale;
        }
    }
    Ok(LatticeState {
        amplitudes: amp,
        time: field.time,
    })
}

pub fn fields1_from_state(grid: &ModeGrid, basis: &SectorBasis, st: &LatticeState) -> AmplitudeField1 {
    let n = grid.n_sites;
    let inv = 1.0 / grid.spacing.sqrt();
    let mut out = AmplitudeField1::zeros(n);
    for j in 0..n {
        let get = |kind| st.amplitudes[basis.index_of(&[site_mode(kind, j)]).unwrap()] * inv;
        out.f[j] = get(ModeKind::Photon);
        out.e[j] = get(ModeKind::Excited);
        out.s[j] = get(ModeKind::Spin);
    }
    out.time = st.time;
    out
}

/// (field, first kind, second kind, exchange-symmetric)
const PAIR_FIELDS: [(usize, ModeKind, ModeKind, bool); 6] = [
    (0, ModeKind::Photon, ModeKind::Photon, true),
    (1, ModeKind::Excited, ModeKind::Photon, false),
    (2, ModeKind::Excited, ModeKind::Excited, true),
    (3, ModeKind::Spin, ModeKind::Photon, false),
    (4, ModeKind::Excited, ModeKind::Spin, false),
    (5, ModeKind::Spin, ModeKind::Spin, true),
];

fn pair_label(a: Mode, b: Mode) -> FockLabel {
    let mut l = vec![a, b];
    l.sort();
    l
}

/// Lattice state equivalent to two-excitation fields. Symmetric fields map as
/// `A = √2 X dz` off the diagonal and `A = X dz` on it, mixed fields as
/// `A = X dz`.
pub fn state_from_fields2(
    grid: &ModeGrid,
    basis: &SectorBasis,
    field: &AmplitudeField2,
) -> Result<LatticeState> {
    let n = grid.n_sites;
    if basis.sector != 2 || field.n != n {
        return Err(CitError::Setup("field does not match the two-excitation basis".into()));
    }
    let dz = grid.spacing;
    let mut amp = vec![ZERO; basis.dim()];
    for &(k, ka, kb, sym) in &PAIR_FIELDS {
        let x = field.component(k);
        for i in 0..n {
            for j in 0..n {
                if sym && j < i {
                    continue;
                }
                let v = if !sym {
                    x[i * n + j] * dz
                } else if i == j {
                    x[i * n + i] * dz
                } else {
                    (x[i * n + j] + x[j * n + i]) * (dz / 2f64.sqrt())
                };
                let idx = basis
                    .index_of(&pair_label(site_mode(ka, i), site_mode(kb, j)))
                    .unwrap();
                amp[idx] = v;
            }
        }
    }
    Ok(LatticeState {
        amplitudes: amp,
        time: field.time,
    })
}

pub fn fields2_from_state(grid: &ModeGrid, basis: &SectorBasis, st: &LatticeState) -> AmplitudeField2 {
    let n = grid.n_sites;
    let dz = grid.spacing;
    let mut out = AmplitudeField2::zeros(n);
    for &(k, ka, kb, sym) in &PAIR_FIELDS {
        let x = out.component_mut(k);
        for i in 0..n {
            for j in 0..n {
                let a = st.amplitudes[basis
                    .index_of(&pair_label(site_mode(ka, i), site_mode(kb, j)))
                    .unwrap()];
                x[i * n + j] = if sym && i != j {
                    a / (2f64.sqrt() * dz)
                } else {
                    a / dz
                };
            }
        }
    }
    out.time = st.time;
    out
}

/// Fit of a centroid trajectory `z(t) ≈ z0 + v t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityFit {
    pub speed: f64,
    pub intercept: f64,
    /// RMS deviation of the centroids from the fitted line.
    pub residual: f64,
}

/// Circular mean position of a density on the ring.
pub fn ring_centroid(grid: &ModeGrid, density: &[f64]) -> f64 {
    let l = grid.length();
    let phasor: Complex64 = density
        .iter()
        .enumerate()
        .map(|(j, &d)| Complex64::from_polar(d, 2.0 * PI * (grid.z(j) - grid.z_min) / l))
        .sum();
    grid.z_min + phasor.arg().rem_euclid(2.0 * PI) * l / (2.0 * PI)
}

/// Photon density for centroid tracking: `|f|²` in the single-excitation
/// sector, the marginal `Σ_z' |ff(z, z')|²` in the two-excitation sector.
pub fn photon_density(grid: &ModeGrid, basis: &SectorBasis, st: &LatticeState) -> Vec<f64> {
    let n = grid.n_sites;
    let mut rho = vec![0.0; n];
    for (label, a) in basis.states.iter().zip(&st.amplitudes) {
        let w = a.norm_sqr();
        for m in label {
            if m.kind == ModeKind::Photon {
                rho[m.site] += w;
            }
        }
    }
    rho
}

/// Least-squares velocity of the photon centroid along a trajectory.
pub fn measure_centroid_velocity(
    grid: &ModeGrid,
    basis: &SectorBasis,
    traj: &[LatticeState],
) -> Result<VelocityFit> {
    if traj.len() < 10 {
        return Err(CitError::Window(format!(
            "need at least 10 samples, got {}",
            traj.len()
        )));
    }
    let l = grid.length();
    let mut zs: Vec<f64> = Vec::with_capacity(traj.len());
    for st in traj {
        let rho = photon_density(grid, basis, st);
        let mut z = ring_centroid(grid, &rho);
        if let Some(&prev) = zs.last() {
            z += ((prev - z) / l).round() * l;
        }
        let j = ((z - grid.z_min).rem_euclid(l) / grid.spacing).round() as usize % grid.n_sites;
        if grid.medium_mask[j] < 1.0 {
            return Err(CitError::Window(format!(
                "centroid left the medium at t = {}",
                st.time
            )));
        }
        zs.push(z);
    }
    let ts: Vec<f64> = traj.iter().map(|s| s.time).collect();
    Ok(linear_fit(&ts, &zs))
}

pub(crate) fn linear_fit(t: &[f64], z: &[f64]) -> VelocityFit {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let zm = z.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|t| (t - tm).powi(2)).sum();
    let stz: f64 = t.iter().zip(z).map(|(t, z)| (t - tm) * (z - zm)).sum();
    let speed = stz / stt;
    let intercept = zm - speed * tm;
    let residual = (t
        .iter()
        .zip(z)
        .map(|(t, z)| (z - intercept - speed * t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    VelocityFit {
        speed,
        intercept,
        residual,
    }
}

/// Single-excitation interaction Hamiltonian projected onto plane waves,
/// one 3×3 block in the (photon, excited, spin) basis per wave number.
pub fn momentum_blocks(grid: &ModeGrid, p: &SystemParams) -> Result<Vec<(f64, Matrix3<Complex64>)>> {
    if !grid.periodic || grid.medium_mask.iter().any(|&w| w != 1.0) {
        return Err(CitError::Setup("momentum blocks need a uniform ring".into()));
    }
    let basis = SectorBasis::new(grid.n_sites, 1)?;
    let h = build_hamiltonian(
        grid,
        p,
        &basis,
        HamiltonianOptions {
            interaction_only: true,
            ..Default::default()
        },
    )?;
    let n = grid.n_sites;
    let kinds = [ModeKind::Photon, ModeKind::Excited, ModeKind::Spin];
    let mut blocks = Vec::with_capacity(n);
    for k in wave_numbers(n, grid.spacing) {
        let plane = |kind: ModeKind| {
            let mut v = vec![ZERO; basis.dim()];
            for j in 0..n {
                v[basis.index_of(&[site_mode(kind, j)]).unwrap()] =
                    Complex64::from_polar(1.0 / (n as f64).sqrt(), k * grid.z(j));
            }
            v
        };
        let vecs: Vec<Vec<Complex64>> = kinds.iter().map(|&k| plane(k)).collect();
        let mut m = Matrix3::zeros();
        let mut hv = vec![ZERO; basis.dim()];
        for b in 0..3 {
            h.apply(&vecs[b], &mut hv);
            for a in 0..3 {
                m[(a, b)] = vecs[a].iter().zip(&hv).map(|(x, y)| x.conj() * y).sum();
            }
        }
        blocks.push((k, m));
    }
    Ok(blocks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkCheck {
    pub passed: bool,
    /// Largest `min |λ| / ‖H_k‖` over the blocks.
    pub eigen_residual: f64,
    /// Largest distance of the null vector from `(G, 0, −g√n)/norm`.
    pub vector_error: f64,
}

/// Verifies that every momentum block has a zero mode of dark-state form.
pub fn dark_eigenstate_check(blocks: &[(f64, Matrix3<Complex64>)], p: &SystemParams) -> DarkCheck {
    let norm = p.cavity_coupling.hypot(p.probe_coupling);
    let target = [p.cavity_coupling / norm, 0.0, -p.probe_coupling / norm];
    let mut eigen_residual: f64 = 0.0;
    let mut vector_error: f64 = 0.0;
    for (_, m) in blocks {
        let scale = m.norm();
        let svd = m.svd(true, true);
        let (i_min, s_min) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        eigen_residual = eigen_residual.max(s_min / scale);
        let v_t = svd.v_t.expect("requested");
        let v: Vec<Complex64> = (0..3).map(|c| v_t[(i_min, c)].conj()).collect();
        // Fix the global phase on the photon component.
        let phase = if v[0].norm() > 0.0 { v[0].conj() / v[0].norm() } else { Complex64::new(1.0, 0.0) };
        let err = (0..3)
            .map(|c| (v[c] * phase - target[c]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        vector_error = vector_error.max(err);
    }
    DarkCheck {
        passed: eigen_residual <= 1e-10 && vector_error <= 1e-8,
        eigen_residual,
        vector_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> ModeGrid {
        ModeGrid::uniform_ring(n, 8.0).unwrap()
    }

    #[test]
    fn dimensions_match_analytic_counts() {
        for n in [8, 16, 32] {
            for k in [1, 2] {
                let b = SectorBasis::new(n, k).unwrap();
                assert_eq!(b.dim(), analytic_dimension(n, k).unwrap());
                let mut sorted = b.states.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), b.dim());
            }
        }
        assert_eq!(analytic_dimension(32, 2), Some(4656));
    }

    #[test]
    fn capacity_is_enforced() {
        assert!(matches!(SectorBasis::new(300, 2), Err(CitError::Capacity(_))));
        assert!(matches!(SectorBasis::new(8, 3), Err(CitError::Capacity(_))));
    }

    #[test]
    fn hermitian_without_decay() {
        let g = ring(16);
        let p = SystemParams::natural(2.0, 3.0, 0.0);
        for k in [1, 2] {
            let b = SectorBasis::new(16, k).unwrap();
            let h = build_hamiltonian(&g, &p, &b, Default::default()).unwrap();
            assert!(h.hermiticity_defect() < 1e-14, "sector {k}");
        }
        let mut q = p;
        q.gamma = 0.5;
        let b = SectorBasis::new(16, 1).unwrap();
        let h = build_hamiltonian(&g, &q, &b, Default::default()).unwrap();
        assert!(h.hermiticity_defect() > 0.4);
    }

    #[test]
    fn sectors_are_not_connected() {
        let g = ring(8);
        let mut p = SystemParams::natural(2.0, 3.0, 0.3);
        p.kappa = 0.2;
        let b = SectorBasis::with_sectors(8, &[0, 1, 2]).unwrap();
        let h = build_hamiltonian(&g, &p, &b, Default::default()).unwrap();
        for r in 0..h.dim {
            for k in h.row_ptr[r]..h.row_ptr[r + 1] {
                assert_eq!(b.states[r].len(), b.states[h.cols[k]].len());
            }
        }
    }

    #[test]
    fn two_cavity_photon_enhancement() {
        // |E_0 S_1⟩ → |S_0 S_1⟩ needs the second cavity photon: √2 G in the
        // Fock basis, i.e. 2G between the symmetrized field amplitudes.
        let g = ring(8);
        let p = SystemParams::natural(1.5, 2.0, 0.0);
        let b = SectorBasis::new(8, 2).unwrap();
        let h = build_hamiltonian(&g, &p, &b, Default::default()).unwrap();
        let es = b
            .index_of(&pair_label(site_mode(ModeKind::Excited, 0), site_mode(ModeKind::Spin, 1)))
            .unwrap();
        let ss = b
            .index_of(&pair_label(site_mode(ModeKind::Spin, 0), site_mode(ModeKind::Spin, 1)))
            .unwrap();
        let elem = h.get(ss, es);
        assert!((elem.re + 2f64.sqrt() * 1.5).abs() < 1e-14);
        // In field units: A_ss = √2 ss dz, A_es = es dz.
        assert!((elem.re * 2f64.sqrt() + 2.0 * 1.5).abs() < 1e-14);
        // Same-site pair: |E_0 S_0⟩ → |S_0 S_0⟩ carries √2·√2 G.
        let es0 = b
            .index_of(&pair_label(site_mode(ModeKind::Excited, 0), site_mode(ModeKind::Spin, 0)))
            .unwrap();
        let ss0 = b
            .index_of(&pair_label(site_mode(ModeKind::Spin, 0), site_mode(ModeKind::Spin, 0)))
            .unwrap();
        assert!((h.get(ss0, es0).re + 2.0 * 1.5).abs() < 1e-14);
    }

    #[test]
    fn momentum_blocks_have_dark_zero_modes() {
        let g = ring(16);
        for (gc, gn) in [(1.0, 1.0), (0.01, 1.0), (3.0, 0.7)] {
            let mut p = SystemParams::natural(gc, gn, 0.0);
            let blocks = momentum_blocks(&g, &p).unwrap();
            assert_eq!(blocks.len(), 16);
            let check = dark_eigenstate_check(&blocks, &p);
            assert!(check.passed, "{gc} {gn}: {check:?}");
            p.gamma = 0.8;
            let check = dark_eigenstate_check(&momentum_blocks(&g, &p).unwrap(), &p);
            assert!(check.passed, "with decay: {check:?}");
        }
        let p = SystemParams::natural(1.0, 1.0, 0.0);
        let (_, m) = momentum_blocks(&g, &p).unwrap()[3];
        let v = nalgebra::Vector3::new(1.0, 0.0, -1.0).map(|x: f64| Complex64::new(x / 2f64.sqrt(), 0.0));
        assert!((m * v).norm() < 1e-13);
    }

    #[test]
    fn free_photon_translates_exactly() {
        let g = ring(64);
        let mut p = SystemParams::natural(1.0, 0.0, 0.0);
        p.probe_coupling = 0.0;
        let b = SectorBasis::new(64, 1).unwrap();
        let h = build_hamiltonian(&g, &p, &b, Default::default()).unwrap();
        let grid = g.to_grid(Medium::Vacuum).unwrap();
        let mut field = AmplitudeField1::zeros(64);
        for j in 0..64 {
            let z = grid.z(j) - 3.0;
            field.f[j] = Complex64::new((-(z / 0.7).powi(2)).exp(), 0.0);
        }
        let norm = field.norm(g.spacing).sqrt();
        field.f.iter_mut().for_each(|x| *x /= norm);
        let st = state_from_fields1(&g, &b, &field).unwrap();
        // Shift by eight sites.
        let traj = evolve(&st, &h, 0.5, 2, 1).unwrap();
        let out = fields1_from_state(&g, &b, traj.last().unwrap());
        for j in 0..64 {
            assert!((out.f[(j + 8) % 64] - field.f[j]).norm() < 1e-10);
        }
        assert!((traj[2].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn field_mappings_round_trip() {
        let g = ring(8);
        let b2 = SectorBasis::new(8, 2).unwrap();
        let mut f = AmplitudeField2::zeros(8);
        for k in 0..6 {
            let x = f.component_mut(k);
            for i in 0..8 {
                for j in 0..8 {
                    x[i * 8 + j] = Complex64::new((i + 2 * j + k) as f64 * 0.1, (i * j) as f64 * 0.05);
                }
            }
        }
        f.symmetrize();
        let st = state_from_fields2(&g, &b2, &f).unwrap();
        let back = fields2_from_state(&g, &b2, &st);
        for k in 0..6 {
            for (a, b) in f.component(k).iter().zip(back.component(k)) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        let field_norm = f.norm(g.spacing);
        assert!((st.norm().powi(2) - field_norm).abs() < 1e-10 * field_norm);
    }

    #[test]
    fn centroid_needs_enough_samples() {
        let g = ring(8);
        let b = SectorBasis::new(8, 1).unwrap();
        let st = LatticeState {
            amplitudes: vec![ZERO; b.dim()],
            time: 0.0,
        };
        assert!(matches!(
            measure_centroid_velocity(&g, &b, &vec![st; 5]),
            Err(CitError::Window(_))
        ));
    }

    #[test]
    fn linear_fit_recovers_line() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let z: Vec<f64> = t.iter().map(|t| 0.3 + 0.57 * t).collect();
        let fit = linear_fit(&t, &z);
        assert!((fit.speed - 0.57).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }
}
