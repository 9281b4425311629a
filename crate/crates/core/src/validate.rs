//! Validation suites shared by the `validate` subcommand and the test
//! harness: solver against lattice, lattice against closed forms, dark-state
//! residuals and conservation checks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::darkstate::{dark_state_residual, group_velocity_approx, group_velocity_exact};
use crate::eom::{validate_eom, Component, EomCoefficients};
use crate::error::{CitError, Result};
use crate::grid::{Grid1D, Medium};
use crate::lattice::{
    build_hamiltonian, evolve, fields1_from_state, fields2_from_state, measure_centroid_velocity,
    state_from_fields1, state_from_fields2, HamiltonianOptions, ModeGrid, SectorBasis,
};
use crate::params::SystemParams;
use crate::solver1::{AmplitudeField1, Scheme, Solver1};
use crate::solver2::{dark_state2, product_state, Solver2};

/// One line of a validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
            detail,
        }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            passed: value >= threshold,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: value={:.6e} threshold={:.3e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold,
            self.detail
        )
    }
}

/// Relative L2 distance `‖a − b‖ / ‖b‖`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Result of running a solver and the lattice from identical initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    /// Largest relative L2 distance of the photon densities over the samples.
    pub max_density_error: f64,
    /// Largest |norm − 1| of the solver over the run.
    pub solver_norm_drift: f64,
    pub samples: usize,
}

/// Setup shared by the equivalence suites: a ring of `n_sites` sites and
/// circumference `length`, filled with atoms, and a Gaussian photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSetup {
    pub n_sites: usize,
    pub length: f64,
    pub params: SystemParams,
    pub width: f64,
    pub t_end: f64,
    pub samples: usize,
    /// Solver steps per grid cell of travel.
    pub substeps: usize,
}

impl RingSetup {
    pub fn sector1_default() -> Self {
        RingSetup {
            n_sites: 64,
            length: 8.0,
            params: SystemParams::natural(3.0, 4.0, 0.0),
            width: 0.8,
            t_end: 4.0,
            samples: 16,
            substeps: 8,
        }
    }

    pub fn sector2_default() -> Self {
        RingSetup {
            n_sites: 32,
            length: 8.0,
            params: SystemParams::natural(3.0, 4.0, 0.0),
            width: 1.0,
            t_end: 3.0,
            samples: 12,
            substeps: 8,
        }
    }

    fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(0.0, self.length, self.n_sites, Medium::Uniform)
    }

    fn photon(&self, grid: &Grid1D) -> Vec<Complex64> {
        let z0 = 0.5 * self.length;
        let mut f: Vec<Complex64> = grid
            .points()
            .into_iter()
            .map(|z| Complex64::new((-((z - z0) / self.width).powi(2)).exp(), 0.0))
            .collect();
        let norm = (f.iter().map(|x| x.norm_sqr()).sum::<f64>() * grid.dz()).sqrt();
        f.iter_mut().for_each(|x| *x /= norm);
        f
    }
}

pub fn sector1_equivalence(setup: &RingSetup) -> Result<Equivalence> {
    let grid = setup.grid()?;
    let ring = ModeGrid::from_grid(&grid)?;
    let basis = SectorBasis::new(setup.n_sites, 1)?;
    let h = build_hamiltonian(&ring, &setup.params, &basis, HamiltonianOptions::default())?;
    let mut field = AmplitudeField1::zeros(setup.n_sites);
    field.f = setup.photon(&grid);
    let st = state_from_fields1(&ring, &basis, &field)?;
    let sample_dt = setup.t_end / setup.samples as f64;
    let traj = evolve(&st, &h, sample_dt, setup.samples, 1)?;

    let steps_per_sample = (sample_dt / grid.dz()).ceil() as usize * setup.substeps;
    let solver = Solver1::new(grid, setup.params, Scheme::SplitStep, sample_dt / steps_per_sample as f64)?;
    let dz = grid.dz();
    let mut worst: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for reference in traj.iter().skip(1) {
        for _ in 0..steps_per_sample {
            solver.step(&mut field)?;
            drift = drift.max((field.norm(dz) - 1.0).abs());
        }
        let oracle = fields1_from_state(&ring, &basis, reference);
        worst = worst.max(relative_l2(&field.photon_density(), &oracle.photon_density()));
    }
    Ok(Equivalence {
        max_density_error: worst,
        solver_norm_drift: drift,
        samples: setup.samples,
    })
}

pub fn sector2_equivalence(setup: &RingSetup, eom: &EomCoefficients) -> Result<Equivalence> {
    let grid = setup.grid()?;
    let ring = ModeGrid::from_grid(&grid)?;
    let basis = SectorBasis::new(setup.n_sites, 2)?;
    let h = build_hamiltonian(&ring, &setup.params, &basis, HamiltonianOptions::default())?;
    let mut field = product_state(&setup.photon(&grid));
    let st = state_from_fields2(&ring, &basis, &field)?;
    let sample_dt = setup.t_end / setup.samples as f64;
    let traj = evolve(&st, &h, sample_dt, setup.samples, 1)?;

    let steps_per_sample = (sample_dt / grid.dz()).ceil() as usize * setup.substeps;
    let solver = Solver2::with_eom(
        grid,
        setup.params,
        Scheme::SplitStep,
        sample_dt / steps_per_sample as f64,
        eom.clone(),
    )?;
    let dz = grid.dz();
    let mut worst: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for reference in traj.iter().skip(1) {
        for _ in 0..steps_per_sample {
            solver.step(&mut field)?;
            drift = drift.max((field.norm(dz) - 1.0).abs());
        }
        let oracle = fields2_from_state(&ring, &basis, reference);
        worst = worst.max(relative_l2(&field.pair_density(), &oracle.pair_density()));
    }
    Ok(Equivalence {
        max_density_error: worst,
        solver_norm_drift: drift,
        samples: setup.samples,
    })
}

/// Centroid velocity of a dark polariton on a uniform ring, measured on the
/// lattice, in units of c.
pub fn lattice_dark_velocity(sector: usize, r: f64, n_sites: usize, coupling: f64) -> Result<f64> {
    let length = 8.0;
    let p = SystemParams::natural(coupling * r, coupling, 0.0);
    let grid = Grid1D::new(0.0, length, n_sites, Medium::Uniform)?;
    let ring = ModeGrid::from_grid(&grid)?;
    let basis = SectorBasis::new(n_sites, sector)?;
    let h = build_hamiltonian(&ring, &p, &basis, HamiltonianOptions::default())?;
    let width = 1.0;
    let z0 = 0.5 * length;
    let profile = |z: f64| (-((z - z0) / width).powi(2)).exp();
    let st = match sector {
        1 => {
            let mut f = AmplitudeField1::zeros(n_sites);
            for (j, z) in grid.points().into_iter().enumerate() {
                f.f[j] = Complex64::new(p.cavity_coupling * profile(z), 0.0);
                f.s[j] = Complex64::new(-p.probe_coupling * profile(z), 0.0);
            }
            let norm = f.norm(grid.dz()).sqrt();
            for v in [&mut f.f, &mut f.s] {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            state_from_fields1(&ring, &basis, &f)?
        }
        2 => {
            let f = dark_state2(&grid, &p, |a, b| Complex64::new(profile(a) * profile(b), 0.0));
            state_from_fields2(&ring, &basis, &f)?
        }
        _ => return Err(CitError::Setup(format!("sector {sector} is not supported"))),
    };
    let v = group_velocity_exact(sector, r)?;
    // About one width of travel.
    let t_end = 1.5 / v;
    let samples = 15;
    let traj = evolve(&st, &h, t_end / samples as f64, samples, 1)?;
    Ok(measure_centroid_velocity(&ring, &basis, &traj)?.speed / p.c)
}

/// Centroid speed of the co-located diagonal of the two-photon solver inside
/// a uniform medium, in units of c.
pub fn solver2_diagonal_velocity(r: f64, n_points: usize, coupling: f64, gamma: f64, substeps: usize) -> Result<f64> {
    let length = 8.0;
    let p = SystemParams::natural(coupling * r, coupling, gamma);
    let grid = Grid1D::new(0.0, length, n_points, Medium::Uniform)?;
    let z0 = 0.5 * length;
    let profile = |z: f64| (-((z - z0) / 0.8).powi(2)).exp();
    let mut st = dark_state2(&grid, &p, |a, b| Complex64::new(profile(a) * profile(b), 0.0));
    let v = group_velocity_exact(2, r)?;
    let solver = Solver2::new(grid, p, Scheme::SplitStep, grid.dz() / substeps as f64)?;
    let ring = ModeGrid::from_grid(&grid)?;
    let n = n_points;
    let diagonal_centroid = |s: &crate::solver2::AmplitudeField2| {
        let ff = s.get(Component::Ff);
        let rho: Vec<f64> = (0..n).map(|j| ff[j * n + j].norm_sqr()).collect();
        crate::lattice::ring_centroid(&ring, &rho)
    };
    let t_end = 1.5 / v;
    let mut times = vec![0.0];
    let mut zs = vec![diagonal_centroid(&st)];
    solver.run(&mut st, t_end, |s| {
        times.push(s.time);
        let mut z = diagonal_centroid(s);
        let prev = *zs.last().unwrap();
        z += ((prev - z) / length).round() * length;
        zs.push(z);
    })?;
    Ok(crate::lattice::linear_fit(&times, &zs).speed / p.c)
}

/// Dark-state residual check for `N ≤ 6` at the given ratios.
pub fn dark_state_suite(ratios: &[f64]) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for &r in ratios {
        let p = SystemParams::natural(r, 1.0, 0.0);
        for n in 1..=6 {
            worst = worst.max(dark_state_residual(n, &p)?);
        }
    }
    Ok(Check::at_most(
        "dark-state residual",
        worst,
        1e-12,
        format!("N<=6, r in {ratios:?}"),
    ))
}

/// Coupling table against the lattice Hamiltonian.
pub fn eom_suite(eom: &EomCoefficients) -> Check {
    let mut p = SystemParams::natural(1.3, 2.1, 0.37);
    p.kappa = 0.23;
    match validate_eom(eom, &p) {
        Ok(report) => Check::at_most(
            "coupling table vs lattice",
            report.max_error,
            1e-12,
            String::new(),
        ),
        Err(e) => Check {
            name: "coupling table vs lattice".into(),
            value: f64::INFINITY,
            threshold: 1e-12,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Closed-form group velocities: one-excitation limit, the two-excitation
/// value at r = 1, monotonicity in N and the bound v < c.
pub fn group_velocity_suite() -> Result<Vec<Check>> {
    let ratios = [0.1, 1.0, 10.0];
    let mut v1_err: f64 = 0.0;
    let mut worst_step = f64::INFINITY;
    let mut worst_bound = f64::INFINITY;
    for &r in &ratios {
        v1_err = v1_err.max((group_velocity_exact(1, r)? - r * r / (1.0 + r * r)).abs());
        let mut prev = 0.0;
        for n in 1..=100 {
            let v = group_velocity_exact(n, r)?;
            if n > 1 {
                worst_step = worst_step.min(v - prev);
            }
            worst_bound = worst_bound.min(1.0 - v);
            prev = v;
        }
    }
    let v2 = group_velocity_exact(2, 1.0)?;
    Ok(vec![
        Check::at_most("v(1) = r^2/(1+r^2)", v1_err, 1e-15, format!("r in {ratios:?}")),
        Check::at_most("v(2) at r=1 equals 4/7", (v2 - 4.0 / 7.0).abs(), 1e-12, String::new()),
        Check {
            name: "v(N) strictly increasing".into(),
            value: worst_step,
            threshold: 0.0,
            passed: worst_step > 0.0,
            detail: "smallest v(N+1)-v(N), N<=100".into(),
        },
        Check {
            name: "v(N) < c".into(),
            value: worst_bound,
            threshold: 0.0,
            passed: worst_bound > 0.0,
            detail: "smallest 1-v(N)".into(),
        },
    ])
}

/// Weak-coupling form r²N against the exact velocity at r = 0.01.
pub fn weak_coupling_suite() -> Result<Check> {
    let r = 0.01;
    let mut worst: f64 = 0.0;
    for n in 1..=100 {
        let v = group_velocity_exact(n, r)?;
        worst = worst.max((v - group_velocity_approx(n, r)).abs() / v);
    }
    Ok(Check::at_most("weak-coupling approximation", worst, 0.05, "r=0.01, N<=100".into()))
}

/// Drift check from a lossless run.
fn drift_check(name: &str, drift: Result<f64>, threshold: f64) -> Check {
    match drift {
        Ok(d) => Check::at_most(name, d, threshold, String::new()),
        Err(e) => Check {
            name: name.into(),
            value: f64::INFINITY,
            threshold,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn equivalence_checks(sector: usize, e: Result<Equivalence>) -> Vec<Check> {
    let name = format!("sector {sector} solver vs lattice");
    match e {
        Ok(e) => vec![
            Check::at_most(&name, e.max_density_error, 1e-2, format!("{} samples", e.samples)),
            Check::at_most(
                &format!("sector {sector} norm drift"),
                e.solver_norm_drift,
                if sector == 1 { 1e-6 } else { 1e-5 },
                "gamma=kappa=0".into(),
            ),
        ],
        Err(err) => vec![Check {
            name,
            value: f64::INFINITY,
            threshold: 1e-2,
            passed: false,
            detail: err.to_string(),
        }],
    }
}

fn velocity_check(name: &str, measured: Result<f64>, expected: f64, tolerance: f64) -> Check {
    match measured {
        Ok(v) => Check::at_most(
            name,
            (v - expected).abs() / expected,
            tolerance,
            format!("measured {v:.5} expected {expected:.5}"),
        ),
        Err(e) => Check {
            name: name.into(),
            value: f64::INFINITY,
            threshold: tolerance,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Everything the `validate` command runs. `quick` shrinks the rings and
/// skips the velocity measurements.
pub fn full_suite(quick: bool, eom: &EomCoefficients) -> Result<Vec<Check>> {
    let mut checks = group_velocity_suite()?;
    checks.push(weak_coupling_suite()?);
    checks.push(dark_state_suite(&[0.1, 0.3, 1.0, 3.0])?);
    checks.push(eom_suite(eom));
    let (mut s1, mut s2) = (RingSetup::sector1_default(), RingSetup::sector2_default());
    if quick {
        s1.n_sites = 32;
        s1.length = 4.0;
        s1.width = 0.5;
        s1.t_end = 2.0;
        s2.n_sites = 16;
        s2.length = 4.0;
        s2.width = 0.6;
        s2.t_end = 1.5;
    }
    checks.extend(equivalence_checks(1, sector1_equivalence(&s1)));
    checks.extend(equivalence_checks(2, sector2_equivalence(&s2, eom)));
    let slab = crate::experiments::SlabSetup::adiabatic_default();
    checks.push(drift_check("single-photon slab norm drift", crate::experiments::norm_drift1(&slab), 1e-6));
    let (n2, t2) = if quick { (160, 2.0) } else { (320, 4.0) };
    checks.push(drift_check(
        "two-photon slab norm drift",
        crate::experiments::norm_drift2(&SystemParams::natural(20.0, 20.0, 0.0), n2, t2),
        1e-5,
    ));
    if !quick {
        for r in [0.5, 1.0, 2.0] {
            checks.push(velocity_check(
                &format!("lattice sector 1 velocity r={r}"),
                lattice_dark_velocity(1, r, 64, 20.0),
                group_velocity_exact(1, r)?,
                0.01,
            ));
            checks.push(velocity_check(
                &format!("lattice sector 2 velocity r={r}"),
                lattice_dark_velocity(2, r, 32, 10.0),
                group_velocity_exact(2, r)?,
                0.01,
            ));
        }
        checks.push(velocity_check(
            "solver2 diagonal velocity r=1",
            solver2_diagonal_velocity(1.0, 128, 20.0, 10.0, 1),
            group_velocity_exact(2, 1.0)?,
            0.03,
        ));
    }
    Ok(checks)
}
