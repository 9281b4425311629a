//! Closed-form dark states of the N-excitation manifold and the
//! photon-number-dependent group velocity that follows from them.
//!
//! The amplitude on `|M photons, N−M spin excitations, N−M cavity photons⟩` is
//! `(−1)^M N!/(N−M)! r^M / √M!` with `r = G/(g√n)`. Magnitudes are kept in log
//! form so that large N does not overflow.

use nalgebra::DMatrix;

use crate::error::{CitError, Result};
use crate::params::SystemParams;

/// Largest excitation number accepted by the log-domain evaluation.
pub const MAX_EXCITATIONS: usize = 10_000;

/// Largest manifold handled by the explicit Fock-space residual check.
pub const MAX_RESIDUAL_EXCITATIONS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DarkStateCoefficients {
    pub n_excitations: usize,
    pub ratio: f64,
    /// ln|f^M s^{N−M}| for M = 0..=N.
    pub log_abs: Vec<f64>,
    /// +1 or −1, alternating with M.
    pub signs: Vec<f64>,
    /// ln 𝒩 with 𝒩² = Σ coeffs².
    pub log_norm: f64,
}

impl DarkStateCoefficients {
    /// Unnormalized coefficients. Overflows to infinity for very large N.
    pub fn coefficients(&self) -> Vec<f64> {
        self.log_abs
            .iter()
            .zip(&self.signs)
            .map(|(l, s)| s * l.exp())
            .collect()
    }

    /// Coefficients divided by 𝒩.
    pub fn normalized(&self) -> Vec<f64> {
        self.log_abs
            .iter()
            .zip(&self.signs)
            .map(|(l, s)| s * (l - self.log_norm).exp())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.log_norm.exp()
    }

    /// Probability weight of each M component, summing to one.
    pub fn weights(&self) -> Vec<f64> {
        self.log_abs
            .iter()
            .map(|l| (2.0 * (l - self.log_norm)).exp())
            .collect()
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

fn check_inputs(n: usize, r: f64) -> Result<()> {
    if n == 0 {
        return Err(CitError::Domain("excitation number must be >= 1".into()));
    }
    if n > MAX_EXCITATIONS {
        return Err(CitError::Capacity(format!(
            "N = {n} exceeds the supported {MAX_EXCITATIONS}"
        )));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(CitError::Domain(format!("ratio G/g√n must be > 0, got {r}")));
    }
    Ok(())
}

pub fn dark_coefficients(n: usize, r: f64) -> Result<DarkStateCoefficients> {
    check_inputs(n, r)?;
    let lf = ln_factorials(n);
    let ln_r = r.ln();
    let log_abs: Vec<f64> = (0..=n)
        .map(|m| lf[n] - lf[n - m] - 0.5 * lf[m] + m as f64 * ln_r)
        .collect();
    let signs = (0..=n).map(|m| if m % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let max = log_abs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_abs.iter().map(|l| (2.0 * (l - max)).exp()).sum();
    let log_norm = max + 0.5 * sum.ln();
    Ok(DarkStateCoefficients {
        n_excitations: n,
        ratio: r,
        log_abs,
        signs,
        log_norm,
    })
}

/// v(N)/c = Σ (M/N) c_M² / Σ c_M².
pub fn group_velocity_exact(n: usize, r: f64) -> Result<f64> {
    let d = dark_coefficients(n, r)?;
    let nf = n as f64;
    let v = d
        .weights()
        .iter()
        .enumerate()
        .map(|(m, w)| m as f64 / nf * w)
        .sum();
    Ok(v)
}

/// Weak-coupling form v(N)/c ≈ r² N.
pub fn group_velocity_approx(n: usize, r: f64) -> f64 {
    r * r * n as f64
}

/// Label of a single-mode Fock state: probe photons, collective excited
/// atoms, collective spin excitations. The cavity holds as many photons as
/// there are spin excitations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct FockLabel {
    photons: usize,
    excited: usize,
    spins: usize,
}

fn fock_basis(n: usize) -> Vec<FockLabel> {
    let mut basis = Vec::new();
    for photons in 0..=n {
        for excited in 0..=(n - photons) {
            basis.push(FockLabel {
                photons,
                excited,
                spins: n - photons - excited,
            });
        }
    }
    basis
}

/// Single-mode interaction Hamiltonian `−g√n(b†c_e + h.c.) − G(a†c_s†c_e + h.c.)`
/// on the N-excitation manifold, with bosonic collective modes.
fn single_mode_hamiltonian(n: usize, p: &SystemParams) -> (Vec<FockLabel>, DMatrix<f64>) {
    let basis = fock_basis(n);
    let index = |l: FockLabel| basis.iter().position(|b| *b == l);
    let dim = basis.len();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (j, s) in basis.iter().enumerate() {
        // b† c_e
        if s.excited > 0 {
            let t = FockLabel {
                photons: s.photons + 1,
                excited: s.excited - 1,
                spins: s.spins,
            };
            let amp = -p.probe_coupling * ((s.photons + 1) as f64).sqrt() * (s.excited as f64).sqrt();
            let i = index(t).unwrap();
            h[(i, j)] += amp;
            h[(j, i)] += amp;
        }
        // a† c_s† c_e, cavity occupation equals the spin count
        if s.excited > 0 {
            let t = FockLabel {
                photons: s.photons,
                excited: s.excited - 1,
                spins: s.spins + 1,
            };
            let amp = -p.cavity_coupling
                * (s.excited as f64).sqrt()
                * ((s.spins + 1) as f64).sqrt()
                * ((s.spins + 1) as f64).sqrt();
            let i = index(t).unwrap();
            h[(i, j)] += amp;
            h[(j, i)] += amp;
        }
    }
    (basis, h)
}

/// ‖H ψ_D‖ / ‖H‖_F for the normalized N-excitation dark state.
pub fn dark_state_residual(n: usize, p: &SystemParams) -> Result<f64> {
    if n > MAX_RESIDUAL_EXCITATIONS {
        return Err(CitError::Capacity(format!(
            "Fock-space residual supports N <= {MAX_RESIDUAL_EXCITATIONS}, got {n}"
        )));
    }
    p.validate()?;
    let d = dark_coefficients(n, p.ratio())?;
    let (basis, h) = single_mode_hamiltonian(n, p);
    let mut psi = nalgebra::DVector::<f64>::zeros(basis.len());
    for (m, c) in d.normalized().into_iter().enumerate() {
        let i = basis
            .iter()
            .position(|b| b.photons == m && b.excited == 0 && b.spins == n - m)
            .unwrap();
        psi[i] = c;
    }
    Ok((&h * &psi).norm() / h.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn natural(r: f64) -> SystemParams {
        SystemParams::natural(r, 1.0, 0.0)
    }

    #[test]
    fn one_and_two_excitation_patterns() {
        let c1 = dark_coefficients(1, 1.0).unwrap().coefficients();
        assert!((c1[0] - 1.0).abs() < 1e-15 && (c1[1] + 1.0).abs() < 1e-15);

        let d2 = dark_coefficients(2, 1.0).unwrap();
        let c2 = d2.coefficients();
        let expect = [1.0, -2.0, 2f64.sqrt()];
        for (a, b) in c2.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        assert!((d2.norm().powi(2) - 7.0).abs() < 1e-13);
    }

    #[test]
    fn ratio_recursion_matches_factorials() {
        let r = 0.37;
        let c = dark_coefficients(3, r).unwrap().coefficients();
        for m in 1..=3usize {
            let expect = -((3 - m + 1) as f64) * r / (m as f64).sqrt();
            assert!(((c[m] / c[m - 1]) - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn log_domain_matches_direct_products() {
        // Direct product evaluation as an independent reference.
        for n in 1..=20usize {
            for &r in &[0.01, 0.3, 1.0, 4.0] {
                let c = dark_coefficients(n, r).unwrap().coefficients();
                for m in 0..=n {
                    let falling: f64 = ((n - m + 1)..=n).map(|k| k as f64).product();
                    let fact_m: f64 = (1..=m).map(|k| k as f64).product();
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    let exact = sign * falling / fact_m.sqrt() * r.powi(m as i32);
                    assert!(((c[m] - exact) / exact).abs() < 1e-10, "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn normalization_and_large_n() {
        for &n in &[1usize, 5, 150, 1000] {
            let d = dark_coefficients(n, 1.0).unwrap();
            let s: f64 = d.normalized().iter().map(|c| c * c).sum();
            assert!((s - 1.0).abs() < 1e-12, "n={n}");
            assert!(d.normalized().iter().all(|c| c.is_finite()));
        }
    }

    #[test]
    fn velocities_agree_with_closed_forms() {
        assert!((group_velocity_exact(2, 1.0).unwrap() - 4.0 / 7.0).abs() < 1e-12);
        for &r in &[0.05, 0.5, 1.0, 2.0, 20.0] {
            let v1 = group_velocity_exact(1, r).unwrap();
            assert!((v1 - r * r / (1.0 + r * r)).abs() < 1e-12);
        }
        // Values from a 50-digit evaluation of the weighted sum.
        let frozen = [
            (3usize, 0.617_647_058_823_529_4),
            (5, 0.675_937_904_269_081_5),
            (10, 0.748_825_830_433_701_1),
            (30, 0.840_430_408_960_932),
        ];
        for (n, v) in frozen {
            assert!((group_velocity_exact(n, 1.0).unwrap() - v).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn weak_coupling_fit() {
        let exact = group_velocity_exact(1, 0.01).unwrap();
        assert!((exact - 1e-4 / (1.0 + 1e-4)).abs() < 1e-16);
        assert!(((exact - 1e-4) / exact).abs() < 1e-4);
        assert!((group_velocity_approx(5, 0.01) - 5e-4).abs() < 1e-18);
        // Worst case over N <= 100 is 1.98 %.
        for n in 1..=100 {
            let e = group_velocity_exact(n, 0.01).unwrap();
            assert!(((e - group_velocity_approx(n, 0.01)) / e).abs() <= 0.025);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(dark_coefficients(0, 1.0), Err(CitError::Domain(_))));
        assert!(matches!(dark_coefficients(2, 0.0), Err(CitError::Domain(_))));
        assert!(matches!(dark_coefficients(2, -1.0), Err(CitError::Domain(_))));
        assert!(matches!(
            dark_state_residual(9, &natural(1.0)),
            Err(CitError::Capacity(_))
        ));
    }

    #[test]
    fn dark_states_are_annihilated() {
        for n in 1..=6 {
            for &r in &[0.1, 0.3, 1.0, 3.0] {
                let res = dark_state_residual(n, &natural(r)).unwrap();
                assert!(res <= 1e-12, "n={n} r={r} residual={res}");
            }
        }
        // A state with the wrong enhancement factor is not dark.
        let p = natural(1.0);
        let (basis, h) = single_mode_hamiltonian(2, &p);
        let mut psi = nalgebra::DVector::<f64>::zeros(basis.len());
        let coeffs = [1.0, -2.0, 2f64.sqrt()];
        for (m, c) in coeffs.iter().enumerate() {
            let i = basis
                .iter()
                .position(|b| b.photons == m && b.excited == 0 && b.spins == 2 - m)
                .unwrap();
            psi[i] = if m == 0 { c * 2f64.sqrt() } else { *c };
        }
        assert!((&h * &psi).norm() / h.norm() > 1e-3);
    }

    #[test]
    fn manifold_dimension() {
        assert_eq!(fock_basis(1).len(), 3);
        assert_eq!(fock_basis(2).len(), 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_and_bounded(r in 0.05f64..20.0) {
                let mut prev = 0.0;
                for n in 1..=100 {
                    let v = group_velocity_exact(n, r).unwrap();
                    prop_assert!(v > prev && v < 1.0);
                    prev = v;
                }
            }

            #[test]
            fn two_excitation_closed_form(r in 0.01f64..100.0) {
                let x = r * r;
                let closed = (2.0 * x * x + 2.0 * x) / (1.0 + 4.0 * x + 2.0 * x * x);
                prop_assert!((group_velocity_exact(2, r).unwrap() - closed).abs() < 1e-12);
            }
        }
    }
}
