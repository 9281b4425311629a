//! Equations of motion of the two-excitation amplitudes.
//!
//! The state is
//!
//! ```text
//! |ψ2⟩ = ∫∫ [ ff/√2 b†b† + ef c_e†b† + ee/√2 c_e†c_e† + sf c_s†b† a_c†
//!            + es c_e†c_s† a_c† + ss/√2 c_s†c_s† a_c†²/√2 ] |0⟩
//! ```
//!
//! so that the norm is the plain sum `Σ ∫∫ |X|²` over all six fields. The
//! couplings below follow from projecting the Schrödinger equation onto this
//! form and are checked against the lattice Hamiltonian by [`validate_eom`].

use nalgebra::SMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{CitError, Result};
use crate::lattice::{build_hamiltonian, Mode, ModeGrid, ModeKind, SectorBasis};
use crate::params::SystemParams;

pub type PairMatrix = SMatrix<Complex64, 12, 12>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Ff,
    Ef,
    Ee,
    Sf,
    Es,
    Ss,
}

pub const COMPONENTS: [Component; 6] = [
    Component::Ff,
    Component::Ef,
    Component::Ee,
    Component::Sf,
    Component::Es,
    Component::Ss,
];

impl Component {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Ff => "ff",
            Component::Ef => "ef",
            Component::Ee => "ee",
            Component::Sf => "sf",
            Component::Es => "es",
            Component::Ss => "ss",
        }
    }

    /// Excitation carried by the first and second coordinate.
    pub fn kinds(self) -> (ModeKind, ModeKind) {
        use ModeKind::*;
        match self {
            Component::Ff => (Photon, Photon),
            Component::Ef => (Excited, Photon),
            Component::Ee => (Excited, Excited),
            Component::Sf => (Spin, Photon),
            Component::Es => (Excited, Spin),
            Component::Ss => (Spin, Spin),
        }
    }

    pub fn is_symmetric(self) -> bool {
        let (a, b) = self.kinds();
        a == b
    }

    fn count(self, kind: ModeKind) -> usize {
        let (a, b) = self.kinds();
        (a == kind) as usize + (b == kind) as usize
    }

    pub fn excited_count(self) -> usize {
        self.count(ModeKind::Excited)
    }

    /// Cavity photons present, one per spin excitation.
    pub fn cavity_photons(self) -> usize {
        self.count(ModeKind::Spin)
    }

    /// Whether the first and second coordinate are advected at c.
    pub fn advected_axes(self) -> (bool, bool) {
        let (a, b) = self.kinds();
        (a == ModeKind::Photon, b == ModeKind::Photon)
    }

    /// Whether the first and second coordinate must lie inside the medium.
    pub fn atomic_axes(self) -> (bool, bool) {
        let (a, b) = self.advected_axes();
        (!a, !b)
    }

    pub fn decay_rate(self, p: &SystemParams) -> f64 {
        p.gamma * self.excited_count() as f64 + 0.5 * p.kappa * self.cavity_photons() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgOrder {
    /// `source(z1, z2)`
    Same,
    /// `source(z2, z1)`
    Swapped,
}

/// Coordinate of the target whose medium weight multiplies the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightOn {
    None,
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rate {
    /// g√n
    Probe,
    /// G
    Cavity,
}

/// `∂t target(z1, z2) += i · factor · rate · w · source(args)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub target: Component,
    pub source: Component,
    pub args: ArgOrder,
    pub weight: WeightOn,
    pub rate: Rate,
    pub factor: f64,
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = match self.args {
            ArgOrder::Same => ("z1", "z2"),
            ArgOrder::Swapped => ("z2", "z1"),
        };
        let rate = match self.rate {
            Rate::Probe => "g√n",
            Rate::Cavity => "G",
        };
        let w = match self.weight {
            WeightOn::None => "",
            WeightOn::First => "·w(z1)",
            WeightOn::Second => "·w(z2)",
        };
        write!(
            f,
            "∂t {}(z1,z2) += i·{:.6}·{rate}{w}·{}({a},{b})",
            self.target.name(),
            self.factor,
            self.source.name()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EomCoefficients {
    pub couplings: Vec<Coupling>,
}

/// The two-excitation coupling table.
pub fn derive_eom() -> EomCoefficients {
    use ArgOrder::*;
    use Component::*;
    use Rate::*;
    use WeightOn::*;
    let s2 = std::f64::consts::SQRT_2;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = |target, source, args, weight, rate, factor| Coupling {
        target,
        source,
        args,
        weight,
        rate,
        factor,
    };
    EomCoefficients {
        couplings: vec![
            c(Ff, Ef, Same, First, Probe, h),
            c(Ff, Ef, Swapped, Second, Probe, h),
            c(Ef, Ff, Same, First, Probe, s2),
            c(Ef, Ee, Same, Second, Probe, s2),
            c(Ef, Sf, Same, None, Cavity, 1.0),
            c(Ee, Ef, Same, Second, Probe, h),
            c(Ee, Ef, Swapped, First, Probe, h),
            c(Ee, Es, Same, None, Cavity, h),
            c(Ee, Es, Swapped, None, Cavity, h),
            c(Sf, Ef, Same, None, Cavity, 1.0),
            c(Sf, Es, Swapped, Second, Probe, 1.0),
            c(Es, Sf, Swapped, First, Probe, 1.0),
            c(Es, Ee, Same, None, Cavity, s2),
            c(Es, Ss, Same, None, Cavity, 2.0),
            c(Ss, Es, Same, None, Cavity, 1.0),
            c(Ss, Es, Swapped, None, Cavity, 1.0),
        ],
    }
}

impl EomCoefficients {
    /// Copy with the factor of every `target ← source` coupling replaced.
    pub fn with_factor(&self, target: Component, source: Component, factor: f64) -> Self {
        let mut out = self.clone();
        for c in out.couplings.iter_mut() {
            if c.target == target && c.source == source {
                c.factor = factor;
            }
        }
        out
    }

    /// Generator of the local (coupling and decay) dynamics for a coordinate
    /// pair with medium weights `wa`, `wb`. Variable `2k + o` is component `k`
    /// evaluated at `(a, b)` for `o = 0` and at `(b, a)` for `o = 1`.
    /// Variables with an atomic coordinate outside the medium are removed.
    pub fn pair_generator(&self, p: &SystemParams, wa: f64, wb: f64) -> PairMatrix {
        let mut m = PairMatrix::zeros();
        let allowed = pair_allowed(wa, wb);
        for comp in COMPONENTS {
            for o in 0..2 {
                let row = 2 * comp.index() + o;
                if allowed[row] {
                    m[(row, row)] = Complex64::new(-comp.decay_rate(p), 0.0);
                }
            }
        }
        for c in &self.couplings {
            for o in 0..2 {
                let (wx, wy) = if o == 0 { (wa, wb) } else { (wb, wa) };
                let so = match c.args {
                    ArgOrder::Same => o,
                    ArgOrder::Swapped => 1 - o,
                };
                let row = 2 * c.target.index() + o;
                let col = 2 * c.source.index() + so;
                if !allowed[row] || !allowed[col] {
                    continue;
                }
                let rate = match c.rate {
                    Rate::Probe => p.probe_coupling,
                    Rate::Cavity => p.cavity_coupling,
                };
                let w = match c.weight {
                    WeightOn::None => 1.0,
                    WeightOn::First => wx,
                    WeightOn::Second => wy,
                };
                m[(row, col)] += Complex64::new(0.0, c.factor * rate * w);
            }
        }
        m
    }
}

/// Which pair variables may be nonzero for the given weights.
pub fn pair_allowed(wa: f64, wb: f64) -> [bool; 12] {
    let mut out = [false; 12];
    for comp in COMPONENTS {
        let (ax, ay) = comp.atomic_axes();
        for o in 0..2 {
            let (wx, wy) = if o == 0 { (wa, wb) } else { (wb, wa) };
            out[2 * comp.index() + o] = (!ax || wx > 0.0) && (!ay || wy > 0.0);
        }
    }
    out
}

/// Largest mismatch between the table and the lattice Hamiltonian for one
/// `target ← source` pair of components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingDiagnostic {
    pub target: Component,
    pub source: Component,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EomReport {
    pub diagnostics: Vec<CouplingDiagnostic>,
    pub max_error: f64,
}

const EOM_TOLERANCE: f64 = 1e-12;

/// Compares the local generator built from `eom` with the lattice
/// Hamiltonian on two sites (distinct and coincident coordinates), for every
/// component pair. Fails with a per-coupling diagnostic on mismatch.
pub fn validate_eom(eom: &EomCoefficients, p: &SystemParams) -> Result<EomReport> {
    let n = 8;
    let (wa, wb) = (0.7, 0.4);
    let mut mask = vec![0.0; n];
    mask[0] = wa;
    mask[1] = wb;
    let grid = ModeGrid {
        n_sites: n,
        spacing: 1.0,
        z_min: 0.0,
        periodic: true,
        medium_mask: mask,
    };
    let basis = SectorBasis::new(n, 2)?;
    let h = build_hamiltonian(
        &grid,
        p,
        &basis,
        crate::lattice::HamiltonianOptions {
            interaction_only: true,
            ..Default::default()
        },
    )?;
    let mut errors = [[0.0f64; 6]; 6];

    // Distinct sites 0 and 1.
    let m = eom.pair_generator(p, wa, wb);
    for_each_pair_entry(0, 1, &m, |ti, si, field_val, lat_row, lat_col| {
        let lattice = Complex64::new(0.0, -1.0) * h.get(
            basis.index_of(&lat_row).unwrap(),
            basis.index_of(&lat_col).unwrap(),
        );
        errors[ti][si] = errors[ti][si].max((field_val - lattice).norm());
    });
    // Coincident coordinates at site 0.
    let m = eom.pair_generator(p, wa, wa);
    for_each_pair_entry(0, 0, &m, |ti, si, field_val, lat_row, lat_col| {
        let lattice = Complex64::new(0.0, -1.0) * h.get(
            basis.index_of(&lat_row).unwrap(),
            basis.index_of(&lat_col).unwrap(),
        );
        errors[ti][si] = errors[ti][si].max((field_val - lattice).norm());
    });

    let mut diagnostics = Vec::new();
    let mut max_error: f64 = 0.0;
    for t in COMPONENTS {
        for s in COMPONENTS {
            let e = errors[t.index()][s.index()];
            max_error = max_error.max(e);
            diagnostics.push(CouplingDiagnostic {
                target: t,
                source: s,
                max_error: e,
            });
        }
    }
    let scale = p.cavity_coupling.max(p.probe_coupling).max(p.gamma).max(p.kappa);
    let bad: Vec<String> = diagnostics
        .iter()
        .filter(|d| d.max_error > EOM_TOLERANCE * scale)
        .map(|d| format!("{}<-{}: {:.3e}", d.target.name(), d.source.name(), d.max_error))
        .collect();
    if !bad.is_empty() {
        return Err(CitError::Derivation(format!(
            "couplings disagree with the lattice Hamiltonian: {}",
            bad.join(", ")
        )));
    }
    Ok(EomReport {
        diagnostics,
        max_error,
    })
}

/// Lattice label and amplitude scale of pair variable `var` at sites `(a, b)`.
/// The scale is `A / X` with unit spacing.
fn lattice_label(var: usize, a: usize, b: usize) -> (Vec<Mode>, f64) {
    let comp = COMPONENTS[var / 2];
    let (x, y) = if var % 2 == 0 { (a, b) } else { (b, a) };
    let (k1, k2) = comp.kinds();
    let mut label = vec![Mode { kind: k1, site: x }, Mode { kind: k2, site: y }];
    label.sort();
    let scale = if comp.is_symmetric() && a != b {
        std::f64::consts::SQRT_2
    } else {
        1.0
    };
    (label, scale)
}

/// Walks the field generator expressed in lattice amplitudes. For every
/// target variable (one representative per lattice state) and every lattice
/// source state, reports the induced matrix element.
fn for_each_pair_entry<F>(a: usize, b: usize, m: &PairMatrix, mut visit: F)
where
    F: FnMut(usize, usize, Complex64, Vec<Mode>, Vec<Mode>),
{
    for row in 0..12 {
        let comp_t = COMPONENTS[row / 2];
        // One representative orientation per lattice state.
        if row % 2 == 1 && (comp_t.is_symmetric() || a == b) {
            continue;
        }
        let (row_label, row_scale) = lattice_label(row, a, b);
        // Source lattice states: collect distinct labels over the columns.
        let mut seen: Vec<Vec<Mode>> = Vec::new();
        for col in 0..12 {
            let (col_label, col_scale) = lattice_label(col, a, b);
            if seen.contains(&col_label) {
                continue;
            }
            seen.push(col_label.clone());
            // A unit lattice amplitude sets every field variable that maps
            // onto this label to 1 / scale.
            let mut val = Complex64::new(0.0, 0.0);
            for c2 in 0..12 {
                let (l2, s2) = lattice_label(c2, a, b);
                if l2 == col_label {
                    val += m[(row, c2)] / s2;
                }
            }
            let _ = col_scale;
            visit(
                comp_t.index(),
                col / 2,
                val * row_scale,
                row_label.clone(),
                col_label,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SystemParams {
        let mut p = SystemParams::natural(1.3, 2.1, 0.37);
        p.kappa = 0.23;
        p
    }

    #[test]
    fn table_matches_lattice() {
        let report = validate_eom(&derive_eom(), &params()).unwrap();
        assert!(report.max_error < 1e-12, "{report:?}");
        let p = SystemParams::natural(3.0, 0.5, 0.0);
        validate_eom(&derive_eom(), &p).unwrap();
    }

    #[test]
    fn wrong_factor_is_named() {
        let bad = derive_eom().with_factor(Component::Es, Component::Ss, 2f64.sqrt());
        match validate_eom(&bad, &params()) {
            Err(CitError::Derivation(msg)) => {
                assert!(msg.contains("es<-ss"), "{msg}");
                assert!(!msg.contains("ff<-ef"), "{msg}");
            }
            other => panic!("expected derivation error, got {other:?}"),
        }
    }

    #[test]
    fn decay_counts() {
        let mut p = SystemParams::natural(1.0, 1.0, 2.0);
        p.kappa = 0.6;
        let rates: Vec<f64> = COMPONENTS.iter().map(|c| c.decay_rate(&p)).collect();
        assert_eq!(rates, vec![0.0, 2.0, 4.0, 0.3, 2.3, 0.6]);
    }

    #[test]
    fn generator_is_anti_hermitian_on_the_symmetric_subspace() {
        // Restrict to the variables with a lattice counterpart; the induced
        // operator must be anti-Hermitian without decay.
        let p = SystemParams::natural(1.7, 2.4, 0.0);
        let m = derive_eom().pair_generator(&p, 0.9, 0.3);
        let mut lat = SMatrix::<Complex64, 9, 9>::zeros();
        let mut labels: Vec<Vec<Mode>> = Vec::new();
        for v in 0..12 {
            let (l, _) = lattice_label(v, 0, 1);
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
        assert_eq!(labels.len(), 9);
        for_each_pair_entry(0, 1, &m, |_, _, val, r, c| {
            let i = labels.iter().position(|l| *l == r).unwrap();
            let j = labels.iter().position(|l| *l == c).unwrap();
            lat[(i, j)] = val;
        });
        assert!((lat + lat.adjoint()).norm() < 1e-13);
    }

    #[test]
    fn co_located_dark_configuration_is_stationary() {
        for (g_c, g_p) in [(1.0, 1.0), (2.0, 0.5), (0.3, 4.0)] {
            let p = SystemParams::natural(g_c, g_p, 0.0);
            let m = derive_eom().pair_generator(&p, 1.0, 1.0);
            let mut v = SMatrix::<Complex64, 12, 1>::zeros();
            let s2 = 2f64.sqrt();
            for o in 0..2 {
                v[2 * Component::Ff.index() + o] = Complex64::new(s2 * g_c * g_c, 0.0);
                v[2 * Component::Sf.index() + o] = Complex64::new(-2.0 * g_c * g_p, 0.0);
                v[2 * Component::Ss.index() + o] = Complex64::new(g_p * g_p, 0.0);
            }
            assert!((m * v).norm() < 1e-12 * v.norm() * g_c.max(g_p));
        }
    }

    #[test]
    fn outside_medium_reduces_to_single_excitation_coupling() {
        // Second coordinate outside: (ff, ef, sf) at (a, b) follow the
        // single-excitation equations with the partner as spectator.
        let p = SystemParams::natural(1.1, 2.3, 0.4);
        let m = derive_eom().pair_generator(&p, 0.8, 0.0);
        let ff = 2 * Component::Ff.index();
        let ef = 2 * Component::Ef.index();
        let sf = 2 * Component::Sf.index();
        let one = crate::solver1::local_generator(&p, 0.8);
        // ff appears in both orientations; the spectator photon contributes √2.
        let s2 = 2f64.sqrt();
        assert!((m[(ef, ff)] + m[(ef, ff + 1)] - one[(1, 0)] * s2).norm() < 1e-14);
        assert!((m[(ff, ef)] * s2 - one[(0, 1)]).norm() < 1e-14);
        assert!((m[(ef, ef)] - one[(1, 1)]).norm() < 1e-14);
        assert!((m[(ef, sf)] - one[(1, 2)]).norm() < 1e-14);
        assert!((m[(sf, ef)] - one[(2, 1)]).norm() < 1e-14);
        // Atomic variables at the outside coordinate are removed.
        for v in [ef + 1, sf + 1, 2 * Component::Ee.index(), 2 * Component::Ss.index()] {
            assert!(m.row(v).iter().all(|x| *x == Complex64::new(0.0, 0.0)));
        }
    }
}
