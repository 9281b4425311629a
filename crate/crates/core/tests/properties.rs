use cit_filter::darkstate::group_velocity_exact;
use cit_filter::params::{check_conditions, derive_quantities, PulseSpec, SystemParams};
use cit_filter::solver2::kinematic_delay_model;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn two_photon_velocity_matches_closed_form(g in 0.1f64..50.0, gn in 0.1f64..50.0) {
        let p = SystemParams::natural(g, gn, 1.0);
        let (v1, v2) = p.group_velocities();
        let r = g / gn;
        prop_assert!((group_velocity_exact(1, r).unwrap() - v1).abs() < 1e-12);
        prop_assert!((group_velocity_exact(2, r).unwrap() - v2).abs() < 1e-12);
        prop_assert!(v1 < v2 && v2 < 1.0);
    }

    #[test]
    fn delay_difference_is_cancellation_free(g in 0.1f64..50.0, gn in 0.1f64..50.0, gamma in 0.01f64..10.0) {
        let p = SystemParams::natural(g, gn, gamma);
        let d = derive_quantities(&p).unwrap();
        let naive = 1.0 / d.v1 - 1.0 / d.v2;
        prop_assert!(d.delta_tau_12 > 0.0);
        prop_assert!((d.delta_tau_12 - naive).abs() <= 1e-9 * (1.0 / d.v1));
    }

    #[test]
    fn kinematic_model_is_causal_and_ordered(g in 0.5f64..20.0, gn in 0.5f64..20.0, d in 0.0f64..10.0) {
        let p = SystemParams::natural(g, gn, 1.0);
        let (v1, v2) = p.group_velocities();
        let m = kinematic_delay_model(d, &p).unwrap();
        prop_assert!(m.trail_exit >= m.lead_exit);
        prop_assert!(m.lead_exit >= 1.0 / v2 - 1e-12);
        prop_assert!(m.lead_exit <= 1.0 / v1 + 1e-12);
        // The trailing photon never beats its separated arrival.
        prop_assert!(m.trail_exit - d <= 1.0 / v1 + 1e-12);
    }

    #[test]
    fn kinematic_model_is_continuous_at_the_branch_point(g in 0.5f64..20.0, gn in 0.5f64..20.0) {
        let p = SystemParams::natural(g, gn, 1.0);
        let (v1, _) = p.group_velocities();
        let edge = 1.0 / v1;
        let below = kinematic_delay_model(edge * (1.0 - 1e-9), &p).unwrap();
        let above = kinematic_delay_model(edge * (1.0 + 1e-9), &p).unwrap();
        prop_assert!((below.lead_exit - above.lead_exit).abs() < 1e-6 * edge);
        prop_assert!((below.trail_exit - above.trail_exit).abs() < 1e-6 * edge);
    }

    #[test]
    fn condition_report_is_consistent(g in 0.1f64..50.0, gn in 0.1f64..50.0, gamma in 0.01f64..10.0,
                                      kappa in 0.001f64..1.0, t_p in 0.01f64..10.0) {
        let mut p = SystemParams::natural(g, gn, gamma);
        p.kappa = kappa;
        let pulse = PulseSpec::gaussian(t_p, -2.0, 0.25).unwrap();
        let r = check_conditions(&p, &pulse).unwrap();
        prop_assert_eq!(r.cavity_ok, r.cooperativity > r.od);
        prop_assert_eq!(r.adiabatic, r.adiabaticity > 1.0);
        prop_assert_eq!(r.messages.len(), 5);
    }
}
