use proptest::prelude::*;

use shiftlab::activation::{gaussian_constants, quadrature_constants, ActivationSpec};
use shiftlab::Error;

fn piecewise_linear(knots: Vec<f64>, slopes: Vec<f64>, offset: f64) -> ActivationSpec {
    ActivationSpec::custom("pwl", move |x| {
        let mut y = offset + slopes[0] * x;
        for (k, s) in knots.iter().zip(&slopes[1..]) {
            y += s * (x - k).max(0.0);
        }
        y
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn quadrature_matches_closed_forms_on_grid() {
    for s in [0.01, 0.25, 1.0, 4.0, 100.0] {
        for sigma in [
            ActivationSpec::Relu,
            ActivationSpec::Affine { a: 1.5, b: -0.4 },
            ActivationSpec::GaussianDamped,
        ] {
            let c = gaussian_constants(&sigma, s).unwrap();
            let q = quadrature_constants(&sigma, s, 200).unwrap();
            assert!(rel(q.eta, c.eta) < 1e-10, "{sigma} s={s} eta");
            assert!(rel(q.rho, c.rho) < 1e-10, "{sigma} s={s} rho");
            assert!(rel(q.zeta, c.zeta) < 1e-10, "{sigma} s={s} zeta");
            assert!((q.omega - c.omega).abs() < 1e-10 * c.omega.max(1.0), "{sigma} s={s} omega");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn eta_dominates_zeta(
        knots in prop::collection::vec(-2.0f64..2.0, 0..4),
        slopes in prop::collection::vec(-2.0f64..2.0, 4),
        offset in -1.0f64..1.0,
        s in 0.1f64..4.0,
    ) {
        let n = knots.len() + 1;
        let sigma = piecewise_linear(knots, slopes[..n].to_vec(), offset);
        match gaussian_constants(&sigma, s) {
            Ok(g) => prop_assert!(g.eta >= g.zeta && g.zeta >= 0.0 && g.omega >= 0.0),
            Err(Error::DegenerateActivation) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn omega_ignores_shift_and_scale(alpha in 0.0f64..1.0, shift in -3.0f64..3.0, c in 0.2f64..5.0, neg in any::<bool>(), s in 0.05f64..10.0) {
        let base = ActivationSpec::Elu { alpha };
        let w0 = gaussian_constants(&base, s).unwrap();
        let shifted = ActivationSpec::custom("elu+c", move |x| ActivationSpec::Elu { alpha }.eval(x) + shift);
        let c = if neg { -c } else { c };
        let scaled = ActivationSpec::custom("c*elu", move |x| c * ActivationSpec::Elu { alpha }.eval(x));
        let w1 = gaussian_constants(&shifted, s).unwrap();
        let w2 = gaussian_constants(&scaled, s).unwrap();
        prop_assert!((w1.omega - w0.omega).abs() < 1e-9 * w0.omega.max(1.0));
        prop_assert!((w2.omega - w0.omega).abs() < 1e-9 * w0.omega.max(1.0));
        prop_assert!(rel(w2.eta, c * c * w0.eta) < 1e-9);
        prop_assert!(rel(w2.zeta, c * c * w0.zeta) < 1e-9);
    }

    #[test]
    fn relu_constants_scale_linearly(s in 0.01f64..100.0) {
        let g = gaussian_constants(&ActivationSpec::Relu, s).unwrap();
        let one = gaussian_constants(&ActivationSpec::Relu, 1.0).unwrap();
        prop_assert!(rel(g.omega, s * one.omega) < 1e-14);
        prop_assert!(rel(g.eta, s * one.eta) < 1e-14);
    }
}
