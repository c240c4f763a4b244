//! Conjugacy oracles on the scalar quadratic catalog system: the power-series
//! coefficient of `h` near 0, inverse round trips, the conjugacy identity,
//! autonomy collapse, tail convergence and the expansion-order decay.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;

use dichotomy_core::catalog;
use dichotomy_core::conjugacy::{ConjugacyParams, DiscreteConjugacy};
use dichotomy_core::evolution::{EvolutionFamily, IndexWindow, IntegratorSettings};
use dichotomy_core::spectrum::{adapted_norms, estimate_projections, fit_dichotomy_constants, Cocycle};

fn scalar_quadratic_conjugacy_with(c: f64, params: ConjugacyParams) -> DiscreteConjugacy {
    let mut sys_params = BTreeMap::new();
    sys_params.insert("c".to_string(), c);
    let sys = catalog::build("scalar_quadratic", &sys_params).unwrap();
    let settings = IntegratorSettings {
        step: 5e-3,
        tol: 1e-9,
        ..Default::default()
    };
    let fam = Arc::new(EvolutionFamily::new(sys.linear, sys.nonlinear, settings));
    let disc = Arc::new(fam.discretize(IndexWindow::new(-50, 50)).unwrap());
    let coc = Cocycle::from_discretization(&disc).unwrap();
    let proj = estimate_projections(&coc, 1.0, 20, 5).unwrap();
    let fit = fit_dichotomy_constants(&coc, &proj).unwrap();
    let dich = Arc::new(adapted_norms(&coc, &proj, fit.m, fit.lambda, fit.lambda_bar, fit.eps).unwrap());
    DiscreteConjugacy::new(disc, dich, params)
}

fn scalar_quadratic_conjugacy(c: f64, n_tail: usize) -> DiscreteConjugacy {
    scalar_quadratic_conjugacy_with(
        c,
        ConjugacyParams {
            n_tail,
            override_domain: true,
            ..Default::default()
        },
    )
}

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

#[test]
fn h_quadratic_coefficient_matches_series_oracle() {
    // oracle: power-series matching of h(lam x + c x^2) = lam h(x) gives a
    // quadratic coefficient c/(lam - lam^2) = 4 for lam = 1/2, c = 1.
    let dc = scalar_quadratic_conjugacy(1.0, 40);
    let expect = 1.0 / (0.5 - 0.25);
    for &r in &[1e-2, 1e-3, 1e-4] {
        let hp = dc.h(0, &scalar(r)).unwrap()[0];
        let hm = dc.h(0, &scalar(-r)).unwrap()[0];
        // symmetric combination cancels the cubic term
        let coeff = (hp + hm) / (2.0 * r * r);
        assert!(
            (coeff - expect).abs() / expect < 0.05,
            "r = {r}: coefficient {coeff:.4} vs oracle {expect}"
        );
    }
}

#[test]
fn h_inverse_quadratic_coefficient_matches_series_inversion() {
    // series inversion of y = x + 4x^2 gives x = y - 4y^2 + O(y^3)
    let dc = scalar_quadratic_conjugacy(1.0, 40);
    for &r in &[1e-2, 1e-3] {
        let ip = dc.h_inverse(0, &scalar(r)).unwrap()[0];
        let im = dc.h_inverse(0, &scalar(-r)).unwrap()[0];
        let coeff = (ip + im) / (2.0 * r * r);
        assert!(
            (coeff - (-4.0)).abs() / 4.0 < 0.05,
            "r = {r}: inverse coefficient {coeff:.4} vs oracle -4"
        );
    }
}

#[test]
fn h_inverse_round_trip() {
    let dc = scalar_quadratic_conjugacy(1.0, 40);
    let tol = 10.0 * dc.params.tol_fp;
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let x = -0.04 + 0.08 * (k as f64) / 999.0;
        let y = dc.h(0, &scalar(x)).unwrap();
        let back = dc.h_inverse(0, &y).unwrap()[0];
        worst = worst.max((back - x).abs());
    }
    assert!(worst <= tol, "round-trip error {worst:.3e} above {tol:.3e}");
}

#[test]
fn conjugacy_identity_residual() {
    let dc = scalar_quadratic_conjugacy(1.0, 40);
    let mut worst = 0.0f64;
    for n in [-2i64, 0, 2] {
        for k in 0..200 {
            let x = -0.04 + 0.08 * (k as f64) / 199.0;
            if x.abs() < 1e-6 {
                continue;
            }
            worst = worst.max(dc.conjugacy_residual(n, &scalar(x)).unwrap());
        }
    }
    assert!(worst <= 1e-6, "relative conjugacy residual {worst:.3e}");
}

#[test]
fn autonomy_collapse_h_independent_of_n() {
    // A_n, f_n index-independent implies h_n index-independent.
    let dc = scalar_quadratic_conjugacy(1.0, 40);
    let tol = 10.0 * dc.params.tol_fp;
    for k in 0..50 {
        let x = scalar(-0.03 + 0.06 * (k as f64) / 49.0);
        let h0 = dc.h(0, &x).unwrap();
        for n in [-5i64, -1, 1, 5] {
            let hn = dc.h(n, &x).unwrap();
            assert!(
                (&hn - &h0).norm() <= tol,
                "h_{n} differs from h_0 by {:.3e}",
                (&hn - &h0).norm()
            );
        }
    }
}

#[test]
fn tail_doubling_changes_h_within_tail_bound() {
    // A loose residual budget makes the 12-term truncation admissible (a
    // tight one correctly raises the increase-n_tail error; see below).
    let loose = ConjugacyParams {
        n_tail: 12,
        tol_conj: 1e-4,
        override_domain: true,
        ..Default::default()
    };
    let dc_short = scalar_quadratic_conjugacy_with(1.0, loose);
    let dc_long = scalar_quadratic_conjugacy(1.0, 30);
    for k in 0..20 {
        let x = scalar(0.005 + 0.04 * (k as f64) / 19.0);
        let short = dc_short.h_detailed(0, &x).unwrap();
        let long = dc_long.h(0, &x).unwrap();
        let diff = (&long - &short.value).norm();
        // generous factor: the bound is a geometric estimate, not exact
        assert!(
            diff <= 10.0 * short.tail_bound.max(dc_short.params.tol_fp),
            "tail doubling moved h by {diff:.3e}, bound {:.3e}",
            short.tail_bound
        );
    }
}

#[test]
fn short_tail_with_tight_budget_raises_increase_tail_error() {
    let tight = ConjugacyParams {
        n_tail: 12,
        tol_conj: 1e-8,
        override_domain: true,
        ..Default::default()
    };
    let dc = scalar_quadratic_conjugacy_with(1.0, tight);
    let err = dc.h(0, &scalar(0.04)).unwrap_err();
    assert!(
        matches!(err, dichotomy_core::Error::TailAboveTolerance { .. }),
        "got {err:?}"
    );
}

#[test]
fn expansion_order_ratios_decrease_on_dyadic_radii() {
    // |h(x) - x| / |x|^{1+rho} must decay along dyadic radii (h - id is
    // quadratic to leading order while 1 + rho < 2).
    let dc = scalar_quadratic_conjugacy(1.0, 40);
    let rho = 0.1;
    let mut prev = f64::INFINITY;
    for j in 4..=12 {
        let r = 2.0f64.powi(-j);
        let h = dc.h(0, &scalar(r)).unwrap()[0];
        let ratio = (h - r).abs() / r.powf(1.0 + rho);
        assert!(
            ratio <= prev * 1.05,
            "ratio increased at j = {j}: {ratio:.4e} > {prev:.4e}"
        );
        prev = ratio;
    }
}

#[test]
fn h_on_tiny_nonlinearity_stays_in_guaranteed_domain() {
    // c = 1e-4 keeps the smallness budget satisfied; h must evaluate inside
    // U_n without the override flag.
    let mut params = BTreeMap::new();
    params.insert("c".to_string(), 1e-4);
    let sys = catalog::build("scalar_quadratic", &params).unwrap();
    let settings = IntegratorSettings {
        step: 5e-3,
        tol: 1e-9,
        ..Default::default()
    };
    let fam = Arc::new(EvolutionFamily::new(sys.linear, sys.nonlinear, settings));
    let disc = Arc::new(fam.discretize(IndexWindow::new(-50, 50)).unwrap());
    let coc = Cocycle::from_discretization(&disc).unwrap();
    let proj = estimate_projections(&coc, 1.0, 20, 5).unwrap();
    let fit = fit_dichotomy_constants(&coc, &proj).unwrap();
    let dich = Arc::new(adapted_norms(&coc, &proj, fit.m, fit.lambda, fit.lambda_bar, fit.eps).unwrap());
    let dc = DiscreteConjugacy::new(disc, dich, ConjugacyParams::default());
    let x = scalar(0.02);
    let h = dc.h(0, &x).unwrap();
    // coefficient scales with c
    let coeff = (h[0] - 0.02) / (0.02f64 * 0.02);
    assert!((coeff - 4.0e-4).abs() < 1.0e-4, "coefficient {coeff:.3e}");
}
