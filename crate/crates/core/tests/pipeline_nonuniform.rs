//! End-to-end checks on the nonuniform scalar catalog system: envelope fits
//! with a genuinely positive nonuniformity rate, the discretized-nonlinearity
//! decay diagnostics, and the conjugacy identity.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;

use dichotomy_core::catalog;
use dichotomy_core::conditions::{audit_nonlinearity, AuditConfig};
use dichotomy_core::conjugacy::{ConjugacyParams, DiscreteConjugacy};
use dichotomy_core::evolution::{
    fit_flow_lipschitz, EvolutionFamily, FlowBounds, IndexWindow, IntegratorSettings,
};
use dichotomy_core::spectrum::{
    adapted_norms, estimate_projections, estimate_spectrum, fit_dichotomy_constants, Cocycle,
    MuScanConfig,
};

struct Setup {
    fam: Arc<EvolutionFamily>,
    disc: Arc<dichotomy_core::Discretization>,
    coc: Cocycle,
}

fn nonuniform_setup() -> Setup {
    let sys = catalog::build("scalar_nonuniform", &BTreeMap::new()).unwrap();
    let settings = IntegratorSettings {
        step: 5e-3,
        tol: 1e-9,
        ..Default::default()
    };
    let fam = Arc::new(EvolutionFamily::new(sys.linear, sys.nonlinear, settings));
    let disc = Arc::new(fam.discretize(IndexWindow::new(-50, 50)).unwrap());
    let coc = Cocycle::from_discretization(&disc).unwrap();
    Setup { fam, disc, coc }
}

#[test]
fn nonuniform_spectrum_is_one_sided_contraction() {
    let s = nonuniform_setup();
    let cfg = MuScanConfig {
        log_step: 5e-3,
        refine_tol: 5e-3,
        ..Default::default()
    };
    let (est, _) = estimate_spectrum(&s.coc, &cfg).unwrap();
    assert!(est.hyperbolic);
    assert_eq!(est.stable_count, est.total, "pure contraction expected");
    let (lo, hi) = est.log_intervals[0];
    // rates oscillate around -1 with the t sin t envelope
    assert!(lo < -1.0 && lo > -1.6, "lo = {lo}");
    assert!(hi > -1.0 && hi < -0.4, "hi = {hi}");
}

#[test]
fn nonuniform_constants_fit_with_positive_eps() {
    let s = nonuniform_setup();
    let proj = estimate_projections(&s.coc, 1.0, 20, 5).unwrap();
    let fit = fit_dichotomy_constants(&s.coc, &proj).unwrap();
    assert!(fit.eps > 0.01, "fitted eps = {} must witness nonuniformity", fit.eps);
    assert!(fit.lambda > 0.3, "lambda = {}", fit.lambda);
    assert!(fit.violation_fraction <= 0.01, "violations {}", fit.violation_fraction);

    // bound (5) reproduced on sampled continuous pairs at 1.05x slack with
    // <= 1% violations (oracle: direct envelope over sampled transitions)
    let mut violations = 0usize;
    let mut total = 0usize;
    let mut k = 0u64;
    for i in 0..1000 {
        k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407 + i);
        let s0 = -40.0 + 80.0 * ((k >> 11) as f64 / (1u64 << 53) as f64);
        k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let dt = 20.0 * ((k >> 11) as f64 / (1u64 << 53) as f64);
        let t = (s0 + dt).min(45.0);
        let tr = s.fam.transition(s0, t).unwrap()[(0, 0)].abs();
        let bound = 1.05 * fit.m * (-fit.lambda * (t - s0) + fit.eps * s0.abs()).exp();
        total += 1;
        if tr > bound {
            violations += 1;
        }
    }
    assert!(
        (violations as f64) < 0.01 * total as f64 + 1.0,
        "{violations}/{total} envelope violations"
    );
}

#[test]
fn nonuniform_audit_passes_for_catalog_constants() {
    let sys = catalog::build("scalar_nonuniform", &BTreeMap::new()).unwrap();
    let audit = audit_nonlinearity(
        sys.nonlinear.as_ref().unwrap(),
        (-50.0, 50.0),
        &AuditConfig {
            radius: 0.3,
            ..Default::default()
        },
    );
    assert!(audit.all_pass(), "audit failed: {audit:?}");
    assert!(audit.fitted_eta > 0.0);
}

#[test]
fn discretized_nonlinearity_decays_like_the_envelope() {
    // |Df_n(x)| <= eta_tilde e^{-eps |n|} sampled via the variational flow;
    // the formula constant is a generous upper bound for the measured one.
    let s = nonuniform_setup();
    let proj = estimate_projections(&s.coc, 1.0, 20, 5).unwrap();
    let fit = fit_dichotomy_constants(&s.coc, &proj).unwrap();
    let nl = s.fam.nonlinear.as_ref().unwrap();
    let (a_lip, d_lip) = fit_flow_lipschitz(&s.fam, IndexWindow::new(-20, 20), 0.05, 60, fit.eps, 99).unwrap();
    let bounds = FlowBounds::from_constants(fit.m, fit.lambda_bar, fit.eps, nl.eta, nl.lip_b, a_lip, d_lip);

    let mut worst_ratio = 0.0f64;
    for n in [-40i64, -20, -5, 0, 5, 20, 40] {
        for &x in &[-0.04f64, -0.01, 0.01, 0.04] {
            let df = s.disc.df(n, &DVector::from_element(1, x)).unwrap()[(0, 0)].abs();
            let envelope = (-(nl.eps) * (n as f64).abs()).exp();
            worst_ratio = worst_ratio.max(df / envelope);
        }
    }
    assert!(
        worst_ratio <= bounds.eta_tilde,
        "measured Df_n envelope {worst_ratio:.3e} above eta_tilde {:.3e}",
        bounds.eta_tilde
    );
    // the decay with |n| is genuinely visible
    let df_far = s.disc.df(40, &DVector::from_element(1, 0.04)).unwrap()[(0, 0)].abs();
    let df_near = s.disc.df(0, &DVector::from_element(1, 0.04)).unwrap()[(0, 0)].abs();
    assert!(df_far < 0.2 * df_near, "far {df_far:.3e} vs near {df_near:.3e}");
}

#[test]
fn variational_flow_respects_m_tilde_bound() {
    let s = nonuniform_setup();
    let proj = estimate_projections(&s.coc, 1.0, 20, 5).unwrap();
    let fit = fit_dichotomy_constants(&s.coc, &proj).unwrap();
    let nl = s.fam.nonlinear.as_ref().unwrap();
    let bounds = FlowBounds::from_constants(fit.m, fit.lambda_bar, fit.eps, nl.eta, nl.lip_b, 2.0, 1.0);
    for n in [-10i64, 0, 10] {
        for frac in [0.25, 0.5, 1.0] {
            let j = s
                .fam
                .variational_flow(n as f64, n as f64 + frac, &DVector::from_element(1, 0.02))
                .unwrap()[(0, 0)]
                .abs();
            let bound = bounds.m_tilde * (fit.eps * (n as f64).abs()).exp();
            assert!(j <= bound, "|D phi| = {j:.3} above m_tilde bound {bound:.3} at n = {n}");
        }
    }
}

#[test]
fn nonuniform_conjugacy_residual_small() {
    let s = nonuniform_setup();
    let proj = estimate_projections(&s.coc, 1.0, 20, 5).unwrap();
    let fit = fit_dichotomy_constants(&s.coc, &proj).unwrap();
    let dich = Arc::new(adapted_norms(&s.coc, &proj, fit.m, fit.lambda, fit.lambda_bar, fit.eps).unwrap());
    let dc = DiscreteConjugacy::new(
        s.disc.clone(),
        dich,
        ConjugacyParams {
            override_domain: true,
            ..Default::default()
        },
    );
    let mut worst = 0.0f64;
    for n in [-2i64, 0, 2] {
        for k in 0..100 {
            let x = -0.04 + 0.08 * k as f64 / 99.0;
            if x.abs() < 1e-6 {
                continue;
            }
            let r = dc.conjugacy_residual(n, &DVector::from_element(1, x)).unwrap();
            worst = worst.max(r);
        }
    }
    assert!(worst <= 1e-6, "relative conjugacy residual {worst:.3e}");
}
