use std::collections::BTreeMap;
use std::sync::Arc;
use dichotomy_core::catalog;
use dichotomy_core::conditions::*;
use dichotomy_core::evolution::*;
use dichotomy_core::spectrum::*;

fn main() {
    let mut params = BTreeMap::new();
    params.insert("c".to_string(), 1e-4);
    let sys = catalog::build("scalar_quadratic", &params).unwrap();
    let nl = sys.nonlinear.clone().unwrap();
    println!("declared eta = {:.4e}, B = {:.4e}, eps = {}", nl.eta, nl.lip_b, nl.eps);
    let settings = IntegratorSettings { step: 1e-2, tol: 1e-8, ..Default::default() };
    let fam = Arc::new(EvolutionFamily::new(sys.linear, sys.nonlinear, settings));
    let disc = Arc::new(fam.discretize(IndexWindow::new(-40, 40)).unwrap());
    let coc = Cocycle::from_discretization(&disc).unwrap();
    let (spectrum, _) = estimate_spectrum(&coc, &MuScanConfig { log_step: 5e-3, refine_tol: 5e-3, ..Default::default() }).unwrap();
    println!("spectrum: {:?} k={} r={}", spectrum.log_intervals, spectrum.stable_count, spectrum.total);
    let proj = estimate_projections(&coc, spectrum.gap_midpoint(), 20, 5).unwrap();
    let fit = fit_dichotomy_constants(&coc, &proj).unwrap();
    println!("fit: m={:.4} lambda={:.4} lambda_bar={:.4} eps={:.4e}", fit.m, fit.lambda, fit.lambda_bar, fit.eps);
    let dich = Arc::new(adapted_norms(&coc, &proj, fit.m, fit.lambda, fit.lambda_bar, fit.eps).unwrap());
    println!("c_norm = {:.4}", dich.c_norm);
    let alpha = alpha_upper_bound(&spectrum, 0.1, None).unwrap();
    println!("alpha: max={} chosen={}", alpha.alpha_max, alpha.chosen);
    let lp = LyapunovPerronParams::from_spectrum(&spectrum, alpha.chosen, 0.7, 24, 100, 1e-12).unwrap();
    println!("lp: ls+={:.4} gs={:.4} gu={:.4} lu-={:.4} lu+={:.4} K={:.2}", lp.lambda_s_plus, lp.gamma_s, lp.gamma_u, lp.lambda_u_minus, lp.lambda_u_plus, lp.k_const);
    let (a_lip, d_lip) = fit_flow_lipschitz(&fam, IndexWindow::new(-10, 10), 0.05, 40, fit.eps, 11).unwrap();
    println!("a = {a_lip:.4}, d_lip = {d_lip:.4e}");
    let bounds = FlowBounds::from_constants(fit.m, fit.lambda_bar, fit.eps, nl.eta, nl.lip_b, a_lip, d_lip);
    println!("m_tilde={:.4} eta_tilde={:.4e} b_tilde={:.4e}", bounds.m_tilde, bounds.eta_tilde, bounds.b_tilde);
    let budget = smallness_budget(&bounds, dich.c_norm, fit.eps, alpha.chosen, &lp);
    println!("budget: contraction={:.4} delta_thr={:.4} holder={:.4} delta={:.4e} satisfied={}",
        budget.contraction_threshold, budget.delta_threshold, budget.holder_threshold, budget.delta, budget.satisfied);
}
