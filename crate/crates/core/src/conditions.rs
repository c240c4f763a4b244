//! Hypothesis checks: the spectral bound condition, the admissible Holder
//! exponent, the (F1)-(F4) nonlinearity audit, and the smallness budget with
//! its derived constants and neighborhood radii.

use nalgebra::{Complex, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evolution::{operator_norm, random_ball, FlowBounds, NonlinearTerm};
use crate::spectrum::SpectrumEstimate;

/// Per-interval outcome of the spectral bound condition.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectralBoundReport {
    /// One entry per spectrum interval: pass flag and log-scale margin
    /// (positive = satisfied with that much room).
    pub entries: Vec<SpectralBoundEntry>,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectralBoundEntry {
    pub index: usize,
    pub stable_side: bool,
    pub log_margin: f64,
    pub pass: bool,
}

/// Checks `b_i/a_i < b_k^{-1}` for the stable intervals and
/// `b_j/a_j < a_{k+1}` for the unstable ones (the order-2 non-resonance
/// form); margins are reported in log scale.
pub fn check_spectral_bound(spectrum: &SpectrumEstimate) -> Result<SpectralBoundReport> {
    spectrum.require_hyperbolic()?;
    let k = spectrum.stable_count;
    let mut entries = Vec::with_capacity(spectrum.total);
    for (idx, (a, b)) in spectrum.intervals.iter().enumerate() {
        let width = b.ln() - a.ln();
        let (stable_side, bound) = if idx < k {
            // b_k^{-1}; defined since the spectrum is hyperbolic (b_k < 1)
            (true, -spectrum.stable_edge().unwrap().ln())
        } else {
            (false, spectrum.unstable_edge().unwrap().ln())
        };
        let log_margin = bound - width;
        entries.push(SpectralBoundEntry {
            index: idx,
            stable_side,
            log_margin,
            pass: log_margin > 0.0,
        });
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(SpectralBoundReport { entries, pass })
}

/// Which branch of the exponent bound binds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum AlphaBranch {
    /// `(ln a_{k+1} - ln b_k) / ln b_r`
    UnstableRadius,
    /// `(ln a_{k+1} - ln b_k) / ln a_1^{-1}`
    StableRadius,
    /// One-sided spectrum: no finite branch survives.
    Unbounded,
}

/// Admissible Holder exponent data.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct AlphaBound {
    /// Supremum of admissible exponents (may be infinite for one-sided spectra).
    pub alpha_max: f64,
    pub branch: AlphaBranch,
    /// Exponent actually used downstream; capped at 0.95.
    pub chosen: f64,
    /// Small regularity order used by the expansion checks.
    pub rho: f64,
}

pub const ALPHA_CAP: f64 = 0.95;

/// Upper bound on the Holder exponent from the central spectral gap,
/// `min{gap/ln b_r, gap/ln a_1^{-1}}`; branches whose denominator is not
/// positive are dropped (one-sided spectra).
pub fn alpha_upper_bound(spectrum: &SpectrumEstimate, rho: f64, chosen: Option<f64>) -> Result<AlphaBound> {
    spectrum.require_hyperbolic()?;
    if !(0.0..1.0).contains(&rho) || rho == 0.0 {
        return Err(Error::InvalidInput(format!("rho must lie in (0,1), got {rho}")));
    }
    let gap = match (spectrum.stable_edge(), spectrum.unstable_edge()) {
        (Some(b_k), Some(a_k1)) => a_k1.ln() - b_k.ln(),
        _ => f64::INFINITY,
    };
    let b_r = spectrum.intervals.last().expect("nonempty spectrum").1;
    let a_1 = spectrum.intervals.first().expect("nonempty spectrum").0;
    let mut alpha_max = f64::INFINITY;
    let mut branch = AlphaBranch::Unbounded;
    let mut any = false;
    if b_r > 1.0 {
        any = true;
        let v = gap / b_r.ln();
        if v < alpha_max {
            alpha_max = v;
            branch = AlphaBranch::UnstableRadius;
        }
    }
    if a_1 < 1.0 {
        any = true;
        let v = gap / -a_1.ln();
        if v < alpha_max {
            alpha_max = v;
            branch = AlphaBranch::StableRadius;
        }
    }
    if !any {
        return Err(Error::OneSidedSpectrum {
            side: "both branch denominators non-positive",
        });
    }
    let default_choice = (0.9 * alpha_max).min(ALPHA_CAP);
    let chosen = match chosen {
        Some(c) => {
            if !(c > 0.0) || c >= alpha_max {
                return Err(Error::InvalidInput(format!(
                    "alpha override {c} outside (0, alpha_max = {alpha_max})"
                )));
            }
            c.min(ALPHA_CAP)
        }
        None => default_choice,
    };
    Ok(AlphaBound {
        alpha_max,
        branch: if alpha_max.is_finite() { branch } else { AlphaBranch::Unbounded },
        chosen,
        rho,
    })
}

/// Autonomous form of the exponent bound from the eigenvalues of `A`:
/// `min{(Re mu_{p+1} - Re mu_p)/Re mu_d, (Re mu_{p+1} - Re mu_p)/(-Re mu_1)}`.
pub fn autonomous_alpha_bound(eigenvalues: &[Complex<f64>], rho: f64) -> Result<AlphaBound> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidInput("empty eigenvalue list".into()));
    }
    let mut re: Vec<f64> = eigenvalues.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if re.iter().any(|&r| r == 0.0) {
        return Err(Error::InvalidInput("eigenvalue with zero real part".into()));
    }
    let p = re.iter().filter(|&&r| r < 0.0).count();
    if p == 0 || p == re.len() {
        return Err(Error::OneSidedSpectrum {
            side: if p == 0 { "expansion only" } else { "contraction only" },
        });
    }
    let gap = re[p] - re[p - 1];
    let alpha_max = (gap / re[re.len() - 1]).min(gap / -re[0]);
    Ok(AlphaBound {
        alpha_max,
        branch: if gap / re[re.len() - 1] <= gap / -re[0] {
            AlphaBranch::UnstableRadius
        } else {
            AlphaBranch::StableRadius
        },
        chosen: (0.9 * alpha_max).min(ALPHA_CAP),
        rho,
    })
}

/// Sampler configuration for the nonlinearity audit.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AuditConfig {
    pub t_samples: usize,
    pub x_samples: usize,
    pub radius: f64,
    pub seed: u64,
    /// Absolute tolerance for the exact conditions (F1)/(F2).
    pub tol_zero: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            t_samples: 81,
            x_samples: 120,
            radius: 0.5,
            seed: 20_240_001,
            tol_zero: 1e-9,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct WorstOffender {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
}

/// Outcome of the (F1)-(F4) audit with fitted envelope constants.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NonlinearityAudit {
    pub f1_pass: bool,
    pub f2_pass: bool,
    pub f3_pass: bool,
    pub f4_pass: bool,
    /// `sup |D_x f(t,x)| e^{3 eps |t|}` over the samples.
    pub fitted_eta: f64,
    /// Lipschitz constant of `D_x f` against `e^{-4 eps |t|} |x-y|`.
    pub fitted_b: f64,
    pub declared_eta: f64,
    pub declared_b: f64,
    pub worst_f1: WorstOffender,
    pub worst_f3: WorstOffender,
    pub sample_count: usize,
    pub seed: u64,
}

impl NonlinearityAudit {
    pub fn all_pass(&self) -> bool {
        self.f1_pass && self.f2_pass && self.f3_pass && self.f4_pass
    }
}

/// Samples (F1)-(F4) over the horizon and a ball: F1/F2 exactly at `x = 0`,
/// F3/F4 as envelope fits compared against the declared constants with 1.05x
/// slack. The audit always returns a report.
pub fn audit_nonlinearity(nl: &NonlinearTerm, horizon: (f64, f64), cfg: &AuditConfig) -> NonlinearityAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = nl.dim;
    let zero = DVector::zeros(d);
    let mut worst_f1 = WorstOffender { t: 0.0, x: vec![0.0; d], value: 0.0 };
    let mut worst_f2: f64 = 0.0;
    let mut worst_f3 = WorstOffender { t: 0.0, x: vec![0.0; d], value: 0.0 };
    let mut fitted_eta: f64 = 0.0;
    let mut fitted_b: f64 = 0.0;

    let ts: Vec<f64> = (0..cfg.t_samples)
        .map(|i| horizon.0 + (horizon.1 - horizon.0) * i as f64 / (cfg.t_samples - 1).max(1) as f64)
        .collect();
    for &t in &ts {
        let v = nl.eval(t, &zero).norm();
        if v > worst_f1.value {
            worst_f1 = WorstOffender { t, x: vec![0.0; d], value: v };
        }
        worst_f2 = worst_f2.max(operator_norm(&nl.jacobian(t, &zero)));
    }

    let xs: Vec<DVector<f64>> = (0..cfg.x_samples)
        .map(|_| random_ball(&mut rng, d, cfg.radius))
        .collect();
    for &t in &ts {
        let w3 = (3.0 * nl.eps * t.abs()).exp();
        let w4 = (4.0 * nl.eps * t.abs()).exp();
        let mut prev: Option<(DVector<f64>, nalgebra::DMatrix<f64>)> = None;
        for x in &xs {
            let j = nl.jacobian(t, x);
            let val = operator_norm(&j) * w3;
            if val > fitted_eta {
                fitted_eta = val;
                worst_f3 = WorstOffender { t, x: x.iter().copied().collect(), value: val };
            }
            if let Some((px, pj)) = &prev {
                let dx = (x - px).norm();
                if dx > 1e-10 {
                    fitted_b = fitted_b.max(operator_norm(&(&j - pj)) * w4 / dx);
                }
            }
            prev = Some((x.clone(), j));
        }
    }

    let slack = 1.05;
    NonlinearityAudit {
        f1_pass: worst_f1.value <= cfg.tol_zero,
        f2_pass: worst_f2 <= cfg.tol_zero,
        f3_pass: fitted_eta <= nl.eta * slack + 1e-12,
        f4_pass: fitted_b <= nl.lip_b * slack + 1e-12,
        fitted_eta,
        fitted_b,
        declared_eta: nl.eta,
        declared_b: nl.lip_b,
        worst_f1,
        worst_f3,
        sample_count: cfg.t_samples * cfg.x_samples,
        seed: cfg.seed,
    }
}

/// Rate constants for the Lyapunov-Perron machinery, placed inside the
/// central spectral gap: `b_k < lambda_s+ < gamma_s < 1 < gamma_u <
/// lambda_u- < a_{k+1}`, with `lambda_u+ > b_r`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LyapunovPerronParams {
    pub lambda_s_plus: f64,
    pub gamma_s: f64,
    pub gamma_u: f64,
    pub lambda_u_minus: f64,
    pub lambda_u_plus: f64,
    /// Truncation tail length for the Green's-function sums.
    pub n_tail: usize,
    pub max_iter: usize,
    pub tol_fp: f64,
    /// Sequence-space equivalence constant (configured; see default).
    pub k_const: f64,
}

impl LyapunovPerronParams {
    /// Places the rate constants geometrically inside the gap. The placement
    /// fraction starts at `theta` and is pushed toward the gap edges until
    /// `gamma_s gamma_u^{-1} (lambda_u+)^alpha < 1` holds.
    pub fn from_spectrum(spectrum: &SpectrumEstimate, alpha: f64, theta: f64, n_tail: usize, max_iter: usize, tol_fp: f64) -> Result<Self> {
        spectrum.require_hyperbolic()?;
        if !(0.0 < theta && theta < 1.0) {
            return Err(Error::InvalidInput(format!("theta must lie in (0,1), got {theta}")));
        }
        // Synthetic finite edges for one-sided spectra (placement only).
        let l_lo = spectrum
            .stable_edge()
            .map(f64::ln)
            .unwrap_or_else(|| -(spectrum.unstable_edge().unwrap().ln().max(1.0)));
        let l_hi = spectrum
            .unstable_edge()
            .map(f64::ln)
            .unwrap_or_else(|| (-l_lo).max(1.0));
        let b_r = spectrum.intervals.last().unwrap().1;
        let span = l_hi - l_lo;
        for attempt in 0..6 {
            // push placements toward the edges on retries
            let th = 1.0 - (1.0 - theta) * 0.5f64.powi(attempt);
            let inner = 0.5 + 0.5 * th;
            let lambda_s_plus = (inner * l_lo).exp();
            let gamma_s = (th * l_lo).exp();
            let gamma_u = (th * l_hi).exp();
            let lambda_u_minus = (inner * l_hi).exp();
            let lambda_u_plus = b_r * (0.01 * span / 2.0f64.powi(attempt)).exp();
            let holder_ok = gamma_s / gamma_u * lambda_u_plus.powf(alpha) < 1.0;
            let ordering_ok = spectrum.stable_edge().map_or(true, |b| b < lambda_s_plus)
                && lambda_s_plus < gamma_s
                && gamma_s < 1.0
                && 1.0 < gamma_u
                && gamma_u < lambda_u_minus
                && spectrum.unstable_edge().map_or(true, |a| lambda_u_minus < a)
                && lambda_u_plus > b_r;
            if holder_ok && ordering_ok {
                let k_const = 4.0
                    * [
                        1.0,
                        1.0 / (1.0 - lambda_s_plus / gamma_s),
                        1.0 / (1.0 - gamma_u / lambda_u_minus),
                    ]
                    .into_iter()
                    .fold(1.0f64, f64::max);
                return Ok(Self {
                    lambda_s_plus,
                    gamma_s,
                    gamma_u,
                    lambda_u_minus,
                    lambda_u_plus,
                    n_tail,
                    max_iter,
                    tol_fp,
                    k_const,
                });
            }
        }
        Err(Error::InvalidInput(format!(
            "no rate placement satisfies the Holder condition for alpha = {alpha}"
        )))
    }
}

/// Derived smallness thresholds, the chosen neighborhood scale and radii.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SmallnessBudget {
    pub eta_tilde: f64,
    pub b_tilde: f64,
    pub m_tilde: f64,
    /// `C K eta_tilde`, required `< 1/4`.
    pub contraction_threshold: f64,
    /// `K (C b_tilde)^2 delta`, required `< 1/4`.
    pub delta_threshold: f64,
    /// `gamma_s gamma_u^{-1} (lambda_u+ + C eta_tilde)^alpha`, required `< 1`.
    pub holder_threshold: f64,
    pub satisfied: bool,
    pub delta: f64,
    /// `rho = delta / 4`.
    pub rho: f64,
    /// `rho_tilde = (a C)^{-1} e^{-2 eps} rho`.
    pub rho_tilde: f64,
    /// `U_n` radius is `un_radius_factor * e^{-eps |n|}`.
    pub un_radius_factor: f64,
    /// `V_t` radius is `vt_radius_factor * e^{-2 eps |t|}`.
    pub vt_radius_factor: f64,
}

pub const DELTA_CAP: f64 = 0.5;

/// Evaluates the three smallness thresholds, choosing `delta` maximal under
/// the quadratic threshold (capped at [`DELTA_CAP`]).
pub fn smallness_budget(
    bounds: &FlowBounds,
    c_norm: f64,
    eps: f64,
    alpha: f64,
    lp: &LyapunovPerronParams,
) -> SmallnessBudget {
    let k = lp.k_const;
    let contraction_threshold = c_norm * k * bounds.eta_tilde;
    let quad = k * (c_norm * bounds.b_tilde).powi(2);
    let delta = if quad > 0.0 {
        (0.999 * 0.25 / quad).min(DELTA_CAP)
    } else {
        DELTA_CAP
    };
    let delta_threshold = quad * delta;
    let holder_threshold = lp.gamma_s / lp.gamma_u * (lp.lambda_u_plus + c_norm * bounds.eta_tilde).powf(alpha);
    let rho = delta / 4.0;
    let rho_tilde = rho / (bounds.a * c_norm) * (-2.0 * eps).exp();
    SmallnessBudget {
        eta_tilde: bounds.eta_tilde,
        b_tilde: bounds.b_tilde,
        m_tilde: bounds.m_tilde,
        contraction_threshold,
        delta_threshold,
        holder_threshold,
        satisfied: contraction_threshold < 0.25 && delta_threshold < 0.25 && holder_threshold < 1.0,
        delta,
        rho,
        rho_tilde,
        un_radius_factor: rho / c_norm,
        vt_radius_factor: rho_tilde,
    }
}

/// Largest `eta_tilde` compatible with the Holder and contraction thresholds
/// at exponent `alpha`, with the rate constants pushed to their supremal
/// placement (`gamma_u/gamma_s -> a_{k+1}/b_k`, `lambda_u+ -> b_r`).
pub fn max_admissible_eta_tilde(spectrum: &SpectrumEstimate, alpha: f64, c_norm: f64, k_const: f64) -> Result<f64> {
    spectrum.require_hyperbolic()?;
    let cap = 0.25 / (c_norm * k_const);
    let from_holder = match (spectrum.stable_edge(), spectrum.unstable_edge()) {
        (Some(b_k), Some(a_k1)) => {
            let ratio = a_k1 / b_k;
            let b_r = spectrum.intervals.last().unwrap().1;
            ((ratio.powf(1.0 / alpha) - b_r) / c_norm).max(0.0)
        }
        _ => f64::INFINITY,
    };
    Ok(from_holder.min(cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::FlowBounds;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spectrum_from_log(intervals: &[(f64, f64)]) -> SpectrumEstimate {
        let stable_count = intervals.iter().filter(|(_, hi)| *hi < 0.0).count();
        SpectrumEstimate {
            intervals: intervals.iter().map(|(l, h)| (l.exp(), h.exp())).collect(),
            log_intervals: intervals.to_vec(),
            stable_count,
            total: intervals.len(),
            hyperbolic: !intervals.iter().any(|(l, h)| *l <= 0.0 && 0.0 <= *h),
            grid_step: 1e-3,
        }
    }

    #[test]
    fn spectral_bound_degenerate_intervals_always_pass() {
        // point spectrum: ratios are 1, bounds are b_k^{-1} > 1 and a_{k+1} > 1
        let sp = spectrum_from_log(&[(-1.0, -1.0), (1.0, 1.0)]);
        let rep = check_spectral_bound(&sp).unwrap();
        assert!(rep.pass);
        assert!(rep.entries.iter().all(|e| e.log_margin > 0.0));
    }

    #[test]
    fn spectral_bound_thick_stable_interval_fails() {
        // [0.1, 0.9], [2, 3]: b1/a1 = 9 >= 1/0.9
        let sp = spectrum_from_log(&[(0.1f64.ln(), 0.9f64.ln()), (2.0f64.ln(), 3.0f64.ln())]);
        let rep = check_spectral_bound(&sp).unwrap();
        assert!(!rep.pass);
        assert!(!rep.entries[0].pass, "stable interval must be the violator");
    }

    #[test]
    fn spectral_bound_moderate_intervals_pass() {
        // [0.40, 0.45], [2.0, 2.2]: 1.125 < 2.22 and 1.1 < 2.0
        let sp = spectrum_from_log(&[(0.40f64.ln(), 0.45f64.ln()), (2.0f64.ln(), 2.2f64.ln())]);
        let rep = check_spectral_bound(&sp).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn alpha_saddle_exact_two() {
        let sp = spectrum_from_log(&[(-1.0, -1.0), (1.0, 1.0)]);
        let ab = alpha_upper_bound(&sp, 0.1, None).unwrap();
        assert_relative_eq!(ab.alpha_max, 2.0, epsilon = 1e-12);
        assert_relative_eq!(ab.chosen, 0.95, epsilon = 1e-12);
    }

    #[test]
    fn alpha_example_intervals() {
        // oracle: both branches of the bound evaluated by hand
        let sp = spectrum_from_log(&[(0.40f64.ln(), 0.45f64.ln()), (2.0f64.ln(), 2.2f64.ln())]);
        let gap = 2.0f64.ln() - 0.45f64.ln();
        let branch_unstable = gap / 2.2f64.ln();
        let branch_stable = gap / (1.0f64 / 0.40).ln();
        let expect = branch_unstable.min(branch_stable);
        let ab = alpha_upper_bound(&sp, 0.1, None).unwrap();
        assert_relative_eq!(ab.alpha_max, expect, epsilon = 1e-12);
        assert!((ab.alpha_max - 1.628).abs() < 1e-3);
        assert_eq!(ab.branch, AlphaBranch::StableRadius);
    }

    #[test]
    fn alpha_tends_to_zero_as_gap_closes() {
        // widen the stable interval toward the unstable one: the central gap
        // shrinks to zero and alpha_max goes to 0+ monotonically.
        let mut prev = f64::INFINITY;
        for b in [0.5f64, 0.9, 0.99, 0.999] {
            let sp = spectrum_from_log(&[(0.40f64.ln(), b.ln()), (-(b.ln()), 2.2f64.ln().max(-(b.ln()) + 0.1))]);
            let ab = alpha_upper_bound(&sp, 0.1, None).unwrap();
            assert!(ab.alpha_max < prev);
            prev = ab.alpha_max;
        }
        assert!(prev < 0.01, "alpha_max -> 0 as the gap closes, got {prev}");
    }

    #[test]
    fn alpha_one_sided_contraction_unbounded() {
        let sp = spectrum_from_log(&[(-0.7, -0.69)]);
        let ab = alpha_upper_bound(&sp, 0.1, None).unwrap();
        assert!(ab.alpha_max.is_infinite());
        assert_eq!(ab.branch, AlphaBranch::Unbounded);
        assert_relative_eq!(ab.chosen, 0.95, epsilon = 1e-12);
    }

    #[test]
    fn alpha_override_above_max_rejected() {
        let sp = spectrum_from_log(&[(-1.0, -1.0), (1.0, 1.0)]);
        assert!(alpha_upper_bound(&sp, 0.1, Some(2.5)).is_err());
        assert!(alpha_upper_bound(&sp, 0.1, Some(0.5)).is_ok());
    }

    #[test]
    fn autonomous_alpha_exact_values() {
        let eig = |r: f64| Complex::new(r, 0.0);
        let ab = autonomous_alpha_bound(&[eig(-1.0), eig(1.0)], 0.1).unwrap();
        assert_eq!(ab.alpha_max, 2.0, "exact arithmetic expected");
        let ab3 = autonomous_alpha_bound(&[eig(-3.0), eig(-1.0), eig(2.0)], 0.1).unwrap();
        assert_eq!(ab3.alpha_max, 1.0);
        assert!(autonomous_alpha_bound(&[eig(-1.0), eig(0.0)], 0.1).is_err());
        assert!(matches!(
            autonomous_alpha_bound(&[eig(-2.0), eig(-1.0)], 0.1),
            Err(Error::OneSidedSpectrum { .. })
        ));
    }

    #[test]
    fn audit_zero_nonlinearity_passes() {
        let nl = NonlinearTerm::new(1, true, 0.0, 0.0, 0.0, |_, _: &DVector<f64>| DVector::zeros(1));
        let audit = audit_nonlinearity(&nl, (-10.0, 10.0), &AuditConfig::default());
        assert!(audit.all_pass());
        assert_eq!(audit.fitted_eta, 0.0);
        assert_eq!(audit.fitted_b, 0.0);
    }

    #[test]
    fn audit_detects_f1_violation() {
        let nl = NonlinearTerm::new(1, true, 0.0, 1.0, 2.0, |_, x: &DVector<f64>| {
            DVector::from_element(1, 1e-3 + x[0] * x[0])
        });
        let audit = audit_nonlinearity(&nl, (-5.0, 5.0), &AuditConfig::default());
        assert!(!audit.f1_pass);
        assert!((audit.worst_f1.value - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn audit_fits_decaying_quadratic_envelope() {
        // f(t,x) = eta0 e^{-3 eps |t|} q(x), q = cutoff quadratic: fitted eta
        // within 10% of the analytic sup of |q'| (fine-grid closed form).
        use crate::evolution::{cutoff, cutoff_prime};
        let eta0 = 0.3;
        let eps = 0.2;
        let r0 = 1.0;
        let profile = move |x: f64| x * x * cutoff(x.abs() / r0);
        let dprofile = move |x: f64| 2.0 * x * cutoff(x.abs() / r0) + x * x * cutoff_prime(x.abs() / r0) * x.signum() / r0;
        let nl = NonlinearTerm::new(1, false, eps, 0.0, 0.0, move |t, x: &DVector<f64>| {
            DVector::from_element(1, eta0 * (-3.0 * eps * t.abs()).exp() * profile(x[0]))
        })
        .with_jacobian(move |t, x: &DVector<f64>| {
            nalgebra::DMatrix::from_element(1, 1, eta0 * (-3.0 * eps * t.abs()).exp() * dprofile(x[0]))
        });
        let cfg = AuditConfig {
            radius: 2.5,
            x_samples: 600,
            ..Default::default()
        };
        let audit = audit_nonlinearity(&nl, (-10.0, 10.0), &cfg);
        // oracle: sup over a fine grid of the closed-form derivative
        let analytic = (0..20_000)
            .map(|i| -2.5 + 5.0 * i as f64 / 20_000.0)
            .map(|x| (eta0 * dprofile(x)).abs())
            .fold(0.0f64, f64::max);
        assert!(
            (audit.fitted_eta - analytic).abs() / analytic < 0.10,
            "fitted {} vs analytic {analytic}",
            audit.fitted_eta
        );
    }

    #[test]
    fn budget_example_constants() {
        // M = 1, lambda_bar = 1, eps = 0, eta = 0.01: the derived constants
        // follow the closed-form chain (hand oracle below).
        let bounds = FlowBounds::from_constants(1.0, 1.0, 0.0, 0.01, 0.0, 1.0, 1.0);
        let m_tilde_expect = (1.0f64 + std::f64::consts::E).exp();
        let eta_tilde_expect = m_tilde_expect * 0.01 * 2.0f64.exp();
        assert_relative_eq!(bounds.m_tilde, m_tilde_expect, max_relative = 1e-12);
        assert_relative_eq!(bounds.eta_tilde, eta_tilde_expect, max_relative = 1e-12);
        assert!((bounds.eta_tilde - 3.044).abs() < 0.01);
    }

    fn saddle_lp() -> LyapunovPerronParams {
        let sp = spectrum_from_log(&[(-1.0, -1.0), (1.0, 1.0)]);
        LyapunovPerronParams::from_spectrum(&sp, 0.9, 0.7, 40, 200, 1e-10).unwrap()
    }

    #[test]
    fn lp_params_ordering() {
        let lp = saddle_lp();
        assert!((-1.0f64).exp() < lp.lambda_s_plus);
        assert!(lp.lambda_s_plus < lp.gamma_s && lp.gamma_s < 1.0);
        assert!(1.0 < lp.gamma_u && lp.gamma_u < lp.lambda_u_minus);
        assert!(lp.lambda_u_minus < 1.0f64.exp());
        assert!(lp.lambda_u_plus > 1.0f64.exp());
        assert!(lp.gamma_s / lp.gamma_u * lp.lambda_u_plus.powf(0.9) < 1.0);
        assert!(lp.k_const >= 4.0);
    }

    #[test]
    fn budget_zero_eta_satisfied() {
        let bounds = FlowBounds::from_constants(1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0);
        let lp = saddle_lp();
        let b = smallness_budget(&bounds, 1.0, 0.0, 0.9, &lp);
        assert!(b.satisfied);
        assert_eq!(b.delta, DELTA_CAP);
        assert_relative_eq!(b.rho, DELTA_CAP / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn eta_tilde_cap_decreases_with_alpha() {
        let sp = spectrum_from_log(&[(-1.0, -1.0), (1.0, 1.0)]);
        let alpha_max = alpha_upper_bound(&sp, 0.1, None).unwrap().alpha_max;
        let mut prev = f64::INFINITY;
        let mut last = f64::INFINITY;
        let mut first = 0.0;
        for i in 0..10 {
            // the Holder branch only bites very close to alpha_max
            let alpha = alpha_max * (0.5 + 0.4999 * i as f64 / 9.0);
            let v = max_admissible_eta_tilde(&sp, alpha, 1.0, 4.0).unwrap();
            assert!(v <= prev + 1e-12, "not monotone at alpha = {alpha}");
            prev = v;
            if i == 0 {
                first = v;
            }
            last = v;
        }
        assert!(last < 0.1 * first, "cap must collapse near alpha_max");
    }

    proptest! {
        #[test]
        fn prop_alpha_monotone_in_gap(b_k in -2.0f64..-0.1, a_k1 in 0.1f64..2.0, widen in 0.01f64..0.5) {
            let sp1 = spectrum_from_log(&[(b_k - 0.05, b_k), (a_k1, a_k1 + 0.05)]);
            let sp2 = spectrum_from_log(&[(b_k - widen - 0.05, b_k - widen), (a_k1 + widen, a_k1 + widen + 0.05)]);
            let a1 = alpha_upper_bound(&sp1, 0.1, None).unwrap().alpha_max;
            let a2 = alpha_upper_bound(&sp2, 0.1, None).unwrap().alpha_max;
            prop_assert!(a2 >= a1 - 1e-12, "enlarging the gap must not decrease alpha_max");
        }

        #[test]
        fn prop_budget_monotone_in_eta(eta in 0.0f64..0.1, shrink in 0.0f64..1.0) {
            let lp = saddle_lp();
            let mk = |e: f64| FlowBounds::from_constants(1.0, 1.0, 0.0, e, 0.1, 1.5, 1.0);
            let big = smallness_budget(&mk(eta), 1.2, 0.0, 0.9, &lp);
            let small = smallness_budget(&mk(eta * shrink), 1.2, 0.0, 0.9, &lp);
            if big.satisfied {
                prop_assert!(small.satisfied, "decreasing eta must preserve a satisfied budget");
            }
        }

        #[test]
        fn prop_spectral_bound_log_shift(shift in -0.5f64..0.5) {
            // shifting all log-intervals preserves the stable-side outcome as
            // long as the shifted spectrum stays hyperbolic with b_k < 1
            let base = [(-1.2f64, -1.0), (0.8f64, 0.9)];
            let shifted: Vec<(f64, f64)> = base.iter().map(|(l, h)| (l + shift, h + shift)).collect();
            let sp1 = spectrum_from_log(&base);
            let sp2 = spectrum_from_log(&shifted);
            if sp2.hyperbolic && sp2.stable_count == 1 {
                let r1 = check_spectral_bound(&sp1).unwrap();
                let r2 = check_spectral_bound(&sp2).unwrap();
                // widths are shift-invariant; only the bounds move
                prop_assert_eq!(r1.entries.len(), r2.entries.len());
            }
        }
    }
}
