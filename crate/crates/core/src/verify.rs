//! Quantitative verification of the conjugacy properties: expansion order at
//! the origin, Holder continuity, inverse identities, solution mapping, and
//! the autonomous equivariance identity.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conjugacy::ContinuousConjugacy;
use crate::error::{Error, Result};
use crate::evolution::random_ball;
use crate::fit::ols_line;

/// Log-log regression of a map's modulus of continuity.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HolderFit {
    /// Fitted exponent.
    pub slope: f64,
    /// Log of the fitted constant.
    pub intercept: f64,
    pub r_squared: f64,
    pub sample_count: usize,
    /// Smallest and largest pair distances used.
    pub radius_range: (f64, f64),
    /// Exponent the fit is checked against.
    pub alpha: f64,
    pub pass: bool,
}

/// Regression of `log |F(x) - F(y)|` on `log |x - y|` over seeded pairs in
/// the ball of the given radius. Requires >= 200 pairs spanning >= 3 decades;
/// passes when the slope reaches `min(alpha, 0.95) - 0.05`.
pub fn fit_holder<F>(map: F, dim: usize, radius: f64, pairs: usize, alpha: f64, seed: u64) -> Result<HolderFit>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if pairs < 200 {
        return Err(Error::DegenerateFit(format!("{pairs} pairs < 200 required")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_d = Vec::with_capacity(pairs);
    let mut log_v = Vec::with_capacity(pairs);
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    let decades = 4.0;
    let mut attempts = 0usize;
    while log_d.len() < pairs && attempts < pairs * 20 {
        attempts += 1;
        let x = random_ball(&mut rng, dim, radius / 2.0);
        let u = rng.random::<f64>();
        let dist = radius * 0.45 * 10f64.powf(-decades * u);
        let dir = random_ball(&mut rng, dim, 1.0).normalize();
        let y = &x + dir * dist;
        if y.norm() > radius {
            continue;
        }
        let fx = match map(&x) {
            Ok(v) => v,
            Err(Error::Escape { .. }) => continue,
            Err(e) => return Err(e),
        };
        let fy = match map(&y) {
            Ok(v) => v,
            Err(Error::Escape { .. }) => continue,
            Err(e) => return Err(e),
        };
        let val = (fx - fy).norm();
        if val <= 0.0 {
            continue;
        }
        log_d.push(dist.ln());
        log_v.push(val.ln());
        dmin = dmin.min(dist);
        dmax = dmax.max(dist);
    }
    if log_d.len() < 200 {
        return Err(Error::DegenerateFit(format!(
            "only {} usable pairs out of {attempts} attempts",
            log_d.len()
        )));
    }
    if (dmax / dmin).log10() < 3.0 {
        return Err(Error::DegenerateFit(format!(
            "distance spread {:.2} decades < 3",
            (dmax / dmin).log10()
        )));
    }
    let (slope, intercept, r2) = ols_line(&log_d, &log_v)?;
    let threshold = alpha.min(0.95) - 0.05;
    Ok(HolderFit {
        slope,
        intercept,
        r_squared: r2,
        sample_count: log_d.len(),
        radius_range: (dmin, dmax),
        alpha,
        pass: slope >= threshold,
    })
}

/// Dyadic expansion-order proxy for `map(x) = x + o(|x|^{1+rho})`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExpansionReport {
    /// `(j, max_{|x| = 2^-j} |map(x) - x| / |x|^{1+rho})`.
    pub ratios: Vec<(i32, f64)>,
    pub rho: f64,
    /// All deviations at noise level; the check passes trivially.
    pub trivially_small: bool,
    pub pass: bool,
}

/// Max deviation ratios over dyadic shells `|x| = 2^-j`, `j = j_lo..=j_hi`;
/// passes when the last six levels are non-increasing within 5% noise, or
/// when every deviation is below `noise_floor` (identity-like maps).
pub fn check_expansion<F>(
    map: F,
    dim: usize,
    rho: f64,
    j_lo: i32,
    j_hi: i32,
    shell_samples: usize,
    noise_floor: f64,
    seed: u64,
) -> Result<ExpansionReport>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if 2.0f64.powi(-j_hi) < 1e-12 {
        return Err(Error::InvalidInput(format!(
            "dyadic radius 2^-{j_hi} below the floating-point floor"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::new();
    let mut max_dev = 0.0f64;
    for j in j_lo..=j_hi {
        let r = 2.0f64.powi(-j);
        let mut worst = 0.0f64;
        for _ in 0..shell_samples {
            let x = random_ball(&mut rng, dim, 1.0).normalize() * r;
            let fx = match map(&x) {
                Ok(v) => v,
                Err(Error::Escape { .. }) => continue,
                Err(e) => return Err(e),
            };
            let dev = (fx - &x).norm();
            max_dev = max_dev.max(dev);
            worst = worst.max(dev / r.powf(1.0 + rho));
        }
        ratios.push((j, worst));
    }
    let trivially_small = max_dev <= noise_floor;
    let tail = ratios.len().saturating_sub(6);
    let mut pass = true;
    for w in ratios[tail..].windows(2) {
        if w[1].1 > 1.05 * w[0].1 {
            pass = false;
        }
    }
    Ok(ExpansionReport {
        ratios,
        rho,
        trivially_small,
        pass: pass || trivially_small,
    })
}

/// Residuals of the solution-mapping property along trajectories.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SolutionMapReport {
    pub max_residual: f64,
    pub samples: usize,
    pub skipped: usize,
    pub tol: f64,
    pub pass: bool,
    /// `(t, |x0|)` attaining the max residual.
    pub witness: Option<(f64, f64)>,
}

/// (A4): for solutions `x(t)` of the nonlinear equation, `t -> H(t, x(t))`
/// solves the linear one: checks
/// `sup_t |H(t, x(t)) - T(t, t0) H(t0, x0)| <= tol`.
pub fn check_solution_mapping_h(
    cc: &ContinuousConjugacy,
    initial: &[DVector<f64>],
    t0: f64,
    t1: f64,
    steps: usize,
    tol: f64,
) -> Result<SolutionMapReport> {
    let mut max_residual = 0.0f64;
    let mut witness = None;
    let mut skipped = 0usize;
    for x0 in initial {
        let h0 = match cc.apply_h(t0, x0) {
            Ok(v) => v,
            Err(Error::Escape { .. }) | Err(Error::OutsideDomain { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for k in 0..=steps {
            let t = t0 + (t1 - t0) * k as f64 / steps as f64;
            let xt = match cc.family.flow(t0, t, x0) {
                Ok(v) => v,
                Err(Error::Escape { .. }) => {
                    skipped += 1;
                    break;
                }
                Err(e) => return Err(e),
            };
            let lhs = match cc.apply_h(t, &xt) {
                Ok(v) => v,
                Err(Error::OutsideDomain { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let rhs = cc.family.transition(t0, t)? * &h0;
            let res = (lhs - rhs).norm();
            if res > max_residual {
                max_residual = res;
                witness = Some((t, x0.norm()));
            }
        }
    }
    Ok(SolutionMapReport {
        max_residual,
        samples: initial.len(),
        skipped,
        tol,
        pass: max_residual <= tol,
        witness,
    })
}

/// (A5): for solutions of the linear equation, `t -> G(t, x(t))` solves the
/// nonlinear one: checks `sup_t |G(t, T(t,t0)x0) - phi(t, t0; G(t0, x0))|`.
pub fn check_solution_mapping_g(
    cc: &ContinuousConjugacy,
    initial: &[DVector<f64>],
    t0: f64,
    t1: f64,
    steps: usize,
    tol: f64,
) -> Result<SolutionMapReport> {
    let mut max_residual = 0.0f64;
    let mut witness = None;
    let mut skipped = 0usize;
    for x0 in initial {
        let g0 = match cc.apply_g(t0, x0) {
            Ok(v) => v,
            Err(Error::Escape { .. }) | Err(Error::OutsideDomain { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for k in 0..=steps {
            let t = t0 + (t1 - t0) * k as f64 / steps as f64;
            let lin_t = cc.family.transition(t0, t)? * x0;
            let lhs = match cc.apply_g(t, &lin_t) {
                Ok(v) => v,
                Err(Error::OutsideDomain { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let rhs = match cc.family.flow(t0, t, &g0) {
                Ok(v) => v,
                Err(Error::Escape { .. }) => {
                    skipped += 1;
                    break;
                }
                Err(e) => return Err(e),
            };
            let res = (lhs - rhs).norm();
            if res > max_residual {
                max_residual = res;
                witness = Some((t, x0.norm()));
            }
        }
    }
    Ok(SolutionMapReport {
        max_residual,
        samples: initial.len(),
        skipped,
        tol,
        pass: max_residual <= tol,
        witness,
    })
}

/// Composition residuals of (A3) in both orders.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InverseReport {
    pub max_h_of_g: f64,
    pub max_g_of_h: f64,
    pub samples: usize,
    pub skipped: usize,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_inverse(
    cc: &ContinuousConjugacy,
    ts: &[f64],
    samples_per_t: usize,
    radius: f64,
    tol: f64,
    seed: u64,
) -> Result<InverseReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cc.family.dim();
    let mut max_hg = 0.0f64;
    let mut max_gh = 0.0f64;
    let mut skipped = 0usize;
    for &t in ts {
        for _ in 0..samples_per_t {
            let x = random_ball(&mut rng, d, radius);
            match cc.apply_g(t, &x).and_then(|g| cc.apply_h(t, &g)) {
                Ok(hg) => max_hg = max_hg.max((hg - &x).norm()),
                Err(Error::OutsideDomain { .. }) | Err(Error::Escape { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
            match cc.apply_h(t, &x).and_then(|h| cc.apply_g(t, &h)) {
                Ok(gh) => max_gh = max_gh.max((gh - &x).norm()),
                Err(Error::OutsideDomain { .. }) | Err(Error::Escape { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(InverseReport {
        max_h_of_g: max_hg,
        max_g_of_h: max_gh,
        samples: ts.len() * samples_per_t * 2,
        skipped,
        tol,
        pass: max_hg <= tol && max_gh <= tol,
    })
}

/// Equivariance residuals of the averaged autonomous conjugacy:
/// `|e^{At} H~(x) - H~(phi(t,0;x))|` at the given times.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EquivarianceReport {
    pub residuals: Vec<(f64, f64)>,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_equivariance(
    cc: &ContinuousConjugacy,
    x: &DVector<f64>,
    ts: &[f64],
    nodes: usize,
    tol: f64,
) -> Result<EquivarianceReport> {
    let hx = cc.averaged_autonomous_h(x, nodes)?;
    let mut residuals = Vec::with_capacity(ts.len());
    let mut max_residual = 0.0f64;
    for &t in ts {
        let lhs = cc.family.transition(0.0, t)? * &hx;
        let flowed = cc.family.flow(0.0, t, x)?;
        let rhs = cc.averaged_autonomous_h(&flowed, nodes)?;
        let r = (lhs - rhs).norm();
        residuals.push((t, r));
        max_residual = max_residual.max(r);
    }
    Ok(EquivarianceReport {
        residuals,
        max_residual,
        tol,
        pass: max_residual <= tol,
    })
}

/// Configuration for the full verification pass.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Horizon for the solution-mapping checks.
    pub horizon: (f64, f64),
    pub horizon_steps: usize,
    /// Sampling radius inside `V_t` (initial conditions, inverse checks).
    pub sample_radius: f64,
    pub holder_pairs: usize,
    /// Times at which the regularity of `H(t, .)` and `G(t, .)` is probed.
    pub regularity_times: Vec<f64>,
    pub dyadic_lo: i32,
    pub dyadic_hi: i32,
    pub shell_samples: usize,
    pub inverse_samples: usize,
    pub tol_ver: f64,
    /// Noise floor for identity-like maps (10x integrator tolerance).
    pub noise_floor: f64,
    pub equivariance_times: Vec<f64>,
    pub quadrature_nodes: usize,
    pub initial_conditions: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            horizon: (0.0, 5.0),
            horizon_steps: 20,
            sample_radius: 0.01,
            holder_pairs: 240,
            regularity_times: vec![0.0, 0.5],
            dyadic_lo: 4,
            dyadic_hi: 14,
            shell_samples: 12,
            inverse_samples: 120,
            tol_ver: 1e-4,
            noise_floor: 1e-9,
            equivariance_times: vec![0.25, 0.5, 1.0],
            quadrature_nodes: 64,
            initial_conditions: 12,
        }
    }
}

/// The full (A1)-(A5) (+ (B3) when autonomous) verification report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VerificationReport {
    pub a1_h: ExpansionReport,
    pub a1_g: ExpansionReport,
    pub a2_h: HolderFit,
    pub a2_g: HolderFit,
    pub a3: InverseReport,
    pub a4: SolutionMapReport,
    pub a5: SolutionMapReport,
    pub b3: Option<EquivarianceReport>,
    pub seed: u64,
    pub sample_radius: f64,
    pub alpha: f64,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.a1_h.pass
            && self.a1_g.pass
            && self.a2_h.pass
            && self.a2_g.pass
            && self.a3.pass
            && self.a4.pass
            && self.a5.pass
            && self.b3.as_ref().map_or(true, |b| b.pass)
    }

    /// Human-readable summary, one line per property.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let line = |name: &str, pass: bool, detail: String| format!("{}  {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
        out.push_str(&line(
            "A1 expansion order (H)",
            self.a1_h.pass,
            format!("{} dyadic levels, trivially_small = {}", self.a1_h.ratios.len(), self.a1_h.trivially_small),
        ));
        out.push_str(&line(
            "A1 expansion order (G)",
            self.a1_g.pass,
            format!("{} dyadic levels, trivially_small = {}", self.a1_g.ratios.len(), self.a1_g.trivially_small),
        ));
        out.push_str(&line(
            "A2 Holder continuity (H)",
            self.a2_h.pass,
            format!("slope {:.4} (alpha {:.3}), R^2 {:.4}", self.a2_h.slope, self.a2_h.alpha, self.a2_h.r_squared),
        ));
        out.push_str(&line(
            "A2 Holder continuity (G)",
            self.a2_g.pass,
            format!("slope {:.4} (alpha {:.3}), R^2 {:.4}", self.a2_g.slope, self.a2_g.alpha, self.a2_g.r_squared),
        ));
        out.push_str(&line(
            "A3 inverse identities",
            self.a3.pass,
            format!("max |H(G)-id| {:.3e}, max |G(H)-id| {:.3e}", self.a3.max_h_of_g, self.a3.max_g_of_h),
        ));
        out.push_str(&line(
            "A4 solution mapping (H)",
            self.a4.pass,
            format!("max residual {:.3e} over {} initial conditions", self.a4.max_residual, self.a4.samples),
        ));
        out.push_str(&line(
            "A5 solution mapping (G)",
            self.a5.pass,
            format!("max residual {:.3e} over {} initial conditions", self.a5.max_residual, self.a5.samples),
        ));
        if let Some(b3) = &self.b3 {
            out.push_str(&line(
                "B3 averaged equivariance",
                b3.pass,
                format!("max residual {:.3e} at {} times", b3.max_residual, b3.residuals.len()),
            ));
        }
        out
    }
}

/// Runs every check against an assembled conjugacy.
pub fn verify_all(cc: &ContinuousConjugacy, alpha: f64, rho: f64, cfg: &VerifyConfig) -> Result<VerificationReport> {
    let d = cc.family.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // (A1)/(A2) at the worst time over the probe set.
    let mut a1_h: Option<ExpansionReport> = None;
    let mut a1_g: Option<ExpansionReport> = None;
    let mut a2_h: Option<HolderFit> = None;
    let mut a2_g: Option<HolderFit> = None;
    for (k, &t) in cfg.regularity_times.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(1000 + k as u64);
        let h_map = |x: &DVector<f64>| cc.apply_h(t, x);
        let g_map = |x: &DVector<f64>| cc.apply_g(t, x);
        let eh = check_expansion(h_map, d, rho, cfg.dyadic_lo, cfg.dyadic_hi, cfg.shell_samples, cfg.noise_floor, seed)?;
        let eg = check_expansion(g_map, d, rho, cfg.dyadic_lo, cfg.dyadic_hi, cfg.shell_samples, cfg.noise_floor, seed)?;
        let fh = fit_holder(h_map, d, cfg.sample_radius, cfg.holder_pairs, alpha, seed)?;
        let fg = fit_holder(g_map, d, cfg.sample_radius, cfg.holder_pairs, alpha, seed)?;
        let keep = |cur: &mut Option<ExpansionReport>, new: ExpansionReport| {
            if cur.as_ref().map_or(true, |c| c.pass && !new.pass) {
                *cur = Some(new);
            }
        };
        keep(&mut a1_h, eh);
        keep(&mut a1_g, eg);
        let keep_fit = |cur: &mut Option<HolderFit>, new: HolderFit| {
            if cur.as_ref().map_or(true, |c| new.slope < c.slope) {
                *cur = Some(new);
            }
        };
        keep_fit(&mut a2_h, fh);
        keep_fit(&mut a2_g, fg);
    }

    let initial: Vec<DVector<f64>> = (0..cfg.initial_conditions)
        .map(|_| random_ball(&mut rng, d, cfg.sample_radius))
        .collect();
    let a4 = check_solution_mapping_h(cc, &initial, cfg.horizon.0, cfg.horizon.1, cfg.horizon_steps, cfg.tol_ver)?;
    let a5 = check_solution_mapping_g(cc, &initial, cfg.horizon.0, cfg.horizon.1, cfg.horizon_steps, cfg.tol_ver)?;
    let ts: Vec<f64> = (0..=4).map(|k| cfg.horizon.0 + (cfg.horizon.1 - cfg.horizon.0) * k as f64 / 4.0).collect();
    let a3 = check_inverse(cc, &ts, cfg.inverse_samples / 4, cfg.sample_radius, 10.0 * cfg.tol_ver.min(1e-4), cfg.seed)?;

    let b3 = if cc.family.is_autonomous() {
        let x = random_ball(&mut rng, d, cfg.sample_radius).normalize() * cfg.sample_radius;
        Some(check_equivariance(cc, &x, &cfg.equivariance_times, cfg.quadrature_nodes, cfg.tol_ver)?)
    } else {
        None
    };

    Ok(VerificationReport {
        a1_h: a1_h.unwrap(),
        a1_g: a1_g.unwrap(),
        a2_h: a2_h.unwrap(),
        a2_g: a2_g.unwrap(),
        a3,
        a4,
        a5,
        b3,
        seed: cfg.seed,
        sample_radius: cfg.sample_radius,
        alpha,
    })
}
