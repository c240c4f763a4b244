//! Stable-foliation fixed point on the finite sequence-space model.
//!
//! The infinite-dimensional space of bounded sequences is realized through a
//! finite window with zero padding. Zero tails are invariant under the lifted
//! map because `f_n(0) = 0`, so compactly supported window states are handled
//! exactly as long as their forward spread stays inside the window; the
//! off-window truncation of the unstable sums carries a reported geometric
//! tail bound.
//!
//! The fixed-point equation solved by Picard iteration is, for `n >= 0`,
//!
//! ```text
//! q_n(x, xi_s) = As^n (xi_s - pi_s x)
//!   + sum_{i=0}^{n-1} As^{n-i-1} { pi_s ft(q_i + F^i x) - pi_s ft(F^i x) }
//!   - sum_{i=n}^{N}   Au^{n-i-1} { pi_u ft(q_i + F^i x) - pi_u ft(F^i x) }
//! ```
//!
//! with `ft = F - A` the lifted nonlinearity. The iteration contracts in the
//! `gamma_s`-weighted sup metric with a factor bounded by `C K eta_tilde`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::conditions::LyapunovPerronParams;
use crate::error::{Error, Result};
use crate::evolution::{Discretization, IndexWindow};
use crate::spectrum::DichotomyData;

/// Window state: vectors indexed by `window.lo ..= window.hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSeq {
    pub lo: i64,
    pub vals: Vec<DVector<f64>>,
}

impl WindowSeq {
    pub fn zeros(window: IndexWindow, dim: usize) -> Self {
        Self {
            lo: window.lo,
            vals: vec![DVector::zeros(dim); window.steps() + 1],
        }
    }

    /// State supported at a single index.
    pub fn one_hot(window: IndexWindow, index: i64, v: DVector<f64>) -> Self {
        let mut s = Self::zeros(window, v.len());
        s.set(index, v);
        s
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.vals.len() as i64 - 1
    }

    pub fn get(&self, m: i64) -> &DVector<f64> {
        &self.vals[(m - self.lo) as usize]
    }

    pub fn set(&mut self, m: i64, v: DVector<f64>) {
        self.vals[(m - self.lo) as usize] = v;
    }

    fn is_zero_at(&self, m: i64) -> bool {
        self.get(m).iter().all(|&v| v == 0.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            lo: self.lo,
            vals: self
                .vals
                .iter()
                .zip(&other.vals)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            lo: self.lo,
            vals: self
                .vals
                .iter()
                .zip(&other.vals)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Finite-window realization of the sequence space carrying the lifted map,
/// the spectral projections and the adapted sup norm.
pub struct SequenceSpaceModel {
    pub disc: Arc<Discretization>,
    pub dich: Arc<DichotomyData>,
    pub window: IndexWindow,
}

pub const MIN_WINDOW: usize = 40;

impl SequenceSpaceModel {
    pub fn new(disc: Arc<Discretization>, dich: Arc<DichotomyData>) -> Result<Self> {
        let window = dich.window;
        if window.steps() < MIN_WINDOW {
            return Err(Error::InvalidInput(format!(
                "sequence window of {} steps below the minimum {MIN_WINDOW}",
                window.steps()
            )));
        }
        Ok(Self { disc, dich, window })
    }

    pub fn dim(&self) -> usize {
        self.disc.dim()
    }

    /// Adapted sup norm over the window.
    pub fn sup_norm(&self, x: &WindowSeq) -> f64 {
        let mut out = 0.0f64;
        for m in self.window.lo..=self.window.hi {
            if !x.is_zero_at(m) {
                out = out.max(self.dich.adapted_norm(m, x.get(m)));
            }
        }
        out
    }

    /// Lifted nonlinearity `(ft x)_m = f_{m-1}(x_{m-1})`; zero entries are
    /// mapped exactly to zero (skipping the integrator).
    pub fn f_tilde(&self, x: &WindowSeq) -> Result<WindowSeq> {
        let mut out = WindowSeq::zeros(self.window, self.dim());
        for m in (self.window.lo + 1)..=self.window.hi {
            if !x.is_zero_at(m - 1) {
                out.set(m, self.disc.f(m - 1, x.get(m - 1))?);
            }
        }
        Ok(out)
    }

    /// Lifted map `(F x)_m = A_{m-1} x_{m-1} + f_{m-1}(x_{m-1})`.
    pub fn lift_apply(&self, x: &WindowSeq) -> Result<WindowSeq> {
        let mut out = WindowSeq::zeros(self.window, self.dim());
        for m in (self.window.lo + 1)..=self.window.hi {
            if !x.is_zero_at(m - 1) {
                out.set(m, self.disc.step_map(m - 1, x.get(m - 1))?);
            }
        }
        Ok(out)
    }

    pub fn pi_s(&self, x: &WindowSeq) -> WindowSeq {
        let mut out = WindowSeq::zeros(self.window, self.dim());
        for m in self.window.lo..=self.window.hi {
            if !x.is_zero_at(m) {
                out.set(m, self.dich.projection(m) * x.get(m));
            }
        }
        out
    }

    pub fn pi_u(&self, x: &WindowSeq) -> WindowSeq {
        let mut out = WindowSeq::zeros(self.window, self.dim());
        for m in self.window.lo..=self.window.hi {
            if !x.is_zero_at(m) {
                out.set(m, x.get(m) - self.dich.projection(m) * x.get(m));
            }
        }
        out
    }

    /// `As^p x` for `p >= 0`: stable block applied `p` times (re-projected).
    pub fn stable_pow(&self, p: usize, x: &WindowSeq) -> WindowSeq {
        let mut cur = self.pi_s(x);
        for _ in 0..p {
            let mut next = WindowSeq::zeros(self.window, self.dim());
            for m in (self.window.lo + 1)..=self.window.hi {
                if !cur.is_zero_at(m - 1) {
                    next.set(m, self.dich.projection(m) * (self.dich.a(m - 1) * cur.get(m - 1)));
                }
            }
            cur = next;
        }
        cur
    }

    /// `Au^{-p} x` for `p >= 1`: inverse unstable block applied `p` times.
    pub fn unstable_negpow(&self, p: usize, x: &WindowSeq) -> WindowSeq {
        let mut cur = self.pi_u(x);
        for _ in 0..p {
            let mut next = WindowSeq::zeros(self.window, self.dim());
            for m in self.window.lo..self.window.hi {
                if !cur.is_zero_at(m + 1) {
                    let step = self.dich.a_inv(m) * cur.get(m + 1);
                    next.set(m, &step - self.dich.projection(m) * &step);
                }
            }
            cur = next;
        }
        cur
    }
}

/// Converged foliation fixed point with its convergence log.
#[derive(Debug, Clone)]
pub struct FoliationSolution {
    /// `q*_0`.
    pub q0: WindowSeq,
    /// The whole ladder `q*_0 .. q*_N`.
    pub levels: Vec<WindowSeq>,
    /// Per-iteration update sizes in the `gamma_s`-weighted sup metric.
    pub convergence_log: Vec<f64>,
    /// Measured Picard contraction factor (max ratio of successive updates).
    pub contraction_factor: f64,
    /// `sup_n gamma_s^{-n} |q*_n|` over the ladder.
    pub weighted_bound: f64,
    /// Geometric bound on the off-window truncation of the unstable sums.
    pub tail_bound: f64,
}

/// Solves the fixed-point equation by Picard iteration over the ladder
/// `q_0 .. q_N` with `N = levels`. `delta` bounds the admissible domain
/// (`|x|, |xi_s| <= delta/4`); pass `f64::INFINITY` to skip the check when
/// running outside the guaranteed regime.
pub fn solve_foliation(
    model: &SequenceSpaceModel,
    x: &WindowSeq,
    xi_s: &WindowSeq,
    lp: &LyapunovPerronParams,
    levels: usize,
    delta: f64,
) -> Result<FoliationSolution> {
    let nx = model.sup_norm(x);
    let nxi = model.sup_norm(xi_s);
    if delta.is_finite() && (nx > delta / 4.0 || nxi > delta / 4.0) {
        return Err(Error::OutsideDomain {
            at: 0.0,
            norm: nx.max(nxi),
            radius: delta / 4.0,
        });
    }

    // Forward iterates and their lifted nonlinearity, fixed over the solve.
    let mut forward = Vec::with_capacity(levels + 1);
    forward.push(x.clone());
    for _ in 0..levels {
        let next = model.lift_apply(forward.last().unwrap())?;
        forward.push(next);
    }
    let base_ft: Vec<WindowSeq> = forward
        .iter()
        .map(|fi| model.f_tilde(fi))
        .collect::<Result<_>>()?;

    // Inhomogeneous part As^n (xi_s - pi_s x).
    let seed = xi_s.sub(&model.pi_s(x));
    let inhomogeneous: Vec<WindowSeq> = (0..=levels).map(|n| model.stable_pow(n, &seed)).collect();

    let dim = model.dim();
    let mut q: Vec<WindowSeq> = vec![WindowSeq::zeros(model.window, dim); levels + 1];
    let mut log = Vec::new();
    let mut contraction: f64 = 0.0;
    let mut prev_delta = f64::INFINITY;
    let mut converged = false;

    for iter in 0..lp.max_iter {
        // g_i = ft(q_i + F^i x) - ft(F^i x)
        let mut g = Vec::with_capacity(levels + 1);
        for i in 0..=levels {
            let shifted = q[i].add(&forward[i]);
            g.push(model.f_tilde(&shifted)?.sub(&base_ft[i]));
        }
        let mut next: Vec<WindowSeq> = Vec::with_capacity(levels + 1);
        for n in 0..=levels {
            let mut acc = inhomogeneous[n].clone();
            for (i, gi) in g.iter().enumerate().take(n) {
                acc = acc.add(&model.stable_pow(n - i - 1, gi));
            }
            for (i, gi) in g.iter().enumerate().skip(n) {
                acc = acc.sub(&model.unstable_negpow(i + 1 - n, gi));
            }
            next.push(acc);
        }
        let mut delta_w = 0.0f64;
        for n in 0..=levels {
            let d = model.sup_norm(&next[n].sub(&q[n]));
            delta_w = delta_w.max(lp.gamma_s.powi(-(n as i32)) * d);
        }
        q = next;
        log.push(delta_w);
        if iter >= 1 && prev_delta > 0.0 && prev_delta.is_finite() {
            let ratio = delta_w / prev_delta;
            contraction = contraction.max(ratio);
            if ratio >= 1.0 && delta_w > lp.tol_fp {
                return Err(Error::NotContracting { factor: ratio });
            }
        }
        prev_delta = delta_w;
        if delta_w <= lp.tol_fp {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotContracting {
            factor: contraction.max(1.0),
        });
    }

    let mut weighted_bound = 0.0f64;
    for (n, qn) in q.iter().enumerate() {
        weighted_bound = weighted_bound.max(lp.gamma_s.powi(-(n as i32)) * model.sup_norm(qn));
    }
    // Off-window tail: remaining unstable terms decay like 1/lambda_u^-.
    let g_cap = {
        let mut cap = 0.0f64;
        for (i, qi) in q.iter().enumerate() {
            let shifted = qi.add(&forward[i]);
            let gi = model.f_tilde(&shifted)?.sub(&base_ft[i]);
            cap = cap.max(model.sup_norm(&model.pi_u(&gi)));
        }
        cap
    };
    let r = 1.0 / lp.lambda_u_minus;
    let tail_bound = g_cap * r * r / (1.0 - r);

    Ok(FoliationSolution {
        q0: q[0].clone(),
        levels: q,
        convergence_log: log,
        contraction_factor: contraction,
        weighted_bound,
        tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::LyapunovPerronParams;
    use crate::evolution::{EvolutionFamily, IntegratorSettings, LinearSystem};
    use crate::spectrum::{adapted_norms, estimate_projections, Cocycle, MuScanConfig};
    use nalgebra::DMatrix;

    fn linear_saddle_model() -> SequenceSpaceModel {
        let lin = Arc::new(LinearSystem::analytic(2, (-60.0, 60.0), true, |_| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]))
        }));
        let fam = Arc::new(EvolutionFamily::linear_only(lin, IntegratorSettings::default()));
        let disc = Arc::new(fam.discretize(IndexWindow::new(-30, 30)).unwrap());
        let coc = Cocycle::from_discretization(&disc).unwrap();
        let proj = estimate_projections(&coc, 1.0, 10, 5).unwrap();
        let dich = Arc::new(adapted_norms(&coc, &proj, 1.0, 1.0, 1.0, 0.0).unwrap());
        SequenceSpaceModel::new(disc, dich).unwrap()
    }

    fn saddle_lp() -> LyapunovPerronParams {
        let sp = {
            let a = DMatrix::from_diagonal(&DVector::from_vec(vec![(-1.0f64).exp(), 1.0f64.exp()]));
            let w = IndexWindow::new(-30, 30);
            let coc = Cocycle::new(w, vec![a; w.steps()]).unwrap();
            crate::spectrum::estimate_spectrum(&coc, &MuScanConfig::default()).unwrap().0
        };
        LyapunovPerronParams::from_spectrum(&sp, 0.9, 0.7, 40, 100, 1e-12).unwrap()
    }

    #[test]
    fn linear_case_is_pure_inhomogeneous_part() {
        // f == 0: only the first term survives, q_n = As^n (xi_s - pi_s x).
        let model = linear_saddle_model();
        let lp = saddle_lp();
        let x = WindowSeq::one_hot(model.window, 0, DVector::from_vec(vec![0.01, 0.005]));
        let xi = model.pi_s(&WindowSeq::one_hot(
            model.window,
            0,
            DVector::from_vec(vec![-0.004, 0.0]),
        ));
        let sol = solve_foliation(&model, &x, &xi, &lp, 10, f64::INFINITY).unwrap();
        for n in 0..=10usize {
            let expect = model.stable_pow(n, &xi.sub(&model.pi_s(&x)));
            let err = model.sup_norm(&sol.levels[n].sub(&expect));
            assert!(err < 1e-9, "level {n} deviates by {err:.3e}");
        }
    }

    #[test]
    fn zero_seed_gives_zero_fixed_point() {
        // xi_s = pi_s x: the inhomogeneous part vanishes and q = 0.
        let model = linear_saddle_model();
        let lp = saddle_lp();
        let x = WindowSeq::one_hot(model.window, 0, DVector::from_vec(vec![0.01, -0.02]));
        let xi = model.pi_s(&x);
        let sol = solve_foliation(&model, &x, &xi, &lp, 10, f64::INFINITY).unwrap();
        assert!(model.sup_norm(&sol.q0) <= 1e-10);
        assert!(sol.weighted_bound <= 1e-10);
    }

    #[test]
    fn window_minimum_enforced() {
        let lin = Arc::new(LinearSystem::analytic(1, (-60.0, 60.0), true, |_| {
            DMatrix::from_element(1, 1, -0.7)
        }));
        let fam = Arc::new(EvolutionFamily::linear_only(lin, IntegratorSettings::default()));
        let disc = Arc::new(fam.discretize(IndexWindow::new(-10, 10)).unwrap());
        let coc = Cocycle::from_discretization(&disc).unwrap();
        let proj = estimate_projections(&coc, 1.0, 5, 2).unwrap();
        let dich = Arc::new(adapted_norms(&coc, &proj, 1.0, 0.6, 0.8, 0.0).unwrap());
        assert!(SequenceSpaceModel::new(disc, dich).is_err());
    }

    #[test]
    fn domain_check_enforced() {
        let model = linear_saddle_model();
        let lp = saddle_lp();
        let x = WindowSeq::one_hot(model.window, 0, DVector::from_vec(vec![1.0, 1.0]));
        let xi = model.pi_s(&x);
        assert!(matches!(
            solve_foliation(&model, &x, &xi, &lp, 8, 0.1),
            Err(Error::OutsideDomain { .. })
        ));
    }
}
