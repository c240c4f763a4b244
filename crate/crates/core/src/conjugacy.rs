//! Discrete and continuous linearizing conjugacies.
//!
//! The discrete conjugacy is `h_n = id + v_n` where `v_n` solves
//! `v_{n+1}((A_n + f_n)(x)) = A_n v_n(x) - f_n(x)` along the orbit of the
//! nonlinear one-step maps. The solution is selected by the regular branch of
//! the dichotomy Green kernel,
//!
//! ```text
//! v_n(x) =  sum_{i >= n} A(n, i+1) P(i+1)      f_i(x_i)
//!         - sum_{i <  n} A(n, i+1) (Id-P(i+1)) f_i(x_i),
//! ```
//!
//! whose convergence is governed by the spectral bound condition: the
//! expanding weights are beaten by the quadratic decay of `f_i` along the
//! orbit. On purely contracting systems this reduces to the classical
//! `h = lim A^{-m} F^m`. The sums are truncated adaptively with a reported
//! geometric tail bound. Continuous-time maps are assembled per
//! `H(t,x) = T(t,n) h_n(phi(n,t;x))` and `G(t,x) = phi(t,n; h_n^{-1}(T(n,t)x))`
//! for `t` in `[n, n+1)`, plus the time-averaged conjugacy for autonomous
//! systems.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evolution::{Discretization, EvolutionFamily};
use crate::spectrum::DichotomyData;

/// Truncation and iteration controls for the conjugacy evaluators.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ConjugacyParams {
    /// Hard cap on the Green's-sum tail length on each side.
    pub n_tail: usize,
    /// Iteration cap for backward solves and the inverse polish.
    pub max_iter: usize,
    /// Fixed-point tolerance (backward orbit, inverse polish).
    pub tol_fp: f64,
    /// Relative conjugacy-residual budget; the adaptive truncation keeps the
    /// geometric tail bound below a fraction of it.
    pub tol_conj: f64,
    /// Working `U_n` radius at `n = 0`; scaled by `e^{-eps|n|}/C` elsewhere.
    pub domain_radius: f64,
    /// Evaluate outside the domain radii instead of refusing.
    pub override_domain: bool,
}

impl Default for ConjugacyParams {
    fn default() -> Self {
        Self {
            n_tail: 40,
            max_iter: 200,
            tol_fp: 1e-12,
            tol_conj: 1e-8,
            domain_radius: 0.05,
            override_domain: false,
        }
    }
}

/// Bidirectional orbit of the discrete maps `A_m + f_m`.
#[derive(Debug, Clone)]
pub struct NonlinearOrbit {
    pub lo: i64,
    pub hi: i64,
    /// States at indices `lo..=hi`.
    pub points: Vec<DVector<f64>>,
    /// Forward extension stopped at the escape radius.
    pub truncated_forward: bool,
    /// Backward extension stopped (escape or window edge).
    pub truncated_backward: bool,
}

impl NonlinearOrbit {
    pub fn state(&self, i: i64) -> &DVector<f64> {
        assert!(i >= self.lo && i <= self.hi, "orbit index {i} outside [{}, {}]", self.lo, self.hi);
        &self.points[(i - self.lo) as usize]
    }
}

/// Diagnostics attached to one `h_n` evaluation.
#[derive(Debug, Clone)]
pub struct HEval {
    pub value: DVector<f64>,
    /// Geometric bound on the truncated tail (absolute).
    pub tail_bound: f64,
    pub terms_stable: usize,
    pub terms_unstable: usize,
}

/// Evaluator for the discrete conjugacies `h_n`, `h_n^{-1}`.
pub struct DiscreteConjugacy {
    pub disc: Arc<Discretization>,
    pub dich: Arc<DichotomyData>,
    pub params: ConjugacyParams,
}

impl DiscreteConjugacy {
    pub fn new(disc: Arc<Discretization>, dich: Arc<DichotomyData>, params: ConjugacyParams) -> Self {
        Self { disc, dich, params }
    }

    fn dim(&self) -> usize {
        self.disc.dim()
    }

    /// Indices at which `h_n` can be evaluated (one step of room at the top).
    pub fn index_range(&self) -> (i64, i64) {
        (self.dich.window.lo, self.dich.window.hi - 1)
    }

    /// Working `U_n` radius.
    pub fn domain_radius(&self, n: i64) -> f64 {
        self.params.domain_radius * (-self.dich.eps * (n as f64).abs()).exp() / self.dich.c_norm.max(1.0)
    }

    fn check_domain(&self, n: i64, x: &DVector<f64>) -> Result<()> {
        if self.params.override_domain {
            return Ok(());
        }
        let radius = self.domain_radius(n);
        if x.norm() > radius {
            return Err(Error::OutsideDomain {
                at: n as f64,
                norm: x.norm(),
                radius,
            });
        }
        Ok(())
    }

    /// Solves `(A_m + f_m)(z) = target` by the damped fixed-point iteration
    /// `z <- A_m^{-1}(target - f_m(z))`.
    fn backward_step(&self, m: i64, target: &DVector<f64>) -> Result<DVector<f64>> {
        let a_inv = self.dich.a_inv(m);
        let mut z = a_inv * target;
        let mut prev_delta = f64::INFINITY;
        let mut growing = 0u32;
        for _ in 0..self.params.max_iter {
            let fz = self.disc.f(m, &z)?;
            let z_new = a_inv * (target - fz);
            let delta = (&z_new - &z).norm();
            z = z_new;
            if delta <= self.params.tol_fp * (1.0 + z.norm()) {
                return Ok(z);
            }
            if delta >= prev_delta {
                growing += 1;
                if growing >= 3 {
                    return Err(Error::OrbitDivergence {
                        n: m,
                        ratio: delta / prev_delta,
                    });
                }
            } else {
                growing = 0;
            }
            prev_delta = delta;
        }
        Err(Error::OrbitDivergence { n: m, ratio: 1.0 })
    }

    /// Orbit of `A_m + f_m` through `x` at index `n`, forward by direct
    /// evaluation and backward by the damped fixed-point solves. Escape
    /// truncates with a flag rather than failing.
    pub fn nonlinear_orbit(&self, n: i64, x: &DVector<f64>, lo: i64, hi: i64) -> Result<NonlinearOrbit> {
        if lo > n || hi < n {
            return Err(Error::InvalidInput(format!("orbit range [{lo}, {hi}] must contain {n}")));
        }
        self.check_domain(n, x)?;
        let mut fwd: Vec<DVector<f64>> = vec![x.clone()];
        let mut truncated_forward = false;
        let mut i = n;
        while i < hi {
            match self.disc.step_map(i, fwd.last().unwrap()) {
                Ok(next) => fwd.push(next),
                Err(Error::Escape { .. }) => {
                    truncated_forward = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            i += 1;
        }
        let reached_hi = n + fwd.len() as i64 - 1;
        let mut bwd: Vec<DVector<f64>> = Vec::new();
        let mut truncated_backward = false;
        let mut m = n;
        while m > lo {
            let target = if bwd.is_empty() { x } else { bwd.last().unwrap() };
            match self.backward_step(m - 1, target) {
                Ok(prev) => bwd.push(prev),
                Err(Error::Escape { .. }) => {
                    truncated_backward = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            m -= 1;
        }
        let reached_lo = n - bwd.len() as i64;
        let mut points = Vec::with_capacity((reached_hi - reached_lo + 1) as usize);
        points.extend(bwd.into_iter().rev());
        points.extend(fwd);
        Ok(NonlinearOrbit {
            lo: reached_lo,
            hi: reached_hi,
            points,
            truncated_forward,
            truncated_backward,
        })
    }

    /// `h_n(x) = x + v_n(x)` by the truncated regular Green's sum.
    pub fn h(&self, n: i64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.h_detailed(n, x)?.value)
    }

    pub fn h_detailed(&self, n: i64, x: &DVector<f64>) -> Result<HEval> {
        self.check_domain(n, x)?;
        let (nlo, nhi) = self.index_range();
        if n < nlo || n > nhi {
            return Err(Error::InvalidInput(format!("h_{n} outside evaluable range [{nlo}, {nhi}]")));
        }
        let d = self.dim();
        let id = DMatrix::<f64>::identity(d, d);
        let scale = x.norm().max(1e-9);
        let budget = self.params.tol_conj * scale;

        let mut value = x.clone();
        let mut tail_bound = 0.0f64;
        let mut terms_stable = 0usize;
        let mut terms_unstable = 0usize;

        // Stable sum: forward orbit, weights A(n, i+1) restricted to the
        // stable bundle (expanding backward at most like the stable radius).
        if self.dich.stable_dim > 0 {
            let max_i = (n + self.params.n_tail as i64).min(self.dich.window.hi - 1);
            let mut left = id.clone(); // A(n, i+1) accumulated as inverses
            let mut xi = x.clone();
            let mut last_norm = f64::INFINITY;
            let mut ratio_max: f64 = 0.0;
            let mut below = 0u32;
            let mut escaped = false;
            let mut i = n;
            while i <= max_i {
                let step = match self.disc.step_map(i, &xi) {
                    Ok(v) => v,
                    Err(Error::Escape { .. }) => {
                        escaped = true;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                let f_i = &step - self.disc.a(i) * &xi;
                left *= self.dich.a_inv(i);
                let term = &left * (self.dich.projection(i + 1) * &f_i);
                let tn = term.norm();
                value += term;
                terms_stable += 1;
                if tn > 0.0 && last_norm.is_finite() && last_norm > 0.0 {
                    ratio_max = ratio_max.max(tn / last_norm);
                }
                // stop once the geometric tail estimate is negligible
                let q = ratio_max.clamp(0.05, 0.95);
                let est = tn * q / (1.0 - q);
                if est < 0.02 * budget && terms_stable >= 4 {
                    below += 1;
                    if below >= 2 {
                        tail_bound += est;
                        break;
                    }
                } else {
                    below = 0;
                }
                if i == max_i {
                    let q = ratio_max.clamp(0.05, 0.95);
                    let est = tn * q / (1.0 - q);
                    if est > budget {
                        return Err(Error::TailAboveTolerance {
                            bound: est,
                            tol: budget,
                            used: terms_stable,
                        });
                    }
                    tail_bound += est;
                }
                last_norm = tn;
                xi = step;
                i += 1;
            }
            if escaped && last_norm.is_finite() {
                let q = ratio_max.clamp(0.05, 0.95);
                tail_bound += last_norm * q / (1.0 - q);
            }
        }

        // Unstable sum: backward orbit, weights restricted to the unstable
        // bundle (contracting backward).
        if self.dich.stable_dim < d {
            let min_i = (n - self.params.n_tail as i64).max(self.dich.window.lo);
            let mut right = id.clone(); // A(n, i+1) accumulated forward
            let mut x_next = x.clone(); // orbit state at index i+1
            let mut last_norm = f64::INFINITY;
            let mut ratio_max: f64 = 0.0;
            let mut below = 0u32;
            let mut i = n - 1;
            while i >= min_i {
                let xi = match self.backward_step(i, &x_next) {
                    Ok(v) => v,
                    Err(Error::Escape { .. }) => break,
                    Err(e) => return Err(e),
                };
                let f_i = &x_next - self.disc.a(i) * &xi;
                let proj_u = &id - self.dich.projection(i + 1);
                let term = &right * (proj_u * &f_i);
                let tn = term.norm();
                value -= term;
                terms_unstable += 1;
                if tn > 0.0 && last_norm.is_finite() && last_norm > 0.0 {
                    ratio_max = ratio_max.max(tn / last_norm);
                }
                let q = ratio_max.clamp(0.05, 0.95);
                let est = tn * q / (1.0 - q);
                if est < 0.02 * budget && terms_unstable >= 4 {
                    below += 1;
                    if below >= 2 {
                        tail_bound += est;
                        break;
                    }
                } else {
                    below = 0;
                }
                if i == min_i && est > budget {
                    return Err(Error::TailAboveTolerance {
                        bound: est,
                        tol: budget,
                        used: terms_unstable,
                    });
                }
                if i == min_i {
                    tail_bound += est;
                }
                last_norm = tn;
                right *= self.dich.a(i); // A(n, i) for the next iteration
                x_next = xi;
                i -= 1;
            }
        }

        Ok(HEval {
            value,
            tail_bound,
            terms_stable,
            terms_unstable,
        })
    }

    /// `h_n^{-1}(y)`: bounded-solution ansatz along the linear orbit as the
    /// initial guess, then a Newton polish on `h_n(z) = y`.
    pub fn h_inverse(&self, n: i64, y: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.params.override_domain {
            let radius = self.domain_radius(n) / 2.0;
            if y.norm() > radius {
                return Err(Error::OutsideDomain {
                    at: n as f64,
                    norm: y.norm(),
                    radius,
                });
            }
        }
        let d = self.dim();
        let id = DMatrix::<f64>::identity(d, d);
        let mut z = y.clone();

        // Initial guess: flip the Green's-sum signs along the linear orbit.
        if self.dich.stable_dim > 0 {
            let max_i = (n + self.params.n_tail as i64).min(self.dich.window.hi - 1);
            let mut left = id.clone();
            let mut yi = y.clone();
            let mut i = n;
            while i <= max_i {
                let f_i = match self.disc.f(i, &yi) {
                    Ok(v) => v,
                    Err(Error::Escape { .. }) => break,
                    Err(e) => return Err(e),
                };
                left *= self.dich.a_inv(i);
                let term = &left * (self.dich.projection(i + 1) * &f_i);
                let tn = term.norm();
                z -= term;
                if tn < 1e-3 * self.params.tol_fp * (1.0 + y.norm()) && i > n + 3 {
                    break;
                }
                yi = self.dich.a(i) * yi;
                i += 1;
            }
        }
        if self.dich.stable_dim < d {
            let min_i = (n - self.params.n_tail as i64).max(self.dich.window.lo);
            let mut right = id.clone();
            let mut y_next = y.clone();
            let mut i = n - 1;
            while i >= min_i {
                let yi = self.dich.a_inv(i) * &y_next;
                let f_i = match self.disc.f(i, &yi) {
                    Ok(v) => v,
                    Err(Error::Escape { .. }) => break,
                    Err(e) => return Err(e),
                };
                let proj_u = &id - self.dich.projection(i + 1);
                z += &right * (proj_u * &f_i);
                right *= self.dich.a(i);
                y_next = yi;
                i -= 1;
            }
        }

        // Newton polish on h_n(z) = y. Near the origin Dh is close to the
        // identity, so start with plain residual steps and switch to a
        // finite-difference Jacobian if that stalls.
        let tol = 2.0 * self.params.tol_fp * (1.0 + y.norm());
        let mut residual = self.h(n, &z)? - y;
        if residual.norm() <= tol {
            return Ok(z);
        }
        for iter in 0..self.params.max_iter {
            if iter < 8 {
                z -= &residual;
            } else {
                let h_step = 1e-7 * (1.0 + z.norm());
                let mut jac = DMatrix::zeros(d, d);
                for k in 0..d {
                    let mut zp = z.clone();
                    zp[k] += h_step;
                    let col = (self.h(n, &zp)? - y - &residual) / h_step;
                    jac.set_column(k, &col);
                }
                let delta = jac.lu().solve(&residual).ok_or(Error::InverseDivergence {
                    n,
                    residual: residual.norm(),
                    iters: iter,
                })?;
                z -= delta;
            }
            residual = self.h(n, &z)? - y;
            if residual.norm() <= tol {
                return Ok(z);
            }
        }
        Err(Error::InverseDivergence {
            n,
            residual: residual.norm(),
            iters: self.params.max_iter,
        })
    }

    /// Relative residual of the conjugacy identity
    /// `h_{n+1}((A_n + f_n)(x)) = A_n h_n(x)` at `x`.
    pub fn conjugacy_residual(&self, n: i64, x: &DVector<f64>) -> Result<f64> {
        let fx = self.disc.step_map(n, x)?;
        let lhs = self.h(n + 1, &fx)?;
        let rhs = self.dich.a(n) * self.h(n, x)?;
        Ok((lhs - rhs).norm() / x.norm().max(1e-9))
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((1.0 + x) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Continuous-time conjugacies assembled from the discrete family.
pub struct ContinuousConjugacy {
    pub family: Arc<EvolutionFamily>,
    pub discrete: DiscreteConjugacy,
    /// `V_t` radius factor: the domain at time `t` is `vt_factor e^{-2 eps |t|}`.
    pub vt_factor: f64,
}

impl ContinuousConjugacy {
    pub fn new(family: Arc<EvolutionFamily>, discrete: DiscreteConjugacy, vt_factor: f64) -> Self {
        Self {
            family,
            discrete,
            vt_factor,
        }
    }

    pub fn vt_radius(&self, t: f64) -> f64 {
        self.vt_factor * (-2.0 * self.discrete.dich.eps * t.abs()).exp()
    }

    fn check_vt(&self, t: f64, x: &DVector<f64>) -> Result<()> {
        if self.discrete.params.override_domain {
            return Ok(());
        }
        let radius = self.vt_radius(t);
        if x.norm() > radius {
            return Err(Error::OutsideDomain {
                at: t,
                norm: x.norm(),
                radius,
            });
        }
        Ok(())
    }

    /// `H(t,x) = T(t,n) h_n(phi(n,t;x))` with `n = floor(t)`.
    pub fn apply_h(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_vt(t, x)?;
        let n = t.floor() as i64;
        let at_n = self.family.flow(t, n as f64, x)?;
        let hx = self.discrete.h(n, &at_n)?;
        Ok(self.family.transition(n as f64, t)? * hx)
    }

    /// `G(t,x) = phi(t,n; h_n^{-1}(T(n,t)x))` with `n = floor(t)`.
    pub fn apply_g(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_vt(t, x)?;
        let n = t.floor() as i64;
        let lin_at_n = self.family.transition(t, n as f64)? * x;
        let w = self.discrete.h_inverse(n, &lin_at_n)?;
        self.family.flow(n as f64, t, &w)
    }

    /// Time-averaged conjugacy for autonomous systems:
    /// `H~(x) = int_0^1 e^{As} h(phi(-s,0;x)) ds` by Gauss-Legendre
    /// quadrature. Refuses non-autonomous systems.
    pub fn averaged_autonomous_h(&self, x: &DVector<f64>, nodes: usize) -> Result<DVector<f64>> {
        if !self.family.is_autonomous() {
            return Err(Error::NotAutonomous);
        }
        self.check_vt(0.0, x)?;
        let d = self.family.dim();
        let mut acc = DVector::zeros(d);
        for (s, w) in gauss_legendre_unit(nodes) {
            let back = self.family.flow(0.0, -s, x)?;
            let h = self.discrete.h(0, &back)?;
            let fwd = self.family.transition(0.0, s)? * h;
            acc += fwd * w;
        }
        Ok(acc)
    }
}
