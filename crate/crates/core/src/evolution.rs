//! Continuous-time layer: the linear evolution family `T(t,s)`, the nonlinear
//! flow `phi(t,s;x)`, the variational flow `D_x phi(t,s;x)` and their
//! discretizations `A_n = T(n+1,n)`, `f_n(x) = phi(n+1,n;x) - A_n x`.
//!
//! Everything is driven by a fixed-step classical Runge-Kutta integrator
//! (order 4). Transitions are assembled from cached half-integer steps so the
//! cocycle identity is testable and memory stays bounded; backward time is
//! handled by integrating with a negated direction, never by inverting
//! matrices.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Inclusive integer window `[lo, hi]` of grid states; one-step maps `A_n`
/// exist for `lo <= n < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IndexWindow {
    pub lo: i64,
    pub hi: i64,
}

impl IndexWindow {
    pub fn new(lo: i64, hi: i64) -> Self {
        assert!(lo < hi, "window must contain at least one step");
        Self { lo, hi }
    }

    /// Number of one-step maps in the window.
    pub fn steps(&self) -> usize {
        (self.hi - self.lo) as usize
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.lo && n <= self.hi
    }

    pub fn shrink(&self, margin: i64) -> Self {
        Self::new(self.lo + margin, self.hi - margin)
    }
}

/// Smooth bump: 1 on `[0,1]`, 0 on `[2,inf)`, C-infinity in between.
pub fn cutoff(u: f64) -> f64 {
    let u = u.abs();
    if u <= 1.0 {
        1.0
    } else if u >= 2.0 {
        0.0
    } else {
        let g = |v: f64| (-1.0 / v).exp();
        let p = g(2.0 - u);
        let q = g(u - 1.0);
        p / (p + q)
    }
}

/// Derivative of [`cutoff`] with respect to `u` (for `u >= 0`).
pub fn cutoff_prime(u: f64) -> f64 {
    let u = u.abs();
    if !(1.0..2.0).contains(&u) {
        return 0.0;
    }
    let g = |v: f64| (-1.0 / v).exp();
    let gp = |v: f64| (-1.0 / v).exp() / (v * v);
    let p = g(2.0 - u);
    let q = g(u - 1.0);
    let dp = -gp(2.0 - u);
    let dq = gp(u - 1.0);
    (dp * q - p * dq) / ((p + q) * (p + q))
}

/// Time-dependent coefficient of the linear part.
pub enum Coefficient {
    /// Catalog-supplied closed form.
    Analytic(Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>),
    /// Piecewise-linear interpolation of samples; continuous by construction.
    Tabular {
        times: Vec<f64>,
        values: Vec<DMatrix<f64>>,
    },
}

/// The linear system `x' = A(t) x` on a finite horizon.
pub struct LinearSystem {
    pub dim: usize,
    pub horizon: (f64, f64),
    pub autonomous: bool,
    coeff: Coefficient,
}

impl LinearSystem {
    pub fn analytic<F>(dim: usize, horizon: (f64, f64), autonomous: bool, f: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(dim >= 1);
        Self {
            dim,
            horizon,
            autonomous,
            coeff: Coefficient::Analytic(Box::new(f)),
        }
    }

    /// Tabular coefficient with piecewise-linear interpolation. Times must be
    /// strictly increasing and all samples `dim x dim`.
    pub fn tabular(times: Vec<f64>, values: Vec<DMatrix<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::InvalidInput(
                "tabular system needs >= 2 samples with matching times".into(),
            ));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("tabular times must be strictly increasing".into()));
        }
        let dim = values[0].nrows();
        if values.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::InvalidInput("tabular samples must share dimensions".into()));
        }
        let horizon = (times[0], *times.last().unwrap());
        Ok(Self {
            dim,
            horizon,
            autonomous: false,
            coeff: Coefficient::Tabular { times, values },
        })
    }

    pub fn coeff_at(&self, t: f64) -> DMatrix<f64> {
        match &self.coeff {
            Coefficient::Analytic(f) => f(t),
            Coefficient::Tabular { times, values } => {
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= *times.last().unwrap() {
                    return values.last().unwrap().clone();
                }
                let idx = times.partition_point(|&u| u <= t) - 1;
                let (t0, t1) = (times[idx], times[idx + 1]);
                let w = (t - t0) / (t1 - t0);
                &values[idx] * (1.0 - w) + &values[idx + 1] * w
            }
        }
    }
}

/// The nonlinear term `f(t,x)` with its spatial Jacobian and declared
/// constants from conditions (F1)-(F4).
pub struct NonlinearTerm {
    pub dim: usize,
    pub autonomous: bool,
    /// Nonuniformity rate entering the decay envelopes of (F3)/(F4).
    pub eps: f64,
    /// Declared bound: `|D_x f(t,x)| <= eta * exp(-3 eps |t|)`.
    pub eta: f64,
    /// Declared Lipschitz constant of `D_x f` against `exp(-4 eps |t|) |x-y|`.
    pub lip_b: f64,
    field: Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    jacobian: Option<Box<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>>,
}

impl NonlinearTerm {
    pub fn new<F>(dim: usize, autonomous: bool, eps: f64, eta: f64, lip_b: f64, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            autonomous,
            eps,
            eta,
            lip_b,
            field: Box::new(f),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Box::new(jac));
        self
    }

    pub fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.field)(t, x)
    }

    /// Spatial Jacobian; analytic when supplied, central differences otherwise.
    pub fn jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(t, x);
        }
        let d = self.dim;
        let mut out = DMatrix::zeros(d, d);
        let h = 1e-6 * (1.0 + x.norm());
        for k in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let col = ((self.field)(t, &xp) - (self.field)(t, &xm)) / (2.0 * h);
            out.set_column(k, &col);
        }
        out
    }
}

/// Fixed-step integrator settings.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct IntegratorSettings {
    /// Step size of the classical RK4 scheme.
    pub step: f64,
    /// Error budget at the configured step; residual checks scale with it.
    pub tol: f64,
    /// Orbits leaving this radius raise [`Error::Escape`].
    pub escape_radius: f64,
    /// Guard against runaway step counts.
    pub max_steps: u64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tol: 1e-10,
            escape_radius: 1e6,
            max_steps: 100_000_000,
        }
    }
}

fn plan_steps(from: f64, to: f64, settings: &IntegratorSettings) -> Result<(usize, f64)> {
    let span = to - from;
    if span == 0.0 {
        return Ok((0, 0.0));
    }
    if !(settings.step > 0.0) || !span.is_finite() {
        return Err(Error::NumericalFailure {
            from,
            to,
            detail: "non-positive step or non-finite span".into(),
        });
    }
    let n = (span.abs() / settings.step).ceil() as u64;
    if n > settings.max_steps {
        return Err(Error::NumericalFailure {
            from,
            to,
            detail: format!("{n} steps exceed the configured limit"),
        });
    }
    let n = n.max(1) as usize;
    Ok((n, span / n as f64))
}

fn rk4_vec<F>(from: f64, to: f64, x0: &DVector<f64>, settings: &IntegratorSettings, mut rhs: F) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let (n, h) = plan_steps(from, to, settings)?;
    let mut x = x0.clone();
    let mut t = from;
    for _ in 0..n {
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
        let norm = x.norm();
        if !norm.is_finite() || norm > settings.escape_radius {
            return Err(Error::Escape {
                t,
                radius: settings.escape_radius,
                norm,
            });
        }
    }
    Ok(x)
}

fn rk4_mat<F>(from: f64, to: f64, x0: &DMatrix<f64>, settings: &IntegratorSettings, mut rhs: F) -> Result<DMatrix<f64>>
where
    F: FnMut(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let (n, h) = plan_steps(from, to, settings)?;
    let mut x = x0.clone();
    let mut t = from;
    for _ in 0..n {
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure {
                from,
                to,
                detail: format!("non-finite transition entries at t = {t}"),
            });
        }
    }
    Ok(x)
}

/// Cached evaluator for `T(t,s)`, `phi(t,s;x)` and `D_x phi(t,s;x)`.
///
/// All evaluations are pure given frozen settings; the memo table of
/// half-integer transition steps is behind a mutex and is behaviorally
/// transparent.
pub struct EvolutionFamily {
    pub linear: Arc<LinearSystem>,
    pub nonlinear: Option<Arc<NonlinearTerm>>,
    pub settings: IntegratorSettings,
    // key: (2*from, 2*to) on the half-integer grid, |from - to| = 1/2
    memo: Mutex<HashMap<(i64, i64), DMatrix<f64>>>,
}

impl EvolutionFamily {
    pub fn new(linear: Arc<LinearSystem>, nonlinear: Option<Arc<NonlinearTerm>>, settings: IntegratorSettings) -> Self {
        if let Some(nl) = &nonlinear {
            assert_eq!(nl.dim, linear.dim, "nonlinear term dimension mismatch");
        }
        Self {
            linear,
            nonlinear,
            settings,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn linear_only(linear: Arc<LinearSystem>, settings: IntegratorSettings) -> Self {
        Self::new(linear, None, settings)
    }

    pub fn dim(&self) -> usize {
        self.linear.dim
    }

    pub fn is_autonomous(&self) -> bool {
        self.linear.autonomous && self.nonlinear.as_ref().map_or(true, |n| n.autonomous)
    }

    fn check_horizon(&self, s: f64, t: f64) -> Result<()> {
        let (lo, hi) = self.linear.horizon;
        let eps = 1e-9;
        if s < lo - eps || s > hi + eps || t < lo - eps || t > hi + eps {
            return Err(Error::InvalidInput(format!(
                "times ({s}, {t}) outside horizon [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    fn rhs_linear(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.linear.coeff_at(t) * x
    }

    fn rhs_full(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let mut v = self.rhs_linear(t, x);
        if let Some(nl) = &self.nonlinear {
            v += nl.eval(t, x);
        }
        v
    }

    fn integrate_transition(&self, from: f64, to: f64) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let id = DMatrix::identity(d, d);
        if from == to {
            return Ok(id);
        }
        rk4_mat(from, to, &id, &self.settings, |t, x| self.linear.coeff_at(t) * x)
    }

    fn cached_half_step(&self, from_half: i64, to_half: i64) -> Result<DMatrix<f64>> {
        debug_assert_eq!((from_half - to_half).abs(), 1);
        if let Some(m) = self.memo.lock().unwrap().get(&(from_half, to_half)) {
            return Ok(m.clone());
        }
        let m = self.integrate_transition(from_half as f64 / 2.0, to_half as f64 / 2.0)?;
        self.memo
            .lock()
            .unwrap()
            .insert((from_half, to_half), m.clone());
        Ok(m)
    }

    /// Solution operator `T(t,s)` of the linear equation.
    ///
    /// Assembled as `T(t, g_last) * [cached half steps] * T(g_first, s)` where
    /// the `g`'s are the half-integer grid nodes between `s` and `t`.
    pub fn transition(&self, s: f64, t: f64) -> Result<DMatrix<f64>> {
        self.check_horizon(s, t)?;
        let d = self.dim();
        if s == t {
            return Ok(DMatrix::identity(d, d));
        }
        let fwd = t > s;
        // First grid node strictly reachable from s toward t (may equal s if on grid).
        let two_s = 2.0 * s;
        let two_t = 2.0 * t;
        let g_first = if fwd { two_s.ceil() as i64 } else { two_s.floor() as i64 };
        let g_last = if fwd { two_t.floor() as i64 } else { two_t.ceil() as i64 };
        let inside = if fwd { g_first <= g_last } else { g_first >= g_last };
        if !inside {
            return self.integrate_transition(s, t);
        }
        let mut m = if (g_first as f64) / 2.0 == s {
            DMatrix::identity(d, d)
        } else {
            self.integrate_transition(s, g_first as f64 / 2.0)?
        };
        let dir = if fwd { 1 } else { -1 };
        let mut g = g_first;
        while g != g_last {
            m = self.cached_half_step(g, g + dir)? * m;
            g += dir;
        }
        if (g_last as f64) / 2.0 != t {
            m = self.integrate_transition(g_last as f64 / 2.0, t)? * m;
        }
        Ok(m)
    }

    /// `T(t,s)` together with its 2-norm condition number.
    pub fn transition_with_cond(&self, s: f64, t: f64) -> Result<(DMatrix<f64>, f64)> {
        let m = self.transition(s, t)?;
        let sv = m.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        Ok((m, cond))
    }

    /// Nonlinear flow `phi(t,s;x)`.
    pub fn flow(&self, s: f64, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_horizon(s, t)?;
        if s == t {
            return Ok(x.clone());
        }
        rk4_vec(s, t, x, &self.settings, |u, y| self.rhs_full(u, y))
    }

    /// Variational flow `D_x phi(t,s;x)` along the orbit of `x`, integrating
    /// the matrix equation `J' = (A(t) + D_x f(t, phi)) J` jointly with the flow.
    pub fn variational_flow(&self, s: f64, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_horizon(s, t)?;
        let d = self.dim();
        if s == t {
            return Ok(DMatrix::identity(d, d));
        }
        // State layout: [x; vec(J)]
        let mut z0 = DVector::zeros(d + d * d);
        z0.rows_mut(0, d).copy_from(x);
        for k in 0..d {
            z0[d + k * d + k] = 1.0;
        }
        let settings = IntegratorSettings {
            // The augmented state contains the Jacobian, whose norm is not an
            // orbit escape; rely on the orbit part for the escape check below.
            escape_radius: f64::INFINITY,
            ..self.settings
        };
        let escape = self.settings.escape_radius;
        let mut escape_hit: Option<(f64, f64)> = None;
        let z = rk4_vec(s, t, &z0, &settings, |u, zv| {
            let xs = DVector::from(zv.rows(0, d).clone_owned());
            let xn = xs.norm();
            if xn > escape && escape_hit.is_none() {
                escape_hit = Some((u, xn));
            }
            let mut a = self.linear.coeff_at(u);
            let fx = if let Some(nl) = &self.nonlinear {
                a += nl.jacobian(u, &xs);
                nl.eval(u, &xs)
            } else {
                DVector::zeros(d)
            };
            let mut out = DVector::zeros(d + d * d);
            out.rows_mut(0, d)
                .copy_from(&(self.linear.coeff_at(u) * &xs + fx));
            let j = DMatrix::from_column_slice(d, d, zv.rows(d, d * d).as_slice());
            let dj = a * j;
            out.rows_mut(d, d * d).copy_from_slice(dj.as_slice());
            out
        })?;
        if let Some((u, norm)) = escape_hit {
            return Err(Error::Escape {
                t: u,
                radius: escape,
                norm,
            });
        }
        Ok(DMatrix::from_column_slice(d, d, z.rows(d, d * d).as_slice()))
    }

    /// One-step maps `A_n = T(n+1, n)` and evaluators for
    /// `f_n(x) = phi(n+1, n; x) - A_n x` over the window.
    pub fn discretize(self: &Arc<Self>, window: IndexWindow) -> Result<Discretization> {
        self.check_horizon(window.lo as f64, window.hi as f64)?;
        let mut mats = Vec::with_capacity(window.steps());
        for n in window.lo..window.hi {
            mats.push(self.transition(n as f64, (n + 1) as f64)?);
        }
        Ok(Discretization {
            window,
            a_mats: mats,
            family: Arc::clone(self),
        })
    }
}

/// Discretized system: cached `A_n` plus `f_n` evaluators sharing the flow
/// code path (so `f_n(x) + A_n x` is the flow by construction).
pub struct Discretization {
    pub window: IndexWindow,
    a_mats: Vec<DMatrix<f64>>,
    pub family: Arc<EvolutionFamily>,
}

impl Discretization {
    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn a(&self, n: i64) -> &DMatrix<f64> {
        assert!(
            n >= self.window.lo && n < self.window.hi,
            "index {n} outside window"
        );
        &self.a_mats[(n - self.window.lo) as usize]
    }

    pub fn a_all(&self) -> &[DMatrix<f64>] {
        &self.a_mats
    }

    /// Unit-step nonlinear map `x -> phi(n+1, n; x)`.
    pub fn step_map(&self, n: i64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.family.flow(n as f64, (n + 1) as f64, x)
    }

    pub fn f(&self, n: i64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.step_map(n, x)? - self.a(n) * x)
    }

    /// `D f_n(x)` via the variational flow.
    pub fn df(&self, n: i64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.family.variational_flow(n as f64, (n + 1) as f64, x)? - self.a(n))
    }
}

/// Derived constants of the discretized nonlinearity, per the Gronwall chain
/// of the unit-interval estimates.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FlowBounds {
    /// `M exp(lambda_bar) exp(M exp(lambda_bar + 2 eps))`, bounding
    /// `|D_x phi(t,n;x)| <= m_tilde exp(eps |n|)` on unit intervals.
    pub m_tilde: f64,
    /// Unit-interval flow Lipschitz constant.
    pub a: f64,
    /// Unit-interval Jacobian Lipschitz constant.
    pub d_lip: f64,
    /// `M m_tilde eta exp(lambda_bar + 2 eps + 1)`.
    pub eta_tilde: f64,
    /// `2 a d_lip exp(lambda_bar + 4 eps) B M m_tilde`.
    pub b_tilde: f64,
}

impl FlowBounds {
    /// Assemble the derived constants from dichotomy constants
    /// `(m, lambda_bar, eps)`, declared nonlinearity constants `(eta, lip_b)`
    /// and fitted unit-interval Lipschitz constants `(a, d_lip)`.
    pub fn from_constants(m: f64, lambda_bar: f64, eps: f64, eta: f64, lip_b: f64, a: f64, d_lip: f64) -> Self {
        let m_tilde = m * lambda_bar.exp() * (m * (lambda_bar + 2.0 * eps).exp()).exp();
        let eta_tilde = m * m_tilde * eta * (lambda_bar + 2.0 * eps + 1.0).exp();
        let b_tilde = 2.0 * a * d_lip * (lambda_bar + 4.0 * eps).exp() * lip_b * m * m_tilde;
        Self {
            m_tilde,
            a,
            d_lip,
            eta_tilde,
            b_tilde,
        }
    }
}

/// Fit the unit-interval Lipschitz constants: `a` such that
/// `|phi(r,n;x) - phi(r,n;y)| <= a exp(eps|n|) |x-y|` and `d_lip` such that
/// `|D_x phi(r,n;x) - D_x phi(r,n;y)| <= d_lip |x-y|`, with 1.05x slack on the
/// measured envelopes.
pub fn fit_flow_lipschitz(
    family: &EvolutionFamily,
    window: IndexWindow,
    radius: f64,
    samples: usize,
    eps: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = family.dim();
    let mut a_max: f64 = 0.0;
    let mut d_max: f64 = 0.0;
    let span = (window.hi - window.lo) as f64;
    for _ in 0..samples {
        let n = window.lo + (rng.random::<f64>() * span).floor() as i64;
        let n = n.clamp(window.lo, window.hi - 1);
        let x = random_ball(&mut rng, d, radius);
        let y = random_ball(&mut rng, d, radius);
        let diff = (&x - &y).norm();
        if diff < 1e-12 {
            continue;
        }
        for &frac in &[0.25, 0.5, 0.75, 1.0] {
            let r = n as f64 + frac;
            let fx = family.flow(n as f64, r, &x)?;
            let fy = family.flow(n as f64, r, &y)?;
            let ratio = (fx - fy).norm() / ((eps * (n as f64).abs()).exp() * diff);
            a_max = a_max.max(ratio);
        }
        let jx = family.variational_flow(n as f64, (n + 1) as f64, &x)?;
        let jy = family.variational_flow(n as f64, (n + 1) as f64, &y)?;
        let jratio = operator_norm(&(jx - jy)) / diff;
        d_max = d_max.max(jratio);
    }
    // the flow bound must hold down to r = n, where the ratio is exactly 1
    Ok((1.05 * a_max.max(1.0), 1.05 * d_max.max(1e-12)))
}

/// Uniform sample from the ball of the given radius.
pub fn random_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    // Gaussian direction, radius scaled for uniform volume.
    let mut v = DVector::zeros(dim);
    loop {
        for k in 0..dim {
            // Box-Muller
            let u1: f64 = rng.random::<f64>().max(1e-15);
            let u2: f64 = rng.random();
            v[k] = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
        if v.norm() > 1e-12 {
            break;
        }
    }
    let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64) * radius;
    v.normalize() * r
}

/// Matrix 2-norm via singular values.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone().svd(false, false).singular_values.max()
}
