//! Built-in system catalog.
//!
//! Each entry builds the linear part, optionally a nonlinear term, and
//! carries ground truth (eigenvalues of the constant matrix) where available
//! for oracle tests. Parameters are validated: unknown keys are rejected.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evolution::{cutoff, cutoff_prime, IndexWindow, LinearSystem, NonlinearTerm};

/// A constructed catalog system, ready to wrap in an evolution family.
pub struct BuiltSystem {
    pub name: String,
    pub dim: usize,
    pub autonomous: bool,
    pub linear: Arc<LinearSystem>,
    pub nonlinear: Option<Arc<NonlinearTerm>>,
    /// Eigenvalues of the constant coefficient matrix, when the entry is
    /// autonomous (ground truth for spectrum and alpha oracles).
    pub eigenvalues: Option<Vec<Complex<f64>>>,
    /// Window over which spectrum estimation is well resolved by default.
    pub default_window: IndexWindow,
    pub default_qr_subwindow: usize,
    /// Default sampling radius for conjugacy-domain operations.
    pub default_domain_radius: f64,
}

pub const NAMES: [&str; 6] = [
    "autonomous_saddle",
    "autonomous_3d",
    "jordan",
    "scalar_quadratic",
    "scalar_nonuniform",
    "thick_spectrum_fail",
];

const HORIZON: (f64, f64) = (-100.0, 100.0);

fn check_params(name: &str, params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidInput(format!(
                "unknown parameter `{key}` for catalog entry `{name}`; allowed: {allowed:?}"
            )));
        }
    }
    Ok(())
}

fn get(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Quadratic-with-cutoff profile `q(x) = x^2 chi(|x|/r0)` and its derivative.
fn quadratic_profile(x: f64, r0: f64) -> f64 {
    x * x * cutoff(x.abs() / r0)
}

fn quadratic_profile_prime(x: f64, r0: f64) -> f64 {
    let u = x.abs() / r0;
    2.0 * x * cutoff(u) + x * x * cutoff_prime(u) * x.signum() / r0
}

/// Numerical sup of `|q'|` and its Lipschitz constant on a fine grid; used to
/// declare (F3)/(F4) constants for the cutoff entries.
fn profile_constants(r0: f64) -> (f64, f64) {
    let n = 4000;
    let mut sup = 0.0f64;
    let mut lip = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let x = -2.5 * r0 + 5.0 * r0 * (i as f64) / (n as f64);
        let d = quadratic_profile_prime(x, r0);
        sup = sup.max(d.abs());
        if let Some((xp, dp)) = prev {
            lip = lip.max((d - dp).abs() / (x - xp));
        }
        prev = Some((x, d));
    }
    (sup, lip)
}

/// Build a catalog entry by name with a parameter map.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<BuiltSystem> {
    match name {
        "autonomous_saddle" => {
            check_params(name, params, &[])?;
            let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
            let mat = a.clone();
            Ok(BuiltSystem {
                name: name.into(),
                dim: 2,
                autonomous: true,
                linear: Arc::new(LinearSystem::analytic(2, HORIZON, true, move |_| mat.clone())),
                nonlinear: None,
                eigenvalues: Some(vec![Complex::new(-1.0, 0.0), Complex::new(1.0, 0.0)]),
                default_window: IndexWindow::new(-50, 50),
                default_qr_subwindow: 20,
                default_domain_radius: 0.1,
            })
        }
        "autonomous_3d" => {
            check_params(name, params, &[])?;
            let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, -1.0, 2.0]));
            let mat = a.clone();
            Ok(BuiltSystem {
                name: name.into(),
                dim: 3,
                autonomous: true,
                linear: Arc::new(LinearSystem::analytic(3, HORIZON, true, move |_| mat.clone())),
                nonlinear: None,
                eigenvalues: Some(vec![
                    Complex::new(-3.0, 0.0),
                    Complex::new(-1.0, 0.0),
                    Complex::new(2.0, 0.0),
                ]),
                default_window: IndexWindow::new(-40, 40),
                default_qr_subwindow: 16,
                default_domain_radius: 0.1,
            })
        }
        "jordan" => {
            check_params(name, params, &[])?;
            let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
            let mat = a.clone();
            Ok(BuiltSystem {
                name: name.into(),
                dim: 2,
                autonomous: true,
                linear: Arc::new(LinearSystem::analytic(2, HORIZON, true, move |_| mat.clone())),
                nonlinear: None,
                eigenvalues: Some(vec![Complex::new(-1.0, 0.0), Complex::new(-1.0, 0.0)]),
                default_window: IndexWindow::new(-50, 50),
                default_qr_subwindow: 20,
                default_domain_radius: 0.1,
            })
        }
        "scalar_quadratic" => {
            check_params(name, params, &["c", "cutoff_radius"])?;
            let c = get(params, "c", 1.0);
            let r0 = get(params, "cutoff_radius", 0.1);
            if r0 <= 0.0 {
                return Err(Error::InvalidInput("cutoff_radius must be positive".into()));
            }
            let lam = 0.5f64; // one-step multiplier
            let a_coeff = lam.ln();
            // Scale so the unit-step map is x/2 + c x^2 + O(x^3) near 0:
            // the time-1 quadratic coefficient of x' = a x + s q(x) is
            // s * lam (lam - 1) / a, hence s = a / (lam^2 - lam) * c.
            let scale = a_coeff / (lam * lam - lam) * c;
            let (sup_dq, lip_dq) = profile_constants(r0);
            let nl = NonlinearTerm::new(
                1,
                true,
                0.0,
                scale.abs() * sup_dq,
                scale.abs() * lip_dq,
                move |_, x: &DVector<f64>| DVector::from_element(1, scale * quadratic_profile(x[0], r0)),
            )
            .with_jacobian(move |_, x: &DVector<f64>| {
                DMatrix::from_element(1, 1, scale * quadratic_profile_prime(x[0], r0))
            });
            Ok(BuiltSystem {
                name: name.into(),
                dim: 1,
                autonomous: true,
                linear: Arc::new(LinearSystem::analytic(1, HORIZON, true, move |_| {
                    DMatrix::from_element(1, 1, a_coeff)
                })),
                nonlinear: Some(Arc::new(nl)),
                eigenvalues: Some(vec![Complex::new(a_coeff, 0.0)]),
                default_window: IndexWindow::new(-50, 50),
                default_qr_subwindow: 20,
                default_domain_radius: (r0 / 2.0).min(0.05),
            })
        }
        "scalar_nonuniform" => {
            check_params(name, params, &["omega", "envelope", "c", "cutoff_radius"])?;
            let omega = get(params, "omega", 1.0);
            let env = get(params, "envelope", 0.05);
            let c = get(params, "c", 0.5);
            let r0 = get(params, "cutoff_radius", 0.1);
            if r0 <= 0.0 {
                return Err(Error::InvalidInput("cutoff_radius must be positive".into()));
            }
            // a(t) = -omega + env (cos t - t sin t); the integral is
            // -omega (t - s) + env (t cos t - s cos s), a nonuniform envelope.
            let lin = LinearSystem::analytic(1, HORIZON, false, move |t| {
                DMatrix::from_element(1, 1, -omega + env * (t.cos() - t * t.sin()))
            });
            let (sup_dq, lip_dq) = profile_constants(r0);
            let eps = env;
            let nl = NonlinearTerm::new(1, false, eps, c * sup_dq, c * lip_dq, move |t, x: &DVector<f64>| {
                let decay = (-4.0 * eps * t.abs()).exp();
                DVector::from_element(1, c * decay * quadratic_profile(x[0], r0))
            })
            .with_jacobian(move |t, x: &DVector<f64>| {
                let decay = (-4.0 * eps * t.abs()).exp();
                DMatrix::from_element(1, 1, c * decay * quadratic_profile_prime(x[0], r0))
            });
            Ok(BuiltSystem {
                name: name.into(),
                dim: 1,
                autonomous: false,
                linear: Arc::new(lin),
                nonlinear: Some(Arc::new(nl)),
                eigenvalues: None,
                default_window: IndexWindow::new(-50, 50),
                default_qr_subwindow: 20,
                default_domain_radius: (r0 / 2.0).min(0.05),
            })
        }
        "thick_spectrum_fail" => {
            check_params(name, params, &["half_period", "steepness"])?;
            let half_period = get(params, "half_period", 20.0);
            let kappa = get(params, "steepness", 4.0);
            // First diagonal entry alternates smoothly between -3 and -0.3 on
            // long plateaus; second entry is a constant unstable direction.
            // Engineered so the stable interval violates the spectral bound.
            let lin = LinearSystem::analytic(2, HORIZON, false, move |t| {
                let wave =
                    (kappa * (std::f64::consts::PI * t / half_period).sin()).tanh() / kappa.tanh();
                let a11 = -1.65 + 1.35 * wave;
                DMatrix::from_diagonal(&DVector::from_vec(vec![a11, 1.0]))
            });
            Ok(BuiltSystem {
                name: name.into(),
                dim: 2,
                autonomous: false,
                linear: Arc::new(lin),
                nonlinear: None,
                eigenvalues: None,
                default_window: IndexWindow::new(-60, 60),
                default_qr_subwindow: 12,
                default_domain_radius: 0.1,
            })
        }
        other => Err(Error::InvalidInput(format!(
            "unknown catalog entry `{other}`; available: {NAMES:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{EvolutionFamily, IntegratorSettings};

    #[test]
    fn all_names_build_with_defaults() {
        for name in NAMES {
            let sys = build(name, &BTreeMap::new()).unwrap();
            assert_eq!(sys.name, name);
            assert!(sys.dim >= 1);
        }
    }

    #[test]
    fn unknown_entry_and_params_rejected() {
        assert!(build("no_such_system", &BTreeMap::new()).is_err());
        let mut params = BTreeMap::new();
        params.insert("bogus".to_string(), 1.0);
        assert!(build("scalar_quadratic", &params).is_err());
    }

    #[test]
    fn scalar_quadratic_unit_step_has_discrete_coefficient_c() {
        // The unit-step map must be x/2 + c x^2 + O(x^3).
        let sys = build("scalar_quadratic", &BTreeMap::new()).unwrap();
        let fam = Arc::new(EvolutionFamily::new(
            sys.linear,
            sys.nonlinear,
            IntegratorSettings::default(),
        ));
        let step = |x: f64| fam.flow(0.0, 1.0, &DVector::from_element(1, x)).unwrap()[0];
        for &x in &[1e-3, 5e-3, 1e-2] {
            // symmetric combination removes the cubic term
            let quad = (step(x) + step(-x)) / (2.0 * x * x);
            assert!((quad - 1.0).abs() < 0.02, "x = {x}: quad = {quad}");
        }
    }

    #[test]
    fn scalar_nonuniform_transition_matches_closed_form() {
        let sys = build("scalar_nonuniform", &BTreeMap::new()).unwrap();
        let fam = EvolutionFamily::linear_only(sys.linear, IntegratorSettings::default());
        let (s, t) = (-3.0f64, 7.0f64);
        let tr = fam.transition(s, t).unwrap()[(0, 0)];
        let integral = -(t - s) + 0.05 * (t * t.cos() - s * s.cos());
        approx::assert_relative_eq!(tr, integral.exp(), max_relative = 1e-8);
    }

    #[test]
    fn thick_entry_plateaus() {
        let sys = build("thick_spectrum_fail", &BTreeMap::new()).unwrap();
        // mid-plateau values approach -0.3 and -3
        let a_pos = sys.linear.coeff_at(10.0)[(0, 0)];
        let a_neg = sys.linear.coeff_at(-10.0)[(0, 0)];
        assert!((a_pos - (-0.3)).abs() < 0.05, "a(10) = {a_pos}");
        assert!((a_neg - (-3.0)).abs() < 0.05, "a(-10) = {a_neg}");
    }
}
