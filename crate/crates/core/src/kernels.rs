//! Closed-form kernels and the model's pointwise nonlinearities.
//!
//! The field-free kernel `G(t,x,v;τ,ξ,ν)` is the transition density of
//! `dX = V dt, dV = −kV dt + √(2σ) dW`. Per axis, with `s = t − τ` and
//! `e = exp(−ks)`, the image of `(ξ, ν)` is Gaussian with mean
//! `(ξ + ν(1−e)/k, νe)` and covariance
//!
//! ```text
//! Var V   = σ(1 − e²)/k
//! Cov X,V = σ(1 − e)²/k²
//! Var X   = σ(2ks − 3 + 4e − e²)/k³
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldKind, SpatialField};
use crate::params::ModelParams;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalStrategy {
    /// Literal closed form in terms of `e^{ks}`.
    ClosedForm,
    /// Gaussian from the exact Langevin mean and covariance.
    #[default]
    OuCovariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorSpec {
    pub k: f64,
    pub sigma: f64,
    pub dim: usize,
    pub strategy: EvalStrategy,
}

impl PropagatorSpec {
    pub fn new(k: f64, sigma: f64, dim: usize) -> Self {
        PropagatorSpec {
            k,
            sigma,
            dim,
            strategy: EvalStrategy::OuCovariance,
        }
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Self::new(p.k, p.sigma, p.dim)
    }

    pub fn with_strategy(mut self, s: EvalStrategy) -> Self {
        self.strategy = s;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.k > 0.0 && self.sigma > 0.0) {
            return Err(Error::Argument(
                "propagator needs k > 0 and sigma > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-axis moments of the Langevin transition over a lag `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuMoments {
    /// `exp(−ks)`, the velocity contraction.
    pub e: f64,
    /// `(1 − e)/k`, the displacement per unit initial velocity.
    pub b: f64,
    pub var_x: f64,
    pub cov: f64,
    pub var_v: f64,
}

impl OuMoments {
    pub fn new(k: f64, sigma: f64, s: f64) -> Self {
        let u = k * s;
        let e = (-u).exp();
        let one_minus_e = -(-u).exp_m1();
        OuMoments {
            e,
            b: one_minus_e / k,
            var_x: sigma * position_factor(u) / k.powi(3),
            cov: sigma * one_minus_e * one_minus_e / (k * k),
            var_v: -sigma * (-2.0 * u).exp_m1() / k,
        }
    }

    pub fn det(&self) -> f64 {
        self.var_x * self.var_v - self.cov * self.cov
    }

    /// Conditional variance of the position given the velocity.
    pub fn var_x_given_v(&self) -> f64 {
        (self.det() / self.var_v).max(0.0)
    }
}

/// `2u − 3 + 4e^{−u} − e^{−2u}`, by series where the closed form cancels.
fn position_factor(u: f64) -> f64 {
    if u > 0.5 {
        return 2.0 * u - 3.0 + 4.0 * (-u).exp() - (-2.0 * u).exp();
    }
    // Σ_{n≥3} (−1)^n (4 − 2^n) uⁿ / n!
    let mut sum = 0.0;
    let mut term = u * u / 2.0; // u^n/n! at n = 2
    let mut pow2 = 4.0;
    for n in 3..40 {
        term *= u / n as f64;
        pow2 *= 2.0;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * (4.0 - pow2) * term;
        if term * pow2 < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn log_g_ou(s: f64, x: &[f64], v: &[f64], xi: &[f64], nu: &[f64], spec: &PropagatorSpec) -> f64 {
    let m = OuMoments::new(spec.k, spec.sigma, s);
    let det = m.det();
    let mut log = 0.0;
    for a in 0..spec.dim {
        let dx = x[a] - xi[a] - m.b * nu[a];
        let dv = v[a] - m.e * nu[a];
        let q = (m.var_v * dx * dx - 2.0 * m.cov * dx * dv + m.var_x * dv * dv) / det;
        log += -LN_2PI - 0.5 * det.ln() - 0.5 * q;
    }
    log
}

fn log_g_closed(s: f64, x: &[f64], v: &[f64], xi: &[f64], nu: &[f64], spec: &PropagatorSpec) -> f64 {
    let (k, sigma) = (spec.k, spec.sigma);
    let u = k * s;
    let e1 = u.exp_m1();
    let e2 = (2.0 * u).exp_m1();
    let big_e = u.exp();
    let den = e2 / (2.0 * k) * s - e1 * e1 / (k * k);
    let inner = e2 / (2.0 * k) - e1 * e1 / (k * k * s);
    let pre = k.ln() + u - (4.0 * std::f64::consts::PI * sigma).ln() - 0.5 * den.ln();
    let mut log = spec.dim as f64 * pre;
    for a in 0..spec.dim {
        let r = x[a] - xi[a];
        let w = v[a] - nu[a];
        let t1 = k * r + w;
        let t2 = (e1 / s) * (r + w / k) + (nu[a] - v[a] * big_e);
        log -= t1 * t1 / (4.0 * sigma * s) + t2 * t2 / (4.0 * sigma * inner);
    }
    log
}

/// Natural log of `G(t, x, v; τ, ξ, ν)`.
pub fn log_eval_g(
    t: f64,
    x: &[f64],
    v: &[f64],
    tau: f64,
    xi: &[f64],
    nu: &[f64],
    spec: &PropagatorSpec,
) -> Result<f64> {
    spec.check()?;
    if !(t > tau) {
        return Err(Error::Argument(format!(
            "kernel needs t > tau, got t={t}, tau={tau}"
        )));
    }
    let s = t - tau;
    Ok(match spec.strategy {
        EvalStrategy::OuCovariance => log_g_ou(s, x, v, xi, nu, spec),
        EvalStrategy::ClosedForm => log_g_closed(s, x, v, xi, nu, spec),
    })
}

pub fn eval_g(
    t: f64,
    x: &[f64],
    v: &[f64],
    tau: f64,
    xi: &[f64],
    nu: &[f64],
    spec: &PropagatorSpec,
) -> Result<f64> {
    log_eval_g(t, x, v, tau, xi, nu, spec).map(f64::exp)
}

/// `(4πdt)^{−N/2} exp(−|x|²/(4dt))`.
pub fn eval_heat_kernel(t: f64, x: &[f64], d_coef: f64, dim: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Argument(format!("heat kernel needs t > 0, got {t}")));
    }
    let r2: f64 = x[..dim].iter().map(|a| a * a).sum();
    let dt = d_coef * t;
    let log = -0.5 * dim as f64 * (4.0 * std::f64::consts::PI * dt).ln() - r2 / (4.0 * dt);
    Ok(log.exp())
}

/// Gradient of the heat kernel, written into `out[..dim]`.
pub fn heat_kernel_gradient(
    t: f64,
    x: &[f64],
    d_coef: f64,
    dim: usize,
    out: &mut [f64],
) -> Result<()> {
    let k = eval_heat_kernel(t, x, d_coef, dim)?;
    for a in 0..dim {
        out[a] = -x[a] / (2.0 * d_coef * t) * k;
    }
    Ok(())
}

/// `α(c) = α₁ (c/c_R)/(1 + c/c_R)`.
pub fn alpha_of_c(c: f64, p: &ModelParams) -> Result<f64> {
    if c < 0.0 || c.is_nan() {
        return Err(Error::Argument(format!("concentration {c} is negative")));
    }
    let r = c / p.c_r;
    Ok(p.alpha1 * r / (1.0 + r))
}

/// `1/(1 + exp(δ(|v|² − v_max²)))`.
pub fn fermi_weight(speed: f64, p: &ModelParams) -> f64 {
    let z = p.delta * (speed * speed - p.v_max * p.v_max);
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Componentwise `d₁(1 + γ₁c)^{−q₁} ∂ᵢc`.
pub fn force_from_c(
    c: &SpatialField,
    grad_c: &[SpatialField],
    p: &ModelParams,
) -> Result<Vec<SpatialField>> {
    let slack = 1e-10 * c.sup_abs().max(f64::MIN_POSITIVE);
    if c.values.iter().any(|&v| v < -slack || v.is_nan()) {
        return Err(Error::Argument(
            "negative concentration in force evaluation".into(),
        ));
    }
    let factor: Vec<f64> = c
        .values
        .iter()
        .map(|&cv| p.d1 * (1.0 + p.gamma1 * cv.max(0.0)).powf(-p.q1))
        .collect();
    Ok(grad_c
        .iter()
        .map(|g| SpatialField {
            grid: g.grid,
            values: g.values.iter().zip(&factor).map(|(a, f)| a * f).collect(),
            kind: FieldKind::ForceComponent,
            time: g.time,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSpec {
    pub center: [f64; 3],
    pub width: f64,
    pub amplitude: f64,
}

impl RhoSpec {
    /// Isotropic Gaussian of width `0.3·v_max` centred at `(v_max/2, 0, …)`.
    pub fn default_for(p: &ModelParams) -> Self {
        RhoSpec {
            center: [0.5 * p.v_max, 0.0, 0.0],
            width: 0.3 * p.v_max,
            amplitude: 1.0,
        }
    }

    pub fn sup(&self) -> f64 {
        self.amplitude
    }
}

pub fn rho_eval(v: &[f64], spec: &RhoSpec) -> f64 {
    let r2: f64 = v
        .iter()
        .zip(&spec.center)
        .map(|(a, c)| (a - c) * (a - c))
        .sum();
    spec.amplitude * (-r2 / (2.0 * spec.width * spec.width)).exp()
}

/// Weights `e^{−τ} I_n(τ)`, `n = −m..=m`, of the lattice random walk with
/// variance `τ` (in cell units). Positive, unit sum, exact variance up to
/// the truncated tails.
pub fn discrete_gaussian_weights(tau: f64) -> Vec<f64> {
    if tau <= 0.0 {
        return vec![1.0];
    }
    let m = (8.0 * tau.sqrt() + 10.0).ceil() as usize;
    let mut w = vec![0.0; 2 * m + 1];
    if tau > 400.0 {
        for (i, out) in w.iter_mut().enumerate() {
            let n = i as f64 - m as f64;
            *out = (-n * n / (2.0 * tau)).exp();
        }
    } else {
        let half = tau / 2.0;
        let mut ln_fact = vec![0.0; m + 1];
        for n in 1..=m {
            ln_fact[n] = ln_fact[n - 1] + (n as f64).ln();
        }
        for n in 0..=m {
            // series for I_n relative to its leading term
            let lead = n as f64 * half.ln() - ln_fact[n] - tau;
            let mut term = 1.0;
            let mut sum = 1.0;
            let mut j = 0.0;
            loop {
                j += 1.0;
                term *= half * half / (j * (j + n as f64));
                sum += term;
                if term < 1e-17 * sum {
                    break;
                }
            }
            let val = (lead + sum.ln()).exp();
            w[m + n] = val;
            w[m - n] = val;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1(k: f64, sigma: f64) -> PropagatorSpec {
        PropagatorSpec::new(k, sigma, 1)
    }

    #[test]
    fn strategies_agree() {
        let pts = [
            (0.7, 1.3, 0.5, [0.1], [0.4], [0.2], [-0.3]),
            (2.0, 0.4, 1.5, [1.0], [-0.5], [0.3], [0.2]),
            (0.3, 2.0, 0.2, [-0.2], [0.1], [0.0], [0.0]),
        ];
        for (k, s, lag, x, v, xi, nu) in pts {
            let a = eval_g(lag, &x, &v, 0.0, &xi, &nu, &spec1(k, s)).unwrap();
            let b = eval_g(
                lag,
                &x,
                &v,
                0.0,
                &xi,
                &nu,
                &spec1(k, s).with_strategy(EvalStrategy::ClosedForm),
            )
            .unwrap();
            assert!(((a - b) / a).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn kernel_rejects_reversed_times() {
        let s = spec1(1.0, 1.0);
        assert!(eval_g(0.5, &[0.0], &[0.0], 0.5, &[0.0], &[0.0], &s).is_err());
        assert!(eval_heat_kernel(0.0, &[0.0], 1.0, 1).is_err());
    }

    #[test]
    fn position_factor_series_matches_closed_form() {
        for u in [0.3f64, 0.45, 0.5] {
            let closed = 2.0 * u - 3.0 + 4.0 * (-u).exp() - (-2.0 * u).exp();
            assert!((position_factor(u) - closed).abs() < 1e-14);
        }
        // leading behaviour 2u³/3
        let u = 1e-4;
        assert!((position_factor(u) / (2.0 * u * u * u / 3.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn alpha_values() {
        let p = ModelParams::default();
        assert_eq!(alpha_of_c(0.0, &p).unwrap(), 0.0);
        assert!((alpha_of_c(p.c_r, &p).unwrap() - p.alpha1 / 2.0).abs() < 1e-15);
        assert!((alpha_of_c(1e6 * p.c_r, &p).unwrap() - p.alpha1).abs() < 1e-5 * p.alpha1);
        assert!(alpha_of_c(-1.0, &p).is_err());
    }

    #[test]
    fn fermi_values() {
        let mut p = ModelParams::default();
        assert!((fermi_weight(p.v_max, &p) - 0.5).abs() < 1e-15);
        let at0 = 1.0 / (1.0 + (-p.delta * p.v_max * p.v_max).exp());
        assert!((fermi_weight(0.0, &p) - at0).abs() < 1e-15);
        p.delta = 40.0 / (p.v_max * p.v_max);
        assert!(fermi_weight(1.2 * p.v_max, &p) < 1e-6);
    }

    #[test]
    fn rho_peak_and_symmetry() {
        let p = ModelParams {
            dim: 2,
            ..Default::default()
        };
        let r = RhoSpec::default_for(&p);
        assert_eq!(rho_eval(&[r.center[0], 0.0], &r), r.sup());
        let w = [0.3, -0.2];
        let a = rho_eval(&[r.center[0] + w[0], w[1]], &r);
        let b = rho_eval(&[r.center[0] - w[0], -w[1]], &r);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn discrete_gaussian_moments() {
        for tau in [0.0, 1e-3, 0.3, 2.0, 37.0, 900.0] {
            let w = discrete_gaussian_weights(tau);
            let m = (w.len() / 2) as f64;
            let sum: f64 = w.iter().sum();
            let var: f64 = w
                .iter()
                .enumerate()
                .map(|(i, x)| (i as f64 - m).powi(2) * x)
                .sum();
            assert!((sum - 1.0).abs() < 1e-14);
            assert!((var - tau).abs() < 1e-9 * (1.0 + tau), "tau {tau}: {var}");
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }
}
