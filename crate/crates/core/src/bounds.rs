//! A-priori ceilings assembled from run data: iterate growth bounds, the
//! weighted-sup Gronwall bound, the moment blow-up horizon and the
//! uniqueness constant `G(T)`.
//!
//! Failures are data. Every ledger keeps its margin, negative or not.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::PhaseField;
use crate::params::{FluxMode, ModelParams};
use crate::picard::SchemeOutcome;
use crate::taf::{heat_gradient_l1_constant, heat_gradient_norm};
use crate::vintegrals::{c_mlpinf, fermi_speed_weight_sup, weighted_sup};

#[derive(Debug, Clone, Serialize)]
pub struct BoundLedger {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// Allowed shortfall as a fraction of `rhs`.
    pub slack: f64,
    pub passed: bool,
    pub empirical: bool,
    pub inputs: Vec<(String, f64)>,
}

impl BoundLedger {
    pub fn new(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        let margin = rhs - lhs;
        BoundLedger {
            name: name.to_string(),
            lhs,
            rhs,
            margin,
            slack,
            passed: margin >= -slack * rhs.abs() - 1e-300,
            empirical: false,
            inputs: Vec::new(),
        }
    }

    pub fn with_inputs(mut self, inputs: &[(&str, f64)]) -> Self {
        self.inputs = inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        self
    }

    pub fn empirical(mut self) -> Self {
        self.empirical = true;
        self
    }
}

/// Worst time of `lhs(t) ≤ rhs(t)` by ratio; `(lhs, rhs)` at that time.
fn worst(lhs: &[f64], rhs: &[f64]) -> (f64, f64) {
    let mut best = (lhs[0], rhs[0]);
    let mut ratio = f64::NEG_INFINITY;
    for (l, r) in lhs.iter().zip(rhs) {
        let q = if *r > 0.0 {
            l / r
        } else if *l > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if q > ratio {
            ratio = q;
            best = (*l, *r);
        }
    }
    best
}

/// Growth coefficient of the energy ceiling: `2k` for `N ≤ 2`, `Nk` above.
pub fn energy_growth(params: &ModelParams) -> f64 {
    if params.dim <= 2 {
        2.0 * params.k
    } else {
        params.dim as f64 * params.k
    }
}

/// Iterate ceilings (mass, sup, `L²`, velocity-gradient energy), each taken
/// at its worst iterate and time. Discretization slack 5%.
pub fn apriori_suite(out: &SchemeOutcome) -> Vec<BoundLedger> {
    let st = &out.state;
    let params = &out.setup.params;
    let p0 = &st.p[0];
    let nf = params.dim as f64;
    let growth = params.alpha1 * out.setup.rho.sup();
    let m0 = p0.values.iter().map(|v| v.abs()).sum::<f64>() * p0.grid.cell_volume();
    let s0 = p0.sup_abs();
    let l2sq0 = p0.values.iter().map(|v| v * v).sum::<f64>() * p0.grid.cell_volume();
    let times = &st.times;
    let mut mass = (0.0, m0);
    let mut sup = (0.0, s0);
    let mut l2 = (0.0, l2sq0.sqrt());
    let mut gv = (0.0, 0.0);
    let mut first = true;
    let better = |cur: (f64, f64), cand: (f64, f64)| {
        let q = |x: (f64, f64)| if x.1 > 0.0 { x.0 / x.1 } else { x.0 };
        if q(cand) > q(cur) {
            cand
        } else {
            cur
        }
    };
    let gv_rhs = l2sq0 * ((energy_growth(params) + 2.0 * growth + 1.0) * out.report.t_final).exp();
    for h in &st.history {
        let rm: Vec<f64> = times.iter().map(|t| m0 * (growth * t).exp()).collect();
        let rs: Vec<f64> = times
            .iter()
            .map(|t| s0 * ((nf * params.k + growth) * t).exp())
            .collect();
        let rl: Vec<f64> = times
            .iter()
            .map(|t| (m0 * s0).sqrt() * (growth * t).exp() * (0.5 * nf * params.k * t).exp())
            .collect();
        let cm = worst(&h.mass, &rm);
        let cs = worst(&h.sup, &rs);
        let cl = worst(&h.l2, &rl);
        if first {
            mass = cm;
            sup = cs;
            l2 = cl;
            gv = (h.grad_v_energy, gv_rhs);
            first = false;
        } else {
            mass = better(mass, cm);
            sup = better(sup, cs);
            l2 = better(l2, cl);
            gv = better(gv, (h.grad_v_energy, gv_rhs));
        }
    }
    let base = [
        ("p0_l1", m0),
        ("p0_sup", s0),
        ("alpha1_rho", growth),
        ("k", params.k),
    ];
    vec![
        BoundLedger::new("iterate-mass-growth", mass.0, mass.1, 0.05).with_inputs(&base),
        BoundLedger::new("iterate-sup-growth", sup.0, sup.1, 0.05).with_inputs(&base),
        BoundLedger::new("iterate-l2-interpolated", l2.0, l2.1, 0.05).with_inputs(&base),
        BoundLedger::new("iterate-velocity-gradient-energy", gv.0, gv.1, 0.05).with_inputs(&[
            ("p0_l2_sq", l2sq0),
            ("alpha1_rho", growth),
            ("sigma", params.sigma),
        ]),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonInputs {
    pub dim: usize,
    pub beta: f64,
    pub k: f64,
    pub sigma: f64,
    pub d: f64,
    pub d1: f64,
    pub eta: f64,
    pub t_final: f64,
    /// `‖|v|^β p₀‖₁`.
    pub moment0: f64,
    /// `‖p‖_{L∞_t L¹}` ceiling.
    pub p_l1: f64,
    /// `‖p‖_{L∞_t L∞}` ceiling.
    pub p_inf: f64,
    /// `‖∇c₀‖_{L^{N+β}}`.
    pub grad_c0_lr: f64,
    pub c0_inf: f64,
    pub alpha1_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentHorizon {
    pub a_beta: f64,
    pub b_beta: f64,
    pub delta: f64,
    pub tau: f64,
    /// `C̃_{N,r,q'}` from the heat-gradient `L^q` norm.
    pub c_heat: f64,
    pub c_nb: f64,
    pub c_tilde_nb: f64,
}

impl MomentHorizon {
    /// `(−B δ t + A^{−δ})^{−1/δ}`; infinite at and past `τ`.
    pub fn envelope(&self, t: f64) -> f64 {
        let base = -self.b_beta * self.delta * t + self.a_beta.powf(-self.delta);
        if base <= 0.0 {
            f64::INFINITY
        } else {
            base.powf(-1.0 / self.delta)
        }
    }
}

/// `τ = (N+β)/(A^{N/(N+β)} B N)`.
pub fn tau_from(a: f64, b: f64, dim: usize, beta: f64) -> f64 {
    let n = dim as f64;
    (n + beta) / (a.powf(n / (n + beta)) * b * n)
}

pub fn moment_horizon(inp: &HorizonInputs) -> Result<MomentHorizon> {
    let n = inp.dim as f64;
    let beta = inp.beta;
    let floor = (n + 2.0).max(n * n - n);
    if !(beta > floor) {
        return Err(Error::Hypothesis(format!(
            "moment order {beta} must exceed {floor}"
        )));
    }
    let norms = [
        inp.moment0,
        inp.p_l1,
        inp.p_inf,
        inp.grad_c0_lr,
        inp.c0_inf,
        inp.alpha1_rho,
    ];
    if norms.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Argument(
            "moment horizon norms must be finite and nonnegative".into(),
        ));
    }
    if !(inp.k > 0.0 && inp.sigma > 0.0 && inp.d > 0.0 && inp.t_final > 0.0) {
        return Err(Error::Argument(
            "moment horizon needs k, sigma, d, T > 0".into(),
        ));
    }
    let t = inp.t_final;
    let c_nb = c_mlpinf(inp.dim, beta, beta - 1.0);
    let c_tilde_nb = c_nb * c_mlpinf(inp.dim, beta, 1.0);
    let q = (n + beta) / beta;
    let e = 0.5 + n * n / (2.0 * (n + beta));
    let c_heat = heat_gradient_norm(inp.d, inp.dim, q) / (1.0 - e);
    let bk = beta * inp.k;
    let a_beta = inp.moment0
        + (bk / 2.0).powf((2.0 - beta) / 2.0)
            * (beta * (beta - 2.0 + n) * inp.sigma).powf(beta / 2.0)
            * t
            * inp.p_l1
        + (bk / 4.0).powf((1.0 - n - beta) / 2.0)
            * (beta * inp.d1 * inp.grad_c0_lr * c_nb).powf(n + beta)
            * t
            * inp.p_inf
        + n * t / (2.0 * n + beta) * inp.alpha1_rho.powf((2.0 * n + beta) / n);
    let b_beta = beta
        * inp.d1
        * inp.eta
        * c_heat
        * inp.c0_inf
        * t.powf(1.0 - e)
        * c_tilde_nb
        * inp.p_inf.powf(beta / (n + beta))
        + 1.0;
    let delta = n / (n + beta);
    let tau = if a_beta > 0.0 {
        tau_from(a_beta, b_beta, inp.dim, beta)
    } else {
        f64::INFINITY
    };
    Ok(MomentHorizon {
        a_beta,
        b_beta,
        delta,
        tau,
        c_heat,
        c_nb,
        c_tilde_nb,
    })
}

fn euclid_sup(components: &[crate::grid::SpatialField]) -> f64 {
    let n = components[0].values.len();
    (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.values[i].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// `‖(1+|v|²)^{β/2} p(t)‖∞ ≤ A′e^{(B′+C′)t}` over the final iterate.
///
/// `C′` replaces the non-constructive flux-driven force constant by the
/// measured excess `βN·(sup_t‖F‖∞ − d₁‖∇c₀‖∞)₊` and is tagged empirical.
pub fn weighted_sup_gronwall(out: &SchemeOutcome, beta: f64) -> Result<BoundLedger> {
    let params = &out.setup.params;
    let n = params.dim as f64;
    let floor = match params.flux_mode {
        FluxMode::Cutoff => n,
        FluxMode::Raw => (n + 1.0).max(n * n - n),
    };
    if !(beta > floor) {
        return Err(Error::Hypothesis(format!(
            "weight exponent {beta} must exceed {floor}"
        )));
    }
    let st = &out.state;
    let a_prime = weighted_sup(&st.p[0], beta);
    let a_neg = params.alpha1 * out.setup.rho.sup();
    let grad0 = euclid_sup(&st.grad_c[0]);
    let b_prime = params.sigma * beta * (beta + 2.0 + n)
        + (n + beta) * params.k
        + a_neg
        + beta * params.d1 * n * grad0;
    let mut f_sup = 0.0_f64;
    for (c, g) in st.c.iter().zip(&st.grad_c) {
        let f = crate::kernels::force_from_c(c, g, params)?;
        f_sup = f_sup.max(euclid_sup(&f));
    }
    let c_prime = beta * n * (f_sup - params.d1 * grad0).max(0.0);
    let lhs: Vec<f64> = st.p.iter().map(|p| weighted_sup(p, beta)).collect();
    let rhs: Vec<f64> = st
        .times
        .iter()
        .map(|t| a_prime * ((b_prime + c_prime) * t).exp())
        .collect();
    let (l, r) = worst(&lhs, &rhs);
    Ok(BoundLedger::new("weighted-sup-gronwall", l, r, 0.05)
        .with_inputs(&[
            ("A'", a_prime),
            ("B'", b_prime),
            ("C'", c_prime),
            ("grad_c0_sup", grad0),
            ("force_sup", f_sup),
        ])
        .empirical())
}

/// `B′` of the weighted-sup bound from its scalar inputs.
pub fn weighted_sup_rate(params: &ModelParams, beta: f64, a_neg: f64, grad_c0_sup: f64) -> f64 {
    let n = params.dim as f64;
    params.sigma * beta * (beta + 2.0 + n)
        + (n + beta) * params.k
        + a_neg
        + beta * params.d1 * n * grad_c0_sup
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessConstants {
    pub a1: f64,
    pub a2: f64,
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub b: f64,
    pub d: f64,
    pub e1: f64,
    pub e2: f64,
    pub e: f64,
    /// `M` in `‖∂K(t)‖₁ ≤ M t^{−1/2}`.
    pub m: f64,
    /// `C(‖j(p₁)‖∞)`, set to 1 (empirical).
    pub c_j: f64,
    pub speed_weight_sup: f64,
    pub g: f64,
    pub inputs: Vec<(String, f64)>,
}

/// `sup_{t,x} ∫ w(v)|h(t,x,v)| dv` for a velocity weight `w`.
fn sup_x_l1_v(series: &[PhaseField], w: impl Fn(&[f64]) -> f64) -> f64 {
    let g = series[0].grid;
    let nvt = g.v.len();
    let wv: Vec<f64> = (0..nvt).map(|iv| w(&g.v.coords(iv)[..g.dim()])).collect();
    series
        .iter()
        .flat_map(|p| {
            p.values
                .chunks(nvt)
                .map(|row| {
                    row.iter().zip(&wv).map(|(a, b)| a.abs() * b).sum::<f64>() * g.v.cell_volume()
                })
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

fn grad_v_magnitude(p: &PhaseField) -> PhaseField {
    let g = p.grid;
    let nvt = g.v.len();
    let dv = g.v.h();
    let mut out = p.clone();
    for (i, o) in out.values.iter_mut().enumerate() {
        let iv = i % nvt;
        let mut s = 0.0;
        for a in 0..g.dim() {
            let sv = g.v.stride(a);
            let j = (iv / sv) % g.v.n;
            let lo = if j > 0 { p.values[i - sv] } else { 0.0 };
            let hi = if j + 1 < g.v.n { p.values[i + sv] } else { 0.0 };
            s += ((hi - lo) / (2.0 * dv)).powi(2);
        }
        *o = s.sqrt();
    }
    out
}

/// Assembles `A, B, D, E` and `G(T)` from two runs sharing parameters.
pub fn uniqueness_constants(
    run1: &SchemeOutcome,
    run2: &SchemeOutcome,
) -> Result<UniquenessConstants> {
    let params = &run1.setup.params;
    if params != &run2.setup.params {
        return Err(Error::Argument(
            "uniqueness constants need runs with identical parameters".into(),
        ));
    }
    let t = run1.report.t_final;
    let rho_sup = run1.setup.rho.sup();
    let s1 = &run1.state;
    let s2 = &run2.state;
    let a_p1 = s1
        .anastomosis
        .iter()
        .map(|a| a.sup_abs())
        .fold(0.0, f64::max);
    let grad_c1 = s1.grad_c.iter().map(|g| euclid_sup(g)).fold(0.0, f64::max);
    let gv2: Vec<PhaseField> = s2.p.iter().map(grad_v_magnitude).collect();
    let dvp2 = sup_x_l1_v(&gv2, |_| 1.0);
    let p2 = sup_x_l1_v(&s2.p, |_| 1.0);
    let c2 = s2.c.iter().map(|c| c.sup_abs()).fold(0.0, f64::max);
    let j1 = s1.j.iter().map(|j| j.sup_abs()).fold(0.0, f64::max);
    let m = heat_gradient_l1_constant(params.d);
    let c_j = 1.0;
    let assemble = |dvp: f64, pp: f64| {
        let a1 = params.gamma * a_p1 + params.alpha1 * rho_sup;
        let a2 = t * params.gamma * pp;
        let b1 = params.d1 * params.q1 * params.gamma1 * grad_c1 * dvp;
        let b2 = params.alpha1 * rho_sup / params.c_r * pp;
        let d = params.d1 * dvp;
        (a1, a2, b1, b2, d)
    };
    let e1 = 2.0 * params.eta * m * c2 * t.sqrt();
    let e2 = c_j * params.eta * t * c2;
    let e = e1 + 2.0 * params.eta * m * t.sqrt() * e2;
    let (a1, a2, b1, b2, d) = assemble(dvp2, p2);
    let (a, b) = (a1 + a2, b1 + b2);
    let mut inputs = vec![
        ("a_p1_sup".to_string(), a_p1),
        ("grad_c1_sup".to_string(), grad_c1),
        ("grad_v_p2_sup_x_l1_v".to_string(), dvp2),
        ("p2_sup_x_l1_v".to_string(), p2),
        ("c2_sup".to_string(), c2),
        ("j_p1_sup".to_string(), j1),
    ];
    let (speed_weight_sup, g) = match params.flux_mode {
        FluxMode::Cutoff => {
            let w = fermi_speed_weight_sup(params);
            (w, a + (b * e2 + d * e) * w)
        }
        FluxMode::Raw => {
            let vdvp2 = {
                let weighted: Vec<PhaseField> = gv2.clone();
                sup_x_l1_v(&weighted, |v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            };
            let vp2 = sup_x_l1_v(&s2.p, |v| v.iter().map(|x| x * x).sum::<f64>().sqrt());
            inputs.push(("speed_grad_v_p2_sup_x_l1_v".to_string(), vdvp2));
            inputs.push(("speed_p2_sup_x_l1_v".to_string(), vp2));
            let (_, ta2, tb1, tb2, td) = assemble(vdvp2, vp2);
            let plain = a + b * e2 + d * e;
            let speed = a + a1 + ta2 + (b + tb1 + tb2) * e2 + (d + td) * e;
            (1.0, plain.max(speed))
        }
    };
    Ok(UniquenessConstants {
        a1,
        a2,
        a,
        b1,
        b2,
        b,
        d,
        e1,
        e2,
        e,
        m,
        c_j,
        speed_weight_sup,
        g,
        inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> HorizonInputs {
        HorizonInputs {
            dim: 1,
            beta: 4.0,
            k: 1.0,
            sigma: 0.5,
            d: 0.5,
            d1: 0.5,
            eta: 1.0,
            t_final: 0.5,
            moment0: 0.3,
            p_l1: 1.2,
            p_inf: 1.5,
            grad_c0_lr: 0.4,
            c0_inf: 0.8,
            alpha1_rho: 1.0,
        }
    }

    #[test]
    fn envelope_starts_at_a_beta_and_blows_up_at_tau() {
        let h = moment_horizon(&inputs()).unwrap();
        assert!((h.envelope(0.0) - h.a_beta).abs() < 1e-12 * h.a_beta);
        assert!(h.envelope(0.999 * h.tau).is_finite());
        assert!(h.envelope(h.tau * 1.0001).is_infinite());
        let mut prev = h.envelope(0.0);
        for i in 1..10 {
            let e = h.envelope(0.09 * i as f64 * h.tau);
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn tau_monotone() {
        let h = moment_horizon(&inputs()).unwrap();
        assert!(tau_from(2.0 * h.a_beta, h.b_beta, 1, 4.0) < h.tau);
        assert!(tau_from(h.a_beta, 2.0 * h.b_beta, 1, 4.0) < h.tau);
        let mut more = inputs();
        more.moment0 *= 3.0;
        assert!(moment_horizon(&more).unwrap().tau < h.tau);
    }

    #[test]
    fn horizon_rejects_bad_input() {
        let mut i = inputs();
        i.beta = 2.5;
        assert!(moment_horizon(&i).is_err());
        let mut i = inputs();
        i.p_inf = -1.0;
        assert!(moment_horizon(&i).is_err());
    }

    #[test]
    fn ledger_margin_kept_when_negative() {
        let l = BoundLedger::new("x", 2.0, 1.0, 0.05);
        assert_eq!(l.margin, -1.0);
        assert!(!l.passed);
        assert!(BoundLedger::new("x", 1.04, 1.0, 0.05).passed);
    }

    #[test]
    fn weighted_rate_linear_in_gradient() {
        let p = ModelParams::default();
        let r0 = weighted_sup_rate(&p, 3.0, 0.0, 0.0);
        let r1 = weighted_sup_rate(&p, 3.0, 0.0, 1.0);
        let r2 = weighted_sup_rate(&p, 3.0, 0.0, 2.0);
        assert!(((r2 - r1) - (r1 - r0)).abs() < 1e-12);
        // free-field reduction
        assert!((r0 - (p.sigma * 3.0 * 6.0 + 4.0 * p.k)).abs() < 1e-12);
    }
}
