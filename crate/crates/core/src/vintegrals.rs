//! Velocity reductions of a phase density and the velocity-decay
//! inequalities they satisfy.

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{lp_norm_slice, FieldKind, PhaseField, SpatialField};
use crate::kernels::fermi_weight;
use crate::params::{FluxMode, ModelParams};

fn speeds(p: &PhaseField) -> Vec<f64> {
    let g = p.grid.v;
    (0..g.len())
        .map(|iv| {
            let v = g.coords(iv);
            v[..g.dim].iter().map(|a| a * a).sum::<f64>().sqrt()
        })
        .collect()
}

/// `∫ w(v) p(x, v) dv` for a velocity weight sampled on the v-grid.
pub fn weighted_reduction(p: &PhaseField, weight: &[f64], kind: FieldKind) -> SpatialField {
    let nvt = p.grid.v.len();
    let dv = p.grid.v.cell_volume();
    let values = p
        .values
        .par_chunks(nvt)
        .map(|row| row.iter().zip(weight).map(|(a, w)| a * w).sum::<f64>() * dv)
        .collect();
    SpatialField {
        grid: p.grid.x,
        values,
        kind,
        time: p.time,
    }
}

/// `p̃(x) = ∫ p dv`.
pub fn marginal(p: &PhaseField) -> SpatialField {
    let ones = vec![1.0; p.grid.v.len()];
    weighted_reduction(p, &ones, FieldKind::Marginal)
}

/// Velocity weight of the flux: `|v|·g(|v|)` or `|v|` by flux mode.
pub fn flux_weight(p: &PhaseField, params: &ModelParams) -> Vec<f64> {
    speeds(p)
        .into_iter()
        .map(|s| match params.flux_mode {
            FluxMode::Cutoff => s * fermi_weight(s, params),
            FluxMode::Raw => s,
        })
        .collect()
}

/// `‖|v|g‖_{L∞}` over all speeds; infinite for the raw flux.
pub fn fermi_speed_weight_sup(params: &ModelParams) -> f64 {
    if params.flux_mode == FluxMode::Raw {
        return f64::INFINITY;
    }
    // s·g(s) peaks before v_max + a few widths 1/δ
    let smax = params.v_max + 40.0 / (params.delta * params.v_max.max(1e-3));
    let n = 200_000;
    (0..=n)
        .map(|i| {
            let s = smax * i as f64 / n as f64;
            s * fermi_weight(s, params)
        })
        .fold(0.0, f64::max)
}

pub fn flux_j(p: &PhaseField, params: &ModelParams) -> SpatialField {
    weighted_reduction(p, &flux_weight(p, params), FieldKind::FluxJ)
}

/// Componentwise `∫ vᵢ g(|v|) p dv`.
pub fn vector_flux(p: &PhaseField, params: &ModelParams) -> Vec<SpatialField> {
    let g = p.grid.v;
    (0..g.dim)
        .map(|a| {
            let w: Vec<f64> = (0..g.len())
                .map(|iv| {
                    let v = g.coords(iv);
                    let s = v[..g.dim].iter().map(|c| c * c).sum::<f64>().sqrt();
                    let cut = match params.flux_mode {
                        FluxMode::Cutoff => fermi_weight(s, params),
                        FluxMode::Raw => 1.0,
                    };
                    v[a] * cut
                })
                .collect();
            weighted_reduction(p, &w, FieldKind::Generic)
        })
        .collect()
}

/// `∫ |v|^l p dv` on the x-grid.
pub fn speed_moment_field(p: &PhaseField, l: f64) -> SpatialField {
    let w: Vec<f64> = speeds(p).into_iter().map(|s| s.powf(l)).collect();
    weighted_reduction(p, &w, FieldKind::Generic)
}

/// `∫∫ |v|^β p dx dv`.
pub fn moment(p: &PhaseField, beta: f64) -> f64 {
    if beta == 0.0 {
        return p.values.iter().sum::<f64>() * p.grid.cell_volume();
    }
    speed_moment_field(p, beta).integral()
}

/// `‖(1 + |v|²)^{β/2} p‖∞`.
pub fn weighted_sup(p: &PhaseField, beta: f64) -> f64 {
    let w: Vec<f64> = speeds(p)
        .into_iter()
        .map(|s| (1.0 + s * s).powf(0.5 * beta))
        .collect();
    let nvt = p.grid.v.len();
    p.values
        .par_chunks(nvt)
        .map(|row| {
            row.iter()
                .zip(&w)
                .fold(0.0_f64, |m, (a, b)| m.max((a * b).abs()))
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentReport {
    pub beta: f64,
    pub m_beta: f64,
    pub weighted_sup: f64,
    pub marginal_sup: f64,
    pub speed_marginal_sup: f64,
}

pub fn moment_report(p: &PhaseField, beta: f64) -> MomentReport {
    MomentReport {
        beta,
        m_beta: moment(p, beta),
        weighted_sup: weighted_sup(p, beta),
        marginal_sup: marginal(p).sup_abs(),
        speed_marginal_sup: speed_moment_field(p, 1.0).sup_abs(),
    }
}

/// Surface measure of the unit sphere in `ℝᴺ`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => f64::NAN,
    }
}

/// `min_R (a R^m + b R^{−n}) = K a^{n/(m+n)} b^{m/(m+n)}`; returns `K`.
pub fn split_constant(m: f64, n: f64) -> f64 {
    let s = m + n;
    (n / m).powf(m / s) + (m / n).powf(n / s)
}

/// Constant of the `L^{(N+β)/(N+ℓ)}` bound on `∫|v|^ℓ p dv`.
pub fn c_mlpinf(n: usize, beta: f64, l: f64) -> f64 {
    let nf = n as f64;
    split_constant(nf + l, beta - l) * (sphere_area(n) / (nf + l)).powf((beta - l) / (nf + beta))
}

/// Constant of the sup bound on `∫|v| p dv`.
pub fn c_vinf(n: usize, beta: f64) -> f64 {
    let (m, k) = (n as f64 + 1.0, beta - n as f64 - 1.0);
    let s = sphere_area(n);
    split_constant(m, k) * (s / m).powf(k / beta) * (s / k).powf(m / beta)
}

/// Constant of the sup bound on `∫ p dv`.
pub fn c_inf(n: usize, beta: f64) -> f64 {
    let (m, k) = (n as f64, beta - n as f64);
    let s = sphere_area(n);
    split_constant(m, k) * (s / m).powf(k / beta) * (s / k).powf(m / beta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub passed: bool,
    pub skipped: Option<String>,
}

impl InequalityCheck {
    pub fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        // roundoff allowance only
        let passed = lhs <= rhs * (1.0 + 1e-12) + 1e-300;
        InequalityCheck {
            name: name.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            passed,
            skipped: None,
        }
    }

    fn skip(name: &str, why: String) -> Self {
        InequalityCheck {
            name: name.into(),
            lhs: 0.0,
            rhs: 0.0,
            margin: 0.0,
            passed: true,
            skipped: Some(why),
        }
    }
}

/// Pointwise `|𝐣| ≤ N ∫|v| g p dv`, reported at the worst point.
pub fn check_vector_flux(p: &PhaseField, params: &ModelParams) -> InequalityCheck {
    let jv = vector_flux(p, params);
    let j = flux_j(p, params);
    let n = p.grid.dim() as f64;
    let mut worst = InequalityCheck::new("vector-flux", 0.0, 0.0);
    let mut worst_gap = f64::INFINITY;
    for i in 0..j.values.len() {
        let lhs = jv.iter().map(|c| c.values[i].powi(2)).sum::<f64>().sqrt();
        let rhs = n * j.values[i];
        if rhs - lhs < worst_gap {
            worst_gap = rhs - lhs;
            worst = InequalityCheck::new("vector-flux", lhs, rhs);
        }
    }
    worst
}

/// All velocity-decay inequalities at order `beta` for a nonnegative `p`.
pub fn decay_inequality_suite(
    p: &PhaseField,
    beta: f64,
    params: &ModelParams,
) -> Vec<InequalityCheck> {
    let n = p.grid.dim();
    let nf = n as f64;
    let mut out = vec![check_vector_flux(p, params)];
    let l1 = moment(p, 0.0);
    let mb = moment(p, beta);
    let psup = p.sup_abs();
    let ysup = weighted_sup(p, beta);

    for l in [1.0, 0.5 * beta] {
        let name = format!("moment-interpolation(l={l})");
        if !(beta > l && l > 0.0) {
            out.push(InequalityCheck::skip(
                &name,
                format!("needs beta > {l} > 0"),
            ));
            continue;
        }
        let rhs = l1.powf(1.0 - l / beta) * mb.powf(l / beta);
        out.push(InequalityCheck::new(&name, moment(p, l), rhs));
    }

    for l in [1.0, beta - 1.0] {
        let name = format!("moment-density-lq(l={l})");
        if !(beta > l && l > 0.0) {
            out.push(InequalityCheck::skip(
                &name,
                format!("needs beta > {l} > 0"),
            ));
            continue;
        }
        let q = (nf + beta) / (nf + l);
        let h = speed_moment_field(p, l);
        let lhs = lp_norm_slice(&h.values, h.grid.cell_volume(), q).unwrap_or(f64::NAN);
        let rhs = c_mlpinf(n, beta, l)
            * psup.powf((beta - l) / (nf + beta))
            * mb.powf((nf + l) / (nf + beta));
        out.push(InequalityCheck::new(&name, lhs, rhs));
    }

    if beta > nf + 1.0 {
        let lhs = speed_moment_field(p, 1.0).sup_abs();
        let rhs =
            c_vinf(n, beta) * psup.powf(1.0 - (nf + 1.0) / beta) * ysup.powf((nf + 1.0) / beta);
        out.push(InequalityCheck::new("speed-density-sup", lhs, rhs));
    } else {
        out.push(InequalityCheck::skip(
            "speed-density-sup",
            format!("needs beta > {}", nf + 1.0),
        ));
    }

    if beta > nf {
        let lhs = marginal(p).sup_abs();
        let rhs = c_inf(n, beta) * psup.powf(1.0 - nf / beta) * ysup.powf(nf / beta);
        out.push(InequalityCheck::new("marginal-sup", lhs, rhs));
    } else {
        out.push(InequalityCheck::skip(
            "marginal-sup",
            format!("needs beta > {nf}"),
        ));
    }

    if beta > 1.0 {
        let lhs = weighted_sup(p, beta - 1.0);
        let rhs = psup.powf(1.0 / beta) * ysup.powf(1.0 - 1.0 / beta);
        out.push(InequalityCheck::new("weighted-sup-interpolation", lhs, rhs));
    } else {
        out.push(InequalityCheck::skip(
            "weighted-sup-interpolation",
            "needs beta > 1".into(),
        ));
    }
    out
}

/// `‖j‖₁ ≤ ‖|v|g‖∞‖p‖₁` and `‖j‖∞ ≤ ‖|v|g‖₁‖p‖∞`.
pub fn flux_norm_checks(p: &PhaseField, params: &ModelParams) -> Vec<InequalityCheck> {
    let w = flux_weight(p, params);
    let j = flux_j(p, params);
    let w_sup = w.iter().fold(0.0_f64, |m, x| m.max(*x));
    let w_l1: f64 = w.iter().sum::<f64>() * p.grid.v.cell_volume();
    let p1 = p.values.iter().map(|x| x.abs()).sum::<f64>() * p.grid.cell_volume();
    vec![
        InequalityCheck::new(
            "flux-l1",
            j.values.iter().sum::<f64>() * j.grid.cell_volume(),
            w_sup * p1,
        ),
        InequalityCheck::new("flux-sup", j.sup_abs(), w_l1 * p.sup_abs()),
    ]
}
