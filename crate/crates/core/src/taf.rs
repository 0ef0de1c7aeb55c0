//! Angiogenic factor: `c_t = dΔc − ηcj`, marched with exact lattice heat
//! steps and an explicit sink.
//!
//! Convolutions run by FFT on a zero-padded periodic extension of the box.
//! The multiplier is `∏ₐ exp(−τ(1 − cos θₐ))`, `τ = 2dΔt/h²`, whose kernel is
//! `e^{−τ}Iₙ(τ)` per axis: nonnegative and mass one, so the discrete flow
//! obeys the maximum principle exactly. Only `c − c_∞` lives on the grid; the
//! constant background is carried analytically.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{lp_norm_slice, FieldKind, SpaceGrid, SpatialField};
use crate::kernels::force_from_c;
use crate::params::ModelParams;
use crate::vintegrals::sphere_area;

#[derive(Debug, Clone)]
pub struct TafProblem {
    /// Total initial concentration, background included.
    pub c0: SpatialField,
    /// Flux `j` per stored time, or a single constant field.
    pub flux: Vec<SpatialField>,
    pub d: f64,
    pub eta: f64,
    pub background: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone)]
pub struct TafSolution {
    pub c: Vec<SpatialField>,
    /// `grad[n][axis]`.
    pub grad: Vec<Vec<SpatialField>>,
    pub background: f64,
}

impl TafSolution {
    pub fn forces(&self, params: &ModelParams) -> Result<Vec<Vec<SpatialField>>> {
        self.c
            .iter()
            .zip(&self.grad)
            .map(|(c, g)| force_from_c(c, g, params))
            .collect()
    }
}

/// Padded periodic box with cached FFT plans.
struct PaddedBox {
    grid: SpaceGrid,
    pad: usize,
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl PaddedBox {
    fn new(grid: SpaceGrid, d: f64, t: f64) -> Self {
        let h = grid.h();
        let pad = (4.0 * (d * t).sqrt() / h).ceil() as usize + 4;
        let size = grid.n + 2 * pad;
        let mut planner = FftPlanner::new();
        PaddedBox {
            grid,
            pad,
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    fn len(&self) -> usize {
        self.size.pow(self.grid.dim as u32)
    }

    fn stride(&self, axis: usize) -> usize {
        self.size.pow((self.grid.dim - 1 - axis) as u32)
    }

    fn padded_index(&self, flat: usize) -> usize {
        let dg = self.grid.digits(flat);
        (0..self.grid.dim)
            .map(|a| (dg[a] + self.pad) * self.stride(a))
            .sum()
    }

    fn embed(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, v) in values.iter().enumerate() {
            out[self.padded_index(i)] = *v;
        }
        out
    }

    fn extract(&self, padded: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| padded[self.padded_index(i)])
            .collect()
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut line = vec![Complex::new(0.0, 0.0); self.size];
        for axis in 0..self.grid.dim {
            let s = self.stride(axis);
            for start in 0..self.len() {
                if !(start / s).is_multiple_of(self.size) {
                    continue;
                }
                for (k, l) in line.iter_mut().enumerate() {
                    *l = buf[start + k * s];
                }
                plan.process(&mut line);
                for (k, l) in line.iter().enumerate() {
                    buf[start + k * s] = *l;
                }
            }
        }
    }

    /// Lattice heat flow for a time `d·t` on a padded array.
    fn heat(&self, padded: &[f64], d: f64, t: f64) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = padded.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        let tau = 2.0 * d * t / self.grid.h().powi(2);
        let sym: Vec<f64> = (0..self.size)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / self.size as f64;
                (-tau * (1.0 - theta.cos())).exp()
            })
            .collect();
        for (i, b) in buf.iter_mut().enumerate() {
            let mut m = 1.0;
            for a in 0..self.grid.dim {
                m *= sym[(i / self.stride(a)) % self.size];
            }
            *b *= m;
        }
        self.transform(&mut buf, true);
        let norm = 1.0 / self.len() as f64;
        buf.iter().map(|c| c.re * norm).collect()
    }

    /// Central differences on the padded array, restricted to the box.
    fn gradient(&self, padded: &[f64]) -> Vec<Vec<f64>> {
        let h = self.grid.h();
        (0..self.grid.dim)
            .map(|a| {
                let s = self.stride(a);
                (0..self.grid.len())
                    .map(|i| {
                        let p = self.padded_index(i);
                        (padded[p + s] - padded[p - s]) / (2.0 * h)
                    })
                    .collect()
            })
            .collect()
    }
}

fn field(grid: SpaceGrid, values: Vec<f64>, kind: FieldKind, time: f64) -> SpatialField {
    SpatialField {
        grid,
        values,
        kind,
        time,
    }
}

/// Time-marched Duhamel solution; returns `nt + 1` snapshots of `c` and `∇c`.
pub fn solve_taf(prob: &TafProblem, nt: usize) -> Result<TafSolution> {
    let grid = prob.c0.grid;
    if nt == 0 || !(prob.t_final > 0.0) || !(prob.d > 0.0) {
        return Err(Error::Argument(
            "need nt >= 1, a positive horizon and d > 0".into(),
        ));
    }
    if prob.flux.len() != 1 && prob.flux.len() != nt + 1 {
        return Err(Error::Argument(
            "flux series length must be 1 or nt+1".into(),
        ));
    }
    let slack = 1e-10 * prob.c0.sup_abs();
    if prob.c0.values.iter().any(|&c| c < -slack) || prob.background < 0.0 {
        return Err(Error::Hypothesis(
            "initial concentration must be nonnegative".into(),
        ));
    }
    let mut j_sup = 0.0_f64;
    for j in &prob.flux {
        let js = j.sup_abs();
        if j.values
            .iter()
            .any(|&v| v < -1e-10 * js.max(f64::MIN_POSITIVE))
        {
            return Err(Error::Argument("flux must be nonnegative".into()));
        }
        j_sup = j_sup.max(js);
    }
    let dt = prob.t_final / nt as f64;
    if prob.eta * j_sup * dt > 1.0 {
        return Err(Error::Cfl(format!(
            "explicit sink needs eta*|j|*dt <= 1, got {:.3}",
            prob.eta * j_sup * dt
        )));
    }
    let pb = PaddedBox::new(grid, prob.d, prob.t_final);
    let bg = prob.background;
    let dev: Vec<f64> = prob.c0.values.iter().map(|c| c - bg).collect();
    let mut padded = pb.embed(&dev);
    let mut out = TafSolution {
        c: vec![field(grid, prob.c0.values.clone(), FieldKind::Taf, 0.0)],
        grad: vec![pb
            .gradient(&padded)
            .into_iter()
            .map(|g| field(grid, g, FieldKind::GradTafComponent, 0.0))
            .collect()],
        background: bg,
    };
    for n in 0..nt {
        let j = &prob.flux[n.min(prob.flux.len() - 1)];
        let c_now = &out.c[n].values;
        // deviation of c(1 − ηΔt j) from the background
        let mut sink = padded.clone();
        for (i, (c, jv)) in c_now.iter().zip(&j.values).enumerate() {
            sink[pb.padded_index(i)] -= prob.eta * dt * c * jv;
        }
        padded = pb.heat(&sink, prob.d, dt);
        let t = (n + 1) as f64 * dt;
        let c: Vec<f64> = pb.extract(&padded).into_iter().map(|v| v + bg).collect();
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("concentration at step {}", n + 1)));
        }
        out.c.push(field(grid, c, FieldKind::Taf, t));
        out.grad.push(
            pb.gradient(&padded)
                .into_iter()
                .map(|g| field(grid, g, FieldKind::GradTafComponent, t))
                .collect(),
        );
    }
    Ok(out)
}

/// Central-difference `∇c₀` with the exterior held at the background, as
/// used by the solver at `t = 0`.
pub fn initial_gradient(
    c0: &SpatialField,
    background: f64,
    d: f64,
    t: f64,
) -> Result<Vec<SpatialField>> {
    let pb = PaddedBox::new(c0.grid, d, t);
    let dev: Vec<f64> = c0.values.iter().map(|c| c - background).collect();
    Ok(pb
        .gradient(&pb.embed(&dev))
        .into_iter()
        .map(|g| field(c0.grid, g, FieldKind::GradTafComponent, 0.0))
        .collect())
}

/// `c̃ = c − 𝒞`, with `𝒞` the sink-free heat flow of the same data.
pub fn split_tilde(prob: &TafProblem, sol: &TafSolution) -> Result<Vec<SpatialField>> {
    let heat_only = TafProblem {
        eta: 0.0,
        ..prob.clone()
    };
    let nt = sol.c.len() - 1;
    let big_c = solve_taf(&heat_only, nt)?;
    Ok(sol
        .c
        .iter()
        .zip(&big_c.c)
        .map(|(c, h)| {
            field(
                c.grid,
                c.values.iter().zip(&h.values).map(|(a, b)| a - b).collect(),
                FieldKind::Generic,
                c.time,
            )
        })
        .collect())
}

/// `‖|∇K(1)|‖_{q'}` for the heat kernel with diffusivity `d`, by radial
/// quadrature (`q' = 1` gives the L¹ norm).
pub fn heat_gradient_norm(d: f64, dim: usize, qprime: f64) -> f64 {
    let n = 20000;
    let rmax = 40.0 * d.sqrt();
    let h = rmax / n as f64;
    let nf = dim as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let r = (i as f64 + 0.5) * h;
        let k = (4.0 * std::f64::consts::PI * d).powf(-0.5 * nf) * (-r * r / (4.0 * d)).exp();
        let g = r / (2.0 * d) * k;
        acc += r.powf(nf - 1.0) * g.powf(qprime) * h;
    }
    (sphere_area(dim) * acc).powf(1.0 / qprime)
}

/// `M` in `‖∂ᵢK(t)‖₁ = M t^{−1/2}`; exactly `1/√(πd)` for every `N`.
pub fn heat_gradient_l1_constant(d: f64) -> f64 {
    1.0 / (std::f64::consts::PI * d).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct GradBoundSample {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradBoundVerdict {
    pub q: f64,
    /// `C` in `‖F(t)‖∞ − d₁‖∇c₀‖∞ ≤ C t^{e}‖j‖`.
    pub constant: f64,
    pub exponent: f64,
    pub j_norm: f64,
    pub fitted_exponent: Option<f64>,
    pub samples: Vec<GradBoundSample>,
    pub passed: bool,
}

fn euclid_sup(components: &[SpatialField]) -> f64 {
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

/// Checks the force growth bound on a finished run.
pub fn grad_bound_check(
    sol: &TafSolution,
    prob: &TafProblem,
    params: &ModelParams,
    q: f64,
) -> Result<GradBoundVerdict> {
    let dim = prob.c0.grid.dim;
    let nf = dim as f64;
    if !(q > nf) {
        return Err(Error::Argument(format!("need q > N, got q = {q}")));
    }
    let qprime = if q.is_infinite() { 1.0 } else { q / (q - 1.0) };
    let e = 0.5 + nf / (2.0 * q);
    let c_nq = heat_gradient_norm(prob.d, dim, qprime) / (1.0 - e);
    let constant = params.d1 * prob.eta * prob.c0.sup_abs() * c_nq;
    let exponent = 1.0 - e;
    let j_norm = prob
        .flux
        .iter()
        .map(|j| lp_norm_slice(&j.values, j.grid.cell_volume(), q).unwrap_or(f64::NAN))
        .fold(0.0, f64::max);
    let f0 = params.d1 * euclid_sup(&sol.grad[0]);
    let forces = sol.forces(params)?;
    let mut samples = Vec::new();
    let mut passed = true;
    for (c, f) in sol.c.iter().zip(&forces).skip(1) {
        let lhs = euclid_sup(f) - f0;
        let rhs = constant * c.time.powf(exponent) * j_norm;
        passed &= lhs <= rhs + 1e-12 * f0.max(1e-300) + 1e-14;
        samples.push(GradBoundSample {
            t: c.time,
            lhs,
            rhs,
        });
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.lhs > 0.0)
        .map(|s| (s.t.ln(), s.lhs.ln()))
        .collect();
    let fitted_exponent = (pts.len() >= 2).then(|| slope(&pts));
    Ok(GradBoundVerdict {
        q,
        constant,
        exponent,
        j_norm,
        fitted_exponent,
        samples,
        passed,
    })
}

/// Least-squares slope of `y` on `x`.
pub fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(grid: SpaceGrid, amp: f64) -> SpatialField {
        SpatialField::from_fn(grid, FieldKind::Taf, |x| {
            amp * (-x.iter().map(|a| a * a).sum::<f64>()).exp()
        })
    }

    fn problem(c0: SpatialField, j: SpatialField, eta: f64, bg: f64) -> TafProblem {
        TafProblem {
            c0,
            flux: vec![j],
            d: 0.5,
            eta,
            background: bg,
            t_final: 0.5,
        }
    }

    #[test]
    fn constant_data_is_steady() {
        let g = SpaceGrid::new(2, 12, 3.0);
        let c0 = SpatialField::constant(g, FieldKind::Taf, 0.7);
        let j = SpatialField::zeros(g, FieldKind::FluxJ);
        let sol = solve_taf(&problem(c0, j, 1.0, 0.7), 10).unwrap();
        for c in &sol.c {
            assert!(c.values.iter().all(|v| (v - 0.7).abs() < 1e-14));
        }
    }

    #[test]
    fn heat_flow_conserves_and_matches_exact_kernel_variance() {
        let g = SpaceGrid::new(1, 64, 8.0);
        let c0 = gauss(g, 1.0);
        let j = SpatialField::zeros(g, FieldKind::FluxJ);
        let sol = solve_taf(&problem(c0.clone(), j, 0.0, 0.0), 20).unwrap();
        let last = sol.c.last().unwrap();
        assert!((last.integral() - c0.integral()).abs() < 1e-12);
        // exp(−x²) spreads to variance 1/2 + 2dt
        let var: f64 = last
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| g.node(i).powi(2) * v)
            .sum::<f64>()
            * g.h()
            / last.integral();
        assert!((var - (0.5 + 2.0 * 0.5 * 0.5)).abs() < 1e-3);
    }

    #[test]
    fn sink_keeps_maximum_principle_and_split_bound() {
        let g = SpaceGrid::new(1, 48, 6.0);
        let c0 = gauss(g, 2.0);
        let j = SpatialField::from_fn(g, FieldKind::FluxJ, |x| 1.5 * (-(x[0] - 0.5).powi(2)).exp());
        let prob = problem(c0.clone(), j.clone(), 1.0, 0.0);
        let sol = solve_taf(&prob, 25).unwrap();
        let cmax = c0.sup_abs();
        for c in &sol.c {
            assert!(c.min() >= -1e-10 * cmax && c.max() <= cmax * (1.0 + 1e-12));
        }
        let tilde = split_tilde(&prob, &sol).unwrap();
        assert!(tilde[0].values.iter().all(|v| *v == 0.0));
        let jl2 = lp_norm_slice(&j.values, g.h(), 2.0).unwrap();
        for ct in &tilde[1..] {
            let lhs = lp_norm_slice(&ct.values, g.h(), 2.0).unwrap();
            assert!(lhs <= prob.eta * ct.time * cmax * jl2 * 1.1);
        }
        // a larger sink gives a smaller concentration
        let more = problem(
            c0,
            SpatialField {
                values: j.values.iter().map(|v| 2.0 * v).collect(),
                ..j
            },
            1.0,
            0.0,
        );
        let sol2 = solve_taf(&more, 25).unwrap();
        for (a, b) in sol.c.iter().zip(&sol2.c) {
            assert!(a
                .values
                .iter()
                .zip(&b.values)
                .all(|(x, y)| y <= &(x + 1e-14)));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let g = SpaceGrid::new(1, 8, 2.0);
        let c0 = gauss(g, 1.0);
        let mut j = SpatialField::constant(g, FieldKind::FluxJ, 100.0);
        assert!(matches!(
            solve_taf(&problem(c0.clone(), j.clone(), 1.0, 0.0), 2),
            Err(Error::Cfl(_))
        ));
        j.values[0] = -1.0;
        assert!(solve_taf(&problem(c0, j, 1.0, 0.0), 200).is_err());
    }

    #[test]
    fn gradient_l1_constant() {
        for d in [0.3, 1.0] {
            let num = heat_gradient_norm(d, 1, 1.0);
            assert!((num - heat_gradient_l1_constant(d)).abs() < 1e-6);
        }
    }

    #[test]
    fn grad_bound_without_sink_and_with_step_flux() {
        let params = ModelParams::default();
        let g = SpaceGrid::new(1, 128, 8.0);
        // no flux: the force never exceeds its initial sup
        let c0 = gauss(g, 1.0);
        let prob = problem(c0, SpatialField::zeros(g, FieldKind::FluxJ), 1.0, 0.0);
        let sol = solve_taf(&prob, 20).unwrap();
        let v = grad_bound_check(&sol, &prob, &params, f64::INFINITY).unwrap();
        assert!(v.passed && v.samples.iter().all(|s| s.lhs <= 1e-12));
        assert!(grad_bound_check(&sol, &prob, &params, 1.0).is_err());
    }
}
