//! Low-order finite-difference reference solvers and the energy and weak-form
//! identity checks. Dimension-limited to `N ≤ 2`; speed is not a goal.
//!
//! Fokker–Planck: first-order upwind in `x`, conservative upwind in the
//! `v`-drift, central three-point diffusion, explicit Euler. Outside the box
//! the density is zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{PhaseField, PhaseGrid, SpatialField};
use crate::kernels::PropagatorSpec;
use crate::linfp::LinearProblem;
use crate::taf::TafProblem;

fn blend(series: &[Vec<f64>], n: usize, theta: f64) -> Vec<f64> {
    let a = &series[n.min(series.len() - 1)];
    let b = &series[(n + 1).min(series.len() - 1)];
    if theta == 0.0 || std::ptr::eq(a, b) {
        return a.clone();
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (1.0 - theta) * x + theta * y)
        .collect()
}

/// Coefficients of one stage of the explicit scheme.
struct Frame {
    force: Option<Vec<Vec<f64>>>,
    potential: Option<Vec<f64>>,
    source: Option<Vec<f64>>,
}

fn frame(prob: &LinearProblem, n: usize, theta: f64) -> Frame {
    let force = prob.force.as_ref().map(|f| {
        let a = &f[n.min(f.len() - 1)];
        let b = &f[(n + 1).min(f.len() - 1)];
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                x.iter()
                    .zip(y)
                    .map(|(u, w)| (1.0 - theta) * u + theta * w)
                    .collect()
            })
            .collect()
    });
    let potential = match (prob.potential_values(n), prob.potential_values(n + 1)) {
        (Some(a), Some(b)) => Some(
            a.iter()
                .zip(&b)
                .map(|(x, y)| (1.0 - theta) * x + theta * y)
                .collect(),
        ),
        _ => None,
    };
    let source = prob.source.as_ref().map(|s| blend(s, n, theta));
    Frame {
        force,
        potential,
        source,
    }
}

/// Per-stage contributions to `d/dt Σ p²·dV`, each evaluated from a closed
/// form or a direct pairing.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EnergyTerms {
    pub transport: f64,
    pub drift: f64,
    /// `−2σ Σ|D⁺_v p|²` over all faces, box faces included.
    pub diffusion: f64,
    pub potential: f64,
    pub source: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.transport + self.drift + self.diffusion + self.potential + self.source
    }
}

struct Stencil {
    grid: PhaseGrid,
    k: f64,
    sigma: f64,
}

impl Stencil {
    fn digit_x(&self, ix: usize, a: usize) -> usize {
        (ix / self.grid.x.stride(a)) % self.grid.x.n
    }

    fn digit_v(&self, iv: usize, a: usize) -> usize {
        (iv / self.grid.v.stride(a)) % self.grid.v.n
    }

    /// `L p + f` with its energy decomposition.
    fn rhs(&self, p: &[f64], fr: &Frame) -> (Vec<f64>, EnergyTerms) {
        let g = self.grid;
        let nvt = g.v.len();
        let dim = g.dim();
        let (dx, dv) = (g.x.h(), g.v.h());
        let vol = g.cell_volume();
        let mut out = vec![0.0; p.len()];
        let terms = out
            .par_chunks_mut(nvt)
            .enumerate()
            .map(|(ix, row)| {
                let mut e = EnergyTerms::default();
                let base = ix * nvt;
                for (iv, o) in row.iter_mut().enumerate() {
                    let idx = base + iv;
                    let pc = p[idx];
                    let (mut tr, mut dr, mut df) = (0.0, 0.0, 0.0);
                    for a in 0..dim {
                        let v = g.v.node(self.digit_v(iv, a));
                        // x upwind
                        let i = self.digit_x(ix, a);
                        let sx = g.x.stride(a) * nvt;
                        let up = if v > 0.0 {
                            if i > 0 {
                                p[idx - sx]
                            } else {
                                0.0
                            }
                        } else if i + 1 < g.x.n {
                            p[idx + sx]
                        } else {
                            0.0
                        };
                        tr -= v.abs() * (pc - up) / dx;
                        // conservative v drift and diffusion
                        let j = self.digit_v(iv, a);
                        let sv = g.v.stride(a);
                        let lo = if j > 0 { p[idx - sv] } else { 0.0 };
                        let hi = if j + 1 < g.v.n { p[idx + sv] } else { 0.0 };
                        let fa = fr.force.as_ref().map(|f| f[a][ix]).unwrap_or(0.0);
                        let u_hi = fa - self.k * (v + 0.5 * dv);
                        let u_lo = fa - self.k * (v - 0.5 * dv);
                        let flux_hi = u_hi.max(0.0) * pc + u_hi.min(0.0) * hi;
                        let flux_lo = u_lo.max(0.0) * lo + u_lo.min(0.0) * pc;
                        dr -= (flux_hi - flux_lo) / dv;
                        df += self.sigma * (hi - 2.0 * pc + lo) / (dv * dv);
                        // each interior face once from its lower cell, plus the low box face
                        e.diffusion -= 2.0 * self.sigma * ((hi - pc) / dv).powi(2) * vol;
                        if j == 0 {
                            e.diffusion -= 2.0 * self.sigma * (pc / dv).powi(2) * vol;
                        }
                    }
                    let av = fr.potential.as_ref().map(|a| a[idx]).unwrap_or(0.0);
                    let fv = fr.source.as_ref().map(|f| f[idx]).unwrap_or(0.0);
                    e.transport += 2.0 * pc * tr * vol;
                    e.drift += 2.0 * pc * dr * vol;
                    e.potential -= 2.0 * av * pc * pc * vol;
                    e.source += 2.0 * fv * pc * vol;
                    *o = tr + dr + df - av * pc + fv;
                }
                e
            })
            .reduce(EnergyTerms::default, |a, b| EnergyTerms {
                transport: a.transport + b.transport,
                drift: a.drift + b.drift,
                diffusion: a.diffusion + b.diffusion,
                potential: a.potential + b.potential,
                source: a.source + b.source,
            });
        (out, terms)
    }
}

/// Largest explicit step that keeps every stencil weight nonnegative, and
/// the name of the dominant constraint.
pub fn fd_fp_step_limit(prob: &LinearProblem, spec: &PropagatorSpec) -> (f64, &'static str) {
    let g = prob.p0.grid;
    let nf = g.dim() as f64;
    let vmax = g.v.l;
    let a_pos = prob.potential_sup();
    let rates = [
        ("transport", nf * vmax / g.x.h()),
        ("drift", nf * (prob.force_sup() + spec.k * vmax) / g.v.h()),
        ("diffusion", 2.0 * spec.sigma * nf / g.v.h().powi(2)),
        ("potential", a_pos),
    ];
    let total: f64 = rates.iter().map(|r| r.1).sum();
    let binding = rates
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|r| r.0)
        .unwrap();
    (0.9 / total, binding)
}

#[derive(Debug, Clone)]
pub struct FdRun {
    pub snapshots: Vec<PhaseField>,
    pub substeps: usize,
    pub dt: f64,
    /// `(Σp²dV before, terms, Σp²dV after)` per internal step.
    pub energy: Vec<(f64, EnergyTerms, f64)>,
    pub k: f64,
    pub sigma: f64,
    pub problem: LinearProblem,
}

/// Explicit finite-difference solve of the linear problem, storing `nt + 1`
/// snapshots. `substeps` internal steps per stored step; `None` picks the
/// smallest count satisfying the step limit.
pub fn fd_solve_fp(
    prob: &LinearProblem,
    spec: &PropagatorSpec,
    nt: usize,
    substeps: Option<usize>,
) -> Result<FdRun> {
    let g = prob.p0.grid;
    if g.dim() > 2 {
        return Err(Error::Argument(
            "finite-difference oracle supports N <= 2".into(),
        ));
    }
    if nt == 0 || !(prob.t_final > 0.0) {
        return Err(Error::Argument(
            "need nt >= 1 and a positive horizon".into(),
        ));
    }
    let big_dt = prob.t_final / nt as f64;
    let (limit, binding) = fd_fp_step_limit(prob, spec);
    let substeps = match substeps {
        Some(0) => return Err(Error::Argument("substeps must be >= 1".into())),
        Some(s) => {
            if big_dt / s as f64 > limit {
                return Err(Error::Cfl(format!(
                    "dt = {:.3e} exceeds the {binding} limit {:.3e}",
                    big_dt / s as f64,
                    limit
                )));
            }
            s
        }
        None => (big_dt / limit).ceil().max(1.0) as usize,
    };
    let dt = big_dt / substeps as f64;
    let st = Stencil {
        grid: g,
        k: spec.k,
        sigma: spec.sigma,
    };
    let vol = g.cell_volume();
    let mut p = prob.p0.values.clone();
    let mut run = FdRun {
        snapshots: vec![PhaseField {
            time: 0.0,
            ..prob.p0.clone()
        }],
        substeps,
        dt,
        energy: Vec::with_capacity(nt * substeps),
        k: spec.k,
        sigma: spec.sigma,
        problem: prob.clone(),
    };
    let mut e_now = p.iter().map(|x| x * x).sum::<f64>() * vol;
    for n in 0..nt {
        for s in 0..substeps {
            let fr = frame(prob, n, s as f64 / substeps as f64);
            let (w, terms) = st.rhs(&p, &fr);
            p.par_iter_mut().zip(&w).for_each(|(x, y)| *x += dt * y);
            let e_next = p.iter().map(|x| x * x).sum::<f64>() * vol;
            run.energy.push((e_now, terms, e_next));
            e_now = e_next;
        }
        let snap = PhaseField {
            grid: g,
            values: p.clone(),
            time: (n + 1) as f64 * big_dt,
        };
        if !snap.is_finite() {
            return Err(Error::NonFinite(format!(
                "oracle solution at step {}",
                n + 1
            )));
        }
        run.snapshots.push(snap);
    }
    Ok(run)
}

/// Explicit central-difference heat solve with explicit sink; the exterior
/// is held at the background level.
pub fn fd_solve_heat(
    prob: &TafProblem,
    nt: usize,
    substeps: Option<usize>,
) -> Result<Vec<SpatialField>> {
    let g = prob.c0.grid;
    if nt == 0 || !(prob.t_final > 0.0) {
        return Err(Error::Argument(
            "need nt >= 1 and a positive horizon".into(),
        ));
    }
    if prob.flux.len() != 1 && prob.flux.len() != nt + 1 {
        return Err(Error::Argument(
            "flux series length must be 1 or nt+1".into(),
        ));
    }
    let h = g.h();
    let j_sup = prob.flux.iter().map(|j| j.sup_abs()).fold(0.0, f64::max);
    let limit = 0.9 / (2.0 * prob.d * g.dim as f64 / (h * h) + prob.eta * j_sup);
    let big_dt = prob.t_final / nt as f64;
    let substeps = match substeps {
        Some(0) => return Err(Error::Argument("substeps must be >= 1".into())),
        Some(s) => {
            if big_dt / s as f64 > limit {
                return Err(Error::Cfl(format!(
                    "dt = {:.3e} exceeds the diffusion limit {:.3e}",
                    big_dt / s as f64,
                    limit
                )));
            }
            s
        }
        None => (big_dt / limit).ceil().max(1.0) as usize,
    };
    let dt = big_dt / substeps as f64;
    let bg = prob.background;
    let mut c = prob.c0.values.clone();
    let mut out = vec![prob.c0.clone()];
    for n in 0..nt {
        for s in 0..substeps {
            let theta = s as f64 / substeps as f64;
            let js: Vec<Vec<f64>> = prob.flux.iter().map(|f| f.values.clone()).collect();
            let j = blend(&js, n, theta);
            let prev = c.clone();
            c.par_iter_mut().enumerate().for_each(|(i, ci)| {
                let dg = g.digits(i);
                let mut lap = 0.0;
                for (a, &d) in dg.iter().enumerate().take(g.dim) {
                    let st = g.stride(a);
                    let lo = if d > 0 { prev[i - st] } else { bg };
                    let hi = if d + 1 < g.n { prev[i + st] } else { bg };
                    lap += (hi - 2.0 * prev[i] + lo) / (h * h);
                }
                *ci = prev[i] + dt * (prob.d * lap - prob.eta * prev[i] * j[i]);
            });
        }
        let mut f = prob.c0.clone();
        f.values = c.clone();
        f.time = (n + 1) as f64 * big_dt;
        out.push(f);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub initial_energy: f64,
    /// `Σ_n |E_{n+1} − E_n − Δt·Σ terms| / T`.
    pub discrete_residual_rate: f64,
    /// Largest `|E(t) − E(0) − ∫(Nk E − 2σ‖∇_v p‖² − 2∫ap² + 2∫fp)|`
    /// over stored times, with central `∇_v`.
    pub continuum_residual: f64,
    pub beta: f64,
    pub l2_ceiling: f64,
    pub l2_max: f64,
    pub h1_ceiling: f64,
    pub h1_value: f64,
    pub term_totals: EnergyTerms,
}

impl EnergyReport {
    pub fn ceilings_hold(&self) -> bool {
        self.l2_max <= self.l2_ceiling * (1.0 + 1e-9)
            && self.h1_value <= self.h1_ceiling * (1.0 + 1e-9)
    }
}

fn grad_v_sq(p: &PhaseField) -> f64 {
    let g = p.grid;
    let nvt = g.v.len();
    let dv = g.v.h();
    let mut acc = 0.0;
    for i in 0..p.values.len() {
        let iv = i % nvt;
        for a in 0..g.dim() {
            let sv = g.v.stride(a);
            let j = (iv / sv) % g.v.n;
            let lo = if j > 0 { p.values[i - sv] } else { 0.0 };
            let hi = if j + 1 < g.v.n { p.values[i + sv] } else { 0.0 };
            acc += ((hi - lo) / (2.0 * dv)).powi(2);
        }
    }
    acc * g.cell_volume()
}

/// Energy identity residuals and the L² and `∇_v` ceilings for an oracle run.
pub fn energy_check(run: &FdRun) -> EnergyReport {
    let prob = &run.problem;
    let g = prob.p0.grid;
    let vol = g.cell_volume();
    let t_final = prob.t_final;
    let nf = g.dim() as f64;
    let initial_energy = prob.p0.values.iter().map(|x| x * x).sum::<f64>() * vol;
    let mut disc = 0.0;
    let mut totals = EnergyTerms::default();
    for (e0, t, e1) in &run.energy {
        disc += (e1 - e0 - run.dt * t.total()).abs();
        totals.transport += run.dt * t.transport;
        totals.drift += run.dt * t.drift;
        totals.diffusion += run.dt * t.diffusion;
        totals.potential += run.dt * t.potential;
        totals.source += run.dt * t.source;
    }
    let nt = run.snapshots.len() - 1;
    let big_dt = t_final / nt as f64;
    let mut rate = Vec::with_capacity(nt + 1);
    let mut grads = Vec::with_capacity(nt + 1);
    let mut energies = Vec::with_capacity(nt + 1);
    let mut f_sq = Vec::with_capacity(nt + 1);
    for (n, p) in run.snapshots.iter().enumerate() {
        let e = p.values.iter().map(|x| x * x).sum::<f64>() * vol;
        let gv = grad_v_sq(p);
        let fr = frame(prob, n.min(nt), 0.0);
        let ap: f64 = fr
            .potential
            .as_ref()
            .map(|a| a.iter().zip(&p.values).map(|(a, x)| a * x * x).sum::<f64>() * vol)
            .unwrap_or(0.0);
        let fp: f64 = fr
            .source
            .as_ref()
            .map(|f| f.iter().zip(&p.values).map(|(f, x)| f * x).sum::<f64>() * vol)
            .unwrap_or(0.0);
        f_sq.push(
            fr.source
                .as_ref()
                .map(|f| f.iter().map(|x| x * x).sum::<f64>() * vol)
                .unwrap_or(0.0),
        );
        rate.push(nf * run.k * e - 2.0 * run.sigma * gv - 2.0 * ap + 2.0 * fp);
        grads.push(gv);
        energies.push(e);
    }
    let trap = |v: &[f64], upto: usize| -> f64 {
        (0..upto).map(|i| 0.5 * big_dt * (v[i] + v[i + 1])).sum()
    };
    let continuum_residual = (1..=nt)
        .map(|n| (energies[n] - energies[0] - trap(&rate, n)).abs())
        .fold(0.0, f64::max);
    let a_neg = prob
        .potential_values(0)
        .into_iter()
        .chain((1..=nt).filter_map(|n| prob.potential_values(n)))
        .flatten()
        .fold(0.0_f64, |m, a| m.max(-a));
    let growth = if g.dim() <= 2 {
        2.0 * run.k
    } else {
        nf * run.k
    };
    let beta = growth + 2.0 * a_neg + 1.0;
    let data = initial_energy + trap(&f_sq, nt);
    EnergyReport {
        initial_energy,
        discrete_residual_rate: disc / t_final,
        continuum_residual,
        beta,
        l2_ceiling: data * (beta * t_final).exp(),
        l2_max: energies.iter().cloned().fold(0.0, f64::max),
        h1_ceiling: data * (beta * t_final).exp(),
        h1_value: run.sigma * trap(&grads, nt),
        term_totals: totals,
    }
}

/// Tensor bump `Π(1 − r_i²)³₊` in `(x, v)` times `(1 − t/T)²`.
#[derive(Debug, Clone, Serialize)]
pub struct Bump {
    pub center_x: [f64; 3],
    pub center_v: [f64; 3],
    pub radius_x: f64,
    pub radius_v: f64,
}

fn bump1(z: f64, c: f64, s: f64) -> (f64, f64, f64) {
    let r = (z - c) / s;
    if r.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let w = 1.0 - r * r;
    (
        w.powi(3),
        -6.0 * r * w * w / s,
        (-6.0 * w * w + 24.0 * r * r * w) / (s * s),
    )
}

impl Bump {
    /// `(B, ∇_x B, ∇_v B, Δ_v B)` at one phase point.
    fn eval(&self, x: &[f64], v: &[f64]) -> (f64, [f64; 3], [f64; 3], f64) {
        let n = x.len();
        let mut vals = [(1.0, 0.0, 0.0); 6];
        for a in 0..n {
            vals[a] = bump1(x[a], self.center_x[a], self.radius_x);
            vals[n + a] = bump1(v[a], self.center_v[a], self.radius_v);
        }
        let all: f64 = vals[..2 * n].iter().map(|t| t.0).product();
        let except =
            |i: usize| -> f64 { (0..2 * n).filter(|&j| j != i).map(|j| vals[j].0).product() };
        let mut gx = [0.0; 3];
        let mut gv = [0.0; 3];
        let mut lap = 0.0;
        for a in 0..n {
            gx[a] = vals[a].1 * except(a);
            gv[a] = vals[n + a].1 * except(n + a);
            lap += vals[n + a].2 * except(n + a);
        }
        (all, gx, gv, lap)
    }
}

/// Five bumps placed inside the central half of the box from a fixed seed.
pub fn test_bank(grid: &PhaseGrid, seed: u64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lx, lv) = (grid.x.l, grid.v.l);
    (0..5)
        .map(|_| {
            let mut cx = [0.0; 3];
            let mut cv = [0.0; 3];
            for a in 0..grid.dim() {
                cx[a] = rng.gen_range(-0.25..0.25) * lx;
                cv[a] = rng.gen_range(-0.25..0.25) * lv;
            }
            Bump {
                center_x: cx,
                center_v: cv,
                radius_x: rng.gen_range(0.3..0.6) * lx,
                radius_v: rng.gen_range(0.3..0.6) * lv,
            }
        })
        .collect()
}

/// Weak-form residual of a stored solution of `prob` against each bump:
/// `∫∫∫ p[φ_t + v·∇_xφ + (F − kv)·∇_vφ + σΔ_vφ − aφ] + fφ + ∫∫φ(0)p₀`.
pub fn weak_form_residual(
    series: &[PhaseField],
    prob: &LinearProblem,
    spec: &PropagatorSpec,
    bank: &[Bump],
) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::Argument("need at least two stored times".into()));
    }
    let nt = series.len() - 1;
    let g = prob.p0.grid;
    let t_final = prob.t_final;
    let big_dt = t_final / nt as f64;
    let nvt = g.v.len();
    let dim = g.dim();
    let vol = g.cell_volume();
    let res = bank
        .par_iter()
        .map(|b| {
            let mut total = 0.0;
            for (n, p) in series.iter().enumerate() {
                let t = n as f64 * big_dt;
                let theta = (1.0 - t / t_final).powi(2);
                let dtheta = -2.0 * (1.0 - t / t_final) / t_final;
                let fr = frame(prob, n.min(nt), 0.0);
                let w = if n == 0 || n == nt {
                    0.5 * big_dt
                } else {
                    big_dt
                };
                let mut acc = 0.0;
                for (idx, &pv) in p.values.iter().enumerate() {
                    let (ix, iv) = (idx / nvt, idx % nvt);
                    let x = g.x.coords(ix);
                    let v = g.v.coords(iv);
                    let (bb, gx, gv, lap) = b.eval(&x[..dim], &v[..dim]);
                    if bb == 0.0 && gx.iter().all(|z| *z == 0.0) && gv.iter().all(|z| *z == 0.0) {
                        continue;
                    }
                    let mut op = dtheta * bb + theta * spec.sigma * lap;
                    for a in 0..dim {
                        let fa = fr.force.as_ref().map(|f| f[a][ix]).unwrap_or(0.0);
                        op += theta * (v[a] * gx[a] + (fa - spec.k * v[a]) * gv[a]);
                    }
                    if let Some(a) = &fr.potential {
                        op -= theta * a[idx] * bb;
                    }
                    acc += pv * op;
                    if let Some(f) = &fr.source {
                        acc += f[idx] * theta * bb;
                    }
                }
                total += w * acc * vol;
            }
            let p0 = &series[0];
            let init: f64 = p0
                .values
                .iter()
                .enumerate()
                .map(|(idx, pv)| {
                    let x = g.x.coords(idx / nvt);
                    let v = g.v.coords(idx % nvt);
                    pv * b.eval(&x[..dim], &v[..dim]).0
                })
                .sum::<f64>()
                * vol;
            total + init
        })
        .collect();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldKind;
    use crate::grid::{integrate_phase, SpaceGrid};
    use crate::linfp::{solve_linear, PotentialTerm};
    use crate::params::GridSpec;

    fn grid(n: usize, l: f64) -> PhaseGrid {
        PhaseGrid::new(
            1,
            &GridSpec {
                x_extent: l,
                v_extent: l,
                nx: n,
                nv: n,
                t_final: 0.5,
                nt: 1,
            },
        )
    }

    fn gauss(g: PhaseGrid) -> PhaseField {
        PhaseField::from_fn(g, |x, v| (-(x[0] * x[0]) - v[0] * v[0] / 0.5).exp())
    }

    #[test]
    fn zero_stays_zero_with_zero_energy_residual() {
        let g = grid(16, 4.0);
        let prob = LinearProblem::free(PhaseField::zeros(g), 0.5);
        let run = fd_solve_fp(&prob, &PropagatorSpec::new(1.0, 0.5, 1), 5, None).unwrap();
        assert!(run.snapshots.iter().all(|p| p.sup_abs() == 0.0));
        let e = energy_check(&run);
        assert_eq!(e.discrete_residual_rate, 0.0);
        assert_eq!(e.continuum_residual, 0.0);
    }

    #[test]
    fn cfl_refusal_names_constraint() {
        let g = grid(32, 4.0);
        let prob = LinearProblem::free(gauss(g), 0.5);
        match fd_solve_fp(&prob, &PropagatorSpec::new(1.0, 0.5, 1), 5, Some(1)) {
            Err(Error::Cfl(m)) => assert!(m.contains("limit")),
            other => panic!("expected CFL refusal, got {other:?}"),
        }
    }

    #[test]
    fn matches_propagator_free_flow() {
        let g = grid(64, 4.0);
        let p0 = gauss(g);
        let prob = LinearProblem::free(p0.clone(), 0.5);
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let fd = fd_solve_fp(&prob, &spec, 20, None).unwrap();
        let pr = solve_linear(&prob, &spec, 20).unwrap();
        let m0 = integrate_phase(&p0).unwrap();
        let diff = integrate_phase(&PhaseField {
            values: fd.snapshots[20]
                .sub(&pr[20])
                .values
                .iter()
                .map(|v| v.abs())
                .collect(),
            ..p0
        })
        .unwrap();
        let h = g.x.h();
        assert!(diff <= 5.0 * (2.0 * h * h + 0.5 / 20.0) * m0, "{diff}");
    }

    #[test]
    fn constant_potential_and_sink_mass() {
        let g = grid(32, 4.0);
        let p0 = gauss(g);
        let mut prob = LinearProblem::free(p0.clone(), 0.5);
        prob.potential.push(PotentialTerm::constant(&g, 0.8));
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let run = fd_solve_fp(&prob, &spec, 10, None).unwrap();
        let m0 = integrate_phase(&p0).unwrap();
        let mut prev = m0;
        for p in &run.snapshots[1..] {
            let m = integrate_phase(p).unwrap();
            assert!(m <= prev + 1e-10 * m0);
            assert!(p.min() >= -p.eps_pos());
            prev = m;
        }
        // nearly all mass stays inside, so the mass follows e^{−a₀t}
        let target = m0 * (-0.8 * 0.5_f64).exp();
        assert!((prev - target).abs() < 0.02 * target);
    }

    #[test]
    fn energy_terms_close_identity() {
        let g = grid(32, 4.0);
        let p0 = PhaseField::from_fn(g, |x, v| (-(x[0] * x[0]) / 2.0 - v[0] * v[0]).exp());
        let prob = LinearProblem::free(p0, 0.5);
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let a = energy_check(&fd_solve_fp(&prob, &spec, 10, None).unwrap());
        let b = energy_check(
            &fd_solve_fp(
                &prob,
                &spec,
                10,
                Some(2 * fd_solve_fp(&prob, &spec, 10, None).unwrap().substeps),
            )
            .unwrap(),
        );
        assert!(a.discrete_residual_rate > 0.0);
        let ratio = a.discrete_residual_rate / b.discrete_residual_rate;
        assert!((1.7..2.3).contains(&ratio), "{ratio}");
        assert!(a.ceilings_hold());
        // transport and diffusion only dissipate
        assert!(a.term_totals.transport <= 0.0 && a.term_totals.diffusion <= 0.0);
    }

    #[test]
    fn heat_oracle_constant_and_sink() {
        let g = SpaceGrid::new(1, 16, 2.0);
        let c0 = SpatialField::constant(g, FieldKind::Taf, 0.3);
        let prob = TafProblem {
            c0: c0.clone(),
            flux: vec![SpatialField::zeros(g, FieldKind::FluxJ)],
            d: 0.5,
            eta: 1.0,
            background: 0.3,
            t_final: 0.5,
        };
        let out = fd_solve_heat(&prob, 5, None).unwrap();
        assert!(out
            .iter()
            .all(|c| c.values.iter().all(|v| (v - 0.3).abs() < 1e-15)));
        let sink = TafProblem {
            flux: vec![SpatialField::constant(g, FieldKind::FluxJ, 1.0)],
            ..prob
        };
        let out = fd_solve_heat(&sink, 5, None).unwrap();
        for w in out.windows(2) {
            assert!(w[1].values.iter().zip(&w[0].values).all(|(b, a)| b < a));
        }
        assert!(matches!(
            fd_solve_heat(&sink, 1, Some(1)),
            Err(Error::Cfl(_))
        ));
    }

    #[test]
    fn weak_residual_of_zero_run_vanishes() {
        let g = grid(16, 4.0);
        let prob = LinearProblem::free(PhaseField::zeros(g), 0.5);
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let run = solve_linear(&prob, &spec, 4).unwrap();
        let bank = test_bank(&g, 7);
        assert_eq!(bank.len(), 5);
        let r = weak_form_residual(&run, &prob, &spec, &bank).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bump_derivatives() {
        let b = Bump {
            center_x: [0.1, 0.0, 0.0],
            center_v: [-0.2, 0.0, 0.0],
            radius_x: 1.0,
            radius_v: 0.8,
        };
        let (x, v, h) = (0.3, 0.1, 1e-5);
        let (_, gx, gv, lap) = b.eval(&[x], &[v]);
        let f = |x: f64, v: f64| b.eval(&[x], &[v]).0;
        assert!((gx[0] - (f(x + h, v) - f(x - h, v)) / (2.0 * h)).abs() < 1e-8);
        assert!((gv[0] - (f(x, v + h) - f(x, v - h)) / (2.0 * h)).abs() < 1e-8);
        let fd2 = (f(x, v + 1e-4) - 2.0 * f(x, v) + f(x, v - 1e-4)) / 1e-8;
        assert!((lap - fd2).abs() < 1e-5);
    }
}
