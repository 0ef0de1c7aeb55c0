//! Linear Fokker–Planck problem with force `F(t,x)`, potential `a` and
//! source `f`, solved by time-stepped Duhamel with exact free sub-steps.
//!
//! One free step of lag `s` acts on each `(x_a, v_a)` plane as the exact
//! change of variables behind the Gaussian kernel: pull back through the
//! inverse mean map, multiply by the Jacobian `e^{ks}`, then average over the
//! Gaussian noise. The velocity dilation is a cell-average remap and the
//! shear a per-row linear shift, so the pull-back conserves mass; all weights
//! are nonnegative, so positivity and the sup growth `e^{Nks}` hold exactly
//! on the grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{PhaseField, PhaseGrid};
use crate::kernels::{discrete_gaussian_weights, eval_g, OuMoments, PropagatorSpec};

/// Pull-back and noise stencils for one lag on one axis pair.
#[derive(Debug, Clone)]
struct AxisStep {
    shear: f64,
    /// Per target velocity cell, `(source cell, weight)` of the dilation
    /// remap; weights sum to `e^{ks}` away from the box edge.
    v_remap: Vec<Vec<(usize, f64)>>,
    v_half: isize,
    /// Per velocity offset `b`, the x-stencil `(offset, weight)` with the
    /// velocity weight folded in.
    stencils: Vec<Vec<(isize, f64)>>,
}

impl AxisStep {
    fn new(spec: &PropagatorSpec, grid: &PhaseGrid, s: f64) -> Self {
        let m = OuMoments::new(spec.k, spec.sigma, s);
        let (dx, dv) = (grid.x.h(), grid.v.h());
        let vw = discrete_gaussian_weights(m.var_v / (dv * dv));
        let xw = discrete_gaussian_weights(m.var_x_given_v() / (dx * dx));
        let v_half = (vw.len() / 2) as isize;
        let x_half = (xw.len() / 2) as isize;
        let slope = m.cov / m.var_v;
        let stencils = vw
            .iter()
            .enumerate()
            .map(|(bi, &wb)| {
                let b = bi as isize - v_half;
                let theta = slope * b as f64 * dv / dx;
                let mut st = Vec::with_capacity(2 * xw.len());
                for (ai, &wa) in xw.iter().enumerate() {
                    let delta = (ai as isize - x_half) as f64 + theta;
                    let o = delta.floor();
                    let fr = delta - o;
                    st.push((o as isize, wb * wa * (1.0 - fr)));
                    if fr > 0.0 {
                        st.push((o as isize + 1, wb * wa * fr));
                    }
                }
                st
            })
            .collect();
        AxisStep {
            shear: (spec.k * s).exp_m1() / spec.k,
            v_remap: dilation_remap(grid.v.n, (spec.k * s).exp()),
            v_half,
            stencils,
        }
    }
}

/// Overlaps of the preimage cells `e·[v_j − h/2, v_j + h/2]` with the source
/// cells, in cell units on a grid symmetric about zero.
fn dilation_remap(n: usize, e: f64) -> Vec<Vec<(usize, f64)>> {
    let half = n as f64 / 2.0;
    (0..n)
        .map(|j| {
            let lo = e * (j as f64 - half) + half;
            let hi = e * (j as f64 + 1.0 - half) + half;
            let first = lo.floor().max(0.0) as usize;
            let last = (hi.ceil().min(n as f64) as usize).max(first);
            (first..last)
                .filter_map(|i| {
                    let w = hi.min(i as f64 + 1.0) - lo.max(i as f64);
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Plane geometry of one axis inside the flat phase index.
#[derive(Clone, Copy)]
struct Plane {
    sx: usize,
    sv: usize,
    nx: usize,
    nv: usize,
}

impl Plane {
    fn new(grid: &PhaseGrid, axis: usize) -> Self {
        Plane {
            sx: grid.x.stride(axis) * grid.v.len(),
            sv: grid.v.stride(axis),
            nx: grid.x.n,
            nv: grid.v.n,
        }
    }

    /// Plane origin and in-plane indices of a flat index.
    fn split(&self, flat: usize) -> (usize, usize, usize) {
        let i = (flat / self.sx) % self.nx;
        let j = (flat / self.sv) % self.nv;
        (flat - i * self.sx - j * self.sv, i, j)
    }
}

/// The exact free flow over a fixed lag, reusable across time steps.
#[derive(Debug, Clone)]
pub struct FreeStep {
    grid: PhaseGrid,
    step: AxisStep,
    pub lag: f64,
}

impl FreeStep {
    pub fn new(spec: &PropagatorSpec, grid: PhaseGrid, lag: f64) -> Result<Self> {
        if !(lag > 0.0) {
            return Err(Error::Argument(format!(
                "propagation lag must be > 0, got {lag}"
            )));
        }
        if !(spec.k > 0.0 && spec.sigma > 0.0) {
            return Err(Error::Argument(
                "propagator needs k > 0 and sigma > 0".into(),
            ));
        }
        if spec.dim != grid.dim() {
            return Err(Error::Argument(
                "propagator and grid dimensions differ".into(),
            ));
        }
        Ok(FreeStep {
            grid,
            step: AxisStep::new(spec, &grid, lag),
            lag,
        })
    }

    pub fn apply(&self, values: &mut [f64]) {
        let mut scratch = vec![0.0; values.len()];
        for axis in 0..self.grid.dim() {
            self.pull_back(axis, values, &mut scratch);
            self.smooth(axis, &scratch, values);
        }
    }

    fn pull_back(&self, axis: usize, input: &[f64], out: &mut [f64]) {
        let pl = Plane::new(&self.grid, axis);
        let (gx, gv) = (self.grid.x, self.grid.v);
        let st = &self.step;
        out.par_iter_mut().enumerate().for_each(|(flat, o)| {
            let (base, i, j) = pl.split(flat);
            let xq = gx.node(i) - st.shear * gv.node(j);
            let fi = (xq + gx.l) / gx.h() - 0.5;
            let i0 = fi.floor();
            let tx = fi - i0;
            let i0 = i0 as isize;
            let mut acc = 0.0;
            for (di, wx) in [(0, 1.0 - tx), (1, tx)] {
                let ii = i0 + di;
                if ii < 0 || ii >= pl.nx as isize || wx == 0.0 {
                    continue;
                }
                let row = base + ii as usize * pl.sx;
                let inner: f64 = st.v_remap[j]
                    .iter()
                    .map(|&(jj, wv)| wv * input[row + jj * pl.sv])
                    .sum();
                acc += wx * inner;
            }
            *o = acc;
        });
    }

    fn smooth(&self, axis: usize, input: &[f64], out: &mut [f64]) {
        let pl = Plane::new(&self.grid, axis);
        let st = &self.step;
        out.par_iter_mut().enumerate().for_each(|(flat, o)| {
            let (base, i, j) = pl.split(flat);
            let mut acc = 0.0;
            for (bi, stencil) in st.stencils.iter().enumerate() {
                let jj = j as isize - (bi as isize - st.v_half);
                if jj < 0 || jj >= pl.nv as isize {
                    continue;
                }
                let row = base + jj as usize * pl.sv;
                for &(off, w) in stencil {
                    let ii = i as isize - off;
                    if ii >= 0 && ii < pl.nx as isize {
                        acc += w * input[row + ii as usize * pl.sx];
                    }
                }
            }
            *o = acc;
        });
    }
}

/// Free propagation of `p0` over a lag `t` in a single exact step.
pub fn propagate_free(p0: &PhaseField, t: f64, spec: &PropagatorSpec) -> Result<PhaseField> {
    let step = FreeStep::new(spec, p0.grid, t)?;
    let mut out = p0.clone();
    step.apply(&mut out.values);
    out.time = p0.time + t;
    Ok(out)
}

/// Reference application of `G` by direct phase-space quadrature; quadratic
/// cost, only meant for small one-dimensional grids and large lags.
pub fn propagate_free_quadrature(
    p0: &PhaseField,
    t: f64,
    spec: &PropagatorSpec,
) -> Result<PhaseField> {
    if !(t > 0.0) {
        return Err(Error::Argument(format!(
            "propagation lag must be > 0, got {t}"
        )));
    }
    let g = p0.grid;
    let n = g.dim();
    let nvt = g.v.len();
    let w = g.cell_volume();
    let src: Vec<(usize, f64)> = p0
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    let values = (0..g.len())
        .into_par_iter()
        .map(|flat| {
            let x = g.x.coords(flat / nvt);
            let v = g.v.coords(flat % nvt);
            src.iter()
                .map(|&(s, val)| {
                    let xi = g.x.coords(s / nvt);
                    let nu = g.v.coords(s % nvt);
                    eval_g(t, &x[..n], &v[..n], 0.0, &xi[..n], &nu[..n], spec).unwrap_or(0.0) * val
                })
                .sum::<f64>()
                * w
        })
        .collect();
    Ok(PhaseField {
        grid: g,
        values,
        time: p0.time + t,
    })
}

/// One additive piece of the potential: `spatial(t,x)·velocity(v)`, or just
/// `spatial(t,x)` when no velocity profile is given.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTerm {
    /// One x-grid array per stored time, or a single array for a
    /// time-independent term.
    pub spatial: Vec<Vec<f64>>,
    pub velocity: Option<Vec<f64>>,
}

impl PotentialTerm {
    pub fn constant(grid: &PhaseGrid, a0: f64) -> Self {
        PotentialTerm {
            spatial: vec![vec![a0; grid.x.len()]],
            velocity: None,
        }
    }

    fn at(&self, n: usize) -> &[f64] {
        &self.spatial[n.min(self.spatial.len() - 1)]
    }

    fn sup(&self) -> f64 {
        let s = self
            .spatial
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let v = self
            .velocity
            .as_ref()
            .map(|w| w.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .unwrap_or(1.0);
        s * v
    }
}

#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub p0: PhaseField,
    /// `force[n][axis]` on the x-grid; a single entry means constant in time.
    pub force: Option<Vec<Vec<Vec<f64>>>>,
    pub potential: Vec<PotentialTerm>,
    /// Source on the phase grid per stored time (or a single constant one).
    pub source: Option<Vec<Vec<f64>>>,
    pub t_final: f64,
    pub series_lmax: usize,
    pub series_tol: f64,
}

impl LinearProblem {
    pub fn free(p0: PhaseField, t_final: f64) -> Self {
        LinearProblem {
            p0,
            force: None,
            potential: Vec::new(),
            source: None,
            t_final,
            series_lmax: 20,
            series_tol: 1e-10,
        }
    }

    /// Upper bound on `‖a‖∞` over the horizon.
    pub fn potential_sup(&self) -> f64 {
        self.potential.iter().map(|t| t.sup()).sum()
    }

    pub fn force_sup(&self) -> f64 {
        self.force
            .as_ref()
            .map(|f| {
                f.iter()
                    .flatten()
                    .flatten()
                    .fold(0.0_f64, |m, v| m.max(v.abs()))
            })
            .unwrap_or(0.0)
    }

    /// `a(t_n, x, v)` on the phase grid.
    pub fn potential_values(&self, n: usize) -> Option<Vec<f64>> {
        if self.potential.is_empty() {
            return None;
        }
        let g = self.p0.grid;
        let nvt = g.v.len();
        let mut out = vec![0.0; g.len()];
        for term in &self.potential {
            let sp = term.at(n);
            out.par_chunks_mut(nvt).enumerate().for_each(|(ix, row)| {
                let a = sp[ix];
                match &term.velocity {
                    Some(w) => row.iter_mut().zip(w).for_each(|(o, wv)| *o += a * wv),
                    None => row.iter_mut().for_each(|o| *o += a),
                }
            });
        }
        Some(out)
    }

    fn source_at(&self, n: usize) -> Option<&[f64]> {
        self.source
            .as_ref()
            .map(|s| s[n.min(s.len() - 1)].as_slice())
    }

    fn force_at(&self, n: usize) -> Option<&Vec<Vec<f64>>> {
        self.force.as_ref().map(|f| &f[n.min(f.len() - 1)])
    }

    fn check(&self, nt: usize) -> Result<()> {
        if nt == 0 || !(self.t_final > 0.0) {
            return Err(Error::Argument(
                "need nt >= 1 and a positive horizon".into(),
            ));
        }
        if !self.p0.is_finite() {
            return Err(Error::NonFinite("initial datum".into()));
        }
        let len_ok = |l: usize| l == 1 || l == nt + 1;
        if let Some(f) = &self.force {
            if !len_ok(f.len()) {
                return Err(Error::Argument(
                    "force series length must be 1 or nt+1".into(),
                ));
            }
        }
        if let Some(f) = &self.source {
            if !len_ok(f.len()) {
                return Err(Error::Argument(
                    "source series length must be 1 or nt+1".into(),
                ));
            }
        }
        for t in &self.potential {
            if !len_ok(t.spatial.len()) {
                return Err(Error::Argument(
                    "potential series length must be 1 or nt+1".into(),
                ));
            }
        }
        let bound = series_truncation_bound(self.potential_sup(), self.t_final, self.series_lmax);
        if bound > self.series_tol {
            return Err(Error::SeriesTruncation {
                bound,
                tol: self.series_tol,
                lmax: self.series_lmax,
            });
        }
        Ok(())
    }
}

/// `‖a‖∞^{l+1} T^{l+1}/(l+1)!`.
pub fn series_truncation_bound(a_sup: f64, t: f64, l: usize) -> f64 {
    if a_sup == 0.0 {
        return 0.0;
    }
    let x = a_sup * t;
    let mut out = 1.0;
    for i in 1..=(l + 1) {
        out *= x / i as f64;
    }
    out
}

/// Shift every velocity row by `F(x)·dt` along each axis (linear
/// interpolation of the translated profile, which conserves mass and sign).
fn drift(values: &mut [f64], grid: &PhaseGrid, force: &[Vec<f64>], dt: f64) {
    let nvt = grid.v.len();
    let dv = grid.v.h();
    let nv = grid.v.n;
    for (axis, fa) in force.iter().enumerate() {
        let sv = grid.v.stride(axis);
        let input = values.to_vec();
        values
            .par_chunks_mut(nvt)
            .zip(input.par_chunks(nvt))
            .enumerate()
            .for_each(|(ix, (row, src))| {
                let delta = fa[ix] * dt / dv;
                if delta == 0.0 {
                    return;
                }
                let o = delta.floor();
                let fr = delta - o;
                let o = o as isize;
                for (iv, out) in row.iter_mut().enumerate() {
                    let j = ((iv / sv) % nv) as isize;
                    let base = iv - j as usize * sv;
                    let mut acc = 0.0;
                    for (jj, w) in [(j - o, 1.0 - fr), (j - o - 1, fr)] {
                        if w != 0.0 && jj >= 0 && jj < nv as isize {
                            acc += w * src[base + jj as usize * sv];
                        }
                    }
                    *out = acc;
                }
            });
    }
}

/// Time-stepped Duhamel solution, returning `nt + 1` snapshots.
///
/// Per step: half the source, the exact free flow, the force drift at the
/// mid-step, the integrating factor `exp(−Δt·ā)`, the other half source.
pub fn solve_linear(
    prob: &LinearProblem,
    spec: &PropagatorSpec,
    nt: usize,
) -> Result<Vec<PhaseField>> {
    prob.check(nt)?;
    let dt = prob.t_final / nt as f64;
    let grid = prob.p0.grid;
    let free = FreeStep::new(spec, grid, dt)?;
    let mut out = Vec::with_capacity(nt + 1);
    let mut cur = prob.p0.clone();
    cur.time = 0.0;
    out.push(cur.clone());
    let mut a_prev = prob.potential_values(0);
    for n in 0..nt {
        let mut q = cur.values;
        if let Some(f) = prob.source_at(n) {
            q.par_iter_mut()
                .zip(f)
                .for_each(|(a, b)| *a += 0.5 * dt * b);
        }
        free.apply(&mut q);
        if let (Some(f0), Some(f1)) = (prob.force_at(n), prob.force_at(n + 1)) {
            let mid: Vec<Vec<f64>> = f0
                .iter()
                .zip(f1)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                .collect();
            drift(&mut q, &grid, &mid, dt);
        }
        let a_next = prob.potential_values(n + 1);
        if let (Some(a0), Some(a1)) = (&a_prev, &a_next) {
            q.par_iter_mut()
                .zip(a0.par_iter().zip(a1))
                .for_each(|(v, (x, y))| *v *= (-0.5 * dt * (x + y)).exp());
        }
        a_prev = a_next;
        if let Some(f) = prob.source_at(n + 1) {
            q.par_iter_mut()
                .zip(f)
                .for_each(|(a, b)| *a += 0.5 * dt * b);
        }
        cur = PhaseField {
            grid,
            values: q,
            time: (n + 1) as f64 * dt,
        };
        if !cur.is_finite() {
            return Err(Error::NonFinite(format!("solution at step {}", n + 1)));
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// Successive approximations of the potential problem at the level of
/// solutions: level 0 ignores `a`, level `l+1` solves the potential-free
/// problem with source `f − a·p^{(l)}`.
pub fn volterra_levels(
    prob: &LinearProblem,
    spec: &PropagatorSpec,
    nt: usize,
    levels: usize,
) -> Result<Vec<Vec<PhaseField>>> {
    prob.check(nt)?;
    let mut base = prob.clone();
    base.potential.clear();
    let a: Vec<Vec<f64>> = (0..=nt)
        .map(|n| {
            prob.potential_values(n)
                .unwrap_or_else(|| vec![0.0; prob.p0.grid.len()])
        })
        .collect();
    let mut out = vec![solve_linear(&base, spec, nt)?];
    for _ in 0..levels {
        let prev = out.last().unwrap();
        let src: Vec<Vec<f64>> = (0..=nt)
            .map(|n| {
                let f = prob.source_at(n);
                prev[n]
                    .values
                    .iter()
                    .zip(&a[n])
                    .enumerate()
                    .map(|(i, (p, av))| f.map(|f| f[i]).unwrap_or(0.0) - av * p)
                    .collect()
            })
            .collect();
        let mut lvl = base.clone();
        lvl.source = Some(src);
        out.push(solve_linear(&lvl, spec, nt)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ComparisonVerdict {
    pub ordered: bool,
    pub identical: bool,
    /// Smallest `p2 − p1 + ε_pos` seen; negative means a violation.
    pub worst_margin: f64,
    pub worst_time_index: usize,
    pub worst_point: usize,
}

/// Checks `run1 ≤ run2 + ε_pos` at every stored time.
pub fn compare_solutions(run1: &[PhaseField], run2: &[PhaseField]) -> Result<ComparisonVerdict> {
    if run1.len() != run2.len() {
        return Err(Error::Argument("runs have different lengths".into()));
    }
    let mut verdict = ComparisonVerdict {
        ordered: true,
        identical: true,
        worst_margin: f64::INFINITY,
        worst_time_index: 0,
        worst_point: 0,
    };
    for (n, (a, b)) in run1.iter().zip(run2).enumerate() {
        if a.grid != b.grid {
            return Err(Error::Argument("runs live on different grids".into()));
        }
        let eps = 1e-10 * a.sup_abs().max(b.sup_abs());
        for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            if x != y {
                verdict.identical = false;
            }
            let m = y - x + eps;
            if m < verdict.worst_margin {
                verdict.worst_margin = m;
                verdict.worst_time_index = n;
                verdict.worst_point = i;
            }
        }
    }
    verdict.ordered = verdict.worst_margin >= 0.0;
    Ok(verdict)
}

/// Supersolution for branching-only problems: `e^{α₁‖ρ‖∞t}` times the
/// free flow with diffusivity `4σ` of `4^N·M_T·p0`.
pub fn upper_solution(
    p0: &PhaseField,
    spec: &PropagatorSpec,
    alpha1_rho_sup: f64,
    t: f64,
    m_t: f64,
) -> Result<PhaseField> {
    let wide = PropagatorSpec {
        sigma: 4.0 * spec.sigma,
        ..*spec
    };
    let scale = (alpha1_rho_sup * t).exp() * 4f64.powi(spec.dim as i32) * m_t;
    Ok(propagate_free(p0, t, &wide)?.scaled(scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate_phase;
    use crate::params::GridSpec;

    fn grid(n: usize, l: f64) -> PhaseGrid {
        PhaseGrid::new(
            1,
            &GridSpec {
                x_extent: l,
                v_extent: l,
                nx: n,
                nv: n,
                t_final: 1.0,
                nt: 1,
            },
        )
    }

    fn bump(g: PhaseGrid) -> PhaseField {
        PhaseField::from_fn(g, |x, v| (-(x[0] * x[0]) / 0.5 - v[0] * v[0] / 0.5).exp())
    }

    #[test]
    fn truncation_bound_values() {
        assert_eq!(series_truncation_bound(0.0, 3.0, 5), 0.0);
        assert!((series_truncation_bound(1.0, 1.0, 3) - 1.0 / 24.0).abs() < 1e-15);
        let b: Vec<f64> = (0..10)
            .map(|l| series_truncation_bound(2.0, 1.5, l))
            .collect();
        for l in 3..9 {
            assert!(b[l + 1] < b[l]);
        }
    }

    #[test]
    fn zero_stays_zero() {
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let p = PhaseField::zeros(grid(16, 3.0));
        assert!(propagate_free(&p, 0.3, &spec)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
        assert!(propagate_free(&p, 0.0, &spec).is_err());
    }

    #[test]
    fn free_step_matches_quadrature_for_large_lag() {
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let p0 = bump(grid(64, 4.0));
        let a = propagate_free(&p0, 0.6, &spec).unwrap();
        let b = propagate_free_quadrature(&p0, 0.6, &spec).unwrap();
        let diff: f64 = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>();
        let mass: f64 = b.values.iter().sum();
        assert!(diff / mass < 0.02, "{}", diff / mass);
    }

    #[test]
    fn mass_and_sup_growth() {
        let spec = PropagatorSpec::new(0.8, 0.5, 1);
        let p0 = bump(grid(48, 5.0));
        let m0 = integrate_phase(&p0).unwrap();
        let p = propagate_free(&p0, 0.5, &spec).unwrap();
        assert!((integrate_phase(&p).unwrap() / m0 - 1.0).abs() < 1e-4);
        assert!(p.max() <= (0.8f64 * 0.5).exp() * p0.max() * (1.0 + 1e-12));
        assert!(p.min() >= 0.0);
        // many short lags must not accumulate Jacobian error
        let step = FreeStep::new(&spec, p0.grid, 0.5 / 200.0).unwrap();
        let mut v = p0.values.clone();
        for _ in 0..200 {
            step.apply(&mut v);
        }
        let q = PhaseField {
            values: v,
            ..p0.clone()
        };
        assert!((integrate_phase(&q).unwrap() / m0 - 1.0).abs() < 1e-4);
        assert!(q.max() <= (0.8f64 * 0.5).exp() * p0.max() * (1.0 + 1e-12));
    }

    #[test]
    fn dilation_remap_tiles_sources() {
        let w = dilation_remap(16, 1.07);
        let mut col = [0.0; 16];
        for (j, row) in w.iter().enumerate() {
            let total: f64 = row.iter().map(|x| x.1).sum();
            if (4..12).contains(&j) {
                assert!((total - 1.07).abs() < 1e-12);
            }
            for &(i, x) in row {
                col[i] += x;
            }
        }
        assert!(col.iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn constant_potential_is_integrating_factor() {
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let g = grid(24, 4.0);
        let p0 = bump(g);
        let nt = 10;
        let mut prob = LinearProblem::free(p0.clone(), 0.5);
        let free = solve_linear(&prob, &spec, nt).unwrap();
        prob.potential.push(PotentialTerm::constant(&g, 0.7));
        let damped = solve_linear(&prob, &spec, nt).unwrap();
        for (a, b) in free.iter().zip(&damped) {
            let f = (-0.7 * a.time).exp();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((f * x - y).abs() <= 1e-6 * f * a.max());
            }
        }
        // and with nothing switched on, the steps are plain free steps
        let step = FreeStep::new(&spec, g, 0.05).unwrap();
        let mut v = p0.values.clone();
        for _ in 0..nt {
            step.apply(&mut v);
        }
        assert_eq!(v, free[nt].values);
    }

    #[test]
    fn refuses_large_potential() {
        let g = grid(8, 2.0);
        let mut prob = LinearProblem::free(PhaseField::zeros(g), 10.0);
        prob.potential.push(PotentialTerm::constant(&g, 5.0));
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        assert!(matches!(
            solve_linear(&prob, &spec, 4),
            Err(Error::SeriesTruncation { .. })
        ));
    }

    #[test]
    fn drift_conserves_and_translates() {
        let g = grid(32, 4.0);
        let p0 = bump(g);
        let mut v = p0.values.clone();
        let f = vec![vec![2.5; g.x.len()]];
        drift(&mut v, &g, &f, 0.1);
        let p = PhaseField {
            values: v,
            ..p0.clone()
        };
        assert!((integrate_phase(&p).unwrap() - integrate_phase(&p0).unwrap()).abs() < 1e-12);
        let mean = |f: &PhaseField| {
            let mut s = 0.0;
            for ix in 0..g.x.len() {
                for iv in 0..g.v.len() {
                    s += g.v.node(iv) * f.at(ix, iv);
                }
            }
            s * g.cell_volume() / integrate_phase(f).unwrap()
        };
        assert!((mean(&p) - mean(&p0) - 0.25).abs() < 1e-10);
    }

    #[test]
    fn comparison_verdicts() {
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let g = grid(16, 3.0);
        let p0 = bump(g);
        let r1 = solve_linear(&LinearProblem::free(p0.clone(), 0.2), &spec, 4).unwrap();
        let r2 = solve_linear(&LinearProblem::free(p0.scaled(2.0), 0.2), &spec, 4).unwrap();
        let same = compare_solutions(&r1, &r1).unwrap();
        assert!(same.identical && same.ordered);
        let v = compare_solutions(&r1, &r2).unwrap();
        assert!(v.ordered && !v.identical);
        assert!(!compare_solutions(&r2, &r1).unwrap().ordered);
    }

    #[test]
    fn upper_solution_reduction_and_linearity() {
        let spec = PropagatorSpec::new(1.0, 0.5, 1);
        let g = grid(16, 3.0);
        let p0 = bump(g);
        let u = upper_solution(&p0, &spec, 0.0, 0.3, 0.25).unwrap();
        let wide = PropagatorSpec { sigma: 2.0, ..spec };
        assert_eq!(u.values, propagate_free(&p0, 0.3, &wide).unwrap().values);
        let u2 = upper_solution(&p0.scaled(3.0), &spec, 0.4, 0.3, 1.0).unwrap();
        let u1 = upper_solution(&p0, &spec, 0.4, 0.3, 1.0).unwrap();
        for (a, b) in u2.values.iter().zip(&u1.values) {
            assert!((a - 3.0 * b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }
}
