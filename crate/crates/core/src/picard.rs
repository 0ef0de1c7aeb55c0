//! Frozen-coefficient fixed-point iteration for the coupled `(p, c)` system.
//!
//! Starting from `p₁ = 0`, each sweep solves the TAF equation with the flux
//! of the previous iterate, freezes the force, branching rate and
//! anastomosis potential, and solves the linear kinetic problem.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    moment_horizon, uniqueness_constants, HorizonInputs, MomentHorizon, UniquenessConstants,
};
use crate::error::{Error, Result};
use crate::grid::{lp_norm, PhaseField, PhaseGrid, SpatialField};
use crate::kernels::{alpha_of_c, rho_eval, PropagatorSpec, RhoSpec};
use crate::linfp::{solve_linear, LinearProblem, PotentialTerm};
use crate::params::{FluxMode, GridSpec, ModelParams};
use crate::taf::{solve_taf, TafProblem};
use crate::vintegrals::{flux_j, marginal, moment, weighted_sup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SchemeVariant {
    /// Branching folded into the potential, `γa − α(c)ρ`.
    #[default]
    A,
    /// Branching as a lagged source `α(c)ρp_{m−1}`.
    B,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeSetup {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub rho: RhoSpec,
    /// Far-field TAF level `c_∞`.
    pub c_background: f64,
    pub variant: SchemeVariant,
    pub max_iter: usize,
    /// Relative to `‖p₀‖₁`.
    pub tol: f64,
    /// Velocity weight exponent for the entry hypotheses.
    pub beta: f64,
}

impl SchemeSetup {
    pub fn new(params: ModelParams, grid: GridSpec) -> Self {
        SchemeSetup {
            rho: RhoSpec::default_for(&params),
            beta: params.dim as f64 + 2.0,
            params,
            grid,
            c_background: 0.0,
            variant: SchemeVariant::A,
            max_iter: 25,
            tol: 1e-6,
        }
    }

    pub fn phase_grid(&self) -> PhaseGrid {
        PhaseGrid::new(self.params.dim, &self.grid)
    }

    pub fn spec(&self) -> PropagatorSpec {
        PropagatorSpec::from_params(&self.params)
    }
}

/// Scalar record of one iterate, kept for every `m`.
#[derive(Debug, Clone, Serialize)]
pub struct IterateSummary {
    pub m: usize,
    pub diff: f64,
    pub c_diff: f64,
    pub min_p: f64,
    pub min_c: f64,
    pub max_c: f64,
    /// `‖p_m(t_n)‖₁` per stored time.
    pub mass: Vec<f64>,
    /// `‖p_m(t_n)‖∞` per stored time.
    pub sup: Vec<f64>,
    /// `‖p_m(t_n)‖₂` per stored time.
    pub l2: Vec<f64>,
    /// `σ‖∇_v p_m‖²_{L²_{t,x,v}}`, central differences, trapezoid in time.
    pub grad_v_energy: f64,
}

#[derive(Debug, Clone)]
pub struct SchemeState {
    pub iteration: usize,
    pub variant: SchemeVariant,
    pub times: Vec<f64>,
    pub p: Vec<PhaseField>,
    pub c: Vec<SpatialField>,
    /// `grad_c[n][axis]`.
    pub grad_c: Vec<Vec<SpatialField>>,
    pub j: Vec<SpatialField>,
    pub marginal: Vec<SpatialField>,
    /// `∫₀ᵗ p̃ ds` (without the factor γ).
    pub anastomosis: Vec<SpatialField>,
    pub diffs: Vec<f64>,
    pub c_diffs: Vec<f64>,
    pub history: Vec<IterateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Diverged { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub iterations: usize,
    pub tol_abs: f64,
    pub diffs: Vec<f64>,
    pub c_diffs: Vec<f64>,
    pub t_final: f64,
    pub nt: usize,
    pub p0_mass: f64,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }
}

#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub state: SchemeState,
    pub report: RunReport,
    pub setup: SchemeSetup,
}

fn l1(p: &PhaseField) -> f64 {
    lp_norm(p, 1.0).unwrap_or(f64::NAN)
}

fn grad_v_l2_sq(p: &PhaseField) -> f64 {
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

fn cumulative(series: &[SpatialField], dt: f64) -> Vec<SpatialField> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = SpatialField {
        values: vec![0.0; series[0].values.len()],
        time: 0.0,
        ..series[0].clone()
    };
    acc.kind = crate::grid::FieldKind::AnastomosisA;
    out.push(acc.clone());
    for w in series.windows(2) {
        for (a, (x, y)) in acc
            .values
            .iter_mut()
            .zip(w[0].values.iter().zip(&w[1].values))
        {
            *a += 0.5 * dt * (x + y);
        }
        acc.time = w[1].time;
        out.push(acc.clone());
    }
    out
}

fn check_entry(setup: &SchemeSetup, p0: &PhaseField, c0: &SpatialField) -> Result<()> {
    let (params, grid) = crate::params::validate_params(setup.params, setup.grid)?;
    let pg = PhaseGrid::new(params.dim, &grid);
    if p0.grid != pg || c0.grid != pg.x {
        return Err(Error::Argument(
            "initial data do not live on the configured grid".into(),
        ));
    }
    if !p0.is_finite() || c0.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial data".into()));
    }
    if p0.min() < -p0.eps_pos() {
        return Err(Error::Hypothesis("p0 must be nonnegative".into()));
    }
    if c0.min() < -1e-10 * c0.sup_abs() || setup.c_background < 0.0 {
        return Err(Error::Hypothesis("c0 must be nonnegative".into()));
    }
    if !(setup.beta > params.dim as f64) {
        return Err(Error::Hypothesis(format!(
            "velocity weight beta = {} must exceed N",
            setup.beta
        )));
    }
    if !weighted_sup(p0, setup.beta).is_finite() || !moment(p0, setup.beta).is_finite() {
        return Err(Error::Hypothesis(
            "weighted initial density is not bounded and integrable".into(),
        ));
    }
    if setup.max_iter < 2 {
        return Err(Error::Argument("max_iter must be at least 2".into()));
    }
    Ok(())
}

/// Runs the iteration. Divergence and non-convergence are reported in the
/// outcome, not as errors.
pub fn run_scheme(
    setup: &SchemeSetup,
    p0: &PhaseField,
    c0: &SpatialField,
) -> Result<SchemeOutcome> {
    check_entry(setup, p0, c0)?;
    let params = &setup.params;
    let nt = setup.grid.nt;
    let t_final = setup.grid.t_final;
    let dt = t_final / nt as f64;
    let grid = p0.grid;
    let spec = setup.spec();
    let times: Vec<f64> = (0..=nt).map(|n| n as f64 * dt).collect();
    let rho: Vec<f64> = (0..grid.v.len())
        .map(|iv| rho_eval(&grid.v.coords(iv)[..grid.dim()], &setup.rho))
        .collect();
    let p0_mass = l1(p0);
    let tol_abs = setup.tol * p0_mass;

    // iterate m = 1
    let zero_p: Vec<PhaseField> = times
        .iter()
        .map(|&t| PhaseField {
            time: t,
            ..PhaseField::zeros(grid)
        })
        .collect();
    let mut p_prev = zero_p;
    let mut j_prev: Vec<SpatialField> =
        vec![SpatialField::zeros(grid.x, crate::grid::FieldKind::FluxJ)];
    let mut marg_prev: Vec<SpatialField> = times
        .iter()
        .map(|_| SpatialField::zeros(grid.x, crate::grid::FieldKind::Marginal))
        .collect();
    let mut c_prev: Option<Vec<SpatialField>> = None;
    let mut diffs = Vec::new();
    let mut c_diffs = Vec::new();
    let mut history = Vec::new();
    let mut streak = 0;
    let mut status = RunStatus::MaxIterations;
    let mut last = None;

    for m in 2..=setup.max_iter {
        let taf_prob = TafProblem {
            c0: c0.clone(),
            flux: j_prev.clone(),
            d: params.d,
            eta: params.eta,
            background: setup.c_background,
            t_final,
        };
        let taf = solve_taf(&taf_prob, nt)?;
        let forces = taf.forces(params)?;
        let force_series: Vec<Vec<Vec<f64>>> = forces
            .iter()
            .map(|f| f.iter().map(|c| c.values.clone()).collect())
            .collect();
        let alpha: Vec<Vec<f64>> = taf
            .c
            .iter()
            .map(|c| {
                c.values
                    .iter()
                    .map(|&v| alpha_of_c(v.max(0.0), params))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let anast = cumulative(&marg_prev, dt);
        let mut prob = LinearProblem::free(p0.clone(), t_final);
        prob.force = Some(force_series);
        prob.potential.push(PotentialTerm {
            spatial: anast
                .iter()
                .map(|a| a.values.iter().map(|v| params.gamma * v).collect())
                .collect(),
            velocity: None,
        });
        match setup.variant {
            SchemeVariant::A => prob.potential.push(PotentialTerm {
                spatial: alpha
                    .iter()
                    .map(|a| a.iter().map(|v| -v).collect())
                    .collect(),
                velocity: Some(rho.clone()),
            }),
            SchemeVariant::B => {
                let nvt = grid.v.len();
                prob.source = Some(
                    p_prev
                        .iter()
                        .zip(&alpha)
                        .map(|(p, al)| {
                            p.values
                                .iter()
                                .enumerate()
                                .map(|(i, pv)| al[i / nvt] * rho[i % nvt] * pv)
                                .collect()
                        })
                        .collect(),
                );
            }
        }
        let p_new = solve_linear(&prob, &spec, nt)?;
        let j_new: Vec<SpatialField> = p_new.iter().map(|p| flux_j(p, params)).collect();
        let marg_new: Vec<SpatialField> = p_new.iter().map(marginal).collect();

        let diff = p_new
            .iter()
            .zip(&p_prev)
            .map(|(a, b)| l1(&a.sub(b)))
            .fold(0.0, f64::max);
        let c_diff = match &c_prev {
            Some(cp) => cp
                .iter()
                .zip(&taf.c)
                .map(|(a, b)| {
                    a.values
                        .iter()
                        .zip(&b.values)
                        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
                })
                .fold(0.0, f64::max),
            None => f64::NAN,
        };
        if !diff.is_finite() {
            return Err(Error::NonFinite(format!("iterate {m} difference")));
        }
        let gv: Vec<f64> = p_new.iter().map(grad_v_l2_sq).collect();
        let grad_v_energy =
            params.sigma * (0..nt).map(|n| 0.5 * dt * (gv[n] + gv[n + 1])).sum::<f64>();
        history.push(IterateSummary {
            m,
            diff,
            c_diff,
            min_p: p_new.iter().map(|p| p.min()).fold(f64::INFINITY, f64::min),
            min_c: taf.c.iter().map(|c| c.min()).fold(f64::INFINITY, f64::min),
            max_c: taf
                .c
                .iter()
                .map(|c| c.max())
                .fold(f64::NEG_INFINITY, f64::max),
            mass: p_new.iter().map(l1).collect(),
            sup: p_new.iter().map(|p| p.sup_abs()).collect(),
            l2: p_new
                .iter()
                .map(|p| lp_norm(p, 2.0).unwrap_or(f64::NAN))
                .collect(),
            grad_v_energy,
        });
        if let Some(&prev) = diffs.last() {
            if diff > prev * (1.0 + 1e-3) && diff > tol_abs {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        diffs.push(diff);
        c_diffs.push(c_diff);
        p_prev = p_new;
        j_prev = j_new;
        marg_prev = marg_new;
        c_prev = Some(taf.c.clone());
        last = Some((taf, anast, m));
        if diff <= tol_abs {
            status = RunStatus::Converged;
            break;
        }
        if streak > 3 {
            let tail: Vec<String> = diffs
                .iter()
                .rev()
                .take(5)
                .rev()
                .map(|d| format!("{d:.3e}"))
                .collect();
            status = RunStatus::Diverged {
                reason: format!(
                    "successive differences grew {streak} times in a row: {}",
                    tail.join(", ")
                ),
            };
            break;
        }
    }
    let (_, _, m) = last.expect("at least one sweep");
    // TAF and anastomosis consistent with the final density
    let taf = solve_taf(
        &TafProblem {
            c0: c0.clone(),
            flux: j_prev.clone(),
            d: params.d,
            eta: params.eta,
            background: setup.c_background,
            t_final,
        },
        nt,
    )?;
    let anastomosis = cumulative(&marg_prev, dt);
    let state = SchemeState {
        iteration: m,
        variant: setup.variant,
        times,
        p: p_prev,
        c: taf.c,
        grad_c: taf.grad,
        j: j_prev,
        marginal: marg_prev,
        anastomosis,
        diffs: diffs.clone(),
        c_diffs: c_diffs.clone(),
        history,
    };
    Ok(SchemeOutcome {
        report: RunReport {
            status,
            iterations: m,
            tol_abs,
            diffs,
            c_diffs,
            t_final,
            nt,
            p0_mass,
            warnings: Vec::new(),
        },
        state,
        setup: setup.clone(),
    })
}

/// The linear problem whose solution is the final iterate, with its own
/// coefficients re-derived from the final state (for residual checks).
pub fn frozen_problem(out: &SchemeOutcome) -> Result<LinearProblem> {
    let st = &out.state;
    let params = &out.setup.params;
    let grid = st.p[0].grid;
    let rho: Vec<f64> = (0..grid.v.len())
        .map(|iv| rho_eval(&grid.v.coords(iv)[..grid.dim()], &out.setup.rho))
        .collect();
    let mut prob = LinearProblem::free(st.p[0].clone(), out.report.t_final);
    let mut forces = Vec::with_capacity(st.c.len());
    for (c, g) in st.c.iter().zip(&st.grad_c) {
        let f = crate::kernels::force_from_c(c, g, params)?;
        forces.push(f.into_iter().map(|x| x.values).collect());
    }
    prob.force = Some(forces);
    prob.potential.push(PotentialTerm {
        spatial: st
            .anastomosis
            .iter()
            .map(|a| a.values.iter().map(|v| params.gamma * v).collect())
            .collect(),
        velocity: None,
    });
    let alpha: Vec<Vec<f64>> =
        st.c.iter()
            .map(|c| {
                c.values
                    .iter()
                    .map(|&v| alpha_of_c(v.max(0.0), params).map(|a| -a))
                    .collect()
            })
            .collect::<Result<_>>()?;
    prob.potential.push(PotentialTerm {
        spatial: alpha,
        velocity: Some(rho),
    });
    Ok(prob)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub ratio: f64,
    pub ceiling: f64,
    pub constants: UniquenessConstants,
    /// `ceiling / ratio`; above 1 means the bound holds.
    pub slack: f64,
    pub passed: bool,
}

/// `sup_t ‖p̄(t)‖₁ / ‖p̄(0)‖₁` for two converged runs against `e^{G(T)T}`.
pub fn stability_probe(run1: &SchemeOutcome, run2: &SchemeOutcome) -> Result<StabilityReport> {
    if !run1.report.converged() || !run2.report.converged() {
        return Err(Error::Argument(
            "stability probe needs two converged runs".into(),
        ));
    }
    if run1.state.p.len() != run2.state.p.len() {
        return Err(Error::Argument("runs have different time grids".into()));
    }
    let constants = uniqueness_constants(run1, run2)?;
    let diffs: Vec<f64> = run1
        .state
        .p
        .iter()
        .zip(&run2.state.p)
        .map(|(a, b)| {
            let d = a.sub(b);
            match run1.setup.params.flux_mode {
                FluxMode::Cutoff => l1(&d),
                FluxMode::Raw => l1(&d).max(moment(&d.abs_field(), 1.0)),
            }
        })
        .collect();
    let u0 = diffs[0];
    let sup = diffs.iter().cloned().fold(0.0, f64::max);
    let ceiling = (constants.g * run1.report.t_final).exp();
    let ratio = if u0 == 0.0 {
        if sup == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        sup / u0
    };
    Ok(StabilityReport {
        ratio,
        ceiling,
        slack: ceiling / ratio,
        passed: ratio <= ceiling,
        constants,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonReport {
    pub horizon: MomentHorizon,
    pub requested_t: f64,
    pub run_t: f64,
    /// `(t, measured ‖|v|^β p‖₁, envelope)` for stored `t ≤ 0.8τ`.
    pub samples: Vec<(f64, f64, f64)>,
    pub envelope_holds: bool,
}

/// Inputs of the moment horizon for given data; the density norms use the
/// iterate ceilings over `[0, T]`.
pub fn horizon_inputs(
    setup: &SchemeSetup,
    p0: &PhaseField,
    c0: &SpatialField,
    beta2: f64,
) -> Result<HorizonInputs> {
    let params = &setup.params;
    let n = params.dim as f64;
    let t = setup.grid.t_final;
    let growth = params.alpha1 * setup.rho.sup();
    let grads = crate::taf::initial_gradient(c0, setup.c_background, params.d, t)?;
    let r = n + beta2;
    let g_norm = {
        let len = grads[0].values.len();
        let vals: Vec<f64> = (0..len)
            .map(|i| {
                grads
                    .iter()
                    .map(|g| g.values[i].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        crate::grid::lp_norm_slice(&vals, c0.grid.cell_volume(), r)?
    };
    Ok(HorizonInputs {
        dim: params.dim,
        beta: beta2,
        k: params.k,
        sigma: params.sigma,
        d: params.d,
        d1: params.d1,
        eta: params.eta,
        t_final: t,
        moment0: moment(p0, beta2),
        p_l1: l1(p0) * (growth * t).exp(),
        p_inf: p0.sup_abs() * ((n * params.k + growth) * t).exp(),
        grad_c0_lr: g_norm,
        c0_inf: c0.sup_abs(),
        alpha1_rho: growth,
    })
}

/// The iteration with the cutoff-free flux, capped at the moment horizon.
pub fn run_scheme_raw_flux(
    setup: &SchemeSetup,
    p0: &PhaseField,
    c0: &SpatialField,
    beta2: f64,
) -> Result<(SchemeOutcome, HorizonReport)> {
    if setup.params.flux_mode != FluxMode::Raw {
        return Err(Error::Argument("raw-flux run needs flux_mode = raw".into()));
    }
    let n = setup.params.dim as f64;
    let floor = (n + 2.0).max(n * n - n);
    if !(beta2 > floor) {
        return Err(Error::Hypothesis(format!(
            "beta2 = {beta2} must exceed {floor}"
        )));
    }
    let horizon = moment_horizon(&horizon_inputs(setup, p0, c0, beta2)?)?;
    let mut run_setup = setup.clone();
    let mut warnings = Vec::new();
    let requested_t = setup.grid.t_final;
    if requested_t > horizon.tau {
        let dt = requested_t / setup.grid.nt as f64;
        let nt = ((horizon.tau / dt).floor() as usize).max(1);
        run_setup.grid.nt = nt;
        run_setup.grid.t_final = nt as f64 * dt;
        warnings.push(format!(
            "requested T = {requested_t} exceeds the moment horizon {:.4}; run truncated to {:.4}",
            horizon.tau, run_setup.grid.t_final
        ));
    }
    let mut out = run_scheme(&run_setup, p0, c0)?;
    out.report.warnings.extend(warnings);
    let mut samples = Vec::new();
    for p in &out.state.p {
        if p.time <= 0.8 * horizon.tau {
            samples.push((p.time, moment(p, beta2), horizon.envelope(p.time)));
        }
    }
    let envelope_holds = samples.iter().all(|s| s.1 <= s.2);
    let run_t = out.report.t_final;
    Ok((
        out,
        HorizonReport {
            horizon,
            requested_t,
            run_t,
            samples,
            envelope_holds,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldKind;

    fn setup() -> SchemeSetup {
        let params = ModelParams::default();
        let grid = GridSpec {
            x_extent: 4.0,
            v_extent: 4.0,
            nx: 24,
            nv: 24,
            t_final: 0.3,
            nt: 10,
        };
        SchemeSetup::new(params, grid)
    }

    fn data(s: &SchemeSetup) -> (PhaseField, SpatialField) {
        let g = s.phase_grid();
        let p0 = PhaseField::from_fn(g, |x, v| {
            (-(x[0] * x[0]) - (v[0] - 0.5).powi(2) / 0.5).exp()
        });
        let c0 =
            SpatialField::from_fn(g.x, FieldKind::Taf, |x| 0.8 * (-(x[0] - 1.0).powi(2)).exp());
        (p0, c0)
    }

    #[test]
    fn zero_density_is_fixed_point() {
        let s = setup();
        let (p0, c0) = data(&s);
        let zero = PhaseField::zeros(p0.grid);
        let out = run_scheme(&s, &zero, &c0).unwrap();
        assert!(out.report.converged());
        assert_eq!(out.report.iterations, 2);
        assert!(out.state.p.iter().all(|p| p.sup_abs() == 0.0));
        // c is pure heat flow
        let heat = solve_taf(
            &TafProblem {
                c0: c0.clone(),
                flux: vec![SpatialField::zeros(c0.grid, FieldKind::FluxJ)],
                d: s.params.d,
                eta: 0.0,
                background: 0.0,
                t_final: s.grid.t_final,
            },
            s.grid.nt,
        )
        .unwrap();
        assert_eq!(
            out.state.c.last().unwrap().values,
            heat.c.last().unwrap().values
        );
        let _ = p0;
    }

    #[test]
    fn decoupled_converges_after_one_correction() {
        let mut s = setup();
        s.params.gamma = 0.0;
        s.params.alpha1 = 0.0;
        s.params.d1 = 0.0;
        let (p0, c0) = data(&s);
        let out = run_scheme(&s, &p0, &c0).unwrap();
        assert!(out.report.converged());
        assert_eq!(out.report.iterations, 3);
        let free = solve_linear(
            &LinearProblem::free(p0.clone(), s.grid.t_final),
            &s.spec(),
            s.grid.nt,
        )
        .unwrap();
        assert!(
            out.state
                .p
                .last()
                .unwrap()
                .sub(free.last().unwrap())
                .sup_abs()
                < 1e-14
        );
    }

    #[test]
    fn coupled_run_converges_with_nonnegative_iterates() {
        let s = setup();
        let (p0, c0) = data(&s);
        let out = run_scheme(&s, &p0, &c0).unwrap();
        assert!(out.report.converged(), "{:?}", out.report.diffs);
        for h in &out.state.history {
            assert!(h.min_p >= -1e-10 && h.min_c >= -1e-10);
        }
        let mut sb = s.clone();
        sb.variant = SchemeVariant::B;
        let outb = run_scheme(&sb, &p0, &c0).unwrap();
        assert!(outb.report.converged());
        let gap = out
            .state
            .p
            .iter()
            .zip(&outb.state.p)
            .map(|(a, b)| l1(&a.sub(b)))
            .fold(0.0, f64::max);
        assert!(gap < 0.05 * l1(&p0), "{gap}");
    }

    #[test]
    fn rejects_negative_data() {
        let s = setup();
        let (mut p0, c0) = data(&s);
        p0.values[5] = -1.0;
        assert!(matches!(
            run_scheme(&s, &p0, &c0),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn identical_runs_have_unit_ratio() {
        let s = setup();
        let (p0, c0) = data(&s);
        let out = run_scheme(&s, &p0, &c0).unwrap();
        let r = stability_probe(&out, &out).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert!(r.passed);
    }
}
