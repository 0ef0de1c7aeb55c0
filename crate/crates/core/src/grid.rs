//! Tensor grids on the truncated boxes, sampled fields and their quadrature.
//!
//! Nodes are cell centres, `x_i = −L + (i + ½)Δx`, so the box is symmetric
//! and `v = 0` is never a node. On such a grid the trapezoid rule for data
//! vanishing at the box faces reduces to `Δ·Σ f_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub dim: usize,
    pub n: usize,
    pub l: f64,
}

impl SpaceGrid {
    pub fn new(dim: usize, n: usize, l: f64) -> Self {
        SpaceGrid { dim, n, l }
    }

    pub fn h(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.l + (i as f64 + 0.5) * self.h()
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Stride of `axis` in the flat index (axis 0 varies slowest).
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    pub fn digits(&self, mut flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.dim).rev() {
            out[a] = flat % self.n;
            flat /= self.n;
        }
        out
    }

    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let d = self.digits(flat);
        let mut out = [0.0; 3];
        for a in 0..self.dim {
            out[a] = self.node(d[a]);
        }
        out
    }
}

/// Product grid in `(x, v)`; flat index is `ix * nv^N + iv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub x: SpaceGrid,
    pub v: SpaceGrid,
}

impl PhaseGrid {
    pub fn new(dim: usize, spec: &GridSpec) -> Self {
        PhaseGrid {
            x: SpaceGrid::new(dim, spec.nx, spec.x_extent),
            v: SpaceGrid::new(dim, spec.nv, spec.v_extent),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.dim
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.x.cell_volume() * self.v.cell_volume()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Taf,
    GradTafComponent,
    ForceComponent,
    FluxJ,
    Marginal,
    AnastomosisA,
    Generic,
}

/// Anything carrying grid samples and a uniform quadrature weight.
pub trait Quadrature {
    fn samples(&self) -> &[f64];
    fn weight(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl PhaseField {
    pub fn zeros(grid: PhaseGrid) -> Self {
        PhaseField {
            grid,
            values: vec![0.0; grid.len()],
            time: 0.0,
        }
    }

    pub fn from_fn<F>(grid: PhaseGrid, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Sync,
    {
        let nvt = grid.v.len();
        let n = grid.dim();
        let mut values = vec![0.0; grid.len()];
        values
            .par_chunks_mut(nvt)
            .enumerate()
            .for_each(|(ix, row)| {
                let x = grid.x.coords(ix);
                for (iv, out) in row.iter_mut().enumerate() {
                    let v = grid.v.coords(iv);
                    *out = f(&x[..n], &v[..n]);
                }
            });
        PhaseField {
            grid,
            values,
            time: 0.0,
        }
    }

    pub fn at(&self, ix: usize, iv: usize) -> f64 {
        self.values[ix * self.grid.v.len() + iv]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn sub(&self, other: &PhaseField) -> PhaseField {
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        out
    }

    pub fn abs_field(&self) -> PhaseField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.abs());
        out
    }

    /// Default positivity slack: `1e-10·‖f‖∞`.
    pub fn eps_pos(&self) -> f64 {
        1e-10 * self.sup_abs()
    }
}

impl Quadrature for PhaseField {
    fn samples(&self) -> &[f64] {
        &self.values
    }

    fn weight(&self) -> f64 {
        self.grid.cell_volume()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    pub grid: SpaceGrid,
    pub values: Vec<f64>,
    pub kind: FieldKind,
    pub time: f64,
}

impl SpatialField {
    pub fn zeros(grid: SpaceGrid, kind: FieldKind) -> Self {
        SpatialField {
            grid,
            values: vec![0.0; grid.len()],
            kind,
            time: 0.0,
        }
    }

    pub fn constant(grid: SpaceGrid, kind: FieldKind, c: f64) -> Self {
        SpatialField {
            grid,
            values: vec![c; grid.len()],
            kind,
            time: 0.0,
        }
    }

    pub fn from_fn<F>(grid: SpaceGrid, kind: FieldKind, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = grid.dim;
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i);
                f(&x[..n])
            })
            .collect();
        SpatialField {
            grid,
            values,
            kind,
            time: 0.0,
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

impl Quadrature for SpatialField {
    fn samples(&self) -> &[f64] {
        &self.values
    }

    fn weight(&self) -> f64 {
        self.grid.cell_volume()
    }
}

/// Trapezoid approximation of `∫∫ f dx dv`. NaN input is an error.
pub fn integrate_phase(f: &PhaseField) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::NonFinite("integrand".into()));
    }
    Ok(f.values.par_iter().sum::<f64>() * f.grid.cell_volume())
}

/// Discrete `L^q` norm; pass `f64::INFINITY` for the sup norm.
pub fn lp_norm<F: Quadrature + ?Sized>(f: &F, q: f64) -> Result<f64> {
    lp_norm_slice(f.samples(), f.weight(), q)
}

pub fn lp_norm_slice(values: &[f64], weight: f64, q: f64) -> Result<f64> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::Argument(format!("exponent q = {q} must be >= 1")));
    }
    let sup = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if q.is_infinite() || sup == 0.0 {
        return Ok(sup);
    }
    if q == 1.0 {
        return Ok(values.iter().map(|v| v.abs()).sum::<f64>() * weight);
    }
    // scale by the sup so large exponents cannot overflow
    let s: f64 = values.iter().map(|v| (v.abs() / sup).powf(q)).sum();
    Ok(sup * (s * weight).powf(1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize, l: f64) -> PhaseGrid {
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

    #[test]
    fn nodes_symmetric() {
        let g = SpaceGrid::new(1, 6, 3.0);
        assert_eq!(g.node(0), -2.5);
        assert_eq!(g.node(5), 2.5);
        let g2 = SpaceGrid::new(2, 4, 1.0);
        assert_eq!(g2.digits(6), [1, 2, 0]);
        assert_eq!(g2.stride(0), 4);
    }

    #[test]
    fn zero_integral() {
        let f = PhaseField::zeros(grid1(8, 1.0));
        assert_eq!(integrate_phase(&f).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_mass() {
        let s = 0.5;
        let g = grid1(128, 8.0 * s);
        let norm = 1.0 / (2.0 * std::f64::consts::PI * s * s);
        let f = PhaseField::from_fn(g, |x, v| {
            norm * (-(x[0] * x[0] + v[0] * v[0]) / (2.0 * s * s)).exp()
        });
        assert!((integrate_phase(&f).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn plateau_mass() {
        let g = grid1(16, 2.0);
        let h = 3.0;
        let f = PhaseField::from_fn(g, |x, v| {
            if x[0].abs() < 1.0 && v[0].abs() < 0.5 {
                h
            } else {
                0.0
            }
        });
        // 8 x-cells by 4 v-cells of size 0.25²
        let vol = 8.0 * 4.0 * 0.0625;
        assert!((integrate_phase(&f).unwrap() - h * vol).abs() < 1e-12);
    }

    #[test]
    fn nan_rejected() {
        let mut f = PhaseField::zeros(grid1(4, 1.0));
        f.values[3] = f64::NAN;
        assert!(integrate_phase(&f).is_err());
    }

    #[test]
    fn norms() {
        let mut f = SpatialField::zeros(SpaceGrid::new(1, 8, 1.0), FieldKind::Generic);
        for q in [1.0, 2.0, 7.5, f64::INFINITY] {
            assert_eq!(lp_norm(&f, q).unwrap(), 0.0);
        }
        f.values[2] = -3.0;
        assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 3.0);
        assert!(lp_norm(&f, 0.5).is_err());
        // single spike: ‖f‖_q = 3·h^{1/q}
        let h: f64 = 0.25;
        assert!((lp_norm(&f, 2.0).unwrap() - 3.0 * h.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sup_norm_of_large_field_does_not_overflow() {
        let f = SpatialField::constant(SpaceGrid::new(1, 4, 1.0), FieldKind::Generic, 1e200);
        let n = lp_norm(&f, 4.0).unwrap();
        assert!(n.is_finite() && n > 1e199);
    }
}
