//! Grid scalar fields, weighted inner products and the discrete Laplacian.
//!
//! Two conventions fixed here carry every energy identity downstream:
//! the quadrature pairs with the stencil so that (lap f, g) = (f, lap g)
//! holds to rounding under both boundary conditions, and the Dirichlet
//! energy is *defined* as (-lap f, f) rather than via a gradient stencil.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, GridSpec};
use crate::real::Real;

/// Neumaier-compensated accumulator; all reductions sum in flat index
/// order with compensation, which keeps them deterministic and accurate
/// enough for the exact-identity checks.
#[derive(Clone, Copy)]
pub(crate) struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> CompensatedSum<T> {
    pub(crate) fn new() -> Self {
        CompensatedSum {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(self) -> T {
        self.sum + self.comp
    }
}

/// A real-valued function on a grid; the carrier of every unknown.
#[derive(Clone, Debug)]
pub struct ScalarField<T: Real> {
    grid: Arc<GridSpec<T>>,
    data: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &Arc<GridSpec<T>>) -> Self {
        ScalarField {
            grid: Arc::clone(grid),
            data: vec![T::zero(); grid.len()],
        }
    }

    pub fn constant(grid: &Arc<GridSpec<T>>, value: T) -> Self {
        ScalarField {
            grid: Arc::clone(grid),
            data: vec![value; grid.len()],
        }
    }

    /// Fill from a function of the multi-index (row-major, last axis fastest).
    pub fn from_fn(grid: &Arc<GridSpec<T>>, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let dim = grid.dim();
        let shape = grid.shape().to_vec();
        let mut idx = vec![0usize; dim];
        let mut data = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            data.push(f(&idx));
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        ScalarField {
            grid: Arc::clone(grid),
            data,
        }
    }

    /// Fill from a function of the physical coordinates.
    pub fn from_coords(grid: &Arc<GridSpec<T>>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let dim = grid.dim();
        let mut x = vec![T::zero(); dim];
        Self::from_fn(grid, |idx| {
            for a in 0..dim {
                x[a] = grid.coord(a, idx[a]);
            }
            f(&x)
        })
    }

    pub fn from_vec(grid: &Arc<GridSpec<T>>, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidInput {
                what: "ScalarField",
                why: format!("data length {} != grid size {}", data.len(), grid.len()),
            });
        }
        Ok(ScalarField {
            grid: Arc::clone(grid),
            data,
        })
    }

    pub fn grid(&self) -> &Arc<GridSpec<T>> {
        &self.grid
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn check_same_grid(&self, other: &Self, what: &'static str) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.grid.shape(),
                other.grid.shape()
            )))
        }
    }

    fn assert_same_grid(&self, other: &Self, what: &'static str) {
        self.check_same_grid(other, what)
            .unwrap_or_else(|e| panic!("{e}"));
    }

    /// Weighted sum of `f(i)` over all points, weights from the quadrature.
    fn weighted_sum(&self, mut term: impl FnMut(usize) -> T) -> T {
        let mut acc = CompensatedSum::new();
        match self.grid.bc() {
            BoundaryKind::Periodic => {
                for i in 0..self.data.len() {
                    acc.add(term(i));
                }
                acc.value() * self.grid.cell_volume()
            }
            BoundaryKind::NoFlux => {
                // Per-axis trapezoid factors: 1/2 on faces, products on
                // edges/corners.
                let shape = self.grid.shape();
                let dim = shape.len();
                let half = T::of(0.5);
                let mut idx = vec![0usize; dim];
                for i in 0..self.data.len() {
                    let mut w = T::one();
                    for a in 0..dim {
                        if idx[a] == 0 || idx[a] + 1 == shape[a] {
                            w = w * half;
                        }
                    }
                    acc.add(w * term(i));
                    for a in (0..dim).rev() {
                        idx[a] += 1;
                        if idx[a] < shape[a] {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
                acc.value() * self.grid.cell_volume()
            }
        }
    }

    /// Discrete L2 inner product (g1, g2) with the grid's quadrature.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_same_grid(other, "inner")?;
        Ok(self.weighted_sum(|i| self.data[i] * other.data[i]))
    }

    /// Integral of the field over the domain, (f, 1).
    pub fn integral(&self) -> T {
        self.weighted_sum(|i| self.data[i])
    }

    pub fn norm_l2(&self) -> T {
        self.weighted_sum(|i| self.data[i] * self.data[i]).sqrt()
    }

    /// Quadrature mean, (f, 1) / |Omega|; the denominator is the summed
    /// weight so that constants are reproduced to rounding.
    pub fn mean(&self) -> T {
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        match self.grid.bc() {
            BoundaryKind::Periodic => {
                for &v in &self.data {
                    num.add(v);
                }
                num.value() / T::of(self.data.len() as f64)
            }
            BoundaryKind::NoFlux => {
                let shape = self.grid.shape();
                let dim = shape.len();
                let half = T::of(0.5);
                let mut idx = vec![0usize; dim];
                for &v in &self.data {
                    let mut w = T::one();
                    for a in 0..dim {
                        if idx[a] == 0 || idx[a] + 1 == shape[a] {
                            w = w * half;
                        }
                    }
                    num.add(w * v);
                    den.add(w);
                    for a in (0..dim).rev() {
                        idx[a] += 1;
                        if idx[a] < shape[a] {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
                num.value() / den.value()
            }
        }
    }

    /// f - mean(f); the result's mean vanishes to rounding.
    pub fn project_zero_mean(&self) -> Self {
        let m = self.mean();
        let mut out = self.clone();
        for v in &mut out.data {
            *v -= m;
        }
        out
    }

    /// Second-order 2*dim+1 point Laplacian; periodic wrap or mirror ghosts.
    pub fn laplacian(&self) -> Self {
        let grid = &self.grid;
        let dim = grid.dim();
        let shape = grid.shape();
        let strides = grid.strides();
        let mut out = vec![T::zero(); self.data.len()];
        let f = &self.data;
        let two = T::of(2.0);

        for axis in 0..dim {
            let n = shape[axis];
            let stride = strides[axis];
            let h = grid.spacing(axis);
            let inv_h2 = T::one() / (h * h);
            let block = n * stride;
            let mut block_start = 0;
            while block_start < f.len() {
                for lane in block_start..block_start + stride {
                    for i in 0..n {
                        let j = lane + i * stride;
                        let (jm, jp) = match grid.bc() {
                            BoundaryKind::Periodic => (
                                if i == 0 { lane + (n - 1) * stride } else { j - stride },
                                if i + 1 == n { lane } else { j + stride },
                            ),
                            BoundaryKind::NoFlux => (
                                if i == 0 { lane + stride } else { j - stride },
                                if i + 1 == n { lane + (n - 2) * stride } else { j + stride },
                            ),
                        };
                        out[j] += (f[jm] - two * f[j] + f[jp]) * inv_h2;
                    }
                }
                block_start += block;
            }
        }
        ScalarField {
            grid: Arc::clone(grid),
            data: out,
        }
    }

    /// Summation-by-parts Dirichlet energy, (-lap f, f).
    ///
    /// This is the one and only discrete meaning of ||grad f||^2 anywhere
    /// in the energies; the dissipation identities rely on it.
    pub fn dirichlet_energy(&self) -> T {
        let lap = self.laplacian();
        -self.inner(&lap).expect("same grid")
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn min_max(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for &v in &self.data {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        ScalarField {
            grid: Arc::clone(&self.grid),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(T, T) -> T) -> Self {
        self.assert_same_grid(other, "zip_map");
        ScalarField {
            grid: Arc::clone(&self.grid),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Pointwise product.
    pub fn mul_field(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// self += a * other
    pub fn axpy(&mut self, a: T, other: &Self) {
        self.assert_same_grid(other, "axpy");
        for (v, &o) in self.data.iter_mut().zip(&other.data) {
            *v += a * o;
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        self.map(|v| a * v)
    }

    pub fn shifted(&self, c: T) -> Self {
        self.map(|v| v + c)
    }

    /// sum_k a_k * f_k over matching grids.
    pub fn lin_comb(terms: &[(T, &ScalarField<T>)]) -> Self {
        let (a0, f0) = terms.first().expect("at least one term");
        let mut out = f0.scaled(*a0);
        for &(a, f) in &terms[1..] {
            out.axpy(a, f);
        }
        out
    }
}

impl<T: Real> Add for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn add(self, rhs: Self) -> ScalarField<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn sub(self, rhs: Self) -> ScalarField<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Real> Mul<T> for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn mul(self, rhs: T) -> ScalarField<T> {
        self.scaled(rhs)
    }
}

impl<T: Real> Neg for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn neg(self) -> ScalarField<T> {
        self.map(|v| -v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid1d(n: usize, l: f64, bc: BoundaryKind) -> Arc<GridSpec<f64>> {
        Arc::new(GridSpec::new(&[n], &[l], bc).unwrap())
    }

    fn unit_square(n: usize, bc: BoundaryKind) -> Arc<GridSpec<f64>> {
        Arc::new(GridSpec::new(&[n, n], &[1.0, 1.0], bc).unwrap())
    }

    #[test]
    fn inner_of_ones_is_measure() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::NoFlux] {
            let g = unit_square(9, bc);
            let one = ScalarField::constant(&g, 1.0);
            assert!((one.inner(&one).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn inner_of_constants() {
        let g = unit_square(8, BoundaryKind::Periodic);
        let f = ScalarField::constant(&g, 2.0);
        let h = ScalarField::constant(&g, 3.0);
        assert!((f.inner(&h).unwrap() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn inner_1d_eigenfield() {
        // f = [0,1,0,-1] on periodic L=2pi, n=4: (f,f) = (pi/2)*2 = pi
        let g = grid1d(4, 2.0 * PI, BoundaryKind::Periodic);
        let f = ScalarField::from_vec(&g, vec![0.0, 1.0, 0.0, -1.0]).unwrap();
        assert!((f.inner(&f).unwrap() - PI).abs() < 1e-14);
    }

    #[test]
    fn inner_rejects_grid_mismatch() {
        let f = ScalarField::constant(&unit_square(8, BoundaryKind::Periodic), 1.0);
        let h = ScalarField::constant(&unit_square(9, BoundaryKind::Periodic), 1.0);
        assert!(matches!(f.inner(&h), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn mean_and_projection() {
        let g = grid1d(4, 1.0, BoundaryKind::Periodic);
        let f = ScalarField::from_vec(&g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((f.mean() - 2.5).abs() < 1e-15);
        let p = f.project_zero_mean();
        for (got, want) in p.data().iter().zip([-1.5, -0.5, 0.5, 1.5]) {
            assert!((got - want).abs() < 1e-15);
        }
        // constants project to (numerically) zero
        for bc in [BoundaryKind::Periodic, BoundaryKind::NoFlux] {
            let g = unit_square(11, bc);
            let c = ScalarField::constant(&g, 7.25);
            assert!((c.mean() - 7.25).abs() < 1e-14);
            assert!(c.project_zero_mean().max_abs() <= 1e-14 * 7.25);
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::NoFlux] {
            let g = unit_square(8, bc);
            let c = ScalarField::constant(&g, 3.5);
            assert_eq!(c.laplacian().max_abs(), 0.0);
        }
    }

    #[test]
    fn laplacian_periodic_eigenfield() {
        // k=1 mode on n=4, L=2pi: eigenvalue -(2-2cos(pi/2))/h^2 = -8/pi^2
        let g = grid1d(4, 2.0 * PI, BoundaryKind::Periodic);
        let f = ScalarField::from_vec(&g, vec![0.0, 1.0, 0.0, -1.0]).unwrap();
        let lam = -8.0 / (PI * PI);
        let lap = f.laplacian();
        for (got, want) in lap.data().iter().zip(f.data()) {
            assert!((got - lam * want).abs() < 1e-14);
        }
        // Dirichlet energy = |eigenvalue| * ||f||^2 = (8/pi^2)*pi
        assert!((f.dirichlet_energy() - (8.0 / (PI * PI)) * PI).abs() < 1e-13);
    }

    #[test]
    fn laplacian_noflux_mirror_ghosts() {
        // f=[1,2,3] with mirror ghosts: [2, 0, -2]/h^2
        let g = grid1d(3, 1.0, BoundaryKind::NoFlux);
        let h = g.spacing(0);
        let f = ScalarField::from_vec(&g, vec![1.0, 2.0, 3.0]).unwrap();
        let lap = f.laplacian();
        let want = [2.0 / (h * h), 0.0, -2.0 / (h * h)];
        for (got, want) in lap.data().iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_energy_of_constant_is_zero() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::NoFlux] {
            let g = unit_square(8, bc);
            let c = ScalarField::constant(&g, 2.0);
            assert!(c.dirichlet_energy().abs() <= 1e-12 * c.norm_l2().powi(2));
        }
    }
}
