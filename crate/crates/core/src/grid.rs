//! Uniform tensor-product grids for the two boundary conditions.

use crate::error::{Error, Result};
use crate::real::Real;

/// Boundary condition applied on every face of the box domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    /// All fields wrap around; grid points are x_i = i*h with h = L/n.
    Periodic,
    /// Homogeneous Neumann walls; vertex-centered points x_i = i*h with
    /// h = L/(n-1), realized by mirror ghost values in the stencil.
    NoFlux,
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::Periodic => "periodic",
            BoundaryKind::NoFlux => "noflux",
        }
    }
}

/// A uniform grid on the box prod_i [0, L_i].
///
/// Data attached to the grid is stored row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<T> {
    shape: Vec<usize>,
    length: Vec<T>,
    bc: BoundaryKind,
}

impl<T: Real> GridSpec<T> {
    /// Build a grid; `shape` and `length` give points and extent per axis.
    ///
    /// One to three axes are supported. Production configs stick to 2 or 3;
    /// 1D grids exist for analytically checkable kernels.
    pub fn new(shape: &[usize], length: &[T], bc: BoundaryKind) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::InvalidInput {
                what: "GridSpec",
                why: format!("dimension must be 1..=3, got {}", shape.len()),
            });
        }
        if shape.len() != length.len() {
            return Err(Error::InvalidInput {
                what: "GridSpec",
                why: format!(
                    "shape has {} axes but length has {}",
                    shape.len(),
                    length.len()
                ),
            });
        }
        for (&n, &l) in shape.iter().zip(length) {
            if n < 2 {
                return Err(Error::InvalidInput {
                    what: "GridSpec",
                    why: format!("need at least 2 points per axis, got {n}"),
                });
            }
            if !(l > T::zero()) || !l.is_finite() {
                return Err(Error::InvalidInput {
                    what: "GridSpec",
                    why: format!("axis length must be finite and positive, got {l}"),
                });
            }
        }
        Ok(GridSpec {
            shape: shape.to_vec(),
            length: length.to_vec(),
            bc,
        })
    }

    /// Square/cubic shorthand: `n` points and extent `l` on every axis.
    pub fn uniform(dim: usize, n: usize, l: T, bc: BoundaryKind) -> Result<Self> {
        Self::new(&vec![n; dim], &vec![l; dim], bc)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn length(&self) -> &[T] {
        &self.length
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing along `axis`: L/n for periodic, L/(n-1) for no-flux.
    pub fn spacing(&self, axis: usize) -> T {
        let n = self.shape[axis];
        let l = self.length[axis];
        match self.bc {
            BoundaryKind::Periodic => l / T::of(n as f64),
            BoundaryKind::NoFlux => l / T::of((n - 1) as f64),
        }
    }

    /// Physical coordinate of point `i` along `axis` (x = i*h for both BCs).
    pub fn coord(&self, axis: usize, i: usize) -> T {
        T::of(i as f64) * self.spacing(axis)
    }

    /// Volume of one cell, prod_i h_i; the uniform quadrature weight.
    pub fn cell_volume(&self) -> T {
        (0..self.dim()).fold(T::one(), |acc, a| acc * self.spacing(a))
    }

    /// Discrete measure |Omega| = sum of all quadrature weights.
    ///
    /// Per axis the weights sum to n*h (periodic) or (n-1)*h (trapezoid),
    /// both equal to the axis extent up to rounding.
    pub fn measure(&self) -> T {
        let mut m = T::one();
        for (a, &n) in self.shape.iter().enumerate() {
            let count = match self.bc {
                BoundaryKind::Periodic => n,
                BoundaryKind::NoFlux => n - 1,
            };
            m = m * (T::of(count as f64) * self.spacing(a));
        }
        m
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.shape[a + 1];
        }
        s
    }

    /// Trapezoid weight factor (1, 1/2, 1/4, 1/8 ...) for a multi-index;
    /// always 1 for periodic grids.
    pub fn boundary_factor(&self, idx: &[usize]) -> T {
        match self.bc {
            BoundaryKind::Periodic => T::one(),
            BoundaryKind::NoFlux => {
                let mut f = T::one();
                let half = T::of(0.5);
                for (a, &i) in idx.iter().enumerate() {
                    if i == 0 || i + 1 == self.shape[a] {
                        f = f * half;
                    }
                }
                f
            }
        }
    }
}
