//! Spectral diagonalization of the discrete Laplacian and the zero-mean
//! inverse Laplacian.
//!
//! Periodic grids transform with a plain DFT per axis. No-flux grids are
//! evenly reflected to 2(n-1) points per axis first; the periodic stencil on
//! the doubled grid restricted to even fields *is* the mirror-ghost stencil,
//! so one FFT path diagonalizes both boundary conditions with eigenvalues
//! -(2 - 2 cos(2 pi k / m)) / h^2.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{BoundaryKind, GridSpec};
use crate::real::Real;

/// Relative slack on the zero-mean precondition of the inverse Laplacian.
pub const MEAN_TOL: f64 = 1e-10;

/// Immutable transform plan for one grid; shareable across threads.
pub struct SpectralPlan<T: Real> {
    grid: Arc<GridSpec<T>>,
    /// Transform length per axis: n (periodic) or 2(n-1) (no-flux).
    ext_shape: Vec<usize>,
    ext_strides: Vec<usize>,
    ext_len: usize,
    /// Laplacian eigenvalue per extended-grid mode, row-major.
    eigenvalues: Vec<T>,
    fwd: Vec<Arc<dyn Fft<T>>>,
    inv: Vec<Arc<dyn Fft<T>>>,
}

impl<T: Real> SpectralPlan<T> {
    pub fn new(grid: &Arc<GridSpec<T>>) -> Self {
        let dim = grid.dim();
        let ext_shape: Vec<usize> = (0..dim)
            .map(|a| match grid.bc() {
                BoundaryKind::Periodic => grid.shape()[a],
                BoundaryKind::NoFlux => 2 * (grid.shape()[a] - 1),
            })
            .collect();
        let mut ext_strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            ext_strides[a] = ext_strides[a + 1] * ext_shape[a + 1];
        }
        let ext_len: usize = ext_shape.iter().product();

        let mut planner = FftPlanner::new();
        let fwd: Vec<_> = ext_shape
            .iter()
            .map(|&m| planner.plan_fft_forward(m))
            .collect();
        let inv: Vec<_> = ext_shape
            .iter()
            .map(|&m| planner.plan_fft_inverse(m))
            .collect();

        // Per-axis symbol of the three-point stencil on the (extended) grid.
        let axis_eigs: Vec<Vec<T>> = (0..dim)
            .map(|a| {
                let m = ext_shape[a];
                let h = grid.spacing(a);
                let inv_h2 = T::one() / (h * h);
                (0..m)
                    .map(|k| {
                        let angle = T::of(2.0) * T::PI() * T::of(k as f64) / T::of(m as f64);
                        -(T::of(2.0) - T::of(2.0) * angle.cos()) * inv_h2
                    })
                    .collect()
            })
            .collect();

        let mut eigenvalues = vec![T::zero(); ext_len];
        let mut idx = vec![0usize; dim];
        for lam in eigenvalues.iter_mut() {
            let mut sum = T::zero();
            for a in 0..dim {
                sum += axis_eigs[a][idx[a]];
            }
            *lam = sum;
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < ext_shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }

        SpectralPlan {
            grid: Arc::clone(grid),
            ext_shape,
            ext_strides,
            ext_len,
            eigenvalues,
            fwd,
            inv,
        }
    }

    pub fn grid(&self) -> &Arc<GridSpec<T>> {
        &self.grid
    }

    /// Eigenvalues of the discrete Laplacian, one per (extended) mode;
    /// the k = 0 entry is exactly zero, all others negative.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    fn check_grid(&self, f: &ScalarField<T>, what: &'static str) -> Result<()> {
        if Arc::ptr_eq(f.grid(), &self.grid) || **f.grid() == *self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: plan built for {:?}, field on {:?}",
                self.grid.shape(),
                f.grid().shape()
            )))
        }
    }

    /// Embed the field into the (possibly reflected) complex buffer.
    fn embed(&self, f: &ScalarField<T>) -> Vec<Complex<T>> {
        let data = f.data();
        match self.grid.bc() {
            BoundaryKind::Periodic => data
                .iter()
                .map(|&v| Complex::new(v, T::zero()))
                .collect(),
            BoundaryKind::NoFlux => {
                let dim = self.grid.dim();
                let shape = self.grid.shape();
                let strides = self.grid.strides();
                let mut buf = vec![Complex::new(T::zero(), T::zero()); self.ext_len];
                let mut idx = vec![0usize; dim];
                for slot in buf.iter_mut() {
                    let mut src = 0usize;
                    for a in 0..dim {
                        let e = idx[a];
                        let s = if e < shape[a] {
                            e
                        } else {
                            self.ext_shape[a] - e
                        };
                        src += s * strides[a];
                    }
                    *slot = Complex::new(data[src], T::zero());
                    for a in (0..dim).rev() {
                        idx[a] += 1;
                        if idx[a] < self.ext_shape[a] {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
                buf
            }
        }
    }

    /// Restrict the complex buffer back to the grid (real parts).
    fn restrict(&self, buf: &[Complex<T>]) -> ScalarField<T> {
        match self.grid.bc() {
            BoundaryKind::Periodic => {
                let data = buf.iter().map(|c| c.re).collect();
                ScalarField::from_vec(&self.grid, data).expect("length matches")
            }
            BoundaryKind::NoFlux => {
                let dim = self.grid.dim();
                ScalarField::from_fn(&self.grid, |grid_idx| {
                    let mut e = 0usize;
                    for a in 0..dim {
                        e += grid_idx[a] * self.ext_strides[a];
                    }
                    buf[e].re
                })
            }
        }
    }

    fn transform_axes(&self, buf: &mut [Complex<T>], plans: &[Arc<dyn Fft<T>>]) {
        let dim = self.ext_shape.len();
        for a in 0..dim {
            let m = self.ext_shape[a];
            let stride = self.ext_strides[a];
            let fft = &plans[a];
            let mut scratch =
                vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
            if stride == 1 {
                // last axis: lines are contiguous, one batched call
                fft.process_with_scratch(buf, &mut scratch);
            } else {
                let mut line = vec![Complex::new(T::zero(), T::zero()); m];
                let block = m * stride;
                let mut block_start = 0;
                while block_start < buf.len() {
                    for lane in block_start..block_start + stride {
                        for i in 0..m {
                            line[i] = buf[lane + i * stride];
                        }
                        fft.process_with_scratch(&mut line, &mut scratch);
                        for i in 0..m {
                            buf[lane + i * stride] = line[i];
                        }
                    }
                    block_start += block;
                }
            }
        }
    }

    /// Apply a real function of the Laplacian symbol: out-hat = g(lambda) f-hat.
    ///
    /// The closure receives lambda = 0 for the constant mode and is expected
    /// to decide its fate (return 0 to annihilate it, 1 to keep it).
    pub fn apply_symbol(&self, f: &ScalarField<T>, g: impl Fn(T) -> T) -> Result<ScalarField<T>> {
        self.check_grid(f, "apply_symbol")?;
        let mut buf = self.embed(f);
        self.transform_axes(&mut buf, &self.fwd);
        for (c, &lam) in buf.iter_mut().zip(&self.eigenvalues) {
            let factor = g(lam);
            *c = Complex::new(c.re * factor, c.im * factor);
        }
        self.transform_axes(&mut buf, &self.inv);
        let norm = T::one() / T::of(self.ext_len as f64);
        for c in buf.iter_mut() {
            *c = Complex::new(c.re * norm, c.im * norm);
        }
        Ok(self.restrict(&buf))
    }

    /// Zero-mean solution v of lap v = f - mean(f).
    ///
    /// The caller is expected to have projected f; a mean above
    /// `MEAN_TOL * max(1, max|f|)` is a usage error.
    pub fn inv_laplacian(&self, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check_grid(f, "inv_laplacian")?;
        let mean = f.mean();
        let tol = T::of(MEAN_TOL) * T::one().max(f.max_abs());
        if mean.abs() > tol {
            return Err(Error::NonZeroMean {
                what: "inv_laplacian",
                mean: mean.as_f64(),
                tol: tol.as_f64(),
            });
        }
        let v = self.apply_symbol(f, |lam| {
            if lam == T::zero() {
                T::zero()
            } else {
                T::one() / lam
            }
        })?;
        Ok(v.project_zero_mean())
    }
}
