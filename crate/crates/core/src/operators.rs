//! Linear forward operators `K` with their adjoints.
//!
//! Every operator is immutable after construction. Heavy payloads (matrices,
//! kernel spectra, FFT plans) sit behind `Arc`, so cloning an operator is
//! cheap and clones can be shared across threads.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};

pub type Vector = DVector<f64>;

/// Grids at or below this length use the direct cyclic sum instead of the FFT.
const DIRECT_CONV_MAX_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Dense,
    CircularConv1d,
    CircularConv2d,
    Composition,
    HatSynthesis,
    Scaled,
}

#[derive(Clone)]
pub enum LinearOperator {
    Dense(Arc<DMatrix<f64>>),
    CircularConv1d(CircularConvolution),
    CircularConv2d(CircularConvolution2d),
    /// `outer ∘ inner`, i.e. `u ↦ outer(inner(u))`.
    Composition {
        outer: Arc<LinearOperator>,
        inner: Arc<LinearOperator>,
    },
    HatSynthesis(HatSynthesis),
    Scaled {
        factor: f64,
        op: Arc<LinearOperator>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearOperator {
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::invalid("matrix", "must have at least one row and column"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dense matrix"));
        }
        Ok(LinearOperator::Dense(Arc::new(matrix)))
    }

    pub fn identity(n: usize) -> Self {
        LinearOperator::Dense(Arc::new(DMatrix::identity(n, n)))
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        LinearOperator::Dense(Arc::new(DMatrix::zeros(rows, cols)))
    }

    pub fn circular_conv_1d(kernel: Vec<f64>) -> Result<Self> {
        CircularConvolution::new(kernel).map(LinearOperator::CircularConv1d)
    }

    pub fn circular_conv_2d(rows: usize, cols: usize, kernel: Vec<f64>) -> Result<Self> {
        CircularConvolution2d::new(rows, cols, kernel).map(LinearOperator::CircularConv2d)
    }

    /// Builds `outer ∘ inner`. Fails unless `inner.range_dim() == outer.domain_dim()`.
    pub fn compose(outer: LinearOperator, inner: LinearOperator) -> Result<Self> {
        check_len("composition", outer.domain_dim(), inner.range_dim())?;
        Ok(LinearOperator::Composition {
            outer: Arc::new(outer),
            inner: Arc::new(inner),
        })
    }

    pub fn hat_synthesis(n_coeffs: usize, grid_size: usize) -> Result<Self> {
        HatSynthesis::new(n_coeffs, grid_size).map(LinearOperator::HatSynthesis)
    }

    pub fn scaled(factor: f64, op: LinearOperator) -> Result<Self> {
        if !factor.is_finite() {
            return Err(Error::NonFinite("scale factor"));
        }
        Ok(LinearOperator::Scaled {
            factor,
            op: Arc::new(op),
        })
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            LinearOperator::Dense(_) => OperatorKind::Dense,
            LinearOperator::CircularConv1d(_) => OperatorKind::CircularConv1d,
            LinearOperator::CircularConv2d(_) => OperatorKind::CircularConv2d,
            LinearOperator::Composition { .. } => OperatorKind::Composition,
            LinearOperator::HatSynthesis(_) => OperatorKind::HatSynthesis,
            LinearOperator::Scaled { .. } => OperatorKind::Scaled,
        }
    }

    pub fn domain_dim(&self) -> usize {
        match self {
            LinearOperator::Dense(m) => m.ncols(),
            LinearOperator::CircularConv1d(c) => c.len(),
            LinearOperator::CircularConv2d(c) => c.rows * c.cols,
            LinearOperator::Composition { inner, .. } => inner.domain_dim(),
            LinearOperator::HatSynthesis(h) => h.n_coeffs,
            LinearOperator::Scaled { op, .. } => op.domain_dim(),
        }
    }

    pub fn range_dim(&self) -> usize {
        match self {
            LinearOperator::Dense(m) => m.nrows(),
            LinearOperator::CircularConv1d(c) => c.len(),
            LinearOperator::CircularConv2d(c) => c.rows * c.cols,
            LinearOperator::Composition { outer, .. } => outer.range_dim(),
            LinearOperator::HatSynthesis(h) => h.grid_size,
            LinearOperator::Scaled { op, .. } => op.range_dim(),
        }
    }

    /// Computes `K u`.
    pub fn apply(&self, u: &Vector) -> Result<Vector> {
        check_len("apply", self.domain_dim(), u.len())?;
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("apply input"));
        }
        Ok(self.forward(u))
    }

    /// Computes `K* v`.
    pub fn apply_adjoint(&self, v: &Vector) -> Result<Vector> {
        check_len("apply_adjoint", self.range_dim(), v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("apply_adjoint input"));
        }
        Ok(self.backward(v))
    }

    fn forward(&self, u: &Vector) -> Vector {
        match self {
            LinearOperator::Dense(m) => m.as_ref() * u,
            LinearOperator::CircularConv1d(c) => Vector::from_vec(c.apply(u.as_slice())),
            LinearOperator::CircularConv2d(c) => Vector::from_vec(c.apply(u.as_slice())),
            LinearOperator::Composition { outer, inner } => outer.forward(&inner.forward(u)),
            LinearOperator::HatSynthesis(h) => Vector::from_vec(h.synthesize(u.as_slice())),
            LinearOperator::Scaled { factor, op } => op.forward(u) * *factor,
        }
    }

    fn backward(&self, v: &Vector) -> Vector {
        match self {
            LinearOperator::Dense(m) => m.tr_mul(v),
            LinearOperator::CircularConv1d(c) => Vector::from_vec(c.apply_adjoint(v.as_slice())),
            LinearOperator::CircularConv2d(c) => Vector::from_vec(c.apply_adjoint(v.as_slice())),
            LinearOperator::Composition { outer, inner } => inner.backward(&outer.backward(v)),
            LinearOperator::HatSynthesis(h) => Vector::from_vec(h.analyze(v.as_slice())),
            LinearOperator::Scaled { factor, op } => op.backward(v) * *factor,
        }
    }

    /// Power iteration on `K*K`, returning the square root of the Rayleigh
    /// quotient. The estimate never exceeds the true norm.
    ///
    /// The start vector is a fixed, non-constant vector: the constant vector is
    /// an eigenvector of `K*K` for every circular convolution and would lock the
    /// iteration onto the zero-frequency response.
    pub fn estimate_norm(&self, max_iters: usize, tol: f64) -> Result<NormEstimate> {
        if max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        let n = self.domain_dim();
        let mut x = Vector::from_fn(n, |i, _| 1.0 + 0.5 * (1.0 + i as f64).sin());
        x /= x.norm();

        let mut previous = f64::NAN;
        for k in 1..=max_iters {
            let kx = self.forward(&x);
            let value = kx.norm();
            let w = self.backward(&kx);
            let w_norm = w.norm();
            if value == 0.0 || w_norm == 0.0 {
                return Ok(NormEstimate {
                    value,
                    iterations: k,
                    converged: true,
                });
            }
            if (value - previous).abs() <= tol * value {
                return Ok(NormEstimate {
                    value,
                    iterations: k,
                    converged: true,
                });
            }
            previous = value;
            x = w / w_norm;
        }
        Ok(NormEstimate {
            value: previous,
            iterations: max_iters,
            converged: false,
        })
    }
}

impl fmt::Debug for LinearOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearOperator::Composition { outer, inner } => f
                .debug_struct("Composition")
                .field("outer", outer)
                .field("inner", inner)
                .finish(),
            LinearOperator::Scaled { factor, op } => f
                .debug_struct("Scaled")
                .field("factor", factor)
                .field("op", op)
                .finish(),
            other => write!(f, "{:?}({}x{})", other.kind(), other.range_dim(), other.domain_dim()),
        }
    }
}

fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Cyclic convolution `(κ ⊛ u)_i = Σ_j κ_{(i-j) mod n} u_j` on a 1-D grid.
#[derive(Clone)]
pub struct CircularConvolution {
    kernel: Arc<[f64]>,
    spectrum: Arc<[Complex64]>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CircularConvolution {
    pub fn new(kernel: Vec<f64>) -> Result<Self> {
        if kernel.is_empty() {
            return Err(Error::invalid("kernel", "must not be empty"));
        }
        if kernel.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("convolution kernel"));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(kernel.len());
        let inverse = planner.plan_fft_inverse(kernel.len());
        let mut spectrum = to_complex(&kernel);
        forward.process(&mut spectrum);
        Ok(Self {
            kernel: kernel.into(),
            spectrum: spectrum.into(),
            forward,
            inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Discrete Fourier coefficients of the kernel.
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        if self.len() <= DIRECT_CONV_MAX_LEN {
            self.apply_direct(u)
        } else {
            self.apply_fft(u)
        }
    }

    pub fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
        if self.len() <= DIRECT_CONV_MAX_LEN {
            self.apply_adjoint_direct(v)
        } else {
            self.apply_adjoint_fft(v)
        }
    }

    pub fn apply_fft(&self, u: &[f64]) -> Vec<f64> {
        self.filter(u, false)
    }

    pub fn apply_adjoint_fft(&self, v: &[f64]) -> Vec<f64> {
        self.filter(v, true)
    }

    pub fn apply_direct(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.kernel[(i + n - j) % n] * u[j]).sum())
            .collect()
    }

    /// Cyclic correlation, the adjoint of [`apply_direct`](Self::apply_direct).
    pub fn apply_adjoint_direct(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| (0..n).map(|i| self.kernel[(i + n - j) % n] * v[i]).sum())
            .collect()
    }

    fn filter(&self, x: &[f64], conjugate: bool) -> Vec<f64> {
        let n = self.len();
        let mut buf = to_complex(x);
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(self.spectrum.iter()) {
            *b *= if conjugate { s.conj() } else { *s };
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Cyclic convolution on a `rows × cols` grid stored row-major, kernel origin at `(0, 0)`.
#[derive(Clone)]
pub struct CircularConvolution2d {
    rows: usize,
    cols: usize,
    kernel: Arc<[f64]>,
    spectrum: Arc<[Complex64]>,
    /// `spectrum` in column-major order.
    spectrum_t: Arc<[Complex64]>,
    row_forward: Arc<dyn Fft<f64>>,
    row_inverse: Arc<dyn Fft<f64>>,
    col_forward: Arc<dyn Fft<f64>>,
    col_inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl CircularConvolution2d {
    pub fn new(rows: usize, cols: usize, kernel: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("grid", "rows and cols must be positive"));
        }
        check_len("2-D convolution kernel", rows * cols, kernel.len())?;
        if kernel.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("convolution kernel"));
        }
        let mut planner = FftPlanner::new();
        let row_forward = planner.plan_fft_forward(cols);
        let row_inverse = planner.plan_fft_inverse(cols);
        let col_forward = planner.plan_fft_forward(rows);
        let col_inverse = planner.plan_fft_inverse(rows);
        let scratch_len = [&row_forward, &row_inverse, &col_forward, &col_inverse]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);

        let mut spectrum = to_complex(&kernel);
        let mut spectrum_t = vec![Complex64::default(); spectrum.len()];
        let mut scratch = vec![Complex64::default(); scratch_len];
        row_forward.process_with_scratch(&mut spectrum, &mut scratch);
        transpose(&spectrum, &mut spectrum_t, rows, cols);
        col_forward.process_with_scratch(&mut spectrum_t, &mut scratch);
        transpose(&spectrum_t, &mut spectrum, cols, rows);
        Ok(Self {
            rows,
            cols,
            kernel: kernel.into(),
            spectrum: spectrum.into(),
            spectrum_t: spectrum_t.into(),
            row_forward,
            row_inverse,
            col_forward,
            col_inverse,
            scratch_len,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.filter(u, false)
    }

    pub fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
        self.filter(v, true)
    }

    pub fn apply_direct(&self, u: &[f64]) -> Vec<f64> {
        let (r, c) = (self.rows, self.cols);
        let mut out = vec![0.0; r * c];
        for a in 0..r {
            for b in 0..c {
                let ub = u[a * c + b];
                if ub == 0.0 {
                    continue;
                }
                for i in 0..r {
                    let ki = (i + r - a) % r;
                    for j in 0..c {
                        out[i * c + j] += self.kernel[ki * c + (j + c - b) % c] * ub;
                    }
                }
            }
        }
        out
    }

    fn filter(&self, x: &[f64], conjugate: bool) -> Vec<f64> {
        let (r, c) = (self.rows, self.cols);
        let mut buf = to_complex(x);
        let mut transposed = vec![Complex64::default(); buf.len()];
        let mut scratch = vec![Complex64::default(); self.scratch_len];
        // rustfft transforms each consecutive chunk of `cols` entries; the
        // spectrum is applied in the column-major layout between the passes
        self.row_forward.process_with_scratch(&mut buf, &mut scratch);
        transpose(&buf, &mut transposed, r, c);
        self.col_forward.process_with_scratch(&mut transposed, &mut scratch);
        for (b, s) in transposed.iter_mut().zip(self.spectrum_t.iter()) {
            *b *= if conjugate { s.conj() } else { *s };
        }
        self.col_inverse.process_with_scratch(&mut transposed, &mut scratch);
        transpose(&transposed, &mut buf, c, r);
        self.row_inverse.process_with_scratch(&mut buf, &mut scratch);
        let scale = 1.0 / (r * c) as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            dst[j * rows + i] = src[i * cols + j];
        }
    }
}

/// Synthesis with piecewise-linear tent functions on a circular grid.
///
/// Coefficient `j` is placed at grid node `j * spacing`, where
/// `spacing = grid_size / n_coeffs`; its tent has peak 1 and falls linearly to
/// zero at distance `spacing / 2`.
#[derive(Clone, Debug)]
pub struct HatSynthesis {
    n_coeffs: usize,
    grid_size: usize,
    spacing: usize,
    /// Nonzero tent samples as `(offset, value)`.
    taps: Arc<[(isize, f64)]>,
}

impl HatSynthesis {
    pub fn new(n_coeffs: usize, grid_size: usize) -> Result<Self> {
        if n_coeffs == 0 {
            return Err(Error::invalid("n_coeffs", "must be at least 1"));
        }
        if grid_size < n_coeffs || grid_size % n_coeffs != 0 {
            return Err(Error::invalid(
                "grid_size",
                format!("{grid_size} is not a positive multiple of n_coeffs = {n_coeffs}"),
            ));
        }
        let spacing = grid_size / n_coeffs;
        let half_width = spacing as f64 / 2.0;
        let reach = spacing as isize / 2;
        let taps: Vec<(isize, f64)> = (-reach..=reach)
            .filter_map(|d| {
                let value = 1.0 - d.unsigned_abs() as f64 / half_width;
                (value > 0.0).then_some((d, value))
            })
            .collect();
        Ok(Self {
            n_coeffs,
            grid_size,
            spacing,
            taps: taps.into(),
        })
    }

    pub fn n_coeffs(&self) -> usize {
        self.n_coeffs
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    fn node(&self, j: usize, offset: isize) -> usize {
        let n = self.grid_size as isize;
        ((j * self.spacing) as isize + offset).rem_euclid(n) as usize
    }

    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid_size];
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for &(d, w) in self.taps.iter() {
                out[self.node(j, d)] += w * c;
            }
        }
        out
    }

    fn analyze(&self, signal: &[f64]) -> Vec<f64> {
        (0..self.n_coeffs)
            .map(|j| self.taps.iter().map(|&(d, w)| w * signal[self.node(j, d)]).sum())
            .collect()
    }
}
