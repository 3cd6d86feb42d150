//! Real <-> complex DFTs over 1-D and 2-D signals, filter zero-padding and
//! cropping, and circular convolution.
//!
//! Conventions: the forward transform is unnormalized and the inverse carries
//! the `1/P` factor. 2-D arrays are row-major and their spectra are flattened
//! row-major, so frequency `p` indexes the same position as pixel `p`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Extents of a signal and of the filters convolved with it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignalShape {
    dims: Vec<usize>,
    filter_dims: Vec<usize>,
}

impl SignalShape {
    pub fn new(dims: Vec<usize>, filter_dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::Shape(format!(
                "signals must have 1 or 2 axes, got {}",
                dims.len()
            )));
        }
        if dims.len() != filter_dims.len() {
            return Err(Error::Shape(format!(
                "signal has {} axes but filter has {}",
                dims.len(),
                filter_dims.len()
            )));
        }
        for (axis, (&n, &m)) in dims.iter().zip(&filter_dims).enumerate() {
            if n == 0 || m == 0 {
                return Err(Error::Shape(format!("axis {axis} has zero extent")));
            }
            if m > n {
                return Err(Error::Shape(format!(
                    "axis {axis}: filter extent {m} exceeds signal extent {n}"
                )));
            }
        }
        Ok(Self { dims, filter_dims })
    }

    pub fn one_d(len: usize, filter_len: usize) -> Result<Self> {
        Self::new(vec![len], vec![filter_len])
    }

    pub fn two_d(dims: (usize, usize), filter_dims: (usize, usize)) -> Result<Self> {
        Self::new(vec![dims.0, dims.1], vec![filter_dims.0, filter_dims.1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn filter_dims(&self) -> &[usize] {
        &self.filter_dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Number of signal elements, `P`.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of filter elements, `M`.
    pub fn filter_len(&self) -> usize {
        self.filter_dims.iter().product()
    }

    /// Same signal extents with different filter extents.
    pub fn with_filter_dims(&self, filter_dims: Vec<usize>) -> Result<Self> {
        Self::new(self.dims.clone(), filter_dims)
    }

    fn row_len(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    fn filter_row_len(&self) -> usize {
        *self.filter_dims.last().expect("non-empty dims")
    }

    fn check_len(&self, what: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::Shape(format!(
                "{what} has {got} entries, expected {want} for shape {self}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SignalShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| {
            v.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x")
        };
        write!(
            f,
            "{} (filter {})",
            join(&self.dims),
            join(&self.filter_dims)
        )
    }
}

/// Planned transforms for one [`SignalShape`].
///
/// Cheap to share behind an `Arc`; all methods take `&self`.
pub struct Fourier {
    shape: SignalShape,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Fourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier")
            .field("shape", &self.shape)
            .finish()
    }
}

impl Fourier {
    pub fn new(shape: &SignalShape) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape
            .dims
            .iter()
            .map(|&n| planner.plan_fft_forward(n))
            .collect();
        let inverse = shape
            .dims
            .iter()
            .map(|&n| planner.plan_fft_inverse(n))
            .collect();
        Self {
            shape: shape.clone(),
            forward,
            inverse,
        }
    }

    pub fn shape(&self) -> &SignalShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    fn transform(&self, buf: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        match self.shape.dims.as_slice() {
            [_] => plans[0].process(buf),
            [rows, cols] => {
                let (rows, cols) = (*rows, *cols);
                // Rows are contiguous; rustfft processes consecutive chunks.
                plans[1].process(buf);
                let mut column = vec![Complex64::default(); rows];
                let mut scratch = vec![Complex64::default(); plans[0].get_inplace_scratch_len()];
                for c in 0..cols {
                    for (r, slot) in column.iter_mut().enumerate() {
                        *slot = buf[r * cols + c];
                    }
                    plans[0].process_with_scratch(&mut column, &mut scratch);
                    for (r, value) in column.iter().enumerate() {
                        buf[r * cols + c] = *value;
                    }
                }
            }
            _ => unreachable!("shape validated at construction"),
        }
    }

    /// Unnormalized forward DFT of a complex buffer, in place.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) -> Result<()> {
        self.shape.check_len("spectrum", buf.len(), self.len())?;
        self.transform(buf, &self.forward);
        Ok(())
    }

    /// Inverse DFT (with the `1/P` factor) of a complex buffer, in place.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) -> Result<()> {
        self.shape.check_len("spectrum", buf.len(), self.len())?;
        self.transform(buf, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }

    pub fn forward(&self, a: &[f64]) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(a.len());
        self.forward_into(a, &mut out)?;
        Ok(out)
    }

    /// Forward DFT of a real array into a reusable buffer.
    pub fn forward_into(&self, a: &[f64], out: &mut Vec<Complex64>) -> Result<()> {
        self.shape.check_len("real array", a.len(), self.len())?;
        out.clear();
        out.extend(a.iter().map(|&v| Complex64::new(v, 0.0)));
        self.transform(out, &self.forward);
        Ok(())
    }

    pub fn inverse(&self, spectrum: &[Complex64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; spectrum.len()];
        let mut work = Vec::with_capacity(spectrum.len());
        self.inverse_into(spectrum, &mut work, &mut out)?;
        Ok(out)
    }

    /// Inverse DFT of a spectrum that must come from a real array.
    ///
    /// The imaginary residue must stay below `1e-8 * (1 + max|spectrum|)`;
    /// anything larger means the Hermitian symmetry was broken upstream.
    pub fn inverse_into(
        &self,
        spectrum: &[Complex64],
        work: &mut Vec<Complex64>,
        out: &mut [f64],
    ) -> Result<()> {
        self.shape
            .check_len("spectrum", spectrum.len(), self.len())?;
        self.shape.check_len("output", out.len(), self.len())?;
        work.clear();
        work.extend_from_slice(spectrum);
        self.inverse_in_place(work)?;

        let peak = spectrum.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let residue = work.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        let limit = 1e-8 * (1.0 + peak);
        if !(residue < limit) {
            return Err(Error::NumericalConsistency(format!(
                "inverse DFT left imaginary residue {residue:.3e} (limit {limit:.3e})"
            )));
        }
        for (o, w) in out.iter_mut().zip(work.iter()) {
            *o = w.re;
        }
        Ok(())
    }
}

pub fn forward_dft(a: &[f64], shape: &SignalShape) -> Result<Vec<Complex64>> {
    Fourier::new(shape).forward(a)
}

pub fn inverse_dft(spectrum: &[Complex64], shape: &SignalShape) -> Result<Vec<f64>> {
    Fourier::new(shape).inverse(spectrum)
}

/// Places a filter in the leading block of a zero signal-sized array.
pub fn pad_filter(d: &[f64], shape: &SignalShape) -> Result<Vec<f64>> {
    let mut out = vec![0.0; shape.len()];
    pad_filter_into(d, shape, &mut out)?;
    Ok(out)
}

pub fn pad_filter_into(d: &[f64], shape: &SignalShape, out: &mut [f64]) -> Result<()> {
    shape.check_len("filter", d.len(), shape.filter_len())?;
    shape.check_len("padded output", out.len(), shape.len())?;
    out.fill(0.0);
    let (row, frow) = (shape.row_len(), shape.filter_row_len());
    for (r, chunk) in d.chunks(frow).enumerate() {
        out[r * row..r * row + frow].copy_from_slice(chunk);
    }
    Ok(())
}

/// Keeps the leading filter block of a signal-sized array.
pub fn crop_filter(v: &[f64], shape: &SignalShape) -> Result<Vec<f64>> {
    shape.check_len("signal", v.len(), shape.len())?;
    let (row, frow) = (shape.row_len(), shape.filter_row_len());
    let frows = shape.filter_len() / frow;
    let mut out = Vec::with_capacity(shape.filter_len());
    for r in 0..frows {
        out.extend_from_slice(&v[r * row..r * row + frow]);
    }
    Ok(out)
}

/// Circular convolution of a filter with a signal-sized map, computed in the
/// frequency domain.
pub fn circular_convolve(d: &[f64], z: &[f64], shape: &SignalShape) -> Result<Vec<f64>> {
    let fourier = Fourier::new(shape);
    let mut dz = fourier.forward(&pad_filter(d, shape)?)?;
    let zf = fourier.forward(z)?;
    for (a, b) in dz.iter_mut().zip(&zf) {
        *a *= b;
    }
    fourier.inverse(&dz)
}

/// `Re <a, b>` over complex arrays.
pub fn real_inner(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn complex_norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}
