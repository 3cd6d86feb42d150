//! Samples and dictionaries in the spatial and frequency domains.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor_freq::{crop_filter, pad_filter_into, Fourier, SignalShape};

/// One preprocessed signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    dims: Vec<usize>,
    data: Vec<f64>,
    /// Multiplier mapping sample units to the 0..255 pixel range used by PSNR.
    pub pixel_scale: f64,
}

impl Sample {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if dims.is_empty() || dims.len() > 2 || len != data.len() {
            return Err(Error::Shape(format!(
                "sample dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            data,
            pixel_scale: 1.0,
        })
    }

    pub fn with_pixel_scale(mut self, scale: f64) -> Self {
        self.pixel_scale = scale;
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn check_shape(&self, shape: &SignalShape) -> Result<()> {
        if self.dims != shape.dims() {
            return Err(Error::Shape(format!(
                "sample dims {:?} do not match signal shape {shape}",
                self.dims
            )));
        }
        Ok(())
    }
}

/// `K` real filters of `M` elements each, stored filter after filter.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialDictionary {
    filter_dims: Vec<usize>,
    num_filters: usize,
    filters: Vec<f64>,
}

impl SpatialDictionary {
    pub fn new(filter_dims: Vec<usize>, num_filters: usize, filters: Vec<f64>) -> Result<Self> {
        let m: usize = filter_dims.iter().product();
        if filter_dims.is_empty() || filter_dims.len() > 2 || m == 0 {
            return Err(Error::Shape(format!("bad filter dims {filter_dims:?}")));
        }
        if filters.len() != m * num_filters {
            return Err(Error::Shape(format!(
                "{num_filters} filters of {m} elements need {} values, got {}",
                m * num_filters,
                filters.len()
            )));
        }
        Ok(Self {
            filter_dims,
            num_filters,
            filters,
        })
    }

    pub fn filter_dims(&self) -> &[usize] {
        &self.filter_dims
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn filter_len(&self) -> usize {
        self.filter_dims.iter().product()
    }

    pub fn filter(&self, k: usize) -> &[f64] {
        let m = self.filter_len();
        &self.filters[k * m..(k + 1) * m]
    }

    pub fn filters(&self) -> &[f64] {
        &self.filters
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.filters.chunks(self.filter_len())
    }

    /// Zero-pads and transforms every filter.
    pub fn to_freq(&self, fourier: &Arc<Fourier>) -> Result<FreqDictionary> {
        let shape = fourier.shape();
        if shape.filter_dims() != self.filter_dims.as_slice() {
            return Err(Error::Shape(format!(
                "dictionary filters {:?} do not match shape {shape}",
                self.filter_dims
            )));
        }
        let p = shape.len();
        let mut data = Vec::with_capacity(p * self.num_filters);
        let mut padded = vec![0.0; p];
        let mut spectrum = Vec::with_capacity(p);
        for filter in self.iter() {
            pad_filter_into(filter, shape, &mut padded)?;
            fourier.forward_into(&padded, &mut spectrum)?;
            data.extend_from_slice(&spectrum);
        }
        Ok(FreqDictionary {
            fourier: Arc::clone(fourier),
            num_filters: self.num_filters,
            data,
        })
    }

    /// `sum_k d_k * z_k` for spatial codes laid out column after column.
    pub fn reconstruct(&self, codes: &[f64], fourier: &Arc<Fourier>) -> Result<Vec<f64>> {
        self.to_freq(fourier)?.reconstruct(codes)
    }
}

/// Frequency-domain dictionary: column `k` is the DFT of the zero-padded
/// filter `k`, stored contiguously.
#[derive(Clone, Debug)]
pub struct FreqDictionary {
    fourier: Arc<Fourier>,
    num_filters: usize,
    data: Vec<Complex64>,
}

impl FreqDictionary {
    pub fn from_columns(
        fourier: Arc<Fourier>,
        num_filters: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != fourier.len() * num_filters {
            return Err(Error::Shape(format!(
                "frequency dictionary needs {} entries, got {}",
                fourier.len() * num_filters,
                data.len()
            )));
        }
        Ok(Self {
            fourier,
            num_filters,
            data,
        })
    }

    pub fn fourier(&self) -> &Arc<Fourier> {
        &self.fourier
    }

    pub fn shape(&self) -> &SignalShape {
        self.fourier.shape()
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn column(&self, k: usize) -> &[Complex64] {
        let p = self.fourier.len();
        &self.data[k * p..(k + 1) * p]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Inverse-transforms and crops every column.
    pub fn to_spatial(&self) -> Result<SpatialDictionary> {
        let shape = self.shape();
        let mut filters = Vec::with_capacity(shape.filter_len() * self.num_filters);
        for k in 0..self.num_filters {
            let full = self.fourier.inverse(self.column(k))?;
            filters.extend(crop_filter(&full, shape)?);
        }
        SpatialDictionary::new(shape.filter_dims().to_vec(), self.num_filters, filters)
    }

    /// `sum_k D(:,k) .* Z(:,k)` for frequency codes.
    pub fn reconstruct_freq(&self, z_freq: &[Complex64]) -> Vec<Complex64> {
        let p = self.fourier.len();
        let mut out = vec![Complex64::default(); p];
        for k in 0..self.num_filters {
            let d = self.column(k);
            let z = &z_freq[k * p..(k + 1) * p];
            for ((o, a), b) in out.iter_mut().zip(d).zip(z) {
                *o += a * b;
            }
        }
        out
    }

    /// Spatial reconstruction from spatial codes.
    pub fn reconstruct(&self, codes: &[f64]) -> Result<Vec<f64>> {
        let p = self.fourier.len();
        if codes.len() != p * self.num_filters {
            return Err(Error::Shape(format!(
                "codes have {} entries, expected {}",
                codes.len(),
                p * self.num_filters
            )));
        }
        let mut z_freq = Vec::with_capacity(codes.len());
        let mut spectrum = Vec::with_capacity(p);
        for column in codes.chunks(p) {
            self.fourier.forward_into(column, &mut spectrum)?;
            z_freq.extend_from_slice(&spectrum);
        }
        self.fourier.inverse(&self.reconstruct_freq(&z_freq))
    }
}
