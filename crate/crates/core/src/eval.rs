//! Test-set objective, PSNR and filter mosaics.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use image::GrayImage;

use crate::coding::{infer_code, CodingConfig};
use crate::error::{Error, Result};
use crate::model::{FreqDictionary, Sample, SpatialDictionary};
use crate::tensor_freq::{Fourier, SignalShape};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub test_objective: f64,
    /// Mean of the finite per-image values.
    pub psnr: f64,
    pub per_image_psnr: Vec<f64>,
    /// Images reconstructed exactly; reported as `+inf` and left out of the mean.
    pub perfect_reconstructions: usize,
    pub reconstructions: Option<Vec<Sample>>,
}

/// `10 log10(255^2 P / ||x_rec - x||^2)` with both signals mapped to pixel
/// units through `pixel_scale`.
pub fn psnr_db(x: &[f64], reconstruction: &[f64], pixel_scale: f64) -> f64 {
    let err: f64 = x
        .iter()
        .zip(reconstruction)
        .map(|(a, b)| {
            let d = (a - b) * pixel_scale;
            d * d
        })
        .sum();
    if err == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (255.0 * 255.0 * x.len() as f64 / err).log10()
}

/// Frequency dictionaries for each distinct sample shape.
struct DictCache<'a> {
    dict: &'a SpatialDictionary,
    by_dims: HashMap<Vec<usize>, FreqDictionary>,
}

impl<'a> DictCache<'a> {
    fn new(dict: &'a SpatialDictionary) -> Self {
        Self {
            dict,
            by_dims: HashMap::new(),
        }
    }

    fn get(&mut self, dims: &[usize]) -> Result<&FreqDictionary> {
        if !self.by_dims.contains_key(dims) {
            let shape = SignalShape::new(dims.to_vec(), self.dict.filter_dims().to_vec())?;
            let freq = self.dict.to_freq(&Arc::new(Fourier::new(&shape)))?;
            self.by_dims.insert(dims.to_vec(), freq);
        }
        Ok(&self.by_dims[dims])
    }
}

/// Codes every test image against the frozen dictionary and scores it.
pub fn evaluate(
    dict: &SpatialDictionary,
    test_set: &[Sample],
    cfg: &CodingConfig,
    keep_reconstructions: bool,
) -> Result<EvalResult> {
    if test_set.is_empty() {
        return Err(Error::InvalidConfig("test set is empty".into()));
    }
    let mut cache = DictCache::new(dict);
    let mut objective = 0.0;
    let mut per_image = Vec::with_capacity(test_set.len());
    let mut recs = Vec::new();
    for (i, x) in test_set.iter().enumerate() {
        let freq = cache.get(x.dims()).map_err(|e| e.at_sample(i))?;
        let code = infer_code(x.data(), freq, cfg, None).map_err(|e| e.at_sample(i))?;
        let rec = freq.reconstruct(&code.u)?;
        let fit: f64 = x
            .data()
            .iter()
            .zip(&rec)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let l1: f64 = code.u.iter().map(|v| v.abs()).sum();
        objective += 0.5 * fit + cfg.beta * l1;
        per_image.push(psnr_db(x.data(), &rec, x.pixel_scale));
        if keep_reconstructions {
            recs.push(Sample::new(x.dims().to_vec(), rec)?.with_pixel_scale(x.pixel_scale));
        }
    }
    let finite: Vec<f64> = per_image
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let perfect = per_image.len() - finite.len();
    if perfect > 0 {
        log::warn!("{perfect} test image(s) reconstructed exactly; excluded from mean PSNR");
    }
    let psnr = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    Ok(EvalResult {
        test_objective: objective / test_set.len() as f64,
        psnr,
        per_image_psnr: per_image,
        perfect_reconstructions: perfect,
        reconstructions: keep_reconstructions.then_some(recs),
    })
}

/// Average of `1/2 ||x - sum_k d_k * z_k||^2 + beta ||z||_1` over the test set.
pub fn test_objective(
    dict: &SpatialDictionary,
    test_set: &[Sample],
    cfg: &CodingConfig,
) -> Result<f64> {
    Ok(evaluate(dict, test_set, cfg, false)?.test_objective)
}

pub fn psnr(
    dict: &SpatialDictionary,
    test_set: &[Sample],
    cfg: &CodingConfig,
) -> Result<EvalResult> {
    evaluate(dict, test_set, cfg, true)
}

/// Unbiased sample variance of one filter.
pub fn filter_variance(filter: &[f64]) -> Result<f64> {
    let m = filter.len();
    if m < 2 {
        return Err(Error::UndefinedVariance);
    }
    let mean = filter.iter().sum::<f64>() / m as f64;
    Ok(filter.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64)
}

/// Filter indices by ascending variance; ties keep their original order.
pub fn sort_filters_by_variance(dict: &SpatialDictionary) -> Result<Vec<usize>> {
    let variances = dict
        .iter()
        .map(filter_variance)
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..variances.len()).collect();
    order.sort_by(|&a, &b| variances[a].total_cmp(&variances[b]));
    Ok(order)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Tiles 2-D filters in variance order, each min-max normalized, with
/// one-pixel black separators.
pub fn render_mosaic(dict: &SpatialDictionary) -> Result<GrayImage> {
    let [h, w] = match dict.filter_dims() {
        [h, w] => [*h, *w],
        other => {
            return Err(Error::Shape(format!(
                "mosaics need 2-D filters, got dims {other:?}"
            )))
        }
    };
    let k = dict.num_filters();
    let order = if dict.filter_len() >= 2 {
        sort_filters_by_variance(dict)?
    } else {
        (0..k).collect()
    };
    let cols = (k as f64).sqrt().ceil().max(1.0) as usize;
    let rows = k.div_ceil(cols).max(1);
    let width = cols * w + cols - 1;
    let height = rows * h + rows - 1;
    let mut img = GrayImage::new(width as u32, height as u32);
    for (slot, &idx) in order.iter().enumerate() {
        let filter = dict.filter(idx);
        let (lo, hi) = filter
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        let (r0, c0) = ((slot / cols) * (h + 1), (slot % cols) * (w + 1));
        for r in 0..h {
            for c in 0..w {
                let v = filter[r * w + c];
                let level = if range > 0.0 {
                    (v - lo) / range * 255.0
                } else {
                    0.0
                };
                img.put_pixel(
                    (c0 + c) as u32,
                    (r0 + r) as u32,
                    image::Luma([level.round() as u8]),
                );
            }
        }
    }
    Ok(img)
}

pub fn export_mosaic(dict: &SpatialDictionary, path: &Path) -> Result<()> {
    let img = render_mosaic(dict)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}
