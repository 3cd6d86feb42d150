//! Image preprocessing, binary envelopes for dictionaries and samples,
//! plain-text configs and CSV reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Sample, SpatialDictionary};
use crate::pipeline::{SampleSource, TrainReport};

pub const DICT_MAGIC: &[u8; 8] = b"OCSCDIC1";
pub const SAMPLE_MAGIC: &[u8; 8] = b"OCSCSMP1";
const DTYPE_F64: u32 = 1;

pub const SAMPLE_EXT: &str = "smp";
pub const CSV_HEADER: &str = "pass,time_s,train_obj,test_obj,psnr,history_bytes";

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessSpec {
    /// Convert color input by luminance; otherwise color input is an error.
    pub grayscale: bool,
    pub lcn_window: usize,
    pub lcn_sigma: f64,
    pub lcn_epsilon: f64,
    pub taper_sigma_range: (f64, f64),
    pub taper_size: usize,
    pub seed: u64,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            grayscale: true,
            lcn_window: 9,
            lcn_sigma: 3.0,
            lcn_epsilon: 1e-4,
            taper_sigma_range: (1.0, 3.0),
            taper_size: 11,
            seed: 0,
        }
    }
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, size) in [
            ("LCN window", self.lcn_window),
            ("taper size", self.taper_size),
        ] {
            if size < 3 || size % 2 == 0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be odd and >= 3, got {size}"
                )));
            }
        }
        if !(self.lcn_epsilon > 0.0) {
            return Err(Error::InvalidConfig("LCN epsilon must be > 0".into()));
        }
        if !(self.lcn_sigma > 0.0) {
            return Err(Error::InvalidConfig("LCN sigma must be > 0".into()));
        }
        let (lo, hi) = self.taper_sigma_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidConfig(format!(
                "bad taper sigma range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Local contrast normalization of an `h x w` image: subtract the
/// Gaussian-weighted local mean and divide by the floored local standard
/// deviation, with reflected borders.
pub fn local_contrast_normalize(
    data: &[f64],
    (h, w): (usize, usize),
    window: usize,
    sigma: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if data.len() != h * w {
        return Err(Error::Shape(format!(
            "{h}x{w} image has {} values",
            data.len()
        )));
    }
    if h < window || w < window {
        return Err(Error::Shape(format!(
            "image {h}x{w} is smaller than the {window}x{window} LCN window"
        )));
    }
    let g = gaussian_kernel(window, sigma);
    let half = (window / 2) as isize;
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let center = data[r * w + c];
            // weighted deviations from the center avoid rounding on flat areas
            let (mut wsum, mut dev) = (0.0, 0.0);
            for (i, gi) in g.iter().enumerate() {
                let rr = reflect(r as isize + i as isize - half, h);
                for (j, gj) in g.iter().enumerate() {
                    let cc = reflect(c as isize + j as isize - half, w);
                    let weight = gi * gj;
                    wsum += weight;
                    dev += weight * (center - data[rr * w + cc]);
                }
            }
            let centered = dev / wsum;
            let mean = center - centered;
            let mut var = 0.0;
            for (i, gi) in g.iter().enumerate() {
                let rr = reflect(r as isize + i as isize - half, h);
                for (j, gj) in g.iter().enumerate() {
                    let cc = reflect(c as isize + j as isize - half, w);
                    let d = data[rr * w + cc] - mean;
                    var += gi * gj * d * d;
                }
            }
            let std = (var / wsum).sqrt();
            out[r * w + c] = centered / std.max(epsilon);
        }
    }
    Ok(out)
}

/// Separable Gaussian blur with circular boundaries.
pub fn circular_blur(data: &[f64], (h, w): (usize, usize), size: usize, sigma: f64) -> Vec<f64> {
    let g = gaussian_kernel(size, sigma);
    let half = (size / 2) as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut rows = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            rows[r * w + c] = g
                .iter()
                .enumerate()
                .map(|(j, gj)| gj * data[r * w + wrap(c as isize + j as isize - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = g
                .iter()
                .enumerate()
                .map(|(i, gi)| gi * rows[wrap(r as isize + i as isize - half, h) * w + c])
                .sum();
        }
    }
    out
}

/// Blends the outer `ramp` pixels linearly toward a blurred copy; the
/// outermost ring is fully blurred.
pub fn edge_taper(data: &[f64], (h, w): (usize, usize), size: usize, sigma: f64) -> Vec<f64> {
    let blurred = circular_blur(data, (h, w), size, sigma);
    let ramp = size as f64;
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let dist = r.min(c).min(h - 1 - r).min(w - 1 - c) as f64;
            let keep = (dist / ramp).min(1.0);
            let i = r * w + c;
            out[i] = keep * data[i] + (1.0 - keep) * blurred[i];
        }
    }
    out
}

/// Intensities in `[0, 1]`, row-major.
pub fn to_gray(img: &DynamicImage, grayscale: bool) -> Result<(Vec<f64>, (usize, usize))> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = if img.color().has_color() {
        if !grayscale {
            return Err(Error::InvalidConfig(
                "color input needs grayscale conversion enabled".into(),
            ));
        }
        img.to_rgb8()
            .pixels()
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .collect()
    } else {
        img.to_luma16()
            .pixels()
            .map(|p| p[0] as f64 / 65535.0)
            .collect()
    };
    Ok((data, (h, w)))
}

/// Full preprocessing of one decoded image. `index` selects the taper RNG
/// stream so each image draws its own blur width.
pub fn preprocess(img: &DynamicImage, spec: &PreprocessSpec, index: u64) -> Result<Sample> {
    spec.validate()?;
    let (gray, dims) = to_gray(img, spec.grayscale)?;
    preprocess_gray(&gray, dims, spec, index)
}

pub fn preprocess_gray(
    gray: &[f64],
    dims: (usize, usize),
    spec: &PreprocessSpec,
    index: u64,
) -> Result<Sample> {
    let lcn = local_contrast_normalize(
        gray,
        dims,
        spec.lcn_window,
        spec.lcn_sigma,
        spec.lcn_epsilon,
    )?;
    let sigma = taper_sigma(spec, index);
    let tapered = edge_taper(&lcn, dims, spec.taper_size, sigma);
    Sample::new(vec![dims.0, dims.1], tapered)
}

pub fn taper_sigma(spec: &PreprocessSpec, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let (lo, hi) = spec.taper_sigma_range;
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

pub fn load_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn preprocess_file(path: &Path, spec: &PreprocessSpec, index: u64) -> Result<Sample> {
    let img = load_image(path)?;
    preprocess(&img, spec, index).map_err(|e| match e {
        Error::Shape(detail) | Error::InvalidConfig(detail) => Error::Format {
            path: path.to_path_buf(),
            detail,
        },
        other => other,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                detail: format!(
                    "{what} needs {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let found = self.take(8, "magic")?;
        if found != expected {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected: String::from_utf8_lossy(expected).into_owned(),
            });
        }
        Ok(())
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let axes = self.u32("axis count")?;
        if !(1..=2).contains(&axes) {
            return Err(self.format(format!("{axes} axes, expected 1 or 2")));
        }
        (0..axes)
            .map(|_| Ok(self.u32("extent")? as usize))
            .collect()
    }

    fn payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| self.format("payload size overflows".into()))?;
        let raw = self.take(bytes, "payload")?;
        let stored = self.u32("checksum")?;
        let computed = crc32fast::hash(raw);
        if self.pos != self.bytes.len() {
            return Err(self.format(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        if stored != computed {
            return Err(Error::Checksum {
                path: self.path.to_path_buf(),
                stored,
                computed,
            });
        }
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn format(&self, detail: String) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            detail,
        }
    }
}

fn push_payload(out: &mut Vec<u8>, values: &[f64]) {
    let start = out.len();
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

fn push_dims(out: &mut Vec<u8>, dims: &[usize]) {
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

pub fn encode_dictionary(dict: &SpatialDictionary) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + dict.filters().len() * 8);
    out.extend_from_slice(DICT_MAGIC);
    push_dims(&mut out, dict.filter_dims());
    out.extend_from_slice(&(dict.num_filters() as u32).to_le_bytes());
    out.extend_from_slice(&DTYPE_F64.to_le_bytes());
    push_payload(&mut out, dict.filters());
    out
}

/// `path` only labels errors.
pub fn decode_dictionary(bytes: &[u8], path: &Path) -> Result<SpatialDictionary> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    r.magic(DICT_MAGIC)?;
    let dims = r.dims()?;
    let k = r.u32("filter count")? as usize;
    let dtype = r.u32("element type")?;
    if dtype != DTYPE_F64 {
        return Err(r.format(format!(
            "element type tag {dtype}, expected {DTYPE_F64} (f64)"
        )));
    }
    let m: usize = dims.iter().product();
    let count = m
        .checked_mul(k)
        .ok_or_else(|| r.format("payload size overflows".into()))?;
    let filters = r.payload(count)?;
    SpatialDictionary::new(dims, k, filters).map_err(|e| r.format(e.to_string()))
}

pub fn save_dictionary(dict: &SpatialDictionary, path: &Path) -> Result<()> {
    fs::write(path, encode_dictionary(dict)).map_err(|e| Error::io(path, e))
}

pub fn load_dictionary(path: &Path) -> Result<SpatialDictionary> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dictionary(&bytes, path)
}

pub fn encode_sample(sample: &Sample) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + sample.len() * 8);
    out.extend_from_slice(SAMPLE_MAGIC);
    push_dims(&mut out, sample.dims());
    out.extend_from_slice(&sample.pixel_scale.to_le_bytes());
    push_payload(&mut out, sample.data());
    out
}

pub fn decode_sample(bytes: &[u8], path: &Path) -> Result<Sample> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    r.magic(SAMPLE_MAGIC)?;
    let dims = r.dims()?;
    let scale = r.f64("pixel scale")?;
    let len: usize = dims.iter().product();
    let data = r.payload(len)?;
    Ok(Sample::new(dims, data)
        .map_err(|e| r.format(e.to_string()))?
        .with_pixel_scale(scale))
}

pub fn save_sample(sample: &Sample, path: &Path) -> Result<()> {
    fs::write(path, encode_sample(sample)).map_err(|e| Error::io(path, e))
}

pub fn load_sample(path: &Path) -> Result<Sample> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sample(&bytes, path)
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn is_sample(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some(SAMPLE_EXT)
}

/// Samples in a directory, loaded on demand. Envelope files are read as is;
/// images are preprocessed with their position as the taper stream.
#[derive(Clone, Debug)]
pub struct SampleDir {
    paths: Vec<PathBuf>,
    spec: PreprocessSpec,
}

impl SampleDir {
    pub fn open(dir: &Path, spec: PreprocessSpec) -> Result<Self> {
        spec.validate()?;
        let mut paths = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_file() && (is_sample(&path) || is_image(&path)) {
                paths.push(path);
            }
        }
        paths.sort();
        Ok(Self { paths, spec })
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        (0..self.paths.len()).map(|i| self.get(i)).collect()
    }
}

impl SampleSource for SampleDir {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn get(&self, index: usize) -> Result<Sample> {
        let path = self
            .paths
            .get(index)
            .ok_or_else(|| Error::Shape(format!("sample index {index} out of range")))?;
        if is_sample(path) {
            load_sample(path)
        } else {
            preprocess_file(path, &self.spec, index as u64)
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment line. A key given twice
/// with different values is an error.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            detail: format!("line {}: expected key=value", lineno + 1),
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("line {}: empty key", lineno + 1),
            });
        }
        match out.iter().find(|(k, _)| *k == key) {
            Some((_, prev)) if *prev != value => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    detail: format!(
                        "line {}: {key} set to both {prev:?} and {value:?}",
                        lineno + 1
                    ),
                });
            }
            Some(_) => {}
            None => out.push((key, value)),
        }
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// One CSV report row; empty cells for missing values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportRow {
    pub pass: Option<usize>,
    pub time_s: Option<f64>,
    pub train_obj: Option<f64>,
    pub test_obj: Option<f64>,
    pub psnr: Option<f64>,
    pub history_bytes: Option<usize>,
}

impl ReportRow {
    fn to_csv(&self) -> String {
        fn cell<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        [
            cell(&self.pass),
            cell(&self.time_s),
            cell(&self.train_obj),
            cell(&self.test_obj),
            cell(&self.psnr),
            cell(&self.history_bytes),
        ]
        .join(",")
    }
}

pub fn report_rows(report: &TrainReport) -> Vec<ReportRow> {
    report
        .records
        .iter()
        .map(|r| ReportRow {
            pass: Some(r.pass),
            time_s: Some(r.time_s),
            train_obj: Some(r.train_objective),
            test_obj: r.test_objective,
            psnr: r.psnr,
            history_bytes: Some(r.history_bytes),
        })
        .collect()
}

/// Writes `# key=value` metadata lines, the column header and the rows.
pub fn write_report(path: &Path, metadata: &[(String, String)], rows: &[ReportRow]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in metadata {
        text.push_str(&format!("# {k}={v}\n"));
    }
    text.push_str(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}
