//! Independent reference computations shared by the integration tests.
//! Nothing here goes through the FFT path.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn complex_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Unit-norm random filters, filter after filter.
pub fn unit_filters(rng: &mut ChaCha8Rng, k: usize, m: usize) -> Vec<f64> {
    let mut f = normal_vec(rng, k * m);
    for chunk in f.chunks_mut(m) {
        let n = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        chunk.iter_mut().for_each(|v| *v /= n);
    }
    f
}

/// `sum_j d(j) z((i - j) mod P)` on a 2-D (or 1-D with `h = 1`) grid; `d`
/// has extent `fh x fw` anchored at the origin.
pub fn direct_conv(
    d: &[f64],
    (fh, fw): (usize, usize),
    z: &[f64],
    (h, w): (usize, usize),
) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for a in 0..fh {
                for b in 0..fw {
                    let rr = (r + h - a % h) % h;
                    let cc = (c + w - b % w) % w;
                    acc += d[a * fw + b] * z[rr * w + cc];
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// `sum_k d_k * z_k` with the direct oracle.
pub fn direct_reconstruct(
    filters: &[f64],
    fdims: (usize, usize),
    codes: &[f64],
    dims: (usize, usize),
) -> Vec<f64> {
    let m = fdims.0 * fdims.1;
    let p = dims.0 * dims.1;
    let mut out = vec![0.0; p];
    for (d, z) in filters.chunks(m).zip(codes.chunks(p)) {
        for (o, v) in out.iter_mut().zip(direct_conv(d, fdims, z, dims)) {
            *o += v;
        }
    }
    out
}

/// Explicit `P x PK` circulant design of a 1-D dictionary: column `k P + j`
/// is filter `k` shifted by `j`.
pub fn circulant_design(filters: &[f64], m: usize, p: usize) -> Vec<Vec<f64>> {
    let k = filters.len() / m;
    let mut cols = Vec::with_capacity(k * p);
    for f in filters.chunks(m) {
        for j in 0..p {
            let mut col = vec![0.0; p];
            for (a, v) in f.iter().enumerate() {
                col[(j + a) % p] += v;
            }
            cols.push(col);
        }
    }
    cols
}

/// Cyclic coordinate descent on `1/2 ||x - Phi z||^2 + beta ||z||_1`.
pub fn cd_lasso(cols: &[Vec<f64>], x: &[f64], beta: f64, max_sweeps: usize) -> Vec<f64> {
    let n = cols.len();
    let mut z = vec![0.0; n];
    let mut r = x.to_vec();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    for _ in 0..max_sweeps {
        let mut delta_max: f64 = 0.0;
        for j in 0..n {
            if norms[j] == 0.0 {
                continue;
            }
            let rho: f64 =
                cols[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + norms[j] * z[j];
            let new = rho.signum() * (rho.abs() - beta).max(0.0) / norms[j];
            let d = new - z[j];
            if d != 0.0 {
                for (ri, ci) in r.iter_mut().zip(&cols[j]) {
                    *ri -= d * ci;
                }
                z[j] = new;
                delta_max = delta_max.max(d.abs());
            }
        }
        if delta_max < 1e-13 {
            break;
        }
    }
    z
}

pub fn lasso_objective(cols: &[Vec<f64>], x: &[f64], z: &[f64], beta: f64) -> f64 {
    let mut r = x.to_vec();
    for (c, zj) in cols.iter().zip(z) {
        for (ri, ci) in r.iter_mut().zip(c) {
            *ri -= zj * ci;
        }
    }
    0.5 * r.iter().map(|v| v * v).sum::<f64>() + beta * z.iter().map(|v| v.abs()).sum::<f64>()
}

/// `(1/2t) sum_i ||x_i - sum_k d_k * z_ik||^2`.
pub fn direct_data_term(
    xs: &[Vec<f64>],
    zs: &[Vec<f64>],
    filters: &[f64],
    fdims: (usize, usize),
    dims: (usize, usize),
) -> f64 {
    let t = xs.len() as f64;
    xs.iter()
        .zip(zs)
        .map(|(x, z)| {
            let rec = direct_reconstruct(filters, fdims, z, dims);
            x.iter()
                .zip(&rec)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (2.0 * t)
}

/// Projected gradient on the 1-D data term over filters in the unit ball,
/// using the explicit Hessian.
pub fn projected_gradient_dict(
    xs: &[Vec<f64>],
    zs: &[Vec<f64>],
    k: usize,
    m: usize,
    init: &[f64],
    iters: usize,
) -> Vec<f64> {
    let p = xs[0].len();
    let t = xs.len() as f64;
    let n = k * m;
    // column (k, a) of the per-sample design: z_k shifted by a
    let mut hess = vec![0.0; n * n];
    let mut lin = vec![0.0; n];
    for (x, z) in xs.iter().zip(zs) {
        let mut cols = Vec::with_capacity(n);
        for zk in z.chunks(p) {
            for a in 0..m {
                cols.push(
                    (0..p)
                        .map(|i| zk[(i + p - a % p) % p])
                        .collect::<Vec<f64>>(),
                );
            }
        }
        for i in 0..n {
            lin[i] += cols[i].iter().zip(x).map(|(u, v)| u * v).sum::<f64>() / t;
            for j in 0..n {
                hess[i * n + j] += cols[i]
                    .iter()
                    .zip(&cols[j])
                    .map(|(u, v)| u * v)
                    .sum::<f64>()
                    / t;
            }
        }
    }
    // largest eigenvalue by power iteration
    let mut v = vec![1.0; n];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| hess[i * n + j] * v[j]).sum())
            .collect();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = w.into_iter().map(|a| a / norm).collect();
    }
    let step = 1.0 / (lambda * 1.01);
    let mut d = init.to_vec();
    for _ in 0..iters {
        let grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| hess[i * n + j] * d[j]).sum::<f64>() - lin[i])
            .collect();
        for (di, g) in d.iter_mut().zip(&grad) {
            *di -= step * g;
        }
        for f in d.chunks_mut(m) {
            let norm = f.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1.0 {
                f.iter_mut().for_each(|a| *a /= norm);
            }
        }
    }
    d
}

/// `O(P^2)` DFT, row-major 2-D.
pub fn direct_dft(a: &[f64], (h, w): (usize, usize)) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::default();
            for r in 0..h {
                for c in 0..w {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    acc += Complex64::from_polar(a[r * w + c], phase);
                }
            }
            out[u * w + v] = acc;
        }
    }
    out
}

/// Inverse of `(1/t) sum u u^H + shift I` by dense LU.
pub fn direct_history_inverse(us: &[Vec<Complex64>], shift: f64) -> nalgebra::DMatrix<Complex64> {
    let k = us[0].len();
    let t = us.len() as f64;
    let mut a = nalgebra::DMatrix::<Complex64>::zeros(k, k);
    for u in us {
        for i in 0..k {
            for j in 0..k {
                a[(i, j)] += u[i] * u[j].conj() / t;
            }
        }
    }
    for i in 0..k {
        a[(i, i)] += Complex64::new(shift, 0.0);
    }
    a.try_inverse().expect("shifted history is invertible")
}
