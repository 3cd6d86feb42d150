mod common;

use std::sync::Arc;

use num_complex::Complex64;
use ocsc::dict_online::{
    dict_ocsc, dict_ocsc_until, eval_dict_objective, solve_dict_row, DictState, HistoryState,
    RawHistory,
};
use ocsc::tensor_freq::{crop_filter, pad_filter};
use ocsc::{Error, Fourier, FreqDictionary, SignalShape, SpatialDictionary};

/// Spatial instance: `t` signals of length `p`, `k` dense code maps each.
struct Instance {
    fourier: Arc<Fourier>,
    xs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    k: usize,
    m: usize,
}

impl Instance {
    fn random(seed: u64, p: usize, k: usize, m: usize, t: usize, active: bool) -> Self {
        let mut rng = common::rng(seed);
        let zs: Vec<Vec<f64>> = (0..t)
            .map(|_| common::normal_vec(&mut rng, p * k))
            .collect();
        let xs = if active {
            // generated by filters of norm 2, so the ball constraint binds
            let truth: Vec<f64> = common::unit_filters(&mut rng, k, m)
                .iter()
                .map(|v| 2.0 * v)
                .collect();
            zs.iter()
                .map(|z| {
                    let mut x = common::direct_reconstruct(&truth, (1, m), z, (1, p));
                    x.iter_mut()
                        .for_each(|v| *v += 0.1 * common::normal_vec(&mut rng, 1)[0]);
                    x
                })
                .collect()
        } else {
            (0..t).map(|_| common::normal_vec(&mut rng, p)).collect()
        };
        let shape = SignalShape::one_d(p, m).unwrap();
        Self {
            fourier: Arc::new(Fourier::new(&shape)),
            xs,
            zs,
            k,
            m,
        }
    }

    fn spectra(&self, i: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let p = self.fourier.len();
        let x = self.fourier.forward(&self.xs[i]).unwrap();
        let z = self.zs[i]
            .chunks(p)
            .flat_map(|c| self.fourier.forward(c).unwrap())
            .collect();
        (x, z)
    }

    fn history(&self, rho: f64) -> HistoryState {
        let mut h = HistoryState::new(Arc::clone(&self.fourier), self.k, rho).unwrap();
        for i in 0..self.xs.len() {
            let (x, z) = self.spectra(i);
            h.update(&z, &x).unwrap();
        }
        h
    }

    fn freq_dict(&self, filters: &[f64]) -> FreqDictionary {
        SpatialDictionary::new(vec![self.m], self.k, filters.to_vec())
            .unwrap()
            .to_freq(&self.fourier)
            .unwrap()
    }

    fn data_term(&self, filters: &[f64]) -> f64 {
        common::direct_data_term(
            &self.xs,
            &self.zs,
            filters,
            (1, self.m),
            (1, self.fourier.len()),
        )
    }

    fn signal_energy(&self) -> f64 {
        self.xs
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / (2.0 * self.xs.len() as f64)
    }
}

fn cropped(state: &DictState, fourier: &Fourier) -> Vec<f64> {
    let p = fourier.len();
    state
        .v
        .chunks(p)
        .flat_map(|c| crop_filter(c, fourier.shape()).unwrap())
        .collect()
}

fn max_rel_err(c: &[Complex64], reference: &nalgebra::DMatrix<Complex64>) -> f64 {
    let k = reference.nrows();
    let mut diff = 0.0;
    for i in 0..k {
        for j in 0..k {
            diff += (c[i * k + j] - reference[(i, j)]).norm_sqr();
        }
    }
    (diff / reference.norm_squared()).sqrt()
}

#[test]
fn sherman_morrison_tracks_direct_inverse() {
    for seq in 0..20u64 {
        let mut rng = common::rng(100 + seq);
        let (p, k, rho) = (6, 1 + (seq as usize % 6), 0.7);
        let shape = SignalShape::one_d(p, 2).unwrap();
        let fourier = Arc::new(Fourier::new(&shape));
        let mut h = HistoryState::new(Arc::clone(&fourier), k, rho).unwrap();
        let mut us: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); p];
        for t in 1..=30u64 {
            let z = common::complex_vec(&mut rng, p * k);
            let x = common::complex_vec(&mut rng, p);
            h.update(&z, &x).unwrap();
            for (pp, slot) in us.iter_mut().enumerate() {
                slot.push((0..k).map(|kk| z[kk * p + pp]).collect());
            }
            assert!((h.penalty() - rho / t as f64).abs() < 1e-15);
            for (pp, seen) in us.iter().enumerate() {
                let reference = common::direct_history_inverse(seen, rho * p as f64 / t as f64);
                let err = max_rel_err(h.inverse_at(pp), &reference);
                assert!(err < 1e-7, "seq {seq} t {t} p {pp}: {err}");
            }
        }
    }
}

#[test]
fn inverse_stays_hermitian_over_long_runs() {
    let mut rng = common::rng(9);
    let (p, k) = (4, 5);
    let fourier = Arc::new(Fourier::new(&SignalShape::one_d(p, 2).unwrap()));
    let mut h = HistoryState::new(Arc::clone(&fourier), k, 1.0).unwrap();
    let mut us: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); p];
    for _ in 0..1000 {
        let z = common::complex_vec(&mut rng, p * k);
        h.update(&z, &common::complex_vec(&mut rng, p)).unwrap();
        for (pp, slot) in us.iter_mut().enumerate() {
            slot.push((0..k).map(|kk| z[kk * p + pp]).collect());
        }
    }
    for (pp, seen) in us.iter().enumerate() {
        let c = h.inverse_at(pp);
        let m = nalgebra::DMatrix::from_row_slice(k, k, c);
        let asym = (&m - m.adjoint()).norm() / m.norm();
        assert!(asym < 1e-10, "frequency {pp}: {asym}");
        assert!(
            m.clone().cholesky().is_some(),
            "frequency {pp} lost positive definiteness"
        );
        let reference = common::direct_history_inverse(seen, p as f64 / 1000.0);
        assert!(max_rel_err(c, &reference) < 1e-7);
    }
}

#[test]
fn linear_term_is_running_mean() {
    let mut rng = common::rng(10);
    let (p, k) = (5, 3);
    let fourier = Arc::new(Fourier::new(&SignalShape::one_d(p, 2).unwrap()));
    let mut h = HistoryState::new(fourier, k, 1.0).unwrap();
    let mut sum = vec![Complex64::default(); p * k];
    for t in 1..=7 {
        let z = common::complex_vec(&mut rng, p * k);
        let x = common::complex_vec(&mut rng, p);
        h.update(&z, &x).unwrap();
        for pp in 0..p {
            for kk in 0..k {
                sum[pp * k + kk] += x[pp].conj() * z[kk * p + pp];
            }
        }
        for pp in 0..p {
            for kk in 0..k {
                let want = sum[pp * k + kk] / t as f64;
                assert!((h.b_at(pp)[kk] - want).norm() < 1e-12 * (1.0 + want.norm()));
            }
        }
    }
}

#[test]
fn history_size_does_not_grow() {
    let inst = Instance::random(1, 16, 3, 4, 1, false);
    let mut h = HistoryState::new(Arc::clone(&inst.fourier), 3, 1.0).unwrap();
    let (x, z) = inst.spectra(0);
    h.update(&z, &x).unwrap();
    let after_one = h.byte_size();
    for _ in 0..999 {
        h.update(&z, &x).unwrap();
    }
    assert_eq!(h.byte_size(), after_one);
    assert_eq!(h.t(), 1000);
}

#[test]
fn row_solve_zeroes_the_gradient() {
    let inst = Instance::random(2, 12, 4, 3, 3, false);
    let h = inst.history(2.0);
    let mut rng = common::rng(3);
    let p_len = inst.fourier.len();
    let k = inst.k;
    let shift = h.penalty() * p_len as f64;
    for p in 0..p_len {
        let v = common::complex_vec(&mut rng, k);
        let theta = common::complex_vec(&mut rng, k);
        let d = solve_dict_row(p, &v, &theta, &h).unwrap();
        // A^p from the spatial codes directly
        let us: Vec<Vec<Complex64>> = (0..inst.xs.len())
            .map(|i| {
                let (_, z) = inst.spectra(i);
                (0..k).map(|kk| z[kk * p_len + p]).collect()
            })
            .collect();
        let t = us.len() as f64;
        let mut residual_sq = 0.0;
        let mut scale_sq = 0.0;
        for j in 0..k {
            let mut g = Complex64::default();
            for i in 0..k {
                let a_ij: Complex64 = us.iter().map(|u| u[i] * u[j].conj()).sum::<Complex64>() / t;
                g += d[i] * a_ij;
            }
            g += d[j] * shift - h.b_at(p)[j].conj() - (v[j] - theta[j]) * shift;
            residual_sq += g.norm_sqr();
            scale_sq += (h.b_at(p)[j].norm() + shift * (v[j] - theta[j]).norm()).powi(2);
        }
        assert!(
            residual_sq.sqrt() <= 1e-9 * scale_sq.sqrt().max(1.0),
            "frequency {p}"
        );
    }
}

#[test]
fn surrogate_objective_matches_direct_data_term() {
    for seed in 0..10u64 {
        let inst = Instance::random(
            20 + seed,
            10 + seed as usize,
            1 + seed as usize % 4,
            3,
            1 + seed as usize % 5,
            false,
        );
        let h = inst.history(1.0);
        let mut rng = common::rng(seed);
        let offset = inst.signal_energy();
        for _ in 0..3 {
            let filters = common::normal_vec(&mut rng, inst.k * inst.m);
            let ours = eval_dict_objective(inst.freq_dict(&filters).data(), &h).unwrap() + offset;
            let direct = inst.data_term(&filters);
            assert!(
                (ours - direct).abs() <= 1e-8 * direct.max(1.0),
                "seed {seed}: {ours} vs {direct}"
            );
        }
    }
}

#[test]
fn converged_dictionary_matches_projected_gradient() {
    for seed in 0..4u64 {
        let inst = Instance::random(40 + seed, 16, 2, 4, 3, seed % 2 == 0);
        let h = inst.history(1.0);
        let mut rng = common::rng(seed);
        let init = common::unit_filters(&mut rng, 2, 4);
        let start = DictState::from_dictionary(&inst.freq_dict(&init)).unwrap();
        let (state, _) = dict_ocsc_until(&start, &h, 20_000, 1e-10).unwrap();
        let ours = inst.data_term(&cropped(&state, &inst.fourier));
        let oracle = common::projected_gradient_dict(&inst.xs, &inst.zs, 2, 4, &init, 50_000);
        let reference = inst.data_term(&oracle);
        if seed % 2 == 0 {
            let binding = oracle
                .chunks(4)
                .any(|f| f.iter().map(|v| v * v).sum::<f64>() > 1.0 - 1e-9);
            assert!(binding, "seed {seed}: constraint expected to bind");
        }
        assert!(
            (ours - reference).abs() <= 1e-4 * reference.max(1.0),
            "seed {seed}: {ours} vs {reference}"
        );
    }
}

#[test]
fn fifty_rounds_nearly_satisfy_the_constraint() {
    let inst = Instance::random(7, 32, 4, 5, 1, true);
    let h = inst.history(1.0);
    let init = common::unit_filters(&mut common::rng(8), 4, 5);
    let start = DictState::from_dictionary(&inst.freq_dict(&init)).unwrap();
    let state = dict_ocsc(&start, &h, 50).unwrap();
    let violation = state.constraint_violation(inst.fourier.len());
    assert!(violation < 1e-3, "{violation}");
}

#[test]
fn returned_filters_are_feasible() {
    let inst = Instance::random(5, 20, 3, 4, 2, true);
    let h = inst.history(1.0);
    let init: Vec<f64> = common::normal_vec(&mut common::rng(6), 12)
        .iter()
        .map(|v| 5.0 * v)
        .collect();
    let start = DictState::from_dictionary(&inst.freq_dict(&init)).unwrap();
    let state = dict_ocsc(&start, &h, 7).unwrap();
    let p = inst.fourier.len();
    for col in state.v.chunks(p) {
        let crop = crop_filter(col, inst.fourier.shape()).unwrap();
        assert!(crop.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-12);
        assert_eq!(
            pad_filter(&crop, inst.fourier.shape()).unwrap(),
            col.to_vec()
        );
    }
}

#[test]
fn batch_history_ignores_duplicates() {
    let inst = Instance::random(12, 10, 2, 3, 2, false);
    let pairs: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..2).map(|i| inst.spectra(i)).collect();
    let once: Vec<(&[Complex64], &[Complex64])> =
        pairs.iter().map(|(x, z)| (&x[..], &z[..])).collect();
    let twice: Vec<(&[Complex64], &[Complex64])> = once.iter().chain(&once).copied().collect();
    let a = HistoryState::from_batch(Arc::clone(&inst.fourier), 2, 1.0, &once).unwrap();
    let b = HistoryState::from_batch(Arc::clone(&inst.fourier), 2, 1.0, &twice).unwrap();
    for p in 0..inst.fourier.len() {
        for (u, v) in a.inverse_at(p).iter().zip(b.inverse_at(p)) {
            assert!((u - v).norm() < 1e-12);
        }
    }
    let mut raw = RawHistory::new(Arc::clone(&inst.fourier), 2).unwrap();
    for (x, z) in &once {
        raw.update(z, x).unwrap();
    }
    let from_raw = HistoryState::from_raw(&raw, 1.0).unwrap();
    assert_eq!(from_raw.inverse_at(3), a.inverse_at(3));
}

#[test]
fn empty_history_is_an_error() {
    let inst = Instance::random(13, 8, 2, 3, 1, false);
    let h = HistoryState::new(Arc::clone(&inst.fourier), 2, 1.0).unwrap();
    let start = DictState::from_dictionary(&inst.freq_dict(&[0.1; 6])).unwrap();
    assert!(matches!(
        dict_ocsc(&start, &h, 3).unwrap_err(),
        Error::UninitializedHistory
    ));
    assert!(matches!(
        eval_dict_objective(start.d_freq.as_slice(), &h).unwrap_err(),
        Error::UninitializedHistory
    ));
}

#[test]
fn mismatched_update_is_a_shape_error() {
    let inst = Instance::random(14, 8, 2, 3, 1, false);
    let mut h = HistoryState::new(Arc::clone(&inst.fourier), 2, 1.0).unwrap();
    let (x, z) = inst.spectra(0);
    assert!(matches!(
        h.update(&z[..8], &x).unwrap_err(),
        Error::Shape(_)
    ));
    assert!(HistoryState::new(Arc::clone(&inst.fourier), 2, 0.0).is_err());
}
