use std::ffi::{CStr, CString};
use std::ptr;

use ocsc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ocsc_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn new_dict(dims: &[usize], k: usize, filters: &[f64]) -> (OcscStatus, *mut OcscDictionary) {
    let mut out = ptr::null_mut();
    let status = unsafe {
        ocsc_dictionary_new(
            dims.as_ptr(),
            dims.len(),
            k,
            filters.as_ptr(),
            filters.len(),
            &mut out,
        )
    };
    (status, out)
}

fn small_config() -> OcscTrainConfig {
    OcscTrainConfig {
        num_filters: 2,
        filter_dims: [3, 3],
        filter_ndims: 2,
        ..ocsc_train_config_default()
    }
}

fn signal(seed: u64, len: usize) -> Vec<f64> {
    // small deterministic generator; the values only need to vary
    let mut s = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

#[test]
fn null_pointers_are_reported() {
    let mut out = ptr::null_mut();
    let status = unsafe { ocsc_dictionary_load(ptr::null(), &mut out) };
    assert_eq!(status, OcscStatus::NullPointer);
    assert!(out.is_null());
    assert!(last_error().contains("null"), "{}", last_error());

    let mut n = 0usize;
    assert_eq!(
        unsafe { ocsc_dictionary_shape(ptr::null(), &mut n, &mut n) },
        OcscStatus::NullPointer
    );
    assert_eq!(
        unsafe { ocsc_trainer_step(ptr::null_mut(), ptr::null(), 0, ptr::null_mut()) },
        OcscStatus::NullPointer
    );
    let (status, _) = new_dict(&[2], 1, &[]);
    assert_ne!(status, OcscStatus::Ok);
    unsafe {
        ocsc_dictionary_free(ptr::null_mut());
        ocsc_trainer_free(ptr::null_mut());
    }
}

#[test]
fn invalid_arguments_map_to_codes() {
    let (status, d) = new_dict(&[2, 2], 2, &[1.0; 5]);
    assert_eq!(status, OcscStatus::Shape);
    assert!(d.is_null());
    assert!(!last_error().is_empty());

    let cfg = OcscTrainConfig {
        num_filters: 0,
        ..small_config()
    };
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { ocsc_trainer_new(&cfg, [8usize, 8].as_ptr(), 2, &mut t) },
        OcscStatus::InvalidArgument
    );

    let missing = CString::new("/nonexistent/x.dic").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { ocsc_dictionary_load(missing.as_ptr(), &mut d) },
        OcscStatus::Io
    );
}

#[test]
fn save_and_load_round_trip() {
    let filters: Vec<f64> = (0..18).map(|i| i as f64 * 0.1 - 0.7).collect();
    let (status, d) = new_dict(&[3, 3], 2, &filters);
    assert_eq!(status, OcscStatus::Ok);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.dic").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { ocsc_dictionary_save(d, path.as_ptr()) },
        OcscStatus::Ok
    );

    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { ocsc_dictionary_load(path.as_ptr(), &mut back) },
        OcscStatus::Ok
    );
    let (mut k, mut m) = (0usize, 0usize);
    assert_eq!(
        unsafe { ocsc_dictionary_shape(back, &mut k, &mut m) },
        OcscStatus::Ok
    );
    assert_eq!((k, m), (2, 9));
    let mut buf = vec![0.0; 18];
    assert_eq!(
        unsafe { ocsc_dictionary_copy_filters(back, buf.as_mut_ptr(), 18) },
        OcscStatus::Ok
    );
    assert_eq!(buf, filters);
    assert_eq!(
        unsafe { ocsc_dictionary_copy_filters(back, buf.as_mut_ptr(), 17) },
        OcscStatus::Shape
    );

    std::fs::write(dir.path().join("bad.dic"), b"definitely not a dictionary").unwrap();
    let bad = CString::new(dir.path().join("bad.dic").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(
        unsafe { ocsc_dictionary_load(bad.as_ptr(), &mut none) },
        OcscStatus::Format
    );
    unsafe {
        ocsc_dictionary_free(d);
        ocsc_dictionary_free(back);
    }
}

#[test]
fn trainer_steps_with_constant_history() {
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { ocsc_trainer_new(&small_config(), [12usize, 12].as_ptr(), 2, &mut t) },
        OcscStatus::Ok
    );
    let mut first_bytes = 0usize;
    for i in 0..12u64 {
        let x = signal(i, 144);
        let mut obj = f64::NAN;
        assert_eq!(
            unsafe { ocsc_trainer_step(t, x.as_ptr(), x.len(), &mut obj) },
            OcscStatus::Ok
        );
        assert!(obj.is_finite() && obj >= 0.0);
        let mut bytes = 0usize;
        assert_eq!(
            unsafe { ocsc_trainer_history_bytes(t, &mut bytes) },
            OcscStatus::Ok
        );
        if i == 0 {
            first_bytes = bytes;
        }
        assert_eq!(bytes, first_bytes);
    }
    let mut seen = 0u64;
    assert_eq!(
        unsafe { ocsc_trainer_samples_seen(t, &mut seen) },
        OcscStatus::Ok
    );
    assert_eq!(seen, 12);

    let x = signal(99, 100);
    assert_eq!(
        unsafe { ocsc_trainer_step(t, x.as_ptr(), x.len(), ptr::null_mut()) },
        OcscStatus::Shape
    );
    assert!(last_error().contains("144"));

    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { ocsc_trainer_dictionary(t, &mut d) },
        OcscStatus::Ok
    );
    let mut filters = vec![0.0; 18];
    assert_eq!(
        unsafe { ocsc_dictionary_copy_filters(d, filters.as_mut_ptr(), 18) },
        OcscStatus::Ok
    );
    for f in filters.chunks(9) {
        assert!(f.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-9);
    }

    let sample = signal(5, 144);
    let mut rec = vec![0.0; 144];
    let dims = [12usize, 12];
    assert_eq!(
        unsafe { ocsc_reconstruct(d, dims.as_ptr(), 2, sample.as_ptr(), 0.01, rec.as_mut_ptr()) },
        OcscStatus::Ok
    );
    assert!(rec.iter().all(|v| v.is_finite()));
    unsafe {
        ocsc_dictionary_free(d);
        ocsc_trainer_free(t);
    }
}

#[test]
fn fista_trainer_is_available() {
    let cfg = OcscTrainConfig {
        use_fista: 1,
        ..small_config()
    };
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { ocsc_trainer_new(&cfg, [10usize, 10].as_ptr(), 2, &mut t) },
        OcscStatus::Ok
    );
    let x = signal(1, 100);
    assert_eq!(
        unsafe { ocsc_trainer_step(t, x.as_ptr(), 100, ptr::null_mut()) },
        OcscStatus::Ok
    );
    unsafe { ocsc_trainer_free(t) };
}

#[test]
fn version_and_header_agree() {
    let version = unsafe { CStr::from_ptr(ocsc_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ocsc.h")).unwrap();
    for symbol in [
        "ocsc_last_error_message",
        "ocsc_dictionary_new",
        "ocsc_dictionary_load",
        "ocsc_dictionary_save",
        "ocsc_dictionary_copy_filters",
        "ocsc_reconstruct",
        "ocsc_trainer_new",
        "ocsc_trainer_step",
        "ocsc_trainer_history_bytes",
        "ocsc_trainer_free",
        "OCSC_STATUS_NULL_POINTER",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}
