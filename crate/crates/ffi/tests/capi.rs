use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ttns_sketch_ffi::*;

fn last_error() -> String {
    let p = ttns_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn trident_samples(rows: usize, seed: u64) -> *mut TtnsSamples {
    let name = CString::new("trident10").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ttns_samples_from_preset(name.as_ptr(), rows, seed, &mut s) }, TtnsStatus::Ok);
    s
}

#[test]
fn fit_evaluate_and_free() {
    unsafe {
        let s = trident_samples(1 << 14, 5);
        assert_eq!(ttns_samples_len(s), 1 << 14);
        assert_eq!(ttns_samples_dim(s), 10);

        let edges: [usize; 18] = [1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 4, 8, 8, 9, 9, 10];
        let mut fit = ptr::null_mut();
        assert_eq!(ttns_fit(s, edges.as_ptr(), 1, ptr::null(), 2, &mut fit), TtnsStatus::Ok);
        assert_eq!(ttns_model_dim(fit), 10);

        let name = CString::new("trident10").unwrap();
        let mut truth = ptr::null_mut();
        assert_eq!(ttns_model_from_preset(name.as_ptr(), &mut truth), TtnsStatus::Ok);
        let mut err = f64::NAN;
        assert_eq!(ttns_model_rel_error(fit, truth, &mut err), TtnsStatus::Ok);
        assert!(err > 0.0 && err < 0.2, "error {err}");

        let x = [0usize; 10];
        let mut v = 0.0;
        assert_eq!(ttns_model_evaluate(truth, x.as_ptr(), 10, &mut v), TtnsStatus::Ok);
        assert!(v > 0.0 && v < 1.0);

        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(ttns_model_nll(fit, s, &mut a), TtnsStatus::Ok);
        assert_eq!(ttns_model_nll(truth, s, &mut b), TtnsStatus::Ok);
        assert!((a - b).abs() < 0.05);

        let mut gm = ptr::null_mut();
        assert_eq!(ttns_fit_tree_model(s, ptr::null(), 1, &mut gm), TtnsStatus::Ok);
        let mut mi = 0.0;
        assert_eq!(ttns_model_mutual_information(gm, 1, 2, &mut mi), TtnsStatus::Ok);
        assert!(mi > 0.0);

        let mut drawn = ptr::null_mut();
        assert_eq!(ttns_model_sample(fit, 100, 1, &mut drawn), TtnsStatus::Ok);
        assert_eq!(ttns_samples_len(drawn), 100);

        ttns_samples_free(drawn);
        ttns_model_free(gm);
        ttns_model_free(truth);
        ttns_model_free(fit);
        ttns_samples_free(s);
        ttns_samples_free(ptr::null_mut());
        ttns_model_free(ptr::null_mut());
    }
}

#[test]
fn perturbative_sketch_from_json() {
    unsafe {
        let s = trident_samples(1 << 12, 2);
        let cfg = CString::new(r#"{"kind": "perturbative", "eps": 0.05, "l": 6, "seed": 3}"#).unwrap();
        let mut fit = ptr::null_mut();
        assert_eq!(ttns_fit(s, ptr::null(), 1, cfg.as_ptr(), 2, &mut fit), TtnsStatus::Ok);
        ttns_model_free(fit);
        let bad = CString::new(r#"{"kind": "nope"}"#).unwrap();
        assert_eq!(ttns_fit(s, ptr::null(), 1, bad.as_ptr(), 2, &mut fit), TtnsStatus::Config);
        ttns_samples_free(s);
    }
}

#[test]
fn status_codes_and_messages() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(ttns_samples_from_preset(ptr::null(), 10, 0, &mut s), TtnsStatus::NullPointer);
        assert!(last_error().contains("preset"));

        let name = CString::new("no-such-model").unwrap();
        assert_eq!(ttns_samples_from_preset(name.as_ptr(), 10, 0, &mut s), TtnsStatus::Config);
        assert!(last_error().contains("no-such-model"));

        let path = CString::new("/nonexistent/samples.txt").unwrap();
        assert_eq!(ttns_samples_load(path.as_ptr(), &mut s), TtnsStatus::Io);

        let states = [2usize, 2];
        let values = [0u16, 1, 1, 2];
        assert_eq!(ttns_samples_new(2, states.as_ptr(), 2, values.as_ptr(), &mut s), TtnsStatus::InvalidArgument);

        let values = [0u16, 1, 1, 0];
        assert_eq!(ttns_samples_new(2, states.as_ptr(), 2, values.as_ptr(), &mut s), TtnsStatus::Ok);
        assert!(ttns_last_error().is_null());
        let edges = [1usize, 2];
        let mut m = ptr::null_mut();
        assert_eq!(ttns_fit(s, edges.as_ptr(), 1, ptr::null(), 9, &mut m), TtnsStatus::Ok);
        assert_eq!(ttns_fit(s, edges.as_ptr(), 1, ptr::null(), 0, &mut m), TtnsStatus::InvalidArgument);
        ttns_model_free(m);
        ttns_samples_free(s);
    }
}

#[test]
fn round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let s = trident_samples(500, 9);
        let sp = CString::new(dir.path().join("s.bin").to_str().unwrap()).unwrap();
        assert_eq!(ttns_samples_save(s, sp.as_ptr(), true), TtnsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ttns_samples_load(sp.as_ptr(), &mut back), TtnsStatus::Ok);
        assert_eq!(ttns_samples_len(back), 500);

        let mut m = ptr::null_mut();
        assert_eq!(ttns_fit_tree_model(s, ptr::null(), 1, &mut m), TtnsStatus::Ok);
        let mp = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(ttns_model_save(m, mp.as_ptr()), TtnsStatus::Ok);
        let mut m2 = ptr::null_mut();
        assert_eq!(ttns_model_load(mp.as_ptr(), &mut m2), TtnsStatus::Ok);
        let mut e = 1.0;
        assert_eq!(ttns_model_rel_error(m, m2, &mut e), TtnsStatus::Ok);
        assert!(e < 1e-6);

        std::fs::write(dir.path().join("bad.json"), "{\"format\": \"other\"}").unwrap();
        let bad = CString::new(dir.path().join("bad.json").to_str().unwrap()).unwrap();
        assert_eq!(ttns_model_load(bad.as_ptr(), &mut m2), TtnsStatus::Format);

        ttns_model_free(m2);
        ttns_model_free(m);
        ttns_samples_free(back);
        ttns_samples_free(s);
    }
}

#[test]
fn header_compiles_as_c() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include").join("ttns_sketch.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["ttns_fit", "ttns_model_free", "ttns_samples_free", "ttns_last_error", "TTNS_STATUS_NUMERICAL"] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ttns_sketch.h\"\n\
         int use(void) {\n\
           TtnsSamples *s = 0; TtnsModel *m = 0;\n\
           if (ttns_samples_from_preset(\"trident10\", 10, 1, &s) != TTNS_STATUS_OK) return 1;\n\
           if (ttns_fit(s, 0, 1, 0, 2, &m) != TTNS_STATUS_OK) return 2;\n\
           ttns_model_free(m); ttns_samples_free(s);\n\
           return ttns_last_error() == 0 ? 0 : 3;\n\
         }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(&src)
        .output()
        .expect("a C compiler on PATH");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
