use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use cvr_core::cvr::{write_cvrt, Modality, ModalityVolume};
use cvr_core::model::{build_model, save_checkpoint};
use cvr_core::TensorND;
use cvr_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = cvr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn saved_model(dir: &Path) -> (std::path::PathBuf, cvr_core::model::ConvNet3D) {
    let model = build_model(Modality::Flow, 2, [24, 16, 16], 3).unwrap();
    let path = dir.join("flow.cvrm");
    save_checkpoint(&model, &path).unwrap();
    (path, model)
}

#[test]
fn load_dims_and_predict_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, model) = saved_model(dir.path());
    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { cvr_model_load(cstr(&path).as_ptr(), &mut handle) },
        CvrStatus::Ok
    );

    let mut dims = [0usize; 4];
    let mut modality = 9u32;
    assert_eq!(
        unsafe { cvr_model_input_dims(handle, dims.as_mut_ptr(), &mut modality) },
        CvrStatus::Ok
    );
    assert_eq!(dims, [2, 24, 16, 16]);
    assert_eq!(modality, 1);

    let data: Vec<f32> = (0..2 * 24 * 16 * 16)
        .map(|i| ((i % 17) as f32 - 8.0) * 0.1)
        .collect();
    let mut logit = f64::NAN;
    assert_eq!(
        unsafe { cvr_model_predict(handle, data.as_ptr(), data.len(), &mut logit) },
        CvrStatus::Ok
    );
    let v = ModalityVolume::new(
        Modality::Flow,
        TensorND::new(vec![2, 24, 16, 16], data.clone()).unwrap(),
    )
    .unwrap();
    let expect = model.logit(&model.prepare(&v).unwrap()).unwrap();
    assert_eq!(logit, expect);

    let status = unsafe { cvr_model_predict(handle, data.as_ptr(), data.len() - 1, &mut logit) };
    assert_eq!(status, CvrStatus::Shape);
    assert!(last_error().contains("floats"));
    unsafe { cvr_model_free(handle) };
}

#[test]
fn null_pointers_are_reported() {
    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { cvr_model_load(ptr::null(), &mut handle) },
        CvrStatus::NullPointer
    );
    assert!(handle.is_null());
    let mut dims = [0usize; 4];
    assert_eq!(
        unsafe { cvr_model_input_dims(ptr::null(), dims.as_mut_ptr(), ptr::null_mut()) },
        CvrStatus::NullPointer
    );
    let mut out = 0.0;
    assert_eq!(
        unsafe { cvr_fuse_logits(ptr::null(), ptr::null(), ptr::null(), &mut out) },
        CvrStatus::NullPointer
    );
    assert_eq!(unsafe { cvr_tensor_len(ptr::null()) }, 0);
    assert!(unsafe { cvr_tensor_data(ptr::null()) }.is_null());
    unsafe {
        cvr_model_free(ptr::null_mut());
        cvr_tensor_free(ptr::null_mut());
    }
}

#[test]
fn missing_and_corrupt_files_map_to_io_and_format() {
    let dir = tempfile::tempdir().unwrap();
    let mut handle = ptr::null_mut();
    let missing = dir.path().join("nope.cvrm");
    assert_eq!(
        unsafe { cvr_model_load(cstr(&missing).as_ptr(), &mut handle) },
        CvrStatus::Io
    );
    let junk = dir.path().join("junk.cvrm");
    std::fs::write(&junk, b"NOPE\x01\x00garbage").unwrap();
    assert_eq!(
        unsafe { cvr_model_load(cstr(&junk).as_ptr(), &mut handle) },
        CvrStatus::Format
    );
    assert!(!last_error().is_empty());
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { cvr_cvrt_read(cstr(&junk).as_ptr(), &mut t) },
        CvrStatus::Format
    );
}

#[test]
fn fuse_matches_the_weighted_sum() {
    let logits = [1.5, -2.0, 0.25];
    let weights = [0.5, 0.3, 0.2];
    let mut out = 0.0;
    let st = unsafe {
        cvr_fuse_logits(
            logits.as_ptr(),
            [1u8, 1, 1].as_ptr(),
            weights.as_ptr(),
            &mut out,
        )
    };
    assert_eq!(st, CvrStatus::Ok);
    assert!((out - (0.75 - 0.6 + 0.05)).abs() < 1e-12);

    // A missing modality with positive weight is an argument error.
    let st = unsafe {
        cvr_fuse_logits(
            logits.as_ptr(),
            [1u8, 0, 1].as_ptr(),
            weights.as_ptr(),
            &mut out,
        )
    };
    assert_eq!(st, CvrStatus::InvalidArgument);
    let st = unsafe {
        cvr_fuse_logits(
            logits.as_ptr(),
            [1u8, 0, 0].as_ptr(),
            [1.0, 0.0, 0.0].as_ptr(),
            &mut out,
        )
    };
    assert_eq!(st, CvrStatus::Ok);
    assert_eq!(out, 1.5);

    let bad = [f64::INFINITY, 0.0, 0.0];
    let st = unsafe {
        cvr_fuse_logits(
            bad.as_ptr(),
            [1u8, 1, 1].as_ptr(),
            weights.as_ptr(),
            &mut out,
        )
    };
    assert_eq!(st, CvrStatus::NonFinite);
}

#[test]
fn video_vote_boundary() {
    let vote = |fakes: usize| {
        let fused: Vec<f64> = (0..40)
            .map(|i| if i < fakes { 1.0 } else { -1.0 })
            .collect();
        let (mut is_fake, mut frac) = (9u8, -1.0);
        let st =
            unsafe { cvr_decide_video(fused.as_ptr(), fused.len(), 0.05, &mut is_fake, &mut frac) };
        assert_eq!(st, CvrStatus::Ok);
        (is_fake, frac)
    };
    assert_eq!(vote(2), (0, 0.05));
    assert_eq!(vote(3), (1, 0.075));
    let mut is_fake = 0u8;
    let st = unsafe { cvr_decide_video([0.0f64].as_ptr(), 0, 0.05, &mut is_fake, ptr::null_mut()) };
    assert_eq!(st, CvrStatus::InvalidArgument);
    let st = unsafe { cvr_decide_video([0.0f64].as_ptr(), 1, 1.5, &mut is_fake, ptr::null_mut()) };
    assert_eq!(st, CvrStatus::InvalidArgument);
}

#[test]
fn cvrt_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.cvrt");
    let t = TensorND::from_fn(&[2, 3, 4], |i| i as f32 * 0.5 - 3.0).unwrap();
    write_cvrt(&path, &t).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { cvr_cvrt_read(cstr(&path).as_ptr(), &mut h) },
        CvrStatus::Ok
    );
    unsafe {
        assert_eq!(cvr_tensor_ndim(h), 3);
        assert_eq!([0, 1, 2, 3].map(|a| cvr_tensor_dim(h, a)), [2, 3, 4, 0]);
        let n = cvr_tensor_len(h);
        assert_eq!(std::slice::from_raw_parts(cvr_tensor_data(h), n), t.data());
        cvr_tensor_free(h);
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cvr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "cvr_last_error_message",
        "cvr_model_load",
        "cvr_model_free",
        "cvr_model_input_dims",
        "cvr_model_predict",
        "cvr_fuse_logits",
        "cvr_decide_video",
        "cvr_cvrt_read",
        "cvr_tensor_ndim",
        "cvr_tensor_dim",
        "cvr_tensor_len",
        "cvr_tensor_data",
        "cvr_tensor_free",
        "CVR_STATUS_PANIC = 7",
        "typedef struct CvrModel CvrModel",
    ] {
        assert!(text.contains(f), "{f} missing from cvr.h");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipping the syntax check");
        return;
    };
    assert!(status.success(), "cvr.h does not compile as C");
}
