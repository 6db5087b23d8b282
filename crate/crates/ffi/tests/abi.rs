use std::ffi::{CStr, CString};
use std::ptr;

use smsat_core::cam::{build_cam, CamConfig};
use smsat_core::encoder::{build_encoder, embed_clips, EncoderConfig};
use smsat_core::features::{extract_features, FeatureParams, MelExtractor, FEATURE_DIM};
use smsat_core::io::{save_wav, AudioClip};
use smsat_ffi::*;

fn last_error() -> Option<String> {
    let p = smsat_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn tone(n: usize, rate: u32, hz: f64) -> Vec<f64> {
    (0..n)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * hz * i as f64 / rate as f64).sin() + 0.01 * ((i * 7919) % 13) as f64 / 13.0)
        .collect()
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(smsat_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn rmse_value_and_error_reporting() {
    let x = [0.0, 0.0];
    let y = [3.0, 4.0];
    let mut r = 0.0;
    assert_eq!(unsafe { smsat_rmse(x.as_ptr(), y.as_ptr(), 2, &mut r) }, SmsatStatus::Ok);
    assert!((r - 12.5f64.sqrt()).abs() < 1e-15);
    assert!(last_error().is_none());

    assert_eq!(unsafe { smsat_rmse(x.as_ptr(), ptr::null(), 2, &mut r) }, SmsatStatus::NullPointer);
    assert!(last_error().unwrap().contains('y'));
    assert_eq!(unsafe { smsat_rmse(x.as_ptr(), y.as_ptr(), 2, ptr::null_mut()) }, SmsatStatus::NullPointer);
    assert_ne!(unsafe { smsat_rmse(x.as_ptr(), y.as_ptr(), 0, &mut r) }, SmsatStatus::Ok);
    assert!(last_error().is_some());
}

#[test]
fn envelope_of_bin_centred_cosine_is_flat() {
    let n = 256;
    let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64).cos()).collect();
    let mut env = vec![0.0; n];
    assert_eq!(unsafe { smsat_analytic_envelope(x.as_ptr(), n, env.as_mut_ptr()) }, SmsatStatus::Ok);
    assert!(env.iter().all(|v| (v - 1.0).abs() < 1e-9));
    assert_eq!(unsafe { smsat_analytic_envelope(x.as_ptr(), n, ptr::null_mut()) }, SmsatStatus::NullPointer);
}

#[test]
fn welch_matches_hand_formula() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 4.0, 6.0, 8.0];
    let (mut t, mut df, mut p) = (0.0, 0.0, 0.0);
    let st = unsafe { smsat_welch_t(a.as_ptr(), 5, b.as_ptr(), 4, &mut t, &mut df, &mut p) };
    assert_eq!(st, SmsatStatus::Ok);
    // means 3 and 5, variances 2.5 and 20/3
    let (va, vb) = (2.5 / 5.0, (20.0 / 3.0) / 4.0);
    let t0 = (3.0 - 5.0) / f64::sqrt(va + vb);
    let df0 = (va + vb) * (va + vb) / (va * va / 4.0 + vb * vb / 3.0);
    assert!((t - t0).abs() < 1e-12);
    assert!((df - df0).abs() < 1e-12);
    assert!(p > 0.0 && p < 1.0);
    let st = unsafe { smsat_welch_t(a.as_ptr(), 5, b.as_ptr(), 4, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, SmsatStatus::Ok);
    assert_ne!(unsafe { smsat_welch_t(a.as_ptr(), 1, b.as_ptr(), 4, &mut t, &mut df, &mut p) }, SmsatStatus::Ok);
}

#[test]
fn calmest_lowest_mean_and_ties() {
    let mut label = -1;
    let mut tie = true;
    assert_eq!(unsafe { smsat_calmest([3.0, 1.0, 2.0].as_ptr(), &mut label, &mut tie) }, SmsatStatus::Ok);
    assert_eq!((label, tie), (1, false));
    assert_eq!(unsafe { smsat_calmest([1.0, 1.0, 2.0].as_ptr(), &mut label, &mut tie) }, SmsatStatus::Ok);
    assert_eq!((label, tie), (0, true));
    assert_eq!(unsafe { smsat_calmest([1.0, 1.0, 1.0].as_ptr(), &mut label, ptr::null_mut()) }, SmsatStatus::Ok);
    assert_eq!(label, 2);
    assert_eq!(unsafe { smsat_calmest([f64::NAN, 1.0, 1.0].as_ptr(), &mut label, &mut tie) }, SmsatStatus::Numeric);
}

#[test]
fn clip_handles_and_features_match_core() {
    let x = tone(16000, 16000, 440.0);
    let mut clip = ptr::null_mut();
    assert_eq!(unsafe { smsat_clip_from_samples(x.as_ptr(), x.len(), 16000, &mut clip) }, SmsatStatus::Ok);
    assert_eq!(unsafe { smsat_clip_len(clip) }, x.len());
    assert_eq!(unsafe { smsat_clip_rate(clip) }, 16000);
    let mut f = [0.0; FEATURE_DIM];
    assert_eq!(unsafe { smsat_extract_features(clip, f.as_mut_ptr()) }, SmsatStatus::Ok);
    let ex = MelExtractor::new(FeatureParams::default()).unwrap();
    let want = extract_features(&AudioClip::new(x, 16000), &ex).unwrap();
    assert_eq!(f, want.0);
    unsafe { smsat_clip_free(clip) };
    unsafe { smsat_clip_free(ptr::null_mut()) };
    assert_eq!(unsafe { smsat_extract_features(ptr::null(), f.as_mut_ptr()) }, SmsatStatus::NullPointer);
    assert_eq!(unsafe { smsat_clip_len(ptr::null()) }, 0);
}

#[test]
fn wav_round_trip_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.wav");
    save_wav(&AudioClip::new(tone(800, 8000, 100.0), 8000), &p).unwrap();
    let cp = CString::new(p.to_str().unwrap()).unwrap();
    let mut clip = ptr::null_mut();
    assert_eq!(unsafe { smsat_clip_load_wav(cp.as_ptr(), &mut clip) }, SmsatStatus::Ok);
    assert_eq!(unsafe { smsat_clip_len(clip) }, 800);
    unsafe { smsat_clip_free(clip) };

    let missing = CString::new(dir.path().join("nope.wav").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { smsat_clip_load_wav(missing.as_ptr(), &mut clip) }, SmsatStatus::Io);
    assert!(last_error().unwrap().contains("nope.wav"));
    std::fs::write(dir.path().join("junk.wav"), b"RIFF....not audio").unwrap();
    let junk = CString::new(dir.path().join("junk.wav").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { smsat_clip_load_wav(junk.as_ptr(), &mut clip) }, SmsatStatus::Format);
    assert_eq!(unsafe { smsat_clip_load_wav(ptr::null(), &mut clip) }, SmsatStatus::NullPointer);
}

#[test]
fn cam_predictions_match_core() {
    let dir = tempfile::tempdir().unwrap();
    let cam = build_cam(&CamConfig::desk(), 3).unwrap();
    let p = dir.path().join("cam.ck");
    cam.save(&p, serde_json::Value::Null).unwrap();
    let rows: Vec<Vec<f64>> = (0..4).map(|r| (0..FEATURE_DIM).map(|c| ((r * 31 + c * 7) % 11) as f64 / 5.0 - 1.0).collect()).collect();
    let flat: Vec<f64> = rows.concat();

    let cp = CString::new(p.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { smsat_cam_load(cp.as_ptr(), &mut h) }, SmsatStatus::Ok);
    let mut labels = [0i32; 4];
    let mut proba = [0.0; 12];
    assert_eq!(unsafe { smsat_cam_predict(h, flat.as_ptr(), 4, labels.as_mut_ptr(), proba.as_mut_ptr()) }, SmsatStatus::Ok);
    let want = cam.predict_proba(&rows).unwrap();
    assert_eq!(proba.to_vec(), want.concat());
    let want_labels: Vec<i32> = cam.predict(&rows).unwrap().iter().map(|l| l.index() as i32).collect();
    assert_eq!(labels.to_vec(), want_labels);
    assert_eq!(unsafe { smsat_cam_predict(h, flat.as_ptr(), 4, ptr::null_mut(), ptr::null_mut()) }, SmsatStatus::NullPointer);
    unsafe { smsat_cam_free(h) };
}

#[test]
fn encoder_embedding_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = EncoderConfig {
        width_scale: 0.125,
        ..EncoderConfig::default()
    };
    let enc = build_encoder(&cfg, &FeatureParams::default(), 5).unwrap();
    let p = dir.path().join("enc.ck");
    enc.save(&p, serde_json::Value::Null).unwrap();
    let x = tone(16000, 16000, 300.0);
    let want = embed_clips(&enc, &[AudioClip::new(x.clone(), 16000)], 1).unwrap().remove(0).vector;

    let cp = CString::new(p.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { smsat_encoder_load(cp.as_ptr(), &mut h) }, SmsatStatus::Ok);
    let mut clip = ptr::null_mut();
    assert_eq!(unsafe { smsat_clip_from_samples(x.as_ptr(), x.len(), 16000, &mut clip) }, SmsatStatus::Ok);
    let mut len = 0;
    assert_eq!(unsafe { smsat_encoder_embed(h, clip, ptr::null_mut(), 0, &mut len) }, SmsatStatus::BufferTooSmall);
    assert_eq!(len, want.len());
    let mut buf = vec![0.0; len];
    assert_eq!(unsafe { smsat_encoder_embed(h, clip, buf.as_mut_ptr(), len, &mut len) }, SmsatStatus::Ok);
    assert_eq!(buf, want);
    unsafe {
        smsat_clip_free(clip);
        smsat_encoder_free(h);
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/smsat.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for f in &exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("t.c");
    std::fs::write(
        &c,
        "#include \"smsat.h\"\nint main(void) { double r; double a[2] = {0, 1}; return smsat_rmse(a, a, 2, &r) == SMSAT_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let st = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&c)
        .status()
        .unwrap();
    assert!(st.success());
}
