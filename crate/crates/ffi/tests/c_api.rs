use std::ffi::{CStr, CString};
use std::ptr;

use cadstream_ffi::*;

#[test]
fn filter_matches_hand_update() {
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(cads_filter_with_stats(1.0, 0.1, 0.1, 5e-5, &mut f), CadsStatus::CadsOk);
        let mut admitted = false;
        assert_eq!(cads_filter_observe(f, 1.05, &mut admitted), CadsStatus::CadsOk);
        assert!(admitted);
        let (mut mu, mut tau) = (0.0, 0.0);
        cads_filter_stats(f, &mut mu, &mut tau);
        // delta = 0.05: mu' = 1.005, tau' = 0.1 + 0.1 * (0.05 - 0.1) = 0.095
        assert!((mu - 1.005).abs() < 1e-15);
        assert!((tau - 0.095).abs() < 1e-15);
        assert_eq!(cads_filter_observe(f, 5.0, &mut admitted), CadsStatus::CadsOk);
        assert!(!admitted);
        let (mut mu2, mut tau2) = (0.0, 0.0);
        cads_filter_stats(f, &mut mu2, &mut tau2);
        assert_eq!((mu2.to_bits(), tau2.to_bits()), (mu.to_bits(), tau.to_bits()));
        assert_eq!(cads_filter_observe(f, f64::NAN, &mut admitted), CadsStatus::CadsNumeric);
        cads_filter_free(f);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(cads_filter_new(1.5, 5e-5, 0, &mut f), CadsStatus::CadsConfig);
        assert!(f.is_null());
        let msg = CStr::from_ptr(cads_last_error()).to_str().unwrap();
        assert!(msg.contains("alpha"), "{msg}");
        assert_eq!(cads_filter_new(0.1, 5e-5, 0, ptr::null_mut()), CadsStatus::CadsNullPointer);
        let mut out = 0.0;
        assert_eq!(cads_auc(ptr::null(), ptr::null(), 3, &mut out), CadsStatus::CadsNullPointer);
        cads_filter_free(ptr::null_mut());
    }
}

#[test]
fn metrics_follow_hand_example() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let (mut a, mut e) = (0.0, 0.0);
    unsafe {
        assert_eq!(cads_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut a), CadsStatus::CadsOk);
        assert_eq!(cads_eer(scores.as_ptr(), labels.as_ptr(), 4, &mut e), CadsStatus::CadsOk);
        assert_eq!(cads_auc(scores.as_ptr(), [0u8, 0, 0, 0].as_ptr(), 4, &mut a), CadsStatus::CadsMetric);
    }
    assert_eq!(a, 0.75);
    assert_eq!(e, 0.5);
}

#[test]
fn autoencoder_trains_on_one_image() {
    let mut ae = ptr::null_mut();
    let img: Vec<f32> = (0..784).map(|i| if (i / 28 + i % 28) % 7 == 0 { 0.9 } else { -1.0 }).collect();
    unsafe {
        assert_eq!(cads_autoencoder_new(3, 1e-3, &mut ae), CadsStatus::CadsOk);
        let (mut before, mut after, mut l) = (0.0, 0.0, 0.0);
        cads_autoencoder_score(ae, img.as_ptr(), img.len(), &mut before);
        for _ in 0..20 {
            assert_eq!(cads_autoencoder_train(ae, img.as_ptr(), img.len(), &mut l), CadsStatus::CadsOk);
        }
        cads_autoencoder_score(ae, img.as_ptr(), img.len(), &mut after);
        assert!(after < before, "{after} !< {before}");
        assert_eq!(cads_autoencoder_score(ae, img.as_ptr(), 100, &mut l), CadsStatus::CadsDimension);
        cads_autoencoder_free(ae);
    }
}

#[test]
fn model_scores_trains_and_round_trips() {
    let cfg = CString::new(
        "height = 16\nwidth = 16\nadversarial = false\nlambda = 0.0\n[generator]\ndepth = 2\nbase_width = 4\n",
    )
    .unwrap();
    let n = 16 * 16;
    let prev: Vec<f32> = (0..n).map(|i| ((i % 16) as f32 / 8.0 - 1.0) * 0.5).collect();
    let curr: Vec<f32> = (0..n).map(|i| (((i % 16) as f32 - 1.0) / 8.0 - 1.0) * 0.5).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.cadm").to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(cads_model_new(cfg.as_ptr(), &mut m), CadsStatus::CadsOk);
        let mut l = 0.0;
        for _ in 0..5 {
            assert_eq!(cads_model_train(m, prev.as_ptr(), curr.as_ptr(), n, &mut l), CadsStatus::CadsOk);
        }
        let mut s1 = 0.0;
        cads_model_score(m, prev.as_ptr(), curr.as_ptr(), n, &mut s1);
        assert_eq!(cads_model_save(m, path.as_ptr()), CadsStatus::CadsOk);

        let mut fresh = ptr::null_mut();
        assert_eq!(cads_model_new(cfg.as_ptr(), &mut fresh), CadsStatus::CadsOk);
        assert_eq!(cads_model_load(fresh, path.as_ptr()), CadsStatus::CadsOk);
        let mut s2 = 0.0;
        cads_model_score(fresh, prev.as_ptr(), curr.as_ptr(), n, &mut s2);
        assert_eq!(s1.to_bits(), s2.to_bits());

        assert_eq!(cads_model_score(m, prev.as_ptr(), curr.as_ptr(), n - 1, &mut l), CadsStatus::CadsDimension);
        let missing = CString::new(dir.path().join("none.cadm").to_str().unwrap()).unwrap();
        assert_ne!(cads_model_load(m, missing.as_ptr()), CadsStatus::CadsOk);
        let bad = CString::new("height = \"tall\"").unwrap();
        let mut other = ptr::null_mut();
        assert_eq!(cads_model_new(bad.as_ptr(), &mut other), CadsStatus::CadsConfig);
        cads_model_free(m);
        cads_model_free(fresh);
    }
}
