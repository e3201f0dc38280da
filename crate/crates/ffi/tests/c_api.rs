use std::ffi::{CStr, CString};
use std::ptr;

use ssv_core::sentiment::{train, Label, SentenceExample, TrainConfig};
use ssv_ffi::*;

fn last_error() -> String {
    let p = ssv_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn defaults() -> SsvParamsC {
    let mut p = SsvParamsC::default();
    assert_eq!(unsafe { ssv_params_default(&mut p) }, SsvStatus::Ok);
    p
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    unsafe {
        assert_eq!(ssv_params_default(ptr::null_mut()), SsvStatus::NullPointer);
        assert!(last_error().contains("out"));
        assert_eq!(
            ssv_moments(ptr::null(), 0.0, 0.0, 1.0, ptr::null_mut()),
            SsvStatus::NullPointer
        );
        assert_eq!(ssv_document_score(3, 1, 1, ptr::null_mut()), SsvStatus::NullPointer);
        assert_eq!(ssv_series_rows(ptr::null()), 0);
        assert_eq!(ssv_fit_converged(ptr::null()), 0);
        assert!(ssv_fit_loglik(ptr::null()).is_nan());
        let mut h = ptr::null_mut();
        assert_eq!(ssv_classifier_load(ptr::null(), &mut h), SsvStatus::NullPointer);
        ssv_series_free(ptr::null_mut());
        ssv_fit_free(ptr::null_mut());
        ssv_classifier_free(ptr::null_mut());
        ssv_string_free(ptr::null_mut());
    }
}

#[test]
fn moments_match_the_library() {
    let p = defaults();
    assert_eq!(p.beta_v, 1.86);
    let mut m = SsvMomentsC::default();
    assert_eq!(unsafe { ssv_moments(&p, p.mu_s, -3.0, 0.5, &mut m) }, SsvStatus::Ok);
    let req = ssv_core::moments::MomentRequest::new(ssv_core::SsvParams::sp500_2015(), p.mu_s, -3.0, 0.5).unwrap();
    let (r, _) = ssv_core::moments::moment_report(&req).unwrap();
    assert_eq!(m.source, 0);
    assert_eq!((m.e_v, m.var_v, m.cov_sv), (r.e_v, r.var_v, r.cov_sv));

    assert_eq!(unsafe { ssv_moments(&p, p.mu_s, -3.0, 0.0, &mut m) }, SsvStatus::Ok);
    assert!(m.rho_sv.is_nan());
}

#[test]
fn invalid_parameters_map_to_status_codes() {
    let mut p = defaults();
    p.lambda_s = -1.0;
    let mut m = SsvMomentsC::default();
    assert_eq!(
        unsafe { ssv_moments(&p, 0.0, 0.0, 1.0, &mut m) },
        SsvStatus::InvalidArgument
    );
    assert!(last_error().contains("lambda_s"));

    let mut p = defaults();
    p.gamma_v = 2.0 * p.lambda_s;
    assert_eq!(unsafe { ssv_moments(&p, 0.0, 0.0, 1.0, &mut m) }, SsvStatus::Ok);
    assert_eq!(m.source, 1);

    let mut x = 0.0;
    assert_eq!(unsafe { ssv_document_score(0, 0, 0, &mut x) }, SsvStatus::DataError);
    assert_eq!(
        unsafe { ssv_vix_to_logvar(20.0, 7, &mut x) },
        SsvStatus::InvalidArgument
    );
    assert_eq!(unsafe { ssv_vix_to_logvar(-1.0, 0, &mut x) }, SsvStatus::DataError);
    assert_eq!(unsafe { ssv_vix_to_logvar(20.0, 0, &mut x) }, SsvStatus::Ok);
    assert!((x - 2.0 * 0.2f64.ln()).abs() < 1e-15);
    assert_eq!(unsafe { ssv_vix_to_logvar(20.0, 1, &mut x) }, SsvStatus::Ok);
    assert!((x - 0.2f64.ln()).abs() < 1e-15);
}

#[test]
fn document_score_is_bounded() {
    let mut x = 0.0;
    assert_eq!(unsafe { ssv_document_score(5, 5, 0, &mut x) }, SsvStatus::Ok);
    assert_eq!(x, std::f64::consts::LN_2);
    assert_eq!(unsafe { ssv_document_score(2, 2, 1, &mut x) }, SsvStatus::DataError);
}

#[test]
fn simulate_then_read_channels() {
    let p = defaults();
    let mut s = ptr::null_mut();
    let st = unsafe { ssv_simulate(&p, p.mu_s, 7.6, -3.0, 1.0 / 26.0, 50, 4, 11, &mut s) };
    assert_eq!(st, SsvStatus::Ok);
    let rows = unsafe { ssv_series_rows(s) };
    assert_eq!(rows, 51);
    let mut buf = vec![0.0; rows];
    assert_eq!(
        unsafe { ssv_series_channel(s, 0, buf.as_mut_ptr(), rows) },
        SsvStatus::Ok
    );
    assert_eq!(buf[0], p.mu_s);
    assert_eq!(
        unsafe { ssv_series_channel(s, 2, buf.as_mut_ptr(), rows) },
        SsvStatus::Ok
    );
    assert_eq!(buf[0], -3.0);
    assert_eq!(
        unsafe { ssv_series_channel(s, 3, buf.as_mut_ptr(), rows) },
        SsvStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { ssv_series_channel(s, 0, buf.as_mut_ptr(), rows - 1) },
        SsvStatus::BufferTooSmall
    );

    let mut again = ptr::null_mut();
    unsafe { ssv_simulate(&p, p.mu_s, 7.6, -3.0, 1.0 / 26.0, 50, 4, 11, &mut again) };
    let mut other = vec![0.0; rows];
    unsafe { ssv_series_channel(again, 2, other.as_mut_ptr(), rows) };
    assert_eq!(buf, other);
    unsafe {
        ssv_series_free(s);
        ssv_series_free(again);
    }
}

#[test]
fn fit_a_small_sentiment_series() {
    let p = defaults();
    let mut joint = ptr::null_mut();
    unsafe { ssv_simulate(&p, p.mu_s, 7.6, -3.0, 1.0 / 26.0, 120, 4, 5, &mut joint) };
    let mut s = vec![0.0; 121];
    unsafe { ssv_series_channel(joint, 0, s.as_mut_ptr(), s.len()) };
    unsafe { ssv_series_free(joint) };

    let mut series = ptr::null_mut();
    assert_eq!(
        unsafe { ssv_series_new(s.as_ptr(), s.len(), 1, 1.0 / 26.0, &mut series) },
        SsvStatus::Ok
    );
    let cfg = CString::new(r#"{"n_sims": 100, "m_substeps": 2}"#).unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { ssv_fit(series, cfg.as_ptr(), &mut f) }, SsvStatus::Ok);
    assert!(unsafe { ssv_fit_loglik(f) }.is_finite());

    let mut buf = [0.0; 2];
    let mut n = 0;
    assert_eq!(
        unsafe { ssv_fit_params(f, buf.as_mut_ptr(), buf.len(), &mut n) },
        SsvStatus::BufferTooSmall
    );
    assert_eq!(n, 3);
    let mut buf = [0.0; 3];
    assert_eq!(
        unsafe { ssv_fit_params(f, buf.as_mut_ptr(), buf.len(), &mut n) },
        SsvStatus::Ok
    );
    assert!(buf[0] > 0.0 && buf[2] > 0.0);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ssv_fit_to_json(f, &mut json) }, SsvStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("theta_hat"));
    unsafe {
        ssv_string_free(json);
        ssv_fit_free(f);
    }

    let bad = CString::new(r#"{"n_sim": 100}"#).unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { ssv_fit(series, bad.as_ptr(), &mut f) },
        SsvStatus::InvalidArgument
    );
    assert!(f.is_null());
    unsafe { ssv_series_free(series) };
}

#[test]
fn series_new_checks_shape() {
    let v = [0.1, 0.2, 0.3];
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { ssv_series_new(v.as_ptr(), 1, 1, 0.1, &mut h) },
        SsvStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { ssv_series_new(v.as_ptr(), 3, 1, -0.1, &mut h) },
        SsvStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { ssv_series_new(v.as_ptr(), 1, 2, 0.1, &mut h) },
        SsvStatus::InvalidArgument
    );
}

#[test]
fn classifier_round_trip_through_a_file() {
    let mut examples = Vec::new();
    for i in 0..30 {
        examples.push(SentenceExample::from_text(&format!("profit rose strongly {i}"), Label::Positive).unwrap());
        examples.push(SentenceExample::from_text(&format!("loss widened sharply {i}"), Label::Negative).unwrap());
        examples.push(SentenceExample::from_text(&format!("meeting scheduled today {i}"), Label::Neutral).unwrap());
    }
    let model = train(&examples, &TrainConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.model");
    model.save(&path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut clf = ptr::null_mut();
    assert_eq!(unsafe { ssv_classifier_load(cpath.as_ptr(), &mut clf) }, SsvStatus::Ok);
    let mut label = 9;
    let text = CString::new("profit rose strongly").unwrap();
    assert_eq!(
        unsafe { ssv_classifier_predict(clf, text.as_ptr(), &mut label) },
        SsvStatus::Ok
    );
    assert_eq!(label, 1);
    let doc = CString::new("Profit rose strongly. Loss widened sharply. Meeting scheduled today.").unwrap();
    let mut score = 1.0;
    assert_eq!(
        unsafe { ssv_classifier_score_document(clf, doc.as_ptr(), &mut score) },
        SsvStatus::Ok
    );
    assert_eq!(score, 0.0);
    let empty = CString::new("...").unwrap();
    assert_eq!(
        unsafe { ssv_classifier_score_document(clf, empty.as_ptr(), &mut score) },
        SsvStatus::DataError
    );
    unsafe { ssv_classifier_free(clf) };

    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let mut clf = ptr::null_mut();
    assert_eq!(
        unsafe { ssv_classifier_load(missing.as_ptr(), &mut clf) },
        SsvStatus::DataError
    );
    assert!(clf.is_null());
}

#[test]
fn errors_are_per_thread() {
    let mut x = 0.0;
    assert_eq!(unsafe { ssv_document_score(0, 0, 0, &mut x) }, SsvStatus::DataError);
    let other = std::thread::spawn(|| ssv_last_error_message().is_null())
        .join()
        .unwrap();
    assert!(other);
    assert!(last_error().contains("no sentences"));
}
