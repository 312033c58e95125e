use std::ffi::{CStr, CString};
use std::ptr;

use revrank_ffi::*;

fn csv() -> CString {
    let mut text = String::from("candidate_id,program_id,score,test_year,attempt_index,major_code,citizen\n");
    for i in 0..40 {
        let program = if i < 20 { "LOW" } else { "HIGH" };
        text.push_str(&format!("c{i},{program},{},2010,1,,\n", 400 + 10 * i));
        text.push_str(&format!("c{i},MID,{},2010,1,,\n", 400 + 10 * i));
    }
    CString::new(text).unwrap()
}

fn opts() -> RrLoadOptions {
    RrLoadOptions {
        min_reports: 1,
        ..rr_load_options_default()
    }
}

fn last_error() -> String {
    let p = rr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    rr_string_free(s);
    out
}

#[test]
fn ranks_a_dataset_through_the_c_abi() {
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(rr_dataset_from_csv(csv().as_ptr(), &opts(), &mut d), RrStatus::Ok);
        let (mut reports, mut programs) = (0, 0);
        assert_eq!(rr_dataset_num_reports(d, &mut reports), RrStatus::Ok);
        assert_eq!(rr_dataset_num_programs(d, &mut programs), RrStatus::Ok);
        assert_eq!((reports, programs), (80, 3));

        let mut m = ptr::null_mut();
        let mut t = ptr::null_mut();
        let mut mp = ptr::null_mut();
        assert_eq!(rr_rank_m(d, RrNormalization::CandidateShare, &mut m), RrStatus::Ok);
        assert_eq!(rr_rank_m_plus(d, RrNormalization::ReportShare, &mut mp), RrStatus::Ok);
        assert_eq!(rr_rank_tournament(d, true, &mut t), RrStatus::Ok);

        let mut len = 0;
        assert_eq!(rr_ranking_len(m, &mut len), RrStatus::Ok);
        assert_eq!(len, 3);
        let mut id = ptr::null_mut();
        assert_eq!(rr_ranking_program_id(m, 0, &mut id), RrStatus::Ok);
        assert_eq!(take(id), "HIGH");
        let (mut first, mut last) = (0.0, 0.0);
        rr_ranking_metric(m, 0, &mut first);
        rr_ranking_metric(m, 2, &mut last);
        assert!(first >= last);

        let mut rho = 0.0;
        assert_eq!(rr_spearman(m, t, &mut rho), RrStatus::Ok);
        assert!((-1.0..=1.0).contains(&rho));

        let mut json = ptr::null_mut();
        assert_eq!(rr_ranking_to_json(t, &mut json), RrStatus::Ok);
        assert!(take(json).contains("\"HIGH\""));
        let mut text = ptr::null_mut();
        assert_eq!(rr_ranking_to_csv(m, &mut text), RrStatus::Ok);
        let text = take(text);
        assert!(text.starts_with("rank,program_id,metric"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, &text).unwrap();
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut back = ptr::null_mut();
        assert_eq!(rr_ranking_read_csv(cpath.as_ptr(), &mut back), RrStatus::Ok);
        let mut same = 0.0;
        assert_eq!(rr_spearman(m, back, &mut same), RrStatus::Ok);
        assert!((same - 1.0).abs() < 1e-12);

        for r in [m, mp, t, back] {
            rr_ranking_free(r);
        }
        rr_dataset_free(d);
    }
}

#[test]
fn loads_from_a_file_with_default_options() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, csv().as_bytes()).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(rr_dataset_load(cpath.as_ptr(), ptr::null(), &mut d), RrStatus::Ok);
        // every program is below the default report floor
        let mut programs = 99;
        rr_dataset_num_programs(d, &mut programs);
        assert_eq!(programs, 0);
        rr_dataset_free(d);

        let missing = CString::new("/nonexistent/d.csv").unwrap();
        assert_eq!(rr_dataset_load(missing.as_ptr(), ptr::null(), &mut d), RrStatus::Io);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(rr_dataset_from_csv(ptr::null(), ptr::null(), &mut d), RrStatus::NullPointer);
        assert!(last_error().contains("csv"));

        let bad = CString::new("candidate_id,program_id,score,test_year,attempt_index,major_code,citizen\na,P,abc,2010,1,,\n").unwrap();
        assert_eq!(rr_dataset_from_csv(bad.as_ptr(), &opts(), &mut d), RrStatus::Parse);
        assert!(last_error().contains("line 2"));

        assert_eq!(rr_dataset_from_csv(csv().as_ptr(), &opts(), &mut d), RrStatus::Ok);
        let mut r = ptr::null_mut();
        rr_rank_m(d, RrNormalization::CandidateShare, &mut r);
        let mut id = ptr::null_mut();
        assert_eq!(rr_ranking_program_id(r, 3, &mut id), RrStatus::IndexOutOfRange);
        assert!(id.is_null());
        assert_eq!(rr_ranking_len(r, ptr::null_mut()), RrStatus::NullPointer);
        rr_ranking_free(r);
        rr_dataset_free(d);
        rr_ranking_free(ptr::null_mut());
        rr_dataset_free(ptr::null_mut());
        rr_string_free(ptr::null_mut());
    }
}

#[test]
fn portfolio_choice_matches_the_library() {
    let p = [0.9, 0.5, 0.1];
    let v = [1.0, 3.0, 10.0];
    unsafe {
        let mut eu = 0.0;
        assert_eq!(rr_expected_utility(p.as_ptr(), v.as_ptr(), 3, &mut eu), RrStatus::Ok);
        let offers: Vec<_> = (0..3)
            .map(|i| revrank::choice::CollegeOffer::new(i.to_string(), p[i], v[i]).unwrap())
            .collect();
        assert!((eu - revrank::choice::expected_utility(&offers).unwrap()).abs() < 1e-12);

        let mut idx = [usize::MAX; 2];
        let (mut len, mut value) = (0, 0.0);
        assert_eq!(
            rr_optimal_portfolio(p.as_ptr(), v.as_ptr(), 3, 2, false, idx.as_mut_ptr(), &mut len, &mut value),
            RrStatus::Ok
        );
        let expected = revrank::choice::optimal_portfolio(&offers, 2, false).unwrap();
        assert_eq!(len, expected.offers.len());
        assert!((value - expected.value).abs() < 1e-12);
        for (k, o) in expected.offers.iter().enumerate() {
            assert_eq!(idx[k].to_string(), o.program_id.to_string());
        }

        let bad = [1.5];
        assert_eq!(
            rr_expected_utility(bad.as_ptr(), v.as_ptr(), 1, &mut eu),
            RrStatus::InvalidArgument
        );
        assert_eq!(rr_expected_utility(ptr::null(), ptr::null(), 0, &mut eu), RrStatus::Ok);
        assert_eq!(eu, 0.0);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(rr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
