use std::ffi::{CStr, CString};
use std::ptr;

use vexp_ffi::*;

const VOCAB_JSON: &str = include_str!("data/vocab.json");

fn last_error() -> String {
    let p = vexp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load() -> *mut VexpVocab {
    let mut v = ptr::null_mut();
    let s = unsafe { vexp_vocab_from_json(VOCAB_JSON.as_ptr(), VOCAB_JSON.len(), &mut v) };
    assert_eq!(s, VexpStatus::Ok);
    v
}

#[test]
fn tokenize_with_size_query_and_decode() {
    let v = load();
    let text = "  كتب   الكتاب ";
    let mut n = 0;
    let s =
        unsafe { vexp_vocab_tokenize(v, text.as_ptr(), text.len(), ptr::null_mut(), 0, &mut n) };
    assert_eq!(s, VexpStatus::BufferTooSmall);
    assert!(n > 0);

    let mut ids = vec![0u32; n];
    let s =
        unsafe { vexp_vocab_tokenize(v, text.as_ptr(), text.len(), ids.as_mut_ptr(), n, &mut n) };
    assert_eq!(s, VexpStatus::Ok);
    assert_eq!(n, ids.len());
    assert!(
        ids.iter().any(|&id| id as usize >= 256 + 8),
        "no merged token used: {ids:?}"
    );

    let mut bytes = vec![0u8; 64];
    let mut len = 0;
    let s = unsafe {
        vexp_vocab_decode(
            v,
            ids.as_ptr(),
            n,
            bytes.as_mut_ptr(),
            bytes.len(),
            &mut len,
        )
    };
    assert_eq!(s, VexpStatus::Ok);
    assert_eq!(std::str::from_utf8(&bytes[..len]).unwrap(), "كتبالكتاب");

    let bad = [u32::MAX];
    let s = unsafe {
        vexp_vocab_decode(
            v,
            bad.as_ptr(),
            1,
            bytes.as_mut_ptr(),
            bytes.len(),
            &mut len,
        )
    };
    assert_eq!(s, VexpStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
    unsafe { vexp_vocab_free(v) };
}

#[test]
fn load_errors_map_to_status_codes() {
    let mut v = ptr::null_mut();
    let missing = CString::new("/nonexistent/vocab.json").unwrap();
    assert_eq!(
        unsafe { vexp_vocab_load(missing.as_ptr(), &mut v) },
        VexpStatus::Io
    );
    assert!(v.is_null());

    let junk = b"{\"tokens\": 3}";
    assert_eq!(
        unsafe { vexp_vocab_from_json(junk.as_ptr(), junk.len(), &mut v) },
        VexpStatus::Data
    );
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { vexp_vocab_load(ptr::null(), &mut v) },
        VexpStatus::NullPointer
    );
    let text = b"x";
    let mut n = 0;
    let s =
        unsafe { vexp_vocab_tokenize(ptr::null(), text.as_ptr(), 1, ptr::null_mut(), 0, &mut n) };
    assert_eq!(s, VexpStatus::NullPointer);
    let invalid = [0xffu8, 0x41];
    let v = load();
    let s = unsafe { vexp_vocab_tokenize(v, invalid.as_ptr(), 2, ptr::null_mut(), 0, &mut n) };
    assert_eq!(s, VexpStatus::Data);
    assert_eq!(unsafe { vexp_vocab_size(ptr::null()) }, 0);
    assert!(unsafe { vexp_vocab_size(v) } > 256);
    unsafe {
        vexp_vocab_free(v);
        vexp_vocab_free(ptr::null_mut());
    }
}

#[test]
fn load_from_file_matches_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.json");
    std::fs::write(&path, VOCAB_JSON).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut v = ptr::null_mut();
    assert_eq!(
        unsafe { vexp_vocab_load(c.as_ptr(), &mut v) },
        VexpStatus::Ok
    );
    let w = load();
    assert_eq!(unsafe { vexp_vocab_size(v) }, unsafe { vexp_vocab_size(w) });
    unsafe {
        vexp_vocab_free(v);
        vexp_vocab_free(w);
    }
}

#[test]
fn metrics() {
    let mut x = 0.0;
    assert_eq!(
        unsafe { vexp_fertility(210_027_671, 39_006_442, &mut x) },
        VexpStatus::Ok
    );
    assert_eq!(format!("{x:.4}"), "5.3844");
    assert_eq!(unsafe { vexp_fertility(1, 0, &mut x) }, VexpStatus::Data);

    let counts = [3u64, 1];
    assert_eq!(
        unsafe { vexp_renyi_efficiency(counts.as_ptr(), 2, 2, 2.5, &mut x) },
        VexpStatus::Ok
    );
    let closed = (0.75f64.powf(2.5) + 0.25f64.powf(2.5)).ln() / -1.5 / 2f64.ln();
    assert!((x - closed).abs() < 1e-12);
    assert_eq!(
        unsafe { vexp_renyi_efficiency(counts.as_ptr(), 2, 2, 1.0, &mut x) },
        VexpStatus::InvalidArgument
    );
}

#[test]
fn schedules_and_mixture() {
    let mut out = [0u64; 16];
    let mut n = 0;
    let s = unsafe { vexp_exponential_schedule(12_800, 16, out.as_mut_ptr(), 16, &mut n) };
    assert_eq!((s, n), (VexpStatus::Ok, 16));
    assert_eq!(out[..4], [0, 1, 2, 4]);
    assert_eq!(out[15], 12_800);

    let s = unsafe { vexp_uniform_schedule(12_800, 16, out.as_mut_ptr(), 4, &mut n) };
    assert_eq!((s, n), (VexpStatus::BufferTooSmall, 16));
    let s = unsafe { vexp_uniform_schedule(12_800, 16, out.as_mut_ptr(), 16, &mut n) };
    assert_eq!(s, VexpStatus::Ok);
    assert_eq!((out[1], out[15]), (853, 12_800));
    let s = unsafe { vexp_uniform_schedule(12_800, 1, out.as_mut_ptr(), 16, &mut n) };
    assert_eq!(s, VexpStatus::InvalidArgument);

    let mut row = VexpMixtureRow::default();
    assert_eq!(
        unsafe { vexp_mixture_row(16, 1, 30.0, 90.0, 5.0, &mut row) },
        VexpStatus::Ok
    );
    assert_eq!(
        row,
        VexpMixtureRow {
            arabic: 3000,
            english: 6500,
            math_code: 500
        }
    );
    assert_eq!(
        unsafe { vexp_mixture_row(16, 10, 30.0, 90.0, 5.0, &mut row) },
        VexpStatus::Ok
    );
    assert_eq!(row.arabic, 5473);
    assert_eq!(row.arabic + row.english + row.math_code, 10_000);
    assert_eq!(
        unsafe { vexp_mixture_row(16, 17, 30.0, 90.0, 5.0, &mut row) },
        VexpStatus::InvalidArgument
    );
    assert!(last_error().contains("stage 17"));
}
