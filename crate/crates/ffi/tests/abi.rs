//! Exercises the C ABI surface through the exported extern "C" symbols.

use lyapqfi_ffi::*;

fn new_probe(n: u32, g: f64, beta: f64) -> *mut LyapqfiProbe {
    let mut probe: *mut LyapqfiProbe = std::ptr::null_mut();
    let status = lyapqfi_probe_new(n, 1.0, g, beta, 0.2, &mut probe);
    assert_eq!(status, LyapqfiStatus::Ok);
    assert!(!probe.is_null());
    probe
}

fn last_error() -> String {
    let needed = lyapqfi_last_error_message(std::ptr::null_mut(), 0);
    let mut buf = vec![0i8; needed + 1];
    lyapqfi_last_error_message(buf.as_mut_ptr() as *mut _, buf.len());
    let bytes: Vec<u8> = buf[..needed].iter().map(|&b| b as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn probe_lifecycle_and_qfi() {
    let probe = new_probe(3, 2.0, 4.0);
    let mut dim = 0usize;
    assert_eq!(lyapqfi_probe_dim(probe, &mut dim), LyapqfiStatus::Ok);
    assert_eq!(dim, 8);

    let mut f_exact = 0.0;
    assert_eq!(lyapqfi_qfi_exact(probe, &mut f_exact), LyapqfiStatus::Ok);
    assert!(f_exact > 0.0);

    let mut f_trunc = 0.0;
    assert_eq!(
        lyapqfi_qfi_truncated(probe, 30.0, &mut f_trunc),
        LyapqfiStatus::Ok
    );
    assert!(f_trunc <= f_exact);

    let mut f_num = 0.0;
    assert_eq!(
        lyapqfi_qfi_integrate_adaptive(probe, 50.0, 1e-4, 10.0, &mut f_num),
        LyapqfiStatus::Ok
    );
    assert!(((f_exact - f_num) / f_exact).abs() < 5e-3);

    let mut f_fixed = 0.0;
    assert_eq!(
        lyapqfi_qfi_integrate_fixed(probe, 10.0, 0.01, &mut f_fixed),
        LyapqfiStatus::Ok
    );
    assert!(f_fixed > 0.0 && f_fixed <= f_exact + 1e-9);

    lyapqfi_probe_free(probe);
}

#[test]
fn sld_buffer_roundtrip() {
    let probe = new_probe(2, 2.0, 4.0);
    let mut dim = 0usize;
    lyapqfi_probe_dim(probe, &mut dim);
    let mut buf = vec![0.0f64; 2 * dim * dim];
    assert_eq!(
        lyapqfi_sld_exact(probe, buf.as_mut_ptr(), buf.len()),
        LyapqfiStatus::Ok
    );
    // Hermiticity across the interleaved layout
    for i in 0..dim {
        for j in 0..dim {
            let ij = 2 * (i * dim + j);
            let ji = 2 * (j * dim + i);
            assert!((buf[ij] - buf[ji]).abs() < 1e-9);
            assert!((buf[ij + 1] + buf[ji + 1]).abs() < 1e-9);
        }
    }
    // undersized buffer is rejected with a message
    let status = lyapqfi_sld_exact(probe, buf.as_mut_ptr(), 1);
    assert_eq!(status, LyapqfiStatus::InvalidArgument);
    assert!(last_error().contains("buffer"));
    lyapqfi_probe_free(probe);
}

#[test]
fn error_paths() {
    let mut probe: *mut LyapqfiProbe = std::ptr::null_mut();
    assert_eq!(
        lyapqfi_probe_new(3, 1.0, 2.0, 4.0, 0.0, std::ptr::null_mut()),
        LyapqfiStatus::NullPointer
    );
    // too many sites for the dense backend
    assert_eq!(
        lyapqfi_probe_new(20, 1.0, 2.0, 4.0, 0.0, &mut probe),
        LyapqfiStatus::InvalidArgument
    );
    assert!(probe.is_null());
    // negative coupling is rejected by the probe spec
    assert_eq!(
        lyapqfi_probe_new(3, -1.0, 2.0, 4.0, 0.0, &mut probe),
        LyapqfiStatus::InvalidArgument
    );
    let mut out = 0.0;
    assert_eq!(
        lyapqfi_qfi_exact(std::ptr::null(), &mut out),
        LyapqfiStatus::NullPointer
    );
    // double free is not exercised; freeing null is a no-op
    lyapqfi_probe_free(std::ptr::null_mut());
}

#[test]
fn one_shot_pipeline_matches_handle_path() {
    let probe = new_probe(3, 2.0, 4.0);
    let mut via_handle = 0.0;
    // theta differs between the two paths; the QFI of a unitary encoding is
    // theta-independent, so the values must still agree
    assert_eq!(
        lyapqfi_qfi_integrate_adaptive(probe, 50.0, 1e-5, 10.0, &mut via_handle),
        LyapqfiStatus::Ok
    );
    lyapqfi_probe_free(probe);
    let mut one_shot = 0.0;
    assert_eq!(
        lyapqfi_qfi_tfim(3, 1.0, 2.0, 4.0, 50.0, 1e-5, &mut one_shot),
        LyapqfiStatus::Ok
    );
    assert!(((via_handle - one_shot) / one_shot).abs() < 1e-6);
}

#[test]
fn header_is_generated() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("lyapqfi.h");
    let text = std::fs::read_to_string(header).expect("header generated at build time");
    for symbol in [
        "lyapqfi_probe_new",
        "lyapqfi_probe_free",
        "lyapqfi_qfi_exact",
        "lyapqfi_qfi_integrate_adaptive",
        "lyapqfi_sld_exact",
        "lyapqfi_last_error_message",
        "typedef struct LyapqfiProbe LyapqfiProbe;",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}
