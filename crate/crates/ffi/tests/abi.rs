use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use fedgan_ffi::*;

fn last_error() -> Option<String> {
    let p = fedgan_last_error_message();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { fedgan_string_free(p) };
    Some(s)
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn epsilon_matches_analytic_minimum() {
    let (mut eps, mut order) = (0.0, 0.0);
    let st = unsafe { fedgan_epsilon(1.0, 1.0, 1, 1e-5, &mut eps, &mut order) };
    assert_eq!(st, FedganStatus::Ok);
    assert!(last_error().is_none());
    // The integer-order grid brackets the continuous optimum 5.2985.
    assert!((5.29..5.31).contains(&eps), "{eps}");
    assert_eq!(order, 6.0);
    // out_order is optional.
    assert_eq!(unsafe { fedgan_epsilon(0.01, 1.1, 10, 1e-5, &mut eps, ptr::null_mut()) }, FedganStatus::Ok);
}

#[test]
fn epsilon_errors_set_message() {
    let mut eps = 0.0;
    assert_eq!(unsafe { fedgan_epsilon(1.5, 1.0, 1, 1e-5, &mut eps, ptr::null_mut()) }, FedganStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("sampling rate"));
    assert_eq!(
        unsafe { fedgan_epsilon(0.5, 1.0, 1, 1e-5, ptr::null_mut(), ptr::null_mut()) },
        FedganStatus::NullPointer
    );
    assert!(last_error().unwrap().contains("out_epsilon"));
    // Success clears the message.
    assert_eq!(unsafe { fedgan_epsilon(0.5, 1.0, 1, 1e-5, &mut eps, ptr::null_mut()) }, FedganStatus::Ok);
    assert!(last_error().is_none());
}

#[test]
fn fid_one_dimensional_shift() {
    let real = [0.0, 1.0, 2.0, 3.0];
    let fake = [1.0, 2.0, 3.0, 4.0];
    let mut out = f64::NAN;
    assert_eq!(unsafe { fedgan_fid(real.as_ptr(), 4, fake.as_ptr(), 4, 1, &mut out) }, FedganStatus::Ok);
    assert!((out - 1.0).abs() < 1e-9, "{out}");
    assert_eq!(unsafe { fedgan_fid(real.as_ptr(), 4, ptr::null(), 4, 1, &mut out) }, FedganStatus::NullPointer);
}

#[test]
fn config_round_trip_and_errors() {
    let cfg = fedgan_config_new();
    unsafe {
        assert_eq!(fedgan_config_apply_preset(cfg, c("nodp").as_ptr()), FedganStatus::Ok);
        assert_eq!(fedgan_config_set(cfg, c("fed.rounds").as_ptr(), c("7").as_ptr()), FedganStatus::Ok);
        let text = fedgan_config_to_text(cfg);
        let s = CStr::from_ptr(text).to_str().unwrap().to_owned();
        fedgan_string_free(text);
        assert!(s.contains("fed.rounds = 7\n"));
        assert!(s.contains("privacy.noise_multiplier = 0\n"));

        assert_eq!(fedgan_config_set(cfg, c("fed.rounds").as_ptr(), c("seven").as_ptr()), FedganStatus::Config);
        assert!(last_error().unwrap().contains("fed.rounds"));
        assert_eq!(fedgan_config_set(cfg, c("no.such").as_ptr(), c("1").as_ptr()), FedganStatus::Config);
        assert_eq!(fedgan_config_apply_preset(cfg, c("bogus").as_ptr()), FedganStatus::Config);
        assert_eq!(fedgan_config_apply_preset(ptr::null_mut(), c("dp").as_ptr()), FedganStatus::NullPointer);
        assert_eq!(fedgan_config_set(cfg, ptr::null(), c("1").as_ptr()), FedganStatus::NullPointer);
        assert_eq!(fedgan_config_apply_file(cfg, c("/nonexistent/fedgan.conf").as_ptr()), FedganStatus::Config);
        assert!(fedgan_config_to_text(ptr::null()).is_null());
        fedgan_config_free(cfg);
        fedgan_config_free(ptr::null_mut());
    }
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name).to_string_lossy().into_owned()
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fedgan_config_new();
    let set = |k: &str, v: &str| {
        assert_eq!(unsafe { fedgan_config_set(cfg, c(k).as_ptr(), c(v).as_ptr()) }, FedganStatus::Ok, "{k}")
    };
    unsafe { fedgan_config_apply_preset(cfg, c("nodp").as_ptr()) };
    set("data.train_images", &fixture("digits-train-images-idx3-ubyte"));
    set("data.train_labels", &fixture("digits-train-labels-idx1-ubyte"));
    set("fed.num_clients", "8");
    set("privacy.clients_per_round", "2");
    set("fed.rounds", "2");
    set("metrics.cadence", "1");
    set("metrics.fid_real", "64");
    set("metrics.fid_fake", "64");
    set("metrics.extractor_epochs", "1");
    let out = c(dir.path().to_str().unwrap());
    assert_eq!(unsafe { fedgan_run(cfg, out.as_ptr()) }, FedganStatus::Ok, "{:?}", last_error());
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(dir.path().join("config_resolved").exists());
    assert!(dir.path().join("samples_round_0.pgm").exists());
    assert!(dir.path().join("samples_round_2.pgm").exists());

    set("privacy.clients_per_round", "0");
    assert_eq!(unsafe { fedgan_run(cfg, out.as_ptr()) }, FedganStatus::Config);
    unsafe { fedgan_config_free(cfg) };
}

#[test]
fn autoencoder_handle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ae.bin");
    fedgan::denoiser::Autoencoder::initialized(0.3, 1).unwrap().save(&path).unwrap();

    let mut ae = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { fedgan_autoencoder_load(p.as_ptr(), &mut ae) }, FedganStatus::Ok);
    assert!(!ae.is_null());
    assert_eq!(unsafe { fedgan_autoencoder_noise_level(ae) }, 0.3);

    let images = vec![0.25; 2 * 784];
    let mut out = vec![-1.0; 2 * 784];
    assert_eq!(unsafe { fedgan_autoencoder_denoise(ae, images.as_ptr(), 2, out.as_mut_ptr()) }, FedganStatus::Ok);
    assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    // Zero images need no buffers.
    assert_eq!(unsafe { fedgan_autoencoder_denoise(ae, ptr::null(), 0, ptr::null_mut()) }, FedganStatus::Ok);
    assert_eq!(
        unsafe { fedgan_autoencoder_denoise(ae, images.as_ptr(), 1, ptr::null_mut()) },
        FedganStatus::NullPointer
    );
    unsafe { fedgan_autoencoder_free(ae) };

    let mut ae = ptr::null_mut();
    let missing = c(dir.path().join("missing.bin").to_str().unwrap());
    assert_eq!(unsafe { fedgan_autoencoder_load(missing.as_ptr(), &mut ae) }, FedganStatus::Io);
    assert!(ae.is_null());
    assert!(unsafe { fedgan_autoencoder_noise_level(ptr::null()) }.is_nan());
    unsafe { fedgan_autoencoder_free(ptr::null_mut()) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fedgan.h")).unwrap();
    for name in [
        "fedgan_last_error_message",
        "fedgan_string_free",
        "fedgan_epsilon",
        "fedgan_fid",
        "fedgan_config_new",
        "fedgan_config_free",
        "fedgan_config_apply_preset",
        "fedgan_config_set",
        "fedgan_config_apply_file",
        "fedgan_config_to_text",
        "fedgan_run",
        "fedgan_autoencoder_load",
        "fedgan_autoencoder_free",
        "fedgan_autoencoder_noise_level",
        "fedgan_autoencoder_denoise",
        "FEDGAN_STATUS_OK = 0",
        "typedef struct FedganConfig FedganConfig",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
