use std::ffi::{CStr, CString};
use std::ptr;

use viola_core::unet::{Checkpoint, Network, NetworkConfig, Preset};
use viola_ffi::*;

fn cstr(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(viola_last_error()) }.to_string_lossy().into_owned()
}

fn new_volume(dims: [usize; 3], spacing: [f64; 3], kind: ViolaVolumeKind, data: &[f64]) -> *mut ViolaVolume {
    let mut out = ptr::null_mut();
    let st = unsafe { viola_volume_new(dims.as_ptr(), spacing.as_ptr(), kind, data.as_ptr(), data.len(), &mut out) };
    assert_eq!(st, ViolaStatus::Ok, "{}", last_error());
    out
}

fn read_data(v: *const ViolaVolume, n: usize) -> Vec<f64> {
    let mut buf = vec![0.0; n];
    assert_eq!(unsafe { viola_volume_data(v, buf.as_mut_ptr(), n) }, ViolaStatus::Ok);
    buf
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(viola_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn volume_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f64> = (0..64).map(|i| (i as f64) * 10.0 - 300.0).collect();
    let v = new_volume([4, 4, 4], [0.5, 0.5, 5.0], ViolaVolumeKind::Hu, &data);
    for name in ["a.nii", "a.vol"] {
        let path = cstr(&dir.path().join(name));
        assert_eq!(unsafe { viola_volume_save(v, path.as_ptr()) }, ViolaStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(unsafe { viola_volume_load(path.as_ptr(), &mut back) }, ViolaStatus::Ok);
        let mut dims = [0usize; 3];
        let mut spacing = [0.0; 3];
        let mut kind = ViolaVolumeKind::Probability;
        unsafe {
            assert_eq!(viola_volume_dims(back, dims.as_mut_ptr()), ViolaStatus::Ok);
            assert_eq!(viola_volume_spacing(back, spacing.as_mut_ptr()), ViolaStatus::Ok);
            assert_eq!(viola_volume_kind(back, &mut kind), ViolaStatus::Ok);
        }
        assert_eq!(dims, [4, 4, 4]);
        assert_eq!(spacing, [0.5, 0.5, 5.0]);
        assert_eq!(kind, ViolaVolumeKind::Hu);
        assert_eq!(read_data(back, 64), data);
        unsafe { viola_volume_free(back) };
    }
    unsafe { viola_volume_free(v) };
}

#[test]
fn errors_map_to_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = ptr::null_mut();

    let missing = cstr(&dir.path().join("nope.nii"));
    assert_eq!(unsafe { viola_volume_load(missing.as_ptr(), &mut out) }, ViolaStatus::Io);
    assert!(last_error().contains("nope.nii"));
    assert!(out.is_null());

    let v = new_volume([2, 2, 2], [1.0; 3], ViolaVolumeKind::Hu, &[0.0; 8]);
    let path = dir.path().join("t.nii");
    assert_eq!(unsafe { viola_volume_save(v, cstr(&path).as_ptr()) }, ViolaStatus::Ok);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert_eq!(unsafe { viola_volume_load(cstr(&path).as_ptr(), &mut out) }, ViolaStatus::Truncated);
    let mut bad = bytes.clone();
    bad[344..348].copy_from_slice(b"xyz\0");
    std::fs::write(&path, &bad).unwrap();
    assert_eq!(unsafe { viola_volume_load(cstr(&path).as_ptr(), &mut out) }, ViolaStatus::MalformedHeader);
    let mut bad = bytes.clone();
    bad[70..72].copy_from_slice(&1024i16.to_le_bytes());
    std::fs::write(&path, &bad).unwrap();
    assert_eq!(unsafe { viola_volume_load(cstr(&path).as_ptr(), &mut out) }, ViolaStatus::UnsupportedDtype);
    assert!(out.is_null());

    let mut buf = [0.0; 3];
    assert_eq!(unsafe { viola_volume_data(v, buf.as_mut_ptr(), 3) }, ViolaStatus::Shape);
    let mut lr = 0.0;
    assert_eq!(unsafe { viola_lr_at(11, 0.1, 2, 10, &mut lr) }, ViolaStatus::Config);
    unsafe { viola_volume_free(v) };

    // Success clears the message.
    assert_eq!(unsafe { viola_lr_at(1, 0.1, 2, 10, &mut lr) }, ViolaStatus::Ok);
    assert_eq!(last_error(), "");
}

#[test]
fn null_pointers_are_rejected() {
    let mut out = ptr::null_mut();
    let mut dims = [0usize; 3];
    unsafe {
        assert_eq!(viola_volume_load(ptr::null(), &mut out), ViolaStatus::NullPointer);
        assert_eq!(viola_volume_dims(ptr::null(), dims.as_mut_ptr()), ViolaStatus::NullPointer);
        assert_eq!(viola_lr_at(1, 0.1, 2, 10, ptr::null_mut()), ViolaStatus::NullPointer);
        assert_eq!(viola_ensemble(ptr::null(), 2, ptr::null_mut(), ptr::null_mut()), ViolaStatus::NullPointer);
        assert_eq!(viola_model_load(ptr::null(), ptr::null_mut()), ViolaStatus::NullPointer);
        viola_volume_free(ptr::null_mut());
        viola_model_free(ptr::null_mut());
    }
    assert!(!last_error().is_empty());
}

#[test]
fn lr_schedule_matches_closed_form() {
    let mut lr = -1.0;
    unsafe {
        assert_eq!(viola_lr_at(0, 7e-3, 1000, 72000, &mut lr), ViolaStatus::Ok);
        assert_eq!(lr, 0.0);
        viola_lr_at(500, 7e-3, 1000, 72000, &mut lr);
        assert!((lr - 3.5e-3).abs() < 1e-15);
        viola_lr_at(1000, 7e-3, 1000, 72000, &mut lr);
        assert!((lr - 7e-3).abs() < 1e-15);
        viola_lr_at(72000, 7e-3, 1000, 72000, &mut lr);
        assert!(lr.abs() < 1e-15);
    }
}

#[test]
fn window_and_metrics() {
    let hu = new_volume([2, 1, 1], [1.0; 3], ViolaVolumeKind::Hu, &[50.0, 500.0]);
    let mut w = [0.0; 2];
    assert_eq!(unsafe { viola_hu_window(hu, 0.0, 100.0, w.as_mut_ptr(), 2) }, ViolaStatus::Ok);
    assert_eq!(w, [0.5, 1.0]);

    let mut a = vec![0.0; 64];
    let mut b = vec![0.0; 64];
    a[..8].iter_mut().for_each(|v| *v = 1.0);
    b[4..12].iter_mut().for_each(|v| *v = 1.0);
    let pa = new_volume([4, 4, 4], [1.0; 3], ViolaVolumeKind::Label, &a);
    let pb = new_volume([4, 4, 4], [1.0; 3], ViolaVolumeKind::Label, &b);
    let mut m = std::mem::MaybeUninit::<ViolaMetrics>::uninit();
    assert_eq!(unsafe { viola_metrics(pa, pb, 1.0, 95.0, m.as_mut_ptr()) }, ViolaStatus::Ok);
    let m = unsafe { m.assume_init() };
    assert!((m.dsc - 0.5).abs() < 1e-12);
    assert!(m.has_hd && m.has_hd95 && m.has_nsd && m.has_rvd);
    assert_eq!(m.rvd, 0.0);

    let empty = new_volume([4, 4, 4], [1.0; 3], ViolaVolumeKind::Label, &[0.0; 64]);
    let mut m = std::mem::MaybeUninit::<ViolaMetrics>::uninit();
    assert_eq!(unsafe { viola_metrics(empty, pb, 1.0, 95.0, m.as_mut_ptr()) }, ViolaStatus::Ok);
    let m = unsafe { m.assume_init() };
    assert_eq!(m.dsc, 0.0);
    assert!(!m.has_hd && m.hd_mm.is_nan());
    // Probability maps are not masks.
    let prob = new_volume([4, 4, 4], [1.0; 3], ViolaVolumeKind::Probability, &[0.5; 64]);
    let mut m = std::mem::MaybeUninit::<ViolaMetrics>::uninit();
    assert_ne!(unsafe { viola_metrics(prob, pb, 1.0, 95.0, m.as_mut_ptr()) }, ViolaStatus::Ok);
    unsafe {
        for v in [hu, pa, pb, empty, prob] {
            viola_volume_free(v);
        }
    }
}

#[test]
fn ensemble_averages_and_thresholds() {
    let p = new_volume([2, 1, 1], [1.0; 3], ViolaVolumeKind::Probability, &[0.2, 0.9]);
    let q = new_volume([2, 1, 1], [1.0; 3], ViolaVolumeKind::Probability, &[0.8, 0.3]);
    let inputs = [p as *const ViolaVolume, q as *const ViolaVolume];
    let (mut mean, mut label) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { viola_ensemble(inputs.as_ptr(), 2, &mut mean, &mut label) }, ViolaStatus::Ok);
    let m = read_data(mean, 2);
    assert!((m[0] - 0.5).abs() < 1e-7 && (m[1] - 0.6).abs() < 1e-7);
    assert_eq!(read_data(label, 2), vec![0.0, 1.0]);
    assert_eq!(unsafe { viola_ensemble(inputs.as_ptr(), 0, &mut mean, ptr::null_mut()) }, ViolaStatus::InvalidArgument);
    unsafe {
        for v in [p, q, mean, label] {
            viola_volume_free(v);
        }
    }
}

#[test]
fn model_infers_full_extent_maps() {
    let cfg = NetworkConfig {
        preset: Preset::Custom,
        in_channels: 3,
        num_classes: 2,
        encoder_channels: vec![4, 8],
        decoder_channels: vec![4],
        stage_strides: vec![[2, 2, 1]],
        attention_levels: vec![0],
        deep_supervision_heads: 0,
        patch_size: [8, 8, 4],
        viola_alpha: 0.1,
        viola_beta: 0.3,
        viola_groups: 2,
        input_windows: viola_core::unet::DEFAULT_INPUT_WINDOWS.to_vec(),
    };
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("m.ckpt");
    Checkpoint::from_network(&Network::new(cfg, 1).unwrap(), 0, &Default::default()).save(&ck).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { viola_model_load(cstr(&ck).as_ptr(), &mut model) }, ViolaStatus::Ok);

    let data: Vec<f64> = (0..10 * 9 * 5).map(|i| ((i * 31) % 200) as f64 - 50.0).collect();
    let img = new_volume([10, 9, 5], [1.0, 1.0, 2.0], ViolaVolumeKind::Hu, &data);
    let (mut prob, mut label) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { viola_model_infer(model, img, 0.5, &mut prob, &mut label) }, ViolaStatus::Ok, "{}", last_error());
    let mut dims = [0usize; 3];
    unsafe { viola_volume_dims(prob, dims.as_mut_ptr()) };
    assert_eq!(dims, [10, 9, 5]);
    let p = read_data(prob, 450);
    let l = read_data(label, 450);
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(p.iter().zip(&l).all(|(p, l)| *l == if *p > 0.5 { 1.0 } else { 0.0 }));
    assert_eq!(unsafe { viola_model_infer(model, label, 0.5, ptr::null_mut(), ptr::null_mut()) }, ViolaStatus::InvalidArgument);
    unsafe {
        viola_volume_free(img);
        viola_volume_free(prob);
        viola_volume_free(label);
        viola_model_free(model);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/viola.h")).unwrap();
    for f in [
        "viola_last_error",
        "viola_version",
        "viola_volume_load",
        "viola_volume_save",
        "viola_volume_new",
        "viola_volume_free",
        "viola_volume_data",
        "viola_model_load",
        "viola_model_infer",
        "viola_metrics",
        "viola_lr_at",
        "viola_hu_window",
        "viola_ensemble",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("VIOLA_STATUS_TRUNCATED = 6"));
}
