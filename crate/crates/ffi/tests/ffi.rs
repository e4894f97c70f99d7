use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use vicalib::geometry::{RigidMotion, Timestamp};
use vicalib::synth::{self, RigConfig};
use vicalib_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = vicalib_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn pose7(p: &RigidMotion) -> [f64; 7] {
    let t = p.translation();
    let q = p.quaternion_wxyz();
    [t[0], t[1], t[2], q[0], q[1], q[2], q[3]]
}

fn small_dataset(dir: &Path, offset_ns: i64) -> RigConfig {
    let mut c = RigConfig {
        duration_s: 20.0,
        mocap_offset_ns: offset_ns,
        ..RigConfig::default()
    };
    c.camera.views = 2;
    synth::emit_dataset(&c, dir).unwrap();
    c
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(vicalib_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_pointers_are_reported() {
    let mut out = ptr::null_mut();
    let s = unsafe { vicalib_trajectory_load(ptr::null(), &mut out) };
    assert_eq!(s, VicalibStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert!(out.is_null());

    let p = CString::new("x").unwrap();
    let s = unsafe { vicalib_trajectory_load(p.as_ptr(), ptr::null_mut()) };
    assert_eq!(s, VicalibStatus::NullPointer);

    assert_eq!(unsafe { vicalib_trajectory_len(ptr::null()) }, 0);
    assert_eq!(unsafe { vicalib_imu_len(ptr::null()) }, 0);
    unsafe {
        vicalib_trajectory_free(ptr::null_mut());
        vicalib_imu_free(ptr::null_mut());
        vicalib_calibration_free(ptr::null_mut());
    }
}

#[test]
fn missing_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cstr(&dir.path().join("nope.csv"));
    let mut out = ptr::null_mut();
    let s = unsafe { vicalib_imu_load(missing.as_ptr(), &mut out) };
    assert_eq!(s, VicalibStatus::Io);
    assert!(last_error().contains("nope.csv"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "#t_ns,tx,ty,tz,qw,qx,qy,qz\n1,2,3\n").unwrap();
    let bad = cstr(&bad);
    let mut t = ptr::null_mut();
    let s = unsafe { vicalib_trajectory_load(bad.as_ptr(), &mut t) };
    assert_eq!(s, VicalibStatus::Parse);
    assert!(t.is_null());
}

#[test]
fn success_clears_last_error() {
    let mut out = ptr::null_mut();
    unsafe { vicalib_trajectory_load(ptr::null(), &mut out) };
    assert!(!vicalib_last_error().is_null());
    let t = [0i64];
    let p = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let s = unsafe { vicalib_trajectory_from_arrays(1, t.as_ptr(), p.as_ptr(), &mut out) };
    assert_eq!(s, VicalibStatus::Ok);
    assert!(vicalib_last_error().is_null());
    unsafe { vicalib_trajectory_free(out) };
}

#[test]
fn trajectory_arrays_round_trip() {
    let t = [0i64, 10_000_000, 20_000_000];
    let mut p = Vec::new();
    for i in 0..3 {
        let pose = RigidMotion::from_wxyz([0.5, 0.5, 0.5, 0.5], [i as f64, -1.0, 2.5]);
        p.extend_from_slice(&pose7(&pose));
    }
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vicalib_trajectory_from_arrays(3, t.as_ptr(), p.as_ptr(), &mut h) },
        VicalibStatus::Ok
    );
    assert_eq!(unsafe { vicalib_trajectory_len(h) }, 3);
    let mut stamp = 0i64;
    let mut out = [0.0; 7];
    assert_eq!(
        unsafe { vicalib_trajectory_get(h, 2, &mut stamp, out.as_mut_ptr()) },
        VicalibStatus::Ok
    );
    assert_eq!(stamp, 20_000_000);
    for (a, b) in out.iter().zip(&p[14..21]) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(
        unsafe { vicalib_trajectory_get(h, 3, &mut stamp, out.as_mut_ptr()) },
        VicalibStatus::InvalidArgument
    );
    unsafe { vicalib_trajectory_free(h) };
}

#[test]
fn rejects_bad_arrays() {
    let mut h = ptr::null_mut();
    let t = [5i64, 5];
    let p = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let s = unsafe { vicalib_trajectory_from_arrays(2, t.as_ptr(), p.as_ptr(), &mut h) };
    assert_eq!(s, VicalibStatus::InvalidArgument);

    let t = [5i64];
    let p = [0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0];
    let s = unsafe { vicalib_trajectory_from_arrays(1, t.as_ptr(), p.as_ptr(), &mut h) };
    assert_eq!(s, VicalibStatus::InvalidArgument);
    assert!(last_error().contains("norm"));
    assert!(h.is_null());
}

#[test]
fn time_align_recovers_offset() {
    let dir = tempfile::tempdir().unwrap();
    let offset = 3_456_700;
    small_dataset(dir.path(), offset);
    let imu_path = cstr(&dir.path().join("imu.csv"));
    let mocap_path = cstr(&dir.path().join("mocap.csv"));
    let (mut imu, mut mocap) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(vicalib_imu_load(imu_path.as_ptr(), &mut imu), VicalibStatus::Ok);
        assert_eq!(vicalib_trajectory_load(mocap_path.as_ptr(), &mut mocap), VicalibStatus::Ok);
        assert_eq!(vicalib_imu_len(imu), 4001);
        let mut est = 0.0;
        assert_eq!(vicalib_time_align(imu, mocap, 0, 0, &mut est), VicalibStatus::Ok);
        assert!((est - offset as f64).abs() < 50_000.0, "{est}");
        vicalib_imu_free(imu);
        vicalib_trajectory_free(mocap);
    }
}

#[test]
fn calibration_apply_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = synth::channel_rng(7, synth::Channel::Texture);
    let config = RigConfig {
        intrinsics: synth::random_intrinsics(&mut rng, 0.01, 0.05),
        mocap_offset_ns: -1234,
        ..RigConfig::default()
    };
    let path = dir.path().join("calib.txt");
    vicalib::ingest::write_calibration(&config.truth(), &path).unwrap();
    let cpath = cstr(&path);
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(vicalib_calibration_load(cpath.as_ptr(), &mut c), VicalibStatus::Ok);
        let mut shift = 0;
        assert_eq!(vicalib_calibration_time_shift(c, &mut shift), VicalibStatus::Ok);
        assert_eq!(shift, -1234);
        let g = [0.1, -0.2, 0.3];
        let a = [1.0, 2.0, 9.8];
        let (mut og, mut oa) = ([0.0; 3], [0.0; 3]);
        assert_eq!(
            vicalib_calibration_apply(c, g.as_ptr(), a.as_ptr(), og.as_mut_ptr(), oa.as_mut_ptr()),
            VicalibStatus::Ok
        );
        let raw = vicalib::imucal::ImuSample::new(Timestamp(0), g.into(), a.into());
        let want = config.intrinsics.apply(&raw);
        for i in 0..3 {
            assert!((og[i] - want.gyro[i]).abs() < 1e-12);
            assert!((oa[i] - want.accel[i]).abs() < 1e-12);
        }
        vicalib_calibration_free(c);
    }
}

#[test]
fn handeye_noiseless_pairs() {
    let config = RigConfig {
        t_mi: RigidMotion::from_wxyz([0.9659258262890683, 0.25881904510252074, 0.0, 0.0], [0.03, -0.05, 0.02]),
        t_wg: RigidMotion::from_wxyz([0.9238795325112867, 0.0, 0.0, 0.3826834323650898], [1.2, -0.4, 0.1]),
        ..RigConfig::default()
    };
    let gt = config.ground_truth();
    let (mut wm, mut ig) = (Vec::new(), Vec::new());
    for i in 0..30 {
        let t_wi = gt.pose(i as f64 * 1.7);
        wm.extend_from_slice(&pose7(&t_wi.compose(&config.t_mi.inverse())));
        ig.extend_from_slice(&pose7(&t_wi.inverse().compose(&config.t_wg)));
    }
    let (mut mi, mut wg) = ([0.0; 7], [0.0; 7]);
    let s = unsafe { vicalib_handeye_solve(30, wm.as_ptr(), ig.as_ptr(), mi.as_mut_ptr(), wg.as_mut_ptr()) };
    assert_eq!(s, VicalibStatus::Ok);
    let want_mi = pose7(&config.t_mi);
    let want_wg = pose7(&config.t_wg);
    let sign = |a: &[f64; 7]| if a[3] < 0.0 { -1.0 } else { 1.0 };
    for i in 0..7 {
        let k = if i >= 3 { sign(&mi) } else { 1.0 };
        assert!((k * mi[i] - want_mi[i]).abs() < 1e-9, "{mi:?}");
        let k = if i >= 3 { sign(&wg) } else { 1.0 };
        assert!((k * wg[i] - want_wg[i]).abs() < 1e-9, "{wg:?}");
    }
}

#[test]
fn handeye_too_few_pairs_is_numerical() {
    let p = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let (mut mi, mut wg) = ([0.0; 7], [0.0; 7]);
    let s = unsafe { vicalib_handeye_solve(1, p.as_ptr(), p.as_ptr(), mi.as_mut_ptr(), wg.as_mut_ptr()) };
    assert_eq!(s, VicalibStatus::Numerical);
    assert!(!last_error().is_empty());
}

#[test]
fn allan_matches_core() {
    let x: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
    let sizes = [1usize, 2, 5, 10, 50];
    let mut dev = [0.0; 5];
    let s = unsafe { vicalib_allan_deviation(x.as_ptr(), x.len(), 0.01, sizes.as_ptr(), 5, dev.as_mut_ptr()) };
    assert_eq!(s, VicalibStatus::Ok);
    let want = vicalib::allan::allan_deviation(&x, 0.01, &sizes).unwrap();
    assert_eq!(&dev[..], &want.dev[..]);

    let s = unsafe { vicalib_allan_deviation(x.as_ptr(), x.len(), 0.01, [600usize].as_ptr(), 1, dev.as_mut_ptr()) };
    assert_eq!(s, VicalibStatus::Numerical);
}

#[test]
fn evaluate_identical_and_shifted() {
    let gt = RigConfig::default().ground_truth();
    let n = 600;
    let t: Vec<i64> = (0..n).map(|i| i as i64 * 10_000_000).collect();
    let mut p = Vec::new();
    let mut q = Vec::new();
    for &ti in &t {
        let pose = gt.pose(ti as f64 * 1e-9);
        p.extend_from_slice(&pose7(&pose));
        let moved = RigidMotion::from_wxyz([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.25]).compose(&pose);
        q.extend_from_slice(&pose7(&moved));
    }
    unsafe {
        let (mut g, mut e) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(vicalib_trajectory_from_arrays(n, t.as_ptr(), p.as_ptr(), &mut g), VicalibStatus::Ok);
        assert_eq!(vicalib_trajectory_from_arrays(n, t.as_ptr(), q.as_ptr(), &mut e), VicalibStatus::Ok);
        let mut r = std::mem::zeroed::<VicalibEvalReport>();
        let s = vicalib_evaluate(g, g, 0.0, &mut r);
        assert_eq!(s, VicalibStatus::Ok, "{}", last_error());
        assert_eq!(r.pairs, n);
        assert!(r.ate_m < 1e-9);
        assert!(!r.diverged);
        // a rigid offset is removed by the alignment
        assert_eq!(vicalib_evaluate(g, e, 1.0, &mut r), VicalibStatus::Ok);
        assert!(r.ate_m < 1e-9, "{r:?}");
        assert!(r.rpe_trans_m < 1e-9);
        assert_eq!(vicalib_evaluate(g, e, -1.0, &mut r), VicalibStatus::InvalidArgument);
        vicalib_trajectory_free(g);
        vicalib_trajectory_free(e);
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(header_dir.join("vicalib.h")).unwrap();
    for sym in [
        "vicalib_last_error",
        "vicalib_version",
        "vicalib_trajectory_load",
        "vicalib_trajectory_from_arrays",
        "vicalib_imu_load",
        "vicalib_calibration_apply",
        "vicalib_time_align",
        "vicalib_handeye_solve",
        "vicalib_allan_deviation",
        "vicalib_evaluate",
        "VICALIB_STATUS_NULL_POINTER",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }

    let lib = target_dir().join("libvicalib_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping C link check: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "vicalib.h"
int main(void) {
    VicalibTrajectory *t = NULL;
    if (vicalib_trajectory_load(NULL, &t) != VICALIB_STATUS_NULL_POINTER) return 1;
    if (vicalib_last_error() == NULL) return 2;
    int64_t ts[2] = {0, 1000};
    double p[14] = {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0};
    if (vicalib_trajectory_from_arrays(2, ts, p, &t) != VICALIB_STATUS_OK) return 3;
    if (vicalib_trajectory_len(t) != 2) return 4;
    vicalib_trajectory_free(t);
    printf("%s\n", vicalib_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
