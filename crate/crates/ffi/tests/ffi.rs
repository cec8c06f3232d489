use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hybridplane_ffi::*;

const COMPOSER: &str = include_str!("../../core/fixtures/composer.json");
const SPLIT: &str = include_str!("../../core/fixtures/split-service.json");

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Take ownership of a returned string.
unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    hp_string_free(p);
    s
}

unsafe fn last_error() -> String {
    let p = hp_last_error();
    assert!(!p.is_null(), "no error message set");
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

unsafe fn parse(text: &str) -> *mut HpSpec {
    let mut spec = ptr::null_mut();
    assert_eq!(hp_spec_parse(cstr(text).as_ptr(), &mut spec), HpStatus::Ok);
    spec
}

#[test]
fn parse_validate_converge() {
    unsafe {
        let spec = parse(COMPOSER);
        let mut out = ptr::null_mut();
        assert_eq!(hp_spec_validate(spec, &mut out), HpStatus::Ok);
        assert_eq!(take(out), "[]");

        assert_eq!(hp_converge(spec, cstr("priv-1").as_ptr(), &mut out), HpStatus::Ok);
        let cfg = take(out);
        let want = hybridplane::converge(&hybridplane::parse_spec(COMPOSER.as_bytes()).unwrap(), &"priv-1".into())
            .unwrap()
            .to_canonical_json();
        assert_eq!(cfg, want);

        assert_eq!(
            hp_converge(spec, cstr("nowhere").as_ptr(), &mut out),
            HpStatus::NotFound
        );
        assert!(last_error().contains("nowhere"));
        hp_spec_free(spec);
    }
}

#[test]
fn parse_errors_are_reported() {
    unsafe {
        let mut spec = ptr::null_mut();
        assert_eq!(
            hp_spec_parse(cstr("{\"version\":").as_ptr(), &mut spec),
            HpStatus::ParseError
        );
        assert!(last_error().starts_with("syntax"));
        assert!(spec.is_null());
        assert_eq!(
            hp_spec_parse(cstr(r#"{"version":1,"clusters":[]}"#).as_ptr(), &mut spec),
            HpStatus::ParseError
        );
        assert!(last_error().starts_with("schema"));
        assert_eq!(hp_spec_parse(ptr::null(), &mut spec), HpStatus::NullArgument);
        assert_eq!(
            hp_spec_parse(cstr("{}").as_ptr(), ptr::null_mut()),
            HpStatus::NullArgument
        );
        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            hp_spec_parse(bad_utf8.as_ptr().cast(), &mut spec),
            HpStatus::InvalidUtf8
        );
    }
}

#[test]
fn invalid_spec_is_gated() {
    unsafe {
        let spec = parse(SPLIT);
        let mut out = ptr::null_mut();
        assert_eq!(hp_spec_validate(spec, &mut out), HpStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(report[0]["kind"], "service-split-across-partitions");
        assert_eq!(report[0]["subject"], "db");

        assert_eq!(
            hp_converge(spec, cstr("master").as_ptr(), &mut out),
            HpStatus::ValidationFailed
        );
        let mut world = ptr::null_mut();
        assert_eq!(hp_world_new(spec, &mut world), HpStatus::ValidationFailed);
        assert!(world.is_null());
        assert_eq!(hp_oracle_matrix(spec, &mut out), HpStatus::ValidationFailed);
        hp_spec_free(spec);
    }
}

#[test]
fn world_trace_matrix_and_tunnels() {
    unsafe {
        let spec = parse(COMPOSER);
        let mut world = ptr::null_mut();
        assert_eq!(hp_world_new(spec, &mut world), HpStatus::Ok);

        let mut out = ptr::null_mut();
        let (pod, svc) = (cstr("worker-a"), cstr("redis-broker"));
        assert_eq!(
            hp_world_trace(world, pod.as_ptr(), svc.as_ptr(), &mut out),
            HpStatus::Ok
        );
        let t: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(t["verdict"], "delivered");
        assert_eq!(t["hops"].as_array().unwrap().len(), 7);

        assert_eq!(hp_world_matrix(world, &mut out), HpStatus::Ok);
        let sim = take(out);
        assert_eq!(hp_oracle_matrix(spec, &mut out), HpStatus::Ok);
        assert_eq!(sim, take(out));

        let key = cstr("local_fwd:priv-1:redis-broker");
        assert_eq!(hp_world_set_tunnel(world, key.as_ptr(), false), HpStatus::Ok);
        assert_eq!(
            hp_world_trace(world, pod.as_ptr(), svc.as_ptr(), &mut out),
            HpStatus::Ok
        );
        assert!(take(out).contains("\"tunnel_down\""));
        assert_eq!(hp_world_set_tunnel(world, key.as_ptr(), true), HpStatus::Ok);

        assert_eq!(
            hp_world_set_tunnel(world, cstr("local_fwd:priv-1:webserver").as_ptr(), false),
            HpStatus::NotFound
        );
        assert_eq!(
            hp_world_set_tunnel(world, cstr("garbage").as_ptr(), false),
            HpStatus::NotFound
        );
        assert_eq!(
            hp_world_trace(world, cstr("ghost").as_ptr(), svc.as_ptr(), &mut out),
            HpStatus::NotFound
        );
        assert!(last_error().contains("ghost"));
        assert_eq!(
            hp_world_trace(ptr::null(), pod.as_ptr(), svc.as_ptr(), &mut out),
            HpStatus::NullArgument
        );

        hp_world_free(world);
        hp_spec_free(spec);
    }
}

#[test]
fn success_clears_last_error() {
    unsafe {
        let mut spec = ptr::null_mut();
        assert_eq!(hp_spec_parse(ptr::null(), &mut spec), HpStatus::NullArgument);
        assert!(!hp_last_error().is_null());
        let spec = parse(COMPOSER);
        assert!(hp_last_error().is_null());
        hp_spec_free(spec);
        hp_spec_free(ptr::null_mut());
        hp_world_free(ptr::null_mut());
        hp_string_free(ptr::null_mut());
        assert_eq!(
            CStr::from_ptr(hp_version()).to_str().unwrap(),
            env!("CARGO_PKG_VERSION")
        );
    }
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

fn have(tool: &str) -> bool {
    Command::new(tool)
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    for (tool, lang) in [("cc", "c"), ("c++", "c++")] {
        if !have(tool) {
            eprintln!("{tool} not found; header check skipped");
            continue;
        }
        let o = Command::new(tool)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(include.join("hybridplane.h"))
            .output()
            .unwrap();
        assert!(o.status.success(), "{tool}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libhybridplane_ffi.a");
    if !have("cc") || !lib.exists() {
        eprintln!("cc or {} missing; C smoke test skipped", lib.display());
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let o = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(o.status.success(), "link: {}", String::from_utf8_lossy(&o.stderr));
    let run = Command::new(&exe)
        .arg(manifest.join("../core/fixtures/composer.json"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.starts_with("delivered=1 down=1 not_found=1"), "{stdout}");
}
