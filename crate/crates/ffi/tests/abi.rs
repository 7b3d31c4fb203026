use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use cachelearn_ffi::*;

const CONFIG: &str = r#"
scenario = "single-node-tabular"
steps = 50
seeds = [3, 4]

[single_node]
files = 6
capacity = 2
preset = "s1"
global_etas = [1.0, 1.5]
local_etas = [0.7, 2.5]
"#;

fn parse(text: &str) -> (ClStatus, *mut ClConfig) {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { cl_config_parse(c.as_ptr(), &mut cfg) };
    (status, cfg)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cl_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn run_and_read_back_a_record() {
    let (status, cfg) = parse(CONFIG);
    assert_eq!(status, ClStatus::Ok);
    unsafe {
        let mut n = 0;
        assert_eq!(cl_config_seed_count(cfg, &mut n), ClStatus::Ok);
        let mut seeds = vec![0u64; n];
        assert_eq!(cl_config_seeds(cfg, seeds.as_mut_ptr(), n), ClStatus::Ok);
        assert_eq!(seeds, [3, 4]);

        let mut rec = ptr::null_mut();
        assert_eq!(cl_run_seed(cfg, 3, &mut rec), ClStatus::Ok);
        let (mut steps, mut cols) = (0, 0);
        assert_eq!(cl_record_steps(rec, &mut steps), ClStatus::Ok);
        assert_eq!(cl_record_column_count(rec, &mut cols), ClStatus::Ok);
        assert_eq!((steps, cols), (50, 2));

        let mut needed = 0;
        assert_eq!(cl_record_column_name(rec, 1, ptr::null_mut(), 0, &mut needed), ClStatus::BufferTooSmall);
        let mut name = vec![0 as std::ffi::c_char; needed];
        assert_eq!(cl_record_column_name(rec, 1, name.as_mut_ptr(), needed, &mut needed), ClStatus::Ok);
        assert_eq!(CStr::from_ptr(name.as_ptr()).to_str().unwrap(), "oracle");

        let mut values = vec![0.0; steps];
        assert_eq!(cl_record_column(rec, 0, values.as_mut_ptr(), steps), ClStatus::Ok);
        let direct = cachelearn::harness::run_seed(
            &cachelearn::harness::ExperimentConfig::from_toml_str(CONFIG).unwrap(),
            3,
        )
        .unwrap();
        assert_eq!(values, direct.cost);
        assert_eq!(cl_record_column(rec, 5, values.as_mut_ptr(), steps), ClStatus::InvalidArgument);

        assert_eq!(cl_record_csv(rec, ptr::null_mut(), 0, &mut needed), ClStatus::BufferTooSmall);
        let mut csv = vec![0 as std::ffi::c_char; needed];
        assert_eq!(cl_record_csv(rec, csv.as_mut_ptr(), needed, ptr::null_mut()), ClStatus::Ok);
        assert_eq!(CStr::from_ptr(csv.as_ptr()).to_str().unwrap(), direct.to_csv());

        cl_record_free(rec);
        cl_config_free(cfg);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    let (status, cfg) = parse(&CONFIG.replace("capacity = 2", "capacity = 9"));
    assert_eq!(status, ClStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("single_node.capacity"));
    assert_eq!(parse("not toml [").0, ClStatus::Config);
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(cl_config_parse(ptr::null(), &mut out), ClStatus::NullPointer);
        let mut n = 0;
        assert_eq!(cl_record_steps(ptr::null(), &mut n), ClStatus::NullPointer);
        let missing = CString::new("/nonexistent/x.toml").unwrap();
        assert_eq!(cl_config_load(missing.as_ptr(), &mut out), ClStatus::Config);
        cl_config_free(ptr::null_mut());
        cl_record_free(ptr::null_mut());
        cl_env_free(ptr::null_mut());
    }
    let (status, cfg) = parse(CONFIG);
    assert_eq!(status, ClStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { cl_config_free(cfg) };
}

#[test]
fn environment_steps_from_outside() {
    let (_, cfg) = parse(CONFIG);
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(cl_env_new(cfg, 8, &mut env), ClStatus::Ok);
        let (mut files, mut cap) = (0, 0);
        assert_eq!(cl_env_dims(env, &mut files, &mut cap), ClStatus::Ok);
        assert_eq!((files, cap), (6, 2));
        let (mut g, mut l) = (0, 0);
        let mut a = vec![0u8; files];
        assert_eq!(cl_env_state(env, &mut g, &mut l, a.as_mut_ptr(), files), ClStatus::Ok);
        assert_eq!(a.iter().map(|&b| b as usize).sum::<usize>(), 2);
        let mut cost = -1.0;
        let keep = a.clone();
        assert_eq!(cl_env_step(env, keep.as_ptr(), files, &mut cost), ClStatus::Ok);
        assert!(cost >= 0.0);
        let bad = [1u8, 1, 1, 0, 0, 0];
        assert_eq!(cl_env_step(env, bad.as_ptr(), files, &mut cost), ClStatus::InvalidArgument);
        cl_env_free(env);

        let mut needed = 0;
        assert_eq!(cl_oracle_json(cfg, 8, ptr::null_mut(), 0, &mut needed), ClStatus::BufferTooSmall);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(cl_oracle_json(cfg, 8, buf.as_mut_ptr(), needed, &mut needed), ClStatus::Ok);
        assert!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap().contains("\"policy\""));
        cl_config_free(cfg);
    }
}

#[test]
fn network_cost_through_the_abi() {
    let d = [3.0, 1.0, 2.0];
    let a0 = [1u8, 0, 0];
    let mut out = 0.0;
    assert_eq!(unsafe { cl_network_cost(d.as_ptr(), a0.as_ptr(), 3, &mut out) }, ClStatus::Ok);
    assert_eq!(out, 3.0 + 2.0 + 4.0);
    let bad = [2u8, 0, 0];
    assert_eq!(unsafe { cl_network_cost(d.as_ptr(), bad.as_ptr(), 3, &mut out) }, ClStatus::InvalidArgument);
}

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test exe>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(header_dir.join("cachelearn.h").exists());
    let lib = target_dir().join("libcachelearn_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "cachelearn.h"

int main(void) {
    const char *toml =
        "scenario = \"single-node-oracle\"\nsteps = 5\nseeds = [1]\n"
        "[single_node]\nfiles = 5\ncapacity = 1\npreset = \"s2\"\n"
        "global_etas = [1.0]\nlocal_etas = [0.7, 2.5]\n";
    ClConfig *cfg = NULL;
    if (cl_config_parse(toml, &cfg) != CL_STATUS_OK) { fprintf(stderr, "%s\n", cl_last_error()); return 1; }
    ClRecord *rec = NULL;
    if (cl_run_seed(cfg, 1, &rec) != CL_STATUS_OK) { fprintf(stderr, "%s\n", cl_last_error()); return 1; }
    size_t steps = 0;
    cl_record_steps(rec, &steps);
    double values[5];
    if (cl_record_column(rec, 0, values, 5) != CL_STATUS_OK) return 1;
    ClConfig *bad = NULL;
    if (cl_config_parse("steps = 0", &bad) != CL_STATUS_CONFIG || strlen(cl_last_error()) == 0) return 2;
    printf("%zu %s\n", steps, cl_version());
    cl_record_free(rec);
    cl_config_free(cfg);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = work.path().join("main");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap_or_else(|e| panic!("running {cc}: {e}"));
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("5 {}", env!("CARGO_PKG_VERSION")));
}
