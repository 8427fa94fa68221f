// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Compiles and runs a C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "bangoff.h"

int main(void) {
    double re[2] = {0.0, 1.0}, im[2] = {0.0, 0.0};
    BangoffSystem *sys = NULL;
    if (bangoff_system_two_level(1.0, 4.0 / 3.0, re, im, &sys) != BANGOFF_STATUS_OK) return 10;
    BangoffCase1 a;
    if (bangoff_analytic_case1(1.0, 4.0 / 3.0, &a) != BANGOFF_STATUS_OK) return 11;
    double d[2] = {a.t1, a.t2}, f = 0.0;
    if (bangoff_fidelity(sys, "PN", d, 2, &f) != BANGOFF_STATUS_OK) return 12;
    if (bangoff_fidelity(sys, "PX", d, 2, &f) != BANGOFF_STATUS_PARSE_ERROR) return 13;
    if (bangoff_last_error_message() == NULL) return 14;
    bangoff_system_free(sys);
    printf("%.15f\n", f);
    return f > 1.0 - 1e-12 ? 0 : 15;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps/<test>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libbangoff_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let f: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(f > 1.0 - 1e-12);
}
