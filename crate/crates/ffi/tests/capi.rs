use std::collections::HashSet;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;
use std::sync::OnceLock;

use gnp_ffi::*;

const CONFIG: &str = r#"
seed = 3
[paths]
interactions = "data/interactions.tsv"
item_features = "data/item_features.tsv"
user_features = "data/user_features.tsv"
workdir = "work"
[embedding]
dim = 8
epochs = 10
[walks]
samples = 5
steps = 2
[train]
hidden = 16
batch_size = 128
max_epochs = 3
"#;

/// A trained run directory shared by the tests in this file.
fn workdir() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        let run = |args: &[&str]| {
            let mut v = vec!["gnp".into()];
            v.extend(args.iter().map(|a| a.into()));
            assert_eq!(gnp::cli::main_with_args(v), 0, "{args:?}");
        };
        let data = root.join("data");
        run(&[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--users",
            "40",
            "--items",
            "60",
            "--seed",
            "3",
        ]);
        let cfg = root.join("run.toml");
        std::fs::write(&cfg, CONFIG).unwrap();
        run(&["--config", cfg.to_str().unwrap(), "full-run"]);
        let work = root.join("work");
        (tmp, work)
    })
    .1
}

fn open(variant: GnpVariant) -> *mut GnpModel {
    let dir = CString::new(workdir().to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    let s = unsafe { gnp_model_open(dir.as_ptr(), variant, &mut m) };
    assert_eq!(s, GnpStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = gnp_last_error();
    if p.is_null() {
        return String::new();
    }
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn map_len(name: &str) -> usize {
    std::fs::read_to_string(workdir().join("data").join(name))
        .unwrap()
        .lines()
        .count()
}

fn train_items(user: u32) -> HashSet<u32> {
    let split = workdir().join("split");
    let mut seen = HashSet::new();
    for f in ["embed_train.tsv", "model_train.tsv", "validation.tsv"] {
        for line in std::fs::read_to_string(split.join(f)).unwrap().lines() {
            let mut it = line.split('\t').map(|x| x.parse::<u32>().unwrap());
            let (u, i) = (it.next().unwrap(), it.next().unwrap());
            if u == user {
                seen.insert(i);
            }
        }
    }
    seen
}

#[test]
fn open_reports_sizes_and_ids() {
    for v in [GnpVariant::Gnp, GnpVariant::DropoutNet] {
        let m = open(v);
        unsafe {
            assert_eq!(gnp_model_n_users(m), map_len("users.map"));
            assert_eq!(gnp_model_n_items(m), map_len("items.map"));
            let mut u = 0;
            let first = std::fs::read_to_string(workdir().join("data/users.map")).unwrap();
            let (dense, orig) = first.lines().nth(5).unwrap().split_once('\t').unwrap();
            let id = CString::new(orig).unwrap();
            assert_eq!(gnp_model_user_index(m, id.as_ptr(), &mut u), GnpStatus::Ok);
            assert_eq!(u.to_string(), dense);
            let bad = CString::new("no-such-user").unwrap();
            assert_eq!(
                gnp_model_user_index(m, bad.as_ptr(), &mut u),
                GnpStatus::OutOfRange
            );
            assert!(last_error().contains("no-such-user"));
            gnp_model_free(m);
        }
    }
}

#[test]
fn recommend_is_ranked_and_consistent_with_score() {
    let m = open(GnpVariant::Gnp);
    unsafe {
        for user in [0u32, 7, 39] {
            let k = 10;
            let mut items = vec![0u32; k];
            let mut scores = vec![0f64; k];
            let mut n = 0;
            let s = gnp_model_recommend(
                m,
                user,
                k,
                true,
                items.as_mut_ptr(),
                scores.as_mut_ptr(),
                &mut n,
            );
            assert_eq!(s, GnpStatus::Ok, "{}", last_error());
            assert_eq!(n, k);
            let seen = train_items(user);
            for j in 0..n {
                assert!(
                    !seen.contains(&items[j]),
                    "seen item {} recommended",
                    items[j]
                );
                let mut direct = 0.0;
                assert_eq!(
                    gnp_model_score(m, user, items[j], &mut direct),
                    GnpStatus::Ok
                );
                assert_eq!(direct, scores[j]);
                if j > 0 {
                    assert!(
                        scores[j - 1] > scores[j]
                            || (scores[j - 1] == scores[j] && items[j - 1] < items[j])
                    );
                }
            }
            // Without exclusion, no unseen candidate outranks the top pick.
            let mut top = [0u32; 1];
            let mut n1 = 0;
            gnp_model_recommend(
                m,
                user,
                1,
                false,
                top.as_mut_ptr(),
                ptr::null_mut(),
                &mut n1,
            );
            let mut best = 0.0;
            gnp_model_score(m, user, top[0], &mut best);
            assert!(best >= scores[0]);
        }
        gnp_model_free(m);
    }
}

#[test]
fn out_of_range_and_missing_inputs() {
    let m = open(GnpVariant::DropoutNet);
    unsafe {
        let mut s = 0.0;
        let (nu, ni) = (gnp_model_n_users(m) as u32, gnp_model_n_items(m) as u32);
        assert_eq!(gnp_model_score(m, nu, 0, &mut s), GnpStatus::OutOfRange);
        assert_eq!(gnp_model_score(m, 0, ni, &mut s), GnpStatus::OutOfRange);
        let mut n = 5;
        assert_eq!(
            gnp_model_recommend(
                m,
                99,
                3,
                true,
                [0u32; 3].as_mut_ptr(),
                ptr::null_mut(),
                &mut n
            ),
            GnpStatus::OutOfRange
        );
        assert_eq!(n, 0);
        assert_eq!(
            gnp_model_recommend(m, 0, 0, true, ptr::null_mut(), ptr::null_mut(), &mut n),
            GnpStatus::Ok
        );
        assert_eq!(n, 0);
        gnp_model_free(m);
        gnp_model_free(ptr::null_mut());

        let missing = CString::new("/nonexistent/gnp-run").unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(
            gnp_model_open(missing.as_ptr(), GnpVariant::Gnp, &mut h),
            GnpStatus::Data
        );
        assert!(h.is_null());
        assert!(last_error().contains("/nonexistent/gnp-run"));
    }
}

fn staticlib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    exe.ancestors()
        .map(|d| d.join("libgnp_ffi.a"))
        .find(|p| p.is_file())
}

#[test]
fn c_program_links_against_header() {
    let Some(lib) = staticlib() else {
        panic!("libgnp_ffi.a not found next to the test binary");
    };
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "gnp.h"
int main(int argc, char **argv) {
    GnpModel *m = NULL;
    if (gnp_model_open(argv[1], GNP_VARIANT_GNP, &m) != GNP_STATUS_OK) {
        fprintf(stderr, "%s\n", gnp_last_error());
        return 1;
    }
    uint32_t items[5];
    double scores[5];
    size_t n = 0;
    if (gnp_model_recommend(m, 0, 5, true, items, scores, &n) != GNP_STATUS_OK || n != 5) return 2;
    double s = 0;
    if (gnp_model_score(m, 0, items[0], &s) != GNP_STATUS_OK || s != scores[0]) return 3;
    uint32_t ranked[3] = {4, 1, 2}, rel[1] = {1};
    GnpRankMetrics r;
    if (gnp_metrics_at_k(ranked, 3, rel, 1, 2, &r) != GNP_STATUS_OK) return 4;
    printf("%zu %s %.4f\n", gnp_model_n_items(m), gnp_version(), r.precision);
    gnp_model_free(m);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
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
    let out = Command::new(&exe).arg(workdir()).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.trim(),
        format!(
            "{} {} 0.5000",
            map_len("items.map"),
            env!("CARGO_PKG_VERSION")
        )
    );
}
