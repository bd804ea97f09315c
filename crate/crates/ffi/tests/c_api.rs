use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use safexp_ffi::*;

fn scenario_path(name: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.cfg"));
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(safexp_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn short_run_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let log = CString::new(dir.path().join("run.jsonl").to_str().unwrap()).unwrap();
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(safexp_scenario_load(scenario_path("open").as_ptr(), &mut sc), SafexpStatus::Ok);
        assert_eq!(safexp_scenario_set_seed(sc, 3), SafexpStatus::Ok);
        assert_eq!(safexp_scenario_set_max_ticks(sc, 40), SafexpStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(safexp_run(sc, SafexpMode::Framework, &mut run), SafexpStatus::Ok, "{}", last_error());
        let mut outcome = SafexpOutcome::Success;
        assert_eq!(safexp_run_outcome(run, &mut outcome), SafexpStatus::Ok);
        assert_eq!(outcome, SafexpOutcome::Timeout);
        let (mut ticks, mut violations) = (0, 0);
        assert_eq!(safexp_run_counts(run, &mut ticks, &mut violations), SafexpStatus::Ok);
        assert_eq!((ticks, violations), (40, 0));
        let (mut planar, mut vertical) = (-1.0, -1.0);
        assert_eq!(safexp_run_tracking_error(run, &mut planar, &mut vertical), SafexpStatus::Ok);
        assert!(planar >= 0.0 && vertical >= 0.0);
        assert_eq!(safexp_run_write_log(run, log.as_ptr()), SafexpStatus::Ok);
        safexp_run_free(run);
        safexp_scenario_free(sc);
    }
    let text = std::fs::read_to_string(dir.path().join("run.jsonl")).unwrap();
    assert!(text.lines().count() > 40);
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut sc = ptr::null_mut();
        let missing = CString::new("/nonexistent/scenario.cfg").unwrap();
        assert_eq!(safexp_scenario_load(missing.as_ptr(), &mut sc), SafexpStatus::Io);
        assert!(sc.is_null());
        assert!(last_error().contains("nonexistent"), "{}", last_error());
        assert_eq!(safexp_scenario_load(ptr::null(), &mut sc), SafexpStatus::NullPointer);
        assert_eq!(safexp_scenario_set_seed(ptr::null_mut(), 1), SafexpStatus::NullPointer);
        let mut run = ptr::null_mut();
        assert_eq!(safexp_run(ptr::null(), SafexpMode::Framework, &mut run), SafexpStatus::NullPointer);
        let mut outcome = SafexpOutcome::Success;
        assert_eq!(safexp_run_outcome(ptr::null(), &mut outcome), SafexpStatus::NullPointer);
        safexp_run_free(ptr::null_mut());
        safexp_scenario_free(ptr::null_mut());

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.cfg");
        std::fs::write(&bad, "name = \"x\"\n[planner]\nepsilon = 3.0\n").unwrap();
        let bad = CString::new(bad.to_str().unwrap()).unwrap();
        let status = safexp_scenario_load(bad.as_ptr(), &mut sc);
        if status == SafexpStatus::Ok {
            let mut run = ptr::null_mut();
            assert_eq!(safexp_run(sc, SafexpMode::Framework, &mut run), SafexpStatus::Config);
            assert!(run.is_null());
            safexp_scenario_free(sc);
        } else {
            assert_eq!(status, SafexpStatus::Config);
        }
    }
}

#[test]
fn dubins_length() {
    let mut len = 0.0;
    let status = unsafe { safexp_dubins_length([0.0, 0.0, 0.0].as_ptr(), [5.0, 0.0, 0.0].as_ptr(), 1.0, &mut len) };
    assert_eq!(status, SafexpStatus::Ok);
    assert!((len - 5.0).abs() < 1e-12);
    let status = unsafe { safexp_dubins_length([0.0; 3].as_ptr(), [1.0, 0.0, 0.0].as_ptr(), -1.0, &mut len) };
    assert_eq!(status, SafexpStatus::InvalidInput);
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"safexp.h\"\n\
         int main(void) {\n\
           SafexpScenario *s = 0;\n\
           SafexpStatus st = safexp_scenario_load(\"x.cfg\", &s);\n\
           safexp_scenario_free(s);\n\
           return st == SAFEXP_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = match Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"]).arg(&include).arg(&src).output() {
        Ok(out) => out,
        Err(e) => {
            eprintln!("no C compiler available ({e}); skipping");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
