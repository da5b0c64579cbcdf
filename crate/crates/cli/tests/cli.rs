use std::process::{Command, Output};

fn adrive(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adrive")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn lists_presets() {
    let o = adrive(&["presets"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(|l| l.split_whitespace().next().unwrap().to_owned()).collect();
    assert_eq!(names.len(), 5);
    assert!(names.iter().any(|n| n == "lane-overshoot"));
}

#[test]
fn runs_a_preset_and_prints_json() {
    let o = adrive(&["run", "--preset", "lane-overshoot", "--protocol", "a-drive"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["collisions"], 0);
    assert!(v["deadlocks"].as_u64().unwrap() >= 1);
}

#[test]
fn shown_preset_validates() {
    let o = adrive(&["presets", "--show", "late-detection"]);
    assert!(o.status.success());
    let path = std::env::temp_dir().join(format!("adrive-cli-{}.toml", std::process::id()));
    std::fs::write(&path, stdout(&o)).unwrap();
    let v = adrive(&["validate", "--config", path.to_str().unwrap()]);
    std::fs::remove_file(&path).unwrap();
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
    assert!(stdout(&v).ends_with(": ok\n"));
}

#[test]
fn unknown_preset_fails() {
    let o = adrive(&["run", "--preset", "nope"]);
    assert!(!o.status.success());
}

#[test]
fn small_matrix_writes_csv() {
    let o = adrive(&["matrix", "--volumes", "400", "--sizes", "10", "--reps", "1", "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("protocol,volume,size,seed,"));
    assert_eq!(lines.count(), 2);
}
