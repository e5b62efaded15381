use std::path::{Path, PathBuf};
use std::process::Command;

fn mfrl() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mfrl"));
    for var in ["MFRL_SEEDS", "MFRL_WORKERS", "MFRL_OUT", "MFRL_BUDGET_SIGMA2"] {
        c.env_remove(var);
    }
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn shipped_configs_validate() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = mfrl().arg("validate").arg(&path).output().unwrap();
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn unknown_fields_are_rejected_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"schema_version\": 1,\n  \"agent\": \"gp_vi_mfrl\",\n  \"chain\": \"grid5\",\n  \"colour\": 3\n}\n").unwrap();
    let out = mfrl().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("colour") && err.contains("line 5"), "{err}");
}

#[test]
fn run_writes_one_replicate_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfrl()
        .args(["run", configs().join("smoke.json").to_str().unwrap(), "--seeds", "0..5", "--workers", "2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(first_line(&dir.path().join("metrics.csv")), "agent,point,series,seed,x,y");
    assert_eq!(
        first_line(&dir.path().join("runs.csv")),
        "agent,point,seed,status,stop,samples_total,samples_top,error"
    );
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    for agent in ["gp_vi_mfrl", "rmax_mfrl"] {
        let n = runs.lines().filter(|l| l.starts_with(&format!("{agent},base,")) && l.contains(",ok,")).count();
        assert_eq!(n, 5, "{agent}");
    }
    for seed in 0..5 {
        let run = dir.path().join(format!("runs/gp_vi_mfrl/base/seed{seed}"));
        assert_eq!(first_line(&run.join("trace.csv")), "t,level,state_0,state_1,action,reward,sigma");
        assert!(run.join("heatmap_l2.csv").exists());
        assert!(run.join("gp_l2_axis0.json").exists());
    }

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 10);
    let before = std::fs::read(dir.path().join("summary.json")).unwrap();
    let rep = mfrl().arg("report").arg(dir.path()).output().unwrap();
    assert!(rep.status.success());
    assert_eq!(std::fs::read(dir.path().join("summary.json")).unwrap(), before);
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfrl()
        .args(["run", configs().join("smoke.json").to_str().unwrap()])
        .env("MFRL_SEEDS", "3")
        .env("MFRL_OUT", dir.path())
        .env("MFRL_BUDGET_SIGMA2", "50")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert!(runs.lines().skip(1).all(|l| l.contains(",3,ok,")), "{runs}");
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["gp_vi"]["budget"]["max_top_samples"], 50);
}

#[test]
fn sweep_without_axes_is_an_error() {
    let out = mfrl().arg("sweep").arg(configs().join("smoke.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
