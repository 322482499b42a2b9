use std::path::PathBuf;
use std::process::Command;

fn snail() -> Command {
    Command::new(env!("CARGO_BIN_EXE_snail"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("snail-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn bench_writes_identical_csv_twice() {
    let config = scratch("bench.json");
    std::fs::write(
        &config,
        r#"[{"algorithm":"lm-sil","n":6,"format":"float32","mode":"offload","samples":4,"rng_seed":3},
            {"algorithm":"lm-do","n":6,"format":"float32","mode":"split","samples":4,"rng_seed":3}]"#,
    )
    .unwrap();
    let mut outs = Vec::new();
    for i in 0..2 {
        let out = scratch(&format!("bench{i}.csv"));
        let st = snail().args(["bench", "--config"]).arg(&config).arg("--out").arg(&out).status().unwrap();
        assert!(st.success());
        outs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    let text = String::from_utf8(outs[0].clone()).unwrap();
    assert!(text.starts_with("algorithm,n,format,mode,and_gates,xor_gates,bytes,rounds,iterations\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn sim_at_target_is_one_frame() {
    let out = snail()
        .args(["sim", "--target", "0,0,0,0.2,0,0", "--start", "0,0,0,0.2,0,0", "--frames", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
}

#[test]
fn studies_and_scene_run() {
    let out = snail().args(["study", "sweeps", "--samples", "1000"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 26);
    let out = snail().args(["study", "formats", "--samples", "100"]).output().unwrap();
    assert!(out.status.success());
    let scene = snail().args(["scene", "--n", "7", "--seed", "2"]).output().unwrap();
    assert!(scene.status.success());
    let s = snail_harness::SyntheticScene::from_json(&String::from_utf8(scene.stdout).unwrap()).unwrap();
    assert_eq!(s, snail_harness::gen_scene(7, 0.0, 2).unwrap());
}

#[test]
fn bad_arguments_fail() {
    assert!(!snail().args(["sim", "--target", "1,2,3"]).status().unwrap().success());
    assert!(!snail().args(["study", "sweeps", "--samples", "10"]).status().unwrap().success());
}
