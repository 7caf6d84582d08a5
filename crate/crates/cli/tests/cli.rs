use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn relight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relight"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("RELIGHT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Relative path → file bytes for every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn synth(dir: &Path, scenes: &str, size: &str) {
    let out = relight(&[
        "synth",
        "--seed",
        "1",
        "--scenes",
        scenes,
        "--size",
        size,
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_two_pngs_per_scene_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "4", "64");
    synth(&b, "4", "64");
    let snap = snapshot(&a);
    assert_eq!(snap.len(), 8);
    assert!(snap.keys().all(|k| k.extension().unwrap() == "png"));
    assert_eq!(snap, snapshot(&b));
}

#[test]
fn synth_rejects_sizes_off_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = relight(&["synth", "--size", "60", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("16"));
}

#[test]
fn train_eval_infer_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth(&data, "4", "32");
    let before = snapshot(&data);

    let cfg = tmp.path().join("smoke.cfg");
    fs::write(
        &cfg,
        "# smoke run\nepochs = 20\nbase_channels = 4   # narrow\ncheckpoint_every = 10\n",
    )
    .unwrap();
    let out = relight(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = stdout(&out);
    assert!(echoed.contains("epochs = 20") && echoed.contains("base_channels = 4"));
    assert!(run.join("final.dmsh").is_file());
    assert!(run.join("epoch_00010.dmsh").is_file() && run.join("epoch_00020.dmsh").is_file());
    let log = fs::read_to_string(run.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 40);
    assert!(log.lines().all(|l| l.split('\t').count() >= 5));
    assert_eq!(snapshot(&data), before, "training modified its input directory");

    // The echoed configuration reproduces the run.
    let replay_cfg = tmp.path().join("replay.cfg");
    fs::write(&replay_cfg, fs::read_to_string(run.join("config.txt")).unwrap()).unwrap();
    let replay = tmp.path().join("replay");
    let out = relight(&[
        "train",
        "--config",
        replay_cfg.to_str().unwrap(),
        "--out",
        replay.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(replay.join("final.dmsh")).unwrap(),
        fs::read(run.join("final.dmsh")).unwrap()
    );

    let ckpt = run.join("final.dmsh");
    let tsv = tmp.path().join("rows.tsv");
    let out = relight(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "train",
        "--tsv",
        tsv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("mean"));
    assert_eq!(fs::read_to_string(&tsv).unwrap().lines().count(), 4);

    let src = data.join("train/scene_0000/N_6500.png");
    let dst = tmp.path().join("relit/one.png");
    let out = relight(&[
        "infer",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        src.to_str().unwrap(),
        "--out",
        dst.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let img = relight_core::load_image(&dst).unwrap();
    assert_eq!(img.shape(), relight_core::Shape([1, 3, 32, 32]));

    let dir_in = data.join("train/scene_0001");
    let dir_out = tmp.path().join("relit_dir");
    let out = relight(&[
        "infer",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        dir_in.to_str().unwrap(),
        "--out",
        dir_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(snapshot(&dir_out).len(), 2);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "16");
    let d = data.to_str().unwrap();
    let o = tmp.path().join("o");
    let o = o.to_str().unwrap();

    assert_eq!(code(&relight(&["frobnicate"])), 1);
    assert_eq!(code(&relight(&["--help"])), 0);
    assert_eq!(
        code(&relight(&["train", "--data", d, "--out", o, "--set", "epoch=3"])),
        1
    );
    assert_eq!(
        code(&relight(&["train", "--data", d, "--out", o, "--set", "lr_final=1"])),
        1
    );
    assert_eq!(code(&relight(&["train", "--data", "/nonexistent", "--out", o])), 2);
    assert_eq!(code(&relight(&["eval", "--ckpt", "/nonexistent.dmsh", "--data", d])), 2);

    let garbage = tmp.path().join("garbage.dmsh");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(
        code(&relight(&[
            "eval",
            "--ckpt",
            garbage.to_str().unwrap(),
            "--data",
            d,
            "--split",
            "train"
        ])),
        2
    );

    let out = relight(&[
        "train",
        "--data",
        d,
        "--out",
        o,
        "--set",
        "epochs=2",
        "--set",
        "base_channels=2",
        "--set",
        "lr_init=1e30",
        "--set",
        "lr_final=1e30",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));

    let out = Command::new(env!("CARGO_BIN_EXE_relight"))
        .args(["bench", "--size", "16", "--repeats", "1"])
        .env("RELIGHT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn bench_reports_medians_and_ratio() {
    let out = Command::new(env!("CARGO_BIN_EXE_relight"))
        .args(["bench", "--size", "32", "--repeats", "3", "--base-channels", "4"])
        .env("RELIGHT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for key in ["single_median_s", "stacked_median_s", "ratio", "threads = 2"] {
        assert!(text.contains(key), "{text}");
    }
    assert_eq!(code(&relight(&["bench", "--size", "40"])), 1);
}
