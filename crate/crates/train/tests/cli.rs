//! End-to-end checks of the `pclnet` binary: subcommands, file outputs, and
//! exit codes (0 success, 1 validation failure, 2 I/O error).

use std::path::Path;
use std::process::Command;

use pcl_autodiff::{Shape, Tensor};
use pcl_data::{read_flo, read_pclf, write_ppm};

fn pclnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pclnet"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        r#"
mode = "supervised-epe"
batch_size = 2
learning_rate = 1e-3
max_iterations = 2
clip_len = 2
frame_size = 64
seed = 3
precision = "f32"
checkpoint_interval = 2
log_interval = 1
val_interval = 100

[schedule]
kind = "constant"

[optimizer]
kind = "adam"
beta1 = 0.9
beta2 = 0.999
eps = 1e-8
"#,
    )
    .unwrap();
    path
}

#[test]
fn train_eval_infer_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");

    // Train two iterations on synthetic pairs.
    let status = pclnet()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--layout", "synthetic", "--data", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let ck = out.join("checkpoint_0000002.pclc");
    assert!(ck.exists());

    // Evaluate against synthetic ground truth, CSV report written.
    let csv = dir.path().join("report.csv");
    let status = pclnet()
        .args(["eval", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(&ck)
        .args(["--layout", "synthetic", "--data", "2", "--out"])
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(&csv).unwrap();
    assert!(report.starts_with("dataset,clips,mean_epe,median_epe,sec_per_clip"));

    // Inference over a frames directory: l-1 .flo files and color PPMs per
    // clip, plus the PCLF motion export.
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for i in 0..2 {
        let img = Tensor::<f32>::from_fn(Shape::new(1, 3, 64, 64), |_, c, y, x| {
            0.5 + 0.4 * ((c as f32) + (i as f32) * 0.7 + 0.11 * y as f32 + 0.21 * x as f32).sin()
        });
        write_ppm(&frames.join(format!("frame_{i:03}.ppm")), &img).unwrap();
    }
    let infer_out = dir.path().join("flows");
    let pclf = dir.path().join("motion.pclf");
    let status = pclnet()
        .args(["infer", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(&ck)
        .arg("--data")
        .arg(&frames)
        .arg("--out")
        .arg(&infer_out)
        .arg("--export-motion")
        .arg(&pclf)
        .status()
        .unwrap();
    assert!(status.success());
    let flo = infer_out.join("clip0000_01.flo");
    assert!(flo.exists(), "missing {}", flo.display());
    assert!(infer_out.join("clip0000_01.ppm").exists());
    let field = read_flo::<f32>(&flo).unwrap();
    assert_eq!((field.height(), field.width()), (64, 64));
    let motion = read_pclf(&pclf).unwrap();
    assert_eq!(motion.length, 1344);
    assert_eq!(motion.timesteps, 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    // Bad checkpoint -> validation failure (1).
    let bad_ck = dir.path().join("bad.pclc");
    std::fs::write(&bad_ck, b"JUNKJUNKJUNK").unwrap();
    let status = pclnet()
        .args(["eval", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(&bad_ck)
        .args(["--layout", "synthetic", "--data", "2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // Missing checkpoint file -> I/O error (2).
    let status = pclnet()
        .args(["eval", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(dir.path().join("missing.pclc"))
        .args(["--layout", "synthetic", "--data", "2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Bad config value -> validation failure (1).
    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "frame_size = 60\n").unwrap();
    let status = pclnet()
        .args(["train", "--config"])
        .arg(&bad_cfg)
        .args(["--layout", "synthetic", "--data", "2", "--out"])
        .arg(dir.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn config_hash_guard_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    assert!(pclnet()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--layout", "synthetic", "--data", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let ck = out.join("checkpoint_0000002.pclc");

    // Changing the architecture invalidates the checkpoint...
    let status = pclnet()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--variant", "pclnetc"])
        .args(["--layout", "synthetic", "--data", "2", "--out"])
        .arg(&out)
        .arg("--checkpoint")
        .arg(&ck)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // ...unless the override is explicit. (Same variant resumes fine.)
    let status = pclnet()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--layout", "synthetic", "--data", "2", "--out"])
        .arg(&out)
        .arg("--checkpoint")
        .arg(&ck)
        .status()
        .unwrap();
    assert!(status.success());
}
