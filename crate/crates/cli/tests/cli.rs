//! End-to-end checks of the command-line surface via the built binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitfhe"))
}

fn write_config(dir: &Path, epochs: usize) -> std::path::PathBuf {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        format!(r#"{{"mode":"plain","eta":0.001,"batch_size":4,"epochs":{epochs},"seed":42}}"#),
    )
    .unwrap();
    path
}

#[test]
fn train_local_writes_metrics_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    let out = dir.path().join("run");
    let status = bin()
        .args(["train-local", "--config"])
        .arg(&cfg)
        .args(["--data", "synth:200:5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{status:?}");
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.contains("test_accuracy"));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,loss,seconds,bytes_out,bytes_in,accuracy");
    assert_eq!(lines.len(), 3); // header + 2 epochs
    assert!(out.join("model.bin").exists());
}

#[test]
fn train_split_matches_local_and_logs_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let local_out = dir.path().join("local");
    let split_out = dir.path().join("split");
    let local = bin()
        .args(["train-local", "--config"])
        .arg(&cfg)
        .args(["--data", "synth:200:5", "--out"])
        .arg(&local_out)
        .output()
        .unwrap();
    let split = bin()
        .args(["train-split", "--config"])
        .arg(&cfg)
        .args(["--data", "synth:200:5", "--out"])
        .arg(&split_out)
        .output()
        .unwrap();
    assert!(local.status.success() && split.status.success());
    // identical seeds and batch order: the same accuracy line
    let grab = |o: &[u8]| {
        String::from_utf8_lossy(o)
            .lines()
            .find(|l| l.starts_with("test_accuracy"))
            .unwrap()
            .to_string()
    };
    assert_eq!(grab(&local.stdout), grab(&split.stdout));
    // and bit-identical checkpoints
    let a = fs::read(local_out.join("model.bin")).unwrap();
    let b = fs::read(split_out.join("model.bin")).unwrap();
    assert_eq!(a, b);
    let transcript = fs::read_to_string(split_out.join("transcript.csv")).unwrap();
    assert!(transcript.starts_with("direction,tag,bytes,millis"));
    assert!(transcript.contains("ACT_PLAIN"));
}

#[test]
fn eval_reports_checkpoint_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let out = dir.path().join("run");
    assert!(bin()
        .args(["train-local", "--config"])
        .arg(&cfg)
        .args(["--data", "synth:200:5", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let eval = bin()
        .args(["eval", "--checkpoint"])
        .arg(out.join("model.bin"))
        .args(["--config"])
        .arg(&cfg)
        .args(["--data", "synth:200:5"])
        .output()
        .unwrap();
    assert!(eval.status.success());
    assert!(String::from_utf8_lossy(&eval.stdout).contains("test_accuracy"));
}

#[test]
fn bench_extrapolates_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let out = dir.path().join("bench");
    let output = bin()
        .args(["bench", "--config"])
        .arg(&cfg)
        .args(["--data", "synth:200:5", "--batches", "10", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let field = |name: &str| -> f64 {
        stdout
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap()
            .split_whitespace()
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    let mean = field("mean_batch_bytes");
    let epoch_batches = field("epoch_batches");
    let extrapolated = field("extrapolated_epoch_bytes");
    assert_eq!(epoch_batches, 25.0); // 100 train samples / 4
    assert!((extrapolated - epoch_batches * mean).abs() < 1.0);
}

#[test]
fn dump_activations_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let out = dir.path().join("run");
    assert!(bin()
        .args(["train-local", "--config"])
        .arg(&cfg)
        .args(["--data", "synth:200:5", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv1 = dir.path().join("a1.csv");
    let csv2 = dir.path().join("a2.csv");
    for csv in [&csv1, &csv2] {
        assert!(bin()
            .args(["dump-activations", "--checkpoint"])
            .arg(out.join("model.bin"))
            .args(["--data", "synth:200:5", "--samples", "0", "--out"])
            .arg(csv)
            .status()
            .unwrap()
            .success());
    }
    let text = fs::read_to_string(&csv1).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kind,sample,channel,values");
    assert_eq!(lines.len(), 1 + 1 + 8); // header + input + 8 channels
    let input_cols: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(input_cols.len(), 3 + 128);
    assert_eq!(&input_cols[..2], &["input", "0"]);
    for (ch, line) in lines[2..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 3 + 32);
        assert_eq!(cols[0], "activation");
        assert_eq!(cols[2], ch.to_string());
        // values parse back losslessly
        for v in &cols[3..] {
            v.parse::<f32>().unwrap();
        }
    }
    // rerunning on the same checkpoint produces identical output
    assert_eq!(text, fs::read_to_string(&csv2).unwrap());
}

#[test]
fn zero_weight_checkpoint_dumps_constant_rows() {
    let dir = tempfile::tempdir().unwrap();
    // build a zeroed two-layer checkpoint through the library
    use splitfhe_core::nn::save_checkpoint;
    use splitfhe_core::tensor::Tensor;
    let ckpt = dir.path().join("zero.bin");
    save_checkpoint(
        &ckpt,
        &[
            (&Tensor::zeros(&[8, 1, 5]), &Tensor::zeros(&[8])),
            (&Tensor::zeros(&[8, 8, 5]), &Tensor::zeros(&[8])),
        ],
    )
    .unwrap();
    let csv = dir.path().join("acts.csv");
    assert!(bin()
        .args(["dump-activations", "--checkpoint"])
        .arg(&ckpt)
        .args(["--data", "synth:200:5", "--samples", "3", "--out"])
        .arg(&csv)
        .status()
        .unwrap()
        .success());
    let text = fs::read_to_string(&csv).unwrap();
    for line in text.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        let first: f32 = cols[3].parse().unwrap();
        for v in &cols[3..] {
            assert_eq!(
                v.parse::<f32>().unwrap(),
                first,
                "activation row not constant"
            );
        }
    }
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"mode":"plain","eta":0.001,"batch_size":4,"epochs":1,"seed":1,"bogus":true}"#,
    )
    .unwrap();
    let out = bin()
        .args(["train-local", "--config"])
        .arg(&bad)
        .args(["--data", "synth:100:1", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn unreachable_peer_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let out = bin()
        .args(["client", "--connect", "127.0.0.1:1", "--config"])
        .arg(&cfg)
        .args(["--data", "synth:100:1", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_csv_exits_with_code_five() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let data = dir.path().join("bad.csv");
    fs::write(&data, "h\n1,2,3\n").unwrap();
    let out = bin()
        .args(["train-local", "--config"])
        .arg(&cfg)
        .args(["--data"])
        .arg(&data)
        .args(["--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 1"));
}
