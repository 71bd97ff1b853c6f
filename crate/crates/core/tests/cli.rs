mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::toy_dataset;
use viola_core::volume::{load_volume, VolumeKind};

fn viola(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viola")).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_infer_eval_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    toy_dataset(&root.join("data"));
    let config = root.join("run.toml");
    fs::write(
        &config,
        r#"
preset = "custom"
data_root = "data"
output_dir = "runs"
encoder_channels = [8, 16]
decoder_channels = [8]
attention_levels = [0]
deep_supervision_heads = 0
patch_size = [16, 16, 8]
batch_size = 1
warmup_steps = 2
total_steps = 6
val_every = 3
num_folds = 4
"#,
    )
    .unwrap();
    let stdout = ok(viola(&["train", "--config", s(&config), "--fold", "1"]));
    assert!(stdout.contains("best val_dsc"), "{stdout}");
    let fold = root.join("runs/fold1");
    let log = fs::read_to_string(fold.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 6 + 2);

    let preds = root.join("preds");
    let gts = root.join("gts");
    fs::create_dir_all(&preds).unwrap();
    fs::create_dir_all(&gts).unwrap();
    let mut probs = Vec::new();
    for case in ["sphere000", "sphere001"] {
        let img = root.join(format!("data/{case}_img.nii"));
        let label = preds.join(format!("{case}.nii"));
        let prob = root.join(format!("{case}_prob.vol"));
        ok(viola(&[
            "infer",
            "--checkpoint",
            s(&fold.join("last.ckpt")),
            "--input",
            s(&img),
            "--output",
            s(&label),
            "--prob-output",
            s(&prob),
        ]));
        let l = load_volume(&label).unwrap();
        assert_eq!(l.kind(), VolumeKind::LabelInt);
        assert_eq!(l.dims(), load_volume(&img).unwrap().dims());
        fs::copy(root.join(format!("data/{case}_lab.nii")), gts.join(format!("{case}.nii"))).unwrap();
        probs.push(prob);
    }

    let csv = root.join("metrics.csv");
    let stdout = ok(viola(&["eval", "--pred-dir", s(&preds), "--gt-dir", s(&gts), "--csv", s(&csv)]));
    assert!(stdout.contains("2 cases"));
    let table = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "case_id,dsc,hd_mm,hd95_mm,nsd,rvd");
    assert!(lines[1].starts_with("sphere000,") && lines[2].starts_with("sphere001,"));
    assert!(lines[3].starts_with("mean±std,"));

    let out = root.join("ens.nii");
    let inputs = format!("{},{}", s(&probs[0]), s(&probs[1]));
    ok(viola(&["ensemble", "--inputs", &inputs, "--output", s(&out)]));
    assert_eq!(load_volume(&out).unwrap().kind(), VolumeKind::LabelInt);
    assert_eq!(load_volume(&root.join("ens_prob.nii")).unwrap().kind(), VolumeKind::ProbFloat);
}

#[test]
fn split_and_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let ids = root.join("ids.txt");
    fs::write(&ids, "a\nb\nc\nd\ne\n").unwrap();
    let stdout = ok(viola(&["split", "--cases", s(&ids), "--k", "2", "--seed", "4"]));
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], "case_id,fold");
    assert_eq!(rows.len(), 6);
    assert_eq!(stdout, ok(viola(&["split", "--cases", s(&ids), "--k", "2", "--seed", "4"])));

    toy_dataset(&root.join("data"));
    let manifest = root.join("data/manifest.csv");
    fs::write(root.join("new_img.nii"), b"x").unwrap();
    fs::write(root.join("new_pred.nii"), b"x").unwrap();
    let sel = root.join("sel.csv");
    fs::write(&sel, "case_id,image,prediction\nnew,new_img.nii,new_pred.nii\n").unwrap();
    let stdout = ok(viola(&["ingest-pseudo", "--selection", s(&sel), "--manifest", s(&manifest)]));
    assert!(stdout.starts_with("1 case(s) added; manifest has 5"), "{stdout}");
    let stdout = ok(viola(&["ingest-pseudo", "--selection", s(&sel), "--manifest", s(&manifest)]));
    assert!(stdout.starts_with("0 case(s) added"));
    let stdout = ok(viola(&["split", "--cases", s(&manifest), "--k", "5"]));
    assert!(stdout.contains("\nnew,"));
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let out = viola(&["infer", "--checkpoint", "/nonexistent.ckpt", "--input", "x.nii", "--output", "y.nii"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let out = viola(&["split", "--cases", "/nonexistent.txt"]);
    assert!(!out.status.success());
}
