use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use viola_core::metrics::{aggregate, evaluate_case, write_csv, MetricsOptions};
use viola_core::train::{self, ensemble_average, infer_volume, ingest_pseudo_labels, split_folds, Manifest, RunConfig};
use viola_core::unet::Checkpoint;
use viola_core::volume::{load_volume, save_volume};
use viola_core::{Error, Result};

#[derive(Parser)]
#[command(name = "viola", version, about = "Train, run and evaluate 3D CT segmentation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one cross-validation fold.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the fold named in the config file.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Segment one HU volume with a checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Binary label map.
        #[arg(long)]
        output: PathBuf,
        /// Foreground probability map.
        #[arg(long)]
        prob_output: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
    },
    /// Score predictions against ground truth, matching files by name.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        nsd_tau: f64,
        #[arg(long, default_value_t = 95.0)]
        hd_percentile: f64,
    },
    /// Average probability maps and threshold the mean.
    Ensemble {
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        /// Label map; the mean probability goes next to it with a `_prob` suffix.
        #[arg(long)]
        output: PathBuf,
    },
    /// Add selected predictions to a manifest as pseudo-labelled cases.
    IngestPseudo {
        #[arg(long)]
        selection: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Print a seeded fold assignment as `case_id,fold`.
    Split {
        /// Manifest CSV or a file with one case id per line.
        #[arg(long)]
        cases: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn volume_stem(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    [".nii", ".vol"]
        .iter()
        .find_map(|ext| name.strip_suffix(ext))
        .map(str::to_string)
}

fn list_volumes(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(stem) = volume_stem(&path) {
            out.push((stem, path));
        }
    }
    out.sort();
    Ok(out)
}

fn prob_path(output: &Path) -> PathBuf {
    let stem = volume_stem(output).unwrap_or_else(|| output.to_string_lossy().into_owned());
    let ext = if output.extension().is_some_and(|e| e == "vol") { "vol" } else { "nii" };
    output.with_file_name(format!("{}_prob.{ext}", Path::new(&stem).file_name().unwrap().to_string_lossy()))
}

fn read_case_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.lines().next().is_some_and(|l| l.starts_with("case_id,")) {
        return Ok(Manifest::load(path)?.cases.into_iter().map(|c| c.case_id).collect());
    }
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, fold } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(f) = fold {
                cfg.fold = f;
            }
            let summary = train::train(&cfg, |row| {
                if let Some(d) = row.val_dsc {
                    eprintln!("step {:>6}  lr {:.3e}  val_dsc {d:.4}", row.step, row.lr);
                } else if row.step % 50 == 0 {
                    eprintln!("step {:>6}  lr {:.3e}  loss {:.5}", row.step, row.lr, row.loss.unwrap_or(f64::NAN));
                }
            })?;
            match (summary.best_dsc, summary.best_step) {
                (Some(d), Some(s)) => println!("best val_dsc {d:.4} at step {s}; outputs in {}", summary.fold_dir.display()),
                _ => println!("no validation ran; outputs in {}", summary.fold_dir.display()),
            }
        }
        Command::Infer {
            checkpoint,
            input,
            output,
            prob_output,
            overlap,
        } => {
            let net = Checkpoint::load(&checkpoint)?.network()?;
            let hu = load_volume(&input)?;
            let (prob, label) = infer_volume(&net, &hu, overlap)?;
            save_volume(&label, &output)?;
            if let Some(p) = prob_output {
                save_volume(&prob, &p)?;
            }
        }
        Command::Eval {
            pred_dir,
            gt_dir,
            csv,
            nsd_tau,
            hd_percentile,
        } => {
            let opts = MetricsOptions {
                nsd_tau_mm: nsd_tau,
                hd_percentile,
            };
            let preds = list_volumes(&pred_dir)?;
            let mut reports = Vec::new();
            for (id, gt_path) in list_volumes(&gt_dir)? {
                let pred_path = preds
                    .iter()
                    .find(|(p, _)| *p == id)
                    .map(|(_, p)| p)
                    .ok_or_else(|| Error::Dataset(format!("case `{id}`: no prediction in {}", pred_dir.display())))?;
                let gt = load_volume(&gt_path)?.binarized()?;
                let pred = load_volume(pred_path)?.binarized()?;
                reports.push(evaluate_case(&id, &pred, &gt, &opts)?);
            }
            let file = fs::File::create(&csv).map_err(|e| Error::io(&csv, e))?;
            write_csv(&reports, file)?;
            let [d, ..] = aggregate(&reports);
            if let Some((m, s)) = d {
                println!("{} cases, dsc {m:.4}±{s:.4}", reports.len());
            }
        }
        Command::Ensemble { inputs, output } => {
            let vols = inputs.iter().map(|p| load_volume(p)).collect::<Result<Vec<_>>>()?;
            let (mean, label) = ensemble_average(&vols)?;
            save_volume(&label, &output)?;
            save_volume(&mean, &prob_path(&output))?;
        }
        Command::IngestPseudo { selection, manifest } => {
            let mut m = Manifest::load(&manifest)?;
            let added = ingest_pseudo_labels(&selection, &mut m)?;
            println!("{added} case(s) added; manifest has {} case(s)", m.cases.len());
        }
        Command::Split { cases, k, seed } => {
            let ids = read_case_ids(&cases)?;
            let folds = split_folds(&ids, k, seed)?;
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "case_id,fold");
            for id in &ids {
                let f = folds.iter().position(|f| f.contains(id)).expect("every case is assigned");
                let _ = writeln!(out, "{id},{f}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
