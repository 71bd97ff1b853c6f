use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::dataset::{load_case, split_folds, windows_of, LoadedCase, Manifest, Source};
use super::infer::{foreground_probability, sliding_window_infer, threshold};
use crate::error::{Error, Result};
use crate::metrics::dsc;
use crate::optim::{composite_loss, lr_at, SgdNesterov};
use crate::tensor::Tensor;
use crate::unet::{Checkpoint, Network};
use crate::volume::{PatchSampler, Volume, VolumeKind};

pub const LOG_FILE: &str = "train_log.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
const LOG_HEADER: &str = "step,lr,loss,val_dsc";

/// One line of the training log: a training step (with `loss`) or a
/// validation pass (with `val_dsc`).
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub loss: Option<f64>,
    pub val_dsc: Option<f64>,
}

impl LogRow {
    fn to_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        format!("{},{},{},{}", self.step, self.lr, f(self.loss), f(self.val_dsc))
    }

    fn parse(line: &str) -> Option<LogRow> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return None;
        }
        let opt = |s: &str| if s == "NA" { Some(None) } else { s.parse().ok().map(Some) };
        Some(LogRow {
            step: parts[0].parse().ok()?,
            lr: parts[1].parse().ok()?,
            loss: opt(parts[2])?,
            val_dsc: opt(parts[3])?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub fold_dir: PathBuf,
    pub best_dsc: Option<f64>,
    pub best_step: Option<usize>,
    pub last_step: usize,
    pub rows: Vec<LogRow>,
}

/// Training and validation cases of one fold.
pub struct FoldData {
    pub train: Vec<LoadedCase>,
    pub val: Vec<LoadedCase>,
}

/// Loads every case of the fold up front so data errors surface before step 1.
/// Only labeled cases are split into folds; labelled pseudo cases always train.
pub fn load_fold(run: &RunConfig) -> Result<FoldData> {
    let manifest = Manifest::load(&run.manifest)?;
    let labeled: Vec<String> = manifest
        .cases
        .iter()
        .filter(|c| c.source == Source::Labeled)
        .map(|c| c.case_id.clone())
        .collect();
    let folds = split_folds(&labeled, run.num_folds, run.seed)?;
    let val_ids = &folds[run.fold];
    let windows = windows_of(&run.network)?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for rec in manifest.trainable() {
        let case = load_case(&manifest, rec, &windows)?;
        if case.image.shape()[0] != run.network.in_channels {
            return Err(Error::Dataset(format!("case `{}`: channel count mismatch", rec.case_id)));
        }
        if val_ids.contains(&rec.case_id) {
            val.push(case);
        } else {
            train.push(case);
        }
    }
    if train.is_empty() {
        return Err(Error::Dataset("no training cases in this fold".into()));
    }
    Ok(FoldData { train, val })
}

/// Mean DSC of thresholded sliding-window predictions over `cases`.
pub fn validate(net: &Network, cases: &[LoadedCase], overlap: f64) -> Result<f64> {
    let mut total = 0.0;
    for case in cases {
        let probs = sliding_window_infer(net, &case.image, net.config().patch_size, overlap)?;
        let prob = Volume::new(
            case.label.dims(),
            case.label.spacing(),
            VolumeKind::ProbFloat,
            foreground_probability(&probs),
        )?;
        total += dsc(&threshold(&prob)?, &case.label)?;
    }
    Ok(total / cases.len().max(1) as f64)
}

/// Random stream for one step; independent of how many steps ran before,
/// so a resumed run draws the same batches.
fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

fn read_log(path: &Path, upto: usize) -> Result<Vec<LogRow>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in BufReader::new(f).lines().skip(1) {
        let line = line.map_err(|e| Error::io(path, e))?;
        let row = LogRow::parse(&line).ok_or_else(|| Error::Dataset(format!("{}: bad log line `{line}`", path.display())))?;
        if row.step <= upto {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs the full loop for `run.fold`, writing `best.ckpt`, `last.ckpt` and
/// `train_log.csv` under [`RunConfig::fold_dir`]. `on_row` sees every log
/// row as it is written.
pub fn train(run: &RunConfig, mut on_row: impl FnMut(&LogRow)) -> Result<TrainSummary> {
    run.validate()?;
    let data = load_fold(run)?;
    let dir = run.fold_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let log_path = dir.join(LOG_FILE);
    let last_path = dir.join(LAST_CHECKPOINT);
    let best_path = dir.join(BEST_CHECKPOINT);

    let (mut net, mut opt, start, mut rows) = if run.resume && last_path.exists() {
        let ck = Checkpoint::load(&last_path)?;
        if ck.config != run.network {
            return Err(Error::Config(format!("{} was written for a different network", last_path.display())));
        }
        let rows = if log_path.exists() { read_log(&log_path, ck.step as usize)? } else { Vec::new() };
        (ck.network()?, SgdNesterov::with_velocity(run.train.momentum, ck.velocity_map()), ck.step as usize, rows)
    } else {
        (Network::new(run.network.clone(), run.seed)?, SgdNesterov::new(run.train.momentum), 0, Vec::new())
    };
    let mut best: Option<(usize, f64)> = rows
        .iter()
        .filter_map(|r| r.val_dsc.map(|d| (r.step, d)))
        .fold(None, |acc, (s, d)| match acc {
            Some((_, bd)) if bd >= d => acc,
            _ => Some((s, d)),
        });

    let mut log = {
        let mut text = format!("{LOG_HEADER}\n");
        rows.iter().for_each(|r| text.push_str(&(r.to_line() + "\n")));
        fs::write(&log_path, text).map_err(|e| Error::io(&log_path, e))?;
        OpenOptions::new().append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?
    };
    let mut emit = |row: LogRow, rows: &mut Vec<LogRow>| -> Result<()> {
        writeln!(log, "{}", row.to_line()).map_err(|e| Error::io(&log_path, e))?;
        on_row(&row);
        rows.push(row);
        Ok(())
    };

    let patch = run.network.patch_size;
    let samplers = data
        .train
        .iter()
        .map(|c| PatchSampler::new(&c.image, &c.label, patch, run.foreground_bias))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = data
        .train
        .iter()
        .map(|c| if c.source == Source::Pseudo { run.pseudo_weight } else { 1.0 })
        .collect();
    let chooser = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("case weights: {e}")))?;

    for step in start + 1..=run.train.total_steps {
        let lr = lr_at(step, &run.train)?;
        let mut rng = step_rng(run.seed, step);
        let mut images = Vec::with_capacity(run.train.batch_size);
        let mut labels = Vec::with_capacity(run.train.batch_size);
        for _ in 0..run.train.batch_size {
            let s = samplers[chooser.sample(&mut rng)].sample(&mut rng)?;
            images.push(s.image.unsqueeze(0)?);
            labels.push(s.label.unsqueeze(0)?);
        }
        let x = Tensor::concat(&images, 0)?;
        let y = Tensor::concat(&labels, 0)?;
        let outputs = net.forward(&x)?;
        let loss = composite_loss(&outputs, &y, &run.train)?;
        loss.backward()?;
        opt.step(net.params_mut(), lr)?;
        emit(
            LogRow {
                step,
                lr,
                loss: Some(loss.item()?),
                val_dsc: None,
            },
            &mut rows,
        )?;

        if step % run.val_every == 0 {
            if !data.val.is_empty() {
                let score = validate(&net, &data.val, run.overlap)?;
                emit(
                    LogRow {
                        step,
                        lr,
                        loss: None,
                        val_dsc: Some(score),
                    },
                    &mut rows,
                )?;
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((step, score));
                    Checkpoint::from_network(&net, step as u64, opt.velocity()).save(&best_path)?;
                }
            }
            Checkpoint::from_network(&net, step as u64, opt.velocity()).save(&last_path)?;
        }
    }
    let last_step = run.train.total_steps;
    Checkpoint::from_network(&net, last_step as u64, opt.velocity()).save(&last_path)?;
    Ok(TrainSummary {
        fold_dir: dir,
        best_dsc: best.map(|b| b.1),
        best_step: best.map(|b| b.0),
        last_step,
        rows,
    })
}
