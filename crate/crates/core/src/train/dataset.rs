use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::unet::checkpoint::write_atomic;
use crate::unet::NetworkConfig;
use crate::volume::{load_volume, window_stack, Volume, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Labeled,
    Pseudo,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Labeled => "labeled",
            Source::Pseudo => "pseudo",
        })
    }
}

/// One manifest row. Paths are stored as written; see [`Manifest::resolve`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub image: PathBuf,
    pub label: Option<PathBuf>,
    pub source: Source,
}

/// Case list backed by a CSV file `case_id,image,label,source`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub path: PathBuf,
    pub cases: Vec<CaseRecord>,
}

fn dataset_err(path: &Path, msg: impl fmt::Display) -> Error {
    Error::Dataset(format!("{}: {msg}", path.display()))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| dataset_err(path, e))?;
        let headers = rdr.headers().map_err(|e| dataset_err(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["case_id", "image", "label", "source"] {
            return Err(dataset_err(path, "header must be case_id,image,label,source"));
        }
        let mut cases: Vec<CaseRecord> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| dataset_err(path, e))?;
            let row = i + 2;
            let source = match &rec[3] {
                "labeled" => Source::Labeled,
                "pseudo" => Source::Pseudo,
                other => return Err(dataset_err(path, format!("row {row}: unknown source `{other}`"))),
            };
            let label = (!rec[2].is_empty()).then(|| PathBuf::from(&rec[2]));
            if source == Source::Labeled && label.is_none() {
                return Err(dataset_err(path, format!("row {row}: labeled case `{}` has no label", &rec[0])));
            }
            if rec[0].is_empty() || cases.iter().any(|c| c.case_id == rec[0]) {
                return Err(dataset_err(path, format!("row {row}: empty or duplicate case_id `{}`", &rec[0])));
            }
            cases.push(CaseRecord {
                case_id: rec[0].to_string(),
                image: PathBuf::from(&rec[1]),
                label,
                source,
            });
        }
        Ok(Manifest {
            path: path.to_path_buf(),
            cases,
        })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| dataset_err(&self.path, e);
        w.write_record(["case_id", "image", "label", "source"]).map_err(err)?;
        for c in &self.cases {
            let label = c.label.as_ref().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
            w.write_record([
                c.case_id.as_str(),
                &c.image.to_string_lossy(),
                &label,
                &c.source.to_string(),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| dataset_err(&self.path, e))
    }

    /// Atomic rewrite of the backing file.
    pub fn save(&self) -> Result<()> {
        write_atomic(&self.path, &self.to_csv()?)
    }

    /// Resolves a manifest path against the manifest's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    /// Cases usable for training: labeled ones and pseudo ones with a label.
    pub fn trainable(&self) -> impl Iterator<Item = &CaseRecord> {
        self.cases.iter().filter(|c| c.label.is_some())
    }
}

/// Seeded shuffle, then case `i` of the shuffled order goes to fold `i % k`.
/// Returns the case ids of each fold, in shuffled order.
pub fn split_folds(case_ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k == 0 || case_ids.len() < k {
        return Err(Error::Dataset(format!("{} cases cannot fill {k} folds", case_ids.len())));
    }
    let mut ids = case_ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(folds)
}

/// A case ready for sampling: windowed image `[C, H, W, D]` and mask.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub case_id: String,
    pub source: Source,
    pub image: Tensor,
    pub label: Volume,
}

pub fn windows_of(cfg: &NetworkConfig) -> Result<Vec<WindowSpec>> {
    cfg.input_windows.iter().map(|w| WindowSpec::new(w[0], w[1])).collect()
}

/// Reads an HU image and turns it into the network's input channels.
pub fn prepare_image(path: &Path, windows: &[WindowSpec]) -> Result<(Volume, Tensor)> {
    let v = load_volume(path)?;
    let stack = window_stack(&v, windows)?;
    Ok((v, stack))
}

pub fn load_case(manifest: &Manifest, rec: &CaseRecord, windows: &[WindowSpec]) -> Result<LoadedCase> {
    let named = |e: Error| Error::Dataset(format!("case `{}`: {e}", rec.case_id));
    let (img, stack) = prepare_image(&manifest.resolve(&rec.image), windows).map_err(named)?;
    let label_path = rec
        .label
        .as_ref()
        .ok_or_else(|| Error::Dataset(format!("case `{}` has no label", rec.case_id)))?;
    let label = load_volume(&manifest.resolve(label_path)).map_err(named)?.binarized().map_err(named)?;
    if label.dims() != img.dims() {
        return Err(Error::Dataset(format!(
            "case `{}`: image {:?} and label {:?} differ in shape",
            rec.case_id,
            img.dims(),
            label.dims()
        )));
    }
    Ok(LoadedCase {
        case_id: rec.case_id.clone(),
        source: rec.source,
        image: stack,
        label,
    })
}

/// Adds or updates pseudo-labelled cases listed in a selection CSV
/// `case_id,image,prediction`. `image` may be empty for cases the manifest
/// already lists. Relative paths resolve against the selection file's
/// directory and are written as absolute paths, so re-running the same
/// selection leaves the manifest byte-identical. Labeled cases are never
/// modified. Returns the number of cases added.
pub fn ingest_pseudo_labels(selection: &Path, manifest: &mut Manifest) -> Result<usize> {
    let mut rdr = csv::Reader::from_path(selection).map_err(|e| dataset_err(selection, e))?;
    let headers = rdr.headers().map_err(|e| dataset_err(selection, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["case_id", "image", "prediction"] {
        return Err(dataset_err(selection, "header must be case_id,image,prediction"));
    }
    let base = selection.parent().unwrap_or(Path::new("."));
    let absolute = |p: &str| -> Result<PathBuf> {
        let p = Path::new(p);
        let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        std::path::absolute(&joined).map_err(|e| Error::io(&joined, e))
    };
    let mut chosen: BTreeMap<String, (Option<PathBuf>, PathBuf)> = BTreeMap::new();
    let mut order = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| dataset_err(selection, e))?;
        let id = rec[0].to_string();
        let pred = absolute(&rec[2])?;
        if !pred.is_file() {
            return Err(Error::Dataset(format!(
                "case `{id}`: prediction file {} not found",
                pred.display()
            )));
        }
        let image = if rec[1].is_empty() { None } else { Some(absolute(&rec[1])?) };
        if chosen.insert(id.clone(), (image, pred)).is_some() {
            return Err(dataset_err(selection, format!("case `{id}` selected twice")));
        }
        order.push(id);
    }
    let mut updated = manifest.clone();
    let mut added = 0;
    for id in order {
        let (image, pred) = chosen.remove(&id).expect("recorded above");
        match updated.cases.iter_mut().find(|c| c.case_id == id) {
            Some(c) if c.source == Source::Labeled => {
                return Err(Error::Dataset(format!("case `{id}` already has a ground-truth label")));
            }
            Some(c) => {
                c.label = Some(pred);
                if let Some(img) = image {
                    c.image = img;
                }
            }
            None => {
                let image = image.ok_or_else(|| {
                    Error::Dataset(format!("case `{id}` is not in the manifest and the selection gives no image"))
                })?;
                updated.cases.push(CaseRecord {
                    case_id: id,
                    image,
                    label: Some(pred),
                    source: Source::Pseudo,
                });
                added += 1;
            }
        }
    }
    if updated != *manifest {
        updated.save()?;
        *manifest = updated;
    }
    Ok(added)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn folds_partition_cases() {
        let folds = split_folds(&ids(10), 5, 7).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut all: Vec<String> = folds.concat();
        all.sort();
        let mut want = ids(10);
        want.sort();
        assert_eq!(all, want);
        assert_eq!(folds, split_folds(&ids(10), 5, 7).unwrap());
        assert_ne!(folds, split_folds(&ids(10), 5, 8).unwrap());
        assert!(split_folds(&ids(4), 5, 0).is_err());
    }

    #[test]
    fn manifest_round_trip_and_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "case_id,image,label,source\na,a.nii,a_lab.nii,labeled\nb,b.nii,,pseudo\n").unwrap();
        let m = Manifest::load(&p).unwrap();
        assert_eq!(m.cases.len(), 2);
        assert_eq!(m.trainable().count(), 1);
        assert_eq!(m.resolve(Path::new("a.nii")), dir.path().join("a.nii"));
        assert_eq!(String::from_utf8(m.to_csv().unwrap()).unwrap(), std::fs::read_to_string(&p).unwrap());
        std::fs::write(&p, "case_id,image,label,source\na,a.nii,,labeled\n").unwrap();
        assert!(Manifest::load(&p).is_err());
    }
}
