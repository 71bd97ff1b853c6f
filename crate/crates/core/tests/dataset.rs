mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use common::{toy_config, toy_dataset};
use proptest::prelude::*;
use viola_core::train::{ingest_pseudo_labels, load_fold, split_folds, Manifest, Source};
use viola_core::Error;

fn touch(dir: &Path, names: &[&str]) {
    for n in names {
        fs::write(dir.join(n), b"x").unwrap();
    }
}

fn base_manifest(dir: &Path) -> Manifest {
    let path = dir.join("manifest.csv");
    fs::write(&path, "case_id,image,label,source\na,a_img.nii,a_lab.nii,labeled\nb,b_img.nii,b_lab.nii,labeled\nu,u_img.nii,,pseudo\n").unwrap();
    Manifest::load(&path).unwrap()
}

#[test]
fn empty_selection_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = base_manifest(dir.path());
    let before = fs::read(&m.path).unwrap();
    let sel = dir.path().join("sel.csv");
    fs::write(&sel, "case_id,image,prediction\n").unwrap();
    assert_eq!(ingest_pseudo_labels(&sel, &mut m).unwrap(), 0);
    assert_eq!(fs::read(&m.path).unwrap(), before);
}

#[test]
fn selected_cases_are_added_once() {
    let dir = tempfile::tempdir().unwrap();
    touch(dir.path(), &["c_img.nii", "c_pred.nii", "d_img.nii", "d_pred.nii", "u_pred.nii"]);
    let mut m = base_manifest(dir.path());
    let sel = dir.path().join("sel.csv");
    fs::write(&sel, "case_id,image,prediction\nc,c_img.nii,c_pred.nii\nd,d_img.nii,d_pred.nii\nu,,u_pred.nii\n").unwrap();
    assert_eq!(ingest_pseudo_labels(&sel, &mut m).unwrap(), 2);
    assert_eq!(m.cases.len(), 5);
    let reloaded = Manifest::load(&m.path).unwrap();
    assert_eq!(reloaded.cases, m.cases);
    let c = m.cases.iter().find(|c| c.case_id == "c").unwrap();
    assert_eq!(c.source, Source::Pseudo);
    assert!(c.label.as_ref().unwrap().is_absolute());
    // The unlabeled case now carries its prediction as a label.
    assert!(m.cases.iter().find(|c| c.case_id == "u").unwrap().label.is_some());
    assert_eq!(m.trainable().count(), 5);

    let snapshot = fs::read(&m.path).unwrap();
    assert_eq!(ingest_pseudo_labels(&sel, &mut m).unwrap(), 0);
    assert_eq!(fs::read(&m.path).unwrap(), snapshot);
}

#[test]
fn bad_selections_leave_the_manifest_alone() {
    let dir = tempfile::tempdir().unwrap();
    touch(dir.path(), &["c_img.nii", "a_pred.nii"]);
    let mut m = base_manifest(dir.path());
    let before = fs::read(&m.path).unwrap();
    let sel = dir.path().join("sel.csv");

    fs::write(&sel, "case_id,image,prediction\nc,c_img.nii,c_pred.nii\n").unwrap();
    let err = ingest_pseudo_labels(&sel, &mut m).unwrap_err();
    assert!(matches!(err, Error::Dataset(_)));
    assert!(err.to_string().contains("c_pred.nii"));

    fs::write(&sel, "case_id,image,prediction\na,,a_pred.nii\n").unwrap();
    assert!(ingest_pseudo_labels(&sel, &mut m).unwrap_err().to_string().contains("ground-truth"));

    fs::write(&sel, "id,image,prediction\n").unwrap();
    assert!(ingest_pseudo_labels(&sel, &mut m).is_err());

    assert_eq!(fs::read(&m.path).unwrap(), before);
    assert_eq!(m.cases.len(), 3);
}

#[test]
fn malformed_manifests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    for body in [
        "case_id,image,label\n",
        "case_id,image,label,source\na,i,,labeled\n",
        "case_id,image,label,source\na,i,l,mystery\n",
        "case_id,image,label,source\na,i,l,labeled\na,j,k,labeled\n",
    ] {
        fs::write(&p, body).unwrap();
        assert!(Manifest::load(&p).is_err(), "{body}");
    }
}

#[test]
fn folds_hold_out_labeled_cases_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    toy_dataset(&data);
    let cfg = toy_config(&data, &dir.path().join("runs"), "");
    let mut seen = BTreeSet::new();
    for fold in 0..4 {
        let mut c = cfg.clone();
        c.fold = fold;
        let f = load_fold(&c).unwrap();
        assert_eq!((f.train.len(), f.val.len()), (3, 1));
        assert!(seen.insert(f.val[0].case_id.clone()));
        assert_eq!(f.train[0].image.shape()[0], 3);
    }
    assert_eq!(seen.len(), 4);
}

proptest! {
    #[test]
    fn folds_partition_the_cases(n in 1usize..40, k in 1usize..8, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("case{i}")).collect();
        match split_folds(&ids, k, seed) {
            Err(_) => prop_assert!(n < k),
            Ok(folds) => {
                prop_assert_eq!(folds.len(), k);
                let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
                let all: BTreeSet<&String> = folds.iter().flatten().collect();
                prop_assert_eq!(all.len(), n);
                prop_assert_eq!(split_folds(&ids, k, seed).unwrap(), folds);
            }
        }
    }
}
