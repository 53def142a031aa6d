#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use heatmap_eval::netcore::{save_model, Layer, Linear, Model};
use heatmap_eval_cli::arch::build_model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn hmeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmeval"))
        .args(args)
        .output()
        .expect("hmeval runs")
}

pub fn run_ok(args: &[&str]) {
    let out = hmeval(args);
    assert!(
        out.status.success(),
        "hmeval {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Writes an IDX image/label pair and returns the image file path.
pub fn write_idx(dir: &Path, stem: &str, images: &[Vec<u8>], side: usize, labels: &[u8]) -> PathBuf {
    let mut img = Vec::new();
    for v in [0x803u32, images.len() as u32, side as u32, side as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for px in images {
        assert_eq!(px.len(), side * side);
        img.extend_from_slice(px);
    }
    let mut lbl = Vec::new();
    for v in [0x801u32, labels.len() as u32] {
        lbl.extend_from_slice(&v.to_be_bytes());
    }
    lbl.extend_from_slice(labels);
    let path = dir.join(format!("{stem}-images-idx3-ubyte"));
    std::fs::write(&path, img).unwrap();
    std::fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), lbl).unwrap();
    path
}

/// Random 8x8 images with labels in 0..10.
pub fn random_idx(dir: &Path, stem: &str, n: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images: Vec<Vec<u8>> = (0..n).map(|_| (0..64).map(|_| rng.random()).collect()).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    write_idx(dir, stem, &images, 8, &labels)
}

pub fn small_cnn(dir: &Path, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = build_model("conv4x3p1,relu,pool2,flatten,linear16,relu,linear", &[1, 8, 8], 10, &mut rng).unwrap();
    let path = dir.join("cnn.hbm");
    save_model(&model, &path).unwrap();
    path
}

/// `f_c(x) = w_c . x` on 8x8 images; returns the path and the weights.
pub fn linear_model(dir: &Path, seed: u64) -> (PathBuf, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..10 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = Model::new(
        vec![1, 8, 8],
        vec![
            Layer::Flatten,
            Layer::Linear(Linear::new(64, 10, weights.clone(), vec![0.0; 10]).unwrap()),
        ],
    )
    .unwrap();
    let path = dir.join("linear.hbm");
    save_model(&model, &path).unwrap();
    (path, weights)
}

pub fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            header.iter().map(String::from).zip(rec.iter().map(String::from)).collect()
        })
        .collect()
}

pub fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?} is not a number", row[key]))
}

/// Every file below `dir` with its bytes, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
