#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use nnhybrid::idx::write_idx;
use nnhybrid_core::data::{synth_blobs, synth_images, Dataset};
use nnhybrid_core::Tensor;

/// Writes 3-class Gaussian blobs as `blobs.csv` (label last) and returns
/// its path.
pub fn blobs_csv(dir: &Path, per_class: usize) -> PathBuf {
    let d = synth_blobs(per_class, 4, 3, 5.0, 11).unwrap();
    let mut text = String::new();
    for i in 0..d.len() {
        for v in d.sample(i) {
            text.push_str(&format!("{v},"));
        }
        text.push_str(&format!("{}\n", d.labels()[i] * 10));
    }
    let p = dir.join("blobs.csv");
    fs::write(&p, text).unwrap();
    p
}

pub fn quantized_images(per_class: usize, classes: usize, side: usize, seed: u64) -> Dataset {
    let d = synth_images(per_class, classes, side, 0.3, seed).unwrap();
    let q: Vec<f64> = d.features().data().iter().map(|v| (v * 255.0).round() / 255.0).collect();
    d.with_features(Tensor::new(d.features().shape(), q).unwrap()).unwrap()
}

/// Writes train and test IDX pairs of 8x8 images under `dir`.
pub fn image_idx(dir: &Path) {
    write_idx(&dir.join("train-images"), &dir.join("train-labels"), &quantized_images(20, 3, 8, 1)).unwrap();
    write_idx(&dir.join("test-images"), &dir.join("test-labels"), &quantized_images(10, 3, 8, 2)).unwrap();
}

pub const ALL_FAMILIES: &str = r#"
[[experiment]]
family = "NN"
architecture = 5
[[experiment]]
family = "SVM"
[[experiment]]
family = "KNN"
[[experiment]]
family = "NN/SVM"
architecture = 5
[[experiment]]
family = "NN/KNN"
architecture = 5
"#;

/// A numeric manifest over `blobs.csv` with every family, one epoch
/// setting and the given seeds.
pub fn blobs_manifest(dir: &Path, seeds: &str) -> PathBuf {
    blobs_csv(dir, 60);
    let text = format!(
        "name = \"blobs\"\noutput_dir = \"out\"\n[dataset]\nname = \"Blobs\"\nkind = \"numeric\"\npath = \"blobs.csv\"\n\
         [split]\ntrain = 90\nval = 30\ntest = 60\nseed = 3\n[defaults]\nepochs = [3]\nseeds = {seeds}\n{ALL_FAMILIES}"
    );
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

pub const IMAGE_MANIFEST: &str = r#"
name = "images"
output_dir = "out"
[dataset]
name = "Pics"
kind = "image"
train_images = "train-images"
train_labels = "train-labels"
test_images = "test-images"
test_labels = "test-labels"
[split]
train = 40
val = 15
test = 30
strategy = "given-order"
[defaults]
epochs = [2]
seeds = [1]
[[experiment]]
family = "NN/KNN"
architecture = 4
[[experiment]]
family = "NN/SVM"
architecture = 4
"#;
