//! Command implementations behind the `qcgan` binary: train, generate,
//! evaluate, audit.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::data::{self, Dataset};
use crate::metrics;
use crate::model::{reference_counts, verify_counts, Generator, Variant};
use crate::train::{self, TrainConfig};
use crate::{Error, Result};

fn default_variant() -> String {
    "qcgan".into()
}
fn default_digit() -> u8 {
    0
}
fn default_image_size() -> usize {
    8
}
fn default_batch() -> usize {
    16
}
fn default_iterations() -> u64 {
    300
}
fn default_lr_g() -> f64 {
    0.05
}
fn default_lr_d() -> f64 {
    0.01
}
fn default_seed() -> u64 {
    42
}
fn default_d_steps() -> u32 {
    1
}
fn default_eval_every() -> u64 {
    50
}
fn default_noise_low() -> f64 {
    0.0
}
fn default_noise_high() -> f64 {
    PI / 2.0
}
fn default_eval_samples() -> usize {
    100
}
fn default_n_qubits() -> usize {
    5
}
fn default_depth() -> usize {
    4
}

/// File form of the training configuration. Unknown keys are rejected so a
/// misspelled hyperparameter fails loudly instead of silently training with
/// a default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_digit")]
    pub digit_class: u8,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_lr_g")]
    pub lr_g: f64,
    #[serde(default = "default_lr_d")]
    pub lr_d: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_d_steps")]
    pub d_steps_per_g_step: u32,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_noise_low")]
    pub noise_low: f64,
    #[serde(default = "default_noise_high")]
    pub noise_high: f64,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default = "default_n_qubits")]
    pub n_qubits: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Optional cap on the number of training images after filtering.
    #[serde(default)]
    pub max_samples: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))
    }

    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let config = TrainConfig {
            variant: Variant::parse(&self.variant)?,
            digit_class: self.digit_class,
            image_size: self.image_size,
            batch_size: self.batch_size,
            iterations: self.iterations,
            lr_g: self.lr_g,
            lr_d: self.lr_d,
            seed: self.seed,
            d_steps_per_g_step: self.d_steps_per_g_step,
            eval_every: self.eval_every,
            noise_low: self.noise_low,
            noise_high: self.noise_high,
            eval_samples: self.eval_samples,
            n_qubits: self.n_qubits,
            depth: self.depth,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Loads the MNIST training split from `data_dir`, filters to the configured
/// digit, resizes, and optionally caps the sample count.
pub fn load_training_dataset(config: &RunConfig) -> Result<Dataset> {
    let images_path = config.data_dir.join("train-images-idx3-ubyte");
    let labels_path = config.data_dir.join("train-labels-idx1-ubyte");
    if !images_path.exists() {
        return Err(Error::Parse(format!(
            "missing data file {}",
            images_path.display()
        )));
    }
    let raw = data::load_idx_images(&images_path)?;
    let labels = data::load_idx_labels(&labels_path)?;
    let dataset = data::build_dataset(raw, labels)?;
    let mut dataset = data::filter_class(&dataset, config.digit_class)?;
    if let Some(cap) = config.max_samples {
        dataset.images.truncate(cap);
        dataset.labels.truncate(cap);
    }
    if dataset.h != config.image_size || dataset.w != config.image_size {
        dataset = data::resize_dataset(&dataset, config.image_size, config.image_size)?;
    }
    Ok(dataset)
}

/// `train --config <path>`: runs the configured experiment and writes
/// metrics.csv, checkpoint.json, and samples_<iter>.pgm grids into out_dir.
pub fn cmd_train(config_path: &Path) -> Result<()> {
    let run = RunConfig::load(config_path)?;
    let config = run.to_train_config()?;
    let dataset = load_training_dataset(&run)?;
    fs::create_dir_all(&run.out_dir)?;
    train::train(&config, &dataset, Some(&run.out_dir))?;
    Ok(())
}

/// `generate --checkpoint <path> --count <k> --seed <s> --out <path>`:
/// samples k noise vectors and writes one PGM grid.
pub fn cmd_generate(checkpoint_path: &Path, count: usize, seed: u64, out: &Path) -> Result<()> {
    if count == 0 {
        return Err(Error::Config("count must be positive".into()));
    }
    let checkpoint = train::load_checkpoint(checkpoint_path)?;
    let (gen, _, _, _) = checkpoint.restore()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = train::sample_noise(
        &mut rng,
        count,
        gen.noise_dim(),
        checkpoint.hyper.noise_low,
        checkpoint.hyper.noise_high,
    )?;
    let images = noise
        .iter()
        .map(|z| gen.forward(z))
        .collect::<Result<Vec<_>>>()?;
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols);
    metrics::write_pgm_grid(
        &images,
        checkpoint.hyper.image_size,
        checkpoint.hyper.image_size,
        rows,
        cols,
        out,
    )?;
    Ok(())
}

/// `evaluate --checkpoint <path> --config <path> [--real-vs-real]`:
/// prints `fid=<value>` comparing generated images against the real set
/// (or the real set against itself as a diagnostic).
pub fn cmd_evaluate(checkpoint_path: &Path, config_path: &Path, real_vs_real: bool) -> Result<()> {
    let run = RunConfig::load(config_path)?;
    let config = run.to_train_config()?;
    let dataset = load_training_dataset(&run)?;
    if dataset.is_empty() {
        return Err(Error::Config("no real images after filtering".into()));
    }
    let n = config.eval_samples.min(dataset.len());
    let real = &dataset.images[..n];
    let real_features = metrics::features(real)?;
    let fid = if real_vs_real {
        metrics::fid(&real_features, &real_features)?
    } else {
        let checkpoint = train::load_checkpoint(checkpoint_path)?;
        let (gen, _, _, _) = checkpoint.restore()?;
        if gen.n_pixels() != config.n_pixels() {
            return Err(Error::Config(format!(
                "checkpoint generates {} pixels but config expects {}",
                gen.n_pixels(),
                config.n_pixels()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(2);
        let noise = train::sample_noise(
            &mut rng,
            n,
            gen.noise_dim(),
            config.noise_low,
            config.noise_high,
        )?;
        let fakes = noise
            .iter()
            .map(|z| gen.forward(z))
            .collect::<Result<Vec<_>>>()?;
        metrics::fid(&real_features, &metrics::features(&fakes)?)?
    };
    println!("fid={fid}");
    Ok(())
}

/// `audit`: prints the per-layer trainable parameter table for every
/// generator variant and fails on any mismatch with the reference counts.
pub fn cmd_audit() -> Result<()> {
    print!("{}", audit_report()?);
    Ok(())
}

pub fn audit_report() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut report = String::new();
    for variant in [Variant::QcGan, Variant::Gan1, Variant::Gan2, Variant::Gan2Star] {
        let gen = Generator::build(variant, 5, 4, 784, &mut rng)?;
        let counts = gen.count_parameters();
        verify_counts(&counts, variant)?;
        report.push_str(&format!("{}\n", variant.as_str()));
        for ((name, count), (_, expected)) in counts.iter().zip(reference_counts(variant)) {
            debug_assert_eq!(*count, expected);
            report.push_str(&format!("  {name} {count}\n"));
        }
    }
    Ok(report)
}
