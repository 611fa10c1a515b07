//! Adversarial training: losses, SGD, the alternating update loop,
//! checkpointing, and metric logging.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::metrics;
use crate::model::{discriminator, Generator, Mlp, Variant};
use crate::{Error, Result};

/// Log arguments are clamped to [CLAMP, 1 - CLAMP] before taking logs.
pub const CLAMP: f64 = 1e-12;

pub const CHECKPOINT_VERSION: u32 = 1;

// Named ChaCha streams; everything derives from the one config seed.
const STREAM_INIT: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_SHUFFLE_BASE: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub digit_class: u8,
    /// Image side length; pixels = image_size^2.
    pub image_size: usize,
    pub batch_size: usize,
    pub iterations: u64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub seed: u64,
    pub d_steps_per_g_step: u32,
    pub eval_every: u64,
    pub noise_low: f64,
    pub noise_high: f64,
    pub eval_samples: usize,
    pub n_qubits: usize,
    pub depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::QcGan,
            digit_class: 0,
            image_size: 8,
            batch_size: 16,
            iterations: 300,
            lr_g: 0.05,
            lr_d: 0.01,
            seed: 42,
            d_steps_per_g_step: 1,
            eval_every: 50,
            noise_low: 0.0,
            noise_high: PI / 2.0,
            eval_samples: 100,
            n_qubits: 5,
            depth: 4,
        }
    }
}

impl TrainConfig {
    pub fn n_pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.digit_class > 9 {
            return Err(Error::Config(format!(
                "digit_class {} outside 0-9",
                self.digit_class
            )));
        }
        if !matches!(self.image_size, 8 | 16 | 28) {
            return Err(Error::Config(format!(
                "image_size {} not one of 8, 16, 28",
                self.image_size
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.lr_g < 0.0 || self.lr_d < 0.0 {
            return Err(Error::Config("learning rates must be nonnegative".into()));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::Config("d_steps_per_g_step must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if !self.noise_low.is_finite()
            || !self.noise_high.is_finite()
            || self.noise_low >= self.noise_high
        {
            return Err(Error::Config(format!(
                "noise range [{}, {}) is empty",
                self.noise_low, self.noise_high
            )));
        }
        if self.eval_samples < 2 {
            return Err(Error::Config("eval_samples must be at least 2".into()));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// i.i.d. Uniform[low, high) noise vectors, deterministic given the rng state.
pub fn sample_noise(
    rng: &mut ChaCha8Rng,
    batch: usize,
    dim: usize,
    low: f64,
    high: f64,
) -> Result<Vec<Vec<f64>>> {
    if !low.is_finite() || !high.is_finite() || low >= high {
        return Err(Error::Config(format!("noise range [{low}, {high}) is empty")));
    }
    Ok((0..batch)
        .map(|_| (0..dim).map(|_| low + (high - low) * rng.gen::<f64>()).collect())
        .collect())
}

fn clamp_unit(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

/// Generator loss: mean of -log D over the fake batch.
pub fn loss_g(d_outputs_on_fake: &[f64]) -> f64 {
    let n = d_outputs_on_fake.len().max(1) as f64;
    d_outputs_on_fake.iter().map(|&d| -clamp_unit(d).ln()).sum::<f64>() / n
}

/// Discriminator loss: -E_real[log D] - E_fake[log(1 - D)].
pub fn loss_d(d_outputs_on_real: &[f64], d_outputs_on_fake: &[f64]) -> f64 {
    let nr = d_outputs_on_real.len().max(1) as f64;
    let nf = d_outputs_on_fake.len().max(1) as f64;
    let real: f64 = d_outputs_on_real.iter().map(|&d| -clamp_unit(d).ln()).sum();
    let fake: f64 = d_outputs_on_fake
        .iter()
        .map(|&d| -clamp_unit(1.0 - d).ln())
        .sum();
    real / nr + fake / nf
}

/// d/dd of ln(clamp(d)); zero in the saturated region.
fn dlog_clamped(d: f64) -> f64 {
    if d > CLAMP && d < 1.0 - CLAMP {
        1.0 / d
    } else {
        0.0
    }
}

/// Plain SGD: params -= lr * grads.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} params vs {} grads",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// One alternating update: `d_steps_per_g_step` discriminator steps on real
/// and freshly generated batches, then one generator step whose gradient
/// flows through the discriminator's input gradient. Returns the losses
/// re-evaluated after the updates.
pub fn train_step(
    gen: &mut Generator,
    disc: &mut Mlp,
    real_batch: &[&Vec<f64>],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    if real_batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    let n = real_batch.len() as f64;
    for _ in 0..config.d_steps_per_g_step {
        let noise = sample_noise(
            rng,
            real_batch.len(),
            gen.noise_dim(),
            config.noise_low,
            config.noise_high,
        )?;
        let fakes = noise
            .iter()
            .map(|z| gen.forward(z))
            .collect::<Result<Vec<_>>>()?;
        let mut acc = crate::model::MlpGrads::zeros_like(disc);
        for x in real_batch {
            let d = disc.forward_scalar(x)?;
            let upstream = -dlog_clamped(d) / n;
            let (grads, _) = disc.backward(x, &[upstream])?;
            acc.add(&grads);
        }
        for x in &fakes {
            let d = disc.forward_scalar(x)?;
            let upstream = dlog_clamped(1.0 - d) / n;
            let (grads, _) = disc.backward(x, &[upstream])?;
            acc.add(&grads);
        }
        disc.apply_sgd(&acc, config.lr_d);
    }

    let noise = sample_noise(
        rng,
        real_batch.len(),
        gen.noise_dim(),
        config.noise_low,
        config.noise_high,
    )?;
    let mut acc = gen.zero_grads();
    for z in &noise {
        let x = gen.forward(z)?;
        let d = disc.forward_scalar(&x)?;
        let upstream = -dlog_clamped(d) / n;
        let (_, dx) = disc.backward(&x, &[upstream])?;
        let grads = gen.backward(z, &dx)?;
        gen.accumulate(&mut acc, &grads);
    }
    gen.apply_sgd(&acc, config.lr_g);

    // Post-update losses on the same noise and real batch.
    let fakes = noise
        .iter()
        .map(|z| gen.forward(z))
        .collect::<Result<Vec<_>>>()?;
    let d_fake = fakes
        .iter()
        .map(|x| disc.forward_scalar(x))
        .collect::<Result<Vec<_>>>()?;
    let d_real = real_batch
        .iter()
        .map(|x| disc.forward_scalar(x))
        .collect::<Result<Vec<_>>>()?;
    let ld = loss_d(&d_real, &d_fake);
    let lg = loss_g(&d_fake);
    if !ld.is_finite() || !lg.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss: loss_d={ld}, loss_g={lg}"
        )));
    }
    Ok((ld, lg))
}

/// Final models plus the metrics CSV produced by a (possibly resumed) run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub gen: Generator,
    pub disc: Mlp,
    pub rng: ChaCha8Rng,
    pub iteration: u64,
    /// CSV rows produced by this run segment, header included only when the
    /// segment started at iteration 0.
    pub metrics_csv: String,
}

/// Trains from a fresh seeded initialization.
pub fn train(config: &TrainConfig, dataset: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let mut init_rng = stream_rng(config.seed, STREAM_INIT);
    let gen = Generator::build(
        config.variant,
        config.n_qubits,
        config.depth,
        config.n_pixels(),
        &mut init_rng,
    )?;
    let disc = discriminator(config.n_pixels(), &mut init_rng)?;
    let rng = stream_rng(config.seed, STREAM_TRAIN);
    run_loop(config, dataset, gen, disc, rng, 0, out_dir)
}

/// Continues a checkpointed run up to `config.iterations` total iterations.
pub fn resume(
    checkpoint: &Checkpoint,
    config: &TrainConfig,
    dataset: &Dataset,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let (gen, disc, rng, iteration) = checkpoint.restore()?;
    if iteration > config.iterations {
        return Err(Error::Config(format!(
            "checkpoint is at iteration {iteration}, beyond the configured total {}",
            config.iterations
        )));
    }
    run_loop(config, dataset, gen, disc, rng, iteration, out_dir)
}

fn run_loop(
    config: &TrainConfig,
    dataset: &Dataset,
    mut gen: Generator,
    mut disc: Mlp,
    mut rng: ChaCha8Rng,
    start: u64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let n_pixels = config.n_pixels();
    if dataset.h * dataset.w != n_pixels {
        return Err(Error::Config(format!(
            "dataset images are {}x{}, config expects {}x{}",
            dataset.h, dataset.w, config.image_size, config.image_size
        )));
    }
    let n = dataset.len();
    if n < config.batch_size {
        return Err(Error::Config(format!(
            "dataset has {n} samples, fewer than batch_size {}",
            config.batch_size
        )));
    }
    let batches_per_epoch = (n / config.batch_size) as u64;

    // Fixed evaluation sets so scores are comparable across iterations.
    let eval_n = config.eval_samples.min(n);
    let eval_real: Vec<Vec<f64>> = dataset.images[..eval_n].to_vec();
    let eval_real_features = metrics::features(&eval_real)?;
    let mut eval_rng = stream_rng(config.seed, STREAM_EVAL);
    let eval_noise = sample_noise(
        &mut eval_rng,
        eval_n,
        gen.noise_dim(),
        config.noise_low,
        config.noise_high,
    )?;

    let mut csv = String::new();
    if start == 0 {
        csv.push_str("iteration,loss_d,loss_g,fid\n");
    }
    let evaluate = |iteration: u64,
                        gen: &Generator,
                        disc: &Mlp,
                        csv: &mut String|
     -> Result<()> {
        let fakes = eval_noise
            .iter()
            .map(|z| gen.forward(z))
            .collect::<Result<Vec<_>>>()?;
        let d_fake = fakes
            .iter()
            .map(|x| disc.forward_scalar(x))
            .collect::<Result<Vec<_>>>()?;
        let d_real = eval_real
            .iter()
            .map(|x| disc.forward_scalar(x))
            .collect::<Result<Vec<_>>>()?;
        let ld = loss_d(&d_real, &d_fake);
        let lg = loss_g(&d_fake);
        let fid = metrics::fid(&eval_real_features, &metrics::features(&fakes)?)?;
        csv.push_str(&format!("{iteration},{ld},{lg},{fid}\n"));
        if let Some(dir) = out_dir {
            let cols = (fakes.len() as f64).sqrt().ceil() as usize;
            let rows = fakes.len().div_ceil(cols);
            metrics::write_pgm_grid(
                &fakes,
                config.image_size,
                config.image_size,
                rows,
                cols,
                &dir.join(format!("samples_{iteration}.pgm")),
            )?;
        }
        Ok(())
    };

    if start == 0 && config.iterations > 0 {
        evaluate(0, &gen, &disc, &mut csv)?;
    }

    let mut perm: Vec<usize> = Vec::new();
    let mut current_epoch = u64::MAX;
    for step in start..config.iterations {
        let epoch = step / batches_per_epoch;
        if epoch != current_epoch {
            // Epoch permutations come from their own stream so a resumed run
            // can rebuild them from the iteration counter alone.
            let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE_BASE + epoch);
            perm = (0..n).collect();
            for i in (1..n).rev() {
                let j = shuffle_rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            current_epoch = epoch;
        }
        let slot = (step % batches_per_epoch) as usize;
        let batch: Vec<&Vec<f64>> = perm
            [slot * config.batch_size..(slot + 1) * config.batch_size]
            .iter()
            .map(|&i| &dataset.images[i])
            .collect();
        train_step(&mut gen, &mut disc, &batch, config, &mut rng)?;
        let done = step + 1;
        if done % config.eval_every == 0 || done == config.iterations {
            evaluate(done, &gen, &disc, &mut csv)?;
        }
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut metrics_file = File::create(dir.join("metrics.csv"))?;
        metrics_file.write_all(csv.as_bytes())?;
        save_checkpoint(
            &gen,
            &disc,
            &rng,
            config.iterations,
            config,
            &dir.join("checkpoint.json"),
        )?;
    }
    Ok(TrainOutcome { gen, disc, rng, iteration: config.iterations, metrics_csv: csv })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub variant: String,
    pub n_qubits: usize,
    pub depth: usize,
    pub image_size: usize,
    pub disc_sizes: Vec<usize>,
    /// Layer sizes of a classical baseline generator; empty for the quantum one.
    pub gen_sizes: Vec<usize>,
    pub noise_low: f64,
    pub noise_high: f64,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub hyper: Hyper,
    pub iteration: u64,
    /// ChaCha8 state: 4 seed words, 2 word-position words, 1 stream word.
    pub rng_state: Vec<u64>,
    pub gen_theta: Vec<f64>,
    pub gen_w: Vec<f64>,
    pub gen_b: Vec<f64>,
    /// Baseline generator layers as flat `[weights..., biases...]` arrays.
    #[serde(default)]
    pub gen_layers: Vec<Vec<f64>>,
    /// Discriminator layers in the same flat form.
    pub disc: Vec<Vec<f64>>,
}

fn rng_to_words(rng: &ChaCha8Rng) -> Vec<u64> {
    let seed = rng.get_seed();
    let mut words: Vec<u64> = seed
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let pos = rng.get_word_pos();
    words.push(pos as u64);
    words.push((pos >> 64) as u64);
    words.push(rng.get_stream());
    words
}

fn rng_from_words(words: &[u64]) -> Result<ChaCha8Rng> {
    if words.len() != 7 {
        return Err(Error::Parse(format!(
            "rng_state has {} words, expected 7",
            words.len()
        )));
    }
    let mut seed = [0u8; 32];
    for (chunk, word) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(words[6]);
    rng.set_word_pos(u128::from(words[4]) | (u128::from(words[5]) << 64));
    Ok(rng)
}

impl Checkpoint {
    pub fn capture(
        gen: &Generator,
        disc: &Mlp,
        rng: &ChaCha8Rng,
        iteration: u64,
        config: &TrainConfig,
    ) -> Self {
        let (gen_theta, gen_w, gen_b, gen_sizes, gen_layers) = match gen {
            Generator::Quantum(g) => {
                (g.theta.clone(), g.w.clone(), g.b.clone(), Vec::new(), Vec::new())
            }
            Generator::Classical { mlp, .. } => (
                Vec::new(),
                Vec::new(),
                Vec::new(),
                mlp.sizes.clone(),
                mlp.to_flat_layers(),
            ),
        };
        Self {
            version: CHECKPOINT_VERSION,
            hyper: Hyper {
                variant: gen.variant().as_str().to_string(),
                n_qubits: config.n_qubits,
                depth: config.depth,
                image_size: config.image_size,
                disc_sizes: disc.sizes.clone(),
                gen_sizes,
                noise_low: config.noise_low,
                noise_high: config.noise_high,
            },
            iteration,
            rng_state: rng_to_words(rng),
            gen_theta,
            gen_w,
            gen_b,
            gen_layers,
            disc: disc.to_flat_layers(),
        }
    }

    /// Rebuilds the models and rng for resumed training or generation.
    pub fn restore(&self) -> Result<(Generator, Mlp, ChaCha8Rng, u64)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let variant = Variant::parse(&self.hyper.variant)?;
        let n_pixels = self.hyper.image_size * self.hyper.image_size;
        let gen = match variant {
            Variant::QcGan => Generator::Quantum(crate::model::GeneratorModel::from_params(
                self.hyper.n_qubits,
                self.hyper.depth,
                n_pixels,
                self.gen_theta.clone(),
                self.gen_w.clone(),
                self.gen_b.clone(),
            )?),
            _ => Generator::Classical {
                variant,
                mlp: Mlp::from_flat_layers(&self.hyper.gen_sizes, &self.gen_layers)?,
            },
        };
        let disc = Mlp::from_flat_layers(&self.hyper.disc_sizes, &self.disc)?;
        let rng = rng_from_words(&self.rng_state)?;
        Ok((gen, disc, rng, self.iteration))
    }
}

// JSON floats printed with 17 significant digits so doubles round-trip.
struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

pub fn save_checkpoint(
    gen: &Generator,
    disc: &Mlp,
    rng: &ChaCha8Rng,
    iteration: u64,
    config: &TrainConfig,
    path: &Path,
) -> Result<()> {
    let checkpoint = Checkpoint::capture(gen, disc, rng, iteration, config);
    let file = BufWriter::new(File::create(path)?);
    let mut serializer = serde_json::Serializer::with_formatter(file, SigFigFormatter);
    checkpoint
        .serialize(&mut serializer)
        .map_err(|e| Error::Parse(format!("cannot serialize checkpoint: {e}")))?;
    let mut file = serializer.into_inner();
    file.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Parse(format!("malformed checkpoint {}: {e}", path.display())))
}
