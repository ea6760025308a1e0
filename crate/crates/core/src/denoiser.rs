//! Convolutional denoising autoencoder trained at one fixed noise level.
//!
//! In the federated loop it is applied to generator outputs after each
//! round's server update. It only ever sees post-mechanism artifacts, so it
//! has no effect on the privacy accounting.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::autodiff::{grad, Graph, Var};
use crate::datasets::add_pixel_noise;
use crate::error::{Error, Result};
use crate::gan::IMAGE_SIDE;
use crate::nn;
use crate::optim::{Adam, AdamConfig};
use crate::paramio;
use crate::rng::{derive_seed, rng_from, stream};
use crate::tensor::{ParamSet, Tensor};

const META_LEVEL: &str = "meta.trained_noise_level";
const INFER_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub params: ParamSet,
    pub trained_noise_level: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AutoencoderTraining {
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
}

impl Default for AutoencoderTraining {
    fn default() -> Self {
        Self { epochs: 20, batch: 32, adam: AdamConfig { lr: 2e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 } }
    }
}

/// One row of [`mismatch_probe`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRow {
    pub level: f64,
    pub mse_noisy: f64,
    pub mse_denoised: f64,
}

fn init_params(seed: u64) -> Result<ParamSet> {
    let mut rng = rng_from(derive_seed(seed, 0, stream::INIT));
    ParamSet::new(vec![
        ("ae.enc1.w".into(), nn::conv_kernel(16, 1, 3, &mut rng)),
        ("ae.enc1.b".into(), Tensor::zeros(&[16])),
        ("ae.enc2.w".into(), nn::conv_kernel(8, 16, 3, &mut rng)),
        ("ae.enc2.b".into(), Tensor::zeros(&[8])),
        ("ae.dec1.w".into(), nn::conv_transpose_kernel(8, 8, 4, &mut rng)),
        ("ae.dec1.b".into(), Tensor::zeros(&[8])),
        ("ae.dec2.w".into(), nn::conv_transpose_kernel(8, 16, 4, &mut rng)),
        ("ae.dec2.b".into(), Tensor::zeros(&[16])),
        ("ae.out.w".into(), nn::conv_kernel(1, 16, 3, &mut rng)),
        ("ae.out.b".into(), Tensor::zeros(&[1])),
    ])
}

fn forward(g: &mut Graph, params: &ParamSet, images: &Tensor) -> Result<Var> {
    let s = images.shape();
    if s.len() != 4 || s[1..] != [1, IMAGE_SIDE, IMAGE_SIDE] {
        return Err(Error::Shape {
            op: "denoise",
            left: s.to_vec(),
            right: vec![s.first().copied().unwrap_or(0), 1, IMAGE_SIDE, IMAGE_SIDE],
        });
    }
    let p = g.register(params)?;
    let x = g.constant(images.clone())?;
    let h = nn::conv(g, &p, "ae.enc1", x, 2, 1)?;
    let h = g.relu(h)?;
    let h = nn::conv(g, &p, "ae.enc2", h, 2, 1)?;
    let h = g.relu(h)?;
    let h = nn::conv_t(g, &p, "ae.dec1", h, 2, 1)?;
    let h = g.relu(h)?;
    let h = nn::conv_t(g, &p, "ae.dec2", h, 2, 1)?;
    let h = g.relu(h)?;
    let h = nn::conv(g, &p, "ae.out", h, 1, 1)?;
    g.sigmoid(h)
}

impl Autoencoder {
    /// Untrained model with the deterministic initialization for `seed`.
    pub fn initialized(noise_level: f64, seed: u64) -> Result<Self> {
        Ok(Self { params: init_params(seed)?, trained_noise_level: noise_level })
    }

    /// Initialization used by training: the output bias starts at the
    /// logit of the mean clean pixel. Starting from a mid-gray output on
    /// mostly-black digits drives the sigmoid into saturation within a few
    /// epochs and the model never leaves the all-black solution.
    pub fn initialized_for(clean: &Tensor, noise_level: f64, seed: u64) -> Result<Self> {
        let mut model = Self::initialized(noise_level, seed)?;
        let p = clean.mean().clamp(1e-3, 1.0 - 1e-3);
        let entries = model
            .params
            .iter()
            .map(|(n, t)| {
                (n.to_string(), if n == "ae.out.b" { Tensor::full(t.shape(), (p / (1.0 - p)).ln()) } else { t.clone() })
            })
            .collect();
        model.params = ParamSet::new(entries)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = self.params.entries().to_vec();
        entries.push((META_LEVEL.into(), Tensor::scalar(self.trained_noise_level)));
        paramio::save(path, &ParamSet::new(entries)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let all = paramio::load(path)?;
        let level = all
            .get(META_LEVEL)
            .ok_or_else(|| Error::invalid(format!("{}: missing `{META_LEVEL}`", path.display())))?
            .item();
        let params = ParamSet::new(
            all.iter().filter(|(n, _)| *n != META_LEVEL).map(|(n, t)| (n.to_string(), t.clone())).collect(),
        )?;
        params.check_compatible(&init_params(0)?)?;
        Ok(Self { params, trained_noise_level: level })
    }
}

/// Trains on `(add_pixel_noise(x, level), x)` pairs with MSE; returns the
/// model and the mean training loss of each epoch.
pub fn train_autoencoder_with_history(
    clean: &Tensor,
    noise_level: f64,
    training: &AutoencoderTraining,
    seed: u64,
) -> Result<(Autoencoder, Vec<f64>)> {
    if !(0.0..=1.0).contains(&noise_level) {
        return Err(Error::invalid(format!("noise level {noise_level} outside [0, 1]")));
    }
    let n = clean.shape().first().copied().unwrap_or(0);
    if n == 0 {
        return Err(Error::Empty("autoencoder training set"));
    }
    if training.batch == 0 {
        return Err(Error::invalid("batch must be positive"));
    }
    let mut model = Autoencoder::initialized_for(clean, noise_level, seed)?;
    let mut opt = Adam::new(training.adam, &model.params);
    let mut history = Vec::with_capacity(training.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..training.epochs {
        let epoch_seed = derive_seed(seed, epoch as u64 + 1, stream::AUTOENCODER);
        order.shuffle(&mut rng_from(epoch_seed));
        let mut total = 0.0;
        for (b, rows) in order.chunks(training.batch).enumerate() {
            let target = clean.select_rows(rows)?;
            let noisy = add_pixel_noise(&target, noise_level, derive_seed(epoch_seed, b as u64, stream::AUTOENCODER))?;
            let mut g = Graph::new();
            let out = forward(&mut g, &model.params, &noisy)?;
            let loss = nn::mse(&mut g, out, &target)?;
            let grads = grad(&g, loss, &model.params)?;
            model.params = opt.step(&model.params, &grads)?;
            total += g.value(loss).item() * rows.len() as f64;
        }
        history.push(total / n as f64);
    }
    Ok((model, history))
}

pub fn train_autoencoder(
    clean: &Tensor,
    noise_level: f64,
    training: &AutoencoderTraining,
    seed: u64,
) -> Result<Autoencoder> {
    train_autoencoder_with_history(clean, noise_level, training, seed).map(|(m, _)| m)
}

/// Forward pass in fixed-size chunks; output pixels are in `[0, 1]`.
pub fn denoise(model: &Autoencoder, images: &Tensor) -> Result<Tensor> {
    let s = images.shape();
    if s.len() != 4 || s[1..] != [1, IMAGE_SIDE, IMAGE_SIDE] {
        return Err(Error::Shape {
            op: "denoise",
            left: s.to_vec(),
            right: vec![s.first().copied().unwrap_or(0), 1, IMAGE_SIDE, IMAGE_SIDE],
        });
    }
    let n = s[0];
    if n == 0 {
        return Ok(images.clone());
    }
    let mut parts = Vec::with_capacity(n.div_ceil(INFER_CHUNK));
    for start in (0..n).step_by(INFER_CHUNK) {
        let chunk = images.slice_rows(start, (start + INFER_CHUNK).min(n))?;
        let mut g = Graph::new();
        let out = forward(&mut g, &model.params, &chunk)?;
        parts.push(g.value(out).clone());
    }
    Tensor::concat_rows(&parts)
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok(a.zip_with(b, "mse", |x, y| (x - y) * (x - y))?.mean())
}

/// Mean over pixels of `|in - ½| - |out - ½|`: positive when the output
/// sits closer to mid-gray than the input.
pub fn shift_toward_gray(input: &Tensor, output: &Tensor) -> Result<f64> {
    Ok(input.zip_with(output, "shift_toward_gray", |i, o| (i - 0.5).abs() - (o - 0.5).abs())?.mean())
}

/// MSE to the clean images before and after denoising, at each probe level.
pub fn mismatch_probe(model: &Autoencoder, clean: &Tensor, levels: &[f64], seed: u64) -> Result<Vec<ProbeRow>> {
    levels
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            let noisy = add_pixel_noise(clean, level, derive_seed(seed, i as u64, stream::AUTOENCODER))?;
            let denoised = denoise(model, &noisy)?;
            Ok(ProbeRow { level, mse_noisy: mse(&noisy, clean)?, mse_denoised: mse(&denoised, clean)? })
        })
        .collect()
}
