//! Evaluation: FID over learned features, classifier accuracy on generated
//! samples, and the per-round CSV log.
//!
//! The features come from a small convolutional classifier trained on real
//! digits rather than Inception-v3, so absolute FID values are only
//! comparable within this crate.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;

use crate::autodiff::{grad, Graph, Var};
use crate::datasets::LabeledImageSet;
use crate::denoiser::{denoise, Autoencoder};
use crate::error::{Error, Result};
use crate::gan::{sample_conditioning, GanArch, IMAGE_SIDE};
use crate::nn;
use crate::optim::{Adam, AdamConfig};
use crate::rng::{derive_seed, rng_from, stream};
use crate::tensor::{ParamSet, Tensor};

const SYMMETRY_TOL: f64 = 1e-8;
const EIGEN_FLOOR: f64 = -1e-8;
const COV_RIDGE: f64 = 1e-6;
const EVAL_CHUNK: usize = 256;

fn to_matrix(t: &Tensor) -> Result<DMatrix<f64>> {
    match t.shape() {
        &[r, c] => Ok(DMatrix::from_row_slice(r, c, t.data())),
        s => Err(Error::invalid(format!("expected a matrix, got shape {s:?}"))),
    }
}

fn from_matrix(m: &DMatrix<f64>) -> Tensor {
    let (r, c) = m.shape();
    Tensor::from_fn(&[r, c], |i| m[(i / c, i % c)])
}

fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if d != m.ncols() {
        return Err(Error::invalid(format!("matrix square root of a {}x{} matrix", d, m.ncols())));
    }
    let scale = 1.0 + m.amax();
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let floor = EIGEN_FLOOR * scale;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < floor) {
        return Err(Error::invalid(format!("matrix is not positive semidefinite (eigenvalue {bad})")));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Principal square root of a symmetric positive semidefinite matrix via
/// symmetric eigendecomposition; eigenvalues down to `-1e-8` are clamped to 0.
pub fn matrix_sqrt_psd(m: &Tensor) -> Result<Tensor> {
    Ok(from_matrix(&sqrt_psd(&to_matrix(m)?)?))
}

/// Mean and unbiased covariance of the rows of `feats[n, d]`.
pub fn moments(feats: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let m = to_matrix(feats)?;
    let (n, d) = m.shape();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples for a covariance, got {n}")));
    }
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    Ok((mean.iter().copied().collect(), from_matrix(&cov)))
}

/// Fréchet distance between Gaussians `(μ₁, Σ₁)` and `(μ₂, Σ₂)` using the
/// symmetric product `tr sqrt(Σ₁^½ Σ₂ Σ₁^½)`.
pub fn frechet_distance(mu1: &[f64], cov1: &Tensor, mu2: &[f64], cov2: &Tensor) -> Result<f64> {
    if mu1.len() != mu2.len() || cov1.shape() != cov2.shape() || cov1.shape() != [mu1.len(), mu1.len()] {
        return Err(Error::Shape { op: "fid", left: cov1.shape().to_vec(), right: cov2.shape().to_vec() });
    }
    let (s1, s2) = (to_matrix(cov1)?, to_matrix(cov2)?);
    let root1 = sqrt_psd(&s1)?;
    let inner = &root1 * &s2 * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let mean_term: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
    let fid = mean_term + s1.trace() + s2.trace() - 2.0 * tr_cross;
    Ok(fid.max(0.0))
}

/// FID between two feature sets `[n, d]` and `[m, d]`. When either set has
/// no more than `d` rows both covariances get a `1e-6·I` ridge.
pub fn fid(real_feats: &Tensor, fake_feats: &Tensor) -> Result<f64> {
    let (rs, fs) = (real_feats.shape(), fake_feats.shape());
    if rs.len() != 2 || fs.len() != 2 || rs[1] != fs[1] {
        return Err(Error::Shape { op: "fid", left: rs.to_vec(), right: fs.to_vec() });
    }
    let d = rs[1];
    let (mu_r, mut cov_r) = moments(real_feats)?;
    let (mu_f, mut cov_f) = moments(fake_feats)?;
    if rs[0] <= d || fs[0] <= d {
        for cov in [&mut cov_r, &mut cov_f] {
            for i in 0..d {
                cov.data_mut()[i * d + i] += COV_RIDGE;
            }
        }
    }
    frechet_distance(&mu_r, &cov_r, &mu_f, &cov_f)
}

/// Frozen classifier whose penultimate activations serve as FID features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    pub params: ParamSet,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Accuracy on real images the extractor was not trained on.
    pub heldout_accuracy: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractorTraining {
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub feature_dim: usize,
}

impl Default for ExtractorTraining {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch: 32,
            adam: AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            feature_dim: 64,
        }
    }
}

const FLAT: usize = 32 * 7 * 7;

impl FeatureExtractor {
    fn init(num_classes: usize, feature_dim: usize, seed: u64) -> Result<ParamSet> {
        let mut rng = rng_from(derive_seed(seed, 0, stream::INIT));
        ParamSet::new(vec![
            ("cls.conv1.w".into(), nn::conv_kernel(16, 1, 3, &mut rng)),
            ("cls.conv1.b".into(), Tensor::zeros(&[16])),
            ("cls.conv2.w".into(), nn::conv_kernel(32, 16, 3, &mut rng)),
            ("cls.conv2.b".into(), Tensor::zeros(&[32])),
            ("cls.fc.w".into(), nn::dense_weight(FLAT, feature_dim, &mut rng)),
            ("cls.fc.b".into(), Tensor::zeros(&[feature_dim])),
            ("cls.out.w".into(), nn::dense_weight(feature_dim, num_classes, &mut rng)),
            ("cls.out.b".into(), Tensor::zeros(&[num_classes])),
        ])
    }

    /// Returns `(features, logits)` nodes.
    fn forward(g: &mut Graph, params: &ParamSet, images: &Tensor) -> Result<(Var, Var)> {
        let s = images.shape();
        if s.len() != 4 || s[1..] != [1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::Shape { op: "extractor", left: s.to_vec(), right: vec![0, 1, IMAGE_SIDE, IMAGE_SIDE] });
        }
        let p = g.register(params)?;
        let x = g.constant(images.clone())?;
        let h = nn::conv(g, &p, "cls.conv1", x, 2, 1)?;
        let h = g.relu(h)?;
        let h = nn::conv(g, &p, "cls.conv2", h, 2, 1)?;
        let h = g.relu(h)?;
        let h = g.reshape(h, &[s[0], FLAT])?;
        let f = nn::dense(g, &p, "cls.fc", h)?;
        let f = g.relu(f)?;
        let logits = nn::dense(g, &p, "cls.out", f)?;
        Ok((f, logits))
    }

    pub fn train(set: &LabeledImageSet, training: &ExtractorTraining, seed: u64) -> Result<Self> {
        if training.batch == 0 || training.feature_dim == 0 {
            return Err(Error::invalid("extractor batch and feature width must be positive"));
        }
        let mut params = Self::init(set.num_classes(), training.feature_dim, seed)?;
        let mut opt = Adam::new(training.adam, &params);
        let mut order: Vec<usize> = (0..set.len()).collect();
        for epoch in 0..training.epochs {
            order.shuffle(&mut rng_from(derive_seed(seed, epoch as u64 + 1, stream::EXTRACTOR)));
            for rows in order.chunks(training.batch) {
                let images = set.images().select_rows(rows)?;
                let labels: Vec<usize> = rows.iter().map(|&r| set.labels()[r]).collect();
                let mut g = Graph::new();
                let (_, logits) = Self::forward(&mut g, &params, &images)?;
                let loss = g.softmax_cross_entropy(logits, &labels)?;
                let grads = grad(&g, loss, &params)?;
                params = opt.step(&params, &grads)?;
            }
        }
        Ok(Self { params, feature_dim: training.feature_dim, num_classes: set.num_classes(), heldout_accuracy: None })
    }

    /// Trains on `set` and records accuracy on `heldout`.
    pub fn train_with_heldout(
        set: &LabeledImageSet,
        heldout: &LabeledImageSet,
        training: &ExtractorTraining,
        seed: u64,
    ) -> Result<Self> {
        let mut ex = Self::train(set, training, seed)?;
        ex.heldout_accuracy = Some(ex.accuracy(heldout.images(), heldout.labels())?);
        Ok(ex)
    }

    fn run(&self, images: &Tensor) -> Result<(Tensor, Tensor)> {
        let n = images.shape().first().copied().unwrap_or(0);
        let mut feats = Vec::new();
        let mut logits = Vec::new();
        for start in (0..n).step_by(EVAL_CHUNK) {
            let chunk = images.slice_rows(start, (start + EVAL_CHUNK).min(n))?;
            let mut g = Graph::new();
            let (f, l) = Self::forward(&mut g, &self.params, &chunk)?;
            feats.push(g.value(f).clone());
            logits.push(g.value(l).clone());
        }
        if feats.is_empty() {
            return Ok((Tensor::zeros(&[0, self.feature_dim]), Tensor::zeros(&[0, self.num_classes])));
        }
        Ok((Tensor::concat_rows(&feats)?, Tensor::concat_rows(&logits)?))
    }

    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        self.run(images).map(|(f, _)| f)
    }

    pub fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        let (_, logits) = self.run(images)?;
        Ok(argmax_rows(&logits, self.num_classes))
    }

    pub fn accuracy(&self, images: &Tensor, labels: &[usize]) -> Result<f64> {
        accuracy_of(&self.predict(images)?, labels).ok_or(Error::Empty("accuracy"))
    }
}

fn argmax_rows(t: &Tensor, width: usize) -> Vec<usize> {
    t.data()
        .chunks(width)
        .map(|row| row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best }))
        .collect()
}

/// Fraction of matching entries; `None` for empty input.
pub fn accuracy_of(predicted: &[usize], intended: &[usize]) -> Option<f64> {
    if predicted.is_empty() || predicted.len() != intended.len() {
        return None;
    }
    let hits = predicted.iter().zip(intended).filter(|(a, b)| a == b).count();
    Some(hits as f64 / predicted.len() as f64)
}

/// Generates `n` samples in chunks, optionally passing them through the denoiser.
pub fn generate_samples(
    arch: &GanArch,
    gen: &ParamSet,
    latents: &Tensor,
    labels: Option<&[usize]>,
    postprocess: Option<&Autoencoder>,
) -> Result<Tensor> {
    let n = latents.shape().first().copied().unwrap_or(0);
    let mut parts = Vec::new();
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let z = latents.slice_rows(start, end)?;
        let img = arch.generate(gen, &z, labels.map(|l| &l[start..end]))?;
        parts.push(match postprocess {
            Some(ae) => denoise(ae, &img)?,
            None => img,
        });
    }
    if parts.is_empty() {
        return Ok(Tensor::zeros(&[0, 1, IMAGE_SIDE, IMAGE_SIDE]));
    }
    Tensor::concat_rows(&parts)
}

/// Accuracy of the extractor on generated samples against the labels the
/// generator was conditioned on. Absent for unconditional GANs or `n = 0`.
pub fn classifier_accuracy(
    arch: &GanArch,
    gen: &ParamSet,
    extractor: &FeatureExtractor,
    n_samples: usize,
    seed: u64,
    postprocess: Option<&Autoencoder>,
) -> Result<Option<f64>> {
    if arch.num_classes.is_none() || n_samples == 0 {
        return Ok(None);
    }
    let (z, labels) = sample_conditioning(arch, &mut rng_from(seed), n_samples);
    let images = generate_samples(arch, gen, &z, labels.as_deref(), postprocess)?;
    Ok(accuracy_of(&extractor.predict(&images)?, labels.as_deref().unwrap_or(&[])))
}

/// Metrics logged at one cadence tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub fid_proxy: f64,
    pub gen_loss: f64,
    pub classifier_acc: Option<f64>,
    pub epsilon: f64,
}

pub const CSV_HEADER: &str = "round,fid_proxy,gen_loss,classifier_acc,epsilon";

/// C `printf("%.*g")` formatting.
pub fn format_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl RoundRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.round,
            format_g(self.fid_proxy, 6),
            format_g(self.gen_loss, 6),
            self.classifier_acc.map(|a| format_g(a, 6)).unwrap_or_default(),
            format_g(self.epsilon, 6)
        )
    }
}

/// Streams records as CSV, flushing after every row.
pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> Result<Self> {
        out.write_all(CSV_HEADER.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &RoundRecord) -> Result<()> {
        self.out.write_all(r.csv_row().as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn records_to_csv(records: &[RoundRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
