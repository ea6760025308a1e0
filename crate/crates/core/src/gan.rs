//! Generator and discriminator for 28×28 single-channel images.
//!
//! Generator: `dense(z ⧺ onehot → 32·7·7) → relu → convT(32→16) → relu →
//! convT(16→1) → tanh`, rescaled to `[0, 1]`. Discriminator: optional
//! learned label map stacked as a second input channel, two strided
//! `4×4` convolutions with leaky ReLU, then `dense(1568 → 1)`.

use rand::Rng as _;

use crate::autodiff::{grad, Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{self, LEAKY_SLOPE};
use crate::rng::{standard_normals, Rng};
use crate::tensor::{ParamSet, Tensor};

pub const IMAGE_SIDE: usize = 28;
const BASE: usize = 7;
const GEN_CH: usize = 32;
const GEN_MID: usize = 16;
const DISC_CH1: usize = 16;
const DISC_CH2: usize = 32;

/// Architecture shared by a generator/discriminator pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GanArch {
    pub z_dim: usize,
    /// `Some(k)` for a class-conditional pair over `k` classes.
    pub num_classes: Option<usize>,
}

impl Default for GanArch {
    fn default() -> Self {
        Self { z_dim: 64, num_classes: Some(10) }
    }
}

/// Images with optional class ids (required iff the GAN is conditional).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub images: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.images.shape().first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Ok(Self { images: self.images.slice_rows(0, n)?, labels: self.labels.as_ref().map(|l| l[..n].to_vec()) })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanModels {
    pub arch: GanArch,
    pub generator: ParamSet,
    pub discriminator: ParamSet,
}

impl GanArch {
    fn label_width(&self) -> usize {
        self.num_classes.unwrap_or(0)
    }

    pub fn init(&self, rng: &mut Rng) -> Result<GanModels> {
        if self.z_dim == 0 {
            return Err(Error::invalid("z_dim must be positive"));
        }
        let k = self.label_width();
        let fc_out = GEN_CH * BASE * BASE;
        let generator = ParamSet::new(vec![
            ("gen.fc.w".into(), nn::dense_weight(self.z_dim + k, fc_out, rng)),
            ("gen.fc.b".into(), Tensor::zeros(&[fc_out])),
            ("gen.up1.w".into(), nn::conv_transpose_kernel(GEN_CH, GEN_MID, 4, rng)),
            ("gen.up1.b".into(), Tensor::zeros(&[GEN_MID])),
            ("gen.up2.w".into(), nn::conv_transpose_kernel(GEN_MID, 1, 4, rng)),
            ("gen.up2.b".into(), Tensor::zeros(&[1])),
        ])?;
        let pixels = IMAGE_SIDE * IMAGE_SIDE;
        let mut disc = Vec::new();
        if k > 0 {
            disc.push(("disc.embed.w".into(), nn::dense_weight(k, pixels, rng)));
            disc.push(("disc.embed.b".into(), Tensor::zeros(&[pixels])));
        }
        let in_ch = 1 + usize::from(k > 0);
        let flat = DISC_CH2 * BASE * BASE;
        disc.extend([
            ("disc.conv1.w".into(), nn::conv_kernel(DISC_CH1, in_ch, 4, rng)),
            ("disc.conv1.b".into(), Tensor::zeros(&[DISC_CH1])),
            ("disc.conv2.w".into(), nn::conv_kernel(DISC_CH2, DISC_CH1, 4, rng)),
            ("disc.conv2.b".into(), Tensor::zeros(&[DISC_CH2])),
            ("disc.out.w".into(), nn::dense_weight(flat, 1, rng)),
            ("disc.out.b".into(), Tensor::zeros(&[1])),
        ]);
        Ok(GanModels { arch: *self, generator, discriminator: ParamSet::new(disc)? })
    }

    fn check_labels(&self, n: usize, labels: Option<&[usize]>) -> Result<()> {
        match (self.num_classes, labels) {
            (Some(k), Some(l)) => {
                if l.len() != n {
                    return Err(Error::invalid(format!("{} labels for a batch of {n}", l.len())));
                }
                if let Some(bad) = l.iter().find(|&&x| x >= k) {
                    return Err(Error::invalid(format!("label {bad} outside 0..{k}")));
                }
                Ok(())
            }
            (None, None) => Ok(()),
            (Some(_), None) => Err(Error::invalid("conditional GAN needs labels")),
            (None, Some(_)) => Err(Error::invalid("unconditional GAN takes no labels")),
        }
    }

    /// Records the generator forward pass; output `[b, 1, 28, 28]` in `[0, 1]`.
    pub fn generator_forward(
        &self,
        g: &mut Graph,
        gen: &ParamSet,
        latents: &Tensor,
        labels: Option<&[usize]>,
    ) -> Result<Var> {
        let s = latents.shape();
        if s.len() != 2 || s[1] != self.z_dim {
            return Err(Error::Shape {
                op: "generate",
                left: s.to_vec(),
                right: vec![s.first().copied().unwrap_or(0), self.z_dim],
            });
        }
        let batch = s[0];
        self.check_labels(batch, labels)?;
        let p = g.register(gen)?;
        let z = g.constant(latents.clone())?;
        let input = match (self.num_classes, labels) {
            (Some(k), Some(l)) => {
                let oh = g.constant(nn::one_hot(l, k))?;
                g.concat(&[z, oh])?
            }
            _ => z,
        };
        let h = nn::dense(g, &p, "gen.fc", input)?;
        let h = g.relu(h)?;
        let h = g.reshape(h, &[batch, GEN_CH, BASE, BASE])?;
        let h = nn::conv_t(g, &p, "gen.up1", h, 2, 1)?;
        let h = g.relu(h)?;
        let h = nn::conv_t(g, &p, "gen.up2", h, 2, 1)?;
        let t = g.tanh(h)?;
        let half = g.scale(t, 0.5)?;
        g.add_scalar(half, 0.5)
    }

    /// Records the discriminator forward pass; output logits `[b, 1]`.
    pub fn discriminator_forward(
        &self,
        g: &mut Graph,
        disc: &ParamSet,
        images: Var,
        labels: Option<&[usize]>,
    ) -> Result<Var> {
        let s = g.value(images).shape().to_vec();
        if s.len() != 4 || s[1..] != [1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::Shape { op: "discriminator", left: s, right: vec![0, 1, IMAGE_SIDE, IMAGE_SIDE] });
        }
        let batch = s[0];
        self.check_labels(batch, labels)?;
        let p = g.register(disc)?;
        let centered = g.scale(images, 2.0)?;
        let mut x = g.add_scalar(centered, -1.0)?;
        if let (Some(k), Some(l)) = (self.num_classes, labels) {
            let oh = g.constant(nn::one_hot(l, k))?;
            let e = nn::dense(g, &p, "disc.embed", oh)?;
            let e = g.reshape(e, &[batch, 1, IMAGE_SIDE, IMAGE_SIDE])?;
            x = g.concat(&[x, e])?;
        }
        let h = nn::conv(g, &p, "disc.conv1", x, 2, 1)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE)?;
        let h = nn::conv(g, &p, "disc.conv2", h, 2, 1)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE)?;
        let h = g.reshape(h, &[batch, DISC_CH2 * BASE * BASE])?;
        nn::dense(g, &p, "disc.out", h)
    }

    /// Deterministic generator pass without gradients.
    pub fn generate(&self, gen: &ParamSet, latents: &Tensor, labels: Option<&[usize]>) -> Result<Tensor> {
        if latents.shape().first() == Some(&0) && latents.shape().get(1) == Some(&self.z_dim) {
            self.check_labels(0, labels)?;
            return Ok(Tensor::zeros(&[0, 1, IMAGE_SIDE, IMAGE_SIDE]));
        }
        let mut g = Graph::new();
        let out = self.generator_forward(&mut g, gen, latents, labels)?;
        Ok(g.value(out).clone())
    }

    /// Discriminator logits without gradients.
    pub fn discriminate(&self, disc: &ParamSet, images: &Tensor, labels: Option<&[usize]>) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(images.clone())?;
        let out = self.discriminator_forward(&mut g, disc, x, labels)?;
        Ok(g.value(out).clone())
    }

    /// Binary cross-entropy with logits, `mean softplus(-D(real)) + mean softplus(D(fake))`,
    /// and its gradient with respect to the discriminator.
    pub fn disc_loss_and_grads(
        &self,
        disc: &ParamSet,
        real: &LabeledBatch,
        fake: &LabeledBatch,
    ) -> Result<(f64, ParamSet)> {
        if real.images.shape() != fake.images.shape() {
            return Err(Error::Shape {
                op: "disc_loss",
                left: real.images.shape().to_vec(),
                right: fake.images.shape().to_vec(),
            });
        }
        if real.is_empty() {
            return Err(Error::Empty("discriminator batch"));
        }
        let mut g = Graph::new();
        let xr = g.constant(real.images.clone())?;
        let xf = g.constant(fake.images.clone())?;
        let dr = self.discriminator_forward(&mut g, disc, xr, real.labels.as_deref())?;
        let df = self.discriminator_forward(&mut g, disc, xf, fake.labels.as_deref())?;
        let neg = g.scale(dr, -1.0)?;
        let lr = g.softplus(neg)?;
        let lr = g.mean(lr)?;
        let lf = g.softplus(df)?;
        let lf = g.mean(lf)?;
        let loss = g.add(lr, lf)?;
        let grads = grad(&g, loss, disc)?;
        Ok((g.value(loss).item(), grads))
    }

    /// Non-saturating generator loss `mean softplus(-D(G(z)))` and its
    /// gradient with respect to the generator.
    pub fn gen_loss_and_grads(
        &self,
        gen: &ParamSet,
        disc: &ParamSet,
        latents: &Tensor,
        labels: Option<&[usize]>,
    ) -> Result<(f64, ParamSet)> {
        if latents.shape().first() == Some(&0) {
            return Err(Error::Empty("generator batch"));
        }
        let mut g = Graph::new();
        let x = self.generator_forward(&mut g, gen, latents, labels)?;
        let d = self.discriminator_forward(&mut g, disc, x, labels)?;
        let neg = g.scale(d, -1.0)?;
        let sp = g.softplus(neg)?;
        let loss = g.mean(sp)?;
        let grads = grad(&g, loss, gen)?;
        Ok((g.value(loss).item(), grads))
    }
}

pub fn sample_latents(rng: &mut Rng, batch: usize, z_dim: usize) -> Tensor {
    Tensor::new(vec![batch, z_dim], standard_normals(rng, batch * z_dim)).expect("latent shape")
}

pub fn sample_labels(rng: &mut Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// Latents plus labels drawn the way every caller in the crate draws them:
/// latents first, then labels (when conditional).
pub fn sample_conditioning(arch: &GanArch, rng: &mut Rng, batch: usize) -> (Tensor, Option<Vec<usize>>) {
    let z = sample_latents(rng, batch, arch.z_dim);
    let labels = arch.num_classes.map(|k| sample_labels(rng, batch, k));
    (z, labels)
}
