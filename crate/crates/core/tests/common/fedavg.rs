//! A deliberately naive federated-averaging GAN loop over flat parameter
//! vectors. It shares only the model maths and the seed contract with the
//! library; sampling, local training, averaging and both optimizers are
//! written out by hand here.

use fedgan::datasets::{ClientShard, LabeledImageSet};
use fedgan::federated::{FedSettings, FedState};
use fedgan::gan::{sample_conditioning, GanArch, LabeledBatch};
use fedgan::optim::AdamConfig;
use fedgan::privacy::PrivacySpec;
use fedgan::rng::{derive_seed, derived_rng, rng_from, stream};
use fedgan::{ParamSet, Tensor};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;

pub struct Toy {
    pub settings: FedSettings,
    pub shards: Vec<ClientShard>,
    pub root: u64,
}

/// Clients hold 5, 3, 4, 2, ... examples of a 3-class synthetic set.
pub fn toy(population: usize, per_round: usize, root: u64) -> Toy {
    let sizes: Vec<usize> = (0..population).map(|c| [5, 3, 4, 2][c % 4]).collect();
    let mut rng = rng_from(root ^ 0x70);
    let mut shards = Vec::new();
    let mut offset = 0;
    for (c, &n) in sizes.iter().enumerate() {
        let images = Tensor::from_fn(&[n, 1, 28, 28], |_| rng.random_range(0.0..1.0));
        let labels = (0..n).map(|i| (i + c) % 3).collect();
        shards.push(ClientShard {
            user_id: format!("u{c}"),
            data: Some(LabeledImageSet::new(images, labels, 3).unwrap()),
            rows: (offset..offset + n).collect(),
        });
        offset += n;
    }
    let adam = AdamConfig { lr: 2e-3, beta1: 0.5, beta2: 0.999, eps: 1e-8 };
    let settings = FedSettings {
        arch: GanArch { z_dim: 8, num_classes: Some(3) },
        privacy: PrivacySpec {
            clip_norm: f64::INFINITY,
            noise_multiplier: 0.0,
            clients_per_round: per_round,
            population,
            delta: 1e-5,
        },
        local_steps: None,
        client_batch: 2,
        fake_batch: None,
        gen_steps: 2,
        gen_batch: 4,
        disc_adam: adam,
        gen_adam: adam,
        denoise_broadcast: false,
    };
    Toy { settings, shards, root }
}

struct FlatAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl FlatAdam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], cfg: &AdamConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            x[i] -= cfg.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.eps);
        }
    }
}

/// Generator and discriminator after `rounds` noiseless, unclipped rounds.
pub fn naive_run(toy: &Toy, rounds: u64) -> (Vec<f64>, Vec<f64>) {
    let s = &toy.settings;
    let arch = s.arch;
    let (n_pop, m) = (s.privacy.population, s.privacy.clients_per_round);
    let start = FedState::new(s, toy.root).unwrap().models;
    let (gen_shape, disc_shape) = (start.generator.clone(), start.discriminator.clone());
    let as_gen = |flat: &[f64]| -> ParamSet { gen_shape.with_flat(flat).unwrap() };
    let as_disc = |flat: &[f64]| -> ParamSet { disc_shape.with_flat(flat).unwrap() };
    let mut gen = gen_shape.to_flat();
    let mut disc = disc_shape.to_flat();
    let mut gen_adam = FlatAdam::new(gen.len());

    for r in 0..rounds {
        let mut clients = index::sample(&mut derived_rng(toy.root, r, stream::CLIENT_SAMPLING), n_pop, m).into_vec();
        clients.sort_unstable();

        let mut fake_rng = derived_rng(toy.root, r, stream::FAKES);
        let mut sum: Option<Vec<f64>> = None;
        for &c in &clients {
            let (z, labels) = sample_conditioning(&arch, &mut fake_rng, s.client_batch);
            let fake_images = arch.generate(&as_gen(&gen), &z, labels.as_deref()).unwrap();

            let data = toy.shards[c].data.as_ref().unwrap();
            let n = data.len();
            let steps = n.div_ceil(s.client_batch).min(4);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from(derive_seed(toy.root, r, stream::CLIENT_BASE + c as u64)));
            let take = s.client_batch.min(n);
            let fake = LabeledBatch {
                images: fake_images.slice_rows(0, take).unwrap(),
                labels: labels.map(|l| l[..take].to_vec()),
            };

            let mut local = disc.clone();
            let mut opt = FlatAdam::new(local.len());
            for step in 0..steps {
                let rows: Vec<usize> = (0..take).map(|j| order[(step * take + j) % n]).collect();
                let real = LabeledBatch {
                    images: data.images().select_rows(&rows).unwrap(),
                    labels: Some(rows.iter().map(|&i| data.labels()[i]).collect()),
                };
                let (_, g) = arch.disc_loss_and_grads(&as_disc(&local), &real, &fake).unwrap();
                opt.step(&mut local, &g.to_flat(), &s.disc_adam);
            }
            let delta: Vec<f64> = local.iter().zip(&disc).map(|(a, b)| a - b).collect();
            sum = Some(match sum {
                None => delta,
                Some(acc) => acc.iter().zip(&delta).map(|(a, b)| a + b).collect(),
            });
        }
        let sum = sum.unwrap();
        for (d, s) in disc.iter_mut().zip(&sum) {
            *d += s / m as f64;
        }

        let mut gen_rng = derived_rng(toy.root, r, stream::GENERATOR);
        for _ in 0..s.gen_steps {
            let (z, labels) = sample_conditioning(&arch, &mut gen_rng, s.gen_batch);
            let (_, g) = arch.gen_loss_and_grads(&as_gen(&gen), &as_disc(&disc), &z, labels.as_deref()).unwrap();
            gen_adam.step(&mut gen, &g.to_flat(), &s.gen_adam);
        }
    }
    (gen, disc)
}
