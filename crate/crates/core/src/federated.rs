//! DP-Fed-Avg GAN rounds: clients train the discriminator, the server
//! averages clipped, noised deltas and trains the generator.
//!
//! Randomness is drawn from counter-derived seeds so a run replays bit for
//! bit from `(config, seed)`:
//!
//! | use                          | seed                                              |
//! |------------------------------|---------------------------------------------------|
//! | partition                    | `derive_seed(seed, 0, PARTITION)`                 |
//! | model init                   | `derive_seed(seed, 0, INIT)`                      |
//! | client sampling in round `r` | `derive_seed(seed, r, CLIENT_SAMPLING)`           |
//! | broadcast fakes              | `derive_seed(seed, r, FAKES)`, clients in order   |
//! | client `c` local shuffle     | `derive_seed(seed, r, CLIENT_BASE + c)`           |
//! | aggregation noise            | `derive_seed(seed, r, AGGREGATION_NOISE)`         |
//! | generator batches            | `derive_seed(seed, r, GENERATOR)`, steps in order |
//! | evaluation latents           | `derive_seed(seed, 0, METRICS)`                   |
//! | sample grid latents          | `derive_seed(seed, 0, SAMPLE_GRID)`               |
//!
//! `r` is the zero-based index of the round being run.

use rand::seq::index;
use rand::seq::SliceRandom;

use crate::config::ExperimentConfig;
use crate::datasets::{partition_clients, ClientShard, LabeledImageSet};
use crate::denoiser::{denoise, train_autoencoder, Autoencoder, AutoencoderTraining};
use crate::error::{Error, Result};
use crate::gan::{sample_conditioning, GanArch, GanModels, LabeledBatch};
use crate::metrics::{accuracy_of, fid, generate_samples, ExtractorTraining, FeatureExtractor, RoundRecord};
use crate::optim::{Adam, AdamConfig};
use crate::privacy::{clip_l2, default_orders, noisy_mean, PrivacySpec, RdpAccountant};
use crate::rng::{derive_seed, derived_rng, rng_from, stream};
use crate::tensor::{ParamSet, Tensor};

/// Cap on automatic local steps per round.
pub const AUTO_LOCAL_STEP_CAP: usize = 4;

/// Tiles per side of a sample grid.
pub const GRID_SIDE: usize = 8;

/// Everything a round needs besides the state itself.
#[derive(Clone, Debug, PartialEq)]
pub struct FedSettings {
    pub arch: GanArch,
    pub privacy: PrivacySpec,
    /// `None`: one pass over the shard, capped at [`AUTO_LOCAL_STEP_CAP`].
    pub local_steps: Option<usize>,
    pub client_batch: usize,
    /// Fakes broadcast per client; `None` means `client_batch`.
    pub fake_batch: Option<usize>,
    pub gen_steps: usize,
    pub gen_batch: usize,
    pub disc_adam: AdamConfig,
    pub gen_adam: AdamConfig,
    /// Pass broadcast fakes through the autoencoder.
    pub denoise_broadcast: bool,
}

impl FedSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            arch: cfg.gan_arch(),
            privacy: cfg.privacy_spec(),
            local_steps: cfg.fed.local_steps,
            client_batch: cfg.fed.client_batch,
            fake_batch: cfg.fed.fake_batch,
            gen_steps: cfg.fed.gen_steps,
            gen_batch: cfg.fed.gen_batch,
            disc_adam: cfg.disc_adam(),
            gen_adam: cfg.gen_adam(),
            denoise_broadcast: cfg.denoise.enabled && cfg.denoise.apply_to_broadcast,
        }
    }

    pub fn local_steps_for(&self, shard_len: usize) -> usize {
        self.local_steps.unwrap_or_else(|| shard_len.div_ceil(self.client_batch.max(1)).min(AUTO_LOCAL_STEP_CAP))
    }

    fn fakes_per_client(&self) -> usize {
        self.fake_batch.unwrap_or(self.client_batch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FedState {
    /// Rounds completed so far.
    pub round: u64,
    pub models: GanModels,
    pub gen_opt: Adam,
    pub accountant: RdpAccountant,
    pub rng_root: u64,
    /// Generator loss of the most recent server step.
    pub last_gen_loss: Option<f64>,
}

impl FedState {
    pub fn new(settings: &FedSettings, rng_root: u64) -> Result<Self> {
        let models = settings.arch.init(&mut derived_rng(rng_root, 0, stream::INIT))?;
        let gen_opt = Adam::new(settings.gen_adam, &models.generator);
        let accountant = RdpAccountant::new(&settings.privacy, &default_orders())?;
        Ok(Self { round: 0, models, gen_opt, accountant, rng_root, last_gen_loss: None })
    }
}

/// Result of one client's local training.
#[derive(Clone, Debug, PartialEq)]
pub enum ClientOutcome {
    /// `trained - snapshot`.
    Delta(ParamSet),
    /// The client holds no data.
    Skipped,
}

/// Client-side discriminator training on real shard batches against the
/// broadcast fakes, with a fresh Adam state. Each step uses the next
/// `min(batch, |shard|)` rows of a seeded shuffle (wrapping around) and the
/// same number of fakes from the front of `fakes`.
#[allow(clippy::too_many_arguments)]
pub fn client_update(
    arch: &GanArch,
    disc_snapshot: &ParamSet,
    fakes: &LabeledBatch,
    shard: &ClientShard,
    local_steps: usize,
    batch: usize,
    adam: AdamConfig,
    seed: u64,
) -> Result<ClientOutcome> {
    let Some(data) = shard.data.as_ref() else {
        return Ok(ClientOutcome::Skipped);
    };
    if local_steps == 0 {
        return Ok(ClientOutcome::Delta(disc_snapshot.zeros_like()));
    }
    if batch == 0 {
        return Err(Error::invalid("client batch must be positive"));
    }
    if fakes.is_empty() {
        return Err(Error::Empty("broadcast fakes"));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let take = batch.min(n).min(fakes.len());
    let fake = fakes.truncate(take)?;
    let mut disc = disc_snapshot.clone();
    let mut opt = Adam::new(adam, &disc);
    for step in 0..local_steps {
        let rows: Vec<usize> = (0..take).map(|j| order[(step * take + j) % n]).collect();
        let real = LabeledBatch {
            images: data.images().select_rows(&rows)?,
            labels: arch.num_classes.map(|_| rows.iter().map(|&r| data.labels()[r]).collect()),
        };
        let (_, grads) = arch.disc_loss_and_grads(&disc, &real, &fake)?;
        disc = opt.step(&disc, &grads)?;
    }
    Ok(ClientOutcome::Delta(disc.sub(disc_snapshot)?))
}

/// Sorted indices of the clients taking part in round `round`.
pub fn sample_clients(rng_root: u64, round: u64, population: usize, m: usize) -> Result<Vec<usize>> {
    if m > population {
        return Err(Error::invalid(format!("cannot sample {m} of {population} clients")));
    }
    let mut picked =
        index::sample(&mut derived_rng(rng_root, round, stream::CLIENT_SAMPLING), population, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Runs one round and returns the next state. `pool` runs client updates
/// in parallel; results are combined in client-index order either way.
pub fn run_round(
    state: &FedState,
    shards: &[ClientShard],
    settings: &FedSettings,
    autoencoder: Option<&Autoencoder>,
    pool: Option<&rayon::ThreadPool>,
) -> Result<FedState> {
    let r = state.round;
    step_round(state, shards, settings, autoencoder, pool).map_err(|e| e.in_round(r + 1))
}

fn step_round(
    state: &FedState,
    shards: &[ClientShard],
    settings: &FedSettings,
    autoencoder: Option<&Autoencoder>,
    pool: Option<&rayon::ThreadPool>,
) -> Result<FedState> {
    let (root, r) = (state.rng_root, state.round);
    let arch = settings.arch;
    let spec = &settings.privacy;
    if shards.len() != spec.population {
        return Err(Error::invalid(format!("{} shards for a population of {}", shards.len(), spec.population)));
    }
    let denoiser = match (settings.denoise_broadcast, autoencoder) {
        (true, None) => return Err(Error::invalid("broadcast denoising is on but no autoencoder was given")),
        (true, Some(ae)) => Some(ae),
        (false, _) => None,
    };
    let gen = &state.models.generator;
    let disc = &state.models.discriminator;

    let clients = sample_clients(root, r, spec.population, spec.clients_per_round)?;

    let mut fake_rng = derived_rng(root, r, stream::FAKES);
    let mut broadcasts = Vec::with_capacity(clients.len());
    for _ in &clients {
        let (z, labels) = sample_conditioning(&arch, &mut fake_rng, settings.fakes_per_client());
        let mut images = arch.generate(gen, &z, labels.as_deref())?;
        if let Some(ae) = denoiser {
            images = denoise(ae, &images)?;
        }
        broadcasts.push(LabeledBatch { images, labels });
    }

    let work = |i: usize| -> Result<ParamSet> {
        let c = clients[i];
        let shard = &shards[c];
        let seed = derive_seed(root, r, stream::CLIENT_BASE + c as u64);
        let steps = settings.local_steps_for(shard.len());
        let outcome =
            client_update(&arch, disc, &broadcasts[i], shard, steps, settings.client_batch, settings.disc_adam, seed)?;
        let delta = match outcome {
            ClientOutcome::Delta(d) => d,
            ClientOutcome::Skipped => disc.zeros_like(),
        };
        clip_l2(&delta, spec.clip_norm)
    };
    let deltas: Vec<ParamSet> = match pool {
        Some(pool) => pool.install(|| {
            use rayon::prelude::*;
            (0..clients.len()).into_par_iter().map(work).collect::<Result<_>>()
        })?,
        None => (0..clients.len()).map(work).collect::<Result<_>>()?,
    };

    let avg = noisy_mean(&deltas, spec, derive_seed(root, r, stream::AGGREGATION_NOISE))?;
    let new_disc = disc.add(&avg)?;

    let mut gen_rng = derived_rng(root, r, stream::GENERATOR);
    let mut new_gen = gen.clone();
    let mut gen_opt = state.gen_opt.clone();
    let mut last_gen_loss = state.last_gen_loss;
    for _ in 0..settings.gen_steps {
        let (z, labels) = sample_conditioning(&arch, &mut gen_rng, settings.gen_batch);
        let (loss, grads) = arch.gen_loss_and_grads(&new_gen, &new_disc, &z, labels.as_deref())?;
        new_gen = gen_opt.step(&new_gen, &grads)?;
        last_gen_loss = Some(loss);
    }

    let mut accountant = state.accountant.clone();
    accountant.step();

    let models = GanModels { arch, generator: new_gen, discriminator: new_disc };
    for (name, t) in models.generator.iter().chain(models.discriminator.iter()) {
        if !t.is_finite() {
            return Err(Error::NonFinite { node: name.to_string() });
        }
    }
    Ok(FedState { round: r + 1, models, gen_opt, accountant, rng_root: root, last_gen_loss })
}

/// Training data plus the public real set used for evaluation assets.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub train: LabeledImageSet,
    pub public: LabeledImageSet,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let need = |p: &Option<std::path::PathBuf>, key: &str| {
            p.clone().ok_or_else(|| Error::config(key, "dataset path is required"))
        };
        let train = LabeledImageSet::load(
            &need(&cfg.data.train_images, "data.train_images")?,
            &need(&cfg.data.train_labels, "data.train_labels")?,
            cfg.data.num_classes,
        )?;
        let public = match (&cfg.data.public_images, &cfg.data.public_labels) {
            (Some(i), Some(l)) => LabeledImageSet::load(i, l, cfg.data.num_classes)?,
            (None, None) => train.clone(),
            _ => return Err(Error::config("data.public_labels", "set both public paths or neither")),
        };
        Ok(Self { train, public })
    }
}

/// Frozen evaluation assets shared by every round of a run.
#[derive(Clone, Debug)]
pub struct Assets {
    pub extractor: FeatureExtractor,
    /// Extractor features of the first `metrics.fid_real` training images.
    pub real_features: Tensor,
    pub autoencoder: Option<Autoencoder>,
}

impl Assets {
    /// Trains the extractor on the public set (accuracy measured on the
    /// training set) and, when denoising is on, trains or loads the
    /// autoencoder.
    pub fn prepare(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Self> {
        let training = ExtractorTraining { epochs: cfg.metrics.extractor_epochs, ..Default::default() };
        let extractor =
            FeatureExtractor::train_with_heldout(&data.public, &data.train, &training, cfg.metrics.extractor_seed)?;
        let autoencoder = if cfg.denoise.enabled { Some(load_or_train_autoencoder(cfg, &data.public)?) } else { None };
        Self::with_parts(cfg, data, extractor, autoencoder)
    }

    pub fn with_parts(
        cfg: &ExperimentConfig,
        data: &ExperimentData,
        extractor: FeatureExtractor,
        autoencoder: Option<Autoencoder>,
    ) -> Result<Self> {
        let n = cfg.metrics.fid_real.min(data.train.len());
        let real_features = extractor.features(&data.train.images().slice_rows(0, n)?)?;
        Ok(Self { extractor, real_features, autoencoder })
    }
}

pub fn load_or_train_autoencoder(cfg: &ExperimentConfig, public: &LabeledImageSet) -> Result<Autoencoder> {
    if let Some(path) = &cfg.denoise.model_path {
        return Autoencoder::load(path);
    }
    let training = AutoencoderTraining {
        epochs: cfg.denoise.epochs,
        batch: cfg.denoise.batch,
        adam: AdamConfig { lr: cfg.denoise.lr, ..AutoencoderTraining::default().adam },
    };
    train_autoencoder(public.images(), cfg.denoise.noise_level, &training, cfg.denoise.seed)
}

/// Receives run output as it is produced.
pub trait Observer {
    fn record(&mut self, _record: &RoundRecord) -> Result<()> {
        Ok(())
    }
    /// An `8×8` grid of samples, one image per tile, after `round` rounds.
    fn grid(&mut self, _round: u64, _images: &Tensor) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullObserver;

impl Observer for NullObserver {}

fn grid_conditioning(arch: &GanArch, seed: u64) -> (Tensor, Option<Vec<usize>>) {
    let n = GRID_SIDE * GRID_SIDE;
    let (z, _) =
        sample_conditioning(&GanArch { num_classes: None, ..*arch }, &mut derived_rng(seed, 0, stream::SAMPLE_GRID), n);
    (z, arch.num_classes.map(|k| (0..n).map(|i| i % k).collect()))
}

/// Loads data, prepares assets and runs every round.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundRecord>> {
    let data = ExperimentData::load(cfg)?;
    let assets = Assets::prepare(cfg, &data)?;
    run_experiment_with(cfg, &data, &assets, &mut NullObserver)
}

/// Runs `cfg.fed.rounds` rounds on prepared inputs, recording metrics every
/// `metrics.cadence` rounds and after the last round.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    assets: &Assets,
    observer: &mut dyn Observer,
) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    let settings = FedSettings::from_config(cfg);
    let autoencoder = if cfg.denoise.enabled {
        Some(
            assets
                .autoencoder
                .as_ref()
                .ok_or_else(|| Error::invalid("denoising is on but no autoencoder was prepared"))?,
        )
    } else {
        None
    };
    let eval_denoiser = autoencoder.filter(|_| cfg.denoise.apply_to_eval);
    let shards = partition_clients(
        &data.train,
        cfg.fed.num_clients,
        cfg.partition_scheme(),
        derive_seed(cfg.seed, 0, stream::PARTITION),
    )?;
    let pool = if cfg.fed.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.fed.workers)
                .build()
                .map_err(|e| Error::invalid(format!("worker pool: {e}")))?,
        )
    } else {
        None
    };

    let arch = settings.arch;
    let (eval_z, eval_labels) =
        sample_conditioning(&arch, &mut derived_rng(cfg.seed, 0, stream::METRICS), cfg.metrics.fid_fake);
    let (grid_z, grid_labels) = grid_conditioning(&arch, cfg.seed);
    let emit_grid = |state: &FedState, observer: &mut dyn Observer| -> Result<()> {
        let images = generate_samples(&arch, &state.models.generator, &grid_z, grid_labels.as_deref(), eval_denoiser)?;
        observer.grid(state.round, &images)
    };

    let mut state = FedState::new(&settings, cfg.seed)?;
    emit_grid(&state, observer)?;
    let mut records = Vec::new();
    let rounds = cfg.fed.rounds;
    while state.round < rounds {
        state = run_round(&state, &shards, &settings, autoencoder, pool.as_ref())?;
        let k = state.round;
        if k % cfg.metrics.cadence == 0 || k == rounds {
            let record =
                evaluate(&state, assets, &eval_z, eval_labels.as_deref(), eval_denoiser).map_err(|e| e.in_round(k))?;
            observer.record(&record)?;
            records.push(record);
        }
        if (cfg.metrics.grid_every > 0 && k % cfg.metrics.grid_every == 0) || k == rounds {
            emit_grid(&state, observer)?;
        }
    }
    Ok(records)
}

fn evaluate(
    state: &FedState,
    assets: &Assets,
    latents: &Tensor,
    labels: Option<&[usize]>,
    denoiser: Option<&Autoencoder>,
) -> Result<RoundRecord> {
    let arch = state.models.arch;
    let fakes = generate_samples(&arch, &state.models.generator, latents, labels, denoiser)?;
    let fake_features = assets.extractor.features(&fakes)?;
    let classifier_acc = match labels {
        Some(l) => accuracy_of(&assets.extractor.predict(&fakes)?, l),
        None => None,
    };
    Ok(RoundRecord {
        round: state.round,
        fid_proxy: fid(&assets.real_features, &fake_features)?,
        gen_loss: state.last_gen_loss.unwrap_or(f64::NAN),
        classifier_acc,
        epsilon: state.accountant.epsilon()?,
    })
}
