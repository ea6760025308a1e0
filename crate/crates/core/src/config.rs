//! Flat `key = value` experiment configuration with dotted section names.
//!
//! ```text
//! # comment
//! fed.rounds = 200
//! privacy.noise_multiplier = 0.01
//! ```
//!
//! Unknown keys are errors. [`ExperimentConfig::to_text`] writes every key,
//! so its output replays the exact same run.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datasets::PartitionScheme;
use crate::error::{Error, Result};
use crate::gan::GanArch;
use crate::optim::AdamConfig;
use crate::privacy::PrivacySpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionKind {
    Iid,
    LabelSkew,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    /// Public real data for the FID extractor and the autoencoder; falls back to the training set.
    pub public_images: Option<PathBuf>,
    pub public_labels: Option<PathBuf>,
    pub num_classes: usize,
    pub partition: PartitionKind,
    pub skew_alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FedConfig {
    pub num_clients: usize,
    pub rounds: u64,
    /// `None`: one pass over the shard, capped at [`crate::federated::AUTO_LOCAL_STEP_CAP`] batches.
    pub local_steps: Option<usize>,
    pub client_batch: usize,
    /// `None`: same as `client_batch`.
    pub fake_batch: Option<usize>,
    pub gen_steps: usize,
    pub gen_batch: usize,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub clients_per_round: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub z_dim: usize,
    pub conditional: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub disc_lr: f64,
    pub gen_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiseConfig {
    pub enabled: bool,
    pub apply_to_broadcast: bool,
    pub apply_to_eval: bool,
    pub noise_level: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Load a trained model instead of training one.
    pub model_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsConfig {
    pub cadence: u64,
    pub fid_real: usize,
    pub fid_fake: usize,
    pub extractor_epochs: usize,
    pub extractor_seed: u64,
    pub grid_every: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub fed: FedConfig,
    pub privacy: PrivacyConfig,
    pub gan: GanConfig,
    pub optim: OptimConfig,
    pub denoise: DenoiseConfig,
    pub metrics: MetricsConfig,
}

/// Presets reproducing the three compared configurations, plus `full`
/// for the 1000-round schedule.
pub const PRESETS: &[&str] = &["nodp", "dp", "dp_denoise", "full"];

/// Default noise multiplier.
pub const DEFAULT_NOISE_MULTIPLIER: f64 = 0.01;
/// Noise multiplier of the `dp` and `dp_denoise` presets. Large enough that
/// the noise visibly costs sample quality at fixture scale.
pub const DP_PRESET_NOISE_MULTIPLIER: f64 = 0.5;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            data: DataConfig {
                train_images: None,
                train_labels: None,
                public_images: None,
                public_labels: None,
                num_classes: 10,
                partition: PartitionKind::Iid,
                skew_alpha: 0.5,
            },
            fed: FedConfig {
                num_clients: 3000,
                rounds: 200,
                local_steps: None,
                client_batch: 16,
                fake_batch: None,
                gen_steps: 2,
                gen_batch: 64,
                workers: 1,
            },
            privacy: PrivacyConfig {
                clip_norm: 0.1,
                noise_multiplier: DEFAULT_NOISE_MULTIPLIER,
                clients_per_round: 10,
                delta: 1e-5,
            },
            gan: GanConfig { z_dim: 64, conditional: true },
            optim: OptimConfig { disc_lr: 2e-3, gen_lr: 2e-3, beta1: 0.5, beta2: 0.999, eps: 1e-8 },
            denoise: DenoiseConfig {
                enabled: false,
                apply_to_broadcast: true,
                apply_to_eval: true,
                noise_level: 0.2,
                epochs: 20,
                batch: 32,
                lr: 2e-3,
                seed: 4321,
                model_path: None,
            },
            metrics: MetricsConfig {
                cadence: 10,
                fid_real: 1024,
                fid_fake: 1024,
                extractor_epochs: 8,
                extractor_seed: 1234,
                grid_every: 100,
            },
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(key: &str, s: &str) -> Result<Self>;
    fn render(&self) -> String;
}

fn parse_with<T: FromStr>(key: &str, s: &str, what: &str) -> Result<T>
where
    T::Err: Display,
{
    s.parse().map_err(|e| Error::config(key, format!("expected {what}, got `{s}` ({e})")))
}

macro_rules! plain_value {
    ($($t:ty => $what:literal),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(key: &str, s: &str) -> Result<Self> {
                parse_with(key, s, $what)
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(f64 => "a number", u64 => "a non-negative integer", usize => "a non-negative integer", bool => "true or false");

impl ConfigValue for Option<usize> {
    fn parse_value(key: &str, s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(None)
        } else {
            parse_with(key, s, "`auto` or a non-negative integer").map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| v.to_string())
    }
}

impl ConfigValue for Option<PathBuf> {
    fn parse_value(_key: &str, s: &str) -> Result<Self> {
        Ok(if s.is_empty() { None } else { Some(PathBuf::from(s)) })
    }
    fn render(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

impl ConfigValue for PartitionKind {
    fn parse_value(key: &str, s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(PartitionKind::Iid),
            "label_skew" => Ok(PartitionKind::LabelSkew),
            _ => Err(Error::config(key, format!("expected `iid` or `label_skew`, got `{s}`"))),
        }
    }
    fn render(&self) -> String {
        match self {
            PartitionKind::Iid => "iid".into(),
            PartitionKind::LabelSkew => "label_skew".into(),
        }
    }
}

macro_rules! config_fields {
    ($($key:literal => $($field:ident).+ : $t:ty),* $(,)?) => {
        impl ExperimentConfig {
            /// Sets one dotted key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => self.$($field).+ = <$t as ConfigValue>::parse_value(key, value)?,)*
                    _ => return Err(Error::config(key, "unknown key")),
                }
                Ok(())
            }

            /// Every key with its current value, in a fixed order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, <$t as ConfigValue>::render(&self.$($field).+)),)*]
            }
        }
    };
}

config_fields! {
    "seed" => seed: u64,
    "data.train_images" => data.train_images: Option<PathBuf>,
    "data.train_labels" => data.train_labels: Option<PathBuf>,
    "data.public_images" => data.public_images: Option<PathBuf>,
    "data.public_labels" => data.public_labels: Option<PathBuf>,
    "data.num_classes" => data.num_classes: usize,
    "data.partition" => data.partition: PartitionKind,
    "data.skew_alpha" => data.skew_alpha: f64,
    "fed.num_clients" => fed.num_clients: usize,
    "fed.rounds" => fed.rounds: u64,
    "fed.local_steps" => fed.local_steps: Option<usize>,
    "fed.client_batch" => fed.client_batch: usize,
    "fed.fake_batch" => fed.fake_batch: Option<usize>,
    "fed.gen_steps" => fed.gen_steps: usize,
    "fed.gen_batch" => fed.gen_batch: usize,
    "fed.workers" => fed.workers: usize,
    "privacy.clip_norm" => privacy.clip_norm: f64,
    "privacy.noise_multiplier" => privacy.noise_multiplier: f64,
    "privacy.clients_per_round" => privacy.clients_per_round: usize,
    "privacy.delta" => privacy.delta: f64,
    "gan.z_dim" => gan.z_dim: usize,
    "gan.conditional" => gan.conditional: bool,
    "optim.disc_lr" => optim.disc_lr: f64,
    "optim.gen_lr" => optim.gen_lr: f64,
    "optim.beta1" => optim.beta1: f64,
    "optim.beta2" => optim.beta2: f64,
    "optim.eps" => optim.eps: f64,
    "denoise.enabled" => denoise.enabled: bool,
    "denoise.apply_to_broadcast" => denoise.apply_to_broadcast: bool,
    "denoise.apply_to_eval" => denoise.apply_to_eval: bool,
    "denoise.noise_level" => denoise.noise_level: f64,
    "denoise.epochs" => denoise.epochs: usize,
    "denoise.batch" => denoise.batch: usize,
    "denoise.lr" => denoise.lr: f64,
    "denoise.seed" => denoise.seed: u64,
    "denoise.model_path" => denoise.model_path: Option<PathBuf>,
    "metrics.cadence" => metrics.cadence: u64,
    "metrics.fid_real" => metrics.fid_real: usize,
    "metrics.fid_fake" => metrics.fid_fake: usize,
    "metrics.extractor_epochs" => metrics.extractor_epochs: usize,
    "metrics.extractor_seed" => metrics.extractor_seed: u64,
    "metrics.grid_every" => metrics.grid_every: u64,
}

impl ExperimentConfig {
    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
        self.apply_text(&text)
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::config(kv, "override must look like key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        match name {
            "nodp" => {
                self.privacy.noise_multiplier = 0.0;
                self.privacy.clip_norm = f64::INFINITY;
                self.denoise.enabled = false;
            }
            "dp" => {
                self.privacy.noise_multiplier = DP_PRESET_NOISE_MULTIPLIER;
                self.privacy.clip_norm = 0.1;
                self.denoise.enabled = false;
            }
            "dp_denoise" => {
                self.apply_preset("dp")?;
                self.denoise.enabled = true;
                self.denoise.noise_level = 0.2;
            }
            "full" => self.fed.rounds = 1000,
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive =
            |field: &str, v: usize| if v == 0 { Err(Error::config(field, "must be positive")) } else { Ok(()) };
        positive("data.num_classes", self.data.num_classes)?;
        positive("fed.num_clients", self.fed.num_clients)?;
        positive("fed.client_batch", self.fed.client_batch)?;
        positive("fed.gen_batch", self.fed.gen_batch)?;
        positive("fed.workers", self.fed.workers)?;
        positive("privacy.clients_per_round", self.privacy.clients_per_round)?;
        positive("gan.z_dim", self.gan.z_dim)?;
        positive("denoise.batch", self.denoise.batch)?;
        if self.fed.fake_batch == Some(0) {
            return Err(Error::config("fed.fake_batch", "must be positive or `auto`"));
        }
        if self.privacy.clients_per_round > self.fed.num_clients {
            return Err(Error::config(
                "privacy.clients_per_round",
                format!("{} exceeds fed.num_clients = {}", self.privacy.clients_per_round, self.fed.num_clients),
            ));
        }
        if self.data.num_classes > 256 {
            return Err(Error::config("data.num_classes", "IDX labels hold at most 256 classes"));
        }
        if !(self.data.skew_alpha > 0.0 && self.data.skew_alpha.is_finite()) {
            return Err(Error::config("data.skew_alpha", "must be a positive number"));
        }
        if !(self.privacy.clip_norm > 0.0) {
            return Err(Error::config("privacy.clip_norm", "must be positive (inf disables clipping)"));
        }
        if !(self.privacy.noise_multiplier >= 0.0 && self.privacy.noise_multiplier.is_finite()) {
            return Err(Error::config("privacy.noise_multiplier", "must be a finite number >= 0"));
        }
        if self.privacy.noise_multiplier > 0.0 && self.privacy.clip_norm.is_infinite() {
            return Err(Error::config("privacy.clip_norm", "must be finite when noise is on"));
        }
        if !(self.privacy.delta > 0.0 && self.privacy.delta < 1.0) {
            return Err(Error::config("privacy.delta", "must be in (0, 1)"));
        }
        for (field, lr) in [
            ("optim.disc_lr", self.optim.disc_lr),
            ("optim.gen_lr", self.optim.gen_lr),
            ("denoise.lr", self.denoise.lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(field, "must be a positive number"));
            }
        }
        for (field, b) in [("optim.beta1", self.optim.beta1), ("optim.beta2", self.optim.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(field, "must be in [0, 1)"));
            }
        }
        if !(self.optim.eps >= 0.0) {
            return Err(Error::config("optim.eps", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.denoise.noise_level) {
            return Err(Error::config("denoise.noise_level", "must be in [0, 1]"));
        }
        if self.metrics.cadence == 0 {
            return Err(Error::config("metrics.cadence", "must be positive"));
        }
        if self.metrics.fid_real < 2 || self.metrics.fid_fake < 2 {
            return Err(Error::config("metrics.fid_real", "FID needs at least 2 real and 2 fake samples"));
        }
        Ok(())
    }

    pub fn privacy_spec(&self) -> PrivacySpec {
        PrivacySpec {
            clip_norm: self.privacy.clip_norm,
            noise_multiplier: self.privacy.noise_multiplier,
            clients_per_round: self.privacy.clients_per_round,
            population: self.fed.num_clients,
            delta: self.privacy.delta,
        }
    }

    pub fn gan_arch(&self) -> GanArch {
        GanArch { z_dim: self.gan.z_dim, num_classes: self.gan.conditional.then_some(self.data.num_classes) }
    }

    pub fn partition_scheme(&self) -> PartitionScheme {
        match self.data.partition {
            PartitionKind::Iid => PartitionScheme::UniformIid,
            PartitionKind::LabelSkew => PartitionScheme::LabelSkew { alpha: self.data.skew_alpha },
        }
    }

    pub fn disc_adam(&self) -> AdamConfig {
        AdamConfig { lr: self.optim.disc_lr, beta1: self.optim.beta1, beta2: self.optim.beta2, eps: self.optim.eps }
    }

    pub fn gen_adam(&self) -> AdamConfig {
        AdamConfig { lr: self.optim.gen_lr, ..self.disc_adam() }
    }
}
