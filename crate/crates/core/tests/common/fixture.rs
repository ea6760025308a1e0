//! Configs over the bundled digit fixture.

use fedgan::config::ExperimentConfig;

pub fn path(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Training and public sets from the fixture, 32 clients, 512-image FID.
pub fn config(preset: &str, rounds: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.apply_preset(preset).unwrap();
    for (k, v) in [
        ("data.train_images", path("digits-train-images-idx3-ubyte")),
        ("data.train_labels", path("digits-train-labels-idx1-ubyte")),
        ("data.public_images", path("digits-heldout-images-idx3-ubyte")),
        ("data.public_labels", path("digits-heldout-labels-idx1-ubyte")),
        ("fed.num_clients", "32".into()),
        ("fed.rounds", rounds.to_string()),
        ("metrics.fid_real", "512".into()),
        ("metrics.fid_fake", "512".into()),
    ] {
        c.set(k, &v).unwrap();
    }
    c
}

/// A fast variant for plumbing tests: short runs, small FID sets, cheap
/// extractor and autoencoder.
pub fn quick(preset: &str, rounds: u64) -> ExperimentConfig {
    let mut c = config(preset, rounds);
    for (k, v) in [
        ("metrics.cadence", "2"),
        ("metrics.fid_real", "128"),
        ("metrics.fid_fake", "128"),
        ("metrics.extractor_epochs", "1"),
        ("metrics.grid_every", "3"),
        ("denoise.epochs", "1"),
    ] {
        c.set(k, v).unwrap();
    }
    c
}
