//! User-level DP: per-client L2 clipping, the trusted-server Gaussian
//! mechanism, and an RDP accountant for the sampled Gaussian mechanism.
//!
//! Client sampling in the simulator is fixed-size without replacement; the
//! accountant treats it as Poisson sampling with `q = m / N`, the usual
//! approximation.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacySpec {
    /// L2 bound `C` on each client's delta; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
    /// Noise std divided by sensitivity.
    pub noise_multiplier: f64,
    pub clients_per_round: usize,
    pub population: usize,
    pub delta: f64,
}

impl Default for PrivacySpec {
    fn default() -> Self {
        Self { clip_norm: 1.0, noise_multiplier: 0.01, clients_per_round: 10, population: 3000, delta: 1e-5 }
    }
}

impl PrivacySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(Error::invalid(format!("noise multiplier must be >= 0, got {}", self.noise_multiplier)));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.population {
            return Err(Error::invalid(format!(
                "clients per round {} must be in 1..={}",
                self.clients_per_round, self.population
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    pub fn sampling_rate(&self) -> f64 {
        self.clients_per_round as f64 / self.population as f64
    }

    /// Per-coordinate std of the noise added to the mean: `z · C / m`.
    pub fn noise_std(&self) -> f64 {
        if self.noise_multiplier == 0.0 {
            0.0
        } else {
            self.noise_multiplier * self.clip_norm / self.clients_per_round as f64
        }
    }
}

/// Scales `delta` onto the L2 ball of radius `clip_norm`.
pub fn clip_l2(delta: &ParamSet, clip_norm: f64) -> Result<ParamSet> {
    if !(clip_norm > 0.0) {
        return Err(Error::invalid(format!("clip norm must be positive, got {clip_norm}")));
    }
    let norm = delta.l2_norm();
    if norm <= clip_norm {
        return Ok(delta.clone());
    }
    Ok(delta.scale(clip_norm / norm))
}

/// `(Σ deltas) / m + N(0, (z·C/m)²)` per coordinate.
///
/// Deltas are summed in slice order so a replay is bit-exact.
pub fn noisy_mean(deltas: &[ParamSet], spec: &PrivacySpec, seed: u64) -> Result<ParamSet> {
    let first = deltas.first().ok_or(Error::Empty("noisy_mean deltas"))?;
    if deltas.len() != spec.clients_per_round {
        return Err(Error::invalid(format!(
            "{} deltas for {} clients per round",
            deltas.len(),
            spec.clients_per_round
        )));
    }
    let mut sum = first.clone();
    for d in &deltas[1..] {
        sum = sum.add(d)?;
    }
    let m = deltas.len() as f64;
    let mean = sum.map(|x| x / m);
    let std = spec.noise_std();
    if std == 0.0 {
        return Ok(mean);
    }
    if !std.is_finite() {
        return Err(Error::invalid("noise std is infinite; set a finite clip norm when noise is on"));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng_from(seed);
    let noise: Vec<f64> = (0..mean.flat_len()).map(|_| normal.sample(&mut rng)).collect();
    let flat: Vec<f64> = mean.to_flat().iter().zip(noise).map(|(x, n)| x + n).collect();
    mean.with_flat(&flat)
}

/// RDP values `ε(α)` on a grid of orders.
#[derive(Clone, Debug, PartialEq)]
pub struct RdpCurve {
    pub orders: Vec<f64>,
    pub values: Vec<f64>,
}

impl RdpCurve {
    /// Pointwise sum (sequential composition).
    pub fn compose(&self, other: &RdpCurve) -> Result<RdpCurve> {
        if self.orders != other.orders {
            return Err(Error::invalid("composing RDP curves over different orders"));
        }
        Ok(RdpCurve {
            orders: self.orders.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scaled(&self, rounds: u64) -> RdpCurve {
        RdpCurve { orders: self.orders.clone(), values: self.values.iter().map(|v| v * rounds as f64).collect() }
    }
}

/// Integers `2..=64` plus 128, 256, 512.
pub fn default_orders() -> Vec<f64> {
    (2..=64).map(f64::from).chain([128.0, 256.0, 512.0]).collect()
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `log A_α` for integer α via the binomial expansion
/// `Σ_k C(α,k) (1-q)^(α-k) q^k exp((k² - k) / (2z²))`, summed in log space.
fn log_a_integer(q: f64, z: f64, alpha: u64) -> f64 {
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let mut acc = f64::NEG_INFINITY;
    for k in 0..=alpha {
        let kf = k as f64;
        let term = ln_binomial(alpha, k) + kf * ln_q + (alpha - k) as f64 * ln_1mq + (kf * kf - kf) / (2.0 * z * z);
        acc = log_add(acc, term);
    }
    acc
}

/// RDP of the Poisson-subsampled Gaussian mechanism with sampling rate `q`
/// and noise multiplier `z`, at each order.
pub fn rdp_subsampled_gaussian(q: f64, z: f64, orders: &[f64]) -> Result<RdpCurve> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("sampling rate {q} outside (0, 1]")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::invalid(format!("noise multiplier must be positive, got {z}")));
    }
    let mut values = Vec::with_capacity(orders.len());
    for &alpha in orders {
        if !(alpha > 1.0) {
            return Err(Error::invalid(format!("RDP order must exceed 1, got {alpha}")));
        }
        let v = if q == 1.0 {
            alpha / (2.0 * z * z)
        } else {
            if alpha.fract() != 0.0 || alpha > u32::MAX as f64 {
                return Err(Error::invalid(format!("subsampled bound needs integer orders, got {alpha}")));
            }
            (log_a_integer(q, z, alpha as u64) / (alpha - 1.0)).max(0.0)
        };
        values.push(v);
    }
    Ok(RdpCurve { orders: orders.to_vec(), values })
}

/// Converts `rounds` compositions of `curve` to `(ε, best α)` at `δ`:
/// `min_α rounds·ε(α) + ln(1/δ)/(α - 1)`.
pub fn epsilon(curve: &RdpCurve, rounds: u64, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    if curve.orders.is_empty() || curve.orders.len() != curve.values.len() {
        return Err(Error::invalid("RDP curve is empty or ragged"));
    }
    if rounds == 0 {
        return Ok((0.0, f64::INFINITY));
    }
    let log_inv_delta = -delta.ln();
    let mut best = (f64::INFINITY, curve.orders[0]);
    for (&alpha, &v) in curve.orders.iter().zip(&curve.values) {
        let eps = rounds as f64 * v + log_inv_delta / (alpha - 1.0);
        if eps < best.0 {
            best = (eps, alpha);
        }
    }
    Ok(best)
}

/// Running accountant for a fixed [`PrivacySpec`]; advances once per round.
///
/// Its inputs are only `(q, z, rounds, δ)`, so nothing downstream of the
/// mechanism (such as the denoising stage) can change the reported ε.
#[derive(Clone, Debug, PartialEq)]
pub struct RdpAccountant {
    per_round: Option<RdpCurve>,
    delta: f64,
    rounds: u64,
}

impl RdpAccountant {
    pub fn new(spec: &PrivacySpec, orders: &[f64]) -> Result<Self> {
        spec.validate()?;
        let per_round = if spec.noise_multiplier > 0.0 {
            Some(rdp_subsampled_gaussian(spec.sampling_rate(), spec.noise_multiplier, orders)?)
        } else {
            None
        };
        Ok(Self { per_round, delta: spec.delta, rounds: 0 })
    }

    pub fn step(&mut self) {
        self.rounds += 1;
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Current ε; infinite once a noiseless round has run.
    pub fn epsilon(&self) -> Result<f64> {
        match &self.per_round {
            _ if self.rounds == 0 => Ok(0.0),
            None => Ok(f64::INFINITY),
            Some(curve) => epsilon(curve, self.rounds, self.delta).map(|(e, _)| e),
        }
    }
}
