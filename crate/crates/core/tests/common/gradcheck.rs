//! Central finite-difference checks shared by the gradcheck tests and the
//! acceptance harness.

use fedgan::autodiff::{grad, BoundParams, Graph, Var};
use fedgan::gan::{sample_conditioning, GanArch, LabeledBatch};
use fedgan::nn;
use fedgan::rng::{rng_from, standard_normals};
use fedgan::{ParamSet, Result, Tensor};
use rand::Rng as _;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Components smaller than this are compared absolutely.
const FLOOR: f64 = 1e-6;
/// Coordinates probed per tensor; small tensors are probed exhaustively.
const PROBES: usize = 24;

pub type Builder = dyn Fn(&mut Graph, &BoundParams) -> Result<Var>;

pub fn randn(shape: &[usize], rng: &mut fedgan::rng::Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), standard_normals(rng, n).into_iter().map(|v| v * scale).collect()).unwrap()
}

fn eval(params: &ParamSet, build: &Builder) -> f64 {
    let mut g = Graph::new();
    let p = g.register(params).unwrap();
    let loss = build(&mut g, &p).unwrap();
    g.value(loss).item()
}

/// Outcome of one finite-difference comparison.
#[derive(Clone, Copy, Debug, Default)]
pub struct Report {
    /// Largest relative error over smooth probes.
    pub worst: f64,
    pub checked: usize,
    /// Probes whose `[x - h, x + h]` interval straddles a ReLU kink.
    pub kinked: usize,
}

impl Report {
    /// Passes when every smooth probe is within tolerance and kinks are rare.
    pub fn passes(&self) -> bool {
        self.worst < TOLERANCE && self.checked > 0 && self.kinked * 5 <= self.checked
    }
}

/// Compares an analytic gradient against central differences of `loss`
/// over probed coordinates of every parameter. A probe whose central
/// differences at `h` and `h/2` disagree lies on a kink and is counted but
/// not compared; a wrong gradient shows up as agreement between the two
/// that disagrees with `analytic`.
pub fn fd_check(params: &ParamSet, loss: &dyn Fn(&ParamSet) -> f64, analytic: &ParamSet, seed: u64) -> Report {
    let mut rng = rng_from(seed ^ 0x9e37_79b9);
    let mut report = Report::default();
    for (ti, (name, t)) in params.iter().enumerate() {
        let coords: Vec<usize> = if t.len() <= PROBES {
            (0..t.len()).collect()
        } else {
            (0..PROBES).map(|_| rng.random_range(0..t.len())).collect()
        };
        for c in coords {
            let at = |delta: f64| {
                let mut entries = params.entries().to_vec();
                entries[ti].1.data_mut()[c] += delta;
                loss(&ParamSet::new(entries).unwrap())
            };
            let numeric = (at(H) - at(-H)) / (2.0 * H);
            let half = (at(H / 2.0) - at(-H / 2.0)) / H;
            let a = analytic.expect(name).unwrap().data()[c];
            let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(FLOOR);
            if rel(numeric, half) > TOLERANCE / 10.0 {
                report.kinked += 1;
                continue;
            }
            report.checked += 1;
            report.worst = report.worst.max(rel(a, numeric));
        }
    }
    report
}

pub fn check_graph(params: &ParamSet, build: &Builder, seed: u64) -> Report {
    let mut g = Graph::new();
    let p = g.register(params).unwrap();
    let loss = build(&mut g, &p).unwrap();
    let analytic = grad(&g, loss, params).unwrap();
    fd_check(params, &|ps| eval(ps, build), &analytic, seed)
}

fn pset(entries: Vec<(&str, Tensor)>) -> ParamSet {
    ParamSet::new(entries.into_iter().map(|(n, t)| (n.to_string(), t)).collect()).unwrap()
}

/// A weighted sum keeps every output component in the loss.
fn weighted(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let w = randn(&shape, &mut rng_from(seed.wrapping_add(17)), 1.0);
    let w = g.constant(w)?;
    let prod = g.mul(y, w)?;
    g.sum(prod)
}

pub struct Case {
    pub name: &'static str,
    pub check: fn(u64) -> Report,
}

fn dense_net(seed: u64) -> Report {
    let mut rng = rng_from(seed);
    let params = pset(vec![
        ("l1.w", randn(&[8, 6], &mut rng, 0.5)),
        ("l1.b", randn(&[6], &mut rng, 0.1)),
        ("l2.w", randn(&[6, 3], &mut rng, 0.5)),
        ("l2.b", randn(&[3], &mut rng, 0.1)),
    ]);
    let x = randn(&[4, 8], &mut rng, 1.0);
    check_graph(
        &params,
        &move |g, p| {
            let x = g.constant(x.clone())?;
            let h = nn::dense(g, p, "l1", x)?;
            let h = g.tanh(h)?;
            let y = nn::dense(g, p, "l2", h)?;
            weighted(g, y, seed)
        },
        seed,
    )
}

fn conv(seed: u64) -> Report {
    let mut rng = rng_from(seed);
    let (stride, padding) = (1 + (seed % 2) as usize, (seed % 3) as usize % 2);
    let params = pset(vec![
        ("c.w", randn(&[3, 2, 3, 3], &mut rng, 0.5)),
        ("c.b", randn(&[3], &mut rng, 0.1)),
        ("x", randn(&[2, 2, 6, 5], &mut rng, 1.0)),
    ]);
    check_graph(
        &params,
        &move |g, p| {
            let y = nn::conv(g, p, "c", p.get("x")?, stride, padding)?;
            weighted(g, y, seed)
        },
        seed,
    )
}

fn conv_transpose(seed: u64) -> Report {
    let mut rng = rng_from(seed);
    let (stride, padding) = (1 + (seed % 2) as usize, (seed % 2) as usize);
    let params = pset(vec![
        ("t.w", randn(&[2, 3, 4, 4], &mut rng, 0.5)),
        ("t.b", randn(&[3], &mut rng, 0.1)),
        ("x", randn(&[2, 2, 3, 4], &mut rng, 1.0)),
    ]);
    check_graph(
        &params,
        &move |g, p| {
            let y = nn::conv_t(g, p, "t", p.get("x")?, stride, padding)?;
            weighted(g, y, seed)
        },
        seed,
    )
}

fn activations(seed: u64) -> Report {
    let mut rng = rng_from(seed);
    let params = pset(vec![("x", randn(&[3, 5], &mut rng, 1.5)), ("y", randn(&[3, 5], &mut rng, 1.0))]);
    check_graph(
        &params,
        &move |g, p| {
            let (x, y) = (p.get("x")?, p.get("y")?);
            let xy = g.mul(x, y)?;
            let parts = [
                xy,
                g.relu(x)?,
                g.leaky_relu(x, nn::LEAKY_SLOPE)?,
                g.tanh(x)?,
                g.sigmoid(y)?,
                g.softplus(y)?,
                g.square(x)?,
            ];
            let mut total = g.constant(Tensor::scalar(0.0))?;
            for (i, v) in parts.into_iter().enumerate() {
                let s = weighted(g, v, seed + i as u64)?;
                total = g.add(total, s)?;
            }
            Ok(total)
        },
        seed,
    )
}

/// Shape plumbing: concat, reshape, bias broadcasts, affine scalars, mean.
fn plumbing(seed: u64) -> Report {
    let mut rng = rng_from(seed);
    let params = pset(vec![
        ("a", randn(&[2, 3], &mut rng, 1.0)),
        ("b", randn(&[2, 5], &mut rng, 1.0)),
        ("rb", randn(&[8], &mut rng, 1.0)),
        ("cb", randn(&[2], &mut rng, 1.0)),
    ]);
    check_graph(
        &params,
        &move |g, p| {
            let c = g.concat(&[p.get("a")?, p.get("b")?])?;
            let c = g.add_row_bias(c, p.get("rb")?)?;
            let c = g.reshape(c, &[1, 2, 2, 4])?;
            let c = g.add_channel_bias(c, p.get("cb")?)?;
            let c = g.add_scalar(c, 0.3)?;
            let c = g.scale(c, -1.7)?;
            let k = g.constant(randn(&[1, 2, 2, 4], &mut rng_from(seed + 5), 1.0))?;
            let d = g.sub(c, k)?;
            let sq = g.square(d)?;
            g.mean(sq)
        },
        seed,
    )
}

fn cross_entropy(seed: u64) -> Report {
    let mut rng = rng_from(seed);
    let params = pset(vec![("logits", randn(&[5, 4], &mut rng, 2.0))]);
    let labels: Vec<usize> = (0..5).map(|i| (i + seed as usize) % 4).collect();
    check_graph(&params, &move |g, p| g.softmax_cross_entropy(p.get("logits")?, &labels), seed)
}

fn mse_loss(seed: u64) -> Report {
    let mut rng = rng_from(seed);
    let params = pset(vec![("x", randn(&[2, 1, 4, 4], &mut rng, 1.0))]);
    let target = randn(&[2, 1, 4, 4], &mut rng, 1.0);
    check_graph(
        &params,
        &move |g, p| {
            let s = g.sigmoid(p.get("x")?)?;
            nn::mse(g, s, &target)
        },
        seed,
    )
}

const SMALL_Z: usize = 4;

fn gan_pair(seed: u64) -> (GanArch, fedgan::gan::GanModels) {
    let arch = GanArch { z_dim: SMALL_Z, num_classes: if seed.is_multiple_of(2) { Some(3) } else { None } };
    let mut models = arch.init(&mut rng_from(seed)).unwrap();
    // Zero biases put many pre-activations exactly on a ReLU kink; jitter
    // every weight so finite differences stay on one side of each kink.
    let mut rng = rng_from(seed + 99);
    for p in [&mut models.generator, &mut models.discriminator] {
        let flat: Vec<f64> = p.to_flat().iter().map(|v| v + 0.05 * standard_normals(&mut rng, 1)[0]).collect();
        *p = p.with_flat(&flat).unwrap();
    }
    (arch, models)
}

fn disc_loss(seed: u64) -> Report {
    let (arch, models) = gan_pair(seed);
    let mut rng = rng_from(seed + 1);
    let (z, labels) = sample_conditioning(&arch, &mut rng, 2);
    let fake = LabeledBatch {
        images: arch.generate(&models.generator, &z, labels.as_deref()).unwrap(),
        labels: labels.clone(),
    };
    let real = LabeledBatch {
        images: Tensor::from_fn(&[2, 1, 28, 28], |_| rng.random_range(0.0..1.0)),
        labels: labels.map(|l| l.iter().map(|x| (x + 1) % 3).collect()),
    };
    let (_, analytic) = arch.disc_loss_and_grads(&models.discriminator, &real, &fake).unwrap();
    let loss = |d: &ParamSet| arch.disc_loss_and_grads(d, &real, &fake).unwrap().0;
    fd_check(&models.discriminator, &loss, &analytic, seed)
}

fn gen_loss(seed: u64) -> Report {
    let (arch, models) = gan_pair(seed);
    let (z, labels) = sample_conditioning(&arch, &mut rng_from(seed + 2), 2);
    let disc = &models.discriminator;
    let (_, analytic) = arch.gen_loss_and_grads(&models.generator, disc, &z, labels.as_deref()).unwrap();
    let loss = |gen: &ParamSet| arch.gen_loss_and_grads(gen, disc, &z, labels.as_deref()).unwrap().0;
    fd_check(&models.generator, &loss, &analytic, seed)
}

pub fn cases() -> Vec<Case> {
    vec![
        Case { name: "dense+tanh", check: dense_net },
        Case { name: "conv2d", check: conv },
        Case { name: "conv_transpose2d", check: conv_transpose },
        Case { name: "activations", check: activations },
        Case { name: "concat/reshape/bias/mean", check: plumbing },
        Case { name: "softmax_cross_entropy", check: cross_entropy },
        Case { name: "mse+sigmoid", check: mse_loss },
        Case { name: "discriminator loss", check: disc_loss },
        Case { name: "generator loss", check: gen_loss },
    ]
}
