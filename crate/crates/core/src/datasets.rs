//! IDX image/label files, federated partitioning and pixel noise.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng::{rng_from, standard_normals};
use crate::tensor::Tensor;

/// Images `[n, 1, 28, 28]` with pixels in `[0, 1]` and their class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledImageSet {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let s = images.shape();
        if s.len() != 4 || s[1] != 1 {
            return Err(Error::invalid(format!("images must be [n, 1, h, w], got {s:?}")));
        }
        if s[0] == 0 {
            return Err(Error::Empty("image set"));
        }
        if labels.len() != s[0] {
            return Err(Error::invalid(format!("{} labels for {} images", labels.len(), s[0])));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!("label {l} outside 0..{num_classes}")));
        }
        if images.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("pixel outside [0, 1]"));
        }
        Ok(Self { images, labels, num_classes })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Subset by row index; `None` when `rows` is empty.
    pub fn subset(&self, rows: &[usize]) -> Result<Option<Self>> {
        if rows.is_empty() {
            return Ok(None);
        }
        Ok(Some(Self {
            images: self.images.select_rows(rows)?,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            num_classes: self.num_classes,
        }))
    }

    /// Splits into the first `n` rows and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self)> {
        if n == 0 || n >= self.len() {
            return Err(Error::invalid(format!("cannot split {} rows at {n}", self.len())));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.subset(&head)?.unwrap(), self.subset(&tail)?.unwrap()))
    }

    /// Reads an IDX image file and its IDX label file.
    pub fn load(images: &Path, labels: &Path, num_classes: usize) -> Result<Self> {
        let img = parse_idx_raw(&std::fs::read(images)?)?;
        let lab = parse_idx_raw(&std::fs::read(labels)?)?;
        if img.shape.len() != 3 {
            return Err(Error::invalid(format!("{}: expected [n, h, w], got {:?}", images.display(), img.shape)));
        }
        if lab.shape.len() != 1 {
            return Err(Error::invalid(format!("{}: expected [n], got {:?}", labels.display(), lab.shape)));
        }
        let shape = [img.shape[0], 1, img.shape[1], img.shape[2]];
        let tensor = img.into_tensor().reshape(&shape)?;
        Self::new(tensor, lab.data.iter().map(|&b| b as usize).collect(), num_classes)
    }
}

/// Raw IDX payload before normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Pixels mapped to `[0, 1]` by `/255`.
    pub fn into_tensor(self) -> Tensor {
        let data = self.data.iter().map(|&b| b as f64 / 255.0).collect();
        Tensor::new(self.shape, data).expect("idx shape matches payload")
    }
}

const IDX_UBYTE: u8 = 0x08;

/// Parses an unsigned-byte IDX container.
pub fn parse_idx_raw(bytes: &[u8]) -> Result<IdxArray> {
    let err = |offset, msg: &str| Error::Parse { offset, msg: msg.to_string() };
    if bytes.len() < 4 {
        return Err(err(bytes.len(), "truncated header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(err(0, "magic must start with two zero bytes"));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(err(2, &format!("unsupported dtype 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(err(3, "ndim must be positive"));
    }
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let at = 4 + 4 * i;
        let dim = bytes.get(at..at + 4).ok_or_else(|| err(bytes.len(), "truncated dimension table"))?;
        shape.push(u32::from_be_bytes(dim.try_into().unwrap()) as usize);
    }
    let start = 4 + 4 * ndim;
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| err(4, "dimension product overflows"))?;
    let payload = &bytes[start..];
    if payload.len() < len {
        return Err(err(bytes.len(), &format!("truncated payload: need {len} bytes, have {}", payload.len())));
    }
    if payload.len() > len {
        return Err(err(start + len, "trailing bytes after payload"));
    }
    Ok(IdxArray { shape, data: payload.to_vec() })
}

/// Parses an unsigned-byte IDX container into a `[0, 1]` tensor.
pub fn parse_idx(bytes: &[u8]) -> Result<Tensor> {
    parse_idx_raw(bytes).map(IdxArray::into_tensor)
}

/// Writes a tensor of `[0, 1]` values as unsigned-byte IDX (`round(255·x)`).
pub fn serialize_idx(t: &Tensor) -> Result<Vec<u8>> {
    if t.ndim() == 0 || t.ndim() > 255 {
        return Err(Error::invalid("idx supports 1..=255 dimensions"));
    }
    let mut out = vec![0, 0, IDX_UBYTE, t.ndim() as u8];
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::invalid("dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    for &x in t.data() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid(format!("value {x} outside [0, 1]")));
        }
        out.push((x * 255.0).round() as u8);
    }
    Ok(out)
}

/// Writes raw class ids as a 1-D IDX label file.
pub fn serialize_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = vec![0, 0, IDX_UBYTE, 1];
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::invalid("label exceeds 255"))?);
    }
    Ok(out)
}

/// One simulated user's private data.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientShard {
    pub user_id: String,
    /// `None` for a user that received no examples.
    pub data: Option<LabeledImageSet>,
    /// Row indices into the source set.
    pub rows: Vec<usize>,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Empties every shard the predicate rejects. Indices stay stable, so a
/// filtered user is still sampled but contributes nothing.
pub fn retain_clients<F>(shards: &mut [ClientShard], mut keep: F)
where
    F: FnMut(&ClientShard) -> bool,
{
    for shard in shards.iter_mut() {
        if !keep(shard) {
            shard.data = None;
            shard.rows.clear();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PartitionScheme {
    UniformIid,
    /// Dirichlet label skew; small `alpha` concentrates each user on few classes.
    LabelSkew {
        alpha: f64,
    },
}

/// Splits `set` into `n_clients` disjoint shards that cover it.
pub fn partition_clients(
    set: &LabeledImageSet,
    n_clients: usize,
    scheme: PartitionScheme,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    if n_clients == 0 {
        return Err(Error::invalid("n_clients must be positive"));
    }
    if n_clients > set.len() {
        return Err(Error::invalid(format!("{n_clients} clients for {} examples", set.len())));
    }
    let mut rng = rng_from(seed);
    let assignment: Vec<Vec<usize>> = match scheme {
        PartitionScheme::UniformIid => {
            let mut idx: Vec<usize> = (0..set.len()).collect();
            idx.shuffle(&mut rng);
            let (base, extra) = (set.len() / n_clients, set.len() % n_clients);
            let mut out = Vec::with_capacity(n_clients);
            let mut offset = 0;
            for c in 0..n_clients {
                let size = base + usize::from(c < extra);
                out.push(idx[offset..offset + size].to_vec());
                offset += size;
            }
            out
        }
        PartitionScheme::LabelSkew { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::invalid(format!("label skew alpha must be positive, got {alpha}")));
            }
            label_skew(set, n_clients, alpha, &mut rng)?
        }
    };
    assignment
        .into_iter()
        .enumerate()
        .map(|(c, mut rows)| {
            rows.sort_unstable();
            Ok(ClientShard { user_id: format!("user-{c:05}"), data: set.subset(&rows)?, rows })
        })
        .collect()
}

/// Each user draws class proportions from `Dir(alpha · p)` with `p` the
/// uniform class prior, so every component has concentration `alpha / k`,
/// and fills an equal quota from the class pools. A shortfall is taken from
/// the fullest remaining pool, one pool at a time.
fn label_skew(
    set: &LabeledImageSet,
    n_clients: usize,
    alpha: f64,
    rng: &mut crate::rng::Rng,
) -> Result<Vec<Vec<usize>>> {
    let k = set.num_classes();
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in set.labels().iter().enumerate() {
        pools[l].push(i);
    }
    for p in &mut pools {
        p.shuffle(rng);
    }
    let gamma = Gamma::new(alpha / k as f64, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let (base, extra) = (set.len() / n_clients, set.len() % n_clients);
    let mut out = Vec::with_capacity(n_clients);
    for c in 0..n_clients {
        let quota = base + usize::from(c < extra);
        let mut weights: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            weights = vec![1.0 / k as f64; k];
        }
        let mut rows = Vec::with_capacity(quota);
        // Largest-remainder rounding of quota · weights.
        let raw: Vec<f64> = weights.iter().map(|w| w * quota as f64).collect();
        let mut want: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
        let mut short = quota - want.iter().sum::<usize>();
        for &cls in order.iter().cycle().take(k * 2) {
            if short == 0 {
                break;
            }
            want[cls] += 1;
            short -= 1;
        }
        for cls in 0..k {
            let take = want[cls].min(pools[cls].len());
            rows.extend(pools[cls].drain(..take));
        }
        while rows.len() < quota {
            let fullest = (0..k).max_by_key(|&cls| (pools[cls].len(), std::cmp::Reverse(cls))).unwrap();
            if pools[fullest].is_empty() {
                break;
            }
            let take = (quota - rows.len()).min(pools[fullest].len());
            rows.extend(pools[fullest].drain(..take));
        }
        out.push(rows);
    }
    Ok(out)
}

/// The raw Gaussian noise field `level · N(0, 1)` used by [`add_pixel_noise`].
pub fn pixel_noise_field(len: usize, level: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    standard_normals(&mut rng, len).into_iter().map(|z| level * z).collect()
}

/// `clamp(images + level · N(0, 1), 0, 1)` per pixel.
pub fn add_pixel_noise(images: &Tensor, level: f64, seed: u64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::invalid(format!("noise level {level} outside [0, 1]")));
    }
    if level == 0.0 {
        return Ok(images.clone());
    }
    let noise = pixel_noise_field(images.len(), level, seed);
    let data = images.data().iter().zip(noise).map(|(&x, n)| (x + n).clamp(0.0, 1.0)).collect();
    Tensor::new(images.shape().to_vec(), data)
}
