//! Datasets split into knowns, known unknowns (background) and unknown
//! unknowns, plus the synthetic generator, the IDX reader/writer and the
//! dataset CSV format.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Phase::Train),
            "test" => Some(Phase::Test),
            _ => None,
        }
    }
}

/// What a sample is with respect to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// Known class, relabelled to `0..C`.
    Known(usize),
    /// Background class seen during training as a negative.
    KnownUnknown,
    /// Class never available during training.
    UnknownUnknown,
}

/// Role without the class index; used as a split key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitKind {
    Known,
    KnownUnknown,
    UnknownUnknown,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Known, SplitKind::KnownUnknown, SplitKind::UnknownUnknown];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Known => "known",
            SplitKind::KnownUnknown => "known_unknown",
            SplitKind::UnknownUnknown => "unknown_unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "known" => Some(SplitKind::Known),
            "known_unknown" => Some(SplitKind::KnownUnknown),
            "unknown_unknown" => Some(SplitKind::UnknownUnknown),
            _ => None,
        }
    }
}

impl Role {
    pub fn kind(self) -> SplitKind {
        match self {
            Role::Known(_) => SplitKind::Known,
            Role::KnownUnknown => SplitKind::KnownUnknown,
            Role::UnknownUnknown => SplitKind::UnknownUnknown,
        }
    }

    pub fn known_class(self) -> Option<usize> {
        match self {
            Role::Known(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SplitTag {
    pub role: Role,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub tag: SplitTag,
    /// Source class id. Equal to the relabelled index for knowns; for the
    /// other roles it identifies the originating class.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_known: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Checks uniform dimensionality, known indices below `num_known`, and
    /// that no unknown unknown sits in the training phase.
    pub fn new(dim: usize, num_known: usize, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::invalid(format!(
                    "sample {i} has {} features, dataset dim is {dim}",
                    s.features.len()
                )));
            }
            if let Role::Known(c) = s.tag.role {
                if c >= num_known {
                    return Err(Error::invalid(format!("sample {i}: class {c} >= {num_known}")));
                }
            }
            if s.tag.role == Role::UnknownUnknown && s.tag.phase == Phase::Train {
                return Err(Error::invalid(format!(
                    "sample {i}: unknown unknowns may not appear in the training phase"
                )));
            }
        }
        Ok(Dataset {
            dim,
            num_known,
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_known(&self) -> usize {
        self.num_known
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter_phase(&self, phase: Phase) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.tag.phase == phase)
    }

    /// Sorted source labels of the known-unknown classes.
    pub fn known_unknown_labels(&self) -> Vec<usize> {
        self.samples
            .iter()
            .filter(|s| s.tag.role == Role::KnownUnknown)
            .map(|s| s.label)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// New dataset from the samples that `f` maps to `Some`.
    pub fn map_samples(&self, mut f: impl FnMut(&Sample) -> Option<Sample>) -> Result<Dataset> {
        Dataset::new(self.dim, self.num_known, self.samples.iter().filter_map(&mut f).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,tag,phase,label");
        for i in 0..self.dim {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(
                out,
                "{},{},{},{}",
                self.dim,
                s.tag.role.kind().name(),
                s.tag.phase.name(),
                s.label
            );
            for f in &s.features {
                let _ = write!(out, ",{f}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`Dataset::to_csv`] output. `num_known` is one more than the
    /// largest known label.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty dataset file"))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 4 || cols[..4] != ["dim", "tag", "phase", "label"] {
            return Err(Error::parse(1, "expected header `dim,tag,phase,label,f0,...`"));
        }
        let dim = cols.len() - 4;
        let mut samples = Vec::new();
        let mut num_known = 0;
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 4 {
                return Err(Error::parse(n, format!("expected {} fields, got {}", dim + 4, fields.len())));
            }
            let row_dim: usize = fields[0].parse().map_err(|_| Error::parse(n, "bad dim"))?;
            if row_dim != dim {
                return Err(Error::parse(n, format!("row dim {row_dim} disagrees with header {dim}")));
            }
            let kind = SplitKind::parse(fields[1])
                .ok_or_else(|| Error::parse(n, format!("unknown tag `{}`", fields[1])))?;
            let phase = Phase::parse(fields[2])
                .ok_or_else(|| Error::parse(n, format!("unknown phase `{}`", fields[2])))?;
            let label: usize = fields[3].parse().map_err(|_| Error::parse(n, "bad label"))?;
            let features = fields[4..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::parse(n, format!("bad feature `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let role = match kind {
                SplitKind::Known => {
                    num_known = num_known.max(label + 1);
                    Role::Known(label)
                }
                SplitKind::KnownUnknown => Role::KnownUnknown,
                SplitKind::UnknownUnknown => {
                    if phase == Phase::Train {
                        return Err(Error::parse(n, "unknown unknown in training phase"));
                    }
                    Role::UnknownUnknown
                }
            };
            samples.push(Sample {
                features,
                tag: SplitTag { role, phase },
                label,
            });
        }
        Dataset::new(dim, num_known, samples)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_known: usize,
    pub num_known_unknown: usize,
    pub num_unknown_unknown: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_known: 4,
            num_known_unknown: 3,
            num_unknown_unknown: 3,
            samples_per_class: 1000,
            dim: 2,
            seed: 0,
        }
    }
}

pub const KNOWN_RADIUS: f64 = 6.0;
pub const KNOWN_UNKNOWN_RADIUS: f64 = 3.0;
pub const UNKNOWN_UNKNOWN_RADIUS: f64 = 9.0;

/// Class means in the first two coordinates: `(known, known_unknown, unknown_unknown)`.
///
/// Knowns sit at angles `2πk/C`. Both negative groups are rotated half a
/// known step, at `2π(k+½)/max(n, C)`: with `n ≤ C` every background and
/// unknown-unknown blob lies on a bisector between two known classes, the
/// background ones inside the known ring and the unknown unknowns outside.
pub fn synthetic_means(cfg: &SynthConfig) -> [Vec<[f64; 2]>; 3] {
    let ring = |n: usize, radius: f64, offset: f64| -> Vec<[f64; 2]> {
        let base = n.max(cfg.num_known) as f64;
        (0..n)
            .map(|k| {
                let a = 2.0 * PI * (k as f64 + offset) / base;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect()
    };
    [
        ring(cfg.num_known, KNOWN_RADIUS, 0.0),
        ring(cfg.num_known_unknown, KNOWN_UNKNOWN_RADIUS, 0.5),
        ring(cfg.num_unknown_unknown, UNKNOWN_UNKNOWN_RADIUS, 0.5),
    ]
}

/// Unit-variance Gaussian blobs; the first 80% of each class goes to train.
///
/// Source labels: knowns `0..C`, known unknowns `C..C+B`, unknown unknowns
/// after that. Unknown unknowns are generated in the test phase only.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.num_known < 1 || cfg.num_unknown_unknown < 1 || cfg.samples_per_class < 1 {
        return Err(Error::config("class counts and samples per class must be at least 1"));
    }
    if cfg.dim < 2 {
        return Err(Error::config(format!("synthetic data needs dim >= 2, got {}", cfg.dim)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [known, bg, uu] = synthetic_means(cfg);
    let n_train = (cfg.samples_per_class as f64 * 0.8).round() as usize;
    let mut samples = Vec::new();
    let groups = known
        .iter()
        .enumerate()
        .map(|(k, m)| (Role::Known(k), k, m))
        .chain(bg.iter().enumerate().map(|(k, m)| (Role::KnownUnknown, cfg.num_known + k, m)))
        .chain(uu.iter().enumerate().map(|(k, m)| {
            (Role::UnknownUnknown, cfg.num_known + cfg.num_known_unknown + k, m)
        }));
    for (role, label, mean) in groups {
        for i in 0..cfg.samples_per_class {
            let features: Vec<f64> = (0..cfg.dim)
                .map(|d| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + if d < 2 { mean[d] } else { 0.0 }
                })
                .collect();
            let phase = if role == Role::UnknownUnknown || i >= n_train {
                Phase::Test
            } else {
                Phase::Train
            };
            samples.push(Sample {
                features,
                tag: SplitTag { role, phase },
                label,
            });
        }
    }
    Dataset::new(cfg.dim, cfg.num_known, samples)
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded pair of IDX image and label files.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub rows: usize,
    pub cols: usize,
    /// Pixels scaled to `[0, 1]`.
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: bytes.len(),
            message: format!("file truncated while reading {what}"),
        })
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_be_u32(bytes, 0, "magic number")?;
    if magic != expected {
        return Err(Error::Format {
            offset: 0,
            message: format!("{what}: magic number {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

fn check_exact_len(bytes: &[u8], expected: usize, what: &str) -> Result<()> {
    if bytes.len() != expected {
        let message = if bytes.len() < expected {
            format!("{what} truncated: {expected} bytes expected")
        } else {
            format!("{what} has trailing bytes: {expected} bytes expected")
        };
        return Err(Error::Format {
            offset: bytes.len().min(expected),
            message,
        });
    }
    Ok(())
}

/// Decodes IDX image (`0x00000803`) and label (`0x00000801`) buffers.
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledImages> {
    check_magic(image_bytes, IDX_IMAGES_MAGIC, "images")?;
    let n = read_be_u32(image_bytes, 4, "image count")? as usize;
    let rows = read_be_u32(image_bytes, 8, "row count")? as usize;
    let cols = read_be_u32(image_bytes, 12, "column count")? as usize;
    check_exact_len(image_bytes, 16 + n * rows * cols, "image file")?;

    check_magic(label_bytes, IDX_LABELS_MAGIC, "labels")?;
    let n_labels = read_be_u32(label_bytes, 4, "label count")? as usize;
    if n_labels != n {
        return Err(Error::Format {
            offset: 4,
            message: format!("label file holds {n_labels} items, image file holds {n}"),
        });
    }
    check_exact_len(label_bytes, 8 + n, "label file")?;

    let px = rows * cols;
    let images = image_bytes[16..]
        .chunks(px.max(1))
        .take(n)
        .map(|img| img.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    Ok(LabeledImages {
        rows,
        cols,
        images,
        labels: label_bytes[8..].to_vec(),
    })
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledImages> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels)
}

/// Inverse of [`parse_idx`]; pixels are rounded back to `u8`.
pub fn encode_idx(data: &LabeledImages) -> (Vec<u8>, Vec<u8>) {
    let n = data.images.len() as u32;
    let mut images = Vec::with_capacity(16 + data.images.len() * data.rows * data.cols);
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&n.to_be_bytes());
    images.extend_from_slice(&(data.rows as u32).to_be_bytes());
    images.extend_from_slice(&(data.cols as u32).to_be_bytes());
    for img in &data.images {
        images.extend(img.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    let mut labels = Vec::with_capacity(8 + data.labels.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(data.labels.len() as u32).to_be_bytes());
    labels.extend_from_slice(&data.labels);
    (images, labels)
}

/// One labelled sample before a split protocol is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub features: Vec<f64>,
    pub label: usize,
    pub phase: Phase,
}

impl LabeledImages {
    pub fn into_raw(self, phase: Phase) -> Vec<RawSample> {
        self.images
            .into_iter()
            .zip(self.labels)
            .map(|(features, label)| RawSample {
                features,
                label: label as usize,
                phase,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitProtocol {
    pub known: BTreeSet<usize>,
    pub known_unknown: BTreeSet<usize>,
    pub unknown_unknown: BTreeSet<usize>,
}

impl SplitProtocol {
    /// Digits 0–4 known, 5–7 background, 8–9 unseen.
    pub fn mnist_default() -> Self {
        SplitProtocol {
            known: (0..5).collect(),
            known_unknown: (5..8).collect(),
            unknown_unknown: (8..10).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.known.is_empty() {
            return Err(Error::config("protocol needs at least one known class"));
        }
        if self.unknown_unknown.is_empty() {
            return Err(Error::config("protocol needs at least one unknown-unknown class"));
        }
        let overlap = self
            .known
            .intersection(&self.known_unknown)
            .chain(self.known.intersection(&self.unknown_unknown))
            .chain(self.known_unknown.intersection(&self.unknown_unknown))
            .next();
        if let Some(c) = overlap {
            return Err(Error::config(format!("class {c} appears in more than one split")));
        }
        Ok(())
    }
}

/// Relabels knowns to `0..C` in ascending source order, tags the other
/// roles, drops unlisted classes and unknown unknowns from the train phase.
pub fn apply_protocol(raw: &[RawSample], protocol: &SplitProtocol) -> Result<Dataset> {
    protocol.validate()?;
    let observed: BTreeSet<usize> = raw.iter().map(|r| r.label).collect();
    let all = protocol
        .known
        .iter()
        .chain(&protocol.known_unknown)
        .chain(&protocol.unknown_unknown);
    for c in all {
        if !observed.contains(c) {
            return Err(Error::config(format!("protocol class {c} does not occur in the data")));
        }
    }
    let index: BTreeMap<usize, usize> = protocol.known.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let dim = raw.first().map_or(0, |r| r.features.len());
    let samples = raw
        .iter()
        .filter_map(|r| {
            let role = if let Some(&c) = index.get(&r.label) {
                Role::Known(c)
            } else if protocol.known_unknown.contains(&r.label) {
                Role::KnownUnknown
            } else if protocol.unknown_unknown.contains(&r.label) && r.phase == Phase::Test {
                Role::UnknownUnknown
            } else {
                return None;
            };
            Some(Sample {
                features: r.features.clone(),
                tag: SplitTag { role, phase: r.phase },
                label: role.known_class().unwrap_or(r.label),
            })
        })
        .collect();
    Dataset::new(dim, protocol.known.len(), samples)
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

/// Training mini-batches as indices into [`Dataset::samples`].
///
/// Every batch holds `round(batch_size·background_fraction)` known-unknown
/// samples and known samples for the rest. Both pools are shuffled once per
/// epoch with a stream derived from `(seed, epoch)` and consumed cyclically
/// until each pool has been visited completely.
pub fn batches(
    dataset: &Dataset,
    batch_size: usize,
    background_fraction: f64,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    if !(0.0..1.0).contains(&background_fraction) {
        return Err(Error::config(format!(
            "background fraction must be in [0, 1), got {background_fraction}"
        )));
    }
    let mut known = Vec::new();
    let mut background = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        if s.tag.phase != Phase::Train {
            continue;
        }
        match s.tag.role {
            Role::Known(_) => known.push(i),
            Role::KnownUnknown => background.push(i),
            Role::UnknownUnknown => {}
        }
    }
    let bg_per_batch = (batch_size as f64 * background_fraction).round() as usize;
    let known_per_batch = batch_size - bg_per_batch;
    if bg_per_batch > 0 && background.is_empty() {
        return Err(Error::config("background fraction > 0 but the dataset has no known-unknown training samples"));
    }
    if known_per_batch == 0 {
        return Err(Error::config("batch has no room for known samples"));
    }
    if known.is_empty() {
        return Err(Error::config("dataset has no known training samples"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    known.shuffle(&mut rng);
    background.shuffle(&mut rng);

    let mut n_batches = known.len().div_ceil(known_per_batch);
    if bg_per_batch > 0 {
        n_batches = n_batches.max(background.len().div_ceil(bg_per_batch));
    }
    let out = (0..n_batches)
        .map(|b| {
            let mut batch = Vec::with_capacity(batch_size);
            batch.extend((0..known_per_batch).map(|j| known[(b * known_per_batch + j) % known.len()]));
            batch.extend((0..bg_per_batch).map(|j| background[(b * bg_per_batch + j) % background.len()]));
            batch
        })
        .collect();
    Ok(out)
}
