//! Functional evaluation of pooling layers on MNIST digit classification.
//!
//! A two-layer feature extractor `y = F(W1 x)`, `y_fc = F(W2 y)` feeds a
//! ridge-regularized linear readout trained by least squares. The first-layer
//! weights `W1` come from one of three sources: learned by self-organization
//! on a pixel grid, hand-crafted disjoint pooling, or random pooling with
//! matched connection count. `W2` is a fixed random expansion shared across
//! sources so that accuracy differences isolate the effect of `W1`.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analysis::{extract_pools, tiling_coverage, DEFAULT_POOL_FRAC};
use crate::dynamics::{init_layer_state, IzhikevichParams, NoiseParams};
use crate::error::{Error, Result};
use crate::plasticity::{init_units_biased, self_organize, ProcessingUnits, DEFAULT_ETA_LEARN};
use crate::rng::{CounterRng, Stream};
use crate::topology::{build_grid_layer, SynapticMatrix, TopologyParams};

/// Number of target classes (digits 0 through 9).
pub const CLASSES: usize = 10;

/// Default width of the fixed random expansion layer.
pub const DEFAULT_FEATURES: usize = 1000;

/// Default ridge is this fraction of the mean feature-Gram diagonal.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// A labeled image set with intensities scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    images: Vec<f64>,
    labels: Vec<u8>,
    split: String,
}

impl Dataset {
    pub fn new(n: usize, images: Vec<f64>, labels: Vec<u8>, split: impl Into<String>) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("images need at least one pixel"));
        }
        if labels.is_empty() {
            return Err(Error::invalid("dataset needs at least one sample"));
        }
        if images.len() != n * labels.len() {
            return Err(Error::invalid(format!(
                "{} pixel values do not tile {} images of {} pixels",
                images.len(),
                labels.len(),
                n
            )));
        }
        if let Some(bad) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel intensity {bad} outside [0, 1]")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::invalid(format!("label {bad} outside 0..={}", CLASSES - 1)));
        }
        Ok(Dataset { n, images, labels, split: split.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pixels per image.
    pub fn pixels(&self) -> usize {
        self.n
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.n..(i + 1) * self.n]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn split(&self) -> &str {
        &self.split
    }

    /// First `k` samples as a new dataset.
    pub fn take(&self, k: usize) -> Result<Dataset> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "cannot take {k} samples from a dataset of {}",
                self.len()
            )));
        }
        Ok(Dataset {
            n: self.n,
            images: self.images[..k * self.n].to_vec(),
            labels: self.labels[..k].to_vec(),
            split: self.split.clone(),
        })
    }

    /// Copy with labels permuted by a seeded Fisher-Yates shuffle. Images are
    /// untouched, so any label structure is destroyed while the marginal
    /// class frequencies are preserved.
    pub fn shuffle_labels(&self, seed: u64) -> Dataset {
        let rng = CounterRng::new(seed, Stream::Shuffle);
        let mut labels = self.labels.clone();
        for i in (1..labels.len()).rev() {
            let j = rng.index(i as u64, 0, i + 1);
            labels.swap(i, j);
        }
        Dataset { n: self.n, images: self.images.clone(), labels, split: self.split.clone() }
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated before {what}: need {end} header bytes, have {}", bytes.len()),
        ));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Decoded image file: `count` images of `rows x cols` raw intensity bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

/// Decodes the big-endian image container: magic, count, rows, cols, then
/// `count * rows * cols` intensity bytes with nothing trailing.
pub fn decode_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "image magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(
            0,
            format!("image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4, "image count")?;
    let rows = be_u32(bytes, 8, "row count")?;
    let cols = be_u32(bytes, 12, "column count")?;
    if rows == 0 || cols == 0 {
        return Err(Error::format(8, format!("zero image dimensions {rows}x{cols}")));
    }
    let expected = 16 + count as u64 * rows as u64 * cols as u64;
    let have = bytes.len() as u64;
    if have < expected {
        return Err(Error::format(
            have,
            format!("truncated pixel data: need {expected} bytes total, have {have}"),
        ));
    }
    if have > expected {
        return Err(Error::format(expected, format!("{} trailing bytes after pixel data", have - expected)));
    }
    Ok(IdxImages {
        count: count as usize,
        rows: rows as usize,
        cols: cols as usize,
        pixels: bytes[16..].to_vec(),
    })
}

/// Decodes the big-endian label container: magic, count, then one class byte
/// per sample, each in `0..=9`, with nothing trailing.
pub fn decode_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "label magic")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::format(
            0,
            format!("label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4, "label count")?;
    let expected = 8 + count as u64;
    let have = bytes.len() as u64;
    if have < expected {
        return Err(Error::format(
            have,
            format!("truncated label data: need {expected} bytes total, have {have}"),
        ));
    }
    if have > expected {
        return Err(Error::format(expected, format!("{} trailing bytes after label data", have - expected)));
    }
    let labels = bytes[8..].to_vec();
    if let Some(i) = labels.iter().position(|&l| l as usize >= CLASSES) {
        return Err(Error::format(
            8 + i as u64,
            format!("label {} outside 0..={}", labels[i], CLASSES - 1),
        ));
    }
    Ok(labels)
}

/// Loads a paired image/label file set, cross-checks the sample counts, and
/// scales intensities by 1/255. The split tag is the image file stem.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = decode_idx_images(&std::fs::read(images_path)?)?;
    let labels = decode_idx_labels(&std::fs::read(labels_path)?)?;
    if images.count != labels.len() {
        return Err(Error::invalid(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let split = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let scaled = images.pixels.iter().map(|&b| b as f64 / 255.0).collect();
    Dataset::new(images.rows * images.cols, scaled, labels, split)
}

/// Directory holding the four MNIST files: `MNIST_DIR` if set, else
/// `data/mnist` relative to the working directory.
pub fn default_mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/mnist"))
}

/// Loads the train or test split from a directory with the standard file
/// names (`train-images-idx3-ubyte` and so on).
pub fn load_mnist_split(dir: &Path, train: bool) -> Result<Dataset> {
    let (images, labels) = if train {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    } else {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    };
    load_idx(&dir.join(images), &dir.join(labels))
}

/// Where a first-layer weight matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    SelfOrganized,
    HandCrafted,
    Random,
}

impl NetworkKind {
    pub fn label(self) -> &'static str {
        match self {
            NetworkKind::SelfOrganized => "self-organized",
            NetworkKind::HandCrafted => "hand-crafted",
            NetworkKind::Random => "random",
        }
    }
}

/// Pointwise squashing applied after each layer. Both variants are odd,
/// fix zero, and map into `[-1, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    LinearClip,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::LinearClip => x.clamp(-1.0, 1.0),
        }
    }
}

/// Disjoint `pool x pool` averaging-style pooling with binary weights: unit
/// `(a, b)` connects with weight 1 to the pixel patch at `(a*stride, b*stride)`
/// on a `rows x cols` pixel grid. The patches must tile the grid exactly.
pub fn build_handcrafted(rows: usize, cols: usize, pool: usize, stride: usize) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 || pool == 0 || stride == 0 {
        return Err(Error::invalid("grid, pool, and stride must all be nonzero"));
    }
    if pool > rows || pool > cols {
        return Err(Error::invalid(format!("pool {pool} exceeds grid {rows}x{cols}")));
    }
    if (rows - pool) % stride != 0 || (cols - pool) % stride != 0 {
        return Err(Error::invalid(format!(
            "pool {pool} with stride {stride} does not tile a {rows}x{cols} grid"
        )));
    }
    let ur = (rows - pool) / stride + 1;
    let uc = (cols - pool) / stride + 1;
    let mut w1 = DMatrix::zeros(ur * uc, rows * cols);
    for a in 0..ur {
        for b in 0..uc {
            let unit = a * uc + b;
            for dr in 0..pool {
                for dc in 0..pool {
                    let pixel = (a * stride + dr) * cols + (b * stride + dc);
                    w1[(unit, pixel)] = 1.0;
                }
            }
        }
    }
    Ok(w1)
}

/// `m` pooling units that each connect with weight 1 to `k` distinct input
/// nodes drawn uniformly, matching the hand-crafted connection count while
/// discarding all spatial structure.
pub fn build_random(n: usize, m: usize, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("need at least one input node and one unit"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("pool size {k} outside 1..={n}")));
    }
    let rng = CounterRng::new(seed, Stream::EvalWeights);
    let mut w1 = DMatrix::zeros(m, n);
    for unit in 0..m {
        let mut picked = 0usize;
        let mut draw = 0u64;
        while picked < k {
            let i = rng.index(unit as u64, draw, n);
            draw += 1;
            if w1[(unit, i)] == 0.0 {
                w1[(unit, i)] = 1.0;
                picked += 1;
            }
        }
    }
    Ok(w1)
}

/// Learned unit weights as a dense `units x inputs` matrix, used as-is
/// (real-valued, not binarized).
pub fn units_to_matrix(units: &ProcessingUnits) -> DMatrix<f64> {
    DMatrix::from_fn(units.units(), units.inputs(), |j, i| units.weights(j)[i])
}

// Counter plane for the shared expansion so its draws never collide with
// build_random draws made from the same seed.
const PROJECTION_PLANE: u64 = 1 << 32;

/// Fixed random expansion `W2` with entries uniform in `[-1, 1]`. All three
/// network kinds in a comparison share one such matrix.
pub fn random_projection(l: usize, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    if l == 0 || m == 0 {
        return Err(Error::invalid("projection needs nonzero dimensions"));
    }
    let rng = CounterRng::new(seed, Stream::EvalWeights);
    Ok(DMatrix::from_fn(l, m, |j, i| {
        rng.uniform_in(j as u64, PROJECTION_PLANE + i as u64, -1.0, 1.0)
    }))
}

/// A fully specified feature extractor: `y_fc = F(W2 F(W1 x))`.
///
/// Construction normalizes every pooling unit (row of `W1`) to unit total
/// absolute weight, so a unit's output is a weighted mean of its member
/// intensities and the squashing map sees the same scale whatever the pool
/// size or weight source. Relative weights within a unit are kept as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub kind: NetworkKind,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub nonlinearity: Nonlinearity,
}

impl NetworkConfig {
    pub fn new(
        kind: NetworkKind,
        mut w1: DMatrix<f64>,
        w2: DMatrix<f64>,
        nonlinearity: Nonlinearity,
    ) -> Result<NetworkConfig> {
        if w1.nrows() == 0 || w1.ncols() == 0 {
            return Err(Error::invalid("first layer must be non-empty"));
        }
        if w2.ncols() != w1.nrows() {
            return Err(Error::invalid(format!(
                "expansion expects {} unit outputs, first layer has {}",
                w2.ncols(),
                w1.nrows()
            )));
        }
        if w1.iter().chain(w2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        for mut row in w1.row_iter_mut() {
            let mass: f64 = row.iter().map(|v| v.abs()).sum();
            if mass > 0.0 {
                row *= 1.0 / mass;
            }
        }
        Ok(NetworkConfig { kind, w1, w2, nonlinearity })
    }

    /// Input width (pixels per image).
    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    /// Pooling units between the two weight layers.
    pub fn units(&self) -> usize {
        self.w1.nrows()
    }

    /// Output feature width.
    pub fn features(&self) -> usize {
        self.w2.nrows()
    }
}

/// Feature vector for a single image.
pub fn featurize(cfg: &NetworkConfig, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != cfg.inputs() {
        return Err(Error::invalid(format!(
            "image has {} values, network expects {}",
            x.len(),
            cfg.inputs()
        )));
    }
    let x = nalgebra::DVector::from_column_slice(x);
    let y = (&cfg.w1 * x).map(|v| cfg.nonlinearity.apply(v));
    let y_fc = (&cfg.w2 * y).map(|v| cfg.nonlinearity.apply(v));
    Ok(y_fc.as_slice().to_vec())
}

/// Feature matrix with one column per sample.
pub fn feature_matrix(cfg: &NetworkConfig, data: &Dataset) -> Result<DMatrix<f64>> {
    if data.pixels() != cfg.inputs() {
        return Err(Error::invalid(format!(
            "dataset has {} pixels per image, network expects {}",
            data.pixels(),
            cfg.inputs()
        )));
    }
    let x = DMatrix::from_fn(data.pixels(), data.len(), |i, j| data.image(j)[i]);
    let y = (&cfg.w1 * x).map(|v| cfg.nonlinearity.apply(v));
    Ok((&cfg.w2 * y).map(|v| cfg.nonlinearity.apply(v)))
}

/// One-hot target matrix, one `{0, 1}` column per sample.
pub fn one_hot_targets(labels: &[u8]) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(CLASSES, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        t[(l as usize, j)] = 1.0;
    }
    t
}

/// Linear readout trained by regularized least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub w3: DMatrix<f64>,
    pub ridge: f64,
}

/// Solves `W3 (G + ridge I) = T Y^T` with `G = Y Y^T` by Cholesky, where `Y`
/// is the `features x samples` matrix and `T` the target matrix. With
/// `ridge = None` the ridge defaults to [`DEFAULT_RIDGE_SCALE`] times the
/// mean diagonal of `G`; an explicit zero is accepted but fails with a
/// singularity error when the plain normal equations are not solvable.
pub fn fit_readout(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    ridge: Option<f64>,
) -> Result<Readout> {
    if features.ncols() == 0 || features.nrows() == 0 {
        return Err(Error::invalid("feature matrix must be non-empty"));
    }
    if targets.ncols() != features.ncols() {
        return Err(Error::invalid(format!(
            "{} target columns for {} feature columns",
            targets.ncols(),
            features.ncols()
        )));
    }
    if targets.nrows() == 0 {
        return Err(Error::invalid("targets must have at least one row"));
    }
    let l = features.nrows();
    let mut gram = features * features.transpose();
    let ridge = match ridge {
        Some(r) if r.is_finite() && r >= 0.0 => r,
        Some(r) => return Err(Error::invalid(format!("ridge {r} must be finite and nonnegative"))),
        None => DEFAULT_RIDGE_SCALE * gram.trace() / l as f64,
    };
    for i in 0..l {
        gram[(i, i)] += ridge;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Singular(format!(
            "normal equations not positive definite at ridge {ridge}; pass a larger ridge"
        ))
    })?;
    let w3t = chol.solve(&(features * targets.transpose()));
    Ok(Readout { w3: w3t.transpose(), ridge })
}

/// Predicted class per feature column: row argmax of `W3 Y`, ties to the
/// lowest class index.
pub fn predict(readout: &Readout, features: &DMatrix<f64>) -> Result<Vec<u8>> {
    if features.nrows() != readout.w3.ncols() {
        return Err(Error::invalid(format!(
            "readout expects {} features, got {}",
            readout.w3.ncols(),
            features.nrows()
        )));
    }
    let scores = &readout.w3 * features;
    Ok((0..scores.ncols())
        .map(|j| {
            let col = scores.column(j);
            let mut best = 0usize;
            for c in 1..col.len() {
                if col[c] > col[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect())
}

/// Fraction of samples classified correctly.
pub fn evaluate(cfg: &NetworkConfig, readout: &Readout, data: &Dataset) -> Result<f64> {
    let feats = feature_matrix(cfg, data)?;
    let predicted = predict(readout, &feats)?;
    let hits = predicted.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Two-sided Welch t-test p-value for a difference in means between two
/// independent samples with unequal variances. Degenerate zero-variance
/// inputs resolve to 1 when the means agree and 0 when they differ.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("welch test needs at least two samples per group"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_var(a, ma), sample_var(b, mb));
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::invalid(format!("t distribution: {e}")))?;
    Ok((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64], m: f64) -> f64 {
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KindSummary {
    pub kind: NetworkKind,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PairPValue {
    pub pair: String,
    pub p_value: f64,
}

/// Per-kind accuracy statistics plus pairwise Welch p-values.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComparisonReport {
    pub kinds: Vec<KindSummary>,
    pub pairs: Vec<PairPValue>,
}

/// Summarizes per-kind accuracy vectors (one entry per seed) and tests every
/// kind pair for a difference in mean accuracy.
pub fn compare_kinds(groups: &[(NetworkKind, Vec<f64>)]) -> Result<ComparisonReport> {
    if groups.len() < 2 {
        return Err(Error::invalid("comparison needs at least two kinds"));
    }
    for (i, (kind, accs)) in groups.iter().enumerate() {
        if accs.len() < 2 {
            return Err(Error::invalid(format!(
                "kind {} needs at least two accuracy samples",
                kind.label()
            )));
        }
        if groups[..i].iter().any(|(k, _)| k == kind) {
            return Err(Error::invalid(format!("kind {} listed twice", kind.label())));
        }
    }
    let kinds = groups
        .iter()
        .map(|(kind, accs)| {
            let m = mean(accs);
            KindSummary { kind: *kind, n: accs.len(), mean: m, std: sample_var(accs, m).sqrt() }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            pairs.push(PairPValue {
                pair: format!("{} vs {}", groups[i].0.label(), groups[j].0.label()),
                p_value: welch_p_value(&groups[i].1, &groups[j].1)?,
            });
        }
    }
    Ok(ComparisonReport { kinds, pairs })
}

pub fn write_comparison_json<W: Write>(report: &ComparisonReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| Error::invalid(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Settings for learning a pooling layer from spontaneous activity on a
/// pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Node spacing of the pixel grid in rule space.
    pub spacing: f64,
    /// Length scale of the initial center-biased weights.
    pub bias_len: f64,
    /// Intrinsic noise variance driving the waves.
    pub sigma2: f64,
    pub dt: f64,
    /// Hard step budget.
    pub max_steps: u64,
    /// Coverage is checked every this many steps.
    pub check_every: u64,
    /// Organization stops once pool tiling coverage reaches this fraction.
    pub target_coverage: f64,
    pub eta_learn: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            spacing: 0.5,
            bias_len: 1.25,
            sigma2: NoiseParams::default().sigma2,
            dt: 1.0,
            max_steps: 50_000,
            check_every: 500,
            target_coverage: 0.90,
            eta_learn: DEFAULT_ETA_LEARN,
        }
    }
}

/// A pooling layer learned by self-organization, with the geometry it was
/// trained on and the coverage it reached.
#[derive(Debug, Clone)]
pub struct TrainedPooling {
    pub units: ProcessingUnits,
    pub geometry: crate::topology::LayerGeometry,
    pub coverage: f64,
    pub steps: u64,
}

/// Learns `m` pooling units over a `rows x cols` pixel grid by running the
/// spiking layer under intrinsic noise and applying winner-take-all Hebbian
/// updates, stopping at the coverage target or the step budget. Grid nodes
/// are ordered row-major, so unit weights align with image pixel order.
pub fn train_self_organized(
    rows: usize,
    cols: usize,
    m: usize,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainedPooling> {
    if opts.max_steps == 0 || opts.check_every == 0 {
        return Err(Error::invalid("step budget and check interval must be nonzero"));
    }
    if !(opts.target_coverage > 0.0 && opts.target_coverage <= 1.0) {
        return Err(Error::invalid("target coverage must be in (0, 1]"));
    }
    let geometry = build_grid_layer(rows, cols, opts.spacing)?;
    let topo = TopologyParams::default();
    let matrix = SynapticMatrix::build(&geometry, &topo)?;
    let mut state = init_layer_state(&geometry, &IzhikevichParams::default(), seed)?;
    let mut units = init_units_biased(m, &geometry, seed, opts.eta_learn, opts.bias_len)?;
    let noise = NoiseParams { sigma2: opts.sigma2 };
    let check = opts.check_every;
    let coverage_of = |units: &ProcessingUnits| {
        extract_pools(units, &geometry, DEFAULT_POOL_FRAC, topo.excitation_radius)
            .map(|pools| tiling_coverage(&pools, &geometry))
            .unwrap_or(0.0)
    };
    let trace = self_organize(
        &mut state,
        &matrix,
        &noise,
        &mut units,
        opts.max_steps,
        opts.dt,
        |t, units| t % check == 0 && coverage_of(units) >= opts.target_coverage,
    )?;
    let coverage = coverage_of(&units);
    Ok(TrainedPooling { units, geometry, coverage, steps: trace.steps_run })
}
