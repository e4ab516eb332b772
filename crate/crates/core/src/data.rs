//! Synthetic benchmark generation and dataset/embedding file formats.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gda::{read_exact, read_u32};
use crate::nda::Image;
use crate::rng::fill_standard_normal;

const OODE_MAGIC: &[u8; 4] = b"OODE";
const PLACEMENT_ROUNDS: usize = 1000;
const TRAIN_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityKind {
    /// Uniform samples over the training bounding box enlarged 1.5x about its center.
    UniformCube,
    /// The known-class mixture with 3x the spread, shifted by a common offset
    /// of length `cluster_separation`.
    ScaledShiftedMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub k_known: usize,
    pub k_novel: usize,
    pub n_per_class: usize,
    pub cluster_spread: f64,
    pub cluster_separation: f64,
    pub modality_kind: ModalityKind,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 8,
            k_known: 4,
            k_novel: 2,
            n_per_class: 500,
            cluster_spread: 1.0,
            cluster_separation: 6.0,
            modality_kind: ModalityKind::UniformCube,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("synthetic.{key}: {why}")));
        if self.dim < 1 {
            return bad("dim", "must be at least 1".into());
        }
        if self.k_known < 2 {
            return bad("k_known", "must be at least 2".into());
        }
        if self.n_per_class < self.dim + 2 {
            return bad("n_per_class", format!("must be at least dim + 2 = {}", self.dim + 2));
        }
        if !(self.cluster_spread > 0.0) || !self.cluster_spread.is_finite() {
            return bad("cluster_spread", "must be positive".into());
        }
        if !(self.cluster_separation >= 0.0) || !self.cluster_separation.is_finite() {
            return bad("cluster_separation", "must be nonnegative".into());
        }
        Ok(())
    }
}

/// Inputs with optional labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub dim: usize,
    pub k_known: usize,
    pub k_novel: usize,
    /// Known classes, 90% per class.
    pub train: Split,
    /// Known classes, remaining 10% per class.
    pub test_id: Split,
    /// Novel classes, labeled `k_known..k_known + k_novel`.
    pub test_semantic: Split,
    /// Off-manifold samples (unlabeled).
    pub test_modality: Split,
    /// Cluster centers, known classes first.
    pub centers: Vec<Vec<f64>>,
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; dim];
        fill_standard_normal(rng, &mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn place_centers<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let total = spec.k_known + spec.k_novel;
    let s = spec.cluster_separation;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(total);
    for k in 0..total {
        let mut placed = false;
        for _ in 0..PLACEMENT_ROUNDS {
            let c: Vec<f64> = random_unit(spec.dim, rng).into_iter().map(|v| v * s).collect();
            // Small slack keeps the exact-boundary case (s = 0) feasible.
            if centers.iter().all(|o| distance(o, &c) >= s * (1.0 - 1e-12)) {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Estimation(format!(
                "could not place cluster {k} at pairwise separation {s} in {} dimensions",
                spec.dim
            )));
        }
    }
    Ok(centers)
}

fn gaussian_point<R: Rng + ?Sized>(center: &[f64], spread: f64, rng: &mut R) -> Vec<f64> {
    let mut z = vec![0.0; center.len()];
    fill_standard_normal(rng, &mut z);
    center.iter().zip(z).map(|(c, v)| c + spread * v).collect()
}

/// Known/novel Gaussian clusters plus an off-manifold modality split.
pub fn gen_synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<DatasetBundle> {
    spec.validate()?;
    let centers = place_centers(spec, rng)?;

    let mut train = Split::default();
    let mut test_id = Split::default();
    for (k, center) in centers.iter().enumerate().take(spec.k_known) {
        let mut pts: Vec<Vec<f64>> = (0..spec.n_per_class)
            .map(|_| gaussian_point(center, spec.cluster_spread, rng))
            .collect();
        pts.shuffle(rng);
        let n_train = (TRAIN_FRACTION * spec.n_per_class as f64).round() as usize;
        for (i, p) in pts.into_iter().enumerate() {
            let split = if i < n_train { &mut train } else { &mut test_id };
            split.inputs.push(p);
            split.labels.push(k);
        }
    }

    let mut test_semantic = Split::default();
    for (k, center) in centers.iter().enumerate().skip(spec.k_known) {
        for _ in 0..spec.n_per_class {
            test_semantic
                .inputs
                .push(gaussian_point(center, spec.cluster_spread, rng));
            test_semantic.labels.push(k);
        }
    }

    let mut test_modality = Split::default();
    match spec.modality_kind {
        ModalityKind::UniformCube => {
            let mut lo = vec![f64::INFINITY; spec.dim];
            let mut hi = vec![f64::NEG_INFINITY; spec.dim];
            for x in &train.inputs {
                for i in 0..spec.dim {
                    lo[i] = lo[i].min(x[i]);
                    hi[i] = hi[i].max(x[i]);
                }
            }
            for _ in 0..spec.n_per_class {
                let p = (0..spec.dim)
                    .map(|i| {
                        let mid = 0.5 * (lo[i] + hi[i]);
                        let half = 0.75 * (hi[i] - lo[i]);
                        mid + half * (2.0 * rng.random::<f64>() - 1.0)
                    })
                    .collect();
                test_modality.inputs.push(p);
            }
        }
        ModalityKind::ScaledShiftedMixture => {
            let shift: Vec<f64> = random_unit(spec.dim, rng)
                .into_iter()
                .map(|v| v * spec.cluster_separation)
                .collect();
            for _ in 0..spec.n_per_class {
                let k = rng.random_range(0..spec.k_known);
                let p = gaussian_point(&centers[k], 3.0 * spec.cluster_spread, rng);
                test_modality
                    .inputs
                    .push(p.iter().zip(&shift).map(|(a, b)| a + b).collect());
            }
        }
    }

    Ok(DatasetBundle {
        dim: spec.dim,
        k_known: spec.k_known,
        k_novel: spec.k_novel,
        train,
        test_id,
        test_semantic,
        test_modality,
        centers,
    })
}

/// Row-major f32 vectors with optional u32 labels, as stored in an OODE file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub data: Vec<f32>,
    pub labels: Option<Vec<u32>>,
}

impl EmbeddingSet {
    /// Narrows `rows` to f32.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<&[usize]>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            crate::error::check_dim(dim, r.len())?;
            data.extend(r.iter().map(|&v| v as f32));
        }
        let labels = match labels {
            Some(l) if l.len() != rows.len() => {
                return Err(Error::input("labels and vectors differ in length"))
            }
            Some(l) => Some(
                l.iter()
                    .map(|&v| u32::try_from(v).map_err(|_| Error::input("label exceeds u32")))
                    .collect::<Result<_>>()?,
            ),
            None => None,
        };
        Ok(Self { dim, data, labels })
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            self.labels.as_ref().map_or(0, Vec::len)
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        if self.dim == 0 {
            return vec![Vec::new(); self.len()];
        }
        self.data
            .chunks_exact(self.dim)
            .map(|c| c.iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn labels_usize(&self) -> Option<Vec<usize>> {
        self.labels
            .as_ref()
            .map(|l| l.iter().map(|&v| v as usize).collect())
    }

    /// `"OODE"`, u32 count, u32 dim, u8 has_labels, f32 LE data row-major,
    /// then u32 LE labels when present.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.dim > 0 && self.data.len() % self.dim != 0 {
            return Err(Error::input("data length is not a multiple of dim"));
        }
        let count = self.len();
        if let Some(l) = &self.labels {
            if l.len() != count {
                return Err(Error::input("labels and vectors differ in length"));
            }
        }
        w.write_all(OODE_MAGIC)?;
        w.write_all(&(count as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&[self.labels.is_some() as u8])?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(l) = &self.labels {
            for v in l {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != OODE_MAGIC {
            return Err(Error::format("bad magic, expected OODE"));
        }
        let count = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        let mut flag = [0u8; 1];
        read_exact(r, &mut flag)?;
        if flag[0] > 1 {
            return Err(Error::format(format!("invalid has_labels byte {}", flag[0])));
        }
        let n = count
            .checked_mul(dim)
            .filter(|&n| n <= 1 << 31)
            .ok_or_else(|| Error::format("implausible embedding count"))?;
        let mut bytes = vec![0u8; n * 4];
        read_exact(r, &mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let labels = if flag[0] == 1 {
            let mut bytes = vec![0u8; count * 4];
            read_exact(r, &mut bytes)?;
            Some(
                bytes
                    .chunks_exact(4)
                    .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect(),
            )
        } else {
            None
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::format("trailing bytes after embeddings"));
        }
        if dim == 0 && count > 0 && labels.is_none() {
            return Err(Error::format("zero-dimensional vectors without labels"));
        }
        Ok(Self { dim, data, labels })
    }
}

pub fn write_embeddings(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    set.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    EmbeddingSet::read_from(&mut BufReader::new(File::open(path)?))
}

pub const BUNDLE_FILES: [&str; 4] = ["train", "test_id", "test_semantic", "test_modality"];

/// Writes `<name>.oode` per split plus `meta.json`.
pub fn write_bundle(dir: impl AsRef<Path>, bundle: &DatasetBundle, spec: &SyntheticSpec) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let splits = [
        (&bundle.train, true),
        (&bundle.test_id, true),
        (&bundle.test_semantic, true),
        (&bundle.test_modality, false),
    ];
    for (name, (split, labeled)) in BUNDLE_FILES.iter().zip(splits) {
        let labels = labeled.then_some(split.labels.as_slice());
        write_embeddings(dir.join(format!("{name}.oode")), &EmbeddingSet::from_rows(&split.inputs, labels)?)?;
    }
    let meta = serde_json::json!({
        "dim": bundle.dim,
        "k_known": bundle.k_known,
        "k_novel": bundle.k_novel,
        "synthetic": spec,
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta).expect("json") + "\n")?;
    Ok(())
}

/// A labeled training set loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub image_shape: Option<(usize, usize, usize)>,
}

/// Loads training data from a directory: `labels.csv` + PNM images when
/// present, otherwise `train.oode`.
pub fn load_training_dir(dir: impl AsRef<Path>) -> Result<LoadedDataset> {
    let dir = dir.as_ref();
    if dir.join("labels.csv").exists() {
        return load_image_dataset(dir);
    }
    let set = read_embeddings(dir.join("train.oode"))?;
    let labels = set
        .labels_usize()
        .ok_or_else(|| Error::format("train.oode has no labels"))?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LoadedDataset {
        inputs: set.rows(),
        labels,
        classes,
        image_shape: None,
    })
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    filename: String,
    label: usize,
}

/// Reads `labels.csv` (`filename,label`) and the listed PNM images, which
/// must share one shape. Inputs are the flattened rasters.
pub fn load_image_dataset(dir: impl AsRef<Path>) -> Result<LoadedDataset> {
    let dir = dir.as_ref();
    let mut r = csv::Reader::from_reader(File::open(dir.join("labels.csv"))?);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut shape = None;
    for row in r.deserialize() {
        let row: LabelRow = row.map_err(crate::energy::csv_error)?;
        let img = Image::read_pnm(dir.join(&row.filename))?;
        let s = (img.height(), img.width(), img.channels());
        match shape {
            None => shape = Some(s),
            Some(prev) if prev != s => {
                return Err(Error::format(format!(
                    "{} has shape {s:?}, expected {prev:?}",
                    row.filename
                )))
            }
            _ => {}
        }
        inputs.push(img.into_data());
        labels.push(row.label);
    }
    if inputs.is_empty() {
        return Err(Error::format("labels.csv lists no images"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LoadedDataset {
        inputs,
        labels,
        classes,
        image_shape: shape,
    })
}

/// PNM files in `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("ppm") | Some("pgm") | Some("pnm")
                )
        })
        .collect();
    files.sort();
    Ok(files)
}
