use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smooth::Dataset;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn truncated(what: &str) -> Error {
    Error::Idx(format!("{what} file is truncated"))
}

/// Parses an IDX image file: magic, count, rows, cols, then `u8` pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = bytes;
    let magic = r.read_u32::<BigEndian>().map_err(|_| truncated("image"))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Idx(format!(
            "image magic is {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let mut dims = [0u32; 3];
    for v in &mut dims {
        *v = r.read_u32::<BigEndian>().map_err(|_| truncated("image"))?;
    }
    let [count, rows, cols] = dims.map(|v| v as usize);
    let d = rows
        .checked_mul(cols)
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Idx(format!("bad image shape {rows} x {cols}")))?;
    let need = count
        .checked_mul(d)
        .ok_or_else(|| Error::Idx("image count overflows".into()))?;
    if r.len() < need {
        return Err(truncated("image"));
    }
    if r.len() > need {
        return Err(Error::Idx(format!(
            "image file has {} trailing bytes",
            r.len() - need
        )));
    }
    Ok(Array2::from_shape_fn((count, d), |(i, j)| {
        r[i * d + j] as f64 / 255.0
    }))
}

/// Parses an IDX label file: magic, count, then `u8` labels.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = bytes;
    let magic = r.read_u32::<BigEndian>().map_err(|_| truncated("label"))?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Idx(format!(
            "label magic is {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let count = r.read_u32::<BigEndian>().map_err(|_| truncated("label"))? as usize;
    if r.len() < count {
        return Err(truncated("label"));
    }
    if r.len() > count {
        return Err(Error::Idx(format!(
            "label file has {} trailing bytes",
            r.len() - count
        )));
    }
    Ok(r.to_vec())
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]`; labels keep their digit value.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let x = parse_idx_images(&read_file(images_path)?)?;
    let y = parse_idx_labels(&read_file(labels_path)?)?;
    if x.nrows() != y.len() {
        return Err(Error::Idx(format!(
            "{} images but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    Dataset::new(x, y.into_iter().map(f64::from).collect())
}

/// Serializes images (row-major `u8` pixels) in IDX format.
pub fn encode_idx_images(pixels: &[u8], count: usize, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if pixels.len() != count * rows * cols {
        return Err(Error::Idx(format!(
            "{} pixels do not fill {count} images of {rows} x {cols}",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.write_u32::<BigEndian>(v).expect("write to Vec");
    }
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(IDX_LABELS_MAGIC)
        .expect("write to Vec");
    out.write_u32::<BigEndian>(labels.len() as u32)
        .expect("write to Vec");
    out.extend_from_slice(labels);
    out
}

/// Writes an IDX image/label pair.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    pixels: &[u8],
    rows: usize,
    cols: usize,
    labels: &[u8],
) -> Result<()> {
    let bytes = encode_idx_images(pixels, labels.len(), rows, cols)?;
    std::fs::File::create(images_path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(images_path, e))?;
    std::fs::File::create(labels_path)
        .and_then(|mut f| f.write_all(&encode_idx_labels(labels)))
        .map_err(|e| Error::io(labels_path, e))
}

/// Draws `per_class` rows of each class, `class_a` labelled `+1` and `class_b` labelled `-1`.
pub fn subsample_binary(
    data: &Dataset,
    class_a: u8,
    class_b: u8,
    per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    if class_a == class_b {
        return Err(Error::Dataset("the two classes must differ".into()));
    }
    if per_class == 0 {
        return Err(Error::Dataset("per_class must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(2 * per_class);
    for (class, sign) in [(class_a, 1.0), (class_b, -1.0)] {
        let mut idx: Vec<usize> = (0..data.n())
            .filter(|&i| data.labels[i] == f64::from(class))
            .collect();
        if idx.len() < per_class {
            return Err(Error::Dataset(format!(
                "class {class} has {} examples, need {per_class}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        idx.truncate(per_class);
        idx.sort_unstable();
        rows.extend(idx.into_iter().map(|i| (i, sign)));
    }
    let features = data.features.select(
        ndarray::Axis(0),
        &rows.iter().map(|r| r.0).collect::<Vec<_>>(),
    );
    let labels = rows.iter().map(|r| r.1).collect();
    Dataset::new(features, labels)
}

/// Reads a headerless numeric CSV; the last column is the label.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn read_csv(input: impl Read) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut values = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() < 2 {
            return Err(Error::Csv(format!(
                "row {} needs at least one feature and a label",
                line + 1
            )));
        }
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::Csv(format!(
                "row {} has {} cells, expected {}",
                line + 1,
                record.len(),
                width.unwrap()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Csv(format!(
                    "row {}, column {}: `{cell}` is not a number",
                    line + 1,
                    col + 1
                ))
            })?;
            values.push(v);
        }
        n += 1;
    }
    let width = width.ok_or_else(|| Error::Csv("no data rows".into()))?;
    let all = Array2::from_shape_vec((n, width), values).expect("rows have equal width");
    let features = all.slice(ndarray::s![.., ..width - 1]).to_owned();
    let labels = all.column(width - 1).to_owned();
    Dataset::new(features, labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// `y = A x* + noise` with Gaussian `A`.
    LeastSquares,
    /// `y = sign(A x* + noise)` with Gaussian `A`.
    Logistic,
    /// `y = A x* + noise` where `A` has singular values spread log-uniformly
    /// so that `A^T A` has the given condition number.
    IllConditioned,
    /// Balanced `+-1` classes with pixel-like features in `[0, 1]`; a
    /// `sparsity` fraction of the features separates the classes.
    TwoClass,
}

/// Parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(rename = "generator")]
    pub kind: SynthKind,
    pub n: usize,
    pub d: usize,
    /// Fraction of nonzero coordinates of the ground truth `x*`.
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Condition number of `A^T A` for `ill_conditioned`.
    #[serde(default = "default_condition")]
    pub condition: f64,
}

fn default_sparsity() -> f64 {
    0.1
}

fn default_condition() -> f64 {
    1e4
}

impl SynthSpec {
    pub fn new(kind: SynthKind, n: usize, d: usize, seed: u64) -> Self {
        SynthSpec {
            kind,
            n,
            d,
            sparsity: default_sparsity(),
            noise: 0.0,
            seed,
            condition: default_condition(),
        }
    }
}

/// A generated dataset with its ground truth.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub data: Dataset,
    pub x_star: Array1<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sparse_truth(rng: &mut ChaCha8Rng, d: usize, sparsity: f64) -> Array1<f64> {
    let k = ((sparsity * d as f64).round() as usize).clamp(1, d);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(rng);
    let mut x = Array1::zeros(d);
    for &i in &idx[..k] {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        x[i] = sign * rng.random_range(1.0..2.0);
    }
    x
}

/// Columns of a random orthogonal `d x d` matrix (Gram-Schmidt on Gaussian columns).
fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut v: Array1<f64> = (0..d).map(|_| gaussian(rng)).collect();
        for _ in 0..2 {
            for k in 0..j {
                let c = q.column(k).dot(&v);
                v.scaled_add(-c, &q.column(k));
            }
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

/// Generates a seeded synthetic dataset.
pub fn synth(spec: &SynthSpec) -> Result<Synthetic> {
    let SynthSpec {
        kind,
        n,
        d,
        sparsity,
        noise,
        seed,
        condition,
    } = *spec;
    if n == 0 || d == 0 {
        return Err(Error::Dataset(format!(
            "need n >= 1 and d >= 1, got {n} x {d}"
        )));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::Dataset(format!(
            "sparsity must lie in (0, 1], got {sparsity}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Dataset(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_star = sparse_truth(&mut rng, d, sparsity);
    let (features, labels) = match kind {
        SynthKind::LeastSquares | SynthKind::Logistic => {
            let a = Array2::from_shape_simple_fn((n, d), || gaussian(&mut rng));
            let mut y = a.dot(&x_star);
            y.mapv_inplace(|v| v + noise * gaussian(&mut rng));
            if kind == SynthKind::Logistic {
                y.mapv_inplace(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            }
            (a, y)
        }
        SynthKind::IllConditioned => {
            if !(condition >= 1.0 && condition.is_finite()) {
                return Err(Error::Dataset(format!(
                    "condition must be >= 1, got {condition}"
                )));
            }
            if n < d {
                return Err(Error::Dataset(format!(
                    "ill_conditioned needs n >= d, got {n} < {d}"
                )));
            }
            let u = random_orthogonal(&mut rng, n);
            let v = random_orthogonal(&mut rng, d);
            let sigma: Vec<f64> = (0..d)
                .map(|j| {
                    let t = if d == 1 {
                        0.0
                    } else {
                        j as f64 / (d - 1) as f64
                    };
                    condition.powf(-0.5 * t)
                })
                .collect();
            let mut a = Array2::zeros((n, d));
            for (j, s) in sigma.iter().enumerate() {
                let uj = u.column(j);
                for k in 0..d {
                    let c = s * v[[k, j]];
                    a.column_mut(k).scaled_add(c, &uj);
                }
            }
            let mut y = a.dot(&x_star);
            y.mapv_inplace(|v| v + noise * gaussian(&mut rng));
            (a, y)
        }
        SynthKind::TwoClass => {
            let informative = x_star.mapv(|v| v.signum());
            let mut a = Array2::zeros((n, d));
            let mut y = Array1::zeros(n);
            for i in 0..n {
                let yi = if i % 2 == 0 { 1.0 } else { -1.0 };
                y[i] = yi;
                for j in 0..d {
                    let mean = 0.5 + 0.45 * yi * informative[j];
                    a[[i, j]] = (mean + (0.05 + noise) * gaussian(&mut rng)).clamp(0.0, 1.0);
                }
            }
            (a, y)
        }
    };
    Ok(Synthetic {
        data: Dataset::new(features, labels)?,
        x_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..2 * 784).map(|i| (i % 256) as u8).collect();
        (pixels, vec![3, 7])
    }

    #[test]
    fn idx_round_trip() {
        let (pixels, labels) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        write_idx(&ip, &lp, &pixels, 28, 28, &labels).unwrap();
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!((d.n(), d.d()), (2, 784));
        assert_eq!(d.labels.to_vec(), vec![3.0, 7.0]);
        for (k, &p) in pixels.iter().enumerate() {
            assert_eq!(d.features[[k / 784, k % 784]], p as f64 / 255.0);
        }
    }

    #[test]
    fn idx_rejects_label_magic_in_image_slot() {
        let (pixels, _) = fixture();
        let mut bytes = encode_idx_images(&pixels, 2, 28, 28).unwrap();
        bytes[..4].copy_from_slice(&0x0000_0801u32.to_be_bytes());
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Idx(m)) if m.contains("magic")));
    }

    #[test]
    fn idx_truncation_and_count_mismatch() {
        let (pixels, _) = fixture();
        let bytes = encode_idx_images(&pixels, 2, 28, 28).unwrap();
        assert!(parse_idx_images(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_idx_images(&bytes[..10]).is_err());
        let labels = encode_idx_labels(&[1, 2, 3]);
        assert!(parse_idx_labels(&labels[..labels.len() - 1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        std::fs::write(&ip, &bytes).unwrap();
        std::fs::write(&lp, &labels).unwrap();
        assert!(load_idx(&ip, &lp).is_err());
    }

    #[test]
    fn subsample_is_seeded_and_binary() {
        let n = 60;
        let features = Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64);
        let labels = (0..n).map(|i| (i % 3) as f64).collect();
        let d = Dataset::new(features, labels).unwrap();
        let a = subsample_binary(&d, 0, 2, 10, 4).unwrap();
        let b = subsample_binary(&d, 0, 2, 10, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 20);
        assert!(a.is_binary());
        assert_eq!(a.labels.iter().filter(|&&y| y == 1.0).count(), 10);
        assert!(subsample_binary(&d, 0, 2, 21, 4).is_err());
        assert!(subsample_binary(&d, 1, 1, 2, 4).is_err());
    }

    #[test]
    fn csv_parsing() {
        let d = read_csv("1, 2, 1\n3, 4, -1\n".as_bytes()).unwrap();
        assert_eq!((d.n(), d.d()), (2, 2));
        assert_eq!(d.labels.to_vec(), vec![1.0, -1.0]);
        assert!(read_csv("".as_bytes()).is_err());
        assert!(read_csv("1,2,3\n4,5\n".as_bytes()).is_err());
        assert!(read_csv("1,x,3\n".as_bytes()).is_err());
    }

    #[test]
    fn synth_is_reproducible() {
        for kind in [
            SynthKind::LeastSquares,
            SynthKind::Logistic,
            SynthKind::IllConditioned,
            SynthKind::TwoClass,
        ] {
            let spec = SynthSpec::new(kind, 40, 8, 11);
            let a = synth(&spec).unwrap();
            let b = synth(&spec).unwrap();
            assert_eq!(a.data, b.data);
            assert_eq!(a.x_star, b.x_star);
        }
        let l = synth(&SynthSpec::new(SynthKind::Logistic, 40, 8, 1)).unwrap();
        assert!(l.data.is_binary());
    }

    #[test]
    fn ill_conditioned_spectrum() {
        let mut spec = SynthSpec::new(SynthKind::IllConditioned, 20, 10, 3);
        spec.condition = 100.0;
        let s = synth(&spec).unwrap();
        let ata = s.data.features.t().dot(&s.data.features);
        assert!((crate::smooth::top_eigenvalue(&s.data.features) - 1.0).abs() < 1e-8);
        assert!(
            (ata.diag().sum() - (0..10).map(|j| 100f64.powf(-(j as f64) / 9.0)).sum::<f64>()).abs()
                < 1e-10
        );
    }
}
