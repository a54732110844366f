//! Dataset ingestion: IDX image sets, the internal CSV form, synthetic
//! Gaussian blobs and the rotation + noise perturbation pipeline.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Sample;
use crate::rng::{derive_named_seed, rng_from_seed};
use crate::trainer::{Dataset, Split};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw IDX image set.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImageSet {
    pub rows: usize,
    pub cols: usize,
    /// `n × rows × cols` bytes, row-major per image.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset as u64, format!("truncated header reading {what}")))
}

pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<IdxImageSet> {
    let magic = be_u32(image_bytes, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(0, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(image_bytes, 4, "image count")? as usize;
    let rows = be_u32(image_bytes, 8, "rows")? as usize;
    let cols = be_u32(image_bytes, 12, "cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(8, "image dimensions must be positive"));
    }
    let expected = n
        .checked_mul(rows * cols)
        .ok_or_else(|| Error::format(4, "image count overflows"))?;
    let pixels = &image_bytes[16..];
    if pixels.len() != expected {
        return Err(Error::format(
            (16 + pixels.len().min(expected)) as u64,
            format!("image payload has {} bytes, header implies {expected}", pixels.len()),
        ));
    }

    let magic = be_u32(label_bytes, 0, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(0, format!("bad label magic {magic:#010x}")));
    }
    let label_count = be_u32(label_bytes, 4, "label count")? as usize;
    if label_count != n {
        return Err(Error::format(4, format!("{label_count} labels for {n} images")));
    }
    let labels = &label_bytes[8..];
    if labels.len() != n {
        return Err(Error::format(
            (8 + labels.len().min(n)) as u64,
            format!("label payload has {} bytes, expected {n}", labels.len()),
        ));
    }
    Ok(IdxImageSet {
        rows,
        cols,
        images: pixels.to_vec(),
        labels: labels.to_vec(),
    })
}

/// Loads an IDX image/label pair, scaling pixels to `[0, 1]`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<Dataset> {
    let set = parse_idx(&fs::read(images_path)?, &fs::read(labels_path)?)?;
    idx_to_dataset(&set, limit, Split::Test)
}

pub fn idx_to_dataset(set: &IdxImageSet, limit: Option<usize>, split: Split) -> Result<Dataset> {
    let pixels = set.rows * set.cols;
    let n = limit.map_or(set.labels.len(), |l| l.min(set.labels.len()));
    let samples: Vec<Sample> = (0..n)
        .map(|i| {
            let features = set.images[i * pixels..(i + 1) * pixels]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect();
            Sample::new(features, usize::from(set.labels[i]))
        })
        .collect();
    let classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(0).max(2);
    Dataset::new(samples, split, classes)
}

pub fn encode_idx(set: &IdxImageSet) -> (Vec<u8>, Vec<u8>) {
    let n = set.labels.len() as u32;
    let mut images = Vec::with_capacity(16 + set.images.len());
    for v in [IDX_IMAGES_MAGIC, n, set.rows as u32, set.cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend_from_slice(&set.images);
    let mut labels = Vec::with_capacity(8 + set.labels.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend_from_slice(&set.labels);
    (images, labels)
}

/// Writes the internal CSV form: `label,f0,...,f{d-1}`.
pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = data.input_dim();
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for s in &data.samples {
        let mut row = vec![s.label.to_string()];
        row.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the internal CSV form. `class_count` defaults to `max label + 1`.
pub fn read_dataset_csv<R: Read>(input: R, split: Split, class_count: Option<usize>) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::format(0, "first CSV column must be `label`"));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::format(0, format!("unexpected CSV column `{name}`, expected f{j}")));
        }
    }
    let mut samples = Vec::new();
    for record in r.records() {
        let record = record?;
        let offset = record.position().map(|p| p.byte()).unwrap_or(0);
        let label = record[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::format(offset, format!("bad label: {e}")))?;
        let features = record
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(offset, format!("bad feature: {e}")))?;
        samples.push(Sample::new(features, label));
    }
    let classes = class_count.unwrap_or_else(|| samples.iter().map(|s| s.label + 1).max().unwrap_or(0).max(2));
    Dataset::new(samples, split, classes)
}

pub fn load_dataset_csv(path: impl AsRef<Path>, split: Split, class_count: Option<usize>) -> Result<Dataset> {
    read_dataset_csv(fs::File::open(path)?, split, class_count)
}

pub const BLOB_RADIUS: f64 = 2.0;

/// Two-dimensional Gaussian blobs, one per class, centred on a circle of
/// radius [`BLOB_RADIUS`]. Sample `i` belongs to class `i % classes`. A
/// `label_noise_rate` fraction of labels is then reassigned uniformly to a
/// different class; the affected sample indices are returned sorted.
pub fn synth_blobs(
    n: usize,
    classes: usize,
    noise_sigma: f64,
    label_noise_rate: f64,
    seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    if classes < 2 {
        return Err(Error::Parameter("need at least 2 classes".into()));
    }
    if n < classes {
        return Err(Error::Parameter(format!("n = {n} is smaller than classes = {classes}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise_sigma {noise_sigma} must be >= 0")));
    }
    if !(0.0..=1.0).contains(&label_noise_rate) {
        return Err(Error::Parameter(format!("label_noise_rate {label_noise_rate} outside [0, 1]")));
    }
    let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
    let mut rng = rng_from_seed(derive_named_seed(seed, "blobs"));
    let mut samples: Vec<Sample> = (0..n)
        .map(|i| {
            let class = i % classes;
            let angle = std::f64::consts::TAU * class as f64 / classes as f64;
            let features = vec![
                BLOB_RADIUS * angle.cos() + normal.sample(&mut rng),
                BLOB_RADIUS * angle.sin() + normal.sample(&mut rng),
            ];
            Sample::new(features, class)
        })
        .collect();

    let mut rng = rng_from_seed(derive_named_seed(seed, "label-noise"));
    let flips = (label_noise_rate * n as f64).round() as usize;
    let mut noised = rand::seq::index::sample(&mut rng, n, flips).into_vec();
    noised.sort_unstable();
    for &i in &noised {
        let shift = rng.random_range(1..classes);
        samples[i].label = (samples[i].label + shift) % classes;
    }
    Ok((Dataset::new(samples, Split::Train, classes)?, noised))
}

fn square_side(dim: usize) -> Option<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    (side * side == dim).then_some(side)
}

/// Rotates a square image about its centre with bilinear resampling and
/// edge clamping.
pub fn rotate_bilinear(pixels: &[f64], side: usize, degrees: f64) -> Vec<f64> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let centre = (side as f64 - 1.0) / 2.0;
    let max = (side - 1) as f64;
    let at = |r: usize, c: usize| pixels[r * side + c];
    let mut out = Vec::with_capacity(pixels.len());
    for r in 0..side {
        for c in 0..side {
            let dx = c as f64 - centre;
            let dy = r as f64 - centre;
            // inverse rotation maps each output pixel to its source position
            let sx = (centre + cos * dx + sin * dy).clamp(0.0, max);
            let sy = (centre - sin * dx + cos * dy).clamp(0.0, max);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(side - 1), (y0 + 1).min(side - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Rotates and noises a randomly chosen `fraction` of square images.
/// Returns the perturbed dataset and the sorted perturbed sample indices;
/// every other sample is left untouched.
pub fn perturb(
    data: &Dataset,
    fraction: f64,
    rotation_max_deg: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Parameter(format!("perturbation fraction {fraction} outside [0, 1]")));
    }
    if !(rotation_max_deg >= 0.0 && noise_sigma >= 0.0) {
        return Err(Error::Parameter("rotation and noise must be nonnegative".into()));
    }
    let side = square_side(data.input_dim())
        .ok_or_else(|| Error::Shape(format!("{} features are not a square image", data.input_dim())))?;

    let mut rng = rng_from_seed(derive_named_seed(seed, "perturb"));
    let count = (fraction * data.len() as f64).round() as usize;
    let mut ids = rand::seq::index::sample(&mut rng, data.len(), count).into_vec();
    ids.sort_unstable();

    let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
    let mut out = data.clone();
    for &i in &ids {
        let sample = &mut out.samples[i];
        let angle = if rotation_max_deg > 0.0 {
            rng.random_range(-rotation_max_deg..=rotation_max_deg)
        } else {
            0.0
        };
        if angle != 0.0 {
            sample.features = rotate_bilinear(&sample.features, side, angle);
        }
        if noise_sigma > 0.0 {
            for v in sample.features.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        if angle != 0.0 || noise_sigma > 0.0 {
            for v in sample.features.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok((out, ids))
}
