//! Dataset ingestion (CSV and IDX) and synthetic task data generators.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearningError;

/// One labeled training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: i64,
}

/// Reads a CSV dataset: every column but the last is a feature, the last
/// column is an integer label. A single non-numeric header line is skipped.
pub fn read_csv(path: &Path) -> Result<Vec<Sample>, LearningError> {
    let file = File::open(path).map_err(|e| LearningError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut samples = Vec::new();
    let mut width = None;
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LearningError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line_no == 0 => continue, // header
            Err(_) => {
                return Err(LearningError::Parse {
                    path: path.display().to_string(),
                    line: line_no + 1,
                })
            }
        };
        if values.len() < 2 {
            return Err(LearningError::Parse {
                path: path.display().to_string(),
                line: line_no + 1,
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(LearningError::Parse {
                    path: path.display().to_string(),
                    line: line_no + 1,
                })
            }
            _ => {}
        }
        let (features, label) = values.split_at(values.len() - 1);
        samples.push(Sample {
            features: features.to_vec(),
            label: label[0].round() as i64,
        });
    }
    if samples.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    Ok(samples)
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Reads an IDX image/label file pair (big-endian, magic `0x00000803` for
/// images and `0x00000801` for labels), pixel values scaled to `[0, 1]`.
pub fn read_idx_pair(images: &Path, labels: &Path) -> Result<Vec<Sample>, LearningError> {
    let image_data = read_idx_images(images)?;
    let label_data = read_idx_labels(labels)?;
    if image_data.len() != label_data.len() {
        return Err(LearningError::IdxMismatch {
            images: image_data.len(),
            labels: label_data.len(),
        });
    }
    Ok(image_data
        .into_iter()
        .zip(label_data)
        .map(|(features, label)| Sample {
            features,
            label: label as i64,
        })
        .collect())
}

fn open_bytes(path: &Path) -> Result<Vec<u8>, LearningError> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| LearningError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, LearningError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| LearningError::Idx {
            path: path.display().to_string(),
            message: "truncated header".into(),
        })
}

fn read_idx_images(path: &Path) -> Result<Vec<Vec<f64>>, LearningError> {
    let bytes = open_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(LearningError::Idx {
            path: path.display().to_string(),
            message: format!("bad image magic 0x{magic:08x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let pixels = rows * cols;
    let body = &bytes[16..];
    if body.len() < count * pixels {
        return Err(LearningError::Idx {
            path: path.display().to_string(),
            message: "truncated image body".into(),
        });
    }
    Ok((0..count)
        .map(|i| {
            body[i * pixels..(i + 1) * pixels]
                .iter()
                .map(|&p| p as f64 / 255.0)
                .collect()
        })
        .collect())
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>, LearningError> {
    let bytes = open_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(LearningError::Idx {
            path: path.display().to_string(),
            message: format!("bad label magic 0x{magic:08x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(LearningError::Idx {
            path: path.display().to_string(),
            message: "truncated label body".into(),
        });
    }
    Ok(body[..count].to_vec())
}

/// Synthetic scalar/low-dimensional quadratic data: points around `center`
/// drawn as antithetic pairs, so the shard mean equals `center` exactly and
/// the quadratic minimizer is pinned. Odd counts get one sample at the
/// center itself.
pub fn synth_quadratic(
    rng: &mut ChaCha8Rng,
    count: usize,
    dim: usize,
    center: &[f64],
    spread: f64,
) -> Vec<Sample> {
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count / 2 {
        let offsets: Vec<f64> = (0..dim)
            .map(|_| spread * rng.random_range(-1.0..1.0))
            .collect();
        samples.push(Sample {
            features: center.iter().zip(&offsets).map(|(c, o)| c + o).collect(),
            label: 0,
        });
        samples.push(Sample {
            features: center.iter().zip(&offsets).map(|(c, o)| c - o).collect(),
            label: 0,
        });
    }
    if count % 2 == 1 {
        samples.push(Sample {
            features: center.to_vec(),
            label: 0,
        });
    }
    samples
}

/// Synthetic binary logistic data: features drawn from two Gaussian-ish blobs
/// separated along a random direction, labels 0/1.
pub fn synth_logistic(
    rng: &mut ChaCha8Rng,
    count: usize,
    dim: usize,
    separation: f64,
) -> Vec<Sample> {
    let direction: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-9);
    (0..count)
        .map(|_| {
            let label = i64::from(rng.random_bool(0.5));
            let shift = if label == 1 { separation } else { -separation };
            let features = direction
                .iter()
                .map(|d| shift * d / norm + sample_gauss(rng))
                .collect();
            Sample { features, label }
        })
        .collect()
}

fn sample_gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniform draws per call keeps the stream aligned.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Partition a dataset over `nodes` shards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Round-robin over a shuffled ordering; shards are iid draws.
    UniformIid,
    /// Sort by label before sharding; shards are label-skewed.
    LabelSharded,
}

pub fn partition(
    rng: &mut ChaCha8Rng,
    samples: &[Sample],
    nodes: usize,
    mode: PartitionMode,
) -> Vec<Vec<Sample>> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    match mode {
        PartitionMode::UniformIid => {
            // Fisher-Yates with the seeded stream.
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
        }
        PartitionMode::LabelSharded => {
            order.sort_by_key(|&i| (samples[i].label, i));
        }
    }
    let mut shards = vec![Vec::new(); nodes];
    for (pos, idx) in order.into_iter().enumerate() {
        shards[pos % nodes].push(samples[idx].clone());
    }
    shards
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::io::Write;

    #[test]
    fn csv_round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "x1,x2,label").unwrap();
        writeln!(f, "0.5,-1.0,1").unwrap();
        writeln!(f, "1.5,2.0,0").unwrap();
        let samples = read_csv(&path).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].features, vec![0.5, -1.0]);
        assert_eq!(samples[0].label, 1);
        assert_eq!(samples[1].label, 0);
    }

    #[test]
    fn idx_pair_parses_big_endian() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lbl.idx");
        // 2 images of 2x2 pixels
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&[0, 255, 128, 64, 255, 0, 0, 32]);
        std::fs::write(&images, img).unwrap();
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        lbl.extend_from_slice(&2u32.to_be_bytes());
        lbl.extend_from_slice(&[7, 3]);
        std::fs::write(&labels, lbl).unwrap();

        let samples = read_idx_pair(&images, &labels).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].label, 7);
        assert!((samples[0].features[1] - 1.0).abs() < 1e-12);
        assert!((samples[1].features[3] - 32.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn partition_preserves_all_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = synth_logistic(&mut rng, 101, 3, 1.0);
        for mode in [PartitionMode::UniformIid, PartitionMode::LabelSharded] {
            let shards = partition(&mut rng, &samples, 4, mode);
            assert_eq!(shards.iter().map(Vec::len).sum::<usize>(), 101);
        }
    }
}
