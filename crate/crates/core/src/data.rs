//! Heartbeat dataset loading, deterministic batching, and a synthetic
//! generator for desk-scale runs.
//!
//! On-disk format: CSV with one header line and 129 columns per row — 128
//! signal values followed by an integer class label in 0..=4 for the classes
//! {N, L, R, A, V}. The first half of the rows is the training split, the
//! second half the test split, in file order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use thiserror::Error;

use crate::tensor::Tensor;

pub const TIMESTEPS: usize = 128;
pub const CLASSES: usize = 5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("dataset has {rows} data rows; expected a positive even count")]
    BadRowCount { rows: usize },
    #[error("empty dataset")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Samples `[count, 1, 128]` with labels in 0..=4.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Tensor,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One sample as a `[1, 1, 128]` tensor.
    pub fn sample(&self, index: usize) -> Tensor {
        let row = &self.samples.data()[index * TIMESTEPS..(index + 1) * TIMESTEPS];
        Tensor::from_vec(&[1, 1, TIMESTEPS], row.to_vec()).unwrap()
    }

    /// Gather `indices` into a batch `([n,1,128], labels)`.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<u8>) {
        let mut data = Vec::with_capacity(indices.len() * TIMESTEPS);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.samples.data()[i * TIMESTEPS..(i + 1) * TIMESTEPS]);
            labels.push(self.labels[i]);
        }
        (
            Tensor::from_vec(&[indices.len(), 1, TIMESTEPS], data).unwrap(),
            labels,
        )
    }

    /// Value range over all samples.
    pub fn stats(&self) -> (f32, f32) {
        let mut min = f32::INFINITY;
        let mut max = f32::NEG_INFINITY;
        for &v in self.samples.data() {
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }
}

/// Load the processed heartbeat CSV and split it in half: first half train,
/// second half test, preserving file order.
pub fn load_mitbih(path: &Path) -> Result<(Dataset, Dataset), DataError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut data: Vec<f32> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            continue; // header
        }
        let row = lineno; // 1-based data row index, matching file line numbers
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TIMESTEPS + 1 {
            return Err(DataError::Parse {
                row,
                msg: format!("expected {} columns, got {}", TIMESTEPS + 1, fields.len()),
            });
        }
        for (col, f) in fields[..TIMESTEPS].iter().enumerate() {
            let v: f32 = f.trim().parse().map_err(|e| DataError::Parse {
                row,
                msg: format!("column {col}: {e}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    row,
                    msg: format!("column {col}: non-finite value"),
                });
            }
            data.push(v);
        }
        let label: i64 = fields[TIMESTEPS]
            .trim()
            .parse()
            .map_err(|e| DataError::Parse {
                row,
                msg: format!("label: {e}"),
            })?;
        if !(0..CLASSES as i64).contains(&label) {
            return Err(DataError::Parse {
                row,
                msg: format!("label {label} outside 0..{CLASSES}"),
            });
        }
        labels.push(label as u8);
    }
    let rows = labels.len();
    if rows == 0 || rows % 2 != 0 {
        return Err(DataError::BadRowCount { rows });
    }
    let half = rows / 2;
    let train = Dataset {
        samples: Tensor::from_vec(&[half, 1, TIMESTEPS], data[..half * TIMESTEPS].to_vec())
            .unwrap(),
        labels: labels[..half].to_vec(),
        split: Split::Train,
    };
    let test = Dataset {
        samples: Tensor::from_vec(&[half, 1, TIMESTEPS], data[half * TIMESTEPS..].to_vec())
            .unwrap(),
        labels: labels[half..].to_vec(),
        split: Split::Test,
    };
    Ok((train, test))
}

/// Deterministic per-epoch batch order: a seeded shuffle of all indices,
/// chunked into batches of `n` with the final partial batch dropped.
pub fn batch_indices(count: usize, n: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(n >= 1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut idx: Vec<usize> = (0..count).collect();
    // Fisher-Yates
    for i in (1..count).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx.chunks_exact(n).map(|c| c.to_vec()).collect()
}

fn class_waveform(class: u8, t: usize, shift: i32) -> f32 {
    let tt = t as f32 - shift as f32;
    let tau = tt / (TIMESTEPS as f32 - 1.0);
    let gauss = |center: f32, width: f32, amp: f32| {
        let d = tt - center;
        amp * (-d * d / (2.0 * width * width)).exp()
    };
    match class {
        // single broad beat
        0 => gauss(64.0, 8.0, 1.0) + 0.05 * (2.0 * std::f32::consts::PI * tau).sin(),
        // double beat
        1 => gauss(40.0, 6.0, 0.9) + gauss(88.0, 6.0, 0.9),
        // sharp spike with trailing dip
        2 => gauss(60.0, 2.5, 1.3) - gauss(72.0, 5.0, 0.6),
        // slow oscillation
        3 => 0.8 * (3.0 * std::f32::consts::PI * tau).sin(),
        // plateau
        _ => {
            if (48.0..80.0).contains(&tt) {
                0.9
            } else {
                gauss(48.0, 3.0, 0.45) + gauss(80.0, 3.0, 0.45)
            }
        }
    }
}

/// Synthetic five-class dataset with separable waveform morphologies plus
/// noise and timing jitter. Labels cycle 0..4 so counts stay balanced.
pub fn synth_ecg(count: usize, seed: u64) -> Dataset {
    assert!(count >= CLASSES, "need at least one sample per class");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(count * TIMESTEPS);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = (i % CLASSES) as u8;
        let shift = rng.gen_range(-4i32..=4);
        for t in 0..TIMESTEPS {
            // Box-Muller noise from two uniform draws
            let u1: f32 = rng.gen::<f32>().max(1e-7);
            let u2: f32 = rng.gen();
            let noise = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos() * 0.05;
            data.push(class_waveform(class, t, shift) + noise);
        }
        labels.push(class);
    }
    Dataset {
        samples: Tensor::from_vec(&[count, 1, TIMESTEPS], data).unwrap(),
        labels,
        split: Split::Train,
    }
}

/// Generate a synthetic dataset and split it like the CSV loader: first half
/// train, second half test.
pub fn synth_split(count: usize, seed: u64) -> (Dataset, Dataset) {
    let all = synth_ecg(count, seed);
    let half = count / 2;
    let train = Dataset {
        samples: Tensor::from_vec(
            &[half, 1, TIMESTEPS],
            all.samples.data()[..half * TIMESTEPS].to_vec(),
        )
        .unwrap(),
        labels: all.labels[..half].to_vec(),
        split: Split::Train,
    };
    let rest = count - half;
    let test = Dataset {
        samples: Tensor::from_vec(
            &[rest, 1, TIMESTEPS],
            all.samples.data()[half * TIMESTEPS..].to_vec(),
        )
        .unwrap(),
        labels: all.labels[half..].to_vec(),
        split: Split::Test,
    };
    (train, test)
}
