//! Shared workloads for the benchmarks and the acceptance evaluation.

use std::path::PathBuf;
use std::sync::Arc;

use fet_core::dataset::{DataShard, LabelSpace, Schema};
use fet_core::rng;
use rand::Rng;

/// Root of the workspace (where `configs/` and `data/` live).
pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// `n` rows of `features` features uniform in [-1, 1]; the label is a
/// thresholded `x0 + x1 / 2` over `classes` bands, resampled uniformly for
/// 10% of rows.
pub fn synthetic(n: usize, features: usize, classes: usize, seed: u64) -> DataShard {
    let mut r = rng::stream(seed, &[0x5eed]);
    let mut values = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..features).map(|_| r.gen_range(-1.0..1.0)).collect();
        let score = row[0] + 0.5 * row[1 % features];
        let mut y = (((score + 1.5) / 3.0) * classes as f64).floor().clamp(0.0, (classes - 1) as f64) as usize;
        if r.gen_bool(0.1) {
            y = r.gen_range(0..classes);
        }
        values.extend(row);
        labels.push(y);
    }
    let schema = Arc::new(Schema::numeric(features, LabelSpace::indexed(classes).expect("at least two classes")));
    DataShard::new(schema, values, labels).expect("consistent synthetic table")
}

/// Binary table whose features take only the values 0, 1 and 2, so constant
/// ranges and tied values are common.
pub fn coarse(n: usize, features: usize, seed: u64) -> DataShard {
    let mut r = rng::stream(seed, &[0xc0a5]);
    let mut values = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..features).map(|_| f64::from(r.gen_range(0..3u8))).collect();
        labels.push(usize::from(row[0] + row[1 % features] >= 2.0) ^ usize::from(r.gen_bool(0.05)));
        values.extend(row);
    }
    let schema = Arc::new(Schema::numeric(features, LabelSpace::indexed(2).expect("two classes")));
    DataShard::new(schema, values, labels).expect("consistent synthetic table")
}
