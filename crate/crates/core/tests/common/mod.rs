#![allow(dead_code)]

use std::sync::Arc;

use fet_core::dataset::{DataShard, LabelSpace, Schema};
use fet_core::rng;
use rand::Rng;

/// `n` rows of `features` uniform features; the label is a noisy function of
/// the first two features, over `classes` classes.
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
    let schema = Arc::new(Schema::numeric(features, LabelSpace::indexed(classes).unwrap()));
    DataShard::new(schema, values, labels).unwrap()
}

/// Like [`synthetic`] but every feature takes only a few integer values, so
/// constant ranges and ties occur often.
pub fn coarse(n: usize, features: usize, seed: u64) -> DataShard {
    let mut r = rng::stream(seed, &[0xc0a5]);
    let mut values = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..features).map(|_| f64::from(r.gen_range(0..3u8))).collect();
        labels.push(usize::from(row[0] + row[1 % features] >= 2.0) ^ usize::from(r.gen_bool(0.05)));
        values.extend(row);
    }
    let schema = Arc::new(Schema::numeric(features, LabelSpace::indexed(2).unwrap()));
    DataShard::new(schema, values, labels).unwrap()
}
