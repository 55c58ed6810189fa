use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub train_counts: Vec<usize>,
    pub val_counts: Vec<usize>,
}

/// Greedy image-level split that keeps every class near `val_fraction` of
/// its instances in validation.
///
/// Each class with at least two instances targets between one and `n - 1`
/// validation instances, so it lands in both halves whenever its instances
/// span several images. Background-only images are balanced as one extra
/// pseudo-class. Images are visited in a seeded shuffle, rarest class first,
/// and each goes to whichever side lowers the squared deviation from the
/// per-class targets (train on ties).
pub fn stratified_split(samples: &[Sample], num_classes: usize, val_fraction: f64, seed: u64) -> DatasetSplit {
    let bg = num_classes;
    let counts_of = |s: &Sample| {
        let mut k = vec![0usize; num_classes + 1];
        for g in &s.gts {
            k[g.class_id.min(num_classes - 1)] += 1;
        }
        if s.gts.is_empty() {
            k[bg] = 1;
        }
        k
    };
    let per_image: Vec<Vec<usize>> = samples.iter().map(counts_of).collect();
    let mut totals = vec![0usize; num_classes + 1];
    for k in &per_image {
        for (t, v) in totals.iter_mut().zip(k) {
            *t += v;
        }
    }
    for (c, &n) in totals[..num_classes].iter().enumerate() {
        if n == 1 {
            warn!("class {c} has a single instance; it stays in train");
        }
    }
    let target_val: Vec<f64> = totals
        .iter()
        .map(|&n| {
            if n >= 2 {
                (val_fraction * n as f64).clamp(1.0, n as f64 - 1.0)
            } else {
                0.0
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let rarity = |i: usize| {
        per_image[i]
            .iter()
            .zip(&totals)
            .filter(|(&k, _)| k > 0)
            .map(|(_, &n)| n)
            .min()
            .unwrap_or(usize::MAX)
    };
    order.sort_by_key(|&i| rarity(i));

    let mut val = vec![0usize; num_classes + 1];
    let mut train = vec![0usize; num_classes + 1];
    let mut is_val = vec![false; samples.len()];
    for i in order {
        let k = &per_image[i];
        let mut delta = 0.0;
        for c in 0..=num_classes {
            if k[c] == 0 || totals[c] == 0 {
                continue;
            }
            let n = totals[c] as f64;
            let tv = target_val[c];
            let tt = n - tv;
            let (v, t, kc) = (val[c] as f64, train[c] as f64, k[c] as f64);
            let to_val = (v + kc - tv).powi(2) + (t - tt).powi(2);
            let to_train = (v - tv).powi(2) + (t + kc - tt).powi(2);
            delta += (to_val - to_train) / n;
        }
        let target = if delta < 0.0 { &mut val } else { &mut train };
        for (a, b) in target.iter_mut().zip(k) {
            *a += b;
        }
        is_val[i] = delta < 0.0;
    }
    let ids = |want: bool| {
        samples
            .iter()
            .zip(&is_val)
            .filter(|(_, &v)| v == want)
            .map(|(s, _)| s.id.clone())
            .collect()
    };
    DatasetSplit {
        train: ids(false),
        val: ids(true),
        train_counts: train[..num_classes].to_vec(),
        val_counts: val[..num_classes].to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::{BBox, GroundTruth};
    use crate::data::Image;

    fn samples(classes: &[usize]) -> Vec<Sample> {
        classes
            .iter()
            .enumerate()
            .map(|(i, &c)| Sample {
                id: format!("{i:03}"),
                image: Image::new(1, 1),
                gts: vec![GroundTruth {
                    class_id: c,
                    bbox: BBox::new(0., 0., 1., 1.),
                }],
            })
            .collect()
    }

    #[test]
    fn ten_single_class_images() {
        let s = stratified_split(&samples(&[0; 10]), 1, 0.2, 3);
        assert_eq!((s.train.len(), s.val.len()), (8, 2));
    }

    #[test]
    fn long_tail_targets() {
        let mut cls = vec![0; 100];
        cls.extend([1; 10]);
        let s = stratified_split(&samples(&cls), 2, 0.2, 9);
        assert_eq!(s.val_counts, vec![20, 2]);
        assert_eq!(s, stratified_split(&samples(&cls), 2, 0.2, 9));
    }

    #[test]
    fn pair_class_lands_on_both_sides() {
        let s = stratified_split(&samples(&[0, 0, 1, 1, 1, 1, 1]), 2, 0.2, 0);
        assert_eq!(s.val_counts[0], 1);
        assert_eq!(s.train_counts[0], 1);
    }
}
