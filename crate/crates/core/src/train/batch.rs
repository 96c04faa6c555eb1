//! Mini-batches of distinct originals followed by their quarter-turn rotations.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::dataset::{images_to_tensor, LabeledImage};
use crate::nn::{Real, Tensor};
use crate::raster::{rotate_quarter_turns, Raster};

use super::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Vec<Raster>,
    pub labels: Vec<usize>,
    /// Counter-clockwise quarter turns applied to each image (0 for originals).
    pub turns: Vec<u8>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        images_to_tensor(&self.images.iter().collect::<Vec<_>>())
    }
}

/// The given originals, then each one rotated by 90, 180 or 270 degrees
/// drawn uniformly.
pub fn assemble_from<R: Rng + ?Sized>(pool: &[LabeledImage], originals: &[usize], rng: &mut R) -> Batch {
    let n = originals.len();
    let mut b = Batch {
        images: Vec::with_capacity(2 * n),
        labels: Vec::with_capacity(2 * n),
        turns: Vec::with_capacity(2 * n),
    };
    for &i in originals {
        b.images.push(pool[i].image.clone());
        b.labels.push(pool[i].label);
        b.turns.push(0);
    }
    for &i in originals {
        let turns = rng.random_range(1..=3u8);
        b.images.push(rotate_quarter_turns(&pool[i].image, turns));
        b.labels.push(pool[i].label);
        b.turns.push(turns);
    }
    b
}

fn check_size(batch_size: usize) -> Result<usize, TrainError> {
    if batch_size == 0 || batch_size % 2 != 0 {
        return Err(TrainError::Config(format!(
            "batch size {batch_size} must be even and positive"
        )));
    }
    Ok(batch_size / 2)
}

/// Draws `batch_size / 2` distinct originals and appends their rotations.
/// A pool that is too small is padded by resampling with replacement.
pub fn assemble_minibatch<R: Rng + ?Sized>(
    pool: &[LabeledImage],
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch, TrainError> {
    let half = check_size(batch_size)?;
    if pool.is_empty() {
        return Err(TrainError::Config("cannot draw a batch from an empty pool".into()));
    }
    let originals = if pool.len() >= half {
        index::sample(rng, pool.len(), half).into_vec()
    } else {
        log::warn!(
            "pool of {} is smaller than {half}; resampling with replacement",
            pool.len()
        );
        let mut v: Vec<usize> = (0..pool.len()).collect();
        v.extend((pool.len()..half).map(|_| rng.random_range(0..pool.len())));
        v
    };
    Ok(assemble_from(pool, &originals, rng))
}

/// Original-image groups covering a shuffled pass over `n` items. The last
/// short group is filled with distinct items from outside it.
pub fn epoch_plan<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>, TrainError> {
    let half = check_size(batch_size)?;
    if n == 0 {
        return Err(TrainError::Config("empty training split".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut groups: Vec<Vec<usize>> = order.chunks(half).map(|c| c.to_vec()).collect();
    let last = groups.last_mut().expect("n > 0");
    if last.len() < half {
        let need = half - last.len();
        let mut rest: Vec<usize> = (0..n).filter(|i| !last.contains(i)).collect();
        if rest.len() >= need {
            rest.shuffle(rng);
            last.extend_from_slice(&rest[..need]);
        } else {
            log::warn!("training split of {n} is smaller than {half}; resampling with replacement");
            last.extend(rest.iter().copied());
            while last.len() < half {
                last.push(rng.random_range(0..n));
            }
        }
    }
    Ok(groups)
}
