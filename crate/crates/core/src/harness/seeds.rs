//! Seed derivation for every random stream an experiment draws.

use crate::forecast::rng::mix64;

/// What a stream is used for. The tag enters the seed hash, so streams for
/// different purposes never coincide even at equal indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedPurpose {
    PrivateData,
    Augmentation,
    OutOfSample,
}

impl SeedPurpose {
    fn tag(self) -> u64 {
        match self {
            Self::PrivateData => 0x5052_4956, // "PRIV"
            Self::Augmentation => 0x4155_474D, // "AUGM"
            Self::OutOfSample => 0x4F4F_5353, // "OOSS"
        }
    }
}

/// Folds `(base_seed, purpose, sample_size, run, producer)` through the
/// SplitMix64 finalizer, one component per round.
pub fn derive_seed(base_seed: u64, purpose: SeedPurpose, sample_size: u64, run: u64, producer: u64) -> u64 {
    [purpose.tag(), sample_size, run, producer]
        .into_iter()
        .fold(mix64(base_seed), |h, x| mix64(h ^ mix64(x.wrapping_add(h.rotate_left(17)))))
}

/// Private dataset of one producer in one grid cell.
pub fn private_data_seed(base_seed: u64, sample_size: usize, run: usize, producer: usize) -> u64 {
    derive_seed(base_seed, SeedPurpose::PrivateData, sample_size as u64, run as u64, producer as u64)
}

/// Synthetic draws a learning producer adds to its dataset.
pub fn augmentation_seed(base_seed: u64, sample_size: usize, run: usize, producer: usize) -> u64 {
    derive_seed(base_seed, SeedPurpose::Augmentation, sample_size as u64, run as u64, producer as u64)
}

/// Out-of-sample scenarios: shared by every mode and sample size of a run.
pub fn out_of_sample_seed(base_seed: u64, run: usize) -> u64 {
    derive_seed(base_seed, SeedPurpose::OutOfSample, 0, run as u64, 0)
}
