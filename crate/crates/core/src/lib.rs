//! Injury forecasting from GPS training workloads: feature engineering,
//! oversampling, tree learners, evaluation and a weekly walk-forward simulator.

pub mod baselines;
pub mod data;
pub mod evaluation;
pub mod features;
pub mod generator;
pub mod learners;
pub mod resampling;
pub mod rules;
pub mod simulator;
pub mod table;

/// Child seed for stream `tag` of `base` (splitmix64 finalizer).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
