//! Synthetic hourly notional series: daily and weekly multiplicative
//! seasonality times log-normal AR(1) noise with a shared market factor.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{RawSeriesTable, SECONDS_PER_HOUR};
use crate::error::{Error, Result};

/// 2020-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_577_836_800;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub hours: usize,
    pub assets: usize,
    pub seed: u64,
    pub start: i64,
    /// Amplitude of the 24-hour cycle.
    pub daily_amplitude: f64,
    /// Amplitude of the 168-hour cycle.
    pub weekly_amplitude: f64,
    /// AR(1) coefficient of the log noise.
    pub persistence: f64,
    /// Innovation scale of the log noise.
    pub volatility: f64,
    /// Share of each innovation drawn from the common factor, in `[0, 1]`.
    pub common_share: f64,
}

impl SynthSpec {
    pub fn new(hours: usize, assets: usize, seed: u64) -> Self {
        SynthSpec {
            hours,
            assets,
            seed,
            start: DEFAULT_START,
            daily_amplitude: 0.5,
            weekly_amplitude: 0.3,
            persistence: 0.9,
            volatility: 0.15,
            common_share: 0.5,
        }
    }
}

/// Generates `ASSET1..ASSETn` with `ASSET1` as the target.
pub fn generate(spec: &SynthSpec) -> Result<RawSeriesTable> {
    if spec.hours < 2 || spec.assets == 0 {
        return Err(Error::Config(
            "synthetic data needs at least 2 hours and 1 asset".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.daily_amplitude.abs()) || !(0.0..1.0).contains(&spec.weekly_amplitude.abs()) {
        return Err(Error::Config("seasonal amplitudes must lie in (-1, 1)".into()));
    }
    if !(0.0..=1.0).contains(&spec.common_share) || !(spec.persistence.abs() < 1.0) || !(spec.volatility >= 0.0) {
        return Err(Error::Config("invalid noise parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = libm::sqrt(spec.common_share);
    let own = libm::sqrt(1.0 - spec.common_share);
    // per-asset level and phase offsets
    let levels: Vec<f64> = (0..spec.assets)
        .map(|_| libm::exp(rng.random_range(3.0..6.0)))
        .collect();
    let phases: Vec<f64> = (0..spec.assets).map(|_| rng.random_range(0.0..2.0)).collect();
    let stationary = spec.volatility / libm::sqrt(1.0 - spec.persistence * spec.persistence);
    let mut noise: Vec<f64> = (0..spec.assets)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            stationary * z
        })
        .collect();
    let mut columns = alloc::vec![Vec::with_capacity(spec.hours); spec.assets];
    let mut timestamps = Vec::with_capacity(spec.hours);
    for t in 0..spec.hours {
        let ts = spec.start + t as i64 * SECONDS_PER_HOUR;
        timestamps.push(ts);
        let hour = ts.div_euclid(SECONDS_PER_HOUR).rem_euclid(24) as f64;
        let week_hour = (ts.div_euclid(SECONDS_PER_HOUR) + 3 * 24).rem_euclid(168) as f64;
        let common: f64 = StandardNormal.sample(&mut rng);
        for a in 0..spec.assets {
            let eps: f64 = StandardNormal.sample(&mut rng);
            noise[a] = spec.persistence * noise[a] + spec.volatility * (shared * common + own * eps);
            let daily = 1.0 + spec.daily_amplitude * libm::sin(2.0 * PI * (hour + phases[a]) / 24.0);
            let weekly = 1.0 + spec.weekly_amplitude * libm::sin(2.0 * PI * (week_hour + 24.0 * phases[a]) / 168.0);
            columns[a].push(levels[a] * daily * weekly * libm::exp(noise[a]));
        }
    }
    let names: Vec<String> = (1..=spec.assets).map(|i| alloc::format!("ASSET{i}")).collect();
    RawSeriesTable::new(timestamps, names, columns, "ASSET1")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let spec = SynthSpec::new(500, 5, 3);
        let a = generate(&spec).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a.names, ["ASSET1", "ASSET2", "ASSET3", "ASSET4", "ASSET5"]);
        assert_eq!(a, generate(&spec).unwrap());
        assert_ne!(a, generate(&SynthSpec::new(500, 5, 4)).unwrap());
        assert!(a.columns.iter().flatten().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn daily_cycle_is_visible() {
        let mut spec = SynthSpec::new(24 * 7 * 20, 1, 1);
        spec.weekly_amplitude = 0.0;
        let t = generate(&spec).unwrap();
        let mut by_hour = [0.0f64; 24];
        for (i, v) in t.columns[0].iter().enumerate() {
            by_hour[i % 24] += libm::log(*v);
        }
        let max = by_hour.iter().cloned().fold(f64::MIN, f64::max);
        let min = by_hour.iter().cloned().fold(f64::MAX, f64::min);
        // log(1.5) - log(0.5) ~ 1.1 per day, summed over 140 days
        assert!((max - min) / 140.0 > 0.5);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&SynthSpec::new(1, 5, 0)).is_err());
        assert!(generate(&SynthSpec::new(10, 0, 0)).is_err());
        let mut s = SynthSpec::new(10, 1, 0);
        s.persistence = 1.0;
        assert!(generate(&s).is_err());
    }
}
