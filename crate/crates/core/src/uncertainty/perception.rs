use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Maximum detection error added to the safety distance (m).
    pub d_max: f64,
    /// Distance over which detector confidence decays by a factor e (m).
    pub rho_length_scale: f64,
    /// Multiplicative degradation in (0, 1].
    pub weather_factor: f64,
    /// Standard deviations of the `(x, y, phi, v)` deviation at zero confidence.
    pub deviation_scales: [f64; 4],
    /// Collision-probability target. Carried for reference; the safety
    /// distance inflation is what enforces it.
    pub epsilon_chance: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            d_max: 2.0,
            rho_length_scale: 100.0,
            weather_factor: 1.0,
            deviation_scales: [0.5, 0.5, 0.02, 0.5],
            epsilon_chance: 1e-5,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.d_max >= 0.0
            && self.rho_length_scale > 0.0
            && self.weather_factor > 0.0
            && self.weather_factor <= 1.0
            && self.epsilon_chance > 0.0
            && self.epsilon_chance < 1.0
            && self.deviation_scales.iter().all(|s| s.is_finite() && *s >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid perception config {self:?}")))
        }
    }
}

/// Detector confidence in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceScore(f64);

impl ConfidenceScore {
    pub const ONE: ConfidenceScore = ConfidenceScore(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::invalid(format!("confidence {value} outside [0, 1]")))
        }
    }

    pub(crate) fn saturating(value: f64) -> Self {
        Self(if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Additive error on a perceived `(x, y, phi, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerceptionDeviation {
    pub dx: f64,
    pub dy: f64,
    pub dphi: f64,
    pub dv: f64,
}

/// `weather_factor * exp(-distance / rho_length_scale)`.
pub fn perception_confidence(distance: f64, cfg: &PerceptionConfig) -> Result<ConfidenceScore> {
    if !(distance >= 0.0) {
        return Err(Error::invalid(format!("distance must be non-negative, got {distance}")));
    }
    Ok(ConfidenceScore::saturating(cfg.weather_factor * (-distance / cfg.rho_length_scale).exp()))
}

/// Independent zero-mean Gaussian components with spread `scales * (1 - rho)`.
///
/// Always consumes four normal draws so the random stream does not depend on
/// the confidence value.
pub fn sample_perception_deviation<R: Rng + ?Sized>(
    rho: ConfidenceScore,
    cfg: &PerceptionConfig,
    rng: &mut R,
) -> PerceptionDeviation {
    let spread = 1.0 - rho.value();
    let mut d = [0.0; 4];
    for (out, scale) in d.iter_mut().zip(cfg.deviation_scales) {
        let z: f64 = rng.sample(StandardNormal);
        *out = if spread == 0.0 { 0.0 } else { scale * spread * z };
    }
    PerceptionDeviation { dx: d[0], dy: d[1], dphi: d[2], dv: d[3] }
}

/// Max-score fusion: returns `weight * max(scores)` and the lowest index
/// attaining the maximum.
pub fn fuse_confidence(scores: &[ConfidenceScore], weight: f64) -> Result<(ConfidenceScore, usize)> {
    let (first, rest) = scores
        .split_first()
        .ok_or_else(|| Error::invalid("cannot fuse an empty score list"))?;
    let mut best = (first.value(), 0);
    for (i, s) in rest.iter().enumerate() {
        if s.value() > best.0 {
            best = (s.value(), i + 1);
        }
    }
    Ok((ConfidenceScore::saturating(weight * best.0), best.1))
}

/// `d_min + (1 - rho) * d_max`.
pub fn dynamic_safe_distance(d_min: f64, d_max: f64, rho_effective: ConfidenceScore) -> f64 {
    d_min + (1.0 - rho_effective.value()) * d_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn score(v: f64) -> ConfidenceScore {
        ConfidenceScore::new(v).unwrap()
    }

    #[test]
    fn confidence_examples() {
        let cfg = PerceptionConfig::default();
        assert_eq!(perception_confidence(0.0, &cfg).unwrap().value(), 1.0);
        let c = perception_confidence(cfg.rho_length_scale, &cfg).unwrap();
        assert_abs_diff_eq!(c.value(), 0.36788, epsilon = 5e-6);
        let wet = PerceptionConfig { weather_factor: 0.5, ..cfg.clone() };
        assert_eq!(perception_confidence(0.0, &wet).unwrap().value(), 0.5);
        assert!(perception_confidence(-1.0, &cfg).is_err());
        assert!(ConfidenceScore::new(1.2).is_err());
    }

    #[test]
    fn deviation_zero_at_full_confidence() {
        let cfg = PerceptionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d = sample_perception_deviation(ConfidenceScore::ONE, &cfg, &mut rng);
            assert_eq!(d, PerceptionDeviation::default());
        }
    }

    fn empirical_std(rho: f64, scales: [f64; 4]) -> [f64; 4] {
        let cfg = PerceptionConfig { deviation_scales: scales, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let d = sample_perception_deviation(score(rho), &cfg, &mut rng);
            for (acc, v) in sq.iter_mut().zip([d.dx, d.dy, d.dphi, d.dv]) {
                *acc += v * v;
            }
        }
        sq.map(|s| (s / n as f64).sqrt())
    }

    #[test]
    fn deviation_spread_matches_scales() {
        let scales = [1.0, 1.0, 0.1, 0.5];
        for (rho, factor) in [(0.0, 1.0), (0.5, 0.5)] {
            let std = empirical_std(rho, scales);
            for (s, target) in std.iter().zip(scales) {
                let expected = factor * target;
                assert!((s - expected).abs() <= 0.05 * expected, "std {s} vs {expected}");
            }
        }
    }

    #[test]
    fn fusion_examples() {
        let (f, i) = fuse_confidence(&[score(0.9), score(0.5)], 1.0).unwrap();
        assert_eq!((f.value(), i), (0.9, 0));
        let (f, i) = fuse_confidence(&[score(0.9), score(0.5)], 0.5).unwrap();
        assert_abs_diff_eq!(f.value(), 0.45, epsilon = 1e-15);
        assert_eq!(i, 0);
        let (f, i) = fuse_confidence(&[score(0.7)], 1.0).unwrap();
        assert_eq!((f.value(), i), (0.7, 0));
        let (_, i) = fuse_confidence(&[score(0.2), score(0.8), score(0.8)], 1.0).unwrap();
        assert_eq!(i, 1);
        assert!(fuse_confidence(&[], 1.0).is_err());
    }

    #[test]
    fn safe_distance_examples() {
        assert_eq!(dynamic_safe_distance(10.0, 2.0, score(1.0)), 10.0);
        assert_eq!(dynamic_safe_distance(10.0, 2.0, score(0.0)), 12.0);
        assert_eq!(dynamic_safe_distance(10.0, 2.0, score(0.5)), 11.0);
    }

    proptest! {
        #[test]
        fn fusion_argmax_scale_invariant(raw in proptest::collection::vec(0.0..1.0f64, 1..8), w in 1e-3..1.0f64) {
            let scores: Vec<_> = raw.iter().map(|v| score(*v)).collect();
            let (_, a) = fuse_confidence(&scores, 1.0).unwrap();
            let (_, b) = fuse_confidence(&scores, w).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn safe_distance_monotone_affine(r1 in 0.0..1.0f64, r2 in 0.0..1.0f64, d_min in 0.1..20.0f64, d_max in 0.0..5.0f64) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let a = dynamic_safe_distance(d_min, d_max, score(lo));
            let b = dynamic_safe_distance(d_min, d_max, score(hi));
            prop_assert!(b <= a);
            let mid = dynamic_safe_distance(d_min, d_max, score(0.5 * (lo + hi)));
            prop_assert!((mid - 0.5 * (a + b)).abs() < 1e-9);
            prop_assert!(a >= d_min && a <= d_min + d_max);
        }

        #[test]
        fn confidence_nonincreasing(d1 in 0.0..500.0f64, d2 in 0.0..500.0f64) {
            let cfg = PerceptionConfig::default();
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let a = perception_confidence(near, &cfg).unwrap().value();
            let b = perception_confidence(far, &cfg).unwrap().value();
            prop_assert!(b <= a && b > 0.0 && a <= 1.0);
        }
    }
}
