//! Per-step refresh of the uncertainty picture for every observer/object pair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::channel::{
    conditional_outage_probability, evolve_channel, outage_time, sinr, ChannelConfig, ChannelState,
};
use super::perception::{
    dynamic_safe_distance, fuse_confidence, perception_confidence, sample_perception_deviation,
    ConfidenceScore, PerceptionConfig, PerceptionDeviation,
};
use crate::dynamics::VehicleState;
use crate::error::Result;

/// Weight applied to scores during max-score fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionWeight {
    /// The outage time `sigma_t = sigma0 * P`.
    #[default]
    SigmaT,
    /// `1 - P`.
    OneMinusP,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub perception: PerceptionConfig,
    pub channel: ChannelConfig,
    pub v2v_enabled: bool,
    pub fusion_weight: FusionWeight,
    /// When false, perceived states equal true states.
    pub perception_noise: bool,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            perception: PerceptionConfig::default(),
            channel: ChannelConfig::default(),
            v2v_enabled: true,
            fusion_weight: FusionWeight::SigmaT,
            perception_noise: true,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        self.perception.validate()?;
        self.channel.validate()
    }
}

/// Uncertainty picture at one time step.
///
/// Observers are the vehicles `0..n_vehicles`; objects are all vehicles
/// followed by static obstacles. Pair tables are indexed
/// `observer * n_objects + object`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyFrame {
    pub n_vehicles: usize,
    pub n_objects: usize,
    pub confidence: Vec<ConfidenceScore>,
    pub deviation: Vec<PerceptionDeviation>,
    pub outage_prob: Vec<f64>,
    pub sigma_t: Vec<f64>,
    pub link_live: Vec<bool>,
    pub fused_confidence: Vec<ConfidenceScore>,
    pub fused_source: Vec<usize>,
    pub safe_distance: Vec<f64>,
}

impl UncertaintyFrame {
    fn pair(&self, observer: usize, object: usize) -> usize {
        debug_assert!(observer < self.n_vehicles && object < self.n_objects);
        observer * self.n_objects + object
    }

    /// Perception deviation vehicle `k` applies to object `j`: the one reported
    /// by the fused source.
    pub fn perceived_deviation(&self, k: usize, j: usize) -> PerceptionDeviation {
        let src = self.fused_source[self.pair(k, j)];
        self.deviation[self.pair(src, j)]
    }

    pub fn effective_confidence(&self, k: usize, j: usize) -> ConfidenceScore {
        self.fused_confidence[self.pair(k, j)]
    }

    pub fn safe_distance(&self, k: usize, j: usize) -> f64 {
        self.safe_distance[self.pair(k, j)]
    }

    pub fn local_confidence(&self, k: usize, j: usize) -> ConfidenceScore {
        self.confidence[self.pair(k, j)]
    }

    /// A frame with perfect perception, no outage and `d_min` everywhere.
    pub fn noiseless(n_vehicles: usize, n_objects: usize, d_min: f64) -> Self {
        let pairs = n_vehicles * n_objects;
        Self {
            n_vehicles,
            n_objects,
            confidence: vec![ConfidenceScore::ONE; pairs],
            deviation: vec![PerceptionDeviation::default(); pairs],
            outage_prob: vec![0.0; n_vehicles],
            sigma_t: vec![0.0; n_vehicles],
            link_live: vec![true; n_vehicles],
            fused_confidence: vec![ConfidenceScore::ONE; pairs],
            fused_source: (0..pairs).map(|p| p / n_objects).collect(),
            safe_distance: vec![d_min; pairs],
        }
    }
}

/// Owns the channel state of every vehicle link.
#[derive(Debug, Clone)]
pub struct UncertaintyModel {
    cfg: UncertaintyConfig,
    channels: ChannelState,
    precoders: Vec<Vec<num_complex::Complex64>>,
}

impl UncertaintyModel {
    pub fn new<R: Rng + ?Sized>(cfg: UncertaintyConfig, n_vehicles: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let precoders = cfg.channel.precoders_for(n_vehicles)?;
        let channels = ChannelState::random(n_vehicles, cfg.channel.n_antennas, rng);
        Ok(Self { cfg, channels, precoders })
    }

    pub fn config(&self) -> &UncertaintyConfig {
        &self.cfg
    }

    pub fn channels(&self) -> &ChannelState {
        &self.channels
    }

    pub fn set_perception_noise(&mut self, enabled: bool) {
        self.cfg.perception_noise = enabled;
    }

    /// Advances the channels one step and rebuilds the frame: outage
    /// probabilities (from the stale channel), channel evolution and link
    /// states, confidences and deviations, fusion, then safety distances.
    pub fn refresh<R: Rng + ?Sized>(
        &mut self,
        vehicles: &[VehicleState],
        obstacles: &[VehicleState],
        d_min: f64,
        rng: &mut R,
    ) -> Result<UncertaintyFrame> {
        let ch = &self.cfg.channel;
        let n_v = vehicles.len();
        let n_o = n_v + obstacles.len();

        let mut outage_prob = Vec::with_capacity(n_v);
        for k in 0..n_v {
            outage_prob.push(conditional_outage_probability(
                &self.channels.coefficients[k],
                k,
                &self.precoders,
                ch,
                ch.outage_samples,
                rng,
            )?);
        }
        self.channels = evolve_channel(&self.channels, ch, rng);
        let mut link_live = Vec::with_capacity(n_v);
        for k in 0..n_v {
            let others: Vec<_> = (0..n_v).filter(|i| *i != k).map(|i| self.precoders[i].clone()).collect();
            let gamma = sinr(&self.channels.coefficients[k], &self.precoders[k], &others, ch)?;
            link_live.push(gamma >= ch.gamma_threshold);
        }
        let sigma_t: Vec<f64> = outage_prob.iter().map(|p| outage_time(ch.sigma0, *p)).collect();

        let object = |j: usize| if j < n_v { &vehicles[j] } else { &obstacles[j - n_v] };
        let pcfg = &self.cfg.perception;
        let mut confidence = Vec::with_capacity(n_v * n_o);
        let mut deviation = Vec::with_capacity(n_v * n_o);
        for l in 0..n_v {
            for j in 0..n_o {
                let rho = if l == j {
                    ConfidenceScore::ONE
                } else {
                    let (a, b) = (&vehicles[l], object(j));
                    perception_confidence((a.x - b.x).hypot(a.y - b.y), pcfg)?
                };
                let dev = sample_perception_deviation(rho, pcfg, rng);
                confidence.push(rho);
                deviation.push(if self.cfg.perception_noise && l != j { dev } else { PerceptionDeviation::default() });
            }
        }

        let perception_d_max = pcfg.d_max;
        let mut fused_confidence = Vec::with_capacity(n_v * n_o);
        let mut fused_source = Vec::with_capacity(n_v * n_o);
        let mut safe_distance = Vec::with_capacity(n_v * n_o);
        let mut scores = Vec::with_capacity(n_v);
        let mut sources = Vec::with_capacity(n_v);
        for k in 0..n_v {
            let weight = match self.cfg.fusion_weight {
                FusionWeight::SigmaT => sigma_t[k],
                FusionWeight::OneMinusP => 1.0 - outage_prob[k],
            };
            for j in 0..n_o {
                let local = confidence[k * n_o + j];
                if j == k {
                    fused_confidence.push(ConfidenceScore::ONE);
                    fused_source.push(k);
                    safe_distance.push(d_min);
                    continue;
                }
                scores.clear();
                sources.clear();
                scores.push(local);
                sources.push(k);
                if self.cfg.v2v_enabled {
                    for l in (0..n_v).filter(|l| *l != k && *l != j && link_live[*l]) {
                        scores.push(confidence[l * n_o + j]);
                        sources.push(l);
                    }
                }
                let (rho_eff, src) = if sources.len() > 1 {
                    let (fused, idx) = fuse_confidence(&scores, weight)?;
                    (fused, sources[idx])
                } else {
                    (local, k)
                };
                fused_confidence.push(rho_eff);
                fused_source.push(src);
                safe_distance.push(dynamic_safe_distance(d_min, perception_d_max, rho_eff));
            }
        }

        Ok(UncertaintyFrame {
            n_vehicles: n_v,
            n_objects: n_o,
            confidence,
            deviation,
            outage_prob,
            sigma_t,
            link_live,
            fused_confidence,
            fused_source,
            safe_distance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vehicles(n: usize) -> Vec<VehicleState> {
        (0..n).map(|i| VehicleState::new(20.0 * i as f64, 1.85, 0.0, 15.0)).collect()
    }

    #[test]
    fn frame_shapes_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = UncertaintyModel::new(UncertaintyConfig::default(), 3, &mut rng).unwrap();
        let obstacles = [VehicleState::new(50.0, 1.85, 0.0, 0.0)];
        for _ in 0..50 {
            let f = model.refresh(&vehicles(3), &obstacles, 10.0, &mut rng).unwrap();
            assert_eq!(f.n_objects, 4);
            assert_eq!(f.safe_distance.len(), 12);
            for d in &f.safe_distance {
                assert!((10.0..=12.0).contains(d));
            }
            for k in 0..3 {
                assert_eq!(f.safe_distance(k, k), 10.0);
                assert_eq!(f.perceived_deviation(k, k), PerceptionDeviation::default());
                assert!((0.0..=1.0).contains(&f.outage_prob[k]));
            }
        }
    }

    #[test]
    fn two_vehicles_use_local_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = UncertaintyModel::new(UncertaintyConfig::default(), 2, &mut rng).unwrap();
        let f = model.refresh(&vehicles(2), &[], 10.0, &mut rng).unwrap();
        assert_eq!(f.fused_source[1], 0);
        assert_eq!(f.effective_confidence(0, 1), f.local_confidence(0, 1));
        let expected = dynamic_safe_distance(10.0, 2.0, f.local_confidence(0, 1));
        assert_eq!(f.safe_distance(0, 1), expected);
    }

    #[test]
    fn fusion_uses_live_links_only() {
        let cfg = UncertaintyConfig { fusion_weight: FusionWeight::OneMinusP, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = UncertaintyModel::new(cfg, 3, &mut rng).unwrap();
        for _ in 0..100 {
            let f = model.refresh(&vehicles(3), &[], 10.0, &mut rng).unwrap();
            let src = f.fused_source[2];
            assert!(src == 0 || (src == 1 && f.link_live[1]));
        }
    }

    #[test]
    fn disabled_noise_gives_true_states() {
        let cfg = UncertaintyConfig { perception_noise: false, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = UncertaintyModel::new(cfg, 3, &mut rng).unwrap();
        let f = model.refresh(&vehicles(3), &[], 10.0, &mut rng).unwrap();
        assert!(f.deviation.iter().all(|d| *d == PerceptionDeviation::default()));
    }
}
