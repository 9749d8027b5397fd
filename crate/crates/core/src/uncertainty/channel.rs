//! Gauss-Markov channel evolution under imperfect CSIT, per-stream SINR and
//! outage estimation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutageMethod {
    #[default]
    MonteCarlo,
    /// Closed form `1 - exp(-threshold / snr)`, valid for a single antenna
    /// with no interfering streams.
    AnalyticRayleigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub n_antennas: usize,
    /// CSI quality: correlation between consecutive channel draws.
    pub epsilon_csi: f64,
    pub tx_power: f64,
    pub noise_power: f64,
    pub power_alloc: f64,
    /// One precoder per stream. Empty selects unit basis vectors.
    pub precoders: Vec<Vec<Complex64>>,
    /// Linear SINR threshold below which a link is in outage.
    pub gamma_threshold: f64,
    /// Transmission time per round of position sharing (s).
    pub sigma0: f64,
    pub outage_samples: usize,
    pub outage_method: OutageMethod,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            epsilon_csi: 0.9,
            tx_power: 1.0,
            noise_power: 0.1,
            power_alloc: 0.5,
            precoders: Vec::new(),
            gamma_threshold: 1.0,
            sigma0: 0.02,
            outage_samples: 64,
            outage_method: OutageMethod::MonteCarlo,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_antennas >= 1
            && (0.0..=1.0).contains(&self.epsilon_csi)
            && self.tx_power > 0.0
            && self.noise_power > 0.0
            && (0.0..=1.0).contains(&self.power_alloc)
            && self.gamma_threshold >= 0.0
            && self.sigma0 >= 0.0
            && self.outage_samples >= 1
            && self.precoders.iter().all(|p| p.len() == self.n_antennas);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid channel config {self:?}")))
        }
    }

    /// Precoders for `n_streams` users, falling back to basis vectors.
    pub fn precoders_for(&self, n_streams: usize) -> Result<Vec<Vec<Complex64>>> {
        if !self.precoders.is_empty() {
            if self.precoders.len() < n_streams {
                return Err(Error::Config(format!(
                    "{} precoders configured for {n_streams} streams",
                    self.precoders.len()
                )));
            }
            return Ok(self.precoders[..n_streams].to_vec());
        }
        Ok((0..n_streams)
            .map(|k| {
                let mut p = vec![Complex64::new(0.0, 0.0); self.n_antennas];
                p[k % self.n_antennas] = Complex64::new(1.0, 0.0);
                p
            })
            .collect())
    }
}

/// Channel vectors, one per follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub coefficients: Vec<Vec<Complex64>>,
}

impl ChannelState {
    /// Independent standard complex normal entries.
    pub fn random<R: Rng + ?Sized>(n_links: usize, n_antennas: usize, rng: &mut R) -> Self {
        let coefficients = (0..n_links)
            .map(|_| (0..n_antennas).map(|_| sample_complex_normal(rng)).collect())
            .collect();
        Self { coefficients }
    }
}

/// Circularly-symmetric complex normal with unit variance.
pub fn sample_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `g_t = eps * g_{t-1} + sqrt(1 - eps^2) * e_{t-1}`.
pub fn evolve_channel<R: Rng + ?Sized>(prev: &ChannelState, cfg: &ChannelConfig, rng: &mut R) -> ChannelState {
    let eps = cfg.epsilon_csi;
    let innov = (1.0 - eps * eps).max(0.0).sqrt();
    let coefficients = prev
        .coefficients
        .iter()
        .map(|g| g.iter().map(|c| c * eps + sample_complex_normal(rng) * innov).collect())
        .collect();
    ChannelState { coefficients }
}

fn inner(g: &[Complex64], p: &[Complex64]) -> Complex64 {
    g.iter().zip(p).map(|(a, b)| a.conj() * b).sum()
}

/// Instantaneous SINR of one stream with all other streams as interference.
pub fn sinr(
    channel: &[Complex64],
    own_precoder: &[Complex64],
    interferer_precoders: &[Vec<Complex64>],
    cfg: &ChannelConfig,
) -> Result<f64> {
    let m = channel.len();
    if own_precoder.len() != m || interferer_precoders.iter().any(|p| p.len() != m) {
        return Err(Error::shape(format!("channel has {m} antennas but a precoder does not")));
    }
    let gain = cfg.power_alloc * cfg.tx_power;
    let signal = inner(channel, own_precoder).norm_sqr() * gain;
    let interference: f64 = interferer_precoders
        .iter()
        .map(|p| inner(channel, p).norm_sqr() * gain)
        .sum();
    Ok(signal / (interference + cfg.noise_power))
}

fn interferers(precoders: &[Vec<Complex64>], own: usize) -> Vec<Vec<Complex64>> {
    precoders
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != own)
        .map(|(_, p)| p.clone())
        .collect()
}

/// `1 - exp(-threshold / mean_snr)` for a single-antenna Rayleigh link.
pub fn rayleigh_outage_closed_form(mean_snr: f64, threshold: f64) -> f64 {
    if threshold <= 0.0 {
        return 0.0;
    }
    1.0 - (-threshold / mean_snr).exp()
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        Err(Error::invalid("outage estimate needs at least one sample"))
    } else {
        Ok(())
    }
}

/// Probability that stream 0 falls below the SINR threshold when the channel
/// is drawn afresh from a standard complex normal.
pub fn outage_probability<R: Rng + ?Sized>(cfg: &ChannelConfig, n_samples: usize, rng: &mut R) -> Result<f64> {
    check_samples(n_samples)?;
    let precoders = cfg.precoders_for(cfg.precoders.len().max(1))?;
    let others = interferers(&precoders, 0);
    if cfg.outage_method == OutageMethod::AnalyticRayleigh {
        return analytic(cfg, &precoders[0], &others);
    }
    let mut below = 0usize;
    let mut g = vec![Complex64::new(0.0, 0.0); cfg.n_antennas];
    for _ in 0..n_samples {
        g.iter_mut().for_each(|c| *c = sample_complex_normal(rng));
        if sinr(&g, &precoders[0], &others, cfg)? < cfg.gamma_threshold {
            below += 1;
        }
    }
    Ok(below as f64 / n_samples as f64)
}

fn analytic(cfg: &ChannelConfig, own: &[Complex64], others: &[Vec<Complex64>]) -> Result<f64> {
    if cfg.n_antennas != 1 || !others.is_empty() {
        return Err(Error::Config("analytic Rayleigh outage needs one antenna and one stream".into()));
    }
    let snr = own[0].norm_sqr() * cfg.power_alloc * cfg.tx_power / cfg.noise_power;
    Ok(rayleigh_outage_closed_form(snr, cfg.gamma_threshold))
}

/// Outage probability of `stream` for the next channel realisation given the
/// current (stale) channel known at the transmitter.
pub fn conditional_outage_probability<R: Rng + ?Sized>(
    current: &[Complex64],
    stream: usize,
    precoders: &[Vec<Complex64>],
    cfg: &ChannelConfig,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    check_samples(n_samples)?;
    let own = precoders
        .get(stream)
        .ok_or_else(|| Error::shape(format!("no precoder for stream {stream}")))?;
    let others = interferers(precoders, stream);
    let eps = cfg.epsilon_csi;
    let innov = (1.0 - eps * eps).max(0.0).sqrt();
    let mut below = 0usize;
    let mut g = current.to_vec();
    for _ in 0..n_samples {
        for (next, cur) in g.iter_mut().zip(current) {
            *next = cur * eps + sample_complex_normal(rng) * innov;
        }
        if sinr(&g, own, &others, cfg)? < cfg.gamma_threshold {
            below += 1;
        }
    }
    Ok(below as f64 / n_samples as f64)
}

/// Communication outage time `sigma0 * p`.
pub fn outage_time(sigma0: f64, p: f64) -> f64 {
    sigma0 * p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn scalar_cfg() -> ChannelConfig {
        ChannelConfig {
            n_antennas: 1,
            tx_power: 1.0,
            noise_power: 1.0,
            power_alloc: 1.0,
            precoders: vec![vec![c(1.0)]],
            gamma_threshold: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn evolve_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prev = ChannelState::random(3, 4, &mut rng);
        let frozen = ChannelConfig { epsilon_csi: 1.0, ..Default::default() };
        assert_eq!(evolve_channel(&prev, &frozen, &mut rng), prev);

        let fresh = ChannelConfig { epsilon_csi: 0.0, ..Default::default() };
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let other = ChannelState::random(3, 4, &mut rng);
        // Output depends only on the innovation draw, not on the previous channel.
        assert_eq!(evolve_channel(&prev, &fresh, &mut a), evolve_channel(&other, &fresh, &mut b));
    }

    #[test]
    fn sinr_examples() {
        let cfg = ChannelConfig { power_alloc: 0.5, tx_power: 2.0, noise_power: 1.0, ..Default::default() };
        // |g.p|^2 = 4
        let g = [c(2.0), c(0.0)];
        let p = [c(1.0), c(0.0)];
        assert_abs_diff_eq!(sinr(&g, &p, &[], &cfg).unwrap(), 4.0, epsilon = 1e-12);
        assert_eq!(sinr(&[c(0.0), c(0.0)], &p, &[], &cfg).unwrap(), 0.0);
        // interference power 3 = |g.p_i|^2 * 0.5 * 2 with |g.p_i|^2 = 3
        let g = [c(2.0), c(3f64.sqrt())];
        let q = vec![c(0.0), c(1.0)];
        assert_abs_diff_eq!(sinr(&g, &p, &[q], &cfg).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(sinr(&g, &[c(1.0)], &[], &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn scalar_rayleigh_outage_matches_exponential_cdf() {
        let cfg = scalar_cfg();
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = outage_probability(&cfg, n, &mut rng).unwrap();
        let expected = 1.0 - (-1.0f64).exp();
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((p - expected).abs() < 3.0 * se, "p={p} expected={expected}");
        let analytic = ChannelConfig { outage_method: OutageMethod::AnalyticRayleigh, ..cfg };
        assert_abs_diff_eq!(outage_probability(&analytic, 1, &mut rng).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn outage_threshold_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let zero = ChannelConfig { gamma_threshold: 0.0, ..Default::default() };
        assert_eq!(outage_probability(&zero, 1000, &mut rng).unwrap(), 0.0);
        let inf = ChannelConfig { gamma_threshold: f64::INFINITY, ..Default::default() };
        assert_eq!(outage_probability(&inf, 1000, &mut rng).unwrap(), 1.0);
        assert!(outage_probability(&zero, 0, &mut rng).is_err());
    }

    #[test]
    fn outage_monotone_in_threshold_with_shared_draws() {
        let mut last = 0.0;
        for th in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 50.0] {
            let cfg = ChannelConfig { gamma_threshold: th, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let p = outage_probability(&cfg, 5000, &mut rng).unwrap();
            assert!(p >= last && (0.0..=1.0).contains(&p));
            last = p;
        }
    }

    #[test]
    fn conditional_outage_is_probability() {
        let cfg = ChannelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pre = cfg.precoders_for(2).unwrap();
        let state = ChannelState::random(2, 4, &mut rng);
        let p = conditional_outage_probability(&state.coefficients[0], 0, &pre, &cfg, 256, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&p));
        // Perfect CSI: the next channel equals the current one.
        let exact = ChannelConfig { epsilon_csi: 1.0, ..cfg.clone() };
        let g = &state.coefficients[0];
        let live = sinr(g, &pre[0], &pre[1..], &exact).unwrap() >= exact.gamma_threshold;
        let p = conditional_outage_probability(g, 0, &pre, &exact, 16, &mut rng).unwrap();
        assert_eq!(p, if live { 0.0 } else { 1.0 });
    }

    #[test]
    fn outage_time_examples() {
        assert_eq!(outage_time(0.02, 0.0), 0.0);
        assert_abs_diff_eq!(outage_time(0.02, 0.5), 0.01, epsilon = 1e-15);
        assert_eq!(outage_time(0.02, 1.0), 0.02);
    }

    #[test]
    fn unit_variance_preserved() {
        for eps in [0.0, 0.3, 0.9, 1.0] {
            let cfg = ChannelConfig { epsilon_csi: eps, n_antennas: 1, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut state = ChannelState::random(2000, 1, &mut rng);
            for _ in 0..1000 {
                state = evolve_channel(&state, &cfg, &mut rng);
            }
            let var: f64 = state.coefficients.iter().map(|g| g[0].norm_sqr()).sum::<f64>() / 2000.0;
            assert!((0.9..=1.1).contains(&var), "eps={eps} var={var}");
        }
    }
}
