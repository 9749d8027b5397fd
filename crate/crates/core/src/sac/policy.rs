use rand::Rng;
use rand_distr::StandardNormal;

use super::networks::PolicyOutput;
use crate::nn::log_one_minus_tanh_sq;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
/// Keeps squashed actions strictly inside (-1, 1) where tanh rounds to 1.
const ACTION_LIMIT: f64 = 1.0 - 1e-9;

/// `tanh(mean + std * eps)` and its log density including the squash
/// correction.
pub fn squash_with_noise(out: &PolicyOutput, eps: &[f64]) -> (Vec<f64>, f64) {
    let mut action = Vec::with_capacity(out.mean.len());
    let mut log_prob = 0.0;
    for ((m, ls), e) in out.mean.iter().zip(&out.log_std).zip(eps) {
        let u = m + ls.exp() * e;
        action.push(u.tanh().clamp(-ACTION_LIMIT, ACTION_LIMIT));
        log_prob += -0.5 * e * e - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
    }
    (action, log_prob)
}

/// Draws a squashed Gaussian action.
pub fn sample_action<R: Rng + ?Sized>(out: &PolicyOutput, rng: &mut R) -> (Vec<f64>, f64) {
    let eps: Vec<f64> = (0..out.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    squash_with_noise(out, &eps)
}

/// `tanh(mean)`, no sampling.
pub fn deterministic_action(out: &PolicyOutput) -> Vec<f64> {
    out.mean.iter().map(|m| m.tanh().clamp(-ACTION_LIMIT, ACTION_LIMIT)).collect()
}

/// Log density of a squashed action under `out`.
pub fn squashed_log_prob(out: &PolicyOutput, action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for ((m, ls), a) in out.mean.iter().zip(&out.log_std).zip(action) {
        let u = a.atanh();
        let e = (u - m) / ls.exp();
        lp += -0.5 * e * e - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn out(mean: Vec<f64>, log_std: Vec<f64>) -> PolicyOutput {
        let n = mean.len();
        PolicyOutput { mean, log_std, hidden: vec![0.0; n] }
    }

    #[test]
    fn forced_zero_noise() {
        let (a, lp) = squash_with_noise(&out(vec![0.0, 0.0], vec![0.0, 0.0]), &[0.0, 0.0]);
        assert_eq!(a, vec![0.0, 0.0]);
        assert_abs_diff_eq!(lp, 2.0 * -0.918_94, epsilon = 1e-5);
    }

    #[test]
    fn large_mean_stays_below_one() {
        let o = out(vec![30.0], vec![-20.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (a, lp) = sample_action(&o, &mut rng);
            assert!(a[0] < 1.0 && lp.is_finite());
        }
        let o = out(vec![5.0], vec![-1.0]);
        for _ in 0..100 {
            let (a, _) = sample_action(&o, &mut rng);
            assert!(a[0] < 1.0);
        }
        assert_eq!(deterministic_action(&out(vec![0.3], vec![1.0])), vec![0.3f64.tanh()]);
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let o = out(vec![rng.random_range(-1.5..1.5)], vec![rng.random_range(-1.0..0.7)]);
            // integrate over u = atanh(a) to avoid the endpoint singularity
            let n = 20_000;
            let (lo, hi) = (-12.0, 12.0);
            let du = (hi - lo) / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                let u: f64 = lo + (i as f64 + 0.5) * du;
                let a = u.tanh();
                if a.abs() >= 1.0 {
                    continue;
                }
                let jac = 1.0 - a * a;
                total += squashed_log_prob(&o, &[a]).exp() * jac * du;
            }
            assert!((total - 1.0).abs() < 0.01, "{total}");
        }
    }

    proptest! {
        #[test]
        fn actions_always_in_range(m in -50.0f64..50.0, ls in -20.0f64..2.0, e in -10.0f64..10.0) {
            let (a, lp) = squash_with_noise(&out(vec![m], vec![ls]), &[e]);
            prop_assert!(a[0].abs() < 1.0);
            prop_assert!(lp.is_finite());
        }
    }
}
