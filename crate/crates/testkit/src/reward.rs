//! Randomized check of the reward normalizer contract.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamrc_core::environment::{compute_reward, RewardNormalizer};

/// Feeds at least `calls` random throughputs (with zeros and constant runs
/// mixed in) through fresh normalizers and checks range, extrema
/// monotonicity, the degenerate value and the min-max formula. Returns the
/// number of calls made.
pub fn check_reward_contract(calls: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut made = 0;
    while made < calls {
        let mut norm = RewardNormalizer::default();
        let len = rng.random_range(1..200);
        let scale = 10f64.powi(rng.random_range(0..5));
        let constant = rng.random_bool(0.1).then(|| rng.random_range(0.0..1.0) * scale);
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..len {
            let thr = match constant {
                Some(c) => c,
                None if rng.random_bool(0.1) => 0.0,
                None => rng.random_range(0.0..1.0) * scale,
            };
            let r = compute_reward(thr, &mut norm);
            made += 1;
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("reward {r} for throughput {thr}"));
            }
            let (lo, hi) = (norm.thr_min().unwrap(), norm.thr_max().unwrap());
            if let Some((plo, phi)) = prev {
                if lo > plo || hi < phi {
                    return Err(format!("extrema narrowed from [{plo}, {phi}] to [{lo}, {hi}]"));
                }
            }
            if (i == 0 || lo == hi) && r != 0.5 {
                return Err(format!("degenerate extrema [{lo}, {hi}] gave {r}"));
            }
            if lo < hi && (r - (thr - lo) / (hi - lo)).abs() > 1e-12 {
                return Err(format!("reward {r} for {thr} in [{lo}, {hi}]"));
            }
            prev = Some((lo, hi));
        }
        // With frozen extrema the normalization preserves order.
        let mut xs: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0) * scale).collect();
        xs.sort_by(f64::total_cmp);
        let ys: Vec<f64> = xs.iter().map(|&x| norm.normalize(x)).collect();
        if ys.windows(2).any(|w| w[0] > w[1]) {
            return Err("normalization is not order-preserving".into());
        }
    }
    Ok(made)
}
