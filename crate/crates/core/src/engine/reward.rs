use super::config::RewardAssign;
use crate::hierarchy::NodeId;

/// `(total − selected) / (total + λ·selected)`.
pub fn quantity_reward(total: usize, selected: usize, lambda: f64) -> f64 {
    debug_assert!(selected <= total && lambda >= 0.0);
    let (n, s) = (total as f64, selected as f64);
    (n - s) / (n + lambda * s)
}

/// `α·r_perf + (1−α)·r_quantity`.
pub fn combined_reward(r_perf: f64, r_quantity: f64, alpha: f64) -> f64 {
    alpha * r_perf + (1.0 - alpha) * r_quantity
}

/// Reward received by each activated agent, in `activated` order.
pub fn assign_rewards(r_total: f64, activated: &[NodeId], mode: RewardAssign) -> Vec<(NodeId, f64)> {
    assert!(!activated.is_empty(), "the root is always activated");
    let share = match mode {
        RewardAssign::Split => r_total / activated.len() as f64,
        RewardAssign::Broadcast => r_total,
    };
    activated.iter().map(|&id| (id, share)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantity_examples() {
        assert!((quantity_reward(44, 11, 0.6) - 33.0 / 50.6).abs() < 1e-12);
        assert_eq!(quantity_reward(10, 0, 0.6), 1.0);
        assert_eq!(quantity_reward(10, 10, 0.6), 0.0);
    }

    #[test]
    fn combined_examples() {
        assert!((combined_reward(0.9, 0.5, 0.4) - 0.66).abs() < 1e-12);
        assert_eq!(combined_reward(0.9, 0.5, 1.0), 0.9);
        assert_eq!(combined_reward(0.9, 0.5, 0.0), 0.5);
    }

    #[test]
    fn assignment_examples() {
        let split = assign_rewards(0.6, &[4, 2, 3], RewardAssign::Split);
        assert!(split.iter().all(|&(_, r)| (r - 0.2).abs() < 1e-15));
        assert_eq!(assign_rewards(0.6, &[4], RewardAssign::Split), vec![(4, 0.6)]);
        assert!(assign_rewards(0.0, &[1, 2], RewardAssign::Split).iter().all(|&(_, r)| r == 0.0));
        assert_eq!(assign_rewards(0.6, &[1, 2], RewardAssign::Broadcast), vec![(1, 0.6), (2, 0.6)]);
    }

    proptest! {
        #[test]
        fn quantity_is_bounded_and_decreasing(total in 1usize..200, lambda in 0.0f64..5.0) {
            let mut prev = f64::INFINITY;
            for s in 0..=total {
                let r = quantity_reward(total, s, lambda);
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!(r < prev);
                prev = r;
            }
        }

        #[test]
        fn combined_is_convex(p in 0.0f64..=1.0, q in 0.0f64..=1.0, a in 0.0f64..=1.0) {
            let r = combined_reward(p, q, a);
            prop_assert!(r >= p.min(q) - 1e-15 && r <= p.max(q) + 1e-15);
        }

        #[test]
        fn split_conserves_reward(r in -2.0f64..2.0, n in 1usize..200) {
            let ids: Vec<usize> = (0..n).collect();
            let total: f64 = assign_rewards(r, &ids, RewardAssign::Split).iter().map(|x| x.1).sum();
            prop_assert!((total - r).abs() < 1e-12);
        }
    }
}
