use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Footstep, FootstepTree, ReachabilityModel};
use crate::geometry::{to_world, wrap_angle};

/// Forward offsets are drawn from a Gaussian truncated to the reachable
/// forward range. The mean is `mean` if set, otherwise
/// `mean_fraction * forward_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardBias {
    pub mean_fraction: f64,
    pub mean: Option<f64>,
    pub sigma: f64,
}

impl Default for ForwardBias {
    fn default() -> Self {
        Self {
            mean_fraction: 0.8,
            mean: None,
            sigma: 0.1,
        }
    }
}

impl ForwardBias {
    pub fn mean_for(&self, reach: &ReachabilityModel) -> f64 {
        self.mean.unwrap_or(self.mean_fraction * reach.forward[1])
    }

    fn sample<R: Rng + ?Sized>(&self, reach: &ReachabilityModel, rng: &mut R) -> f64 {
        let [lo, hi] = reach.forward;
        if hi <= lo {
            return lo;
        }
        if self.sigma > 0.0 && self.sigma.is_finite() {
            let n = Normal::new(self.mean_for(reach), self.sigma).expect("sigma checked");
            for _ in 0..64 {
                let v = n.sample(rng);
                if (lo..=hi).contains(&v) {
                    return v;
                }
            }
        }
        // mean far outside the range: fall back to uniform
        rng.random_range(lo..=hi)
    }
}

/// Uniform choice among nodes that can still be extended; `None` when every
/// node sits at the maximum depth.
pub fn random_support_footstep<R: Rng + ?Sized>(tree: &FootstepTree, rng: &mut R) -> Option<usize> {
    let eligible = tree.extendable();
    if eligible.is_empty() {
        return None;
    }
    Some(eligible[rng.random_range(0..eligible.len())])
}

/// Sample a footstep for the other foot inside the reachable region of
/// `support`. The returned step carries the support height; the caller sets
/// `z` from the grid.
pub fn random_footstep<R: Rng + ?Sized>(
    support: &Footstep,
    reach: &ReachabilityModel,
    bias: &ForwardBias,
    rng: &mut R,
) -> Footstep {
    let side = support.side.opposite();
    let fwd = bias.sample(reach, rng);
    let lat = uniform(reach.lateral, rng);
    let dyaw = uniform(reach.yaw, rng);
    let p = to_world(support.position(), support.yaw, [fwd, side.lateral_sign() * lat]);
    Footstep {
        side,
        x: p[0],
        y: p[1],
        z: support.z,
        yaw: wrap_angle(support.yaw + dyaw),
        footprint: support.footprint,
    }
}

fn uniform<R: Rng + ?Sized>(r: [f64; 2], rng: &mut R) -> f64 {
    if r[1] <= r[0] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{to_local, Side};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn root_only_tree_selects_root() {
        let tree = FootstepTree::new(Footstep::new(Side::Left, 0.0, 0.0, 0.0, 0.0), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_support_footstep(&tree, &mut rng), Some(0));
    }

    #[test]
    fn full_depth_tree_has_no_support() {
        let mut tree = FootstepTree::new(Footstep::new(Side::Left, 0.0, 0.0, 0.0, 0.0), 1);
        tree.insert(Footstep::new(Side::Right, 0.2, -0.2, 0.0, 0.0), 0);
        // root is still extendable, the child is not
        assert_eq!(tree.extendable(), &[0]);
        let mut tree = FootstepTree::new(Footstep::new(Side::Left, 0.0, 0.0, 0.0, 0.0), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_support_footstep(&tree, &mut rng), None);
        tree.insert(Footstep::new(Side::Right, 0.2, -0.2, 0.0, 0.0), 0);
    }

    #[test]
    fn support_selection_is_uniform() {
        let mut tree = FootstepTree::new(Footstep::new(Side::Left, 0.0, 0.0, 0.0, 0.0), 4);
        tree.insert(Footstep::new(Side::Right, 0.2, -0.2, 0.0, 0.0), 0);
        tree.insert(Footstep::new(Side::Left, 0.4, 0.0, 0.0, 0.0), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[random_support_footstep(&tree, &mut rng).unwrap()] += 1;
        }
        // multinomial: each count ~ Binomial(n, 1/3)
        let p = 1.0 / 3.0;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn degenerate_reach_gives_exact_pose() {
        let reach = ReachabilityModel {
            forward: [0.25, 0.25],
            lateral: [0.2, 0.2],
            yaw: [0.1, 0.1],
            max_height_delta: 0.1,
        };
        let sup = Footstep::new(Side::Left, 1.0, 0.5, 0.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = random_footstep(&sup, &reach, &ForwardBias::default(), &mut rng);
        let expect = to_world([1.0, 0.5], 0.3, [0.25, -0.2]);
        assert_eq!(c.side, Side::Right);
        assert!((c.x - expect[0]).abs() < 1e-12 && (c.y - expect[1]).abs() < 1e-12);
        assert!((c.yaw - 0.4).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_in_reach() {
        let reach = ReachabilityModel::default();
        let bias = ForwardBias::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (i, side) in [Side::Left, Side::Right].into_iter().cycle().take(10_000).enumerate() {
            let sup = Footstep::new(side, 0.01 * i as f64, -0.3, 0.0, wrap_angle(0.37 * i as f64));
            let c = random_footstep(&sup, &reach, &bias, &mut rng);
            assert_eq!(c.side, side.opposite());
            // invert the sampling map independently of ReachabilityModel::contains
            let local = to_local(sup.position(), sup.yaw, c.position());
            let lat = if c.side == Side::Left { local[1] } else { -local[1] };
            let dyaw = wrap_angle(c.yaw - sup.yaw);
            assert!(local[0] >= -0.05 - 1e-9 && local[0] <= 0.35 + 1e-9);
            assert!((0.15 - 1e-9..=0.30 + 1e-9).contains(&lat));
            assert!(dyaw.abs() <= 20f64.to_radians() + 1e-9);
        }
    }

    #[test]
    fn forward_offsets_are_biased() {
        let reach = ReachabilityModel::default();
        let bias = ForwardBias::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sup = Footstep::new(Side::Left, 0.0, 0.0, 0.0, 0.0);
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| random_footstep(&sup, &reach, &bias, &mut rng).x)
            .sum::<f64>()
            / n as f64;
        // uniform over [-0.05, 0.35] would average 0.15
        assert!(mean > 0.2, "mean forward {mean}");
    }
}
