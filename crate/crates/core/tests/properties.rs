use proptest::prelude::*;
use stepstone::geometry::Side;
use stepstone::pattern::{retarget_swing, swing_trajectory, GaitConfig, GaitGenerator};
use stepstone::planner::{
    self, best_footstep_path, footstep_path_candidates, safety_score, stepping_stone_grid, validity_test, Budget,
    Footstep, FootstepTree, PlannerConfig, SafetyScorer,
};
use stepstone::stabilization::{czmp, damping_feedback, CapturePointFeedback, CompliantLipm};
use stepstone::terrain::{
    build_steppable_grid, crop_and_downsample, generate_synthetic_cloud, segment_planes, MappingConfig, TerrainBox,
};

fn box_strategy(id: u32) -> impl Strategy<Value = TerrainBox> {
    (0.3..1.7f64, -0.25..0.25f64, 0.2..0.4f64, 0.2..0.4f64, 0.0..0.12f64).prop_map(move |(x, y, sx, sy, top)| {
        TerrainBox {
            id,
            center: [x, y],
            size: [sx, sy],
            top,
        }
    })
}

fn scene_strategy() -> impl Strategy<Value = Vec<TerrainBox>> {
    (1usize..=3).prop_flat_map(|n| (0..n as u32).map(box_strategy).collect::<Vec<_>>())
}

fn inside_with_margin(b: &TerrainBox, p: [f64; 2], margin: f64) -> bool {
    (0..2).all(|k| (p[k] - b.center[k]).abs() <= 0.5 * b.size[k] - margin)
}

fn near(b: &TerrainBox, p: [f64; 2], margin: f64) -> bool {
    (0..2).all(|k| (p[k] - b.center[k]).abs() <= 0.5 * b.size[k] + margin)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mapped_grid_is_consistent_with_planes_and_scene(
        scene in scene_strategy(),
        noise in 0.0..0.003f64,
        seed in 0u64..1000,
    ) {
        let cfg = MappingConfig::default();
        let density = (1.5 / cfg.voxel_downsample).powi(2);
        let raw = generate_synthetic_cloud(&scene, noise, density, seed).unwrap();
        let cloud = crop_and_downsample(&raw, &cfg);
        let planes = segment_planes(&cloud, &cfg).unwrap();
        let thresh = cfg.ransac_dist_threshold;
        for p in &planes {
            prop_assert!(p.tilt_deg() <= cfg.max_tilt_deg + 1e-9);
            for &i in &p.inliers {
                prop_assert!(p.distance(&cloud.points[i]) <= thresh + 1e-12);
            }
        }

        let grid = build_steppable_grid(&planes, &cloud, &cfg);
        prop_assert_eq!(&grid, &build_steppable_grid(&planes, &cloud, &cfg));
        let res = grid.resolution();
        for iy in 0..grid.ny() {
            for ix in 0..grid.nx() {
                let c = grid.get(ix, iy);
                let center = grid.cell_center(ix, iy);
                if !c.steppable {
                    continue;
                }
                let k = c.plane_id.expect("steppable cell has a plane") as usize;
                prop_assert!((c.height - planes[k].height_at(center[0], center[1])).abs() <= thresh);
                prop_assert!(scene.iter().any(|b| near(b, center, res)), "steppable cell at {center:?} off every box");
                // a cell well inside the highest box covering it sits at that box's top
                let top = scene
                    .iter()
                    .filter(|b| near(b, center, 2.0 * res))
                    .map(|b| b.top)
                    .fold(f64::NEG_INFINITY, f64::max);
                let clear = scene.iter().any(|b| b.top == top && inside_with_margin(b, center, 2.0 * res));
                if clear {
                    prop_assert!((c.height - top).abs() <= thresh, "height {} vs top {top}", c.height);
                }
            }
        }
    }
}

fn q_init(side: Side, x: f64) -> Footstep {
    let grid = stepping_stone_grid();
    let y = 0.13 * side.lateral_sign();
    let mut q = Footstep::new(side, x, y, 0.0, 0.0);
    q.z = validity_test(&q, &grid).expect("start pose on the platform");
    q
}

fn side_strategy() -> impl Strategy<Value = Side> {
    prop_oneof![Just(Side::Left), Just(Side::Right)]
}

fn iteration_cfg(seed: u64, iterations: usize) -> PlannerConfig {
    PlannerConfig {
        budget: Budget::Iterations(iterations),
        seed,
        ..PlannerConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn planned_paths_are_valid_reachable_and_alternating(
        side in side_strategy(),
        x in 0.08..0.11f64,
        seed in any::<u64>(),
        iterations in 200usize..1500,
    ) {
        let grid = stepping_stone_grid();
        let q = q_init(side, x);
        let cfg = iteration_cfg(seed, iterations);
        let Ok(out) = planner::plan(&grid, &q, &cfg) else { return Ok(()) };
        let steps = &out.path.steps;
        prop_assert!(!steps.is_empty() && steps.len() <= cfg.max_steps);
        let mut prev = q;
        for s in steps {
            prop_assert_eq!(s.side, prev.side.opposite());
            prop_assert!(cfg.reach.contains(&prev, s));
            let z = validity_test(s, &grid);
            prop_assert!(z.is_some_and(|z| (z - s.z).abs() < 1e-12));
            prev = *s;
        }
        let scorer = SafetyScorer::new(q.footprint, &cfg.scorer);
        let score = safety_score(steps, &grid, &scorer);
        prop_assert!((score - out.path.score).abs() <= 1e-9 * (1.0 + score.abs()));
        prop_assert!(score >= 0.0 && score <= scorer.max_per_step() * steps.len() as f64 + 1e-9);

        let again = planner::plan(&grid, &q, &cfg).unwrap();
        prop_assert_eq!(&out.path, &again.path);
    }

    #[test]
    fn removing_steppable_cells_never_raises_the_score(
        seed in any::<u64>(),
        removals in prop::collection::vec((0usize..4, -6i64..=6, -6i64..=6), 1..40),
    ) {
        let mut grid = stepping_stone_grid();
        let q = q_init(Side::Left, 0.1);
        let cfg = iteration_cfg(seed, 800);
        let Ok(out) = planner::plan(&grid, &q, &cfg) else { return Ok(()) };
        let steps = out.path.steps;
        let scorer = SafetyScorer::new(q.footprint, &cfg.scorer);
        let mut last = safety_score(&steps, &grid, &scorer);
        for (k, dx, dy) in removals {
            let s = &steps[k % steps.len()];
            let Some((ix, iy)) = grid.cell_of(s.x, s.y) else { continue };
            let (ix, iy) = (ix as i64 + dx, iy as i64 + dy);
            if ix < 0 || iy < 0 || ix >= grid.nx() as i64 || iy >= grid.ny() as i64 {
                continue;
            }
            grid.set(ix as usize, iy as usize, stepstone::terrain::Cell::BLOCKED);
            let now = safety_score(&steps, &grid, &scorer);
            prop_assert!(now <= last + 1e-12, "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn random_trees_are_well_formed_and_best_path_dominates(
        inserts in prop::collection::vec((any::<prop::sample::Index>(), 0.0..0.8f64, -0.3..0.3f64), 1..60),
        max_depth in 1usize..6,
    ) {
        let grid = stepping_stone_grid();
        let root = q_init(Side::Left, 0.1);
        let mut tree = FootstepTree::new(root, max_depth);
        for (pick, x, y) in inserts {
            let ext = tree.extendable();
            if ext.is_empty() {
                break;
            }
            let parent = ext[pick.index(ext.len())];
            let side = tree.nodes()[parent].footstep.side.opposite();
            let mut step = Footstep::new(side, x, y, 0.0, 0.0);
            step.z = validity_test(&step, &grid).unwrap_or(0.0);
            tree.insert(step, parent);
        }
        for (i, n) in tree.nodes().iter().enumerate() {
            match n.parent {
                None => prop_assert!(i == 0 && n.depth == 0),
                Some(p) => {
                    prop_assert!(p < i);
                    prop_assert_eq!(n.depth, tree.nodes()[p].depth + 1);
                    prop_assert!(n.depth <= max_depth);
                }
            }
        }

        let candidates = footstep_path_candidates(&tree);
        if candidates.is_empty() {
            return Ok(());
        }
        let scorer = SafetyScorer::new(root.footprint, &Default::default());
        let best = best_footstep_path(candidates.clone(), &grid, &scorer).unwrap();
        for c in &candidates {
            prop_assert_eq!(c.steps.len(), tree.nodes()[c.leaf].depth);
            let score = safety_score(&c.steps, &grid, &scorer);
            prop_assert!(
                c.steps.len() < best.steps.len() || (c.steps.len() == best.steps.len() && score <= best.score),
                "candidate ({}, {score}) beats best ({}, {})", c.steps.len(), best.steps.len(), best.score
            );
        }
    }
}

fn walk_steps(n: usize, shift: f64) -> Vec<Footstep> {
    (0..n)
        .map(|i| {
            let (side, y) = if i % 2 == 0 {
                (Side::Right, -0.1)
            } else {
                (Side::Left, 0.1)
            };
            Footstep::new(side, 0.15 * (i + 1) as f64 + shift, y, 0.0, 0.0)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sdb_mutations_keep_com_continuous_and_revisions_increasing(
        mutations in prop::collection::vec((0.05..0.8f64, -0.06..0.06f64, 4usize..8), 1..4),
    ) {
        let left = Footstep::new(Side::Left, 0.0, 0.1, 0.0, 0.0);
        let right = Footstep::new(Side::Right, 0.0, -0.1, 0.0, 0.0);
        let mut g = GaitGenerator::new(GaitConfig::default(), left, right, Side::Right).unwrap();
        g.submit(&walk_steps(8, 0.0), 0).unwrap();
        let mut last_rev = g.sdb().revision();
        for (wait, shift, n) in mutations {
            let until = g.now() + wait;
            while g.now() < until {
                let out = g.step().unwrap();
                prop_assert!(out.revision >= last_rev);
                last_rev = out.revision;
            }
            let before = *g.com();
            let rev = g.sdb().revision();
            let mut plan: Vec<Footstep> = g.sdb().entries()[g.sdb().cursor()..]
                .iter()
                .map(|e| Footstep { x: e.target.x + shift, ..e.target })
                .collect();
            while plan.len() < n {
                let last = plan.last().copied().unwrap_or(*g.sdb().last_two().0);
                let side = last.side.opposite();
                plan.push(Footstep::new(side, last.x + 0.15, 0.1 * side.lateral_sign(), 0.0, 0.0));
            }
            match g.submit(&plan, rev) {
                Ok(()) => {
                    prop_assert_eq!(g.sdb().revision(), rev + 1);
                    prop_assert!(g.submit(&plan, rev).is_err(), "stale revision accepted");
                }
                Err(_) => prop_assert_eq!(g.sdb().revision(), rev),
            }
            prop_assert_eq!(*g.com(), before);
            last_rev = g.sdb().revision();
        }
    }

    #[test]
    fn swings_land_on_target_at_rest(
        target in (0.05..0.4f64, -0.25..-0.05f64, -0.05..0.08f64, -0.4..0.4f64),
        moved in (-0.1..0.1f64, -0.05..0.05f64, -0.02..0.02f64),
        duration in 0.3..0.9f64,
        apex in 0.02..0.08f64,
        retarget_at in prop::option::of(0.0..1.0f64),
    ) {
        let start = Footstep::new(Side::Right, 0.0, -0.1, 0.0, 0.0);
        let goal = Footstep::new(Side::Right, target.0, target.1, target.2, target.3);
        let mut traj = swing_trajectory(&start, &goal, 0.0, duration, apex).unwrap();
        let mut want = goal;
        if let Some(frac) = retarget_at {
            let now = frac * (duration - 0.1);
            want = Footstep::new(Side::Right, goal.x + moved.0, goal.y + moved.1, goal.z + moved.2, goal.yaw);
            traj = retarget_swing(&traj, now, &want, 0.1).unwrap();
        }
        let end = traj.eval(traj.t_end());
        for (k, p) in [want.x, want.y, want.z].into_iter().enumerate() {
            prop_assert!((end.pos[k] - p).abs() < 1e-9);
            prop_assert!(end.vel[k].abs() < 1e-9);
        }
        prop_assert!((end.yaw - want.yaw).abs() < 1e-9);
    }

    #[test]
    fn damping_feedback_places_poles_exactly(
        mass in 20.0..80.0f64,
        stiffness in 1e3..1e5f64,
        damping in 0.0..500.0f64,
        omega in 5.0..60.0f64,
        zeta in 0.1..0.99f64,
    ) {
        let model = CompliantLipm::new(mass, stiffness, damping, 0.8).unwrap();
        let ctrl = damping_feedback(&model, omega, zeta).unwrap();
        let (re, im) = (-zeta * omega, omega * (1.0 - zeta * zeta).sqrt());
        for p in ctrl.closed_loop_poles(&model) {
            prop_assert!((p.re - re).abs() <= 1e-6 * omega);
            prop_assert!((p.im.abs() - im).abs() <= 1e-6 * omega);
        }
    }

    #[test]
    fn czmp_equals_reference_when_capture_points_agree(
        cp in (-2.0..2.0f64, -2.0..2.0f64),
        zmp in (-2.0..2.0f64, -2.0..2.0f64),
        k_cp in 0.1..10.0f64,
    ) {
        let fb = CapturePointFeedback::new(k_cp, 0.8, 9.81).unwrap();
        let out = czmp([cp.0, cp.1], [cp.0, cp.1], [zmp.0, zmp.1], &fb);
        prop_assert_eq!(out, [zmp.0, zmp.1]);
    }
}
