use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::Aabb;

use super::{Frame, MappingConfig, Point, PointCloud, RigidTransform, TerrainBox, TerrainError};

/// Map a sensor-frame cloud into the robot base frame: `p' = R p + t`.
pub fn transform_to_base(cloud: PointCloud, sensor_pose: &RigidTransform) -> Result<PointCloud, TerrainError> {
    if cloud.frame != Frame::Sensor {
        return Err(TerrainError::WrongFrame {
            expected: Frame::Sensor,
            found: cloud.frame,
        });
    }
    let t = sensor_pose.translation.vector;
    let q = sensor_pose.rotation.coords;
    if !(t.iter().all(|v| v.is_finite()) && q.iter().all(|v| v.is_finite())) {
        return Err(TerrainError::InvalidPose);
    }
    let rot = sensor_pose.rotation.to_rotation_matrix();
    let mut points = cloud.points;
    for p in &mut points {
        *p = rot * *p + t;
    }
    Ok(PointCloud::new(points, Frame::Base))
}

/// Crop to the region of interest and keep one representative (the
/// centroid) per occupied voxel. Output order follows first appearance, so
/// the result is a deterministic function of the input order.
pub fn crop_and_downsample(cloud: &PointCloud, cfg: &MappingConfig) -> PointCloud {
    let inv = 1.0 / cfg.voxel_downsample;
    let fp = cfg.roi.footprint();
    let kx0 = (fp.min[0] * inv).floor() as i64;
    let ky0 = (fp.min[1] * inv).floor() as i64;
    let nkx = ((fp.max[0] * inv).floor() as i64 - kx0 + 1).max(0) as usize;
    let nky = ((fp.max[1] * inv).floor() as i64 - ky0 + 1).max(0) as usize;
    // each xy column heads a chain of its z voxels, in order of appearance
    const NONE: u32 = u32::MAX;
    let mut column: Vec<u32> = vec![NONE; nkx * nky];
    let mut sums: Vec<(Point, u32, i32)> = Vec::new();
    let mut next: Vec<u32> = Vec::new();
    for p in cloud.points.iter().filter(|p| cfg.roi.contains(p)) {
        let kx = ((p.x * inv).floor() as i64 - kx0).clamp(0, nkx as i64 - 1) as usize;
        let ky = ((p.y * inv).floor() as i64 - ky0).clamp(0, nky as i64 - 1) as usize;
        let kz = (p.z * inv).floor() as i32;
        let col = ky * nkx + kx;
        let mut prev = NONE;
        let mut cur = column[col];
        while cur != NONE && sums[cur as usize].2 != kz {
            prev = cur;
            cur = next[cur as usize];
        }
        if cur == NONE {
            cur = sums.len() as u32;
            sums.push((Point::zeros(), 0, kz));
            next.push(NONE);
            match prev {
                NONE => column[col] = cur,
                p => next[p as usize] = cur,
            }
        }
        let slot = cur as usize;
        sums[slot].0 += p;
        sums[slot].1 += 1;
    }
    let points = sums.into_iter().map(|(s, n, _)| s / n as f64).collect();
    PointCloud::new(points, cloud.frame)
}

/// Sample the top faces of `scene` on a regular lattice with spacing
/// `1/sqrt(density)` and add isotropic Gaussian noise. Where boxes overlap
/// only the highest top is sampled. The cloud is expressed in the base
/// frame.
pub fn generate_synthetic_cloud(
    scene: &[TerrainBox],
    noise_sigma: f64,
    density: f64,
    seed: u64,
) -> Result<PointCloud, TerrainError> {
    if scene.is_empty() {
        return Err(TerrainError::EmptyScene);
    }
    if !(density.is_finite() && density > 0.0) {
        return Err(TerrainError::InvalidConfig("density must be > 0".into()));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(TerrainError::InvalidConfig("noise_sigma must be >= 0".into()));
    }
    let spacing = density.sqrt().recip();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("sigma checked"));

    let total: usize = scene.iter().map(|b| lattice_dims(b, spacing)).map(|(a, b)| a * b).sum();
    let mut points = Vec::with_capacity(total);
    for (k, b) in scene.iter().enumerate() {
        let covers: Vec<Aabb> = scene
            .iter()
            .enumerate()
            .filter(|&(j, o)| j != k && (o.top > b.top || (o.top == b.top && j > k)) && o.aabb().overlaps(&b.aabb()))
            .map(|(_, o)| o.aabb())
            .collect();
        let (nx, ny) = lattice_dims(b, spacing);
        let (dx, dy) = (b.size[0] / nx as f64, b.size[1] / ny as f64);
        let (x0, y0) = (b.center[0] - 0.5 * b.size[0], b.center[1] - 0.5 * b.size[1]);
        for j in 0..ny {
            let y = y0 + (j as f64 + 0.5) * dy;
            for i in 0..nx {
                let x = x0 + (i as f64 + 0.5) * dx;
                if covers.iter().any(|c| c.contains([x, y])) {
                    continue;
                }
                let p = match &noise {
                    Some(n) => Point::new(
                        x + n.sample(&mut rng),
                        y + n.sample(&mut rng),
                        b.top + n.sample(&mut rng),
                    ),
                    None => Point::new(x, y, b.top),
                };
                points.push(p);
            }
        }
    }
    Ok(PointCloud::new(points, Frame::Base))
}

fn lattice_dims(b: &TerrainBox, spacing: f64) -> (usize, usize) {
    let n = |len: f64| ((len / spacing).round() as usize).max(1);
    if b.size[0] <= 0.0 || b.size[1] <= 0.0 {
        return (0, 0);
    }
    (n(b.size[0]), n(b.size[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion, Vector3};
    use std::collections::HashSet;

    fn sensor_cloud(points: Vec<Point>) -> PointCloud {
        PointCloud::new(points, Frame::Sensor)
    }

    #[test]
    fn covered_tops_are_not_sampled() {
        let low = TerrainBox {
            id: 0,
            center: [0.5, 0.0],
            size: [1.0, 0.4],
            top: 0.0,
        };
        let high = TerrainBox {
            id: 1,
            center: [0.7, 0.0],
            size: [0.2, 0.2],
            top: 0.05,
        };
        let cloud = generate_synthetic_cloud(&[low, high], 0.0, 10_000.0, 1).unwrap();
        let hidden = high.aabb();
        assert!(cloud.points.iter().all(|p| p.z > 0.01 || !hidden.contains([p.x, p.y])));
        let on_top = cloud.points.iter().filter(|p| p.z > 0.01).count();
        assert_eq!(on_top, 400);
        // the uncovered part of the low box keeps its lattice density
        let low_pts = cloud.points.len() - on_top;
        assert!((low_pts as f64 - 0.36 * 10_000.0).abs() < 60.0, "{low_pts}");
    }

    #[test]
    fn identity_transform_keeps_points() {
        let pts = vec![Point::new(1.0, 2.0, 3.0), Point::new(-0.5, 0.25, 0.0)];
        let out = transform_to_base(sensor_cloud(pts.clone()), &RigidTransform::identity()).unwrap();
        assert_eq!(out.points, pts);
        assert_eq!(out.frame, Frame::Base);
    }

    #[test]
    fn pure_translation() {
        let pose = RigidTransform::from_parts(Translation3::new(0.0, 0.0, 0.5), UnitQuaternion::identity());
        let out = transform_to_base(sensor_cloud(vec![Point::new(1.0, 0.0, 0.0)]), &pose).unwrap();
        assert_eq!(out.points[0], Point::new(1.0, 0.0, 0.5));
    }

    #[test]
    fn yaw_quarter_turn() {
        let pose = RigidTransform::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
        );
        let out = transform_to_base(sensor_cloud(vec![Point::new(1.0, 0.0, 0.0)]), &pose).unwrap();
        assert!((out.points[0] - Point::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn non_finite_pose_is_rejected() {
        let pose = RigidTransform::from_parts(Translation3::new(f64::NAN, 0.0, 0.0), UnitQuaternion::identity());
        assert_eq!(
            transform_to_base(sensor_cloud(vec![Point::zeros()]), &pose),
            Err(TerrainError::InvalidPose)
        );
    }

    #[test]
    fn base_cloud_is_rejected() {
        let c = PointCloud::new(vec![Point::zeros()], Frame::Base);
        assert!(matches!(
            transform_to_base(c, &RigidTransform::identity()),
            Err(TerrainError::WrongFrame { .. })
        ));
    }

    #[test]
    fn sensor_frame_round_trip() {
        let pose = RigidTransform::from_parts(
            Translation3::new(0.1, -0.2, 1.2),
            UnitQuaternion::from_euler_angles(0.0, 0.6, 0.1),
        );
        let pts = vec![Point::new(0.7, 0.3, 0.05), Point::new(1.5, -0.4, 0.0)];
        let back = transform_to_base(
            PointCloud::new(pts.clone(), Frame::Base).into_sensor_frame(&pose),
            &pose,
        )
        .unwrap();
        for (a, b) in back.points.iter().zip(&pts) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn crop_everything_outside() {
        let cfg = MappingConfig::default();
        let c = PointCloud::new(vec![Point::new(-1.0, 0.0, 0.0), Point::new(5.0, 0.0, 0.0)], Frame::Base);
        assert!(crop_and_downsample(&c, &cfg).is_empty());
    }

    #[test]
    fn coincident_points_collapse() {
        let mut cfg = MappingConfig::default();
        cfg.voxel_downsample = 0.01;
        let c = PointCloud::new(vec![Point::new(0.503, 0.004, 0.0021); 1000], Frame::Base);
        let out = crop_and_downsample(&c, &cfg);
        assert_eq!(out.len(), 1);
        assert!((out.points[0] - Point::new(0.503, 0.004, 0.0021)).norm() < 1e-12);
    }

    #[test]
    fn downsample_matches_brute_force_voxel_count() {
        // 5 mm lattice over the whole 1 x 2 m ROI, lifted slightly off the
        // voxel boundary, with a little deterministic jitter.
        let mut cfg = MappingConfig::default();
        cfg.voxel_downsample = 0.01;
        let mut pts = Vec::new();
        for i in 0..400 {
            for j in 0..200 {
                let x = 0.0025 + 0.005 * i as f64;
                let y = -0.4975 + 0.005 * j as f64;
                let z = 0.003 * (((i * 7 + j * 13) % 5) as f64 / 5.0);
                pts.push(Point::new(x, y, z));
            }
        }
        let cloud = PointCloud::new(pts, Frame::Base);
        let out = crop_and_downsample(&cloud, &cfg);

        let v = 0.01;
        let oracle: HashSet<(i64, i64, i64)> = cloud
            .points
            .iter()
            .filter(|p| cfg.roi.contains(p))
            .map(|p| {
                (
                    (p.x / v).floor() as i64,
                    (p.y / v).floor() as i64,
                    (p.z / v).floor() as i64,
                )
            })
            .collect();
        assert_eq!(out.len(), oracle.len());
        assert!(out.points.iter().all(|p| cfg.roi.contains(p)));
    }

    #[test]
    fn lattice_count_and_flatness() {
        let b = TerrainBox {
            id: 0,
            center: [0.5, 0.5],
            size: [1.0, 1.0],
            top: 0.0,
        };
        let c = generate_synthetic_cloud(&[b], 0.0, 1e4, 3).unwrap();
        assert_eq!(c.len(), 10_000);
        assert!(c.points.iter().all(|p| p.z == 0.0));
    }

    #[test]
    fn same_seed_same_cloud() {
        let b = TerrainBox {
            id: 0,
            center: [0.5, 0.0],
            size: [0.4, 0.3],
            top: 0.1,
        };
        let a = generate_synthetic_cloud(&[b], 0.002, 2e4, 11).unwrap();
        let c = generate_synthetic_cloud(&[b], 0.002, 2e4, 11).unwrap();
        assert_eq!(a, c);
        let d = generate_synthetic_cloud(&[b], 0.002, 2e4, 12).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn noise_level_matches_generator() {
        let b = TerrainBox {
            id: 0,
            center: [0.5, 0.5],
            size: [1.0, 1.0],
            top: 0.0,
        };
        let c = generate_synthetic_cloud(&[b], 0.002, 1e4, 5).unwrap();
        let n = c.len() as f64;
        let mean = c.points.iter().map(|p| p.z).sum::<f64>() / n;
        let var = c.points.iter().map(|p| (p.z - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        assert!((0.0018..=0.0022).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn empty_scene() {
        assert_eq!(
            generate_synthetic_cloud(&[], 0.0, 1e4, 0),
            Err(TerrainError::EmptyScene)
        );
    }
}
