use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MappingConfig, Plane, Point, PointCloud, TerrainError};

/// Hypotheses are scored on at most this many points per extraction.
const SCORE_SUBSET: usize = 4096;

/// Iterative RANSAC: fit the dominant plane, refine it by least squares,
/// remove its inliers and repeat. Planes tilted more than
/// `cfg.max_tilt_deg` from horizontal still consume their inliers but are
/// not returned. Output is sorted by decreasing inlier count.
pub fn segment_planes(cloud: &PointCloud, cfg: &MappingConfig) -> Result<Vec<Plane>, TerrainError> {
    if cloud.is_empty() {
        return Err(TerrainError::EmptyCloud);
    }
    let pts = &cloud.points;
    let thresh = cfg.ransac_dist_threshold;
    let min_inliers = cfg.ransac_min_inliers.max(3);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut remaining: Vec<usize> = (0..pts.len()).collect();
    let mut planes = Vec::new();
    let mut extracted = 0;

    while extracted < cfg.ransac_max_planes && remaining.len() >= min_inliers {
        let subset: Vec<usize> = if remaining.len() > SCORE_SUBSET {
            (0..SCORE_SUBSET)
                .map(|_| remaining[rng.random_range(0..remaining.len())])
                .collect()
        } else {
            remaining.clone()
        };

        let xs: Vec<f64> = subset.iter().map(|&i| pts[i].x).collect();
        let ys: Vec<f64> = subset.iter().map(|&i| pts[i].y).collect();
        let zs: Vec<f64> = subset.iter().map(|&i| pts[i].z).collect();
        let mut best: Option<(Vector3<f64>, f64, usize)> = None;
        for _ in 0..cfg.ransac_iterations {
            let a = subset[rng.random_range(0..subset.len())];
            let b = subset[rng.random_range(0..subset.len())];
            let c = subset[rng.random_range(0..subset.len())];
            let Some((n, d)) = plane_through(&pts[a], &pts[b], &pts[c]) else {
                continue;
            };
            let score: usize = xs
                .iter()
                .zip(&ys)
                .zip(&zs)
                .map(|((x, y), z)| usize::from((n.x * x + n.y * y + n.z * z - d).abs() <= thresh))
                .sum();
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((n, d, score));
            }
        }
        let Some((n0, d0, _)) = best else { break };

        let hyp_inliers: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| (n0.dot(&pts[i]) - d0).abs() <= thresh)
            .collect();
        if hyp_inliers.len() < min_inliers {
            break;
        }

        // A tilted hypothesis can cut across several height levels in
        // separate bands; refit on the largest connected patch so the plane
        // snaps to one level, then fall back to the hypothesis if the refined
        // plane keeps fewer points.
        let within = |n: &Vector3<f64>, d: f64| -> Vec<usize> {
            remaining
                .iter()
                .copied()
                .filter(|&i| (n.dot(&pts[i]) - d).abs() <= thresh)
                .collect()
        };
        let patch = largest_patch(pts, &hyp_inliers, cfg.resolution, thresh);
        let refined = fit_least_squares(pts, &patch).and_then(|(n1, d1)| {
            let first = within(&n1, d1);
            let (n2, d2) = fit_least_squares(pts, &first).unwrap_or((n1, d1));
            let refined = within(&n2, d2);
            (refined.len() >= patch.len()).then_some((n2, d2, refined))
        });
        // otherwise polish the raw hypothesis, whose three-point normal
        // carries the full sample noise
        let (normal, offset, inliers) = refined.unwrap_or_else(|| match fit_least_squares(pts, &hyp_inliers) {
            Some((n1, d1)) => {
                let polished = within(&n1, d1);
                if polished.len() >= hyp_inliers.len() {
                    (n1, d1, polished)
                } else {
                    (n0, d0, hyp_inliers)
                }
            }
            None => (n0, d0, hyp_inliers),
        });

        extracted += 1;
        let mut taken = vec![false; pts.len()];
        for &i in &inliers {
            taken[i] = true;
        }
        remaining.retain(|&i| !taken[i]);

        let plane = Plane {
            mean_height: inliers.iter().map(|&i| pts[i].z).sum::<f64>() / inliers.len() as f64,
            normal,
            offset,
            inliers,
        };
        if plane.tilt_deg() <= cfg.max_tilt_deg {
            planes.push(plane);
        }
    }

    planes.sort_by_key(|p| std::cmp::Reverse(p.inliers.len()));
    Ok(planes)
}

/// Points of the 8-connected (in x, y at `cell` spacing) component of `idx`
/// holding the most points. Neighbouring buckets join only if their mean
/// heights differ by less than `max_step`, so a patch never spans a height
/// step even where two levels touch.
fn largest_patch(pts: &[Point], idx: &[usize], cell: f64, max_step: f64) -> Vec<usize> {
    if idx.is_empty() {
        return Vec::new();
    }
    let inv = 1.0 / cell;
    let keys: Vec<(i64, i64)> = idx
        .iter()
        .map(|&i| ((pts[i].x * inv).floor() as i64, (pts[i].y * inv).floor() as i64))
        .collect();
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &(kx, ky) in &keys {
        (x0, y0, x1, y1) = (x0.min(kx), y0.min(ky), x1.max(kx), y1.max(ky));
    }
    let (w, h) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    // column-major so a linear scan visits buckets in (x, y) order
    let cells: Vec<usize> = keys
        .iter()
        .map(|&(kx, ky)| (kx - x0) as usize * h + (ky - y0) as usize)
        .collect();
    let mut count = vec![0u32; w * h];
    let mut zsum = vec![0.0; w * h];
    for (&i, &c) in idx.iter().zip(&cells) {
        count[c] += 1;
        zsum[c] += pts[i].z;
    }
    let mean_z = |c: usize| zsum[c] / count[c] as f64;
    let mut label = vec![u32::MAX; w * h];
    let (mut best, mut best_count) = (u32::MAX, 0u64);
    let mut queue = Vec::new();
    for start in 0..w * h {
        if count[start] == 0 || label[start] != u32::MAX {
            continue;
        }
        let id = start as u32;
        label[start] = id;
        queue.clear();
        queue.push(start);
        let mut total = 0u64;
        let mut head = 0;
        while head < queue.len() {
            let c = queue[head];
            head += 1;
            total += u64::from(count[c]);
            let (cx, cy) = ((c / h) as i64, (c % h) as i64);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let n = nx as usize * h + ny as usize;
                    if count[n] > 0 && label[n] == u32::MAX && (mean_z(n) - mean_z(c)).abs() < max_step {
                        label[n] = id;
                        queue.push(n);
                    }
                }
            }
        }
        if total > best_count {
            (best, best_count) = (id, total);
        }
    }
    let mut out: Vec<usize> = idx
        .iter()
        .zip(&cells)
        .filter(|&(_, &c)| label[c] == best)
        .map(|(&i, _)| i)
        .collect();
    out.sort_unstable();
    out
}

/// Unit normal (oriented +z) and offset of the plane through three points.
fn plane_through(a: &Point, b: &Point, c: &Point) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let norm = n.norm();
    if norm < 1e-12 {
        return None;
    }
    let n = orient_up(n / norm);
    Some((n, n.dot(a)))
}

fn fit_least_squares(pts: &[Point], idx: &[usize]) -> Option<(Vector3<f64>, f64)> {
    let k = idx.len() as f64;
    let centroid = idx.iter().fold(Vector3::zeros(), |acc, &i| acc + pts[i]) / k;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = pts[i] - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let n: Vector3<f64> = eig.eigenvectors.column(imin).into_owned();
    if !n.iter().all(|v| v.is_finite()) || n.norm() < 0.5 {
        return None;
    }
    let n = orient_up(n.normalize());
    Some((n, n.dot(&centroid)))
}

fn orient_up(n: Vector3<f64>) -> Vector3<f64> {
    if n.z < 0.0 || (n.z == 0.0 && (n.x < 0.0 || (n.x == 0.0 && n.y < 0.0))) {
        -n
    } else {
        n
    }
}
