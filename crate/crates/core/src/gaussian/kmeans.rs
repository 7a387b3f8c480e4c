//! Bisecting K-Means used to seed Gaussian centers: grow the cluster set by
//! repeatedly 2-means-splitting the cluster with the largest within-cluster
//! sum of squares.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RESTARTS: usize = 10;
const LLOYD_ITERS: usize = 20;

fn centroid(cloud: &[Vector3<f64>], members: &[usize]) -> Vector3<f64> {
    members.iter().map(|&i| cloud[i]).sum::<Vector3<f64>>() / members.len() as f64
}

fn sse(cloud: &[Vector3<f64>], members: &[usize], center: &Vector3<f64>) -> f64 {
    members.iter().map(|&i| (cloud[i] - center).norm_squared()).sum()
}

struct Split {
    parts: [Vec<usize>; 2],
    centers: [Vector3<f64>; 2],
    sse: f64,
}

/// One Lloyd run from a random pair of member points.
fn two_means_once(cloud: &[Vector3<f64>], members: &[usize], rng: &mut ChaCha8Rng) -> Split {
    let a = members[rng.random_range(0..members.len())];
    let b = loop {
        let b = members[rng.random_range(0..members.len())];
        if (cloud[b] - cloud[a]).norm_squared() > 0.0 || members.len() < 2 {
            break b;
        }
        // All-duplicate guard: accept after a few tries.
        if rng.random_range(0..8) == 0 {
            break b;
        }
    };
    let mut centers = [cloud[a], cloud[b]];
    let mut parts = [Vec::new(), Vec::new()];
    for _ in 0..LLOYD_ITERS {
        parts = [Vec::new(), Vec::new()];
        for &i in members {
            let d0 = (cloud[i] - centers[0]).norm_squared();
            let d1 = (cloud[i] - centers[1]).norm_squared();
            parts[usize::from(d1 < d0)].push(i);
        }
        // Re-seed an emptied side with the point farthest from the other center.
        for side in 0..2 {
            if parts[side].is_empty() {
                let other = 1 - side;
                let &far = parts[other]
                    .iter()
                    .max_by(|&&x, &&y| {
                        let dx = (cloud[x] - centers[other]).norm_squared();
                        let dy = (cloud[y] - centers[other]).norm_squared();
                        dx.partial_cmp(&dy).unwrap()
                    })
                    .unwrap();
                parts[side].push(far);
                parts[other].retain(|&i| i != far);
            }
        }
        let next = [centroid(cloud, &parts[0]), centroid(cloud, &parts[1])];
        let moved = (next[0] - centers[0]).norm_squared() + (next[1] - centers[1]).norm_squared();
        centers = next;
        if moved < 1e-18 {
            break;
        }
    }
    let total = sse(cloud, &parts[0], &centers[0]) + sse(cloud, &parts[1], &centers[1]);
    Split { parts, centers, sse: total }
}

fn two_means(cloud: &[Vector3<f64>], members: &[usize], rng: &mut ChaCha8Rng) -> Split {
    let mut best: Option<Split> = None;
    for _ in 0..RESTARTS {
        let s = two_means_once(cloud, members, rng);
        if best.as_ref().is_none_or(|b| s.sse < b.sse) {
            best = Some(s);
        }
    }
    best.unwrap()
}

/// Returns `k` cluster centers (fewer only if the cloud cannot be split
/// further, e.g. duplicate points).
pub(crate) fn bisecting_kmeans(cloud: &[Vector3<f64>], k: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..cloud.len()).collect();
    let mut clusters = vec![(centroid(cloud, &all), all)];
    while clusters.len() < k {
        // Split target: largest within-cluster sum of squares among the
        // clusters that still have at least two points.
        let target = clusters
            .iter()
            .enumerate()
            .filter(|(_, (_, m))| m.len() >= 2)
            .max_by(|(_, (ca, ma)), (_, (cb, mb))| {
                let sa = sse(cloud, ma, ca);
                let sb = sse(cloud, mb, cb);
                sa.partial_cmp(&sb).unwrap()
            })
            .map(|(i, _)| i);
        let Some(idx) = target else { break };
        let (_, members) = clusters.swap_remove(idx);
        let split = two_means(cloud, &members, &mut rng);
        let [p0, p1] = split.parts;
        clusters.push((split.centers[0], p0));
        clusters.push((split.centers[1], p1));
    }
    clusters.into_iter().map(|(c, _)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_until_requested_count() {
        let cloud: Vec<Vector3<f64>> = (0..40)
            .map(|i| Vector3::new(i as f64 % 4.0 * 10.0, (i / 4) as f64 * 0.1, 0.0))
            .collect();
        let centers = bisecting_kmeans(&cloud, 4, 0);
        assert_eq!(centers.len(), 4);
        let mut xs: Vec<f64> = centers.iter().map(|c| c.x).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, x) in xs.iter().enumerate() {
            assert!((x - i as f64 * 10.0).abs() < 0.5);
        }
    }

    #[test]
    fn duplicate_points_stop_early() {
        let cloud = vec![Vector3::zeros(); 5];
        let centers = bisecting_kmeans(&cloud, 3, 0);
        assert!(!centers.is_empty());
        assert!(centers.len() <= 3);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cloud: Vec<Vector3<f64>> = (0..50)
            .map(|i| Vector3::new((i as f64 * 0.7).sin() * 5.0, (i as f64 * 1.3).cos() * 5.0, 0.0))
            .collect();
        let a = bisecting_kmeans(&cloud, 6, 42);
        let b = bisecting_kmeans(&cloud, 6, 42);
        assert_eq!(a, b);
    }
}
