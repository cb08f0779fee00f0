//! Sensor placement, ring construction and communication accounting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// A group of sensors whose head collects the members' measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub head: usize,
    /// All sensors of the cluster, head included.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub positions: Vec<Point>,
    /// Order in which the iterate visits the sensors.
    pub ring: Vec<usize>,
    pub clusters: Option<Vec<Cluster>>,
    pub fusion_center: Point,
}

impl Deployment {
    /// Deployment with a nearest-neighbour ring and the fusion centre at `fusion_center`.
    pub fn new(positions: Vec<Point>, clusters: Option<Vec<Cluster>>, fusion_center: Point) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput("deployment needs at least one sensor".into()));
        }
        if let Some(cs) = &clusters {
            validate_clusters(cs, positions.len())?;
        }
        Ok(Self {
            ring: ring_order(&positions),
            positions,
            clusters,
            fusion_center,
        })
    }

    pub fn sensor_count(&self) -> usize {
        self.positions.len()
    }

    pub fn with_ring(mut self, ring: Vec<usize>) -> Result<Self> {
        check_permutation(&ring, self.positions.len())?;
        self.ring = ring;
        Ok(self)
    }

    /// Member lists of the clusters, for stacking models and measurements.
    pub fn cluster_groups(&self) -> Option<Vec<Vec<usize>>> {
        self.clusters
            .as_ref()
            .map(|cs| cs.iter().map(|c| c.members.clone()).collect())
    }

    /// Order in which the iterate visits the cluster heads.
    pub fn cluster_ring(&self) -> Option<Vec<usize>> {
        self.clusters.as_ref().map(|cs| {
            let heads: Vec<Point> = cs.iter().map(|c| self.positions[c.head]).collect();
            ring_order(&heads)
        })
    }
}

fn check_permutation(ring: &[usize], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    if ring.len() != m || ring.iter().any(|&i| i >= m || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidInput(format!("ring {ring:?} is not a permutation of 0..{m}")));
    }
    Ok(())
}

fn validate_clusters(clusters: &[Cluster], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    for c in clusters {
        if !c.members.contains(&c.head) {
            return Err(Error::InvalidInput(format!("cluster head {} is not a member", c.head)));
        }
        for &i in &c.members {
            if i >= m || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput(format!("clusters do not partition 0..{m}")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidInput(format!("clusters do not cover 0..{m}")));
    }
    Ok(())
}

fn check_region(size: Point) -> Result<()> {
    if !size.iter().all(|&l| l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidInput(format!("deployment region {size:?} must have positive sides")));
    }
    Ok(())
}

/// Grid sensors at the cell centres of a `√grid × √grid` grid over
/// `[0, size]`, each followed by `extras` sensors drawn uniformly from the
/// disc of radius `jitter` around it (clipped to the region). Each grid sensor
/// heads the cluster of itself and its extras; indices are cluster-contiguous.
pub fn deploy_grid_jittered(grid: usize, extras: usize, jitter: f64, size: Point, seed: u64) -> Result<Deployment> {
    check_region(size)?;
    let side = (grid as f64).sqrt().round() as usize;
    if grid == 0 || side * side != grid {
        return Err(Error::InvalidInput(format!("grid count {grid} is not a positive perfect square")));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidInput("jitter radius must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = [size[0] / side as f64, size[1] / side as f64];
    let mut positions = Vec::with_capacity(grid * (1 + extras));
    let mut clusters = Vec::with_capacity(grid);
    for gx in 0..side {
        for gy in 0..side {
            let centre = [cell[0] * (gx as f64 + 0.5), cell[1] * (gy as f64 + 0.5)];
            let head = positions.len();
            positions.push(centre);
            for _ in 0..extras {
                let r = jitter * rng.random::<f64>().sqrt();
                let phi = std::f64::consts::TAU * rng.random::<f64>();
                positions.push([
                    (centre[0] + r * phi.cos()).clamp(0.0, size[0]),
                    (centre[1] + r * phi.sin()).clamp(0.0, size[1]),
                ]);
            }
            clusters.push(Cluster {
                head,
                members: (head..positions.len()).collect(),
            });
        }
    }
    Deployment::new(positions, Some(clusters), [size[0] / 2.0, size[1] / 2.0])
}

/// `m` sensors uniform on `[0, size]`, fusion centre at the middle.
pub fn deploy_uniform(m: usize, size: Point, seed: u64) -> Result<Deployment> {
    check_region(size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..m)
        .map(|_| [rng.random::<f64>() * size[0], rng.random::<f64>() * size[1]])
        .collect();
    Deployment::new(positions, None, [size[0] / 2.0, size[1] / 2.0])
}

/// Greedy nearest-neighbour tour from sensor 0; ties go to the lower index.
pub fn ring_order(positions: &[Point]) -> Vec<usize> {
    let m = positions.len();
    if m == 0 {
        return Vec::new();
    }
    let mut visited = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut current = 0;
    visited[0] = true;
    order.push(0);
    for _ in 1..m {
        let mut best: Option<(usize, f64)> = None;
        for (j, &p) in positions.iter().enumerate() {
            if visited[j] {
                continue;
            }
            let d = distance(positions[current], p);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        let (next, _) = best.expect("unvisited sensor remains");
        visited[next] = true;
        order.push(next);
        current = next;
    }
    order
}

/// Length of the closed tour through `positions` in `order`.
pub fn tour_length(positions: &[Point], order: &[usize]) -> f64 {
    let m = order.len();
    if m < 2 {
        return 0.0;
    }
    (0..m)
        .map(|j| distance(positions[order[j]], positions[order[(j + 1) % m]]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommMode {
    /// One iterate message per ring hop.
    Incremental,
    /// One measurement message from every sensor to the fusion centre.
    Centralized,
    /// Members send measurements to their head; the iterate tours the heads.
    Hybrid,
}

/// Cost in unit·meters charged to each step of a cycle, in visiting order.
///
/// Incremental: the hop from each sensor to the next on the closed ring.
/// Centralized: a single step carrying every sensor's message to the fusion centre.
/// Hybrid: each cluster's intra-cluster collection plus the hop to the next head.
pub fn step_costs(deployment: &Deployment, mode: CommMode) -> Result<Vec<f64>> {
    let pos = &deployment.positions;
    match mode {
        CommMode::Incremental => {
            let ring = &deployment.ring;
            let m = ring.len();
            Ok((0..m)
                .map(|j| if m < 2 { 0.0 } else { distance(pos[ring[j]], pos[ring[(j + 1) % m]]) })
                .collect())
        }
        CommMode::Centralized => Ok(vec![pos.iter().map(|&p| distance(p, deployment.fusion_center)).sum()]),
        CommMode::Hybrid => {
            let clusters = deployment
                .clusters
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("hybrid accounting needs clusters".into()))?;
            let order = deployment.cluster_ring().expect("clusters present");
            let n = order.len();
            Ok((0..n)
                .map(|j| {
                    let c = &clusters[order[j]];
                    let collect: f64 = c.members.iter().map(|&i| distance(pos[i], pos[c.head])).sum();
                    let hop = if n < 2 { 0.0 } else { distance(pos[c.head], pos[clusters[order[(j + 1) % n]].head]) };
                    collect + hop
                })
                .collect())
        }
    }
}

/// Total communication over `cycles` slots.
pub fn comm_cost(deployment: &Deployment, mode: CommMode, cycles: usize) -> Result<f64> {
    Ok(step_costs(deployment, mode)?.iter().sum::<f64>() * cycles as f64)
}
