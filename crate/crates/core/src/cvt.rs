//! Density-weighted centroidal Voronoi tessellation of an occupied-voxel domain.
//!
//! Seeds live in continuous grid coordinates; the domain is the set of occupied voxel
//! centers. Each Lloyd step moves seeds to the density-weighted centroids of their cells,
//! repairs empty cells and reassigns voxels to their nearest seed.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::random;
use crate::scalar::CompensatedSum;
use crate::sizefield::DensityField;
use crate::volume::{Voxel, VoxelGrid};
use crate::Scalar;

pub const DEFAULT_ITERATIONS: usize = 40;

/// `run_cvt` stops once no seed moves farther than this (voxel units).
pub const CONVERGENCE_DISPLACEMENT: f64 = 1e-4;

/// Upper bound on empty-cell repair rounds within one Lloyd step.
const MAX_RESEED_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SupervoxelPartition<T> {
    seeds: Vec<Vec3<T>>,
    assignment: Vec<u32>,
    resolution: u32,
    energy: T,
    iterations_run: usize,
}

impl<T: Scalar> SupervoxelPartition<T> {
    /// Partition induced by `seeds`: nearest-seed assignment of every occupied voxel.
    pub fn from_seeds(field: &DensityField<T>, seeds: Vec<Vec3<T>>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if seeds.len() > u32::MAX as usize {
            return Err(Error::InvalidArgument("too many seeds".into()));
        }
        let assignment = nearest_seed_assignment(field.grid(), &seeds);
        let energy = cvt_energy(field, &seeds, &assignment);
        Ok(Self { seeds, assignment, resolution: field.grid().resolution(), energy, iterations_run: 0 })
    }

    /// Seed positions in grid coordinates.
    pub fn seeds(&self) -> &[Vec3<T>] {
        &self.seeds
    }

    /// Seed index per occupied voxel, aligned with the field's `grid().voxels()`.
    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    /// `Σ d(x) ‖x − s(x)‖²` for the current seeds and assignment.
    pub fn energy(&self) -> T {
        self.energy
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Number of voxels per cell.
    pub fn populations(&self) -> Vec<usize> {
        let mut pop = vec![0usize; self.seeds.len()];
        for &a in &self.assignment {
            pop[a as usize] += 1;
        }
        pop
    }

    /// Same cells with seed labels permuted: new label `i` is old label `order[i]`.
    pub fn relabel(&self, order: &[usize]) -> Result<Self> {
        let n = self.seeds.len();
        let mut inverse = vec![usize::MAX; n];
        if order.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: order.len() });
        }
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::InvalidArgument("relabeling is not a permutation".into()));
            }
            inverse[old] = new;
        }
        Ok(Self {
            seeds: order.iter().map(|&old| self.seeds[old]).collect(),
            assignment: self.assignment.iter().map(|&a| inverse[a as usize] as u32).collect(),
            ..self.clone()
        })
    }

    /// CSV `voxel_x,voxel_y,voxel_z,seed_index`, one row per occupied voxel.
    pub fn write_assignment_csv<W: Write>(&self, grid: &VoxelGrid, mut w: W) -> Result<()> {
        if grid.len() != self.assignment.len() {
            return Err(Error::DimensionMismatch { expected: self.assignment.len(), got: grid.len() });
        }
        let mut out = String::from("voxel_x,voxel_y,voxel_z,seed_index\n");
        for (v, a) in grid.voxels().iter().zip(&self.assignment) {
            out.push_str(&format!("{},{},{},{}\n", v.x, v.y, v.z, a));
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    /// CSV `index,cx,cy,cz` in grid coordinates with six decimals.
    pub fn write_seeds_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut out = String::from("index,cx,cy,cz\n");
        for (i, s) in self.seeds.iter().enumerate() {
            let [x, y, z] = s.to_f64();
            out.push_str(&format!("{i},{x:.6},{y:.6},{z:.6}\n"));
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// `n` distinct occupied voxel centers drawn uniformly without replacement, in draw order.
pub fn init_seeds<T: Scalar>(field: &DensityField<T>, n: usize, rng_seed: u64) -> Result<Vec<Vec3<T>>> {
    let available = field.len();
    if n == 0 || n > available {
        return Err(Error::TooManySeeds { requested: n, available });
    }
    let mut rng = random::rng(rng_seed);
    let voxels = field.grid().voxels();
    Ok(random::sample_indices(&mut rng, available, n).into_iter().map(|i| voxels[i].center()).collect())
}

/// Uniform bucket grid over seed positions for exact nearest-seed queries.
struct SeedIndex<'a, T> {
    seeds: &'a [Vec3<T>],
    origin: Vec3<T>,
    cell: T,
    dims: [i64; 3],
    buckets: Vec<Vec<u32>>,
}

impl<'a, T: Scalar> SeedIndex<'a, T> {
    fn new(seeds: &'a [Vec3<T>], resolution: u32) -> Self {
        let r = T::from_u32(resolution).unwrap();
        let mut lo = Vec3::zero();
        let mut hi = Vec3::splat(r);
        for &s in seeds {
            lo = lo.component_min(s);
            hi = hi.component_max(s);
        }
        let extent = hi - lo;
        let volume = (extent.x * extent.y * extent.z).max(T::one());
        // About two seeds per bucket.
        let per_seed = volume * T::lit(2.0) / T::from_usize_lossy(seeds.len());
        let cell = per_seed.cbrt().max(T::one());
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor().to_i64().unwrap_or(0) + 1).max(1));
        let mut buckets = vec![Vec::new(); (dims[0] * dims[1] * dims[2]) as usize];
        let mut index = Self { seeds, origin: lo, cell, dims, buckets: Vec::new() };
        for (i, &s) in seeds.iter().enumerate() {
            let k = index.key(s);
            buckets[index.flat(k)].push(i as u32);
        }
        index.buckets = buckets;
        index
    }

    fn key(&self, p: Vec3<T>) -> [i64; 3] {
        [0, 1, 2].map(|a| {
            let k = ((p[a] - self.origin[a]) / self.cell).floor().to_i64().unwrap_or(0);
            k.clamp(0, self.dims[a] - 1)
        })
    }

    fn flat(&self, k: [i64; 3]) -> usize {
        ((k[2] * self.dims[1] + k[1]) * self.dims[0] + k[0]) as usize
    }

    /// Nearest seed to `q` (which must lie inside the indexed box); ties go to the smaller
    /// seed index.
    fn nearest(&self, q: Vec3<T>) -> u32 {
        let c = self.key(q);
        let max_ring = (0..3).map(|a| c[a].max(self.dims[a] - 1 - c[a])).max().unwrap();
        let mut best = (T::infinity(), u32::MAX);
        let safety = T::one() - T::epsilon() * T::lit(64.0);
        let consider = |bucket: &Vec<u32>, best: &mut (T, u32)| {
            for &i in bucket {
                let d = q.distance_squared(self.seeds[i as usize]);
                if d < best.0 || (d == best.0 && i < best.1) {
                    *best = (d, i);
                }
            }
        };
        for ring in 0..=max_ring {
            let lo = [0, 1, 2].map(|a| (c[a] - ring).max(0));
            let hi = [0, 1, 2].map(|a| (c[a] + ring).min(self.dims[a] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let cheb = (x - c[0]).abs().max((y - c[1]).abs()).max((z - c[2]).abs());
                        if cheb == ring {
                            consider(&self.buckets[self.flat([x, y, z])], &mut best);
                        }
                    }
                }
            }
            // Unvisited seeds are at least `ring * cell` away.
            let bound = T::from_i64(ring).unwrap() * self.cell;
            if best.1 != u32::MAX && best.0 < bound * bound * safety {
                break;
            }
        }
        best.1
    }
}

/// Nearest seed (squared Euclidean distance, ties to the smaller index) for every occupied
/// voxel center.
pub fn nearest_seed_assignment<T: Scalar>(grid: &VoxelGrid, seeds: &[Vec3<T>]) -> Vec<u32> {
    let index = SeedIndex::new(seeds, grid.resolution());
    grid.voxels().par_iter().map(|v| index.nearest(v.center())).collect()
}

/// `Σ d(x) ‖x − s_a(x)‖²`, accumulated in voxel order with compensation.
pub fn cvt_energy<T: Scalar>(field: &DensityField<T>, seeds: &[Vec3<T>], assignment: &[u32]) -> T {
    let mut acc = CompensatedSum::new();
    for ((v, &d), &a) in field.grid().voxels().iter().zip(field.density()).zip(assignment) {
        acc.add(d * v.center().distance_squared(seeds[a as usize]));
    }
    acc.value()
}

fn weighted_centroids<T: Scalar>(field: &DensityField<T>, seeds: &[Vec3<T>], assignment: &[u32]) -> Vec<Vec3<T>> {
    let n = seeds.len();
    let mut sx = vec![CompensatedSum::new(); n];
    let mut sy = vec![CompensatedSum::new(); n];
    let mut sz = vec![CompensatedSum::new(); n];
    let mut sw = vec![CompensatedSum::new(); n];
    for ((v, &d), &a) in field.grid().voxels().iter().zip(field.density()).zip(assignment) {
        let a = a as usize;
        let c: Vec3<T> = v.center();
        sx[a].add(c.x * d);
        sy[a].add(c.y * d);
        sz[a].add(c.z * d);
        sw[a].add(d);
    }
    (0..n)
        .map(|i| {
            let w = sw[i].value();
            if w > T::zero() {
                Vec3::new(sx[i].value() / w, sy[i].value() / w, sz[i].value() / w)
            } else {
                seeds[i]
            }
        })
        .collect()
}

fn empty_cells(n: usize, assignment: &[u32]) -> Vec<usize> {
    let mut populated = vec![false; n];
    for &a in assignment {
        populated[a as usize] = true;
    }
    (0..n).filter(|&i| !populated[i]).collect()
}

/// Moves every empty cell's seed onto one of the worst-served voxels (largest
/// `d(x) ‖x − s_a(x)‖²`, ties by `(z, y, x)`), reassigning after each round.
fn repair_empty_cells<T: Scalar>(field: &DensityField<T>, seeds: &mut [Vec3<T>], assignment: &mut Vec<u32>) {
    let voxels = field.grid().voxels();
    for _ in 0..MAX_RESEED_ROUNDS {
        let empty = empty_cells(seeds.len(), assignment);
        if empty.is_empty() {
            return;
        }
        let mut served: Vec<(T, usize)> = voxels
            .iter()
            .zip(field.density())
            .zip(assignment.iter())
            .enumerate()
            .map(|(i, ((v, &d), &a))| (d * v.center().distance_squared(seeds[a as usize]), i))
            .collect();
        served.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        for (&cell, &(_, voxel)) in empty.iter().zip(&served) {
            seeds[cell] = voxels[voxel].center();
        }
        *assignment = nearest_seed_assignment(field.grid(), seeds);
    }
}

/// One Lloyd iteration: weighted-centroid update from the current cells, empty-cell repair,
/// nearest-seed reassignment and energy.
pub fn lloyd_step<T: Scalar>(field: &DensityField<T>, partition: &SupervoxelPartition<T>) -> SupervoxelPartition<T> {
    let mut seeds = weighted_centroids(field, &partition.seeds, &partition.assignment);
    let mut assignment = nearest_seed_assignment(field.grid(), &seeds);
    repair_empty_cells(field, &mut seeds, &mut assignment);
    let energy = cvt_energy(field, &seeds, &assignment);
    SupervoxelPartition {
        seeds,
        assignment,
        resolution: partition.resolution,
        energy,
        iterations_run: partition.iterations_run + 1,
    }
}

/// Seeds `n` cells uniformly and runs up to `iterations` Lloyd steps, stopping early once
/// the largest seed displacement drops below [`CONVERGENCE_DISPLACEMENT`].
pub fn run_cvt<T: Scalar>(
    field: &DensityField<T>,
    n: usize,
    iterations: usize,
    rng_seed: u64,
) -> Result<SupervoxelPartition<T>> {
    let seeds = init_seeds(field, n, rng_seed)?;
    let mut partition = SupervoxelPartition::from_seeds(field, seeds)?;
    let tol = T::lit(CONVERGENCE_DISPLACEMENT);
    for _ in 0..iterations {
        let next = lloyd_step(field, &partition);
        let moved = partition
            .seeds
            .iter()
            .zip(&next.seeds)
            .map(|(a, b)| a.distance_squared(*b))
            .fold(T::zero(), T::max)
            .sqrt();
        partition = next;
        if moved < tol {
            break;
        }
    }
    Ok(partition)
}

/// Z-Y-X total order on centers: integer voxel bucket of z, y, x first, then the exact
/// coordinates in the same order.
pub fn zyx_cmp<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Ordering {
    let bucket = |p: Vec3<T>| [p.z.floor(), p.y.floor(), p.x.floor(), p.z, p.y, p.x];
    let (ka, kb) = (bucket(a), bucket(b));
    for (x, y) in ka.iter().zip(&kb) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) => continue,
            Some(o) => return o,
            None => return x.is_nan().cmp(&y.is_nan()),
        }
    }
    Ordering::Equal
}

/// Supervoxel centers in Z-Y-X order; `permutation[i]` is the seed index of `centers[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedCenters<T> {
    pub centers: Vec<Vec3<T>>,
    pub permutation: Vec<usize>,
}

/// Indices of `centers` sorted by [`zyx_cmp`], exact ties broken by index.
pub fn zyx_permutation<T: Scalar>(centers: &[Vec3<T>]) -> Vec<usize> {
    let mut permutation: Vec<usize> = (0..centers.len()).collect();
    permutation.sort_by(|&a, &b| zyx_cmp(centers[a], centers[b]).then(a.cmp(&b)));
    permutation
}

/// Sorts seeds by [`zyx_cmp`], breaking exact ties by seed index.
pub fn order_zyx<T: Scalar>(partition: &SupervoxelPartition<T>) -> OrderedCenters<T> {
    let permutation = zyx_permutation(&partition.seeds);
    OrderedCenters { centers: permutation.iter().map(|&i| partition.seeds[i]).collect(), permutation }
}

/// Voxels of every cell, in grid order.
pub(crate) fn cell_members<T: Scalar>(grid: &VoxelGrid, partition: &SupervoxelPartition<T>) -> Vec<Vec<Voxel>> {
    let mut members = vec![Vec::new(); partition.len()];
    for (v, &a) in grid.voxels().iter().zip(&partition.assignment) {
        members[a as usize].push(*v);
    }
    members
}
