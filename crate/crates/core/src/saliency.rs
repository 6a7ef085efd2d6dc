//! Per-vertex curvature and saliency on meshes, and their transfer to voxel volumes.
//!
//! Saliency here is a self-contained proxy for spectral mesh saliency: a multi-scale
//! center-surround difference of Gaussian-averaged absolute mean curvature, min-max
//! normalized per mesh.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use crate::scalar::CompensatedSum;
use crate::volume::{cell_of_point, triangle_cells, world_to_grid, SaliencyVolume, Voxel, VoxelGrid};
use crate::Scalar;

/// Smoothing radii as fractions of the bounding-box diagonal.
pub const DEFAULT_SCALES: [f64; 3] = [0.02, 0.04, 0.08];

/// Triangles below this area are skipped by the curvature operator.
const MIN_FACE_AREA: f64 = 1e-12;
const COT_CLAMP: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    Curvature,
    Saliency,
}

/// One scalar per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexScalars<T> {
    pub values: Vec<T>,
    pub kind: ScalarKind,
}

impl<T: Scalar> VertexScalars<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV dump with header `vertex,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut out = String::from("vertex,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// Barycentric vertex areas: each triangle gives a third of its area to each corner.
pub fn barycentric_areas<T: Scalar>(mesh: &TriangleMesh<T>) -> Vec<T> {
    let third = T::one() / T::lit(3.0);
    let mut areas = vec![T::zero(); mesh.vertices().len()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let a = mesh.face_area(f) * third;
        for &v in face {
            areas[v as usize] = areas[v as usize] + a;
        }
    }
    areas
}

/// Signed mean curvature per vertex from the cotangent Laplacian with barycentric areas.
///
/// Positive on convex regions when faces are wound counter-clockwise seen from outside.
pub fn mean_curvature<T: Scalar>(mesh: &TriangleMesh<T>) -> Result<VertexScalars<T>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if !(mesh.total_area() > T::zero()) {
        return Err(Error::ZeroArea);
    }
    let n = mesh.vertices().len();
    let min_area = T::lit(MIN_FACE_AREA);
    let clamp = T::lit(COT_CLAMP);
    let mut laplace = vec![Vec3::<T>::zero(); n];
    let mut normals = vec![Vec3::<T>::zero(); n];
    let areas = barycentric_areas(mesh);
    for (f, face) in mesh.faces().iter().enumerate() {
        let p = mesh.triangle(f);
        let cross = (p[1] - p[0]).cross(p[2] - p[0]);
        if cross.norm() * T::lit(0.5) < min_area {
            continue;
        }
        for &v in face {
            normals[v as usize] += cross;
        }
        for corner in 0..3 {
            let (i, j) = ((corner + 1) % 3, (corner + 2) % 3);
            let u = p[i] - p[corner];
            let w = p[j] - p[corner];
            let cot = (u.dot(w) / u.cross(w).norm()).max(-clamp).min(clamp);
            let (vi, vj) = (face[i] as usize, face[j] as usize);
            laplace[vi] += (p[j] - p[i]) * cot;
            laplace[vj] += (p[i] - p[j]) * cot;
        }
    }
    let half = T::lit(0.5);
    let values = (0..n)
        .map(|v| {
            let len = normals[v].norm();
            if !(areas[v] > T::zero()) || !(len > T::zero()) {
                return T::zero();
            }
            let delta = laplace[v] / (T::lit(2.0) * areas[v]);
            -delta.dot(normals[v] / len) * half
        })
        .collect();
    Ok(VertexScalars { values, kind: ScalarKind::Curvature })
}

/// Uniform hash of vertex positions for fixed-radius neighbor queries.
struct PointHash<'a, T> {
    points: &'a [Vec3<T>],
    cell: T,
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a, T: Scalar> PointHash<'a, T> {
    fn new(points: &'a [Vec3<T>], cell: T) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            buckets.entry(Self::key_of(p, cell)).or_default().push(i as u32);
        }
        Self { points, cell, buckets }
    }

    fn key_of(p: Vec3<T>, cell: T) -> [i64; 3] {
        [0, 1, 2].map(|a| (p[a] / cell).floor().to_i64().unwrap_or(0))
    }

    /// Visits every point within `cell` of `center` (and possibly a few beyond), in a fixed
    /// order.
    fn for_each_near(&self, center: Vec3<T>, mut visit: impl FnMut(u32, Vec3<T>)) {
        let k = Self::key_of(center, self.cell);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(bucket) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &i in bucket {
                            visit(i, self.points[i as usize]);
                        }
                    }
                }
            }
        }
    }
}

/// Unnormalized multi-scale center-surround response of `|curvature|`.
///
/// For each scale `s` (fraction of the bounding-box diagonal) with `σ = s · diag`, the
/// response is `|G_σ − G_2σ|`, where `G_σ` is the mean of `|H|` over vertices within `2.5σ`,
/// weighted by vertex area times a Gaussian of the distance. The result is the maximum over scales.
pub fn center_surround<T: Scalar>(mesh: &TriangleMesh<T>, curvature: &[T], scales: &[f64]) -> Result<Vec<T>> {
    let verts = mesh.vertices();
    if curvature.len() != verts.len() {
        return Err(Error::Misaligned { values: curvature.len(), vertices: verts.len() });
    }
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("smoothing scales must be positive".into()));
    }
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptyMesh)?;
    let diag = (hi - lo).norm();
    let abs: Vec<T> = curvature.iter().map(|h| h.abs()).collect();
    let areas = barycentric_areas(mesh);
    let mut response = vec![T::zero(); verts.len()];
    if !(diag > T::zero()) {
        return Ok(response);
    }
    for &scale in scales {
        let sigma = T::lit(scale) * diag;
        let wide = sigma * T::lit(2.0);
        let cutoff = T::lit(2.5);
        let hash = PointHash::new(verts, wide * cutoff);
        let per_vertex: Vec<T> = verts
            .par_iter()
            .map(|&c| {
                let gaussian_mean = |s: T| {
                    let r2 = (s * cutoff) * (s * cutoff);
                    let inv = T::one() / (T::lit(2.0) * s * s);
                    let (mut num, mut den) = (CompensatedSum::new(), CompensatedSum::new());
                    hash.for_each_near(c, |i, p| {
                        let d2 = c.distance_squared(p);
                        if d2 <= r2 {
                            let w = (-d2 * inv).exp() * areas[i as usize];
                            num.add(w * abs[i as usize]);
                            den.add(w);
                        }
                    });
                    let den = den.value();
                    if den > T::zero() {
                        num.value() / den
                    } else {
                        T::zero()
                    }
                };
                (gaussian_mean(sigma) - gaussian_mean(wide)).abs()
            })
            .collect();
        for (r, v) in response.iter_mut().zip(per_vertex) {
            *r = r.max(v);
        }
    }
    Ok(response)
}

/// Min-max normalization to `[0, 1]`; a constant field maps to all zeros.
pub fn normalize_unit<T: Scalar>(values: &[T]) -> Vec<T> {
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    if values.is_empty() || !(span > T::lit(1e-12) * T::one().max(hi.abs())) {
        return vec![T::zero(); values.len()];
    }
    values.iter().map(|&v| ((v - lo) / span).max(T::zero()).min(T::one())).collect()
}

/// Multi-scale curvature saliency, normalized to `[0, 1]` per mesh.
pub fn saliency_from_curvature<T: Scalar>(mesh: &TriangleMesh<T>, scales: &[f64]) -> Result<VertexScalars<T>> {
    let curvature = mean_curvature(mesh)?;
    let raw = center_surround(mesh, &curvature.values, scales)?;
    Ok(VertexScalars { values: normalize_unit(&raw), kind: ScalarKind::Saliency })
}

/// Assigns each occupied voxel the maximum saliency of the mesh vertices inside it. Voxels
/// holding no vertex fall back to the maximum over the corners of the triangles crossing
/// the cell; voxels reached by neither get 0.
///
/// The mesh must be normalized into `[-1, 1]³` and `grid` should come from voxelizing it.
pub fn saliency_to_volume<T: Scalar>(
    mesh: &TriangleMesh<T>,
    values: &VertexScalars<T>,
    grid: &VoxelGrid,
) -> Result<SaliencyVolume<T>> {
    let verts = mesh.vertices();
    if values.len() != verts.len() {
        return Err(Error::Misaligned { values: values.len(), vertices: verts.len() });
    }
    if let Some(&s) = values.values.iter().find(|s| !(**s >= T::zero() && **s <= T::one())) {
        return Err(Error::SaliencyOutOfRange(s.as_f64()));
    }
    let r = grid.resolution();
    let mut from_vertex: Vec<Option<T>> = vec![None; grid.len()];
    for (p, &s) in verts.iter().zip(&values.values) {
        if let Some(i) = cell_of_point(*p, r).and_then(|v| grid.index_of(v)) {
            let slot = &mut from_vertex[i];
            *slot = Some(slot.map_or(s, |m| m.max(s)));
        }
    }
    let mut fallback: Vec<Option<T>> = vec![None; grid.len()];
    if from_vertex.iter().any(Option::is_none) {
        for (f, face) in mesh.faces().iter().enumerate() {
            let tri = mesh.triangle(f).map(|p| world_to_grid(p, r));
            let s = face.iter().map(|&v| values.values[v as usize]).fold(T::zero(), T::max);
            triangle_cells(&tri, r, |v: Voxel| {
                if let Some(i) = grid.index_of(v) {
                    if from_vertex[i].is_none() {
                        let slot = &mut fallback[i];
                        *slot = Some(slot.map_or(s, |m| m.max(s)));
                    }
                }
            });
        }
    }
    let saliency = from_vertex
        .into_iter()
        .zip(fallback)
        .map(|(v, f)| v.or(f).unwrap_or(T::zero()))
        .collect();
    SaliencyVolume::new(grid.clone(), saliency)
}

#[inline]
fn catmull_rom_weights<T: Scalar>(t: T) -> [T; 4] {
    let half = T::lit(0.5);
    let (t2, t3) = (t * t, t * t * t);
    let c = T::lit;
    [
        half * (-t3 + c(2.0) * t2 - t),
        half * (c(3.0) * t3 - c(5.0) * t2 + c(2.0)),
        half * (-c(3.0) * t3 + c(4.0) * t2 + t),
        half * (t3 - t2),
    ]
}

/// Tricubic Catmull-Rom upsampling by an integer factor.
///
/// Unoccupied source cells count as 0, indices clamp at the grid edge and results clamp to
/// `[0, 1]`. The output occupancy is `occupancy` when given (it must be at the target
/// resolution), otherwise every child of an occupied source cell.
pub fn upsample_cubic<T: Scalar>(
    volume: &SaliencyVolume<T>,
    target_resolution: u32,
    occupancy: Option<&VoxelGrid>,
) -> Result<SaliencyVolume<T>> {
    let r = volume.resolution();
    if target_resolution == 0 || !target_resolution.is_multiple_of(r) {
        return Err(Error::IncompatibleResolution { from: r, to: target_resolution });
    }
    let factor = target_resolution / r;
    let grid = match occupancy {
        Some(g) if g.resolution() != target_resolution => {
            return Err(Error::IncompatibleResolution { from: target_resolution, to: g.resolution() })
        }
        Some(g) => g.clone(),
        None => {
            let f = factor as u16;
            let mut children = Vec::with_capacity(volume.len() * (factor as usize).pow(3));
            for v in volume.grid().voxels() {
                for dz in 0..f {
                    for dy in 0..f {
                        for dx in 0..f {
                            children.push(Voxel::new(v.x * f + dx, v.y * f + dy, v.z * f + dz));
                        }
                    }
                }
            }
            VoxelGrid::new(target_resolution, children)?
        }
    };
    let n = r as usize;
    let mut dense = vec![T::zero(); n * n * n];
    for (v, s) in volume.iter() {
        dense[(v.z as usize * n + v.y as usize) * n + v.x as usize] = s;
    }
    let fac = T::from_u32(factor).unwrap();
    let half = T::lit(0.5);
    let last = n as i64 - 1;
    let taps = |i: u16| {
        let u = (T::from_u16(i).unwrap() + half) / fac - half;
        let base = u.floor();
        let w = catmull_rom_weights(u - base);
        let b = base.to_i64().unwrap();
        let idx = [b - 1, b, b + 1, b + 2].map(|k| k.clamp(0, last) as usize);
        (idx, w)
    };
    let saliency = grid
        .voxels()
        .par_iter()
        .map(|v| {
            let (ix, wx) = taps(v.x);
            let (iy, wy) = taps(v.y);
            let (iz, wz) = taps(v.z);
            let mut acc = T::zero();
            for c in 0..4 {
                let mut plane = T::zero();
                for b in 0..4 {
                    let row = (iz[c] * n + iy[b]) * n;
                    let mut line = T::zero();
                    for a in 0..4 {
                        line = line + wx[a] * dense[row + ix[a]];
                    }
                    plane = plane + wy[b] * line;
                }
                acc = acc + wz[c] * plane;
            }
            acc.max(T::zero()).min(T::one())
        })
        .collect();
    SaliencyVolume::new(grid, saliency)
}
