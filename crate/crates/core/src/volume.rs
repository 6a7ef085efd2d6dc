//! Sparse voxel occupancy and saliency containers, surface voxelization and the SVXV format.
//!
//! The grid of resolution `R` tiles the cube `[-1, 1]³`; voxel `(i, j, k)` covers
//! `[-1 + 2i/R, -1 + 2(i+1)/R)` along each axis. Grid coordinates measure position in voxel
//! units from the cube corner, so the center of voxel `i` sits at `i + 0.5`.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, FormatError, Result};
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use crate::Scalar;

/// Resolutions accepted by [`voxelize_surface`].
pub const ALLOWED_RESOLUTIONS: [u32; 4] = [64, 128, 256, 512];

/// Integer voxel coordinate. The derived ordering is `(z, y, x)` lexicographic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Voxel {
    pub z: u16,
    pub y: u16,
    pub x: u16,
}

impl Voxel {
    pub const fn new(x: u16, y: u16, z: u16) -> Self {
        Self { z, y, x }
    }

    pub fn xyz(self) -> [u16; 3] {
        [self.x, self.y, self.z]
    }

    /// Center in grid coordinates.
    pub fn center<T: Scalar>(self) -> Vec3<T> {
        let h = T::lit(0.5);
        Vec3::new(
            T::from_u16(self.x).unwrap() + h,
            T::from_u16(self.y).unwrap() + h,
            T::from_u16(self.z).unwrap() + h,
        )
    }
}

/// Maps a point of the normalized cube to grid coordinates.
pub fn world_to_grid<T: Scalar>(p: Vec3<T>, resolution: u32) -> Vec3<T> {
    let half_r = T::from_u32(resolution).unwrap() * T::lit(0.5);
    (p + Vec3::splat(T::one())) * half_r
}

/// Voxel containing a point of the normalized cube, or `None` outside `[-1, 1]³`.
/// The upper face of the cube belongs to the last layer.
pub fn cell_of_point<T: Scalar>(p: Vec3<T>, resolution: u32) -> Option<Voxel> {
    let g = world_to_grid(p, resolution);
    let r = T::from_u32(resolution).unwrap();
    let mut idx = [0u16; 3];
    for (a, slot) in idx.iter_mut().enumerate() {
        let c = g[a];
        if !(c >= T::zero() && c <= r) {
            return None;
        }
        *slot = c.floor().to_u32().unwrap().min(resolution - 1) as u16;
    }
    Some(Voxel::new(idx[0], idx[1], idx[2]))
}

/// Sparse set of occupied voxels, kept sorted in `(z, y, x)` order without duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    resolution: u32,
    voxels: Vec<Voxel>,
}

impl VoxelGrid {
    /// Builds a grid from any collection of voxels; duplicates are merged.
    pub fn new(resolution: u32, mut voxels: Vec<Voxel>) -> Result<Self> {
        check_resolution(resolution)?;
        if let Some(v) = voxels.iter().find(|v| v.xyz().iter().any(|&c| c as u32 >= resolution)) {
            return Err(Error::InvalidArgument(format!("voxel {:?} outside resolution {resolution}", v.xyz())));
        }
        voxels.par_sort_unstable();
        voxels.dedup();
        Ok(Self { resolution, voxels })
    }

    /// Every cell of the grid.
    pub fn full(resolution: u32) -> Result<Self> {
        check_resolution(resolution)?;
        let r = resolution as u16;
        let voxels = (0..r)
            .flat_map(|z| (0..r).flat_map(move |y| (0..r).map(move |x| Voxel::new(x, y, z))))
            .collect();
        Ok(Self { resolution, voxels })
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn index_of(&self, v: Voxel) -> Option<usize> {
        self.voxels.binary_search(&v).ok()
    }

    pub fn contains(&self, v: Voxel) -> bool {
        self.index_of(v).is_some()
    }
}

fn check_resolution(resolution: u32) -> Result<()> {
    if resolution == 0 || resolution > 1 << 16 {
        return Err(Error::InvalidArgument(format!("resolution {resolution} outside 1..=65536")));
    }
    Ok(())
}

/// Occupied voxels with a saliency value in `[0, 1]` each, aligned with `grid.voxels()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyVolume<T> {
    grid: VoxelGrid,
    saliency: Vec<T>,
}

impl<T: Scalar> SaliencyVolume<T> {
    pub fn new(grid: VoxelGrid, saliency: Vec<T>) -> Result<Self> {
        if saliency.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: saliency.len() });
        }
        if let Some(&s) = saliency.iter().find(|s| !(**s >= T::zero() && **s <= T::one())) {
            return Err(Error::SaliencyOutOfRange(s.as_f64()));
        }
        Ok(Self { grid, saliency })
    }

    /// Builds a volume from unsorted `(voxel, saliency)` pairs. Duplicate voxels keep the max.
    pub fn from_pairs(resolution: u32, mut pairs: Vec<(Voxel, T)>) -> Result<Self> {
        pairs.sort_by_key(|a| a.0);
        let mut voxels: Vec<Voxel> = Vec::with_capacity(pairs.len());
        let mut saliency: Vec<T> = Vec::with_capacity(pairs.len());
        for (v, s) in pairs {
            if voxels.last() == Some(&v) {
                let last = saliency.last_mut().unwrap();
                *last = last.max(s);
            } else {
                voxels.push(v);
                saliency.push(s);
            }
        }
        let grid = VoxelGrid::new(resolution, voxels)?;
        Self::new(grid, saliency)
    }

    /// Every voxel of `grid` with the same saliency.
    pub fn constant(grid: VoxelGrid, value: T) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![value; n])
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn resolution(&self) -> u32 {
        self.grid.resolution
    }

    pub fn saliency(&self) -> &[T] {
        &self.saliency
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn get(&self, v: Voxel) -> Option<T> {
        self.grid.index_of(v).map(|i| self.saliency[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Voxel, T)> + '_ {
        self.grid.voxels.iter().copied().zip(self.saliency.iter().copied())
    }

    pub fn cast<U: Scalar>(&self) -> SaliencyVolume<U> {
        SaliencyVolume {
            grid: self.grid.clone(),
            saliency: self.saliency.iter().map(|s| U::lit(s.as_f64()).max(U::zero()).min(U::one())).collect(),
        }
    }
}

/// Conservative triangle/box overlap (separating axis test) for the closed box
/// `center ± half`.
pub fn triangle_box_overlap<T: Scalar>(center: Vec3<T>, half: T, tri: &[Vec3<T>; 3]) -> bool {
    let v = [tri[0] - center, tri[1] - center, tri[2] - center];
    #[allow(clippy::needless_range_loop)]
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > half || hi < -half {
            return false;
        }
    }
    let edges = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let basis = [
        Vec3::new(T::one(), T::zero(), T::zero()),
        Vec3::new(T::zero(), T::one(), T::zero()),
        Vec3::new(T::zero(), T::zero(), T::one()),
    ];
    for e in edges {
        for b in basis {
            let axis = b.cross(e);
            let p = [axis.dot(v[0]), axis.dot(v[1]), axis.dot(v[2])];
            let r = half * (axis.x.abs() + axis.y.abs() + axis.z.abs());
            let lo = p[0].min(p[1]).min(p[2]);
            let hi = p[0].max(p[1]).max(p[2]);
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    let normal = edges[0].cross(edges[1]);
    let d = normal.dot(v[0]);
    let r = half * (normal.x.abs() + normal.y.abs() + normal.z.abs());
    d.abs() <= r
}

/// Cells hit by one triangle given in grid coordinates, using half-open cells: a triangle
/// lying entirely on or beyond a cell's upper face does not occupy it (except on the last
/// layer, which is closed at the cube boundary).
pub fn triangle_cells<T: Scalar>(tri: &[Vec3<T>; 3], resolution: u32, mut visit: impl FnMut(Voxel)) {
    let lo = tri[0].component_min(tri[1]).component_min(tri[2]);
    let hi = tri[0].component_max(tri[1]).component_max(tri[2]);
    let r = T::from_u32(resolution).unwrap();
    if (0..3).any(|a| hi[a] < T::zero() || lo[a] > r) {
        return;
    }
    let max_idx = resolution as i64 - 1;
    let range = |a: usize| {
        let first = lo[a].floor().to_i64().unwrap_or(0).clamp(0, max_idx);
        let last = hi[a].floor().to_i64().unwrap_or(max_idx).clamp(0, max_idx);
        (first, last)
    };
    let (x0, x1) = range(0);
    let (y0, y1) = range(1);
    let (z0, z1) = range(2);
    let half = T::lit(0.5);
    for z in z0..=z1 {
        for y in y0..=y1 {
            for x in x0..=x1 {
                let idx = [x, y, z];
                let excluded = (0..3).any(|a| {
                    idx[a] < max_idx && lo[a] >= T::from_i64(idx[a] + 1).unwrap()
                });
                if excluded {
                    continue;
                }
                let voxel = Voxel::new(x as u16, y as u16, z as u16);
                if triangle_box_overlap(voxel.center(), half, tri) {
                    visit(voxel);
                }
            }
        }
    }
}

/// Surface voxelization at one of [`ALLOWED_RESOLUTIONS`]. The mesh must already be
/// normalized into `[-1, 1]³`.
pub fn voxelize_surface<T: Scalar>(mesh: &TriangleMesh<T>, resolution: u32) -> Result<VoxelGrid> {
    if !ALLOWED_RESOLUTIONS.contains(&resolution) {
        return Err(Error::UnsupportedResolution(resolution));
    }
    voxelize_surface_any(mesh, resolution)
}

/// Surface voxelization at an arbitrary resolution.
pub fn voxelize_surface_any<T: Scalar>(mesh: &TriangleMesh<T>, resolution: u32) -> Result<VoxelGrid> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    check_resolution(resolution)?;
    let voxels: Vec<Voxel> = (0..mesh.faces().len())
        .into_par_iter()
        .fold(Vec::new, |mut acc, f| {
            let tri = mesh.triangle(f).map(|p| world_to_grid(p, resolution));
            triangle_cells(&tri, resolution, |v| acc.push(v));
            acc
        })
        .reduce(Vec::new, |mut a, mut b| {
            a.append(&mut b);
            a
        });
    VoxelGrid::new(resolution, voxels)
}

/// Max pooling by an integer factor: a parent is occupied iff any child is, and takes the
/// largest child saliency.
pub fn max_pool<T: Scalar>(volume: &SaliencyVolume<T>, factor: u32) -> Result<SaliencyVolume<T>> {
    let r = volume.resolution();
    if factor == 0 || !r.is_multiple_of(factor) {
        return Err(Error::IncompatibleResolution { from: r, to: r.checked_div(factor).unwrap_or(0) });
    }
    let f = factor as u16;
    let pairs = volume.iter().map(|(v, s)| (Voxel::new(v.x / f, v.y / f, v.z / f), s)).collect();
    SaliencyVolume::from_pairs(r / factor, pairs)
}

const VOLUME_MAGIC: [u8; 4] = *b"SVXV";
const VOLUME_VERSION: u32 = 1;
const VOLUME_HEADER: usize = 16;
const VOLUME_RECORD: usize = 10;

/// Serializes a volume in the SVXV layout (little-endian, records in `(z, y, x)` order).
pub fn encode_volume<T: Scalar>(volume: &SaliencyVolume<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(VOLUME_HEADER + VOLUME_RECORD * volume.len());
    out.extend_from_slice(&VOLUME_MAGIC);
    out.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
    out.extend_from_slice(&volume.resolution().to_le_bytes());
    out.extend_from_slice(&(volume.len() as u32).to_le_bytes());
    for (v, s) in volume.iter() {
        for c in v.xyz() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&s.as_f32().to_le_bytes());
    }
    out
}

pub(crate) fn read_u32(bytes: &[u8], at: usize) -> Result<u32, FormatError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(FormatError::Truncated)
}

pub(crate) fn check_magic(bytes: &[u8], expected: [u8; 4]) -> Result<(), FormatError> {
    let found: [u8; 4] = match bytes.get(..4) {
        Some(m) => m.try_into().unwrap(),
        None => return Err(FormatError::Truncated),
    };
    if found != expected {
        return Err(FormatError::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an SVXV byte buffer.
pub fn decode_volume<T: Scalar>(bytes: &[u8]) -> Result<SaliencyVolume<T>, FormatError> {
    check_magic(bytes, VOLUME_MAGIC)?;
    let version = read_u32(bytes, 4)?;
    if version != VOLUME_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let resolution = read_u32(bytes, 8)?;
    if resolution == 0 || resolution > 1 << 16 {
        return Err(FormatError::InvalidResolution(resolution));
    }
    let count = read_u32(bytes, 12)? as usize;
    let body = &bytes[VOLUME_HEADER..];
    let needed = count.checked_mul(VOLUME_RECORD).ok_or(FormatError::Truncated)?;
    if body.len() < needed {
        return Err(FormatError::Truncated);
    }
    if body.len() > needed {
        return Err(FormatError::TrailingBytes(body.len() - needed));
    }
    let mut voxels = Vec::with_capacity(count);
    let mut saliency = Vec::with_capacity(count);
    for (index, rec) in body.chunks_exact(VOLUME_RECORD).enumerate() {
        let c = |k: usize| u16::from_le_bytes([rec[2 * k], rec[2 * k + 1]]);
        let coord = [c(0), c(1), c(2)];
        if coord.iter().any(|&c| c as u32 >= resolution) {
            return Err(FormatError::CoordinateOutOfRange { index, coord, resolution });
        }
        let value = f32::from_le_bytes(rec[6..10].try_into().unwrap());
        if !(0.0..=1.0).contains(&value) {
            return Err(FormatError::SaliencyOutOfRange { index, value });
        }
        let voxel = Voxel::new(coord[0], coord[1], coord[2]);
        if voxels.last().is_some_and(|&prev| prev >= voxel) {
            return Err(FormatError::UnorderedRecords { index });
        }
        voxels.push(voxel);
        saliency.push(T::lit(value as f64));
    }
    Ok(SaliencyVolume { grid: VoxelGrid { resolution, voxels }, saliency })
}

pub fn write_volume<T: Scalar>(volume: &SaliencyVolume<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode_volume(volume))?;
    Ok(())
}

pub fn read_volume<T: Scalar>(path: impl AsRef<Path>) -> Result<SaliencyVolume<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(decode_volume(&bytes)?)
}
