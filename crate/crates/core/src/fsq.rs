//! Finite scalar quantization: per-dimension uniform levels on `[-1, 1]` composed into one
//! mixed-radix code.
//!
//! [`describe_supervoxel`] provides a deterministic 5-D geometric descriptor per cell. It
//! stands in for learned supervoxel latents so the token pipeline runs end to end without a
//! neural encoder.

use crate::cvt::{cell_members, SupervoxelPartition};
use crate::error::{Error, Result};
use crate::volume::{Voxel, VoxelGrid};
use crate::Scalar;

/// Levels used for supervoxel tokens.
pub const SUPERVOXEL_LEVELS: [u16; 5] = [9, 9, 5, 5, 5];

/// Levels of the saliency-volume quantizer.
pub const SALIENCY_LEVELS: [u16; 4] = [9, 9, 5, 5];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsqConfig {
    levels: Vec<u16>,
    size: u32,
}

impl FsqConfig {
    pub fn new(levels: Vec<u16>) -> Result<Self> {
        if levels.is_empty() || levels.len() > u8::MAX as usize {
            return Err(Error::InvalidFsq(format!("{} dimensions", levels.len())));
        }
        if let Some(l) = levels.iter().find(|&&l| l < 2) {
            return Err(Error::InvalidFsq(format!("level count {l} < 2")));
        }
        let size = levels
            .iter()
            .try_fold(1u32, |acc, &l| acc.checked_mul(l as u32))
            .ok_or_else(|| Error::InvalidFsq("codebook size overflows u32".into()))?;
        Ok(Self { levels, size })
    }

    pub fn supervoxel() -> Self {
        Self::new(SUPERVOXEL_LEVELS.to_vec()).unwrap()
    }

    pub fn levels(&self) -> &[u16] {
        &self.levels
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// `Π L_d`.
    pub fn codebook_size(&self) -> u32 {
        self.size
    }

    /// Lattice digits `q_d ∈ [0, L_d)`, rounding half up.
    pub fn quantize<T: Scalar>(&self, v: &Descriptor<T>) -> Result<Vec<u16>> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.dim() });
        }
        let half = T::lit(0.5);
        Ok(v.0
            .iter()
            .zip(&self.levels)
            .map(|(&x, &l)| {
                let steps = T::from_u16(l - 1).unwrap();
                let q = (steps * (x + T::one()) * half + half).floor();
                q.to_u16().unwrap_or(0).min(l - 1)
            })
            .collect())
    }

    /// Mixed-radix code `Σ q_d Π_{e<d} L_e` of the nearest lattice point.
    pub fn encode<T: Scalar>(&self, v: &Descriptor<T>) -> Result<u32> {
        let digits = self.quantize(v)?;
        let mut code = 0u32;
        let mut radix = 1u32;
        for (&q, &l) in digits.iter().zip(&self.levels) {
            code += q as u32 * radix;
            radix = radix.wrapping_mul(l as u32);
        }
        Ok(code)
    }

    /// Lattice point of `code`: `v_d = 2 q_d / (L_d − 1) − 1`.
    pub fn decode<T: Scalar>(&self, code: u32) -> Result<Descriptor<T>> {
        if code >= self.size {
            return Err(Error::CodeOutOfRange { code: code as u64, size: self.size as u64 });
        }
        let mut rest = code;
        let values = self
            .levels
            .iter()
            .map(|&l| {
                let q = rest % l as u32;
                rest /= l as u32;
                T::lit(2.0 * q as f64 / (l - 1) as f64 - 1.0)
            })
            .collect();
        Ok(Descriptor(values))
    }
}

/// Point of `[-1, 1]^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor<T>(Vec<T>);

impl<T: Scalar> Descriptor<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        for (index, &x) in values.iter().enumerate() {
            if !(x >= -T::one() && x <= T::one()) {
                return Err(Error::ComponentOutOfRange { index, value: x.as_f64() });
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn clamp_unit<T: Scalar>(x: T) -> T {
    x.max(-T::one()).min(T::one())
}

/// Population rank mapped to `[-1, 1]`: `2 r / (N − 1) − 1`, `r` = number of cells with a
/// strictly smaller population.
fn population_ranks<T: Scalar>(populations: &[usize]) -> Vec<T> {
    let n = populations.len();
    if n <= 1 {
        return vec![T::zero(); n];
    }
    let mut sorted = populations.to_vec();
    sorted.sort_unstable();
    populations
        .iter()
        .map(|p| {
            let rank = sorted.partition_point(|q| q < p);
            T::lit(2.0 * rank as f64 / (n - 1) as f64 - 1.0)
        })
        .collect()
}

fn describe_cell<T: Scalar>(members: &[Voxel], seed: crate::geom::Vec3<T>, rank: T) -> Descriptor<T> {
    let mut lo = [u16::MAX; 3];
    let mut hi = [0u16; 3];
    let mut sum = [0f64; 3];
    for v in members {
        for (a, c) in v.xyz().into_iter().enumerate() {
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
            sum[a] += c as f64 + 0.5;
        }
    }
    let count = members.len() as f64;
    let extent = [0, 1, 2].map(|a| (hi[a] - lo[a]) as f64 + 1.0);
    let occupancy = count / (extent[0] * extent[1] * extent[2]);
    let seed = seed.to_f64();
    let mut values = vec![T::lit(2.0 * occupancy - 1.0)];
    for a in 0..3 {
        let offset = sum[a] / count - seed[a];
        values.push(clamp_unit(T::lit(offset / (0.5 * extent[a]))));
    }
    values.push(rank);
    Descriptor(values.into_iter().map(clamp_unit).collect())
}

/// Descriptor of every cell, in seed-index order.
///
/// Components: bounding-box occupancy fraction `u` as `2u − 1`; offset of the cell's voxel
/// centroid from its seed per axis, divided by half the box extent and clamped; population
/// rank.
pub fn describe_all<T: Scalar>(grid: &VoxelGrid, partition: &SupervoxelPartition<T>) -> Result<Vec<Descriptor<T>>> {
    if grid.len() != partition.assignment().len() {
        return Err(Error::DimensionMismatch { expected: partition.assignment().len(), got: grid.len() });
    }
    let members = cell_members(grid, partition);
    if let Some(i) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCell(i));
    }
    let ranks = population_ranks::<T>(&members.iter().map(Vec::len).collect::<Vec<_>>());
    Ok(members
        .iter()
        .zip(partition.seeds())
        .zip(ranks)
        .map(|((m, &s), r)| describe_cell(m, s, r))
        .collect())
}

pub fn describe_supervoxel<T: Scalar>(
    grid: &VoxelGrid,
    partition: &SupervoxelPartition<T>,
    cell: usize,
) -> Result<Descriptor<T>> {
    if cell >= partition.len() {
        return Err(Error::InvalidArgument(format!("cell {cell} >= {}", partition.len())));
    }
    if grid.len() != partition.assignment().len() {
        return Err(Error::DimensionMismatch { expected: partition.assignment().len(), got: grid.len() });
    }
    let members = cell_members(grid, partition);
    if members[cell].is_empty() {
        return Err(Error::EmptyCell(cell));
    }
    let ranks = population_ranks::<T>(&members.iter().map(Vec::len).collect::<Vec<_>>());
    Ok(describe_cell(&members[cell], partition.seeds()[cell], ranks[cell]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::sizefield::DensityField;
    use proptest::prelude::*;

    fn d(values: &[f64]) -> Descriptor<f64> {
        Descriptor::new(values.to_vec()).unwrap()
    }

    #[test]
    fn codebook_sizes() {
        assert_eq!(FsqConfig::supervoxel().codebook_size(), 10125);
        assert_eq!(FsqConfig::new(SALIENCY_LEVELS.to_vec()).unwrap().codebook_size(), 2025);
        assert!(FsqConfig::new(vec![1, 4]).is_err());
        assert!(FsqConfig::new(vec![]).is_err());
        assert!(FsqConfig::new(vec![65535, 65535, 65535]).is_err());
    }

    #[test]
    fn encode_examples() {
        let cfg = FsqConfig::supervoxel();
        assert_eq!(cfg.encode(&d(&[-1.0; 5])).unwrap(), 0);
        assert_eq!(cfg.encode(&d(&[1.0; 5])).unwrap(), 10124);
        assert_eq!(cfg.quantize(&d(&[0.0; 5])).unwrap(), vec![4, 4, 2, 2, 2]);
        assert_eq!(cfg.encode(&d(&[0.0; 5])).unwrap(), 5062);
    }

    #[test]
    fn rounds_half_up() {
        let cfg = FsqConfig::new(vec![2]).unwrap();
        assert_eq!(cfg.encode(&d(&[0.0])).unwrap(), 1);
        assert_eq!(cfg.encode(&d(&[-1e-9])).unwrap(), 0);
    }

    #[test]
    fn decode_examples_and_errors() {
        let cfg = FsqConfig::supervoxel();
        assert_eq!(cfg.decode::<f64>(0).unwrap(), d(&[-1.0; 5]));
        assert!(matches!(cfg.decode::<f64>(10125), Err(Error::CodeOutOfRange { code: 10125, size: 10125 })));
        assert!(matches!(Descriptor::new(vec![0.0, 1.5]), Err(Error::ComponentOutOfRange { index: 1, .. })));
        assert!(Descriptor::new(vec![f64::NAN]).is_err());
        assert!(matches!(cfg.encode(&d(&[0.0; 4])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_voxel_cell_at_seed() {
        let grid = VoxelGrid::new(4, vec![Voxel::new(2, 1, 3)]).unwrap();
        let field = DensityField::from_weights(grid.clone(), vec![1.0]).unwrap();
        let p = SupervoxelPartition::from_seeds(&field, vec![Vec3::new(2.5, 1.5, 3.5)]).unwrap();
        let desc = describe_supervoxel(&grid, &p, 0).unwrap();
        assert_eq!(desc.values(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn three_voxel_cell_by_hand() {
        let grid = VoxelGrid::new(4, vec![Voxel::new(0, 0, 0), Voxel::new(1, 0, 0), Voxel::new(0, 1, 0)]).unwrap();
        let field = DensityField::from_weights(grid.clone(), vec![1.0f64; 3]).unwrap();
        let p = SupervoxelPartition::from_seeds(&field, vec![Vec3::new(0.5, 0.5, 0.5)]).unwrap();
        let desc = describe_supervoxel(&grid, &p, 0).unwrap();
        // box 2x2x1 holds 3 voxels; centroid (5/6, 5/6, 1/2); half extents (1, 1, 1/2)
        let expected = [0.5, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0];
        for (a, b) in desc.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{desc:?}");
        }
    }

    #[test]
    fn ranks_span_unit_interval() {
        let r = population_ranks::<f64>(&[5, 1, 3, 3]);
        for (a, b) in r.iter().zip([1.0, -1.0, -1.0 / 3.0, -1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15, "{r:?}");
        }
    }

    #[test]
    fn empty_cell_rejected() {
        let grid = VoxelGrid::new(4, vec![Voxel::new(0, 0, 0)]).unwrap();
        let field = DensityField::from_weights(grid.clone(), vec![1.0]).unwrap();
        let p = SupervoxelPartition::from_seeds(&field, vec![Vec3::splat(0.5), Vec3::splat(3.5)]).unwrap();
        assert!(matches!(describe_supervoxel(&grid, &p, 1), Err(Error::EmptyCell(1))));
        assert!(matches!(describe_all(&grid, &p), Err(Error::EmptyCell(1))));
    }

    proptest! {
        #[test]
        fn changing_one_component_changes_one_digit(v in prop::collection::vec(-1.0f64..=1.0, 5), d_idx in 0usize..5, x in -1.0f64..=1.0) {
            let cfg = FsqConfig::supervoxel();
            let before = cfg.quantize(&Descriptor::new(v.clone()).unwrap()).unwrap();
            let mut w = v;
            w[d_idx] = x;
            let after = cfg.quantize(&Descriptor::new(w).unwrap()).unwrap();
            for k in 0..5 {
                if k != d_idx {
                    prop_assert_eq!(before[k], after[k]);
                }
            }
        }

        #[test]
        fn reconstruction_error_bound(v in prop::collection::vec(-1.0f64..=1.0, 5)) {
            let cfg = FsqConfig::supervoxel();
            let code = cfg.encode(&Descriptor::new(v.clone()).unwrap()).unwrap();
            let back = cfg.decode::<f64>(code).unwrap();
            for ((x, y), &l) in v.iter().zip(back.values()).zip(cfg.levels()) {
                prop_assert!((x - y).abs() <= 1.0 / (l - 1) as f64 + 1e-12);
            }
        }
    }
}
