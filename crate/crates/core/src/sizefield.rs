//! Saliency → target cell size → CVT density, and the supervoxel-count / compression-ratio
//! machinery built on it.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, CompensatedSum};
use crate::volume::{SaliencyVolume, VoxelGrid};
use crate::Scalar;

/// Upper end of the bracket searched by [`solve_k`].
pub const DEFAULT_K_MAX: f64 = 16.0;

/// Tolerance on the compression ratio reached by [`solve_k`].
pub const SOLVE_TOLERANCE: f64 = 1e-6;

/// `k`: cell size (in voxels) in low-saliency regions, `≥ 1`.
/// `t`: saliency pivot in `(0, 1)` below which cells take size `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeParams<T> {
    k: T,
    t: T,
}

impl<T: Scalar> SizeParams<T> {
    pub fn new(k: T, t: T) -> Result<Self> {
        if !(k >= T::one()) || !k.is_finite() {
            return Err(Error::InvalidParams(format!("K = {k} must be >= 1")));
        }
        if !(t > T::zero() && t < T::one()) {
            return Err(Error::InvalidParams(format!("t = {t} must lie in (0, 1)")));
        }
        Ok(Self { k, t })
    }

    pub fn k(&self) -> T {
        self.k
    }

    pub fn t(&self) -> T {
        self.t
    }
}

/// Piecewise-linear target size: `K` below the pivot, falling linearly to 1 at `x = 1`.
pub fn size_of<T: Scalar>(x: T, p: &SizeParams<T>) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::SaliencyOutOfRange(x.as_f64()));
    }
    Ok(size_unchecked(x, p))
}

#[inline]
fn size_unchecked<T: Scalar>(x: T, p: &SizeParams<T>) -> T {
    if x < p.t {
        p.k
    } else {
        (x - p.t) / (T::one() - p.t) * (T::one() - p.k) + p.k
    }
}

/// Per-voxel CVT density `∝ size⁻⁵`, normalized to total mass 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    grid: VoxelGrid,
    density: Vec<T>,
    normalization: T,
}

impl<T: Scalar> DensityField<T> {
    /// Builds a field from arbitrary positive weights (normalized here).
    pub fn from_weights(grid: VoxelGrid, weights: Vec<T>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::EmptyVolume);
        }
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: weights.len() });
        }
        if weights.iter().any(|w| !(*w > T::zero() && w.is_finite())) {
            return Err(Error::InvalidArgument("density weights must be positive and finite".into()));
        }
        let normalization = compensated_sum(weights.iter().copied());
        let density = weights.into_iter().map(|w| w / normalization).collect();
        Ok(Self { grid, density, normalization })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn density(&self) -> &[T] {
        &self.density
    }

    /// Sum of the unnormalized weights the field was divided by.
    pub fn normalization(&self) -> T {
        self.normalization
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    /// Recomputed total mass (1 up to rounding).
    pub fn total(&self) -> T {
        compensated_sum(self.density.iter().copied())
    }
}

pub fn density_field<T: Scalar>(volume: &SaliencyVolume<T>, p: &SizeParams<T>) -> Result<DensityField<T>> {
    if volume.is_empty() {
        return Err(Error::EmptyVolume);
    }
    let weights = volume.saliency().iter().map(|&x| size_unchecked(x, p).powi(5).recip()).collect();
    DensityField::from_weights(volume.grid().clone(), weights)
}

/// Unrounded supervoxel count `Σ 1/size³`.
pub fn count_sum<T: Scalar>(volume: &SaliencyVolume<T>, p: &SizeParams<T>) -> Result<T> {
    if volume.is_empty() {
        return Err(Error::EmptyVolume);
    }
    let mut acc = CompensatedSum::new();
    for &x in volume.saliency() {
        acc.add(size_unchecked(x, p).powi(3).recip());
    }
    Ok(acc.value())
}

/// Estimated supervoxel count: `Σ 1/size³` rounded half away from zero, at least 1 and at
/// most the number of occupied voxels.
pub fn estimate_count<T: Scalar>(volume: &SaliencyVolume<T>, p: &SizeParams<T>) -> Result<usize> {
    let sum = count_sum(volume, p)?;
    let n = sum.round().to_usize().unwrap_or(1);
    Ok(n.clamp(1, volume.len()))
}

/// Unrounded count divided by the number of occupied voxels.
pub fn compression_ratio<T: Scalar>(volume: &SaliencyVolume<T>, p: &SizeParams<T>) -> Result<T> {
    Ok(count_sum(volume, p)? / T::from_usize_lossy(volume.len()))
}

/// Finds `K ∈ [1, k_max]` whose compression ratio is within [`SOLVE_TOLERANCE`] of
/// `target_c`, by bisection on the non-increasing map `K ↦ c`.
pub fn solve_k<T: Scalar>(volume: &SaliencyVolume<T>, t: T, target_c: T, k_max: T) -> Result<T> {
    let ratio = |k: T| SizeParams::new(k, t).and_then(|p| compression_ratio(volume, &p));
    let tol = T::lit(SOLVE_TOLERANCE);
    let c_min = ratio(k_max)?;
    if !(target_c <= T::one() && target_c >= c_min - tol) {
        return Err(Error::UnreachableTarget { target: target_c.as_f64(), min: c_min.as_f64() });
    }
    let (mut lo, mut hi) = (T::one(), k_max);
    if (ratio(lo)? - target_c).abs() <= tol {
        return Ok(lo);
    }
    if (c_min - target_c).abs() <= tol {
        return Ok(hi);
    }
    // ratio(lo) > target > ratio(hi)
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        let c = ratio(mid)?;
        if (c - target_c).abs() <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if c > target_c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow<T> {
    pub k: T,
    pub t: T,
    pub c: T,
}

/// Compression ratio over a `(K, t)` grid, rows ordered by `t` then `K`.
pub fn sweep<T: Scalar>(volume: &SaliencyVolume<T>, ks: &[T], ts: &[T]) -> Result<Vec<SweepRow<T>>> {
    let mut rows = Vec::with_capacity(ks.len() * ts.len());
    for &t in ts {
        for &k in ks {
            let c = compression_ratio(volume, &SizeParams::new(k, t)?)?;
            rows.push(SweepRow { k, t, c });
        }
    }
    Ok(rows)
}

/// Checks that `c` is non-increasing in `K` along each `t` curve and non-increasing in `t`
/// at each `K`. Returns a description of the first violation.
pub fn check_sweep_monotone<T: Scalar>(rows: &[SweepRow<T>]) -> std::result::Result<(), String> {
    for a in rows {
        for b in rows {
            let violated = (a.t == b.t && a.k < b.k && b.c > a.c) || (a.k == b.k && a.t < b.t && b.c > a.c);
            if violated {
                return Err(format!(
                    "c increases from (K={}, t={}, c={}) to (K={}, t={}, c={})",
                    a.k, a.t, a.c, b.k, b.t, b.c
                ));
            }
        }
    }
    Ok(())
}

/// Writes `K,t,c` rows with six decimals.
pub fn write_sweep_csv<T: Scalar, W: Write>(rows: &[SweepRow<T>], mut w: W) -> Result<()> {
    let mut out = String::from("K,t,c\n");
    for r in rows {
        out.push_str(&format!("{:.6},{:.6},{:.6}\n", r.k.as_f64(), r.t.as_f64(), r.c.as_f64()));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}
