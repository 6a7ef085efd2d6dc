//! Evaluation metrics: surface sampling, Chamfer distance with flip-and-ICP alignment,
//! mean curvature sum, codebook utilization and the ordering compressibility gap.

use std::collections::HashSet;
use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{normalize_to_half_extent, TriangleMesh};
use crate::random;
use crate::saliency::{barycentric_areas, mean_curvature};
use crate::scalar::{compensated_sum, Scalar};

pub const DEFAULT_ICP_ITERATIONS: usize = 50;
pub const ICP_RMS_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_PERMUTATIONS: usize = 16;
/// DEFLATE level used by [`gzip_gap`].
pub const DEFLATE_LEVEL: u32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T> {
    points: Vec<Vec3<T>>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3<T> {
        let n = T::from_usize_lossy(self.points.len().max(1));
        Vec3::new(
            compensated_sum(self.points.iter().map(|p| p.x)) / n,
            compensated_sum(self.points.iter().map(|p| p.y)) / n,
            compensated_sum(self.points.iter().map(|p| p.z)) / n,
        )
    }

    pub fn map(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> Self {
        Self { points: self.points.iter().map(|&p| f(p)).collect() }
    }

    fn non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyPointSet)
        } else {
            Ok(())
        }
    }
}

/// `n` points uniformly distributed over the surface: triangles are picked with probability
/// proportional to area, then a uniform barycentric point inside.
pub fn sample_surface<T: Scalar>(mesh: &TriangleMesh<T>, n: usize, rng_seed: u64) -> Result<PointSet<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cdf = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0f64;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f).as_f64();
        cdf.push(total);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroArea);
    }
    let mut rng = random::rng(rng_seed);
    let points = (0..n)
        .map(|_| {
            let u = random::unit_f64(&mut rng) * total;
            let face = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let [a, b, c] = mesh.triangle(face).map(|p| p.to_f64());
            let s = random::unit_f64(&mut rng).sqrt();
            let r = random::unit_f64(&mut rng);
            let (wa, wb, wc) = (1.0 - s, s * (1.0 - r), s * r);
            Vec3::from_f64([0, 1, 2].map(|k| wa * a[k] + wb * b[k] + wc * c[k]))
        })
        .collect();
    Ok(PointSet::new(points))
}

/// Exact nearest-neighbor index: a balanced k-d tree stored implicitly in a permuted array.
pub struct KdTree<T> {
    points: Vec<Vec3<T>>,
    axes: Vec<u8>,
}

impl<T: Scalar> KdTree<T> {
    pub fn new(points: &[Vec3<T>]) -> Self {
        let mut points = points.to_vec();
        let mut axes = vec![0u8; points.len()];
        Self::build(&mut points, &mut axes);
        Self { points, axes }
    }

    fn build(points: &mut [Vec3<T>], axes: &mut [u8]) {
        if points.len() <= 1 {
            return;
        }
        let (lo, hi) = points
            .iter()
            .fold((points[0], points[0]), |(lo, hi), &p| (lo.component_min(p), hi.component_max(p)));
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = points.len() / 2;
        points.select_nth_unstable_by(mid, |a, b| a[axis].partial_cmp(&b[axis]).unwrap_or(std::cmp::Ordering::Equal));
        axes[mid] = axis as u8;
        let (left, right) = points.split_at_mut(mid);
        let (left_axes, right_axes) = axes.split_at_mut(mid);
        Self::build(left, left_axes);
        Self::build(&mut right[1..], &mut right_axes[1..]);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest stored point and its squared distance, or `None` when empty.
    pub fn nearest(&self, q: Vec3<T>) -> Option<(Vec3<T>, T)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (self.points[0], q.distance_squared(self.points[0]));
        self.search(0, self.points.len(), q, &mut best);
        Some(best)
    }

    fn search(&self, lo: usize, hi: usize, q: Vec3<T>, best: &mut (Vec3<T>, T)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.points[mid];
        let d = q.distance_squared(p);
        if d < best.1 {
            *best = (p, d);
        }
        if hi - lo == 1 {
            return;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < T::zero() { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(near.0, near.1, q, best);
        if diff * diff <= best.1 {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn mean_nearest<T: Scalar>(from: &[Vec3<T>], tree: &KdTree<T>) -> T {
    let d: Vec<T> = from.par_iter().map(|&p| tree.nearest(p).map_or(T::zero(), |(_, d)| d)).collect();
    compensated_sum(d) / T::from_usize_lossy(from.len())
}

/// Symmetric mean squared nearest-neighbor distance.
pub fn chamfer_l2<T: Scalar>(p: &PointSet<T>, q: &PointSet<T>) -> Result<T> {
    p.non_empty()?;
    q.non_empty()?;
    let tp = KdTree::new(p.points());
    let tq = KdTree::new(q.points());
    Ok(mean_nearest(p.points(), &tq) + mean_nearest(q.points(), &tp))
}

/// Per-axis signs of flip `index`: bit 0 negates x, bit 1 y, bit 2 z.
pub fn flip_signs(index: u8) -> [f64; 3] {
    [0, 1, 2].map(|b| if index >> b & 1 == 1 { -1.0 } else { 1.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment<T> {
    pub aligned: PointSet<T>,
    pub flip: u8,
    pub cd: T,
}

/// Rigid transform `x -> r x + t` minimizing squared error between paired points.
fn kabsch(src: &[[f64; 3]], dst: &[[f64; 3]]) -> (Matrix3<f64>, [f64; 3]) {
    let n = src.len() as f64;
    let mean = |pts: &[[f64; 3]]| [0, 1, 2].map(|k| compensated_sum(pts.iter().map(|p| p[k])) / n);
    let (cs, cd) = (mean(src), mean(dst));
    let mut h = Matrix3::<f64>::zeros();
    for (a, b) in src.iter().zip(dst) {
        for i in 0..3 {
            for j in 0..3 {
                h[(i, j)] += (a[i] - cs[i]) * (b[j] - cd[j]);
            }
        }
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let v = vt.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    let rc = r * nalgebra::Vector3::from(cs);
    (r, [cd[0] - rc[0], cd[1] - rc[1], cd[2] - rc[2]])
}

fn icp(start: &[[f64; 3]], target: &KdTree<f64>, iterations: usize) -> Vec<[f64; 3]> {
    let mut current = start.to_vec();
    let mut prev_rms = f64::INFINITY;
    for _ in 0..iterations {
        let pairs: Vec<([f64; 3], f64)> = current
            .par_iter()
            .map(|&p| {
                let (q, d) = target.nearest(Vec3::from_f64(p)).expect("non-empty target");
                (q.to_f64(), d)
            })
            .collect();
        let rms = (compensated_sum(pairs.iter().map(|p| p.1)) / current.len() as f64).sqrt();
        if (prev_rms - rms).abs() < ICP_RMS_TOLERANCE {
            break;
        }
        prev_rms = rms;
        let matched: Vec<[f64; 3]> = pairs.iter().map(|p| p.0).collect();
        let (r, t) = kabsch(&current, &matched);
        for p in &mut current {
            let x = r * nalgebra::Vector3::from(*p);
            *p = [x[0] + t[0], x[1] + t[1], x[2] + t[2]];
        }
    }
    current
}

/// Best of the eight axis-flip alignments of `a` onto `b`.
///
/// Each flip is translated so the centroids coincide and then refined by point-to-point
/// ICP; the refinement is kept only if it does not increase the Chamfer distance. Ties go
/// to the lowest flip index. When either set collapses to a single location only the
/// translation is applied.
pub fn align_best<T: Scalar>(a: &PointSet<T>, b: &PointSet<T>, icp_iterations: usize) -> Result<Alignment<T>> {
    a.non_empty()?;
    b.non_empty()?;
    let ca = a.centroid();
    let cb = b.centroid();
    let degenerate = |s: &PointSet<T>| s.points().iter().all(|&p| p == s.points()[0]);
    if degenerate(a) || degenerate(b) {
        let aligned = a.map(|p| p - ca + cb);
        let cd = chamfer_l2(&aligned, b)?;
        return Ok(Alignment { aligned, flip: 0, cd });
    }
    let bf: Vec<Vec3<f64>> = b.points().iter().map(|p| p.cast()).collect();
    let tree_b = KdTree::new(&bf);
    let b64 = PointSet::new(bf.clone());
    let mut best: Option<(u8, Vec<[f64; 3]>, f64)> = None;
    for flip in 0..8u8 {
        let s = flip_signs(flip);
        let flipped = a.map(|p| Vec3::new(p.x * T::lit(s[0]), p.y * T::lit(s[1]), p.z * T::lit(s[2])));
        let shift = cb - flipped.centroid();
        let pre: Vec<[f64; 3]> = flipped.points().iter().map(|&p| (p + shift).to_f64()).collect();
        let cd_of = |pts: &[[f64; 3]]| chamfer_l2(&PointSet::new(pts.iter().map(|&p| Vec3::from_f64(p)).collect()), &b64);
        let cd_pre = cd_of(&pre)?;
        let refined = icp(&pre, &tree_b, icp_iterations);
        let cd_ref = cd_of(&refined)?;
        let (pts, cd) = if cd_ref <= cd_pre { (refined, cd_ref) } else { (pre, cd_pre) };
        if best.as_ref().is_none_or(|b| cd < b.2) {
            best = Some((flip, pts, cd));
        }
    }
    let (flip, pts, cd) = best.expect("eight candidates");
    Ok(Alignment { aligned: PointSet::new(pts.into_iter().map(Vec3::from_f64).collect()), flip, cd: T::lit(cd) })
}

/// Area-weighted mean of `|H|` with barycentric vertex areas, on the mesh as given.
pub fn mcs<T: Scalar>(mesh: &TriangleMesh<T>) -> Result<T> {
    let h = mean_curvature(mesh)?;
    let areas = barycentric_areas(mesh);
    let total = compensated_sum(areas.iter().copied());
    if !(total > T::zero()) {
        return Err(Error::ZeroArea);
    }
    Ok(compensated_sum(areas.iter().zip(&h.values).map(|(&a, &v)| a * v.abs())) / total)
}

/// [`mcs`] after centering and scaling the longest bounding-box axis to `[-1, 1]`.
pub fn mcs_normalized<T: Scalar>(mesh: &TriangleMesh<T>) -> Result<T> {
    mcs(&normalize_to_half_extent(mesh, T::one())?)
}

/// Code sequences over a codebook of `codebook_size` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStatsInput {
    sequences: Vec<Vec<u32>>,
    codebook_size: u64,
}

impl TokenStatsInput {
    pub fn new(sequences: Vec<Vec<u32>>, codebook_size: u64) -> Result<Self> {
        if codebook_size == 0 {
            return Err(Error::InvalidArgument("codebook size must be positive".into()));
        }
        for seq in &sequences {
            if seq.is_empty() {
                return Err(Error::InvalidArgument("empty code sequence".into()));
            }
            if let Some(&c) = seq.iter().find(|&&c| c as u64 >= codebook_size) {
                return Err(Error::CodeOutOfRange { code: c as u64, size: codebook_size });
            }
        }
        Ok(Self { sequences, codebook_size })
    }

    pub fn sequences(&self) -> &[Vec<u32>] {
        &self.sequences
    }

    pub fn codebook_size(&self) -> u64 {
        self.codebook_size
    }
}

/// Fraction of the codebook used by any sequence.
pub fn gcu(input: &TokenStatsInput) -> f64 {
    let used: HashSet<u32> = input.sequences.iter().flatten().copied().collect();
    used.len() as f64 / input.codebook_size as f64
}

/// Codebook utilization after each sequence is added, in order.
pub fn gcu_running(input: &TokenStatsInput) -> Vec<f64> {
    let mut used = HashSet::new();
    input
        .sequences
        .iter()
        .map(|seq| {
            used.extend(seq.iter().copied());
            used.len() as f64 / input.codebook_size as f64
        })
        .collect()
}

/// Mean over sequences of distinct codes per token. Zero for no sequences.
pub fn apcu(input: &TokenStatsInput) -> f64 {
    if input.sequences.is_empty() {
        return 0.0;
    }
    let ratios = input.sequences.iter().map(|seq| {
        let distinct: HashSet<u32> = seq.iter().copied().collect();
        distinct.len() as f64 / seq.len() as f64
    });
    compensated_sum(ratios) / input.sequences.len() as f64
}

/// Codes as ASCII decimal separated by single spaces.
pub fn serialize_codes(codes: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(codes.len() * 5);
    for (i, c) in codes.iter().enumerate() {
        if i > 0 {
            out.push(b' ');
        }
        out.extend_from_slice(c.to_string().as_bytes());
    }
    out
}

/// Raw DEFLATE size in bytes at [`DEFLATE_LEVEL`].
pub fn deflate_len(bytes: &[u8]) -> usize {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::new(DEFLATE_LEVEL));
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory finish").len()
}

/// Mean over sequences of the compression rate gap (bits per token) between random
/// permutations and the given order. Positive when the given order compresses better.
pub fn gzip_gap(sequences: &[Vec<u32>], k_perms: usize, rng_seed: u64) -> Result<f64> {
    if k_perms == 0 {
        return Err(Error::InvalidArgument("k_perms must be positive".into()));
    }
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("no sequences".into()));
    }
    if sequences.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("empty code sequence".into()));
    }
    let mut rng = random::rng(rng_seed);
    let mut jobs: Vec<(usize, Vec<u32>)> = Vec::with_capacity(sequences.len() * (k_perms + 1));
    for (s, seq) in sequences.iter().enumerate() {
        jobs.push((s, seq.clone()));
        for _ in 0..k_perms {
            let mut p = seq.clone();
            random::shuffle(&mut rng, &mut p);
            jobs.push((s, p));
        }
    }
    let sizes: Vec<usize> = jobs.par_iter().map(|(_, codes)| deflate_len(&serialize_codes(codes))).collect();
    let gaps = sequences.iter().enumerate().map(|(s, seq)| {
        let block = &sizes[s * (k_perms + 1)..(s + 1) * (k_perms + 1)];
        let len = seq.len() as f64;
        let ordered = (8 * block[0]) as f64 / len;
        let shuffled_total: usize = block[1..].iter().sum();
        let shuffled = (8 * shuffled_total) as f64 / (k_perms as f64 * len);
        shuffled - ordered
    });
    Ok(compensated_sum(gaps) / sequences.len() as f64)
}

/// One line of the batch report. Metrics that could not be computed for a shape (no token
/// file, point cloud without faces) are left empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportRow {
    pub shape_id: String,
    pub cd: Option<f64>,
    pub mcs: Option<f64>,
    pub gcu_running: Option<f64>,
    pub apcu: Option<f64>,
    pub gzip_gap: Option<f64>,
}

pub fn write_report<W: Write>(rows: &[ReportRow], mut w: W) -> Result<()> {
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = String::from("shape_id,cd,mcs,gcu_running,apcu,gzip_gap\n");
    for r in rows {
        let fields = [r.cd, r.mcs, r.gcu_running, r.apcu, r.gzip_gap].map(cell).join(",");
        out.push_str(&format!("{},{fields}\n", r.shape_id));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}
