//! Indexed triangle meshes, Wavefront OBJ ingestion and normalization into the grid cube.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::geom::Vec3;
use crate::Scalar;

/// Indexed triangle soup.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh<T> {
    vertices: Vec<Vec3<T>>,
    faces: Vec<[u32; 3]>,
}

impl<T: Scalar> TriangleMesh<T> {
    /// Builds a mesh, checking that every face index is in range and no face repeats one
    /// vertex three times.
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(Error::InvalidMesh(format!("face {i} references a vertex >= {n}")));
            }
            if f[0] == f[1] && f[1] == f[2] {
                return Err(Error::InvalidMesh(format!("face {i} is degenerate")));
            }
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn face_area(&self, face: usize) -> T {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(c - a).norm() * T::lit(0.5)
    }

    pub fn total_area(&self) -> T {
        crate::scalar::compensated_sum((0..self.faces.len()).map(|f| self.face_area(f)))
    }

    /// Axis-aligned bounds `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), &v| (lo.component_min(v), hi.component_max(v))),
        )
    }

    /// Applies `f` to every vertex, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> Self {
        Self { vertices: self.vertices.iter().map(|&v| f(v)).collect(), faces: self.faces.clone() }
    }

    pub fn cast<U: Scalar>(&self) -> TriangleMesh<U> {
        TriangleMesh { vertices: self.vertices.iter().map(|v| v.cast()).collect(), faces: self.faces.clone() }
    }

    /// Parses the `v` / `f` subset of Wavefront OBJ. Indices are 1-based (negative indices
    /// count from the end); polygons are fan-triangulated; other statements are ignored.
    pub fn read_obj<R: BufRead>(reader: R) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let parse_err = |message: String| FormatError::Parse { line: lineno + 1, message };
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let mut c = [0.0f64; 3];
                    for slot in &mut c {
                        let tok = parts.next().ok_or_else(|| parse_err("vertex needs 3 coordinates".into()))?;
                        *slot = tok.parse().map_err(|_| parse_err(format!("bad coordinate {tok:?}")))?;
                    }
                    vertices.push(Vec3::from_f64(c));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in parts {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| parse_err(format!("bad face index {tok:?}")))?;
                        let resolved = match i {
                            0 => return Err(parse_err("face index 0".into()).into()),
                            i if i > 0 => i - 1,
                            i => vertices.len() as i64 + i,
                        };
                        if resolved < 0 || resolved >= u32::MAX as i64 {
                            return Err(parse_err(format!("face index {i} out of range")).into());
                        }
                        idx.push(resolved as u32);
                    }
                    if idx.len() < 3 {
                        return Err(parse_err("face needs at least 3 vertices".into()).into());
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Self::new(vertices, faces)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_obj(std::io::BufReader::new(file))
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        let mut out = String::new();
        for v in &self.vertices {
            let [x, y, z] = v.to_f64();
            let _ = writeln!(out, "v {x} {y} {z}");
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// Centers the bounding box at the origin and scales uniformly so the longest axis spans
/// `2 * half_extent`. A mesh with zero extent is only translated.
pub fn normalize_to_half_extent<T: Scalar>(mesh: &TriangleMesh<T>, half_extent: T) -> Result<TriangleMesh<T>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptyMesh)?;
    let center = (lo + hi) * T::lit(0.5);
    let extent = hi - lo;
    let longest = extent.x.max(extent.y).max(extent.z);
    let scale = if longest > T::zero() { half_extent * T::lit(2.0) / longest } else { T::one() };
    Ok(mesh.map_vertices(|v| (v - center) * scale))
}

/// Fits the mesh into `[-1, 1]³` for a grid of the given resolution: the longest axis spans
/// `2 - 2/R`, leaving half a voxel of margin on each side.
pub fn normalize_mesh<T: Scalar>(mesh: &TriangleMesh<T>, resolution: u32) -> Result<TriangleMesh<T>> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let r = T::from_u32(resolution).expect("resolution fits");
    normalize_to_half_extent(mesh, T::one() - T::one() / r)
}

/// Procedural meshes used by fixtures and tests.
pub mod shapes {
    use super::*;

    /// Icosahedron subdivided `subdivisions` times, projected onto a sphere.
    pub fn icosphere<T: Scalar>(radius: f64, subdivisions: u32) -> TriangleMesh<T> {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<[f64; 3]> = vec![
            [-1.0, phi, 0.0], [1.0, phi, 0.0], [-1.0, -phi, 0.0], [1.0, -phi, 0.0],
            [0.0, -1.0, phi], [0.0, 1.0, phi], [0.0, -1.0, -phi], [0.0, 1.0, -phi],
            [phi, 0.0, -1.0], [phi, 0.0, 1.0], [-phi, 0.0, -1.0], [-phi, 0.0, 1.0],
        ];
        let project = |v: [f64; 3]| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        };
        for v in &mut verts {
            *v = project(*v);
        }
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
            let mut midpoint = |a: u32, b: u32, verts: &mut Vec<[f64; 3]>| {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    let (p, q) = (verts[a as usize], verts[b as usize]);
                    verts.push(project([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                    (verts.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let vertices = verts.into_iter().map(|v| Vec3::from_f64([v[0] * radius, v[1] * radius, v[2] * radius])).collect();
        TriangleMesh::new(vertices, faces).expect("icosphere is valid")
    }

    /// Closed cube `[-half, half]³` with each face split into `segments × segments` quads
    /// (two triangles each), outward winding, shared vertices along edges.
    pub fn subdivided_cube<T: Scalar>(half: f64, segments: u32) -> TriangleMesh<T> {
        assert!(segments >= 1);
        let s = segments as i64;
        let mut index: HashMap<[i64; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut vid = |p: [i64; 3], vertices: &mut Vec<Vec3<T>>| {
            *index.entry(p).or_insert_with(|| {
                let c = |i: i64| half * (2.0 * i as f64 / s as f64 - 1.0);
                vertices.push(Vec3::from_f64([c(p[0]), c(p[1]), c(p[2])]));
                (vertices.len() - 1) as u32
            })
        };
        // (normal axis, side, u axis, v axis) with u × v pointing along the outward normal.
        let sides: [(usize, i64, usize, usize); 6] =
            [(0, s, 1, 2), (0, 0, 2, 1), (1, s, 2, 0), (1, 0, 0, 2), (2, s, 0, 1), (2, 0, 1, 0)];
        for (axis, side, u, v) in sides {
            for i in 0..s {
                for j in 0..s {
                    let corner = |di: i64, dj: i64| {
                        let mut p = [0i64; 3];
                        p[axis] = side;
                        p[u] = i + di;
                        p[v] = j + dj;
                        p
                    };
                    let a = vid(corner(0, 0), &mut vertices);
                    let b = vid(corner(1, 0), &mut vertices);
                    let c = vid(corner(1, 1), &mut vertices);
                    let d = vid(corner(0, 1), &mut vertices);
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                }
            }
        }
        TriangleMesh::new(vertices, faces).expect("cube is valid")
    }

    /// Flat `segments × segments` grid on `[-half, half]²` at `z = 0`.
    pub fn planar_grid<T: Scalar>(half: f64, segments: u32) -> TriangleMesh<T> {
        let s = segments as usize;
        let mut vertices = Vec::with_capacity((s + 1) * (s + 1));
        for j in 0..=s {
            for i in 0..=s {
                let c = |k: usize| half * (2.0 * k as f64 / s as f64 - 1.0);
                vertices.push(Vec3::from_f64([c(i), c(j), 0.0]));
            }
        }
        let id = |i: usize, j: usize| (j * (s + 1) + i) as u32;
        let mut faces = Vec::with_capacity(2 * s * s);
        for j in 0..s {
            for i in 0..s {
                faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriangleMesh::new(vertices, faces).expect("grid is valid")
    }
}
