//! Tetrahedral partitions of box and letter-shaped polyhedral domains.
//!
//! Meshes are built by splitting axis-aligned cubic cells into six tetrahedra
//! (Kuhn/Freudenthal subdivision, all cells sharing the same main diagonal
//! direction), which tiles space conformally: tetrahedra of neighboring cells
//! match face to face. Arbitrary conforming meshes can also be loaded from a
//! plain text format, see [`load_mesh`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3, Vector3};

use crate::{Error, Result};

/// A triangular face of the partition.
///
/// `verts` is sorted ascending; `tets` holds the adjacent tetrahedra with the
/// lower index first. Boundary faces have `tets.1 == None`.
#[derive(Clone, Debug)]
pub struct Face {
    pub verts: [usize; 3],
    pub tets: (usize, Option<usize>),
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.tets.1.is_none()
    }
}

/// Worst-shape statistics of a partition; `max_aspect` is the largest ratio
/// of longest edge to inradius diameter over all tets (quasi-uniformity
/// monitor).
#[derive(Clone, Copy, Debug)]
pub struct ShapeReport {
    pub h_max: f64,
    pub h_min: f64,
    pub max_aspect: f64,
}

/// An immutable conforming tetrahedral partition.
///
/// Construction precomputes per-tet barycentric gradients (used throughout
/// evaluation and assembly), the face adjacency table, and a uniform-bin
/// acceleration grid for point location.
pub struct TetMesh {
    vertices: Vec<Point3<f64>>,
    tets: Vec<[usize; 4]>,
    faces: Vec<Face>,
    face_index: HashMap<[usize; 3], usize>,
    interior_faces: Vec<usize>,
    boundary_faces: Vec<usize>,
    /// Gradients of the four barycentric coordinate functions of each tet.
    grads: Vec<[Vector3<f64>; 4]>,
    volumes: Vec<f64>,
    /// Nominal cell size: the build parameter h, or the longest edge for
    /// loaded meshes. Controls the locate() bin resolution.
    h: f64,
    bbox: (Point3<f64>, Point3<f64>),
    bins: BinGrid,
}

const BARY_TOL: f64 = 1e-12;

impl TetMesh {
    /// Builds a mesh from raw vertices and tetrahedra.
    ///
    /// Tets with negative orientation are fixed by swapping two vertices;
    /// degenerate tets, out-of-range indices, and non-manifold faces (shared
    /// by more than two tets) are rejected.
    pub fn new(vertices: Vec<Point3<f64>>, tets: Vec<[usize; 4]>) -> Result<Self> {
        Self::from_parts(vertices, tets, None)
    }

    fn from_parts(
        vertices: Vec<Point3<f64>>,
        mut tets: Vec<[usize; 4]>,
        nominal_h: Option<f64>,
    ) -> Result<Self> {
        if vertices.is_empty() || tets.is_empty() {
            return Err(Error::Config("mesh must have vertices and tets".into()));
        }
        for v in &vertices {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::Config("non-finite vertex coordinate".into()));
            }
        }

        let mut bbox_lo = vertices[0];
        let mut bbox_hi = vertices[0];
        for v in &vertices {
            for a in 0..3 {
                bbox_lo[a] = bbox_lo[a].min(v[a]);
                bbox_hi[a] = bbox_hi[a].max(v[a]);
            }
        }
        let diam = (bbox_hi - bbox_lo).norm();

        let mut grads = Vec::with_capacity(tets.len());
        let mut volumes = Vec::with_capacity(tets.len());
        let mut longest_edge: f64 = 0.0;
        for (t, tet) in tets.iter_mut().enumerate() {
            for &v in tet.iter() {
                if v >= vertices.len() {
                    return Err(Error::Config(format!(
                        "tet {t} references vertex {v} out of range"
                    )));
                }
            }
            let vol6 = signed_volume6(&vertices, tet);
            if vol6 < 0.0 {
                tet.swap(2, 3);
            }
            let (g, vol) = tet_gradients(&vertices, tet)
                .ok_or_else(|| Error::Config(format!("tet {t} is degenerate")))?;
            if vol <= 1e-14 * diam.powi(3) {
                return Err(Error::Config(format!("tet {t} is degenerate")));
            }
            for i in 0..4 {
                for j in i + 1..4 {
                    longest_edge = longest_edge.max((vertices[tet[i]] - vertices[tet[j]]).norm());
                }
            }
            grads.push(g);
            volumes.push(vol);
        }

        // Face table keyed by the sorted vertex triple. HashMap iteration is
        // not deterministic, so faces are re-sorted by key before storage.
        let mut fmap: HashMap<[usize; 3], (usize, Option<usize>)> = HashMap::new();
        for (t, tet) in tets.iter().enumerate() {
            for omit in 0..4 {
                let mut key = [0usize; 3];
                let mut w = 0;
                for (slot, &v) in tet.iter().enumerate() {
                    if slot != omit {
                        key[w] = v;
                        w += 1;
                    }
                }
                key.sort_unstable();
                match fmap.get_mut(&key) {
                    None => {
                        fmap.insert(key, (t, None));
                    }
                    Some((_, second @ None)) => *second = Some(t),
                    Some(_) => {
                        return Err(Error::Config(format!(
                            "face {key:?} is shared by more than two tets"
                        )))
                    }
                }
            }
        }
        let mut keys: Vec<[usize; 3]> = fmap.keys().copied().collect();
        keys.sort_unstable();
        let mut faces = Vec::with_capacity(keys.len());
        let mut face_index = HashMap::with_capacity(keys.len());
        let mut interior_faces = Vec::new();
        let mut boundary_faces = Vec::new();
        for key in keys {
            let tets_pair = fmap[&key];
            let idx = faces.len();
            face_index.insert(key, idx);
            if tets_pair.1.is_some() {
                interior_faces.push(idx);
            } else {
                boundary_faces.push(idx);
            }
            faces.push(Face {
                verts: key,
                tets: tets_pair,
            });
        }

        let h = nominal_h.unwrap_or(longest_edge);
        let bins = BinGrid::build(&vertices, &tets, bbox_lo, bbox_hi, h);

        Ok(TetMesh {
            vertices,
            tets,
            faces,
            face_index,
            interior_faces,
            boundary_faces,
            grads,
            volumes,
            h,
            bbox: (bbox_lo, bbox_hi),
            bins,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn tet_vertices(&self, t: usize) -> [Point3<f64>; 4] {
        let tet = self.tets[t];
        [
            self.vertices[tet[0]],
            self.vertices[tet[1]],
            self.vertices[tet[2]],
            self.vertices[tet[3]],
        ]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Indices into `faces()` of faces shared by two tets.
    pub fn interior_faces(&self) -> &[usize] {
        &self.interior_faces
    }

    /// Indices into `faces()` of faces owned by a single tet.
    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    /// Looks up a face by its (unsorted) vertex triple.
    pub fn find_face(&self, mut verts: [usize; 3]) -> Option<&Face> {
        verts.sort_unstable();
        self.face_index.get(&verts).map(|&i| &self.faces[i])
    }

    /// Gradients of the four barycentric coordinate functions of tet `t`.
    /// Constant vectors on the tet: the core ingredient of every derivative
    /// formula in B-form.
    pub fn bary_gradients(&self, t: usize) -> &[Vector3<f64>; 4] {
        &self.grads[t]
    }

    pub fn volume(&self, t: usize) -> f64 {
        self.volumes[t]
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Nominal cell size (the `h` the mesh was built with, or the longest
    /// edge for loaded meshes).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bbox(&self) -> (Point3<f64>, Point3<f64>) {
        self.bbox
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    /// Barycentric coordinates of `p` in tet `t` (uses the cached gradients;
    /// exact for points anywhere in space, not just inside).
    pub fn barycentric_in(&self, t: usize, p: &Point3<f64>) -> [f64; 4] {
        let d = p - self.vertices[self.tets[t][0]];
        let g = &self.grads[t];
        let b1 = g[1].dot(&d);
        let b2 = g[2].dot(&d);
        let b3 = g[3].dot(&d);
        [1.0 - b1 - b2 - b3, b1, b2, b3]
    }

    /// Locates the tetrahedron containing `p`.
    ///
    /// Returns the lowest-index containing tet and the barycentric
    /// coordinates of `p` in it, clamped to `[0, 1]`. Containment allows a
    /// `-1e-12` tolerance, so boundary and face points resolve. `None` when
    /// no tet contains `p` (outside the domain, or inside a letter's notch).
    pub fn locate(&self, p: &Point3<f64>) -> Option<(usize, [f64; 4])> {
        let pad = self.bins.pad;
        for a in 0..3 {
            if p[a] < self.bbox.0[a] - pad || p[a] > self.bbox.1[a] + pad {
                return None;
            }
        }
        if let Some(hit) = self.scan(self.bins.candidates(p), p) {
            return Some(hit);
        }
        // Bin lists are built from padded tet boxes, so a miss here is a
        // genuine miss for any practical geometry; the full scan stays as a
        // last-resort net (and resolves hole points to None at worst).
        self.scan_all(p)
    }

    fn scan(&self, cands: &[u32], p: &Point3<f64>) -> Option<(usize, [f64; 4])> {
        for &t in cands {
            let b = self.barycentric_in(t as usize, p);
            if b.iter().all(|&x| x >= -BARY_TOL) {
                return Some((t as usize, b.map(|x| x.clamp(0.0, 1.0))));
            }
        }
        None
    }

    fn scan_all(&self, p: &Point3<f64>) -> Option<(usize, [f64; 4])> {
        for t in 0..self.tets.len() {
            let b = self.barycentric_in(t, p);
            if b.iter().all(|&x| x >= -BARY_TOL) {
                return Some((t, b.map(|x| x.clamp(0.0, 1.0))));
            }
        }
        None
    }

    /// Brute-force locate, used by tests to cross-check the bin grid.
    pub fn locate_brute(&self, p: &Point3<f64>) -> Option<(usize, [f64; 4])> {
        self.scan_all(p)
    }

    pub fn shape_report(&self) -> ShapeReport {
        let mut h_max: f64 = 0.0;
        let mut h_min = f64::INFINITY;
        let mut max_aspect: f64 = 0.0;
        for (t, tet) in self.tets.iter().enumerate() {
            let vs = tet.map(|v| self.vertices[v]);
            let mut longest: f64 = 0.0;
            for i in 0..4 {
                for j in i + 1..4 {
                    longest = longest.max((vs[i] - vs[j]).norm());
                }
            }
            let mut area_sum = 0.0;
            for omit in 0..4 {
                let f: Vec<_> = (0..4).filter(|&s| s != omit).map(|s| vs[s]).collect();
                area_sum += 0.5 * (f[1] - f[0]).cross(&(f[2] - f[0])).norm();
            }
            // inradius = 3V / (total face area)
            let inradius = 3.0 * self.volumes[t] / area_sum;
            h_max = h_max.max(longest);
            h_min = h_min.min(longest);
            max_aspect = max_aspect.max(longest / (2.0 * inradius));
        }
        ShapeReport {
            h_max,
            h_min,
            max_aspect,
        }
    }
}

fn signed_volume6(vertices: &[Point3<f64>], tet: &[usize; 4]) -> f64 {
    let e1 = vertices[tet[1]] - vertices[tet[0]];
    let e2 = vertices[tet[2]] - vertices[tet[0]];
    let e3 = vertices[tet[3]] - vertices[tet[0]];
    Matrix3::from_columns(&[e1, e2, e3]).determinant()
}

fn tet_gradients(
    vertices: &[Point3<f64>],
    tet: &[usize; 4],
) -> Option<([Vector3<f64>; 4], f64)> {
    let e1 = vertices[tet[1]] - vertices[tet[0]];
    let e2 = vertices[tet[2]] - vertices[tet[0]];
    let e3 = vertices[tet[3]] - vertices[tet[0]];
    let e = Matrix3::from_columns(&[e1, e2, e3]);
    let vol6 = e.determinant();
    let inv = e.try_inverse()?;
    // Rows of E^{-1} are the gradients of b_2, b_3, b_4; b_1 = 1 - sum.
    let g1 = Vector3::new(inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]);
    let g2 = Vector3::new(inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]);
    let g3 = Vector3::new(inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]);
    let g0 = -(g1 + g2 + g3);
    Some(([g0, g1, g2, g3], vol6 / 6.0))
}

/// Barycentric coordinates of `p` with respect to an explicit vertex tuple.
pub fn barycentric(verts: &[Point3<f64>; 4], p: &Point3<f64>) -> Option<[f64; 4]> {
    let e = Matrix3::from_columns(&[verts[1] - verts[0], verts[2] - verts[0], verts[3] - verts[0]]);
    let inv = e.try_inverse()?;
    let d = inv * (p - verts[0]);
    Some([1.0 - d.x - d.y - d.z, d.x, d.y, d.z])
}

// ---------------------------------------------------------------------------
// Uniform-bin acceleration for locate().

struct BinGrid {
    lo: Point3<f64>,
    dims: [usize; 3],
    inv: [f64; 3],
    cells: Vec<Vec<u32>>,
    pad: f64,
}

impl BinGrid {
    fn build(
        vertices: &[Point3<f64>],
        tets: &[[usize; 4]],
        lo: Point3<f64>,
        hi: Point3<f64>,
        h: f64,
    ) -> BinGrid {
        let pad = 1e-9 * (1.0 + (hi - lo).norm());
        let mut dims = [1usize; 3];
        let mut inv = [0.0f64; 3];
        for a in 0..3 {
            let extent = hi[a] - lo[a];
            let n = if extent > 0.0 && h > 0.0 {
                ((extent / h).round() as usize).clamp(1, 256)
            } else {
                1
            };
            dims[a] = n;
            inv[a] = if extent > 0.0 { n as f64 / extent } else { 0.0 };
        }
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (t, tet) in tets.iter().enumerate() {
            let mut tlo = vertices[tet[0]];
            let mut thi = tlo;
            for &v in &tet[1..] {
                for a in 0..3 {
                    tlo[a] = tlo[a].min(vertices[v][a]);
                    thi[a] = thi[a].max(vertices[v][a]);
                }
            }
            let mut range = [(0usize, 0usize); 3];
            for a in 0..3 {
                let i0 = (((tlo[a] - pad - lo[a]) * inv[a]).floor() as isize)
                    .clamp(0, dims[a] as isize - 1) as usize;
                let i1 = (((thi[a] + pad - lo[a]) * inv[a]).floor() as isize)
                    .clamp(0, dims[a] as isize - 1) as usize;
                range[a] = (i0, i1);
            }
            for ix in range[0].0..=range[0].1 {
                for iy in range[1].0..=range[1].1 {
                    for iz in range[2].0..=range[2].1 {
                        cells[(iz * dims[1] + iy) * dims[0] + ix].push(t as u32);
                    }
                }
            }
        }
        BinGrid {
            lo,
            dims,
            inv,
            cells,
            pad,
        }
    }

    fn candidates(&self, p: &Point3<f64>) -> &[u32] {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            idx[a] = (((p[a] - self.lo[a]) * self.inv[a]).floor() as isize)
                .clamp(0, self.dims[a] as isize - 1) as usize;
        }
        &self.cells[(idx[2] * self.dims[1] + idx[1]) * self.dims[0] + idx[0]]
    }
}

// ---------------------------------------------------------------------------
// Builders.

/// Letter-shaped domains: unions of unit cells, one cell thick in z.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LetterKind {
    L,
    C,
    S,
}

impl LetterKind {
    /// Footprint of the letter as (x, y) unit cells; z is always one cell.
    ///
    /// L: two-cell vertical bar plus a foot. C: the 3x3 ring opened to the
    /// right (center and middle-right removed). S: the 3x5 pictogram (top
    /// bar, upper-left side, middle bar, lower-right side, bottom bar).
    pub fn cells(self) -> &'static [[i64; 2]] {
        match self {
            LetterKind::L => &[[0, 0], [1, 0], [0, 1]],
            LetterKind::C => &[[0, 0], [1, 0], [2, 0], [0, 1], [0, 2], [1, 2], [2, 2]],
            LetterKind::S => &[
                [0, 0],
                [1, 0],
                [2, 0],
                [2, 1],
                [0, 2],
                [1, 2],
                [2, 2],
                [0, 3],
                [0, 4],
                [1, 4],
                [2, 4],
            ],
        }
    }
}

impl std::fmt::Display for LetterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LetterKind::L => write!(f, "letter-l"),
            LetterKind::C => write!(f, "letter-c"),
            LetterKind::S => write!(f, "letter-s"),
        }
    }
}

/// Where a mesh comes from: an axis-aligned box, a letter pictogram, or an
/// external mesh file.
#[derive(Clone, Debug)]
pub enum DomainSpec {
    Box {
        lo: [f64; 3],
        hi: [f64; 3],
        h: f64,
    },
    Letter {
        kind: LetterKind,
        h: f64,
    },
    File {
        path: PathBuf,
    },
}

impl DomainSpec {
    /// Unit cube at cell size h.
    pub fn cube(h: f64) -> Self {
        DomainSpec::Box {
            lo: [0.0; 3],
            hi: [1.0; 3],
            h,
        }
    }

    pub fn build(&self) -> Result<TetMesh> {
        match self {
            DomainSpec::Box { lo, hi, h } => build_box_grid(*lo, *hi, *h),
            DomainSpec::Letter { kind, h } => build_letter_domain(*kind, *h),
            DomainSpec::File { path } => load_mesh(path),
        }
    }

    /// Analytic volume for built domains (None for external files).
    pub fn volume(&self) -> Option<f64> {
        match self {
            DomainSpec::Box { lo, hi, .. } => {
                Some((0..3).map(|a| hi[a] - lo[a]).product())
            }
            DomainSpec::Letter { kind, .. } => Some(kind.cells().len() as f64),
            DomainSpec::File { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DomainSpec::Box { .. } => "cube".into(),
            DomainSpec::Letter { kind, .. } => kind.to_string(),
            DomainSpec::File { path } => format!("mesh:{}", path.display()),
        }
    }
}

/// All six permutations of the axes, the Kuhn path orders. Fixed order keeps
/// tet numbering deterministic.
const KUHN_PERMS: [([usize; 3], bool); 6] = [
    ([0, 1, 2], true),
    ([0, 2, 1], false),
    ([1, 0, 2], false),
    ([1, 2, 0], true),
    ([2, 0, 1], true),
    ([2, 1, 0], false),
];

/// Builds the tets of one lattice cell list. `coord` maps a lattice index on
/// an axis to a physical coordinate.
fn build_from_cells(
    cells: &[[i64; 3]],
    coord: impl Fn(usize, i64) -> f64,
) -> Result<TetMesh> {
    let mut vmap: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut tets: Vec<[usize; 4]> = Vec::new();
    let mut vid = |key: [i64; 3], vertices: &mut Vec<Point3<f64>>| -> usize {
        *vmap.entry(key).or_insert_with(|| {
            vertices.push(Point3::new(
                coord(0, key[0]),
                coord(1, key[1]),
                coord(2, key[2]),
            ));
            vertices.len() - 1
        })
    };
    for cell in cells {
        for (perm, even) in KUHN_PERMS {
            // Walk from the cell origin to the far corner along perm's axes.
            let mut corner = *cell;
            let mut lat = [[0i64; 3]; 4];
            lat[0] = corner;
            for (step, &axis) in perm.iter().enumerate() {
                corner[axis] += 1;
                lat[step + 1] = corner;
            }
            let mut tet = [
                vid(lat[0], &mut vertices),
                vid(lat[1], &mut vertices),
                vid(lat[2], &mut vertices),
                vid(lat[3], &mut vertices),
            ];
            // Odd axis orders trace a negatively oriented path.
            if !even {
                tet.swap(1, 2);
            }
            tets.push(tet);
        }
    }
    TetMesh::from_parts(vertices, tets, None)
}

fn divisions(extent: f64, h: f64, what: &str) -> Result<i64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config(format!("cell size h must be positive, got {h}")));
    }
    let n = (extent / h).round();
    if n < 1.0 || ((n * h - extent) / extent).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "h = {h} does not divide the {what} extent {extent}"
        )));
    }
    Ok(n as i64)
}

/// Uniform Kuhn mesh of the box `[lo, hi]` with cubic cells of size `h`.
///
/// `h` must divide every box extent. Each cell is split into 6 tets sharing
/// the cell diagonal from the low corner to the high corner.
pub fn build_box_grid(lo: [f64; 3], hi: [f64; 3], h: f64) -> Result<TetMesh> {
    let mut n = [0i64; 3];
    for a in 0..3 {
        if !(hi[a] > lo[a]) {
            return Err(Error::Config(format!(
                "box extent on axis {a} must be positive ({} .. {})",
                lo[a], hi[a]
            )));
        }
        n[a] = divisions(hi[a] - lo[a], h, ["x", "y", "z"][a])?;
    }
    let mut cells = Vec::with_capacity((n[0] * n[1] * n[2]) as usize);
    for iz in 0..n[2] {
        for iy in 0..n[1] {
            for ix in 0..n[0] {
                cells.push([ix, iy, iz]);
            }
        }
    }
    // The far lattice layer snaps exactly onto the box face so that the tet
    // volumes tile the analytic box volume to rounding.
    let coord = move |a: usize, i: i64| if i == n[a] { hi[a] } else { lo[a] + i as f64 * h };
    let mut mesh = build_from_cells(&cells, coord)?;
    mesh.h = h;
    mesh.bins = BinGrid::build(&mesh.vertices, &mesh.tets, mesh.bbox.0, mesh.bbox.1, h);
    Ok(mesh)
}

/// Kuhn mesh of a letter-shaped domain with cells of size `h`.
///
/// The letter footprint is a union of unit cells (see [`LetterKind::cells`]),
/// one unit thick in z; `h` must divide 1.
pub fn build_letter_domain(kind: LetterKind, h: f64) -> Result<TetMesh> {
    let m = divisions(1.0, h, "unit cell")?;
    let mut cells = Vec::new();
    for &[cx, cy] in kind.cells() {
        for iz in 0..m {
            for iy in 0..m {
                for ix in 0..m {
                    cells.push([cx * m + ix, cy * m + iy, iz]);
                }
            }
        }
    }
    let coord = move |_a: usize, i: i64| i as f64 * h;
    let mut mesh = build_from_cells(&cells, coord)?;
    mesh.h = h;
    mesh.bins = BinGrid::build(&mesh.vertices, &mesh.tets, mesh.bbox.0, mesh.bbox.1, h);
    Ok(mesh)
}

// ---------------------------------------------------------------------------
// Text format.
//
//   # comments and blank lines are skipped
//   V T
//   x y z        (V lines)
//   a b c d      (T lines, 0-based vertex indices)

/// Writes a mesh in the plain text format. Coordinates use shortest
/// round-trip decimal form, so save/load is bit-exact.
pub fn save_mesh(path: impl AsRef<Path>, mesh: &TetMesh) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# tetrahedral mesh: {} vertices, {} tets",
        mesh.num_vertices(),
        mesh.num_tets()
    );
    let _ = writeln!(out, "{} {}", mesh.num_vertices(), mesh.num_tets());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.tets {
        let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Reads a mesh from the plain text format (see [`save_mesh`]). Tets are
/// reoriented if needed; malformed content reports 1-based line numbers.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TetMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let perr = |line: usize, msg: String| Error::MeshParse {
        path: path.display().to_string(),
        line,
        msg,
    };

    // (1-based line number, content with comments stripped)
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = rows
        .next()
        .ok_or_else(|| perr(1, "missing header line \"V T\"".into()))?;
    let mut hp = header.split_whitespace();
    let nv: usize = hp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(hline, "expected vertex count".into()))?;
    let nt: usize = hp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(hline, "expected tet count".into()))?;
    if hp.next().is_some() {
        return Err(perr(hline, "header must be exactly \"V T\"".into()));
    }

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, row) = rows
            .next()
            .ok_or_else(|| perr(text.lines().count(), format!("expected {nv} vertex lines")))?;
        let parts: Vec<&str> = row.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(perr(ln, "expected 3 coordinates".into()));
        }
        let mut c = [0.0f64; 3];
        for (a, p) in parts.iter().enumerate() {
            c[a] = p
                .parse()
                .map_err(|_| perr(ln, format!("bad coordinate {p:?}")))?;
        }
        vertices.push(Point3::new(c[0], c[1], c[2]));
    }

    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, row) = rows
            .next()
            .ok_or_else(|| perr(text.lines().count(), format!("expected {nt} tet lines")))?;
        let parts: Vec<&str> = row.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(perr(ln, "expected 4 vertex indices".into()));
        }
        let mut t = [0usize; 4];
        for (s, p) in parts.iter().enumerate() {
            t[s] = p
                .parse()
                .map_err(|_| perr(ln, format!("bad vertex index {p:?}")))?;
            if t[s] >= nv {
                return Err(perr(ln, format!("vertex index {} out of range", t[s])));
            }
        }
        tets.push(t);
    }
    if let Some((ln, _)) = rows.next() {
        return Err(perr(ln, "trailing content after tet list".into()));
    }

    TetMesh::from_parts(vertices, tets, None)
}
