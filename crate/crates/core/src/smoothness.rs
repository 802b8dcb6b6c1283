//! Smoothness constraints between B-form coefficient blocks of adjacent tets.
//!
//! A piecewise polynomial is C^r across an interior face exactly when, for
//! every order m <= r and every face multi-index (j,k,l) with j+k+l = D-m,
//! the coefficient c'_{m,j,k,l} of one tet equals the degree-m Bernstein
//! combination of the other tet's coefficients evaluated at the barycentric
//! coordinates of the far apex. Collecting those identities for all interior
//! faces gives a sparse matrix H with: s is C^r over the partition iff
//! H c = 0.

use std::sync::Arc;

use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bform::{self, eval_basis, multi_index_count, rank, Spline};
use crate::mesh::TetMesh;
use crate::sparse::Csr;
use crate::{Error, Result};

/// A degree-D, smoothness-r spline space over a tetrahedral partition.
///
/// Degrees of freedom are one Bernstein coefficient block per tet (the space
/// itself is the null space of [`SplineSpace::smoothness_matrix`]; the
/// solvers treat H as a least-squares penalty rather than eliminating it).
pub struct SplineSpace {
    mesh: Arc<TetMesh>,
    degree: u32,
    smoothness: u32,
    block: usize,
    h: Csr,
    warnings: Vec<String>,
}

impl SplineSpace {
    /// Assembles the smoothness matrix for the given mesh and parameters.
    ///
    /// Degrees 2..=12 are supported (the Hessian needs D >= 2); r can be 0,
    /// 1, or 2. When D < 6r+3 the full approximation power of the space is
    /// not guaranteed by spline theory; a warning is recorded, not an error.
    pub fn new(mesh: Arc<TetMesh>, degree: u32, smoothness: u32) -> Result<Arc<SplineSpace>> {
        if !(2..=12).contains(&degree) {
            return Err(Error::Config(format!(
                "spline degree must be in 2..=12, got {degree}"
            )));
        }
        if smoothness > 2 {
            return Err(Error::Config(format!(
                "smoothness r must be 0, 1, or 2, got {smoothness}"
            )));
        }
        if smoothness >= degree {
            return Err(Error::Config(format!(
                "smoothness r = {smoothness} must be below the degree {degree}"
            )));
        }
        let mut warnings = Vec::new();
        if degree < 6 * smoothness + 3 {
            warnings.push(format!(
                "degree {degree} is below 6r+3 = {} for r = {smoothness}; \
                 approximation order is not guaranteed",
                6 * smoothness + 3
            ));
        }
        let block = multi_index_count(degree);
        let h = assemble_smoothness(&mesh, degree, smoothness);
        Ok(Arc::new(SplineSpace {
            mesh,
            degree,
            smoothness,
            block,
            h,
            warnings,
        }))
    }

    pub fn mesh(&self) -> &Arc<TetMesh> {
        &self.mesh
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    /// Coefficients per tet: C(D+3, 3).
    pub fn dofs_per_tet(&self) -> usize {
        self.block
    }

    pub fn num_dofs(&self) -> usize {
        self.block * self.mesh.num_tets()
    }

    /// First coefficient index of tet `t` in a global vector.
    pub fn dof_offset(&self, t: usize) -> usize {
        self.block * t
    }

    /// The C^r constraint matrix H: rows over all interior faces and orders
    /// m = 0..=r, columns over all coefficients. H c = 0 iff the spline with
    /// coefficients c is C^r across every interior face.
    pub fn smoothness_matrix(&self) -> &Csr {
        &self.h
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Number of constraint rows one interior face contributes.
pub fn rows_per_face(degree: u32, smoothness: u32) -> usize {
    (0..=smoothness)
        .map(|m| {
            // Count of face multi-indices (j, k, l) with j+k+l = degree - m.
            let n = degree - m + 2;
            (n * (n - 1) / 2) as usize
        })
        .sum()
}

/// Slot bookkeeping for one side of a face: where the apex and the three
/// (sorted) face vertices live inside the tet's own vertex order.
fn side_slots(tet: &[usize; 4], face: &[usize; 3]) -> ([usize; 3], usize) {
    let mut wpos = [usize::MAX; 3];
    let mut apex = usize::MAX;
    for (slot, v) in tet.iter().enumerate() {
        match face.iter().position(|w| w == v) {
            Some(s) => wpos[s] = slot,
            None => apex = slot,
        }
    }
    debug_assert!(apex != usize::MAX && wpos.iter().all(|&s| s != usize::MAX));
    (wpos, apex)
}

fn assemble_smoothness(mesh: &TetMesh, degree: u32, smoothness: u32) -> Csr {
    let block = multi_index_count(degree);
    let ncols = block * mesh.num_tets();

    // Rows are face-local; build them in parallel and emit in face order so
    // the matrix is deterministic.
    let face_rows: Vec<Vec<Vec<(u32, f64)>>> = mesh
        .interior_faces()
        .par_iter()
        .map(|&fi| {
            let face = &mesh.faces()[fi];
            let (t, t2) = (face.tets.0, face.tets.1.expect("interior face"));
            let (wpos_t, apex_t) = side_slots(&mesh.tets()[t], &face.verts);
            let (wpos_t2, apex_t2) = side_slots(&mesh.tets()[t2], &face.verts);

            // Barycentric coordinates of t2's apex with respect to t, in the
            // canonical slot order (apex of t, w1, w2, w3).
            let apex_point = mesh.vertices()[mesh.tets()[t2][apex_t2]];
            let b_stored = mesh.barycentric_in(t, &apex_point);
            let beta = [
                b_stored[apex_t],
                b_stored[wpos_t[0]],
                b_stored[wpos_t[1]],
                b_stored[wpos_t[2]],
            ];

            let off_t = (block * t) as u32;
            let off_t2 = (block * t2) as u32;
            let mut rows = Vec::with_capacity(rows_per_face(degree, smoothness));
            for m in 0..=smoothness {
                // Degree-m Bernstein values at beta, one weight per way of
                // splitting m across the canonical slots.
                let nus = bform::multi_indices(m);
                let weights = eval_basis(m, &beta);
                let dm = degree - m;
                for j in 0..=dm {
                    for k in 0..=dm - j {
                        let l = dm - j - k;
                        let mut row: Vec<(u32, f64)> = Vec::with_capacity(nus.len() + 1);
                        // Target coefficient on the t2 side: apex exponent m.
                        let mut e2 = [0u8; 4];
                        e2[apex_t2] = m as u8;
                        e2[wpos_t2[0]] = j as u8;
                        e2[wpos_t2[1]] = k as u8;
                        e2[wpos_t2[2]] = l as u8;
                        row.push((off_t2 + rank(e2) as u32, -1.0));
                        // Source combination on the t side.
                        for (nu, &w) in nus.iter().zip(&weights) {
                            if w == 0.0 {
                                continue;
                            }
                            let mut e = [0u8; 4];
                            e[apex_t] = nu[0];
                            e[wpos_t[0]] = j as u8 + nu[1];
                            e[wpos_t[1]] = k as u8 + nu[2];
                            e[wpos_t[2]] = l as u8 + nu[3];
                            row.push((off_t + rank(e) as u32, w));
                        }
                        row.sort_unstable_by_key(|e| e.0);
                        rows.push(row);
                    }
                }
            }
            rows
        })
        .collect();

    let mut builder = Csr::builder(ncols);
    for rows in &face_rows {
        for row in rows {
            builder.push_row(row);
        }
    }
    builder.finish()
}

/// Largest observed discontinuity of `s` across interior faces: the jump in
/// value and in the first r directional derivatives along the face normal,
/// maximized over 200 pseudorandom face points (fixed seed, deterministic).
pub fn smoothness_residual(s: &Spline) -> f64 {
    let space = s.space();
    let mesh = space.mesh();
    let r = space.smoothness();
    if mesh.interior_faces().is_empty() {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0face);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let fi = mesh.interior_faces()[rng.random_range(0..mesh.interior_faces().len())];
        let face = &mesh.faces()[fi];
        let (t, t2) = (face.tets.0, face.tets.1.expect("interior face"));
        // Uniform barycentric sample on the triangle.
        let e: [f64; 3] = std::array::from_fn(|_| -rng.random::<f64>().max(1e-12).ln());
        let esum: f64 = e.iter().sum();
        let vs = face.verts.map(|v| mesh.vertices()[v]);
        let p = nalgebra::Point3::from(
            vs[0].coords * (e[0] / esum) + vs[1].coords * (e[1] / esum) + vs[2].coords * (e[2] / esum),
        );
        let n: Vector3<f64> = {
            let raw = (vs[1] - vs[0]).cross(&(vs[2] - vs[0]));
            raw / raw.norm()
        };
        let a = s.derivs_at(t, &mesh.barycentric_in(t, &p));
        let b = s.derivs_at(t2, &mesh.barycentric_in(t2, &p));
        worst = worst.max((a.value - b.value).abs());
        if r >= 1 {
            worst = worst.max(((a.gradient - b.gradient).dot(&n)).abs());
        }
        if r >= 2 {
            let dh = a.hessian - b.hessian;
            worst = worst.max((n.dot(&(dh * n))).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_grid, build_letter_domain, LetterKind};

    fn cube_space(h: f64, d: u32, r: u32) -> Arc<SplineSpace> {
        let mesh = build_box_grid([0.0; 3], [1.0; 3], h).unwrap();
        SplineSpace::new(Arc::new(mesh), d, r).unwrap()
    }

    #[test]
    fn row_counts() {
        for (d, r) in [(5u32, 0u32), (5, 1), (5, 2), (9, 1), (9, 2)] {
            let sp = cube_space(0.5, d, r);
            let expect = sp.mesh().interior_faces().len() * rows_per_face(d, r);
            assert_eq!(sp.smoothness_matrix().nrows(), expect, "D={d} r={r}");
            assert_eq!(sp.smoothness_matrix().ncols(), sp.num_dofs());
        }
        // r = 0 per face: C(D+2, 2) value-matching rows.
        assert_eq!(rows_per_face(5, 0), 21);
        assert_eq!(rows_per_face(5, 1), 21 + 15);
        assert_eq!(rows_per_face(5, 2), 21 + 15 + 10);
    }

    #[test]
    fn parameter_validation() {
        let mesh = Arc::new(build_box_grid([0.0; 3], [1.0; 3], 1.0).unwrap());
        assert!(SplineSpace::new(mesh.clone(), 1, 0).is_err());
        assert!(SplineSpace::new(mesh.clone(), 13, 1).is_err());
        assert!(SplineSpace::new(mesh.clone(), 5, 3).is_err());
        assert!(SplineSpace::new(mesh.clone(), 2, 2).is_err());
        // D < 6r+3 warns but succeeds.
        let sp = SplineSpace::new(mesh.clone(), 5, 1).unwrap();
        assert_eq!(sp.warnings().len(), 1);
        let sp = SplineSpace::new(mesh, 9, 1).unwrap();
        assert!(sp.warnings().is_empty());
    }

    /// Global polynomials interpolated per tet are C^infinity, so every
    /// smoothness row must vanish on their coefficients. This certifies the
    /// slot mapping and the Bernstein weights at once.
    #[test]
    fn polynomial_coefficients_lie_in_null_space() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let configs: Vec<Arc<SplineSpace>> = vec![
            cube_space(0.5, 5, 1),
            cube_space(0.5, 5, 2),
            {
                let mesh = build_letter_domain(LetterKind::L, 0.5).unwrap();
                SplineSpace::new(Arc::new(mesh), 4, 1).unwrap()
            },
        ];
        for sp in configs {
            // Random cubic: degree 3 <= D for all tested spaces.
            let coef: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let poly = move |p: &nalgebra::Point3<f64>| {
                let mut v = 0.0;
                let mut idx = 0;
                for a in 0..=3u32 {
                    for b in 0..=3 - a {
                        for c in 0..=3 - a - b {
                            if a + b + c <= 3 {
                                v += coef[idx % 20]
                                    * p.x.powi(a as i32)
                                    * p.y.powi(b as i32)
                                    * p.z.powi(c as i32);
                                idx += 1;
                            }
                        }
                    }
                }
                v
            };
            let s = Spline::interpolate(sp.clone(), &poly);
            let hc = sp.smoothness_matrix().matvec(s.coeffs());
            let cmax = s.max_abs_coeff();
            let worst = hc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                worst <= 1e-10 * cmax,
                "D={} r={}: |Hc| = {worst}, |c| = {cmax}",
                sp.degree(),
                sp.smoothness()
            );
            // The pointwise jumps agree with the algebraic statement.
            assert!(smoothness_residual(&s) <= 1e-9 * cmax.max(1.0));
        }
    }

    #[test]
    fn random_coefficients_violate_smoothness() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let sp = cube_space(1.0, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..sp.num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = Spline::from_coeffs(sp.clone(), coeffs).unwrap();
        let hc = sp.smoothness_matrix().matvec(s.coeffs());
        assert!(hc.iter().any(|v| v.abs() > 1e-3));
        assert!(smoothness_residual(&s) > 1e-3);
    }
}
