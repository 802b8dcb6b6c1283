//! Poisson collocation: assemble Laplacian/boundary rows at domain points and
//! solve the stacked weighted least-squares system.
//!
//! The discrete problem for Delta u = f, u = g on the boundary, over a
//! degree-D space with smoothness penalty H is
//!
//!   min_c  || sqrt(mu) (K c - f) ||^2 + || B c - G ||^2 + || H c ||^2
//!
//! with one K row per interior collocation point (Laplacians of the basis
//! functions) and one B row per boundary collocation point (basis values).
//! Collocation points are the degree-D' domain points of all tets, deduped.
//!
//! The solve runs on column-equilibrated normal equations: scale the stacked
//! matrix A to unit column norms, factor A~^T A~ once with a sparse Cholesky,
//! then iteratively refine through the original A until the normal-equation
//! residual meets tolerance. The factorization is reused across solves with
//! new right-hand sides, which is what makes the nonlinear iteration cheap.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::Point3;

use crate::bform::{self, multi_index_count, Bary, Spline};
use crate::smoothness::SplineSpace;
use crate::sparse::Csr;
use crate::util;
use crate::{Error, Result};

/// One collocation point: which tet claimed it and where it sits.
#[derive(Clone, Copy, Debug)]
pub struct CollocPoint {
    pub tet: u32,
    pub bary: Bary,
    pub pos: Point3<f64>,
}

/// The assembled Poisson collocation system over a spline space.
#[derive(Clone)]
pub struct CollocationSystem {
    space: Arc<SplineSpace>,
    /// Collocation degree D' (> D).
    pub dprime: u32,
    /// Laplacian rows, one per interior point, nonzeros inside the claiming
    /// tet's coefficient block.
    pub k: Csr,
    /// Right-hand values of f at the interior points.
    pub fvec: Vec<f64>,
    /// Basis-value rows, one per boundary point.
    pub bmat: Csr,
    /// Dirichlet values of g at the boundary points.
    pub gvec: Vec<f64>,
    pub interior: Vec<CollocPoint>,
    pub boundary: Vec<CollocPoint>,
    /// Row ranges of `k` per tet (interior points are enumerated tet by tet).
    k_ranges: Vec<Range<usize>>,
    /// Row ranges of `bmat` per tet.
    b_ranges: Vec<Range<usize>>,
}

/// Solver knobs; see module docs for the objective.
#[derive(Clone, Copy, Debug)]
pub struct SolveConfig {
    /// Weight on the interior (PDE) rows.
    pub mu: f64,
    /// Relative normal-equation residual targeted by iterative refinement.
    pub ls_tol: f64,
    /// Feasibility report threshold for the achieved ||Kc - f||_inf.
    pub eps1: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            mu: 1e4,
            ls_tol: 1e-12,
            eps1: 1e-6,
        }
    }
}

/// What one least-squares solve achieved.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SolveReport {
    /// ||A^T (A c - b)||_inf / ||A^T b||_inf for the returned c.
    pub normal_residual_rel: f64,
    /// Achieved ||K c - f||_inf (interior feasibility).
    pub feasibility_inf: f64,
    /// True when feasibility_inf exceeded cfg.eps1.
    pub feasibility_exceeded: bool,
    /// Refinement sweeps used.
    pub refinements: u32,
    /// Set when the normal matrix needed a ridge to factor (numerically
    /// rank-deficient stack; the solution is the ridge-regularized one).
    pub conditioning_warning: bool,
}

/// Assembles the collocation system for degree-D' points.
///
/// Points shared by several tets appear exactly once, claimed by the
/// lowest-index tet; a point is a boundary point iff it lies on a boundary
/// face. Deduplication keys on the vertex/exponent support of the domain
/// point, which is exact integer data (no coordinate rounding).
pub fn assemble(
    space: &Arc<SplineSpace>,
    dprime: u32,
    f: &(dyn Fn(&Point3<f64>) -> f64 + Sync),
    g: &(dyn Fn(&Point3<f64>) -> f64 + Sync),
) -> Result<CollocationSystem> {
    let d = space.degree();
    if dprime <= d {
        return Err(Error::Config(
            "collocation degree must exceed spline degree".into(),
        ));
    }
    if dprime > bform::MAX_DEGREE {
        return Err(Error::Config(format!(
            "collocation degree {dprime} beyond the table cap {}",
            bform::MAX_DEGREE
        )));
    }
    let mesh = space.mesh();
    let ntets = mesh.num_tets();
    let tab = bform::tables(dprime);

    // Boundary incidence: vertex -> boundary faces, for the face-subset test.
    let mut vert_bnd: Vec<Vec<u32>> = vec![Vec::new(); mesh.num_vertices()];
    for &fi in mesh.boundary_faces() {
        for &v in &mesh.faces()[fi].verts {
            vert_bnd[v].push(fi as u32);
        }
    }

    let mut seen: HashMap<([usize; 4], [u8; 4]), ()> = HashMap::new();
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut k_ranges = Vec::with_capacity(ntets);
    let mut b_ranges = Vec::with_capacity(ntets);
    for t in 0..ntets {
        let k_start = interior.len();
        let b_start = boundary.len();
        let verts = mesh.tets()[t];
        let vpos = mesh.tet_vertices(t);
        for mi in &tab.mis {
            // Support of the domain point: vertices with positive exponent,
            // sorted by global id. This identifies the point exactly across
            // all tets sharing the supporting face/edge/vertex.
            let mut key_v = [usize::MAX; 4];
            let mut key_e = [0u8; 4];
            let mut nsup = 0;
            for s in 0..4 {
                if mi[s] > 0 {
                    key_v[nsup] = verts[s];
                    key_e[nsup] = mi[s];
                    nsup += 1;
                }
            }
            // Insertion sort by vertex id over the populated prefix.
            for i in 1..nsup {
                let mut j = i;
                while j > 0 && key_v[j - 1] > key_v[j] {
                    key_v.swap(j - 1, j);
                    key_e.swap(j - 1, j);
                    j -= 1;
                }
            }
            if seen.insert((key_v, key_e), ()).is_some() {
                continue;
            }
            let bary: Bary = std::array::from_fn(|s| mi[s] as f64 / dprime as f64);
            let pos = Point3::from(
                vpos[0].coords * bary[0]
                    + vpos[1].coords * bary[1]
                    + vpos[2].coords * bary[2]
                    + vpos[3].coords * bary[3],
            );
            let on_boundary = nsup <= 3
                && vert_bnd[key_v[0]].iter().any(|&fi| {
                    let fv = &mesh.faces()[fi as usize].verts;
                    key_v[..nsup].iter().all(|v| fv.contains(v))
                });
            let point = CollocPoint {
                tet: t as u32,
                bary,
                pos,
            };
            if on_boundary {
                boundary.push(point);
            } else {
                interior.push(point);
            }
        }
        k_ranges.push(k_start..interior.len());
        b_ranges.push(b_start..boundary.len());
    }

    let block = multi_index_count(d);
    let ncols = block * ntets;

    // Laplacian rows: Delta B_alpha at the point, assembled by raising
    // degree-(D-2) basis values twice. gram[m][n] = D(D-1) grad(b_m).grad(b_n).
    let t2 = bform::tables(d - 2);
    let t1 = bform::tables(d - 1);
    let dd = (d * (d - 1)) as f64;
    let k_rows: Vec<Vec<(u32, f64)>> = util::par_map(interior.len(), |i| {
        let p = &interior[i];
        let t = p.tet as usize;
        let g = mesh.bary_gradients(t);
        let off = (t * block) as u32;
        let mut b2 = vec![0.0; t2.mis.len()];
        bform::eval_basis_tab(&t2, &p.bary, &mut b2);
        let mut dense = vec![0.0f64; block];
        for (gamma, &w) in b2.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for m in 0..4 {
                let mid = t2.raise[m][gamma] as usize;
                for n in 0..4 {
                    let col = t1.raise[n][mid] as usize;
                    dense[col] += dd * g[m].dot(&g[n]) * w;
                }
            }
        }
        dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(c, &v)| (off + c as u32, v))
            .collect()
    });

    let td = bform::tables(d);
    let b_rows: Vec<Vec<(u32, f64)>> = util::par_map(boundary.len(), |i| {
        let p = &boundary[i];
        let off = (p.tet as usize * block) as u32;
        let mut vals = vec![0.0; td.mis.len()];
        bform::eval_basis_tab(&td, &p.bary, &mut vals);
        vals.iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(c, &v)| (off + c as u32, v))
            .collect()
    });

    let mut kb = Csr::builder(ncols);
    for row in &k_rows {
        kb.push_row(row);
    }
    let mut bb = Csr::builder(ncols);
    for row in &b_rows {
        bb.push_row(row);
    }

    let fvec = util::par_map(interior.len(), |i| f(&interior[i].pos));
    let gvec = util::par_map(boundary.len(), |i| g(&boundary[i].pos));

    Ok(CollocationSystem {
        space: space.clone(),
        dprime,
        k: kb.finish(),
        fvec,
        bmat: bb.finish(),
        gvec,
        interior,
        boundary,
        k_ranges,
        b_ranges,
    })
}

impl CollocationSystem {
    pub fn space(&self) -> &Arc<SplineSpace> {
        &self.space
    }

    /// Evaluates a field at the interior collocation points (fresh f vector
    /// for reusing the factorization with a new right-hand side).
    pub fn eval_interior(&self, f: &(dyn Fn(&Point3<f64>) -> f64 + Sync)) -> Vec<f64> {
        util::par_map(self.interior.len(), |i| f(&self.interior[i].pos))
    }
}

/// Column-equilibrated normal-equation factorization of the stacked system,
/// reusable across right-hand sides.
pub struct FactorizedPoisson {
    sys: CollocationSystem,
    cfg: SolveConfig,
    dcol: Vec<f64>,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    pub conditioning_warning: bool,
}

impl FactorizedPoisson {
    pub fn new(sys: CollocationSystem, cfg: SolveConfig) -> Result<FactorizedPoisson> {
        if !(cfg.mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {}", cfg.mu)));
        }
        let space = sys.space.clone();
        let h = space.smoothness_matrix();
        let ncols = space.num_dofs();
        let block = space.dofs_per_tet();
        let mu = cfg.mu;
        let sqrt_mu = mu.sqrt();

        // Column norms of A = [sqrt(mu) K; B; H].
        let mut col_sq = vec![0.0f64; ncols];
        let add_sq = |m: &Csr, w: f64, col_sq: &mut [f64]| {
            for i in 0..m.nrows() {
                let (cols, vals) = m.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    col_sq[*c as usize] += w * v * v;
                }
            }
        };
        add_sq(&sys.k, mu, &mut col_sq);
        add_sq(&sys.bmat, 1.0, &mut col_sq);
        add_sq(h, 1.0, &mut col_sq);
        let dcol: Vec<f64> = col_sq
            .iter()
            .map(|&s| if s > 0.0 { 1.0 / s.sqrt() } else { 1.0 })
            .collect();

        // Lower-triangle triplets of M = A~^T A~. K and B rows live inside
        // one tet block each, so their products accumulate into per-tet dense
        // blocks; H rows couple two blocks and contribute triplets directly
        // (the sparse constructor sums duplicates).
        let ntets = space.mesh().num_tets();
        let per_tet: Vec<Vec<Triplet<usize, usize, f64>>> = util::par_map(ntets, |t| {
            let off = t * block;
            let mut dense = vec![0.0f64; block * block];
            let mut scaled: Vec<(usize, f64)> = Vec::new();
            let mut accumulate = |rows: &Range<usize>, m: &Csr, w: f64, dense: &mut [f64]| {
                for i in rows.clone() {
                    let (cols, vals) = m.row(i);
                    scaled.clear();
                    scaled.extend(
                        cols.iter()
                            .zip(vals)
                            .map(|(c, v)| (*c as usize - off, w * v * dcol[*c as usize])),
                    );
                    for (a, &(ca, sa)) in scaled.iter().enumerate() {
                        for &(cb, sb) in &scaled[..=a] {
                            dense[ca * block + cb] += sa * sb;
                        }
                    }
                }
            };
            accumulate(&sys.k_ranges[t], &sys.k, sqrt_mu, &mut dense);
            accumulate(&sys.b_ranges[t], &sys.bmat, 1.0, &mut dense);
            let mut trips = Vec::new();
            for a in 0..block {
                for b in 0..=a {
                    let v = dense[a * block + b];
                    if v != 0.0 {
                        trips.push(Triplet::new(off + a, off + b, v));
                    }
                }
            }
            trips
        });

        let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
        for t in per_tet {
            triplets.extend(t);
        }
        let mut scaled: Vec<(usize, f64)> = Vec::new();
        for i in 0..h.nrows() {
            let (cols, vals) = h.row(i);
            scaled.clear();
            scaled.extend(
                cols.iter()
                    .zip(vals)
                    .map(|(c, v)| (*c as usize, v * dcol[*c as usize])),
            );
            for (a, &(ca, sa)) in scaled.iter().enumerate() {
                for &(cb, sb) in &scaled[..=a] {
                    triplets.push(Triplet::new(ca.max(cb), ca.min(cb), sa * sb));
                }
            }
        }
        // Columns untouched by any row get a unit diagonal: their
        // coefficients solve to zero, the minimum-norm choice.
        for (j, &s) in col_sq.iter().enumerate() {
            if s == 0.0 {
                triplets.push(Triplet::new(j, j, 1.0));
            }
        }

        let mut conditioning_warning = false;
        let mut llt = None;
        for ridge in [0.0, 1e-10, 1e-8] {
            let mut trips = triplets.clone();
            if ridge > 0.0 {
                conditioning_warning = true;
                for j in 0..ncols {
                    trips.push(Triplet::new(j, j, ridge));
                }
            }
            let m = SparseColMat::try_new_from_triplets(ncols, ncols, &trips)
                .map_err(|e| Error::Solver(format!("normal matrix build failed: {e:?}")))?;
            match m.sp_cholesky(faer::Side::Lower) {
                Ok(f) => {
                    llt = Some(f);
                    break;
                }
                Err(_) => continue,
            }
        }
        let llt = llt.ok_or_else(|| {
            Error::Solver("normal equations not positive definite even with ridge".into())
        })?;

        Ok(FactorizedPoisson {
            sys,
            cfg,

            dcol,
            llt,
            conditioning_warning,
        })
    }

    pub fn system(&self) -> &CollocationSystem {
        &self.sys
    }

    pub fn config(&self) -> &SolveConfig {
        &self.cfg
    }

    /// A^T applied to stacked residuals, tet-parallel (K and B rows only
    /// touch their own tet's columns; H is small and handled serially).
    fn at_residual(&self, rk: &[f64], rb: &[f64], rh: &[f64]) -> Vec<f64> {
        let space = &self.sys.space;
        let block = space.dofs_per_tet();
        let mu = self.cfg.mu;
        let ntets = space.mesh().num_tets();
        let sys = &self.sys;
        let mut g: Vec<f64> = util::par_map(ntets * block, |_| 0.0);
        {
            use rayon::prelude::*;
            g.par_chunks_mut(block).enumerate().for_each(|(t, gblock)| {
                let off = t * block;
                for i in sys.k_ranges[t].clone() {
                    let (cols, vals) = sys.k.row(i);
                    let w = mu * rk[i];
                    for (c, v) in cols.iter().zip(vals) {
                        gblock[*c as usize - off] += v * w;
                    }
                }
                for i in sys.b_ranges[t].clone() {
                    let (cols, vals) = sys.bmat.row(i);
                    let w = rb[i];
                    for (c, v) in cols.iter().zip(vals) {
                        gblock[*c as usize - off] += v * w;
                    }
                }
            });
        }
        space.smoothness_matrix().matvec_t_acc(rh, 1.0, &mut g);
        g
    }

    /// Solves for fresh right-hand values at the stored collocation points,
    /// reusing the factorization. Returns coefficients and the solve report.
    pub fn solve_values(&self, fvals: &[f64], gvals: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let sys = &self.sys;
        assert_eq!(fvals.len(), sys.interior.len());
        assert_eq!(gvals.len(), sys.boundary.len());
        let n = sys.space.num_dofs();
        let h = sys.space.smoothness_matrix();
        let mu = self.cfg.mu;

        // A^T b = mu K^T f + B^T g (the H block of b is zero).
        let mut atb = vec![0.0; n];
        sys.k.matvec_t_acc(fvals, mu, &mut atb);
        sys.bmat.matvec_t_acc(gvals, 1.0, &mut atb);
        let ref_inf = atb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if ref_inf == 0.0 {
            let feas = fvals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Ok((
                vec![0.0; n],
                SolveReport {
                    normal_residual_rel: 0.0,
                    feasibility_inf: feas,
                    feasibility_exceeded: feas > self.cfg.eps1,
                    refinements: 0,
                    conditioning_warning: self.conditioning_warning,
                },
            ));
        }

        let solve_m = |rhs: &[f64]| -> Vec<f64> {
            let m = Mat::from_fn(n, 1, |i, _| rhs[i]);
            let x = self.llt.solve(&m);
            (0..n).map(|i| x[(i, 0)]).collect()
        };

        // Initial solve in the equilibrated variable y (c = dcol .* y).
        let rhs0: Vec<f64> = (0..n).map(|j| self.dcol[j] * atb[j]).collect();
        let mut y = solve_m(&rhs0);

        // Iterative refinement through the original (unscaled) stack. The
        // first sweep always runs: the Cholesky solution of the normal
        // equations loses a factor cond(A) of accuracy that one refinement
        // pass recovers whenever the stacked system is consistent, even when
        // the gradient already looks small against ||A^T b||.
        let mut best: Option<(Vec<f64>, f64, f64)> = None;
        let mut prev_crit = f64::INFINITY;
        let mut refinements = 0;
        for sweep in 0..=10 {
            let c: Vec<f64> = (0..n).map(|j| self.dcol[j] * y[j]).collect();
            let rk = util::par_map(sys.k.nrows(), |i| fvals[i] - sys.k.row_dot(i, &c));
            let rb = util::par_map(sys.bmat.nrows(), |i| gvals[i] - sys.bmat.row_dot(i, &c));
            let rh = util::par_map(h.nrows(), |i| -h.row_dot(i, &c));
            let g = self.at_residual(&rk, &rb, &rh);
            let crit = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let feas = rk.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if std::env::var_os("MA3D_TRACE_LS").is_some() {
                eprintln!(
                    "refine {sweep}: crit={crit:e} rel={:e} feas={feas:e}",
                    crit / ref_inf
                );
            }
            if best.as_ref().is_none_or(|(_, bc, _)| crit < *bc) {
                best = Some((c, crit, feas));
            }
            if sweep >= 1 && (crit <= self.cfg.ls_tol * ref_inf || crit >= 0.5 * prev_crit) {
                break;
            }
            prev_crit = crit;
            let rhs: Vec<f64> = (0..n).map(|j| self.dcol[j] * g[j]).collect();
            let dy = solve_m(&rhs);
            for j in 0..n {
                y[j] += dy[j];
            }
            refinements += 1;
        }

        let (c, crit, feas) = best.expect("at least one refinement iteration");
        Ok((
            c,
            SolveReport {
                normal_residual_rel: crit / ref_inf,
                feasibility_inf: feas,
                feasibility_exceeded: feas > self.cfg.eps1,
                refinements,
                conditioning_warning: self.conditioning_warning,
            },
        ))
    }

    /// Solve with the f and g the system was assembled with.
    pub fn solve(&self) -> Result<(Spline, SolveReport)> {
        let (c, rep) = self.solve_values(&self.sys.fvec, &self.sys.gvec)?;
        Ok((Spline::from_coeffs(self.sys.space.clone(), c)?, rep))
    }
}

/// Solves the assembled system once (factor, solve, report).
pub fn solve_ls(sys: CollocationSystem, cfg: SolveConfig) -> Result<(Spline, SolveReport)> {
    FactorizedPoisson::new(sys, cfg)?.solve()
}

/// Assembles and solves the Poisson problem Delta u = f, u = g on the
/// boundary.
pub fn poisson_solve(
    space: &Arc<SplineSpace>,
    f: &(dyn Fn(&Point3<f64>) -> f64 + Sync),
    g: &(dyn Fn(&Point3<f64>) -> f64 + Sync),
    dprime: u32,
    cfg: SolveConfig,
) -> Result<(Spline, SolveReport)> {
    solve_ls(assemble(space, dprime, f, g)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_box_grid;
    use crate::smoothness::SplineSpace;

    fn cube_space(h: f64, d: u32, r: u32) -> Arc<SplineSpace> {
        let mesh = build_box_grid([0.0; 3], [1.0; 3], h).unwrap();
        SplineSpace::new(Arc::new(mesh), d, r).unwrap()
    }

    #[test]
    fn dprime_must_exceed_degree() {
        let sp = cube_space(1.0, 5, 1);
        let err = assemble(&sp, 5, &|_| 0.0, &|_| 0.0).err().unwrap();
        assert_eq!(
            err.to_string(),
            "collocation degree must exceed spline degree"
        );
    }

    #[test]
    fn point_counts_on_cube() {
        // Kuhn tets have lattice vertices, so the deduped degree-D' domain
        // points are exactly the (n D' + 1)^3 uniform grid points; boundary
        // points are the grid points on the cube surface.
        let sp = cube_space(1.0, 5, 1);
        let sys = assemble(&sp, 6, &|_| 0.0, &|_| 0.0).unwrap();
        assert_eq!(sys.interior.len() + sys.boundary.len(), 343);
        assert_eq!(sys.boundary.len(), 343 - 125);
        assert_eq!(sys.interior.len(), 125);

        let sp = cube_space(0.5, 4, 1);
        let sys = assemble(&sp, 5, &|_| 0.0, &|_| 0.0).unwrap();
        let n = 2 * 5 + 1;
        assert_eq!(sys.interior.len() + sys.boundary.len(), n * n * n);
        assert_eq!(sys.interior.len(), (n - 2) * (n - 2) * (n - 2));
    }

    #[test]
    fn points_classified_geometrically() {
        let sp = cube_space(0.5, 3, 1);
        let sys = assemble(&sp, 4, &|_| 0.0, &|_| 0.0).unwrap();
        for p in &sys.boundary {
            let on_face = (0..3).any(|a| p.pos[a].abs() < 1e-12 || (p.pos[a] - 1.0).abs() < 1e-12);
            assert!(on_face, "boundary point off the surface: {:?}", p.pos);
        }
        for p in &sys.interior {
            let on_face = (0..3).any(|a| p.pos[a].abs() < 1e-12 || (p.pos[a] - 1.0).abs() < 1e-12);
            assert!(!on_face, "interior point on the surface: {:?}", p.pos);
        }
    }

    #[test]
    fn laplacian_rows_exact_for_quadratic() {
        // u = x^2 + y^2 + z^2 has Delta u = 6 everywhere; K applied to its
        // interpolant must reproduce the constant.
        let sp = cube_space(1.0, 5, 1);
        let u = |p: &Point3<f64>| p.coords.norm_squared();
        let s = Spline::interpolate(sp.clone(), &u);
        let sys = assemble(&sp, 6, &|_| 6.0, &u).unwrap();
        let kc = sys.k.matvec(s.coeffs());
        for (i, v) in kc.iter().enumerate() {
            assert!((v - 6.0).abs() <= 1e-10, "row {i}: {v}");
        }
        let bc = sys.bmat.matvec(s.coeffs());
        for (i, v) in bc.iter().enumerate() {
            assert!((v - sys.gvec[i]).abs() <= 1e-10, "boundary row {i}: {v}");
        }
    }

    #[test]
    fn quadratic_recovered_by_solve() {
        let sp = cube_space(1.0, 5, 1);
        let u = |p: &Point3<f64>| p.coords.norm_squared();
        let (s, rep) = poisson_solve(&sp, &|_| 6.0, &u, 6, SolveConfig::default()).unwrap();
        assert!(rep.normal_residual_rel <= 1e-8, "{rep:?}");
        assert!(!rep.conditioning_warning);
        // 21^3 grid strictly inside the cube.
        let mut worst = 0.0f64;
        for i in 0..21 {
            for j in 0..21 {
                for k in 0..21 {
                    let p = Point3::new(
                        (i as f64 + 1.0) / 22.0,
                        (j as f64 + 1.0) / 22.0,
                        (k as f64 + 1.0) / 22.0,
                    );
                    worst = worst.max((s.eval(&p).unwrap() - u(&p)).abs());
                }
            }
        }
        assert!(worst <= 1e-9, "grid error {worst}");
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let sp = cube_space(1.0, 4, 1);
        let (s, _) = poisson_solve(&sp, &|_| 0.0, &|_| 0.0, 5, SolveConfig::default()).unwrap();
        assert!(s.max_abs_coeff() <= 1e-12);
    }

    #[test]
    fn mu_trades_boundary_fit_for_pde_fit() {
        // f = 6 is exactly satisfiable (u = |x|^2 plus harmonics), but the
        // boundary data is perturbed off the spline space, so the stacked
        // system is inconsistent and the achieved ||Kc - f||_inf must shrink
        // as the PDE rows get heavier.
        let sp = cube_space(1.0, 5, 1);
        let g = |p: &Point3<f64>| {
            p.coords.norm_squared() + 0.05 * (6.0 * p.x).sin() * (6.0 * p.y).sin() * (6.0 * p.z).sin()
        };
        let mut feas = Vec::new();
        for mu in [1e2, 1e4, 1e6] {
            let cfg = SolveConfig {
                mu,
                ..SolveConfig::default()
            };
            let fact =
                FactorizedPoisson::new(assemble(&sp, 6, &|_| 6.0, &g).unwrap(), cfg).unwrap();
            let (_, rep) = fact.solve().unwrap();
            feas.push(rep.feasibility_inf);
        }
        assert!(feas[0] > feas[1] && feas[1] > feas[2], "{feas:?}");
        assert!(feas[0] / feas[2] >= 1e2, "{feas:?}");
    }

    #[test]
    fn feasibility_threshold_is_reported() {
        let sp = cube_space(1.0, 5, 1);
        let u = |p: &Point3<f64>| p.coords.norm_squared();
        let loose = SolveConfig {
            eps1: 1e-6,
            ..SolveConfig::default()
        };
        let (_, rep) = poisson_solve(&sp, &|_| 6.0, &u, 6, loose).unwrap();
        assert!(!rep.feasibility_exceeded, "{rep:?}");
        let tight = SolveConfig {
            eps1: 1e-18,
            ..SolveConfig::default()
        };
        let (_, rep) = poisson_solve(&sp, &|_| 6.0, &u, 6, tight).unwrap();
        assert!(rep.feasibility_exceeded, "{rep:?}");
    }

    #[test]
    fn sign_flipped_f_solves_cleanly() {
        let sp = cube_space(1.0, 5, 1);
        let u = |p: &Point3<f64>| -p.coords.norm_squared();
        let (s, rep) = poisson_solve(&sp, &|_| -6.0, &u, 6, SolveConfig::default()).unwrap();
        assert!(!rep.feasibility_exceeded);
        let p = Point3::new(0.3, 0.4, 0.5);
        assert!((s.eval(&p).unwrap() - u(&p)).abs() <= 1e-9);
    }
}
