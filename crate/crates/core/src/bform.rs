//! Bernstein-Bezier form of trivariate polynomials on tetrahedra.
//!
//! A polynomial of degree d on a tet is stored by its coefficients against
//! the Bernstein basis B_{ijkl}(b) = d!/(i!j!k!l!) b1^i b2^j b3^k b4^l over
//! the barycentric coordinates b of the tet. Coefficients are indexed by the
//! multi-index enumeration of [`multi_indices`]; a spline is one coefficient
//! block per tet.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, Matrix3, Point3, Vector3};
use rayon::prelude::*;

use crate::smoothness::SplineSpace;
use crate::{Error, Result};

/// Barycentric coordinates with respect to a tet, summing to 1.
pub type Bary = [f64; 4];

/// Exponents (i, j, k, l) of a Bernstein basis function; the degree is the
/// component sum.
pub type MultiIndex = [u8; 4];

/// Largest degree for which tables are built (collocation uses D+1; the
/// spline degree itself is capped at 12).
pub(crate) const MAX_DEGREE: u32 = 16;

/// Number of multi-indices of degree `d`: C(d+3, 3).
pub fn multi_index_count(d: u32) -> usize {
    ((d + 1) * (d + 2) * (d + 3) / 6) as usize
}

/// All multi-indices of degree `d` in the fixed enumeration order:
/// ascending lexicographic with i outermost, then j, then k (l is implied).
///
/// The order is a public contract: coefficient vectors, matrix columns, and
/// the text formats all index through it.
pub fn multi_indices(d: u32) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(multi_index_count(d));
    for i in 0..=d {
        for j in 0..=d - i {
            for k in 0..=d - i - j {
                out.push([i as u8, j as u8, k as u8, (d - i - j - k) as u8]);
            }
        }
    }
    out
}

/// Position of a multi-index within the enumeration of its own degree.
///
/// Closed form of the [`multi_indices`] ordering: all indices with a smaller
/// first component come first (C(d-i'+2, 2) of them for each i' < i), then
/// smaller j within equal i, then k.
pub fn rank(mi: MultiIndex) -> usize {
    let (i, j, k) = (mi[0] as u32, mi[1] as u32, mi[2] as u32);
    let d = i + j + k + mi[3] as u32;
    let mut r = 0;
    for ip in 0..i {
        let n = d - ip + 2;
        r += n * (n - 1) / 2;
    }
    for jp in 0..j {
        r += d - i - jp + 1;
    }
    (r + k) as usize
}

/// Precomputed per-degree data: enumeration, multinomial factors, and the
/// index maps `raise[m]` sending rank(mi) at degree d to rank(mi + e_m) at
/// degree d+1 (the backbone of derivative evaluation).
pub(crate) struct Tables {
    pub d: u32,
    pub mis: Vec<MultiIndex>,
    pub coef: Vec<f64>,
    pub raise: [Vec<u32>; 4],
}

impl Tables {
    fn new(d: u32) -> Tables {
        let mis = multi_indices(d);
        let coef = mis
            .iter()
            .map(|mi| {
                let mut c = factorial(d);
                for &e in mi {
                    c /= factorial(e as u32);
                }
                c
            })
            .collect();
        let raise = std::array::from_fn(|m| {
            mis.iter()
                .map(|mi| {
                    let mut up = *mi;
                    up[m] += 1;
                    rank(up) as u32
                })
                .collect()
        });
        Tables {
            d,
            mis,
            coef,
            raise,
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shared cache of per-degree tables.
pub(crate) fn tables(d: u32) -> Arc<Tables> {
    assert!(d <= MAX_DEGREE, "degree {d} beyond table cap");
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Tables>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(d).or_insert_with(|| Arc::new(Tables::new(d))).clone()
}

pub(crate) fn eval_basis_tab(tab: &Tables, b: &Bary, out: &mut [f64]) {
    debug_assert_eq!(out.len(), tab.mis.len());
    let d = tab.d as usize;
    let mut pw = [[0.0f64; MAX_DEGREE as usize + 1]; 4];
    for a in 0..4 {
        pw[a][0] = 1.0;
        for e in 1..=d {
            pw[a][e] = pw[a][e - 1] * b[a];
        }
    }
    for (r, mi) in tab.mis.iter().enumerate() {
        out[r] = tab.coef[r]
            * pw[0][mi[0] as usize]
            * pw[1][mi[1] as usize]
            * pw[2][mi[2] as usize]
            * pw[3][mi[3] as usize];
    }
}

/// Values of all degree-`d` Bernstein basis functions at `b`, in enumeration
/// order.
pub fn eval_basis(d: u32, b: &Bary) -> Vec<f64> {
    let tab = tables(d);
    let mut out = vec![0.0; tab.mis.len()];
    eval_basis_tab(&tab, b, &mut out);
    out
}

/// Domain points of a tet at degree `d`: (i v1 + j v2 + k v3 + l v4)/d in
/// enumeration order. They index coefficients and serve as collocation
/// points.
pub fn domain_points(verts: &[Point3<f64>; 4], d: u32) -> Vec<Point3<f64>> {
    multi_indices(d)
        .iter()
        .map(|mi| {
            let mut c = Vector3::zeros();
            for s in 0..4 {
                c += verts[s].coords * (mi[s] as f64 / d as f64);
            }
            Point3::from(c)
        })
        .collect()
}

/// Value, gradient, and Hessian of a spline at one point.
#[derive(Clone, Copy, Debug)]
pub struct DerivBundle {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl DerivBundle {
    pub fn laplacian(&self) -> f64 {
        self.hessian.trace()
    }

    /// Monge-Ampere operator det(D^2 u) via the symmetric 3x3 expansion
    /// xx yy zz + 2 xy yz xz - xx yz^2 - yy xz^2 - zz xy^2.
    pub fn det_hessian(&self) -> f64 {
        det3_sym(&self.hessian)
    }
}

pub fn det3_sym(h: &Matrix3<f64>) -> f64 {
    let (xx, yy, zz) = (h[(0, 0)], h[(1, 1)], h[(2, 2)]);
    let (xy, xz, yz) = (h[(0, 1)], h[(0, 2)], h[(1, 2)]);
    xx * yy * zz + 2.0 * xy * yz * xz - xx * yz * yz - yy * xz * xz - zz * xy * xy
}

/// Reusable buffers for point evaluation; one per worker thread in hot loops.
pub struct EvalScratch {
    bd: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

impl EvalScratch {
    pub fn new(space: &SplineSpace) -> EvalScratch {
        let d = space.degree();
        EvalScratch {
            bd: vec![0.0; multi_index_count(d)],
            b1: vec![0.0; multi_index_count(d - 1)],
            b2: vec![0.0; multi_index_count(d - 2)],
        }
    }
}

/// A piecewise polynomial in B-form: one degree-D coefficient block per tet,
/// in tet order, each block in multi-index enumeration order.
///
/// Smoothness across faces is a property of the coefficients (enforced by
/// the least-squares solves), not of the storage.
#[derive(Clone)]
pub struct Spline {
    space: Arc<SplineSpace>,
    coeffs: Vec<f64>,
}

impl Spline {
    pub fn zero(space: Arc<SplineSpace>) -> Spline {
        let n = space.num_dofs();
        Spline {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(space: Arc<SplineSpace>, coeffs: Vec<f64>) -> Result<Spline> {
        if coeffs.len() != space.num_dofs() {
            return Err(Error::Config(format!(
                "coefficient vector has length {}, space has {} dofs",
                coeffs.len(),
                space.num_dofs()
            )));
        }
        Ok(Spline { space, coeffs })
    }

    /// Interpolates `f` per tet at the degree-D domain points. For global
    /// polynomials of degree <= D this reproduces them exactly (and hence
    /// lands in every smoothness class).
    pub fn interpolate(space: Arc<SplineSpace>, f: &(dyn Fn(&Point3<f64>) -> f64 + Sync)) -> Spline {
        let d = space.degree();
        let tab = tables(d);
        let n = tab.mis.len();
        // The Bernstein collocation matrix at domain points is the same for
        // every tet (barycentric coordinates mi/d); factor it once.
        let mut a = DMatrix::zeros(n, n);
        let mut row = vec![0.0; n];
        for (p, mi) in tab.mis.iter().enumerate() {
            let b: Bary = std::array::from_fn(|s| mi[s] as f64 / d as f64);
            eval_basis_tab(&tab, &b, &mut row);
            for q in 0..n {
                a[(p, q)] = row[q];
            }
        }
        let lu = a.lu();
        let mesh = space.mesh();
        let mut coeffs = vec![0.0; space.num_dofs()];
        coeffs
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(t, block)| {
                let pts = domain_points(&mesh.tet_vertices(t), d);
                let rhs = DVector::from_iterator(n, pts.iter().map(|p| f(p)));
                let sol = lu.solve(&rhs).expect("Bernstein collocation matrix is invertible");
                block.copy_from_slice(sol.as_slice());
            });
        Spline { space, coeffs }
    }

    pub fn space(&self) -> &Arc<SplineSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn block(&self, t: usize) -> &[f64] {
        let n = multi_index_count(self.space.degree());
        &self.coeffs[t * n..(t + 1) * n]
    }

    /// Value at a point given its tet and barycentric coordinates.
    pub fn eval_at(&self, t: usize, b: &Bary) -> f64 {
        let tab = tables(self.space.degree());
        let mut vals = vec![0.0; tab.mis.len()];
        eval_basis_tab(&tab, b, &mut vals);
        vals.iter()
            .zip(self.block(t))
            .map(|(v, c)| v * c)
            .sum()
    }

    /// Value at a physical point, `None` outside the domain.
    pub fn eval(&self, p: &Point3<f64>) -> Option<f64> {
        let (t, b) = self.space.mesh().locate(p)?;
        Some(self.eval_at(t, &b))
    }

    /// Value, gradient, and Hessian at a physical point.
    pub fn eval_with_derivatives(&self, p: &Point3<f64>) -> Option<DerivBundle> {
        let (t, b) = self.space.mesh().locate(p)?;
        Some(self.derivs_at(t, &b))
    }

    pub fn derivs_at(&self, t: usize, b: &Bary) -> DerivBundle {
        let mut scratch = EvalScratch::new(&self.space);
        self.derivs_at_scratch(t, b, &mut scratch)
    }

    /// Derivative bundle computed through caller-provided scratch buffers.
    ///
    /// Differentiation happens in barycentric directions: with G_m the
    /// (constant) gradient of the m-th barycentric coordinate of the tet,
    ///   d/dx s = D sum_m G_m[x] sum_{|beta|=D-1} B_beta c_{beta+e_m},
    /// and the Hessian repeats the raise once more at degree D-2 with the
    /// factor D(D-1).
    pub fn derivs_at_scratch(&self, t: usize, b: &Bary, s: &mut EvalScratch) -> DerivBundle {
        let d = self.space.degree();
        let td = tables(d);
        let t1 = tables(d - 1);
        let t2 = tables(d - 2);
        eval_basis_tab(&td, b, &mut s.bd);
        eval_basis_tab(&t1, b, &mut s.b1);
        eval_basis_tab(&t2, b, &mut s.b2);
        let block = self.block(t);
        let g = self.space.mesh().bary_gradients(t);

        let value = s.bd.iter().zip(block).map(|(v, c)| v * c).sum();

        let mut gradient = Vector3::zeros();
        let df = d as f64;
        for m in 0..4 {
            let up = &t1.raise[m];
            let mut dot = 0.0;
            for (beta, &w) in s.b1.iter().enumerate() {
                dot += w * block[up[beta] as usize];
            }
            gradient += df * dot * g[m];
        }

        let mut hessian = Matrix3::zeros();
        let dd = (d * (d - 1)) as f64;
        for m in 0..4 {
            for n in m..4 {
                let upm = &t2.raise[m];
                let upn = &t1.raise[n];
                let mut dot = 0.0;
                for (gamma, &w) in s.b2.iter().enumerate() {
                    dot += w * block[upn[upm[gamma] as usize] as usize];
                }
                let outer = g[m] * g[n].transpose();
                if m == n {
                    hessian += dd * dot * outer;
                } else {
                    hessian += dd * dot * (outer + g[n] * g[m].transpose());
                }
            }
        }

        DerivBundle {
            value,
            gradient,
            hessian,
        }
    }
}
