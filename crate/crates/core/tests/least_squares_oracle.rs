//! Cross-checks the factored normal-equation solver against a test-local
//! conjugate-gradient solve of the same least-squares problem. The two paths
//! share nothing past the assembled matrices, so agreement pins down the
//! weighting, the smoothness rows, and the equilibration logic at once.

use std::sync::Arc;

use nalgebra::Point3;

use ma3d::collocation::{assemble, solve_ls, SolveConfig};
use ma3d::mesh::build_box_grid;
use ma3d::smoothness::SplineSpace;
use ma3d::Csr;

/// The normal operator mu K^T K + B^T B + H^T H with unit pivots on columns
/// no row touches, which pins the untouched coefficients at zero exactly
/// like the production path.
struct NormalOperator<'a> {
    mu: f64,
    k: &'a Csr,
    b: &'a Csr,
    h: &'a Csr,
    diag: Vec<f64>,
    unit: Vec<bool>,
}

impl<'a> NormalOperator<'a> {
    fn new(mu: f64, k: &'a Csr, b: &'a Csr, h: &'a Csr) -> Self {
        let mut diag = vec![0.0f64; k.ncols()];
        for (scale, m) in [(mu, k), (1.0, b), (1.0, h)] {
            for i in 0..m.nrows() {
                let (cols, vals) = m.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    diag[*c as usize] += scale * v * v;
                }
            }
        }
        let unit: Vec<bool> = diag.iter().map(|&d| d == 0.0).collect();
        for (d, &u) in diag.iter_mut().zip(&unit) {
            if u {
                *d = 1.0;
            }
        }
        NormalOperator {
            mu,
            k,
            b,
            h,
            diag,
            unit,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.k.matvec_t_acc(&self.k.matvec(x), self.mu, &mut y);
        self.b.matvec_t_acc(&self.b.matvec(x), 1.0, &mut y);
        self.h.matvec_t_acc(&self.h.matvec(x), 1.0, &mut y);
        for (yi, (&xi, &u)) in y.iter_mut().zip(x.iter().zip(&self.unit)) {
            if u {
                *yi = xi;
            }
        }
        y
    }
}

/// Jacobi-preconditioned conjugate gradients from zero; returns the iterate
/// and the relative residual it reached.
fn pcg(op: &NormalOperator, rhs: &[f64], tol: f64, max_iters: usize) -> (Vec<f64>, f64) {
    let n = rhs.len();
    let mut x = vec![0.0f64; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut res = f64::INFINITY;
    for _ in 0..max_iters {
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / rhs_norm;
        if res <= tol {
            break;
        }
        let ap = op.apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / op.diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, res)
}

#[test]
fn factored_solution_matches_conjugate_gradients() {
    let mesh = Arc::new(build_box_grid([0.0; 3], [1.0; 3], 1.0).unwrap());
    let space = SplineSpace::new(mesh, 4, 1).unwrap();
    let f = |p: &Point3<f64>| 6.0 + p.x - 2.0 * p.y;
    let g = |p: &Point3<f64>| p.coords.norm_squared() + 0.25 * p.x * p.y;
    let cfg = SolveConfig::default();

    let sys = assemble(&space, 5, &f, &g).unwrap();
    let kept = sys.clone();
    let (prod, report) = solve_ls(sys, cfg).unwrap();
    assert!(
        !report.conditioning_warning,
        "cross-check needs the unregularized solution"
    );

    let h = space.smoothness_matrix();
    let op = NormalOperator::new(cfg.mu, &kept.k, &kept.bmat, h);
    let mut rhs = vec![0.0f64; space.num_dofs()];
    kept.k.matvec_t_acc(&kept.fvec, cfg.mu, &mut rhs);
    kept.bmat.matvec_t_acc(&kept.gvec, 1.0, &mut rhs);
    let (cg, res) = pcg(&op, &rhs, 1e-13, 200 * rhs.len());
    assert!(res <= 1e-12, "CG stalled at relative residual {res}");

    let scale = prod
        .coeffs()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let mut gap = 0.0f64;
    for (a, b) in prod.coeffs().iter().zip(&cg) {
        gap = gap.max((a - b).abs());
    }
    assert!(
        gap <= 1e-6 * scale,
        "paths disagree: coefficient gap {gap} against scale {scale}"
    );
}
