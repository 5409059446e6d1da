//! Primal-dual interior point solver for linear quantile regression.
//!
//! Works on the bounded dual of the check-loss LP
//!
//! ```text
//! min  -y'd   s.t.  X'd = (1 - q) X'1,   0 <= d <= 1
//! ```
//!
//! with Mehrotra predictor-corrector steps. The regression coefficients are
//! the negated multipliers of the equality constraint.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    /// Relative duality gap at which the solve stops.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmSolution {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gap: f64,
}

const STEP_FRACTION: f64 = 0.99995;

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// `X' diag(theta) X` plus a relative jitter that keeps rank-deficient
/// designs (e.g. two full sets of dummies) factorizable.
fn weighted_gram(x: &DMatrix<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut m = DMatrix::<f64>::zeros(p, p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        let t = theta[i];
        for j in 0..p {
            row[j] = x[(i, j)];
        }
        for j in 0..p {
            let a = t * row[j];
            if a == 0.0 {
                continue;
            }
            for k in j..p {
                m[(j, k)] += a * row[k];
            }
        }
    }
    let max_diag = (0..p).map(|j| m[(j, j)]).fold(0.0_f64, f64::max).max(1e-300);
    for j in 0..p {
        m[(j, j)] += 1e-11 * max_diag;
        for k in 0..j {
            m[(j, k)] = m[(k, j)];
        }
    }
    m
}

struct Direction {
    dx: DVector<f64>,
    dw: DVector<f64>,
    dz: DVector<f64>,
    dv: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn newton_direction(
    x_mat: &DMatrix<f64>,
    x: &DVector<f64>,
    s: &DVector<f64>,
    z: &DVector<f64>,
    v: &DVector<f64>,
    rp: &DVector<f64>,
    rd: &DVector<f64>,
    r_xz: &DVector<f64>,
    r_sv: &DVector<f64>,
) -> Result<Direction> {
    let n = x.len();
    let theta = DVector::from_fn(n, |i, _| 1.0 / (z[i] / x[i] + v[i] / s[i]));
    let rho = DVector::from_fn(n, |i, _| rd[i] - r_xz[i] / x[i] + r_sv[i] / s[i]);
    let m = weighted_gram(x_mat, &theta);
    let theta_rho = theta.component_mul(&rho);
    let rhs = rp + x_mat.tr_mul(&theta_rho);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Singular("normal equations in quantile LP".into()))?;
    let mut dw = chol.solve(&rhs);
    let mut dx = DVector::zeros(n);
    // refinement against the primal residual the step must remove
    for round in 0..3 {
        let xdw = x_mat * &dw;
        dx = DVector::from_fn(n, |i, _| theta[i] * (xdw[i] - rho[i]));
        if round == 2 {
            break;
        }
        let err = rp - x_mat.tr_mul(&dx);
        dw += chol.solve(&err);
    }
    let dz = DVector::from_fn(n, |i, _| (r_xz[i] - z[i] * dx[i]) / x[i]);
    let dv = DVector::from_fn(n, |i, _| (r_sv[i] + v[i] * dx[i]) / s[i]);
    Ok(Direction { dx, dw, dz, dv })
}

/// Fits `min_b sum_i rho_q(y_i - x_i'b)` and returns `b`.
pub fn solve_quantile_lp(
    x_mat: &DMatrix<f64>,
    y: &DVector<f64>,
    q: f64,
    opts: &IpmOptions,
) -> Result<IpmSolution> {
    let (n, p) = x_mat.shape();
    if n == 0 || p == 0 {
        return Err(Error::Precondition("empty design matrix".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Precondition(format!("quantile level {q} not in (0, 1)")));
    }

    let c = -y;
    let ones = DVector::from_element(n, 1.0);
    let b = x_mat.tr_mul(&ones) * (1.0 - q);

    let mut x = DVector::from_element(n, 1.0 - q);
    let mut s = DVector::from_element(n, q);

    // Least-squares start for the multipliers.
    let gram = weighted_gram(x_mat, &ones);
    let beta_ls = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("design matrix in quantile LP".into()))?
        .solve(&x_mat.tr_mul(y));
    let mut w = -beta_ls;
    let r = &c - x_mat * &w;
    let scale = r.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let delta = (1e-2 * scale).max(1e-8);
    let mut z = r.map(|v| v.max(0.0) + delta);
    let mut v = r.map(|v| (-v).max(0.0) + delta);

    let b_norm = b.amax();
    let c_norm = c.amax();
    let mut converged = false;
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let primal = c.dot(&x);
        let dual = b.dot(&w) - v.sum();
        gap = (x.dot(&z) + s.dot(&v)) / (1.0 + primal.abs());
        let rp = &b - x_mat.tr_mul(&x);
        let rd = &c - x_mat * &w - &z + &v;
        let infeas = (rp.amax() / (1.0 + b_norm)).max(rd.amax() / (1.0 + c_norm));
        if gap < opts.tolerance {
            // no complementarity left to remove; degenerate data stalls here
            // with a small residual infeasibility
            let pd = (primal - dual).abs() / (1.0 + primal.abs());
            converged = infeas < 1e-4 && pd < 1e-5;
            break;
        }

        let mu = (x.dot(&z) + s.dot(&v)) / (2.0 * n as f64);

        // Predictor.
        let r_xz = -x.component_mul(&z);
        let r_sv = -s.component_mul(&v);
        let aff = newton_direction(x_mat, &x, &s, &z, &v, &rp, &rd, &r_xz, &r_sv)?;
        let ds_aff = -&aff.dx;
        let ap = max_step(&x, &aff.dx).min(max_step(&s, &ds_aff)).min(1.0);
        let ad = max_step(&z, &aff.dz).min(max_step(&v, &aff.dv)).min(1.0);
        let mu_aff = ((&x + &aff.dx * ap).dot(&(&z + &aff.dz * ad))
            + (&s + &ds_aff * ap).dot(&(&v + &aff.dv * ad)))
            / (2.0 * n as f64);
        let mut sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        // keep centered while the iterate is still infeasible
        if infeas > 1e3 * gap {
            sigma = sigma.max(0.5);
        }

        // Corrector.
        let r_xz = DVector::from_fn(n, |i, _| {
            sigma * mu - x[i] * z[i] - aff.dx[i] * aff.dz[i]
        });
        let r_sv = DVector::from_fn(n, |i, _| {
            sigma * mu - s[i] * v[i] - ds_aff[i] * aff.dv[i]
        });
        let dir = newton_direction(x_mat, &x, &s, &z, &v, &rp, &rd, &r_xz, &r_sv)?;
        let ds = -&dir.dx;
        let ap = (STEP_FRACTION * max_step(&x, &dir.dx).min(max_step(&s, &ds))).min(1.0);
        let ad = (STEP_FRACTION * max_step(&z, &dir.dz).min(max_step(&v, &dir.dv))).min(1.0);

        x += &dir.dx * ap;
        s += &ds * ap;
        w += &dir.dw * ad;
        z += &dir.dz * ad;
        v += &dir.dv * ad;
        if !(x.iter().all(|v| v.is_finite()) && w.iter().all(|v| v.is_finite())) {
            return Err(Error::Numerical("non-finite iterate in quantile LP".into()));
        }
    }

    Ok(IpmSolution {
        coefficients: w.iter().map(|v| -v).collect(),
        converged,
        iterations,
        gap,
    })
}
