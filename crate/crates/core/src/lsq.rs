//! Small dense Levenberg–Marquardt for the curve fits (2–5 parameters).

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub ftol: f64,
    /// Stop when every scaled parameter step falls below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            ftol: 1e-12,
            xtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Sum of squared (weighted) residuals.
    pub cost: f64,
    /// `(JᵀJ)⁻¹` at the solution, `None` when singular.
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub n_residuals: usize,
}

impl LmFit {
    pub fn reduced_chi2(&self) -> f64 {
        let dof = self.n_residuals.saturating_sub(self.params.len()).max(1);
        self.cost / dof as f64
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance
            .as_ref()
            .map(|c| c[(i, i)].max(0.0).sqrt())
            .unwrap_or(f64::INFINITY)
    }
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, p: &[f64], scale: &[f64], m: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(scale[j]);
        q[j] = p[j] + h;
        let up = f(&q);
        q[j] = p[j] - h;
        let dn = f(&q);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimize `Σ r_i(p)²` with `p` clamped to `[lower, upper]`.
///
/// `residuals` returns the weighted residual vector; `scale` gives the typical
/// magnitude of each parameter (finite-difference steps and step tests).
pub fn levenberg_marquardt<F>(
    residuals: F,
    p0: &[f64],
    lower: &[f64],
    upper: &[f64],
    scale: &[f64],
    opts: &LmOptions,
) -> LmFit
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let np = p0.len();
    let clamp = |p: &mut [f64]| {
        for j in 0..np {
            p[j] = p[j].clamp(lower[j], upper[j]);
        }
    };
    let mut p = p0.to_vec();
    clamp(&mut p);
    let mut r = residuals(&p);
    let m = r.len();
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        if !cost.is_finite() || cost < 1e-30 {
            converged = cost.is_finite();
            break;
        }
        let jac = jacobian(&residuals, &p, scale, m);
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let dmax = (0..np).map(|j| a[(j, j)]).fold(0.0, f64::max).max(1e-300);

        // Parameters pinned at a bound with the gradient pushing outward are
        // held fixed for this iteration.
        let active: Vec<bool> = (0..np)
            .map(|j| (p[j] <= lower[j] && g[j] > 0.0) || (p[j] >= upper[j] && g[j] < 0.0))
            .collect();

        let mut accepted = false;
        while lambda < 1e16 {
            let mut mat = a.clone();
            let mut rhs = -&g;
            for j in 0..np {
                mat[(j, j)] += lambda * a[(j, j)].max(1e-12 * dmax);
            }
            for j in (0..np).filter(|&j| active[j]) {
                for i in 0..np {
                    mat[(i, j)] = 0.0;
                    mat[(j, i)] = 0.0;
                }
                mat[(j, j)] = 1.0;
                rhs[j] = 0.0;
            }
            let step = match mat.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut trial);
            let r_new = residuals(&trial);
            let cost_new: f64 = r_new.iter().map(|x| x * x).sum();
            if cost_new.is_finite() && cost_new < cost {
                let small_step = (0..np)
                    .all(|j| (trial[j] - p[j]).abs() <= opts.xtol * p[j].abs().max(scale[j]));
                let small_gain = (cost - cost_new) <= opts.ftol * cost;
                p = trial;
                r = r_new;
                cost = cost_new;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at machine precision.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    let jac = jacobian(&residuals, &p, scale, m);
    let covariance = (jac.transpose() * &jac).try_inverse();
    LmFit {
        params: p,
        cost,
        covariance,
        iterations,
        converged,
        n_residuals: m,
    }
}
