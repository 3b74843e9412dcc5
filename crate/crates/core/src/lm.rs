//! Dense Levenberg-Marquardt for small least-squares problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub damping_init: f64,
    pub damping_factor: f64,
    pub max_iter: usize,
    /// Stop once an accepted step reduces the cost by less than this fraction.
    pub rel_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { damping_init: 1e-3, damping_factor: 2.0, max_iter: 100, rel_tol: 1e-6 }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping_init > 0.0) || !(self.damping_factor > 1.0) || self.max_iter == 0 || !(self.rel_tol > 0.0) {
            return Err(Error::Config(format!("invalid LM settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    /// Half the squared residual norm at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `0.5 * |r(p)|^2` starting from `p0`.
///
/// `model` returns the residual vector and its Jacobian at the given point.
pub fn minimize<F>(p0: DVector<f64>, cfg: &LmConfig, mut model: F) -> Result<LmOutcome>
where
    F: FnMut(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let n = p0.len();
    let (mut r, mut jac) = model(&p0);
    check_finite(&r)?;
    let mut params = p0;
    let mut cost = 0.5 * r.norm_squared();
    let mut damping = cfg.damping_init;
    let mut iterations = 0;

    if n == 0 {
        return Ok(LmOutcome { params, cost, iterations, converged: true });
    }

    while iterations < cfg.max_iter {
        let grad = jac.transpose() * &r;
        let scale = jac.norm() * r.norm();
        // Residual already at rounding level relative to the model output.
        let negligible = r.norm() <= 1e-12 * jac.norm() * params.norm();
        if cost == 0.0 || negligible || grad.norm() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Ok(LmOutcome { params, cost, iterations, converged: true });
        }
        let jtj = jac.transpose() * &jac;
        let floor = 1e-12 * (jtj.trace() / n as f64).max(f64::MIN_POSITIVE);

        // Inner loop: raise damping until a step is accepted.
        let mut accepted = false;
        while !accepted {
            iterations += 1;
            let mut lhs = jtj.clone();
            for k in 0..n {
                lhs[(k, k)] += damping * (jtj[(k, k)] + floor);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    damping *= cfg.damping_factor;
                    if iterations >= cfg.max_iter {
                        break;
                    }
                    continue;
                }
            };
            let trial = &params + &step;
            let (r_new, j_new) = model(&trial);
            check_finite(&r_new)?;
            let new_cost = 0.5 * r_new.norm_squared();
            if new_cost < cost {
                let reduction = (cost - new_cost) / cost;
                params = trial;
                r = r_new;
                jac = j_new;
                cost = new_cost;
                damping = (damping / cfg.damping_factor).max(1e-15);
                accepted = true;
                if reduction < cfg.rel_tol {
                    return Ok(LmOutcome { params, cost, iterations, converged: true });
                }
            } else {
                if new_cost - cost <= 8.0 * f64::EPSILON * cost {
                    // The step only moves the cost at rounding level.
                    return Ok(LmOutcome { params, cost, iterations, converged: true });
                }
                damping *= cfg.damping_factor;
                if damping > 1e15 {
                    // No descent direction left at machine precision.
                    return Ok(LmOutcome { params, cost, iterations, converged: true });
                }
            }
            if iterations >= cfg.max_iter {
                break;
            }
        }
    }
    Ok(LmOutcome { params, cost, iterations, converged: false })
}

fn check_finite(r: &DVector<f64>) -> Result<()> {
    if r.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("residual vector".into()))
    }
}
