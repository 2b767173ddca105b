//! Dense strictly convex QP by the dual active-set method of Goldfarb and Idnani.
//!
//! minimise ½xᵀHx + fᵀx subject to A·x ≤ b.
//!
//! The solver keeps J = L⁻ᵀQ (L the Cholesky factor of H) and an upper
//! triangular R with Jᵀ·N_active = [R; 0], updated by Givens rotations when
//! constraints enter or leave the active set.

use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::numerics::{Mat, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QpSolution {
    pub x_star: Vec<f64>,
    pub objective: f64,
    /// Active constraint indices, in the order they were added.
    pub active_set: Vec<usize>,
    /// One multiplier per constraint (zero when inactive).
    pub multipliers: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

/// Reusable solver; holds no state between calls apart from scratch space.
#[derive(Clone, Debug, Default)]
pub struct DualActiveSet {
    /// Constraints listed here are preferred when choosing which violated
    /// constraint enters next.
    pub hint: Vec<usize>,
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

fn rotate_cols(j: &mut Mat, c1: usize, c2: usize, c: f64, s: f64) {
    for k in 0..j.nrows() {
        let (a, b) = (j[(k, c1)], j[(k, c2)]);
        j[(k, c1)] = c * a + s * b;
        j[(k, c2)] = -s * a + c * b;
    }
}

struct Factor {
    j: Mat,
    r: Mat,
    q: usize,
}

impl Factor {
    /// Appends a constraint with d = Jᵀn. Returns false on linear dependence.
    fn add(&mut self, mut d: Vector) -> bool {
        let n = self.j.nrows();
        for k in (self.q + 1..n).rev() {
            let (c, s, h) = givens(d[k - 1], d[k]);
            d[k - 1] = h;
            d[k] = 0.0;
            if s != 0.0 || c != 1.0 {
                rotate_cols(&mut self.j, k - 1, k, c, s);
            }
        }
        if d[self.q].abs() <= f64::EPSILON * d.norm().max(1.0) {
            return false;
        }
        for k in 0..=self.q {
            self.r[(k, self.q)] = d[k];
        }
        self.q += 1;
        true
    }

    /// Removes active position `l`, restoring the triangular shape of R.
    fn drop(&mut self, l: usize) {
        let q = self.q;
        for col in l..q - 1 {
            for row in 0..q {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        for row in 0..q {
            self.r[(row, q - 1)] = 0.0;
        }
        for k in l..q - 1 {
            let (c, s, h) = givens(self.r[(k, k)], self.r[(k + 1, k)]);
            self.r[(k, k)] = h;
            self.r[(k + 1, k)] = 0.0;
            if s != 0.0 || c != 1.0 {
                for col in k + 1..q - 1 {
                    let (a, b) = (self.r[(k, col)], self.r[(k + 1, col)]);
                    self.r[(k, col)] = c * a + s * b;
                    self.r[(k + 1, col)] = -s * a + c * b;
                }
                rotate_cols(&mut self.j, k, k + 1, c, s);
            }
        }
        self.q -= 1;
    }

    /// Solves R[0..q, 0..q]·r = d[0..q].
    fn back_solve(&self, d: &Vector) -> Vec<f64> {
        let q = self.q;
        let mut out = vec![0.0; q];
        for i in (0..q).rev() {
            let mut s = d[i];
            for k in i + 1..q {
                s -= self.r[(i, k)] * out[k];
            }
            out[i] = s / self.r[(i, i)];
        }
        out
    }
}

impl DualActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_hint(hint: Vec<usize>) -> Self {
        Self { hint }
    }

    /// Solves the QP. `h` must be symmetric positive definite.
    pub fn solve(&self, h: &Mat, f: &Vector, a: &Mat, b: &Vector) -> Result<QpSolution> {
        let d = h.nrows();
        let m = a.nrows();
        if h.ncols() != d || f.len() != d || (m > 0 && a.ncols() != d) || b.len() != m {
            return Err(dim(format!(
                "qp: H {}x{}, f {}, A {}x{}, b {}",
                h.nrows(),
                h.ncols(),
                f.len(),
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        let chol = h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Precondition("QP Hessian is not positive definite".into()))?;
        let linv = chol
            .l()
            .solve_lower_triangular(&Mat::identity(d, d))
            .ok_or_else(|| Error::Precondition("QP Hessian is singular".into()))?;
        let mut fac = Factor {
            j: linv.transpose(),
            r: Mat::zeros(d, d),
            q: 0,
        };

        // Unconstrained minimiser.
        let mut x = -chol.solve(f);
        let mut fval = 0.5 * f.dot(&x);
        let mut active: Vec<usize> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        let mut in_active = vec![false; m];
        let max_iter = 50 * (d + m).max(1);
        let mut iterations = 0;

        // Constraints in GI form: nᵢᵀx ≥ bᵢ' with nᵢ = −aᵢ, bᵢ' = −bᵢ.
        let row_norm: Vec<f64> = (0..m).map(|i| a.row(i).norm()).collect();
        let mut order: Vec<usize> = self.hint.iter().copied().filter(|&i| i < m).collect();
        order.extend((0..m).filter(|i| !self.hint.contains(i)));

        let status = 'outer: loop {
            // Pick the first violated constraint.
            let mut p = None;
            for &i in &order {
                if in_active[i] {
                    continue;
                }
                let slack = b[i] - a.row(i).dot(&x.transpose());
                let tol = 1e-10 * (1.0 + b[i].abs() + row_norm[i] * x.norm());
                if slack < -tol {
                    p = Some(i);
                    break;
                }
            }
            let Some(p) = p else { break QpStatus::Optimal };
            let np: Vector = -a.row(p).transpose();
            let mut up = 0.0;

            loop {
                iterations += 1;
                if iterations > max_iter {
                    break 'outer QpStatus::IterationLimit;
                }
                let dvec = fac.j.transpose() * &np;
                let q = fac.q;
                let mut z = Vector::zeros(d);
                for k in q..d {
                    z += fac.j.column(k) * dvec[k];
                }
                let r = fac.back_solve(&dvec);

                // Dual step length: first active multiplier to hit zero.
                let mut t1 = f64::INFINITY;
                let mut l = None;
                for (k, &rk) in r.iter().enumerate() {
                    if rk > 0.0 {
                        let ratio = u[k] / rk;
                        let better = match l {
                            None => true,
                            Some(lk) => ratio < t1 || (ratio == t1 && active[k] < active[lk]),
                        };
                        if better {
                            t1 = ratio;
                            l = Some(k);
                        }
                    }
                }
                let sp = np.dot(&x) + b[p];
                let zn = z.dot(&np);
                let znorm = z.norm();
                let t2 = if znorm > 1e-14 * (1.0 + np.norm()) && zn > 0.0 {
                    -sp / zn
                } else {
                    f64::INFINITY
                };

                if t2.is_infinite() {
                    let Some(lk) = l else {
                        break 'outer QpStatus::Infeasible;
                    };
                    // Partial step in dual space only.
                    for (k, rk) in r.iter().enumerate() {
                        u[k] -= t1 * rk;
                    }
                    up += t1;
                    in_active[active[lk]] = false;
                    active.remove(lk);
                    u.remove(lk);
                    fac.drop(lk);
                    continue;
                }

                let t = t1.min(t2);
                let f_before = fval;
                x += &z * t;
                fval += t * zn * (0.5 * t + up);
                debug_assert!(
                    fval >= f_before - 1e-9 * (1.0 + f_before.abs()),
                    "dual objective decreased"
                );
                for (k, rk) in r.iter().enumerate() {
                    u[k] -= t * rk;
                }
                up += t;

                if t2 <= t1 {
                    if !fac.add(dvec) {
                        break 'outer QpStatus::Infeasible;
                    }
                    active.push(p);
                    u.push(up);
                    in_active[p] = true;
                    continue 'outer;
                }
                let lk = l.expect("finite t1 implies a blocking constraint");
                in_active[active[lk]] = false;
                active.remove(lk);
                u.remove(lk);
                fac.drop(lk);
            }
        };

        let mut multipliers = vec![0.0; m];
        for (k, &i) in active.iter().enumerate() {
            multipliers[i] = u[k].max(0.0);
        }
        let objective = 0.5 * x.dot(&(h * &x)) + f.dot(&x);
        Ok(QpSolution {
            x_star: x.iter().copied().collect(),
            objective,
            active_set: active,
            multipliers,
            status,
            iterations,
        })
    }
}

/// Convenience wrapper around a default solver.
pub fn solve_qp(h: &Mat, f: &Vector, a: &Mat, b: &Vector) -> Result<QpSolution> {
    DualActiveSet::new().solve(h, f, a, b)
}

/// KKT residuals of a candidate solution: (stationarity, primal, dual, complementarity).
pub fn kkt_residuals(
    h: &Mat,
    f: &Vector,
    a: &Mat,
    b: &Vector,
    sol: &QpSolution,
) -> (f64, f64, f64, f64) {
    let x = Vector::from_column_slice(&sol.x_star);
    let lam = Vector::from_column_slice(&sol.multipliers);
    let stat = if a.nrows() > 0 {
        (h * &x + f + a.transpose() * &lam).norm()
    } else {
        (h * &x + f).norm()
    };
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for i in 0..a.nrows() {
        let g = a.row(i).dot(&x.transpose()) - b[i];
        primal = primal.max(g);
        dual = dual.max(-lam[i]);
        comp = comp.max((lam[i] * g).abs());
    }
    (stat, primal.max(0.0), dual.max(0.0), comp)
}
