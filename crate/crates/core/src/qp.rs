//! Dense primal active-set solver for small strictly convex quadratic programs
//!
//! ```text
//! minimise   1/2 x'Hx + c'x
//! subject to a_i'x >= b_i
//! ```
//!
//! The caller supplies a feasible starting point.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// One row per inequality constraint.
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    Infeasible { constraint: usize, violation: f64 },
    Singular,
    IterationLimit,
}

impl QpProblem {
    fn slack(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.constraints.row(i).dot(&x.transpose()) - self.bounds[i]
    }

    pub fn solve(&self, start: DVector<f64>) -> Result<QpSolution, QpError> {
        let n = self.hessian.nrows();
        let m = self.constraints.nrows();
        let scale = |i: usize| self.constraints.row(i).norm().max(1e-300);
        let feas_tol = 1e-10;

        for i in 0..m {
            let s = self.slack(i, &start);
            if s < -feas_tol * scale(i) * (1.0 + start.amax()) {
                return Err(QpError::Infeasible {
                    constraint: i,
                    violation: s,
                });
            }
        }

        let mut x = start;
        let mut working: Vec<usize> = Vec::new();
        for i in 0..m {
            if self.slack(i, &x).abs() <= feas_tol * scale(i) && self.independent(&working, i) {
                working.push(i);
            }
        }

        let max_iter = 50 * (n + m) + 100;
        // after an unblocked full step x already minimises over the working set;
        // the residual step is rounding noise and must not be taken again
        let mut subspace_optimal = false;
        for iter in 0..max_iter {
            let grad = &self.hessian * &x + &self.linear;
            let (step, multipliers) = self.equality_step(&working, &grad)?;
            let step_size = step.amax();
            if subspace_optimal || step_size <= 1e-13 * (1.0 + x.amax()) {
                subspace_optimal = false;
                let most_negative = multipliers
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .filter(|(_, &l)| l < -1e-12);
                match most_negative {
                    None => {
                        return Ok(QpSolution {
                            x,
                            active: working,
                            iterations: iter,
                        })
                    }
                    Some((pos, _)) => {
                        working.remove(pos);
                    }
                }
                continue;
            }

            let mut alpha = 1.0;
            let mut blocking = None;
            for i in (0..m).filter(|i| !working.contains(i)) {
                let ap = self.constraints.row(i).dot(&step.transpose());
                if ap < -1e-14 * scale(i) * step_size {
                    let limit = (-self.slack(i, &x) / ap).max(0.0);
                    if limit < alpha {
                        alpha = limit;
                        blocking = Some(i);
                    }
                }
            }
            x += alpha * &step;
            match blocking {
                Some(i) if self.independent(&working, i) => working.push(i),
                Some(_) => {}
                None => subspace_optimal = true,
            }
        }
        Err(QpError::IterationLimit)
    }

    fn independent(&self, working: &[usize], candidate: usize) -> bool {
        if working.is_empty() {
            return true;
        }
        let rows: Vec<usize> = working.iter().copied().chain([candidate]).collect();
        let a = self.constraints.select_rows(&rows);
        let svd = (&a * a.transpose()).symmetric_eigenvalues();
        let max = svd.amax();
        svd.min() > 1e-12 * max.max(1e-300)
    }

    /// Solves the equality-constrained subproblem on the working set and returns
    /// the step together with the Lagrange multipliers of the working constraints.
    fn equality_step(
        &self,
        working: &[usize],
        grad: &DVector<f64>,
    ) -> Result<(DVector<f64>, Vec<f64>), QpError> {
        let n = self.hessian.nrows();
        let k = working.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.hessian);
        for (j, &i) in working.iter().enumerate() {
            let row = self.constraints.row(i);
            for c in 0..n {
                kkt[(n + j, c)] = row[c];
                kkt[(c, n + j)] = -row[c];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-grad));
        let sol = kkt.lu().solve(&rhs).ok_or(QpError::Singular)?;
        let step = sol.rows(0, n).into_owned();
        let multipliers = sol.rows(n, k).iter().copied().collect();
        Ok((step, multipliers))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum_inside_feasible_region() {
        let p = QpProblem {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::from_vec(vec![-1.0, -2.0]),
            constraints: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            bounds: DVector::from_vec(vec![-10.0]),
        };
        let s = p.solve(DVector::zeros(2)).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_onto_halfspaces() {
        // nearest point to (-1, -1) with x >= 0, y >= 0.5, x + y <= 1
        let p = QpProblem {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::from_vec(vec![1.0, 1.0]),
            constraints: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]),
            bounds: DVector::from_vec(vec![0.0, 0.5, -1.0]),
        };
        let s = p.solve(DVector::from_vec(vec![0.2, 0.6])).unwrap();
        assert!(s.x[0].abs() < 1e-12);
        assert!((s.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_infeasible_start() {
        let p = QpProblem {
            hessian: DMatrix::identity(1, 1),
            linear: DVector::zeros(1),
            constraints: DMatrix::from_row_slice(1, 1, &[1.0]),
            bounds: DVector::from_vec(vec![1.0]),
        };
        assert!(matches!(
            p.solve(DVector::zeros(1)),
            Err(QpError::Infeasible { constraint: 0, .. })
        ));
    }

    #[test]
    fn matches_brute_force_on_box() {
        // min (x-3)^2 + (y+2)^2 + xy on [0,1]^2 checked against a fine grid
        let p = QpProblem {
            hessian: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
            linear: DVector::from_vec(vec![-6.0, 4.0]),
            constraints: DMatrix::from_row_slice(
                4,
                2,
                &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
            ),
            bounds: DVector::from_vec(vec![0.0, -1.0, 0.0, -1.0]),
        };
        let s = p.solve(DVector::from_vec(vec![0.5, 0.5])).unwrap();
        let f = |x: f64, y: f64| x * x + y * y + x * y - 6.0 * x + 4.0 * y;
        let mut best = f64::INFINITY;
        for i in 0..=1000 {
            for j in 0..=1000 {
                best = best.min(f(i as f64 / 1000.0, j as f64 / 1000.0));
            }
        }
        assert!((f(s.x[0], s.x[1]) - best).abs() < 1e-9);
    }
}
