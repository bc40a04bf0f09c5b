//! Preconditioned conjugate gradients for `(A + s I) x = b`.
//!
//! `A` is the Dirichlet stencil of `-Laplacian`. The preconditioner is an
//! exact direct solver: an `LDL^T` factorization of the tridiagonal matrix in
//! 1D, and in 2D a type-I sine transform along y followed by one tridiagonal
//! solve along x per y-mode. PCG then finishes in one or two steps.

use std::fmt;
use std::sync::Arc;

use rustdct::{DctPlanner, Dst1};

use crate::error::{NlsError, Result};
use crate::grid::{dot, laplacian_into, Grid};

/// `LDL^T` factor of the symmetric Toeplitz tridiagonal matrix
/// `tridiag(off, diag, off)` of size `m`.
#[derive(Debug, Clone)]
struct TridiagFactor {
    off: f64,
    /// pivots `d_i` of the `LDL^T` factorization
    pivots: Vec<f64>,
}

impl TridiagFactor {
    fn new(m: usize, diag: f64, off: f64) -> Result<Self> {
        let mut pivots = Vec::with_capacity(m);
        let mut prev = 0.0;
        for i in 0..m {
            let d = if i == 0 {
                diag
            } else {
                diag - off * off / prev
            };
            if !(d > 0.0) {
                return Err(NlsError::InvalidParams(
                    "shifted operator is not positive definite".into(),
                ));
            }
            pivots.push(d);
            prev = d;
        }
        Ok(Self { off, pivots })
    }

    /// In-place solve on one line.
    fn solve(&self, x: &mut [f64]) {
        let m = self.pivots.len();
        for i in 1..m {
            x[i] -= self.off / self.pivots[i - 1] * x[i - 1];
        }
        x[m - 1] /= self.pivots[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = (x[i] - self.off * x[i + 1]) / self.pivots[i];
        }
    }
}

/// Outcome of one linear solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Clone)]
enum Preconditioner {
    Line(TridiagFactor),
    /// One x-direction factor per y sine mode.
    Sine {
        dst: Arc<dyn Dst1<f64>>,
        modes: Vec<TridiagFactor>,
    },
}

impl fmt::Debug for Preconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preconditioner::Line(_) => f.write_str("Line"),
            Preconditioner::Sine { modes, .. } => write!(f, "Sine({} modes)", modes.len()),
        }
    }
}

/// Iterations without halving the residual before PCG gives up.
const STALL_ITERS: usize = 50;

/// The SPD operator `A + shift * I` on a grid, with its preconditioner.
#[derive(Debug, Clone)]
pub struct ShiftedLaplacian {
    grid: Grid,
    shift: f64,
    pre: Preconditioner,
}

impl ShiftedLaplacian {
    pub fn new(grid: &Grid, shift: f64) -> Result<Self> {
        let n = grid.n;
        let hx2 = grid.h[0] * grid.h[0];
        let pre = if grid.dim() == 1 {
            Preconditioner::Line(TridiagFactor::new(n, 2.0 / hx2 + shift, -1.0 / hx2)?)
        } else {
            let hy2 = grid.h[1] * grid.h[1];
            let modes = (1..=n)
                .map(|j| {
                    let theta = j as f64 * std::f64::consts::PI / (n + 1) as f64;
                    let my = 2.0 * (1.0 - theta.cos()) / hy2;
                    TridiagFactor::new(n, 2.0 / hx2 + my + shift, -1.0 / hx2)
                })
                .collect::<Result<_>>()?;
            Preconditioner::Sine {
                dst: DctPlanner::new().plan_dst1(n),
                modes,
            }
        };
        Ok(Self {
            grid: grid.clone(),
            shift,
            pre,
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        laplacian_into(&self.grid, x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += self.shift * xi;
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let n = self.grid.n;
        match &self.pre {
            Preconditioner::Line(line) => {
                z.copy_from_slice(r);
                line.solve(z);
            }
            Preconditioner::Sine { dst, modes } => {
                // z holds the data with y-modes as rows
                let mut col = vec![0.0; n];
                for ix in 0..n {
                    for iy in 0..n {
                        col[iy] = r[iy * n + ix];
                    }
                    dst.process_dst1(&mut col);
                    for j in 0..n {
                        z[j * n + ix] = col[j];
                    }
                }
                for (line, f) in z.chunks_mut(n).zip(modes) {
                    f.solve(line);
                }
                let scale = 2.0 / (n + 1) as f64;
                for ix in 0..n {
                    for j in 0..n {
                        col[j] = z[j * n + ix];
                    }
                    dst.process_dst1(&mut col);
                    for iy in 0..n {
                        z[iy * n + ix] = scale * col[iy];
                    }
                }
            }
        }
    }

    /// Solves to `||b - Ax|| <= rel_tol * ||b||` starting from `x`.
    pub fn solve(
        &self,
        b: &[f64],
        x: &mut [f64],
        rel_tol: f64,
        max_iter: usize,
    ) -> Result<SolveStats> {
        let m = b.len();
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        let mut r = vec![0.0; m];
        self.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut rnorm = dot(&r, &r).sqrt();
        if rnorm <= rel_tol * bnorm {
            return Ok(SolveStats {
                iterations: 0,
                relative_residual: rnorm / bnorm,
            });
        }
        let mut z = vec![0.0; m];
        self.precondition(&r, &mut z);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; m];
        let mut best = (rnorm, x.to_vec());
        let mut stalled = 0;
        let mut iterations = max_iter;
        for it in 1..=max_iter {
            self.apply(&d, &mut q);
            let dq = dot(&d, &q);
            if !(dq > 0.0) {
                return Err(NlsError::NoConvergence {
                    what: "conjugate gradients (lost positivity)".into(),
                    iterations: it,
                    residual: rnorm / bnorm,
                });
            }
            let alpha = rz / dq;
            for i in 0..m {
                x[i] += alpha * d[i];
                r[i] -= alpha * q[i];
            }
            rnorm = dot(&r, &r).sqrt();
            if rnorm <= rel_tol * bnorm {
                return Ok(SolveStats {
                    iterations: it,
                    relative_residual: rnorm / bnorm,
                });
            }
            // below the rounding floor the recursion only adds noise
            if rnorm < 0.5 * best.0 {
                best.0 = rnorm;
                best.1.copy_from_slice(x);
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= STALL_ITERS {
                    iterations = it;
                    break;
                }
            }
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                d[i] = z[i] + beta * d[i];
            }
        }
        // Recompute the true residual; the recursive one drifts at tight tolerances.
        if best.0 < rnorm {
            x.copy_from_slice(&best.1);
        }
        self.apply(x, &mut q);
        let true_res = q
            .iter()
            .zip(b)
            .map(|(a, bi)| (bi - a) * (bi - a))
            .sum::<f64>()
            .sqrt()
            / bnorm;
        if true_res <= 10.0 * rel_tol.max(1e-14) {
            return Ok(SolveStats {
                iterations,
                relative_residual: true_res,
            });
        }
        Err(NlsError::NoConvergence {
            what: "conjugate gradients".into(),
            iterations,
            residual: true_res,
        })
    }
}

/// Default iteration cap for inner solves on a grid.
pub fn default_max_cg(grid: &Grid) -> usize {
    match grid.dim() {
        1 => 50,
        _ => 20 * grid.n + 200,
    }
}
