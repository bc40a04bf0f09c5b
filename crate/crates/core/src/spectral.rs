//! Lowest Dirichlet eigenpairs by inverse iteration with deflation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{NlsError, Result};
use crate::grid::{dot, laplacian_into, Field, Grid};
use crate::linalg::{default_max_cg, ShiftedLaplacian};

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Normalized to `l2_sq = 1`.
    pub vector: Field,
    /// `||A phi - value * phi||_2` (weighted).
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigenSummary {
    pub index: usize,
    pub value: f64,
    pub residual: f64,
}

impl EigenPair {
    pub fn summary(&self, index: usize) -> EigenSummary {
        EigenSummary {
            index,
            value: self.value,
            residual: self.residual,
        }
    }
}

const MAX_OUTER: usize = 2000;

/// The `k` smallest eigenpairs of the grid's Dirichlet Laplacian, ascending.
pub fn dirichlet_eigenpairs(grid: &Grid, k: usize, seed: u64) -> Result<Vec<EigenPair>> {
    if !(1..=4).contains(&k) {
        return Err(NlsError::InvalidParams(format!(
            "k must be in 1..=4, got {k}"
        )));
    }
    let op = ShiftedLaplacian::new(grid, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = grid.weight;
    let m = grid.len();
    let max_cg = default_max_cg(grid);
    let mut pairs: Vec<EigenPair> = Vec::with_capacity(k);
    let mut au = vec![0.0; m];
    // ||A|| eps, scaled: the attainable residual on fine grids
    let rounding_floor = 20.0 * f64::EPSILON * grid.laplacian_diagonal();

    for _ in 0..k {
        let mut x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if pairs.is_empty() {
            // a positive start keeps the iterate in the Perron direction
            x.iter_mut().for_each(|v| *v = v.abs() + 0.5);
        }
        deflate(&mut x, &pairs, w);
        normalize(&mut x, w);
        let mut rho = rayleigh(grid, &x, &mut au);
        let mut best_res = f64::INFINITY;
        let mut stall = 0usize;
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        for it in 1..=MAX_OUTER {
            iterations = it;
            // warm start: near convergence A^{-1} x ~ x / rho
            let mut y: Vec<f64> = x.iter().map(|v| v / rho).collect();
            op.solve(&x, &mut y, 1e-14, max_cg).or_else(|e| match e {
                NlsError::NoConvergence { residual, .. } if residual < 1e-9 => {
                    Ok(crate::linalg::SolveStats {
                        iterations: max_cg,
                        relative_residual: residual,
                    })
                }
                e => Err(e),
            })?;
            deflate(&mut y, &pairs, w);
            deflate(&mut y, &pairs, w);
            normalize(&mut y, w);
            x = y;
            rho = rayleigh(grid, &x, &mut au);
            residual = (w * au
                .iter()
                .zip(&x)
                .map(|(a, v)| (a - rho * v) * (a - rho * v))
                .sum::<f64>())
            .sqrt();
            if residual <= 1e-11 * rho {
                break;
            }
            // stagnation at the rounding floor of the stencil
            if residual < 0.9 * best_res {
                best_res = residual;
                stall = 0;
            } else {
                stall += 1;
                if stall >= 25 && residual <= (1e-8 * rho).max(rounding_floor) {
                    break;
                }
            }
            if it == MAX_OUTER {
                return Err(NlsError::NoConvergence {
                    what: "inverse iteration".into(),
                    iterations: it,
                    residual,
                });
            }
        }
        let mut vector = Field::new(grid, x)?;
        orient(&mut vector, pairs.is_empty());
        pairs.push(EigenPair {
            value: rho,
            vector,
            residual,
            iterations,
        });
    }
    Ok(pairs)
}

/// `(2/h^2)(1 - cos(j pi h / L))` summed over axes: the exact eigenvalue of the
/// stencil on a box for mode numbers `modes`.
pub fn exact_box_eigenvalue(grid: &Grid, modes: [usize; 2]) -> f64 {
    (0..grid.dim())
        .map(|a| {
            let h = grid.h[a];
            let l = grid.spec.length(a);
            2.0 / (h * h) * (1.0 - (modes[a] as f64 * std::f64::consts::PI * h / l).cos())
        })
        .sum()
}

fn rayleigh(grid: &Grid, x: &[f64], au: &mut [f64]) -> f64 {
    laplacian_into(grid, x, au);
    dot(au, x) / dot(x, x)
}

fn normalize(x: &mut [f64], w: f64) {
    let nrm = (w * dot(x, x)).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
}

fn deflate(x: &mut [f64], pairs: &[EigenPair], w: f64) {
    for pr in pairs {
        let c = w * dot(x, &pr.vector.values);
        for (xi, vi) in x.iter_mut().zip(&pr.vector.values) {
            *xi -= c * vi;
        }
    }
}

/// First mode: largest-magnitude entry positive. Others: first entry of
/// non-negligible size nonnegative.
fn orient(v: &mut Field, first: bool) {
    let flip = if first {
        let (mut best, mut val) = (0.0, 0.0);
        for &x in &v.values {
            if x.abs() > best {
                best = x.abs();
                val = x;
            }
        }
        val < 0.0
    } else {
        let cut = 1e-8 * v.max_abs();
        v.values
            .iter()
            .find(|x| x.abs() > cut)
            .is_some_and(|&x| x < 0.0)
    };
    if flip {
        v.scale_mut(-1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, norms, DomainSpec};
    use std::f64::consts::PI;

    #[test]
    fn interval_eigenvalues_match_closed_form() {
        let g = build_grid(DomainSpec::unit_interval(), 255).unwrap();
        let pairs = dirichlet_eigenpairs(&g, 4, 1).unwrap();
        for (j, pr) in pairs.iter().enumerate() {
            let exact = exact_box_eigenvalue(&g, [j + 1, 0]);
            assert!(
                (pr.value - exact).abs() <= 1e-10 * exact,
                "mode {j}: {} vs {exact}",
                pr.value
            );
            assert!(pr.residual <= 1e-10 * pr.value);
            assert!((pr.vector.l2_sq() - 1.0).abs() < 1e-12);
        }
        assert!((pairs[0].value - PI * PI).abs() / (PI * PI) < 1e-4);
        assert!(pairs[0].value < pairs[1].value);
    }

    #[test]
    fn first_mode_is_positive_and_orthogonal() {
        let g = build_grid(DomainSpec::interval(-1.0, 2.0), 100).unwrap();
        let pairs = dirichlet_eigenpairs(&g, 2, 3).unwrap();
        assert!(pairs[0].vector.values.iter().all(|&v| v > 0.0));
        assert!(pairs[0].vector.dot(&pairs[1].vector).unwrap().abs() < 1e-10);
        assert!(pairs[1].vector.values[0] >= 0.0);
        // Poincare: <Au,u> >= lambda_1 ||u||^2 on an arbitrary field
        let u = g.sample(|x, _| x * x * (2.0 - x) * (x + 1.0));
        let nm = norms(&u, 3.0);
        assert!(nm.grad_sq >= pairs[0].value * nm.l2_sq);
    }

    #[test]
    fn unit_square_modes() {
        let g = build_grid(DomainSpec::unit_square(), 48).unwrap();
        let pairs = dirichlet_eigenpairs(&g, 3, 5).unwrap();
        let l1 = exact_box_eigenvalue(&g, [1, 1]);
        let l2 = exact_box_eigenvalue(&g, [1, 2]);
        assert!((pairs[0].value - l1).abs() < 1e-9 * l1);
        // double eigenvalue: any basis of the eigenspace
        assert!((pairs[1].value - l2).abs() < 1e-9 * l2);
        assert!((pairs[2].value - l2).abs() < 1e-9 * l2);
        assert!((pairs[0].value - 2.0 * PI * PI).abs() / (2.0 * PI * PI) < 2e-3);
        assert!(pairs[1].vector.dot(&pairs[2].vector).unwrap().abs() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let g = build_grid(DomainSpec::unit_square(), 16).unwrap();
        let a = dirichlet_eigenpairs(&g, 2, 11).unwrap();
        let b = dirichlet_eigenpairs(&g, 2, 11).unwrap();
        assert_eq!(a[1].vector.values, b[1].vector.values);
    }

    #[test]
    fn rejects_bad_k() {
        let g = build_grid(DomainSpec::unit_interval(), 10).unwrap();
        assert!(dirichlet_eigenpairs(&g, 0, 0).is_err());
        assert!(dirichlet_eigenpairs(&g, 5, 0).is_err());
    }
}
