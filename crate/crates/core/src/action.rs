//! Action and energy functionals, the Nehari projection, and the positive
//! action-ground-state solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NlsError, Part, Result};
use crate::grid::{dot, laplacian_into, node_count, norms, split, Field, Grid};
use crate::linalg::{default_max_cg, ShiftedLaplacian};
use crate::spectral::{dirichlet_eigenpairs, EigenPair};

/// Signed (positive) or nodal (sign-changing) ground states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Signed,
    Nodal,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kind::Signed => write!(f, "signed"),
            Kind::Nodal => write!(f, "nodal"),
        }
    }
}

impl std::str::FromStr for Kind {
    type Err = NlsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Kind::Signed),
            "nodal" => Ok(Kind::Nodal),
            other => Err(NlsError::Parse(format!("unknown kind '{other}'"))),
        }
    }
}

/// Exponent and frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionParams {
    pub p: f64,
    pub lambda: f64,
}

/// Largest exponent accepted in 2D; `|u|^{p-2}` overflows quickly beyond it.
pub const MAX_P_2D: f64 = 10.0;

impl ActionParams {
    pub fn new(p: f64, lambda: f64) -> Result<Self> {
        if !(p > 2.0) || !p.is_finite() {
            return Err(NlsError::InvalidParams(format!(
                "need finite p > 2, got {p}"
            )));
        }
        if !lambda.is_finite() {
            return Err(NlsError::InvalidParams("lambda must be finite".into()));
        }
        Ok(Self { p, lambda })
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim == 2 && self.p > MAX_P_2D {
            return Err(NlsError::InvalidParams(format!(
                "p = {} above the 2D cap {MAX_P_2D}",
                self.p
            )));
        }
        Ok(())
    }

    /// `kappa = 1/2 - 1/p`.
    pub fn kappa(&self) -> f64 {
        kappa(self.p)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { p: self.p, lambda }
    }
}

pub fn kappa(p: f64) -> f64 {
    0.5 - 1.0 / p
}

/// L2-critical exponent `2 + 4/N`.
pub fn critical_exponent(dim: usize) -> f64 {
    2.0 + 4.0 / dim as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// First eigenfunction (signed) / second eigenfunction family (nodal).
    Eigen,
    /// Seeded random positive perturbation of the first eigenfunction.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Absolute tolerance on the discrete PDE residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative margin above the thresholds `-lambda_1`, `-lambda_2`.
    pub margin_rel: f64,
    pub seed: u64,
    pub init: Init,
    /// Floor on `||u+-||_p` during nodal descent.
    pub part_floor: f64,
    /// Number of nodal multi-starts (at least 3 are used).
    pub nodal_starts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 5000,
            margin_rel: 1e-6,
            seed: 0,
            init: Init::Eigen,
            part_floor: 1e-10,
            nodal_starts: 4,
        }
    }
}

/// A grid together with its two lowest Dirichlet eigenpairs.
#[derive(Debug, Clone)]
pub struct Context {
    pub grid: Grid,
    pub eigen: Vec<EigenPair>,
    pub seed: u64,
}

impl Context {
    pub fn new(grid: &Grid, seed: u64) -> Result<Self> {
        let eigen = dirichlet_eigenpairs(grid, 2, seed)?;
        Ok(Self {
            grid: grid.clone(),
            eigen,
            seed,
        })
    }

    pub fn lambda1(&self) -> f64 {
        self.eigen[0].value
    }

    pub fn lambda2(&self) -> f64 {
        self.eigen[1].value
    }

    pub fn phi1(&self) -> &Field {
        &self.eigen[0].vector
    }

    pub fn phi2(&self) -> &Field {
        &self.eigen[1].vector
    }

    /// `-lambda_1` for signed states, `-lambda_2` for nodal ones.
    pub fn threshold(&self, kind: Kind) -> f64 {
        match kind {
            Kind::Signed => -self.lambda1(),
            Kind::Nodal => -self.lambda2(),
        }
    }

    pub fn check_lambda(&self, kind: Kind, lambda: f64, opts: &SolverOptions) -> Result<()> {
        let threshold = self.threshold(kind);
        let margin = opts.margin_rel * threshold.abs();
        if lambda <= threshold + margin {
            return Err(NlsError::LambdaBelowThreshold {
                lambda,
                threshold,
                margin,
            });
        }
        Ok(())
    }
}

/// Per-part data of a nodal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartSummary {
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub action_plus: f64,
    pub action_minus: f64,
    pub lp_norm_plus: f64,
    pub lp_norm_minus: f64,
}

/// One nodal multi-start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub label: String,
    pub converged: bool,
    pub action: Option<f64>,
    pub iterations: usize,
    pub message: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub u: Field,
    pub params: ActionParams,
    pub kind: Kind,
    pub action_value: f64,
    pub mass: f64,
    pub energy: f64,
    pub lp_p: f64,
    pub grad_sq: f64,
    pub residual: f64,
    pub node_count: usize,
    pub iterations: usize,
    /// False if the monitored descent quantity ever increased beyond slack.
    pub descent_ok: bool,
    pub parts: Option<PartSummary>,
    pub starts: Vec<StartSummary>,
}

impl GroundState {
    pub(crate) fn assemble(
        u: Field,
        params: ActionParams,
        kind: Kind,
        iterations: usize,
        descent_ok: bool,
        starts: Vec<StartSummary>,
    ) -> Self {
        let nm = norms(&u, params.p);
        let action_value = action_from_norms(&nm, params);
        let parts = match kind {
            Kind::Signed => None,
            Kind::Nodal => {
                let (plus, minus) = split(&u);
                let (lp, lm) = (plus.lp_p(params.p), minus.lp_p(params.p));
                // on the nodal set the action splits as kappa ||u+-||_p^p
                Some(PartSummary {
                    mass_plus: plus.l2_sq(),
                    mass_minus: minus.l2_sq(),
                    action_plus: params.kappa() * lp,
                    action_minus: params.kappa() * lm,
                    lp_norm_plus: lp.powf(1.0 / params.p),
                    lp_norm_minus: lm.powf(1.0 / params.p),
                })
            }
        };
        Self {
            residual: pde_residual(&u, params),
            node_count: node_count(&u),
            action_value,
            mass: nm.l2_sq,
            energy: action_value - 0.5 * params.lambda * nm.l2_sq,
            lp_p: nm.lp_p,
            grad_sq: nm.grad_sq,
            u,
            params,
            kind,
            iterations,
            descent_ok,
            parts,
            starts,
        }
    }

    /// `|grad_sq + lambda l2_sq - lp_p| / lp_p`.
    pub fn nehari_defect(&self) -> f64 {
        (self.grad_sq + self.params.lambda * self.mass - self.lp_p).abs() / self.lp_p
    }
}

pub(crate) fn action_from_norms(nm: &crate::grid::Norms, params: ActionParams) -> f64 {
    0.5 * nm.grad_sq + 0.5 * params.lambda * nm.l2_sq - nm.lp_p / params.p
}

/// `J_lambda(u) = 1/2 <Au,u> + lambda/2 ||u||^2 - 1/p ||u||_p^p`.
pub fn action(u: &Field, params: ActionParams) -> f64 {
    action_from_norms(&norms(u, params.p), params)
}

/// `E(u) = 1/2 <Au,u> - 1/p ||u||_p^p`.
pub fn energy(u: &Field, p: f64) -> f64 {
    let nm = norms(u, p);
    0.5 * nm.grad_sq - nm.lp_p / p
}

pub(crate) fn nonlinearity(u: &[f64], p: f64) -> Vec<f64> {
    u.iter().map(|&v| v.abs().powf(p - 2.0) * v).collect()
}

/// Weighted L2 norm of `A u + lambda u - |u|^{p-2} u`.
pub fn pde_residual(u: &Field, params: ActionParams) -> f64 {
    let mut au = vec![0.0; u.len()];
    laplacian_into(&u.grid, &u.values, &mut au);
    let s: f64 = au
        .iter()
        .zip(&u.values)
        .map(|(a, &v)| {
            let r = a + params.lambda * v - v.abs().powf(params.p - 2.0) * v;
            r * r
        })
        .sum();
    (u.grid.weight * s).sqrt()
}

/// `Q(u) = <Au,u> + lambda ||u||^2`.
pub fn quadratic_form(u: &Field, lambda: f64) -> f64 {
    let nm = norms(u, 2.0);
    nm.grad_sq + lambda * nm.l2_sq
}

/// Degree-0 quotient `R(u) = Q(u) / ||u||_p^2`.
pub fn quotient(u: &Field, params: ActionParams) -> f64 {
    let nm = norms(u, params.p);
    (nm.grad_sq + params.lambda * nm.l2_sq) / nm.lp_p.powf(2.0 / params.p)
}

/// Scalar `n(u) = (Q / ||u||_p^p)^{1/(p-2)}` placing the ray of `u` on the Nehari manifold.
pub(crate) fn nehari_scale_part(u: &Field, params: ActionParams, part: Part) -> Result<f64> {
    let nm = norms(u, params.p);
    if nm.lp_p == 0.0 {
        return Err(NlsError::ZeroField);
    }
    let q = nm.grad_sq + params.lambda * nm.l2_sq;
    if !(q > 0.0) {
        return Err(NlsError::NonpositiveQuotient { part, q });
    }
    Ok((q / nm.lp_p).powf(1.0 / (params.p - 2.0)))
}

pub fn nehari_scale(u: &Field, params: ActionParams) -> Result<f64> {
    nehari_scale_part(u, params, Part::Whole)
}

/// `n(u) u`, which satisfies `<Av,v> + lambda ||v||^2 = ||v||_p^p`.
pub fn nehari_project(u: &Field, params: ActionParams) -> Result<Field> {
    Ok(u.scaled(nehari_scale(u, params)?))
}

/// Positive action ground state, started from the first eigenfunction (or a
/// seeded random positive field, per `opts.init`).
pub fn ground_state(
    ctx: &Context,
    params: ActionParams,
    opts: &SolverOptions,
) -> Result<GroundState> {
    let init = match opts.init {
        Init::Eigen => ctx.phi1().clone(),
        Init::Random => random_positive(ctx, opts.seed),
    };
    ground_state_from(ctx, params, opts, &init)
}

pub(crate) fn random_positive(ctx: &Context, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = ctx.phi1().clone();
    f.values
        .iter_mut()
        .for_each(|v| *v *= rng.gen_range(0.5..1.5));
    f
}

/// Normalized fixed-point iteration `(A + lambda) v = |u|^{p-2} u`, `u <- v / ||v||_p`,
/// started from `init`.
pub fn ground_state_from(
    ctx: &Context,
    params: ActionParams,
    opts: &SolverOptions,
    init: &Field,
) -> Result<GroundState> {
    let grid = &ctx.grid;
    init.same_grid(ctx.phi1())?;
    params.check_dim(grid.dim())?;
    ctx.check_lambda(Kind::Signed, params.lambda, opts)?;
    let p = params.p;
    let op = ShiftedLaplacian::new(grid, params.lambda)?;
    let max_cg = default_max_cg(grid);

    let mut u = init.clone();
    // the ground state has one sign; start from |init|
    u.values.iter_mut().for_each(|v| *v = v.abs());
    if u.is_zero() {
        return Err(NlsError::ZeroField);
    }
    normalize_lp(&mut u, p);
    let mut r = quotient(&u, params);
    let mut residual = f64::INFINITY;
    let mut descent_ok = true;
    let mut best = f64::INFINITY;
    let mut stall = 0usize;
    let mut polishes = 0usize;
    let mut iterations = opts.max_iter;

    for it in 1..=opts.max_iter {
        let f = nonlinearity(&u.values, p);
        // residuals are measured at the Nehari scale r^{1/(p-2)}
        let fnorm = (grid.weight * dot(&f, &f)).sqrt() * r.powf((p - 1.0) / (p - 2.0));
        let forcing = if residual.is_finite() {
            (1e-2 * residual / fnorm).clamp(1e-14, 1e-6)
        } else {
            1e-6
        };
        let mut v: Vec<f64> = u.values.iter().map(|x| x / r).collect();
        op.solve(&f, &mut v, forcing, max_cg)?;
        let mut cand = Field::new(grid, v.clone())?;
        normalize_lp(&mut cand, p);
        let mut r_new = quotient(&cand, params);
        if r_new > r * (1.0 + 1e-12) && forcing > 1e-14 {
            // inexact solve spoiled monotonicity; redo tightly
            op.solve(&f, &mut v, 1e-14, max_cg)?;
            cand = Field::new(grid, v)?;
            normalize_lp(&mut cand, p);
            r_new = quotient(&cand, params);
        }
        if r_new > r * (1.0 + 1e-12) {
            descent_ok = false;
        }
        u = cand;
        r = r_new;
        let mut w = nehari_project(&u, params)?;
        residual = pde_residual(&w, params);
        if residual < 0.9 * best {
            best = residual;
            stall = 0;
        } else {
            stall += 1;
        }
        if residual > opts.tol && stall >= POLISH_AFTER {
            stall = 0;
            polishes += 1;
            if let Some((polished, res)) = newton_polish(&w, params) {
                if res < residual {
                    w = polished;
                    residual = res;
                }
            }
            best = best.min(residual);
            if residual > opts.tol && polishes >= MAX_POLISHES {
                // stuck at the rounding floor of the stencil
                residual = best;
                iterations = it;
                break;
            }
        }
        if residual <= opts.tol {
            if w.values.iter().sum::<f64>() < 0.0 {
                w.scale_mut(-1.0);
            }
            return Ok(GroundState::assemble(
                w,
                params,
                Kind::Signed,
                it,
                descent_ok,
                Vec::new(),
            ));
        }
    }
    Err(NlsError::NoConvergence {
        what: "signed ground state".into(),
        iterations,
        residual,
    })
}

/// Stalled fixed-point iterations before a Newton polish is tried.
const POLISH_AFTER: usize = 10;
/// Failed polishes before the solver reports stagnation.
const MAX_POLISHES: usize = 5;

/// A few Newton steps on `A u + lambda u - |u|^{p-2} u = 0` in 1D, where the
/// Jacobian is tridiagonal. Returns the best iterate and its residual, or
/// `None` in 2D or on a zero pivot.
pub(crate) fn newton_polish(u: &Field, params: ActionParams) -> Option<(Field, f64)> {
    if u.grid.dim() != 1 {
        return None;
    }
    let (n, p, lambda) = (u.len(), params.p, params.lambda);
    let ih2 = 1.0 / (u.grid.h[0] * u.grid.h[0]);
    let mut best = (u.clone(), pde_residual(u, params));
    let mut cur = u.clone();
    let mut au = vec![0.0; n];
    for _ in 0..4 {
        laplacian_into(&cur.grid, &cur.values, &mut au);
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| {
                let v = cur.values[i];
                -(au[i] + lambda * v - v.abs().powf(p - 2.0) * v)
            })
            .collect();
        // Thomas algorithm on tridiag(-ih2, diag_i, -ih2)
        let mut c = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let diag = 2.0 * ih2 + lambda - (p - 1.0) * cur.values[i].abs().powf(p - 2.0);
            let d = if i == 0 { diag } else { diag + ih2 * c[i - 1] };
            if d == 0.0 || !d.is_finite() {
                return None;
            }
            c[i] = -ih2 / d;
            rhs[i] = (rhs[i] + if i == 0 { 0.0 } else { ih2 * prev }) / d;
            prev = rhs[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= c[i] * rhs[i + 1];
        }
        cur.values.iter_mut().zip(&rhs).for_each(|(v, d)| *v += d);
        let res = pde_residual(&cur, params);
        if !(res < best.1) {
            break;
        }
        best = (cur.clone(), res);
    }
    Some(best)
}

fn normalize_lp(u: &mut Field, p: f64) {
    let nrm = u.lp_p(p).powf(1.0 / p);
    u.scale_mut(1.0 / nrm);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec};
    use std::f64::consts::PI;

    fn unit_ctx(n: usize) -> Context {
        Context::new(&build_grid(DomainSpec::unit_interval(), n).unwrap(), 0).unwrap()
    }

    #[test]
    fn zero_field_values() {
        let g = build_grid(DomainSpec::unit_interval(), 16).unwrap();
        let z = g.zeros();
        let prm = ActionParams::new(4.0, 3.0).unwrap();
        assert_eq!(action(&z, prm), 0.0);
        assert_eq!(energy(&z, 4.0), 0.0);
        assert_eq!(pde_residual(&z, prm), 0.0);
        assert_eq!(nehari_project(&z, prm), Err(NlsError::ZeroField));
    }

    #[test]
    fn kappa_values() {
        assert!((kappa(6.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kappa(4.0), 0.25);
        assert_eq!(critical_exponent(1), 6.0);
        assert_eq!(critical_exponent(2), 4.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ActionParams::new(2.0, 0.0).is_err());
        assert!(ActionParams::new(f64::NAN, 0.0).is_err());
        assert!(ActionParams::new(12.0, 0.0).unwrap().check_dim(2).is_err());
        assert!(ActionParams::new(12.0, 0.0).unwrap().check_dim(1).is_ok());
    }

    #[test]
    fn energy_action_identity() {
        let g = build_grid(DomainSpec::unit_interval(), 40).unwrap();
        let u = g.sample(|x, _| x * (1.0 - x) * (3.0 * x).cos());
        for &lam in &[-5.0, 0.0, 7.5] {
            let prm = ActionParams::new(5.0, lam).unwrap();
            let lhs = energy(&u, 5.0);
            let rhs = action(&u, prm) - 0.5 * lam * u.l2_sq();
            assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn projection_of_first_mode() {
        // n_0(phi_1) = (pi^2 / (3/2))^{1/2} for phi_1 = sqrt(2) sin(pi x), p = 4
        let g = build_grid(DomainSpec::unit_interval(), 2047).unwrap();
        let phi = g.sample(|x, _| 2f64.sqrt() * (PI * x).sin());
        let prm = ActionParams::new(4.0, 0.0).unwrap();
        let n = nehari_scale(&phi, prm).unwrap();
        let expected = (PI * PI / 1.5).sqrt();
        assert!((n - expected).abs() / expected < 1e-6);
        let w = nehari_project(&phi, prm).unwrap();
        let nm = norms(&w, 4.0);
        assert!((nm.grad_sq - nm.lp_p).abs() <= 1e-12 * nm.lp_p);
        // already feasible: scale 1
        assert!((nehari_scale(&w, prm).unwrap() - 1.0).abs() < 1e-13);
        // J on Nehari = kappa ||u||_p^p, and pi^4/6 for this test function
        let j = action(&w, prm);
        assert!((j - 0.25 * nm.lp_p).abs() <= 1e-12 * j);
        assert!((j - PI.powi(4) / 6.0).abs() / j < 1e-5);
    }

    #[test]
    fn projection_fails_below_threshold() {
        let ctx = unit_ctx(200);
        let prm = ActionParams::new(4.0, -2.0 * ctx.lambda1()).unwrap();
        assert!(matches!(
            nehari_project(ctx.phi1(), prm),
            Err(NlsError::NonpositiveQuotient {
                part: Part::Whole,
                ..
            })
        ));
    }

    #[test]
    fn eigenfunction_is_not_a_solution() {
        let ctx = unit_ctx(100);
        let prm = ActionParams::new(4.0, -ctx.lambda1()).unwrap();
        assert!(pde_residual(ctx.phi1(), prm) > 1e-3);
    }

    #[test]
    fn ground_state_below_first_mode_bound() {
        let ctx = unit_ctx(1023);
        let prm = ActionParams::new(4.0, 0.0).unwrap();
        let gs = ground_state(&ctx, prm, &SolverOptions::default()).unwrap();
        let bound = action(&nehari_project(ctx.phi1(), prm).unwrap(), prm);
        assert!(gs.action_value < bound);
        assert!(gs.residual <= 1e-8);
        assert!(gs.nehari_defect() <= 1e-10);
        assert!((gs.action_value - gs.params.kappa() * gs.lp_p).abs() <= 1e-12 * gs.action_value);
        assert_eq!(gs.node_count, 0);
        assert!(gs.u.values.iter().all(|&v| v >= 0.0));
        assert!(gs.descent_ok);
        assert!((gs.energy - (gs.action_value - 0.0 * gs.mass)).abs() < 1e-15);
    }

    #[test]
    fn threshold_is_enforced() {
        let ctx = unit_ctx(64);
        let opts = SolverOptions::default();
        let prm = ActionParams::new(4.0, -ctx.lambda1()).unwrap();
        assert!(matches!(
            ground_state(&ctx, prm, &opts),
            Err(NlsError::LambdaBelowThreshold { .. })
        ));
    }

    #[test]
    fn level_vanishes_at_threshold() {
        let ctx = unit_ctx(255);
        let opts = SolverOptions::default();
        let mut prev = f64::INFINITY;
        for delta in [1.0, 0.1, 0.01, 0.001] {
            let prm = ActionParams::new(4.0, -ctx.lambda1() + delta).unwrap();
            let j = ground_state(&ctx, prm, &opts).unwrap().action_value;
            assert!(j < prev && j > 0.0);
            prev = j;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn initial_scaling_is_irrelevant() {
        let ctx = unit_ctx(300);
        let prm = ActionParams::new(6.0, 20.0).unwrap();
        let opts = SolverOptions::default();
        let a = ground_state_from(&ctx, prm, &opts, ctx.phi1()).unwrap();
        let b = ground_state_from(&ctx, prm, &opts, &ctx.phi1().scaled(37.0)).unwrap();
        let diff = a.u.add_scaled(-1.0, &b.u).unwrap().max_abs();
        assert!(diff < 1e-7 * a.u.max_abs());
        let mut ropts = opts;
        ropts.init = Init::Random;
        ropts.seed = 9;
        let c = ground_state(&ctx, prm, &ropts).unwrap();
        assert!((c.action_value - a.action_value).abs() < 1e-10 * a.action_value);
    }

    #[test]
    fn two_dimensional_ground_state() {
        let g = build_grid(DomainSpec::rectangle(0.0, 1.0, 0.0, 1.5), 24).unwrap();
        let ctx = Context::new(&g, 0).unwrap();
        let prm = ActionParams::new(4.0, 5.0).unwrap();
        let gs = ground_state(&ctx, prm, &SolverOptions::default()).unwrap();
        assert!(gs.residual <= 1e-8);
        assert_eq!(gs.node_count, 0);
        assert!(gs.nehari_defect() < 1e-10);
    }
}
