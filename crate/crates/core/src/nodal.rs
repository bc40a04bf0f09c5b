//! The nodal Nehari set and the nodal action-ground-state solver.
//!
//! On the grid the nodal set is `{u : J'(u)[u+] = J'(u)[u-] = 0}`. The stencil
//! couples the two parts across the nodal line, so the projection `P` solves a
//! 2x2 system for the two scalars instead of rescaling each part on its own;
//! the coupling vanishes with `h`.
//!
//! The solver minimizes `F(u) = J(P(u))`. At a point of the nodal set the
//! gradient of `F` coincides with that of `J`, so the descent direction is the
//! Sobolev gradient `(A + s)^{-1} (A u + lambda u - |u|^{p-2} u)`. For
//! `s = lambda` a unit step reproduces the fixed-point map
//! `u <- P((A + lambda)^{-1} |u|^{p-2} u)`; backtracking keeps `F` decreasing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{
    kappa, nonlinearity, ActionParams, Context, GroundState, Kind, SolverOptions, StartSummary,
};
use crate::error::{NlsError, Part, Result};
use crate::grid::{dot, laplacian_into, split, Field};
use crate::linalg::{default_max_cg, ShiftedLaplacian};

/// Quadratic and `L^p` data of the two parts of a sign-changing field.
#[derive(Debug, Clone, Copy)]
struct PartForms {
    /// `<A u+, u+> + lambda ||u+||^2`
    a: f64,
    /// `<A u-, u-> + lambda ||u-||^2`
    b: f64,
    /// `<A u+, u->`, nonnegative; zero in the continuum
    c: f64,
    lp_plus: f64,
    lp_minus: f64,
}

fn part_forms(u: &Field, params: ActionParams) -> Result<PartForms> {
    let (plus, minus) = split(u);
    if plus.is_zero() || minus.is_zero() {
        return Err(NlsError::NotSignChanging);
    }
    let w = u.grid.weight;
    let mut ap = vec![0.0; u.len()];
    let mut am = vec![0.0; u.len()];
    laplacian_into(&u.grid, &plus.values, &mut ap);
    laplacian_into(&u.grid, &minus.values, &mut am);
    let a = w * (dot(&ap, &plus.values) + params.lambda * dot(&plus.values, &plus.values));
    let b = w * (dot(&am, &minus.values) + params.lambda * dot(&minus.values, &minus.values));
    let c = w * dot(&ap, &minus.values);
    if !(a > 0.0) {
        return Err(NlsError::NonpositiveQuotient {
            part: Part::Positive,
            q: a,
        });
    }
    if !(b > 0.0) {
        return Err(NlsError::NonpositiveQuotient {
            part: Part::Negative,
            q: b,
        });
    }
    Ok(PartForms {
        a,
        b,
        c,
        lp_plus: plus.lp_p(params.p),
        lp_minus: minus.lp_p(params.p),
    })
}

/// Solves `s a + t c = s^{p-1} L+`, `t b + s c = t^{p-1} L-` for `s, t > 0`.
fn coupled_scales(f: &PartForms, p: f64) -> Result<(f64, f64)> {
    let e = 1.0 / (p - 2.0);
    let mut s = (f.a / f.lp_plus).powf(e);
    let mut t = (f.b / f.lp_minus).powf(e);
    if f.c == 0.0 {
        return Ok((s, t));
    }
    let scale = f.a.max(f.b);
    for _ in 0..100 {
        let sp = s.powf(p - 2.0);
        let tp = t.powf(p - 2.0);
        let r1 = s * f.a + t * f.c - s * sp * f.lp_plus;
        let r2 = t * f.b + s * f.c - t * tp * f.lp_minus;
        if r1.abs().max(r2.abs()) <= 1e-15 * scale * s.max(t) {
            return Ok((s, t));
        }
        let j11 = f.a - (p - 1.0) * sp * f.lp_plus;
        let j22 = f.b - (p - 1.0) * tp * f.lp_minus;
        let det = j11 * j22 - f.c * f.c;
        let (mut ds, mut dt) = if det != 0.0 {
            ((-r1 * j22 + r2 * f.c) / det, (-r2 * j11 + r1 * f.c) / det)
        } else {
            (f64::NAN, f64::NAN)
        };
        if !ds.is_finite() || !dt.is_finite() {
            // monotone fixed-point fallback
            ds = ((s * f.a + t * f.c) / (s * f.lp_plus)).powf(e) - s;
            dt = ((t * f.b + s * f.c) / (t * f.lp_minus)).powf(e) - t;
        }
        let mut step = 1.0;
        while s + step * ds <= 0.0 || t + step * dt <= 0.0 {
            step *= 0.5;
        }
        let (ns, nt) = (s + step * ds, t + step * dt);
        if (ns - s).abs() <= 1e-16 * s && (nt - t).abs() <= 1e-16 * t {
            return Ok((ns, nt));
        }
        s = ns;
        t = nt;
    }
    Err(NlsError::NoConvergence {
        what: "nodal projection scalars".into(),
        iterations: 100,
        residual: f64::NAN,
    })
}

/// Scalars `(s, t)` such that `s u+ + t u-` lies on the discrete nodal Nehari
/// set `{v : J'(v)[v+] = J'(v)[v-] = 0}`. In the continuum limit these are
/// the independent Nehari scalars `n(u+)`, `n(u-)`.
pub fn nodal_scales(u: &Field, params: ActionParams) -> Result<(f64, f64)> {
    coupled_scales(&part_forms(u, params)?, params.p)
}

/// `s u+ + t u-` with `(s, t)` from [`nodal_scales`].
pub fn nodal_project(u: &Field, params: ActionParams) -> Result<Field> {
    let (sp, sm) = nodal_scales(u, params)?;
    let values = u
        .values
        .iter()
        .map(|&v| if v > 0.0 { sp * v } else { sm * v })
        .collect();
    Field::new(&u.grid, values)
}

/// Action of the nodal projection of `u`: `kappa (s^p ||u+||_p^p + t^p ||u-||_p^p)`.
pub fn nodal_action_of(u: &Field, params: ActionParams) -> Result<f64> {
    let f = part_forms(u, params)?;
    let (s, t) = coupled_scales(&f, params.p)?;
    Ok(params.kappa() * (s.powf(params.p) * f.lp_plus + t.powf(params.p) * f.lp_minus))
}

/// `kappa (R(u+)^{p/(p-2)} + R(u-)^{p/(p-2)})` with the parts treated as
/// independent functions. Agrees with [`nodal_action_of`] up to the stencil's
/// coupling across the nodal line; never larger than it.
pub fn decoupled_nodal_action(u: &Field, params: ActionParams) -> Result<f64> {
    let f = part_forms(u, params)?;
    let e = params.p / (params.p - 2.0);
    let r = |q: f64, l: f64| (q / l.powf(2.0 / params.p)).powf(e);
    Ok(params.kappa() * (r(f.a, f.lp_plus) + r(f.b, f.lp_minus)))
}

/// Relative defects `|<Au, u+-> + lambda ||u+-||^2 - ||u+-||_p^p| / ||u+-||_p^p`.
pub fn part_nehari_defects(u: &Field, params: ActionParams) -> Result<(f64, f64)> {
    let f = part_forms(u, params)?;
    Ok((
        (f.a + f.c - f.lp_plus).abs() / f.lp_plus,
        (f.b + f.c - f.lp_minus).abs() / f.lp_minus,
    ))
}

/// Constant `C1 = kappa sum_pm (||phi2+-||_2 / ||phi2+-||_p)^{2p/(p-2)}` of the
/// upper bound `J_nod(lambda) <= C1 (lambda + lambda_2)^{p/(p-2)}`.
pub fn second_mode_constant(ctx: &Context, p: f64) -> f64 {
    let (plus, minus) = split(ctx.phi2());
    let e = 2.0 * p / (p - 2.0);
    let term = |f: &Field| (f.l2_sq().sqrt() / f.lp_p(p).powf(1.0 / p)).powf(e);
    kappa(p) * (term(&plus) + term(&minus))
}

/// Nodal action of the projected second eigenfunction.
pub fn second_mode_upper_bound(ctx: &Context, params: ActionParams) -> Result<f64> {
    nodal_action_of(ctx.phi2(), params)
}

/// Labelled initial fields for the multi-start.
pub fn nodal_starts(ctx: &Context, lambda: f64, count: usize, seed: u64) -> Vec<(String, Field)> {
    let grid = &ctx.grid;
    let spec = grid.spec;
    let (a, b) = (spec.lo[0], spec.hi[0]);
    let len = b - a;
    let mid = 0.5 * (a + b);
    let mut starts = vec![("phi2".to_string(), ctx.phi2().clone())];

    let mut odd = ctx.phi1().clone();
    for (k, v) in odd.values.iter_mut().enumerate() {
        let x = grid.coord(k)[0];
        *v *= if x < mid {
            1.0
        } else if x > mid {
            -1.0
        } else {
            0.0
        };
    }
    starts.push(("odd-phi1".to_string(), odd));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = 6;
    let coeffs: Vec<(f64, f64)> = (0..modes)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let ylen = if grid.dim() == 2 { spec.length(1) } else { 1.0 };
    let mut random = grid.sample(|x, y| {
        let s = (x - a) / len;
        let t = if grid.dim() == 2 {
            (y - spec.lo[1]) / ylen
        } else {
            0.5
        };
        coeffs
            .iter()
            .enumerate()
            .map(|(j, (cx, cy))| {
                let m = (j + 1) as f64 * std::f64::consts::PI;
                let ty = if grid.dim() == 2 {
                    (std::f64::consts::PI * t).sin()
                        + 0.5 * cy * (2.0 * std::f64::consts::PI * t).sin()
                } else {
                    1.0
                };
                cx * (m * s).sin() * ty / (j + 1) as f64
            })
            .sum()
    });
    // force a sign change by adding the second-mode profile
    let phi2 = ctx.phi2();
    let scale = random.max_abs() / phi2.max_abs();
    random = random.add_scaled(scale, phi2).unwrap_or(random);
    starts.push(("random".to_string(), random));

    let width = (len / 8.0).min(2.0 / lambda.max(1.0).sqrt());
    let (x1, x2) = (a + 0.25 * len, a + 0.75 * len);
    let yc = if grid.dim() == 2 {
        0.5 * (spec.lo[1] + spec.hi[1])
    } else {
        0.0
    };
    let ywidth = if grid.dim() == 2 {
        (ylen / 8.0).min(2.0 / lambda.max(1.0).sqrt())
    } else {
        1.0
    };
    let bumps = grid.sample(|x, y| {
        let gy = if grid.dim() == 2 {
            (-((y - yc) / ywidth).powi(2)).exp()
        } else {
            1.0
        };
        ((-((x - x1) / width).powi(2)).exp() - (-((x - x2) / width).powi(2)).exp()) * gy
    });
    starts.push(("bump-pair".to_string(), bumps));

    starts.truncate(count.clamp(3, 4));
    starts
}

/// Relative action difference below which two starts count as tied.
const TIE_REL: f64 = 1e-10;

/// Nodal action ground state from the multi-start set; best action wins,
/// ties go to the earlier start.
pub fn nodal_ground_state(
    ctx: &Context,
    params: ActionParams,
    opts: &SolverOptions,
) -> Result<GroundState> {
    params.check_dim(ctx.grid.dim())?;
    ctx.check_lambda(Kind::Nodal, params.lambda, opts)?;
    let starts = nodal_starts(ctx, params.lambda, opts.nodal_starts, opts.seed);
    let mut summaries = Vec::with_capacity(starts.len());
    let mut best: Option<(f64, Descent)> = None;
    let mut last_err = None;
    for (label, init) in starts {
        match descend(ctx, params, opts, &init) {
            Ok(d) => {
                let f = d.action;
                summaries.push(StartSummary {
                    label,
                    converged: true,
                    action: Some(f),
                    iterations: d.iterations,
                    message: None,
                });
                if best
                    .as_ref()
                    .is_none_or(|(bf, _)| f < *bf - TIE_REL * bf.abs())
                {
                    best = Some((f, d));
                }
            }
            Err(e) => {
                summaries.push(StartSummary {
                    label,
                    converged: false,
                    action: None,
                    iterations: 0,
                    message: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((_, d)) => Ok(GroundState::assemble(
            d.u,
            params,
            Kind::Nodal,
            d.iterations,
            true,
            summaries,
        )),
        None => Err(last_err.unwrap_or(NlsError::NoConvergence {
            what: "nodal ground state".into(),
            iterations: 0,
            residual: f64::INFINITY,
        })),
    }
}

/// Single descent from `init` (continuation warm start); falls back to the
/// multi-start if the warm start fails.
pub fn nodal_ground_state_from(
    ctx: &Context,
    params: ActionParams,
    opts: &SolverOptions,
    init: &Field,
) -> Result<GroundState> {
    params.check_dim(ctx.grid.dim())?;
    ctx.check_lambda(Kind::Nodal, params.lambda, opts)?;
    init.same_grid(ctx.phi1())?;
    match descend(ctx, params, opts, init) {
        Ok(d) => {
            let summary = StartSummary {
                label: "warm".into(),
                converged: true,
                action: Some(d.action),
                iterations: d.iterations,
                message: None,
            };
            Ok(GroundState::assemble(
                d.u,
                params,
                Kind::Nodal,
                d.iterations,
                true,
                vec![summary],
            ))
        }
        Err(_) => nodal_ground_state(ctx, params, opts),
    }
}

struct Descent {
    u: Field,
    action: f64,
    iterations: usize,
}

struct Evaluated {
    u: Field,
    action: f64,
    lp_plus: f64,
    lp_minus: f64,
}

fn evaluate(cand: &Field, params: ActionParams) -> Result<Evaluated> {
    let u = nodal_project(cand, params)?;
    let (plus, minus) = split(&u);
    let (lp, lm) = (plus.lp_p(params.p), minus.lp_p(params.p));
    // on the nodal set J = kappa ||u||_p^p
    Ok(Evaluated {
        action: params.kappa() * (lp + lm),
        lp_plus: lp.powf(1.0 / params.p),
        lp_minus: lm.powf(1.0 / params.p),
        u,
    })
}

/// `|a|^p - |b|^p` without cancellation when `a` and `b` are close.
fn pow_diff(a: f64, b: f64, p: f64) -> f64 {
    let (x, y) = (a.abs(), b.abs());
    if y == 0.0 || (a > 0.0) != (b > 0.0) {
        return x.powf(p) - y.powf(p);
    }
    y.powf(p) * (p * ((x - y) / y).ln_1p()).exp_m1()
}

/// `J(a) - J(b)`, accurate relative to the difference itself.
fn action_difference(a: &Field, b: &Field, params: ActionParams) -> f64 {
    let n = a.len();
    let sum: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let mut asum = vec![0.0; n];
    laplacian_into(&a.grid, &sum, &mut asum);
    let quad: f64 = asum
        .iter()
        .zip(&sum)
        .zip(&diff)
        .map(|((q, s), d)| (q + params.lambda * s) * d)
        .sum();
    let lp: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| pow_diff(x, y, params.p))
        .sum();
    a.grid.weight * (0.5 * quad - lp / params.p)
}

fn gradient(u: &Field, params: ActionParams) -> Vec<f64> {
    let mut g = vec![0.0; u.len()];
    laplacian_into(&u.grid, &u.values, &mut g);
    let f = nonlinearity(&u.values, params.p);
    for ((gi, &ui), fi) in g.iter_mut().zip(&u.values).zip(&f) {
        *gi += params.lambda * ui - fi;
    }
    g
}

fn check_floor(e: &Evaluated, floor: f64) -> Result<()> {
    for (norm, part) in [(e.lp_plus, Part::Positive), (e.lp_minus, Part::Negative)] {
        if norm < floor {
            return Err(NlsError::DegeneratePart { part, norm, floor });
        }
    }
    Ok(())
}

fn descend(
    ctx: &Context,
    params: ActionParams,
    opts: &SolverOptions,
    init: &Field,
) -> Result<Descent> {
    let grid = &ctx.grid;
    let w = grid.weight;
    let shift = if params.lambda >= -0.5 * ctx.lambda1() {
        params.lambda
    } else {
        -0.5 * ctx.lambda1()
    };
    let op = ShiftedLaplacian::new(grid, shift)?;
    let max_cg = default_max_cg(grid);

    let mut cur = evaluate(init, params)?;
    check_floor(&cur, opts.part_floor)?;
    let mut step: f64 = 1.0;
    let mut residual = f64::INFINITY;
    let mut d = vec![0.0; grid.len()];

    for it in 0..=opts.max_iter {
        let g = gradient(&cur.u, params);
        residual = (w * g.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if residual <= opts.tol {
            return Ok(Descent {
                u: cur.u,
                action: cur.action,
                iterations: it,
            });
        }
        if it == opts.max_iter {
            break;
        }
        d.iter_mut().for_each(|v| *v = 0.0);
        op.solve(&g, &mut d, 1e-12, max_cg)?;
        let slope = w * g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
        step = (2.0 * step).min(1.0);
        let mut accepted: Option<Evaluated> = None;
        while step >= 1e-12 {
            let cand_vals: Vec<f64> = cur
                .u
                .values
                .iter()
                .zip(&d)
                .map(|(u, di)| u - step * di)
                .collect();
            let cand = Field::new(grid, cand_vals)?;
            if let Ok(next) = evaluate(&cand, params) {
                if action_difference(&next.u, &cur.u, params) <= -1e-4 * step * slope {
                    accepted = Some(next);
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some(next) => {
                check_floor(&next, opts.part_floor)?;
                cur = next;
            }
            None => {
                return Err(NlsError::NoConvergence {
                    what: "nodal descent (line search stalled)".into(),
                    iterations: it,
                    residual,
                })
            }
        }
    }
    Err(NlsError::NoConvergence {
        what: "nodal descent".into(),
        iterations: opts.max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{action, ground_state};
    use crate::grid::{build_grid, norms, DomainSpec};

    fn ctx(n: usize) -> Context {
        Context::new(&build_grid(DomainSpec::unit_interval(), n).unwrap(), 0).unwrap()
    }

    #[test]
    fn projection_of_second_mode_is_symmetric() {
        let c = ctx(511);
        let prm = ActionParams::new(4.0, 0.0).unwrap();
        let (sp, sm) = nodal_scales(c.phi2(), prm).unwrap();
        // the halves are mirror images, so both scalings agree
        assert!((sp - sm).abs() < 1e-10 * sp);
        let w = nodal_project(c.phi2(), prm).unwrap();
        let (dp, dm) = part_nehari_defects(&w, prm).unwrap();
        assert!(dp <= 1e-10 && dm <= 1e-10);
        let direct = action(&w, prm);
        let formula = nodal_action_of(c.phi2(), prm).unwrap();
        assert!((direct - formula).abs() <= 1e-12 * direct);
        let nm = norms(&w, 4.0);
        assert!((direct - 0.25 * nm.lp_p).abs() <= 1e-12 * direct);
        // projecting again is the identity
        let (a, b) = nodal_scales(&w, prm).unwrap();
        assert!((a - 1.0).abs() < 1e-13 && (b - 1.0).abs() < 1e-13);
    }

    #[test]
    fn coupling_vanishes_under_refinement() {
        let prm = ActionParams::new(4.0, 0.0).unwrap();
        let mut gaps = Vec::new();
        for n in [127, 255, 511] {
            let g = build_grid(DomainSpec::unit_interval(), n).unwrap();
            let u = g.sample(|x, _| (2.0 * std::f64::consts::PI * x).sin() * (1.0 + 0.3 * x));
            let coupled = nodal_action_of(&u, prm).unwrap();
            let decoupled = decoupled_nodal_action(&u, prm).unwrap();
            assert!(decoupled <= coupled);
            gaps.push((coupled - decoupled) / coupled);
        }
        // the gap depends on where the node falls between grid points
        assert!(gaps.iter().all(|&g| g < 1e-2), "{gaps:?}");
    }

    #[test]
    fn positive_field_is_rejected() {
        let c = ctx(64);
        let prm = ActionParams::new(4.0, 0.0).unwrap();
        assert_eq!(nodal_project(c.phi1(), prm), Err(NlsError::NotSignChanging));
        assert_eq!(
            nodal_action_of(c.phi1(), prm),
            Err(NlsError::NotSignChanging)
        );
    }

    #[test]
    fn infeasible_part_is_reported() {
        let c = ctx(128);
        // below -lambda_2 the second mode's parts have Q < 0
        let prm = ActionParams::new(4.0, -1.2 * c.lambda2()).unwrap();
        assert!(matches!(
            nodal_project(c.phi2(), prm),
            Err(NlsError::NonpositiveQuotient { .. })
        ));
    }

    #[test]
    fn nodal_state_contracts() {
        let c = ctx(511);
        let opts = SolverOptions::default();
        for &lam in &[-20.0, 0.0, 30.0] {
            let prm = ActionParams::new(4.0, lam).unwrap();
            let gs = nodal_ground_state(&c, prm, &opts).unwrap();
            assert!(gs.residual <= opts.tol);
            assert!(gs.node_count >= 1);
            let (dp, dm) = part_nehari_defects(&gs.u, prm).unwrap();
            assert!(dp <= 1e-10 && dm <= 1e-10, "{dp} {dm}");
            let signed = ground_state(&c, prm.with_lambda(lam.max(-0.9 * c.lambda1())), &opts);
            if lam > -c.lambda1() {
                let j = signed.unwrap().action_value;
                assert!(gs.action_value >= 2.0 * j - 1e-8);
            }
            let upper = second_mode_upper_bound(&c, prm).unwrap();
            assert!(gs.action_value <= upper + 1e-12);
            assert!(gs.starts.len() >= 3);
        }
    }

    #[test]
    fn below_second_threshold_is_rejected() {
        let c = ctx(64);
        let prm = ActionParams::new(4.0, -c.lambda2()).unwrap();
        assert!(matches!(
            nodal_ground_state(&c, prm, &SolverOptions::default()),
            Err(NlsError::LambdaBelowThreshold { .. })
        ));
    }

    #[test]
    fn warm_start_agrees_with_cold() {
        let c = ctx(400);
        let opts = SolverOptions::default();
        let prm = ActionParams::new(6.0, 15.0).unwrap();
        let cold = nodal_ground_state(&c, prm, &opts).unwrap();
        let warm = nodal_ground_state_from(&c, prm.with_lambda(16.0), &opts, &cold.u).unwrap();
        let cold2 = nodal_ground_state(&c, prm.with_lambda(16.0), &opts).unwrap();
        assert!((warm.action_value - cold2.action_value).abs() < 1e-9 * cold2.action_value);
    }

    #[test]
    fn upper_bound_constant_matches_projection() {
        let c = ctx(300);
        let p = 6.0;
        let c1 = second_mode_constant(&c, p);
        for delta in [0.5, 2.0, 10.0] {
            let prm = ActionParams::new(p, -c.lambda2() + delta).unwrap();
            let bound = second_mode_upper_bound(&c, prm).unwrap();
            assert!(bound <= c1 * delta.powf(p / (p - 2.0)) * (1.0 + 1e-12));
        }
    }
}
