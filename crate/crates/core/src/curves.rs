//! Level curves `lambda -> J(lambda)` by continuation, the derivative-mass
//! relation, mass thresholds, large-`lambda` asymptotics, the critical mass
//! `mu_N` and the domain-exhaustion diagnostic.

use serde::{Deserialize, Serialize};

use crate::action::{
    critical_exponent, ground_state, ground_state_from, ActionParams, Context, GroundState, Kind,
    SolverOptions,
};
use crate::error::{NlsError, Result};
use crate::grid::{build_grid, DomainSpec, Field};
use crate::nodal::{nodal_ground_state, nodal_ground_state_from};

/// Relative warm/cold disagreement above which a sample is a jump candidate.
pub const JUMP_REL: f64 = 1e-6;
/// Every `CROSS_CHECK_EVERY`-th sample is re-solved from cold starts.
pub const CROSS_CHECK_EVERY: usize = 10;
/// A sweep aborts when more than this fraction of samples fail.
pub const MAX_FAIL_FRACTION: f64 = 0.2;

/// Cold ground state of the given kind.
pub fn solve_cold(
    ctx: &Context,
    kind: Kind,
    params: ActionParams,
    opts: &SolverOptions,
) -> Result<GroundState> {
    match kind {
        Kind::Signed => ground_state(ctx, params, opts),
        Kind::Nodal => nodal_ground_state(ctx, params, opts),
    }
}

/// Ground state of the given kind started from `init`.
pub fn solve_warm(
    ctx: &Context,
    kind: Kind,
    params: ActionParams,
    opts: &SolverOptions,
    init: &Field,
) -> Result<GroundState> {
    match kind {
        Kind::Signed => ground_state_from(ctx, params, opts, init),
        Kind::Nodal => nodal_ground_state_from(ctx, params, opts, init),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFlag {
    Ok,
    /// Warm and cold starts disagreed; the lower level was kept.
    Jump,
    Failed,
}

impl std::fmt::Display for SampleFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SampleFlag::Ok => "ok",
            SampleFlag::Jump => "jump",
            SampleFlag::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCurve {
    pub kind: Kind,
    pub p: f64,
    pub dim: usize,
    pub lambdas: Vec<f64>,
    /// `NaN` at failed samples.
    pub j: Vec<f64>,
    pub mass: Vec<f64>,
    /// Three-point differences, one-sided at the ends; `None` for fewer than
    /// three samples.
    pub dj: Option<Vec<f64>>,
    pub flags: Vec<SampleFlag>,
    /// Error messages of failed samples, by index.
    pub failures: Vec<(usize, String)>,
}

impl LevelCurve {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Indices of samples that did not fail.
    pub fn valid(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.flags[i] != SampleFlag::Failed)
            .collect()
    }

    /// Consecutive valid pairs `(i, k)` with `J[k] <= J[i]`.
    pub fn monotonicity_violations(&self) -> Vec<(usize, usize)> {
        let v = self.valid();
        v.windows(2)
            .filter(|w| self.j[w[1]] <= self.j[w[0]])
            .map(|w| (w[0], w[1]))
            .collect()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.monotonicity_violations().is_empty()
    }

    /// Builds a curve from precomputed samples and fills in `dj`.
    pub fn from_samples(
        kind: Kind,
        p: f64,
        dim: usize,
        lambdas: Vec<f64>,
        j: Vec<f64>,
        mass: Vec<f64>,
        flags: Vec<SampleFlag>,
    ) -> Result<Self> {
        let n = lambdas.len();
        if j.len() != n || mass.len() != n || flags.len() != n {
            return Err(NlsError::InvalidParams(
                "curve columns differ in length".into(),
            ));
        }
        check_ascending(&lambdas)?;
        let dj = central_differences(&lambdas, &j);
        Ok(Self {
            kind,
            p,
            dim,
            lambdas,
            j,
            mass,
            dj,
            flags,
            failures: Vec::new(),
        })
    }
}

fn check_ascending(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(NlsError::InvalidParams("empty lambda list".into()));
    }
    if lambdas.iter().any(|l| !l.is_finite()) || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NlsError::InvalidParams(
            "lambdas must be finite and strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Second-order differences on a nonuniform grid.
pub fn central_differences(x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    // derivative at x[c] of the parabola through points a, b, c
    let three = |i0: usize, i1: usize, i2: usize, at: usize| {
        let (x0, x1, x2) = (x[i0], x[i1], x[i2]);
        let xa = x[at];
        y[i0] * (2.0 * xa - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y[i1] * (2.0 * xa - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y[i2] * (2.0 * xa - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    Some(
        (0..n)
            .map(|i| {
                if i == 0 {
                    three(0, 1, 2, 0)
                } else if i == n - 1 {
                    three(n - 3, n - 2, n - 1, n - 1)
                } else {
                    three(i - 1, i, i + 1, i)
                }
            })
            .collect(),
    )
}

/// `n` points equally spaced on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` points log-spaced on `[a, b]`, `0 < a < b`.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Level curve by ascending warm-start continuation with periodic cold
/// cross-checks.
pub fn sweep(
    ctx: &Context,
    p: f64,
    lambdas: &[f64],
    kind: Kind,
    opts: &SolverOptions,
) -> Result<LevelCurve> {
    check_ascending(lambdas)?;
    ActionParams::new(p, lambdas[0])?.check_dim(ctx.grid.dim())?;
    ctx.check_lambda(kind, lambdas[0], opts)?;
    let n = lambdas.len();
    let mut j = vec![f64::NAN; n];
    let mut mass = vec![f64::NAN; n];
    let mut flags = vec![SampleFlag::Failed; n];
    let mut failures = Vec::new();
    let mut prev: Option<Field> = None;
    for (i, &lam) in lambdas.iter().enumerate() {
        let params = ActionParams::new(p, lam)?;
        let warm = prev
            .as_ref()
            .map(|u| solve_warm(ctx, kind, params, opts, u));
        let cold = if warm.is_none() || i % CROSS_CHECK_EVERY == 0 {
            Some(solve_cold(ctx, kind, params, opts))
        } else {
            None
        };
        let (chosen, flag) = match (warm, cold) {
            (Some(Ok(w)), Some(Ok(c))) => {
                let rel = (w.action_value - c.action_value).abs() / c.action_value.abs();
                let flag = if rel > JUMP_REL {
                    SampleFlag::Jump
                } else {
                    SampleFlag::Ok
                };
                let best = if c.action_value < w.action_value {
                    c
                } else {
                    w
                };
                (Ok(best), flag)
            }
            (Some(Ok(w)), _) | (None | Some(Err(_)), Some(Ok(w))) => (Ok(w), SampleFlag::Ok),
            (_, Some(Err(e))) | (Some(Err(e)), None) => (Err(e), SampleFlag::Failed),
            (None, None) => unreachable!("cold solve runs when there is no warm start"),
        };
        match chosen {
            Ok(gs) => {
                j[i] = gs.action_value;
                mass[i] = gs.mass;
                flags[i] = flag;
                prev = Some(gs.u);
            }
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    if failures.len() as f64 > MAX_FAIL_FRACTION * n as f64 {
        return Err(NlsError::SweepFailed {
            failed: failures.len(),
            total: n,
        });
    }
    let dj = central_differences(lambdas, &j);
    Ok(LevelCurve {
        kind,
        p,
        dim: ctx.grid.dim(),
        lambdas: lambdas.to_vec(),
        j,
        mass,
        dj,
        flags,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeMassReport {
    /// `(lambda, |2 dJ - mass| / mass)` per usable interior sample.
    pub errors: Vec<(f64, f64)>,
    pub median: Option<f64>,
    /// Over samples away from jump candidates.
    pub max: Option<f64>,
    /// Samples left out of `max`.
    pub excluded: Vec<usize>,
}

/// Compares `2 dJ` with the sampled masses at interior samples.
pub fn derivative_mass_check(curve: &LevelCurve) -> DerivativeMassReport {
    let mut report = DerivativeMassReport {
        errors: Vec::new(),
        median: None,
        max: None,
        excluded: Vec::new(),
    };
    let Some(dj) = curve.dj.as_ref() else {
        return report;
    };
    let n = curve.len();
    let near_jump = |i: usize| {
        (i.saturating_sub(1)..=(i + 1).min(n - 1)).any(|k| curve.flags[k] == SampleFlag::Jump)
    };
    let mut kept = Vec::new();
    for (i, &d) in dj.iter().enumerate().take(n - 1).skip(1) {
        let stencil_ok = (i - 1..=i + 1).all(|k| curve.flags[k] != SampleFlag::Failed);
        if !stencil_ok || !(curve.mass[i] > 0.0) {
            continue;
        }
        let err = (2.0 * d - curve.mass[i]).abs() / curve.mass[i];
        report.errors.push((curve.lambdas[i], err));
        if near_jump(i) {
            report.excluded.push(i);
        } else {
            kept.push(err);
        }
    }
    let mut all: Vec<f64> = report.errors.iter().map(|e| e.1).collect();
    report.median = median(&mut all);
    report.max = kept.into_iter().reduce(f64::max);
    report
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attained {
    Yes,
    No,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassThreshold {
    pub mu_p: f64,
    pub argmax_lambda: f64,
    pub attained: Attained,
    /// The sampled maximum is not at an end of the sweep.
    pub interior: bool,
    /// Masses at the first and last valid samples.
    pub end_masses: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ThresholdOutcome {
    Finite(MassThreshold),
    /// `p` below the critical exponent: masses are unbounded.
    SubcriticalUnbounded,
}

/// Relative change of the maximal mass at which refinement stops.
pub const THRESHOLD_REL: f64 = 1e-4;

/// `mu_p = sup mass = 2 sup dJ`, refined by golden-section search around the
/// sampled argmax.
pub fn mass_threshold(
    ctx: &Context,
    curve: &LevelCurve,
    opts: &SolverOptions,
) -> Result<ThresholdOutcome> {
    if curve.p < critical_exponent(curve.dim) - 1e-12 {
        return Ok(ThresholdOutcome::SubcriticalUnbounded);
    }
    let (lambda, mu, interior) = refine_max_mass(ctx, curve, opts, THRESHOLD_REL)?;
    let v = curve.valid();
    let attained = if (curve.p - critical_exponent(curve.dim)).abs() <= 1e-12 {
        Attained::Undetermined
    } else {
        Attained::Yes
    };
    Ok(ThresholdOutcome::Finite(MassThreshold {
        mu_p: mu,
        argmax_lambda: lambda,
        attained,
        interior,
        end_masses: (curve.mass[v[0]], curve.mass[*v.last().unwrap_or(&0)]),
    }))
}

/// Maximizes the mass over the sweep: `(lambda, mass, interior)`. Interior
/// maxima are refined until the maximum changes by less than `rel`.
pub fn refine_max_mass(
    ctx: &Context,
    curve: &LevelCurve,
    opts: &SolverOptions,
    rel: f64,
) -> Result<(f64, f64, bool)> {
    let v = curve.valid();
    let &k = v
        .iter()
        .max_by(|&&a, &&b| curve.mass[a].total_cmp(&curve.mass[b]))
        .ok_or_else(|| NlsError::InsufficientRange("no valid samples".into()))?;
    let pos = v.iter().position(|&i| i == k).unwrap_or(0);
    if pos == 0 || pos + 1 == v.len() {
        return Ok((curve.lambdas[k], curve.mass[k], false));
    }
    let mass_at = |lam: f64| -> Result<f64> {
        Ok(solve_cold(ctx, curve.kind, ActionParams::new(curve.p, lam)?, opts)?.mass)
    };
    let (mut a, mut b) = (curve.lambdas[v[pos - 1]], curve.lambdas[v[pos + 1]]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (mass_at(c)?, mass_at(d)?);
    let (mut best_l, mut best_m) = (curve.lambdas[k], curve.mass[k]);
    for _ in 0..80 {
        let prev = best_m;
        for (l, m) in [(c, fc), (d, fd)] {
            if m > best_m {
                best_l = l;
                best_m = m;
            }
        }
        if (best_m - prev).abs() <= rel * best_m && (b - a) <= 1e-3 * (b.abs() + 1.0) {
            break;
        }
        if (b - a) <= 1e-12 * (b.abs() + 1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = mass_at(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = mass_at(d)?;
        }
    }
    Ok((best_l, best_m, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    pub fn of(p: f64, dim: usize) -> Self {
        let pc = critical_exponent(dim);
        if (p - pc).abs() <= 1e-12 {
            Regime::Critical
        } else if p < pc {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Diverges,
    Plateau,
    Vanishes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub regime: Regime,
    pub kind: Kind,
    /// `(lambda, J / lambda)`.
    pub slope_samples: Vec<(f64, f64)>,
    pub masses: Vec<f64>,
    pub meshes: Vec<usize>,
    /// Log-log slope of `J / lambda` over the last decade.
    pub trend_slope: f64,
    pub classification: Trend,
    pub plateau_value: Option<f64>,
    /// Log-log slope of the mass over the last decade.
    pub growth_exponent_fit: Option<f64>,
    /// `(2 - alpha) / (p - 2)` with `alpha = N (p/2 - 1)`.
    pub growth_exponent_expected: f64,
}

/// Trend slopes within this band count as a plateau.
pub const PLATEAU_BAND: f64 = 0.05;

/// Solves on `spec` at each `lambda` with mesh `mesh(lambda)` and classifies
/// the behaviour of `J / lambda`.
pub fn asymptotic_classify(
    spec: DomainSpec,
    p: f64,
    kind: Kind,
    lambdas: &[f64],
    mesh: &dyn Fn(f64) -> usize,
    opts: &SolverOptions,
) -> Result<AsymptoticReport> {
    check_ascending(lambdas)?;
    let (lo, hi) = (lambdas[0], lambdas[lambdas.len() - 1]);
    if lambdas.len() < 4 || lo <= 0.0 || hi < 100.0 * lo {
        return Err(NlsError::InsufficientRange(
            "need at least 4 positive lambdas spanning two decades".into(),
        ));
    }
    let dim = spec.dim;
    let mut slope_samples = Vec::with_capacity(lambdas.len());
    let mut masses = Vec::with_capacity(lambdas.len());
    let mut meshes = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let n = mesh(lam);
        let ctx = Context::new(&build_grid(spec, n)?, opts.seed)?;
        let gs = solve_cold(&ctx, kind, ActionParams::new(p, lam)?, opts)?;
        slope_samples.push((lam, gs.action_value / lam));
        masses.push(gs.mass);
        meshes.push(n);
    }
    let tail: Vec<usize> = (0..lambdas.len())
        .filter(|&i| lambdas[i] >= hi / 10.0)
        .collect();
    let tail = if tail.len() >= 2 {
        tail
    } else {
        vec![lambdas.len() - 2, lambdas.len() - 1]
    };
    let logs = |ys: &dyn Fn(usize) -> f64| -> f64 {
        let pts: Vec<(f64, f64)> = tail
            .iter()
            .map(|&i| (lambdas[i].ln(), ys(i).ln()))
            .collect();
        ls_slope(&pts)
    };
    let trend_slope = logs(&|i| slope_samples[i].1);
    let growth = logs(&|i| masses[i]);
    let classification = if trend_slope > PLATEAU_BAND {
        Trend::Diverges
    } else if trend_slope < -PLATEAU_BAND {
        Trend::Vanishes
    } else {
        Trend::Plateau
    };
    let alpha = dim as f64 * (p / 2.0 - 1.0);
    Ok(AsymptoticReport {
        regime: Regime::of(p, dim),
        kind,
        plateau_value: (classification == Trend::Plateau)
            .then(|| slope_samples[slope_samples.len() - 1].1),
        slope_samples,
        masses,
        meshes,
        trend_slope,
        classification,
        growth_exponent_fit: Some(growth),
        growth_exponent_expected: (2.0 - alpha) / (p - 2.0),
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `mu_N = (sqrt 3) pi / 2`, the 1D soliton mass at the critical exponent.
pub fn mu_1_exact() -> f64 {
    3f64.sqrt() * std::f64::consts::PI / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuNEstimate {
    pub dim: usize,
    /// `(L, 2 J)` per box, `lambda = 1`.
    pub levels: Vec<(f64, f64)>,
    pub estimate: f64,
    /// Size of the last increment.
    pub error_bar: f64,
    /// `J(4) / J(1)` on the largest box.
    pub scaling_ratio: f64,
    /// `4^e` with `e = (2N - p(N-2)) / (2(p-2))`.
    pub scaling_expected: f64,
}

/// Relative error bar above which the box sequence counts as unconverged.
pub const MU_N_REL_TOL: f64 = 1e-2;

/// Estimates `mu_N` from ground states at `lambda = 1` on centred boxes of
/// growing side, all with mesh width close to `h`.
pub fn estimate_mu_n(
    dim: usize,
    boxes: &[f64],
    h: f64,
    opts: &SolverOptions,
) -> Result<MuNEstimate> {
    if !(1..=2).contains(&dim) {
        return Err(NlsError::InvalidParams(format!(
            "dimension must be 1 or 2, got {dim}"
        )));
    }
    estimate_mu_n_with(dim, critical_exponent(dim), boxes, h, opts)
}

/// As [`estimate_mu_n`] with an explicit exponent, which must be critical.
pub fn estimate_mu_n_with(
    dim: usize,
    p: f64,
    boxes: &[f64],
    h: f64,
    opts: &SolverOptions,
) -> Result<MuNEstimate> {
    let critical = critical_exponent(dim);
    if (p - critical).abs() > 1e-12 {
        return Err(NlsError::NotCritical { p, critical, dim });
    }
    if boxes.len() < 2 || boxes.windows(2).any(|w| w[1] <= w[0]) || boxes[0] <= 0.0 {
        return Err(NlsError::InvalidParams(
            "need at least two increasing box sides".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(NlsError::InvalidParams(
            "mesh width must be positive".into(),
        ));
    }
    let mut levels = Vec::with_capacity(boxes.len());
    let mut last_ctx = None;
    for &side in boxes {
        let n = ((side / h).round() as usize).saturating_sub(1).max(3);
        let ctx = Context::new(
            &build_grid(DomainSpec::centered_box(dim, side)?, n)?,
            opts.seed,
        )?;
        let j = ground_state(&ctx, ActionParams::new(p, 1.0)?, opts)?.action_value;
        levels.push((side, 2.0 * j));
        last_ctx = Some(ctx);
    }
    let k = levels.len();
    let estimate = levels[k - 1].1;
    let error_bar = (levels[k - 1].1 - levels[k - 2].1).abs();
    // Dirichlet boxes overestimate; the sequence must not increase
    let increasing = levels.windows(2).any(|w| w[1].1 > w[0].1 * (1.0 + 1e-9));
    if increasing || error_bar > MU_N_REL_TOL * estimate {
        return Err(NlsError::NoConvergence {
            what: "mu_N box sequence".into(),
            iterations: k,
            residual: error_bar / estimate,
        });
    }
    let ctx = last_ctx.ok_or_else(|| NlsError::InvalidParams("no boxes".into()))?;
    let j4 = ground_state(&ctx, ActionParams::new(p, 4.0)?, opts)?.action_value;
    let exponent = (2.0 * dim as f64 - p * (dim as f64 - 2.0)) / (2.0 * (p - 2.0));
    Ok(MuNEstimate {
        dim,
        levels,
        estimate,
        error_bar,
        scaling_ratio: j4 / (0.5 * estimate),
        scaling_expected: 4f64.powf(exponent),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionReport {
    pub base_level: f64,
    /// `(eps, removed cells per side, level)` in the given order.
    pub levels: Vec<(f64, usize, f64)>,
    /// `(level - base) / base`.
    pub gaps: Vec<f64>,
    pub monotone: bool,
    pub final_gap: f64,
}

/// Nodal levels on the shrunk boxes `Omega_eps`, each side moved inwards by
/// `eps / 2` of its length, compared with the level on `Omega`. The shrunk
/// grids are nested in the base grid with the same mesh width, so the
/// discrete levels inherit domain monotonicity.
pub fn exhaustion_test(
    spec: DomainSpec,
    n: usize,
    eps: &[f64],
    params: ActionParams,
    opts: &SolverOptions,
) -> Result<ExhaustionReport> {
    if eps.is_empty()
        || eps.iter().any(|&e| !(0.0..1.0).contains(&e))
        || eps.windows(2).any(|w| w[1] > w[0])
    {
        return Err(NlsError::InvalidParams(
            "eps list must be non-increasing in [0, 1)".into(),
        ));
    }
    let base_grid = build_grid(spec, n)?;
    let base_ctx = Context::new(&base_grid, opts.seed)?;
    let base_level = nodal_ground_state(&base_ctx, params, opts)?.action_value;
    let mut levels = Vec::with_capacity(eps.len());
    for &e in eps {
        let cells = (e * (n + 1) as f64 / 2.0).round() as usize;
        let level = if cells == 0 {
            base_level
        } else {
            let ctx = Context::new(&base_grid.shrunk_by_cells(cells)?, opts.seed)?;
            nodal_ground_state(&ctx, params, opts)?.action_value
        };
        levels.push((e, cells, level));
    }
    let gaps: Vec<f64> = levels
        .iter()
        .map(|l| (l.2 - base_level) / base_level)
        .collect();
    let tol = 1e-12;
    let monotone = levels.windows(2).all(|w| w[1].2 <= w[0].2 * (1.0 + tol))
        && levels.iter().all(|l| l.2 >= base_level * (1.0 - tol));
    Ok(ExhaustionReport {
        base_level,
        final_gap: *gaps.last().unwrap_or(&0.0),
        levels,
        gaps,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodal::second_mode_constant;

    fn ctx(n: usize) -> Context {
        Context::new(&build_grid(DomainSpec::unit_interval(), n).unwrap(), 0).unwrap()
    }

    #[test]
    fn differences_are_exact_for_quadratics() {
        let x = [0.0, 0.3, 1.0, 1.2, 2.5];
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t * t - t + 2.0).collect();
        let d = central_differences(&x, &y).unwrap();
        for (t, di) in x.iter().zip(&d) {
            assert!((di - (6.0 * t - 1.0)).abs() < 1e-12);
        }
        assert!(central_differences(&x[..2], &y[..2]).is_none());
    }

    #[test]
    fn signed_curve_is_increasing_and_satisfies_mass_law() {
        let c = ctx(255);
        let lams = linspace(-c.lambda1() + 0.5, 100.0, 100);
        let curve = sweep(&c, 4.0, &lams, Kind::Signed, &SolverOptions::default()).unwrap();
        assert!(curve.is_strictly_increasing());
        assert!(curve.j.iter().all(|&j| j > 0.0));
        assert!(curve.flags.iter().all(|f| *f == SampleFlag::Ok));
        let rep = derivative_mass_check(&curve);
        assert_eq!(rep.errors.len(), 98);
        assert!(rep.median.unwrap() <= 1e-2);
    }

    #[test]
    fn nodal_curve_dominates_twice_signed() {
        let c = ctx(255);
        let opts = SolverOptions::default();
        let lams = linspace(-c.lambda1() + 0.5, 100.0, 30);
        let s = sweep(&c, 4.0, &lams, Kind::Signed, &opts).unwrap();
        let nd = sweep(&c, 4.0, &lams, Kind::Nodal, &opts).unwrap();
        assert!(nd.is_strictly_increasing());
        for i in 0..lams.len() {
            assert!(nd.j[i] >= 2.0 * s.j[i] - 1e-8);
        }
    }

    #[test]
    fn single_sample_curve() {
        let c = ctx(63);
        let curve = sweep(&c, 4.0, &[1.0], Kind::Signed, &SolverOptions::default()).unwrap();
        assert!(curve.dj.is_none());
        let rep = derivative_mass_check(&curve);
        assert!(rep.errors.is_empty() && rep.median.is_none() && rep.max.is_none());
    }

    #[test]
    fn jump_samples_are_excluded_from_max() {
        let lams = linspace(0.0, 1.0, 11);
        let j: Vec<f64> = lams.iter().map(|l| l * l + 1.0).collect();
        let mut mass: Vec<f64> = lams.iter().map(|l| 4.0 * l + 0.1).collect();
        let mut flags = vec![SampleFlag::Ok; 11];
        mass[5] = 50.0;
        flags[5] = SampleFlag::Jump;
        let curve = LevelCurve::from_samples(Kind::Signed, 4.0, 1, lams, j, mass, flags).unwrap();
        let rep = derivative_mass_check(&curve);
        assert_eq!(rep.excluded, vec![4, 5, 6]);
        assert!(rep.max.unwrap() < 0.2);
    }

    #[test]
    fn bad_lambda_lists_are_rejected() {
        let c = ctx(31);
        let o = SolverOptions::default();
        assert!(sweep(&c, 4.0, &[], Kind::Signed, &o).is_err());
        assert!(sweep(&c, 4.0, &[2.0, 1.0], Kind::Signed, &o).is_err());
        assert!(matches!(
            sweep(&c, 4.0, &[-20.0, 1.0], Kind::Signed, &o),
            Err(NlsError::LambdaBelowThreshold { .. })
        ));
    }

    #[test]
    fn subcritical_threshold_is_unbounded() {
        let c = ctx(63);
        let curve = sweep(
            &c,
            4.0,
            &linspace(0.0, 10.0, 5),
            Kind::Signed,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(
            mass_threshold(&c, &curve, &SolverOptions::default()).unwrap(),
            ThresholdOutcome::SubcriticalUnbounded
        );
    }

    #[test]
    fn supercritical_threshold_is_interior() {
        let c = ctx(255);
        let opts = SolverOptions::default();
        let lams = linspace(-c.lambda1() + 0.5, 400.0, 60);
        let curve = sweep(&c, 8.0, &lams, Kind::Signed, &opts).unwrap();
        let ThresholdOutcome::Finite(t) = mass_threshold(&c, &curve, &opts).unwrap() else {
            panic!("expected a finite threshold");
        };
        assert!(t.interior && t.attained == Attained::Yes);
        let sampled = curve.mass.iter().cloned().fold(0.0, f64::max);
        assert!(t.mu_p >= sampled && t.mu_p <= sampled * 1.01);
        assert!(t.end_masses.0 < 0.5 * t.mu_p);
    }

    #[test]
    fn threshold_decay_from_second_mode() {
        let c = ctx(255);
        let p = 6.0;
        let c1 = second_mode_constant(&c, p);
        for delta in [1.0, 0.5, 0.25] {
            let prm = ActionParams::new(p, -c.lambda2() + delta).unwrap();
            let gs = nodal_ground_state(&c, prm, &SolverOptions::default()).unwrap();
            assert!(gs.action_value <= c1 * delta.powf(p / (p - 2.0)));
        }
    }

    #[test]
    fn mu_n_rejects_noncritical_and_small_boxes() {
        let o = SolverOptions::default();
        assert!(matches!(
            estimate_mu_n_with(1, 4.0, &[5.0, 10.0], 1.0 / 32.0, &o),
            Err(NlsError::NotCritical { .. })
        ));
        assert!(matches!(
            estimate_mu_n(1, &[1.0, 2.0], 1.0 / 32.0, &o),
            Err(NlsError::NoConvergence { .. })
        ));
    }

    #[test]
    fn mu_n_small_run() {
        let est = estimate_mu_n(1, &[10.0, 16.0], 1.0 / 32.0, &SolverOptions::default()).unwrap();
        assert!(
            (est.estimate - mu_1_exact()).abs() < 1e-2 * mu_1_exact(),
            "{est:?}"
        );
        assert!((est.scaling_ratio / est.scaling_expected - 1.0).abs() < 2e-2);
    }

    #[test]
    fn exhaustion_levels_decrease() {
        let prm = ActionParams::new(4.0, 10.0).unwrap();
        let rep = exhaustion_test(
            DomainSpec::unit_interval(),
            511,
            &[0.1, 0.05, 0.01, 0.0],
            prm,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(rep.monotone, "{rep:?}");
        assert_eq!(rep.final_gap, 0.0);
    }

    #[test]
    fn regimes() {
        assert_eq!(Regime::of(4.0, 1), Regime::Subcritical);
        assert_eq!(Regime::of(6.0, 1), Regime::Critical);
        assert_eq!(Regime::of(4.0, 2), Regime::Critical);
        assert_eq!(Regime::of(8.0, 1), Regime::Supercritical);
        let o = SolverOptions::default();
        assert!(matches!(
            asymptotic_classify(
                DomainSpec::unit_interval(),
                4.0,
                Kind::Signed,
                &[1.0, 2.0, 3.0, 4.0],
                &|_| 63,
                &o
            ),
            Err(NlsError::InsufficientRange(_))
        ));
    }
}
