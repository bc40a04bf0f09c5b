//! Subcommands. Each writes its artifacts under the configured output
//! directory and returns a [`Summary`] of named check verdicts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use nls_core::action::{critical_exponent, Context, GroundState, PartSummary, StartSummary};
use nls_core::curves::{
    derivative_mass_check, estimate_mu_n, exhaustion_test, linspace, mass_threshold, mu_1_exact,
    solve_cold, sweep, LevelCurve, ThresholdOutcome,
};
use nls_core::dump::{read_field, write_field};
use nls_core::nodal::part_nehari_defects;
use nls_core::normalized::{
    f_mu_profile, least_energy_certify, pohozaev_check, supercritical_bar,
    supercritical_lambda_bound,
};
use nls_core::spectral::dirichlet_eigenpairs;
use nls_core::{ActionParams, Kind};

use crate::config::RunConfig;
use crate::error::{core_exit_code, CliError, EXIT_CHECK, EXIT_CONFIG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Eig,
    Ground,
    Nodal,
    Sweep,
    MuN,
    Normalized,
    Pohozaev,
    Bound,
    Exhaustion,
    CheckAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Ground => "ground",
            Command::Nodal => "nodal",
            Command::Sweep => "sweep",
            Command::MuN => "mu-n",
            Command::Normalized => "normalized",
            Command::Pohozaev => "pohozaev",
            Command::Bound => "bound",
            Command::Exhaustion => "exhaustion",
            Command::CheckAll => "check-all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub command: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub error: Option<ErrorRecord>,
}

impl Summary {
    fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            seed,
            checks: Vec::new(),
            artifacts: Vec::new(),
            error: None,
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail: detail.into(),
        });
    }

    fn skip(&mut self, name: impl Into<String>, reason: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            verdict: Verdict::Skipped,
            detail: reason.into(),
        });
    }

    fn fail_with(&mut self, name: impl Into<String>, e: &CliError) {
        self.check(name, false, format!("{}: {e}", e.kind()));
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.verdict == Verdict::Fail)
            .collect()
    }

    /// 0 on success, otherwise the error's code or 3 for failed checks.
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) => e.exit_code,
            None if self.failed_checks().is_empty() => 0,
            None => EXIT_CHECK,
        }
    }
}

/// Runs `cmd` and writes `summary.json` into the output directory. Errors
/// are recorded in the summary rather than returned.
pub fn run(cmd: Command, cfg: &RunConfig) -> Summary {
    let mut summary = Summary::new(cmd.name(), cfg.seed);
    let result = cfg.validate().and_then(|_| {
        fs::create_dir_all(&cfg.out_dir)?;
        let mut out = Out::new(&cfg.out_dir);
        let r = dispatch(cmd, cfg, &mut out, &mut summary);
        summary.artifacts = out.written;
        r
    });
    if let Err(e) = result {
        summary.error = Some(ErrorRecord {
            kind: e.kind(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        });
    }
    if cfg.out_dir.is_dir() {
        if let Ok(text) = serde_json::to_string_pretty(&summary) {
            let _ = fs::write(cfg.out_dir.join("summary.json"), text + "\n");
        }
    }
    summary
}

fn dispatch(cmd: Command, cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    match cmd {
        Command::Eig => eig(cfg, out, s),
        Command::Ground => ground(cfg, Kind::Signed, out, s),
        Command::Nodal => ground(cfg, Kind::Nodal, out, s),
        Command::Sweep => sweep_cmd(cfg, out, s),
        Command::MuN => mu_n(cfg, out, s),
        Command::Normalized => normalized(cfg, out, s),
        Command::Pohozaev => pohozaev(cfg, out, s),
        Command::Bound => bound(cfg, out, s),
        Command::Exhaustion => exhaustion(cfg, out, s),
        Command::CheckAll => check_all(cfg, out, s),
    }
}

/// Single writer for the artifacts of one run.
struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    fn text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text)?;
        self.written.push(name.to_string());
        Ok(path)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

fn context(cfg: &RunConfig) -> Result<Context, CliError> {
    Ok(Context::new(&cfg.grid()?, cfg.seed)?)
}

/// Continuum Dirichlet eigenvalues of the configured box, ascending.
fn continuum_eigenvalues(cfg: &RunConfig, k: usize) -> Vec<f64> {
    let pi2 = std::f64::consts::PI.powi(2);
    let d = cfg.domain();
    let mut vals = Vec::new();
    for i in 1..=k + 1 {
        if cfg.dim == 1 {
            vals.push(pi2 * (i as f64 / d.length(0)).powi(2));
        } else {
            for j in 1..=k + 1 {
                vals.push(
                    pi2 * ((i as f64 / d.length(0)).powi(2) + (j as f64 / d.length(1)).powi(2)),
                );
            }
        }
    }
    vals.sort_by(f64::total_cmp);
    vals.truncate(k);
    vals
}

fn eig(cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct EigRecord {
        index: usize,
        value: f64,
        residual: f64,
        continuum: f64,
        relative_error: f64,
    }
    let pairs = dirichlet_eigenpairs(&cfg.grid()?, cfg.eig_k, cfg.seed)?;
    let exact = continuum_eigenvalues(cfg, cfg.eig_k);
    let records: Vec<EigRecord> = pairs
        .iter()
        .zip(&exact)
        .enumerate()
        .map(|(i, (pr, &ex))| EigRecord {
            index: i + 1,
            value: pr.value,
            residual: pr.residual,
            continuum: ex,
            relative_error: (pr.value - ex).abs() / ex,
        })
        .collect();
    let limit = if cfg.dim == 1 { 1e-4 } else { 1e-3 };
    for r in &records {
        s.check(
            format!("eigenvalue {} vs continuum", r.index),
            r.relative_error <= limit,
            format!("relative error {:e} (limit {limit:e})", r.relative_error),
        );
    }
    let mut csv = String::from("index,value,residual\n");
    for r in &records {
        let _ = writeln!(csv, "{},{:?},{:?}", r.index, r.value, r.residual);
    }
    out.text("eig.csv", &csv)?;
    out.json("eig.json", &records)?;
    Ok(())
}

/// Serializable summary of a ground state.
#[derive(Debug, Clone, Serialize)]
pub struct GroundRecord {
    pub kind: Kind,
    pub p: f64,
    pub lambda: f64,
    pub n: usize,
    pub action: f64,
    pub mass: f64,
    pub energy: f64,
    pub lp_p: f64,
    pub grad_sq: f64,
    pub residual: f64,
    pub nehari_defect: f64,
    pub node_count: usize,
    pub iterations: usize,
    pub parts: Option<PartSummary>,
    pub starts: Vec<StartSummary>,
}

impl GroundRecord {
    pub fn new(gs: &GroundState) -> Self {
        Self {
            kind: gs.kind,
            p: gs.params.p,
            lambda: gs.params.lambda,
            n: gs.u.grid.n,
            action: gs.action_value,
            mass: gs.mass,
            energy: gs.energy,
            lp_p: gs.lp_p,
            grad_sq: gs.grad_sq,
            residual: gs.residual,
            nehari_defect: gs.nehari_defect(),
            node_count: gs.node_count,
            iterations: gs.iterations,
            parts: gs.parts,
            starts: gs.starts.clone(),
        }
    }
}

fn ground(cfg: &RunConfig, kind: Kind, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let opts = cfg.solver_options();
    let params = ActionParams::new(cfg.p, cfg.lambda)?;
    let gs = solve_cold(&ctx, kind, params, &opts)?;
    s.check(
        "pde residual",
        gs.residual <= opts.tol,
        format!("{:e} (tol {:e})", gs.residual, opts.tol),
    );
    match kind {
        Kind::Signed => {
            s.check(
                "nehari identity",
                gs.nehari_defect() <= 1e-10,
                format!("{:e}", gs.nehari_defect()),
            );
            s.check(
                "one sign",
                gs.node_count == 0,
                format!("node count {}", gs.node_count),
            );
        }
        Kind::Nodal => {
            let (dp, dm) = part_nehari_defects(&gs.u, params)?;
            s.check(
                "partwise nehari identity",
                dp.max(dm) <= 1e-10,
                format!("{dp:e}, {dm:e}"),
            );
            s.check(
                "sign change",
                gs.node_count >= 1,
                format!("node count {}", gs.node_count),
            );
        }
    }
    out.json(&format!("{kind}.json"), &GroundRecord::new(&gs))?;
    if cfg.dump {
        out.text(&format!("{kind}.field"), &write_field(&gs.u))?;
    }
    Ok(())
}

fn sweep_lambdas(cfg: &RunConfig, ctx: &Context, kind: Kind) -> Vec<f64> {
    let lo = cfg.lambda_min.unwrap_or(ctx.threshold(kind) + 0.5);
    linspace(lo, cfg.lambda_max, cfg.samples)
}

/// `lambda,J,mass,dJ_central,flag` rows.
pub fn curve_csv(curve: &LevelCurve) -> String {
    let mut t = String::from("lambda,J,mass,dJ_central,flag\n");
    for i in 0..curve.len() {
        let dj = curve
            .dj
            .as_ref()
            .map_or(String::new(), |d| format!("{:?}", d[i]));
        let _ = writeln!(
            t,
            "{:?},{:?},{:?},{},{}",
            curve.lambdas[i], curve.j[i], curve.mass[i], dj, curve.flags[i]
        );
    }
    t
}

fn sweep_cmd(cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct SweepRecord<'a> {
        kind: Kind,
        p: f64,
        samples: usize,
        failures: &'a [(usize, String)],
        derivative_mass: nls_core::curves::DerivativeMassReport,
        threshold: Option<ThresholdOutcome>,
    }
    let ctx = context(cfg)?;
    let opts = cfg.solver_options();
    let lambdas = sweep_lambdas(cfg, &ctx, cfg.kind);
    let curve = sweep(&ctx, cfg.p, &lambdas, cfg.kind, &opts)?;
    out.text("curve.csv", &curve_csv(&curve))?;
    let viol = curve.monotonicity_violations();
    s.check(
        "strictly increasing",
        viol.is_empty(),
        format!("{} violations", viol.len()),
    );
    s.check(
        "positive levels",
        curve.valid().iter().all(|&i| curve.j[i] > 0.0),
        "J > 0 at every valid sample",
    );
    let dm = derivative_mass_check(&curve);
    match dm.median {
        Some(m) => s.check(
            "derivative-mass median",
            m <= 1e-2,
            format!("{m:e} over {} samples", dm.errors.len()),
        ),
        None => s.skip("derivative-mass median", "fewer than three samples"),
    }
    let threshold = if curve.len() >= 3 && cfg.p >= critical_exponent(cfg.dim) - 1e-12 {
        Some(mass_threshold(&ctx, &curve, &opts)?)
    } else if curve.len() >= 3 {
        Some(ThresholdOutcome::SubcriticalUnbounded)
    } else {
        None
    };
    out.json(
        "sweep.json",
        &SweepRecord {
            kind: cfg.kind,
            p: cfg.p,
            samples: curve.len(),
            failures: &curve.failures,
            derivative_mass: dm,
            threshold,
        },
    )?;
    Ok(())
}

fn mu_n(cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    let est = estimate_mu_n(cfg.dim, &cfg.boxes, cfg.box_h, &cfg.solver_options())?;
    if cfg.dim == 1 {
        let rel = (est.estimate - mu_1_exact()).abs() / mu_1_exact();
        s.check(
            "mu_1 vs soliton mass",
            rel <= 1e-2,
            format!("relative error {rel:e}"),
        );
    } else {
        s.skip("mu_N vs closed form", "no closed form for N = 2");
    }
    let rel = (est.scaling_ratio / est.scaling_expected - 1.0).abs();
    s.check(
        "whole-space scaling",
        rel <= 2e-2,
        format!(
            "J(4)/J(1) = {} vs {}",
            est.scaling_ratio, est.scaling_expected
        ),
    );
    out.json("mu_n.json", &est)?;
    Ok(())
}

fn normalized(cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let opts = cfg.solver_options();
    let lambdas = sweep_lambdas(cfg, &ctx, cfg.kind);
    let curve = sweep(&ctx, cfg.p, &lambdas, cfg.kind, &opts)?;
    out.text("curve.csv", &curve_csv(&curve))?;
    for (k, &mu) in cfg.mu.iter().enumerate() {
        let tag = format!("mu {mu:?}");
        let prof = f_mu_profile(&curve, mu);
        let mut t = String::from("lambda,f_mu\n");
        for (l, f) in prof.lambdas.iter().zip(&prof.f_values) {
            let _ = writeln!(t, "{l:?},{f:?}");
        }
        out.text(&format!("f_mu_{k}.csv"), &t)?;
        s.check(
            format!("{tag}: interior minimizer of f_mu"),
            prof.minimizer_interior,
            format!("discrete minimizer at lambda = {:?}", prof.minimizer_lambda),
        );
        match nls_core::normalized::solve_normalized(&ctx, &curve, mu, &opts) {
            Ok(sol) => {
                let rel = (sol.mu - mu).abs() / mu;
                s.check(
                    format!("{tag}: mass"),
                    rel <= 1e-6,
                    format!("relative mass error {rel:e}"),
                );
                s.check(
                    format!("{tag}: least among branches"),
                    sol.certification.is_least_among_found,
                    format!("{} branches", sol.certification.branches_examined),
                );
                match least_energy_certify(&ctx, &sol, &curve, &opts) {
                    Ok(rep) => s.check(
                        format!("{tag}: certification"),
                        rep.certified,
                        format!("action gap {:e}", rep.action_gap),
                    ),
                    Err(e) => s.fail_with(format!("{tag}: certification"), &e.into()),
                }
                out.json(&format!("normalized_{k}.json"), &sol)?;
                if cfg.dump {
                    out.text(&format!("normalized_{k}.field"), &write_field(sol.field()?))?;
                }
            }
            Err(e) if core_exit_code(&e) == EXIT_CHECK => {
                s.fail_with(format!("{tag}: solve"), &e.into())
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn pohozaev(cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("pohozaev needs an input field dump".into()))?;
    let u = read_field(&fs::read_to_string(path)?).map_err(|e| CliError::Config(e.to_string()))?;
    let params = ActionParams::new(cfg.p, cfg.lambda)?;
    let rep = pohozaev_check(&u, params)?;
    s.check(
        "pohozaev identity",
        rep.residual.abs() <= 1e-3,
        format!("relative residual {:e}", rep.residual),
    );
    match rep.energy_bound_holds {
        Some(ok) => s.check(
            "supercritical energy bound",
            ok,
            format!(
                "E = {} vs {} * |u|_p^p",
                rep.energy,
                rep.bound_coefficient.unwrap_or(f64::NAN)
            ),
        ),
        None => s.skip("supercritical energy bound", "p is not supercritical"),
    }
    out.json("pohozaev.json", &rep)?;
    Ok(())
}

fn bound(cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let opts = cfg.solver_options();
    let mu = match cfg.mu_bar_fraction {
        Some(f) => f * supercritical_bar(&ctx, cfg.p, &opts)?.1,
        None => *cfg
            .mu
            .first()
            .ok_or_else(|| CliError::Config("bound needs mu".into()))?,
    };
    match supercritical_lambda_bound(&ctx, cfg.p, mu, cfg.samples, &opts) {
        Ok(rep) => {
            s.check(
                "lambda below lambda_bar",
                rep.below_lambda_bar,
                format!(
                    "lambda = {:?}, lambda_bar = {:?}",
                    rep.solution.lambda, rep.lambda_bar
                ),
            );
            s.check(
                "energy gate",
                rep.energy_gate,
                format!(
                    "E = {:?} vs lambda_2 mu / 2 = {:?}",
                    rep.solution.energy,
                    0.5 * rep.lambda2 * rep.solution.mu
                ),
            );
            out.json("bound.json", &rep)?;
        }
        Err(e) if core_exit_code(&e) == EXIT_CHECK => s.fail_with("bound", &e.into()),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn exhaustion(cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    let params = ActionParams::new(cfg.p, cfg.lambda)?;
    let rep = exhaustion_test(cfg.domain(), cfg.n, &cfg.eps, params, &cfg.solver_options())?;
    s.check(
        "monotone levels",
        rep.monotone,
        format!("gaps {:?}", rep.gaps),
    );
    s.check(
        "final gap",
        rep.final_gap <= 1e-2,
        format!("{:e}", rep.final_gap),
    );
    out.json("exhaustion.json", &rep)?;
    Ok(())
}

/// The fixed battery run by `check-all`: (label, command, config edits).
pub fn battery(base: &RunConfig) -> Vec<(&'static str, Command, RunConfig)> {
    let mk = |edit: &dyn Fn(&mut RunConfig)| {
        let mut c = RunConfig::with_seed(base.seed);
        c.tol = base.tol;
        c.max_iter = base.max_iter;
        edit(&mut c);
        c
    };
    vec![
        ("eig-1d", Command::Eig, mk(&|c| c.n = 2047)),
        (
            "eig-2d",
            Command::Eig,
            mk(&|c| {
                c.dim = 2;
                c.n = 63;
                c.eig_k = 1;
            }),
        ),
        ("ground-p4", Command::Ground, mk(&|c| c.lambda = 10.0)),
        ("nodal-p4", Command::Nodal, mk(&|c| c.lambda = 10.0)),
        ("sweep-signed-p4", Command::Sweep, mk(&|c| c.samples = 60)),
        (
            "sweep-nodal-p4",
            Command::Sweep,
            mk(&|c| {
                c.samples = 60;
                c.kind = Kind::Nodal;
            }),
        ),
        (
            "sweep-signed-p8",
            Command::Sweep,
            mk(&|c| {
                c.p = 8.0;
                c.samples = 60;
                c.lambda_max = 400.0;
            }),
        ),
        (
            "mu-n",
            Command::MuN,
            mk(&|c| {
                c.boxes = vec![10.0, 20.0];
                c.box_h = 1.0 / 32.0;
            }),
        ),
        (
            "normalized-signed-p4",
            Command::Normalized,
            mk(&|c| {
                c.samples = 40;
                c.lambda_max = 60.0;
            }),
        ),
        (
            "normalized-nodal-p4",
            Command::Normalized,
            mk(&|c| {
                c.samples = 40;
                c.lambda_max = 60.0;
                c.mu = vec![10.0];
                c.kind = Kind::Nodal;
            }),
        ),
        (
            "ground-p8",
            Command::Ground,
            mk(&|c| {
                c.p = 8.0;
                c.lambda = 10.0;
                c.n = 1023;
                c.dump = true;
            }),
        ),
        (
            "bound-p8",
            Command::Bound,
            mk(&|c| {
                c.p = 8.0;
                c.mu_bar_fraction = Some(0.5);
                c.samples = 60;
            }),
        ),
        (
            "exhaustion-p4",
            Command::Exhaustion,
            mk(&|c| {
                c.n = 511;
                c.lambda = 10.0;
            }),
        ),
    ]
}

fn check_all(cfg: &RunConfig, out: &mut Out, s: &mut Summary) -> Result<(), CliError> {
    let mut stages = battery(cfg);
    // the identity check reads the dump written by the p = 8 ground state
    let mut pz = RunConfig::with_seed(cfg.seed);
    pz.p = 8.0;
    pz.lambda = 10.0;
    pz.input = Some(cfg.out_dir.join("ground-p8").join("signed.field"));
    stages.push(("pohozaev-p8", Command::Pohozaev, pz));
    for (label, cmd, mut sub) in stages {
        sub.out_dir = cfg.out_dir.join(label);
        let r = run(cmd, &sub);
        for a in &r.artifacts {
            out.written.push(format!("{label}/{a}"));
        }
        out.written.push(format!("{label}/summary.json"));
        for c in r.checks {
            s.checks.push(Check {
                name: format!("{label}: {}", c.name),
                ..c
            });
        }
        if let Some(e) = r.error {
            s.check(
                format!("{label}: run"),
                false,
                format!("{}: {}", e.kind, e.message),
            );
            if e.exit_code == EXIT_CONFIG {
                return Err(CliError::Config(format!("stage {label}: {}", e.message)));
            }
        }
    }
    Ok(())
}
