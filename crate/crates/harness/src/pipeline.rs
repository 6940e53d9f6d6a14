//! The experiments behind each subcommand. Every function is deterministic
//! in `(config, seed)`; the worker count only changes the schedule.

use std::path::PathBuf;

use bpre::bpre::{iterate_pgf, mobius_composition, simulate_population, survival_curve};
use bpre::env::{sample_environment, EnvironmentModel};
use bpre::estimators::{
    conditioned_ratio, estimate_theta, small_deviation_ratio, survival_pass, tower_comparison, verify_survival,
    verify_theorem, ConditionedRatio, CorollaryReport, SurvivalReport, TheoremReport, ThetaReport, TowerReport,
};
use bpre::stats::{loglog_slope, merged_se, MCEstimate};
use bpre::walk::{
    estimate_u, estimate_v, harmonicity_u, harmonicity_v, prob_positive, EventEstimate, HarmonicityCheck,
    RenewalTable, CSV_SCHEMA,
};
use bpre::{StableParams, Streams};
use serde::Serialize;

use crate::config::GateSpec;
use crate::gates::Gate;
use crate::output::RunDir;
use crate::{ExperimentConfig, HarnessError};

type Result<T> = std::result::Result<T, HarnessError>;

/// Stream tags of the independent stages.
mod tag {
    pub const U: u64 = 1;
    pub const V: u64 = 2;
    pub const SURVIVAL: u64 = 3;
    pub const THETA: u64 = 4;
    pub const DEVIATION: u64 = 5;
    pub const CONDITIONED: u64 = 6;
    pub const RHO: u64 = 7;
    pub const HARMONICITY: u64 = 8;
    pub const TOWER: u64 = 9;
    pub const ORACLE: u64 = 10;
    pub const SIMULATE: u64 = 11;
}

pub const VERIFY_CSV_SCHEMA: &str = "verify-series/1";
pub const VERIFY_CSV_HEADER: &str = "n,quantity,estimate,std_error";
pub const THETA_CSV_SCHEMA: &str = "theta-terms/1";
pub const THETA_CSV_HEADER: &str = "j,theta_j,std_error,p_tau,p_tau_std_error,tail_mass,partial_sum";
pub const TRAJECTORY_CSV_SCHEMA: &str = "trajectories/1";
pub const TRAJECTORY_CSV_HEADER: &str = "trajectory,generation,log_mean,walk,quenched_survival,population";

pub struct Context {
    pub cfg: ExperimentConfig,
    pub streams: Streams,
    pub stable: StableParams,
    pub model: EnvironmentModel,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Context {
            streams: Streams::new(cfg.seed),
            stable: cfg.model.stable()?,
            model: cfg.model.environment()?,
            cfg: cfg.clone(),
        })
    }

    fn stream(&self, t: u64) -> Streams {
        self.streams.child(t)
    }

    fn workers(&self) -> usize {
        self.cfg.workers
    }

    fn gates(&self) -> &GateSpec {
        &self.cfg.gates
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Tables {
    pub u: RenewalTable,
    pub v: RenewalTable,
    /// Strict `V`, on the same paths as `v`.
    pub v_strict: Option<RenewalTable>,
}

pub fn build_u_table(ctx: &Context) -> Result<RenewalTable> {
    let t = &ctx.cfg.tables;
    Ok(estimate_u(&ctx.stable, &t.u_grid.points()?, t.n_max, t.paths, &ctx.stream(tag::U), ctx.workers())?)
}

pub fn build_tables(ctx: &Context) -> Result<Tables> {
    let t = &ctx.cfg.tables;
    let u = build_u_table(ctx)?;
    let v_grid = t.v_grid.points()?;
    let v = estimate_v(&ctx.stable, &v_grid, t.n_max, t.paths, &ctx.stream(tag::V), ctx.workers(), false)?;
    let v_strict = if t.strict_v {
        Some(estimate_v(&ctx.stable, &v_grid, t.n_max, t.paths, &ctx.stream(tag::V), ctx.workers(), true)?)
    } else {
        None
    };
    Ok(Tables { u, v, v_strict })
}

pub fn write_tables(run: &RunDir, tables: &Tables) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let named = [("u_table", Some(&tables.u)), ("v_table", Some(&tables.v)), ("v_strict_table", tables.v_strict.as_ref())];
    for (name, table) in named {
        let Some(table) = table else { continue };
        let mut csv = Vec::new();
        table.write_csv(&mut csv, &run.csv_preamble(CSV_SCHEMA))?;
        out.push(run.write(&format!("{name}.csv"), &csv)?);
        out.push(run.write_json(&format!("{name}.json"), CSV_SCHEMA, &table.sidecar())?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaOutcome {
    pub report: ThetaReport,
    pub gates: Vec<Gate>,
}

pub fn run_theta(ctx: &Context, u: &RenewalTable) -> Result<ThetaOutcome> {
    let report = estimate_theta(&ctx.model, u, &ctx.cfg.theta, &ctx.stream(tag::THETA), ctx.workers())?;
    let gates = theta_gates(&report, ctx.gates());
    Ok(ThetaOutcome { report, gates })
}

/// `Θ̂(j) ≤ P̂(τ_j = j) + k SE`, nondecreasing partial sums and `Θ̂ > 0`
/// with a confidence interval excluding zero.
pub fn theta_gates(r: &ThetaReport, g: &GateSpec) -> Vec<Gate> {
    let worst = r
        .terms
        .iter()
        .map(|t| (t.value.value - t.p_tau.value) / t.p_tau.std_error.max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    let bound = r
        .terms
        .iter()
        .all(|t| t.value.value <= t.p_tau.value + g.structure_se * t.p_tau.std_error);
    let monotone = r.partial_sums.windows(2).all(|w| w[1] >= w[0]);
    let lower = r.value.value - g.ci_z * r.value.std_error;
    let rel = r.value.relative_error();
    vec![
        Gate::new(
            "theta.term_bound",
            bound,
            format!("max (Θ(j) - P(τ_j = j)) / SE = {worst:.3}, limit {}", g.structure_se),
        ),
        Gate::new("theta.partial_sums", monotone, format!("partial sums {:?}", r.partial_sums)),
        Gate::with_precision(
            "theta.positive",
            lower > 0.0,
            rel,
            g.max_relative_se,
            format!("Θ = {:.5} ± {:.5}", r.value.value, r.value.std_error),
        ),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionedCheck {
    pub n: usize,
    pub k: u64,
    pub ratio: ConditionedRatio,
    /// `E⁺[1 - F_{0,m}(0)^k]` from the `Θ` estimator.
    pub target: MCEstimate,
    pub diff: f64,
    pub merged_se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOutcome {
    pub survival: SurvivalReport,
    pub theorem: TheoremReport,
    pub deviation: CorollaryReport,
    pub conditioned: Vec<ConditionedCheck>,
    pub theta: ThetaOutcome,
    pub gates: Vec<Gate>,
}

pub fn run_verify(ctx: &Context, tables: &Tables) -> Result<VerifyOutcome> {
    let cfg = &ctx.cfg;
    let v = &cfg.verify;
    let g = ctx.gates();
    let theta = run_theta(ctx, &tables.u)?;
    let pass = survival_pass(&ctx.model, &v.n_list, &cfg.phi, v.paths, &ctx.stream(tag::SURVIVAL), ctx.workers())?;
    let survival = verify_survival(&pass);
    let theorem = verify_theorem(&ctx.model, &pass, &tables.v, Some(&theta.report.value))?;
    let deviation = small_deviation_ratio(
        &ctx.stable,
        &v.n_list,
        v.deviation_scale,
        v.deviation_eta,
        &tables.v,
        v.deviation_paths,
        &ctx.stream(tag::DEVIATION),
        ctx.workers(),
    )?;
    let conditioned: Vec<ConditionedCheck> = v
        .conditioned_k
        .iter()
        .map(|&k| -> Result<ConditionedCheck> {
            let ratio = conditioned_ratio(
                &ctx.model,
                v.conditioned_n,
                &cfg.phi,
                k,
                v.conditioned_paths,
                &ctx.stream(tag::CONDITIONED).child(k),
                ctx.workers(),
            )?;
            let target = theta.report.plus.estimate(k as usize);
            Ok(ConditionedCheck {
                n: v.conditioned_n,
                k,
                diff: ratio.estimate.value - target.value,
                merged_se: merged_se(ratio.estimate.std_error, target.std_error),
                ratio,
                target,
            })
        })
        .collect::<Result<_>>()?;

    let mut gates = Vec::new();
    let max_rel = |rows: &[bpre::estimators::RatioRow]| {
        rows.iter().map(|r| r.ratio_se / r.ratio).fold(0.0, f64::max)
    };
    let rel = max_rel(&theorem.rows);
    gates.push(Gate::with_precision(
        "theorem.positivity",
        theorem.rows.iter().all(|r| r.ci_excludes_zero(g.ci_z)),
        rel,
        g.max_relative_se,
        format!(
            "r_n = {:?}",
            theorem.rows.iter().map(|r| (r.n, r.ratio, r.ratio_se)).collect::<Vec<_>>()
        ),
    ));
    gates.push(Gate::with_precision(
        "theorem.flatness",
        theorem.flatness < g.flatness_max,
        rel,
        g.max_relative_se,
        format!("max r_n / min r_n = {:.4}, limit {}", theorem.flatness, g.flatness_max),
    ));
    let (diff, mse) = (theorem.diff.unwrap_or(f64::NAN), theorem.merged_se.unwrap_or(f64::NAN));
    gates.push(Gate::with_precision(
        "theorem.theta_agreement",
        diff.abs() < g.theta_agreement_se * mse,
        mse / theorem.mean_ratio,
        g.max_relative_se,
        format!(
            "r̄ = {:.5} ± {:.5}, Θ = {:.5} ± {:.5}, |diff| / merged SE = {:.2}, limit {}",
            theorem.mean_ratio,
            theorem.mean_ratio_se,
            theta.report.value.value,
            theta.report.value.std_error,
            diff.abs() / mse,
            g.theta_agreement_se
        ),
    ));
    let srel = survival.rows.iter().map(|r| r.ratio_se / r.ratio).fold(0.0, f64::max);
    gates.push(Gate::with_precision(
        "survival.flatness",
        survival.flatness < g.survival_variation_max,
        srel,
        g.max_relative_se,
        format!(
            "P(Z_n > 0) / P(L_n >= 0) = {:?}, max/min - 1 = {:.4}",
            survival.rows.iter().map(|r| (r.n, r.ratio)).collect::<Vec<_>>(),
            survival.flatness
        ),
    ));
    let drel = max_rel(&deviation.rows);
    gates.push(Gate::with_precision(
        "deviation.variation",
        deviation.consecutive_variation < g.deviation_variation_max
            && deviation.rows.iter().all(|r| r.ci_excludes_zero(g.ci_z)),
        drel,
        g.max_relative_se,
        format!(
            "ratios {:?}, largest consecutive change {:.4}, limit {}",
            deviation.rows.iter().map(|r| (r.n, r.ratio)).collect::<Vec<_>>(),
            deviation.consecutive_variation,
            g.deviation_variation_max
        ),
    ));
    for c in &conditioned {
        gates.push(Gate::with_precision(
            &format!("conditioned.k{}", c.k),
            !c.ratio.needs_larger_budget && c.diff.abs() < g.conditioned_agreement_se * c.merged_se,
            c.merged_se / c.target.value,
            g.max_relative_se,
            format!(
                "n = {}: {:.5} vs E⁺ target {:.5} (m = {}), |diff| / merged SE = {:.2}",
                c.n,
                c.ratio.estimate.value,
                c.target.value,
                theta.report.plus.m,
                c.diff.abs() / c.merged_se
            ),
        ));
    }
    gates.extend(theta.gates.iter().cloned());
    Ok(VerifyOutcome {
        survival,
        theorem,
        deviation,
        conditioned,
        theta,
        gates,
    })
}

fn verify_rows(o: &VerifyOutcome) -> Vec<String> {
    let mut rows = Vec::new();
    let mut push = |n: usize, q: &str, v: f64, se: f64| rows.push(format!("{n},{q},{v},{se}"));
    for r in &o.survival.rows {
        push(r.n, "survival", r.survival.value, r.survival.std_error);
        push(r.n, "stay_nonnegative", r.stay_positive.value, r.stay_positive.std_error);
        push(r.n, "survival_ratio", r.ratio, r.ratio_se);
    }
    for r in &o.theorem.rows {
        push(r.n, "joint", r.numerator.value, r.numerator.std_error);
        push(r.n, "integral_v", r.integral_v, r.integral_v_se);
        push(r.n, "theorem_ratio", r.ratio, r.ratio_se);
    }
    for r in &o.deviation.rows {
        push(r.n, "small_deviation", r.numerator.value, r.numerator.std_error);
        push(r.n, "small_deviation_ratio", r.ratio, r.ratio_se);
    }
    for c in &o.conditioned {
        push(c.n, &format!("conditioned_k{}", c.k), c.ratio.estimate.value, c.ratio.estimate.std_error);
    }
    rows
}

pub fn write_verify(run: &RunDir, o: &VerifyOutcome) -> Result<Vec<PathBuf>> {
    Ok(vec![
        run.write_json("verify.json", "verify-report/1", o)?,
        run.write_csv("verify.csv", VERIFY_CSV_SCHEMA, VERIFY_CSV_HEADER, &verify_rows(o))?,
        write_theta_csv(run, &o.theta.report)?,
    ])
}

fn write_theta_csv(run: &RunDir, r: &ThetaReport) -> Result<PathBuf> {
    let rows: Vec<String> = r
        .terms
        .iter()
        .zip(&r.partial_sums)
        .map(|(t, s)| {
            format!(
                "{},{},{},{},{},{},{s}",
                t.j, t.value.value, t.value.std_error, t.p_tau.value, t.p_tau.std_error, t.tail_mass.value
            )
        })
        .collect();
    run.write_csv("theta_terms.csv", THETA_CSV_SCHEMA, THETA_CSV_HEADER, &rows)
}

pub fn write_theta(run: &RunDir, o: &ThetaOutcome) -> Result<Vec<PathBuf>> {
    Ok(vec![
        run.write_json("theta.json", "theta-report/1", o)?,
        write_theta_csv(run, &o.report)?,
    ])
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeCheck {
    pub target: f64,
    pub v_slope: Option<f64>,
    pub integral_slope: Option<f64>,
    pub decade: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub environments: u64,
    pub max_n: usize,
    /// Largest `|Möbius - generic|` over `s ∈ {0, 1/2, 0.9}`.
    pub max_discrepancy: f64,
    /// Paths on which `1 - F_{0,j}(0) > e^{min(0, L_j)}` for some `j`.
    pub bound_violations: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfcheckOutcome {
    pub density_at_zero: Vec<(String, f64, f64)>,
    pub rho: f64,
    pub positive: EventEstimate,
    pub harmonicity_u: Vec<HarmonicityCheck>,
    pub harmonicity_v: Vec<HarmonicityCheck>,
    /// Largest `|V̂ - Ṽ̂| / merged SE` over the grid.
    pub strict_v_max_z: Option<f64>,
    pub slopes: SlopeCheck,
    pub tower: TowerReport,
    pub oracle: OracleCheck,
    pub gates: Vec<Gate>,
}

/// `count` grid points spread evenly over the points inside `[lo, hi]`.
pub fn pick_abscissae(grid: &[f64], lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let inside: Vec<f64> = grid.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
    if count == 1 {
        return vec![inside[inside.len() / 2]];
    }
    (0..count)
        .map(|i| inside[i * (inside.len() - 1) / (count - 1)])
        .collect()
}

pub fn slope_check(table: &RenewalTable, stable: &StableParams) -> Result<SlopeCheck> {
    let hi = table.max_abscissa();
    let lo = hi / 10.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = table
        .grid
        .iter()
        .zip(&table.isotonic)
        .filter(|(&x, _)| x >= lo * (1.0 - 1e-12))
        .map(|(&x, &y)| (x, y))
        .unzip();
    let ints: Vec<f64> = xs.iter().map(|&x| table.integral_v(x)).collect::<bpre::Result<_>>()?;
    Ok(SlopeCheck {
        target: stable.alpha() * stable.rho(),
        v_slope: loglog_slope(&xs, &ys),
        integral_slope: loglog_slope(&xs, &ints),
        decade: [lo, hi],
    })
}

pub fn oracle_check(ctx: &Context) -> Result<OracleCheck> {
    let s = &ctx.cfg.selfcheck;
    let geometric = EnvironmentModel::geometric(ctx.stable)?;
    let streams = ctx.stream(tag::ORACLE);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for i in 0..s.oracle_environments {
        let n = 1 + (i as usize % s.oracle_max_n);
        let mut rng = streams.rng(i);
        let env = sample_environment(&geometric, n, &mut rng)?;
        let mob = mobius_composition(&env, 0, n)?.expect("geometric laws are linear-fractional");
        for x in [0.0, 0.5, 0.9] {
            worst = worst.max((mob.apply(x) - iterate_pgf(&env, 0, n, x)?).abs());
        }
        // the bound on the configured model as well
        let own = sample_environment(&ctx.model, n, &mut rng)?;
        for e in [&env, &own] {
            let mut walk = 0.0f64;
            let mut low = 0.0f64;
            let ok = e.iter().zip(survival_curve(e)).all(|(law, surv)| {
                walk += law.log_mean();
                low = low.min(walk);
                surv <= low.exp() * (1.0 + 1e-12)
            });
            violations += (!ok) as u64;
        }
    }
    Ok(OracleCheck {
        environments: s.oracle_environments,
        max_n: s.oracle_max_n,
        max_discrepancy: worst,
        bound_violations: violations,
    })
}

pub fn run_selfcheck(ctx: &Context, tables: &Tables) -> Result<SelfcheckOutcome> {
    let s = &ctx.cfg.selfcheck;
    let g = ctx.gates();
    let mut gates = Vec::new();

    let closed = [
        ("cauchy", StableParams::new(1.0, 0.0, 1.0)?, std::f64::consts::FRAC_1_PI),
        ("gaussian", StableParams::new(2.0, 0.0, 1.0)?, 0.5 / std::f64::consts::PI.sqrt()),
    ];
    let mut density = Vec::new();
    for (name, p, want) in closed {
        density.push((name.to_string(), p.density_at_zero()?, want));
    }
    let dmax = density.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
    gates.push(Gate::new(
        "stable.density_at_zero",
        dmax < g.density_tolerance,
        format!("largest error {dmax:.2e}, limit {:e}", g.density_tolerance),
    ));

    let rho = ctx.stable.rho();
    let positive = prob_positive(&ctx.stable, s.rho_n, s.rho_paths, &ctx.stream(tag::RHO), ctx.workers())?;
    let e = &positive.estimate;
    gates.push(Gate::with_precision(
        "walk.rho_limit",
        (e.value - rho).abs() < g.rho_se * e.std_error,
        e.std_error / rho,
        g.max_relative_se,
        format!("P(S_{} > 0) = {:.5} ± {:.5}, ρ = {rho:.5}", s.rho_n, e.value, e.std_error),
    ));

    let (u, v) = (&tables.u, &tables.v);
    let structural = u.estimates[0].value == 1.0
        && u.estimates[0].std_error == 0.0
        && v.estimates[0].value == 0.0
        && v.estimates[0].std_error == 0.0
        && u.estimates[0].is_structural()
        && v.estimates[0].is_structural();
    gates.push(Gate::new(
        "renewal.structural_rows",
        structural,
        format!("U(0) = {}, V(-0) = {}", u.estimates[0].value, v.estimates[0].value),
    ));

    let strict_v_max_z = tables.v_strict.as_ref().map(|w| {
        v.estimates
            .iter()
            .zip(&w.estimates)
            .map(|(a, b)| {
                let d = (a.value - b.value).abs();
                let se = merged_se(a.std_error, b.std_error);
                if d == 0.0 {
                    0.0
                } else {
                    d / se
                }
            })
            .fold(0.0, f64::max)
    });
    gates.push(match strict_v_max_z {
        Some(z) => Gate::new(
            "renewal.strict_v",
            z <= g.strict_v_se,
            format!("largest |V - V_strict| / merged SE = {z:.3}, limit {}", g.strict_v_se),
        ),
        None => Gate {
            name: "renewal.strict_v".into(),
            status: crate::GateStatus::Inconclusive,
            detail: "strict V table not configured (tables.strict_v = false)".into(),
        },
    });

    let [lo, hi] = s.harmonicity_range;
    let hs = ctx.stream(tag::HARMONICITY);
    let harmonicity_u = pick_abscissae(&u.grid, lo, hi, s.harmonicity_points)
        .into_iter()
        .enumerate()
        .map(|(i, x): (usize, f64)| harmonicity_u(&ctx.stable, u, x, s.harmonicity_draws, &hs.child(i as u64), ctx.workers()))
        .collect::<bpre::Result<Vec<_>>>()?;
    let harmonicity_v = pick_abscissae(&v.grid, lo, hi, s.harmonicity_points)
        .into_iter()
        .enumerate()
        .map(|(i, x): (usize, f64)| harmonicity_v(&ctx.stable, v, -x, s.harmonicity_draws, &hs.child(100 + i as u64), ctx.workers()))
        .collect::<bpre::Result<Vec<_>>>()?;
    for (name, checks) in [("renewal.harmonicity_u", &harmonicity_u), ("renewal.harmonicity_v", &harmonicity_v)] {
        let worst = checks.iter().map(|h| h.diff.abs() / h.merged_se).fold(0.0, f64::max);
        let rel = checks.iter().map(|h| h.merged_se / h.rhs).fold(0.0, f64::max);
        gates.push(Gate::with_precision(
            name,
            checks.iter().all(|h| h.within(g.harmonicity_se)),
            rel,
            g.max_relative_se,
            format!(
                "at {:?}: largest |diff| / merged SE = {worst:.3}, limit {}",
                checks.iter().map(|h| h.x).collect::<Vec<_>>(),
                g.harmonicity_se
            ),
        ));
    }

    let slopes = slope_check(v, &ctx.stable)?;
    let near = |s: Option<f64>, t: f64| s.map(|s| (s - t).abs() <= g.slope_tolerance).unwrap_or(false);
    gates.push(Gate::new(
        "renewal.v_slope",
        near(slopes.v_slope, slopes.target),
        format!("slope {:?} over {:?}, target αρ = {:.4}", slopes.v_slope, slopes.decade, slopes.target),
    ));
    gates.push(Gate::new(
        "renewal.integral_slope",
        near(slopes.integral_slope, slopes.target + 1.0),
        format!("slope {:?}, target αρ + 1 = {:.4}", slopes.integral_slope, slopes.target + 1.0),
    ));

    let tower = tower_comparison(
        &ctx.model,
        s.tower_n,
        &ctx.cfg.phi,
        s.tower_cap,
        s.tower_paths,
        &ctx.stream(tag::TOWER),
        ctx.workers(),
    )?;
    gates.push(Gate::with_precision(
        "bpre.tower",
        tower.diff.abs() < g.tower_se * tower.merged_se && tower.var_rao_blackwell < tower.var_direct,
        tower.merged_se / tower.rao_blackwell.value,
        g.max_relative_se,
        format!(
            "direct {:.5}, pgf {:.5}, |diff| / merged SE = {:.2}; variances {:.3e} vs {:.3e}; capped {}",
            tower.direct.value,
            tower.rao_blackwell.value,
            tower.diff.abs() / tower.merged_se,
            tower.var_direct,
            tower.var_rao_blackwell,
            tower.capped
        ),
    ));

    let oracle = oracle_check(ctx)?;
    gates.push(Gate::new(
        "bpre.mobius",
        oracle.max_discrepancy <= g.oracle_tolerance,
        format!(
            "largest discrepancy {:.2e} over {} environments, n <= {}",
            oracle.max_discrepancy, oracle.environments, oracle.max_n
        ),
    ));
    gates.push(Gate::new(
        "bpre.survival_bound",
        oracle.bound_violations == 0,
        format!("{} violating paths", oracle.bound_violations),
    ));

    Ok(SelfcheckOutcome {
        density_at_zero: density,
        rho,
        positive,
        harmonicity_u,
        harmonicity_v,
        strict_v_max_z,
        slopes,
        tower,
        oracle,
        gates,
    })
}

pub fn write_selfcheck(run: &RunDir, o: &SelfcheckOutcome) -> Result<Vec<PathBuf>> {
    Ok(vec![run.write_json("selfcheck.json", "selfcheck-report/1", o)?])
}

/// Raw trajectories: environment, walk, quenched survival and population
/// per generation.
pub fn simulate_rows(ctx: &Context) -> Result<Vec<String>> {
    let s = &ctx.cfg.simulate;
    let streams = ctx.stream(tag::SIMULATE);
    let mut rows = Vec::new();
    for i in 0..s.trajectories {
        let mut rng = streams.rng(i);
        let env = sample_environment(&ctx.model, s.n, &mut rng)?;
        let traj = simulate_population(&env, 1, &mut rng, s.cap)?;
        let surv = survival_curve(&env);
        rows.push(format!("{i},0,,0,1,1"));
        let mut walk = 0.0;
        for (k, law) in env.iter().enumerate() {
            walk += law.log_mean();
            let pop = match traj.sizes.get(k + 1) {
                Some(z) => z.to_string(),
                None => String::new(),
            };
            rows.push(format!("{i},{},{},{walk},{},{pop}", k + 1, law.log_mean(), surv[k]));
        }
    }
    Ok(rows)
}

pub fn write_simulate(run: &RunDir, rows: &[String]) -> Result<Vec<PathBuf>> {
    Ok(vec![run.write_csv(
        "trajectories.csv",
        TRAJECTORY_CSV_SCHEMA,
        TRAJECTORY_CSV_HEADER,
        rows,
    )?])
}
