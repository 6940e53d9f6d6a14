//! Acceptance checks on the default model at desk-scale budgets. Prints one
//! line per criterion and exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bpre::stats::ks_critical_1pct;
use bpre::{StableParams, Streams};
use bpre_harness::output::RunDir;
use bpre_harness::pipeline::{self, Context};
use bpre_harness::{ExperimentConfig, Gate, GateStatus};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Gil-Pelaez inversion, tanh-sinh near the origin and Simpson beyond.
fn cdf(p: &StableParams, x: f64) -> f64 {
    let f = |w: f64| -> f64 {
        let phi = p.char_fn(w);
        let (s, c) = (w * x).sin_cos();
        (c * phi.im - s * phi.re) / w
    };
    let a = f64::min(1.0, 1.0 / x.abs());
    let w_max = (40.0 / p.c()).powf(1.0 / p.alpha());
    let step = 1.0 / 64.0;
    let mut head = 0.0;
    for i in -256..=256 {
        let t = i as f64 * step;
        let sh = 0.5 * PI * t.sinh();
        let w = if sh < 0.0 {
            a / (1.0 + (-2.0 * sh).exp())
        } else {
            a - a / (1.0 + (2.0 * sh).exp())
        };
        if w > 0.0 && w < a {
            head += 0.25 * PI * a * t.cosh() / sh.cosh().powi(2) * f(w);
        }
    }
    head *= step;
    let n = ((3000.0 + 20.0 * w_max * x.abs()) as usize) & !1;
    let h = (w_max - a) / n as f64;
    let mut tail = f(a) + f(w_max);
    for i in 1..n {
        tail += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    tail *= h / 3.0;
    0.5 - (head + tail) / PI
}

/// Beyond this the quadrature is replaced by the bracket
/// `F(x) ∈ [F(X_EDGE), 1]` (mirrored for `x < 0`).
const X_EDGE: f64 = 1000.0;

/// Upper bound on the KS distance: at bracketed points the worse end of
/// the bracket is used.
fn ks_upper(p: &StableParams, xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let (lo_edge, hi_edge) = (cdf(p, -X_EDGE), cdf(p, X_EDGE));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let (lo, hi) = if x > X_EDGE {
            (hi_edge, 1.0)
        } else if x < -X_EDGE {
            (0.0, lo_edge)
        } else {
            let f = cdf(p, x);
            (f, f)
        };
        d = d.max(hi - i as f64 / n).max((i + 1) as f64 / n - lo);
    }
    d
}

fn ks_cases() -> (bool, String) {
    let cases = [(1.5, 0.0), (1.5, 0.5), (0.7, 0.3), (1.2, -0.4), (1.0, 0.0), (2.0, 0.0), (1.8, 0.9)];
    let crit = ks_critical_1pct(2000);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (k, &(alpha, beta)) in cases.iter().enumerate() {
        let p = StableParams::new(alpha, beta, 1.0).unwrap();
        let sampler = p.sampler();
        let s = Streams::new(900 + k as u64);
        let mut xs: Vec<f64> = (0..2000u64).map(|i| sampler.sample(&mut s.rng(i))).collect();
        let d = ks_upper(&p, &mut xs);
        worst = worst.max(d / crit);
        ok &= d < crit;
    }
    (ok, format!("KS over {} laws, largest D / critical = {worst:.3}", cases.len()))
}

struct Criterion {
    passed: bool,
    line: String,
}

fn criterion(id: usize, gates: &[&Gate], extra: Option<(bool, String)>, started: Instant) -> Criterion {
    let mut passed = true;
    let mut parts = Vec::new();
    for g in gates {
        let tag = match g.status {
            GateStatus::Pass => "pass",
            GateStatus::Fail => "fail",
            GateStatus::Inconclusive => "inconclusive",
        };
        passed &= g.passed();
        parts.push(format!("{} {tag} ({})", g.name, g.detail));
    }
    if let Some((ok, detail)) = extra {
        passed &= ok;
        parts.push(detail);
    }
    let verdict = if passed { "PASS" } else { "FAIL" };
    Criterion {
        passed,
        line: format!(
            "criterion {id}: {verdict}: {} [{:.1} s]",
            parts.join("; "),
            started.elapsed().as_secs_f64()
        ),
    }
}

fn find<'a>(gates: &'a [Gate], name: &str) -> &'a Gate {
    gates.iter().find(|g| g.name == name).unwrap_or_else(|| panic!("missing gate {name}"))
}

fn find_prefix<'a>(gates: &'a [Gate], prefix: &str) -> Vec<&'a Gate> {
    gates.iter().filter(|g| g.name.starts_with(prefix)).collect()
}

/// Runs `verify` twice with one worker and once with eight on the smoke
/// budget and compares every emitted file byte for byte.
fn determinism() -> (bool, String) {
    let base = ExperimentConfig::load(&configs().join("smoke.toml")).unwrap();
    let run = |workers: usize, out: &Path| -> Vec<(String, Vec<u8>)> {
        let mut cfg = base.clone();
        cfg.workers = workers;
        cfg.out = out.to_path_buf();
        let ctx = Context::new(&cfg).unwrap();
        let dir = RunDir::create(&cfg).unwrap();
        let tables = pipeline::build_tables(&ctx).unwrap();
        let mut files = pipeline::write_tables(&dir, &tables).unwrap();
        let o = pipeline::run_verify(&ctx, &tables).unwrap();
        files.extend(pipeline::write_verify(&dir, &o).unwrap());
        let mut out: Vec<_> = files
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect();
        out.sort();
        out
    };
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let one = run(1, a.path());
    let replay = run(1, b.path());
    let eight = run(8, c.path());
    let same_replay = one == replay;
    let same_workers = one == eight;
    (
        same_replay && same_workers,
        format!(
            "{} files; seed replay identical: {same_replay}; workers 1 vs 8 identical: {same_workers}",
            one.len()
        ),
    )
}

fn main() {
    // `cargo test` passes filter arguments; a filter that does not name
    // this suite skips it
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut cfg = ExperimentConfig::load(&configs().join("default.toml")).unwrap();
    cfg.workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let ctx = Context::new(&cfg).unwrap();
    let mut results = Vec::new();

    let t = Instant::now();
    let tables = pipeline::build_tables(&ctx).unwrap();
    eprintln!("tables built in {:.1} s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let selfcheck = pipeline::run_selfcheck(&ctx, &tables).unwrap();
    let sg = &selfcheck.gates;
    eprintln!("selfcheck done in {:.1} s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    results.push(criterion(1, &[find(sg, "stable.density_at_zero")], Some(ks_cases()), t));
    let t = Instant::now();
    results.push(criterion(2, &[find(sg, "walk.rho_limit")], None, t));
    let t = Instant::now();
    let c3: Vec<&Gate> = ["renewal.structural_rows", "renewal.strict_v", "renewal.harmonicity_u", "renewal.harmonicity_v"]
        .iter()
        .map(|n| find(sg, n))
        .collect();
    results.push(criterion(3, &c3, None, t));
    results.push(criterion(4, &[find(sg, "renewal.v_slope"), find(sg, "renewal.integral_slope")], None, t));

    let t = Instant::now();
    let verify = pipeline::run_verify(&ctx, &tables).unwrap();
    let vg = &verify.gates;
    eprintln!("verify done in {:.1} s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    results.push(criterion(5, &[find(vg, "deviation.variation")], None, t));
    results.push(criterion(6, &[find(sg, "bpre.tower")], None, t));
    results.push(criterion(7, &[find(sg, "bpre.mobius"), find(sg, "bpre.survival_bound")], None, t));
    let c8: Vec<&Gate> = ["theorem.positivity", "theorem.flatness", "theorem.theta_agreement"]
        .iter()
        .map(|n| find(vg, n))
        .collect();
    results.push(criterion(8, &c8, None, t));
    results.push(criterion(9, &find_prefix(vg, "theta."), None, t));

    let t = Instant::now();
    results.push(criterion(10, &[], Some(determinism()), t));

    for r in &results {
        println!("{}", r.line);
    }
    for g in vg.iter().filter(|g| g.name.starts_with("survival.") || g.name.starts_with("conditioned.")) {
        eprintln!("diagnostic {} {:?}: {}", g.name, g.status, g.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
