use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::mpsc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use heatlab_core::bounds::{self, CylinderParams, HarnackParams, KernelData, Ranges};
use heatlab_core::env::{self, generate_environment, EnvironmentField, EnvironmentSpec, Exponents};
use heatlab_core::green::{self, Covariance, FarField, ScalingConfig};
use heatlab_core::heat::{self, HeatOptions, KernelColumn};
use heatlab_core::metric::{self, MetricField, Neighborhood};
use heatlab_core::operator::{assemble_generator, Boundary, DiscreteGenerator, GeneratorOptions};
use heatlab_core::stochastics::{self, MomentConfig, RegionShape};
use heatlab_core::suites::{self, Size, SuiteOptions};
use heatlab_core::{io, Grid, Point};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{manifest_dir, Recorder};
use crate::{BoundaryArg, Cli, Command, EnvCmd, GreenCmd, HeatCmd, MetricCmd, OpCmd, StochCmd, VerifyArgs, VerifyKind};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RESOURCE: u8 = 3;

/// A configured memory or time cap was exceeded.
#[derive(Debug)]
pub struct ResourceExceeded(pub String);

impl std::fmt::Display for ResourceExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "resource guard exceeded: {}", self.0)
    }
}

impl std::error::Error for ResourceExceeded {}

enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

pub fn run(cli: Cli, args: Vec<String>) -> u8 {
    let workers = std::env::var("HEATLAB_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()).or(cli.workers);
    if let Some(n) = workers {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut rec = Recorder::new(args);
    match dispatch(cli.command, &mut rec) {
        Ok(Outcome::Pass) => EXIT_PASS,
        Ok(Outcome::Fail) => EXIT_FAIL,
        Err(e) => {
            // Core errors already name their cause.
            if e.downcast_ref::<heatlab_core::Error>().is_some() {
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            if e.downcast_ref::<ResourceExceeded>().is_some() {
                EXIT_RESOURCE
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn dispatch(cmd: Command, rec: &mut Recorder) -> Result<Outcome> {
    match cmd {
        Command::Env(c) => env_cmd(c, rec),
        Command::Op(c) => op_cmd(c, rec),
        Command::Heat(c) => heat_cmd(c, rec),
        Command::Metric(c) => metric_cmd(c, rec),
        Command::Verify(a) => verify(a, rec),
        Command::Stoch(c) => stoch_cmd(c, rec),
        Command::Green(c) => green_cmd(c, rec),
        Command::Reproduce(a) => reproduce(a, rec),
    }
}

fn finish(rec: &mut Recorder, out: &Path, is_dir: bool) -> Result<()> {
    rec.output(out);
    let taken = std::mem::replace(rec, Recorder::new(Vec::new()));
    taken.finish(&manifest_dir(out, is_dir))?;
    Ok(())
}

fn write_report<T: Serialize>(out: &Path, report: &T) -> Result<()> {
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        io::ensure_dir(dir)?;
    }
    io::write_json(out, report)?;
    Ok(())
}

fn load_env(path: &Path, rec: &mut Recorder) -> Result<EnvironmentField> {
    rec.input(path);
    Ok(EnvironmentField::load(path)?)
}

fn cell(grid: &Grid, coords: &[usize]) -> Result<usize> {
    if coords.len() != grid.dim() {
        bail!("expected {} cell indices, got {}", grid.dim(), coords.len());
    }
    let mut c = [0usize; 3];
    for (i, &v) in coords.iter().enumerate() {
        if v >= grid.n() {
            bail!("cell index {v} out of range 0..{}", grid.n());
        }
        c[i] = v;
    }
    Ok(grid.index(c))
}

fn exponents_of(field: &EnvironmentField) -> Exponents {
    field.spec().map(|s| s.exponents).unwrap_or_default()
}

fn read_spec(path: &Path, rec: &mut Recorder) -> Result<EnvironmentSpec> {
    rec.input(path);
    let spec: EnvironmentSpec = io::read_json(path)?;
    rec.seed(spec.seed);
    Ok(spec)
}

fn env_cmd(cmd: EnvCmd, rec: &mut Recorder) -> Result<Outcome> {
    match cmd {
        EnvCmd::Gen { spec, out, seed } => {
            let mut s = read_spec(&spec, rec)?;
            if let Some(seed) = seed {
                s.seed = seed;
                rec.seed(seed);
            }
            rec.config(serde_json::to_value(&s)?);
            let field = generate_environment(&s)?;
            field.save(&out)?;
            println!("wrote environment to {}", out.display());
            finish(rec, &out, true)?;
            Ok(Outcome::Pass)
        }
        EnvCmd::Stats { env, centers, radii, out } => {
            let field = load_env(&env, rec)?;
            rec.input(&centers);
            let raw: Vec<Vec<f64>> = io::read_json(&centers)?;
            let points: Vec<Point> = raw.iter().map(|c| to_point(c)).collect::<Result<_>>()?;
            let e = exponents_of(&field);
            rec.config(json!({ "centers": raw, "radii": radii, "exponents": e }));
            let report = env::environment_stats(&field, &points, &radii, &e)?;
            write_report(&out, &report)?;
            println!("wrote {}", out.display());
            finish(rec, &out, false)?;
            Ok(Outcome::Pass)
        }
    }
}

fn to_point(c: &[f64]) -> Result<Point> {
    if c.is_empty() || c.len() > 3 {
        bail!("points need 1 to 3 coordinates, got {}", c.len());
    }
    let mut p = [0.0; 3];
    p[..c.len()].copy_from_slice(c);
    Ok(p)
}

fn op_cmd(cmd: OpCmd, rec: &mut Recorder) -> Result<Outcome> {
    let OpCmd::Export { env, boundary, out } = cmd;
    let field = load_env(&env, rec)?;
    let boundary = match boundary {
        BoundaryArg::Periodic => Boundary::Periodic,
        BoundaryArg::Dirichlet => Boundary::Dirichlet,
    };
    rec.config(json!({ "boundary": boundary }));
    let gen = DiscreteGenerator::new(&field, GeneratorOptions { boundary, ..Default::default() })?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        io::ensure_dir(dir)?;
    }
    let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "% heatlab generator, {} nodes", field.grid().len())?;
    for (r, c, v) in gen.entries() {
        writeln!(w, "{r} {c} {v:.17e}")?;
    }
    w.flush()?;
    println!("wrote {}", out.display());
    finish(rec, &out, false)?;
    Ok(Outcome::Pass)
}

fn heat_cmd(cmd: HeatCmd, rec: &mut Recorder) -> Result<Outcome> {
    match cmd {
        HeatCmd::Kernel { env, x0, times, tol, out } => {
            let field = load_env(&env, rec)?;
            let gen = assemble_generator(&field)?;
            let source = cell(field.grid(), &x0)?;
            let opts = HeatOptions { tol, ..HeatOptions::default() };
            rec.config(json!({ "x0": x0, "times": times, "options": opts }));
            let col = heat::heat_kernel_column(&gen, source, &times, opts)?;
            col.save(&out)?;
            println!("wrote kernel column to {} ({} accepted steps)", out.display(), col.stats.accepted);
            finish(rec, &out, true)?;
            Ok(Outcome::Pass)
        }
        HeatCmd::Walkers { env, x0, t, paths, seed, out } => {
            let field = load_env(&env, rec)?;
            let gen = assemble_generator(&field)?;
            let source = cell(field.grid(), &x0)?;
            rec.seed(seed);
            rec.config(json!({ "x0": x0, "t": t, "paths": paths, "seed": seed }));
            let opts = HeatOptions { tol: 1e-10, ..HeatOptions::default() };
            let col = heat::heat_kernel_column(&gen, source, &[t], opts)?;
            let counts = heat::simulate_walkers(&gen, source, t, paths, seed)?;
            let cmp = heat::compare_walkers(&gen, &col.values[0], &counts)?;
            let pass = cmp.ratio <= 3.0;
            write_report(&out, &json!({ "comparison": cmp, "pass": pass }))?;
            println!("{} walker ratio {:.3}", verdict(pass), cmp.ratio);
            finish(rec, &out, false)?;
            Ok(Outcome::from(pass))
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn metric_cmd(cmd: MetricCmd, rec: &mut Recorder) -> Result<Outcome> {
    match cmd {
        MetricCmd::Map { env, x0, nbhd, out } => {
            let field = load_env(&env, rec)?;
            let dim = field.grid().dim();
            let nb = match nbhd {
                Some(s) => Neighborhood::parse(&s, dim)?,
                None => Neighborhood::default_for(dim),
            };
            let source = cell(field.grid(), &x0)?;
            rec.config(json!({ "x0": x0, "neighborhood": nb }));
            let map = metric::intrinsic_distance_map(&field, source, nb)?;
            map.save(&out)?;
            println!("wrote distance map to {}", out.display());
            finish(rec, &out, true)?;
            Ok(Outcome::Pass)
        }
        MetricCmd::Compare { env, metric: path, pairs, out } => {
            let field = load_env(&env, rec)?;
            rec.input(&path);
            let map = MetricField::load(&path)?;
            rec.config(json!({ "pairs": pairs }));
            let n = field.grid().len();
            let step = (n / pairs.max(1)).max(1);
            let targets: Vec<usize> = (0..n).step_by(step).take(pairs).collect();
            let comparison = metric::euclidean_comparison(&map, &field)?;
            let sandwich = metric::sandwich_check(&map, &field, &targets)?;
            let pass = sandwich.lower_violations == 0 && sandwich.upper_violations == 0;
            write_report(&out, &json!({ "comparison": comparison, "sandwich": sandwich, "pass": pass }))?;
            println!(
                "{} d/|x-y| in [{:.4}, {:.4}], sandwich violations {}",
                verdict(pass),
                comparison.min_ratio,
                comparison.max_ratio,
                sandwich.lower_violations + sandwich.upper_violations
            );
            finish(rec, &out, false)?;
            Ok(Outcome::from(pass))
        }
    }
}

fn verify(a: VerifyArgs, rec: &mut Recorder) -> Result<Outcome> {
    let field = match &a.env {
        Some(p) => Some(load_env(p, rec)?),
        None => None,
    };
    let mut columns = Vec::with_capacity(a.kern.len());
    for k in &a.kern {
        rec.input(k);
        columns.push(KernelColumn::load(k)?);
    }
    let mut maps = Vec::with_capacity(a.metric.len());
    for m in &a.metric {
        rec.input(m);
        maps.push(MetricField::load(m)?);
    }
    let grid = match (&field, maps.first()) {
        (Some(f), _) => *f.grid(),
        (None, Some(m)) => m.grid,
        (None, None) => bail!("--env or --metric is needed to know the grid"),
    };
    let ranges = Ranges { t_min: a.t_min, t_max: a.t_max, max_distance: a.max_distance };
    rec.config(json!({
        "kind": format!("{:?}", a.kind),
        "ranges": { "t_min": a.t_min, "t_max": a.t_max, "max_distance": a.max_distance },
        "max_slope": a.max_slope,
        "stability": a.stability,
        "scales": a.scales,
        "t_floor": a.t_floor,
        "t": a.t,
        "radius": a.radius,
        "trials": a.trials,
    }));
    let kernels = |need_metric: bool| -> Result<Vec<KernelData<'_>>> {
        if columns.is_empty() {
            bail!("at least one --kern directory is required");
        }
        if need_metric && maps.len() != columns.len() {
            bail!("need one --metric per --kern ({} kernels, {} metrics)", columns.len(), maps.len());
        }
        Ok(columns
            .iter()
            .enumerate()
            .map(|(i, c)| KernelData { grid: &grid, column: c, metric: maps.get(i), seed: None })
            .collect())
    };
    let need_field = || field.as_ref().context("--env is required for this check");
    let (pass, report) = match a.kind {
        VerifyKind::Upper => {
            let fit = bounds::verify_upper_intrinsic(&kernels(true)?, &ranges, a.max_slope)?;
            (fit.pass, serde_json::to_value(&fit)?)
        }
        VerifyKind::UpperEuclid => {
            let fit = bounds::verify_upper_euclidean(&kernels(false)?, &ranges)?;
            (fit.pass, serde_json::to_value(&fit)?)
        }
        VerifyKind::Lower => {
            let r = Ranges { t_min: Some(a.t_min.unwrap_or(suites::LOWER_CONE)), ..ranges };
            let fit = bounds::verify_lower(&kernels(false)?, &r, a.stability)?;
            (fit.pass, serde_json::to_value(&fit)?)
        }
        VerifyKind::Longrange => {
            let (fit, per_scale) = bounds::verify_long_range(&kernels(false)?, &a.scales, a.t_floor)?;
            (fit.pass, json!({ "fit": fit, "scales": per_scale }))
        }
        VerifyKind::Floor => {
            let f = need_field()?;
            let col = columns.first().context("--kern is required")?;
            let t = match a.t {
                Some(t) => t,
                None => *col
                    .times
                    .iter()
                    .rev()
                    .find(|t| t.sqrt() / 2.0 <= grid.side() / 8.0)
                    .context("no stored time fits the box")?,
            };
            let rep = bounds::near_diagonal_floor(f, col, t, &HarnackParams::default_for(grid.dim()), &exponents_of(f))?;
            (rep.pass, serde_json::to_value(&rep)?)
        }
        VerifyKind::Sobolev => {
            let f = need_field()?;
            let gen = assemble_generator(f)?;
            let center = grid.position(centre_cell(&grid));
            let trials = trial_functions(&grid, &center, a.radius, a.trials);
            let rep = bounds::sobolev_probe(&gen, f, &center, a.radius, &trials, &exponents_of(f))?;
            (rep.sup_ratio.is_finite(), serde_json::to_value(&rep)?)
        }
        VerifyKind::Maximal => {
            let f = need_field()?;
            let gen = assemble_generator(f)?;
            let center = grid.position(centre_cell(&grid));
            let params = CylinderParams {
                center,
                n: a.radius,
                delta: 1.0,
                sigma: 1.0,
                sigma_prime: 0.5,
                eps: 0.1,
                kappa: 1.0,
                time_samples: 8,
            };
            let psi = vec![0.0; grid.len()];
            let ball = grid.ball(&center, a.radius);
            let mut start = vec![0.0; grid.len()];
            ball.iter().for_each(|&x| start[x] = 1.0);
            let rep = bounds::maximal_inequality_probe(
                &gen,
                f,
                &psi,
                &start,
                &params,
                &exponents_of(f),
                HeatOptions::default(),
            )?;
            (rep.ratio.is_finite(), serde_json::to_value(&rep)?)
        }
    };
    write_report(&a.out, &json!({ "report": report, "pass": pass }))?;
    println!("{} {:?}", verdict(pass), a.kind);
    finish(rec, &a.out, false)?;
    Ok(Outcome::from(pass))
}

fn centre_cell(grid: &Grid) -> usize {
    let c = grid.n() / 2;
    grid.index([c, c, if grid.dim() == 3 { c } else { 0 }])
}

/// Bumps `(1 - |x-c|²/r²)₊` modulated by low plane waves, one per trial.
fn trial_functions(grid: &Grid, center: &Point, radius: f64, count: usize) -> Vec<Vec<f64>> {
    let r2 = radius * radius;
    (0..count)
        .map(|k| {
            let freq = (k % 4) as f64 + 1.0;
            let axis = k % grid.dim();
            (0..grid.len())
                .map(|x| {
                    let p = grid.position(x);
                    let d: Vec<f64> = (0..3).map(|i| p[i] - center[i]).collect();
                    let q = d.iter().map(|v| v * v).sum::<f64>() / r2;
                    if q >= 1.0 {
                        0.0
                    } else {
                        (1.0 - q) * (1.0 + 0.5 * (freq * std::f64::consts::PI * d[axis] / radius).cos())
                    }
                })
                .collect()
        })
        .collect()
}

fn stoch_cmd(cmd: StochCmd, rec: &mut Recorder) -> Result<Outcome> {
    match cmd {
        StochCmd::Chain { spec, endpoint, radii, sequences, seed, out } => {
            let s = read_spec(&spec, rec)?;
            rec.seed(seed);
            rec.config(json!({ "spec": s, "endpoint": endpoint, "radii": radii, "sequences": sequences, "seed": seed }));
            let field = generate_environment(&s)?;
            let exp = stochastics::chain_experiment(&field, &to_point(&endpoint)?, &radii, sequences, seed, &s.exponents, 1.0)?;
            let pass = exp.holder_ok && exp.within_factor_two;
            write_report(&out, &json!({ "experiment": exp, "pass": pass }))?;
            println!("{} chained averages, burn-in {:?}", verdict(pass), exp.burn_in);
            finish(rec, &out, false)?;
            Ok(Outcome::from(pass))
        }
        StochCmd::Rosenthal { count, exponents, seed, out } => {
            rec.seed(seed);
            rec.config(json!({ "count": count, "exponents": exponents, "seed": seed }));
            let rep = stochastics::rosenthal_experiment(count, &exponents, seed)?;
            let pass = rep.constant.is_finite();
            write_report(&out, &json!({ "report": rep, "pass": pass }))?;
            println!("{} Rosenthal constant {:.4}", verdict(pass), rep.constant);
            finish(rec, &out, false)?;
            Ok(Outcome::from(pass))
        }
        StochCmd::Moments { spec, xi, counts, samples, resamples, segment, seed, out } => {
            let s = read_spec(&spec, rec)?;
            rec.seed(seed);
            let cfg = MomentConfig {
                xi,
                counts,
                samples,
                resamples,
                shape: if segment { RegionShape::Segment } else { RegionShape::Box },
                seed,
            };
            rec.config(json!({ "spec": s, "config": cfg }));
            let rep = stochastics::moment_bound_experiment(&s, &cfg)?;
            write_report(&out, &rep)?;
            let csv_path = out.with_extension("csv");
            let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
            w.write_record(["count", "moment", "ci_low", "ci_high", "ratio"])?;
            for row in &rep.rows {
                w.write_record([
                    row.count.to_string(),
                    row.moment.to_string(),
                    row.ci[0].to_string(),
                    row.ci[1].to_string(),
                    row.ratio.to_string(),
                ])?;
            }
            w.flush()?;
            rec.output(&csv_path);
            println!("{} moment spread {:.3}", verdict(rep.pass), rep.spread);
            finish(rec, &out, false)?;
            Ok(Outcome::from(rep.pass))
        }
    }
}

fn green_cmd(cmd: GreenCmd, rec: &mut Recorder) -> Result<Outcome> {
    match cmd {
        GreenCmd::Solve { env, x0, newtonian, out } => {
            let field = load_env(&env, rec)?;
            let gen = DiscreteGenerator::new(&field, GeneratorOptions { boundary: Boundary::Dirichlet, ..Default::default() })?;
            let source = cell(field.grid(), &x0)?;
            let far = match newtonian {
                Some(s) => FarField::Newtonian { scale: 1.0, sigma: Covariance::scalar(field.grid().dim(), s)? },
                None => FarField::Zero,
            };
            rec.config(json!({ "x0": x0, "far_field": far }));
            let g = green::green_function(&gen, source, &far)?;
            g.save(&out)?;
            println!("wrote Green's function to {} ({} iterations)", out.display(), g.iterations);
            finish(rec, &out, true)?;
            Ok(Outcome::Pass)
        }
        GreenCmd::Limit { spec, r1, r2, n, samples, sigma, wrong_a, out } => {
            let s = read_spec(&spec, rec)?;
            let cfg = ScalingConfig {
                r1,
                r2,
                scales: n,
                samples,
                sigma: sigma.map(|v| Covariance::scalar(s.dim, v)).transpose()?,
                wrong_a,
                ..ScalingConfig::default()
            };
            rec.config(json!({ "spec": s, "r1": r1, "r2": r2, "scales": cfg.scales, "samples": samples, "sigma": sigma, "wrong_a": wrong_a }));
            let rep = green::scaling_limit_experiment(&s, &cfg)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                io::ensure_dir(dir)?;
            }
            let mut w = csv::Writer::from_path(&out).with_context(|| format!("creating {}", out.display()))?;
            w.write_record(["n", "error", "wrong_a_error"])?;
            for (i, (n, e)) in rep.scales.iter().zip(&rep.errors).enumerate() {
                let wrong = rep.wrong_a_errors.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
                w.write_record([n.to_string(), e.to_string(), wrong])?;
            }
            w.flush()?;
            let json_path = out.with_extension("json");
            write_report(&json_path, &rep)?;
            rec.output(&json_path);
            println!("{} e_n = {:?}", verdict(rep.pass), rep.errors);
            finish(rec, &out, false)?;
            Ok(Outcome::from(rep.pass))
        }
    }
}

fn reproduce(a: crate::ReproduceArgs, rec: &mut Recorder) -> Result<Outcome> {
    let size: Size = a.preset.parse()?;
    let cells = suites::largest_grid(&a.suite, size)?;
    if let Some(cap) = a.max_cells {
        if cells > cap {
            return Err(ResourceExceeded(format!("suite {} needs {cells} grid nodes, cap is {cap}", a.suite)).into());
        }
    }
    let opts = SuiteOptions { size, seed: a.seed, corrupt: a.corrupt };
    rec.seed(a.seed);
    rec.config(json!({ "suite": a.suite, "options": opts }));
    let name = a.suite.clone();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(suites::run_suite(&name, opts));
    });
    let result = match a.max_seconds {
        Some(s) => match rx.recv_timeout(Duration::from_secs_f64(s)) {
            Ok(r) => r,
            Err(_) => return Err(ResourceExceeded(format!("suite {} exceeded {s} s", a.suite)).into()),
        },
        None => rx.recv().context("suite worker stopped unexpectedly")?,
    };
    let report = result?;
    io::ensure_dir(&a.out)?;
    let path = a.out.join("report.json");
    io::write_json(&path, &report)?;
    for c in &report.checks {
        println!("{} {}: {}", verdict(c.pass), c.name, c.summary);
    }
    println!("{} {}", verdict(report.pass), report.suite);
    rec.output(&path);
    finish(rec, &a.out, true)?;
    Ok(Outcome::from(report.pass))
}
