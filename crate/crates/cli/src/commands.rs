//! One function per subcommand. Each returns the human-readable report printed on stdout.

use std::fmt::Write as _;
use std::path::PathBuf;

use pdiv::barrier_optimizer::{certify_slopes, find_b_omega, root_function};
use pdiv::mc_oracle::{simulate_double_barrier, simulate_kernel, simulate_regime, KernelId, MCEstimate};
use pdiv::regime_solver::solve_fixed_point;
use pdiv::{Scale, SearchConfig, Valuation};
use serde::Serialize;

use crate::config::{CliResult, Failure, RunConfig};
use crate::output::{barriers_csv, num, read_barriers, Sink, Table};

/// Evenly spaced points given on the command line as `start:stop:count`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|k| if k + 1 == self.count { self.stop } else { self.start + step * k as f64 }).collect()
    }
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("expected start:stop:count, got {s:?}"));
        };
        let start: f64 = a.trim().parse().map_err(|_| format!("bad grid start {a:?}"))?;
        let stop: f64 = b.trim().parse().map_err(|_| format!("bad grid stop {b:?}"))?;
        let count: usize = n.trim().parse().map_err(|_| format!("bad grid count {n:?}"))?;
        if !start.is_finite() || !stop.is_finite() || count == 0 || (count > 1 && stop <= start) {
            return Err(format!("grid {s:?} needs finite start < stop and count >= 1"));
        }
        Ok(Self { start, stop, count })
    }
}

/// Where the barrier of the auxiliary problem comes from.
#[derive(Debug, Clone, Default)]
pub struct BarrierChoice {
    pub b: Option<f64>,
    pub b_file: Option<PathBuf>,
}

impl BarrierChoice {
    fn resolve(&self, cfg: &RunConfig) -> CliResult<f64> {
        let b = match (&self.b, &self.b_file) {
            (Some(b), _) => *b,
            (None, Some(path)) => {
                let bs = read_barriers(path)?;
                if bs.len() != 1 {
                    return Err(Failure::validation(format!("{}: expected a single barrier", path.display())));
                }
                bs[0]
            }
            (None, None) => cfg.auxiliary()?.b.ok_or_else(|| cfg.invalid("auxiliary.b", "give --b, --b-file or auxiliary.b"))?,
        };
        if !(b > 0.0) || !b.is_finite() {
            return Err(Failure::validation(format!("barrier must be finite and > 0, got {b}")));
        }
        Ok(b)
    }
}

fn grid_or(grid: &Option<GridSpec>, start: f64, stop: f64, count: usize) -> Vec<f64> {
    grid.clone().unwrap_or(GridSpec { start, stop, count }).points()
}

pub fn scale(cfg: &RunConfig, sink: &Sink, q: Option<f64>, gamma: Option<f64>, grid: &Option<GridSpec>) -> CliResult<String> {
    let model = cfg.model()?;
    let aux = cfg.raw.auxiliary.as_ref();
    let q = match (q, aux) {
        (Some(q), _) => q,
        (None, Some(a)) => a.delta + a.lambda,
        (None, None) => return Err(cfg.invalid("auxiliary", "give --q or an [auxiliary] section with delta and lambda")),
    };
    let gamma = match (gamma, aux) {
        (Some(g), _) => g,
        (None, Some(a)) => a.gamma,
        (None, None) => return Err(cfg.invalid("auxiliary.gamma", "give --gamma or auxiliary.gamma")),
    };
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Failure::validation(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let eq = Scale::build(&model, q).map_err(|e| cfg.lift(e))?;
    let phi = Scale::build(&model, q + gamma).map_err(|e| cfg.lift(e))?.phi_q();
    let mut t = Table::new(["x", "W", "Wp", "Z", "Zbar", "Z2"]);
    for x in grid_or(grid, -1.0, 5.0, 61) {
        t.push(vec![x, eq.w(x), eq.w_prime_unchecked(x), eq.z(x), eq.zbar(x), eq.z2(x, phi)?]);
    }
    let path = sink.table("scale", &t)?;
    Ok(format!("q = {}\nPhi_q = {}\nPhi_(q+gamma) = {}\nwrote {}\n", num(q), num(eq.phi_q()), num(phi), path.display()))
}

pub fn value(cfg: &RunConfig, sink: &Sink, barrier: &BarrierChoice, grid: &Option<GridSpec>) -> CliResult<String> {
    let b = barrier.resolve(cfg)?;
    let ctx = cfg.valuation(b)?;
    let mut t = Table::new(["x", "value", "derivative"]);
    for x in grid_or(grid, 0.0, 3.0 * b, 61) {
        if x < 0.0 {
            return Err(Failure::validation(format!("value grid must be >= 0, got {x}")));
        }
        t.push(vec![x, ctx.value_double_barrier(x), ctx.value_derivative(x)]);
    }
    let path = sink.table("value", &t)?;
    Ok(format!(
        "b = {}\nvalue_at_barrier = {}\nderivative_at_barrier = {}\nh(b) = {}\nwrote {}\n",
        num(b),
        num(ctx.value_double_barrier(b)),
        num(ctx.derivative_at_barrier()),
        num(ctx.barrier_root_value()),
        path.display()
    ))
}

pub fn potential(cfg: &RunConfig, sink: &Sink, barrier: &BarrierChoice, x0: f64, grid: &Option<GridSpec>) -> CliResult<String> {
    let b = barrier.resolve(cfg)?;
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Failure::validation(format!("--x0 must be finite and >= 0, got {x0}")));
    }
    let ctx = cfg.valuation(b)?;
    let double = ctx.double_barrier_measure(x0)?;
    // Started at 0 the killed process leaves [0, inf) at once, so its measure vanishes.
    let single = if x0 > 0.0 { Some(ctx.single_barrier_measure(x0)?) } else { None };
    let mut t = Table::new(["y", "double", "single"]);
    for y in grid_or(grid, 0.0, 3.0 * b, 61) {
        t.push(vec![y, double.density(y), single.as_ref().map_or(0.0, |m| m.density(y))]);
    }
    let path = sink.table("potential", &t)?;
    Ok(format!(
        "b = {}\nx0 = {}\ndouble_atom = {}\ndouble_mass = {}\nsingle_mass = {}\nwrote {}\n",
        num(b),
        num(x0),
        num(double.atom()),
        num(double.mass()),
        num(single.as_ref().map_or(0.0, |m| m.mass())),
        path.display()
    ))
}

pub fn optimal_barrier(cfg: &RunConfig, sink: &Sink, search: &SearchConfig, grid: &Option<GridSpec>) -> CliResult<String> {
    let probe = cfg.valuation(cfg.auxiliary()?.b.unwrap_or(1.0))?;
    let b = find_b_omega(&probe, search)?;
    let ctx = probe.with_barrier(b)?;
    let b_path = sink.text("b_omega.txt", &format!("{}\n", num(b)))?;

    let mut h = Table::new(["b", "h"]);
    for x in grid_or(grid, 0.0, 2.0 * b, 81) {
        // h is defined for b > 0; its limit at 0 is read just above it.
        let at = if x > 0.0 { x } else { 1e-10 };
        h.push(vec![x, root_function(&probe, at)?]);
    }
    let h_path = sink.table("h_profile", &h)?;

    let xs: Vec<f64> = (1..=400).map(|k| 3.0 * b * k as f64 / 400.0).collect();
    let r = certify_slopes(&ctx, &xs);
    let mut report = String::new();
    let _ = writeln!(report, "b_omega = {}", num(b));
    let _ = writeln!(report, "derivative_at_barrier = {}", num(ctx.derivative_at_barrier()));
    let _ = writeln!(report, "h(b_omega) = {}", num(ctx.barrier_root_value()));
    let _ = writeln!(report, "slope_violation_below_barrier = {}", num(r.below_barrier));
    let _ = writeln!(report, "slope_violation_above_barrier = {}", num(r.above_barrier));
    let _ = writeln!(report, "derivative_increase = {}", num(r.derivative_increase));
    let _ = writeln!(report, "value_decrease = {}", num(r.value_decrease));
    let _ = writeln!(report, "convexity = {}", num(r.convexity));
    let _ = writeln!(report, "max_violation = {}", num(r.max_violation()));
    let cert_path = sink.text("certification.txt", &report)?;
    let _ = writeln!(report, "wrote {}\nwrote {}\nwrote {}", b_path.display(), h_path.display(), cert_path.display());
    Ok(report)
}

pub fn regime_solve(cfg: &RunConfig, sink: &Sink) -> CliResult<String> {
    let reg = cfg.regime()?;
    let fp = cfg.fixed_point()?;
    let sol = solve_fixed_point(&reg, &fp)?;
    let m = reg.n_states();

    let mut log = Table::new(["n", "rho", "regridded"].into_iter().map(String::from).chain((0..m).map(|i| format!("b_{i}"))));
    for rec in &sol.log {
        let mut row = vec![rec.n as f64, rec.rho, if rec.regridded { 1.0 } else { 0.0 }];
        row.extend(&rec.barriers);
        log.push(row);
    }
    let log_path = sink.table("iterations", &log)?;
    let b_path = sink.text("barriers.csv", &barriers_csv(&sol.barriers))?;

    let mut values = Table::new(std::iter::once("x".to_string()).chain((0..m).map(|i| format!("value_{i}"))));
    for (k, &x) in sol.value.knots().iter().enumerate() {
        let mut row = vec![x];
        row.extend((0..m).map(|i| sol.value.values(i)[k]));
        values.push(row);
    }
    let v_path = sink.table("regime_value", &values)?;

    let mut report = format!("iterations = {}\nbeta = {}\n", sol.log.len(), num(reg.beta()));
    for (i, b) in sol.barriers.iter().enumerate() {
        let _ = writeln!(report, "b_{i} = {}", num(*b));
    }
    if let Some(rho) = sol.contraction_ratios().into_iter().fold(None, |a: Option<f64>, r| Some(a.map_or(r, |a| a.max(r)))) {
        let _ = writeln!(report, "max_contraction_ratio = {}", num(rho));
    }
    let _ = writeln!(report, "wrote {}\nwrote {}\nwrote {}", log_path.display(), b_path.display(), v_path.display());
    Ok(report)
}

/// Flags of the `simulate` subcommand.
#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub ids: Vec<String>,
    pub x0: Vec<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub state: usize,
    pub barrier: BarrierChoice,
}

/// One JSON line of `simulate` output.
#[derive(Serialize)]
struct Record<'a> {
    id: &'a str,
    x0: f64,
    mean: f64,
    se: f64,
    n: usize,
    seed: u64,
}

fn record(id: &str, x0: f64, est: &MCEstimate) -> String {
    let r = Record { id, x0, mean: est.mean, se: est.std_error, n: est.n_paths, seed: est.seed };
    serde_json::to_string(&r).expect("plain record serializes")
}

pub fn simulate(cfg: &RunConfig, sink: &Sink, args: &SimulateArgs) -> CliResult<String> {
    let sim = cfg.simulation(args.paths, args.seed)?;
    if args.x0.is_empty() {
        return Err(Failure::validation("give at least one --x0"));
    }
    let mut out = String::new();
    if cfg.raw.regime.is_some() {
        let reg = cfg.regime()?;
        let barriers = match (&args.barrier.b_file, &cfg.raw.regime.as_ref().and_then(|r| r.barriers.clone())) {
            (Some(path), _) => read_barriers(path)?,
            (None, Some(bs)) => bs.clone(),
            (None, None) => return Err(cfg.invalid("regime.barriers", "give --b-file or regime.barriers")),
        };
        if barriers.len() != reg.n_states() {
            return Err(cfg.invalid("regime.barriers", format!("expected {} barriers, got {}", reg.n_states(), barriers.len())));
        }
        for id in &args.ids {
            if id != "value" {
                return Err(Failure::validation(format!("only the \"value\" id is available for a regime config, got {id:?}")));
            }
        }
        for &x0 in &args.x0 {
            let est = simulate_regime(&reg, &barriers, x0, args.state, &sim)?;
            out.push_str(&record("value", x0, &est));
            out.push('\n');
        }
    } else {
        let b = args.barrier.resolve(cfg)?;
        let needs_ctx = args.ids.iter().any(|id| id == "value");
        let ctx: Option<Valuation> = if needs_ctx { Some(cfg.valuation(b)?) } else { None };
        let kernels = {
            let model = cfg.model()?;
            let aux = cfg.auxiliary()?;
            pdiv::Kernels::new(&model, aux.delta + aux.lambda, aux.gamma, b).map_err(|e| cfg.lift(e))?
        };
        for id in &args.ids {
            for &x0 in &args.x0 {
                let est = match (id.as_str(), &ctx) {
                    ("value", Some(ctx)) => simulate_double_barrier(ctx, x0, &sim)?.value,
                    _ => {
                        let kid: KernelId = id.parse()?;
                        simulate_kernel(&kernels, kid, x0, &sim)?
                    }
                };
                out.push_str(&record(id, x0, &est));
                out.push('\n');
            }
        }
    }
    let path = sink.text("simulate.jsonl", &out)?;
    Ok(format!("{out}wrote {}\n", path.display()))
}

pub fn hjb_check(cfg: &RunConfig, sink: &Sink, barrier: &BarrierChoice, grid: &Option<GridSpec>) -> CliResult<String> {
    let b = barrier.resolve(cfg)?;
    let ctx = cfg.valuation(b)?;
    let xs = match grid {
        Some(g) => g.points(),
        None => (0..60).map(|k| 3.0 * b * (k as f64 + 0.5) / 60.0).collect(),
    };
    let mut t = Table::new(["x", "value", "derivative", "generator", "obstacle", "max_term", "argmax"]);
    let (mut worst_below, mut worst_above, mut worst_obstacle) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for x in xs {
        if x <= 0.0 || x == b {
            continue;
        }
        let r = ctx.hjb_residual(x)?;
        if x < b {
            worst_below = worst_below.max(r.generator.abs());
        } else {
            worst_above = worst_above.max(r.generator);
        }
        worst_obstacle = worst_obstacle.max(r.obstacle);
        t.push(vec![x, ctx.value_double_barrier(x), ctx.value_derivative(x), r.generator, r.obstacle, r.max_term, r.argmax]);
    }
    let path = sink.table("hjb", &t)?;
    Ok(format!(
        "b = {}\nmax_abs_generator_below_barrier = {}\nmax_generator_above_barrier = {}\nmax_obstacle = {}\nwrote {}\n",
        num(b),
        num(worst_below),
        num(worst_above),
        num(worst_obstacle),
        path.display()
    ))
}
