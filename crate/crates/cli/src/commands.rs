//! Execution of the subcommands.

use perc_core::decoupling::{
    choose_scales, estimate_transfer_chain, estimate_transfer_matrix, hopf_of_chain, verify_factorization_exact, ScaleSchedule,
    TransferConfig,
};
use perc_core::estimators::{
    cluster_census, crossing_rectangle, estimate_conditional, estimate_event_probability, estimate_pc, iic_first_limit,
    iic_second_limit, qm_ratio, shell_probe, CensusMode, ConditionalPlan, SeriesReport, DEFAULT_VERTEX_CAP,
};
use perc_core::events::{EventSpec, SetSpec};
use perc_core::exec::Exec;
use perc_core::lattice::Coord;
use perc_core::oracle::{exact_event_polynomial, exact_probability, verify_bk_chain};
use perc_core::slabqm::{qm_constant_report, verify_modification, QmProbe, SlabProbe};
use perc_core::{Error, LatticeSpec, Region};
use serde_json::json;

use crate::args::{Census, Command, FactorEvent, Geometry, GlobalArgs, Graph, TransferArgs};
use crate::manifest::RunManifest;
use crate::results::{ResultRow, RowContext};
use crate::suite;

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Missing or inconsistent flags; exit 1 with usage text.
    Usage(String),
    Core(Error),
    /// A checked property failed; exit 2.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// State shared by one invocation.
pub struct Ctx {
    pub g: GlobalArgs,
    pub spec: LatticeSpec,
    pub exec: Exec,
    pub manifest: RunManifest,
    pub rows: Vec<ResultRow>,
    /// Structured reports written next to the CSV.
    pub reports: Vec<(String, serde_json::Value)>,
    /// Extra text files (name, contents).
    pub texts: Vec<(String, String)>,
}

impl Ctx {
    pub fn new(g: GlobalArgs, manifest: RunManifest) -> Outcome<Self> {
        let spec = match g.graph {
            Graph::Hypercubic => LatticeSpec::hypercubic(g.d),
            Graph::Slab => {
                if g.d < 3 {
                    return Err(Failure::Usage("slab graphs need --d >= 3".into()));
                }
                LatticeSpec::slab(g.d, g.k)
            }
        };
        spec.validate()?;
        let exec = Exec::new(g.workers);
        Ok(Self {
            g,
            spec,
            exec,
            manifest,
            rows: Vec::new(),
            reports: Vec::new(),
            texts: Vec::new(),
        })
    }

    fn origin(&self) -> Coord {
        vec![0; self.spec.d]
    }

    fn p(&self) -> Outcome<f64> {
        self.g.p.ok_or_else(|| Failure::Usage("missing required flag --p".into()))
    }

    fn m(&self) -> Outcome<u32> {
        self.g.m.ok_or_else(|| Failure::Usage("missing required flag --m".into()))
    }

    fn n(&self) -> Outcome<u32> {
        self.g.n.ok_or_else(|| Failure::Usage("missing required flag --n".into()))
    }

    fn budget(&self, default: u64) -> u64 {
        self.g.budget.unwrap_or(default)
    }

    fn rows_ctx(&self, geometry: &str) -> RowContext {
        RowContext {
            run_id: self.manifest.run_id.clone(),
            graph: self.spec.name().to_string(),
            d: self.spec.d,
            k: self.spec.thickness(),
            geometry: geometry.to_string(),
            p: self.g.p,
            m: self.g.m,
            n: self.g.n,
            seed: self.g.seed,
        }
    }

    fn report(&mut self, value: impl serde::Serialize) -> Outcome<()> {
        let v = serde_json::to_value(value).map_err(Error::from)?;
        let name = self.manifest.subcommand.clone();
        self.reports.push((name, v));
        Ok(())
    }

    fn require_slab(&self) -> Outcome<()> {
        if !self.spec.is_slab() {
            return Err(Failure::Usage(format!("{} needs --graph slab", self.manifest.subcommand)));
        }
        Ok(())
    }
}

/// Parses the event syntax: `name` or `name:a,b`, or a JSON event object.
///
/// Names: `sure`, `impossible`, `star`, `edge`, `corner`, `arm[:n]`,
/// `e1[:m,n]`, `e2[:m,n]`, `f[:m,n]`, `circuit[:m]`. Missing numbers come
/// from `--m` and `--n`.
pub fn parse_event(text: &str, d: usize, m: Option<u32>, n: Option<u32>) -> Outcome<EventSpec> {
    let text = text.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text).map_err(|e| Failure::Usage(format!("bad event JSON: {e}")));
    }
    let (name, rest) = text.split_once(':').unwrap_or((text, ""));
    let nums: Vec<u32> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|s| s.trim().parse().map_err(|_| Failure::Usage(format!("bad number in event {text:?}"))))
            .collect::<Outcome<_>>()?
    };
    let arg = |i: usize, fallback: Option<u32>, flag: &str| -> Outcome<u32> {
        nums.get(i)
            .copied()
            .or(fallback)
            .ok_or_else(|| Failure::Usage(format!("event {name} needs {flag} or explicit numbers")))
    };
    let origin = vec![0; d];
    let mut unit = origin.clone();
    unit[0] = 1;
    Ok(match name {
        "sure" => EventSpec::Sure,
        "impossible" => EventSpec::Impossible,
        "star" => EventSpec::Star { center: origin },
        "edge" => EventSpec::Cylinder {
            edges: vec![(origin, unit)],
            states: None,
        },
        "corner" => {
            let mut far = unit.clone();
            far[1] = 1;
            EventSpec::Connect {
                x: SetSpec::Vertices { coords: vec![origin] },
                y: SetSpec::Vertices { coords: vec![far] },
                z: SetSpec::All,
            }
        }
        "arm" => EventSpec::one_arm(&origin, arg(0, n, "--n")?),
        "e1" => EventSpec::e1(&origin, arg(0, m, "--m")?, arg(1, n, "--n")?),
        "e2" => EventSpec::e2(&origin, arg(0, m, "--m")?, arg(1, n, "--n")?),
        "f" => EventSpec::unique(&origin, arg(0, m, "--m")?, arg(1, n, "--n")?),
        "circuit" => EventSpec::Circuit { m: arg(0, m, "--m")? },
        _ => return Err(Failure::Usage(format!("unknown event {name:?}"))),
    })
}

fn geometry_name(g: Geometry) -> &'static str {
    match g {
        Geometry::Ball => "ball",
        Geometry::Box => "box",
        Geometry::Rectangle => "rectangle",
        Geometry::Square => "square",
    }
}

fn build_region(ctx: &Ctx, g: Geometry) -> Outcome<Region> {
    let n = ctx.n()?;
    let spec = ctx.spec;
    let layers = |lo: &mut Vec<i32>, hi: &mut Vec<i32>| {
        for _ in 2..spec.d {
            lo.push(0);
            hi.push(spec.thickness().map_or(0, |k| k as i32));
        }
    };
    Ok(match g {
        Geometry::Ball => Region::ball(spec, &ctx.origin(), n)?,
        Geometry::Box if spec.is_slab() => Region::slab_box(spec, n)?,
        Geometry::Box => {
            let n = n as i32;
            Region::rectangle(spec, &vec![-n; spec.d], &vec![n; spec.d])?
        }
        Geometry::Rectangle => crossing_rectangle(spec, n)?.0,
        Geometry::Square => {
            let (mut lo, mut hi) = (vec![0, 0], vec![n as i32, n as i32]);
            layers(&mut lo, &mut hi);
            Region::rectangle(spec, &lo, &hi)?
        }
    })
}

fn series_rows(rc: &RowContext, event: &str, estimator: &str, rep: &SeriesReport, set: impl Fn(&RowContext, f64) -> RowContext) -> Vec<ResultRow> {
    rep.params
        .iter()
        .zip(&rep.points)
        .map(|(&x, e)| set(rc, x).estimate(event, estimator, e))
        .collect()
}

fn transfer_config(t: &TransferArgs) -> TransferConfig {
    TransferConfig {
        top_k: t.top_k,
        row_budget: t.row_budget,
        column_budget: t.column_budget,
        sweeps: t.sweeps,
        bootstrap: t.bootstrap,
    }
}

fn conditional_plan(budget: u64, accepted: Option<u64>) -> ConditionalPlan {
    match accepted {
        Some(a) => ConditionalPlan::until_accepted(a, budget),
        None => ConditionalPlan::fixed(budget),
    }
}

/// The critical value to use: `--pc`, else the exact planar value.
fn resolve_pc(ctx: &mut Ctx, pc: Option<f64>) -> Outcome<f64> {
    if let Some(v) = pc {
        ctx.manifest.pc_provenance = Some(format!("user-supplied --pc {v}"));
        return Ok(v);
    }
    if !ctx.spec.is_slab() && ctx.spec.d == 2 {
        ctx.manifest.pc_provenance = Some("exact self-dual value 1/2 of hypercubic(2)".into());
        return Ok(0.5);
    }
    Err(Failure::Usage("missing required flag --pc (no exact value for this graph)".into()))
}

pub fn execute(cmd: &Command, ctx: &mut Ctx) -> Outcome<()> {
    let seed = ctx.g.seed;
    ctx.manifest.graph = json!({ "spec": ctx.spec, "name": ctx.spec.name() });
    match cmd {
        Command::Estimate { event, geometry } => {
            let p = ctx.p()?;
            let ev = parse_event(event, ctx.spec.d, ctx.g.m, ctx.g.n)?;
            let region = build_region(ctx, *geometry)?;
            let budget = ctx.budget(10_000);
            ctx.manifest.budgets = json!({ "samples": budget });
            ctx.manifest.parameters = json!({ "event": ev, "geometry": geometry_name(*geometry), "p": p });
            let est = estimate_event_probability(&region, p, &ev, budget, seed, &ctx.exec)?;
            let row = ctx.rows_ctx(geometry_name(*geometry)).estimate(&ev.label(), "mc", &est);
            ctx.rows.push(row);
        }
        Command::Conditional {
            target,
            condition,
            geometry,
            min_accepted,
            stop_at,
        } => {
            let p = ctx.p()?;
            let t = parse_event(target, ctx.spec.d, ctx.g.m, ctx.g.n)?;
            let c = parse_event(condition, ctx.spec.d, ctx.g.m, ctx.g.n)?;
            let region = build_region(ctx, *geometry)?;
            let plan = ConditionalPlan {
                budget: ctx.budget(100_000),
                min_accepted: *min_accepted,
                stop_at_accepted: *stop_at,
            };
            ctx.manifest.budgets = json!(plan);
            ctx.manifest.parameters = json!({ "target": t, "condition": c, "geometry": geometry_name(*geometry), "p": p });
            let est = estimate_conditional(&region, p, &t, &c, &plan, seed, &ctx.exec)?;
            let label = format!("{}|{}", t.label(), c.label());
            let row = ctx.rows_ctx(geometry_name(*geometry)).estimate(&label, "conditional", &est);
            ctx.rows.push(row);
        }
        Command::Qm { pc } => {
            let (p, m) = (ctx.p()?, ctx.m()?);
            let budget = ctx.budget(20_000);
            ctx.manifest.budgets = json!({ "samples": budget });
            if ctx.spec.is_slab() {
                let pc = pc.map(|v| resolve_pc(ctx, Some(v))).transpose()?;
                let region = Region::slab_box(ctx.spec, 4 * m)?;
                let probes = slab_probes(&region, m);
                ctx.manifest.parameters = json!({ "p": p, "m": m, "probes": probes, "region": "Q(4m)" });
                let rep = qm_constant_report(&region, p, m, &probes, budget, seed, pc, &ctx.exec)?;
                let rc = ctx.rows_ctx("slab-box");
                for pr in &rep.ratios {
                    ctx.rows.push(rc.estimate(&format!("qm:{}", pr.probe.label), "ratio", &pr.ratio.ratio));
                }
                ctx.report(&rep)?;
            } else {
                let (region, x, y, z) = shell_probe(ctx.spec, m)?;
                ctx.manifest.parameters = json!({ "p": p, "m": m, "probe": "shell: X=S(m/2), Y=S(6m), Z=B(6m)" });
                let r = qm_ratio(&region, p, &ctx.origin(), m, &z, &x, &y, budget, seed, &ctx.exec)?;
                let rc = ctx.rows_ctx("shell");
                ctx.rows.push(rc.estimate("qm:shell", "ratio", &r.ratio));
                for (name, e) in ["X<->Y", "X<->S", "Y<->S"].iter().zip(&r.parts) {
                    ctx.rows.push(rc.estimate(name, "mc", e));
                }
                ctx.report(&r)?;
            }
        }
        Command::IicFirst { n_list, event, accepted } => {
            let p = ctx.p()?;
            if n_list.is_empty() {
                return Err(Failure::Usage("missing required flag --n-list".into()));
            }
            let ev = parse_event(event, ctx.spec.d, ctx.g.m, ctx.g.n)?;
            let plan = conditional_plan(ctx.budget(100_000), *accepted);
            ctx.manifest.budgets = json!(plan);
            ctx.manifest.parameters = json!({ "p": p, "n_list": n_list, "event": ev });
            let rep = iic_first_limit(ctx.spec, &ctx.origin(), &ev, p, n_list, &plan, seed, &ctx.exec)?;
            let rc = ctx.rows_ctx("ball");
            let rows = series_rows(&rc, &ev.label(), "iic-first", &rep, |r, x| r.with_n(Some(x as u32)));
            ctx.rows.extend(rows);
            ctx.report(&rep)?;
        }
        Command::IicSecond {
            p_list,
            pc,
            proxy_n,
            event,
            accepted,
        } => {
            if p_list.is_empty() {
                return Err(Failure::Usage("missing required flag --p-list".into()));
            }
            let pc = resolve_pc(ctx, *pc)?;
            let ev = parse_event(event, ctx.spec.d, ctx.g.m, ctx.g.n)?;
            let plan = conditional_plan(ctx.budget(100_000), *accepted);
            ctx.manifest.budgets = json!(plan);
            ctx.manifest.parameters = json!({ "p_list": p_list, "pc": pc, "proxy_n": proxy_n, "event": ev });
            let rep = iic_second_limit(ctx.spec, &ctx.origin(), &ev, p_list, pc, *proxy_n, &plan, seed, &ctx.exec)?;
            let rc = ctx.rows_ctx("ball").with_n(Some(*proxy_n));
            let rows = series_rows(&rc, &ev.label(), "iic-second", &rep, |r, x| r.with_p(Some(x)));
            ctx.rows.extend(rows);
            ctx.report(&rep)?;
        }
        Command::Scales { eps, p_grid, max_n } => {
            let m = ctx.m()?;
            let budget = ctx.budget(20_000);
            ctx.manifest.budgets = json!({ "samples_per_grid_point": budget });
            ctx.manifest.parameters = json!({ "m": m, "eps": eps, "p_grid": p_grid, "max_n": max_n });
            let choice = choose_scales(ctx.spec, &ctx.origin(), m, *eps, p_grid, budget, *max_n, seed, &ctx.exec)?;
            let rc = ctx.rows_ctx("ball");
            for gp in &choice.grid {
                if let Some(e) = &gp.estimate {
                    let r = rc.with_p(Some(gp.p)).with_n(Some(gp.n));
                    ctx.rows.push(r.estimate(&format!("E2({m},{})|E1", gp.n), "conditional", e));
                }
            }
            ctx.report(&choice)?;
        }
        Command::Matrix { scales, i, j, transfer } => {
            let p = ctx.p()?;
            let ev = parse_event(&transfer.event, ctx.spec.d, ctx.g.m, ctx.g.n)?;
            let schedule = ScaleSchedule::new(&ctx.origin(), scales.clone())?;
            let cfg = transfer_config(transfer);
            ctx.manifest.budgets = json!(cfg);
            ctx.manifest.parameters = json!({ "p": p, "scales": scales, "i": i, "j": j, "event": ev });
            let mat = estimate_transfer_matrix(ctx.spec, &schedule, *i, *j, p, &ev, &cfg, seed, &ctx.exec)?;
            let rc = ctx.rows_ctx("ball");
            for (a, (row, se)) in mat.entries.iter().zip(&mat.stderr).enumerate() {
                for (b, (&x, &s)) in row.iter().zip(se).enumerate() {
                    ctx.rows.push(rc.value(&format!("M[{a},{b}]"), "transfer-entry", x, s, cfg.sweeps as u64));
                }
            }
            ctx.report(&mat)?;
        }
        Command::Hopf { scales, indices, transfer } => {
            let p = ctx.p()?;
            let ev = parse_event(&transfer.event, ctx.spec.d, ctx.g.m, ctx.g.n)?;
            let schedule = ScaleSchedule::new(&ctx.origin(), scales.clone())?;
            let cfg = transfer_config(transfer);
            ctx.manifest.budgets = json!(cfg);
            ctx.manifest.parameters = json!({ "p": p, "scales": scales, "indices": indices, "event": ev });
            let chain = estimate_transfer_chain(ctx.spec, &schedule, indices, p, &ev, &cfg, seed, &ctx.exec)?;
            let hopf = hopf_of_chain(&chain, cfg.bootstrap, seed)?;
            let rc = ctx.rows_ctx("ball");
            for (s, (&o, &se)) in hopf.osc.iter().zip(&hopf.osc_stderr).enumerate() {
                ctx.rows.push(rc.value(&format!("osc({s})"), "hopf", o, se, cfg.sweeps as u64));
            }
            ctx.rows.push(rc.value("kappa_sq", "hopf", hopf.kappa_sq, 0.0, cfg.sweeps as u64));
            if let (Some(x), Some(se)) = (hopf.xi_hat, hopf.xi_stderr) {
                ctx.rows.push(rc.value("xi", "hopf", x, se, cfg.sweeps as u64));
            }
            ctx.report(json!({ "hopf": hopf, "chain": chain }))?;
        }
        Command::SlabVerify { hits } => {
            ctx.require_slab()?;
            let p = ctx.p()?;
            let m = ctx.g.m.unwrap_or(1);
            let budget = ctx.budget(5_000_000);
            ctx.manifest.budgets = json!({ "samples": budget, "target_hits": hits });
            ctx.manifest.parameters = json!({ "p": p, "m": m, "probe": "standard" });
            let probe = SlabProbe::standard(ctx.spec, m)?;
            let sum = verify_modification(&probe, p, budget, *hits, seed, &ctx.exec)?;
            let rc = ctx.rows_ctx("slab-box").with_m(Some(m));
            let h = sum.hits();
            let frac = |x: u64| x as f64 / h as f64;
            let mut pass = rc.value("modification", "pass-fraction", frac(sum.passed), 0.0, sum.samples);
            pass.n_accepted = h;
            ctx.rows.push(pass);
            for (name, &c) in ["a1", "a2", "b1", "b2"].iter().zip(&sum.case_counts) {
                let mut r = rc.value(&format!("case:{name}"), "fraction", frac(c), 0.0, sum.samples);
                r.n_accepted = h;
                ctx.rows.push(r);
            }
            let mut edits = rc.value("max-edits", "max", sum.max_edits as f64, 0.0, sum.samples);
            edits.n_accepted = h;
            ctx.rows.push(edits);
            if !sum.failures.is_empty() {
                ctx.texts.push(("slab-verify-failures".into(), sum.failures.join("\n")));
            }
            let failed = sum.failed;
            ctx.report(&sum)?;
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} of {h} modifications failed")));
            }
        }
        Command::Pc { tolerance } => {
            let n = ctx.g.n.unwrap_or(64);
            let budget = ctx.budget(4_000);
            ctx.manifest.budgets = json!({ "samples": budget });
            ctx.manifest.parameters = json!({ "n": n, "tolerance": tolerance });
            let est = estimate_pc(ctx.spec, n, *tolerance, budget, seed, &ctx.exec)?;
            let rc = ctx.rows_ctx("rectangle").with_n(Some(n)).with_p(None);
            ctx.rows.push(rc.estimate("pc", "crossing-bisection", &est.estimate));
            ctx.rows.push(rc.with_p(Some(est.estimate.mean - 0.05)).estimate("crossing", "mc", &est.crossing_below));
            ctx.rows.push(rc.with_p(Some(est.estimate.mean + 0.05)).estimate("crossing", "mc", &est.crossing_above));
            ctx.report(&est)?;
        }
        Command::Census { mode, distances, margin } => {
            let (p, m) = (ctx.p()?, ctx.m()?);
            let budget = ctx.budget(10_000);
            let mode = match mode {
                Census::Crossing => CensusMode::CrossingCount,
                Census::TwoPoint => CensusMode::TwoPoint {
                    distances: distances.clone(),
                    margin: *margin,
                },
            };
            ctx.manifest.budgets = json!({ "samples": budget });
            ctx.manifest.parameters = json!({ "p": p, "m": m, "mode": mode });
            let rep = cluster_census(ctx.spec, m, p, &mode, budget, seed, DEFAULT_VERTEX_CAP, &ctx.exec)?;
            let rc = ctx.rows_ctx("ball");
            let name = match mode {
                CensusMode::CrossingCount => "crossing-count",
                CensusMode::TwoPoint { .. } => "two-point",
            };
            for (x, e) in rep.params.iter().zip(&rep.points) {
                ctx.rows.push(rc.estimate(&format!("{name}={x}"), "mc", e));
            }
            if let Some(s) = &rep.summary {
                ctx.rows.push(rc.estimate("crossing-count", "mean", s));
            }
            ctx.report(&rep)?;
        }
        Command::Oracle { event, geometry, p_grid } => {
            let ev = parse_event(event, ctx.spec.d, ctx.g.m, ctx.g.n)?;
            let region = build_region(ctx, *geometry)?;
            ctx.manifest.parameters = json!({ "event": ev, "geometry": geometry_name(*geometry), "p_grid": p_grid });
            let poly = exact_event_polynomial(&region, &ev)?;
            let rc = ctx.rows_ctx(geometry_name(*geometry));
            for &p in p_grid {
                let v = exact_probability(&poly, p)?;
                ctx.rows.push(rc.with_p(Some(p)).value(&ev.label(), "exact", v, 0.0, 0));
            }
            ctx.report(&poly)?;
        }
        Command::Bk { p_grid } => {
            let m = ctx.g.m.unwrap_or(1);
            let n = ctx.g.n.unwrap_or(2);
            let region = Region::ball(ctx.spec, &ctx.origin(), n)?;
            ctx.manifest.parameters = json!({ "m": m, "n": n, "p_grid": p_grid });
            let margins = verify_bk_chain(&region, &ctx.origin(), m, n, p_grid)?;
            let rc = ctx.rows_ctx("ball").with_m(Some(m)).with_n(Some(n));
            for b in &margins {
                let r = rc.with_p(Some(b.p));
                ctx.rows.push(r.value("E2", "exact", b.p_e2, 0.0, 0));
                if let Some(c) = b.conditional {
                    ctx.rows.push(r.value("E2|E1", "exact", c, 0.0, 0));
                }
            }
            let bad: Vec<f64> = margins.iter().filter(|b| b.holds == Some(false)).map(|b| b.p).collect();
            ctx.report(&margins)?;
            if !bad.is_empty() {
                return Err(Failure::Check(format!("BK chain violated at p = {bad:?}")));
            }
        }
        Command::Factorize { event, p_grid } => {
            if ctx.spec != LatticeSpec::hypercubic(2) {
                return Err(Failure::Usage("factorize runs on --graph hypercubic --d 2".into()));
            }
            let ev = match event {
                FactorEvent::Sure => EventSpec::Sure,
                FactorEvent::Edge => EventSpec::Cylinder {
                    edges: vec![(vec![2, 1], vec![3, 1])],
                    states: None,
                },
            };
            let region = Region::rectangle(ctx.spec, &[0, 0], &[4, 2])?;
            ctx.manifest.parameters = json!({ "event": ev, "strip": "[0,4]x[0,2]", "v": [2, 1], "w": [2, 1], "radii": [1, 2, 3], "p_grid": p_grid });
            let rep = verify_factorization_exact(&region, &[2, 1], &[2, 1], 1, 2, 3, &ev, p_grid)?;
            let rc = ctx.rows_ctx("strip").with_m(Some(1)).with_n(Some(3));
            for pt in &rep.points {
                let r = rc.with_p(Some(pt.p));
                ctx.rows.push(r.value(&format!("lhs:{}", ev.label()), "exact", pt.lhs, 0.0, 0));
                ctx.rows.push(r.value(&format!("rhs:{}", ev.label()), "exact", pt.rhs, 0.0, 0));
            }
            let dev = rep.max_abs_deviation;
            ctx.report(&rep)?;
            if dev > 1e-9 {
                return Err(Failure::Check(format!("factorization deviation {dev:e} exceeds 1e-9")));
            }
        }
        Command::Suite { quick, only } => {
            let ids: Vec<u32> = if !only.is_empty() {
                only.clone()
            } else if *quick {
                vec![1, 2, 3]
            } else {
                (1..=suite::CRITERIA).collect()
            };
            ctx.manifest.parameters = json!({ "criteria": ids });
            let sctx = suite::SuiteContext::new(ctx.g.out.join("suite"), ctx.g.workers, seed);
            let mut results = Vec::new();
            for id in ids {
                let r = suite::run_criterion(id, &sctx);
                println!("{}", r.line());
                results.push(r);
            }
            let failed = results.iter().filter(|r| !r.pass).count();
            ctx.report(&results)?;
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} acceptance criteria failed")));
            }
        }
        Command::Replay { .. } => unreachable!("replay is resolved before execution"),
    }
    Ok(())
}

/// Probe pairs of the slab constant report on `Q(4m)`.
pub fn slab_probes(region: &Region, m: u32) -> Vec<QmProbe> {
    let coords = |pred: &dyn Fn(&[i32]) -> bool| -> Vec<Coord> {
        region.set_where(pred).iter().map(|v| region.coord(v).to_vec()).collect()
    };
    let m = m as i32;
    let d = region.dim();
    let origin = vec![0; d];
    let on_axis = |c: &[i32], x: i32| c[0] == x && c[1] == 0;
    vec![
        QmProbe {
            label: "point-boundary".into(),
            x: vec![origin],
            y: coords(&|c| c[0].abs().max(c[1].abs()) == 4 * m),
        },
        QmProbe {
            label: "column-column".into(),
            x: coords(&|c| on_axis(c, 0)),
            y: coords(&|c| on_axis(c, 4 * m)),
        },
        QmProbe {
            label: "box-boundary".into(),
            x: coords(&|c| c[0].abs().max(c[1].abs()) <= m),
            y: coords(&|c| c[0].abs().max(c[1].abs()) == 4 * m),
        },
    ]
}
