//! `selfish-lb`: run mechanisms, round, price, compute optima, fuzz and
//! reproduce counterexamples from the command line.
//!
//! Exit codes: 0 success or expected violation reproduced, 1 unexpected
//! violation, 2 usage or input error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use selfish_lb::baselines::{
    fixtures, run_llw, run_variant_double_before_allocate, run_variant_double_with_last, run_waterfill,
};
use selfish_lb::io::load_instance;
use selfish_lb::lqnorm::QParam;
use selfish_lb::makespan::{run_with, unit_time};
use selfish_lb::mechanism::{Mechanism, Outcome};
use selfish_lb::model::Instance;
use selfish_lb::oracles::{lb_lq, lb_makespan, opt_lq_bruteforce, opt_makespan_bruteforce};
use selfish_lb::payments::{compute_ledger, utilities};
use selfish_lb::rounding::round_independent;
use selfish_lb::truthlab::{
    self, bench_ratio, check_job_monotone, check_lambda_stability, check_machine_monotone, BenchConfig, FuzzConfig,
    OracleChoice, SizeDist, SuiteReport, ViolationReport,
};
use selfish_lb::{Error, Rat};

#[derive(Parser)]
#[command(
    name = "selfish-lb",
    version,
    about = "Truthful online load balancing on related machines"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a mechanism on an instance.
    Run(RunArgs),
    /// Run a mechanism and round its fractions into an assignment.
    Round(RoundArgs),
    /// Job charges, machine payments and utilities.
    Pay(PayArgs),
    /// Offline optimum or lower bound.
    Opt(OptArgs),
    /// Double each machine's speed; fractions and loads must not drop.
    TestMonotone(FuzzArgs),
    /// Double each machine's speed; Λ must stay within a factor 2 below.
    TestLambda(FuzzArgs),
    /// Scan job sizes over the breakpoint grid; unit time must not rise.
    TestJob(FuzzArgs),
    /// Misreport grids with payments and voluntary participation.
    TestIncentives(FuzzArgs),
    /// Competitive ratios against an oracle, one CSV row per instance.
    Bench(BenchArgs),
    /// Reproduce a known counterexample.
    Counterexample(CounterArgs),
}

#[derive(Args)]
struct MechArgs {
    /// makespan, lq, llw, waterfill, variant-c or variant-d.
    #[arg(long, default_value = "makespan")]
    mechanism: String,
    /// q for the lq mechanism: inf, an integer or num/den.
    #[arg(long)]
    q: Option<String>,
}

impl MechArgs {
    fn get(&self) -> Result<Mechanism, Error> {
        let q = self.q.as_deref().map(str::parse::<QParam>).transpose()?;
        Mechanism::from_parts(&self.mechanism, q)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Trace,
    Summary,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    mech: MechArgs,
    #[arg(long, value_enum, default_value = "summary")]
    emit: Emit,
    /// Also round the fractions with `--seed`.
    #[arg(long)]
    round: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RoundArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    mech: MechArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PayArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    mech: MechArgs,
    /// Charge jobs against realized completion times of a rounding with `--seed`.
    #[arg(long)]
    round: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `trace` adds the job and machine allocation curves.
    #[arg(long, value_enum, default_value = "summary")]
    emit: Emit,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Bruteforce,
    Lb,
    None,
}

impl From<OracleArg> for OracleChoice {
    fn from(o: OracleArg) -> Self {
        match o {
            OracleArg::Bruteforce => OracleChoice::Bruteforce,
            OracleArg::Lb => OracleChoice::Lb,
            OracleArg::None => OracleChoice::None,
        }
    }
}

#[derive(Args)]
struct OptArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Objective; defaults to the makespan.
    #[arg(long, default_value = "inf")]
    q: String,
    #[arg(long, value_enum, default_value = "bruteforce")]
    oracle: OracleArg,
}

/// `7` or `1..16` (inclusive).
fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse(), b.trim().trim_start_matches('=').parse()),
        None => (s.trim().parse(), s.trim().parse()),
    };
    match (lo, hi) {
        (Ok(lo), Ok(hi)) if 1 <= lo && lo <= hi => Ok((lo, hi)),
        _ => Err(format!("expected N or LO..HI with 1 <= LO <= HI, got {s:?}")),
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SizesArg {
    Dyadic,
    Rational,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Machines per instance: N or LO..HI.
    #[arg(long, value_parser = parse_range, default_value = "1..16")]
    m: (usize, usize),
    /// Jobs per instance: N or LO..HI.
    #[arg(long, value_parser = parse_range, default_value = "1..50")]
    n: (usize, usize),
    #[arg(long, value_enum, default_value = "dyadic")]
    sizes: SizesArg,
}

impl PoolArgs {
    fn config(&self, mechanism: Mechanism, shrink: bool) -> FuzzConfig {
        FuzzConfig {
            trials: self.trials,
            m_range: self.m,
            n_range: self.n,
            sizes: match self.sizes {
                SizesArg::Dyadic => SizeDist::Dyadic { boundary: 0.25 },
                SizesArg::Rational => SizeDist::Rational,
            },
            seed: self.seed,
            mechanism,
            shrink,
            ..FuzzConfig::default()
        }
    }
}

#[derive(Args)]
struct FuzzArgs {
    /// Check this instance instead of random ones.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Violation reports as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    mech: MechArgs,
    #[command(flatten)]
    pool: PoolArgs,
    /// Minimize every violating instance.
    #[arg(long)]
    shrink: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchEmit {
    Csv,
    Json,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    mech: MechArgs,
    #[command(flatten)]
    pool: PoolArgs,
    #[arg(long, value_enum, default_value = "lb")]
    oracle: OracleArg,
    /// Roundings per instance.
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long, value_enum, default_value = "csv")]
    emit: BenchEmit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Counter {
    Llw,
    Waterfill,
    VariantC,
    VariantD,
}

#[derive(Args)]
struct CounterArgs {
    #[arg(value_enum)]
    which: Counter,
    /// Violation report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with an exit code.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Invariant(_)) { 1 } else { 2 };
        Fail(code, e.to_string())
    }
}

type Res<T> = Result<T, Fail>;

fn emit(out: &Option<PathBuf>, text: &str) -> Res<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Fail(2, format!("writing {}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())
                .and_then(|_| so.flush())
                .map_err(|e| Fail(2, e.to_string()))
        }
    }
}

/// Pretty JSON with a `schema` tag in front.
fn tagged<T: Serialize>(schema: &str, body: &T) -> Res<String> {
    let mut v = serde_json::to_value(body).map_err(|e| Fail(2, e.to_string()))?;
    let mut obj = serde_json::Map::new();
    obj.insert("schema".into(), Value::String(format!("selfish-lb.{schema}.v1")));
    match &mut v {
        Value::Object(m) => obj.append(m),
        other => {
            obj.insert("data".into(), other.take());
        }
    }
    Ok(serde_json::to_string_pretty(&Value::Object(obj)).unwrap() + "\n")
}

fn objective_label(m: &Mechanism) -> Value {
    match m {
        Mechanism::Lq(q) => json!(q.to_string()),
        Mechanism::Makespan | Mechanism::VariantC | Mechanism::VariantD => json!("inf"),
        _ => Value::Null,
    }
}

fn summary(mech: &Mechanism, inst: &Instance, o: &Outcome) -> Value {
    let completion = o.completion_times();
    let makespan = completion.iter().max().cloned().unwrap_or_else(Rat::zero);
    json!({
        "objective": objective_label(mech),
        "m": inst.m(),
        "n": inst.n(),
        "loads": o.loads(),
        "completion_times": completion,
        "makespan": makespan,
        "final_lambda": o.final_lambda,
        "unit_times": (0..inst.n()).map(|j| o.unit_time(j)).collect::<Vec<_>>(),
    })
}

fn fractions_csv(o: &Outcome) -> Res<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["job", "machine", "fraction", "fraction_f64"])
        .map_err(|e| Fail(2, e.to_string()))?;
    for (j, row) in o.rows.iter().enumerate() {
        for (i, x) in row {
            w.write_record([
                (j + 1).to_string(),
                (i + 1).to_string(),
                x.to_string(),
                x.to_f64().to_string(),
            ])
            .map_err(|e| Fail(2, e.to_string()))?;
        }
    }
    String::from_utf8(w.into_inner().map_err(|e| Fail(2, e.to_string()))?).map_err(|e| Fail(2, e.to_string()))
}

fn cmd_run(a: RunArgs) -> Res<u8> {
    let inst = load_instance(&a.input)?;
    let mech = a.mech.get()?;
    let o = mech.run(&inst)?;
    let rounding = if a.round {
        Some(round_independent(&o.rows, &inst.jobs, &inst.speeds, a.seed)?)
    } else {
        None
    };
    let text = match a.emit {
        Emit::Trace => {
            let mut v = match mech.config() {
                Some(cfg) => serde_json::to_value(run_with(&inst, cfg)?).unwrap(),
                None => serde_json::to_value(&o).unwrap(),
            };
            if let Some(r) = &rounding {
                v["rounding"] = serde_json::to_value(r).unwrap();
            }
            tagged(if mech.config().is_some() { "trace" } else { "outcome" }, &v)?
        }
        Emit::Summary => {
            let mut v = summary(&mech, &inst, &o);
            if let Some(r) = &rounding {
                v["rounding"] = serde_json::to_value(r).unwrap();
            }
            tagged("summary", &v)?
        }
        Emit::Csv => fractions_csv(&o)?,
    };
    emit(&a.out, &text)?;
    Ok(0)
}

fn cmd_round(a: RoundArgs) -> Res<u8> {
    let inst = load_instance(&a.input)?;
    let o = a.mech.get()?.run(&inst)?;
    let r = round_independent(&o.rows, &inst.jobs, &inst.speeds, a.seed)?;
    emit(&a.out, &tagged("assignment", &r)?)?;
    Ok(0)
}

fn cmd_pay(a: PayArgs) -> Res<u8> {
    let inst = load_instance(&a.input)?;
    let mech = a.mech.get()?;
    let cfg = match (&mech, mech.config()) {
        (Mechanism::Makespan | Mechanism::Lq(_), Some(c)) => c,
        _ => return Err(Fail(2, format!("payments are defined for makespan and lq, not {mech}"))),
    };
    let realized = if a.round {
        let o = mech.run(&inst)?;
        Some(round_independent(&o.rows, &inst.jobs, &inst.speeds, a.seed)?)
    } else {
        None
    };
    let ledger = compute_ledger(&inst, cfg, realized.as_ref())?;
    let u = utilities(&inst, &ledger);
    let mut v = json!({
        "objective": objective_label(&mech),
        "mode": ledger.mode,
        "job_charges": ledger.job_charges,
        "job_finish": ledger.job_finish,
        "job_utilities": u.jobs,
        "machine_payments": ledger.machine_payments,
        "machine_loads": ledger.machine_loads,
        "machine_utilities": u.machines,
    });
    if let Some(r) = &realized {
        v["rounding"] = serde_json::to_value(r).unwrap();
    }
    if matches!(a.emit, Emit::Trace) {
        v["job_curves"] = serde_json::to_value(&ledger.job_curves).unwrap();
        v["machine_curves"] = serde_json::to_value(&ledger.machine_curves).unwrap();
    }
    emit(&a.out, &tagged("payments", &v)?)?;
    Ok(0)
}

fn cmd_opt(a: OptArgs) -> Res<u8> {
    let inst = load_instance(&a.input)?;
    let q: QParam = a.q.parse()?;
    let v = match (a.oracle, q) {
        (OracleArg::Bruteforce, QParam::Inf) => serde_json::to_value(opt_makespan_bruteforce(&inst)?).unwrap(),
        (OracleArg::Bruteforce, q) => serde_json::to_value(opt_lq_bruteforce(&inst, &q)?).unwrap(),
        (OracleArg::Lb, QParam::Inf) => {
            json!({ "value": { "exact": lb_makespan(&inst) }, "method": "lower-bound", "witness": null })
        }
        (OracleArg::Lb, q) => {
            json!({ "value": { "approx": lb_lq(&inst, &q) }, "method": "lower-bound", "witness": null })
        }
        (OracleArg::None, _) => return Err(Fail(2, "opt needs --oracle bruteforce or lb".into())),
    };
    let mut v = v;
    v["q"] = json!(q.to_string());
    emit(&a.out, &tagged("opt", &v)?)?;
    Ok(0)
}

#[derive(Clone, Copy)]
enum Suite {
    Monotone,
    Lambda,
    Job,
    Incentives,
}

fn cmd_fuzz(a: FuzzArgs, suite: Suite) -> Res<u8> {
    let mech = a.mech.get()?;
    let report = match &a.input {
        Some(path) => {
            let inst = load_instance(path)?;
            let c = match suite {
                Suite::Monotone => check_machine_monotone(&mech, &inst, None)?,
                Suite::Lambda => check_lambda_stability(&mech, &inst, None)?,
                Suite::Job => check_job_monotone(&mech, &inst, None)?,
                Suite::Incentives => truthlab::check_incentives(&mech, &inst, None)?,
            };
            let mut violations = c.reports;
            if a.shrink {
                for v in &mut violations {
                    v.minimized = Some(truthlab::shrink(v)?);
                }
            }
            SuiteReport {
                trials: 1,
                audited: c.audited,
                violations,
            }
        }
        None => {
            let cfg = a.pool.config(mech.clone(), a.shrink);
            match suite {
                Suite::Monotone => truthlab::test_machine_monotone(&cfg)?,
                Suite::Lambda => truthlab::test_lambda_stability(&cfg)?,
                Suite::Job => truthlab::test_job_monotone(&cfg)?,
                Suite::Incentives => truthlab::test_incentives(&cfg)?,
            }
        }
    };
    for v in &report.violations {
        println!("{}", v.summary());
    }
    println!(
        "{} trials, {} traces audited, {} violations ({mech})",
        report.trials,
        report.audited,
        report.violations.len()
    );
    if let Some(p) = &a.out {
        std::fs::write(p, tagged("violations", &report)?)
            .map_err(|e| Fail(2, format!("writing {}: {e}", p.display())))?;
    }
    Ok(if report.violations.is_empty() { 0 } else { 1 })
}

fn cmd_bench(a: BenchArgs) -> Res<u8> {
    let mech = a.mech.get()?;
    let cfg = BenchConfig {
        fuzz: a.pool.config(mech, false),
        oracle: a.oracle.into(),
        rounds: a.rounds,
    };
    let rows = bench_ratio(&cfg)?;
    let text = match a.emit {
        BenchEmit::Json => tagged("bench", &json!({ "rows": rows }))?,
        BenchEmit::Csv => {
            let mut w = csv::Writer::from_writer(vec![]);
            for r in &rows {
                w.serialize(r).map_err(|e| Fail(2, e.to_string()))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Fail(2, e.to_string()))?).unwrap()
        }
    };
    emit(&a.out, &text)?;
    let bad: usize = rows.iter().map(|r| r.feasibility_violations).sum();
    let over = rows.iter().filter(|r| r.envelope.is_some_and(|e| r.ratio > e)).count();
    if bad + over > 0 {
        eprintln!("{bad} feasibility violations, {over} ratios above the envelope");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_counterexample(a: CounterArgs) -> Res<u8> {
    let (fx, mech, report): (_, Mechanism, Vec<ViolationReport>) = match a.which {
        Counter::Llw => {
            let fx = fixtures::llw();
            let two = Rat::from_int(2);
            let before = run_llw(&fx.instance, &two)?.loads[2].clone();
            let after = run_llw(&fx.perturbed(), &two)?.loads[2].clone();
            println!("machine 3 load: {before} truthful, {after} after reporting speed 2");
            let mech = Mechanism::Llw { base: two };
            let r = check_machine_monotone(&mech, &fx.instance, Some(2))?.reports;
            (fx, mech, r)
        }
        Counter::Waterfill => {
            let fx = fixtures::waterfill();
            let before = run_waterfill(&fx.instance)?.loads[4].clone();
            let after = run_waterfill(&fx.perturbed())?.loads[4].clone();
            println!(
                "machine 5 load: {:.9} truthful, {:.9} after reporting speed 4",
                before.to_f64(),
                after.to_f64()
            );
            let r = check_machine_monotone(&Mechanism::Waterfill, &fx.instance, Some(4))?.reports;
            (fx, Mechanism::Waterfill, r)
        }
        Counter::VariantC => {
            let fx = fixtures::double_before_allocate();
            let s = &fx.instance.speeds;
            let u = unit_time(&run_variant_double_before_allocate(&fx.instance)?.records[4].row, s);
            let u2 = unit_time(&run_variant_double_before_allocate(&fx.perturbed())?.records[4].row, s);
            println!("job 5 unit processing time: {u} reporting 3, {u2} reporting 3+2^-20");
            let r = check_job_monotone(&Mechanism::VariantC, &fx.instance, Some(4))?.reports;
            (fx, Mechanism::VariantC, r)
        }
        Counter::VariantD => {
            let fx = fixtures::double_with_last();
            let l = run_variant_double_with_last(&fx.instance)?.final_lambda();
            let l2 = run_variant_double_with_last(&fx.perturbed())?.final_lambda();
            println!("final Λ={l}, Λ'={l2} with machine 2 at speed 8");
            let r = check_lambda_stability(&Mechanism::VariantD, &fx.instance, Some(1))?.reports;
            (fx, Mechanism::VariantD, r)
        }
    };
    for v in &report {
        println!("{}", v.summary());
    }
    if let Some(p) = &a.out {
        let body = json!({ "fixture": fx.name, "mechanism": mech, "violations": report });
        std::fs::write(p, tagged("counterexample", &body)?)
            .map_err(|e| Fail(2, format!("writing {}: {e}", p.display())))?;
    }
    if report.len() == 1 {
        Ok(0)
    } else {
        println!("expected exactly one violation, found {}", report.len());
        Ok(1)
    }
}

fn threads() -> Res<()> {
    let Ok(v) = std::env::var("SELFISH_LB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Fail(2, format!("SELFISH_LB_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Fail(2, e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = threads().and_then(|_| match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Round(a) => cmd_round(a),
        Cmd::Pay(a) => cmd_pay(a),
        Cmd::Opt(a) => cmd_opt(a),
        Cmd::TestMonotone(a) => cmd_fuzz(a, Suite::Monotone),
        Cmd::TestLambda(a) => cmd_fuzz(a, Suite::Lambda),
        Cmd::TestJob(a) => cmd_fuzz(a, Suite::Job),
        Cmd::TestIncentives(a) => cmd_fuzz(a, Suite::Incentives),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Counterexample(a) => cmd_counterexample(a),
    });
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
