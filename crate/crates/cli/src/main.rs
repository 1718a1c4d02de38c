//! Command-line front end: monitor synthesis, trace checking, network
//! simulation, the water-treatment case study, and a synthesis benchmark.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use enforcemint::calculus::parser::parse_controller;
use enforcemint::calculus::validate;
use enforcemint::combinators::CombinatorEnv;
use enforcemint::prop::{parse_property, parse_property_in};
use enforcemint::runtime::{run, Monitored, Network, SchedulerPolicy, TieBreak};
use enforcemint::scenario::{check_expectations, parse_config, run_scenario};
use enforcemint::trace::{Action, Trace};
use enforcemint::{check_derivative_bound, synthesize, GlobalProp, SynthContext};

/// Exit codes, stable across releases:
/// 0 success; 1 unreadable input or parse error; 2 ill-formed or
/// nondeterministic property, or unmet scenario expectations; 3 event
/// outside the declared alphabet; 4 tau in a checked trace; 5 trace
/// violates the property; 6 runtime failure.
#[derive(Parser)]
#[command(name = "enforcemint", version, about = "Edit-automaton enforcement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an edit automaton from a property file.
    Synth(SynthArgs),
    /// Classify a trace against a property: member, strict prefix, or
    /// violation.
    Check {
        /// Whitespace-separated trace file (e.g. `tick s:l1 a:on1 end`).
        trace_file: PathBuf,
        property_file: PathBuf,
    },
    /// Run a monitored controller network for a number of clock ticks.
    Simulate(SimulateArgs),
    /// Run a water-treatment case-study config.
    Scenario(ScenarioArgs),
    /// Synthesis cost table over a generated property family.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    property_file: PathBuf,
    /// One action per line (`s:x`, `a:y`, `c!z`, `c?z`, `tick`, `end`).
    alphabet_file: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Enables the property-combinator calls, which need a cycle-length
    /// bound.
    #[arg(long)]
    maxa: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Controller definition files, one network node each.
    controller_files: Vec<PathBuf>,
    /// Property files enforced per node, in node order (`-` for an
    /// unmonitored node).
    #[arg(long = "property")]
    properties: Vec<PathBuf>,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Resolve scheduling nondeterminism randomly (seeded) instead of by
    /// declaration order.
    #[arg(long)]
    random: bool,
    /// Trace CSV output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    config_file: PathBuf,
    /// Directory for report.json, trace.csv and levels.csv (summary on
    /// stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[run] horizon`.
    #[arg(long)]
    horizon: Option<usize>,
    /// Overrides `[run] scale`.
    #[arg(long)]
    scale: Option<f64>,
    /// Overrides `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Intersection depths to measure, as an inclusive range `LO..HI`.
    #[arg(long, default_value = "0..3")]
    depths: String,
    /// CSV output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn log_enabled() -> bool {
    std::env::var("ENFORCEMINT_LOG").map(|v| !v.is_empty() && v != "0").unwrap_or(false)
}

fn log(msg: &str) {
    if log_enabled() {
        eprintln!("enforcemint: {msg}");
    }
}

fn fail(code: u8, msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn read(path: &Path) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| fail(1, &format!("cannot read {}: {e}", path.display())))
}

fn write_out(out: &Option<PathBuf>, content: &str) -> Result<(), ExitCode> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(p) => fs::write(p, content)
            .map_err(|e| fail(6, &format!("cannot write {}: {e}", p.display()))),
    }
}

fn parse_alphabet(text: &str) -> Result<BTreeSet<Action>, String> {
    text.split_whitespace().map(Action::parse).collect()
}

fn load_property(
    text: &str,
    alphabet: &BTreeSet<Action>,
    maxa: Option<usize>,
) -> Result<GlobalProp, ExitCode> {
    let parsed = match maxa {
        None => parse_property(text),
        Some(m) => {
            let env = CombinatorEnv::new(m, alphabet.iter().cloned())
                .map_err(|e| fail(2, &e.to_string()))?;
            parse_property_in(text, &env)
        }
    };
    let e = parsed.map_err(|e| fail(1, &format!("property parse error: {e}")))?;
    if !e.well_formed() {
        return Err(fail(2, "property is not well formed: every branch must end in `end`"));
    }
    if !e.is_deterministic() {
        return Err(fail(
            2,
            "property is not semantically deterministic; monitor synthesis requires \
             deterministic properties",
        ));
    }
    let stray: Vec<String> =
        e.events_of().iter().filter(|a| !alphabet.contains(*a)).map(|a| a.to_string()).collect();
    if !stray.is_empty() {
        return Err(fail(3, &format!("events outside the alphabet: {}", stray.join(", "))));
    }
    Ok(e)
}

fn cmd_synth(a: &SynthArgs) -> Result<ExitCode, ExitCode> {
    let prop_text = read(&a.property_file)?;
    let alphabet = parse_alphabet(&read(&a.alphabet_file)?)
        .map_err(|e| fail(1, &format!("alphabet parse error: {e}")))?;
    let e = load_property(&prop_text, &alphabet, a.maxa)?;
    let ctx = SynthContext::new(alphabet);
    let aut = synthesize(&e, &ctx).map_err(|err| fail(2, &err.to_string()))?;
    let (states, bound, within) =
        check_derivative_bound(&e, &ctx).map_err(|err| fail(2, &err.to_string()))?;
    let body = match a.format {
        OutFormat::Json => aut.export_json(),
        OutFormat::Dot => aut.export_dot(),
    };
    write_out(&a.out, &body)?;
    eprintln!("states: {states}  bound m^(k+1): {bound}  within: {within}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(trace_file: &Path, property_file: &Path) -> Result<ExitCode, ExitCode> {
    let t = Trace::parse(&read(trace_file)?)
        .map_err(|e| fail(1, &format!("trace parse error: {e}")))?;
    if t.0.iter().any(|x| x.is_tau()) {
        return Err(fail(4, "trace contains tau; erase internal steps first (erase_tau)"));
    }
    let e = parse_property(&read(property_file)?)
        .map_err(|e| fail(1, &format!("property parse error: {e}")))?;
    if !e.well_formed() {
        return Err(fail(2, "property is not well formed"));
    }
    if e.lang_member(&t).map_err(|e| fail(2, e.as_str()))? {
        println!("member");
        Ok(ExitCode::SUCCESS)
    } else if e.lang_prefix(&t).map_err(|e| fail(2, e.as_str()))? {
        println!("strict-prefix");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("violation");
        Ok(ExitCode::from(5))
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<ExitCode, ExitCode> {
    if a.controller_files.is_empty() {
        return Err(fail(1, "at least one controller file is required"));
    }
    let mut nodes = Vec::new();
    for (i, path) in a.controller_files.iter().enumerate() {
        let (init, defs) = parse_controller(&read(path)?)
            .map_err(|e| fail(1, &format!("{}: {e}", path.display())))?;
        let report = validate(&init, &defs).map_err(|e| fail(2, &e.to_string()))?;
        log(&format!(
            "node {i}: maxa {} over {} actions",
            report.maxa,
            report.alphabet.len()
        ));
        let prop_path = a.properties.get(i).filter(|p| p.as_os_str() != "-");
        let node = match prop_path {
            None => Monitored::plain(init, defs),
            Some(p) => {
                let mut alphabet = report.alphabet.clone();
                alphabet.insert(Action::tick());
                alphabet.insert(Action::end());
                let e = load_property(&read(p)?, &alphabet, Some(report.maxa))?;
                let aut = synthesize(&e, &SynthContext::new(alphabet))
                    .map_err(|err| fail(2, &err.to_string()))?;
                Monitored::new(aut, init, defs).map_err(|err| fail(3, &err.to_string()))?
            }
        };
        nodes.push(node);
    }
    let policy = SchedulerPolicy {
        seed: a.seed,
        tie_break: if a.random { TieBreak::SeededRandom } else { TieBreak::FirstDeclared },
    };
    let outcome =
        run(&Network::new(nodes), policy, a.horizon).map_err(|e| fail(6, &e.to_string()))?;
    write_out(&a.out, &outcome.log.to_csv())?;
    eprintln!(
        "clock: {}  steps: {}  stuck: {}  ticks-under-tau: {}",
        outcome.network.clock,
        outcome.log.entries.len(),
        outcome.stuck_at.map(|c| c.to_string()).unwrap_or_else(|| "no".into()),
        outcome.tick_violations,
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_scenario(a: &ScenarioArgs) -> Result<ExitCode, ExitCode> {
    let mut cfg = parse_config(&read(&a.config_file)?).map_err(|e| fail(1, &e.to_string()))?;
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(s) = a.scale {
        cfg.scale = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| fail(1, &e.to_string()))?;
    let started = Instant::now();
    let report = run_scenario(&cfg).map_err(|e| fail(6, &e.to_string()))?;
    log(&format!("scenario finished in {:?}", started.elapsed()));
    match &a.out {
        None => println!("{}", report.summary_json()),
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| fail(6, &format!("cannot create {}: {e}", dir.display())))?;
            for (name, content) in [
                ("report.json", report.summary_json()),
                ("trace.csv", report.log.to_csv()),
                ("levels.csv", report.levels_csv.clone()),
            ] {
                fs::write(dir.join(name), content)
                    .map_err(|e| fail(6, &format!("cannot write {name}: {e}")))?;
            }
            println!("{}", report.summary_json());
        }
    }
    let checks = check_expectations(&report, &cfg.expect);
    let mut all_ok = true;
    for (key, want, actual, ok) in &checks {
        println!("expect {key} = {want}: {actual} [{}]", if *ok { "ok" } else { "FAIL" });
        all_ok &= ok;
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_bench(a: &BenchArgs) -> Result<ExitCode, ExitCode> {
    let (lo, hi) = match a.depths.split_once("..") {
        Some((l, h)) => (
            l.trim().parse::<usize>().map_err(|_| fail(1, "bad --depths range"))?,
            h.trim().parse::<usize>().map_err(|_| fail(1, "bad --depths range"))?,
        ),
        None => return Err(fail(1, "expected --depths LO..HI")),
    };
    // A fixed family of distinct star factors over a 4-action alphabet;
    // depth k intersects k+1 of them.
    // Each factor's language contains the next's, so every intersection
    // stays nonempty.
    let factors = [
        "(s:x . (a:y . end + end) + a:y . end + end)*",
        "(s:x . (a:y . end + end) + end)*",
        "(s:x . a:y . end + end)*",
        "(s:x . a:y . end)*",
    ];
    let alphabet: BTreeSet<Action> =
        ["s:x", "a:y", "tick", "end"].iter().map(|s| Action::parse(s).unwrap()).collect();
    let ctx = SynthContext::new(alphabet);
    let mut csv = String::from("depth,prop_size,states,bound,within_bound,micros\n");
    for depth in lo..=hi.min(factors.len() - 1) {
        if lo > hi {
            break;
        }
        let text = factors[..=depth].join(" & ");
        let e = parse_property(&text).expect("builtin family parses");
        let t = Instant::now();
        let (states, bound, within) =
            check_derivative_bound(&e, &ctx).map_err(|err| fail(2, &err.to_string()))?;
        csv.push_str(&format!(
            "{depth},{},{states},{bound},{within},{}\n",
            e.prop_size(),
            t.elapsed().as_micros()
        ));
    }
    write_out(&a.out, &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Check { trace_file, property_file } => cmd_check(trace_file, property_file),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match r {
        Ok(code) => code,
        Err(code) => code,
    }
}
