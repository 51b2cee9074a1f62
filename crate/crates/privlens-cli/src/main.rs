use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use privlens::deduce::Analysis;
use privlens::dsl::{self, Scenario};
use privlens::report::{self, Format, SystemResult};
use privlens::term::ContextRef;
use privlens::trace::{self, DeterminabilityOptions, SystemState};
use privlens::views::View;

#[derive(Parser)]
#[command(name = "privlens", version, about = "Detectability and linkability analysis of protocol traces")]
struct Cli {
    /// Print validity details and timings on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct RunOpts {
    /// Output format.
    #[arg(long, default_value = "table", value_parser = parse_format)]
    format: Format,
    /// Skip the trace validity check.
    #[arg(long)]
    no_validate: bool,
    /// Print the items or contexts behind each verdict.
    #[arg(long)]
    witnesses: bool,
    /// Let a determined item lie in any domain of the profile.
    #[arg(long)]
    any_domain: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate one scenario's requirements on its final state.
    Analyze {
        scenario: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Evaluate several scenarios against their shared requirements.
    Compare {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Inspect a scenario state.
    Query {
        scenario: PathBuf,
        /// Use the state after this many transmissions instead of the final one.
        #[arg(long)]
        after: Option<usize>,
        #[command(subcommand)]
        q: Query,
    },
}

#[derive(Subcommand)]
enum Query {
    /// Derivation of a term by an actor or comma-separated coalition.
    Derive { actors: String, term: String },
    /// Detectable items and associability classes.
    View { actors: String },
    /// Whether two items, or two contexts `(dom,prof)`, are associable.
    Assoc { actors: String, left: String, right: String },
    /// A determinability witness for a term.
    Determinable {
        actor: String,
        term: String,
        #[arg(long)]
        any_domain: bool,
    },
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.cmd {
        Cmd::Analyze { scenario, opts } => {
            let sc = load(scenario)?;
            let r = run_one(&sc, opts, cli.verbose)?;
            let cols: Vec<String> = sc.suite.requirements.iter().map(|r| r.name.clone()).collect();
            print!("{}", report::render(std::slice::from_ref(&r), &cols, opts.format, opts.witnesses));
            Ok(if r.all_hold() { 0 } else { 1 })
        }
        Cmd::Compare { scenarios, opts } => {
            let scs = scenarios.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Scenario> = scs.iter().collect();
            let cols = report::suite_columns(&refs)?;
            let results = scs.iter().map(|sc| run_one(sc, opts, cli.verbose)).collect::<Result<Vec<_>>>()?;
            print!("{}", report::render(&results, &cols, opts.format, opts.witnesses));
            Ok(0)
        }
        Cmd::Query { scenario, after, q } => {
            let sc = load(scenario)?;
            let state = state_after(&sc, *after)?;
            query(&sc, &state, q)
        }
    }
}

fn load(p: &Path) -> Result<Scenario> {
    dsl::load(p).with_context(|| format!("loading {}", p.display()))
}

fn run_one(sc: &Scenario, opts: &RunOpts, verbose: bool) -> Result<SystemResult> {
    let t0 = Instant::now();
    let validate = (!opts.no_validate).then_some(DeterminabilityOptions { any_domain: opts.any_domain });
    let r = report::analyze(sc, validate)?;
    if verbose {
        eprintln!("{}: {} transmissions, {:.1?}", sc.name, sc.trace.len(), t0.elapsed());
        if r.validity.checked {
            eprint!("{}", r.validity.render(&sc.model));
        }
        let shared = sc.model.shared_profiles();
        if !shared.is_empty() {
            eprintln!("{}: profile labels used in several domains: {}", sc.name, shared.join(" "));
        }
    }
    if !r.validity.valid() {
        bail!("{}: trace is not valid\n{}", sc.name, r.validity.render(&sc.model).trim_end());
    }
    Ok(r)
}

fn state_after(sc: &Scenario, after: Option<usize>) -> Result<SystemState> {
    let n = after.unwrap_or(sc.trace.len());
    if n > sc.trace.len() {
        bail!("trace has only {} transmissions", sc.trace.len());
    }
    let (st, _) = trace::evolve(&sc.model, &sc.initial, &sc.trace[..n], None)?;
    Ok(st)
}

fn coalition(s: &str) -> Vec<String> {
    s.split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect()
}

fn parse_ctx(s: &str) -> Option<ContextRef> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    let (d, p) = inner.split_once(',')?;
    let dot = |x: &str| if x.trim() == "." { privlens::term::DOT.to_string() } else { x.trim().to_string() };
    Some(ContextRef::new(dot(d), dot(p)))
}

fn query(sc: &Scenario, state: &SystemState, q: &Query) -> Result<u8> {
    let m = &sc.model;
    match q {
        Query::Derive { actors, term } => {
            let kb = state.coalition_kb(&coalition(actors))?;
            let t = dsl::parse_term(m, term)?;
            let an = Analysis::new(m, &kb);
            match an.derivable(&t) {
                Some(d) => {
                    print!("{}", d.render(m));
                    Ok(0)
                }
                None => {
                    println!("not derivable: {}", m.show(&t));
                    Ok(1)
                }
            }
        }
        Query::View { actors } => {
            let kb = state.coalition_kb(&coalition(actors))?;
            print!("{}", View::of_kb(m, &kb).render(m));
            Ok(0)
        }
        Query::Assoc { actors, left, right } => {
            let kb = state.coalition_kb(&coalition(actors))?;
            let v = View::of_kb(m, &kb);
            let yes = match (parse_ctx(left), parse_ctx(right)) {
                (Some(a), Some(b)) => {
                    for c in [&a, &b] {
                        if m.items_in(c).is_empty() {
                            bail!("unknown context {}", c);
                        }
                    }
                    v.ctx_associable(m, &a, &b)
                }
                (None, None) => v.assoc(dsl::parse_item(m, left)?, dsl::parse_item(m, right)?),
                _ => return Err(anyhow!("compare two items or two contexts")),
            };
            println!("{}", if yes { "associable" } else { "not associable" });
            Ok(if yes { 0 } else { 1 })
        }
        Query::Determinable { actor, term, any_domain } => {
            let t = dsl::parse_term(m, term)?;
            let opts = DeterminabilityOptions { any_domain: *any_domain };
            match trace::determinable(m, state, actor, &t, opts)? {
                Some(n) => {
                    println!("{}", m.show(&n));
                    Ok(0)
                }
                None => {
                    println!("not determinable: {}", m.show(&t));
                    Ok(1)
                }
            }
        }
    }
}
