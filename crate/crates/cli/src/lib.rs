//! The `choice` command line.

pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use choice_core::audits::{
    anonymity_check_ordinal, anonymity_check_ratings, clone_test, default_grid, manipulation_search_cardinal,
    manipulation_search_ordinal, AuditedRule, CloneOrders, CloneSpec, ANONYMITY_TRIALS,
};
use choice_core::cardinal::{aggregate_ratings, cc_score, compose_multiwinner_response, greedy_cc, k_borda, CardinalRuleId, RatingProfile};
use choice_core::feedback::{compile_constraints, interpret_rating, parse_feedback};
use choice_core::judgment::{check_consistency, closest_consistent, majority_judgments, Agenda, JudgmentProfile};
use choice_core::ordinal::{random_dictator, OrdinalRuleId};
use choice_core::pipeline::{run_pipeline, PipelineConfig, SimulationDataset};
use choice_core::profile::{detect_cycles, format_profile, margin_matrix, parse_profile, Alternative, OrdinalProfile};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::report::{sha256_hex, Format, InputDigest, RunReport};

#[derive(Debug, Parser)]
#[command(name = "choice", version, about = "Aggregate human feedback with social choice rules")]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Social ranking of a ballot file.
    Aggregate {
        /// plurality, borda, irv, ranked-pairs or random-dictator
        #[arg(long)]
        rule: String,
        #[arg(long)]
        profile: PathBuf,
    },
    /// Cardinal aggregation of a ratings file.
    Rate {
        /// mean or median
        #[arg(long, visible_alias = "w")]
        rule: String,
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Multi-winner committee of a ballot file.
    Committee {
        /// k-borda or greedy-cc
        #[arg(long)]
        rule: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        profile: PathBuf,
        /// JSON object mapping alternative ids to response texts.
        #[arg(long)]
        texts: Option<PathBuf>,
    },
    /// Proposition-wise majority over an agenda.
    Judge {
        #[arg(long)]
        agenda: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
    },
    /// Parse verbal feedback statements and compile them.
    ParseFeedback {
        /// Comma-separated alternative ids.
        #[arg(long)]
        alternatives: String,
        /// Statement file, `-` for stdin.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a pipeline config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the SFT dataset or reward model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Property audits.
    Audit {
        #[command(subcommand)]
        audit: Audit,
    },
}

#[derive(Debug, Subcommand)]
enum Audit {
    /// Clone-independence test.
    Clones {
        #[arg(long)]
        rule: String,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        copies: usize,
        #[arg(long, value_enum, default_value = "rotate")]
        clone_order: CloneOrderArg,
    },
    /// Exhaustive misreport search for one voter.
    Manipulation(ManipulationArgs),
    /// Condorcet winner and majority cycles.
    Cycle {
        #[arg(long)]
        profile: PathBuf,
    },
    /// Output invariance under seeded voter shuffles.
    Anonymity {
        #[arg(long)]
        rule: String,
        #[arg(long, conflicts_with = "ratings", required_unless_present = "ratings")]
        profile: Option<PathBuf>,
        /// Ratings JSON file.
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ManipulationArgs {
    /// Ordinal rule; needs --profile.
    #[arg(long, conflicts_with = "w", required_unless_present = "w", requires = "profile")]
    rule: Option<String>,
    /// Cardinal rule (mean or median); needs --ratings.
    #[arg(long, requires = "ratings")]
    w: Option<String>,
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Comma-separated ratings, one per rater.
    #[arg(long)]
    ratings: Option<String>,
    /// Voter index (0-based, over unit voters).
    #[arg(long)]
    voter: usize,
    /// Comma-separated report grid for cardinal search.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CloneOrderArg {
    /// Ballot i gets the clone order rotated by i.
    Rotate,
    Lexicographic,
}

/// Failure kinds and their exit codes.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<choice_core::Error> for CliError {
    fn from(e: choice_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_input(path: &Path) -> CliResult<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Input(format!("stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: choice_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_profile(path: &Path, digest: &mut InputDigest) -> CliResult<OrdinalProfile> {
    let text = read_input(path)?;
    digest.add("profile", text.as_bytes());
    parse_profile(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_ratings(path: &Path, digest: &mut InputDigest) -> CliResult<RatingProfile> {
    let text = read_input(path)?;
    digest.add("ratings", text.as_bytes());
    with_path(path, RatingProfile::from_json(&text))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("{what}: {x:?} is not a number")))
        })
        .collect()
}

fn ordinal_rule(name: &str) -> CliResult<OrdinalRuleId> {
    Ok(name.parse()?)
}

fn cmd_aggregate(rule: &str, profile: &Path, seed: u64) -> CliResult<(InputDigest, Value)> {
    let mut digest = InputDigest::new();
    digest.add("rule", rule.as_bytes());
    let p = load_profile(profile, &mut digest)?;
    if matches!(rule.to_ascii_lowercase().replace('_', "-").as_str(), "random-dictator") {
        let (lottery, drawn) = random_dictator(&p, seed);
        return Ok((
            digest,
            json!({"rule": "random_dictator", "lottery": lottery.probabilities, "winner": drawn}),
        ));
    }
    let r = ordinal_rule(rule)?;
    let social = r.apply(&p);
    let mut v = to_value(&social);
    v["rule"] = json!(r.as_str());
    v["winner"] = json!(social.winner());
    Ok((digest, v))
}

fn cmd_rate(rule: &str, ratings: &Path) -> CliResult<(InputDigest, Value)> {
    let mut digest = InputDigest::new();
    digest.add("rule", rule.as_bytes());
    let w: CardinalRuleId = rule.parse()?;
    let rp = load_ratings(ratings, &mut digest)?;
    let agg = aggregate_ratings(&rp, w)?;
    let mut ranking: Vec<(&Alternative, f64)> = agg.iter().map(|(a, v)| (a, *v)).collect();
    ranking.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(y.0)));
    let ranking: Vec<&Alternative> = ranking.into_iter().map(|(a, _)| a).collect();
    Ok((digest, json!({"rule": w.as_str(), "aggregates": agg, "ranking": ranking, "evaluators": rp.evaluators().len()})))
}

fn cmd_committee(rule: &str, k: usize, profile: &Path, texts: Option<&Path>) -> CliResult<(InputDigest, Value)> {
    let mut digest = InputDigest::new();
    digest.add("rule", rule.as_bytes()).add("k", &(k as u64).to_le_bytes());
    let p = load_profile(profile, &mut digest)?;
    let (name, committee) = match rule.to_ascii_lowercase().replace('_', "-").as_str() {
        "k-borda" => ("k_borda", k_borda(&p, k)?),
        "greedy-cc" | "cc" => ("greedy_cc", greedy_cc(&p, k)?),
        other => return Err(CliError::Input(format!("unknown committee rule {other:?}; use k-borda or greedy-cc"))),
    };
    let idx: Vec<usize> = committee.winners.iter().map(|a| p.index_of(a.as_str()).expect("winner exists")).collect();
    let mut v = json!({"rule": name, "k": k, "winners": committee.winners, "cc_score": cc_score(&p, &idx)});
    if let Some(path) = texts {
        let raw = read_input(path)?;
        digest.add("texts", raw.as_bytes());
        let map: HashMap<String, String> =
            serde_json::from_str(&raw).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        v["response"] = json!(compose_multiwinner_response(&committee, &map)?);
    }
    Ok((digest, v))
}

fn cmd_judge(agenda: &Path, judgments: &Path) -> CliResult<(InputDigest, Value)> {
    let mut digest = InputDigest::new();
    let agenda_text = read_input(agenda)?;
    let judgment_text = read_input(judgments)?;
    digest.add("agenda", agenda_text.as_bytes()).add("judgments", judgment_text.as_bytes());
    let a = with_path(agenda, Agenda::from_json(&agenda_text))?;
    let jp = with_path(judgments, JudgmentProfile::from_json(a.clone(), &judgment_text))?;
    let majority = majority_judgments(&jp)?;
    let consistent = check_consistency(&majority, &a)?;
    let repair = if consistent {
        Value::Null
    } else {
        let (fixed, distance) = closest_consistent(&majority, &a)?;
        json!({"judgments": fixed, "distance": distance})
    };
    Ok((
        digest,
        json!({"agenda": a.to_string(), "majority": majority, "consistent": consistent, "repair": repair}),
    ))
}

fn cmd_parse_feedback(alternatives: &str, input: &Path) -> CliResult<(InputDigest, Value)> {
    let mut digest = InputDigest::new();
    let text = read_input(input)?;
    digest.add("alternatives", alternatives.as_bytes()).add("feedback", text.as_bytes());
    let context = alternatives
        .split(',')
        .map(|s| Alternative::new(s.trim()))
        .collect::<choice_core::Result<Vec<_>>>()?;
    let stmts = parse_feedback(&text, &context).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let pp = compile_constraints(&stmts)?;
    let ratings: BTreeMap<&Alternative, f64> = context.iter().map(|a| (a, interpret_rating(&pp, a))).collect();
    let canonical: Vec<String> = stmts.iter().map(ToString::to_string).collect();
    let order: Vec<[&Alternative; 2]> = pp.strict_order.iter().map(|(b, w)| [b, w]).collect();
    let bounds: BTreeMap<&Alternative, [f64; 2]> = pp.bounds.iter().map(|(a, &(lo, hi))| (a, [lo, hi])).collect();
    Ok((
        digest,
        json!({
            "statements": stmts,
            "canonical": canonical,
            "strict_order": order,
            "bounds": bounds,
            "ratings": ratings,
        }),
    ))
}

fn cmd_simulate(config: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<(InputDigest, Value, u64)> {
    let mut digest = InputDigest::new();
    let cfg_text = read_input(config)?;
    let cfg: PipelineConfig =
        serde_json::from_str(&cfg_text).map_err(|e| CliError::Input(format!("{}: {e}", config.display())))?;
    let data_path = config.parent().unwrap_or(Path::new(".")).join(&cfg.dataset);
    let data_text = read_input(&data_path)?;
    digest.add("config", cfg_text.as_bytes()).add("dataset", data_text.as_bytes());
    let data = with_path(&data_path, SimulationDataset::from_json(&data_text))?;
    let seed = seed.unwrap_or(cfg.seed);
    let run = run_pipeline(&cfg, &data, seed)?;
    let artifact = run.artifact();
    let mut v = to_value(&run);
    v["artifact_digest"] = json!(sha256_hex(artifact.as_bytes()));
    if let Some(path) = out {
        fs::write(path, &artifact).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    }
    Ok((digest, v, seed))
}

fn cmd_audit(audit: &Audit, seed: u64) -> CliResult<(InputDigest, Value)> {
    let mut digest = InputDigest::new();
    match audit {
        Audit::Clones {
            rule,
            profile,
            target,
            copies,
            clone_order,
        } => {
            let r = ordinal_rule(rule)?;
            let p = load_profile(profile, &mut digest)?;
            digest.add("rule", rule.as_bytes()).add("target", target.as_bytes()).add("copies", &(*copies as u64).to_le_bytes());
            if *copies < 1 {
                return Err(CliError::Input("--copies must be at least 1".into()));
            }
            let orders = match clone_order {
                CloneOrderArg::Rotate => CloneOrders::Rotating,
                CloneOrderArg::Lexicographic => CloneOrders::Lexicographic,
            };
            let spec = CloneSpec::new(target.as_str(), *copies).with_orders(orders);
            let verdict = clone_test(r, &p, &spec)?;
            let mut v = to_value(&verdict);
            v["parameters"] = json!({"rule": r.as_str(), "target": target, "copies": copies, "clone_order": spec.orders});
            v["profile_digest"] = json!(sha256_hex(format_profile(&p).as_bytes()));
            Ok((digest, v))
        }
        Audit::Manipulation(args) => {
            let (witness, params, profile_digest) = if let Some(rule) = &args.rule {
                let r = ordinal_rule(rule)?;
                let path = args.profile.as_ref().expect("clap requires --profile");
                let p = load_profile(path, &mut digest)?;
                digest.add("rule", rule.as_bytes());
                let w = manipulation_search_ordinal(r, &p, args.voter)?;
                (w, json!({"rule": r.as_str(), "voter": args.voter}), sha256_hex(format_profile(&p).as_bytes()))
            } else {
                let name = args.w.as_ref().expect("clap requires --rule or --w");
                let w: CardinalRuleId = name.parse()?;
                let raw = args.ratings.as_ref().expect("clap requires --ratings");
                let ratings = parse_list(raw, "--ratings")?;
                let grid = match &args.grid {
                    Some(g) => parse_list(g, "--grid")?,
                    None => default_grid(),
                };
                digest.add("w", name.as_bytes()).add("ratings", raw.as_bytes());
                let found = manipulation_search_cardinal(w, &ratings, args.voter, &grid)?;
                (
                    found,
                    json!({"w": w.as_str(), "voter": args.voter, "grid": grid}),
                    sha256_hex(raw.as_bytes()),
                )
            };
            digest.add("voter", &(args.voter as u64).to_le_bytes());
            let verdict = if witness.is_some() { "manipulable" } else { "none" };
            Ok((
                digest,
                json!({"verdict": verdict, "witness": witness, "parameters": params, "profile_digest": profile_digest}),
            ))
        }
        Audit::Cycle { profile } => {
            let p = load_profile(profile, &mut digest)?;
            let mm = margin_matrix(&p);
            let mut v = to_value(&detect_cycles(&mm));
            let margins: BTreeMap<&str, BTreeMap<&str, i64>> = p
                .alternatives()
                .iter()
                .enumerate()
                .map(|(a, x)| {
                    let row = p.alternatives().iter().enumerate().map(|(b, y)| (y.as_str(), mm.get(a, b))).collect();
                    (x.as_str(), row)
                })
                .collect();
            v["margins"] = json!(margins);
            v["verdict"] = json!(if v["cycles"].as_array().is_some_and(|c| !c.is_empty()) { "cycle" } else { "acyclic" });
            v["profile_digest"] = json!(sha256_hex(format_profile(&p).as_bytes()));
            Ok((digest, v))
        }
        Audit::Anonymity { rule, profile, ratings } => {
            digest.add("rule", rule.as_bytes());
            let r: AuditedRule = rule.parse()?;
            let (anonymous, profile_digest) = match (profile, ratings, r) {
                (_, Some(path), AuditedRule::Cardinal(w)) => {
                    let rp = load_ratings(path, &mut digest)?;
                    (anonymity_check_ratings(w, &rp, seed), sha256_hex(rp.to_json().as_bytes()))
                }
                (Some(path), None, _) => {
                    let p = load_profile(path, &mut digest)?;
                    (anonymity_check_ordinal(r, &p, seed)?, sha256_hex(format_profile(&p).as_bytes()))
                }
                _ => return Err(CliError::Input("ordinal rules need --profile; mean and median need --ratings".into())),
            };
            Ok((
                digest,
                json!({
                    "verdict": if anonymous { "anonymous" } else { "violated" },
                    "parameters": {"rule": rule, "trials": ANONYMITY_TRIALS},
                    "profile_digest": profile_digest,
                }),
            ))
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Aggregate { .. } => "aggregate",
        Command::Rate { .. } => "rate",
        Command::Committee { .. } => "committee",
        Command::Judge { .. } => "judge",
        Command::ParseFeedback { .. } => "parse-feedback",
        Command::Simulate { .. } => "simulate",
        Command::Audit { audit } => match audit {
            Audit::Clones { .. } => "audit clones",
            Audit::Manipulation(_) => "audit manipulation",
            Audit::Cycle { .. } => "audit cycle",
            Audit::Anonymity { .. } => "audit anonymity",
        },
    }
}

pub fn execute(cli: &Cli) -> CliResult<String> {
    let mut seed = cli.seed.unwrap_or(0);
    let (digest, result) = match &cli.command {
        Command::Aggregate { rule, profile } => cmd_aggregate(rule, profile, seed)?,
        Command::Rate { rule, ratings } => cmd_rate(rule, ratings)?,
        Command::Committee { rule, k, profile, texts } => cmd_committee(rule, *k, profile, texts.as_deref())?,
        Command::Judge { agenda, judgments } => cmd_judge(agenda, judgments)?,
        Command::ParseFeedback { alternatives, input } => cmd_parse_feedback(alternatives, input)?,
        Command::Simulate { config, out } => {
            let (d, v, used) = cmd_simulate(config, out.as_deref(), cli.seed)?;
            seed = used;
            (d, v)
        }
        Command::Audit { audit } => cmd_audit(audit, seed)?,
    };
    Ok(RunReport::new(command_name(&cli.command), &digest, seed, result).render(cli.format))
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
                    if e.exit_code() == 0 =>
                {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(&cli)))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(CliError::Internal(msg))
        });
    match outcome {
        Ok(text) => match stdout.write_all(text.as_bytes()) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(stderr, "internal error: stdout: {e}");
                2
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}
