//! Command-line front end. [`run`] takes argv and output sinks and returns
//! the process exit code, so it can be driven in-process by tests.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a Vulnerable verdict
//! when `--fail-on-vulnerable` is set.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::adversary::{run_attack, AttackId, AttackParams, Outcome};
use crate::conformance::{audit_text, conformance_matrix, explain, paging_scenario, audit_trace, RuleId};
use crate::endpoints::AcceptancePolicy;
use crate::profiles::{all_presets, resolve_profile, to_toml, validate, PRESET_NAMES};
use crate::proto::encode_trace;
use crate::DEFAULT_SEED;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VULNERABLE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    /// Machine-readable JSON.
    Structured,
}

#[derive(Debug, Parser)]
#[command(name = "privsim", version, about = "Deterministic 5G control-plane privacy simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario or one attack against a profile.
    Simulate {
        /// Preset name or path to a profile TOML file.
        #[arg(long)]
        profile: String,
        #[arg(long)]
        attack: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write the JSON Lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "permissive")]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        fail_on_vulnerable: bool,
    },
    /// Run every attack against every profile.
    Matrix {
        /// Comma-separated presets or profile files (default: all presets).
        #[arg(long, value_delimiter = ',')]
        profiles: Vec<String>,
        /// Comma-separated attack ids, `legacy` (default) or `all`.
        #[arg(long, value_delimiter = ',')]
        attacks: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value = "permissive")]
        policy: PolicyArg,
        /// Add a best-of-operator-SA column.
        #[arg(long)]
        combined: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        fail_on_vulnerable: bool,
    },
    /// Check a recorded trace against the audit rules.
    Audit {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated rule ids (default: all).
        #[arg(long, value_delimiter = ',')]
        rules: Vec<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// List the preset profiles and their compliance gaps.
    ListProfiles,
    /// List attack ids.
    ListAttacks,
    /// Print a profile as TOML (a starting point for custom profiles).
    ShowProfile { profile: String },
    /// Explain an attack, audit rule, enhancement or mechanism.
    Explain { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Strict,
    Permissive,
}

impl From<PolicyArg> for AcceptancePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Strict => AcceptancePolicy::Strict,
            PolicyArg::Permissive => AcceptancePolicy::Permissive,
        }
    }
}

struct Failure(i32, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_USAGE, e.to_string())
    }
}

fn params(policy: PolicyArg) -> AttackParams {
    AttackParams {
        policy: policy.into(),
        ..AttackParams::default()
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure(EXIT_USAGE, format!("cannot write {}: {e}", path.display())))
}

fn parse_attacks(ids: &[String]) -> Result<Vec<AttackId>, Failure> {
    match ids {
        [] => Ok(AttackId::LEGACY.to_vec()),
        [one] if one == "legacy" => Ok(AttackId::LEGACY.to_vec()),
        [one] if one == "all" => Ok(AttackId::ALL.to_vec()),
        _ => ids.iter().map(|s| s.parse::<AttackId>().map_err(Failure::from)).collect(),
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match cli.command {
        Command::Simulate {
            profile,
            attack,
            seed,
            trace,
            policy,
            format,
            fail_on_vulnerable,
        } => {
            let profile = resolve_profile(&profile)?;
            let Some(attack) = attack else {
                let t = paging_scenario(&profile, seed, 3, 24 * 3600)?;
                if let Some(path) = &trace {
                    write_file(path, &encode_trace(&t))?;
                }
                let findings = audit_trace(&t, &RuleId::all());
                match format {
                    Format::Text => {
                        writeln!(out, "{}: {} events", profile.name, t.len())?;
                        for f in &findings {
                            writeln!(out, "{} [{:?}] {}", f.rule, f.severity, f.explanation)?;
                        }
                    }
                    Format::Structured => writeln!(out, "{}", serde_json::to_string_pretty(&findings)?)?,
                }
                return Ok(EXIT_OK);
            };
            let id: AttackId = attack.parse()?;
            let (v, t) = run_attack(id, &profile, &params(policy), seed)?;
            if let Some(path) = &trace {
                write_file(path, &encode_trace(&t))?;
            }
            match format {
                Format::Text => {
                    let ev = v.evidence.iter().map(u64::to_string).collect::<Vec<_>>().join(", ");
                    writeln!(out, "{} on {}: {}", v.attack, v.profile, v.outcome)?;
                    writeln!(out, "property: {:?}", v.property_violated)?;
                    writeln!(out, "evidence: [{ev}]")?;
                }
                Format::Structured => writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?,
            }
            Ok(if fail_on_vulnerable && v.outcome == Outcome::Vulnerable {
                EXIT_VULNERABLE
            } else {
                EXIT_OK
            })
        }
        Command::Matrix {
            profiles,
            attacks,
            seed,
            policy,
            combined,
            format,
            out: path,
            fail_on_vulnerable,
        } => {
            let profiles = if profiles.is_empty() {
                all_presets()
            } else {
                profiles.iter().map(|p| resolve_profile(p)).collect::<Result<_, _>>()?
            };
            let attacks = parse_attacks(&attacks)?;
            let mut report = conformance_matrix(&profiles, &attacks, seed, &params(policy))?;
            if combined {
                report = report.with_combined_sa();
            }
            let text = match format {
                Format::Text => report.render_text(),
                Format::Structured => report.to_json(),
            };
            match &path {
                Some(p) => write_file(p, &text)?,
                None => out.write_all(text.as_bytes())?,
            }
            let vulnerable = report.cells.iter().flatten().any(|o| *o == Outcome::Vulnerable);
            Ok(if fail_on_vulnerable && vulnerable {
                EXIT_VULNERABLE
            } else {
                EXIT_OK
            })
        }
        Command::Audit { trace, rules, format } => {
            let text = fs::read_to_string(&trace)
                .map_err(|e| Failure(EXIT_USAGE, format!("cannot read {}: {e}", trace.display())))?;
            let rules = if rules.is_empty() {
                RuleId::all()
            } else {
                rules.iter().map(|r| r.parse::<RuleId>()).collect::<Result<_, _>>()?
            };
            let findings = audit_text(&text, &rules)?;
            match format {
                Format::Text => {
                    if findings.is_empty() {
                        writeln!(out, "no findings")?;
                    }
                    for f in &findings {
                        let ev = f.events.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
                        writeln!(out, "{} [{:?}] events {ev}: {}", f.rule, f.severity, f.explanation)?;
                    }
                }
                Format::Structured => writeln!(out, "{}", serde_json::to_string_pretty(&findings)?)?,
            }
            Ok(EXIT_OK)
        }
        Command::ListProfiles => {
            for name in PRESET_NAMES {
                let p = resolve_profile(name)?;
                let gaps: Vec<String> = validate(&p).iter().map(|f| f.enhancement.to_string()).collect();
                let gaps = if gaps.is_empty() { "-".to_owned() } else { gaps.join(",") };
                writeln!(out, "{name:14} gaps: {gaps}")?;
            }
            Ok(EXIT_OK)
        }
        Command::ListAttacks => {
            for a in AttackId::ALL {
                writeln!(out, "{a}")?;
            }
            Ok(EXIT_OK)
        }
        Command::ShowProfile { profile } => {
            out.write_all(to_toml(&resolve_profile(&profile)?).as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Explain { id } => {
            out.write_all(explain(&id)?.as_bytes())?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}
