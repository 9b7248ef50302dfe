//! `mlaudit` command line. Commands act on a local store directory; `serve`
//! exposes the same store over HTTP.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mlaudit_core::canonical::to_canonical_bytes;
use mlaudit_core::fieldwork::{AccessBasis, ArtifactType, EvidenceKind};
use mlaudit_core::ids::{ActorId, AuditId, EvidenceId, StepId};
use mlaudit_core::lifecycle::StepStatus;
use mlaudit_core::monitoring::MetricKind;
use mlaudit_core::reporting::{render, ReportFormat};
use mlaudit_core::risk_assessment::Requirement;
use mlaudit_core::risk_register::RiskRegisterEntry;
use mlaudit_core::workflow::{Audit, AuditKind, Command, CreateAudit, EvidenceSource, QuestionFormat, TemplateChoice};

use crate::api::{self, parse_enum};
use crate::config::Config;
use crate::ops::{ErrorKind, EvidenceUpload, MonitorRequest, Service, ServiceError};

#[derive(Debug, Parser)]
#[command(name = "mlaudit", version, about = "Lifecycle-scoped audits of machine-learning systems")]
pub struct Cli {
    /// Store directory; overrides the configuration file.
    #[arg(long, global = true, env = "MLAUDIT_STORE")]
    store: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true, env = "MLAUDIT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    format: Output,
    /// Name recorded on every command.
    #[arg(long, global = true, env = "MLAUDIT_ACTOR", default_value = "cli")]
    actor: String,
    /// Fail with a conflict unless the audit is at this revision.
    #[arg(long, global = true)]
    expected_revision: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    /// Canonical JSON, one document per invocation.
    Canonical,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    #[command(subcommand)]
    Audit(AuditCmd),
    #[command(subcommand)]
    Questions(QuestionsCmd),
    #[command(subcommand)]
    Evidence(EvidenceCmd),
    #[command(subcommand)]
    Monitor(MonitorCmd),
    #[command(subcommand)]
    Report(ReportCmd),
    #[command(subcommand)]
    Bundle(BundleCmd),
    #[command(subcommand)]
    Register(RegisterCmd),
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum AuditCmd {
    New {
        id: String,
        #[arg(long)]
        title: String,
        /// first-party, second-party, third-party or black-box
        #[arg(long, value_parser = enum_arg::<AuditKind>)]
        kind: AuditKind,
        #[arg(long)]
        target: String,
    },
    List,
    Show {
        id: String,
    },
    /// Assess one lifecycle step.
    Scope {
        id: String,
        step: String,
        /// pending, in-scope, not-relevant or not-auditable
        #[arg(value_parser = enum_arg::<StepStatus>)]
        status: StepStatus,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    Owner {
        id: String,
        step: String,
        /// Omit to clear the owner.
        owner: Option<String>,
    },
    /// Declare where evidence for a step will come from.
    Source {
        id: String,
        step: String,
        description: String,
        #[arg(long, value_parser = enum_arg::<AccessBasis>)]
        access: AccessBasis,
        #[arg(long)]
        unavailable: bool,
    },
    Gate {
        id: String,
    },
    Advance {
        id: String,
    },
    /// Apply any command given as JSON, e.g. `{"command":"derive_concerns"}`.
    Command {
        id: String,
        /// File with the command, or `-` for stdin.
        file: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum QuestionsCmd {
    Import {
        id: String,
        file: PathBuf,
        /// csv or json; taken from the file extension when omitted.
        #[arg(long = "as", value_parser = enum_arg::<QuestionFormat>)]
        question_format: Option<QuestionFormat>,
    },
    /// Questions retained by the current scope.
    Filter {
        id: String,
        #[arg(long = "requirement", value_parser = enum_arg::<Requirement>)]
        requirements: Vec<Requirement>,
    },
}

#[derive(Debug, Subcommand)]
enum EvidenceCmd {
    Add {
        id: String,
        file: PathBuf,
        #[arg(long = "evidence-id")]
        evidence_id: String,
        #[arg(long, value_parser = enum_arg::<EvidenceKind>)]
        kind: EvidenceKind,
        #[arg(long, value_parser = enum_arg::<ArtifactType>, default_value = "document")]
        artifact_type: ArtifactType,
        #[arg(long = "step")]
        steps: Vec<String>,
        #[arg(long, value_parser = enum_arg::<AccessBasis>)]
        access: AccessBasis,
        #[arg(long)]
        locator: Option<String>,
        #[arg(long)]
        supersedes: Option<String>,
    },
    /// Re-hash stored evidence; exits non-zero on any mismatch.
    Verify {
        id: String,
        #[arg(long = "evidence-id")]
        evidence_id: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum MonitorCmd {
    /// Run a monitor over an NDJSON prediction log.
    Run {
        id: String,
        log: PathBuf,
        #[command(flatten)]
        spec: MonitorArgs,
    },
}

#[derive(Debug, Args)]
struct MonitorArgs {
    #[arg(long = "monitor-id")]
    monitor_id: String,
    #[arg(long)]
    batch_size: usize,
    /// conditional-independence-ratio (default) or error-rate
    #[arg(long, value_parser = enum_arg::<MetricKind>)]
    metric: Option<MetricKind>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    min_group_size: Option<u32>,
    #[arg(long)]
    protected_attr: Option<String>,
    #[arg(long)]
    stratum_attr: Option<String>,
    /// Keep only failing batches in the record.
    #[arg(long)]
    failures_only: bool,
}

#[derive(Debug, Subcommand)]
enum ReportCmd {
    Compile {
        id: String,
    },
    /// Write a stored report; the latest one unless an iteration is given.
    Render {
        id: String,
        #[arg(long)]
        iteration: Option<u32>,
        #[arg(long = "as", default_value = "markdown")]
        render_as: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum BundleCmd {
    Export {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Import {
        file: PathBuf,
        #[arg(long)]
        rename: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum RegisterCmd {
    /// Add an entry from a JSON file.
    Add { file: PathBuf },
    /// Ingest an external incident feed (CSV).
    Feed {
        file: PathBuf,
        #[arg(long)]
        feed: String,
    },
    Query {
        #[arg(long = "step")]
        steps: Vec<String>,
        #[arg(long, value_parser = enum_arg::<Requirement>)]
        requirement: Option<Requirement>,
    },
}

/// Accepts kebab/snake case for PascalCase wire names, or the wire name itself.
fn enum_arg<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).or_else(|_| parse_enum(s))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Other(#[from] Box<dyn std::error::Error + Send + Sync>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Service(e) => match e.kind() {
                ErrorKind::NotFound => 3,
                ErrorKind::Conflict => 4,
                ErrorKind::Rejected => 5,
                ErrorKind::BadRequest => 2,
                ErrorKind::Internal => 1,
            },
            CliError::Usage(_) => 2,
            CliError::File { .. } | CliError::Other(_) => 1,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf).map_err(|source| CliError::File { path: path.into(), source })?;
        return Ok(buf);
    }
    std::fs::read(path).map_err(|source| CliError::File { path: path.into(), source })
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::File { path: p.into(), source }),
        None => std::io::stdout().write_all(bytes).map_err(|source| CliError::File { path: "<stdout>".into(), source }),
    }
}

struct Ctx {
    service: Service,
    output: Output,
    actor: ActorId,
    expected: Option<u64>,
}

impl Ctx {
    /// Prints `value` as canonical JSON or as the given text.
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> Result<(), CliError> {
        match self.output {
            Output::Canonical => {
                let mut bytes = to_canonical_bytes(value).map_err(|e| CliError::Other(Box::new(e)))?;
                bytes.push(b'\n');
                write_out(None, &bytes)
            }
            Output::Text => write_out(None, format!("{}\n", text()).as_bytes()),
        }
    }

    fn applied(&self, audit: &Audit) -> Result<(), CliError> {
        let summary = serde_json::json!({ "audit": audit.id, "revision": audit.revision, "phase": audit.phase() });
        self.emit(&summary, || format!("{} at revision {} ({:?})", audit.id, audit.revision, audit.phase()))
    }

    fn execute(&self, id: &str, command: Command) -> Result<(), CliError> {
        let audit = self.service.execute(&AuditId::new(id), self.expected, &self.actor, command)?;
        self.applied(&audit)
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let mut config = Config::from_process_env(cli.config.as_deref()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(store) = cli.store {
        config.store = store;
    }
    let service = Service::open(&config.store, config.thresholds)?;
    let ctx = Ctx { service, output: cli.format, actor: ActorId::new(cli.actor), expected: cli.expected_revision };
    match cli.command {
        Cmd::Audit(c) => audit(&ctx, c),
        Cmd::Questions(c) => questions(&ctx, c),
        Cmd::Evidence(c) => evidence(&ctx, c),
        Cmd::Monitor(MonitorCmd::Run { id, log, spec }) => monitor(&ctx, &id, &log, spec),
        Cmd::Report(c) => report(&ctx, c),
        Cmd::Bundle(c) => bundle(&ctx, c),
        Cmd::Register(c) => register(&ctx, c),
        Cmd::Serve { bind } => serve(ctx.service, config, bind),
    }
}

fn serve(service: Service, config: Config, bind: Option<String>) -> Result<ExitCode, CliError> {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into())).init();
    let bind = bind.unwrap_or(config.bind);
    let state = api::AppState::new(service, config.token, config.workers);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(Box::new(e)))?;
    runtime.block_on(api::serve(state, &bind)).map_err(|e| CliError::Other(Box::new(e)))?;
    Ok(ExitCode::SUCCESS)
}

fn audit(ctx: &Ctx, cmd: AuditCmd) -> Result<ExitCode, CliError> {
    match cmd {
        AuditCmd::New { id, title, kind, target } => {
            let create = CreateAudit { id: AuditId::new(id), title, kind, target, template: TemplateChoice::Default };
            let audit = ctx.service.create(&ctx.actor, create)?;
            ctx.applied(&audit)?;
        }
        AuditCmd::List => {
            let ids = ctx.service.list()?;
            ctx.emit(&ids, || ids.iter().map(|i| i.as_str()).collect::<Vec<_>>().join("\n"))?;
        }
        AuditCmd::Show { id } => {
            let audit = ctx.service.load(&AuditId::new(id))?;
            ctx.emit(&*audit, || {
                let cov = audit.lifecycle.coverage();
                let mut lines = vec![
                    format!("{} ({:?}): {}", audit.id, audit.kind, audit.title),
                    format!("revision {}, iteration {}, {:?}", audit.revision, audit.current_iteration().index, audit.phase()),
                ];
                for p in &cov.per_phase {
                    lines.push(format!("  {:<12} {}", p.phase.as_str(), fmt_coverage(p.coverage.value())));
                }
                lines.push(format!("  {:<12} {}", "overall", fmt_coverage(cov.overall.value())));
                lines.join("\n")
            })?;
        }
        AuditCmd::Scope { id, step, status, rationale } => ctx.execute(&id, Command::AssessStep { step: StepId::new(step), status, rationale })?,
        AuditCmd::Owner { id, step, owner } => ctx.execute(&id, Command::SetStepOwner { step: StepId::new(step), owner })?,
        AuditCmd::Source { id, step, description, access, unavailable } => {
            let source = EvidenceSource { description, access, available: !unavailable };
            ctx.execute(&id, Command::DeclareEvidenceSource { step: StepId::new(step), source })?
        }
        AuditCmd::Gate { id } => {
            let gate = ctx.service.gate(&AuditId::new(id))?;
            ctx.emit(&gate, || {
                let mut lines = vec![format!("{:?}: {}", gate.phase, if gate.may_advance { "may advance" } else { "blocked" })];
                lines.extend(gate.unmet.iter().map(|u| format!("  - {u}")));
                lines.join("\n")
            })?;
            if !gate.may_advance {
                return Ok(ExitCode::from(1));
            }
        }
        AuditCmd::Advance { id } => ctx.execute(&id, Command::AdvancePhase)?,
        AuditCmd::Command { id, file } => {
            let command: Command = serde_json::from_slice(&read(&file)?).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
            if matches!(command, Command::Create(_)) {
                return Err(CliError::Usage("use `audit new` to create audits".into()));
            }
            ctx.execute(&id, command)?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fmt_coverage(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |v| format!("{:.1}%", v * 100.0))
}

fn questions(ctx: &Ctx, cmd: QuestionsCmd) -> Result<ExitCode, CliError> {
    match cmd {
        QuestionsCmd::Import { id, file, question_format } => {
            let format = match question_format {
                Some(f) => f,
                None => match file.extension().and_then(|e| e.to_str()) {
                    Some("csv") => QuestionFormat::Csv,
                    Some("json") => QuestionFormat::Json,
                    _ => return Err(CliError::Usage("cannot tell the format from the extension; pass --as".into())),
                },
            };
            let audit = ctx.service.import_questions(&AuditId::new(id), ctx.expected, &ctx.actor, format, &read(&file)?)?;
            ctx.applied(&audit)?;
        }
        QuestionsCmd::Filter { id, requirements } => {
            let reqs: Option<BTreeSet<Requirement>> = (!requirements.is_empty()).then(|| requirements.into_iter().collect());
            let qs = ctx.service.questions(&AuditId::new(id), reqs.as_ref())?;
            ctx.emit(&qs, || qs.iter().map(|q| format!("{}\t{:?}\t{}", q.id, q.requirement, q.text)).collect::<Vec<_>>().join("\n"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn evidence(ctx: &Ctx, cmd: EvidenceCmd) -> Result<ExitCode, CliError> {
    match cmd {
        EvidenceCmd::Add { id, file, evidence_id, kind, artifact_type, steps, access, locator, supersedes } => {
            let upload = EvidenceUpload {
                id: EvidenceId::new(evidence_id),
                kind,
                artifact_type,
                step_tags: steps.into_iter().map(StepId::new).collect(),
                locator,
                access_basis: access,
                supersedes: supersedes.map(EvidenceId::new),
            };
            let audit = ctx.service.add_evidence(&AuditId::new(id), ctx.expected, &ctx.actor, upload, &read(&file)?)?;
            ctx.applied(&audit)?;
        }
        EvidenceCmd::Verify { id, evidence_id } => {
            let checks = ctx.service.verify_evidence(&AuditId::new(id), evidence_id.map(EvidenceId::new).as_ref())?;
            ctx.emit(&checks, || {
                checks
                    .iter()
                    .map(|c| format!("{}\t{}\t{}", c.iteration, c.id, c.problem.as_deref().unwrap_or("ok")))
                    .collect::<Vec<_>>()
                    .join("\n")
            })?;
            if checks.iter().any(|c| !c.ok) {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn monitor(ctx: &Ctx, id: &str, log: &Path, args: MonitorArgs) -> Result<ExitCode, CliError> {
    let req = MonitorRequest {
        id: args.monitor_id,
        metric: args.metric,
        batch_size: args.batch_size,
        threshold: args.threshold,
        min_group_size: args.min_group_size,
        protected_attr: args.protected_attr,
        stratum_attr: args.stratum_attr,
        failures_only: args.failures_only,
    };
    let spec = ctx.service.monitor_spec(&req)?;
    let digest = ctx.service.put_blob(&read(log)?)?;
    let audit = ctx.service.run_monitor(&AuditId::new(id), ctx.expected, &ctx.actor, spec, digest)?;
    let record = audit.current_iteration().monitors.last().expect("monitor just recorded");
    let c = &record.run.counters;
    ctx.emit(&record.run, || {
        format!(
            "{} batches over {} records: {} pass, {} fail, {} indeterminate, {} malformed",
            c.batches, c.records, c.pass, c.fail, c.indeterminate, c.malformed_records
        )
    })?;
    Ok(ExitCode::SUCCESS)
}

fn report(ctx: &Ctx, cmd: ReportCmd) -> Result<ExitCode, CliError> {
    match cmd {
        ReportCmd::Compile { id } => {
            let report = ctx.service.compile_report(&AuditId::new(id), ctx.expected, &ctx.actor)?;
            ctx.emit(&report, || format!("report {} compiled", report.content_digest))?;
        }
        ReportCmd::Render { id, iteration, render_as, out } => {
            let format: ReportFormat = render_as.parse().map_err(|e: mlaudit_core::reporting::ReportError| CliError::Usage(e.to_string()))?;
            let report = ctx.service.report(&AuditId::new(id), iteration)?;
            write_out(out.as_deref(), &render(&report, format))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bundle(ctx: &Ctx, cmd: BundleCmd) -> Result<ExitCode, CliError> {
    match cmd {
        BundleCmd::Export { id, out } => write_out(out.as_deref(), &ctx.service.export_bundle(&AuditId::new(id))?)?,
        BundleCmd::Import { file, rename } => {
            let id = ctx.service.import_bundle(&read(&file)?, rename.map(AuditId::new))?;
            ctx.emit(&serde_json::json!({ "audit": id }), || format!("imported {id}"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn register(ctx: &Ctx, cmd: RegisterCmd) -> Result<ExitCode, CliError> {
    match cmd {
        RegisterCmd::Add { file } => {
            let entry: RiskRegisterEntry = serde_json::from_slice(&read(&file)?).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
            let rev = ctx.service.register_add(entry, ctx.expected)?;
            ctx.emit(&serde_json::json!({ "revision": rev }), || format!("register at revision {rev}"))?;
        }
        RegisterCmd::Feed { file, feed } => {
            let ids = ctx.service.register_feed(&read(&file)?, &feed, &ctx.actor, ctx.expected)?;
            ctx.emit(&serde_json::json!({ "added": ids }), || format!("added {} entries", ids.len()))?;
        }
        RegisterCmd::Query { steps, requirement } => {
            let steps: BTreeSet<StepId> = steps.into_iter().map(StepId::new).collect();
            let view = ctx.service.register_query(&steps, requirement)?;
            ctx.emit(&view, || view.entries.iter().map(|e| format!("{}\t{}", e.id, e.title)).collect::<Vec<_>>().join("\n"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
