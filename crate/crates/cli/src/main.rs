//! `cdp`: operator command line for the data platform.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use cdp_core::capture::RawDocument;
use cdp_core::clock::{Clock, SystemClock};
use cdp_core::config::Config;
use cdp_core::model::canonical_json;
use cdp_core::pipeline::IngestStatus;
use cdp_core::{CdpError, ErrorClass, Platform, DEFAULT_LIMIT};
use clap::{Parser, Subcommand};
use serde::Serialize;

const EXIT_DOMAIN: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "cdp", version, about = "Cannabinoids data platform operator tool")]
struct Cli {
    /// Store directory
    #[arg(long, global = true, env = "CDP_STORE", default_value = "store")]
    store: PathBuf,
    /// Config directory
    #[arg(long, global = true, env = "CDP_CONFIG", default_value = "config")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capture a file, map it with a configured spec and store the records
    Ingest {
        file: PathBuf,
        /// Mapping spec: a configured spec id or a spec file path.
        /// Without one the file is kept raw only
        #[arg(long)]
        spec: Option<String>,
        /// Provider as <sub-domain>:<name>; defaults to the spec's sub-domain
        #[arg(long)]
        provider: Option<String>,
    },
    /// Rebuild the search index
    Reindex,
    /// Filter, clean and categorize into a configured dataset
    Materialize {
        #[arg(long)]
        dataset: String,
    },
    /// Print the quality report of a materialized dataset
    Report {
        #[arg(long)]
        dataset: String,
    },
    /// Re-execute the lineage log into a scratch store and compare
    Replay {
        /// Exit 1 unless the reconstruction is byte-identical
        #[arg(long)]
        verify: bool,
        /// Scratch directory (must not hold a store); a temporary one by default
        #[arg(long)]
        scratch: Option<PathBuf>,
    },
    /// Ranked search over the last built index
    Search {
        query: String,
        #[arg(long, default_value_t = DEFAULT_LIMIT)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Strain similarity queries
    Strain {
        #[command(subcommand)]
        command: StrainCommand,
    },
    /// Serve the HTTP API
    Serve {
        #[arg(long, env = "CDP_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Subcommand)]
enum StrainCommand {
    /// Nearest profiles to a sample
    Similar {
        sample_id: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        dataset: Option<String>,
    },
    /// How often a sample's nearest neighbor shares its strain name
    Consistency {
        #[arg(long)]
        dataset: Option<String>,
    },
}

enum Failure {
    Cdp(CdpError),
    Io(String),
    Domain(String),
}

impl From<CdpError> for Failure {
    fn from(e: CdpError) -> Self {
        Failure::Cdp(e)
    }
}

impl From<cdp_core::config::ConfigError> for Failure {
    fn from(e: cdp_core::config::ConfigError) -> Self {
        Failure::Cdp(e.into())
    }
}

fn print<T: Serialize>(value: &T) {
    let mut out = canonical_json(value);
    out.push(b'\n');
    use std::io::Write;
    let _ = std::io::stdout().write_all(&out);
}

fn key() -> Option<Vec<u8>> {
    std::env::var("CDP_PSEUDONYM_KEY").ok().map(String::into_bytes)
}

fn clock() -> Arc<dyn Clock> {
    Arc::new(SystemClock)
}

fn writable(cli: &Cli) -> Result<Platform, Failure> {
    let config = Config::load(&cli.config)?;
    Ok(Platform::open(&cli.store, config, clock(), key())?)
}

fn read_only(cli: &Cli) -> Result<Platform, Failure> {
    if !cli.store.is_dir() {
        return Err(Failure::Io(format!("store {} does not exist", cli.store.display())));
    }
    let config = Config::load(&cli.config)?;
    Ok(Platform::open_read_only(&cli.store, config, clock(), key())?)
}

#[derive(Serialize)]
struct ReplayFailure {
    identical: bool,
    error: String,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Ingest { file, spec, provider } => {
            let bytes = std::fs::read(file).map_err(|e| Failure::Io(format!("{}: {e}", file.display())))?;
            let mut p = writable(cli)?;
            let spec = match spec.as_deref() {
                None => None,
                Some(s) => match p.config().mapping(s) {
                    Some(m) => Some(m.clone()),
                    None if Path::new(s).is_file() => Some(Config::mapping_file(s)?),
                    None => return Err(Failure::Cdp(CdpError::NotFound(format!("mapping spec {s:?}")))),
                },
            };
            let provider = match provider {
                Some(p) => p.clone(),
                None => {
                    let domain = spec.as_ref().map_or_else(|| "research".to_owned(), |m| m.target_sub_domain.to_string());
                    format!("{domain}:cdp-cli")
                }
            };
            cdp_core::model::check_provider(&provider).map_err(|e| Failure::Domain(e.to_string()))?;
            let name = file.file_name().map(|n| n.to_string_lossy().into_owned());
            let doc = RawDocument::new(bytes, name, p.now(), provider);
            let report = p.ingest_with(&doc, spec.as_ref())?;
            print(&report);
            if report.status == IngestStatus::Rejected {
                return Err(Failure::Domain("document rejected".into()));
            }
        }
        Command::Reindex => print(&writable(cli)?.reindex()?),
        Command::Materialize { dataset } => print(&writable(cli)?.materialize(dataset)?),
        Command::Report { dataset } => print(&read_only(cli)?.report(dataset)?),
        Command::Replay { verify, scratch } => {
            if !cli.store.is_dir() {
                return Err(Failure::Io(format!("store {} does not exist", cli.store.display())));
            }
            let (config, _) = Config::load_lenient(&cli.config);
            let p = Platform::open_read_only(&cli.store, config, clock(), key())?;
            let tmp;
            let dir: &Path = match scratch {
                Some(d) => d,
                None => {
                    tmp = tempfile::tempdir().map_err(|e| Failure::Io(e.to_string()))?;
                    tmp.path()
                }
            };
            match p.replay(dir) {
                Ok(outcome) => print(&outcome),
                Err(e) => {
                    print(&ReplayFailure {
                        identical: false,
                        error: e.to_string(),
                    });
                    if *verify {
                        return Err(Failure::Cdp(e));
                    }
                }
            }
        }
        Command::Search { query, limit, offset } => print(&read_only(cli)?.search(query, *offset, *limit)?),
        Command::Strain { command } => {
            let p = read_only(cli)?;
            match command {
                StrainCommand::Similar { sample_id, k, dataset } => print(&p.similar_strains(sample_id, *k, dataset.as_deref())?),
                StrainCommand::Consistency { dataset } => print(&p.strain_consistency(dataset.as_deref())?),
            }
        }
        Command::Serve { bind } => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .with_writer(std::io::stderr)
                .init();
            let platform = writable(cli)?;
            let state = cdp_api::AppState::new(platform, clock());
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
            rt.block_on(cdp_api::serve(state, bind)).map_err(|e| Failure::Io(format!("{bind}: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Io(m) => (EXIT_IO, m),
                Failure::Domain(m) => (EXIT_DOMAIN, m),
                Failure::Cdp(e) => {
                    let code = match e.class() {
                        ErrorClass::Io => EXIT_IO,
                        _ if matches!(e, CdpError::Store(cdp_core::store::StoreError::Locked(_))) => EXIT_IO,
                        _ => EXIT_DOMAIN,
                    };
                    (code, format!("{}: {e}", e.code()))
                }
            };
            eprintln!("cdp: {msg}");
            ExitCode::from(code)
        }
    }
}
