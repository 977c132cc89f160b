//! `ndiserve`: run the gateway or administer one over its HTTP API.
//!
//! Exit codes: 0 on a 2xx response or clean shutdown, 1 for local errors
//! (bad arguments, config, journal, bind), 2 for a non-2xx response and 3
//! when the server cannot be reached.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndiserve::config::ServerConfig;
use ndiserve::gateway::Server;
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::Method;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ndiserve", version, about = "Inspection-scan inference gateway")]
struct Cli {
    /// Gateway base URL for client commands.
    #[arg(long, global = true, env = "NDISERVE_URL", default_value = "http://127.0.0.1:8080")]
    server_url: String,
    /// Bearer token for client commands.
    #[arg(long, global = true, env = "NDISERVE_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gateway until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Register a dataset directory with the server. Relative paths are
    /// resolved under the server's datasets root.
    Ingest { dir: String },
    #[command(subcommand)]
    Dataset(DatasetCommand),
    #[command(subcommand)]
    Model(ModelCommand),
    #[command(subcommand)]
    Audit(AuditCommand),
}

#[derive(Subcommand)]
enum DatasetCommand {
    List,
    Show { dataset_id: String },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Register a new staged version.
    Register(RegisterArgs),
    /// Run a staged version over every scan of a dataset.
    Validate {
        model_id: String,
        version: u32,
        #[arg(long)]
        dataset: String,
    },
    Promote {
        model_id: String,
        version: u32,
        /// Promote even if validation has not passed.
        #[arg(long)]
        force: bool,
    },
    Rollback { model_id: String },
    List {
        #[arg(long)]
        include_retired: bool,
    },
}

#[derive(Args)]
struct RegisterArgs {
    /// JSON file holding the whole registration body.
    #[arg(long, conflicts_with_all = ["model_id", "display_name", "detector", "schema"])]
    file: Option<PathBuf>,
    #[arg(long, required_unless_present = "file")]
    model_id: Option<String>,
    #[arg(long, requires = "model_id")]
    display_name: Option<String>,
    /// threshold, zscore or local_contrast.
    #[arg(long, required_unless_present = "file")]
    detector: Option<String>,
    /// JSON file with the parameter schema list.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Print the newest audit records, newest first.
    Tail {
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
}

enum Failure {
    Local(String),
    Status,
    Unreachable(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Local(_) => 1,
            Failure::Status => 2,
            Failure::Unreachable(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Serve { ref config } => serve(config),
        _ => client(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Local(message) => eprintln!("{}", json!({"error": message})),
                Failure::Unreachable(message) => {
                    eprintln!("{}", json!({"error": format!("cannot reach {}: {message}", cli.server_url)}))
                }
                Failure::Status => {}
            }
            ExitCode::from(failure.exit_code())
        }
    }
}

fn serve(path: &Path) -> Result<(), Failure> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let config = ServerConfig::load(path).map_err(|e| Failure::Local(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Local(e.to_string()))?;
    runtime.block_on(async {
        let server = Server::bind(&config).await.map_err(|e| Failure::Local(e.to_string()))?;
        println!("{}", json!({"event": "listening", "addr": server.local_addr().to_string()}));
        server.run(shutdown_signal()).await.map_err(|e| Failure::Local(e.to_string()))?;
        println!("{}", json!({"event": "stopped"}));
        Ok(())
    })
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
}

fn client(cli: &Cli) -> Result<(), Failure> {
    let api = Api {
        http: Client::new(),
        base: cli.server_url.trim_end_matches('/').to_string(),
        token: cli.token.clone(),
    };
    match &cli.command {
        Command::Serve { .. } => unreachable!("handled by main"),
        Command::Ingest { dir } => api.send(Method::POST, "/api/v1/datasets", Some(json!({"path": dir}))),
        Command::Dataset(DatasetCommand::List) => api.send(Method::GET, "/api/v1/datasets", None),
        Command::Dataset(DatasetCommand::Show { dataset_id }) => {
            api.send(Method::GET, &format!("/api/v1/datasets/{dataset_id}"), None)
        }
        Command::Model(cmd) => match cmd {
            ModelCommand::Register(args) => api.send(Method::POST, "/api/v1/models", Some(register_body(args)?)),
            ModelCommand::Validate {
                model_id,
                version,
                dataset,
            } => api.send(
                Method::POST,
                &format!("/api/v1/models/{model_id}/versions/{version}/validate"),
                Some(json!({"dataset_id": dataset})),
            ),
            ModelCommand::Promote { model_id, version, force } => api.send(
                Method::POST,
                &format!("/api/v1/models/{model_id}/versions/{version}/promote"),
                Some(json!({"force": force})),
            ),
            ModelCommand::Rollback { model_id } => {
                api.send(Method::POST, &format!("/api/v1/models/{model_id}/rollback"), None)
            }
            ModelCommand::List { include_retired } => api.send(
                Method::GET,
                &format!("/api/v1/models?include_retired={include_retired}"),
                None,
            ),
        },
        Command::Audit(AuditCommand::Tail { limit }) => {
            api.send(Method::GET, &format!("/api/v1/audit?limit={limit}"), None)
        }
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Local(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Local(format!("{}: {e}", path.display())))
}

fn register_body(args: &RegisterArgs) -> Result<Value, Failure> {
    if let Some(file) = &args.file {
        return read_json(file);
    }
    let model_id = args.model_id.clone().unwrap_or_default();
    let schema = match &args.schema {
        Some(path) => read_json(path)?,
        None => json!([]),
    };
    Ok(json!({
        "display_name": args.display_name.clone().unwrap_or_else(|| model_id.clone()),
        "model_id": model_id,
        "detector": args.detector,
        "param_schema": schema,
    }))
}

struct Api {
    http: Client,
    base: String,
    token: Option<String>,
}

impl Api {
    /// Sends one request and prints the response body as JSON lines: one
    /// line per element for successful arrays, one line otherwise.
    fn send(&self, method: Method, path: &str, body: Option<Value>) -> Result<(), Failure> {
        let mut req: RequestBuilder = self.http.request(method, format!("{}{path}", self.base));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        if let Some(body) = body {
            req = req.json(&body);
        }
        let resp = req.send().map_err(|e| Failure::Unreachable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Unreachable(e.to_string()))?;
        let value: Value = serde_json::from_str(&text).unwrap_or(Value::String(text));
        if status.is_success() {
            match value {
                Value::Array(items) => items.iter().for_each(|item| println!("{item}")),
                other => println!("{other}"),
            }
            Ok(())
        } else {
            println!("{value}");
            Err(Failure::Status)
        }
    }
}
