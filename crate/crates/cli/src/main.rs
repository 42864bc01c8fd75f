use std::collections::BTreeMap;
use std::net::{IpAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use jade_client::api::{Bundle, ConfigDiagnostic, RenderMode, RunRequest, RunState, Verdict};
use jade_client::{bundle_from_file, Client, ClientError, DEFAULT_SERVER};
use jade_core::env::load_config;
use jade_core::env::wire::serve_agent;
use jade_core::scenarios::make_policy;

#[derive(Parser)]
#[command(name = "jade", version, about = "Run, check and draw multiagent simulations")]
struct Cli {
    /// Base URL of the simulation service.
    #[arg(long, global = true, env = "JADE_SERVER", default_value = DEFAULT_SERVER)]
    server: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config on the service and print its report.
    Run(RunArgs),
    /// Check a config and list its problems.
    Validate { config: PathBuf },
    /// Re-simulate a log and check it still matches its config.
    Replay { config: PathBuf, log: PathBuf },
    /// Draw a log as SVG.
    Render {
        log: PathBuf,
        /// Directory for the SVG files.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Write a generated scenario config.
    Generate {
        /// chase, maze, mushrooms, circle or chain
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario knob as KEY=VALUE; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in scenarios, behaviors and policies.
    Scenarios,
    /// Start the simulation service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Address remote-agent listeners bind to.
        #[arg(long, default_value = "127.0.0.1")]
        wire_host: IpAddr,
        /// Seconds remote agents get to register and to answer each tick.
        #[arg(long, default_value_t = 30)]
        attach_timeout: u64,
    },
    /// Drive one agent of a config from this process over the wire protocol.
    Agent {
        config: PathBuf,
        #[arg(long)]
        name: String,
        /// Wire address printed by `jade run --remote`.
        #[arg(long)]
        connect: String,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ticks: Option<u64>,
    /// Write the run log here.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write SVG frames into this directory.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    mode: ModeArgs,
    /// Attach this agent over the wire protocol instead of running it on the service; repeatable.
    #[arg(long)]
    remote: Vec<String>,
    /// Seconds remote agents get to register.
    #[arg(long)]
    attach_timeout: Option<u64>,
}

#[derive(Args)]
struct ModeArgs {
    /// One frame per block of N ticks.
    #[arg(long, value_name = "N", conflicts_with = "overview")]
    every: Option<u64>,
    /// A single frame with the whole run (the default).
    #[arg(long)]
    overview: bool,
}

impl ModeArgs {
    fn mode(&self) -> RenderMode {
        match self.every {
            Some(n) => RenderMode::Every(n),
            None => RenderMode::Overview,
        }
    }
}

fn print_diagnostics(diags: &[ConfigDiagnostic], config: &Path) {
    for d in diags {
        let file = d
            .file
            .as_deref()
            .map(PathBuf::from)
            .unwrap_or_else(|| config.to_path_buf());
        eprintln!("{}:{}:{}: {}: {}", file.display(), d.line, d.col, d.code, d.message);
    }
}

fn explain(e: ClientError, config: &Path) -> anyhow::Error {
    print_diagnostics(e.diagnostics(), config);
    if jade_client::is_unreachable(&e) {
        return anyhow!(e).context("is the service running? start it with `jade serve`");
    }
    anyhow!(e)
}

fn bundle(path: &Path) -> Result<Bundle> {
    bundle_from_file(path).map_err(|e| explain(e, path))
}

fn write_frames(dir: &Path, docs: &[String], mode: RenderMode) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (i, doc) in docs.iter().enumerate() {
        let name = match mode {
            RenderMode::Overview => "overview.svg".to_string(),
            RenderMode::Every(_) => format!("frame_{i:05}.svg"),
        };
        std::fs::write(dir.join(&name), doc).with_context(|| format!("writing {name}"))?;
    }
    eprintln!("wrote {} frame(s) to {}", docs.len(), dir.display());
    Ok(())
}

async fn run_cmd(client: &Client, args: RunArgs) -> Result<ExitCode> {
    let bundle = bundle(&args.config)?;
    let req = RunRequest {
        bundle,
        seed: args.seed,
        max_ticks: args.ticks,
        remote: args.remote.clone(),
        wait: true,
        attach_timeout_secs: args.attach_timeout,
    };
    let mut status = client.start_run(&req).await.map_err(|e| explain(e, &args.config))?;
    if let Some(addr) = &status.wire_addr {
        eprintln!("run {}: waiting for {} at {addr}", status.id, status.remote.join(", "));
        for name in &status.remote {
            eprintln!("  jade agent {} --name {name} --connect {addr}", args.config.display());
        }
    }
    if status.state == RunState::Running {
        status = client.wait_run(status.id, Duration::from_millis(200)).await?;
    }
    let report = match (status.state, status.report) {
        (RunState::Finished, Some(r)) => r,
        _ => bail!("run {} failed: {}", status.id, status.error.unwrap_or_default()),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if args.log.is_some() || args.trace.is_some() {
        let log = client.run_log(status.id).await?;
        if let Some(path) = &args.log {
            std::fs::write(path, &log).with_context(|| format!("writing {}", path.display()))?;
        }
        if let Some(dir) = &args.trace {
            let mode = args.mode.mode();
            let docs = client.render(&log, mode).await?;
            write_frames(dir, &docs, mode)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

async fn validate_cmd(client: &Client, config: &Path) -> Result<ExitCode> {
    let bundle = bundle(config)?;
    let resp = client.validate(&bundle).await.map_err(|e| explain(e, config))?;
    print_diagnostics(&resp.diagnostics, config);
    print_diagnostics(&resp.warnings, config);
    if !resp.valid {
        eprintln!("{} problem(s)", resp.diagnostics.len());
        return Ok(ExitCode::FAILURE);
    }
    println!(
        "ok: {} agent(s), scenario {}, digest {}",
        resp.agents.len(),
        resp.scenario.as_deref().unwrap_or("none"),
        resp.digest.unwrap_or_default()
    );
    Ok(ExitCode::SUCCESS)
}

async fn replay_cmd(client: &Client, config: &Path, log: &Path) -> Result<ExitCode> {
    let bundle = bundle(config)?;
    let text = std::fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let verdict = client.replay(&bundle, &text).await.map_err(|e| explain(e, config))?;
    println!("{}", serde_json::to_string(&verdict)?);
    Ok(match verdict {
        Verdict::Pass { .. } => ExitCode::SUCCESS,
        Verdict::Fail { .. } => ExitCode::from(1),
        Verdict::Partial { .. } => ExitCode::from(2),
    })
}

fn parse_sets(set: &[String]) -> Result<BTreeMap<String, String>> {
    set.iter()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow!("expected KEY=VALUE, got `{kv}`"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Blocking: the wire protocol is plain synchronous TCP.
fn agent_cmd(config: &Path, name: &str, connect: &str) -> Result<ExitCode> {
    let bundle = bundle(config)?;
    let cfg = load_config(&bundle.config, &bundle.assets).map_err(|d| {
        print_diagnostics(&d, config);
        anyhow!("config is invalid")
    })?;
    let spec = cfg
        .agents
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| anyhow!("no agent named `{name}` in {}", config.display()))?;
    let policy = make_policy(&spec.policy)?;
    let mut stream = TcpStream::connect(connect).with_context(|| format!("connecting to {connect}"))?;
    stream.set_nodelay(true)?;
    let end = serve_agent(&mut stream, spec, policy)?;
    eprintln!("{name}: {} tick(s), {}", end.ticks, end.reason);
    Ok(ExitCode::SUCCESS)
}

async fn serve_cmd(bind: &str, wire_host: IpAddr, attach_timeout: u64) -> Result<ExitCode> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .with_context(|| format!("binding {bind}"))?;
    // printed for scripts that bind port 0
    println!("listening on http://{}", listener.local_addr()?);
    let config = jade_server::ServerConfig {
        wire_host,
        attach_timeout: Duration::from_secs(attach_timeout),
    };
    jade_server::serve(listener, config).await?;
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let client = Client::new(&cli.server);
    match cli.command {
        Command::Run(args) => run_cmd(&client, args).await,
        Command::Validate { config } => validate_cmd(&client, &config).await,
        Command::Replay { config, log } => replay_cmd(&client, &config, &log).await,
        Command::Render { log, out, mode } => {
            let text = std::fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let docs = client.render(&text, mode.mode()).await.map_err(|e| explain(e, &log))?;
            write_frames(&out, &docs, mode.mode())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate {
            scenario,
            seed,
            set,
            out,
        } => {
            let config = client
                .generate(&scenario, seed, parse_sets(&set)?)
                .await
                .map_err(|e| explain(e, Path::new(&scenario)))?;
            match out {
                Some(path) => std::fs::write(&path, config).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{config}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenarios => {
            let c = client.catalog().await.map_err(|e| explain(e, Path::new(".")))?;
            println!("scenarios: {}", c.scenarios.join(" "));
            println!(
                "behaviors: {}",
                c.behaviors
                    .iter()
                    .map(|b| format!("builtin:{b}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            println!("policies:  {}", c.policies.join(" "));
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            bind,
            wire_host,
            attach_timeout,
        } => serve_cmd(&bind, wire_host, attach_timeout).await,
        Command::Agent { config, name, connect } => {
            tokio::task::spawn_blocking(move || agent_cmd(&config, &name, &connect)).await?
        }
    }
}
