//! `mavguard` command line.
//!
//! Exit codes: 0 success, 1 validation or assertion failure, 2 usage error,
//! 3 runtime failure (sockets, files).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use mavguard::attestor::{Decision, Monitor};
use mavguard::codec::{frame_decode, DecodeError};
use mavguard::dsl::{parse_spec_with, ProtocolSpec, DEFAULT_SPEC};
use mavguard::gateway::{read_frame_log, Direction, Gateway, GatewayConfig, GatewayMode, VerdictRecord, VERDICT_LOG};
use mavguard::harness::{run_matrix, run_scenario, RunConfig, RunReport, Scenario, BUILTIN_SCENARIOS};

const EXIT_OK: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "mavguard", version, about = "Partitioned MAVLink gateway with a runtime command attestor")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a spec, printing diagnostics.
    CheckSpec {
        /// Spec file (same as --spec).
        file: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the gateway until interrupted.
    Proxy {
        #[command(flatten)]
        common: Common,
        /// UDP address the ground station sends to.
        #[arg(long)]
        listen: Option<String>,
        /// UDP address of the flight controller.
        #[arg(long)]
        fcs: Option<String>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<GatewayMode>,
        /// Do not answer rejected COMMAND_LONG with COMMAND_ACK(DENIED).
        #[arg(long)]
        no_command_ack: bool,
        /// Answer other rejected messages with a STATUSTEXT warning.
        #[arg(long)]
        statustext: bool,
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Play one scenario through a loopback gateway.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Built-in scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_parser = parse_mode, default_value = "gateway+spec")]
        mode: GatewayMode,
    },
    /// Run scenarios under passthrough, gateway and gateway+spec.
    Matrix {
        #[command(flatten)]
        common: Common,
        /// Scenario names or files; all built-in scenarios by default.
        #[arg(long)]
        scenario: Vec<String>,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
    },
    /// Feed a recorded frame log through the attestor offline.
    Replay {
        /// frames.jsonl written by a gateway run.
        log: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Refinement spec; the built-in default when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override a spec constant, e.g. --define m1=8.
    #[arg(long = "define", value_name = "K=V", value_parser = parse_define)]
    defines: Vec<(String, f64)>,
    /// Gateway configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for logs and reports.
    #[arg(long, env = "MAVGUARD_LOG_DIR")]
    log_dir: Option<PathBuf>,
    /// Reject messages no rule matches.
    #[arg(long)]
    default_deny: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_define(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected K=V, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("bad constant name {k:?}"));
    }
    let v: f64 = v.trim().parse().map_err(|_| format!("{v:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{k} must be finite"));
    }
    Ok((k.to_string(), v))
}

fn parse_mode(s: &str) -> Result<GatewayMode, String> {
    GatewayMode::from_name(s).ok_or_else(|| format!("unknown mode {s:?} (passthrough, gateway, gateway+spec)"))
}

/// Failure with its exit code.
struct Failure(u8, String);

type CmdResult = Result<u8, Failure>;

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_RUNTIME, e.to_string())
}

impl Common {
    fn gateway_config(&self) -> Result<GatewayConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Failure(EXIT_FAIL, format!("{}: {e}", p.display())))?
            }
            None => GatewayConfig::default(),
        };
        if self.spec.is_some() {
            cfg.spec = self.spec.clone();
        }
        cfg.defines.extend(self.defines.iter().cloned());
        cfg.default_deny |= self.default_deny;
        if self.log_dir.is_some() {
            cfg.log_dir = self.log_dir.clone();
        }
        Ok(cfg)
    }

    fn load_spec(&self, cfg: &GatewayConfig) -> Result<(String, ProtocolSpec), Failure> {
        let (name, text) = match &cfg.spec {
            Some(p) => {
                (p.display().to_string(), fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?)
            }
            None => ("default.spec".to_string(), DEFAULT_SPEC.to_string()),
        };
        let defines: BTreeMap<&str, f64> = cfg.defines.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        match parse_spec_with(&text, defines) {
            Ok(spec) => Ok((name, spec)),
            Err(diags) => {
                let mut msg = String::new();
                for d in &diags {
                    msg.push_str(&format!("{name}:{}:{}: {}\n", d.line, d.col, d.message));
                }
                msg.push_str(&format!("{} diagnostics", diags.len()));
                Err(Failure(EXIT_FAIL, msg))
            }
        }
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, Failure> {
    if let Some(s) = Scenario::builtin(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if !path.exists() {
        let names: Vec<&str> = BUILTIN_SCENARIOS.iter().map(|(n, _)| *n).collect();
        return Err(Failure(EXIT_USAGE, format!("no scenario {arg:?}; built-in: {}", names.join(", "))));
    }
    Scenario::load(path).map_err(|e| Failure(EXIT_FAIL, e.to_string()))
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(runtime)?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(&path, text + "\n").map_err(runtime)?;
    Ok(path)
}

fn cmd_check_spec(file: Option<PathBuf>, common: &Common) -> CmdResult {
    let mut common = common.clone();
    if file.is_some() {
        common.spec = file;
    }
    let cfg = common.gateway_config()?;
    let (name, spec) = common.load_spec(&cfg)?;
    println!(
        "{name}: {} constants, {} parameters, {} rules, {} iterations",
        spec.consts.len(),
        spec.params.len(),
        spec.rules.len(),
        spec.iterations.len()
    );
    println!("0 diagnostics");
    Ok(EXIT_OK)
}

fn cmd_proxy(
    common: &Common,
    listen: Option<String>,
    fcs: Option<String>,
    mode: Option<GatewayMode>,
    no_command_ack: bool,
    statustext: bool,
    duration: Option<f64>,
) -> CmdResult {
    let mut cfg = common.gateway_config()?;
    let addr = |s: &str| s.parse().map_err(|_| Failure(EXIT_USAGE, format!("bad address {s:?}")));
    if let Some(l) = &listen {
        cfg.gcs_listen = addr(l)?;
    }
    if let Some(f) = &fcs {
        cfg.fcs_target = addr(f)?;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg.feedback.command_ack &= !no_command_ack;
    cfg.feedback.statustext |= statustext;
    let (_, spec) = common.load_spec(&cfg)?;
    let gw = Gateway::start(&cfg, Arc::new(spec)).map_err(runtime)?;
    println!("{} listening on {}, forwarding to {}", cfg.mode, gw.gcs_addr(), cfg.fcs_target);
    let flag = gw.shutdown_flag();
    ctrlc::set_handler(move || flag.store(true, Ordering::Release)).map_err(runtime)?;
    let start = Instant::now();
    let limit = duration.map(Duration::from_secs_f64);
    let flag = gw.shutdown_flag();
    while !flag.load(Ordering::Acquire) && limit.is_none_or(|l| start.elapsed() < l) {
        std::thread::sleep(Duration::from_millis(50));
    }
    let report = gw.stop();
    println!("{}", serde_json::to_string_pretty(&report.stats).map_err(runtime)?);
    Ok(EXIT_OK)
}

fn print_run(r: &RunReport) {
    println!("scenario {} [{}] seed {}", r.scenario, r.mode, r.seed);
    println!("{:>5}  {:<18} {:<8} {:<10} {:<16} reason", "index", "message", "verdict", "forwarded", "rule");
    for o in &r.script {
        let verdict = match o.verdict {
            Some(Decision::Accept) => "accept",
            Some(Decision::Reject) => "REJECT",
            None => "-",
        };
        println!(
            "{:>5}  {:<18} {:<8} {:<10} {:<16} {}",
            o.index,
            o.msg,
            verdict,
            if o.forwarded { "yes" } else { "no" },
            o.rule.as_deref().unwrap_or("-"),
            o.reason.as_deref().unwrap_or("")
        );
    }
    println!(
        "sent {}  forwarded {}  rejected {}  dropped {}  conservation {}  fifo {}",
        r.sent,
        r.forwarded,
        r.rejected,
        r.dropped,
        if r.conservation_ok { "ok" } else { "VIOLATED" },
        if r.fifo_ok { "ok" } else { "VIOLATED" }
    );
    if let Some(l) = &r.latency {
        println!("latency {l} ms (median {:.3} ms, n {})", l.median_ms, l.n);
    }
    if r.attack {
        println!("attack detected: {}", if r.attack_detected { "yes" } else { "no" });
    }
    for a in r.assertions.iter().filter(|a| !a.ok) {
        println!(
            "assertion failed at index {}: expected {:?}{}, got {:?}{}",
            a.index,
            a.expected,
            a.expected_rule.as_deref().map(|r| format!(" ({r})")).unwrap_or_default(),
            a.actual,
            a.actual_rule.as_deref().map(|r| format!(" ({r})")).unwrap_or_default()
        );
    }
}

fn cmd_simulate(common: &Common, scenario: &str, mode: GatewayMode) -> CmdResult {
    let mut cfg = common.gateway_config()?;
    cfg.mode = mode;
    let (_, spec) = common.load_spec(&cfg)?;
    let scenario = load_scenario(scenario)?;
    let run_cfg = RunConfig { gateway: cfg, seed: common.seed, ..RunConfig::new(mode) };
    let report = run_scenario(&scenario, Arc::new(spec), &run_cfg).map_err(runtime)?;
    print_run(&report);
    if let Some(dir) = &common.log_dir {
        let p = write_json(dir, &format!("{}.report.json", scenario.name), &report)?;
        println!("report written to {}", p.display());
    }
    Ok(if report.assertions_ok && report.conservation_ok { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_matrix(common: &Common, names: &[String], rounds: usize) -> CmdResult {
    let cfg = common.gateway_config()?;
    let (_, spec) = common.load_spec(&cfg)?;
    let scenarios = if names.is_empty() {
        Scenario::builtin_all()
    } else {
        names.iter().map(|n| load_scenario(n)).collect::<Result<_, _>>()?
    };
    let base = RunConfig { gateway: cfg, seed: common.seed, ..RunConfig::new(GatewayMode::GatewaySpec) };
    let m = run_matrix(&scenarios, Arc::new(spec), &GatewayMode::ALL, rounds, &base).map_err(runtime)?;
    println!("Latency, benign scenarios (mean ± 95% CI)\n{}", m.latency_table());
    println!("Detection\n{}", m.detection_table());
    let failed: Vec<&RunReport> = m
        .runs
        .iter()
        .filter(|r| r.mode == GatewayMode::GatewaySpec)
        .filter(|r| !r.assertions_ok || !r.conservation_ok || r.audit_violations != Some(0))
        .collect();
    for r in &failed {
        println!("gateway+spec run of {} failed its checks", r.scenario);
    }
    if let Some(dir) = &common.log_dir {
        let p = write_json(dir, "matrix.json", &m)?;
        println!("report written to {}", p.display());
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_replay(log: &Path, common: &Common) -> CmdResult {
    let cfg = common.gateway_config()?;
    let (_, spec) = common.load_spec(&cfg)?;
    let frames = read_frame_log(log).map_err(|e| {
        let code = if e.kind() == std::io::ErrorKind::InvalidData { EXIT_FAIL } else { EXIT_RUNTIME };
        Failure(code, format!("{}: {e}", log.display()))
    })?;
    let mut monitor = Monitor::new(Arc::new(spec), cfg.monitor_config());
    let mut records = Vec::new();
    let (mut accepted, mut rejected, mut malformed) = (0u64, 0u64, 0u64);
    let mut index = 0u64;
    for (t, dir, bytes) in &frames {
        let decoded = frame_decode(bytes);
        if *dir == Direction::Down {
            if let Ok(d) = decoded {
                monitor.observe_at(&d.message, *t);
            }
            continue;
        }
        let (verdict, name) = match decoded {
            Ok(d) => (monitor.attest_at(&d.message, *t), Some(d.message.kind().name().to_string())),
            Err(DecodeError::UnknownMsgId { msgid, .. }) => (monitor.attest_opaque_at(msgid, *t), None),
            Err(e) => {
                malformed += 1;
                log::warn!("frame {index}: {e:?}");
                index += 1;
                continue;
            }
        };
        if verdict.is_accept() {
            accepted += 1;
        } else {
            rejected += 1;
            println!(
                "frame {index} {}: rejected by {}: {}",
                name.as_deref().unwrap_or("?"),
                verdict.rule.as_deref().unwrap_or("-"),
                verdict.reason
            );
        }
        let n = bytes.len();
        records.push(VerdictRecord {
            frame: index,
            timestamp_us: t.as_micros() as u64,
            msgid: u32::from_le_bytes([bytes[7], bytes[8], bytes[9], 0]),
            msg: name,
            seq: bytes[4],
            checksum: u16::from_le_bytes([bytes[n - 2], bytes[n - 1]]),
            decision: verdict.decision,
            rule: verdict.rule,
            reason: verdict.reason,
        });
        index += 1;
    }
    println!("{} uplink frames: {accepted} accepted, {rejected} rejected, {malformed} malformed", index);
    if let Some(dir) = &common.log_dir {
        fs::create_dir_all(dir).map_err(runtime)?;
        let path = dir.join(VERDICT_LOG);
        let mut f = std::io::BufWriter::new(fs::File::create(&path).map_err(runtime)?);
        for r in &records {
            serde_json::to_writer(&mut f, r).map_err(runtime)?;
            f.write_all(b"\n").map_err(runtime)?;
        }
        f.flush().map_err(runtime)?;
        println!("verdicts written to {}", path.display());
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::CheckSpec { file, common } => cmd_check_spec(file, &common),
        Command::Proxy { common, listen, fcs, mode, no_command_ack, statustext, duration } => {
            cmd_proxy(&common, listen, fcs, mode, no_command_ack, statustext, duration)
        }
        Command::Simulate { common, scenario, mode } => cmd_simulate(&common, &scenario, mode),
        Command::Matrix { common, scenario, rounds } => cmd_matrix(&common, &scenario, rounds),
        Command::Replay { log, common } => cmd_replay(&log, &common),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            if code == EXIT_FAIL {
                println!("{msg}");
            } else {
                eprintln!("mavguard: {msg}");
            }
            ExitCode::from(code)
        }
    }
}
