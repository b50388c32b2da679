//! `kiss`: provisioning, demo endpoints, benchmarks and randomness reports.

use std::fs;
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use kiss_core::association::{generate_provision, Association, Mode, ProvisionFile, Role, DEFAULT_RESYNC_WINDOW};
use kiss_core::bench::{
    bench_channel, bench_primitive, bench_tls_baseline, compare_reports, core_line_count, BenchConfig, BenchReport,
    ChannelCase, Primitive, DEFAULT_SIZES, DEFAULT_TLS_TEMPLATE,
};
use kiss_core::channel::{ChannelEndpoint, ChannelError, Incoming};
use kiss_core::idvv::{IdvvState, Root, Seed, LABEL_C2S};
use kiss_core::randomness::{run_battery, DEFAULT_ALPHA};

#[derive(Parser)]
#[command(name = "kiss", version, about = "Pre-shared-key secure channel toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a matched initiator/responder provisioning pair.
    Provision {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Auth)]
        mode: ModeArg,
        #[arg(long, default_value_t = DEFAULT_RESYNC_WINDOW, value_parser = clap::value_parser!(u32).range(1..))]
        window: u32,
        /// Overwrite existing files.
        #[arg(long)]
        force: bool,
    },
    /// Accept one connection, echo every record back, exit on close.
    Server {
        #[arg(long)]
        provision: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7470")]
        listen: String,
    },
    /// Connect, send records and check each acknowledgment.
    Client {
        #[arg(long)]
        provision: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7470")]
        connect: String,
        /// Send one payload and print the acknowledgment.
        #[arg(long, conflicts_with = "count")]
        send: Option<String>,
        /// Number of records to exchange.
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Run a benchmark suite.
    Bench {
        #[arg(long, value_enum, default_value_t = Suite::Primitives)]
        suite: Suite,
        /// Write the CSV report here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Message sizes in bytes.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
        sizes: Vec<usize>,
        /// Minimum operations per primitive case.
        #[arg(long, default_value_t = 20_000)]
        iterations: u64,
        /// Minimum operations per signature case.
        #[arg(long, default_value_t = 1000)]
        sign_iterations: u64,
        /// Measurement window per channel case, in milliseconds.
        #[arg(long, default_value_t = 1000)]
        duration_ms: u64,
        /// External TLS speed command; `{size}` is replaced by the message size.
        #[arg(long, default_value = DEFAULT_TLS_TEMPLATE)]
        tls_command: String,
    },
    /// Run the statistical battery over chain output.
    Randomness {
        #[arg(long, default_value_t = 1_000_000)]
        bits: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Take seed and root from this provisioning file instead of
        /// deriving them from --material-seed.
        #[arg(long)]
        provision: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        material_seed: u64,
    },
    /// Print known-answer chain values for an all-zero seed and root.
    Vectors,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auth,
    Aead,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Auth => Mode::AuthOnly,
            ModeArg::Aead => Mode::Aead,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Primitives,
    Channel,
    Tls,
}

/// An operational failure: a short class for scripts plus detail.
#[derive(Debug)]
struct Failure {
    class: &'static str,
    detail: String,
}

impl Failure {
    fn new(class: &'static str, detail: impl Into<String>) -> Self {
        Self {
            class,
            detail: detail.into(),
        }
    }
}

impl From<ChannelError> for Failure {
    fn from(e: ChannelError) -> Self {
        Failure::new(e.class(), e.to_string())
    }
}

impl From<kiss_core::bench::BenchError> for Failure {
    fn from(e: kiss_core::bench::BenchError) -> Self {
        Failure::new("bench", e.to_string())
    }
}

impl From<kiss_core::randomness::RandomnessError> for Failure {
    fn from(e: kiss_core::randomness::RandomnessError) -> Self {
        Failure::new("randomness", e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn io_fail(class: &'static str, what: impl std::fmt::Display) -> impl FnOnce(io::Error) -> Failure {
    move |e| Failure::new(class, format!("{what}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KISS_LOG", "error"))
        .format_timestamp_millis()
        .init();
    let result = match cli.command {
        Command::Provision {
            out_dir,
            mode,
            window,
            force,
        } => cmd_provision(&out_dir, mode.into(), window, force),
        Command::Server { provision, listen } => cmd_server(&provision, &listen),
        Command::Client {
            provision,
            connect,
            send,
            count,
        } => cmd_client(&provision, &connect, send.as_deref(), count),
        Command::Bench {
            suite,
            csv,
            sizes,
            iterations,
            sign_iterations,
            duration_ms,
            tls_command,
        } => {
            let cfg = BenchConfig {
                sizes,
                iterations,
                ..BenchConfig::default()
            };
            let opts = BenchOpts {
                sign_iterations,
                window: Duration::from_millis(duration_ms),
                tls_command,
            };
            cmd_bench(suite, &cfg, &opts, csv.as_deref())
        }
        Command::Randomness {
            bits,
            trials,
            alpha,
            csv,
            provision,
            material_seed,
        } => cmd_randomness(bits, trials, alpha, csv.as_deref(), provision.as_deref(), material_seed),
        Command::Vectors => cmd_vectors(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kiss: {} error: {}", f.class, f.detail);
            ExitCode::from(1)
        }
    }
}

fn write_secret_file(path: &Path, text: &str, force: bool) -> CmdResult {
    use std::os::unix::fs::OpenOptionsExt;
    let mut opts = fs::OpenOptions::new();
    opts.write(true).mode(0o600);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let mut f = opts.open(path).map_err(io_fail("io", path.display()))?;
    f.write_all(text.as_bytes()).map_err(io_fail("io", path.display()))
}

fn cmd_provision(out_dir: &Path, mode: Mode, window: u32, force: bool) -> CmdResult {
    let (init, resp) = generate_provision(&mut rand::rngs::OsRng, mode, window)
        .map_err(|e| Failure::new("provision", e.to_string()))?;
    for file in [&init, &resp] {
        let path = out_dir.join(format!("{}.kiss", file.role.as_str()));
        write_secret_file(&path, &file.to_text(), force)?;
        info!("wrote {}", path.display());
    }
    println!("{}", init.assoc_id);
    Ok(())
}

fn load_provision(path: &Path, expected: Role) -> Result<Association, Failure> {
    let text = fs::read_to_string(path).map_err(io_fail("provision", path.display()))?;
    let file = ProvisionFile::parse(&text).map_err(|e| Failure::new("provision", format!("{}: {e}", path.display())))?;
    if file.role != expected {
        return Err(Failure::new(
            "provision",
            format!("{}: role is {}, this command needs {}", path.display(), file.role.as_str(), expected.as_str()),
        ));
    }
    Association::load(&file).map_err(|e| Failure::new("association", e.to_string()))
}

fn cmd_server(provision: &Path, listen: &str) -> CmdResult {
    let assoc = load_provision(provision, Role::Responder)?;
    let listener = TcpListener::bind(listen).map_err(io_fail("bind", listen))?;
    let local = listener.local_addr().map_err(io_fail("bind", listen))?;
    println!("listening {local}");
    io::stdout().flush().ok();
    let (stream, peer) = listener.accept().map_err(io_fail("transport", "accept"))?;
    stream.set_nodelay(true).ok();
    info!("connection from {peer}");
    let mut ep = ChannelEndpoint::new(assoc, stream);
    ep.handshake()?;
    let mut records = 0u64;
    while let Incoming::Data(payload) = ep.recv()? {
        ep.send(&payload)?;
        records += 1;
    }
    println!("closed {peer} after {records} records");
    Ok(())
}

fn cmd_client(provision: &Path, connect: &str, send: Option<&str>, count: u64) -> CmdResult {
    let assoc = load_provision(provision, Role::Initiator)?;
    let stream = TcpStream::connect(connect).map_err(io_fail("connect", connect))?;
    stream.set_nodelay(true).ok();
    stream
        .set_read_timeout(Some(Duration::from_secs(30)))
        .map_err(io_fail("transport", connect))?;
    let mut ep = ChannelEndpoint::new(assoc, stream);
    ep.handshake()?;
    let exchange = |ep: &mut ChannelEndpoint<TcpStream>, payload: &[u8]| -> Result<Vec<u8>, Failure> {
        ep.send(payload)?;
        match ep.recv()? {
            Incoming::Data(ack) => Ok(ack),
            Incoming::Closed => Err(Failure::new("protocol", "server closed before acknowledging")),
        }
    };
    let start = Instant::now();
    if let Some(text) = send {
        let ack = exchange(&mut ep, text.as_bytes())?;
        println!("{}", String::from_utf8_lossy(&ack));
    } else {
        for i in 0..count {
            let payload = format!("kiss-{i:010}");
            let ack = exchange(&mut ep, payload.as_bytes())?;
            if ack != payload.as_bytes() {
                return Err(Failure::new("protocol", format!("acknowledgment {i} does not echo the record")));
            }
        }
        println!("exchanged {count} records in {:.3} s", start.elapsed().as_secs_f64());
    }
    ep.close()?;
    Ok(())
}

fn write_csv(path: Option<&Path>, csv: &str) -> CmdResult {
    if let Some(p) = path {
        fs::write(p, csv).map_err(io_fail("io", p.display()))?;
        info!("wrote {}", p.display());
    }
    Ok(())
}

struct BenchOpts {
    sign_iterations: u64,
    window: Duration,
    tls_command: String,
}

fn cmd_bench(suite: Suite, cfg: &BenchConfig, opts: &BenchOpts, csv: Option<&Path>) -> CmdResult {
    let window = opts.window;
    match suite {
        Suite::Primitives => {
            let sign_cfg = BenchConfig {
                iterations: opts.sign_iterations,
                ..cfg.clone()
            };
            let mut reports = Vec::new();
            for p in Primitive::ALL {
                debug!("benchmarking {}", p.name());
                let cfg = match p {
                    Primitive::SignRsa2048 | Primitive::SignEcdsaP256 => &sign_cfg,
                    _ => cfg,
                };
                reports.push(bench_primitive(p, cfg)?);
            }
            let report = BenchReport::merge(reports);
            print!("{}", report.to_markdown());
            write_csv(csv, &report.to_csv())
        }
        Suite::Channel => {
            let report = channel_report(cfg, window, &[ChannelCase::Plaintext, ChannelCase::AuthOnly, ChannelCase::Aead])?;
            print!("{}", report.to_markdown());
            write_csv(csv, &report.to_csv())
        }
        Suite::Tls => {
            let kiss = channel_report(cfg, window, &[ChannelCase::AuthOnly, ChannelCase::Aead])?;
            let tls = bench_tls_baseline(cfg, &opts.tls_command)?;
            let cmp = compare_reports(&[("kiss", &kiss), ("tls", &tls)], "tls:tls-baseline")?;
            print!("{}", cmp.to_markdown());
            if tls.cases.iter().all(|c| c.is_skipped()) {
                println!("tls baseline skipped: external tool unavailable");
            }
            println!("core protocol source lines: {}", core_line_count());
            write_csv(csv, &cmp.to_csv())
        }
    }
}

fn channel_report(cfg: &BenchConfig, window: Duration, cases: &[ChannelCase]) -> Result<BenchReport, Failure> {
    let mut reports = Vec::new();
    for &case in cases {
        for &size in &cfg.sizes {
            reports.push(bench_channel(case, size, window)?);
        }
    }
    Ok(BenchReport::merge(reports))
}

fn cmd_randomness(
    bits: usize,
    trials: usize,
    alpha: f64,
    csv: Option<&Path>,
    provision: Option<&Path>,
    material_seed: u64,
) -> CmdResult {
    let (seed, root) = match provision {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_fail("provision", path.display()))?;
            let file = ProvisionFile::parse(&text).map_err(|e| Failure::new("provision", e.to_string()))?;
            (file.seed.clone(), file.root.clone())
        }
        None => {
            let mut rng = ChaCha20Rng::seed_from_u64(material_seed);
            let mut s = [0u8; 32];
            let mut r = [0u8; 32];
            rand::RngCore::fill_bytes(&mut rng, &mut s);
            rand::RngCore::fill_bytes(&mut rng, &mut r);
            (Seed::new(s), Root::new(r))
        }
    };
    let start = Instant::now();
    let report = run_battery(&seed, &root, bits, trials, alpha)?;
    info!("battery finished in {:.1} s", start.elapsed().as_secs_f64());
    print!("{}", report.to_table());
    write_csv(csv, &report.to_csv())?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure::new("randomness", "pass proportions outside the confidence interval"))
    }
}

fn cmd_vectors() -> CmdResult {
    let seed = Seed::new([0; 32]);
    let root = Root::new([0; 32]);
    println!("seed {}", hex::encode(seed.expose()));
    println!("root {}", hex::encode(root.expose()));
    println!("label {}", String::from_utf8_lossy(LABEL_C2S));
    let mut chain = IdvvState::new(Arc::new(seed), &root, LABEL_C2S).map_err(|e| Failure::new("chain", e.to_string()))?;
    for _ in 0..4 {
        let v = chain.next().map_err(|e| Failure::new("chain", e.to_string()))?;
        println!("{} {}", v.counter(), hex::encode(v.bytes()));
    }
    Ok(())
}
