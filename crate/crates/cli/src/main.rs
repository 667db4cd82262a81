//! Command-line driver: local and split training, a standalone server and
//! client, benchmarking, evaluation, and split-layer activation dumps.

use std::fs;
use std::io::Write as _;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use splitfhe_core::data::{load_mitbih, synth_split, Dataset};
use splitfhe_core::nn::{
    load_checkpoint, save_checkpoint, ClientModel, LinearHead, LocalModel, ModelSpec,
};
use splitfhe_core::protocol::{
    evaluate_local, train_local, ClientEngine, EpochMetrics, ProtocolError, RunSummary,
    ServerEngine,
};
use splitfhe_core::wire::{Mode, Tag, TrainConfig, WireError};

#[derive(Parser)]
#[command(
    name = "splitfhe",
    version,
    about = "Split training of a 1D CNN with an optionally encrypted server layer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Training configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dataset: a CSV path or `synth:<count>:<seed>`.
    #[arg(long)]
    data: String,
    /// Output directory for metrics, transcripts, and checkpoints.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the unsplit model locally.
    TrainLocal(CommonArgs),
    /// Train split: spawns the server role in-process over loopback TCP.
    TrainSplit(CommonArgs),
    /// Run the server role and serve one client session.
    Server {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the client role against a listening server.
    Client {
        #[arg(long)]
        connect: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a full-model checkpoint on a dataset's test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: String,
    },
    /// Time the first K batches of a split run and extrapolate per-epoch cost.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Batches to measure.
        #[arg(long, default_value_t = 10)]
        batches: usize,
    },
    /// Dump raw inputs and split-layer activation maps as CSV rows.
    DumpActivations {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: String,
        /// Comma-separated sample indices from the test split.
        #[arg(long, default_value = "0")]
        samples: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Transport(String),
    Divergence(String),
    Data(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Data(_) => 5,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Transport(m)
            | CliError::Divergence(m)
            | CliError::Data(m)
            | CliError::Other(m) => m,
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match &e {
            ProtocolError::Divergence { .. } => CliError::Divergence(e.to_string()),
            ProtocolError::TransportAt { .. } => CliError::Transport(e.to_string()),
            ProtocolError::Wire(WireError::Io(_)) => CliError::Transport(e.to_string()),
            ProtocolError::Wire(WireError::Config(_)) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::TrainLocal(args) => cmd_train_local(args),
        Command::TrainSplit(args) => cmd_train_split(args),
        Command::Server { listen, config } => cmd_server(&listen, &config),
        Command::Client { connect, common } => cmd_client(&connect, common),
        Command::Eval {
            checkpoint,
            config,
            data,
        } => cmd_eval(&checkpoint, &config, &data),
        Command::Bench { common, batches } => cmd_bench(common, batches),
        Command::DumpActivations {
            checkpoint,
            data,
            samples,
            out,
        } => cmd_dump(&checkpoint, &data, &samples, &out),
    }
}

fn load_config(path: &Path) -> Result<TrainConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let cfg = TrainConfig::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    if cfg.mode == Mode::Encrypted {
        if let Ok(Some(params)) = cfg.he_params() {
            if params.is_below_standard_security() {
                eprintln!(
                    "warning: HE parameter set (P={}, {:?}) is below customary security margins",
                    params.poly_degree, params.chain_bits
                );
            }
        }
    }
    Ok(cfg)
}

/// `synth:<count>:<seed>` or a CSV path; either way, first half train and
/// second half test.
fn load_data(spec: &str) -> Result<(Dataset, Dataset), CliError> {
    if let Some(rest) = spec.strip_prefix("synth:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 {
            return Err(CliError::Usage(format!(
                "data spec `{spec}`: expected synth:<count>:<seed>"
            )));
        }
        let count: usize = parts[0]
            .parse()
            .map_err(|e| CliError::Usage(format!("data spec count: {e}")))?;
        let seed: u64 = parts[1]
            .parse()
            .map_err(|e| CliError::Usage(format!("data spec seed: {e}")))?;
        if count < 10 {
            return Err(CliError::Usage(
                "synthetic count must be at least 10".into(),
            ));
        }
        Ok(synth_split(count, seed))
    } else {
        load_mitbih(Path::new(spec)).map_err(|e| CliError::Data(e.to_string()))
    }
}

fn write_metrics_csv(path: &Path, epochs: &[EpochMetrics]) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,loss,seconds,bytes_out,bytes_in,accuracy")?;
    for e in epochs {
        let acc = e.accuracy.map(|a| format!("{a}")).unwrap_or_default();
        writeln!(
            f,
            "{},{},{:.3},{},{},{}",
            e.epoch, e.mean_loss, e.seconds, e.bytes_out, e.bytes_in, acc
        )?;
    }
    Ok(())
}

fn report(summary: &RunSummary) {
    for e in &summary.epochs {
        println!(
            "epoch {} loss {:.4} seconds {:.2} bytes_out {} bytes_in {}",
            e.epoch, e.mean_loss, e.seconds, e.bytes_out, e.bytes_in
        );
    }
    println!("test_accuracy {:.4}", summary.accuracy);
}

fn cmd_train_local(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let (train, test) = load_data(&args.data)?;
    fs::create_dir_all(&args.out)?;
    let (summary, model) = train_local(&cfg, &train, &test, None)?;
    write_metrics_csv(&args.out.join("metrics.csv"), &summary.epochs)?;
    save_checkpoint(
        &args.out.join("model.bin"),
        &[
            (&model.client.w1, &model.client.b1),
            (&model.client.w2, &model.client.b2),
            (&model.head.weight, &model.head.bias),
        ],
    )
    .map_err(|e| CliError::Other(e.to_string()))?;
    report(&summary);
    Ok(())
}

fn cmd_train_split(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let (train, test) = load_data(&args.data)?;
    fs::create_dir_all(&args.out)?;
    let listener =
        TcpListener::bind("127.0.0.1:0").map_err(|e| CliError::Transport(format!("bind: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::Transport(e.to_string()))?;
    let server_cfg = cfg.clone();
    let server = std::thread::spawn(move || -> Result<LinearHead, ProtocolError> {
        let (stream, _) = listener
            .accept()
            .map_err(|e| ProtocolError::Wire(WireError::Io(e)))?;
        let (_, head) = ServerEngine::new(stream, server_cfg)?.run()?;
        Ok(head)
    });
    let stream =
        TcpStream::connect(addr).map_err(|e| CliError::Transport(format!("connect: {e}")))?;
    let engine = ClientEngine::new(stream, cfg)?;
    let (summary, model) = engine.run(&train, &test)?;
    let head = server
        .join()
        .map_err(|_| CliError::Other("server thread panicked".into()))?
        .map_err(CliError::from)?;
    write_metrics_csv(&args.out.join("metrics.csv"), &summary.epochs)?;
    let mut tf = fs::File::create(args.out.join("transcript.csv"))?;
    summary.transcript.to_csv(&mut tf)?;
    save_checkpoint(
        &args.out.join("model.bin"),
        &[
            (&model.w1, &model.b1),
            (&model.w2, &model.b2),
            (&head.weight, &head.bias),
        ],
    )
    .map_err(|e| CliError::Other(e.to_string()))?;
    report(&summary);
    Ok(())
}

fn cmd_server(listen: &str, config: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let listener = TcpListener::bind(listen)
        .map_err(|e| CliError::Transport(format!("bind {listen}: {e}")))?;
    eprintln!("listening on {listen}");
    let (stream, peer) = listener
        .accept()
        .map_err(|e| CliError::Transport(format!("accept: {e}")))?;
    eprintln!("client connected from {peer}");
    let (summary, _) = ServerEngine::new(stream, cfg)?.run()?;
    println!(
        "served {} training batches over {} epochs, {} eval batches; sent {} bytes, received {}",
        summary.train_batches,
        summary.epochs_seen,
        summary.eval_batches,
        summary.transcript.total_sent(),
        summary.transcript.total_received()
    );
    Ok(())
}

fn cmd_client(connect: &str, args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let (train, test) = load_data(&args.data)?;
    fs::create_dir_all(&args.out)?;
    let stream = TcpStream::connect(connect)
        .map_err(|e| CliError::Transport(format!("connect {connect}: {e}")))?;
    let engine = ClientEngine::new(stream, cfg)?;
    let (summary, model) = engine.run(&train, &test)?;
    write_metrics_csv(&args.out.join("metrics.csv"), &summary.epochs)?;
    let mut tf = fs::File::create(args.out.join("transcript.csv"))?;
    summary.transcript.to_csv(&mut tf)?;
    save_checkpoint(
        &args.out.join("model.bin"),
        &[(&model.w1, &model.b1), (&model.w2, &model.b2)],
    )
    .map_err(|e| CliError::Other(e.to_string()))?;
    report(&summary);
    Ok(())
}

fn cmd_eval(checkpoint: &Path, config: &Path, data: &str) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let (_, test) = load_data(data)?;
    let layers = load_checkpoint(checkpoint).map_err(|e| CliError::Data(e.to_string()))?;
    if layers.len() != 3 {
        return Err(CliError::Usage(format!(
            "checkpoint {} holds {} layers; evaluation needs the full three-layer model",
            checkpoint.display(),
            layers.len()
        )));
    }
    let spec = ModelSpec::m1();
    let mut it = layers.into_iter();
    let (w1, b1) = it.next().unwrap();
    let (w2, b2) = it.next().unwrap();
    let (wl, bl) = it.next().unwrap();
    let model = LocalModel {
        client: ClientModel::from_params(spec, w1, b1, w2, b2),
        head: LinearHead::from_params(wl, bl, cfg.server_opt),
    };
    let accuracy = evaluate_local(&model, &test, cfg.batch_size.max(16))?;
    println!("test_accuracy {accuracy:.4}");
    Ok(())
}

fn cmd_bench(args: CommonArgs, batches: usize) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    let (train, test) = load_data(&args.data)?;
    fs::create_dir_all(&args.out)?;
    if batches == 0 {
        return Err(CliError::Usage("bench needs at least one batch".into()));
    }
    let full_epoch_batches = train.len() / cfg.batch_size;
    if batches > full_epoch_batches {
        return Err(CliError::Usage(format!(
            "bench of {batches} batches exceeds the {full_epoch_batches} available per epoch"
        )));
    }
    cfg.epochs = 1;
    cfg.batches_per_epoch = Some(batches);

    let listener =
        TcpListener::bind("127.0.0.1:0").map_err(|e| CliError::Transport(format!("bind: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::Transport(e.to_string()))?;
    let server_cfg = cfg.clone();
    let server = std::thread::spawn(move || -> Result<(), ProtocolError> {
        let (stream, _) = listener
            .accept()
            .map_err(|e| ProtocolError::Wire(WireError::Io(e)))?;
        ServerEngine::new(stream, server_cfg)?.run()?;
        Ok(())
    });
    let stream =
        TcpStream::connect(addr).map_err(|e| CliError::Transport(format!("connect: {e}")))?;
    let engine = ClientEngine::new(stream, cfg.clone())?;
    let started = Instant::now();
    let (summary, _) = engine.run(&train, &test)?;
    let _ = server.join();
    let train_seconds = summary.epochs[0].seconds;
    let _total = started.elapsed();

    // per-batch communication: training-phase frames only
    let batch_tags = [
        Tag::ActPlain,
        Tag::ActEnc,
        Tag::OutPlain,
        Tag::OutEnc,
        Tag::GradOut,
        Tag::GradW,
        Tag::GradAct,
    ];
    let batch_bytes: u64 = summary.transcript.entries[..summary.training_entries]
        .iter()
        .filter(|e| batch_tags.contains(&e.tag))
        .map(|e| e.bytes)
        .sum();
    let mean_batch_bytes = batch_bytes as f64 / batches as f64;
    let mean_latency = train_seconds / batches as f64;
    let extrapolated_bytes = full_epoch_batches as f64 * mean_batch_bytes;
    let extrapolated_seconds = full_epoch_batches as f64 * mean_latency;

    println!("batches_measured {batches}");
    println!("mean_batch_seconds {mean_latency:.4}");
    println!("mean_batch_bytes {mean_batch_bytes:.1}");
    println!("epoch_batches {full_epoch_batches}");
    println!("extrapolated_epoch_bytes {extrapolated_bytes:.0}");
    println!("extrapolated_epoch_seconds {extrapolated_seconds:.1}");
    let mut f = fs::File::create(args.out.join("bench.csv"))?;
    writeln!(
        f,
        "batches,mean_batch_seconds,mean_batch_bytes,epoch_batches,extrapolated_epoch_bytes,extrapolated_epoch_seconds"
    )?;
    writeln!(
        f,
        "{batches},{mean_latency:.6},{mean_batch_bytes:.1},{full_epoch_batches},{extrapolated_bytes:.0},{extrapolated_seconds:.1}"
    )?;
    Ok(())
}

fn cmd_dump(checkpoint: &Path, data: &str, samples: &str, out: &Path) -> Result<(), CliError> {
    let (_, test) = load_data(data)?;
    let layers = load_checkpoint(checkpoint).map_err(|e| CliError::Data(e.to_string()))?;
    if layers.len() < 2 {
        return Err(CliError::Usage(
            "checkpoint must hold at least the two client convolution layers".into(),
        ));
    }
    let spec = ModelSpec::m1();
    let mut it = layers.into_iter();
    let (w1, b1) = it.next().unwrap();
    let (w2, b2) = it.next().unwrap();
    let client = ClientModel::from_params(spec.clone(), w1, b1, w2, b2);
    let indices: Result<Vec<usize>, _> = samples.split(',').map(|s| s.trim().parse()).collect();
    let indices = indices.map_err(|e| CliError::Usage(format!("samples list: {e}")))?;
    let mut f = fs::File::create(out)?;
    writeln!(f, "kind,sample,channel,values")?;
    for &idx in &indices {
        if idx >= test.len() {
            return Err(CliError::Usage(format!(
                "sample index {idx} out of range (test split has {})",
                test.len()
            )));
        }
        let x = test.sample(idx);
        let row: Vec<String> = x.data().iter().map(|v| format!("{v}")).collect();
        writeln!(f, "input,{idx},,{}", row.join(","))?;
        let act = client
            .infer(&x)
            .map_err(|e| CliError::Other(e.to_string()))?;
        let time = spec.split_time();
        for ch in 0..spec.split_channels() {
            let vals: Vec<String> = (0..time)
                .map(|t| format!("{}", act.data()[ch * time + t]))
                .collect();
            writeln!(f, "activation,{idx},{ch},{}", vals.join(","))?;
        }
    }
    println!(
        "wrote {} samples ({} rows) to {}",
        indices.len(),
        indices.len() * (1 + spec.split_channels()),
        out.display()
    );
    Ok(())
}
