use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ptseg::backend::{BackendServer, Session};
use ptseg::datasets::{self, BackendSource, RunSummary, VosDatapoint};
use ptseg::interaction::{self, Budget, Method, SequenceSimulation};
use ptseg::service::{self, Service, ServiceOptions};
use ptseg::synthetic::{self, Noise, SceneSpec};
use ptseg::{Error, PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "ptseg", version, about = "Point-tracking driven video object segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic suite into a DAVIS-layout dataset with scene specs.
    GenScene(GenScene),
    /// Semi-supervised VOS: seed each object from its first-appearance mask.
    #[command(alias = "run-vos")]
    Run(RunArgs),
    /// Instance segmentation from first-frame mask proposals.
    RunVis(RunVisArgs),
    /// Score a prediction directory against DAVIS-layout ground truth.
    Eval(EvalArgs),
    /// Convert MOTS instance tracks into a semi-supervised VOS dataset.
    ConvertMots(ConvertArgs),
    /// Simulate an interactive annotator and write IoU-vs-budget curves.
    Simulate(SimulateArgs),
    /// Serve oracle backends over the wire protocol.
    ServeBackend(ServeBackendArgs),
    /// Run the HTTP annotation service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Standard,
    Ablation,
    Emerging,
    Disappearing,
}

#[derive(Args)]
struct GenScene {
    #[arg(long, value_enum, default_value = "standard")]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Boundary dilation of the oracle segmenter, in pixels.
    #[arg(long, default_value_t = 0)]
    dilation: u32,
    /// Standard deviation of the oracle tracker's jitter, in pixels.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    occlusion_flip: f64,
    #[arg(long, default_value_t = 0.0)]
    mask_flip: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration as JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// DAVIS-layout dataset root.
    #[arg(long)]
    dataset: PathBuf,
    /// `builtin` for oracle backends from `<dataset>/scenes`, or a sidecar
    /// address: tcp://host:port, unix:/path, exec:command args.
    #[arg(long, default_value = "builtin")]
    backend: String,
    /// Output directory; masks go to `<out>/<sequence>/<frame>.png`.
    #[arg(long)]
    out: PathBuf,
    /// Only these sequences.
    #[arg(long)]
    sequence: Vec<String>,
    /// Work at this longest side and resize masks back; remote backends only.
    #[arg(long)]
    resize: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunVisArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100)]
    max_proposals: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Scores as JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// One directory per sequence with `images/`, `masks/` and `tracks.json`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    SamOnly,
    Online,
    Offline,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::SamOnly => Method::SamOnly,
            MethodArg::Online => Method::Online,
            MethodArg::Offline => Method::Offline,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Interaction budget per object.
    #[arg(long, default_value_t = interaction::DEFAULT_MAX_INT)]
    budget: usize,
    #[arg(long, default_value_t = interaction::DEFAULT_MAX_INT_PER_FRAME)]
    max_per_frame: usize,
    #[arg(long, default_value_t = interaction::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Interactions per frame of the frame-by-frame method.
    #[arg(long, default_value_t = 1)]
    per_frame: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "builtin")]
    backend: String,
    /// CSV with columns budget, mean_iou, sequence.
    #[arg(long)]
    out: PathBuf,
    /// Interaction logs as JSON.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ServeBackendArgs {
    /// Scene spec JSON to serve oracles for.
    #[arg(long, conflicts_with_all = ["dataset", "sequence"])]
    scene: Option<PathBuf>,
    /// Scene dataset root; use with --sequence.
    #[arg(long, requires = "sequence")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    sequence: Option<String>,
    /// tcp://host:port, unix:/path or stdio.
    #[arg(long, default_value = "stdio")]
    listen: String,
    /// Advertise and enforce this tracker window size.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Sessions are persisted here and reloaded on start.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    #[arg(long, default_value_t = service::DEFAULT_MAX_UPLOAD_BYTES)]
    max_upload_bytes: usize,
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => serde_json::from_slice(&fs::read(p)?)?,
        None => PipelineConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn load_selected(root: &Path, only: &[String]) -> Result<Vec<VosDatapoint>> {
    if only.is_empty() {
        return datasets::load_davis_dir(root);
    }
    only.iter().map(|n| datasets::load_davis_sequence(root, n)).collect()
}

fn gen_scene(a: GenScene) -> Result<()> {
    let noise = Noise {
        boundary_dilation_px: a.dilation,
        point_jitter_sigma: a.jitter,
        occlusion_flip_prob: a.occlusion_flip,
        mask_flip_prob: a.mask_flip,
    };
    let specs: Vec<SceneSpec> = match a.suite {
        Suite::Standard => synthetic::standard_suite(a.seed),
        Suite::Ablation => synthetic::ablation_suite(a.seed),
        Suite::Emerging => vec![synthetic::emerging_segment_scene(a.seed)],
        Suite::Disappearing => vec![synthetic::disappearing_scene(a.seed)],
    }
    .into_iter()
    .map(|s| s.with_noise(noise))
    .collect();
    datasets::write_scene_dataset(&a.out, &specs)?;
    println!("wrote {} sequences to {}", specs.len(), a.out.display());
    Ok(())
}

/// Runs `f` on every selected sequence and writes masks plus diagnostics.
fn run_driver(
    c: &Common,
    f: impl Fn(&ptseg::VideoSequence, &PipelineConfig, &mut datasets::Backends) -> Result<ptseg::pipeline::PipelineRun>
        + Sync
        + Send,
) -> Result<bool> {
    let cfg = load_config(&c.config)?;
    let source = BackendSource::parse(&c.backend, &c.dataset);
    if c.resize.is_some() && matches!(source, BackendSource::Builtin { .. }) {
        return Err(Error::invalid("--resize needs a remote backend; oracle scenes live in original coordinates"));
    }
    let seqs = load_selected(&c.dataset, &c.sequence)?;
    let results = datasets::run_batch(&seqs, |dp| {
        let mut backends = source.open(&dp.sequence.name)?;
        let (w, h) = (dp.sequence.width(), dp.sequence.height());
        let work = match c.resize {
            Some(t) => datasets::resize_sequence(&dp.sequence, t)?,
            None => dp.sequence.clone(),
        };
        let run = f(&work, &cfg, &mut backends)?;
        let masks = datasets::resize_masks(&run.masks(), w, h);
        datasets::write_masks(&c.out.join(&dp.sequence.name), &dp.frame_names, &masks, w, h)?;
        Ok(run.diagnostics)
    });
    let mut ok = true;
    let summaries: Vec<RunSummary> = seqs
        .iter()
        .zip(results)
        .map(|(dp, r)| {
            let (diagnostics, error) = match r {
                Ok(d) => (Some(d), None),
                Err(e) => {
                    ok = false;
                    eprintln!("{}: {e}", dp.sequence.name);
                    (None, Some(e.to_string()))
                }
            };
            RunSummary {
                sequence: dp.sequence.name.clone(),
                diagnostics,
                error,
            }
        })
        .collect();
    write_json(&c.out.join("diagnostics.json"), &summaries)?;
    println!("wrote predictions for {} sequences to {}", summaries.len(), c.out.display());
    Ok(ok)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let budget = Budget {
        max_int: a.budget,
        max_int_per_frame: a.max_per_frame,
        threshold: a.threshold,
        ..Budget::default()
    };
    budget.validate()?;
    let method: Method = a.method.into();
    let source = BackendSource::parse(&a.backend, &a.dataset);
    let seqs = datasets::load_davis_dir(&a.dataset)?;
    let sims = datasets::run_batch(&seqs, |dp| {
        let (mut tracker, mut segmenter) = source.open(&dp.sequence.name)?;
        interaction::simulate_sequence(method, &dp.sequence, &budget, a.per_frame, &mut tracker, &mut segmenter, &cfg)
    })
    .into_iter()
    .collect::<Result<Vec<SequenceSimulation>>>()?;
    let max_budget = match method {
        Method::SamOnly => sims.iter().map(|s| s.interactions()).max().unwrap_or(0),
        _ => a.budget,
    };
    if let Some(dir) = a.out.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, interaction::curve_csv(&sims, max_budget))?;
    if let Some(log) = &a.log {
        write_json(log, &sims)?;
    }
    for s in &sims {
        println!("{}: mean IoU {:.4} after {} interactions", s.sequence, s.mean_iou(), s.interactions());
    }
    Ok(())
}

fn serve_backend(a: ServeBackendArgs) -> Result<()> {
    let spec: SceneSpec = match (&a.scene, &a.dataset, &a.sequence) {
        (Some(p), _, _) => serde_json::from_slice(&fs::read(p)?)?,
        (None, Some(root), Some(seq)) => datasets::load_scene_spec(root, seq)?,
        _ => return Err(Error::invalid("give --scene or --dataset with --sequence")),
    };
    spec.validate()?;
    let window = a.window;
    let server = BackendServer::new(move || {
        let mut tracker = synthetic::OracleTracker::new(&spec)?;
        if let Some(w) = window {
            tracker = tracker.windowed(w);
        }
        Ok(Session {
            tracker: Some(Box::new(tracker)),
            segmenter: Some(Box::new(synthetic::OracleSegmenter::new(&spec)?)),
        })
    });
    if a.listen == "stdio" {
        return server.serve(std::io::stdin().lock(), std::io::stdout().lock());
    }
    if let Some(addr) = a.listen.strip_prefix("tcp://") {
        let listener = std::net::TcpListener::bind(addr)?;
        log::info!("serving backends on tcp://{}", listener.local_addr()?);
        return server.serve_tcp(listener);
    }
    if let Some(path) = a.listen.strip_prefix("unix:") {
        let _ = fs::remove_file(path);
        return server.serve_unix(std::os::unix::net::UnixListener::bind(path)?);
    }
    Err(Error::invalid(format!("cannot listen on {}", a.listen)))
}

fn serve(a: ServeArgs) -> Result<()> {
    let svc: Arc<Service> = Service::open(ServiceOptions {
        state_dir: a.state_dir,
        max_upload_bytes: a.max_upload_bytes,
    })?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.addr).await?;
        eprintln!("annotation service listening on http://{}", listener.local_addr()?);
        service::serve(listener, svc).await
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenScene(a) => gen_scene(a).map(|_| true),
        Command::Run(a) => run_driver(&a.common, |seq, cfg, (t, s)| {
            datasets::run_semisupervised(seq, cfg, t, s)
        }),
        Command::RunVis(a) => {
            let k = a.max_proposals;
            run_driver(&a.common, move |seq, cfg, (t, s)| {
                datasets::run_first_frame_proposals(seq, k, cfg, t, s)
            })
        }
        Command::Eval(a) => datasets::evaluate_dirs(&a.pred, &a.gt).and_then(|score| {
            match &a.out {
                Some(p) => write_json(p, &score)?,
                None => {
                    let mut out = std::io::stdout().lock();
                    serde_json::to_writer_pretty(&mut out, &score)?;
                    writeln!(out)?;
                }
            }
            eprintln!("J {:.4}  F {:.4}  J&F {:.4}", score.j_mean, score.f_mean, score.jf);
            Ok(true)
        }),
        Command::ConvertMots(a) => datasets::convert_mots_dir(&a.input, &a.output).map(|conv| {
            let counts: BTreeMap<&String, usize> = conv.iter().map(|(k, v)| (k, v.objects.len())).collect();
            for (seq, n) in counts {
                println!("{seq}: {n} objects");
            }
            true
        }),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::ServeBackend(a) => serve_backend(a).map(|_| true),
        Command::Serve(a) => serve(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
