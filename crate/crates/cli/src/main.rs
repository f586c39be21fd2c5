mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use artqr::decode::{error_level, render_target};
use artqr::detect::detect;
use artqr::qab::{make_blueprint, Blueprint, Sidecar};
use artqr::qr::{encode_message, CodeTarget, Message};
use artqr::raster::{self, load_luminance, GrayImage};
use artqr::refine::refine_image;
use artqr::scan::{run_campaign, Scenario};
use clap::{Args, Parser, Subcommand};
use config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "artqr", about = "Aesthetic QR codes: blueprints, verification, refinement and scan simulation")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Shared {
    /// Flat `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Text to encode, or the expected decode result.
    #[arg(long, global = true)]
    message: Option<String>,
    /// Dead-zone half width as a fraction of 128 (default 0.6).
    #[arg(long, global = true)]
    eta: Option<String>,
    /// Symbol version 1..=40 (default 5).
    #[arg(long, global = true)]
    version: Option<String>,
    /// Error correction level L, M, Q or H (default M).
    #[arg(long, global = true)]
    ec_level: Option<String>,
    /// Pixels per module (default 16).
    #[arg(long, global = true)]
    module_px: Option<String>,
    /// Sampling window side in pixels (default module_px / 3).
    #[arg(long, global = true)]
    window: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Any other setting, e.g. `--set iterations=600`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the plain code of a message.
    Encode {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse a guidance image with a message into a scannable blueprint.
    Blueprint {
        #[arg(long)]
        guidance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the output path with a .json extension.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Report the error level and decode result of an image.
    Verify {
        image: PathBuf,
        /// Defaults to `<image stem>.json` when that file exists.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Optimize a stylized image until it scans.
    Refine {
        #[arg(long)]
        stylized: PathBuf,
        #[arg(long)]
        blueprint: PathBuf,
        /// Defaults to `<blueprint stem>.json`.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the output path with a .csv extension.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a synthetic scanning campaign.
    Simulate {
        image: PathBuf,
        /// JSON array of scenarios.
        #[arg(long)]
        scenarios: PathBuf,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Also write the text table here.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Ground truth sidecar; defaults to `<image stem>.json` when present.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
}

fn resolve(shared: &Shared) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &shared.config {
        cfg.apply_file(path)?;
    }
    let flags = [
        ("message", &shared.message),
        ("eta", &shared.eta),
        ("version", &shared.version),
        ("ec_level", &shared.ec_level),
        ("module_px", &shared.module_px),
        ("window", &shared.window),
        ("seed", &shared.seed),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for kv in &shared.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn with_ext(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// The explicit sidecar, else `<stem>.json` beside `image` if it exists.
fn find_sidecar(explicit: &Option<PathBuf>, image: &Path) -> Option<PathBuf> {
    explicit.clone().or_else(|| Some(with_ext(image, "json")).filter(|p| p.is_file()))
}

fn read_gray(path: &Path) -> anyhow::Result<GrayImage> {
    load_luminance(path).with_context(|| format!("reading {}", path.display()))
}

fn sidecar_message(sc: &Sidecar) -> anyhow::Result<Option<Message>> {
    sc.message.as_ref().map(|m| Ok(Message::new(m.as_bytes(), sc.ec_level, sc.version)?)).transpose()
}

fn encode(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let msg = cfg.message()?;
    let target = encode_message(&msg, cfg.mask)?;
    let (img, grid) = render_target(&target, cfg.module_px, cfg.quiet);
    img.save_png(out)?;
    let sidecar = Sidecar {
        version: target.version(),
        ec_level: target.ec_level(),
        mask: target.mask(),
        n: grid.n,
        a: grid.a,
        origin: grid.origin,
        eta: cfg.eta,
        window: cfg.window(),
        u_map: Vec::new(),
        bits: target.bit_string(),
        message: cfg.message.clone(),
    };
    let side = with_ext(out, "json");
    sidecar.save(&side)?;
    println!("wrote {} ({}x{}) and {}", out.display(), img.width(), img.height(), side.display());
    Ok(())
}

fn blueprint(cfg: &PipelineConfig, guidance: &Path, out: &Path, sidecar: &Option<PathBuf>) -> anyhow::Result<()> {
    let msg = cfg.message()?;
    let g = read_gray(guidance)?;
    let bp = make_blueprint(&g, &msg, &cfg.blueprint_options()?)?;
    bp.image.save_png(out)?;
    let side = sidecar.clone().unwrap_or_else(|| with_ext(out, "json"));
    bp.sidecar(cfg.message.as_deref()).save(&side)?;
    let e = error_level(&bp.image, &bp.reorganized, &bp.grid, &bp.params)?;
    println!("wrote {} and {}; e = {e}", out.display(), side.display());
    Ok(())
}

/// Fraction of data modules where what the scanner saw differs from the
/// expected target.
fn detected_error(dark: &[bool], target: &CodeTarget) -> f64 {
    let mut wrong = 0;
    let mut total = 0;
    for (i, (&d, role)) in dark.iter().zip(target.roles()).enumerate() {
        if role.is_data_region() {
            total += 1;
            if d != (target.bits()[i] == 0) {
                wrong += 1;
            }
        }
    }
    wrong as f64 / total.max(1) as f64
}

fn verify(cfg: &PipelineConfig, image: &Path, sidecar: &Option<PathBuf>) -> anyhow::Result<()> {
    let img = read_gray(image)?;
    let side = find_sidecar(sidecar, image);
    let mut expected = if cfg.message.is_some() { Some(cfg.message()?) } else { None };
    let mut params = cfg.params()?;
    let mut e = None;
    if let Some(path) = &side {
        let sc = Sidecar::load(path).with_context(|| format!("loading sidecar {}", path.display()))?;
        log::info!("using sidecar {}", path.display());
        if !cfg.is_explicit("eta") && !cfg.is_explicit("window") {
            params = sc.params()?;
        }
        if expected.is_none() {
            expected = sidecar_message(&sc)?;
        }
        e = Some(error_level(&img, &sc.target()?, &sc.grid()?, &params)?);
    }
    let detection = detect(&img, &params);
    if let (None, Ok(d)) = (e, &detection) {
        let text = expected.as_ref().map_or(&d.message.bytes, |m| &m.bytes);
        if let Ok(m) = Message::new(text.clone(), d.message.ec_level, d.message.version) {
            e = Some(detected_error(&d.dark, &encode_message(&m, d.mask)?));
        }
    }
    match e {
        Some(e) => println!("e = {e}"),
        None => println!("e = n/a"),
    }
    let d = detection.map_err(|e| anyhow!("decode failed: {e:?} ({e})"))?;
    println!("decoded: {}", String::from_utf8_lossy(&d.message.bytes));
    if let Some(m) = &expected {
        if m.bytes != d.message.bytes {
            bail!("decoded message differs from the expected {:?}", String::from_utf8_lossy(&m.bytes));
        }
    }
    Ok(())
}

fn refine(cfg: &PipelineConfig, stylized: &Path, bp_path: &Path, sidecar: &Option<PathBuf>, out: &Path, trace: &Option<PathBuf>) -> anyhow::Result<()> {
    let side = sidecar.clone().unwrap_or_else(|| with_ext(bp_path, "json"));
    let sc = Sidecar::load(&side).with_context(|| format!("loading sidecar {}", side.display()))?;
    let bp = Blueprint::from_parts(read_gray(bp_path)?, &sc)?;
    let input = raster::load(stylized).with_context(|| format!("reading {}", stylized.display()))?;
    let outcome = refine_image(&input, &bp, &cfg.weights, &cfg.refine)?;
    outcome.image.save_png(out)?;
    let trace = trace.clone().unwrap_or_else(|| with_ext(out, "csv"));
    outcome.save_trace_csv(&trace)?;
    println!(
        "wrote {} and {}; e = {} at iteration {} of {}",
        out.display(),
        trace.display(),
        outcome.best_error,
        outcome.best_iteration,
        outcome.iterations_run
    );
    if outcome.best_error > 0.0 {
        log::warn!("refinement stopped with e = {}; try more iterations", outcome.best_error);
    }
    Ok(())
}

fn simulate(cfg: &PipelineConfig, image: &Path, scenarios: &Path, out: &Path, table: &Option<PathBuf>, sidecar: &Option<PathBuf>) -> anyhow::Result<()> {
    let img = read_gray(image)?;
    let mut list = Scenario::load_list(scenarios).with_context(|| format!("loading scenarios {}", scenarios.display()))?;
    if let Some(seed) = cfg.seed {
        list.iter_mut().for_each(|s| s.seed = seed);
    }
    let mut params = cfg.params()?;
    let mut truth = None;
    if let Some(path) = find_sidecar(sidecar, image) {
        let sc = Sidecar::load(&path).with_context(|| format!("loading sidecar {}", path.display()))?;
        if !cfg.is_explicit("eta") && !cfg.is_explicit("window") {
            params = sc.params()?;
        }
        truth = sidecar_message(&sc)?;
    }
    if cfg.message.is_some() {
        truth = Some(cfg.message()?);
    }
    let truth = match truth {
        Some(t) => t,
        None => {
            log::info!("no expected message given; reading it from the undistorted image");
            detect(&img, &params).context("undistorted image does not decode")?.message
        }
    };
    let report = run_campaign(&img, &truth, &list, &params)?;
    report.save_json(out)?;
    let text = report.to_table();
    if let Some(t) = table {
        std::fs::write(t, &text).map_err(artqr::Error::from)?;
    }
    print!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli.shared)?;
    log::info!("resolved config: {cfg:?}");
    match &cli.command {
        Command::Encode { out } => encode(&cfg, out),
        Command::Blueprint { guidance, out, sidecar } => blueprint(&cfg, guidance, out, sidecar),
        Command::Verify { image, sidecar } => verify(&cfg, image, sidecar),
        Command::Refine {
            stylized,
            blueprint,
            sidecar,
            out,
            trace,
        } => refine(&cfg, stylized, blueprint, sidecar, out, trace),
        Command::Simulate {
            image,
            scenarios,
            out,
            table,
            sidecar,
        } => simulate(&cfg, image, scenarios, out, table, sidecar),
    }
}

/// 2 for file and format problems, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|c| {
        c.downcast_ref::<artqr::Error>().is_some_and(artqr::Error::is_io) || c.is::<std::io::Error>() || c.is::<serde_json::Error>()
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
