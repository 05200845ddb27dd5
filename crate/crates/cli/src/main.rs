//! `hairline`: facial-hairstyle audit toolkit.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hairline_core::augment::{
    apply_augmentation, load_source_pool, AugmentMode, AugmentationSpec, FileImages, Region, Scope,
    DEFAULT_MIN_HAIR_FRACTION,
};
use hairline_core::ingest::{
    load_attributes, load_embedding_ids, load_embeddings, load_landmarks, load_manifest, Dataset,
};
use hairline_core::labeling::{label_dataset, load_labels, write_labels, Labels, DEFAULT_THRESHOLD};
use hairline_core::manifest_builder::{
    build, default_grid, derive_seed, grid_run, load_female_pool, load_training_entries, EntryLabel,
    ManifestSpec, Protocol, SubjectPools, DEFAULT_IMAGES_PER_SUBJECT, DEFAULT_REPETITIONS, DEFAULT_SUBJECTS,
};
use hairline_core::pairs::{audit, AuditOptions, AuditReport, ImpostorSampling, TrainingTag, DEFAULT_TILE};
use hairline_core::report::{emit_report_table, render_distributions, GridResult};
use hairline_core::synth::{generate_cohort, SynthParams};
use hairline_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "hairline", version, about = "Facial-hairstyle face-recognition audit toolkit")]
struct Cli {
    /// Worker threads for audit and augment (default: all cores).
    #[arg(long, global = true, env = "HAIRLINE_THREADS")]
    threads: Option<usize>,

    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,

    /// Seed for every random choice made by the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label images clean-shaven (CS), facial hair (FH) or excluded.
    Label(LabelArgs),
    /// d-prime and score distributions per cohort and pair group.
    Audit(AuditArgs),
    /// Build controlled training manifests.
    Manifest(ManifestArgs),
    /// Facial-hair augmentation of training images.
    Augment(AugmentArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Render figures and tables from audit reports.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    attributes: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Row-order image ids for the embeddings (default: `<embeddings>.ids`).
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    /// Restrict to these cohorts (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    cohort: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Keep about this many impostor pairs per cohort instead of all.
    #[arg(long)]
    impostor_sample: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_TILE)]
    tile: usize,
    /// Training protocol that produced the embeddings, for grid figures.
    #[arg(long, requires_all = ["grid_point", "rep", "k", "subjects"])]
    protocol: Option<ProtocolArg>,
    #[arg(long, requires = "protocol")]
    grid_point: Option<usize>,
    #[arg(long, requires = "protocol")]
    rep: Option<usize>,
    #[arg(long, requires = "protocol")]
    k: Option<usize>,
    #[arg(long, requires = "protocol")]
    subjects: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProtocolArg {
    Across,
    Within,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Across => Protocol::AcrossSubjects,
            ProtocolArg::Within => Protocol::WithinSubjects,
        }
    }
}

#[derive(Args, Debug)]
struct ManifestArgs {
    #[arg(long)]
    protocol: ProtocolArg,
    /// CS subjects (across) or CS images per subject (within). Omit to build
    /// the whole default grid into `--out-dir`.
    #[arg(long)]
    x: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_IMAGES_PER_SUBJECT)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_SUBJECTS)]
    subjects: usize,
    /// Dataset manifest providing subject ids and sex.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// `subject_id,image_id` CSV appended unchanged to every manifest.
    #[arg(long)]
    female_pool: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    rep: usize,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    #[arg(long, required_unless_present = "out_dir", conflicts_with = "out_dir")]
    out: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    HairTransfer,
    RandomMask,
    RandomRegion,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegionArg {
    Mustache,
    Beard,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScopeArg {
    Male,
    All,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long)]
    mode: ModeArg,
    #[arg(long, default_value = "both")]
    region: RegionArg,
    #[arg(long)]
    prob: f64,
    #[arg(long, default_value = "male")]
    scope: ScopeArg,
    /// Dataset manifest of source candidates (default: `--manifest`).
    #[arg(long)]
    source_pool: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MIN_HAIR_FRACTION)]
    min_hair_fraction: f64,
    /// Training manifest; its CS and female entries are the targets.
    #[arg(long)]
    training: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    log: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    subjects: usize,
    #[arg(long, default_value_t = 24)]
    images: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    cs_frac: f64,
    #[arg(long, default_value_t = 0.3)]
    fh_offset: f64,
    #[arg(long, default_value_t = 0.7)]
    genuine_mu: f64,
    #[arg(long, default_value_t = 0.0)]
    impostor_mu: f64,
    #[arg(long, default_value_t = 0.0)]
    female_frac: f64,
    #[arg(long, value_delimiter = ',', default_value = "SYN")]
    cohorts: Vec<String>,
    #[arg(long, default_value_t = 112)]
    image_size: u32,
    /// Also write simple RGB face images.
    #[arg(long)]
    render_images: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FigArg {
    Dist,
    Grid,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Audit report JSON files, comma-separated.
    #[arg(long = "in", value_delimiter = ',', required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "dist")]
    fig: FigArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Per-repetition d-prime values (grid only).
    #[arg(long)]
    long: Option<PathBuf>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn labels_from(path: &Path) -> Result<Labels> {
    Ok(Labels::from(load_labels(path)?))
}

fn run_label(a: &LabelArgs) -> Result<()> {
    let mut dataset = Dataset::new(load_manifest(&a.manifest)?);
    let unmatched = dataset.attach_attributes(load_attributes(&a.attributes)?)?;
    if unmatched > 0 {
        log::warn!("{unmatched} attribute rows match no manifest record");
    }
    let labels = label_dataset(&dataset.manifest, a.threshold)?;
    let t = labels.totals();
    log::info!(
        "{} CS, {} FH, {} excluded, {} without attributes",
        t.cs,
        t.fh,
        t.excluded,
        t.missing_attributes
    );
    write_labels(&a.out, &labels)
}

fn run_audit(a: &AuditArgs, threads: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut dataset = Dataset::new(load_manifest(&a.manifest)?);
    let ids_path = a.ids.clone().unwrap_or_else(|| {
        let mut p = a.embeddings.clone().into_os_string();
        p.push(".ids");
        p.into()
    });
    let store = load_embeddings(&a.embeddings)?;
    let ids = load_embedding_ids(&ids_path)?;
    let unmatched = dataset.attach_embeddings(store, &ids)?;
    if unmatched > 0 {
        log::warn!("{unmatched} embedding rows match no manifest record");
    }
    let labels = labels_from(&a.labels)?;
    let options = AuditOptions {
        threads,
        impostor_sampling: a.impostor_sample.map(|target| ImpostorSampling {
            target,
            seed: seed.unwrap_or(0),
        }),
        tile: a.tile,
    };
    let filter = (!a.cohort.is_empty()).then_some(a.cohort.as_slice());
    let mut report = audit(&dataset, &labels, filter, &options)?;
    if let (Some(p), Some(x), Some(rep), Some(k), Some(s)) = (a.protocol, a.grid_point, a.rep, a.k, a.subjects) {
        report.training = Some(TrainingTag {
            protocol: Protocol::from(p).as_str().into(),
            grid_point: x,
            repetition: rep,
            subjects: s,
            images_per_subject: k,
        });
    }
    for (name, c) in &report.cohorts {
        let fmt = |g| c.dprime(g).map_or("absent".to_string(), |d| format!("{d:.3}"));
        log::info!(
            "{name}: {} images, d' CS-CS {} CS-FH {} FH-FH {}",
            c.images,
            fmt(hairline_core::pairs::PairGroup::CsCs),
            fmt(hairline_core::pairs::PairGroup::CsFh),
            fmt(hairline_core::pairs::PairGroup::FhFh)
        );
    }
    write_file(&a.out, report.to_json()? + "\n")
}

fn run_manifest(a: &ManifestArgs, seed: Option<u64>) -> Result<()> {
    let dataset = Dataset::new(load_manifest(&a.manifest)?);
    let labels = labels_from(&a.labels)?;
    let pools = SubjectPools::from_records(dataset.records(), &labels);
    let protocol = Protocol::from(a.protocol);
    let seed = seed.unwrap_or(0);
    let template = ManifestSpec {
        protocol,
        grid_point: 0,
        subjects_male: a.subjects,
        images_per_subject: a.k,
        female_pool: a.female_pool.as_ref().map(load_female_pool).transpose()?.unwrap_or_default(),
        repetition: a.rep,
        seed,
    };
    match (a.x, &a.out, &a.out_dir) {
        (Some(x), Some(out), _) => {
            let spec = ManifestSpec {
                grid_point: x,
                seed: derive_seed(seed, x, a.rep),
                ..template
            };
            spec.validate()?;
            let m = build(&spec, &pools)?;
            log::info!(
                "{} entries: {} CS, {} FH, {} female",
                m.entries.len(),
                m.count(EntryLabel::CleanShaven),
                m.count(EntryLabel::FacialHair),
                m.count(EntryLabel::Female)
            );
            m.write(out)
        }
        (None, _, Some(dir)) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let grid = default_grid(protocol, a.subjects, a.k);
            let all = grid_run(&template, &grid, a.reps, seed, &pools)?;
            for m in &all {
                let p = &m.provenance;
                m.write(dir.join(format!("{}_x{}_rep{}.csv", protocol.as_str(), p.grid_point, p.repetition)))?;
            }
            log::info!("wrote {} manifests to {}", all.len(), dir.display());
            Ok(())
        }
        _ => Err(Error::InvalidSpec(
            "--x pairs with --out; omit --x to build the whole grid into --out-dir".into(),
        )),
    }
}

fn run_augment(a: &AugmentArgs, seed: Option<u64>) -> Result<()> {
    let mut dataset = Dataset::new(load_manifest(&a.manifest)?);
    let landmarks = load_landmarks(&a.landmarks)?;
    dataset.attach_landmarks(landmarks.clone());
    let mode = match a.mode {
        ModeArg::HairTransfer => AugmentMode::HairTransfer,
        ModeArg::RandomMask => AugmentMode::RandomPixelMask,
        ModeArg::RandomRegion => AugmentMode::RandomPixelRegion,
    };
    let source_pool = if mode == AugmentMode::RandomPixelRegion {
        Vec::new()
    } else {
        let pool_manifest = match &a.source_pool {
            Some(p) => load_manifest(p)?,
            None => dataset.manifest.clone(),
        };
        let pool = load_source_pool(&pool_manifest.records, &landmarks, &FileImages, a.min_hair_fraction)?;
        log::info!("source pool: {} images above {} hair fraction", pool.len(), a.min_hair_fraction);
        pool
    };
    let spec = AugmentationSpec {
        mode,
        region: match a.region {
            RegionArg::Mustache => Region::Mustache,
            RegionArg::Beard => Region::Beard,
            RegionArg::Both => Region::Both,
        },
        probability: a.prob,
        scope: match a.scope {
            ScopeArg::Male => Scope::MaleOnly,
            ScopeArg::All => Scope::All,
        },
        seed: seed.unwrap_or(0),
        source_pool,
    };
    let targets: Option<Vec<String>> = a
        .training
        .as_ref()
        .map(|t| -> Result<Vec<String>> {
            Ok(load_training_entries(t)?
                .into_iter()
                .filter(|e| e.label != EntryLabel::FacialHair)
                .map(|e| e.image_id)
                .collect())
        })
        .transpose()?;
    let run = apply_augmentation(&dataset, targets.as_deref(), &FileImages, &spec)?;
    log::info!(
        "{} of {} images augmented, {} skipped",
        run.augmented(),
        run.outcomes.len(),
        run.skipped()
    );
    run.write(&a.out_dir, &a.log)
}

fn run_synth(a: &SynthArgs, seed: Option<u64>) -> Result<()> {
    let params = SynthParams {
        subjects: a.subjects,
        images_per_subject: a.images,
        dim: a.dim,
        cs_fraction: a.cs_frac,
        genuine_mu: a.genuine_mu,
        impostor_mu: a.impostor_mu,
        fh_offset: a.fh_offset,
        female_fraction: a.female_frac,
        cohorts: a.cohorts.clone(),
        image_size: a.image_size,
        render_images: a.render_images,
        seed: seed.unwrap_or(7),
    };
    let cohort = generate_cohort(&params)?;
    cohort.write_to(&a.out_dir)?;
    log::info!("wrote {} images to {}", cohort.records.len(), a.out_dir.display());
    Ok(())
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let reports = a
        .inputs
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            AuditReport::from_json(&text)
        })
        .collect::<Result<Vec<_>>>()?;
    if a.out.is_none() && a.table.is_none() && a.long.is_none() {
        return Err(Error::InvalidSpec("nothing to write; pass --out, --table or --long".into()));
    }
    match a.fig {
        FigArg::Dist => {
            if reports.len() > 1 {
                log::warn!("distribution figure uses the first of {} reports", reports.len());
            }
            if a.long.is_some() {
                return Err(Error::InvalidSpec("--long applies to grid reports".into()));
            }
            if let Some(out) = &a.out {
                write_file(out, render_distributions(&reports[0])?)?;
            }
            if let Some(t) = &a.table {
                write_file(t, emit_report_table(&reports[0])?)?;
            }
        }
        FigArg::Grid => {
            let grid = GridResult::from_reports(&reports)?;
            if let Some(out) = &a.out {
                write_file(out, grid.render_grid()?)?;
            }
            if let Some(t) = &a.table {
                write_file(t, grid.emit_table()?)?;
            }
            if let Some(l) = &a.long {
                write_file(l, grid.emit_long_csv()?)?;
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidSpec("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Label(a) => run_label(a),
        Command::Audit(a) => run_audit(a, cli.threads, cli.seed),
        Command::Manifest(a) => run_manifest(a, cli.seed),
        Command::Augment(a) => run_augment(a, cli.seed),
        Command::Synth(a) => run_synth(a, cli.seed),
        Command::Report(a) => run_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
