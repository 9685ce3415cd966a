//! `artikin`: generate demonstrations, learn kinematic models, predict and
//! evaluate.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input (object spec,
//! frame count, missing configuration, missing ground truth, malformed or
//! duplicate model), 3 fewer than two clusters, 4 disconnected parts,
//! 5 unknown object.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use artikin::demo::{self, catalog_names, default_spec, generate, Demonstration, ObjectSpec};
use artikin::geom::Pose;
use artikin::joints::{JointKind, NoiseModel};
use artikin::kgraph::{evaluate, load_db, save_db, DbEntry, KinematicGraph, ModelDatabase, Provenance, Report};
use artikin::pipeline::{learn, LearnParams};
use artikin::posegraph::PoseGraphParams;
use artikin::segment::{cluster, similarity_matrix, DbscanParams, SimilarityParams};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "artikin", version, about = "Learn kinematic models of articulated objects")]
struct Cli {
    /// Log verbosity: -v for info, -vv for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a demonstration and its ground-truth sidecar.
    Generate(GenerateArgs),
    /// Cluster trajectories into parts.
    Segment(SegmentArgs),
    /// Learn a kinematic graph and store it in a model database.
    Learn(LearnArgs),
    /// Predict part poses over a configuration sweep or schedule.
    Predict(PredictArgs),
    /// Learn and evaluate against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Catalog object name.
    #[arg(long, conflicts_with = "spec")]
    object: Option<String>,
    /// Object spec as JSON, instead of a catalog object.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 900)]
    frames: usize,
    /// Position noise standard deviation, meters.
    #[arg(long)]
    noise: Option<f64>,
    /// Per-observation dropout probability.
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Clone)]
struct SegmentFlags {
    /// DBSCAN radius on 1 − similarity.
    #[arg(long, default_value_t = DbscanParams::default().eps)]
    eps: f64,
    #[arg(long, default_value_t = DbscanParams::default().min_pts)]
    min_pts: usize,
    /// Positional similarity bandwidth, 1/m².
    #[arg(long, default_value_t = SimilarityParams::default().gamma_pos)]
    gamma_pos: f64,
    #[arg(long, default_value_t = SimilarityParams::default().gamma_normal)]
    gamma_normal: f64,
}

impl SegmentFlags {
    fn similarity(&self) -> SimilarityParams {
        SimilarityParams {
            gamma_pos: self.gamma_pos,
            gamma_normal: self.gamma_normal,
            ..SimilarityParams::default()
        }
    }

    fn dbscan(&self) -> DbscanParams {
        DbscanParams {
            eps: self.eps,
            min_pts: self.min_pts,
        }
    }
}

#[derive(Args, Clone)]
struct LearnFlags {
    #[command(flatten)]
    segment: SegmentFlags,
    /// Alignment inlier threshold, meters.
    #[arg(long, default_value_t = PoseGraphParams::default().inlier_threshold)]
    inlier_thresh: f64,
    #[arg(long, default_value_t = PoseGraphParams::default().sparse_stride)]
    sparse_stride: u32,
    /// Joint-model translation noise, meters.
    #[arg(long, default_value_t = NoiseModel::default().sigma_pos)]
    sigma_pos: f64,
    /// Joint-model rotation noise, radians.
    #[arg(long, default_value_t = NoiseModel::default().sigma_rot)]
    sigma_rot: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LearnFlags {
    fn params(&self) -> LearnParams {
        LearnParams {
            similarity: self.segment.similarity(),
            dbscan: self.segment.dbscan(),
            posegraph: PoseGraphParams {
                inlier_threshold: self.inlier_thresh,
                sparse_stride: self.sparse_stride,
                ..PoseGraphParams::default()
            },
            noise: NoiseModel {
                sigma_pos: self.sigma_pos,
                sigma_rot: self.sigma_rot,
            },
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    demo: PathBuf,
    #[command(flatten)]
    flags: SegmentFlags,
    /// Labels CSV (trajectory_id,cluster); stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the similarity matrix as CSV.
    #[arg(long)]
    dump_similarity: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    demo: PathBuf,
    #[command(flatten)]
    flags: LearnFlags,
    /// Model database to create or extend.
    #[arg(short, long)]
    output: PathBuf,
    /// Object id; defaults to the ground-truth object name or the file stem.
    #[arg(long)]
    object: Option<String>,
    /// Replace an existing model with the same id.
    #[arg(long)]
    replace: bool,
    /// Directory for per-cluster pose CSV files.
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    dump_similarity: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct PredictArgs {
    /// Model database.
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    object: String,
    /// START:STOP:STEP applied to every non-rigid edge.
    #[arg(long, conflicts_with = "schedule")]
    sweep: Option<String>,
    /// Sweep values are degrees for revolute edges.
    #[arg(long)]
    degrees: bool,
    /// CSV with one column per edge, headed `parent-child`, radians or meters.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Pose CSV; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Demonstrations with ground-truth sidecars.
    demos: Vec<PathBuf>,
    /// Evaluate this stored model instead of learning each demonstration.
    #[arg(long, requires = "object")]
    db: Option<PathBuf>,
    #[arg(long)]
    object: Option<String>,
    /// Generate demonstrations of this catalog object in memory.
    #[arg(long, conflicts_with = "db")]
    generate: Option<String>,
    /// Number of generated runs, seeds `seed..seed + runs`.
    #[arg(long, default_value_t = 10)]
    runs: u64,
    #[arg(long, default_value_t = 900)]
    frames: usize,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[command(flatten)]
    flags: LearnFlags,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Core(#[from] artikin::Error),
    #[error("{0}")]
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        use artikin::Error as E;
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) => match e {
                E::Io(_) => 1,
                E::TooFewClusters { .. } => 3,
                E::DisconnectedParts { .. } => 4,
                E::UnknownObject(_) => 5,
                _ => 2,
            },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Learn(a) => cmd_learn(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn catalog_spec(name: &str) -> Outcome<ObjectSpec> {
    default_spec(name).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown catalog object '{name}'; choose one of: {}",
            catalog_names().join(", ")
        ))
    })
}

fn with_overrides(mut spec: ObjectSpec, noise: Option<f64>, dropout: Option<f64>) -> ObjectSpec {
    if let Some(n) = noise {
        spec = spec.with_noise(n);
    }
    if let Some(d) = dropout {
        spec.dropout_prob = d;
    }
    spec
}

fn cmd_generate(a: GenerateArgs) -> Outcome<()> {
    let spec = match (&a.object, &a.spec) {
        (Some(name), _) => catalog_spec(name)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(Failure::Usage("either --object or --spec is required".into())),
    };
    let spec = with_overrides(spec, a.noise, a.dropout);
    let demo = generate(&spec, a.frames, a.seed)?;
    demo::save(&demo, &a.output)?;
    println!(
        "{}: {} trajectories over {} frames -> {}",
        spec.name,
        demo.trajectories.len(),
        demo.frame_count(),
        a.output.display()
    );
    Ok(())
}

fn cmd_segment(a: SegmentArgs) -> Outcome<()> {
    let demo = demo::load(&a.demo)?;
    let matrix = similarity_matrix(&demo, &a.flags.similarity());
    let assignment = cluster(&matrix, &a.flags.dbscan());
    if let Some(path) = &a.dump_similarity {
        matrix.write_csv(fs::File::create(path)?)?;
    }
    let mut csv = Vec::new();
    assignment.write_csv(&mut csv)?;
    write_output(a.output.as_deref(), &String::from_utf8_lossy(&csv))?;
    if a.output.is_some() {
        println!(
            "{} clusters; {} noise trajectories",
            assignment.cluster_count(),
            assignment.noise_count()
        );
    }
    Ok(())
}

fn object_id(explicit: Option<&str>, demo: &Demonstration, path: &Path) -> String {
    explicit
        .map(str::to_string)
        .or_else(|| demo.ground_truth.as_ref().map(|g| g.object.clone()))
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

fn bic_line(bic: &[f64; 3]) -> String {
    format!("BIC rigid/prismatic/revolute = {:.1} / {:.1} / {:.1}", bic[0], bic[1], bic[2])
}

fn cmd_learn(a: LearnArgs) -> Outcome<()> {
    let demo = demo::load(&a.demo)?;
    let id = object_id(a.object.as_deref(), &demo, &a.demo);
    let params = a.flags.params();
    let mut db = if a.output.exists() {
        load_db(&a.output)?
    } else {
        ModelDatabase::default()
    };
    if db.objects.contains_key(&id) && !a.replace {
        return Err(artikin::Error::DuplicateObject(id).into());
    }
    let learned = learn(&id, &demo, &params, a.flags.seed)?;
    if let Some(path) = &a.dump_similarity {
        learned.similarity.write_csv(fs::File::create(path)?)?;
    }
    if let Some(dir) = &a.poses {
        fs::create_dir_all(dir)?;
        for s in &learned.sequences {
            s.write_csv(fs::File::create(dir.join(format!("cluster_{}.csv", s.cluster)))?)?;
        }
    }
    let graph = learned.build.graph.clone();
    let mut out = format!("{id}: {} clusters", learned.assignment.cluster_count());
    for e in &graph.edges {
        write!(out, "; edge ({},{}): {}; {}", e.parent, e.child, e.model.kind(), bic_line(&e.bic)).unwrap();
    }
    println!("{out}");
    for p in &learned.build.pairs {
        println!("  pair ({},{}): {} over {} frames; {}", p.a, p.b, p.kind, p.frames, bic_line(&p.bic));
    }
    db.objects.remove(&id);
    db.insert(DbEntry {
        graph,
        provenance: Provenance {
            demo: a.demo.display().to_string(),
            frames: demo.frame_count(),
            seed: a.flags.seed,
            params,
        },
        appearance: None,
    })?;
    save_db(&db, &a.output)?;
    Ok(())
}

fn parse_sweep(text: &str) -> Outcome<Vec<f64>> {
    let bad = || Failure::Usage(format!("sweep '{text}' is not START:STOP:STEP"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

fn parse_edge(header: &str) -> Option<(usize, usize)> {
    let (p, c) = header.trim().split_once('-')?;
    Some((p.parse().ok()?, c.parse().ok()?))
}

fn read_schedule(path: &Path) -> Outcome<Vec<BTreeMap<(usize, usize), f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Failure::Usage(e.to_string()))?.clone();
    let edges: Vec<(usize, usize)> = headers
        .iter()
        .map(|h| parse_edge(h).ok_or_else(|| Failure::Usage(format!("schedule column '{h}' is not parent-child"))))
        .collect::<Outcome<_>>()?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::Usage(e.to_string()))?;
        let mut row = BTreeMap::new();
        for (edge, field) in edges.iter().zip(record.iter()) {
            let q: f64 = field
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("schedule row {}: '{field}' is not a number", i + 2)))?;
            row.insert(*edge, q);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn sweep_schedule(graph: &KinematicGraph, values: &[f64], degrees: bool) -> Vec<BTreeMap<(usize, usize), f64>> {
    values
        .iter()
        .map(|v| {
            graph
                .edges
                .iter()
                .filter(|e| e.model.kind() != JointKind::Rigid)
                .map(|e| {
                    let q = if degrees && e.model.kind() == JointKind::Revolute { v.to_radians() } else { *v };
                    ((e.parent, e.child), q)
                })
                .collect()
        })
        .collect()
}

fn cmd_predict(a: PredictArgs) -> Outcome<()> {
    let db = load_db(&a.db)?;
    let graph = &db.get(&a.object)?.graph;
    let schedule = match (&a.sweep, &a.schedule) {
        (Some(s), _) => sweep_schedule(graph, &parse_sweep(s)?, a.degrees),
        (None, Some(path)) => read_schedule(path)?,
        (None, None) => return Err(Failure::Usage("either --sweep or --schedule is required".into())),
    };
    let moving: Vec<(usize, usize)> = graph
        .edges
        .iter()
        .filter(|e| e.model.kind() != JointKind::Rigid)
        .map(|e| (e.parent, e.child))
        .collect();
    let mut out = String::from("step");
    for (p, c) in &moving {
        write!(out, ",q_{p}_{c}").unwrap();
    }
    for part in &graph.parts {
        for f in ["qw", "qx", "qy", "qz", "tx", "ty", "tz"] {
            write!(out, ",p{}_{f}", part.cluster).unwrap();
        }
    }
    out.push_str(",extrapolated\n");
    for (step, configs) in schedule.iter().enumerate() {
        let prediction = graph.predict(configs, &Pose::identity())?;
        write!(out, "{step}").unwrap();
        for edge in &moving {
            write!(out, ",{}", configs[edge]).unwrap();
        }
        for part in &graph.parts {
            let pose = &prediction.poses[&part.cluster];
            for v in pose.quaternion_components().iter().chain(pose.translation().iter()) {
                write!(out, ",{v}").unwrap();
            }
        }
        writeln!(out, ",{}", u8::from(!prediction.extrapolated.is_empty())).unwrap();
    }
    write_output(a.output.as_deref(), &out)
}

struct Evaluated {
    label: String,
    report: Report,
}

fn report_text(e: &Evaluated) -> String {
    let r = &e.report;
    let mut s = format!(
        "{} ({}): {}; {} mislabels; {} missing parts; mean error {:.2} cm {:.2} deg\n",
        r.object,
        e.label,
        if r.success { "success" } else { "failure" },
        r.mislabels,
        r.missing_parts,
        r.mean_translation * 100.0,
        r.mean_rotation_deg
    );
    for p in &r.parts {
        writeln!(
            s,
            "  part {} -> {}: {} frames; mean {:.2} cm {:.2} deg; rmse {:.2} cm {:.2} deg",
            p.part,
            p.truth_name,
            p.frames,
            p.mean_translation * 100.0,
            p.mean_rotation_deg,
            p.rmse_translation * 100.0,
            p.rmse_rotation_deg
        )
        .unwrap();
    }
    for edge in &r.edges {
        let expected = edge.expected.map_or("none".to_string(), |k| k.to_string());
        write!(s, "  edge ({},{}): {} (expected {expected})", edge.parent, edge.child, edge.kind).unwrap();
        if let Some(a) = edge.axis_angle_deg {
            write!(s, "; axis {a:.2} deg").unwrap();
        }
        if let Some(d) = edge.axis_offset {
            write!(s, " {:.2} cm", d * 100.0).unwrap();
        }
        writeln!(
            s,
            "; fit {:.2} cm {:.2} deg",
            edge.fit_translation * 100.0,
            edge.fit_rotation_deg
        )
        .unwrap();
    }
    s
}

const CSV_HEADER: &str =
    "object,demo,success,mislabels,missing_parts,mean_translation_m,mean_rotation_deg,edges,types_correct\n";

fn report_csv(e: &Evaluated) -> String {
    let r = &e.report;
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        r.object,
        e.label,
        u8::from(r.success),
        r.mislabels,
        r.missing_parts,
        r.mean_translation,
        r.mean_rotation_deg,
        r.edges.len(),
        r.edges.iter().filter(|x| x.type_correct).count()
    )
}

fn all_types_correct(r: &Report) -> bool {
    r.edges.iter().all(|e| e.type_correct)
}

fn cmd_eval(a: EvalArgs) -> Outcome<()> {
    let params = a.flags.params();
    let mut demos: Vec<(String, Demonstration)> = Vec::new();
    if let Some(name) = &a.generate {
        let spec = with_overrides(catalog_spec(name)?, a.noise, a.dropout);
        for seed in a.flags.seed..a.flags.seed + a.runs {
            demos.push((format!("seed {seed}"), generate(&spec, a.frames, seed)?));
        }
    }
    for path in &a.demos {
        let demo = demo::load(path)?;
        if demo.ground_truth.is_none() {
            return Err(artikin::Error::MissingGroundTruth.into());
        }
        demos.push((path.display().to_string(), demo));
    }
    if demos.is_empty() {
        return Err(Failure::Usage("nothing to evaluate: give demo files or --generate".into()));
    }
    let stored = match &a.db {
        Some(path) => Some(load_db(path)?.get(a.object.as_deref().unwrap_or_default())?.graph.clone()),
        None => None,
    };

    let mut results = Vec::new();
    for (i, (label, demo)) in demos.iter().enumerate() {
        let truth = demo.ground_truth.as_ref().ok_or(artikin::Error::MissingGroundTruth)?;
        let graph = match &stored {
            Some(g) => g.clone(),
            None => {
                let id = a.object.clone().unwrap_or_else(|| truth.object.clone());
                // Generated runs use their own seed for pose estimation too.
                let seed = if i < a.runs as usize && a.generate.is_some() {
                    a.flags.seed + i as u64
                } else {
                    a.flags.seed
                };
                learn(&id, demo, &params, seed)?.build.graph
            }
        };
        results.push(Evaluated {
            label: label.clone(),
            report: evaluate(&graph, truth),
        });
    }

    let mut totals: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for e in &results {
        let t = totals.entry(&e.report.object).or_default();
        t.0 += usize::from(e.report.success);
        t.1 += usize::from(all_types_correct(&e.report));
        t.2 += 1;
    }
    let out = match a.format {
        Format::Text => {
            let mut s: String = results.iter().map(report_text).collect();
            for (object, (ok, types, n)) in &totals {
                writeln!(s, "{object}: {ok}/{n} (joint types {types}/{n})").unwrap();
            }
            s
        }
        Format::Csv => std::iter::once(CSV_HEADER.to_string())
            .chain(results.iter().map(report_csv))
            .collect(),
    };
    write_output(a.output.as_deref(), &out)
}
