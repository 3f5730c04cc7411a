use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use checkin_reid::eval::{self, AttackResult, ExperimentConfig, SweepAxis};
use checkin_reid::features::{self, Direction, Metric, VenueClassSpec};
use checkin_reid::ingest::{self, Dataset, Taxonomy};
use checkin_reid::report::{self, Report};
use checkin_reid::synth::{self, SpatialLayout, SynthSpec};
use checkin_reid::{exit, Error};

#[derive(Parser, Debug)]
#[command(
    name = "checkin-reid",
    version,
    about = "Re-identification attacks on location check-in data"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Global {
    /// Base seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    #[serde(skip)]
    threads: usize,
    /// Smoothing parameter of the user models.
    #[arg(long, global = true, default_value_t = eval::DEFAULT_ALPHA)]
    alpha: f64,
    /// Attack repetitions per class.
    #[arg(long, global = true, default_value_t = eval::DEFAULT_REPETITIONS)]
    reps: usize,
    /// Largest test size m (test sizes 1..=m are evaluated).
    #[arg(long = "max-test", global = true, default_value_t = eval::DEFAULT_MAX_TEST_SIZE)]
    max_test: usize,
    /// Minimum in-class check-ins for a user to be targeted [default: max-test + 1].
    #[arg(long = "min-class-checkins", global = true)]
    min_class_checkins: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Category taxonomy file (one name per line).
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, region-label and activity-filter raw files into per-region datasets.
    Ingest {
        #[arg(long)]
        checkins: PathBuf,
        #[arg(long)]
        venues: PathBuf,
        /// Bounding boxes for check-ins without a region column.
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long, default_value_t = ingest::DEFAULT_MIN_CHECKINS)]
        min_checkins: usize,
        #[arg(long, default_value_t = ingest::DEFAULT_MIN_USERS)]
        min_users: usize,
    },
    /// Export venue popularity and isolation features.
    Features {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run the repeated identification attack for one venue class.
    Attack {
        #[arg(long)]
        dataset: PathBuf,
        /// `all`, `category=<name>`, `popularity=<top|least>:<f>`, `isolation=<top|least>:<f>`.
        #[arg(long, default_value = "all")]
        class: String,
    },
    /// Sweep venue classes along one axis, with relative accuracy against `all`.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
        direction: DirectionArg,
        /// Popularity measure for the popularity axis.
        #[arg(long, value_enum, default_value_t = MetricArg::VisitorCount)]
        metric: MetricArg,
    },
    /// Per-user entropy and identifiability, with their correlation.
    Profile {
        #[arg(long)]
        dataset: PathBuf,
        /// JSON report of an `attack --class all` run; computed when absent.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 500)]
    venues: usize,
    #[arg(long, default_value_t = 50)]
    checkins_per_user: usize,
    #[arg(long, default_value_t = 0.1)]
    concentration: f64,
    #[arg(long, default_value_t = 1.0)]
    popularity_skew: f64,
    #[arg(long, default_value_t = 0)]
    shared_core: usize,
    #[arg(long, default_value_t = 0.0)]
    core_share: f64,
    #[arg(long, default_value_t = 10)]
    support_size: usize,
    #[arg(long)]
    exclusive_supports: bool,
    /// Number of venue clusters; 0 places venues uniformly.
    #[arg(long, default_value_t = 0)]
    clusters: usize,
    #[arg(long, default_value_t = 500.0)]
    sigma_m: f64,
    #[arg(long, default_value = "SYN")]
    region: String,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AxisArg {
    Category,
    Popularity,
    Isolation,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DirectionArg {
    Top,
    Least,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MetricArg {
    VisitorCount,
    VisitCount,
}

impl DirectionArg {
    fn directions(self) -> Vec<Direction> {
        match self {
            DirectionArg::Top => vec![Direction::Top],
            DirectionArg::Least => vec![Direction::Least],
            DirectionArg::Both => vec![Direction::Top, Direction::Least],
        }
    }
}

impl Global {
    fn experiment(&self, class_spec: VenueClassSpec) -> ExperimentConfig {
        ExperimentConfig {
            alpha: self.alpha,
            repetitions: self.reps,
            max_test_size: self.max_test,
            min_class_checkins: self.min_class_checkins.unwrap_or(self.max_test + 1),
            base_seed: self.seed,
            class_spec,
        }
    }

    fn taxonomy(&self) -> Result<Taxonomy, Error> {
        match &self.taxonomy {
            Some(p) => Ok(Taxonomy::from_reader(File::open(p)?)?),
            None => Ok(Taxonomy::default()),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary {
    min_checkins: usize,
    min_users: usize,
    dropped_outside_regions: usize,
    regions_before_filter: usize,
    regions: Vec<RegionSummary>,
}

#[derive(Serialize)]
struct RegionSummary {
    region: String,
    lineage: Vec<ingest::FilterStep>,
    stats: ingest::DatasetStats,
}

fn cmd_ingest(
    g: &Global,
    checkins: &Path,
    venues: &Path,
    regions: Option<&Path>,
    min_checkins: usize,
    min_users: usize,
) -> Result<(), Error> {
    let taxonomy = g.taxonomy()?;
    let raw = ingest::parse_checkins(BufReader::new(File::open(checkins)?))?;
    let venue_table = ingest::parse_venues(BufReader::new(File::open(venues)?), &taxonomy)?;
    let config = match regions {
        Some(p) => ingest::parse_region_config(BufReader::new(File::open(p)?))?,
        None => ingest::RegionConfig::default(),
    };
    let assigned = ingest::assign_regions(raw, &config)?;
    info!("{} check-ins outside all regions dropped", assigned.dropped);
    let datasets = ingest::build_region_datasets(assigned.checkins, &venue_table)?;
    let regions_before_filter = datasets.len();
    let active: Vec<Dataset> = datasets
        .iter()
        .map(|ds| ingest::filter_active_users(ds, min_checkins))
        .collect();
    let kept = ingest::filter_active_regions(active, min_users);
    if kept.is_empty() {
        warn!("no region has at least {min_users} users with at least {min_checkins} check-ins");
    }

    fs::create_dir_all(&g.out)?;
    let mut stats = csv::Writer::from_writer(create(&g.out.join("stats.csv"))?);
    stats
        .write_record(["region", "checkins", "users", "venues", "users_per_venue"])
        .map_err(std::io::Error::from)?;
    let mut summaries = Vec::new();
    for ds in &kept {
        ds.write_dir(&g.out.join(&ds.region))?;
        let s = ds.stats();
        stats
            .write_record([
                ds.region.clone(),
                s.checkins.to_string(),
                s.users.to_string(),
                s.venues.to_string(),
                s.users_per_venue.map(|r| r.to_string()).unwrap_or_default(),
            ])
            .map_err(std::io::Error::from)?;
        summaries.push(RegionSummary {
            region: ds.region.clone(),
            lineage: ds.lineage.clone(),
            stats: s,
        });
    }
    stats.flush()?;
    write_json(
        &g.out.join("ingest.json"),
        &IngestSummary {
            min_checkins,
            min_users,
            dropped_outside_regions: assigned.dropped,
            regions_before_filter,
            regions: summaries,
        },
    )
}

fn cmd_features(g: &Global, dataset: &Path) -> Result<(), Error> {
    let ds = Dataset::read_dir(dataset, &g.taxonomy()?)?;
    let feats = features::compute_features(&ds)?;
    let mut w = create(&g.out.join("features.csv"))?;
    features::write_features(&mut w, &feats)?;
    w.flush()?;
    Ok(())
}

fn cmd_synth(g: &Global, a: &SynthArgs) -> Result<(), Error> {
    let taxonomy = g.taxonomy()?;
    let share = 1.0 / taxonomy.names().len() as f64;
    let (lat_min, lat_max, lon_min, lon_max) = (33.4, 34.2, -84.8, -84.0);
    let spatial_layout = if a.clusters == 0 {
        SpatialLayout::UniformBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        }
    } else {
        SpatialLayout::Clustered {
            clusters: a.clusters,
            sigma_m: a.sigma_m,
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        }
    };
    let spec = SynthSpec {
        n_users: a.users,
        n_venues: a.venues,
        checkins_per_user: a.checkins_per_user,
        concentration: a.concentration,
        popularity_skew: a.popularity_skew,
        shared_core: a.shared_core,
        core_share: a.core_share,
        support_size: a.support_size,
        exclusive_supports: a.exclusive_supports,
        spatial_layout,
        category_assignment: taxonomy
            .names()
            .iter()
            .map(|n| (n.clone(), share))
            .collect(),
        seed: g.seed,
        region: a.region.clone(),
    };
    let out = synth::generate(&spec)?;
    out.dataset.write_dir(&g.out)?;
    let mut w = create(&g.out.join("features.csv"))?;
    features::write_features(&mut w, &out.features)?;
    w.flush()?;
    write_json(&g.out.join("synth_spec.json"), &spec)
}

fn cmd_attack(g: &Global, dataset: &Path, class: &str) -> Result<(), Error> {
    let taxonomy = g.taxonomy()?;
    let spec: VenueClassSpec = class.parse()?;
    let ds = Dataset::read_dir(dataset, &taxonomy)?;
    let feats = features::compute_features_available(&ds);
    let cfg = g.experiment(spec);
    let result = eval::run_experiment(&ds, &feats, &cfg, Some(&taxonomy))?;
    let mut w = create(&g.out.join("results.csv"))?;
    report::write_results_csv(&mut w, [&result])?;
    w.flush()?;
    let mut w = create(&g.out.join("report.json"))?;
    Report::new("attack", &cfg, &ds, &result).write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_sweep(
    g: &Global,
    dataset: &Path,
    axis: AxisArg,
    direction: DirectionArg,
    metric: MetricArg,
) -> Result<(), Error> {
    let taxonomy = g.taxonomy()?;
    let ds = Dataset::read_dir(dataset, &taxonomy)?;
    let axis = match axis {
        AxisArg::Category => SweepAxis::Category,
        AxisArg::Popularity => SweepAxis::Popularity(match metric {
            MetricArg::VisitorCount => Metric::VisitorCount,
            MetricArg::VisitCount => Metric::VisitCount,
        }),
        AxisArg::Isolation => SweepAxis::Isolation,
    };
    let feats = match axis {
        SweepAxis::Isolation => features::compute_features(&ds)?,
        _ => features::compute_features_available(&ds),
    };
    let cfg = g.experiment(VenueClassSpec::All);
    let table = eval::sweep(&ds, &feats, axis, &direction.directions(), &cfg, &taxonomy)?;
    let mut w = create(&g.out.join("sweep.csv"))?;
    report::write_sweep_csv(&mut w, &table)?;
    w.flush()?;
    let mut w = create(&g.out.join("sweep.json"))?;
    Report::new("sweep", &cfg, &ds, &table).write(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ProfileOutput<'a> {
    baseline_class: &'a str,
    m: usize,
    summary: eval::ProfileSummary,
}

fn read_baseline(path: &Path) -> Result<AttackResult, Error> {
    let value: serde_json::Value =
        serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(std::io::Error::from)?;
    let result = value.get("result").cloned().unwrap_or(value);
    let result: AttackResult = serde_json::from_value(result).map_err(std::io::Error::from)?;
    Ok(result)
}

fn cmd_profile(g: &Global, dataset: &Path, baseline: Option<&Path>) -> Result<(), Error> {
    let taxonomy = g.taxonomy()?;
    let ds = Dataset::read_dir(dataset, &taxonomy)?;
    let cfg = g.experiment(VenueClassSpec::All);
    let baseline = match baseline {
        Some(p) => read_baseline(p)?,
        None => eval::run_experiment(
            &ds,
            &features::compute_features_available(&ds),
            &cfg,
            Some(&taxonomy),
        )?,
    };
    let profiles = eval::user_profiles(&ds, &baseline)?;
    let summary = eval::profile_correlation(&profiles, g.seed);
    match (&summary.correlation, &summary.undefined_reason) {
        (Some(c), _) => info!("entropy vs accuracy: r = {}, p = {}", c.r, c.p_value),
        (None, Some(reason)) => warn!(
            "correlation undefined ({reason}); entropy variance {}, accuracy variance {}",
            summary.entropy_variance, summary.accuracy_variance
        ),
        _ => {}
    }
    let mut w = create(&g.out.join("profiles.csv"))?;
    report::write_profiles_csv(&mut w, &profiles)?;
    w.flush()?;
    let out = ProfileOutput {
        baseline_class: &baseline.class,
        m: baseline.per_m.len(),
        summary,
    };
    let mut w = create(&g.out.join("profile.json"))?;
    Report::new("profile", &cfg, &ds, &out).write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_run_log(g: &Global, command: &str) -> std::io::Result<()> {
    fs::create_dir_all(&g.out)?;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(g.out.join("run.log"))?;
    writeln!(
        f,
        "{} {command} threads={} seed={}",
        chrono::Utc::now().to_rfc3339(),
        g.threads,
        g.seed
    )
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads.max(1))
        .build_global()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let name = match &cli.command {
        Command::Ingest {
            checkins,
            venues,
            regions,
            min_checkins,
            min_users,
        } => {
            cmd_ingest(
                g,
                checkins,
                venues,
                regions.as_deref(),
                *min_checkins,
                *min_users,
            )?;
            "ingest"
        }
        Command::Features { dataset } => {
            cmd_features(g, dataset)?;
            "features"
        }
        Command::Synth(args) => {
            cmd_synth(g, args)?;
            "synth"
        }
        Command::Attack { dataset, class } => {
            cmd_attack(g, dataset, class)?;
            "attack"
        }
        Command::Sweep {
            dataset,
            axis,
            direction,
            metric,
        } => {
            cmd_sweep(g, dataset, *axis, *direction, *metric)?;
            "sweep"
        }
        Command::Profile { dataset, baseline } => {
            cmd_profile(g, dataset, baseline.as_deref())?;
            "profile"
        }
    };
    write_run_log(g, name)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
