//! Command-line surface: argument parsing and one function per subcommand.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use drivesense_core::fusion::dbi::{index_csv, reports_csv, trip_date};
use drivesense_core::fusion::{compute_dbi, DetectedEvent, PeriodKind, Trip, WeatherRecord};
use drivesense_core::geo::{Assignment, EdgeId, MatchedPath, RoadNetwork, SpatialIndex};
use drivesense_core::ingest::{split_stream, Finding};
use drivesense_core::pipeline::{
    detect_events, estimate_clocks, fuse, ingest, match_path, signals, synchronize, Clocks, PipelineError, Synced,
    TripInputs,
};
use drivesense_core::sim::{self, build_script, simulate_fleet, synthesize, DriveScript, FleetPlan, ScenarioSpec};
use drivesense_core::Config;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{self, BundleError};
use crate::store::{self, lock, to_json_bytes, to_jsonl_bytes, trip_dirs, Stage, StoreError, TripDir};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// Inputs failed validation or a stage could not run; exit status 1.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

macro_rules! failed_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Failed(e.to_string())
            }
        }
    )*};
}
failed_from!(StoreError, BundleError, PipelineError, sim::SimError, drivesense_core::config::ConfigError);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PeriodArg {
    Day,
    Week,
    Month,
}

impl From<PeriodArg> for PeriodKind {
    fn from(p: PeriodArg) -> Self {
        match p {
            PeriodArg::Day => PeriodKind::Day,
            PeriodArg::Week => PeriodKind::Week,
            PeriodArg::Month => PeriodKind::Month,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "drivesense", version, about = "In-vehicle sensing pipeline and driver behavior reports")]
pub struct Cli {
    /// Threshold configuration (flat TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// A single trip directory.
    #[arg(long, global = true)]
    pub trip_dir: Option<PathBuf>,
    /// A directory of trip directories.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic drive (or a fleet schedule of drives).
    Simulate {
        /// Full drive script (JSON).
        #[arg(long, conflicts_with_all = ["scenario", "fleet"])]
        script: Option<PathBuf>,
        /// Scenario description expanded into a script with --seed.
        #[arg(long, conflicts_with = "fleet")]
        scenario: Option<PathBuf>,
        /// Multi-day plan for one driver; writes one trip directory per drive
        /// under --store.
        #[arg(long)]
        fleet: Option<PathBuf>,
        /// Road network (JSON); defaults to the built-in grid.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Parse and validate raw streams; creates the manifest if absent.
    Ingest {
        #[arg(long)]
        trip_id: Option<String>,
        #[arg(long, default_value = "D1")]
        driver: String,
    },
    /// Fit unit clocks to GPS time.
    Sync,
    /// Detect motion, vision and fused events.
    Events,
    /// Map-match the GNSS track.
    Match {
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Segment trips and attach network-dependent events and travel stats.
    Dbi {
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        weather: Option<PathBuf>,
    },
    /// Daily index table (csv) or period reports (json) for one driver.
    Report {
        #[arg(long)]
        driver: String,
        #[arg(long, value_enum, default_value = "week")]
        period: PeriodArg,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        /// With csv, print every report column per period instead of the
        /// four daily indices.
        #[arg(long)]
        detail: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a self-verifying bundle of a driver's trips and reports.
    Export {
        #[arg(long)]
        driver: String,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a bundle file, or the hashes of --trip-dir / --store.
    Verify { bundle: Option<PathBuf> },
    /// Load a verified bundle into --store.
    Import { bundle: PathBuf },
}

pub struct Context {
    pub config: Config,
    pub config_toml: String,
}

fn load_config(path: Option<&Path>) -> Result<Context, CliError> {
    let config = match path {
        Some(p) => Config::from_toml_str(&store::read_string(p)?)?,
        None => Config::default(),
    };
    let config_toml = config.to_toml_string();
    Ok(Context { config, config_toml })
}

/// Runs a parsed command and returns what it prints on stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let ctx = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate {
            script,
            scenario,
            fleet,
            network,
        } => simulate(cli, script.as_deref(), scenario.as_deref(), fleet.as_deref(), network.as_deref()),
        Command::Ingest { trip_id, driver } => for_each_trip(cli, Stage::Ingest, |dir| {
            stage_ingest(dir, trip_id.as_deref(), driver, &ctx)
        }),
        Command::Sync => for_each_trip(cli, Stage::Sync, |dir| stage_sync(dir, &ctx)),
        Command::Events => for_each_trip(cli, Stage::Events, |dir| stage_events(dir, &ctx)),
        Command::Match { network } => {
            let cache = NetworkCache::default();
            for_each_trip(cli, Stage::Match, |dir| {
                let idx = cache.get(network.as_deref(), dir, &ctx)?;
                stage_match(dir, &idx, &ctx)
            })
        }
        Command::Dbi { network, weather } => {
            let cache = NetworkCache::default();
            for_each_trip(cli, Stage::Dbi, |dir| {
                let idx = cache.get(network.as_deref(), dir, &ctx)?;
                let w = load_weather(weather.as_deref(), dir)?;
                stage_dbi(dir, &idx, &w, &ctx)
            })
        }
        Command::Report {
            driver,
            period,
            from,
            to,
            detail,
            out,
        } => {
            let text = report(cli, driver, (*period).into(), *from, *to, *detail, &ctx)?;
            match out {
                Some(p) => {
                    store::write(p, text.as_bytes())?;
                    Ok(String::new())
                }
                None => Ok(text),
            }
        }
        Command::Export { driver, from, to, out } => {
            let root = store_root(cli)?;
            let (from, to) = export_range(&root, driver, *from, *to, &ctx)?;
            let bytes = bundle::export_bundle(&root, driver, from, to, ctx.config.utc_offset_h)?;
            store::write(out, &bytes)?;
            let v = bundle::verify_bundle(&bytes)?;
            Ok(format!(
                "{}: {} trip dirs, {} files, merkle_root {}\n",
                out.display(),
                v.manifest.trips.len(),
                v.manifest.files.len(),
                v.manifest.merkle_root
            ))
        }
        Command::Verify { bundle: Some(path) } => {
            let v = bundle::verify_bundle(&store::read(path)?)?;
            Ok(format!("ok {} merkle_root {}\n", path.display(), v.manifest.merkle_root))
        }
        Command::Verify { bundle: None } => {
            let mut out = String::new();
            for p in targets(cli)? {
                let d = TripDir::open(&p)?;
                d.verify_all()?;
                out.push_str(&format!("ok {}\n", p.display()));
            }
            Ok(out)
        }
        Command::Import { bundle: path } => {
            let root = store_root(cli)?;
            let m = bundle::import_bundle(&store::read(path)?, &root)?;
            Ok(format!(
                "imported {} trips for {} ({}..{}) merkle_root {}\n",
                m.trips.len(),
                m.driver_id,
                m.from,
                m.to,
                m.merkle_root
            ))
        }
    }
}

fn store_root(cli: &Cli) -> Result<PathBuf, CliError> {
    cli.store
        .clone()
        .ok_or_else(|| CliError::Usage("this command needs --store <dir>".into()))
}

fn targets(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    match (&cli.trip_dir, &cli.store) {
        (Some(d), None) => Ok(vec![d.clone()]),
        (None, Some(s)) => Ok(trip_dirs(s)?),
        (Some(_), Some(_)) => Err(CliError::Usage("give either --trip-dir or --store, not both".into())),
        (None, None) => Err(CliError::Usage("this command needs --trip-dir <dir> or --store <dir>".into())),
    }
}

/// Runs `f` on every target trip directory, several at a time, holding each
/// directory's lock. Output lines come back in directory order.
fn for_each_trip(
    cli: &Cli,
    stage: Stage,
    f: impl Fn(&mut TripDir) -> Result<String, CliError> + Sync,
) -> Result<String, CliError> {
    let dirs = targets(cli)?;
    // Ingest may create the manifest, so it opens lazily.
    let results: Vec<Mutex<Option<Result<String, CliError>>>> = dirs.iter().map(|_| Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(dirs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(path) = dirs.get(i) else { break };
                let r = (|| {
                    let _guard = lock(path)?;
                    let mut dir = if stage == Stage::Ingest {
                        TripDir::open(path).or_else(|e| match e {
                            StoreError::NoManifest(_) => Ok(TripDir {
                                path: path.clone(),
                                manifest: placeholder_manifest(),
                            }),
                            e => Err(e),
                        })?
                    } else {
                        TripDir::open(path)?
                    };
                    f(&mut dir)
                })();
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    let mut out = String::new();
    for r in results {
        out.push_str(&r.into_inner().expect("result slot").expect("every slot filled")?);
    }
    Ok(out)
}

fn placeholder_manifest() -> store::TripManifest {
    store::TripManifest {
        schema_version: 0,
        trip_id: String::new(),
        driver_id: String::new(),
        epoch: 0,
        streams: Vec::new(),
        clocks: None,
        stages: Vec::new(),
        outputs: Vec::new(),
        config: String::new(),
    }
}

fn done(dir: &TripDir, stage: Stage, detail: &str) -> String {
    let hash = dir.manifest.output_hash(stage.output_file()).unwrap_or("");
    format!("{} {} {} {}\n", dir.manifest.trip_id, stage, &hash[..hash.len().min(16)], detail)
}

fn inputs(dir: &TripDir) -> Result<TripInputs, CliError> {
    let need = |name: &str| -> Result<String, CliError> {
        dir.stream_text(name)?
            .ok_or_else(|| CliError::Failed(format!("{}: stream {name} not in manifest", dir.path.display())))
    };
    Ok(TripInputs {
        gnss: need("gnss.nmea")?,
        imu: need("imu.csv")?,
        obd: need("obd.csv")?,
        vision: need("vision.jsonl")?,
        vision_gnss: dir.stream_text(store::VISION_GNSS)?,
    })
}

fn stage_ingest(dir: &mut TripDir, trip_id: Option<&str>, driver: &str, ctx: &Context) -> Result<String, CliError> {
    if dir.manifest.schema_version == 0 {
        let gnss = store::read_string(&dir.path.join("gnss.nmea"))?;
        let (h, _) = split_stream(&gnss).map_err(|e| CliError::Failed(format!("gnss.nmea: {e}")))?;
        let name = dir.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        *dir = TripDir::init(&dir.path, trip_id.unwrap_or(&name), driver, h.epoch)?;
    }
    dir.verify_streams()?;
    let ing = ingest(&inputs(dir)?)?;
    let summary = ing.summary(&ctx.config);
    if let Some((stream, r)) = summary.validation.iter().find(|(_, r)| r.has_errors()) {
        let bad: Vec<_> = r.findings.iter().filter(|f| !matches!(f, Finding::Gap { .. })).collect();
        return Err(CliError::Failed(format!(
            "{}: {stream} stream failed validation: {} findings, first {:?}",
            dir.manifest.trip_id,
            bad.len(),
            bad[0]
        )));
    }
    dir.complete(Stage::Ingest, &to_json_bytes(&summary), &ctx.config_toml)?;
    Ok(done(
        dir,
        Stage::Ingest,
        &format!("{} fixes {} imu {} obd {} vision", summary.n_fixes, summary.n_imu, summary.n_obd, summary.n_vision),
    ))
}

fn stage_sync(dir: &mut TripDir, ctx: &Context) -> Result<String, CliError> {
    dir.require_before(Stage::Sync)?;
    dir.output(Stage::Ingest)?;
    let clocks = estimate_clocks(&ingest(&inputs(dir)?)?)?;
    dir.manifest.clocks = Some(clocks);
    dir.complete(Stage::Sync, &to_json_bytes(&clocks), &ctx.config_toml)?;
    Ok(done(
        dir,
        Stage::Sync,
        &format!(
            "telemetry {:+.4} s {:+.2} ppm vision {:+.4} s {:+.2} ppm",
            clocks.telemetry.offset_s, clocks.telemetry.drift_ppm, clocks.vision.offset_s, clocks.vision.drift_ppm
        ),
    ))
}

fn synced(dir: &TripDir) -> Result<Synced, CliError> {
    let clocks: Clocks = serde_json::from_slice(&dir.output(Stage::Sync)?)
        .map_err(|e| CliError::Failed(format!("sync.json: {e}")))?;
    Ok(synchronize(ingest(&inputs(dir)?)?, &clocks))
}

fn stage_events(dir: &mut TripDir, ctx: &Context) -> Result<String, CliError> {
    dir.require_before(Stage::Events)?;
    let sy = synced(dir)?;
    let sig = signals(&sy, &ctx.config)?;
    let events = detect_events(&sy, &sig, &ctx.config);
    dir.complete(Stage::Events, &to_jsonl_bytes(&events), &ctx.config_toml)?;
    Ok(done(dir, Stage::Events, &format!("{} events", events.len())))
}

/// First line of `matched.jsonl`; every later line is one fix assignment.
#[derive(Debug, Serialize, Deserialize)]
struct MatchedHeader {
    edges: Vec<EdgeId>,
    off_network: Vec<usize>,
}

fn matched_bytes(m: &MatchedPath) -> Vec<u8> {
    let mut out = to_jsonl_bytes(&[MatchedHeader {
        edges: m.edges.clone(),
        off_network: m.off_network.clone(),
    }]);
    out.extend(to_jsonl_bytes(&m.assignments));
    out
}

fn parse_matched(bytes: &[u8]) -> Result<MatchedPath, CliError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::Failed(format!("matched.jsonl: {e}")))?;
    let mut lines = text.lines();
    let bad = |e: serde_json::Error| CliError::Failed(format!("matched.jsonl: {e}"));
    let h: MatchedHeader = serde_json::from_str(lines.next().unwrap_or("")).map_err(bad)?;
    let assignments = lines
        .map(serde_json::from_str::<Assignment>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(bad)?;
    Ok(MatchedPath {
        assignments,
        edges: h.edges,
        off_network: h.off_network,
    })
}

#[derive(Default)]
struct NetworkCache(Mutex<Vec<(PathBuf, std::sync::Arc<SpatialIndex>)>>);

impl NetworkCache {
    fn get(&self, explicit: Option<&Path>, dir: &TripDir, ctx: &Context) -> Result<std::sync::Arc<SpatialIndex>, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => find_upward(&dir.path, "network.json").ok_or_else(|| {
                CliError::Failed(format!(
                    "{}: no network.json in the trip directory or its parent; pass --network",
                    dir.path.display()
                ))
            })?,
        };
        let mut cache = self.0.lock().expect("network cache");
        if let Some((_, idx)) = cache.iter().find(|(p, _)| *p == path) {
            return Ok(idx.clone());
        }
        let net = RoadNetwork::from_json(&store::read_string(&path)?)
            .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        let idx = SpatialIndex::build(std::sync::Arc::new(net), ctx.config.spatial_cell_m)
            .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        let idx = std::sync::Arc::new(idx);
        cache.push((path, idx.clone()));
        Ok(idx)
    }
}

fn find_upward(dir: &Path, name: &str) -> Option<PathBuf> {
    [Some(dir), dir.parent()]
        .into_iter()
        .flatten()
        .map(|d| d.join(name))
        .find(|p| p.exists())
}

fn load_weather(explicit: Option<&Path>, dir: &TripDir) -> Result<Vec<WeatherRecord>, CliError> {
    let path = explicit.map(Path::to_path_buf).or_else(|| find_upward(&dir.path, "weather.json"));
    match path {
        Some(p) => drivesense_core::fusion::weather::parse_weather_json(&store::read_string(&p)?)
            .map_err(|e| CliError::Failed(format!("{}: {e}", p.display()))),
        None => Ok(Vec::new()),
    }
}

fn stage_match(dir: &mut TripDir, idx: &SpatialIndex, ctx: &Context) -> Result<String, CliError> {
    dir.require_before(Stage::Match)?;
    dir.output(Stage::Events)?;
    let sy = synced(dir)?;
    let m = match_path(&sy, idx, &ctx.config)?;
    dir.complete(Stage::Match, &matched_bytes(&m), &ctx.config_toml)?;
    Ok(done(
        dir,
        Stage::Match,
        &format!("{} edges {} off-network fixes", m.edges.len(), m.off_network.len()),
    ))
}

fn stage_dbi(dir: &mut TripDir, idx: &SpatialIndex, weather: &[WeatherRecord], ctx: &Context) -> Result<String, CliError> {
    dir.require_before(Stage::Dbi)?;
    let events: Vec<DetectedEvent> = store::from_jsonl(&dir.path.join("events.jsonl"), &dir.output(Stage::Events)?)?;
    let matched = parse_matched(&dir.output(Stage::Match)?)?;
    let sy = synced(dir)?;
    let sig = signals(&sy, &ctx.config)?;
    let m = &dir.manifest;
    let trips = fuse(
        &m.trip_id,
        &m.driver_id,
        &sy,
        &sig,
        events,
        &matched,
        idx.network(),
        weather,
        &ctx.config,
    );
    dir.complete(Stage::Dbi, &to_json_bytes(&trips), &ctx.config_toml)?;
    let miles: f64 = trips.iter().map(|t| t.travel.miles()).sum();
    Ok(done(dir, Stage::Dbi, &format!("{} trips {miles:.2} mi", trips.len())))
}

fn all_trips(root: &Path, driver: &str) -> Result<Vec<Trip>, CliError> {
    let mut out = Vec::new();
    for p in trip_dirs(root)? {
        let d = TripDir::open(&p)?;
        if d.manifest.driver_id != driver || !d.manifest.has(Stage::Dbi) {
            continue;
        }
        let trips: Vec<Trip> = serde_json::from_slice(&d.output(Stage::Dbi)?)
            .map_err(|e| CliError::Failed(format!("{}: {e}", p.join("trips.json").display())))?;
        out.extend(trips);
    }
    Ok(out)
}

/// Range covering whole periods of `kind` around the driver's trips.
fn default_range(trips: &[Trip], kind: PeriodKind, utc_offset_h: f64) -> Option<(NaiveDate, NaiveDate)> {
    use chrono::Datelike;
    let dates: Vec<NaiveDate> = trips.iter().map(|t| trip_date(t, utc_offset_h)).collect();
    let (lo, hi) = (*dates.iter().min()?, *dates.iter().max()?);
    Some(match kind {
        PeriodKind::Day => (lo, hi),
        PeriodKind::Week => (
            lo - chrono::Days::new(lo.weekday().num_days_from_monday() as u64),
            hi + chrono::Days::new(6 - hi.weekday().num_days_from_monday() as u64),
        ),
        PeriodKind::Month => {
            let first = lo.with_day(1)?;
            let next = NaiveDate::from_ymd_opt(hi.year() + (hi.month() == 12) as i32, hi.month() % 12 + 1, 1)?;
            (first, next.pred_opt()?)
        }
    })
}

fn report(
    cli: &Cli,
    driver: &str,
    kind: PeriodKind,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    detail: bool,
    ctx: &Context,
) -> Result<String, CliError> {
    let root = store_root(cli)?;
    let trips = all_trips(&root, driver)?;
    let utc = ctx.config.utc_offset_h;
    let (lo, hi) = match (from, to, default_range(&trips, kind, utc)) {
        (Some(f), Some(t), _) => (f, t),
        (f, t, Some((a, b))) => (f.unwrap_or(a), t.unwrap_or(b)),
        (_, _, None) => return Err(CliError::Failed(format!("no processed trips for driver {driver}; pass --from and --to"))),
    };
    if lo > hi {
        return Err(CliError::Usage(format!("--from {lo} is after --to {hi}")));
    }
    let reports = compute_dbi(driver, &trips, kind, lo, hi, utc);
    Ok(match (cli.format, detail) {
        (Format::Csv, false) => index_csv(&compute_dbi(driver, &trips, PeriodKind::Day, lo, hi, utc)),
        (Format::Csv, true) => reports_csv(&reports),
        (Format::Json, _) => String::from_utf8(to_json_bytes(&reports)).expect("utf-8 JSON"),
    })
}

fn export_range(
    root: &Path,
    driver: &str,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    ctx: &Context,
) -> Result<(NaiveDate, NaiveDate), CliError> {
    if let (Some(f), Some(t)) = (from, to) {
        return Ok((f, t));
    }
    let trips = all_trips(root, driver)?;
    match default_range(&trips, PeriodKind::Day, ctx.config.utc_offset_h) {
        Some((a, b)) => Ok((from.unwrap_or(a), to.unwrap_or(b))),
        None => Err(CliError::Failed(format!("no processed trips for driver {driver}; pass --from and --to"))),
    }
}

fn load_network(path: Option<&Path>) -> Result<RoadNetwork, CliError> {
    match path {
        Some(p) => RoadNetwork::from_json(&store::read_string(p)?).map_err(|e| CliError::Failed(format!("{}: {e}", p.display()))),
        None => Ok(sim::default_network()),
    }
}

/// Writes one simulated recording into `dir` with a fresh manifest.
pub fn write_simulated(dir: &Path, script: &DriveScript, network: &RoadNetwork, network_json: bool) -> Result<(), CliError> {
    let out = synthesize(script, network)?;
    for (name, text) in [
        ("gnss.nmea", &out.gnss),
        ("imu.csv", &out.imu),
        ("obd.csv", &out.obd),
        ("vision.jsonl", &out.vision),
        (store::VISION_GNSS, &out.vision_gnss),
    ] {
        store::write(&dir.join(name), text.as_bytes())?;
    }
    store::write(&dir.join("truth.json"), out.truth.to_json().as_bytes())?;
    store::write(&dir.join("script.json"), script.to_json().as_bytes())?;
    if network_json {
        store::write(&dir.join("network.json"), network.to_json().as_bytes())?;
    }
    // A stale manifest from an earlier run would point at old outputs.
    for s in Stage::ALL {
        let _ = std::fs::remove_file(dir.join(s.output_file()));
    }
    TripDir::init(dir, &script.trip_id, &script.driver_id, script.epoch)?;
    Ok(())
}

fn simulate(
    cli: &Cli,
    script: Option<&Path>,
    scenario: Option<&Path>,
    fleet: Option<&Path>,
    network: Option<&Path>,
) -> Result<String, CliError> {
    let net = load_network(network)?;
    if let Some(plan_path) = fleet {
        let root = store_root(cli)?;
        let mut plan: FleetPlan = serde_json::from_str(&store::read_string(plan_path)?)
            .map_err(|e| CliError::Failed(format!("{}: {e}", plan_path.display())))?;
        if let Some(s) = cli.seed {
            plan.seed = s;
        }
        let sched = simulate_fleet(&plan, &net)?;
        store::write(&root.join("network.json"), net.to_json().as_bytes())?;
        store::write(&root.join("weather.json"), &to_json_bytes(&sched.weather))?;
        store::write(&root.join("plan.json"), &to_json_bytes(&plan))?;
        let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());
        let next = std::sync::atomic::AtomicUsize::new(0);
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(t) = sched.trips.get(i) else { break };
                    if let Err(e) = write_simulated(&root.join(&t.script.trip_id), &t.script, &net, false) {
                        errors.lock().expect("errors").push(format!("{}: {e}", t.script.trip_id));
                    }
                });
            }
        });
        let errors = errors.into_inner().expect("errors");
        if !errors.is_empty() {
            return Err(CliError::Failed(errors.join("\n")));
        }
        return Ok(format!(
            "{} trips for {} over {} days in {}\n",
            sched.trips.len(),
            plan.driver_id,
            plan.days,
            root.display()
        ));
    }
    let dir = cli
        .trip_dir
        .clone()
        .ok_or_else(|| CliError::Usage("simulate needs --trip-dir <dir> (or --fleet with --store)".into()))?;
    let seed = cli.seed.unwrap_or(0);
    let script = match (script, scenario) {
        (Some(p), _) => {
            let mut s = DriveScript::from_json(&store::read_string(p)?)?;
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            s
        }
        (None, Some(p)) => {
            let spec: ScenarioSpec = serde_json::from_str(&store::read_string(p)?)
                .map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
            build_script(seed, &net, &spec)?
        }
        (None, None) => build_script(seed, &net, &ScenarioSpec::standard())?,
    };
    let _guard = if dir.exists() { Some(lock(&dir)?) } else { None };
    write_simulated(&dir, &script, &net, true)?;
    Ok(format!("{} simulated in {}\n", script.trip_id, dir.display()))
}
