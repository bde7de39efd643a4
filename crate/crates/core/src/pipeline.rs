//! Orchestrates the analysis dataflow: parse the device list, the offline
//! vulnerability snapshot, and the IEEE registry files; extract observations
//! from the capture; merge into device identifications; map vulnerabilities;
//! and assemble the report. Each stage failure is tagged with its stage name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use thiserror::Error;

use crate::capture::{
    observe, open_capture, CaptureError, CaptureStats, Observation, ObservationPolicy, RawPacket,
};
use crate::identify::{
    categorize, load_blacklist, load_truth, Category, DeviceDatabase, IdentificationResult,
    TruthRow, DEFAULT_DISTANCE_THRESHOLD,
};
use crate::interarrival::{build_series, coverage, quartiles, stats, ArrivalSeries, ArrivalStats};
use crate::mac::{MacAddress, MacDistance, PrefixKind};
use crate::registry::Registry;
use crate::report::{
    ArrivalReport, CoverageRecord, CoverageRunReport, DbCheckReport, DbCheckSummary,
    DeviceArrivalReport, DeviceReport, EvalRow, EvalSummary, EvaluationReport, GuessReport,
    HistogramRow, OutputFormat, ScanReport, ScanSummary, UnobservedRow, VulnRecordReport,
    VulnsReport,
};
use crate::vulnmap::{MatchOptions, VulnStore};

/// Pipeline stages, named as they appear in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    DeviceDb,
    Blacklist,
    Cve,
    Registry,
    Capture,
    Truth,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::DeviceDb => "device-db",
            Stage::Blacklist => "blacklist",
            Stage::Cve => "cve",
            Stage::Registry => "registry",
            Stage::Capture => "capture",
            Stage::Truth => "truth",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Invalid run configuration; maps to the input-error exit status.
    #[error("config: {0}")]
    Config(String),
    /// A loader or parser failed; maps to the stage-failure exit status.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync + 'static>,
    },
}

impl PipelineError {
    fn at<E>(stage: Stage) -> impl FnOnce(E) -> PipelineError
    where
        E: std::error::Error + Send + Sync + 'static,
    {
        move |e| PipelineError::Stage {
            stage,
            source: Box::new(e),
        }
    }

    fn missing(stage: Stage, what: &str) -> PipelineError {
        PipelineError::Stage {
            stage,
            source: format!("no {what} configured").into(),
        }
    }
}

/// Exactly one capture input per run: a file or a live interface.
#[derive(Debug, Clone, PartialEq)]
pub enum CaptureInput {
    PcapFile(PathBuf),
    Live {
        interface: String,
        duration_secs: Option<f64>,
        promiscuous: bool,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: CaptureInput,
    pub registry_mal: Option<PathBuf>,
    pub registry_mam: Option<PathBuf>,
    pub registry_mas: Option<PathBuf>,
    pub device_db: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub cve: Option<PathBuf>,
    pub threshold: MacDistance,
    pub policy: ObservationPolicy,
    pub format: OutputFormat,
    pub buckets: usize,
    pub vuln_options: MatchOptions,
    /// Hold truth devices out of the database before evaluation matching.
    pub blacklist_truth: bool,
    /// Vendor filter for the `db check` histogram.
    pub vendor_filter: Option<String>,
}

impl RunConfig {
    pub fn for_pcap(path: impl Into<PathBuf>) -> Self {
        RunConfig {
            input: CaptureInput::PcapFile(path.into()),
            registry_mal: None,
            registry_mam: None,
            registry_mas: None,
            device_db: None,
            blacklist: None,
            truth: None,
            cve: None,
            threshold: DEFAULT_DISTANCE_THRESHOLD,
            policy: ObservationPolicy::default(),
            format: OutputFormat::Text,
            buckets: 64,
            vuln_options: MatchOptions::default(),
            blacklist_truth: true,
            vendor_filter: None,
        }
    }

    pub fn for_interface(name: impl Into<String>, duration_secs: Option<f64>) -> Self {
        let mut cfg = RunConfig::for_pcap("");
        cfg.input = CaptureInput::Live {
            interface: name.into(),
            duration_secs,
            promiscuous: true,
        };
        cfg
    }
}

fn open_stage_file(stage: Stage, path: &Path) -> Result<File, PipelineError> {
    File::open(path).map_err(|e| PipelineError::Stage {
        stage,
        source: format!("{}: {e}", path.display()).into(),
    })
}

fn load_blacklist_stage(cfg: &RunConfig) -> Result<BTreeSet<MacAddress>, PipelineError> {
    match &cfg.blacklist {
        Some(path) => {
            let file = open_stage_file(Stage::Blacklist, path)?;
            load_blacklist(file).map_err(PipelineError::at(Stage::Blacklist))
        }
        None => Ok(BTreeSet::new()),
    }
}

fn load_device_db_stage(
    cfg: &RunConfig,
    blacklist: &BTreeSet<MacAddress>,
) -> Result<(DeviceDatabase, crate::identify::DbLoadSummary), PipelineError> {
    let path = cfg
        .device_db
        .as_ref()
        .ok_or_else(|| PipelineError::missing(Stage::DeviceDb, "device database path"))?;
    let file = open_stage_file(Stage::DeviceDb, path)?;
    DeviceDatabase::from_csv(file, Some(blacklist)).map_err(PipelineError::at(Stage::DeviceDb))
}

fn load_registry_stage(cfg: &RunConfig) -> Result<Registry, PipelineError> {
    let mut registry = Registry::new();
    let files = [
        (PrefixKind::MaL, &cfg.registry_mal),
        (PrefixKind::MaM, &cfg.registry_mam),
        (PrefixKind::MaS, &cfg.registry_mas),
    ];
    for (kind, path) in files {
        if let Some(path) = path {
            let file = open_stage_file(Stage::Registry, path)?;
            registry
                .load(kind, file)
                .map_err(PipelineError::at(Stage::Registry))?;
        }
    }
    Ok(registry)
}

fn load_cve_stage(cfg: &RunConfig) -> Result<Option<VulnStore>, PipelineError> {
    match &cfg.cve {
        Some(path) => {
            let file = open_stage_file(Stage::Cve, path)?;
            let (store, _report) =
                VulnStore::from_ndjson(file).map_err(PipelineError::at(Stage::Cve))?;
            Ok(Some(store))
        }
        None => Ok(None),
    }
}

/// Runs the capture producer on its own thread feeding a bounded queue; the
/// caller's thread consumes and aggregates observations.
fn observe_through_channel<I>(
    packets: I,
    policy: ObservationPolicy,
) -> Result<(Vec<Observation>, CaptureStats), PipelineError>
where
    I: Iterator<Item = Result<RawPacket, CaptureError>> + Send + 'static,
{
    let (tx, rx) = mpsc::sync_channel::<Result<RawPacket, CaptureError>>(1024);
    let producer = thread::spawn(move || {
        for item in packets {
            if tx.send(item).is_err() {
                return; // consumer hung up after an error
            }
        }
    });
    let result = observe(rx.into_iter(), policy);
    let _ = producer.join();
    result.map_err(PipelineError::at(Stage::Capture))
}

fn capture_stage(cfg: &RunConfig) -> Result<(Vec<Observation>, CaptureStats), PipelineError> {
    match &cfg.input {
        CaptureInput::PcapFile(path) => {
            let reader = open_capture(path).map_err(PipelineError::at(Stage::Capture))?;
            observe_through_channel(reader, cfg.policy)
        }
        #[cfg(feature = "live")]
        CaptureInput::Live {
            interface,
            duration_secs,
            promiscuous,
        } => {
            let mut source = crate::capture::LiveSource::open(interface, *promiscuous)
                .map_err(PipelineError::at(Stage::Capture))?;
            if let Some(secs) = duration_secs {
                source = source.with_duration(std::time::Duration::from_secs_f64(*secs));
            }
            observe_through_channel(source, cfg.policy)
        }
        #[cfg(not(feature = "live"))]
        CaptureInput::Live { .. } => Err(PipelineError::Config(
            "this build has no live capture support (rebuild with --features live)".into(),
        )),
    }
}

fn arrival_report(series: Option<&ArrivalSeries>) -> ArrivalReport {
    match series {
        Some(series) => {
            let s = stats(series);
            ArrivalReport {
                packet_count: s.packet_count,
                gap_count: s.gap_count,
                mean_secs: s.mean_secs,
                max_secs: s.max_secs,
                quartiles: quartiles(series),
            }
        }
        None => ArrivalReport {
            packet_count: 0,
            gap_count: 0,
            mean_secs: None,
            max_secs: None,
            quartiles: None,
        },
    }
}

fn coverage_record(per_device: &[ArrivalStats]) -> Option<CoverageRecord> {
    coverage(per_device.iter()).ok().map(|c| CoverageRecord {
        coverage_secs: c.coverage_secs,
        limiting_mac: c.limiting_mac.to_string(),
    })
}

fn vulns_report(
    store: Option<&VulnStore>,
    result: &IdentificationResult,
    options: &MatchOptions,
) -> Option<VulnsReport> {
    let store = store?;
    let (vendor, product) = match result.category {
        Category::ExactOrProductGuess => {
            let guess = result.matched.as_ref()?;
            (guess.vendor.clone(), guess.product.clone())
        }
        Category::VendorOnly => (result.registry_vendor.clone()?, String::new()),
        Category::NoIdentification => {
            return Some(VulnsReport {
                quality: None,
                records: Vec::new(),
            })
        }
    };
    let matches = store.match_vulns(&vendor, &product, options);
    Some(VulnsReport {
        quality: matches.quality.map(|q| {
            match q {
                crate::vulnmap::MatchQuality::VendorAndProduct => "vendor-and-product",
                crate::vulnmap::MatchQuality::VendorOnly => "vendor-only",
            }
            .to_string()
        }),
        records: matches
            .records
            .into_iter()
            .map(|r| VulnRecordReport {
                cve_id: r.cve_id,
                cvss: r.cvss,
                summary: r.summary,
            })
            .collect(),
    })
}

/// The full Fig. analyze flow: all loaders, capture, identification, and
/// vulnerability mapping, in dependency order.
pub fn run_analyze(cfg: &RunConfig) -> Result<ScanReport, PipelineError> {
    let blacklist = load_blacklist_stage(cfg)?;
    let (db, _db_summary) = load_device_db_stage(cfg, &blacklist)?;
    let store = load_cve_stage(cfg)?;
    let registry = load_registry_stage(cfg)?;
    let (observations, capture_stats) = capture_stage(cfg)?;

    let series = build_series(observations);
    let per_device_stats: Vec<ArrivalStats> = series.values().map(stats).collect();
    let macs: BTreeSet<MacAddress> = series.keys().copied().collect();
    let results = crate::identify::identify_all(&db, &registry, &macs, cfg.threshold);

    let devices: Vec<DeviceReport> = results
        .iter()
        .map(|result| {
            let vulns = vulns_report(store.as_ref(), result, &cfg.vuln_options);
            DeviceReport {
                mac: result.query.to_string(),
                registry_vendor: result.registry_vendor.clone(),
                registry_kind: result.registry_kind.map(|k| k.label().to_string()),
                guess: result.matched.as_ref().map(|g| GuessReport {
                    mac: g.mac.to_string(),
                    vendor: g.vendor.clone(),
                    product: g.product.clone(),
                    source: g.source.clone(),
                }),
                distance: result.distance.map(|d| d.magnitude()),
                distance_hex: result.distance.map(|d| d.to_string()),
                category: result.category.label().to_string(),
                band: result.band.map(|b| b.label().to_string()),
                arrival: arrival_report(series.get(&result.query)),
                vulns,
            }
        })
        .collect();

    let identified = results
        .iter()
        .filter(|r| r.category == Category::ExactOrProductGuess)
        .count() as u64;
    let hosts = capture_stats.distinct_macs;
    Ok(ScanReport {
        stats: capture_stats,
        devices,
        coverage: coverage_record(&per_device_stats),
        summary: ScanSummary {
            hosts_discovered: hosts,
            identified,
            identification_rate: if hosts == 0 {
                0.0
            } else {
                identified as f64 / hosts as f64
            },
        },
    })
}

/// Capture-only flow: per-device interarrival statistics and the coverage
/// estimate, with quartile plot data.
pub fn run_coverage(cfg: &RunConfig) -> Result<CoverageRunReport, PipelineError> {
    let (observations, capture_stats) = capture_stage(cfg)?;
    let series = build_series(observations);
    let per_device_stats: Vec<ArrivalStats> = series.values().map(stats).collect();
    let devices = series
        .values()
        .map(|s| DeviceArrivalReport {
            mac: s.mac().to_string(),
            arrival: arrival_report(Some(s)),
        })
        .collect();
    Ok(CoverageRunReport {
        stats: capture_stats,
        devices,
        coverage: coverage_record(&per_device_stats),
    })
}

/// Four-way outcome of one truth row against the identification result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalOutcome {
    Correct,
    CorrectVendorWrongDevice,
    VendorOnly,
    NoIdentification,
}

impl EvalOutcome {
    pub fn label(self) -> &'static str {
        match self {
            EvalOutcome::Correct => "correct",
            EvalOutcome::CorrectVendorWrongDevice => "correct-vendor-wrong-device",
            EvalOutcome::VendorOnly => "vendor-only",
            EvalOutcome::NoIdentification => "no-identification",
        }
    }
}

fn vendor_matches(candidate: &str, truth: &str) -> bool {
    let truth_tokens = crate::vulnmap::normalize(truth);
    crate::vulnmap::normalize(candidate)
        .iter()
        .any(|t| truth_tokens.contains(t))
}

fn product_matches(candidate: &str, truth: &str) -> bool {
    crate::vulnmap::normalize(candidate) == crate::vulnmap::normalize(truth)
}

/// Scores one identification against ground truth. Precedence: correct
/// product, then correct guessed vendor, then correct registry vendor,
/// then nothing.
pub fn score_outcome(result: &IdentificationResult, truth: &TruthRow) -> EvalOutcome {
    let registry_vendor_ok = result
        .registry_vendor
        .as_deref()
        .is_some_and(|v| vendor_matches(v, &truth.vendor));
    match result.category {
        Category::ExactOrProductGuess => {
            let guess = result.matched.as_ref().expect("category implies a match");
            let vendor_ok = vendor_matches(&guess.vendor, &truth.vendor);
            if vendor_ok && product_matches(&guess.product, &truth.product) {
                EvalOutcome::Correct
            } else if vendor_ok {
                EvalOutcome::CorrectVendorWrongDevice
            } else if registry_vendor_ok {
                EvalOutcome::VendorOnly
            } else {
                EvalOutcome::NoIdentification
            }
        }
        Category::VendorOnly if registry_vendor_ok => EvalOutcome::VendorOnly,
        _ => EvalOutcome::NoIdentification,
    }
}

/// Validation flow: truth devices are held out of the database (unless
/// disabled), identified from the capture, and scored four ways. Truth rows
/// whose MAC never appears in the capture are listed separately, not scored.
pub fn run_evaluate(cfg: &RunConfig) -> Result<EvaluationReport, PipelineError> {
    let truth_path = cfg
        .truth
        .as_ref()
        .ok_or_else(|| PipelineError::missing(Stage::Truth, "truth file path"))?;
    let truth = load_truth(open_stage_file(Stage::Truth, truth_path)?)
        .map_err(PipelineError::at(Stage::Truth))?;

    let mut blacklist = load_blacklist_stage(cfg)?;
    if cfg.blacklist_truth {
        blacklist.extend(truth.iter().map(|t| t.mac));
    }
    let (db, _) = load_device_db_stage(cfg, &blacklist)?;
    let registry = load_registry_stage(cfg)?;
    let (observations, capture_stats) = capture_stage(cfg)?;

    let observed: BTreeSet<MacAddress> = observations.iter().map(|o| o.mac).collect();
    let mut rows = Vec::new();
    let mut unobserved = Vec::new();
    let mut tallies: BTreeMap<&'static str, usize> = BTreeMap::new();
    for row in &truth {
        if !observed.contains(&row.mac) {
            unobserved.push(UnobservedRow {
                mac: row.mac.to_string(),
                vendor: row.vendor.clone(),
                product: row.product.clone(),
            });
            continue;
        }
        let result = categorize(row.mac, db.nearest(row.mac), &registry, cfg.threshold);
        let outcome = score_outcome(&result, row);
        *tallies.entry(outcome.label()).or_default() += 1;
        rows.push(EvalRow {
            mac: row.mac.to_string(),
            truth_vendor: row.vendor.clone(),
            truth_product: row.product.clone(),
            guess_vendor: result.matched.as_ref().map(|g| g.vendor.clone()),
            guess_product: result.matched.as_ref().map(|g| g.product.clone()),
            registry_vendor: result.registry_vendor.clone(),
            distance: result.distance.map(|d| d.magnitude()),
            distance_hex: result.distance.map(|d| d.to_string()),
            outcome: outcome.label().to_string(),
        });
    }

    let truth_macs: BTreeSet<MacAddress> = truth.iter().map(|t| t.mac).collect();
    let extra_observed = observed.difference(&truth_macs).count() as u64;
    let scored = rows.len();
    let correct = tallies.get(EvalOutcome::Correct.label()).copied().unwrap_or(0);
    Ok(EvaluationReport {
        stats: capture_stats,
        rows,
        unobserved,
        summary: EvalSummary {
            truth_rows: truth.len(),
            scored,
            correct,
            correct_vendor_wrong_device: tallies
                .get(EvalOutcome::CorrectVendorWrongDevice.label())
                .copied()
                .unwrap_or(0),
            vendor_only: tallies
                .get(EvalOutcome::VendorOnly.label())
                .copied()
                .unwrap_or(0),
            no_identification: tallies
                .get(EvalOutcome::NoIdentification.label())
                .copied()
                .unwrap_or(0),
            identification_rate: if scored == 0 {
                0.0
            } else {
                correct as f64 / scored as f64
            },
            discovery_rate: if truth.is_empty() {
                0.0
            } else {
                scored as f64 / truth.len() as f64
            },
            extra_observed,
        },
    })
}

/// Loads and validates the device database, reporting per-vendor counts and
/// the MA-L address-space histogram.
pub fn run_db_check(cfg: &RunConfig) -> Result<DbCheckReport, PipelineError> {
    let blacklist = load_blacklist_stage(cfg)?;
    let path = cfg
        .device_db
        .as_ref()
        .ok_or_else(|| PipelineError::missing(Stage::DeviceDb, "device database path"))?;
    let file = open_stage_file(Stage::DeviceDb, path)?;
    let (db, summary) = DeviceDatabase::from_csv(file, Some(&blacklist))
        .map_err(PipelineError::at(Stage::DeviceDb))?;

    let mut vendors: BTreeMap<String, usize> = BTreeMap::new();
    for device in db.devices() {
        *vendors.entry(device.vendor.clone()).or_default() += 1;
    }
    let histogram = db
        .ma_l_histogram(cfg.buckets, cfg.vendor_filter.as_deref())
        .into_iter()
        .map(|(prefix, buckets)| HistogramRow {
            prefix: prefix.to_string(),
            kind: prefix.kind().label().to_string(),
            total: buckets.iter().sum(),
            buckets,
        })
        .collect();
    Ok(DbCheckReport {
        summary: DbCheckSummary {
            rows: summary.rows,
            devices: db.len(),
            blacklisted: summary.blacklisted,
            vendors,
        },
        histogram,
    })
}
