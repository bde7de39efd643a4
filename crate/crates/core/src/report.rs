//! Report assembly and rendering: a human-readable text form and
//! newline-delimited structured records carrying the same facts (the records
//! are a superset). Rendering is deterministic; no wall-clock fields.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::capture::CaptureStats;
use crate::interarrival::Quartiles;

/// Version stamped on every structured record.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Records,
}

fn record_line<T: Serialize>(record: &'static str, body: &T) -> String {
    #[derive(Serialize)]
    struct Line<'a, T: Serialize> {
        schema_version: u32,
        record: &'static str,
        #[serde(flatten)]
        body: &'a T,
    }
    serde_json::to_string(&Line {
        schema_version: SCHEMA_VERSION,
        record,
        body,
    })
    .expect("report records serialize")
}

#[derive(Debug, Clone, Serialize)]
pub struct CaptureStatsRecord {
    pub total_packets: u64,
    pub arp_packets: u64,
    pub arp_fraction: f64,
    pub observations: u64,
    pub malformed_arp: u64,
    pub distinct_macs: u64,
}

impl From<&CaptureStats> for CaptureStatsRecord {
    fn from(stats: &CaptureStats) -> Self {
        CaptureStatsRecord {
            total_packets: stats.total_packets,
            arp_packets: stats.arp_packets,
            arp_fraction: stats.arp_fraction(),
            observations: stats.observations,
            malformed_arp: stats.malformed_arp,
            distinct_macs: stats.distinct_macs,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GuessReport {
    pub mac: String,
    pub vendor: String,
    pub product: String,
    pub source: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArrivalReport {
    pub packet_count: usize,
    pub gap_count: usize,
    pub mean_secs: Option<f64>,
    pub max_secs: Option<f64>,
    pub quartiles: Option<Quartiles>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VulnRecordReport {
    pub cve_id: String,
    pub cvss: Option<f64>,
    pub summary: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VulnsReport {
    /// "vendor-and-product" or "vendor-only"; absent when nothing matched.
    pub quality: Option<String>,
    /// Version-agnostic matches: no firmware/software version filtering.
    pub records: Vec<VulnRecordReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviceReport {
    pub mac: String,
    pub registry_vendor: Option<String>,
    pub registry_kind: Option<String>,
    pub guess: Option<GuessReport>,
    pub distance: Option<u64>,
    pub distance_hex: Option<String>,
    pub category: String,
    pub band: Option<String>,
    pub arrival: ArrivalReport,
    pub vulns: Option<VulnsReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageRecord {
    pub coverage_secs: f64,
    pub limiting_mac: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanSummary {
    pub hosts_discovered: u64,
    pub identified: u64,
    pub identification_rate: f64,
}

/// Full `analyze` output.
#[derive(Debug, Clone)]
pub struct ScanReport {
    pub stats: CaptureStats,
    pub devices: Vec<DeviceReport>,
    pub coverage: Option<CoverageRecord>,
    pub summary: ScanSummary,
}

impl ScanReport {
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        out.push_str(&record_line(
            "capture_stats",
            &CaptureStatsRecord::from(&self.stats),
        ));
        out.push('\n');
        for device in &self.devices {
            out.push_str(&record_line("device", device));
            out.push('\n');
        }
        if let Some(coverage) = &self.coverage {
            out.push_str(&record_line("coverage", coverage));
            out.push('\n');
        }
        out.push_str(&record_line("summary", &self.summary));
        out.push('\n');
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        push_capture_line(&mut out, &self.stats);
        out.push('\n');
        writeln!(
            out,
            "{:<17}  {:<22}  {:<6}  {:<8}  {:<30}  {:<26}  {:>5}  {:>9}  {:>9}  {:>5}",
            "MAC", "CATEGORY", "BAND", "DIST", "GUESS", "REGISTRY VENDOR", "PKTS", "MEAN[s]", "MAX[s]", "VULNS"
        )
        .unwrap();
        for device in &self.devices {
            let guess = device
                .guess
                .as_ref()
                .map(|g| format!("{} {}", g.vendor, g.product))
                .unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "{:<17}  {:<22}  {:<6}  {:<8}  {:<30}  {:<26}  {:>5}  {:>9}  {:>9}  {:>5}",
                device.mac,
                device.category,
                device.band.as_deref().unwrap_or("-"),
                device.distance_hex.as_deref().unwrap_or("-"),
                guess,
                device.registry_vendor.as_deref().unwrap_or("-"),
                device.arrival.packet_count,
                opt_secs(device.arrival.mean_secs),
                opt_secs(device.arrival.max_secs),
                device
                    .vulns
                    .as_ref()
                    .map(|v| v.records.len().to_string())
                    .unwrap_or_else(|| "-".into()),
            )
            .unwrap();
        }
        let vuln_lines: Vec<String> = self
            .devices
            .iter()
            .filter_map(|d| d.vulns.as_ref().map(|v| (d, v)))
            .filter(|(_, v)| !v.records.is_empty())
            .map(|(d, v)| {
                let ids: Vec<String> = v
                    .records
                    .iter()
                    .map(|r| match r.cvss {
                        Some(score) => format!("{} ({score})", r.cve_id),
                        None => r.cve_id.clone(),
                    })
                    .collect();
                format!("  {}  {}", d.mac, ids.join(", "))
            })
            .collect();
        if !vuln_lines.is_empty() {
            out.push('\n');
            out.push_str("vulnerabilities (version-agnostic match):\n");
            for line in vuln_lines {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out.push('\n');
        match &self.coverage {
            Some(c) => writeln!(
                out,
                "coverage: {:.3} s (limited by {})",
                c.coverage_secs, c.limiting_mac
            )
            .unwrap(),
            None => writeln!(out, "coverage: undefined (no device seen twice)").unwrap(),
        }
        writeln!(
            out,
            "hosts discovered: {}   identified: {}   identification rate: {:.2}%",
            self.summary.hosts_discovered,
            self.summary.identified,
            self.summary.identification_rate * 100.0
        )
        .unwrap();
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviceArrivalReport {
    pub mac: String,
    #[serde(flatten)]
    pub arrival: ArrivalReport,
}

/// `coverage` subcommand output: per-device interarrival table plus the
/// network coverage estimate.
#[derive(Debug, Clone)]
pub struct CoverageRunReport {
    pub stats: CaptureStats,
    pub devices: Vec<DeviceArrivalReport>,
    pub coverage: Option<CoverageRecord>,
}

impl CoverageRunReport {
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        out.push_str(&record_line(
            "capture_stats",
            &CaptureStatsRecord::from(&self.stats),
        ));
        out.push('\n');
        for device in &self.devices {
            out.push_str(&record_line("device_arrival", device));
            out.push('\n');
        }
        if let Some(coverage) = &self.coverage {
            out.push_str(&record_line("coverage", coverage));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        push_capture_line(&mut out, &self.stats);
        out.push('\n');
        writeln!(
            out,
            "{:<17}  {:>5}  {:>5}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}",
            "MAC", "PKTS", "GAPS", "MEAN[s]", "Q1[s]", "MED[s]", "Q3[s]", "MAX[s]"
        )
        .unwrap();
        for device in &self.devices {
            let q = device.arrival.quartiles;
            writeln!(
                out,
                "{:<17}  {:>5}  {:>5}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}",
                device.mac,
                device.arrival.packet_count,
                device.arrival.gap_count,
                opt_secs(device.arrival.mean_secs),
                opt_secs(q.map(|q| q.q1)),
                opt_secs(q.map(|q| q.median)),
                opt_secs(q.map(|q| q.q3)),
                opt_secs(device.arrival.max_secs),
            )
            .unwrap();
        }
        out.push('\n');
        match &self.coverage {
            Some(c) => writeln!(
                out,
                "coverage: {:.3} s (limited by {})",
                c.coverage_secs, c.limiting_mac
            )
            .unwrap(),
            None => writeln!(out, "coverage: undefined (no device seen twice)").unwrap(),
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub mac: String,
    pub truth_vendor: String,
    pub truth_product: String,
    pub guess_vendor: Option<String>,
    pub guess_product: Option<String>,
    pub registry_vendor: Option<String>,
    pub distance: Option<u64>,
    pub distance_hex: Option<String>,
    pub outcome: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnobservedRow {
    pub mac: String,
    pub vendor: String,
    pub product: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub truth_rows: usize,
    pub scored: usize,
    pub correct: usize,
    pub correct_vendor_wrong_device: usize,
    pub vendor_only: usize,
    pub no_identification: usize,
    pub identification_rate: f64,
    pub discovery_rate: f64,
    pub extra_observed: u64,
}

/// `evaluate` subcommand output: the four-way scored table against ground
/// truth.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub stats: CaptureStats,
    pub rows: Vec<EvalRow>,
    pub unobserved: Vec<UnobservedRow>,
    pub summary: EvalSummary,
}

impl EvaluationReport {
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        out.push_str(&record_line(
            "capture_stats",
            &CaptureStatsRecord::from(&self.stats),
        ));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&record_line("evaluation", row));
            out.push('\n');
        }
        for row in &self.unobserved {
            out.push_str(&record_line("truth_unobserved", row));
            out.push('\n');
        }
        out.push_str(&record_line("evaluation_summary", &self.summary));
        out.push('\n');
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        push_capture_line(&mut out, &self.stats);
        out.push('\n');
        writeln!(
            out,
            "{:<17}  {:<28}  {:<28}  {:<8}  {}",
            "MAC", "TRUTH", "GUESS", "DIST", "OUTCOME"
        )
        .unwrap();
        for row in &self.rows {
            let truth = format!("{} {}", row.truth_vendor, row.truth_product);
            let guess = match (&row.guess_vendor, &row.guess_product) {
                (Some(v), Some(p)) => format!("{v} {p}"),
                _ => row
                    .registry_vendor
                    .clone()
                    .map(|v| format!("[vendor] {v}"))
                    .unwrap_or_else(|| "-".into()),
            };
            writeln!(
                out,
                "{:<17}  {:<28}  {:<28}  {:<8}  {}",
                row.mac,
                truth,
                guess,
                row.distance_hex.as_deref().unwrap_or("-"),
                row.outcome
            )
            .unwrap();
        }
        if !self.unobserved.is_empty() {
            out.push('\n');
            out.push_str("truth devices not observed in the capture:\n");
            for row in &self.unobserved {
                writeln!(out, "  {}  {} {}", row.mac, row.vendor, row.product).unwrap();
            }
        }
        out.push('\n');
        writeln!(
            out,
            "discovery rate: {:.2}% ({}/{})   identification rate: {:.2}% ({}/{} correct)",
            self.summary.discovery_rate * 100.0,
            self.summary.scored,
            self.summary.truth_rows,
            self.summary.identification_rate * 100.0,
            self.summary.correct,
            self.summary.scored,
        )
        .unwrap();
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramRow {
    pub prefix: String,
    pub kind: String,
    pub total: u64,
    pub buckets: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DbCheckSummary {
    pub rows: usize,
    pub devices: usize,
    pub blacklisted: usize,
    pub vendors: BTreeMap<String, usize>,
}

/// `db check` output: load validation plus the per-OUI address-space
/// histogram.
#[derive(Debug, Clone)]
pub struct DbCheckReport {
    pub summary: DbCheckSummary,
    pub histogram: Vec<HistogramRow>,
}

impl DbCheckReport {
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for row in &self.histogram {
            out.push_str(&record_line("ma_l_histogram", row));
            out.push('\n');
        }
        out.push_str(&record_line("db_summary", &self.summary));
        out.push('\n');
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "device database: {} rows, {} devices loaded, {} blacklisted",
            self.summary.rows, self.summary.devices, self.summary.blacklisted
        )
        .unwrap();
        out.push_str("devices per vendor:\n");
        for (vendor, count) in &self.summary.vendors {
            writeln!(out, "  {count:>6}  {vendor}").unwrap();
        }
        if !self.histogram.is_empty() {
            out.push('\n');
            out.push_str("MA-L address-space histogram (counts per bucket):\n");
            for row in &self.histogram {
                let rendered: Vec<String> = row.buckets.iter().map(|c| c.to_string()).collect();
                writeln!(out, "  {} ({}) total {}: {}", row.prefix, row.kind, row.total, rendered.join(" ")).unwrap();
            }
        }
        out
    }
}

fn push_capture_line(out: &mut String, stats: &CaptureStats) {
    writeln!(
        out,
        "capture: total={} arp={} ({:.2}%) observations={} malformed={} hosts={}",
        stats.total_packets,
        stats.arp_packets,
        stats.arp_fraction() * 100.0,
        stats.observations,
        stats.malformed_arp,
        stats.distinct_macs
    )
    .unwrap();
}

fn opt_secs(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "-".into(),
    }
}
