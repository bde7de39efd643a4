//! Maps identified vendor/product pairs to known vulnerabilities by
//! normalized token matching against an offline CVE snapshot. Matching is
//! version-agnostic: reported matches carry no firmware/software filter.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One vulnerability entry from the snapshot.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct CveRecord {
    pub cve_id: String,
    pub vendor: String,
    pub product: String,
    pub summary: String,
    #[serde(default)]
    pub cvss: Option<f64>,
}

/// Lowercases, splits on non-alphanumeric characters, drops empties, keeps
/// digits, and deduplicates preserving first occurrence.
pub fn normalize(name: &str) -> Vec<String> {
    let mut tokens: Vec<String> = Vec::new();
    for raw in name.split(|c: char| !c.is_alphanumeric()) {
        if raw.is_empty() {
            continue;
        }
        let token = raw.to_lowercase();
        if !tokens.contains(&token) {
            tokens.push(token);
        }
    }
    tokens
}

fn overlap(a: &[String], b: &[String]) -> usize {
    a.iter().filter(|t| b.contains(t)).count()
}

/// True iff `cve_id` looks like CVE-YYYY-NNNN with at least four digits in
/// the sequence part.
fn valid_cve_id(id: &str) -> bool {
    let Some(rest) = id.strip_prefix("CVE-") else {
        return false;
    };
    let Some((year, seq)) = rest.split_once('-') else {
        return false;
    };
    year.len() == 4
        && year.bytes().all(|b| b.is_ascii_digit())
        && seq.len() >= 4
        && seq.bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Error)]
pub enum VulnError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Load outcome: malformed lines are skipped and reported, never fatal.
#[derive(Debug, Default)]
pub struct VulnLoadReport {
    pub loaded: usize,
    /// (1-based line number, reason) of every skipped record.
    pub skipped: Vec<(usize, String)>,
    /// Record counts keyed by the normalized vendor name.
    pub per_vendor: BTreeMap<String, usize>,
}

struct StoredCve {
    record: CveRecord,
    product_tokens: Vec<String>,
}

/// Vulnerability store indexed by vendor token. Immutable after load.
#[derive(Default)]
pub struct VulnStore {
    records: Vec<StoredCve>,
    vendor_index: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchQuality {
    VendorAndProduct,
    VendorOnly,
}

/// Matches for one device query, sorted by descending CVSS (absent last),
/// then CVE id; no record appears twice.
#[derive(Debug, Clone, PartialEq)]
pub struct VulnMatches {
    pub quality: Option<MatchQuality>,
    pub records: Vec<CveRecord>,
}

impl VulnMatches {
    pub fn empty() -> Self {
        VulnMatches {
            quality: None,
            records: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOptions {
    /// Report vendor-level matches when no product matched.
    pub vendor_fallback: bool,
    /// Minimum number of shared product tokens for a product-level match.
    pub min_product_overlap: usize,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            vendor_fallback: false,
            min_product_overlap: 1,
        }
    }
}

impl VulnStore {
    /// Reads a newline-delimited snapshot; each line is a flat JSON object
    /// with fields `cve_id`, `vendor`, `product`, `summary` and optional
    /// `cvss`.
    pub fn from_ndjson(reader: impl Read) -> Result<(Self, VulnLoadReport), VulnError> {
        let mut store = VulnStore::default();
        let mut report = VulnLoadReport::default();
        for (index, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = index + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CveRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    report.skipped.push((line_no, e.to_string()));
                    continue;
                }
            };
            if !valid_cve_id(&record.cve_id) {
                report
                    .skipped
                    .push((line_no, format!("bad CVE id {:?}", record.cve_id)));
                continue;
            }
            if let Some(cvss) = record.cvss {
                if !(0.0..=10.0).contains(&cvss) {
                    report
                        .skipped
                        .push((line_no, format!("CVSS {cvss} out of range")));
                    continue;
                }
            }
            store.insert(record, &mut report);
        }
        Ok((store, report))
    }

    fn insert(&mut self, record: CveRecord, report: &mut VulnLoadReport) {
        let vendor_tokens = normalize(&record.vendor);
        let product_tokens = normalize(&record.product);
        let index = self.records.len();
        for token in &vendor_tokens {
            self.vendor_index
                .entry(token.clone())
                .or_default()
                .push(index);
        }
        *report
            .per_vendor
            .entry(vendor_tokens.join(" "))
            .or_default() += 1;
        report.loaded += 1;
        self.records.push(StoredCve {
            record,
            product_tokens,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of records whose vendor shares at least one token with
    /// `vendor`.
    pub fn vendor_count(&self, vendor: &str) -> usize {
        self.vendor_hits(&normalize(vendor)).len()
    }

    fn vendor_hits(&self, query_tokens: &[String]) -> BTreeSet<usize> {
        let mut hits = BTreeSet::new();
        for token in query_tokens {
            if let Some(indices) = self.vendor_index.get(token) {
                hits.extend(indices.iter().copied());
            }
        }
        hits
    }

    /// Token-overlap matching: vendor must share a token; product matches
    /// need `min_product_overlap` shared tokens. With no product match and
    /// fallback enabled, all vendor matches are returned as vendor-level.
    pub fn match_vulns(&self, vendor: &str, product: &str, options: &MatchOptions) -> VulnMatches {
        let vendor_hits = self.vendor_hits(&normalize(vendor));
        if vendor_hits.is_empty() {
            return VulnMatches::empty();
        }
        let product_tokens = normalize(product);
        let product_hits: Vec<usize> = vendor_hits
            .iter()
            .copied()
            .filter(|&i| {
                overlap(&self.records[i].product_tokens, &product_tokens)
                    >= options.min_product_overlap.max(1)
            })
            .collect();
        let (quality, indices) = if !product_hits.is_empty() {
            (MatchQuality::VendorAndProduct, product_hits)
        } else if options.vendor_fallback {
            (MatchQuality::VendorOnly, vendor_hits.into_iter().collect())
        } else {
            return VulnMatches::empty();
        };
        let mut records: Vec<CveRecord> =
            indices.iter().map(|&i| self.records[i].record.clone()).collect();
        records.sort_by(compare_records);
        VulnMatches {
            quality: Some(quality),
            records,
        }
    }
}

fn compare_records(a: &CveRecord, b: &CveRecord) -> Ordering {
    match (a.cvss, b.cvss) {
        (Some(x), Some(y)) => y
            .partial_cmp(&x)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.cve_id.cmp(&b.cve_id)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cve_id.cmp(&b.cve_id),
    }
}
