//! The local known-device database and MAC-distance identification: nearest
//! neighbor over the sorted 48-bit address space, categorized into product
//! guess / vendor only / no identification.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use thiserror::Error;

use crate::csvutil::find_column;
use crate::mac::{MacAddress, MacDistance, MacParseError, OuiPrefix, PrefixKind};
use crate::registry::Registry;

/// Product guesses are only offered up to one MA-L span away.
pub const DEFAULT_DISTANCE_THRESHOLD: MacDistance = MacDistance::new(0xFF_FFFF);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnownDevice {
    pub mac: MacAddress,
    pub vendor: String,
    pub product: String,
    pub source: Option<String>,
}

#[derive(Debug, Error)]
pub enum DeviceDbError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing {0:?} column in header row")]
    MissingColumn(&'static str),
    #[error("row {row}: {source}")]
    BadMac {
        row: usize,
        #[source]
        source: MacParseError,
    },
    #[error("row {row}: empty {field}")]
    EmptyField { row: usize, field: &'static str },
    #[error("conflicting entries for {mac}: {existing:?} vs {duplicate:?}")]
    Conflict {
        mac: MacAddress,
        existing: String,
        duplicate: String,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DbLoadSummary {
    pub rows: usize,
    pub loaded: usize,
    pub blacklisted: usize,
}

/// Known devices sorted ascending by address value; the sorted order is the
/// nearest-neighbor index. Immutable after load.
#[derive(Debug, Clone, Default)]
pub struct DeviceDatabase {
    devices: Vec<KnownDevice>,
}

impl DeviceDatabase {
    /// Loads a `mac,vendor,product[,source]` CSV. MACs in `blacklist` are
    /// dropped at load. The same MAC may repeat only with an identical
    /// vendor+product (kept once); anything else is a conflict.
    pub fn from_csv(
        reader: impl Read,
        blacklist: Option<&BTreeSet<MacAddress>>,
    ) -> Result<(Self, DbLoadSummary), DeviceDbError> {
        let mut csv = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = csv.headers()?.clone();
        let mac_col = find_column(&headers, "mac").ok_or(DeviceDbError::MissingColumn("mac"))?;
        let vendor_col =
            find_column(&headers, "vendor").ok_or(DeviceDbError::MissingColumn("vendor"))?;
        let product_col =
            find_column(&headers, "product").ok_or(DeviceDbError::MissingColumn("product"))?;
        let source_col = find_column(&headers, "source");

        let mut summary = DbLoadSummary::default();
        let mut devices = Vec::new();
        for (index, record) in csv.records().enumerate() {
            let record = record?;
            let row = index + 2;
            summary.rows += 1;
            let mac: MacAddress = record
                .get(mac_col)
                .unwrap_or("")
                .parse()
                .map_err(|source| DeviceDbError::BadMac { row, source })?;
            if blacklist.is_some_and(|b| b.contains(&mac)) {
                summary.blacklisted += 1;
                continue;
            }
            let field = |col: usize, name: &'static str| -> Result<String, DeviceDbError> {
                let value = record.get(col).unwrap_or("").trim();
                if value.is_empty() {
                    Err(DeviceDbError::EmptyField { row, field: name })
                } else {
                    Ok(value.to_string())
                }
            };
            devices.push(KnownDevice {
                mac,
                vendor: field(vendor_col, "vendor")?,
                product: field(product_col, "product")?,
                source: source_col
                    .and_then(|c| record.get(c))
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from),
            });
            summary.loaded += 1;
        }
        let db = DeviceDatabase::from_devices(devices)?;
        summary.loaded = db.len();
        Ok((db, summary))
    }

    /// Sorts, checks the duplicate rule, and drops exact repeats.
    pub fn from_devices(mut devices: Vec<KnownDevice>) -> Result<Self, DeviceDbError> {
        devices.sort_by_key(|d| d.mac);
        let mut deduped: Vec<KnownDevice> = Vec::with_capacity(devices.len());
        for device in devices {
            match deduped.last() {
                Some(last) if last.mac == device.mac => {
                    if last.vendor != device.vendor || last.product != device.product {
                        return Err(DeviceDbError::Conflict {
                            mac: device.mac,
                            existing: format!("{} {}", last.vendor, last.product),
                            duplicate: format!("{} {}", device.vendor, device.product),
                        });
                    }
                }
                _ => deduped.push(device),
            }
        }
        Ok(DeviceDatabase { devices: deduped })
    }

    pub fn devices(&self) -> &[KnownDevice] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// A copy with the given MACs removed (used to hold out validation
    /// devices).
    pub fn without_macs(&self, macs: &BTreeSet<MacAddress>) -> DeviceDatabase {
        DeviceDatabase {
            devices: self
                .devices
                .iter()
                .filter(|d| !macs.contains(&d.mac))
                .cloned()
                .collect(),
        }
    }

    /// The device minimizing the absolute address difference; ties go to the
    /// numerically lower device MAC. Binary search of the insertion point,
    /// then both neighbors are compared.
    pub fn nearest(&self, query: MacAddress) -> Option<(&KnownDevice, MacDistance)> {
        if self.devices.is_empty() {
            return None;
        }
        let idx = self.devices.partition_point(|d| d.mac < query);
        let right = self.devices.get(idx);
        let left = idx.checked_sub(1).and_then(|i| self.devices.get(i));
        let best = match (left, right) {
            (Some(l), Some(r)) => {
                // On equal distance the left neighbor wins: it is the lower MAC.
                if query.distance(r.mac) < query.distance(l.mac) {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("non-empty database"),
        };
        Some((best, query.distance(best.mac)))
    }

    /// Per-MA-L histogram of known devices over the 24-bit device space,
    /// `buckets` equal-width bins. An optional vendor filter keeps devices
    /// sharing at least one name token with it.
    pub fn ma_l_histogram(
        &self,
        buckets: usize,
        vendor_filter: Option<&str>,
    ) -> BTreeMap<OuiPrefix, Vec<u64>> {
        let buckets = buckets.max(1);
        let filter_tokens = vendor_filter.map(crate::vulnmap::normalize);
        let mut histogram: BTreeMap<OuiPrefix, Vec<u64>> = BTreeMap::new();
        for device in &self.devices {
            if let Some(tokens) = &filter_tokens {
                let device_tokens = crate::vulnmap::normalize(&device.vendor);
                if !tokens.iter().any(|t| device_tokens.contains(t)) {
                    continue;
                }
            }
            let low24 = device.mac.value() & 0xFF_FFFF;
            let bucket = ((low24 as u128 * buckets as u128) >> 24) as usize;
            histogram
                .entry(device.mac.prefix(PrefixKind::MaL))
                .or_insert_with(|| vec![0; buckets])[bucket] += 1;
        }
        histogram
    }
}

/// Identification outcome category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// A known device lies within the distance threshold; its product is the
    /// guess (distance zero means the exact device is known).
    ExactOrProductGuess,
    /// No known device within the threshold, but the IEEE registry names the
    /// block holder.
    VendorOnly,
    NoIdentification,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::ExactOrProductGuess => "exact-or-product-guess",
            Category::VendorOnly => "vendor-only",
            Category::NoIdentification => "no-identification",
        }
    }
}

/// Reporting bands over the match distance. The bands are a reporting
/// convention of this tool, not a calibrated confidence measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConfidenceBand {
    Exact,
    High,
    Medium,
    Low,
}

impl ConfidenceBand {
    pub fn label(self) -> &'static str {
        match self {
            ConfidenceBand::Exact => "exact",
            ConfidenceBand::High => "high",
            ConfidenceBand::Medium => "medium",
            ConfidenceBand::Low => "low",
        }
    }
}

/// Band for a distance: 0 exact, <=0xFFF high, <=0xFFFFF medium,
/// <=0xFFFFFF low, beyond that none.
pub fn confidence_band(distance: MacDistance) -> Option<ConfidenceBand> {
    match distance.magnitude() {
        0 => Some(ConfidenceBand::Exact),
        m if m <= 0xFFF => Some(ConfidenceBand::High),
        m if m <= 0xF_FFFF => Some(ConfidenceBand::Medium),
        m if m <= 0xFF_FFFF => Some(ConfidenceBand::Low),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub query: MacAddress,
    /// Nearest known device, kept even beyond the threshold for reporting.
    pub matched: Option<KnownDevice>,
    pub distance: Option<MacDistance>,
    pub registry_vendor: Option<String>,
    pub registry_kind: Option<PrefixKind>,
    pub category: Category,
    pub band: Option<ConfidenceBand>,
}

/// Applies the threshold rule: a neighbor within `threshold` yields a product
/// guess; otherwise a registry hit yields the vendor; otherwise nothing.
pub fn categorize(
    query: MacAddress,
    nearest: Option<(&KnownDevice, MacDistance)>,
    registry: &Registry,
    threshold: MacDistance,
) -> IdentificationResult {
    let (registry_vendor, registry_kind) = match registry.lookup_vendor(query) {
        Some((org, kind)) => (Some(org.to_string()), Some(kind)),
        None => (None, None),
    };
    let category = match nearest {
        Some((_, distance)) if distance <= threshold => Category::ExactOrProductGuess,
        _ if registry_vendor.is_some() => Category::VendorOnly,
        _ => Category::NoIdentification,
    };
    IdentificationResult {
        query,
        matched: nearest.map(|(device, _)| device.clone()),
        distance: nearest.map(|(_, distance)| distance),
        band: nearest.and_then(|(_, distance)| confidence_band(distance)),
        registry_vendor,
        registry_kind,
        category,
    }
}

/// One result per distinct MAC, ascending by address value.
pub fn identify_all(
    db: &DeviceDatabase,
    registry: &Registry,
    macs: &BTreeSet<MacAddress>,
    threshold: MacDistance,
) -> Vec<IdentificationResult> {
    macs.iter()
        .map(|&mac| categorize(mac, db.nearest(mac), registry, threshold))
        .collect()
}

/// Loads a blacklist file: one MAC per line, blank lines and `#` comments
/// ignored.
pub fn load_blacklist(reader: impl Read) -> Result<BTreeSet<MacAddress>, DeviceDbError> {
    let mut macs = BTreeSet::new();
    for (index, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mac = line
            .parse()
            .map_err(|source| DeviceDbError::BadMac {
                row: index + 1,
                source,
            })?;
        macs.insert(mac);
    }
    Ok(macs)
}

/// Ground-truth row for evaluation runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthRow {
    pub mac: MacAddress,
    pub vendor: String,
    pub product: String,
}

/// Loads a `mac,vendor,product` CSV; extra columns are ignored.
pub fn load_truth(reader: impl Read) -> Result<Vec<TruthRow>, DeviceDbError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let mac_col = find_column(&headers, "mac").ok_or(DeviceDbError::MissingColumn("mac"))?;
    let vendor_col =
        find_column(&headers, "vendor").ok_or(DeviceDbError::MissingColumn("vendor"))?;
    let product_col =
        find_column(&headers, "product").ok_or(DeviceDbError::MissingColumn("product"))?;
    let mut rows = Vec::new();
    for (index, record) in csv.records().enumerate() {
        let record = record?;
        let row = index + 2;
        rows.push(TruthRow {
            mac: record
                .get(mac_col)
                .unwrap_or("")
                .parse()
                .map_err(|source| DeviceDbError::BadMac { row, source })?,
            vendor: record.get(vendor_col).unwrap_or("").to_string(),
            product: record.get(product_col).unwrap_or("").to_string(),
        });
    }
    Ok(rows)
}
