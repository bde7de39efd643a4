//! Explicit snapshot refresh. Analysis runs are network-free; this module is
//! only reached through the dedicated fetch command. Fetched files are
//! validated with the matching loader before they replace anything on disk.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::mac::PrefixKind;
use crate::registry::Registry;
use crate::vulnmap::VulnStore;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported source {0:?} (this build fetches file paths and file:// URLs only)")]
    UnsupportedSource(String),
    #[error("fetched data failed validation: {0}")]
    Validation(String),
    #[cfg(feature = "fetch-http")]
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
}

/// A pluggable byte fetcher; the analysis pipeline never calls one.
pub trait Fetcher {
    fn fetch(&self, source: &str) -> Result<Vec<u8>, FetchError>;
}

/// Reads plain paths and file:// URLs. The default in builds without HTTP
/// support, and handy for hermetic tests.
pub struct FileFetcher;

impl Fetcher for FileFetcher {
    fn fetch(&self, source: &str) -> Result<Vec<u8>, FetchError> {
        if let Some(rest) = source.strip_prefix("file://") {
            return Ok(fs::read(rest)?);
        }
        if source.contains("://") {
            return Err(FetchError::UnsupportedSource(source.to_string()));
        }
        Ok(fs::read(source)?)
    }
}

#[cfg(feature = "fetch-http")]
pub struct HttpFetcher;

#[cfg(feature = "fetch-http")]
impl Fetcher for HttpFetcher {
    fn fetch(&self, source: &str) -> Result<Vec<u8>, FetchError> {
        if source.starts_with("http://") || source.starts_with("https://") {
            let response = reqwest::blocking::get(source)?.error_for_status()?;
            return Ok(response.bytes()?.to_vec());
        }
        FileFetcher.fetch(source)
    }
}

/// The fetcher this build uses by default.
pub fn default_fetcher() -> Box<dyn Fetcher> {
    #[cfg(feature = "fetch-http")]
    {
        Box::new(HttpFetcher)
    }
    #[cfg(not(feature = "fetch-http"))]
    {
        Box::new(FileFetcher)
    }
}

/// What a fetched snapshot claims to be; selects its validator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    RegistryMal,
    RegistryMam,
    RegistryMas,
    Cve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshSummary {
    pub bytes: usize,
    /// Rows (registry) or records (CVE) accepted by the validator.
    pub rows: usize,
}

/// Fetches, validates, and atomically installs one snapshot file.
pub fn refresh_snapshot(
    fetcher: &dyn Fetcher,
    source: &str,
    kind: SnapshotKind,
    dest: &Path,
) -> Result<RefreshSummary, FetchError> {
    let bytes = fetcher.fetch(source)?;
    let rows = validate(kind, &bytes)?;
    let tmp = dest.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, dest)?;
    Ok(RefreshSummary {
        bytes: bytes.len(),
        rows,
    })
}

fn validate(kind: SnapshotKind, bytes: &[u8]) -> Result<usize, FetchError> {
    match kind {
        SnapshotKind::RegistryMal | SnapshotKind::RegistryMam | SnapshotKind::RegistryMas => {
            let prefix_kind = match kind {
                SnapshotKind::RegistryMal => PrefixKind::MaL,
                SnapshotKind::RegistryMam => PrefixKind::MaM,
                _ => PrefixKind::MaS,
            };
            let mut registry = Registry::new();
            let summary = registry
                .load(prefix_kind, bytes)
                .map_err(|e| FetchError::Validation(e.to_string()))?;
            Ok(summary.rows)
        }
        SnapshotKind::Cve => {
            let (store, report) =
                VulnStore::from_ndjson(bytes).map_err(|e| FetchError::Validation(e.to_string()))?;
            if store.is_empty() && !report.skipped.is_empty() {
                return Err(FetchError::Validation(format!(
                    "no valid records; first problem at line {}: {}",
                    report.skipped[0].0, report.skipped[0].1
                )));
            }
            Ok(report.loaded)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_fetcher_reads_paths_and_file_urls() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("registry.csv");
        fs::write(&src, "Registry,Assignment,Organization Name\nMA-L,ACDE48,Example\n").unwrap();

        let plain = FileFetcher.fetch(src.to_str().unwrap()).unwrap();
        let url = FileFetcher
            .fetch(&format!("file://{}", src.display()))
            .unwrap();
        assert_eq!(plain, url);

        let err = FileFetcher.fetch("ftp://example/oui.csv").unwrap_err();
        assert!(matches!(err, FetchError::UnsupportedSource(_)));
    }

    #[test]
    fn refresh_validates_before_install() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("good.csv");
        fs::write(&src, "Registry,Assignment,Organization Name\nMA-L,ACDE48,Example\n").unwrap();
        let dest = dir.path().join("installed.csv");

        let summary = refresh_snapshot(
            &FileFetcher,
            src.to_str().unwrap(),
            SnapshotKind::RegistryMal,
            &dest,
        )
        .unwrap();
        assert_eq!(summary.rows, 1);
        assert!(dest.exists());

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "NoAssignmentHeader,x\nfoo,bar\n").unwrap();
        let dest2 = dir.path().join("never.csv");
        let err = refresh_snapshot(
            &FileFetcher,
            bad.to_str().unwrap(),
            SnapshotKind::RegistryMal,
            &dest2,
        )
        .unwrap_err();
        assert!(matches!(err, FetchError::Validation(_)));
        assert!(!dest2.exists());
    }

    #[test]
    fn cve_snapshot_validation() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("cve.ndjson");
        fs::write(
            &src,
            r#"{"cve_id":"CVE-2021-0001","vendor":"X","product":"Y","summary":"s","cvss":5.0}"#,
        )
        .unwrap();
        let dest = dir.path().join("cve-installed.ndjson");
        let summary =
            refresh_snapshot(&FileFetcher, src.to_str().unwrap(), SnapshotKind::Cve, &dest)
                .unwrap();
        assert_eq!(summary.rows, 1);

        let garbage = dir.path().join("garbage.ndjson");
        fs::write(&garbage, "not json\n").unwrap();
        let err = refresh_snapshot(
            &FileFetcher,
            garbage.to_str().unwrap(),
            SnapshotKind::Cve,
            &dest,
        )
        .unwrap_err();
        assert!(matches!(err, FetchError::Validation(_)));
    }
}
