//! IEEE registry snapshots: loads the MA-L / MA-M / MA-S assignment files and
//! resolves a MAC address to its registered organization with longest-prefix
//! precedence.

use std::collections::BTreeMap;
use std::io::Read;

use thiserror::Error;

use crate::csvutil::{find_column, find_column_containing};
use crate::mac::{MacAddress, OuiPrefix, PrefixError, PrefixKind};

/// One assignment row: a block prefix and the organization holding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub prefix: OuiPrefix,
    pub organization: String,
}

impl RegistryEntry {
    pub fn kind(&self) -> PrefixKind {
        self.prefix.kind()
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing {0} column in header row")]
    MissingColumn(&'static str),
    #[error("row {row}: {source}")]
    BadPrefix {
        row: usize,
        #[source]
        source: PrefixError,
    },
    #[error("row {row}: empty organization name")]
    EmptyOrganization { row: usize },
    #[error("duplicate {kind} prefix {prefix}")]
    DuplicatePrefix { kind: PrefixKind, prefix: String },
}

/// Result of loading one snapshot file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegistryLoadSummary {
    pub kind: PrefixKind,
    pub rows: usize,
}

/// Immutable after load; concurrent lookups are safe.
#[derive(Debug, Default, Clone)]
pub struct Registry {
    entries: BTreeMap<OuiPrefix, RegistryEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// Loads one comma-separated snapshot. The header row must name an
    /// assignment column (hex prefix, no separators) and an organization-name
    /// column; quoted fields are allowed.
    pub fn load(
        &mut self,
        kind: PrefixKind,
        reader: impl Read,
    ) -> Result<RegistryLoadSummary, RegistryError> {
        let mut csv = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = csv.headers()?.clone();
        let assignment = find_column(&headers, "assignment")
            .or_else(|| find_column_containing(&headers, "assignment"))
            .ok_or(RegistryError::MissingColumn("assignment"))?;
        let organization = find_column(&headers, "organization name")
            .or_else(|| find_column_containing(&headers, "organization"))
            .ok_or(RegistryError::MissingColumn("organization name"))?;

        let mut rows = 0;
        for (index, record) in csv.records().enumerate() {
            let record = record?;
            let row = index + 2; // 1-based, after the header
            let prefix_text = record.get(assignment).unwrap_or("");
            let prefix = OuiPrefix::parse(kind, prefix_text)
                .map_err(|source| RegistryError::BadPrefix { row, source })?;
            let organization = record.get(organization).unwrap_or("").trim();
            if organization.is_empty() {
                return Err(RegistryError::EmptyOrganization { row });
            }
            self.insert(RegistryEntry {
                prefix,
                organization: organization.to_string(),
            })?;
            rows += 1;
        }
        Ok(RegistryLoadSummary { kind, rows })
    }

    pub fn insert(&mut self, entry: RegistryEntry) -> Result<(), RegistryError> {
        if self.entries.contains_key(&entry.prefix) {
            return Err(RegistryError::DuplicatePrefix {
                kind: entry.kind(),
                prefix: entry.prefix.to_string(),
            });
        }
        self.entries.insert(entry.prefix, entry);
        Ok(())
    }

    /// The registered organization for `m`, preferring the longest matching
    /// prefix (MA-S over MA-M over MA-L). CID entries never match. Absence is
    /// a value, not an error.
    pub fn lookup_vendor(&self, m: MacAddress) -> Option<(&str, PrefixKind)> {
        for kind in [PrefixKind::MaS, PrefixKind::MaM, PrefixKind::MaL] {
            if let Some(entry) = self.entries.get(&m.prefix(kind)) {
                return Some((entry.organization.as_str(), kind));
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: PrefixKind) -> usize {
        self.entries.keys().filter(|p| p.kind() == kind).count()
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }
}

/// Loads several snapshot files into one registry.
pub fn load_registry<R: Read>(
    files: impl IntoIterator<Item = (PrefixKind, R)>,
) -> Result<Registry, RegistryError> {
    let mut registry = Registry::new();
    for (kind, reader) in files {
        registry.load(kind, reader)?;
    }
    Ok(registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    const HEADER: &str = "Registry,Assignment,Organization Name,Organization Address\n";

    #[test]
    fn loads_a_basic_row() {
        let mut registry = Registry::new();
        let summary = registry
            .load(
                PrefixKind::MaL,
                format!("{HEADER}MA-L,ACDE48, Example Corp ,Somewhere\n").as_bytes(),
            )
            .unwrap();
        assert_eq!(summary.rows, 1);
        let entry = registry.entries().next().unwrap();
        assert_eq!(entry.kind(), PrefixKind::MaL);
        assert_eq!(entry.prefix.bits(), 0xACDE48);
        assert_eq!(entry.organization, "Example Corp");
    }

    #[test]
    fn header_only_file_yields_empty_registry() {
        let mut registry = Registry::new();
        let summary = registry.load(PrefixKind::MaL, HEADER.as_bytes()).unwrap();
        assert_eq!(summary.rows, 0);
        assert!(registry.is_empty());
    }

    #[test]
    fn duplicate_prefix_is_rejected_with_the_collision() {
        let mut registry = Registry::new();
        let data = format!("{HEADER}MA-L,ACDE48,First,\nMA-L,ACDE48,Second,\n");
        let err = registry.load(PrefixKind::MaL, data.as_bytes()).unwrap_err();
        match err {
            RegistryError::DuplicatePrefix { kind, prefix } => {
                assert_eq!(kind, PrefixKind::MaL);
                assert_eq!(prefix, "ACDE48");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn wrong_width_and_missing_columns_are_errors() {
        let mut registry = Registry::new();
        let err = registry
            .load(PrefixKind::MaM, format!("{HEADER}MA-M,ACDE48,Org,\n").as_bytes())
            .unwrap_err();
        assert!(matches!(err, RegistryError::BadPrefix { row: 2, .. }));

        let err = registry
            .load(PrefixKind::MaL, "Prefix,Vendor\nACDE48,Org\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, RegistryError::MissingColumn("assignment")));

        let err = registry
            .load(PrefixKind::MaL, format!("{HEADER}MA-L,ACDE48,,\n").as_bytes())
            .unwrap_err();
        assert!(matches!(err, RegistryError::EmptyOrganization { row: 2 }));
    }

    #[test]
    fn quoted_fields_with_commas_parse() {
        let mut registry = Registry::new();
        let data = format!("{HEADER}MA-L,0090E8,\"MOXA TECHNOLOGIES CO., LTD.\",\"Fl.4, Taipei\"\n");
        registry.load(PrefixKind::MaL, data.as_bytes()).unwrap();
        assert_eq!(
            registry.lookup_vendor(mac("00:90:E8:2A:E5:34")),
            Some(("MOXA TECHNOLOGIES CO., LTD.", PrefixKind::MaL))
        );
    }

    #[test]
    fn longest_prefix_wins() {
        let mut registry = Registry::new();
        registry
            .insert(RegistryEntry {
                prefix: OuiPrefix::parse(PrefixKind::MaL, "ACDE48").unwrap(),
                organization: "Big".into(),
            })
            .unwrap();
        registry
            .insert(RegistryEntry {
                prefix: OuiPrefix::parse(PrefixKind::MaS, "ACDE48127").unwrap(),
                organization: "Small".into(),
            })
            .unwrap();

        assert_eq!(
            registry.lookup_vendor(mac("AC:DE:48:12:7B:80")),
            Some(("Small", PrefixKind::MaS))
        );
        assert_eq!(
            registry.lookup_vendor(mac("AC:DE:48:FF:00:01")),
            Some(("Big", PrefixKind::MaL))
        );
        assert_eq!(Registry::new().lookup_vendor(mac("AC:DE:48:12:7B:80")), None);
    }

    #[test]
    fn cid_entries_are_stored_but_never_match() {
        let mut registry = Registry::new();
        registry
            .insert(RegistryEntry {
                prefix: OuiPrefix::parse(PrefixKind::Cid, "ACDE48").unwrap(),
                organization: "CidHolder".into(),
            })
            .unwrap();
        assert_eq!(registry.count(PrefixKind::Cid), 1);
        assert_eq!(registry.lookup_vendor(mac("AC:DE:48:12:7B:80")), None);
    }

    /// Brute force: scan every entry, keep matches, pick the widest prefix.
    fn lookup_oracle(registry: &Registry, m: MacAddress) -> Option<(&str, PrefixKind)> {
        registry
            .entries()
            .filter(|e| e.kind() != PrefixKind::Cid && e.prefix.matches(m))
            .max_by_key(|e| e.kind().width())
            .map(|e| (e.organization.as_str(), e.kind()))
    }

    #[test]
    fn randomized_nested_prefixes_match_brute_force() {
        let mut rng = StdRng::seed_from_u64(0x1EEE);
        for _ in 0..200 {
            let mut registry = Registry::new();
            let base: u64 = rng.gen_range(0..1 << 24);
            // Nested fixtures: an MA-L block plus MA-M/MA-S blocks inside it,
            // plus unrelated blocks elsewhere.
            let _ = registry.insert(RegistryEntry {
                prefix: OuiPrefix::new(PrefixKind::MaL, base).unwrap(),
                organization: "L".into(),
            });
            for i in 0..rng.gen_range(0..4u64) {
                let _ = registry.insert(RegistryEntry {
                    prefix: OuiPrefix::new(PrefixKind::MaM, (base << 4) | (i * 3 % 16)).unwrap(),
                    organization: format!("M{i}"),
                });
            }
            for i in 0..rng.gen_range(0..4u64) {
                let _ = registry.insert(RegistryEntry {
                    prefix: OuiPrefix::new(PrefixKind::MaS, (base << 12) | (i * 571 % 4096))
                        .unwrap(),
                    organization: format!("S{i}"),
                });
            }
            let _ = registry.insert(RegistryEntry {
                prefix: OuiPrefix::new(PrefixKind::MaL, rng.gen_range(0..1 << 24)).unwrap(),
                organization: "Other".into(),
            });

            for _ in 0..100 {
                let query = if rng.gen_bool(0.7) {
                    // Bias queries into the nested block.
                    MacAddress::new((base << 24) | rng.gen_range(0..1u64 << 24)).unwrap()
                } else {
                    MacAddress::new(rng.gen_range(0..=MacAddress::MAX_VALUE)).unwrap()
                };
                assert_eq!(
                    registry.lookup_vendor(query),
                    lookup_oracle(&registry, query),
                    "query {query}"
                );
            }
        }
    }

    #[test]
    fn every_entry_resolves_at_its_own_base_address() {
        // Non-overlapping blocks: each entry must come back at its base.
        let mut registry = Registry::new();
        let specs = [
            (PrefixKind::MaL, 0x00AA11u64),
            (PrefixKind::MaM, 0x00BB223u64),
            (PrefixKind::MaS, 0x00CC33445u64),
        ];
        for (kind, bits) in specs {
            registry
                .insert(RegistryEntry {
                    prefix: OuiPrefix::new(kind, bits).unwrap(),
                    organization: format!("{kind}"),
                })
                .unwrap();
        }
        for entry in Registry::clone(&registry).entries() {
            let found = registry.lookup_vendor(entry.prefix.base_address());
            assert_eq!(found, Some((entry.organization.as_str(), entry.kind())));
        }
    }
}
