//! Small shared helpers for the CSV loaders.

use csv::StringRecord;

/// Index of the first header whose trimmed name equals `name`
/// (ASCII case-insensitive).
pub(crate) fn find_column(headers: &StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Index of the first header containing `fragment` (ASCII case-insensitive);
/// used for files whose exact header wording varies between snapshots.
pub(crate) fn find_column_containing(headers: &StringRecord, fragment: &str) -> Option<usize> {
    let fragment = fragment.to_ascii_lowercase();
    headers
        .iter()
        .position(|h| h.trim().to_ascii_lowercase().contains(&fragment))
}
