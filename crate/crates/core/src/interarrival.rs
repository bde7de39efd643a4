//! Per-device interarrival statistics and the network discovery-coverage
//! time: the longest gap any device leaves between two of its packets bounds
//! how long a passive observer must wait to see every host.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::capture::{Observation, Timestamp};
use crate::mac::MacAddress;

/// The ascending arrival timestamps of one device. Ties are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalSeries {
    mac: MacAddress,
    timestamps: Vec<Timestamp>,
}

impl ArrivalSeries {
    /// Builds a series from raw timestamps; sorting is stable, so same-instant
    /// packets keep their input order.
    pub fn from_timestamps(mac: MacAddress, mut timestamps: Vec<Timestamp>) -> Self {
        timestamps.sort();
        ArrivalSeries { mac, timestamps }
    }

    pub fn mac(&self) -> MacAddress {
        self.mac
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Consecutive gaps in exact nanoseconds; empty below two timestamps.
    pub fn gap_nanos(&self) -> Vec<u64> {
        self.timestamps
            .windows(2)
            .map(|w| w[1].nanos() - w[0].nanos())
            .collect()
    }
}

/// Consecutive arrival differences in seconds; empty when the series has
/// fewer than two timestamps.
pub fn arrival_gaps(series: &ArrivalSeries) -> Vec<f64> {
    series.gap_nanos().iter().map(|&n| n as f64 / 1e9).collect()
}

/// Groups observations by MAC with timestamps sorted ascending.
pub fn build_series(
    observations: impl IntoIterator<Item = Observation>,
) -> BTreeMap<MacAddress, ArrivalSeries> {
    let mut grouped: BTreeMap<MacAddress, Vec<Timestamp>> = BTreeMap::new();
    for obs in observations {
        grouped.entry(obs.mac).or_default().push(obs.timestamp);
    }
    grouped
        .into_iter()
        .map(|(mac, timestamps)| (mac, ArrivalSeries::from_timestamps(mac, timestamps)))
        .collect()
}

/// Mean and maximum interarrival gap of one device. Both are undefined
/// (absent) below two observations; such devices still count as discovered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalStats {
    pub mac: MacAddress,
    pub packet_count: usize,
    pub gap_count: usize,
    pub sum_gap_nanos: u64,
    pub max_gap_nanos: Option<u64>,
    pub mean_secs: Option<f64>,
    pub max_secs: Option<f64>,
}

pub fn stats(series: &ArrivalSeries) -> ArrivalStats {
    let gaps = series.gap_nanos();
    let sum: u64 = gaps.iter().sum();
    let max = gaps.iter().copied().max();
    ArrivalStats {
        mac: series.mac(),
        packet_count: series.len(),
        gap_count: gaps.len(),
        sum_gap_nanos: sum,
        max_gap_nanos: max,
        mean_secs: if gaps.is_empty() {
            None
        } else {
            Some(sum as f64 / gaps.len() as f64 / 1e9)
        },
        max_secs: max.map(|n| n as f64 / 1e9),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageEstimate {
    pub coverage_secs: f64,
    pub coverage_nanos: u64,
    pub limiting_mac: MacAddress,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoverageError {
    #[error("no device has two or more observations; coverage time is undefined")]
    Undefined,
}

/// The maximum of all defined per-device maximum gaps; the limiting device
/// attains it, ties broken by the lowest MAC value.
pub fn coverage<'a>(
    all: impl IntoIterator<Item = &'a ArrivalStats>,
) -> Result<CoverageEstimate, CoverageError> {
    let mut best: Option<(u64, MacAddress)> = None;
    for stats in all {
        let Some(max) = stats.max_gap_nanos else {
            continue;
        };
        best = match best {
            None => Some((max, stats.mac)),
            Some((b, mac)) if max > b || (max == b && stats.mac < mac) => Some((max, stats.mac)),
            keep => keep,
        };
    }
    let (nanos, limiting_mac) = best.ok_or(CoverageError::Undefined)?;
    Ok(CoverageEstimate {
        coverage_secs: nanos as f64 / 1e9,
        coverage_nanos: nanos,
        limiting_mac,
    })
}

/// Five-number summary of a device's gaps (seconds), quartiles computed by
/// linear interpolation between closest ranks.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quartiles(series: &ArrivalSeries) -> Option<Quartiles> {
    let mut gaps = arrival_gaps(series);
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).expect("gaps are finite"));
    let at = |p: f64| -> f64 {
        let h = (gaps.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        gaps[lo] + (h - lo as f64) * (gaps[hi] - gaps[lo])
    };
    Some(Quartiles {
        min: gaps[0],
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
        max: gaps[gaps.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::ObservationRole;
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    fn mac(v: u64) -> MacAddress {
        MacAddress::new(v).unwrap()
    }

    fn obs(mac_value: u64, secs: u64) -> Observation {
        Observation {
            mac: mac(mac_value),
            ip: Ipv4Addr::new(10, 0, 0, 1),
            timestamp: Timestamp::from_parts(secs, 0),
            role: ObservationRole::ArpSender,
        }
    }

    fn series(mac_value: u64, secs: &[u64]) -> ArrivalSeries {
        ArrivalSeries::from_timestamps(
            mac(mac_value),
            secs.iter().map(|&s| Timestamp::from_parts(s, 0)).collect(),
        )
    }

    #[test]
    fn build_series_groups_and_sorts() {
        let grouped = build_series([obs(0xA, 0), obs(0xB, 5), obs(0xA, 10)]);
        assert_eq!(grouped.len(), 2);
        assert_eq!(
            grouped[&mac(0xA)].timestamps(),
            &[Timestamp::from_parts(0, 0), Timestamp::from_parts(10, 0)]
        );
        assert_eq!(grouped[&mac(0xB)].len(), 1);

        assert!(build_series([]).is_empty());

        let out_of_order = build_series([obs(0xA, 10), obs(0xA, 0)]);
        assert_eq!(
            out_of_order[&mac(0xA)].timestamps(),
            &[Timestamp::from_parts(0, 0), Timestamp::from_parts(10, 0)]
        );
    }

    #[test]
    fn gaps_are_consecutive_differences() {
        assert_eq!(arrival_gaps(&series(1, &[0, 10, 30])), vec![10.0, 20.0]);
        assert!(arrival_gaps(&series(1, &[7])).is_empty());
        assert_eq!(arrival_gaps(&series(1, &[0, 0, 5])), vec![0.0, 5.0]);
    }

    #[test]
    fn stats_mean_and_max() {
        let s = stats(&series(1, &[0, 10, 30]));
        assert_eq!(s.mean_secs, Some(15.0));
        assert_eq!(s.max_secs, Some(20.0));
        assert_eq!(s.gap_count, 2);
        assert_eq!(s.packet_count, 3);

        let s = stats(&series(1, &[0, 60]));
        assert_eq!(s.mean_secs, Some(60.0));
        assert_eq!(s.max_secs, Some(60.0));

        let s = stats(&series(1, &[42]));
        assert_eq!(s.mean_secs, None);
        assert_eq!(s.max_secs, None);
        assert_eq!(s.gap_count, 0);
        assert_eq!(s.packet_count, 1);
    }

    #[test]
    fn coverage_takes_the_worst_device() {
        let a = stats(&series(0xA, &[0, 10, 30]));
        let b = stats(&series(0xB, &[0, 55]));
        let estimate = coverage([&a, &b]).unwrap();
        assert_eq!(estimate.coverage_secs, 55.0);
        assert_eq!(estimate.limiting_mac, mac(0xB));

        let single = stats(&series(0xC, &[0, 60]));
        assert_eq!(coverage([&single]).unwrap().coverage_secs, 60.0);

        let undefined = stats(&series(0xD, &[9]));
        assert_eq!(coverage([&undefined]).unwrap_err(), CoverageError::Undefined);
    }

    #[test]
    fn coverage_ties_break_to_the_lowest_mac() {
        let hi = stats(&series(0xBB, &[0, 20]));
        let lo = stats(&series(0xAA, &[5, 25]));
        let estimate = coverage([&hi, &lo]).unwrap();
        assert_eq!(estimate.limiting_mac, mac(0xAA));
    }

    #[test]
    fn quartiles_by_linear_interpolation() {
        // gaps 10,20,30,40 -> h = 3p: q1 at 0.75, median at 1.5, q3 at 2.25
        let q = quartiles(&series(1, &[0, 10, 30, 60, 100])).unwrap();
        assert_eq!(q.min, 10.0);
        assert_eq!(q.q1, 17.5);
        assert_eq!(q.median, 25.0);
        assert_eq!(q.q3, 32.5);
        assert_eq!(q.max, 40.0);

        assert!(quartiles(&series(1, &[5])).is_none());
    }

    proptest! {
        #[test]
        fn telescoping_sum_is_exact(secs in proptest::collection::vec(0u64..100_000, 2..50)) {
            let s = series(1, &secs);
            let sum: u64 = s.gap_nanos().iter().sum();
            let first = s.timestamps().first().unwrap().nanos();
            let last = s.timestamps().last().unwrap().nanos();
            prop_assert_eq!(sum, last - first);
        }

        #[test]
        fn mean_times_count_matches_sum(secs in proptest::collection::vec(0u64..100_000, 2..50)) {
            let st = stats(&series(1, &secs));
            let lhs = st.mean_secs.unwrap() * st.gap_count as f64;
            let rhs = st.sum_gap_nanos as f64 / 1e9;
            let tolerance = 1e-9 * rhs.max(1.0);
            prop_assert!((lhs - rhs).abs() <= tolerance, "{lhs} vs {rhs}");
        }

        #[test]
        fn coverage_is_permutation_invariant(
            raw in proptest::collection::vec((0u64..4, 0u64..10_000), 2..60),
            seed in 0u64..1000,
        ) {
            prop_assume!(raw.windows(2).any(|w| w[0].0 == w[1].0) || raw.len() >= 2);
            let observations: Vec<Observation> =
                raw.iter().map(|&(m, t)| obs(m + 1, t)).collect();
            let baseline = {
                let series = build_series(observations.clone());
                let stats: Vec<ArrivalStats> = series.values().map(stats).collect();
                coverage(stats.iter())
            };
            let mut shuffled = observations;
            // Cheap deterministic shuffle.
            let n = shuffled.len();
            for i in 0..n {
                let j = ((seed as usize).wrapping_mul(31).wrapping_add(i * 17)) % n;
                shuffled.swap(i, j);
            }
            let permuted = {
                let series = build_series(shuffled);
                let stats: Vec<ArrivalStats> = series.values().map(stats).collect();
                coverage(stats.iter())
            };
            match (baseline, permuted) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.coverage_nanos, b.coverage_nanos);
                    prop_assert_eq!(a.limiting_mac, b.limiting_mac);
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "diverged: {:?} vs {:?}", a, b),
            }
        }
    }
}
