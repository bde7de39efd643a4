//! Capture ingestion: classic pcap and pcap-ng containers, Ethernet/ARP
//! dissection, and extraction of timestamped MAC observations from broadcast
//! ARP traffic. The capture path is strictly receive-only.

mod reader;

#[cfg(feature = "live")]
mod live;

pub use reader::{open_capture, CaptureReader};

#[cfg(feature = "live")]
pub use live::LiveSource;

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::Serialize;
use thiserror::Error;

use crate::mac::MacAddress;

pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const ETHERTYPE_VLAN: u16 = 0x8100;

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unrecognized capture magic {0:#010x}")]
    BadMagic(u32),
    #[error("truncated capture: {context} at offset {offset}")]
    Truncated { offset: u64, context: &'static str },
    #[error("unsupported link type {linktype}; only Ethernet captures are accepted")]
    UnsupportedLinkType { linktype: u32 },
    #[error("bad {block} block at offset {offset}: {reason}")]
    BadBlock {
        offset: u64,
        block: &'static str,
        reason: String,
    },
    #[cfg(feature = "live")]
    #[error("live capture on {interface}: {reason}")]
    Live { interface: String, reason: String },
}

/// A capture timestamp in integer nanoseconds since the epoch. Integer
/// arithmetic keeps interarrival gaps and their sums exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const fn from_nanos(nanos: u64) -> Self {
        Timestamp(nanos)
    }

    pub const fn from_parts(secs: u64, nanos: u32) -> Self {
        Timestamp(secs * 1_000_000_000 + nanos as u64)
    }

    pub const fn nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkType {
    Ethernet,
}

/// One captured frame with its original capture timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    pub timestamp: Timestamp,
    pub bytes: Vec<u8>,
    pub link: LinkType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArpOpcode {
    Request,
    Reply,
    Other(u16),
}

impl From<u16> for ArpOpcode {
    fn from(code: u16) -> Self {
        match code {
            1 => ArpOpcode::Request,
            2 => ArpOpcode::Reply,
            other => ArpOpcode::Other(other),
        }
    }
}

/// A well-formed Ethernet/IPv4 ARP packet (RFC 826 fields) plus the Ethernet
/// destination of the carrying frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArpPacket {
    pub hardware_type: u16,
    pub protocol_type: u16,
    pub opcode: ArpOpcode,
    pub sender_mac: MacAddress,
    pub sender_ip: Ipv4Addr,
    pub target_mac: MacAddress,
    pub target_ip: Ipv4Addr,
    pub frame_destination: MacAddress,
}

impl ArpPacket {
    /// Sender announcing its own address (sender IP == target IP).
    pub fn is_gratuitous(&self) -> bool {
        self.sender_ip == self.target_ip
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationRole {
    ArpSender,
}

/// A timestamped sighting of an active individual MAC address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub mac: MacAddress,
    pub ip: Ipv4Addr,
    pub timestamp: Timestamp,
    pub role: ObservationRole,
}

/// Selects which ARP packets yield observations. The default takes the
/// sender of every packet whose frame destination is broadcast or whose
/// opcode is a request; unicast replies are opt-in since they may be
/// invisible at a non-mirror port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ObservationPolicy {
    pub include_unicast_replies: bool,
}

impl ObservationPolicy {
    fn qualifies(&self, arp: &ArpPacket) -> bool {
        arp.frame_destination.is_broadcast()
            || arp.opcode == ArpOpcode::Request
            || (self.include_unicast_replies && arp.opcode == ArpOpcode::Reply)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CaptureStats {
    pub total_packets: u64,
    /// Frames whose (single-VLAN-unwrapped) EtherType is 0x0806, including
    /// malformed bodies.
    pub arp_packets: u64,
    pub observations: u64,
    pub malformed_arp: u64,
    pub distinct_macs: u64,
}

impl CaptureStats {
    pub fn arp_fraction(&self) -> f64 {
        if self.total_packets == 0 {
            0.0
        } else {
            self.arp_packets as f64 / self.total_packets as f64
        }
    }
}

pub(crate) enum Dissection {
    NotArp,
    MalformedArp,
    Arp(ArpPacket),
}

/// Dissects an Ethernet frame. A single 802.1Q tag is unwrapped. Frames whose
/// EtherType is not ARP yield `NotArp`; ARP EtherType with an unusable body
/// (truncated, or not Ethernet/IPv4 address sizes) yields `MalformedArp`.
pub(crate) fn dissect_frame(bytes: &[u8]) -> Dissection {
    if bytes.len() < 14 {
        return Dissection::NotArp;
    }
    let mut ethertype = u16::from_be_bytes([bytes[12], bytes[13]]);
    let mut body_start = 14;
    if ethertype == ETHERTYPE_VLAN {
        if bytes.len() < 18 {
            return Dissection::NotArp;
        }
        ethertype = u16::from_be_bytes([bytes[16], bytes[17]]);
        body_start = 18;
    }
    if ethertype != ETHERTYPE_ARP {
        return Dissection::NotArp;
    }
    let body = &bytes[body_start..];
    if body.len() < 28 {
        return Dissection::MalformedArp;
    }
    let hardware_type = u16::from_be_bytes([body[0], body[1]]);
    let protocol_type = u16::from_be_bytes([body[2], body[3]]);
    let hardware_len = body[4];
    let protocol_len = body[5];
    if hardware_type != 1 || protocol_type != 0x0800 || hardware_len != 6 || protocol_len != 4 {
        return Dissection::MalformedArp;
    }
    let opcode = ArpOpcode::from(u16::from_be_bytes([body[6], body[7]]));
    let mac_at = |s: &[u8]| MacAddress::from_octets([s[0], s[1], s[2], s[3], s[4], s[5]]);
    Dissection::Arp(ArpPacket {
        hardware_type,
        protocol_type,
        opcode,
        sender_mac: mac_at(&body[8..14]),
        sender_ip: Ipv4Addr::new(body[14], body[15], body[16], body[17]),
        target_mac: mac_at(&body[18..24]),
        target_ip: Ipv4Addr::new(body[24], body[25], body[26], body[27]),
        frame_destination: mac_at(&bytes[0..6]),
    })
}

/// Returns the ARP packet carried by `packet`, or `None` when the frame is
/// not well-formed Ethernet/IPv4 ARP.
pub fn parse_arp(packet: &RawPacket) -> Option<ArpPacket> {
    match dissect_frame(&packet.bytes) {
        Dissection::Arp(arp) => Some(arp),
        _ => None,
    }
}

/// Runs every packet through ARP extraction under `policy`. Group-addressed
/// senders never yield observations. Read errors from the underlying source
/// are propagated.
pub fn observe<I>(
    packets: I,
    policy: ObservationPolicy,
) -> Result<(Vec<Observation>, CaptureStats), CaptureError>
where
    I: IntoIterator<Item = Result<RawPacket, CaptureError>>,
{
    let mut observations = Vec::new();
    let mut stats = CaptureStats::default();
    let mut macs = BTreeSet::new();
    for packet in packets {
        let packet = packet?;
        stats.total_packets += 1;
        match dissect_frame(&packet.bytes) {
            Dissection::NotArp => {}
            Dissection::MalformedArp => {
                stats.arp_packets += 1;
                stats.malformed_arp += 1;
            }
            Dissection::Arp(arp) => {
                stats.arp_packets += 1;
                if policy.qualifies(&arp) && arp.sender_mac.is_individual() {
                    macs.insert(arp.sender_mac);
                    observations.push(Observation {
                        mac: arp.sender_mac,
                        ip: arp.sender_ip,
                        timestamp: packet.timestamp,
                        role: ObservationRole::ArpSender,
                    });
                }
            }
        }
    }
    stats.observations = observations.len() as u64;
    stats.distinct_macs = macs.len() as u64;
    Ok((observations, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    fn eth(dst: &str, src: &str, ethertype: u16, payload: &[u8]) -> Vec<u8> {
        let mut frame = Vec::new();
        frame.extend_from_slice(&mac(dst).octets());
        frame.extend_from_slice(&mac(src).octets());
        frame.extend_from_slice(&ethertype.to_be_bytes());
        frame.extend_from_slice(payload);
        frame
    }

    fn arp_body(oper: u16, sha: &str, spa: [u8; 4], tha: &str, tpa: [u8; 4]) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&1u16.to_be_bytes());
        body.extend_from_slice(&0x0800u16.to_be_bytes());
        body.push(6);
        body.push(4);
        body.extend_from_slice(&oper.to_be_bytes());
        body.extend_from_slice(&mac(sha).octets());
        body.extend_from_slice(&spa);
        body.extend_from_slice(&mac(tha).octets());
        body.extend_from_slice(&tpa);
        body
    }

    fn packet(bytes: Vec<u8>, secs: u64) -> RawPacket {
        RawPacket {
            timestamp: Timestamp::from_parts(secs, 0),
            bytes,
            link: LinkType::Ethernet,
        }
    }

    fn broadcast_request(src: &str, spa: [u8; 4], secs: u64) -> RawPacket {
        packet(
            eth(
                "FF:FF:FF:FF:FF:FF",
                src,
                ETHERTYPE_ARP,
                &arp_body(1, src, spa, "00:00:00:00:00:00", [192, 168, 0, 1]),
            ),
            secs,
        )
    }

    #[test]
    fn request_frame_parses_field_by_field() {
        let p = broadcast_request("28:63:36:C6:C7:D4", [192, 168, 0, 10], 5);
        assert_eq!(p.bytes.len(), 42);
        let arp = parse_arp(&p).unwrap();
        assert_eq!(arp.hardware_type, 1);
        assert_eq!(arp.protocol_type, 0x0800);
        assert_eq!(arp.opcode, ArpOpcode::Request);
        assert_eq!(arp.sender_mac, mac("28:63:36:C6:C7:D4"));
        assert_eq!(arp.sender_ip, Ipv4Addr::new(192, 168, 0, 10));
        assert_eq!(arp.target_mac, mac("00:00:00:00:00:00"));
        assert_eq!(arp.target_ip, Ipv4Addr::new(192, 168, 0, 1));
        assert_eq!(arp.frame_destination, MacAddress::BROADCAST);
        assert!(!arp.is_gratuitous());
    }

    #[test]
    fn reply_and_other_opcodes() {
        let body = arp_body(
            2,
            "00:1C:06:35:C0:7C",
            [192, 168, 0, 11],
            "28:63:36:C6:C7:D4",
            [192, 168, 0, 10],
        );
        let p = packet(eth("28:63:36:C6:C7:D4", "00:1C:06:35:C0:7C", ETHERTYPE_ARP, &body), 1);
        let arp = parse_arp(&p).unwrap();
        assert_eq!(arp.opcode, ArpOpcode::Reply);
        assert_eq!(arp.frame_destination, mac("28:63:36:C6:C7:D4"));

        let mut body = body;
        body[7] = 9;
        let p = packet(eth("28:63:36:C6:C7:D4", "00:1C:06:35:C0:7C", ETHERTYPE_ARP, &body), 1);
        assert_eq!(parse_arp(&p).unwrap().opcode, ArpOpcode::Other(9));
    }

    #[test]
    fn non_arp_ethertype_is_absent() {
        let p = packet(eth("FF:FF:FF:FF:FF:FF", "AA:BB:CC:00:00:01", 0x0800, &[0u8; 40]), 1);
        assert!(parse_arp(&p).is_none());
    }

    #[test]
    fn vlan_tagged_arp_is_unwrapped_once() {
        let inner = arp_body(
            1,
            "00:30:DE:0D:00:01",
            [10, 0, 5, 1],
            "00:00:00:00:00:00",
            [10, 0, 5, 254],
        );
        let mut frame = Vec::new();
        frame.extend_from_slice(&MacAddress::BROADCAST.octets());
        frame.extend_from_slice(&mac("00:30:DE:0D:00:01").octets());
        frame.extend_from_slice(&ETHERTYPE_VLAN.to_be_bytes());
        frame.extend_from_slice(&100u16.to_be_bytes());
        frame.extend_from_slice(&ETHERTYPE_ARP.to_be_bytes());
        frame.extend_from_slice(&inner);
        let arp = parse_arp(&packet(frame, 1)).unwrap();
        assert_eq!(arp.sender_mac, mac("00:30:DE:0D:00:01"));
    }

    #[test]
    fn malformed_bodies_are_counted_not_observed() {
        let truncated = packet(
            eth("FF:FF:FF:FF:FF:FF", "00:30:DE:0C:DD:00", ETHERTYPE_ARP, &[0u8; 10]),
            1,
        );
        assert!(parse_arp(&truncated).is_none());

        let mut wrong_htype = arp_body(
            1,
            "00:30:DE:0C:EE:00",
            [10, 0, 3, 1],
            "00:00:00:00:00:00",
            [10, 0, 3, 2],
        );
        wrong_htype[1] = 6;
        let wrong = packet(
            eth("FF:FF:FF:FF:FF:FF", "00:30:DE:0C:EE:00", ETHERTYPE_ARP, &wrong_htype),
            2,
        );

        let (obs, stats) = observe(
            [Ok(truncated), Ok(wrong)],
            ObservationPolicy::default(),
        )
        .unwrap();
        assert!(obs.is_empty());
        assert_eq!(stats.total_packets, 2);
        assert_eq!(stats.arp_packets, 2);
        assert_eq!(stats.malformed_arp, 2);
    }

    #[test]
    fn group_addressed_senders_are_rejected_before_observation() {
        let p = broadcast_request("01:30:DE:0C:AA:99", [10, 0, 6, 1], 1);
        let (obs, stats) = observe([Ok(p)], ObservationPolicy::default()).unwrap();
        assert!(obs.is_empty());
        assert_eq!(stats.arp_packets, 1);
        assert_eq!(stats.distinct_macs, 0);
    }

    #[test]
    fn gratuitous_arp_is_a_normal_observation() {
        let src = "00:30:DE:0C:CC:01";
        let p = packet(
            eth(
                "FF:FF:FF:FF:FF:FF",
                src,
                ETHERTYPE_ARP,
                &arp_body(1, src, [10, 0, 2, 1], "00:00:00:00:00:00", [10, 0, 2, 1]),
            ),
            7,
        );
        let arp = parse_arp(&p).unwrap();
        assert!(arp.is_gratuitous());
        let (obs, _) = observe([Ok(p)], ObservationPolicy::default()).unwrap();
        assert_eq!(obs.len(), 1);
    }

    #[test]
    fn reply_policy_is_opt_in() {
        let body = arp_body(
            2,
            "00:1C:06:35:C0:7C",
            [192, 168, 0, 11],
            "28:63:36:C6:C7:D4",
            [192, 168, 0, 10],
        );
        let reply = || {
            packet(
                eth("28:63:36:C6:C7:D4", "00:1C:06:35:C0:7C", ETHERTYPE_ARP, &body),
                3,
            )
        };
        let (obs, _) = observe([Ok(reply())], ObservationPolicy::default()).unwrap();
        assert!(obs.is_empty());
        let (obs, _) = observe(
            [Ok(reply())],
            ObservationPolicy {
                include_unicast_replies: true,
            },
        )
        .unwrap();
        assert_eq!(obs.len(), 1);
    }

    #[test]
    fn observation_timestamps_and_order_are_preserved() {
        let src = "28:63:36:C6:C7:D4";
        let packets = vec![
            Ok(broadcast_request(src, [192, 168, 0, 10], 30)),
            Ok(broadcast_request(src, [192, 168, 0, 10], 10)),
            Ok(broadcast_request(src, [192, 168, 0, 10], 10)),
        ];
        let (obs, stats) = observe(packets, ObservationPolicy::default()).unwrap();
        let nanos: Vec<u64> = obs.iter().map(|o| o.timestamp.nanos()).collect();
        assert_eq!(
            nanos,
            vec![30_000_000_000, 10_000_000_000, 10_000_000_000]
        );
        assert_eq!(stats.distinct_macs, 1);
        assert_eq!(stats.observations, 3);
    }

    #[test]
    fn read_errors_propagate() {
        let err = observe(
            [
                Ok(broadcast_request("28:63:36:C6:C7:D4", [192, 168, 0, 10], 1)),
                Err(CaptureError::Truncated {
                    offset: 40,
                    context: "record body",
                }),
            ],
            ObservationPolicy::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CaptureError::Truncated { offset: 40, .. }));
    }
}
