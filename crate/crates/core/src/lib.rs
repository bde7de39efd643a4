//! Passive asset discovery and identification for Ethernet-based industrial
//! networks.
//!
//! The library extracts MAC addresses from broadcast ARP traffic, identifies
//! device vendor and product by numeric distance to a local database of known
//! hardware, estimates how long a complete passive discovery takes from packet
//! interarrival gaps, and maps identified products to known vulnerabilities
//! from an offline CVE snapshot. Analysis never writes to the network.

pub mod capture;
pub mod fetch;
pub mod identify;
pub mod interarrival;
pub mod mac;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod vulnmap;

pub(crate) mod csvutil;

pub use mac::{AddressClass, MacAddress, MacDistance, OuiPrefix, PrefixKind};
