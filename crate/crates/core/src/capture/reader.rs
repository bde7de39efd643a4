//! File readers for classic pcap and pcap-ng captures (Ethernet link type
//! only). Both microsecond and nanosecond timestamp resolutions are
//! normalized to integer nanoseconds.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use super::{CaptureError, LinkType, RawPacket, Timestamp};

const PCAPNG_SHB: u32 = 0x0A0D_0D0A;
const PCAPNG_BOM: u32 = 0x1A2B_3C4D;
const PCAP_MAGIC_MICRO: u32 = 0xA1B2_C3D4;
const PCAP_MAGIC_NANO: u32 = 0xA1B2_3C4D;
const LINKTYPE_ETHERNET: u32 = 1;
const MAX_BLOCK_LEN: u32 = 0x1000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u16(self, b: [u8; 2]) -> u16 {
        match self {
            Endian::Little => u16::from_le_bytes(b),
            Endian::Big => u16::from_be_bytes(b),
        }
    }

    fn u32(self, b: [u8; 4]) -> u32 {
        match self {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum TsResol {
    /// Ticks of 10^-v seconds.
    Pow10(u32),
    /// Ticks of 2^-v seconds.
    Pow2(u32),
}

impl TsResol {
    fn to_nanos(self, ticks: u64) -> Option<u64> {
        match self {
            TsResol::Pow10(v) if v <= 9 => ticks.checked_mul(10u64.pow(9 - v)),
            TsResol::Pow10(v) => {
                if v - 9 >= 20 {
                    Some(0)
                } else {
                    Some(ticks / 10u64.pow(v - 9))
                }
            }
            TsResol::Pow2(v) => {
                let nanos = (ticks as u128 * 1_000_000_000) >> v.min(127);
                u64::try_from(nanos).ok()
            }
        }
    }
}

enum ReaderState {
    Pcap { endian: Endian, nanos: bool },
    PcapNg { endian: Endian, interfaces: Vec<TsResol> },
}

/// Streaming reader over a capture file; yields packets in file order with
/// their original timestamps.
pub struct CaptureReader<R: Read> {
    inner: R,
    offset: u64,
    state: ReaderState,
    finished: bool,
}

/// Opens a capture file, detecting the container from its magic number.
pub fn open_capture(path: &Path) -> Result<CaptureReader<BufReader<File>>, CaptureError> {
    CaptureReader::new(BufReader::new(File::open(path)?))
}

impl<R: Read> CaptureReader<R> {
    pub fn new(inner: R) -> Result<Self, CaptureError> {
        let mut reader = CaptureReader {
            inner,
            offset: 0,
            state: ReaderState::Pcap {
                endian: Endian::Little,
                nanos: false,
            },
            finished: false,
        };
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic, "file magic")?;
        let magic_be = u32::from_be_bytes(magic);
        match magic_be {
            PCAPNG_SHB => {
                reader.state = ReaderState::PcapNg {
                    endian: Endian::Little,
                    interfaces: Vec::new(),
                };
                reader.read_section_header()?;
            }
            PCAP_MAGIC_MICRO => reader.init_pcap(Endian::Big, false)?,
            PCAP_MAGIC_NANO => reader.init_pcap(Endian::Big, true)?,
            m if m == PCAP_MAGIC_MICRO.swap_bytes() => reader.init_pcap(Endian::Little, false)?,
            m if m == PCAP_MAGIC_NANO.swap_bytes() => reader.init_pcap(Endian::Little, true)?,
            other => return Err(CaptureError::BadMagic(other)),
        }
        Ok(reader)
    }

    fn init_pcap(&mut self, endian: Endian, nanos: bool) -> Result<(), CaptureError> {
        let mut header = [0u8; 20];
        self.read_exact(&mut header, "pcap file header")?;
        let linktype = endian.u32(header[16..20].try_into().unwrap());
        if linktype != LINKTYPE_ETHERNET {
            return Err(CaptureError::UnsupportedLinkType { linktype });
        }
        self.state = ReaderState::Pcap { endian, nanos };
        Ok(())
    }

    /// Completes a section header block whose first 4 bytes (the block type)
    /// were already consumed as the file magic.
    fn read_section_header(&mut self) -> Result<(), CaptureError> {
        let start = self.offset - 4;
        let mut total_len_bytes = [0u8; 4];
        self.read_exact(&mut total_len_bytes, "section header")?;
        self.finish_section_header(start, total_len_bytes)
    }

    /// Parses byte-order magic and length once the 12 leading bytes of a
    /// section header are in hand, then skips the rest of the block.
    fn finish_section_header(
        &mut self,
        start: u64,
        total_len_bytes: [u8; 4],
    ) -> Result<(), CaptureError> {
        let mut bom_bytes = [0u8; 4];
        self.read_exact(&mut bom_bytes, "section header")?;
        let bom = u32::from_be_bytes(bom_bytes);
        let endian = if bom == PCAPNG_BOM {
            Endian::Big
        } else if bom == PCAPNG_BOM.swap_bytes() {
            Endian::Little
        } else {
            return Err(CaptureError::BadBlock {
                offset: start,
                block: "section header",
                reason: format!("bad byte-order magic {bom:#010x}"),
            });
        };
        let total_len = endian.u32(total_len_bytes);
        if total_len < 28 || total_len % 4 != 0 || total_len > MAX_BLOCK_LEN {
            return Err(CaptureError::BadBlock {
                offset: start,
                block: "section header",
                reason: format!("invalid total length {total_len}"),
            });
        }
        self.skip(total_len as u64 - 12, "section header body")?;
        self.state = ReaderState::PcapNg {
            endian,
            interfaces: Vec::new(),
        };
        Ok(())
    }

    fn read_exact(&mut self, buf: &mut [u8], context: &'static str) -> Result<(), CaptureError> {
        let start = self.offset;
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(CaptureError::Truncated {
                        offset: start,
                        context,
                    })
                }
                Ok(n) => {
                    filled += n;
                    self.offset += n as u64;
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    /// Like `read_exact`, but a clean EOF before the first byte returns
    /// `Ok(false)`.
    fn read_exact_or_eof(
        &mut self,
        buf: &mut [u8],
        context: &'static str,
    ) -> Result<bool, CaptureError> {
        let start = self.offset;
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) if filled == 0 => return Ok(false),
                Ok(0) => {
                    return Err(CaptureError::Truncated {
                        offset: start,
                        context,
                    })
                }
                Ok(n) => {
                    filled += n;
                    self.offset += n as u64;
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(true)
    }

    fn skip(&mut self, mut n: u64, context: &'static str) -> Result<(), CaptureError> {
        let mut buf = [0u8; 4096];
        while n > 0 {
            let chunk = n.min(buf.len() as u64) as usize;
            self.read_exact(&mut buf[..chunk], context)?;
            n -= chunk as u64;
        }
        Ok(())
    }

    fn next_pcap_record(
        &mut self,
        endian: Endian,
        nanos: bool,
    ) -> Result<Option<RawPacket>, CaptureError> {
        let start = self.offset;
        let mut header = [0u8; 16];
        if !self.read_exact_or_eof(&mut header, "record header")? {
            return Ok(None);
        }
        let ts_sec = endian.u32(header[0..4].try_into().unwrap());
        let ts_frac = endian.u32(header[4..8].try_into().unwrap());
        let incl_len = endian.u32(header[8..12].try_into().unwrap());
        if incl_len > MAX_BLOCK_LEN {
            return Err(CaptureError::BadBlock {
                offset: start,
                block: "pcap record",
                reason: format!("implausible captured length {incl_len}"),
            });
        }
        let mut bytes = vec![0u8; incl_len as usize];
        self.read_exact(&mut bytes, "record body")?;
        let frac_nanos = if nanos { ts_frac as u64 } else { ts_frac as u64 * 1000 };
        Ok(Some(RawPacket {
            timestamp: Timestamp::from_nanos(ts_sec as u64 * 1_000_000_000 + frac_nanos),
            bytes,
            link: LinkType::Ethernet,
        }))
    }

    fn next_pcapng_packet(&mut self) -> Result<Option<RawPacket>, CaptureError> {
        loop {
            let start = self.offset;
            let mut header = [0u8; 8];
            if !self.read_exact_or_eof(&mut header, "block header")? {
                return Ok(None);
            }
            let type_bytes: [u8; 4] = header[0..4].try_into().unwrap();
            if u32::from_be_bytes(type_bytes) == PCAPNG_SHB {
                // A new section resets endianness and known interfaces.
                self.finish_section_header(start, header[4..8].try_into().unwrap())?;
                continue;
            }
            let endian = match &self.state {
                ReaderState::PcapNg { endian, .. } => *endian,
                ReaderState::Pcap { .. } => unreachable!("pcapng reader in pcap state"),
            };
            let block_type = endian.u32(type_bytes);
            let total_len = endian.u32(header[4..8].try_into().unwrap());
            if total_len < 12 || total_len % 4 != 0 || total_len > MAX_BLOCK_LEN {
                return Err(CaptureError::BadBlock {
                    offset: start,
                    block: "pcapng",
                    reason: format!("invalid total length {total_len}"),
                });
            }
            let mut body = vec![0u8; total_len as usize - 12];
            self.read_exact(&mut body, "block body")?;
            let mut trailer = [0u8; 4];
            self.read_exact(&mut trailer, "block trailer")?;
            if endian.u32(trailer) != total_len {
                return Err(CaptureError::BadBlock {
                    offset: start,
                    block: "pcapng",
                    reason: "trailing length mismatch".to_string(),
                });
            }
            match block_type {
                0x0000_0001 => self.parse_interface_description(start, endian, &body)?,
                0x0000_0006 => {
                    return self
                        .parse_enhanced_packet(start, endian, &body)
                        .map(Some)
                }
                0x0000_0003 => return self.parse_simple_packet(start, &body).map(Some),
                _ => {} // statistics, name resolution, and unknown blocks are skipped
            }
        }
    }

    fn parse_interface_description(
        &mut self,
        start: u64,
        endian: Endian,
        body: &[u8],
    ) -> Result<(), CaptureError> {
        if body.len() < 8 {
            return Err(CaptureError::BadBlock {
                offset: start,
                block: "interface description",
                reason: "block too short".to_string(),
            });
        }
        let linktype = endian.u16(body[0..2].try_into().unwrap()) as u32;
        if linktype != LINKTYPE_ETHERNET {
            return Err(CaptureError::UnsupportedLinkType { linktype });
        }
        let mut tsresol = TsResol::Pow10(6);
        let mut opts = &body[8..];
        while opts.len() >= 4 {
            let code = endian.u16(opts[0..2].try_into().unwrap());
            let olen = endian.u16(opts[2..4].try_into().unwrap()) as usize;
            if code == 0 {
                break;
            }
            if opts.len() < 4 + olen {
                return Err(CaptureError::BadBlock {
                    offset: start,
                    block: "interface description",
                    reason: "option overruns block".to_string(),
                });
            }
            if code == 9 && olen >= 1 {
                let raw = opts[4];
                tsresol = if raw & 0x80 != 0 {
                    TsResol::Pow2((raw & 0x7F) as u32)
                } else {
                    TsResol::Pow10(raw as u32)
                };
            }
            let padded = olen + (4 - olen % 4) % 4;
            if opts.len() < 4 + padded {
                break;
            }
            opts = &opts[4 + padded..];
        }
        if let ReaderState::PcapNg { interfaces, .. } = &mut self.state {
            interfaces.push(tsresol);
        }
        Ok(())
    }

    fn parse_enhanced_packet(
        &mut self,
        start: u64,
        endian: Endian,
        body: &[u8],
    ) -> Result<RawPacket, CaptureError> {
        if body.len() < 20 {
            return Err(CaptureError::BadBlock {
                offset: start,
                block: "enhanced packet",
                reason: "block too short".to_string(),
            });
        }
        let if_id = endian.u32(body[0..4].try_into().unwrap()) as usize;
        let ts_high = endian.u32(body[4..8].try_into().unwrap());
        let ts_low = endian.u32(body[8..12].try_into().unwrap());
        let cap_len = endian.u32(body[12..16].try_into().unwrap()) as usize;
        let tsresol = match &self.state {
            ReaderState::PcapNg { interfaces, .. } => {
                *interfaces
                    .get(if_id)
                    .ok_or_else(|| CaptureError::BadBlock {
                        offset: start,
                        block: "enhanced packet",
                        reason: format!("unknown interface {if_id}"),
                    })?
            }
            ReaderState::Pcap { .. } => unreachable!("pcapng reader in pcap state"),
        };
        if body.len() < 20 + cap_len {
            return Err(CaptureError::BadBlock {
                offset: start,
                block: "enhanced packet",
                reason: "captured data overruns block".to_string(),
            });
        }
        let ticks = ((ts_high as u64) << 32) | ts_low as u64;
        let nanos = tsresol
            .to_nanos(ticks)
            .ok_or_else(|| CaptureError::BadBlock {
                offset: start,
                block: "enhanced packet",
                reason: "timestamp overflows nanosecond range".to_string(),
            })?;
        Ok(RawPacket {
            timestamp: Timestamp::from_nanos(nanos),
            bytes: body[20..20 + cap_len].to_vec(),
            link: LinkType::Ethernet,
        })
    }

    fn parse_simple_packet(&mut self, start: u64, body: &[u8]) -> Result<RawPacket, CaptureError> {
        let interfaces_known = match &self.state {
            ReaderState::PcapNg { interfaces, .. } => !interfaces.is_empty(),
            ReaderState::Pcap { .. } => unreachable!("pcapng reader in pcap state"),
        };
        if !interfaces_known || body.len() < 4 {
            return Err(CaptureError::BadBlock {
                offset: start,
                block: "simple packet",
                reason: if body.len() < 4 {
                    "block too short".to_string()
                } else {
                    "no interface description seen".to_string()
                },
            });
        }
        // Simple packet blocks carry no timestamp; epoch zero marks that.
        let endian = match &self.state {
            ReaderState::PcapNg { endian, .. } => *endian,
            ReaderState::Pcap { .. } => unreachable!(),
        };
        let orig_len = endian.u32(body[0..4].try_into().unwrap()) as usize;
        let data_len = orig_len.min(body.len() - 4);
        Ok(RawPacket {
            timestamp: Timestamp::from_nanos(0),
            bytes: body[4..4 + data_len].to_vec(),
            link: LinkType::Ethernet,
        })
    }
}

impl<R: Read> Iterator for CaptureReader<R> {
    type Item = Result<RawPacket, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let result = match &self.state {
            ReaderState::Pcap { endian, nanos } => {
                let (endian, nanos) = (*endian, *nanos);
                self.next_pcap_record(endian, nanos)
            }
            ReaderState::PcapNg { .. } => self.next_pcapng_packet(),
        };
        match result {
            Ok(Some(packet)) => Some(Ok(packet)),
            Ok(None) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}
