#!/usr/bin/env python3
"""Generate the binary capture fixtures under crates/core/tests/fixtures/.

Everything is written with `struct` straight from the format definitions
(classic pcap, pcap-ng, Ethernet II, RFC 826 ARP), so the fixtures are
independent of the Rust reader that consumes them. Running the script also
prints a field-by-field dissection of selected frames; the test suites pin
those values.

Usage: python3 tools/gen_fixtures.py [outdir]
"""

import struct
import sys
from pathlib import Path

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(
    __file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"

BROADCAST = bytes.fromhex("ffffffffffff")


def mac(s: str) -> bytes:
    return bytes.fromhex(s.replace(":", ""))


def ipv4(s: str) -> bytes:
    return bytes(int(p) for p in s.split("."))


def eth(dst: bytes, src: bytes, ethertype: int, payload: bytes) -> bytes:
    return dst + src + struct.pack(">H", ethertype) + payload


def arp_body(oper: int, sha: bytes, spa: bytes, tha: bytes, tpa: bytes,
             htype: int = 1, ptype: int = 0x0800, hlen: int = 6, plen: int = 4) -> bytes:
    return struct.pack(">HHBBH", htype, ptype, hlen, plen, oper) + sha + spa + tha + tpa


def arp_request(src: str, sip: str, tip: str, dst: bytes = BROADCAST) -> bytes:
    return eth(dst, mac(src), 0x0806,
               arp_body(1, mac(src), ipv4(sip), bytes(6), ipv4(tip)))


def arp_reply(src: str, sip: str, dst_mac: str, tip: str) -> bytes:
    return eth(mac(dst_mac), mac(src), 0x0806,
               arp_body(2, mac(src), ipv4(sip), mac(dst_mac), ipv4(tip)))


def vlan_arp_request(src: str, sip: str, tip: str, vid: int = 100) -> bytes:
    inner = struct.pack(">H", 0x0806) + arp_body(1, mac(src), ipv4(sip), bytes(6), ipv4(tip))
    return BROADCAST + mac(src) + struct.pack(">HH", 0x8100, vid) + inner


def tcp_frame(src: str, dst: str, seq: int) -> bytes:
    # Minimal IPv4+TCP payload; only the EtherType matters to the consumer.
    ip_hdr = struct.pack(">BBHHHBBH4s4s", 0x45, 0, 40, seq & 0xFFFF, 0, 64, 6, 0,
                         ipv4("192.168.0.200"), ipv4("192.168.0.201"))
    tcp_hdr = struct.pack(">HHIIBBHHH", 40000, 80, seq, 0, 0x50, 0x10, 1024, 0, 0)
    return eth(mac(dst), mac(src), 0x0800, ip_hdr + tcp_hdr)


# --- classic pcap -----------------------------------------------------------

def pcap_bytes(packets, endian="<", nanos=False, linktype=1):
    """Timestamps: float seconds, or exact integer nanoseconds when nanos=True."""
    magic = 0xA1B23C4D if nanos else 0xA1B2C3D4
    out = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)
    for ts, frame in packets:
        if nanos:
            sec, frac = divmod(int(ts), 10 ** 9)
        else:
            sec = int(ts)
            frac = round((ts - sec) * 1e6)
        out += struct.pack(endian + "IIII", sec, frac, len(frame), len(frame)) + frame
    return out


# --- pcap-ng ----------------------------------------------------------------

def ng_block(block_type: int, body: bytes) -> bytes:
    total = 12 + len(body)
    pad = (-total) % 4
    total += pad
    return struct.pack("<II", block_type, total) + body + bytes(pad) + struct.pack("<I", total)


def ng_option(code: int, value: bytes) -> bytes:
    pad = (-len(value)) % 4
    return struct.pack("<HH", code, len(value)) + value + bytes(pad)


def pcapng_bytes(packets, tsresol=None, linktype=1):
    """tsresol None -> no if_tsresol option (default 1e-6); else power-of-ten exponent."""
    shb_body = struct.pack("<IHHq", 0x1A2B3C4D, 1, 0, -1)
    out = ng_block(0x0A0D0D0A, shb_body)
    opts = b""
    if tsresol is not None:
        opts = ng_option(9, bytes([tsresol])) + ng_option(0, b"")
    out += ng_block(0x00000001, struct.pack("<HHI", linktype, 0, 65535) + opts)
    scale = 10 ** (tsresol if tsresol is not None else 6)
    for ts, frame in packets:
        ticks = round(ts * scale)
        body = struct.pack("<IIIII", 0, ticks >> 32, ticks & 0xFFFFFFFF,
                           len(frame), len(frame)) + frame
        out += ng_block(0x00000006, body)
    return out


def dissect(label: str, ts: float, frame: bytes):
    print(f"--- {label} ({len(frame)} bytes, ts={ts!r})")
    print(f"  hex: {frame.hex()}")
    print(f"  eth.dst={frame[0:6].hex(':')} eth.src={frame[6:12].hex(':')}"
          f" ethertype=0x{int.from_bytes(frame[12:14], 'big'):04x}")
    if frame[12:14] == b"\x08\x06" and len(frame) >= 42:
        htype, ptype, hlen, plen, oper = struct.unpack(">HHBBH", frame[14:22])
        print(f"  arp.htype={htype} arp.ptype=0x{ptype:04x} hlen={hlen} plen={plen} oper={oper}")
        print(f"  arp.sha={frame[22:28].hex(':')} arp.spa={'.'.join(map(str, frame[28:32]))}")
        print(f"  arp.tha={frame[32:38].hex(':')} arp.tpa={'.'.join(map(str, frame[38:42]))}")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    bundle = OUT / "bundle"
    bundle.mkdir(exist_ok=True)

    # 1. Single ARP request, classic pcap (LE, microseconds).
    ts0 = 1600000000.123456
    req = arp_request("28:63:36:c6:c7:d4", "192.168.0.10", "192.168.0.1")
    assert len(req) == 42
    (OUT / "single_arp_request.pcap").write_bytes(pcap_bytes([(ts0, req)]))
    dissect("single_arp_request", ts0, req)

    # Same frame, big-endian file and nanosecond-magic file.
    (OUT / "single_arp_request_be.pcap").write_bytes(pcap_bytes([(ts0, req)], endian=">"))
    ts_ns = 1600000000.123456789
    (OUT / "single_arp_request_ns.pcap").write_bytes(pcap_bytes([(ts_ns, req)], nanos=True))

    # Same frame, pcap-ng with if_tsresol = 9 (nanoseconds).
    (OUT / "single_arp_request_ns.pcapng").write_bytes(pcapng_bytes([(ts_ns, req)], tsresol=9))

    # 2. Header-only / corrupt files.
    (OUT / "header_only.pcap").write_bytes(pcap_bytes([]))
    (OUT / "bad_magic.pcap").write_bytes(b"XXXXYYYYZZZZ0000")
    good = pcap_bytes([(ts0, req)])
    (OUT / "truncated_record.pcap").write_bytes(good[:24 + 8])       # half a record header
    (OUT / "truncated_body.pcap").write_bytes(good[:24 + 16 + 20])   # record header + 20 of 42 bytes
    (OUT / "bad_linktype.pcap").write_bytes(pcap_bytes([], linktype=101))

    # 3. Ten-packet mix: 3 broadcast ARP requests from one MAC at t0, t0+10,
    #    t0+30 interleaved with 7 TCP frames. Twin pcap-ng with identical content.
    base = 1700000000.0
    sender = "28:63:36:c6:c7:d4"
    packets = [
        (base + 0.0, arp_request(sender, "192.168.0.10", "192.168.0.1")),
        (base + 1.0, tcp_frame("aa:bb:cc:00:00:01", "aa:bb:cc:00:00:02", 1)),
        (base + 2.0, tcp_frame("aa:bb:cc:00:00:02", "aa:bb:cc:00:00:01", 2)),
        (base + 4.0, tcp_frame("aa:bb:cc:00:00:01", "aa:bb:cc:00:00:02", 3)),
        (base + 10.0, arp_request(sender, "192.168.0.10", "192.168.0.1")),
        (base + 12.0, tcp_frame("aa:bb:cc:00:00:02", "aa:bb:cc:00:00:01", 4)),
        (base + 15.0, tcp_frame("aa:bb:cc:00:00:01", "aa:bb:cc:00:00:02", 5)),
        (base + 20.0, tcp_frame("aa:bb:cc:00:00:02", "aa:bb:cc:00:00:01", 6)),
        (base + 25.0, tcp_frame("aa:bb:cc:00:00:01", "aa:bb:cc:00:00:02", 7)),
        (base + 30.0, arp_request(sender, "192.168.0.10", "192.168.0.1")),
    ]
    (bundle / "capture.pcap").write_bytes(pcap_bytes(packets))
    (bundle / "capture.pcapng").write_bytes(pcapng_bytes(packets))
    print("--- bundle/capture: total=10 arp=3 observations=3 malformed=0 distinct=1"
          " gaps=[10,20] mean=15 max=20")

    # 4. Mixed 100-frame fixture with known counters.
    frames = []
    t = 1700001000.0

    def add(frame):
        nonlocal t
        frames.append((t, frame))
        t += 0.25

    senders = [f"00:30:de:0c:aa:{i:02x}" for i in range(16, 26)]
    for rnd in range(4):
        for i, s in enumerate(senders):
            add(arp_request(s, f"10.0.0.{i + 1}", "10.0.0.254"))       # 40 requests
    for i in range(10):
        add(arp_reply(f"00:30:de:0c:bb:{i % 3:02x}", f"10.0.1.{i % 3 + 1}",
                      "00:30:de:0c:aa:10", "10.0.0.1"))                # 10 replies, 3 senders
    for i in range(5):
        add(arp_request(f"00:30:de:0c:cc:{i:02x}", f"10.0.2.{i + 1}", f"10.0.2.{i + 1}"))  # 5 gratuitous
    for i in range(8):
        add(eth(BROADCAST, mac(f"00:30:de:0c:dd:{i:02x}"), 0x0806, bytes(10)))  # 8 truncated bodies
    for i in range(4):
        add(eth(BROADCAST, mac(f"00:30:de:0c:ee:{i:02x}"), 0x0806,
                arp_body(1, mac(f"00:30:de:0c:ee:{i:02x}"), ipv4("10.0.3.1"),
                         bytes(6), ipv4("10.0.3.2"), htype=6)))        # 4 wrong hardware type
    for i in range(3):
        add(eth(BROADCAST, mac(f"00:30:de:0c:ff:{i:02x}"), 0x0806,
                arp_body(1, mac(f"00:30:de:0c:ff:{i:02x}"), ipv4("10.0.4.1"),
                         bytes(6), ipv4("10.0.4.2"), ptype=0x86DD)))   # 3 wrong protocol type
    for i in range(2):
        add(vlan_arp_request(f"00:30:de:0d:00:{i:02x}", f"10.0.5.{i + 1}", "10.0.5.254"))  # 2 VLAN
    add(arp_request("01:30:de:0c:aa:99", "10.0.6.1", "10.0.6.254"))    # 1 group-bit sender
    for i in range(20):
        add(tcp_frame("aa:bb:cc:00:01:01", "aa:bb:cc:00:01:02", i))    # 20 TCP
    for i in range(5):
        add(tcp_frame("aa:bb:cc:00:01:03", "aa:bb:cc:00:01:04", i))    # 5 more TCP
    add(b"\x01\x02\x03")                                               # 2 runts
    add(b"\xff" * 10)
    assert len(frames) == 100, len(frames)
    (OUT / "mixed_100.pcap").write_bytes(pcap_bytes(frames))
    print("--- mixed_100: total=100 arp=73 malformed=15"
          " observations(default)=47 distinct(default)=17"
          " observations(+replies)=57 distinct(+replies)=20")

    # 5. Evaluation capture: ARP requests from four hosts.
    eval_frames = [
        (1700002000.0, arp_request("00:00:5e:00:00:10", "172.16.0.10", "172.16.0.1")),
        (1700002001.0, arp_request("00:00:5e:00:01:00", "172.16.0.11", "172.16.0.1")),
        (1700002002.0, arp_request("aa:00:00:00:00:05", "172.16.0.12", "172.16.0.1")),
        (1700002003.0, arp_request("bb:00:00:00:00:01", "172.16.0.13", "172.16.0.1")),
        (1700002010.0, arp_request("00:00:5e:00:00:10", "172.16.0.10", "172.16.0.1")),
    ]
    (OUT / "eval_arp.pcap").write_bytes(pcap_bytes(eval_frames))

    # 6. Capture whose senders are exactly the bundle device-list MACs.
    db_frames = [
        (1700003000.0, arp_request("28:63:36:c6:cc:67", "192.168.0.110", "192.168.0.1")),
        (1700003001.0, arp_request("00:1c:06:35:c0:7c", "192.168.0.11", "192.168.0.1")),
        (1700003002.0, arp_request("00:90:e8:2a:e5:34", "192.168.0.70", "192.168.0.1")),
        (1700003010.0, arp_request("28:63:36:c6:cc:67", "192.168.0.110", "192.168.0.1")),
        (1700003011.0, arp_request("00:1c:06:35:c0:7c", "192.168.0.11", "192.168.0.1")),
        (1700003012.0, arp_request("00:90:e8:2a:e5:34", "192.168.0.70", "192.168.0.1")),
    ]
    (OUT / "db_macs_arp.pcap").write_bytes(pcap_bytes(db_frames))

    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
