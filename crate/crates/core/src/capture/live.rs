//! Receive-only live capture over an AF_PACKET socket. The socket is read
//! with `recv` only; this module exposes no transmit path, which is what
//! makes a diode-protected deployment sound.

use std::ffi::CString;
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use super::{CaptureError, LinkType, RawPacket, Timestamp};

const ETH_P_ALL: u16 = 0x0003;
const RECV_POLL: Duration = Duration::from_millis(200);

/// An open receive-only packet socket bound to one interface.
pub struct LiveSource {
    fd: OwnedFd,
    interface: String,
    deadline: Option<Instant>,
    buf: Vec<u8>,
}

impl LiveSource {
    /// Opens the socket and binds it to `interface`. Requires CAP_NET_RAW.
    pub fn open(interface: &str, promiscuous: bool) -> Result<Self, CaptureError> {
        let err = |reason: String| CaptureError::Live {
            interface: interface.to_string(),
            reason,
        };
        let name = CString::new(interface)
            .map_err(|_| err("interface name contains a NUL byte".into()))?;
        let ifindex = unsafe { libc::if_nametoindex(name.as_ptr()) };
        if ifindex == 0 {
            return Err(err(format!(
                "no such interface ({})",
                std::io::Error::last_os_error()
            )));
        }
        let raw = unsafe {
            libc::socket(
                libc::AF_PACKET,
                libc::SOCK_RAW | libc::SOCK_CLOEXEC,
                (ETH_P_ALL as u16).to_be() as libc::c_int,
            )
        };
        if raw < 0 {
            return Err(err(format!("socket: {}", std::io::Error::last_os_error())));
        }
        let fd = unsafe { OwnedFd::from_raw_fd(raw) };

        let mut addr: libc::sockaddr_ll = unsafe { std::mem::zeroed() };
        addr.sll_family = libc::AF_PACKET as libc::c_ushort;
        addr.sll_protocol = (ETH_P_ALL as u16).to_be();
        addr.sll_ifindex = ifindex as libc::c_int;
        let rc = unsafe {
            libc::bind(
                fd.as_raw_fd(),
                &addr as *const libc::sockaddr_ll as *const libc::sockaddr,
                std::mem::size_of::<libc::sockaddr_ll>() as libc::socklen_t,
            )
        };
        if rc < 0 {
            return Err(err(format!("bind: {}", std::io::Error::last_os_error())));
        }

        if promiscuous {
            let mreq = libc::packet_mreq {
                mr_ifindex: ifindex as libc::c_int,
                mr_type: libc::PACKET_MR_PROMISC as libc::c_ushort,
                mr_alen: 0,
                mr_address: [0; 8],
            };
            let rc = unsafe {
                libc::setsockopt(
                    fd.as_raw_fd(),
                    libc::SOL_PACKET,
                    libc::PACKET_ADD_MEMBERSHIP,
                    &mreq as *const libc::packet_mreq as *const libc::c_void,
                    std::mem::size_of::<libc::packet_mreq>() as libc::socklen_t,
                )
            };
            if rc < 0 {
                return Err(err(format!(
                    "promiscuous mode: {}",
                    std::io::Error::last_os_error()
                )));
            }
        }

        let source = LiveSource {
            fd,
            interface: interface.to_string(),
            deadline: None,
            buf: vec![0u8; 65536],
        };
        source.set_recv_timeout(RECV_POLL)?;
        Ok(source)
    }

    /// Stop yielding packets once `duration` has elapsed.
    pub fn with_duration(mut self, duration: Duration) -> Self {
        self.deadline = Some(Instant::now() + duration);
        self
    }

    pub fn interface(&self) -> &str {
        &self.interface
    }

    fn set_recv_timeout(&self, timeout: Duration) -> Result<(), CaptureError> {
        let tv = libc::timeval {
            tv_sec: timeout.as_secs() as libc::time_t,
            tv_usec: timeout.subsec_micros() as libc::suseconds_t,
        };
        let rc = unsafe {
            libc::setsockopt(
                self.fd.as_raw_fd(),
                libc::SOL_SOCKET,
                libc::SO_RCVTIMEO,
                &tv as *const libc::timeval as *const libc::c_void,
                std::mem::size_of::<libc::timeval>() as libc::socklen_t,
            )
        };
        if rc < 0 {
            return Err(CaptureError::Live {
                interface: self.interface.clone(),
                reason: format!("receive timeout: {}", std::io::Error::last_os_error()),
            });
        }
        Ok(())
    }

    fn recv_once(&mut self) -> Result<Option<RawPacket>, CaptureError> {
        let n = unsafe {
            libc::recv(
                self.fd.as_raw_fd(),
                self.buf.as_mut_ptr() as *mut libc::c_void,
                self.buf.len(),
                0,
            )
        };
        if n < 0 {
            let e = std::io::Error::last_os_error();
            return match e.kind() {
                std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => Ok(None),
                std::io::ErrorKind::Interrupted => Ok(None),
                _ => Err(CaptureError::Live {
                    interface: self.interface.clone(),
                    reason: format!("recv: {e}"),
                }),
            };
        }
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or(Duration::ZERO);
        Ok(Some(RawPacket {
            timestamp: Timestamp::from_parts(now.as_secs(), now.subsec_nanos()),
            bytes: self.buf[..n as usize].to_vec(),
            link: LinkType::Ethernet,
        }))
    }
}

impl Iterator for LiveSource {
    type Item = Result<RawPacket, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    return None;
                }
            }
            match self.recv_once() {
                Ok(Some(packet)) => return Some(Ok(packet)),
                Ok(None) => continue,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}
