//! Capture ingestion: parse classic PCAP files, group packets into
//! bidirectional five-tuple flows, and split each flow into independent
//! interaction cycles (sessions).
//!
//! TCP flows are cycled on handshake/teardown flags, reordered by sequence
//! number within each direction, and stripped of retransmissions. UDP flows
//! are cycled on time gaps and left untouched otherwise. Sessions with
//! fewer than three packets are discarded as noise.

mod cycles;
mod flows;
mod parse;

pub use cycles::{sessionize, split_tcp_cycles, split_udp_cycles};
pub use flows::group_by_five_tuple;
pub use parse::{parse_pcap, PcapReader};

use serde::Serialize;
use std::net::Ipv4Addr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("not a pcap file (bad magic)")]
    BadMagic,
    #[error("truncated record: wanted {wanted} bytes, capture has {got}")]
    TruncatedRecord { wanted: usize, got: usize },
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TransportProto {
    Tcp,
    Udp,
}

impl TransportProto {
    pub fn number(self) -> u8 {
        match self {
            TransportProto::Tcp => 6,
            TransportProto::Udp => 17,
        }
    }
}

/// One side of a conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(ip: Ipv4Addr, port: u16) -> Self {
        Self { ip, port }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

/// Directed addressing of one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiveTuple {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub proto: TransportProto,
}

/// Canonical bidirectional flow identity: both directions of a conversation
/// map to the same key, so the endpoint pair is stored in sorted order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKey {
    lo: Endpoint,
    hi: Endpoint,
    proto: TransportProto,
}

impl FlowKey {
    pub fn of(tuple: &FiveTuple) -> Self {
        let (lo, hi) = if tuple.src <= tuple.dst {
            (tuple.src, tuple.dst)
        } else {
            (tuple.dst, tuple.src)
        };
        Self {
            lo,
            hi,
            proto: tuple.proto,
        }
    }

    pub fn proto(&self) -> TransportProto {
        self.proto
    }

    pub fn endpoints(&self) -> (Endpoint, Endpoint) {
        (self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TcpFlags {
    pub syn: bool,
    pub ack: bool,
    pub fin: bool,
    pub rst: bool,
}

impl TcpFlags {
    pub fn from_byte(b: u8) -> Self {
        Self {
            fin: b & 0x01 != 0,
            syn: b & 0x02 != 0,
            rst: b & 0x04 != 0,
            ack: b & 0x10 != 0,
        }
    }

    /// A connection-opening SYN, as opposed to the SYN-ACK reply.
    pub fn is_pure_syn(self) -> bool {
        self.syn && !self.ack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpMeta {
    pub flags: TcpFlags,
    pub seq: u32,
}

/// A parsed TCP or UDP packet. Non-IP frames and ICMP/ARP never reach this
/// type; they are counted and skipped during parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPacket {
    /// Microseconds since the epoch. Nanosecond captures are truncated.
    pub ts_micros: i64,
    /// Link-layer header bytes as captured; cleared by anonymization.
    pub link_bytes: Vec<u8>,
    /// The IP header including options, 20 to 60 bytes.
    pub ip_header: Vec<u8>,
    pub transport_header: Vec<u8>,
    pub payload: Vec<u8>,
    pub five_tuple: FiveTuple,
    /// Present for TCP packets only.
    pub tcp: Option<TcpMeta>,
}

impl RawPacket {
    pub fn proto(&self) -> TransportProto {
        self.five_tuple.proto
    }

    pub fn ts_seconds(&self) -> f64 {
        self.ts_micros as f64 / 1e6
    }
}

/// One interaction cycle of a flow: the unit of classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub key: FlowKey,
    pub packets: Vec<RawPacket>,
    /// Endpoint that sent the first packet of the cycle.
    pub initiator: Endpoint,
    /// Position of this cycle within its five-tuple stream, counting
    /// discarded cycles too.
    pub cycle_index: u32,
}

/// Ingestion counters. The serialized form carries the five reporting
/// fields; the rest back internal bookkeeping and conservation checks.
#[derive(Debug, Clone, Default, Serialize, PartialEq, Eq)]
pub struct IngestStats {
    /// TCP/UDP IPv4 packets successfully parsed.
    pub parsed: u64,
    pub filtered_icmp_arp: u64,
    pub retransmissions_dropped: u64,
    /// Sessions discarded for having fewer than three packets.
    pub short_sessions_dropped: u64,
    pub sessions_emitted: u64,
    /// Frames skipped for other reasons (non-IP, IPv6, other transports).
    #[serde(skip)]
    pub skipped_other: u64,
    /// Packets inside discarded short sessions.
    #[serde(skip)]
    pub short_session_packets: u64,
}

impl IngestStats {
    pub fn merge(&mut self, other: &IngestStats) {
        self.parsed += other.parsed;
        self.filtered_icmp_arp += other.filtered_icmp_arp;
        self.retransmissions_dropped += other.retransmissions_dropped;
        self.short_sessions_dropped += other.short_sessions_dropped;
        self.sessions_emitted += other.sessions_emitted;
        self.skipped_other += other.skipped_other;
        self.short_session_packets += other.short_session_packets;
    }
}
