//! Session representation: anonymized, length-aligned, normalized tensors.
//!
//! Every packet becomes a 256-byte vector laid out as
//! `ip[0..60] | tcp[60..120] | udp[120..128] | payload[128..256]`; the slot
//! for the other transport protocol stays zero. A session is the matrix of
//! its first `N` packet vectors, zero-padded to exactly `N` rows and scaled
//! from byte range into `[0, 1]`.

mod dataset;

pub use dataset::{read_dataset, write_dataset, Dataset, DatasetError};

use crate::pcap::{RawPacket, Session, TransportProto};
use crate::tensor::{Real, Tensor};
use std::net::Ipv4Addr;
use thiserror::Error;

pub const IP_REGION: std::ops::Range<usize> = 0..60;
pub const TCP_REGION: std::ops::Range<usize> = 60..120;
pub const UDP_REGION: std::ops::Range<usize> = 120..128;
pub const PAYLOAD_REGION: std::ops::Range<usize> = 128..256;
pub const PACKET_VECTOR_LEN: usize = 256;

/// Placeholder written over the initiator's address.
pub const ANON_INITIATOR: Ipv4Addr = Ipv4Addr::new(0, 0, 0, 0);
/// Placeholder written over the responder's address.
pub const ANON_RESPONDER: Ipv4Addr = Ipv4Addr::new(255, 255, 255, 255);

#[derive(Debug, Error, PartialEq)]
pub enum ReprError {
    /// A parsed header exceeded its fixed slot; indicates a parser bug, not
    /// valid traffic (IPv4 and TCP headers top out at 60 bytes).
    #[error("{kind} header of {len} bytes exceeds its {cap}-byte slot")]
    HeaderOverflow {
        kind: &'static str,
        len: usize,
        cap: usize,
    },
}

/// One packet aligned into the fixed 256-byte layout, before normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketVector {
    pub bytes: [u8; PACKET_VECTOR_LEN],
}

/// A session as the model consumes it: `rows x 256` values in `[0, 1]`,
/// zero-padded past the real packets.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTensor {
    /// Total rows (the configured session length N).
    pub rows: u16,
    /// Rows that hold real packets; the rest are padding.
    pub n_real: u16,
    /// Class id; 0 is benign by convention.
    pub label: u16,
    /// Provenance, e.g. `capture.pcap#flow3/cycle0`.
    pub source_id: String,
    /// Row-major `rows x 256` values.
    pub data: Vec<f32>,
}

impl SessionTensor {
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(
            vec![self.rows as usize, PACKET_VECTOR_LEN],
            self.data.iter().map(|&v| T::from_f32(v)).collect(),
        )
        .expect("session tensor data matches its shape")
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * PACKET_VECTOR_LEN..(i + 1) * PACKET_VECTOR_LEN]
    }
}

/// Rewrite endpoint addresses to placeholders and strip link-layer bytes.
///
/// The mapping comes from the session's initiator: its address becomes
/// 0.0.0.0 and the responder's 255.255.255.255 in every packet, keeping
/// direction visible without real addresses. With `first_only` the
/// rewrite touches just the first packet. IP checksums are left stale.
pub fn anonymize(mut session: Session, first_only: bool) -> Session {
    let initiator = session.initiator;
    let limit = if first_only { 1 } else { session.packets.len() };
    for pkt in &mut session.packets {
        pkt.link_bytes.clear();
    }
    for pkt in session.packets.iter_mut().take(limit) {
        let src_is_initiator = pkt.five_tuple.src == initiator;
        let (src_ip, dst_ip) = if src_is_initiator {
            (ANON_INITIATOR, ANON_RESPONDER)
        } else {
            (ANON_RESPONDER, ANON_INITIATOR)
        };
        pkt.ip_header[12..16].copy_from_slice(&src_ip.octets());
        pkt.ip_header[16..20].copy_from_slice(&dst_ip.octets());
        pkt.five_tuple.src.ip = src_ip;
        pkt.five_tuple.dst.ip = dst_ip;
    }
    session.initiator.ip = ANON_INITIATOR;
    session
}

/// Align one packet into the fixed 256-byte vector.
pub fn align_packet(pkt: &RawPacket) -> Result<PacketVector, ReprError> {
    let mut bytes = [0u8; PACKET_VECTOR_LEN];
    let ip = &pkt.ip_header;
    if ip.len() > IP_REGION.len() {
        return Err(ReprError::HeaderOverflow {
            kind: "IP",
            len: ip.len(),
            cap: IP_REGION.len(),
        });
    }
    bytes[..ip.len()].copy_from_slice(ip);

    let transport = &pkt.transport_header;
    match pkt.proto() {
        TransportProto::Tcp => {
            if transport.len() > TCP_REGION.len() {
                return Err(ReprError::HeaderOverflow {
                    kind: "TCP",
                    len: transport.len(),
                    cap: TCP_REGION.len(),
                });
            }
            bytes[TCP_REGION.start..TCP_REGION.start + transport.len()]
                .copy_from_slice(transport);
        }
        TransportProto::Udp => {
            if transport.len() > UDP_REGION.len() {
                return Err(ReprError::HeaderOverflow {
                    kind: "UDP",
                    len: transport.len(),
                    cap: UDP_REGION.len(),
                });
            }
            bytes[UDP_REGION.start..UDP_REGION.start + transport.len()]
                .copy_from_slice(transport);
        }
    }

    let take = pkt.payload.len().min(PAYLOAD_REGION.len());
    bytes[PAYLOAD_REGION.start..PAYLOAD_REGION.start + take]
        .copy_from_slice(&pkt.payload[..take]);
    Ok(PacketVector { bytes })
}

/// Align the first `n` packets of a session and normalize bytes to `[0, 1]`.
pub fn build_tensor(
    session: &Session,
    n: usize,
    label: u16,
    source_id: impl Into<String>,
) -> Result<SessionTensor, ReprError> {
    assert!(n >= 1, "session length must be at least 1");
    let n_real = session.packets.len().min(n);
    let mut data = vec![0f32; n * PACKET_VECTOR_LEN];
    for (row, pkt) in session.packets.iter().take(n).enumerate() {
        let aligned = align_packet(pkt)?;
        for (dst, &b) in data[row * PACKET_VECTOR_LEN..(row + 1) * PACKET_VECTOR_LEN]
            .iter_mut()
            .zip(&aligned.bytes)
        {
            *dst = b as f32 / 255.0;
        }
    }
    Ok(SessionTensor {
        rows: n as u16,
        n_real: n_real as u16,
        label,
        source_id: source_id.into(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcap::{Endpoint, FiveTuple, FlowKey, TcpFlags, TcpMeta};

    fn endpoint(last_octet: u8, port: u16) -> Endpoint {
        Endpoint::new(Ipv4Addr::new(10, 0, 0, last_octet), port)
    }

    fn ip_header(src: Ipv4Addr, dst: Ipv4Addr) -> Vec<u8> {
        let mut h = vec![0u8; 20];
        h[0] = 0x45;
        h[12..16].copy_from_slice(&src.octets());
        h[16..20].copy_from_slice(&dst.octets());
        h
    }

    fn packet(src: Endpoint, dst: Endpoint, proto: TransportProto, payload: Vec<u8>) -> RawPacket {
        let transport_header = match proto {
            TransportProto::Tcp => vec![1u8; 20],
            TransportProto::Udp => vec![2u8; 8],
        };
        RawPacket {
            ts_micros: 0,
            link_bytes: vec![0xFF; 14],
            ip_header: ip_header(src.ip, dst.ip),
            transport_header,
            payload,
            five_tuple: FiveTuple { src, dst, proto },
            tcp: match proto {
                TransportProto::Tcp => Some(TcpMeta {
                    flags: TcpFlags::default(),
                    seq: 0,
                }),
                TransportProto::Udp => None,
            },
        }
    }

    fn session(packets: Vec<RawPacket>) -> Session {
        let initiator = packets[0].five_tuple.src;
        Session {
            key: FlowKey::of(&packets[0].five_tuple),
            packets,
            initiator,
            cycle_index: 0,
        }
    }

    #[test]
    fn anonymize_maps_both_directions_consistently() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 80);
        let s = session(vec![
            packet(a, b, TransportProto::Tcp, vec![]),
            packet(b, a, TransportProto::Tcp, vec![]),
            packet(a, b, TransportProto::Tcp, vec![]),
        ]);
        let anon = anonymize(s, false);
        for pkt in &anon.packets {
            assert!(pkt.link_bytes.is_empty());
        }
        assert_eq!(anon.packets[0].five_tuple.src.ip, ANON_INITIATOR);
        assert_eq!(anon.packets[0].five_tuple.dst.ip, ANON_RESPONDER);
        // Reply direction swaps the placeholders.
        assert_eq!(anon.packets[1].five_tuple.src.ip, ANON_RESPONDER);
        assert_eq!(anon.packets[1].five_tuple.dst.ip, ANON_INITIATOR);
        assert_eq!(&anon.packets[1].ip_header[12..16], &[255, 255, 255, 255]);
        assert_eq!(&anon.packets[1].ip_header[16..20], &[0, 0, 0, 0]);
        // No packet retains an original address.
        for pkt in &anon.packets {
            assert_ne!(&pkt.ip_header[12..16], &[10, 0, 0, 1]);
            assert_ne!(&pkt.ip_header[12..16], &[10, 0, 0, 2]);
            assert_ne!(&pkt.ip_header[16..20], &[10, 0, 0, 1]);
            assert_ne!(&pkt.ip_header[16..20], &[10, 0, 0, 2]);
        }
    }

    #[test]
    fn anonymize_single_direction_session() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 53);
        let s = session(vec![
            packet(a, b, TransportProto::Udp, vec![]),
            packet(a, b, TransportProto::Udp, vec![]),
        ]);
        let anon = anonymize(s, false);
        for pkt in &anon.packets {
            assert_eq!(pkt.five_tuple.src.ip, ANON_INITIATOR);
            assert_eq!(pkt.five_tuple.dst.ip, ANON_RESPONDER);
        }
    }

    #[test]
    fn first_only_mode_rewrites_just_the_first_packet() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 80);
        let s = session(vec![
            packet(a, b, TransportProto::Tcp, vec![]),
            packet(b, a, TransportProto::Tcp, vec![]),
        ]);
        let anon = anonymize(s, true);
        assert_eq!(anon.packets[0].five_tuple.src.ip, ANON_INITIATOR);
        assert_eq!(anon.packets[1].five_tuple.src.ip, Ipv4Addr::new(10, 0, 0, 2));
    }

    #[test]
    fn tcp_alignment_layout() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 80);
        let pkt = packet(a, b, TransportProto::Tcp, vec![]);
        let v = align_packet(&pkt).unwrap();
        assert_eq!(&v.bytes[..20], pkt.ip_header.as_slice());
        assert!(v.bytes[20..60].iter().all(|&b| b == 0), "IP padding");
        assert_eq!(&v.bytes[60..80], pkt.transport_header.as_slice());
        assert!(v.bytes[80..120].iter().all(|&b| b == 0), "TCP padding");
        assert!(v.bytes[120..128].iter().all(|&b| b == 0), "UDP placeholder");
        assert!(v.bytes[128..].iter().all(|&b| b == 0), "empty payload");
    }

    #[test]
    fn udp_alignment_layout() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 53);
        let pkt = packet(a, b, TransportProto::Udp, vec![9, 9, 9, 9, 9]);
        let v = align_packet(&pkt).unwrap();
        assert!(v.bytes[60..120].iter().all(|&b| b == 0), "TCP placeholder");
        assert_eq!(&v.bytes[120..128], pkt.transport_header.as_slice());
        assert_eq!(&v.bytes[128..133], &[9, 9, 9, 9, 9]);
        assert!(v.bytes[133..].iter().all(|&b| b == 0));
    }

    #[test]
    fn payload_is_truncated_to_128_bytes() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 80);
        let payload: Vec<u8> = (0..200).map(|i| (i % 251) as u8).collect();
        let pkt = packet(a, b, TransportProto::Tcp, payload.clone());
        let v = align_packet(&pkt).unwrap();
        assert_eq!(&v.bytes[128..256], &payload[..128]);
    }

    #[test]
    fn oversized_header_is_a_parser_bug() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 80);
        let mut pkt = packet(a, b, TransportProto::Tcp, vec![]);
        pkt.ip_header = vec![0; 61];
        assert!(matches!(
            align_packet(&pkt),
            Err(ReprError::HeaderOverflow { kind: "IP", .. })
        ));
    }

    #[test]
    fn normalization_endpoints_and_midpoint() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 80);
        let mut pkt = packet(a, b, TransportProto::Tcp, vec![255, 0, 128]);
        pkt.ip_header = vec![0; 20];
        pkt.transport_header = vec![0; 20];
        let s = session(vec![pkt]);
        let t = build_tensor(&s, 4, 0, "t").unwrap();
        assert_eq!(t.row(0)[128], 1.0);
        assert_eq!(t.row(0)[129], 0.0);
        assert_eq!(t.row(0)[130], 128.0 / 255.0);
    }

    #[test]
    fn padding_rows_are_zero_and_n_real_recorded() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 80);
        let packets: Vec<_> = (0..5)
            .map(|_| packet(a, b, TransportProto::Tcp, vec![1, 2, 3]))
            .collect();
        let t = build_tensor(&session(packets), 16, 3, "x").unwrap();
        assert_eq!(t.n_real, 5);
        assert_eq!(t.rows, 16);
        for row in 5..16 {
            assert!(t.row(row).iter().all(|&v| v == 0.0));
        }
        assert_eq!(t.label, 3);
    }

    #[test]
    fn quantization_recovers_every_byte_exactly() {
        for b in 0u16..=255 {
            let v = b as f32 / 255.0;
            assert!((0.0..=1.0).contains(&v));
            assert_eq!((v * 255.0).round() as u16, b);
        }
    }

    #[test]
    fn long_session_keeps_first_n_packets() {
        let a = endpoint(1, 4000);
        let b = endpoint(2, 80);
        let packets: Vec<_> = (0..10)
            .map(|i| packet(a, b, TransportProto::Tcp, vec![i as u8]))
            .collect();
        let t = build_tensor(&session(packets), 4, 0, "x").unwrap();
        assert_eq!(t.n_real, 4);
        for row in 0..4 {
            assert_eq!(t.row(row)[128], row as f32 / 255.0);
        }
    }
}
