//! Synthetic labeled corpus for end-to-end exercises without real captures.
//!
//! Two malicious session families are separable from benign noise and from
//! each other on two axes: payload byte signatures (each family tiles its
//! own motif where benign payloads are uniform noise) and interaction
//! rhythm (packet counts, direction patterns, and transport protocol).
//! Sessions are assembled as real packet structs and pushed through the
//! standard anonymize/align/normalize pipeline.

use crate::pcap::{Endpoint, FiveTuple, FlowKey, RawPacket, Session, TcpFlags, TcpMeta, TransportProto};
use crate::repr::{anonymize, build_tensor, Dataset};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::net::Ipv4Addr;

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    /// Session length for the emitted tensors.
    pub n: u16,
    pub benign_sessions: usize,
    pub sessions_per_family: usize,
    /// Malicious families, labeled 1, 2, ...
    pub families: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 16,
            benign_sessions: 200,
            sessions_per_family: 100,
            families: 2,
            seed: 0,
        }
    }
}

const FAMILY_NAMES: [&str; 6] = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];

/// Per-family fixed traits.
struct FamilyProfile {
    motif: [u8; 8],
    proto: TransportProto,
    packet_range: (usize, usize),
    payload_range: (usize, usize),
    /// Packets sent by the initiator before one reply.
    burst: usize,
}

fn family_profile(family: usize) -> FamilyProfile {
    // Motifs are fixed per family so every session shares the signature.
    let base = 0x41 + (family as u8) * 0x27;
    let motif = std::array::from_fn(|i| base.wrapping_add((i as u8) * 0x11));
    if family.is_multiple_of(2) {
        FamilyProfile {
            motif,
            proto: TransportProto::Tcp,
            packet_range: (12, 16),
            payload_range: (64, 96),
            burst: 1,
        }
    } else {
        FamilyProfile {
            motif,
            proto: TransportProto::Udp,
            packet_range: (5, 8),
            payload_range: (20, 40),
            burst: 3,
        }
    }
}

fn ipv4_header(src: Ipv4Addr, dst: Ipv4Addr, proto: TransportProto, payload_len: usize) -> Vec<u8> {
    let mut h = vec![0u8; 20];
    h[0] = 0x45;
    let total = 20
        + match proto {
            TransportProto::Tcp => 20,
            TransportProto::Udp => 8,
        }
        + payload_len;
    h[2..4].copy_from_slice(&(total as u16).to_be_bytes());
    h[8] = 64; // TTL
    h[9] = proto.number();
    h[12..16].copy_from_slice(&src.octets());
    h[16..20].copy_from_slice(&dst.octets());
    h
}

fn tcp_header(sport: u16, dport: u16, seq: u32, flags: u8) -> Vec<u8> {
    let mut h = vec![0u8; 20];
    h[0..2].copy_from_slice(&sport.to_be_bytes());
    h[2..4].copy_from_slice(&dport.to_be_bytes());
    h[4..8].copy_from_slice(&seq.to_be_bytes());
    h[12] = 0x50; // data offset 5 words
    h[13] = flags;
    h
}

fn udp_header(sport: u16, dport: u16, payload_len: usize) -> Vec<u8> {
    let mut h = vec![0u8; 8];
    h[0..2].copy_from_slice(&sport.to_be_bytes());
    h[2..4].copy_from_slice(&dport.to_be_bytes());
    h[4..6].copy_from_slice(&((8 + payload_len) as u16).to_be_bytes());
    h
}

struct SessionSpec {
    proto: TransportProto,
    /// Per packet: sent by initiator, payload bytes.
    packets: Vec<(bool, Vec<u8>)>,
}

fn assemble(spec: SessionSpec, rng: &mut ChaCha8Rng) -> Session {
    let client = Endpoint::new(
        Ipv4Addr::new(10, rng.random_range(0..=255), rng.random_range(0..=255), rng.random_range(1..=254)),
        rng.random_range(1024..=65535),
    );
    let server = Endpoint::new(
        Ipv4Addr::new(172, 16, rng.random_range(0..=255), rng.random_range(1..=254)),
        rng.random_range(1..=1023),
    );
    let mut seq_client: u32 = rng.random();
    let mut seq_server: u32 = rng.random();
    let mut packets = Vec::with_capacity(spec.packets.len());
    for (idx, (from_initiator, payload)) in spec.packets.into_iter().enumerate() {
        let (src, dst) = if from_initiator {
            (client, server)
        } else {
            (server, client)
        };
        let (transport_header, tcp) = match spec.proto {
            TransportProto::Tcp => {
                let (seq, flags) = if from_initiator {
                    let s = seq_client;
                    seq_client = seq_client.wrapping_add(payload.len().max(1) as u32);
                    (s, if idx == 0 { 0x02 } else { 0x18 })
                } else {
                    let s = seq_server;
                    seq_server = seq_server.wrapping_add(payload.len().max(1) as u32);
                    (s, if idx == 1 { 0x12 } else { 0x18 })
                };
                (
                    tcp_header(src.port, dst.port, seq, flags),
                    Some(TcpMeta {
                        flags: TcpFlags::from_byte(flags),
                        seq,
                    }),
                )
            }
            TransportProto::Udp => (udp_header(src.port, dst.port, payload.len()), None),
        };
        packets.push(RawPacket {
            ts_micros: idx as i64 * 1000,
            link_bytes: Vec::new(),
            ip_header: ipv4_header(src.ip, dst.ip, spec.proto, payload.len()),
            transport_header,
            payload,
            five_tuple: FiveTuple {
                src,
                dst,
                proto: spec.proto,
            },
            tcp,
        });
    }
    let key = FlowKey::of(&packets[0].five_tuple);
    Session {
        key,
        packets,
        initiator: client,
        cycle_index: 0,
    }
}

fn family_session(profile: &FamilyProfile, rng: &mut ChaCha8Rng) -> SessionSpec {
    let count = rng.random_range(profile.packet_range.0..=profile.packet_range.1);
    let mut packets = Vec::with_capacity(count);
    for idx in 0..count {
        let from_initiator = match profile.proto {
            // TCP families handshake first, then alternate per burst.
            TransportProto::Tcp => match idx {
                0 => true,
                1 => false,
                _ => (idx / profile.burst).is_multiple_of(2),
            },
            TransportProto::Udp => (idx % (profile.burst + 1)) < profile.burst,
        };
        let payload = if profile.proto == TransportProto::Tcp && idx < 3 {
            Vec::new() // handshake carries no payload
        } else {
            let len = rng.random_range(profile.payload_range.0..=profile.payload_range.1);
            (0..len)
                .map(|i| {
                    let motif_byte = profile.motif[i % profile.motif.len()];
                    // Low-amplitude noise keeps the signature dominant.
                    motif_byte ^ (rng.random_range(0..4u8))
                })
                .collect()
        };
        packets.push((from_initiator, payload));
    }
    SessionSpec {
        proto: profile.proto,
        packets,
    }
}

fn benign_session(rng: &mut ChaCha8Rng) -> SessionSpec {
    let proto = if rng.random_bool(0.5) {
        TransportProto::Tcp
    } else {
        TransportProto::Udp
    };
    let count = rng.random_range(3..=16);
    let packets = (0..count)
        .map(|idx| {
            let from_initiator = if proto == TransportProto::Tcp && idx < 2 {
                idx == 0
            } else {
                rng.random_bool(0.6)
            };
            let payload = if proto == TransportProto::Tcp && idx < 3 {
                Vec::new()
            } else {
                let len = rng.random_range(0..=128usize);
                (0..len).map(|_| rng.random()).collect()
            };
            (from_initiator, payload)
        })
        .collect();
    SessionSpec { proto, packets }
}

/// Generate the corpus: benign label 0 plus one label per family.
pub fn generate(cfg: &SynthConfig) -> Dataset {
    assert!(cfg.families >= 1 && cfg.families <= FAMILY_NAMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dataset = Dataset::new(cfg.n);
    dataset.manifest.insert(0, "benign".into());

    for k in 0..cfg.benign_sessions {
        let session = assemble(benign_session(&mut rng), &mut rng);
        let tensor = build_tensor(
            &anonymize(session, false),
            cfg.n as usize,
            0,
            format!("synth/benign/{k}"),
        )
        .expect("synthetic packets respect header caps");
        dataset.records.push(tensor);
    }

    for (family, &name) in FAMILY_NAMES.iter().enumerate().take(cfg.families) {
        let label = (family + 1) as u16;
        dataset.manifest.insert(label, name.into());
        let profile = family_profile(family);
        for k in 0..cfg.sessions_per_family {
            let session = assemble(family_session(&profile, &mut rng), &mut rng);
            let tensor = build_tensor(
                &anonymize(session, false),
                cfg.n as usize,
                label,
                format!("synth/{name}/{k}"),
            )
            .expect("synthetic packets respect header caps");
            dataset.records.push(tensor);
        }
    }
    dataset
}
