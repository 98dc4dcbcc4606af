//! Splitting a five-tuple packet group into independent interaction cycles.

use super::{
    group_by_five_tuple, Endpoint, FlowKey, IngestStats, RawPacket, Session, TransportProto,
};
use std::collections::HashSet;

/// Adjacent-packet gap that ends a UDP interaction cycle.
const UDP_GAP_MICROS: i64 = 60_000_000;
/// Span from the first packet of a cycle that ends it.
const UDP_SPAN_MICROS: i64 = 120_000_000;

/// Cycles with this many packets or fewer carry no usable signal.
const MIN_SESSION_PACKETS: usize = 3;

struct TcpCycle {
    packets: Vec<RawPacket>,
    initiator: Endpoint,
    started_with_syn: bool,
    /// Dedup key: (from_initiator, sequence number, payload length).
    seen: HashSet<(bool, u32, usize)>,
    fin_fwd: bool,
    fin_bwd: bool,
    rst: bool,
}

impl TcpCycle {
    fn start(first_src: Endpoint, started_with_syn: bool) -> Self {
        Self {
            packets: Vec::new(),
            initiator: first_src,
            started_with_syn,
            seen: HashSet::new(),
            fin_fwd: false,
            fin_bwd: false,
            rst: false,
        }
    }

    /// Torn down in both directions, or aborted by a reset.
    fn closed(&self) -> bool {
        self.rst || (self.fin_fwd && self.fin_bwd)
    }
}

/// Split one TCP flow group into interaction cycles.
///
/// A new cycle opens at each connection-opening SYN that follows a closed
/// (FIN exchange in both directions, or RST) prior cycle. Packets arriving
/// before any SYN form a cycle of their own, so truncated captures are kept
/// rather than dropped. Within a cycle, duplicate (direction, seq, payload
/// length) packets are dropped keeping the first copy, and each direction
/// is then stably re-sorted by sequence number.
pub fn split_tcp_cycles(packets: Vec<RawPacket>, stats: &mut IngestStats) -> Vec<Session> {
    let Some(first) = packets.first() else {
        return Vec::new();
    };
    debug_assert!(packets.iter().all(|p| p.tcp.is_some()));
    let key = FlowKey::of(&first.five_tuple);

    let mut cycles: Vec<TcpCycle> = Vec::new();
    let mut cur: Option<TcpCycle> = None;
    for pkt in packets {
        let meta = pkt.tcp.expect("TCP packet in a TCP flow");
        if let Some(cycle) = &cur {
            // An opening SYN starts a fresh cycle once the previous one is
            // closed; it also seals a leading orphan cycle that never had
            // a handshake.
            if meta.flags.is_pure_syn() && (cycle.closed() || !cycle.started_with_syn) {
                cycles.push(cur.take().expect("checked above"));
            }
        }
        let cycle = cur.get_or_insert_with(|| {
            TcpCycle::start(pkt.five_tuple.src, meta.flags.is_pure_syn())
        });
        let from_initiator = pkt.five_tuple.src == cycle.initiator;
        // Flag state is tracked before dedup so a retransmitted FIN or RST
        // still closes the cycle.
        if meta.flags.rst {
            cycle.rst = true;
        }
        if meta.flags.fin {
            if from_initiator {
                cycle.fin_fwd = true;
            } else {
                cycle.fin_bwd = true;
            }
        }
        if !cycle.seen.insert((from_initiator, meta.seq, pkt.payload.len())) {
            stats.retransmissions_dropped += 1;
            continue;
        }
        cycle.packets.push(pkt);
    }
    if let Some(cycle) = cur {
        cycles.push(cycle);
    }

    let mut sessions = Vec::new();
    for (idx, cycle) in cycles.into_iter().enumerate() {
        let initiator = cycle.initiator;
        let ordered = resort_by_seq(cycle.packets, initiator);
        if let Some(session) = emit(key, ordered, initiator, idx as u32, stats) {
            sessions.push(session);
        }
    }
    sessions
}

/// Stably re-sort each direction by sequence number while keeping the two
/// directions interleaved in their captured slots. Ordering uses the signed
/// 32-bit distance from the direction's first captured sequence number, so
/// wraparound at 2^32 compares correctly.
fn resort_by_seq(packets: Vec<RawPacket>, initiator: Endpoint) -> Vec<RawPacket> {
    let from_initiator: Vec<bool> = packets
        .iter()
        .map(|p| p.five_tuple.src == initiator)
        .collect();

    let direction_order = |dir: bool| -> Vec<usize> {
        let idxs: Vec<usize> = (0..packets.len())
            .filter(|&i| from_initiator[i] == dir)
            .collect();
        let Some(&first) = idxs.first() else {
            return idxs;
        };
        let base = packets[first].tcp.expect("TCP packet").seq;
        let mut sorted = idxs;
        sorted.sort_by_key(|&i| packets[i].tcp.expect("TCP packet").seq.wrapping_sub(base) as i32);
        sorted
    };

    let fwd = direction_order(true);
    let bwd = direction_order(false);
    let mut slots: Vec<Option<RawPacket>> = packets.into_iter().map(Some).collect();
    let (mut fi, mut bi) = (0, 0);
    let mut out = Vec::with_capacity(slots.len());
    for dir in from_initiator {
        let src = if dir {
            fi += 1;
            fwd[fi - 1]
        } else {
            bi += 1;
            bwd[bi - 1]
        };
        out.push(slots[src].take().expect("each slot moved once"));
    }
    out
}

/// Split one UDP flow group into interaction cycles on time gaps. UDP has
/// no sequencing, so capture order is authoritative: no reordering and no
/// retransmission filtering.
pub fn split_udp_cycles(packets: Vec<RawPacket>, stats: &mut IngestStats) -> Vec<Session> {
    let Some(first) = packets.first() else {
        return Vec::new();
    };
    let key = FlowKey::of(&first.five_tuple);

    let mut cycles: Vec<Vec<RawPacket>> = Vec::new();
    let mut cur: Vec<RawPacket> = Vec::new();
    for pkt in packets {
        if let (Some(last), Some(head)) = (cur.last(), cur.first()) {
            let gap = pkt.ts_micros - last.ts_micros;
            let span = pkt.ts_micros - head.ts_micros;
            if gap > UDP_GAP_MICROS || span > UDP_SPAN_MICROS {
                cycles.push(std::mem::take(&mut cur));
            }
        }
        cur.push(pkt);
    }
    if !cur.is_empty() {
        cycles.push(cur);
    }

    let mut sessions = Vec::new();
    for (idx, cycle) in cycles.into_iter().enumerate() {
        let initiator = cycle[0].five_tuple.src;
        if let Some(session) = emit(key, cycle, initiator, idx as u32, stats) {
            sessions.push(session);
        }
    }
    sessions
}

fn emit(
    key: FlowKey,
    packets: Vec<RawPacket>,
    initiator: Endpoint,
    cycle_index: u32,
    stats: &mut IngestStats,
) -> Option<Session> {
    if packets.len() < MIN_SESSION_PACKETS {
        stats.short_sessions_dropped += 1;
        stats.short_session_packets += packets.len() as u64;
        return None;
    }
    stats.sessions_emitted += 1;
    Some(Session {
        key,
        packets,
        initiator,
        cycle_index,
    })
}

/// Group a packet stream by five-tuple and split every group into sessions.
pub fn sessionize(packets: Vec<RawPacket>, stats: &mut IngestStats) -> Vec<Session> {
    let groups = group_by_five_tuple(packets);
    let mut sessions = Vec::new();
    for (key, group) in groups {
        match key.proto() {
            TransportProto::Tcp => sessions.extend(split_tcp_cycles(group, stats)),
            TransportProto::Udp => sessions.extend(split_udp_cycles(group, stats)),
        }
    }
    sessions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcap::{FiveTuple, TcpFlags, TcpMeta};
    use std::net::Ipv4Addr;

    const CLIENT: Endpoint = Endpoint {
        ip: Ipv4Addr::new(10, 0, 0, 1),
        port: 40000,
    };
    const SERVER: Endpoint = Endpoint {
        ip: Ipv4Addr::new(10, 0, 0, 2),
        port: 80,
    };

    fn tcp(src: Endpoint, dst: Endpoint, seq: u32, flag_byte: u8, payload: usize) -> RawPacket {
        RawPacket {
            ts_micros: 0,
            link_bytes: Vec::new(),
            ip_header: vec![0; 20],
            transport_header: vec![0; 20],
            payload: vec![0xAA; payload],
            five_tuple: FiveTuple {
                src,
                dst,
                proto: TransportProto::Tcp,
            },
            tcp: Some(TcpMeta {
                flags: TcpFlags::from_byte(flag_byte),
                seq,
            }),
        }
    }

    fn udp_at(ts_seconds: i64) -> RawPacket {
        RawPacket {
            ts_micros: ts_seconds * 1_000_000,
            link_bytes: Vec::new(),
            ip_header: vec![0; 20],
            transport_header: vec![0; 8],
            payload: Vec::new(),
            five_tuple: FiveTuple {
                src: CLIENT,
                dst: SERVER,
                proto: TransportProto::Udp,
            },
            tcp: None,
        }
    }

    const SYN: u8 = 0x02;
    const SYN_ACK: u8 = 0x12;
    const ACK: u8 = 0x10;
    const PSH_ACK: u8 = 0x18;
    const FIN_ACK: u8 = 0x11;
    const RST: u8 = 0x04;

    fn handshake(seq_c: u32, seq_s: u32) -> Vec<RawPacket> {
        vec![
            tcp(CLIENT, SERVER, seq_c, SYN, 0),
            tcp(SERVER, CLIENT, seq_s, SYN_ACK, 0),
            tcp(CLIENT, SERVER, seq_c + 1, ACK, 0),
        ]
    }

    fn teardown(seq_c: u32, seq_s: u32) -> Vec<RawPacket> {
        vec![
            tcp(CLIENT, SERVER, seq_c, FIN_ACK, 0),
            tcp(SERVER, CLIENT, seq_s, ACK, 0),
            tcp(SERVER, CLIENT, seq_s, FIN_ACK, 1),
            tcp(CLIENT, SERVER, seq_c + 1, ACK, 0),
        ]
    }

    #[test]
    fn port_reuse_yields_two_sessions() {
        let mut group = handshake(100, 500);
        group.push(tcp(CLIENT, SERVER, 101, PSH_ACK, 10));
        group.extend(teardown(111, 501));
        let second_start = group.len();
        group.extend(handshake(9000, 9500));
        group.push(tcp(SERVER, CLIENT, 9501, PSH_ACK, 4));

        let mut stats = IngestStats::default();
        let sessions = split_tcp_cycles(group, &mut stats);
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].packets.len(), second_start);
        assert_eq!(sessions[1].packets.len(), 4);
        assert_eq!(sessions[0].cycle_index, 0);
        assert_eq!(sessions[1].cycle_index, 1);
        assert_eq!(stats.sessions_emitted, 2);
        assert_eq!(stats.retransmissions_dropped, 0);
    }

    #[test]
    fn out_of_order_data_is_restored_by_seq() {
        let mut group = handshake(100, 500);
        group.push(tcp(CLIENT, SERVER, 112, PSH_ACK, 10)); // captured early
        group.push(tcp(CLIENT, SERVER, 102, PSH_ACK, 10));
        let mut stats = IngestStats::default();
        let sessions = split_tcp_cycles(group, &mut stats);
        assert_eq!(sessions.len(), 1);
        let seqs: Vec<u32> = sessions[0]
            .packets
            .iter()
            .filter(|p| p.five_tuple.src == CLIENT)
            .map(|p| p.tcp.unwrap().seq)
            .collect();
        assert_eq!(seqs, vec![100, 101, 102, 112]);
    }

    #[test]
    fn retransmission_is_dropped_keeping_first() {
        let mut group = handshake(100, 500);
        group.push(tcp(CLIENT, SERVER, 101, PSH_ACK, 7));
        group.push(tcp(CLIENT, SERVER, 101, PSH_ACK, 7));
        let mut stats = IngestStats::default();
        let sessions = split_tcp_cycles(group, &mut stats);
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].packets.len(), 4);
        assert_eq!(stats.retransmissions_dropped, 1);
    }

    #[test]
    fn distinct_segments_sharing_a_seq_are_kept() {
        let mut group = handshake(100, 500);
        group.push(tcp(CLIENT, SERVER, 101, PSH_ACK, 7));
        group.push(tcp(CLIENT, SERVER, 101, PSH_ACK, 9)); // different length
        let mut stats = IngestStats::default();
        let sessions = split_tcp_cycles(group, &mut stats);
        assert_eq!(sessions[0].packets.len(), 5);
        assert_eq!(stats.retransmissions_dropped, 0);
    }

    #[test]
    fn orphan_packets_before_any_syn_form_their_own_session() {
        let mut group = vec![
            tcp(CLIENT, SERVER, 700, PSH_ACK, 3),
            tcp(SERVER, CLIENT, 900, ACK, 0),
            tcp(CLIENT, SERVER, 703, PSH_ACK, 3),
        ];
        group.extend(handshake(100, 500));
        group.push(tcp(CLIENT, SERVER, 101, PSH_ACK, 1));
        let mut stats = IngestStats::default();
        let sessions = split_tcp_cycles(group, &mut stats);
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].packets.len(), 3);
        assert!(!sessions[0].packets[0].tcp.unwrap().flags.syn);
        assert_eq!(sessions[1].packets.len(), 4);
    }

    #[test]
    fn rst_closes_a_cycle_like_teardown() {
        let mut group = handshake(100, 500);
        group.push(tcp(SERVER, CLIENT, 501, RST, 0));
        group.extend(handshake(5000, 6000));
        let mut stats = IngestStats::default();
        let sessions = split_tcp_cycles(group, &mut stats);
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].packets.len(), 4);
        assert_eq!(sessions[1].packets.len(), 3);
    }

    #[test]
    fn seq_wraparound_orders_across_the_boundary() {
        let mut group = handshake(u32::MAX - 1, 500);
        // Continuation seq 1 wrapped past 2^32; it must sort after the
        // pre-wrap segments.
        group.push(tcp(CLIENT, SERVER, 1, PSH_ACK, 5));
        group.push(tcp(CLIENT, SERVER, u32::MAX, PSH_ACK, 2));
        let mut stats = IngestStats::default();
        let sessions = split_tcp_cycles(group, &mut stats);
        let seqs: Vec<u32> = sessions[0]
            .packets
            .iter()
            .filter(|p| p.five_tuple.src == CLIENT)
            .map(|p| p.tcp.unwrap().seq)
            .collect();
        // The bare handshake ACK and the 2-byte segment share seq MAX and
        // keep capture order under the stable sort.
        assert_eq!(seqs, vec![u32::MAX - 1, u32::MAX, u32::MAX, 1]);
    }

    #[test]
    fn udp_adjacent_gap_splits_and_short_cycles_drop() {
        // Gap 65 s between 30 and 95 splits; both fragments are too short.
        let group = vec![udp_at(0), udp_at(30), udp_at(95)];
        let mut stats = IngestStats::default();
        let sessions = split_udp_cycles(group, &mut stats);
        assert!(sessions.is_empty());
        assert_eq!(stats.short_sessions_dropped, 2);
        assert_eq!(stats.short_session_packets, 3);
    }

    #[test]
    fn udp_span_from_first_packet_splits() {
        // Gaps 50/50/30 all pass, but 130 - 0 exceeds the 120 s span rule.
        let group = vec![udp_at(0), udp_at(50), udp_at(100), udp_at(130)];
        let mut stats = IngestStats::default();
        let sessions = split_udp_cycles(group, &mut stats);
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].packets.len(), 3);
        assert_eq!(stats.short_sessions_dropped, 1);
    }

    #[test]
    fn udp_tight_cycle_stays_whole() {
        let group = vec![udp_at(0), udp_at(1), udp_at(2)];
        let mut stats = IngestStats::default();
        let sessions = split_udp_cycles(group, &mut stats);
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].packets.len(), 3);
    }

    #[test]
    fn packet_conservation_reconciles() {
        let mut group = handshake(100, 500);
        group.push(tcp(CLIENT, SERVER, 101, PSH_ACK, 7));
        group.push(tcp(CLIENT, SERVER, 101, PSH_ACK, 7)); // retransmission
        group.extend(teardown(108, 501));
        group.extend(handshake(7000, 8000)); // reuse, but only 3 packets
        let parsed = group.len() as u64;

        let mut stats = IngestStats::default();
        let sessions = sessionize(group, &mut stats);
        let in_sessions: u64 = sessions.iter().map(|s| s.packets.len() as u64).sum();
        assert_eq!(
            parsed,
            in_sessions + stats.retransmissions_dropped + stats.short_session_packets
        );
    }
}
