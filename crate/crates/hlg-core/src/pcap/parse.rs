//! Classic (libpcap) capture file parser.
//!
//! Handles both byte orders and both timestamp resolutions via the four
//! magic values. Only Ethernet and raw-IP link types are supported, and
//! only IPv4 TCP/UDP packets are yielded; everything else is counted and
//! skipped.

use super::{
    Endpoint, FiveTuple, PcapError, RawPacket, TcpFlags, TcpMeta, TransportProto,
};
use std::fs::File;
use std::io::{BufReader, Read};
use std::net::Ipv4Addr;
use std::path::Path;

const MAGIC_US_BE: [u8; 4] = [0xA1, 0xB2, 0xC3, 0xD4];
const MAGIC_US_LE: [u8; 4] = [0xD4, 0xC3, 0xB2, 0xA1];
const MAGIC_NS_BE: [u8; 4] = [0xA1, 0xB2, 0x3C, 0x4D];
const MAGIC_NS_LE: [u8; 4] = [0x4D, 0x3C, 0xB2, 0xA1];

const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_RAW_IP: u32 = 101;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_ARP: u16 = 0x0806;
const ETHERTYPE_IPV6: u16 = 0x86DD;

/// Upper bound on a sane captured-record length; larger values indicate a
/// corrupt record header.
const MAX_RECORD_LEN: u32 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
enum ByteOrder {
    Big,
    Little,
}

/// Streaming reader over one capture file. Iteration yields parsed TCP/UDP
/// packets; filtered frames increment the counters instead.
pub struct PcapReader<R> {
    reader: R,
    order: ByteOrder,
    nanos: bool,
    link_type: u32,
    /// ICMP packets and ARP frames skipped.
    pub filtered_icmp_arp: u64,
    /// Non-IP frames, IPv6, other transports, and unparsable frames skipped.
    pub skipped_other: u64,
       /// TCP/UDP packets yielded so far.
    pub parsed: u64,
}

impl PcapReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, PcapError> {
        PcapReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut reader: R) -> Result<Self, PcapError> {
        let mut magic = [0u8; 4];
        reader
            .read_exact(&mut magic)
            .map_err(|_| PcapError::BadMagic)?;
        let (order, nanos) = match magic {
            MAGIC_US_BE => (ByteOrder::Big, false),
            MAGIC_US_LE => (ByteOrder::Little, false),
            MAGIC_NS_BE => (ByteOrder::Big, true),
            MAGIC_NS_LE => (ByteOrder::Little, true),
            _ => return Err(PcapError::BadMagic),
        };
        // version (2x u16), thiszone, sigfigs, snaplen, network
        let mut rest = [0u8; 20];
        reader.read_exact(&mut rest).map_err(|_| PcapError::BadMagic)?;
        let link_type = read_u32(&rest[16..20], order);
        if link_type != LINKTYPE_ETHERNET && link_type != LINKTYPE_RAW_IP {
            return Err(PcapError::UnsupportedLinkType(link_type));
        }
        Ok(Self {
            reader,
            order,
            nanos,
            link_type,
            filtered_icmp_arp: 0,
            skipped_other: 0,
            parsed: 0,
        })
    }

    /// Read the next record, or `None` at a clean end of file.
    fn next_record(&mut self) -> Result<Option<(i64, Vec<u8>)>, PcapError> {
        let mut header = [0u8; 16];
        match self.reader.read(&mut header)? {
            0 => return Ok(None),
            n if n < 16 => {
                self.reader
                    .read_exact(&mut header[n..])
                    .map_err(|_| PcapError::TruncatedRecord { wanted: 16, got: n })?;
            }
            _ => {}
        }
        let ts_sec = read_u32(&header[0..4], self.order) as i64;
        let ts_frac = read_u32(&header[4..8], self.order) as i64;
        let incl_len = read_u32(&header[8..12], self.order);
        if incl_len > MAX_RECORD_LEN {
            return Err(PcapError::TruncatedRecord {
                wanted: incl_len as usize,
                got: 0,
            });
        }
        let micros = if self.nanos { ts_frac / 1000 } else { ts_frac };
        let ts_micros = ts_sec * 1_000_000 + micros;
        let mut frame = vec![0u8; incl_len as usize];
        let mut filled = 0;
        while filled < frame.len() {
            let n = self.reader.read(&mut frame[filled..])?;
            if n == 0 {
                return Err(PcapError::TruncatedRecord {
                    wanted: frame.len(),
                    got: filled,
                });
            }
            filled += n;
        }
        Ok(Some((ts_micros, frame)))
    }

    /// Decode one captured frame, or count and skip it.
    fn decode(&mut self, ts_micros: i64, frame: &[u8]) -> Option<RawPacket> {
        let (link_bytes, ip_slice) = match self.link_type {
            LINKTYPE_ETHERNET => {
                if frame.len() < 14 {
                    self.skipped_other += 1;
                    return None;
                }
                let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
                match ethertype {
                    ETHERTYPE_IPV4 => (frame[..14].to_vec(), &frame[14..]),
                    ETHERTYPE_ARP => {
                        self.filtered_icmp_arp += 1;
                        return None;
                    }
                    ETHERTYPE_IPV6 => {
                        self.skipped_other += 1;
                        return None;
                    }
                    _ => {
                        self.skipped_other += 1;
                        return None;
                    }
                }
            }
            LINKTYPE_RAW_IP => (Vec::new(), frame),
            _ => unreachable!("link type validated in new()"),
        };
        match self.decode_ipv4(ts_micros, link_bytes, ip_slice) {
            Some(pkt) => {
                self.parsed += 1;
                Some(pkt)
            }
            None => None,
        }
    }

    fn decode_ipv4(
        &mut self,
        ts_micros: i64,
        link_bytes: Vec<u8>,
        ip: &[u8],
    ) -> Option<RawPacket> {
        if ip.len() < 20 || ip[0] >> 4 != 4 {
            self.skipped_other += 1;
            return None;
        }
        let ihl = ((ip[0] & 0x0F) as usize) * 4;
        if !(20..=60).contains(&ihl) || ip.len() < ihl {
            self.skipped_other += 1;
            return None;
        }
        let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
        let end = total_len.clamp(ihl, ip.len());
        let protocol = ip[9];
        let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
        let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
        let transport = &ip[ihl..end];
        match protocol {
            1 => {
                self.filtered_icmp_arp += 1;
                None
            }
            6 => {
                if transport.len() < 20 {
                    self.skipped_other += 1;
                    return None;
                }
                let data_offset = ((transport[12] >> 4) as usize) * 4;
                if !(20..=60).contains(&data_offset) || transport.len() < data_offset {
                    self.skipped_other += 1;
                    return None;
                }
                let src_port = u16::from_be_bytes([transport[0], transport[1]]);
                let dst_port = u16::from_be_bytes([transport[2], transport[3]]);
                let seq = u32::from_be_bytes([
                    transport[4],
                    transport[5],
                    transport[6],
                    transport[7],
                ]);
                let flags = TcpFlags::from_byte(transport[13]);
                Some(RawPacket {
                    ts_micros,
                    link_bytes,
                    ip_header: ip[..ihl].to_vec(),
                    transport_header: transport[..data_offset].to_vec(),
                    payload: transport[data_offset..].to_vec(),
                    five_tuple: FiveTuple {
                        src: Endpoint::new(src_ip, src_port),
                        dst: Endpoint::new(dst_ip, dst_port),
                        proto: TransportProto::Tcp,
                    },
                    tcp: Some(TcpMeta { flags, seq }),
                })
            }
            17 => {
                if transport.len() < 8 {
                    self.skipped_other += 1;
                    return None;
                }
                let src_port = u16::from_be_bytes([transport[0], transport[1]]);
                let dst_port = u16::from_be_bytes([transport[2], transport[3]]);
                Some(RawPacket {
                    ts_micros,
                    link_bytes,
                    ip_header: ip[..ihl].to_vec(),
                    transport_header: transport[..8].to_vec(),
                    payload: transport[8..].to_vec(),
                    five_tuple: FiveTuple {
                        src: Endpoint::new(src_ip, src_port),
                        dst: Endpoint::new(dst_ip, dst_port),
                        proto: TransportProto::Udp,
                    },
                    tcp: None,
                })
            }
            _ => {
                self.skipped_other += 1;
                None
            }
        }
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<RawPacket, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.next_record() {
                Ok(None) => return None,
                Err(e) => return Some(Err(e)),
                Ok(Some((ts, frame))) => {
                    if let Some(pkt) = self.decode(ts, &frame) {
                        return Some(Ok(pkt));
                    }
                }
            }
        }
    }
}

/// Open a capture file for streaming packet iteration.
pub fn parse_pcap(path: &Path) -> Result<PcapReader<BufReader<File>>, PcapError> {
    PcapReader::open(path)
}

fn read_u32(b: &[u8], order: ByteOrder) -> u32 {
    let arr = [b[0], b[1], b[2], b[3]];
    match order {
        ByteOrder::Big => u32::from_be_bytes(arr),
        ByteOrder::Little => u32::from_le_bytes(arr),
    }
}
