//! Shared test support: hand-authored capture files built byte by byte
//! from the on-wire layouts (independent of the library's parser), expected
//! tensor-row construction from the documented 60/68/128 alignment, and a
//! straight-line reference implementation of the bidirectional recurrence.

#![allow(dead_code)]

use hlg_core::tensor::Params;

// ---- capture-file building ----

pub const CLIENT_IP: [u8; 4] = [10, 0, 0, 1];
pub const SERVER_IP: [u8; 4] = [10, 0, 0, 2];
pub const CLIENT_MAC: [u8; 6] = [0x02, 0x00, 0x00, 0x00, 0x00, 0x01];
pub const SERVER_MAC: [u8; 6] = [0x02, 0x00, 0x00, 0x00, 0x00, 0x02];

pub const SYN: u8 = 0x02;
pub const SYN_ACK: u8 = 0x12;
pub const ACK: u8 = 0x10;
pub const PSH_ACK: u8 = 0x18;
pub const FIN_ACK: u8 = 0x11;
pub const RST: u8 = 0x04;

/// One captured frame: timestamp plus raw bytes.
#[derive(Clone)]
pub struct Frame {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub bytes: Vec<u8>,
}

/// Assemble a classic little-endian microsecond capture file.
pub fn pcap_file(frames: &[Frame]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0xA1B2_C3D4u32.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // major
    out.extend_from_slice(&4u16.to_le_bytes()); // minor
    out.extend_from_slice(&0i32.to_le_bytes()); // thiszone
    out.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
    out.extend_from_slice(&65535u32.to_le_bytes()); // snaplen
    out.extend_from_slice(&1u32.to_le_bytes()); // Ethernet
    for frame in frames {
        out.extend_from_slice(&frame.ts_sec.to_le_bytes());
        out.extend_from_slice(&frame.ts_usec.to_le_bytes());
        out.extend_from_slice(&(frame.bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(frame.bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&frame.bytes);
    }
    out
}

/// Same frames in the big-endian nanosecond variant.
pub fn pcap_file_be_nanos(frames: &[Frame]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&[0xA1, 0xB2, 0x3C, 0x4D]);
    out.extend_from_slice(&2u16.to_be_bytes());
    out.extend_from_slice(&4u16.to_be_bytes());
    out.extend_from_slice(&0i32.to_be_bytes());
    out.extend_from_slice(&0u32.to_be_bytes());
    out.extend_from_slice(&65535u32.to_be_bytes());
    out.extend_from_slice(&1u32.to_be_bytes());
    for frame in frames {
        out.extend_from_slice(&frame.ts_sec.to_be_bytes());
        out.extend_from_slice(&(frame.ts_usec * 1000).to_be_bytes());
        out.extend_from_slice(&(frame.bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&(frame.bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&frame.bytes);
    }
    out
}

pub fn ethernet(dst: [u8; 6], src: [u8; 6], ethertype: u16, payload: &[u8]) -> Vec<u8> {
    let mut f = Vec::with_capacity(14 + payload.len());
    f.extend_from_slice(&dst);
    f.extend_from_slice(&src);
    f.extend_from_slice(&ethertype.to_be_bytes());
    f.extend_from_slice(payload);
    f
}

/// Plain 20-byte IPv4 header. Identification, flags, and checksum stay
/// zero; total length covers header plus payload.
pub fn ipv4(src: [u8; 4], dst: [u8; 4], proto: u8, payload_len: usize) -> Vec<u8> {
    let mut h = vec![0u8; 20];
    h[0] = 0x45;
    let total = (20 + payload_len) as u16;
    h[2..4].copy_from_slice(&total.to_be_bytes());
    h[8] = 64;
    h[9] = proto;
    h[12..16].copy_from_slice(&src);
    h[16..20].copy_from_slice(&dst);
    h
}

/// 20-byte TCP header, data offset 5, window 512.
pub fn tcp_header(sport: u16, dport: u16, seq: u32, flags: u8) -> Vec<u8> {
    let mut h = vec![0u8; 20];
    h[0..2].copy_from_slice(&sport.to_be_bytes());
    h[2..4].copy_from_slice(&dport.to_be_bytes());
    h[4..8].copy_from_slice(&seq.to_be_bytes());
    h[12] = 0x50;
    h[13] = flags;
    h[14..16].copy_from_slice(&512u16.to_be_bytes());
    h
}

pub fn udp_header(sport: u16, dport: u16, payload_len: usize) -> Vec<u8> {
    let mut h = vec![0u8; 8];
    h[0..2].copy_from_slice(&sport.to_be_bytes());
    h[2..4].copy_from_slice(&dport.to_be_bytes());
    h[4..6].copy_from_slice(&((8 + payload_len) as u16).to_be_bytes());
    h
}

/// TCP frame from the client side (or server when `from_client` is false).
pub fn tcp_frame(
    from_client: bool,
    ports: (u16, u16),
    seq: u32,
    flags: u8,
    payload: &[u8],
    ts: (u32, u32),
) -> Frame {
    let (src_ip, dst_ip, src_mac, dst_mac, sport, dport) = if from_client {
        (CLIENT_IP, SERVER_IP, CLIENT_MAC, SERVER_MAC, ports.0, ports.1)
    } else {
        (SERVER_IP, CLIENT_IP, SERVER_MAC, CLIENT_MAC, ports.1, ports.0)
    };
    let tcp = tcp_header(sport, dport, seq, flags);
    let mut ip_payload = tcp;
    ip_payload.extend_from_slice(payload);
    let ip = ipv4(src_ip, dst_ip, 6, ip_payload.len());
    let mut packet = ip;
    packet.extend_from_slice(&ip_payload);
    Frame {
        ts_sec: ts.0,
        ts_usec: ts.1,
        bytes: ethernet(dst_mac, src_mac, 0x0800, &packet),
    }
}

pub fn udp_frame(
    from_client: bool,
    ports: (u16, u16),
    payload: &[u8],
    ts: (u32, u32),
) -> Frame {
    let (src_ip, dst_ip, src_mac, dst_mac, sport, dport) = if from_client {
        (CLIENT_IP, SERVER_IP, CLIENT_MAC, SERVER_MAC, ports.0, ports.1)
    } else {
        (SERVER_IP, CLIENT_IP, SERVER_MAC, CLIENT_MAC, ports.1, ports.0)
    };
    let udp = udp_header(sport, dport, payload.len());
    let mut ip_payload = udp;
    ip_payload.extend_from_slice(payload);
    let ip = ipv4(src_ip, dst_ip, 17, ip_payload.len());
    let mut packet = ip;
    packet.extend_from_slice(&ip_payload);
    Frame {
        ts_sec: ts.0,
        ts_usec: ts.1,
        bytes: ethernet(dst_mac, src_mac, 0x0800, &packet),
    }
}

pub fn arp_frame(ts: (u32, u32)) -> Frame {
    // Minimal ARP request body; content is irrelevant, the ethertype is.
    let body = vec![0u8; 28];
    Frame {
        ts_sec: ts.0,
        ts_usec: ts.1,
        bytes: ethernet([0xFF; 6], CLIENT_MAC, 0x0806, &body),
    }
}

pub fn icmp_frame(ts: (u32, u32)) -> Frame {
    let icmp = vec![8, 0, 0, 0, 0, 0, 0, 0]; // echo request
    let ip = ipv4(CLIENT_IP, SERVER_IP, 1, icmp.len());
    let mut packet = ip;
    packet.extend_from_slice(&icmp);
    Frame {
        ts_sec: ts.0,
        ts_usec: ts.1,
        bytes: ethernet(SERVER_MAC, CLIENT_MAC, 0x0800, &packet),
    }
}

// ---- expected tensor rows ----

/// Build the expected normalized 256-value row straight from the layout:
/// IP header at 0..60, TCP at 60..120 or UDP at 120..128, payload at
/// 128..256, then divide by 255.
pub fn expected_row(ip_header: &[u8], transport: &[u8], is_tcp: bool, payload: &[u8]) -> Vec<f32> {
    let mut bytes = [0u8; 256];
    bytes[..ip_header.len()].copy_from_slice(ip_header);
    if is_tcp {
        bytes[60..60 + transport.len()].copy_from_slice(transport);
    } else {
        bytes[120..120 + transport.len()].copy_from_slice(transport);
    }
    let take = payload.len().min(128);
    bytes[128..128 + take].copy_from_slice(&payload[..take]);
    bytes.iter().map(|&b| b as f32 / 255.0).collect()
}

/// The anonymized 20-byte IPv4 header a fixture packet should produce:
/// initiator address 0.0.0.0, responder 255.255.255.255, checksum stale.
pub fn anon_ipv4(from_initiator: bool, proto: u8, payload_len: usize) -> Vec<u8> {
    let (src, dst) = if from_initiator {
        ([0u8; 4], [255u8; 4])
    } else {
        ([255u8; 4], [0u8; 4])
    };
    ipv4(src, dst, proto, payload_len)
}

// ---- straight-line recurrence reference ----

/// Plain-array GRU parameters for one direction of one layer, pulled from
/// the named parameter store.
pub struct RefCell {
    pub w: [Vec<f64>; 3], // update, reset, candidate input weights (d x in)
    pub u: [Vec<f64>; 3], // recurrent weights (d x d)
    pub b: [Vec<f64>; 3],
    pub d: usize,
    pub input: usize,
}

impl RefCell {
    pub fn from_params(params: &Params<f64>, prefix: &str, d: usize, input: usize) -> Self {
        let get = |name: &str| -> Vec<f64> {
            params
                .get(&format!("{prefix}.{name}"))
                .unwrap_or_else(|| panic!("missing {prefix}.{name}"))
                .data()
                .to_vec()
        };
        Self {
            w: [get("Wz"), get("Wr"), get("Wn")],
            u: [get("Uz"), get("Ur"), get("Un")],
            b: [get("bz"), get("br"), get("bn")],
            d,
            input,
        }
    }

    fn matvec(m: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
        let cols = x.len();
        (0..rows)
            .map(|i| x.iter().enumerate().map(|(j, &v)| m[i * cols + j] * v).sum())
            .collect()
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let wz = Self::matvec(&self.w[0], self.d, x);
        let uz = Self::matvec(&self.u[0], self.d, h);
        let wr = Self::matvec(&self.w[1], self.d, x);
        let ur = Self::matvec(&self.u[1], self.d, h);
        let wn = Self::matvec(&self.w[2], self.d, x);
        let un = Self::matvec(&self.u[2], self.d, h);
        (0..self.d)
            .map(|i| {
                let z = sig(wz[i] + uz[i] + self.b[0][i]);
                let r = sig(wr[i] + ur[i] + self.b[1][i]);
                let n = (wn[i] + r * un[i] + self.b[2][i]).tanh();
                (1.0 - z) * n + z * h[i]
            })
            .collect()
    }
}

/// Straight-line stacked bidirectional GRU: forward scan, backward scan,
/// per-step concatenation feeding the next layer, and the summary built
/// from each layer's final forward and final backward states.
pub fn ref_bigru(
    params: &Params<f64>,
    scope: &str,
    seq: &[Vec<f64>],
    d: usize,
    layers: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let steps = seq.len();
    let mut inputs: Vec<Vec<f64>> = seq.to_vec();
    let mut summary = Vec::new();
    for layer in 1..=layers {
        let input_width = inputs[0].len();
        let fwd = RefCell::from_params(
            params,
            &format!("{scope}.layer{layer}.fwd"),
            d,
            input_width,
        );
        let bwd = RefCell::from_params(
            params,
            &format!("{scope}.layer{layer}.bwd"),
            d,
            input_width,
        );

        let mut fwd_states = Vec::with_capacity(steps);
        let mut h = vec![0.0; d];
        for x in &inputs {
            h = fwd.step(x, &h);
            fwd_states.push(h.clone());
        }
        let mut bwd_states = vec![Vec::new(); steps];
        let mut h = vec![0.0; d];
        for t in (0..steps).rev() {
            h = bwd.step(&inputs[t], &h);
            bwd_states[t] = h.clone();
        }

        summary.extend_from_slice(&fwd_states[steps - 1]);
        summary.extend_from_slice(&bwd_states[0]);

        inputs = (0..steps)
            .map(|t| {
                let mut v = fwd_states[t].clone();
                v.extend_from_slice(&bwd_states[t]);
                v
            })
            .collect();
    }
    (inputs, summary)
}
