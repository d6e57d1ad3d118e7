//! Binary layout frames shared by the one-shot layout endpoint and the
//! streaming channel.
//!
//! All integers and floats are little-endian:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `HPLF` |
//! | 4 | 1 | version (1) |
//! | 5 | 1 | flags: bit 0 labels present, bit 1 extrapolated |
//! | 6 | 2 | `h_len`, number of h components (u16) |
//! | 8 | 8 | sequence number (u64) |
//! | 16 | 4 | point count `n` (u32) |
//! | 20 | 8·h_len | h echo (f64) |
//! | … | 8·n | coordinates, x then y per point (f32) |
//! | … | 4·n | labels (i32), only with flag bit 0 |

pub const FRAME_MAGIC: &[u8; 4] = b"HPLF";
pub const FRAME_VERSION: u8 = 1;
pub const FLAG_LABELS: u8 = 1;
pub const FLAG_EXTRAPOLATED: u8 = 2;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutFrame {
    pub seq: u64,
    pub h: Vec<f64>,
    pub extrapolated: bool,
    /// Row-major `x, y` pairs.
    pub coords: Vec<f32>,
    pub labels: Option<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameError(pub String);

impl std::fmt::Display for FrameError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "bad layout frame: {}", self.0)
    }
}

impl std::error::Error for FrameError {}

impl LayoutFrame {
    pub fn points(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn encode(&self) -> Vec<u8> {
        let n = self.points();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.h.len() + 12 * n);
        out.extend_from_slice(FRAME_MAGIC);
        out.push(FRAME_VERSION);
        let mut flags = 0;
        if self.labels.is_some() {
            flags |= FLAG_LABELS;
        }
        if self.extrapolated {
            flags |= FLAG_EXTRAPOLATED;
        }
        out.push(flags);
        out.extend_from_slice(&(self.h.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        for v in &self.h {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.coords {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for v in labels {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != FRAME_MAGIC {
            return Err(FrameError("wrong magic".into()));
        }
        if bytes[4] != FRAME_VERSION {
            return Err(FrameError(format!("unsupported version {}", bytes[4])));
        }
        let flags = bytes[5];
        let h_len = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let seq = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let n = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize;
        let labels_len = if flags & FLAG_LABELS != 0 { 4 * n } else { 0 };
        let want = HEADER_LEN + 8 * h_len + 8 * n + labels_len;
        if bytes.len() != want {
            return Err(FrameError(format!("expected {want} bytes, got {}", bytes.len())));
        }
        let mut at = HEADER_LEN;
        let h = bytes[at..at + 8 * h_len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        at += 8 * h_len;
        let coords = bytes[at..at + 8 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        at += 8 * n;
        let labels = (flags & FLAG_LABELS != 0).then(|| {
            bytes[at..]
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect()
        });
        Ok(Self {
            seq,
            h,
            extrapolated: flags & FLAG_EXTRAPOLATED != 0,
            coords,
            labels,
        })
    }
}
