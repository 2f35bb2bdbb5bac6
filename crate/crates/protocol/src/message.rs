//! Protocol messages and their byte encodings.
//!
//! Frame: `len:u32 LE | version:u8 | msg_type:u8 | payload`, where `len`
//! counts everything after itself. Beacons travel in the clear
//! (`msg_type = 6`, payload = message body). Everything else travels as a
//! sealed frame (`msg_type = 0x10`) whose payload decrypts to a signed
//! message: `msg_type:u8 | body_len:u32 | body | sig_len:u32 | sig`, with the
//! signature taken over `msg_type | body`.
//!
//! Body fields are little-endian: strings and byte strings as `u32` length
//! plus bytes, floats as IEEE-754 bit patterns, and RSS sets as a `u32`
//! count followed by `(t_us: i64, rss_centi_db: i32)` pairs.

use pof_core::channel::{ChannelError, RssSample, RssTrace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Credentials, CryptoError, CryptoProvider, Identity};

pub const WIRE_VERSION: u8 = 1;
pub const TYPE_SEALED: u8 = 0x10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("frame truncated: needed {needed} bytes at offset {at}")]
    Truncated { at: usize, needed: usize },
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("{0} trailing bytes after message")]
    Trailing(usize),
    #[error("invalid utf-8 in string field")]
    Utf8,
    #[error("signature does not verify")]
    BadSignature,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("rss set is not a valid trace: {0}")]
    Trace(#[from] ChannelError),
}

/// RSS set in its fixed-point wire form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gamma {
    /// `(timestamp in µs, RSS in 0.01 dB)`.
    pub samples: Vec<(i64, i32)>,
}

impl Gamma {
    pub fn from_trace(trace: &RssTrace) -> Self {
        let samples = trace
            .samples()
            .iter()
            .map(|s| {
                let t = (s.t * 1e6).round() as i64;
                let v = (s.rss * 100.0).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32;
                (t, v)
            })
            .collect();
        Self { samples }
    }

    pub fn to_trace(&self, rate: f64, vehicle_id: &str) -> Result<RssTrace, ChannelError> {
        let samples = self
            .samples
            .iter()
            .map(|&(t, v)| RssSample {
                t: t as f64 * 1e-6,
                rss: v as f64 / 100.0,
            })
            .collect();
        RssTrace::new(samples, rate, vehicle_id)
    }

    /// Timestamps moved by `dt` seconds.
    pub fn time_shifted(&self, dt: f64) -> Self {
        let d = (dt * 1e6).round() as i64;
        Self {
            samples: self.samples.iter().map(|&(t, v)| (t + d, v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.samples.last().map(|&(t, _)| t as f64 * 1e-6)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.gamma(self);
        w.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolMessage {
    JoinReq {
        id: String,
        #[serde(with = "hex")]
        pk: Vec<u8>,
        #[serde(with = "hex")]
        cert: Vec<u8>,
    },
    Reply {
        id: String,
        start_t: f64,
        end_t: f64,
        freq: f64,
        rate: f64,
    },
    RssReport {
        gamma: Gamma,
        id: String,
    },
    Commit {
        #[serde(with = "hex")]
        c: Vec<u8>,
    },
    Open {
        gamma: Gamma,
        id: String,
        #[serde(with = "hex")]
        r: Vec<u8>,
    },
    VerifierBeacon {
        id: String,
        #[serde(with = "hex")]
        pk: Vec<u8>,
        #[serde(with = "hex")]
        cert: Vec<u8>,
    },
}

impl ProtocolMessage {
    pub fn msg_type(&self) -> u8 {
        match self {
            Self::JoinReq { .. } => 1,
            Self::Reply { .. } => 2,
            Self::RssReport { .. } => 3,
            Self::Commit { .. } => 4,
            Self::Open { .. } => 5,
            Self::VerifierBeacon { .. } => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::JoinReq { .. } => "join_req",
            Self::Reply { .. } => "reply",
            Self::RssReport { .. } => "rss_report",
            Self::Commit { .. } => "commit",
            Self::Open { .. } => "open",
            Self::VerifierBeacon { .. } => "verifier_beacon",
        }
    }

    pub fn join_req(identity: &Identity) -> Self {
        Self::JoinReq {
            id: identity.id.clone(),
            pk: identity.public_key.clone(),
            cert: identity.certificate.clone(),
        }
    }

    pub fn beacon(identity: &Identity) -> Self {
        Self::VerifierBeacon {
            id: identity.id.clone(),
            pk: identity.public_key.clone(),
            cert: identity.certificate.clone(),
        }
    }

    pub fn encode_body(&self) -> Vec<u8> {
        let mut w = Writer::default();
        match self {
            Self::JoinReq { id, pk, cert } | Self::VerifierBeacon { id, pk, cert } => {
                w.str(id);
                w.bytes(pk);
                w.bytes(cert);
            }
            Self::Reply {
                id,
                start_t,
                end_t,
                freq,
                rate,
            } => {
                w.str(id);
                for x in [start_t, end_t, freq, rate] {
                    w.f64(*x);
                }
            }
            Self::RssReport { gamma, id } => {
                w.gamma(gamma);
                w.str(id);
            }
            Self::Commit { c } => w.bytes(c),
            Self::Open { gamma, id, r } => {
                w.gamma(gamma);
                w.str(id);
                w.bytes(r);
            }
        }
        w.0
    }

    pub fn decode_body(msg_type: u8, body: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(body);
        let msg = match msg_type {
            1 | 6 => {
                let (id, pk, cert) = (r.str()?, r.bytes()?, r.bytes()?);
                if msg_type == 1 {
                    Self::JoinReq { id, pk, cert }
                } else {
                    Self::VerifierBeacon { id, pk, cert }
                }
            }
            2 => Self::Reply {
                id: r.str()?,
                start_t: r.f64()?,
                end_t: r.f64()?,
                freq: r.f64()?,
                rate: r.f64()?,
            },
            3 => Self::RssReport {
                gamma: r.gamma()?,
                id: r.str()?,
            },
            4 => Self::Commit { c: r.bytes()? },
            5 => Self::Open {
                gamma: r.gamma()?,
                id: r.str()?,
                r: r.bytes()?,
            },
            t => return Err(WireError::UnknownType(t)),
        };
        r.finish()?;
        Ok(msg)
    }

    /// Bytes covered by the sender's signature.
    pub fn signing_input(&self) -> Vec<u8> {
        let mut v = vec![self.msg_type()];
        v.extend_from_slice(&self.encode_body());
        v
    }
}

/// A decoded frame as seen on the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Beacon(ProtocolMessage),
    Sealed(Vec<u8>),
}

impl Frame {
    pub fn msg_type(&self) -> u8 {
        match self {
            Self::Beacon(m) => m.msg_type(),
            Self::Sealed(_) => TYPE_SEALED,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = match self {
            Self::Beacon(m) => m.encode_body(),
            Self::Sealed(b) => b.clone(),
        };
        let mut out = Vec::with_capacity(payload.len() + 6);
        out.extend_from_slice(&((payload.len() + 2) as u32).to_le_bytes());
        out.push(WIRE_VERSION);
        out.push(self.msg_type());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let len = r.u32()? as usize;
        let frame = r.take(len)?;
        r.finish()?;
        if frame.len() < 2 {
            return Err(WireError::Truncated { at: 4, needed: 2 });
        }
        if frame[0] != WIRE_VERSION {
            return Err(WireError::Version(frame[0]));
        }
        match frame[1] {
            6 => Ok(Self::Beacon(ProtocolMessage::decode_body(6, &frame[2..])?)),
            TYPE_SEALED => Ok(Self::Sealed(frame[2..].to_vec())),
            t => Err(WireError::UnknownType(t)),
        }
    }
}

/// Signs `msg` with the sender's key and seals it to `recipient_pk`.
pub fn seal_signed(
    crypto: &dyn CryptoProvider,
    sender: &Credentials,
    recipient_pk: &[u8],
    msg: &ProtocolMessage,
) -> Result<Vec<u8>, WireError> {
    let signed = SignedMessage {
        msg: msg.clone(),
        sig: crypto.sign(&sender.secret_key, &msg.signing_input()),
    };
    reseal(crypto, &signed, recipient_pk)
}

/// Seals an already signed message to `recipient_pk` without touching
/// the signature.
pub fn reseal(
    crypto: &dyn CryptoProvider,
    signed: &SignedMessage,
    recipient_pk: &[u8],
) -> Result<Vec<u8>, WireError> {
    let mut w = Writer::default();
    w.u8(signed.msg.msg_type());
    w.bytes(&signed.msg.encode_body());
    w.bytes(&signed.sig);
    Ok(Frame::Sealed(crypto.seal(recipient_pk, &w.0)?).encode())
}

/// Message and signature recovered from a sealed frame; the signature is
/// not yet checked.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedMessage {
    pub msg: ProtocolMessage,
    pub sig: Vec<u8>,
}

impl SignedMessage {
    pub fn verify(&self, crypto: &dyn CryptoProvider, pk: &[u8]) -> bool {
        crypto.verify(pk, &self.msg.signing_input(), &self.sig)
    }
}

/// Decrypts a sealed payload with `sk` and decodes the signed message.
pub fn open_sealed(crypto: &dyn CryptoProvider, sk: &[u8], sealed: &[u8]) -> Result<SignedMessage, WireError> {
    let plain = crypto.open(sk, sealed)?;
    decode_signed(&plain)
}

pub fn decode_signed(plain: &[u8]) -> Result<SignedMessage, WireError> {
    let mut r = Reader::new(plain);
    let t = r.u8()?;
    let body = r.bytes()?;
    let sig = r.bytes()?;
    r.finish()?;
    Ok(SignedMessage {
        msg: ProtocolMessage::decode_body(t, &body)?,
        sig,
    })
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(&(b.len() as u32).to_le_bytes());
        self.0.extend_from_slice(b);
    }

    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_bits().to_le_bytes());
    }

    fn gamma(&mut self, g: &Gamma) {
        self.0.extend_from_slice(&(g.samples.len() as u32).to_le_bytes());
        for &(t, v) in &g.samples {
            self.0.extend_from_slice(&t.to_le_bytes());
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Truncated { at: self.pos, needed: n });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(u64::from_le_bytes(self.array()?)))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    fn str(&mut self) -> Result<String, WireError> {
        String::from_utf8(self.bytes()?).map_err(|_| WireError::Utf8)
    }

    fn gamma(&mut self) -> Result<Gamma, WireError> {
        let n = self.u32()? as usize;
        if (self.buf.len() - self.pos) / 12 < n {
            return Err(WireError::Truncated { at: self.pos, needed: n * 12 });
        }
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let t = i64::from_le_bytes(self.array()?);
            let v = i32::from_le_bytes(self.array()?);
            samples.push((t, v));
        }
        Ok(Gamma { samples })
    }

    fn finish(&self) -> Result<(), WireError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}
