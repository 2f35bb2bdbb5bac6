//! Cryptographic capabilities used by the sessions.
//!
//! The protocol only relies on the contracts of the primitives, so the
//! provider is a trait. [`ToyProvider`] is a deterministic stand-in built on
//! keyed SHA-256: it is reproducible and cheap, and it honours the
//! functional contracts, but it is not a secure public-key system (a shared
//! registry maps public keys to secrets so that "public-key" operations can
//! be emulated with symmetric ones).

use std::collections::HashMap;
use std::sync::RwLock;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Length of the commitment randomizer `r`.
pub const NONCE_LEN: usize = 16;
const BOX_NONCE_LEN: usize = 16;
const TAG_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("no key registered for public key {0}")]
    UnknownKey(String),
    #[error("sealed box is truncated ({0} bytes)")]
    Truncated(usize),
    #[error("sealed box failed authentication")]
    BadTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    #[serde(with = "hex")]
    pub public: Vec<u8>,
    #[serde(with = "hex")]
    pub secret: Vec<u8>,
}

/// Public identity of a party: `(ID, pk, cert)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    pub id: String,
    #[serde(with = "hex")]
    pub public_key: Vec<u8>,
    #[serde(with = "hex")]
    pub certificate: Vec<u8>,
}

/// Everything a party holds about itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credentials {
    pub identity: Identity,
    pub secret_key: Vec<u8>,
}

impl Credentials {
    pub fn id(&self) -> &str {
        &self.identity.id
    }
}

pub trait CryptoProvider: Send + Sync {
    fn sign(&self, sk: &[u8], msg: &[u8]) -> Vec<u8>;

    fn verify(&self, pk: &[u8], msg: &[u8], sig: &[u8]) -> bool;

    /// Encrypts to the holder of `pk`.
    fn seal(&self, pk: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError>;

    fn open(&self, sk: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CryptoError>;

    fn commit(&self, data: &[u8], r: &[u8]) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(b"pof-commit");
        h.update((data.len() as u64).to_le_bytes());
        h.update(data);
        h.update(r);
        h.finalize().to_vec()
    }

    fn open_commitment(&self, c: &[u8], data: &[u8], r: &[u8]) -> bool {
        self.commit(data, r) == c
    }

    fn fresh_nonce(&self, rng: &mut dyn RngCore) -> [u8; NONCE_LEN] {
        let mut r = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut r);
        r
    }

    fn certify(&self, ca_sk: &[u8], id: &str, pk: &[u8]) -> Vec<u8> {
        self.sign(ca_sk, &cert_body(id, pk))
    }

    fn verify_cert(&self, ca_pk: &[u8], identity: &Identity) -> bool {
        self.verify(ca_pk, &cert_body(&identity.id, &identity.public_key), &identity.certificate)
    }
}

fn cert_body(id: &str, pk: &[u8]) -> Vec<u8> {
    let mut out = b"pof-cert".to_vec();
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    out.extend_from_slice(pk);
    out
}

fn hash(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Deterministic keyed-hash provider with a key registry.
#[derive(Debug, Default)]
pub struct ToyProvider {
    registry: RwLock<HashMap<Vec<u8>, Vec<u8>>>,
}

impl ToyProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn keygen(&self, seed: u64) -> KeyPair {
        let secret = hash(&[b"sk", &seed.to_le_bytes()]).to_vec();
        let public = hash(&[b"pk", &secret]).to_vec();
        self.registry
            .write()
            .expect("registry lock poisoned")
            .insert(public.clone(), secret.clone());
        KeyPair { public, secret }
    }

    /// Key pair plus a certificate for `id` signed by `ca`.
    pub fn enroll(&self, id: &str, seed: u64, ca: &KeyPair) -> Credentials {
        let kp = self.keygen(seed);
        let certificate = self.certify(&ca.secret, id, &kp.public);
        Credentials {
            identity: Identity {
                id: id.to_string(),
                public_key: kp.public,
                certificate,
            },
            secret_key: kp.secret,
        }
    }

    fn secret_for(&self, pk: &[u8]) -> Option<Vec<u8>> {
        self.registry.read().expect("registry lock poisoned").get(pk).cloned()
    }

    fn keystream_xor(sk: &[u8], nonce: &[u8], data: &mut [u8]) {
        for (i, chunk) in data.chunks_mut(32).enumerate() {
            let block = hash(&[b"ks", sk, nonce, &(i as u64).to_le_bytes()]);
            for (d, k) in chunk.iter_mut().zip(block) {
                *d ^= k;
            }
        }
    }

    fn tag(sk: &[u8], nonce: &[u8], ct: &[u8]) -> [u8; TAG_LEN] {
        let full = hash(&[b"tag", sk, nonce, ct]);
        let mut t = [0u8; TAG_LEN];
        t.copy_from_slice(&full[..TAG_LEN]);
        t
    }
}

impl CryptoProvider for ToyProvider {
    fn sign(&self, sk: &[u8], msg: &[u8]) -> Vec<u8> {
        hash(&[b"sig", sk, msg]).to_vec()
    }

    fn verify(&self, pk: &[u8], msg: &[u8], sig: &[u8]) -> bool {
        match self.secret_for(pk) {
            Some(sk) => self.sign(&sk, msg) == sig,
            None => false,
        }
    }

    fn seal(&self, pk: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let sk = self.secret_for(pk).ok_or_else(|| CryptoError::UnknownKey(hex::encode(pk)))?;
        let nonce = &hash(&[b"nonce", pk, plaintext])[..BOX_NONCE_LEN];
        let mut out = nonce.to_vec();
        let mut ct = plaintext.to_vec();
        Self::keystream_xor(&sk, nonce, &mut ct);
        let tag = Self::tag(&sk, nonce, &ct);
        out.extend_from_slice(&ct);
        out.extend_from_slice(&tag);
        Ok(out)
    }

    fn open(&self, sk: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if sealed.len() < BOX_NONCE_LEN + TAG_LEN {
            return Err(CryptoError::Truncated(sealed.len()));
        }
        let (nonce, rest) = sealed.split_at(BOX_NONCE_LEN);
        let (ct, tag) = rest.split_at(rest.len() - TAG_LEN);
        if Self::tag(sk, nonce, ct) != tag {
            return Err(CryptoError::BadTag);
        }
        let mut pt = ct.to_vec();
        Self::keystream_xor(sk, nonce, &mut pt);
        Ok(pt)
    }
}
