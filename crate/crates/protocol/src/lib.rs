//! Proof-of-following protocol: wire messages, a pluggable crypto provider
//! and the candidate/verifier session state machines for the known-verifier
//! and commitment variants.

pub mod config;
pub mod continuous;
pub mod crypto;
pub mod message;
pub mod session;
pub mod transcript;

pub use config::{timing_check, ConfigError, SessionConfig};
pub use continuous::{continuous_verification, WindowOutcome};
pub use crypto::{Credentials, CryptoError, CryptoProvider, Identity, KeyPair, ToyProvider};
pub use message::{Frame, Gamma, ProtocolMessage, WireError};
pub use session::{
    AbortReason, Action, CandidateSession, CandidateState, Event, MutualProof, Timer, Variant, Verdict,
    VerifierSession, VerifierState,
};
pub use transcript::{Transcript, TranscriptEntry};
