//! Achievable packet-error probabilities for pilot-assisted short packets
//! over block-fading channels with imperfect time synchronization.
//!
//! The pipeline is: draw a channel and delay ([`waveform`]), estimate both
//! from the pilots ([`estimator`]), then bound the decoding error of the
//! data part given the estimates with the RCUs bound, evaluated through a
//! saddlepoint approximation ([`infodensity`], [`mgf`], [`saddlepoint`]).
//! [`harness`] drives sweeps and parameter searches; [`crb`] provides the
//! estimation benchmarks.

pub mod crb;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod infodensity;
pub mod mgf;
pub mod oracle;
pub mod quadrature;
pub mod saddlepoint;
pub mod special;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::{ChannelRealization, DelayModel, Modulation, PilotSequence, SystemConfig};
