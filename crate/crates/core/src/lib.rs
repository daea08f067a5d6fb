//! Variable-bitrate neural video codec: rate control, motion, conditional
//! frame coding, range-coded bitstreams, staged training and RD evaluation.

pub mod bitstream;
pub mod codec;
pub mod config;
pub mod data_io;
pub mod entropy_coding;
pub mod error;
pub mod eval;
pub mod frame_codec;
pub mod losses;
pub mod motion;
pub mod nn;
pub mod rate_control;
pub mod trainer;

pub use bitstream::{Container, FrameRecord, FrameType, Header};
pub use codec::{decode_sequence, encode_sequence, EncodeOptions, EncodedSequence, FrameStats};
pub use config::{Config, ModelConfig, TrainerConfig};
pub use data_io::{Frame, MotionField, Yuv420Frame};
pub use error::{NvcError, Result};
pub use eval::{RDCurve, RDPoint};
pub use frame_codec::{DecodedState, VideoModel};
pub use rate_control::{RateControlPoint, SamplerConfig};
pub use trainer::StageConfig;
