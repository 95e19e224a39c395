//! RF fingerprinting workbench: synthesize choreographed emitter sessions,
//! propagate them through a channel and a receiver front end, detect bursts,
//! extract fingerprint features, verify identities and tune the receiver.

pub mod channel;
pub mod control;
pub mod dataset;
pub mod emitter;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fingerprint;
pub mod roi;
pub mod rx;
pub mod signal;

pub use num_complex::Complex64;

pub use channel::{ChannelSpec, Tap};
pub use control::{ObjectiveParams, Strategy, TuningGrid, TuningPoint, TuningTrace};
pub use dataset::{SessionMeta, SessionSpec};
pub use emitter::{Bits, ChoreographySchedule, EmitterProfile, GroundTruthSpan, Modulation, RenderParams, ScheduleEntry};
pub use error::{Error, Result};
pub use features::{ExtractionParams, FeatureCatalog, FeatureSelection, FeatureVector};
pub use fingerprint::{DeviceFingerprint, Evaluation, ThresholdPolicy, VerificationDecision};
pub use roi::{DetectorParams, RegionOfInterest};
pub use rx::ReceiverConfig;
pub use signal::{FirTaps, IqRecording};
