//! Hardware-in-the-loop simulation of a capsule-endoscope image sensor.
//!
//! A digital twin of the sensor is fed by a modeled back-end over a
//! chunked serial link. A deterministic picosecond event kernel drives the
//! loop, and each frame the device reads out is verified against the
//! mosaic that was injected.

pub mod campaign;
pub mod dataset;
pub mod imaging;
pub mod kernel;
pub mod power;
pub mod report;
pub mod rng;
pub mod sensor;
pub mod time;
pub mod transport;
pub mod verify;

pub use campaign::{
    run_campaign, run_campaign_with, CampaignConfig, CampaignError, CampaignRun, CaptureSpec,
    FrameLine, Preset, RunSummary, StudySource,
};
pub use dataset::{FrameRecord, Study};
pub use imaging::{BayerImage, BayerPattern, RgbImage};
pub use power::{PowerEstimate, PowerParams};
pub use sensor::{SensorProfile, SensorTwin, TwinConfig};
pub use time::SimTime;
pub use transport::{DelayDistribution, FaultConfig, LinkConfig};
pub use verify::{CampaignReport, Classifier, ClassifierSpec, DutConfig, FrameVerdict};
