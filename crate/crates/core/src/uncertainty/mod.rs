//! Perception confidence and deviation, V2V channel evolution and outage,
//! max-score confidence fusion, and the resulting dynamic safety distance.

mod channel;
mod frame;
mod perception;

pub use channel::{
    conditional_outage_probability, evolve_channel, outage_probability, outage_time,
    rayleigh_outage_closed_form, sample_complex_normal, sinr, ChannelConfig, ChannelState,
    OutageMethod,
};
pub use frame::{FusionWeight, UncertaintyConfig, UncertaintyFrame, UncertaintyModel};
pub use perception::{
    dynamic_safe_distance, fuse_confidence, perception_confidence, sample_perception_deviation,
    ConfidenceScore, PerceptionConfig, PerceptionDeviation,
};
