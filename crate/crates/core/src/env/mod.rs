//! Platoon lane-change episodes: scenarios, references, observations,
//! costs and stepping.

mod cost;
mod episode;
mod observe;
mod platoon;
mod reference;
mod scenario;

pub use cost::{constraint_penalty, pair_margin, reward, step_cost};
pub use episode::{is_success, EpisodeRecord, TraceRow, ARRIVAL_TOLERANCE, HEADING_TOLERANCE};
pub use observe::{observation_dim, EGO_FEATURES, NEIGHBOR_FEATURES};
pub use platoon::{action_to_control, control_to_action, EnvConfig, PlatoonEnv, StepInfo, StepOutput};
pub use reference::{make_reference, reference_arrival_time, smoothstep, ReferenceTrajectory};
pub use scenario::{lane_center, CostWeights, ObstacleEvent, ScenarioConfig};
