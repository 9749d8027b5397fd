//! Recurrent soft actor-critic: networks, squashed Gaussian policy, replay,
//! updates and the training loop.

mod agent;
mod networks;
mod policy;
mod replay;
mod trainer;

pub use agent::{normal_noise, soft_update, squashed_sample, HiddenMode, Policy, SacAgent, TrainerConfig};
pub use networks::{
    critic_forward, policy_forward, ActorNet, ActorNodes, CoreType, CriticNet, NetworkConfig, PolicyOutput,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use policy::{deterministic_action, sample_action, squash_with_noise, squashed_log_prob};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use trainer::{
    EpisodeLog, Trainer, TrainingLog, ValidationLog, ACTION_DIM, TRAINING_LOG_HEADER, VALIDATION_LOG_HEADER,
    VALIDATION_SEED_BASE,
};
