//! Agent episodes against validated tasks and trajectory collection.

pub mod action;
pub mod collect;
pub mod episode;

pub use action::{parse_response, render_response, AgentAction, FormatError, ParsedResponse};
pub use collect::{collect, CollectSettings, CollectionReport, EpisodeRunner, SandboxEpisodeRunner};
pub use episode::{
    apply_edit, cap_observation, render_description, run_episode_in, task_prompt, EpisodeEnv,
    EpisodeLimits, Submission, TerminalReason, Trajectory, Turn,
};
