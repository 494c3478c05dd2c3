pub mod codegen;
pub mod curate;
pub mod demo;
pub mod hfhub;
pub mod jsonx;
pub mod manifest;
pub mod pipeline;
pub mod prompts;
pub mod provider;
pub mod retry;
pub mod schema;
pub mod synth;
pub mod trajgen;
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/task-configs.md")]
    mod task_configs {}
    #[doc = include_str!("../../../book/src/file-blocks.md")]
    mod file_blocks {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/curation.md")]
    mod curation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
