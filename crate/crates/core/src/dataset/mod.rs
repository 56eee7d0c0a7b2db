//! Hybrid training corpus: OLAT-composited lighting-rich clips, motion-rich
//! clips with pseudo-albedo, and the binary tensor container.

mod augment;
mod build;
mod compose;
pub mod container;
mod envs;
mod record;
mod store;

pub use augment::{camera_motion_augment, MotionTrack};
pub use build::{
    build_lighting_rich, build_motion_rich, lighting_rich_record, Delighter, FlickerOracle, LightingRichConfig,
    MotionRange,
};
pub use compose::compose_relight;
pub use container::DType;
pub use envs::{procedural_env, procedural_envs, split_ids, Split, DEFAULT_TRAIN_FRACTION};
pub use record::{ClipRecord, ClipSource};
pub use store::{read_dataset, read_stacks, write_dataset, write_stacks, Dataset, DatasetMeta, RecordMeta, StackMeta};
