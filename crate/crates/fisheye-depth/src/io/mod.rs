//! File formats and configuration: PGM images, PFM depth rasters, the
//! key-value config format, snippet bundles, and teacher ingestion.

mod bundle;
mod config;
mod pfm;
mod pgm;

pub use bundle::{
    ingest_teacher, read_pose_manifest, read_snippet_bundle, write_pose_manifest,
    write_snippet_bundle, write_xyz, LoadedBundle, TeacherMode, DEPTH_GT, FRAME_NEXT, FRAME_PREV,
    FRAME_TARGET, MANIFEST, TEACHER,
};
pub use config::Config;
pub use pfm::{read_pfm, write_pfm};
pub use pgm::{read_pgm, write_pgm, PgmDepth};
