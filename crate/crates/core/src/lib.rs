pub mod demo;
pub mod error;
pub mod geom;
pub mod joints;
pub mod kgraph;
pub mod pipeline;
pub mod posegraph;
pub mod segment;

pub use error::{Error, Result};

// The guide's snippets run as doc tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/poses.md")]
    mod poses {}
    #[doc = include_str!("../../../book/src/demonstrations.md")]
    mod demonstrations {}
    #[doc = include_str!("../../../book/src/segmentation.md")]
    mod segmentation {}
    #[doc = include_str!("../../../book/src/pose-graphs.md")]
    mod pose_graphs {}
    #[doc = include_str!("../../../book/src/joints.md")]
    mod joints {}
    #[doc = include_str!("../../../book/src/kinematic-graphs.md")]
    mod kinematic_graphs {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
