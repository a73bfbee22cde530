pub mod calibrate;
pub mod catalog;
pub mod cost;
pub mod dsl;
pub mod error;
pub mod graph;
pub mod js_mv;
pub mod js_oj;
pub mod ops;
pub mod pipeline;
pub mod planner;
pub mod query;
pub mod relation;
pub mod synth;
pub mod value;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model-dsl.md")]
    mod model_dsl {}
    #[doc = include_str!("../../../book/src/join-graphs.md")]
    mod join_graphs {}
    #[doc = include_str!("../../../book/src/outer-join-sharing.md")]
    mod outer_join_sharing {}
    #[doc = include_str!("../../../book/src/view-sharing.md")]
    mod view_sharing {}
    #[doc = include_str!("../../../book/src/cost-model.md")]
    mod cost_model {}
    #[doc = include_str!("../../../book/src/planner.md")]
    mod planner {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
