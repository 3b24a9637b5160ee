//! Online packet routing on uni-directional lines and grids with bounded buffers.
//!
//! Requests are reduced to path requests in a tiled, untilted space-time graph,
//! packed online by a primal-dual algorithm, and then routed in detail. Every
//! router emits concrete space-time paths that [`sim`] replays independently.

pub mod det;
pub mod exec;
pub mod interval;
pub mod ipp;
pub mod model;
pub mod randomized;
pub mod route;
pub mod sim;
pub mod spacetime;
pub mod tiling;

pub use model::{GridSpec, Outcome, PacketRequest, RunMetrics};
