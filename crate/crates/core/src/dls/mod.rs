//! Chunk calculators for the thirteen loop scheduling techniques.
//!
//! Every technique is driven through the same two calls: [`DlsState::next_chunk`]
//! when a PE asks for work and [`DlsState::update_stats`] when it reports a
//! finished chunk. The simulator and the selection sub-simulations use the
//! exact same code path.

mod state;
mod technique;

pub use state::{fac_chunk_count, Chunk, DlsConfig, DlsState, PeStats};
pub use technique::Technique;
