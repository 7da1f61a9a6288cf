//! Furniture layouts as token sequences, with differentiable ergonomic and
//! intersection experts.
//!
//! A [`Layout`] is a rectangular room followed by up to twenty furniture
//! objects. The [`codec`] turns it into a fixed-length integer sequence for a
//! sequence model, the [`ergo`] and [`geom`] engines score it, and [`data`]
//! reads, filters, augments and synthesizes corpora of layouts.

pub mod codec;
pub mod data;
pub mod ergo;
pub mod error;
pub mod exec;
pub mod expert;
pub mod geom;
pub mod layout;
pub mod scalar;
pub mod taxonomy;

pub use codec::{Codec, CodecConfig, TokenSequence, TUPLE};
pub use ergo::{ErgoEngine, ErgoParams, ErgoReport};
pub use error::{CodecError, DataError, ErgoError, TaxonomyError};
pub use exec::Exec;
pub use expert::{ExpertKind, SceneExpert};
pub use geom::{collision_check, Collision, ExemptPairs, IntersectionEngine};
pub use layout::{canonical_order, validate, Attr, DatasetBounds, FurnObj, Layout, MAX_OBJECTS};
pub use taxonomy::{CategoryId, CategoryOrder, Role, Taxonomy};
