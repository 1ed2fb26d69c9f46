//! Analytics core for comparing the audiences of media channels.
//!
//! Everything here needs only `alloc`; file formats, HTTP and threads live
//! in the `polarlens` crate.
#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod align;
pub mod archive;
pub mod embedding;
pub mod engagement;
pub mod error;
pub mod migration;
pub mod ngram;
pub mod probe;
pub mod textnorm;

pub use archive::{ArchiveParts, Channel, ChannelArchive, Comment, SubscriberSnapshot, TimeWindow, TranscriptDoc, Video};
pub use error::{Error, Result};
