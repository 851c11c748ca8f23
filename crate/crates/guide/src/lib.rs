//! The book's chapters, compiled so that `cargo test --doc` runs every
//! listing in them. One module per chapter keeps failures traceable to a
//! file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/numbers.md")]
pub mod numbers {}
#[doc = include_str!("../../../book/src/naptr.md")]
pub mod naptr {}
#[doc = include_str!("../../../book/src/topology.md")]
pub mod topology {}
#[doc = include_str!("../../../book/src/resolving.md")]
pub mod resolving {}
#[doc = include_str!("../../../book/src/transfers.md")]
pub mod transfers {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/snapshots.md")]
pub mod snapshots {}
#[doc = include_str!("../../../book/src/market.md")]
pub mod market {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
