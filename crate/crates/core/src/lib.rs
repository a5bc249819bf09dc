//! Two-photon propagation through multimode fibers and thin optical elements.

pub mod error;
pub mod fiber;
pub mod field;
pub mod io;
pub mod shaping;
pub mod special;
pub mod thin;
pub mod twophoton;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/fibers.md")]
    mod fibers {}
    #[doc = include_str!("../../../book/src/two-photon.md")]
    mod two_photon {}
    #[doc = include_str!("../../../book/src/thin-elements.md")]
    mod thin_elements {}
    #[doc = include_str!("../../../book/src/shaping.md")]
    mod shaping {}
}
