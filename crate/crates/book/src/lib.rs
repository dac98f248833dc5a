//! The guide under `book/`, compiled so its code listings run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}
#[doc = include_str!("../../../book/src/walks.md")]
pub mod walks {}
#[doc = include_str!("../../../book/src/protocols.md")]
pub mod protocols {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
#[doc = include_str!("../../../book/src/scripts.md")]
pub mod scripts {}
