//! Compiles the guide's code listings as doc-tests, one module per chapter
//! so a failure names its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/language.md")]
mod language {}
#[doc = include_str!("../../../book/src/modes.md")]
mod modes {}
#[doc = include_str!("../../../book/src/exploration.md")]
mod exploration {}
#[doc = include_str!("../../../book/src/listeners.md")]
mod listeners {}
#[doc = include_str!("../../../book/src/benchmarks.md")]
mod benchmarks {}
