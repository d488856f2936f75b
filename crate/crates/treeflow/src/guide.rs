//! The book chapters, included as documentation modules so that every code
//! snippet in the guide compiles and runs under `cargo test --doc`.
