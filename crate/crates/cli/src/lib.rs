//! Command implementations and file formats behind the `cvmp` binary,
//! exposed as a library so integration tests drive the same code paths.

pub mod io;
pub mod maps;
pub mod run;
