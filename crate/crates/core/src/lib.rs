pub mod ir;
pub mod state;
pub mod interp;
pub mod smt;
pub mod summary;
pub mod gen;
pub mod queries;
pub mod synth;
pub mod cli;
