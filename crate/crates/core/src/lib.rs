//! Targeted symbolic execution for a small pointer while-language.

pub mod backward;
pub mod cfg;
pub mod driver;
pub mod expr;
pub mod forward;
pub mod gfse;
pub mod lang;
pub mod mem;
pub mod report;
pub mod solver;
