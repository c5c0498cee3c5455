pub mod astgen;
pub mod bench;
pub mod codegen;
pub mod grammar;
pub mod oracle;
pub mod prng;
