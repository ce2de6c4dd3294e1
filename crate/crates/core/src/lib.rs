pub mod cli;
pub mod dsl;
pub mod error;
pub mod formula;
pub mod lie;
pub mod lp;
pub mod moments;
pub mod multiindex;
pub mod path;
pub mod sampler;
pub mod signature;
pub mod tensor;
pub mod weak;
