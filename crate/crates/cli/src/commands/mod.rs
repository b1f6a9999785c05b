pub mod adapt;
pub mod bench;
pub mod eval;
pub mod extract;
pub mod gen_synth;
pub mod inspect;
pub mod train;
