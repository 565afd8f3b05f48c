pub mod bpe;
pub mod codec;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod model;
pub mod params;
pub mod search;
pub mod segment;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod vocab;
