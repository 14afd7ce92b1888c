pub mod attack;
pub mod cli;
pub mod eval;
pub mod nets;
pub mod scene;
pub mod tensor;
pub mod warp;
