pub mod analyze;
pub mod sample;
pub mod simulate;
pub mod solve;
pub mod verify;
