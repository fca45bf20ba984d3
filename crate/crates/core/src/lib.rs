pub mod conserved;
pub mod degeneration;
pub mod elliptic;
pub mod error;
pub mod exec;
pub mod inozemtsev;
pub mod jet;
pub mod linalg;
pub mod operator;
pub mod ring;
pub mod ruijsenaars;
pub mod selftest;
pub mod sympoly;

pub use error::{QesError, Result};
