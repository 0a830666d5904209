pub mod error;
pub mod field;
pub mod fourier;
pub mod gauge;
pub mod hodge;
pub mod linsolve;
pub mod maximal;
pub mod pde;
pub mod rearrange;
pub mod verify;

pub use error::{Error, Result};
