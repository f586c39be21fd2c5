pub mod decode;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod gf256;
pub mod qab;
pub mod qr;
pub mod raster;
pub mod refine;
pub mod scan;

pub use error::{Error, Result};
