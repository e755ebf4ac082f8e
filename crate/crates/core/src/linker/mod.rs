//! Symbol resolution across the two target modules and image encoding.

pub mod image;
pub mod link;
pub mod symbols;

pub use image::{read_image, read_module, write_image, write_module};
pub use link::{link, link_modules, KernelRecord, LinkedImage};
pub use symbols::{demangle, launch_stub, launch_wrapper, mangle};
