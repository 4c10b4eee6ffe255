#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constitutive;
pub mod dual;
pub mod estimation;
pub mod mpm;
pub mod render;
pub mod scene;
pub mod tensor;

pub use tensor::{Mat3, Vec3};
