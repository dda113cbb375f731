// Float brings libm-backed methods into scope when no std is linked.
#[allow(unused_imports)]
pub(crate) use num_traits::Float;

pub(crate) use alloc::{
    boxed::Box,
    format,
    string::{String, ToString},
    vec,
    vec::Vec,
};
