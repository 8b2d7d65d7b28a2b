#![allow(dead_code)]

pub mod riemann;
pub mod sod;
