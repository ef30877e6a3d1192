#![allow(dead_code)]
pub mod covering;
