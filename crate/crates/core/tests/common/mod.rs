#![allow(dead_code)]

pub mod golden;
pub mod graphs;
pub mod sanitizer;
