#![allow(dead_code)]

pub mod grad;
pub mod invariance;
pub mod oracles;
pub mod table;
