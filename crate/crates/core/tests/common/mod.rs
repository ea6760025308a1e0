#![allow(dead_code)]

pub mod accountant;
pub mod fedavg;
pub mod fixture;
pub mod gradcheck;
