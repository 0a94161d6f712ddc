#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod devices;
pub mod exact;
pub mod farm;
pub mod protocol;
pub mod sim;
