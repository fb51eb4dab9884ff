#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artmodel;
pub mod camera;
pub mod cli;
pub mod descriptor;
pub mod generalize;
pub mod geom;
pub mod mlesac;
pub mod refframe;
pub mod scene;
pub mod schema;
pub mod selection;
pub mod synth;
