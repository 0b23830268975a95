// negated float comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod experiment;
pub mod linalg;
pub mod pds;
pub mod sets;
pub mod synchronverter;
