//! Dense kernels and the two-layer GCN used as the node classifier.

mod adam;
mod dense;
mod gcn;

pub use adam::AdamState;
pub use dense::{spmm, spmm_transpose, DenseMatrix};
pub use gcn::{
    gcn_backward, gcn_forward, glorot_init, softmax_rows, ForwardCache, ForwardMode, GcnParams,
};
