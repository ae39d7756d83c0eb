//! Scoring transport plans and describing feature geometry.
//!
//! A plan is read as a soft matching: each source point is assigned to
//! the target class receiving most of its mass, and the class-preservation
//! accuracy is the fraction of points kept within their own class. The
//! distance statistics and MDS embeddings describe how a representation
//! arranges classes and rotations before any transport happens.

mod assignment;
mod distances;
mod mds;

pub use assignment::{
    class_assignment, class_confusion, class_preservation_accuracy, hard_confusion, one_hot,
    per_class_accuracy, ClassAssignment, ClassConfusion, Normalization,
};
pub use distances::{
    interclass_distance_stats, off_diagonal_spread, rotation_distance_grid, Separation,
};
pub use mds::classical_mds;
