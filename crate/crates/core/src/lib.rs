//! Gene tree construction and correction by minimum duplication+loss
//! supertrees.

pub mod consistency;
pub mod lca;
pub mod newick;
pub mod oracle;
pub mod reconciliation;
pub mod simulate;
pub mod supertree;
pub mod tree;
pub mod triplet;
