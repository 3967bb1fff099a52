//! Construction and analysis of flexible polyhedra by twinning.
//!
//! A rigid triangulated polyhedron with a symmetric quadrilateral `A B A' B'`
//! loses one edge, leaving a one-parameter cap; gluing the cap to its image under
//! the quadrilateral's half-turn or reflection gives a closed surface that flexes.

pub mod collision;
pub mod error;
pub mod flexion;
pub mod geom;
pub mod io;
pub mod netexport;
pub mod rigidity;
pub mod search;
pub mod symmetry;
pub mod twinning;

pub use error::{Error, Result};
pub use geom::{Edge, MeshStats, Point3, TriMesh, Vec3};
pub use symmetry::{Isometry, SymmetricQuad, SymmetryKind};
pub use twinning::{Cap, Crinkle, Twin, TwinInfo};
