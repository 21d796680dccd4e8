//! Piecewise-affine planar map calculus.
//!
//! The crate represents maps of a rectangle that are affine on each triangle
//! of a mesh, and provides: degree/winding audits (INV conditions,
//! multivalued images, preimage topology), construction of perturbed
//! starting grids and transversal arrival grids, injectivization of the map
//! restricted to a grid, energy-controlled homeomorphic extension on each
//! grid cell, and executable counterexample fixtures, together with JSON and
//! SVG reporting.

pub mod audit;
pub mod energy;
pub mod error;
pub mod geom;
pub mod oracle;
pub mod plmap;

pub use error::{PlanarError, Result};
pub use geom::{Point, Polyline, Rect};
pub use plmap::{EdgeFunction, Mat2, PlMap, Triangulation};
