//! Computable classification of doubly-resonant saddle-node vector fields.
//!
//! A doubly-resonant saddle-node is a germ of a singular vector field in
//! `(C^3, 0)` of the form
//!
//! ```text
//! Y = x^2 d/dx + (-l*y1 + F1(x,y)) d/dy1 + (l*y2 + F2(x,y)) d/dy2
//! ```
//!
//! with `l != 0` and `F1, F2` of order at least two. This crate makes the
//! classification of such fields under fibered changes of coordinates
//! computable:
//!
//! * [`series`] — truncated power-series arithmetic over exact Gaussian
//!   rationals or complex doubles, the substrate for all formal work;
//! * [`vfield`] — the vector-field model and its classification predicates
//!   (residue, non-degeneracy, div-integrability, transversal
//!   Hamiltonicity) plus the push-forward action of fibered maps;
//! * [`normalizer`] — the unique formal fibered normalizing map and normal
//!   form, computed degree by degree, with exact residual certification;
//! * [`summation`] — Borel transform, Pade continuation, directional
//!   Laplace sums, Gevrey-growth fits and lateral jumps;
//! * [`leafspace`] — sectorial first integrals `h1, h2, w`, the auxiliary
//!   functions `f1, f2`, leaf parametrization and fixed-radius domains;
//! * [`stokes`] — sectorial normalizing maps by monomial-wise resummation,
//!   Stokes transition maps on narrow sectors, Laurent-coefficient
//!   extraction in the space of leaves, and the derived moduli reports.
//!
//! The `drsn` binary exposes the same functionality as subcommands
//! (`classify`, `normalize`, `leafmap`, `borel-sum`, `stokes`); the
//! `examples/` directory has one runnable walk-through per capability.

pub mod coeff;
pub mod fields;
pub mod io;
pub mod leafspace;
pub mod normalizer;
pub mod series;
pub mod stokes;
pub mod summation;
pub mod vfield;

pub use coeff::{Coeff, CRat, C64};
pub use series::{MultiSeries, UniSeries, Var};
pub use vfield::{DiagSaddleNode, FiberedDiffeo};
pub use normalizer::NormalForm;
