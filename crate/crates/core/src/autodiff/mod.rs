//! Reverse-mode automatic differentiation with the layer set used by the
//! reconstruction networks.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value
//! and the information its backward rule needs. Parameters live in a
//! [`ParamStore`] outside the tape and enter it as leaves through
//! [`Graph::param`]; [`Graph::backward`] writes their gradients back.
//!
//! ```
//! use ganrecon::autodiff::{Graph, ParamStore};
//! use ganrecon::RealTensor;
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", RealTensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap(), true).unwrap();
//! let mut g = Graph::new();
//! let wv = g.param(&store, w);
//! let sq = g.square(wv);
//! let s = g.sum(sq);
//! let loss = g.scale(s, 0.5);
//! g.backward(loss, &mut store).unwrap();
//! assert_eq!(store.get(w).grad.data(), &[1.0, -2.0, 0.5]);
//! ```

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
mod graph;
pub mod layers;
mod params;

pub use conv::ConvGeom;
pub use gradcheck::{gradcheck, GradCheckOptions, GradCheckReport};
pub use graph::{fft_pairs, Graph, Mode, Var};
pub use params::{he_normal, Param, ParamId, ParamStore};
