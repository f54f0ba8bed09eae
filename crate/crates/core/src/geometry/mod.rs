//! Exact-rational convex polygon arithmetic.

mod polygon;
mod vec;

pub use polygon::{
    convex_hull, dist_point_scaled_polygon, hausdorff, max_vertex_denominator, ConvexPolygon, FloatPolygon, Support,
};
pub use vec::{
    format_rational, parse_rational, rat_to_f64, ratio, rational_serde, to_torus, torus_delta, Norm, RationalVec2,
};
