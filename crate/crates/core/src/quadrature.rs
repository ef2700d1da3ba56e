//! Quadrature rules shared by assembly, load evaluation and error norms.
//!
//! Two tiers are used throughout the crate:
//!
//! * **assembly tier** — a 3-point edge-midpoint rule on triangles (exact for
//!   quadratics) and a 2-point Gauss rule on boundary edges (exact for
//!   cubics); these are the rules behind every assembled matrix and load;
//! * **error tier** — a 6-point degree-4 rule on triangles and a 3-point
//!   Gauss rule on edges (exact for quintics), used only for error norms so
//!   that quadrature of the exact solution never pollutes measured
//!   convergence orders.

/// A quadrature point on a triangle in barycentric coordinates with its
/// weight relative to the triangle area (weights sum to 1).
#[derive(Clone, Copy, Debug)]
pub struct TriPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// 3-point edge-midpoint rule, exact for polynomials of degree 2.
pub const TRI_MIDPOINT: [TriPoint; 3] = [
    TriPoint {
        bary: [0.5, 0.5, 0.0],
        weight: 1.0 / 3.0,
    },
    TriPoint {
        bary: [0.0, 0.5, 0.5],
        weight: 1.0 / 3.0,
    },
    TriPoint {
        bary: [0.5, 0.0, 0.5],
        weight: 1.0 / 3.0,
    },
];

// Degree-4 rule with two symmetric orbits of three points each.
const A1: f64 = 0.445_948_490_915_965;
const W1: f64 = 0.223_381_589_678_011;
const A2: f64 = 0.091_576_213_509_771;
const W2: f64 = 0.109_951_743_655_322;

/// 6-point rule, exact for polynomials of degree 4.
pub const TRI_DEGREE4: [TriPoint; 6] = [
    TriPoint {
        bary: [A1, A1, 1.0 - 2.0 * A1],
        weight: W1,
    },
    TriPoint {
        bary: [A1, 1.0 - 2.0 * A1, A1],
        weight: W1,
    },
    TriPoint {
        bary: [1.0 - 2.0 * A1, A1, A1],
        weight: W1,
    },
    TriPoint {
        bary: [A2, A2, 1.0 - 2.0 * A2],
        weight: W2,
    },
    TriPoint {
        bary: [A2, 1.0 - 2.0 * A2, A2],
        weight: W2,
    },
    TriPoint {
        bary: [1.0 - 2.0 * A2, A2, A2],
        weight: W2,
    },
];

/// A quadrature point on the reference segment `[0, 1]`; weights sum to 1.
#[derive(Clone, Copy, Debug)]
pub struct EdgePoint {
    /// Coordinate in `[0, 1]` along the edge (from first to second endpoint).
    pub s: f64,
    pub weight: f64,
}

const G2: f64 = 0.288_675_134_594_812_88; // 1/(2√3)

/// 2-point Gauss rule on `[0, 1]`, exact for cubics.
pub const EDGE_GAUSS2: [EdgePoint; 2] = [
    EdgePoint {
        s: 0.5 - G2,
        weight: 0.5,
    },
    EdgePoint {
        s: 0.5 + G2,
        weight: 0.5,
    },
];

const G3: f64 = 0.387_298_334_620_741_7; // √(3/5)/2

/// 3-point Gauss rule on `[0, 1]`, exact for quintics.
pub const EDGE_GAUSS3: [EdgePoint; 3] = [
    EdgePoint {
        s: 0.5 - G3,
        weight: 5.0 / 18.0,
    },
    EdgePoint {
        s: 0.5,
        weight: 8.0 / 18.0,
    },
    EdgePoint {
        s: 0.5 + G3,
        weight: 5.0 / 18.0,
    },
];
