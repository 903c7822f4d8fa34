//! Quadrature rules: a six-point degree-4 triangle rule (exact for all the
//! P2/P1 products appearing with elementwise-smooth viscosity) and a
//! three-point Gauss rule on edges.

/// Six-point triangle rule, degree of exactness 4. Points are given in
/// reference coordinates (ξ, η) with λ = (1−ξ−η, ξ, η); weights sum to 1 and
/// multiply the physical element area.
pub const TRI_POINTS: [(f64, f64, f64); 6] = [
    (0.445948490915965, 0.445948490915965, 0.223381589678011),
    (0.445948490915965, 0.108103018168070, 0.223381589678011),
    (0.108103018168070, 0.445948490915965, 0.223381589678011),
    (0.091576213509771, 0.091576213509771, 0.109951743655322),
    (0.091576213509771, 0.816847572980459, 0.109951743655322),
    (0.816847572980459, 0.091576213509771, 0.109951743655322),
];

/// Three-point Gauss rule on [0, 1]; weights sum to 1 and multiply the edge
/// length. Exact through degree 5.
pub const EDGE_POINTS: [(f64, f64); 3] = [
    (0.11270166537925831, 0.2777777777777778),
    (0.5, 0.4444444444444444),
    (0.8872983346207417, 0.2777777777777778),
];
