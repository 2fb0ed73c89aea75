//! Bundled example fields used by the command-line tool, the runnable
//! examples and the test suites.

use crate::coeff::{crat, C64, CRat, Coeff};
use crate::normalizer::NormalForm;
use crate::series::{MultiSeries, UniSeries, Var};
use crate::summation::gauss_legendre;
use crate::vfield::{DiagSaddleNode, FiberedDiffeo};

/// A transversally Hamiltonian normal form: `l = 1`, `a1 = 1/4`,
/// `a2 = 3/4`, `c = v/2` (so `c1 = -c`, `c2 = c`).
pub fn normal_form_example(order: usize) -> NormalForm<CRat> {
    let mut c = UniSeries::zero(order / 2);
    c.set_coeff(1, crat(1, 2, 0, 1));
    NormalForm::new(CRat::from_int(1), crat(1, 4, 0, 1), crat(3, 4, 0, 1), c.neg(), c)
}

/// The example normal form pushed forward by a documented tangent-to-identity
/// map; `normalize` on the field recovers the normal form with residual
/// exactly zero. Returns `(field, conjugating map)`.
pub fn conjugated_example(order: usize) -> (DiagSaddleNode<CRat>, FiberedDiffeo<CRat>) {
    let nf = normal_form_example(order);
    let y0 = nf.vector_field(order);
    let phi = FiberedDiffeo::new(
        MultiSeries::var(order, Var::Y1)
            .add(&MultiSeries::monomial(order, [0, 0, 2], crat(1, 3, 0, 1)))
            .add(&MultiSeries::monomial(order, [1, 1, 1], crat(0, 1, 1, 5))),
        MultiSeries::var(order, Var::Y2)
            .add(&MultiSeries::monomial(order, [0, 2, 0], crat(-1, 4, 0, 1)))
            .add(&MultiSeries::monomial(order, [2, 0, 1], crat(1, 6, 0, 1))),
    )
    .expect("documented conjugator is tangent to the identity");
    let y = crate::vfield::push_forward(&phi, &y0).expect("conjugation stays in the class");
    (y, phi)
}

/// A field whose normalization is carried by a single divergent coefficient
/// series: `F1 = x y1 - x^2 y2`, `F2 = 0`, `lambda = 1`.
///
/// The unique normalizing map is `(x, y1 + s(x) y2, y2)` where `s` solves
/// `x^2 s' + (2l - x) s = l x^2`, so with `l = 1` the coefficients are
/// `s_k = (-1)^k (k-2)! / 2^(k-1)`:
/// a Gevrey-1 series with Borel singularity at `-2l`. Its sectorial sums
/// are known in closed form, which makes every downstream quantity of the
/// pipeline checkable against quadrature of [`euler_embedding_sum`].
pub fn euler_embedding(trunc: usize) -> DiagSaddleNode<CRat> {
    euler_embedding_scaled(trunc, CRat::from_int(1))
}

/// As [`euler_embedding`] with the coupling scaled by `eps`: the whole
/// moduli content scales linearly with `eps`, which makes small-amplitude
/// transition data available with the same closed-form structure.
pub fn euler_embedding_scaled(trunc: usize, eps: CRat) -> DiagSaddleNode<CRat> {
    let f1 = MultiSeries::from_terms(
        trunc,
        [([1, 1, 0], CRat::from_int(1)), ([2, 0, 1], -eps)],
    );
    DiagSaddleNode::new(CRat::from_int(1), f1, MultiSeries::zero(trunc)).unwrap()
}

/// Coefficients of the divergent series `s` of [`euler_embedding`]:
/// `s_k = (-1)^k (k-2)! / 2^(k-1)` for `k >= 2` (with `l = 1`).
pub fn euler_embedding_coefficient(k: usize) -> C64 {
    if k < 2 {
        return C64::new(0.0, 0.0);
    }
    let mut fact = 1.0f64;
    for i in 1..=(k - 2) {
        fact *= i as f64;
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    C64::new(sign * fact / 2f64.powi(k as i32 - 1), 0.0)
}

/// The sectorial sum of `s` for `Re(2/x) > 0`, by quadrature of
/// `x int_0^inf e^(-u) / (u + 2/x) du`.
pub fn euler_embedding_sum(x: C64) -> C64 {
    let mu_over_x = C64::new(2.0, 0.0) / x;
    assert!(mu_over_x.re > 0.0, "closed-form sum needs Re(2/x) > 0");
    let (nodes, weights) = gauss_legendre(32);
    let mut total = C64::new(0.0, 0.0);
    // Panels of the decaying integrand out to u = 60.
    let mut a = 0.0f64;
    for width in [0.5f64, 1.0, 2.0, 4.0, 8.0, 16.0, 28.5] {
        let b = a + width;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (t, w) in nodes.iter().zip(&weights) {
            let u = mid + half * t;
            total += C64::new((-u).exp(), 0.0) / (C64::new(u, 0.0) + mu_over_x) * *w * half;
        }
        a = b;
    }
    x * total
}

/// The doubly-resonant chart of the first Painleve equation
/// `u'' = 6 u^2 + z` at its irregular point.
///
/// Derivation: on the equilibrium branch `u = z^(1/2) w`, `w -> w0` with
/// `6 w0^2 + 1 = 0`, rescaled time `t = (4/5) z^(5/4)` gives
/// `w'' + w'/t - (4/25) w / t^2 = 6 w^2 + 1`. Writing `w = w0 + d`,
/// `x = -1/t` (so `dx/dt = x^2`) and diagonalizing `(d, d')` through
/// `y_{1,2} = (d -+ d'/om)/2` with `om = sqrt(12 w0)` yields
///
/// ```text
/// x^2 dy1/dx = -om y1 - (3/om) d^2 - (x/2)(y2 - y1) - (2/25)(x^2/om)(w0 + d)
/// x^2 dy2/dx = +om y2 + (3/om) d^2 + (x/2)(y2 - y1) + (2/25)(x^2/om)(w0 + d)
/// ```
///
/// with `d = y1 + y2`: a doubly-resonant saddle-node with `lambda = om`,
/// residue exactly 1, and `dF1/dy1 + dF2/dy2 = x` on the nose (the chart
/// is transversally Hamiltonian). The branch `w0 = +i/sqrt(6)` is used.
/// Checked against direct integration of the second-order equation in the
/// test suite.
pub fn painleve_one(trunc: usize) -> DiagSaddleNode<C64> {
    let w0 = C64::new(0.0, 1.0 / 6f64.sqrt());
    let om = (w0 * 12.0).sqrt();
    let mut f1 = MultiSeries::zero(trunc);
    let mut f2 = MultiSeries::zero(trunc);
    let q = C64::new(3.0, 0.0) / om;
    // -(3/om) (y1 + y2)^2 and its mirror.
    for e in [[0, 2, 0], [0, 0, 2]] {
        f1.add_term(e, -q);
        f2.add_term(e, q);
    }
    f1.add_term([0, 1, 1], -2.0 * q);
    f2.add_term([0, 1, 1], 2.0 * q);
    // -+ (x/2)(y2 - y1)
    f1.add_term([1, 0, 1], C64::new(-0.5, 0.0));
    f1.add_term([1, 1, 0], C64::new(0.5, 0.0));
    f2.add_term([1, 0, 1], C64::new(0.5, 0.0));
    f2.add_term([1, 1, 0], C64::new(-0.5, 0.0));
    // -+ (2/25)(x^2/om)(w0 + y1 + y2)
    let r = C64::new(2.0 / 25.0, 0.0) / om;
    f1.add_term([2, 0, 0], -r * w0);
    f1.add_term([2, 1, 0], -r);
    f1.add_term([2, 0, 1], -r);
    f2.add_term([2, 0, 0], r * w0);
    f2.add_term([2, 1, 0], r);
    f2.add_term([2, 0, 1], r);
    DiagSaddleNode::new(om, f1, f2).unwrap()
}

/// `|2^(3/8) 3^(1/8) / sqrt(pi)|`, the known magnitude of the affine
/// transition datum of the first Painleve equation.
pub fn painleve_one_constant() -> f64 {
    2f64.powf(0.375) * 3f64.powf(0.125) / std::f64::consts::PI.sqrt()
}
