//! The vector-field model and its classification predicates.
//!
//! A [`DiagSaddleNode`] is a germ
//! `x^2 d/dx + (-l y1 + F1) d/dy1 + (l y2 + F2) d/dy2` with `l != 0` and
//! `F1, F2` of order at least two. Fibered diffeomorphisms tangent to the
//! identity act on these by push-forward; the residue is the basic invariant
//! of that action, and the remaining predicates (non-degeneracy,
//! div-integrability of the restriction to `{x = 0}`, transversal
//! Hamiltonicity) decide which parts of the theory apply to a given field.

use crate::coeff::Coeff;
use crate::series::{invert_diffeo, MultiSeries, SeriesError, Var};

/// Errors from vector-field level operations.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VFieldError {
    #[error("lambda must be nonzero")]
    ZeroLambda,
    #[error("F{component} has a term of total degree < 2")]
    OrderTooLow { component: usize },
    #[error("jet order {jet} exceeds truncation order {trunc}")]
    JetBeyondTruncation { jet: usize, trunc: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// `x^2 d/dx + (-l y1 + F1) d/dy1 + (l y2 + F2) d/dy2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagSaddleNode<K: Coeff> {
    lambda: K,
    f1: MultiSeries<K>,
    f2: MultiSeries<K>,
}

impl<K: Coeff> DiagSaddleNode<K> {
    pub fn new(lambda: K, f1: MultiSeries<K>, f2: MultiSeries<K>) -> Result<Self, VFieldError> {
        if lambda.is_zero() {
            return Err(VFieldError::ZeroLambda);
        }
        if !f1.order_at_least_two() {
            return Err(VFieldError::OrderTooLow { component: 1 });
        }
        if !f2.order_at_least_two() {
            return Err(VFieldError::OrderTooLow { component: 2 });
        }
        Ok(DiagSaddleNode { lambda, f1, f2 })
    }

    pub fn lambda(&self) -> &K {
        &self.lambda
    }

    pub fn f1(&self) -> &MultiSeries<K> {
        &self.f1
    }

    pub fn f2(&self) -> &MultiSeries<K> {
        &self.f2
    }

    pub fn trunc_order(&self) -> usize {
        self.f1.trunc_order().min(self.f2.trunc_order())
    }

    pub fn truncate(&self, n: usize) -> Self {
        DiagSaddleNode {
            lambda: self.lambda.clone(),
            f1: self.f1.truncate(n),
            f2: self.f2.truncate(n),
        }
    }

    /// Full `d/dy_j` component: `-l y1 + F1` resp. `l y2 + F2`.
    pub fn component(&self, j: usize) -> MultiSeries<K> {
        let n = self.trunc_order();
        match j {
            1 => {
                let lin = MultiSeries::var(n, Var::Y1).scale(&(-self.lambda.clone()));
                lin.add(&self.f1)
            }
            2 => {
                let lin = MultiSeries::var(n, Var::Y2).scale(&self.lambda.clone());
                lin.add(&self.f2)
            }
            _ => panic!("component index must be 1 or 2"),
        }
    }

    /// The derivation applied to a scalar series:
    /// `Y(g) = x^2 dg/dx + B1 dg/dy1 + B2 dg/dy2`.
    ///
    /// The result is carried at `g`'s truncation order; this is sound because
    /// `x^2` and the order-one components shift every derivative term up by
    /// at least one degree.
    pub fn apply_to(&self, g: &MultiSeries<K>) -> MultiSeries<K> {
        let n = g.trunc_order();
        let dx = derive_keep_trunc(g, Var::X);
        let d1 = derive_keep_trunc(g, Var::Y1);
        let d2 = derive_keep_trunc(g, Var::Y2);
        let mut acc = dx.mul_monomial([2, 0, 0], &K::one()).truncate(n);
        acc = acc.add(&self.component(1).mul(&d1).truncate(n));
        acc = acc.add(&self.component(2).mul(&d2).truncate(n));
        acc
    }

    /// Restriction to `{x = 0}`: the two `d/dy` components with every
    /// `x`-divisible term dropped.
    pub fn restrict_x0(&self) -> (MultiSeries<K>, MultiSeries<K>) {
        let keep_x0 = |s: &MultiSeries<K>| {
            MultiSeries::from_terms(
                s.trunc_order(),
                s.terms().filter(|(e, _)| e[0] == 0).map(|(e, c)| (*e, c.clone())),
            )
        };
        (keep_x0(&self.component(1)), keep_x0(&self.component(2)))
    }

    pub fn to_c64(&self) -> DiagSaddleNode<crate::coeff::C64> {
        DiagSaddleNode {
            lambda: self.lambda.to_c64(),
            f1: self.f1.to_c64(),
            f2: self.f2.to_c64(),
        }
    }
}

/// The invariant `F1_(1,1,0) + F2_(1,0,1)`.
pub fn residue<K: Coeff>(y: &DiagSaddleNode<K>) -> K {
    y.f1.coeff([1, 1, 0]) + y.f2.coeff([1, 0, 1])
}

/// A fibered map `(x, y) -> (x, phi1, phi2)` tangent to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberedDiffeo<K: Coeff> {
    phi1: MultiSeries<K>,
    phi2: MultiSeries<K>,
}

impl<K: Coeff> FiberedDiffeo<K> {
    pub fn new(phi1: MultiSeries<K>, phi2: MultiSeries<K>) -> Result<Self, VFieldError> {
        let n = phi1.trunc_order().min(phi2.trunc_order());
        let u1 = phi1.sub(&MultiSeries::var(n, Var::Y1));
        let u2 = phi2.sub(&MultiSeries::var(n, Var::Y2));
        if !u1.order_at_least_two() {
            return Err(SeriesError::NotTangentToIdentity { component: 1 }.into());
        }
        if !u2.order_at_least_two() {
            return Err(SeriesError::NotTangentToIdentity { component: 2 }.into());
        }
        Ok(FiberedDiffeo { phi1, phi2 })
    }

    pub fn identity(n: usize) -> Self {
        FiberedDiffeo {
            phi1: MultiSeries::var(n, Var::Y1),
            phi2: MultiSeries::var(n, Var::Y2),
        }
    }

    pub fn phi1(&self) -> &MultiSeries<K> {
        &self.phi1
    }

    pub fn phi2(&self) -> &MultiSeries<K> {
        &self.phi2
    }

    pub fn trunc_order(&self) -> usize {
        self.phi1.trunc_order().min(self.phi2.trunc_order())
    }

    pub fn is_identity(&self) -> bool {
        let n = self.trunc_order();
        self.phi1 == MultiSeries::var(n, Var::Y1) && self.phi2 == MultiSeries::var(n, Var::Y2)
    }

    /// `self` after `inner`: `(self . inner)(x, y) = self(x, inner(x, y))`.
    pub fn compose(&self, inner: &Self) -> Result<Self, VFieldError> {
        let n = self.trunc_order().min(inner.trunc_order());
        let x = MultiSeries::var(n, Var::X);
        let p1 = self.phi1.substitute(&x, &inner.phi1, &inner.phi2)?;
        let p2 = self.phi2.substitute(&x, &inner.phi1, &inner.phi2)?;
        FiberedDiffeo::new(p1, p2)
    }

    pub fn inverse(&self) -> Result<Self, VFieldError> {
        let (p1, p2) = invert_diffeo(&self.phi1, &self.phi2)?;
        FiberedDiffeo::new(p1, p2)
    }

    /// Determinant of the `y`-Jacobian at fixed `x`, sound through total
    /// degree `trunc_order - 1`.
    pub fn det_jacobian_y(&self) -> MultiSeries<K> {
        let a = self.phi1.derive(Var::Y1);
        let b = self.phi1.derive(Var::Y2);
        let c = self.phi2.derive(Var::Y1);
        let d = self.phi2.derive(Var::Y2);
        a.mul(&d).sub(&b.mul(&c))
    }

    pub fn to_c64(&self) -> FiberedDiffeo<crate::coeff::C64> {
        FiberedDiffeo {
            phi1: self.phi1.to_c64(),
            phi2: self.phi2.to_c64(),
        }
    }

    /// Pointwise evaluation of the `y`-components.
    pub fn eval(&self, x: &K, y1: &K, y2: &K) -> (K, K) {
        (self.phi1.eval(x, y1, y2), self.phi2.eval(x, y1, y2))
    }
}

/// Derivative kept in a container of the same truncation order.
///
/// Degrees at the container's top order are zero-filled, not computed; the
/// caller must only use the result in products that shift everything up by
/// at least one degree (multiplication by `x^2` or by an order->=1 series).
pub(crate) fn derive_keep_trunc<K: Coeff>(g: &MultiSeries<K>, v: Var) -> MultiSeries<K> {
    let i = v.index();
    let mut s = MultiSeries::zero(g.trunc_order());
    for (e, c) in g.terms() {
        if e[i] == 0 {
            continue;
        }
        let mut t = *e;
        t[i] -= 1;
        s.add_term(t, c.scale_int(e[i] as i64));
    }
    s
}

/// Push-forward of a saddle-node by a fibered map tangent to the identity.
///
/// The `x`-component stays exactly `x^2` and the linear `y`-part is
/// unchanged, so the result is again a [`DiagSaddleNode`] with the same
/// `lambda`. Exact through the common truncation order.
pub fn push_forward<K: Coeff>(
    phi: &FiberedDiffeo<K>,
    y: &DiagSaddleNode<K>,
) -> Result<DiagSaddleNode<K>, VFieldError> {
    let n = phi.trunc_order().min(y.trunc_order());
    let x = MultiSeries::var(n, Var::X);
    let (psi1, psi2) = invert_diffeo(&phi.phi1.truncate(n), &phi.phi2.truncate(n))?;
    let w1 = y.truncate(n).apply_to(&phi.phi1.truncate(n));
    let w2 = y.truncate(n).apply_to(&phi.phi2.truncate(n));
    let z1 = w1.substitute(&x, &psi1, &psi2)?;
    let z2 = w2.substitute(&x, &psi1, &psi2)?;
    let f1 = z1.add(&MultiSeries::var(n, Var::Y1).scale(&y.lambda));
    let f2 = z2.sub(&MultiSeries::var(n, Var::Y2).scale(&y.lambda));
    DiagSaddleNode::new(y.lambda.clone(), f1, f2)
}

/// Three-valued certification answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TriBool {
    True,
    False,
    Uncertified,
}

/// Outcome of the jet-level orbital-linearization test on `Y | {x=0}`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum DivIntegrability {
    /// No obstruction through the requested jet order.
    NoObstructionUpTo(usize),
    /// First obstructing resonant coefficient: the sum of the two residual
    /// normal-form coefficients at `(y1 y2)^k` is nonzero.
    Obstruction {
        /// `k` in the obstructing monomial `(y1 y2)^k y_j`.
        v_power: usize,
        /// Total degree `2k + 1` at which the obstruction appears.
        degree: usize,
        /// Magnitude of the obstructing sum.
        magnitude: f64,
    },
}

/// Everything `classify` decides about a field.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport<K: Coeff> {
    pub residue: K,
    /// Whether the residue avoids the nonpositive rationals. The note
    /// records how the answer was certified. Logically independent of
    /// `strictly_nondegenerate`; both are reported raw.
    pub nondegenerate: TriBool,
    pub nondegenerate_note: String,
    /// `Re(residue) > 0`.
    pub strictly_nondegenerate: bool,
    pub div_integrable: DivIntegrability,
    pub transversally_hamiltonian: bool,
}

/// Denominator bound used when float mode looks for a nearby nonpositive
/// rational before committing to a non-degeneracy verdict.
const FLOAT_RATIONAL_SCAN_MAX_DEN: i64 = 64;
const FLOAT_RATIONAL_SCAN_TOL: f64 = 1e-9;

fn nondegenerate_verdict<K: Coeff>(res: &K) -> (TriBool, String) {
    if let Some(in_q) = res.in_q_nonpositive() {
        // Exact values are Gaussian rationals, so membership in the
        // nonpositive rationals is decidable.
        if in_q {
            (TriBool::False, "exact: residue is a nonpositive rational".into())
        } else {
            (TriBool::True, "exact: residue avoids the nonpositive rationals".into())
        }
    } else {
        let c = res.to_c64();
        if c.im.abs() > FLOAT_RATIONAL_SCAN_TOL {
            return (TriBool::True, "float: residue has nonzero imaginary part".into());
        }
        for q in 1..=FLOAT_RATIONAL_SCAN_MAX_DEN {
            let p = (c.re * q as f64).round();
            if p <= 0.0 && (c.re - p / q as f64).abs() <= FLOAT_RATIONAL_SCAN_TOL {
                return (
                    TriBool::Uncertified,
                    format!("float: residue within {FLOAT_RATIONAL_SCAN_TOL:e} of {}/{q}", p as i64),
                );
            }
        }
        if c.re > 0.0 {
            (TriBool::True, "float: positive real part".into())
        } else {
            (
                TriBool::True,
                "float: no nonpositive rational with denominator <= 64 nearby".into(),
            )
        }
    }
}

/// Transversal Hamiltonicity of the field with respect to the transverse
/// area form `dy1 ^ dy2 / x`.
///
/// At series level the Lie-derivative condition reduces to the single
/// coefficientwise identity `dF1/dy1 + dF2/dy2 = x` (the linear parts cancel
/// and `L_Y dx = 2x dx` always lies in the `dx`-ideal). The identity forces
/// the residue to be 1. Checked through total degree `trunc - 1`.
pub fn transversally_hamiltonian<K: Coeff>(y: &DiagSaddleNode<K>, tol: f64) -> bool {
    let div = y.f1.derive(Var::Y1).add(&y.f2.derive(Var::Y2));
    let dev = div.sub(&MultiSeries::var(div.trunc_order(), Var::X));
    if K::EXACT {
        dev.is_zero()
    } else {
        dev.max_abs_through_degree(dev.trunc_order()) <= tol
    }
}

/// Float-mode tolerance for the coefficientwise predicates in `classify`.
pub const CLASSIFY_FLOAT_TOL: f64 = 1e-9;

/// Compute every classification predicate at once.
///
/// `jet_order` bounds the orbital-linearization test of the restriction to
/// `{x = 0}` and must not exceed the truncation order.
pub fn classify<K: Coeff>(
    y: &DiagSaddleNode<K>,
    jet_order: usize,
) -> Result<ClassificationReport<K>, VFieldError> {
    if jet_order > y.trunc_order() {
        return Err(VFieldError::JetBeyondTruncation { jet: jet_order, trunc: y.trunc_order() });
    }
    let res = residue(y);
    let (nondeg, note) = nondegenerate_verdict(&res);
    let strictly = res.to_c64().re > 0.0;
    let div_integrable =
        crate::normalizer::orbital_linearization_jet(y, jet_order, CLASSIFY_FLOAT_TOL)?;
    Ok(ClassificationReport {
        residue: res,
        nondegenerate: nondeg,
        nondegenerate_note: note,
        strictly_nondegenerate: strictly,
        div_integrable,
        transversally_hamiltonian: transversally_hamiltonian(y, CLASSIFY_FLOAT_TOL),
    })
}

/// True when the exponent is resonant for component `j`: `x^k0 (y1 y2)^k y_j`.
pub(crate) fn is_resonant(j: usize, e: &Exp3) -> bool {
    match j {
        1 => e[1] == e[2] + 1,
        2 => e[2] == e[1] + 1,
        _ => unreachable!(),
    }
}

pub(crate) type Exp3 = [usize; 3];

/// Semisimple eigenvalue of the homological operator on component `j` at
/// exponent `e`, as an integer multiple of `lambda`:
/// component 1 gets `1 - k1 + k2`, component 2 gets `k2 - k1 - 1`.
pub(crate) fn eigen_multiple(j: usize, e: &Exp3) -> i64 {
    match j {
        1 => 1 - e[1] as i64 + e[2] as i64,
        2 => e[2] as i64 - e[1] as i64 - 1,
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{crat, CRat};
    use crate::normalizer::NormalForm;
    use crate::series::UniSeries;

    fn lam() -> CRat {
        CRat::from_int(1)
    }

    #[test]
    fn residue_examples() {
        let n = 4;
        // F1 = 2 x y1, F2 = 3 x y2 -> res = 5.
        let y = DiagSaddleNode::new(
            lam(),
            MultiSeries::monomial(n, [1, 1, 0], CRat::from_int(2)),
            MultiSeries::monomial(n, [1, 0, 1], CRat::from_int(3)),
        )
        .unwrap();
        assert_eq!(residue(&y), CRat::from_int(5));

        // F1 = y2^2, F2 = y1^2 -> res = 0.
        let y = DiagSaddleNode::new(
            lam(),
            MultiSeries::monomial(n, [0, 0, 2], CRat::from_int(1)),
            MultiSeries::monomial(n, [0, 2, 0], CRat::from_int(1)),
        )
        .unwrap();
        assert_eq!(residue(&y), CRat::from_int(0));

        // Complex coefficients: (1+i) + (2-i) = 3.
        let y = DiagSaddleNode::new(
            lam(),
            MultiSeries::monomial(n, [1, 1, 0], crat(1, 1, 1, 1)),
            MultiSeries::monomial(n, [1, 0, 1], crat(2, 1, -1, 1)),
        )
        .unwrap();
        assert_eq!(residue(&y), CRat::from_int(3));
    }

    #[test]
    fn nondegeneracy_examples() {
        let n = 4;
        let y = DiagSaddleNode::new(
            lam(),
            MultiSeries::monomial(n, [1, 1, 0], crat(-1, 2, 0, 1)),
            MultiSeries::zero(n),
        )
        .unwrap();
        let rep = classify(&y, 3).unwrap();
        assert_eq!(rep.nondegenerate, TriBool::False);
        assert!(!rep.strictly_nondegenerate);

        // Linear field: div-integrable to any jet order.
        let y = DiagSaddleNode::new(lam(), MultiSeries::zero(n), MultiSeries::zero(n)).unwrap();
        let rep = classify(&y, 4).unwrap();
        assert_eq!(rep.div_integrable, DivIntegrability::NoObstructionUpTo(4));
    }

    #[test]
    fn hamiltonian_criterion_on_normal_form_family() {
        // On normal forms the transverse-area criterion must hold exactly
        // when a1 + a2 = 1 and c1 + c2 = 0.
        let n = 7;
        let cases: Vec<(CRat, CRat, i64, i64, bool)> = vec![
            (crat(1, 2, 0, 1), crat(1, 2, 0, 1), 3, -3, true),
            (crat(1, 2, 0, 1), crat(1, 2, 0, 1), 3, -2, false),
            (crat(1, 3, 0, 1), crat(1, 2, 0, 1), 2, -2, false),
            (crat(2, 1, 0, 1), crat(-1, 1, 0, 1), 0, 0, true),
        ];
        for (a1, a2, c11, c21, expect) in cases {
            let c1 = UniSeries::from_coeffs(n, vec![CRat::from_int(0), CRat::from_int(c11)]);
            let c2 = UniSeries::from_coeffs(n, vec![CRat::from_int(0), CRat::from_int(c21)]);
            let nf = NormalForm::new(lam(), a1, a2, c1, c2);
            let y = nf.vector_field(n);
            assert_eq!(
                transversally_hamiltonian(&y, 0.0),
                expect,
                "a1={:?} a2={:?} c11={} c21={}",
                residue(&y),
                expect,
                c11,
                c21
            );
        }
    }

    #[test]
    fn push_forward_identity_and_round_trip() {
        let n = 6;
        let id = FiberedDiffeo::<CRat>::identity(n);
        let y = DiagSaddleNode::new(
            lam(),
            MultiSeries::from_terms(
                n,
                [([1, 1, 0], crat(1, 2, 0, 1)), ([0, 0, 2], CRat::from_int(1))],
            ),
            MultiSeries::monomial(n, [3, 0, 1], crat(-2, 3, 1, 1)),
        )
        .unwrap();
        assert_eq!(push_forward(&id, &y).unwrap(), y);

        let phi = FiberedDiffeo::new(
            MultiSeries::var(n, Var::Y1).add(&MultiSeries::from_terms(
                n,
                [([0, 0, 2], crat(1, 3, 0, 1)), ([2, 1, 0], CRat::from_int(1))],
            )),
            MultiSeries::var(n, Var::Y2).add(&MultiSeries::monomial(n, [1, 1, 1], crat(0, 1, 1, 2))),
        )
        .unwrap();
        let pushed = push_forward(&phi, &y).unwrap();
        let back = push_forward(&phi.inverse().unwrap(), &pushed).unwrap();
        assert_eq!(back, y);

        // The residue is preserved exactly.
        assert_eq!(residue(&pushed), residue(&y));
    }

    #[test]
    fn restriction_examples() {
        let n = 5;
        // F1 = x y1^2: the restriction's first component is -l y1.
        let y = DiagSaddleNode::new(
            lam(),
            MultiSeries::monomial(n, [1, 2, 0], CRat::from_int(1)),
            MultiSeries::zero(n),
        )
        .unwrap();
        let (b1, _) = y.restrict_x0();
        assert_eq!(b1, MultiSeries::var(n, Var::Y1).scale(&(-lam())));

        // F1 = y2^2 survives the restriction.
        let y = DiagSaddleNode::new(
            lam(),
            MultiSeries::monomial(n, [0, 0, 2], CRat::from_int(1)),
            MultiSeries::zero(n),
        )
        .unwrap();
        let (b1, _) = y.restrict_x0();
        let expect = MultiSeries::var(n, Var::Y1)
            .scale(&(-lam()))
            .add(&MultiSeries::monomial(n, [0, 0, 2], CRat::from_int(1)));
        assert_eq!(b1, expect);
    }

    #[test]
    fn restriction_is_coefficient_filter() {
        let n = 6;
        let mut seed = 777u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as i64 % 5
        };
        let mut f1 = MultiSeries::zero(n);
        let mut f2 = MultiSeries::zero(n);
        for k0 in 0..4 {
            for k1 in 0..3 {
                for k2 in 0..3 {
                    if k0 + k1 + k2 >= 2 {
                        f1.add_term([k0, k1, k2], CRat::from_int(next()));
                        f2.add_term([k0, k1, k2], CRat::from_int(next()));
                    }
                }
            }
        }
        let y = DiagSaddleNode::new(lam(), f1.clone(), f2.clone()).unwrap();
        let (b1, b2) = y.restrict_x0();
        for (e, c) in y.component(1).terms() {
            let want = if e[0] == 0 { c.clone() } else { CRat::from_int(0) };
            assert_eq!(b1.coeff(*e), want);
        }
        for (e, c) in y.component(2).terms() {
            let want = if e[0] == 0 { c.clone() } else { CRat::from_int(0) };
            assert_eq!(b2.coeff(*e), want);
        }
    }

    #[test]
    fn push_forward_keeps_x_component() {
        // The x-component of the push-forward is x^2 by construction of the
        // type; what must be checked is that conjugation stays in the class,
        // i.e. the result parses as a DiagSaddleNode with the same lambda.
        let n = 5;
        let y = DiagSaddleNode::new(
            lam(),
            MultiSeries::monomial(n, [0, 2, 1], crat(1, 5, 0, 1)),
            MultiSeries::monomial(n, [2, 0, 1], crat(1, 1, -1, 3)),
        )
        .unwrap();
        let phi = FiberedDiffeo::new(
            MultiSeries::var(n, Var::Y1).add(&MultiSeries::monomial(n, [0, 2, 0], crat(1, 2, 0, 1))),
            MultiSeries::var(n, Var::Y2).add(&MultiSeries::monomial(n, [1, 0, 1], crat(0, 1, 1, 1))),
        )
        .unwrap();
        let pushed = push_forward(&phi, &y).unwrap();
        assert_eq!(pushed.lambda(), y.lambda());
        assert!(pushed.f1().order_at_least_two());
        assert!(pushed.f2().order_at_least_two());
    }
}
