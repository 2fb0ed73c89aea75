//! Truncated formal power series in `(x, y1, y2)` and in one variable.
//!
//! A [`MultiSeries`] stores a finite map from exponent triples
//! `(k0, k1, k2)` to coefficients, with every stored total degree bounded by
//! the truncation order. The map is kept canonical: coefficients that strip
//! (exact zeros, or float values below [`crate::coeff::FLOAT_STRIP`]) are
//! never stored. Values are immutable after construction; all operations
//! return new series.
//!
//! Binary operations propagate truncation as `min(a, b)`, so mixing orders
//! is allowed and loses nothing that was representable.

use crate::coeff::Coeff;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent triple `(k0, k1, k2)` for `x^k0 y1^k1 y2^k2`.
pub type Exp = [usize; 3];

/// Total degree of an exponent triple.
#[inline]
pub fn degree(e: &Exp) -> usize {
    e[0] + e[1] + e[2]
}

/// Variable index for derivatives and substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y1,
    Y2,
}

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::X => 0,
            Var::Y1 => 1,
            Var::Y2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeries<K: Coeff> {
    trunc_order: usize,
    terms: BTreeMap<Exp, K>,
}

impl<K: Coeff> MultiSeries<K> {
    pub fn zero(trunc_order: usize) -> Self {
        MultiSeries { trunc_order, terms: BTreeMap::new() }
    }

    pub fn constant(trunc_order: usize, c: K) -> Self {
        let mut s = Self::zero(trunc_order);
        s.add_term([0, 0, 0], c);
        s
    }

    pub fn one(trunc_order: usize) -> Self {
        Self::constant(trunc_order, K::one())
    }

    /// The series `x`, `y1` or `y2`.
    pub fn var(trunc_order: usize, v: Var) -> Self {
        let mut e = [0, 0, 0];
        e[v.index()] = 1;
        Self::monomial(trunc_order, e, K::one())
    }

    pub fn monomial(trunc_order: usize, e: Exp, c: K) -> Self {
        let mut s = Self::zero(trunc_order);
        s.add_term(e, c);
        s
    }

    pub fn from_terms(trunc_order: usize, terms: impl IntoIterator<Item = (Exp, K)>) -> Self {
        let mut s = Self::zero(trunc_order);
        for (e, c) in terms {
            s.add_term(e, c);
        }
        s
    }

    pub fn trunc_order(&self) -> usize {
        self.trunc_order
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exp, &K)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: Exp) -> K {
        self.terms.get(&e).cloned().unwrap_or_else(K::zero)
    }

    /// Adds `c` to the coefficient at `e`, keeping the canonical form.
    /// Terms beyond the truncation order are dropped.
    pub fn add_term(&mut self, e: Exp, c: K) {
        if degree(&e) > self.trunc_order || c.should_strip() {
            if !self.terms.contains_key(&e) {
                return;
            }
        }
        if degree(&e) > self.trunc_order {
            return;
        }
        let updated = match self.terms.get(&e) {
            Some(old) => old.clone() + c,
            None => c,
        };
        if updated.should_strip() {
            self.terms.remove(&e);
        } else {
            self.terms.insert(e, updated);
        }
    }

    pub fn set_coeff(&mut self, e: Exp, c: K) {
        if degree(&e) > self.trunc_order || c.should_strip() {
            self.terms.remove(&e);
        } else {
            self.terms.insert(e, c);
        }
    }

    /// Minimal total degree of a nonzero term; `None` for the zero series.
    pub fn order(&self) -> Option<usize> {
        self.terms.keys().map(degree).min()
    }

    /// True when every term has total degree at least two.
    pub fn order_at_least_two(&self) -> bool {
        self.order().map_or(true, |o| o >= 2)
    }

    pub fn truncate(&self, m: usize) -> Self {
        let mut s = Self::zero(m.min(self.trunc_order));
        for (e, c) in &self.terms {
            if degree(e) <= s.trunc_order {
                s.terms.insert(*e, c.clone());
            }
        }
        s
    }

    /// Homogeneous part of total degree `d` (kept at the same truncation).
    pub fn homogeneous_part(&self, d: usize) -> Self {
        let mut s = Self::zero(self.trunc_order);
        for (e, c) in &self.terms {
            if degree(e) == d {
                s.terms.insert(*e, c.clone());
            }
        }
        s
    }

    pub fn neg(&self) -> Self {
        let mut s = Self::zero(self.trunc_order);
        for (e, c) in &self.terms {
            s.terms.insert(*e, -c.clone());
        }
        s
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut s = Self::zero(self.trunc_order.min(rhs.trunc_order));
        for (e, c) in &self.terms {
            if degree(e) <= s.trunc_order {
                s.terms.insert(*e, c.clone());
            }
        }
        for (e, c) in &rhs.terms {
            s.add_term(*e, c.clone());
        }
        s
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, k: &K) -> Self {
        let mut s = Self::zero(self.trunc_order);
        if k.should_strip() {
            return s;
        }
        for (e, c) in &self.terms {
            s.add_term(*e, c.clone() * k.clone());
        }
        s
    }

    /// Truncated Cauchy product. Every coefficient of total degree up to
    /// the result's truncation order is the exact convolution of the inputs.
    pub fn mul(&self, rhs: &Self) -> Self {
        let n = self.trunc_order.min(rhs.trunc_order);
        let mut s = Self::zero(n);
        // Skip whole left terms whose degree already exceeds the cutoff.
        for (ea, ca) in &self.terms {
            let da = degree(ea);
            if da > n {
                continue;
            }
            for (eb, cb) in &rhs.terms {
                if da + degree(eb) > n {
                    continue;
                }
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                s.add_term(e, ca.clone() * cb.clone());
            }
        }
        s
    }

    /// Multiply by the monomial `c * x^e0 y1^e1 y2^e2`.
    pub fn mul_monomial(&self, e: Exp, c: &K) -> Self {
        let mut s = Self::zero(self.trunc_order);
        if c.should_strip() {
            return s;
        }
        for (ea, ca) in &self.terms {
            let t = [ea[0] + e[0], ea[1] + e[1], ea[2] + e[2]];
            s.add_term(t, ca.clone() * c.clone());
        }
        s
    }

    /// Formal partial derivative. The truncation order drops by one: degree-N
    /// information about the derivative would need degree-N+1 input.
    pub fn derive(&self, v: Var) -> Self {
        let i = v.index();
        let mut s = Self::zero(self.trunc_order.saturating_sub(1));
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut t = *e;
            t[i] -= 1;
            s.add_term(t, c.scale_int(e[i] as i64));
        }
        s
    }

    /// Evaluate at a point, exactly in the coefficient field.
    pub fn eval(&self, x: &K, y1: &K, y2: &K) -> K {
        let mut pow = [vec![K::one()], vec![K::one()], vec![K::one()]];
        let pts = [x, y1, y2];
        for i in 0..3 {
            let maxp = self.terms.keys().map(|e| e[i]).max().unwrap_or(0);
            for k in 1..=maxp {
                let prev = pow[i][k - 1].clone();
                pow[i].push(prev * pts[i].clone());
            }
        }
        let mut acc = K::zero();
        for (e, c) in &self.terms {
            acc = acc + c.clone() * pow[0][e[0]].clone() * pow[1][e[1]].clone() * pow[2][e[2]].clone();
        }
        acc
    }

    /// Largest coefficient magnitude over total degrees `<= d`.
    /// Exactly zero iff all those coefficients vanish (exact mode).
    pub fn max_abs_through_degree(&self, d: usize) -> f64 {
        self.terms
            .iter()
            .filter(|(e, _)| degree(e) <= d)
            .map(|(_, c)| c.abs_f64())
            .fold(0.0, f64::max)
    }

    /// Composition `f(gx, g1, g2)`, truncated at the common order.
    ///
    /// The substituted series must have no constant term, otherwise the
    /// composition is not defined on truncations.
    pub fn substitute(
        &self,
        gx: &Self,
        g1: &Self,
        g2: &Self,
    ) -> Result<Self, SeriesError> {
        for (name, g) in [("gx", gx), ("g1", g1), ("g2", g2)] {
            if !g.coeff([0, 0, 0]).should_strip() {
                return Err(SeriesError::NonzeroConstantTerm { slot: name });
            }
        }
        let n = self
            .trunc_order
            .min(gx.trunc_order)
            .min(g1.trunc_order)
            .min(g2.trunc_order);

        // Nested Horner evaluation: innermost in g2, then g1, then gx.
        // Group coefficients as k0 -> k1 -> k2 -> coeff.
        let mut grouped: BTreeMap<usize, BTreeMap<usize, BTreeMap<usize, K>>> = BTreeMap::new();
        for (e, c) in &self.terms {
            grouped
                .entry(e[0])
                .or_default()
                .entry(e[1])
                .or_default()
                .insert(e[2], c.clone());
        }
        let horner = |table: &BTreeMap<usize, Self>, g: &Self| -> Self {
            let mut acc = Self::zero(n);
            let maxk = table.keys().max().copied().unwrap_or(0);
            let mut k = maxk as isize;
            while k >= 0 {
                if !acc.is_zero() {
                    acc = acc.mul(g);
                }
                if let Some(t) = table.get(&(k as usize)) {
                    acc = acc.add(t);
                }
                k -= 1;
            }
            acc
        };
        let mut by_k0: BTreeMap<usize, Self> = BTreeMap::new();
        for (k0, by_k1) in &grouped {
            let mut level1: BTreeMap<usize, Self> = BTreeMap::new();
            for (k1, by_k2) in by_k1 {
                let mut level2: BTreeMap<usize, Self> = BTreeMap::new();
                for (k2, c) in by_k2 {
                    level2.insert(*k2, Self::constant(n, c.clone()));
                }
                level1.insert(*k1, horner(&level2, g2));
            }
            by_k0.insert(*k0, horner(&level1, g1));
        }
        Ok(horner(&by_k0, gx))
    }

    /// Convert coefficients to complex doubles.
    pub fn to_c64(&self) -> MultiSeries<crate::coeff::C64> {
        MultiSeries {
            trunc_order: self.trunc_order,
            terms: self.terms.iter().map(|(e, c)| (*e, c.to_c64())).collect(),
        }
    }
}

/// Errors from series-level operations.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SeriesError {
    #[error("substituted series `{slot}` has a nonzero constant term")]
    NonzeroConstantTerm { slot: &'static str },
    #[error("map is not tangent to the identity (component {component})")]
    NotTangentToIdentity { component: usize },
}

/// Inverse of a fibered map `(x, y) -> (x, phi1, phi2)` tangent to the
/// identity. Returns `(psi1, psi2)` with `phi(x, psi1, psi2) = (y1, y2)`
/// modulo total degree `N+1`.
pub fn invert_diffeo<K: Coeff>(
    phi1: &MultiSeries<K>,
    phi2: &MultiSeries<K>,
) -> Result<(MultiSeries<K>, MultiSeries<K>), SeriesError> {
    let n = phi1.trunc_order().min(phi2.trunc_order());
    let y1 = MultiSeries::var(n, Var::Y1);
    let y2 = MultiSeries::var(n, Var::Y2);
    let u1 = phi1.truncate(n).sub(&y1);
    let u2 = phi2.truncate(n).sub(&y2);
    for (i, u) in [(1usize, &u1), (2usize, &u2)] {
        if !u.order_at_least_two() {
            return Err(SeriesError::NotTangentToIdentity { component: i });
        }
    }
    let x = MultiSeries::var(n, Var::X);
    let mut psi1 = y1.clone();
    let mut psi2 = y2.clone();
    // Each pass is correct one degree further; degree 2 is already right.
    for _ in 0..n.saturating_sub(1) {
        let next1 = y1.sub(&u1.substitute(&x, &psi1, &psi2)?);
        let next2 = y2.sub(&u2.substitute(&x, &psi1, &psi2)?);
        if next1 == psi1 && next2 == psi2 {
            break;
        }
        psi1 = next1;
        psi2 = next2;
    }
    Ok((psi1, psi2))
}

impl<K: Coeff> fmt::Display for MultiSeries<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        let mut by_degree: Vec<(&Exp, &K)> = self.terms.iter().collect();
        by_degree.sort_by_key(|(e, _)| (degree(e), **e));
        for (e, c) in by_degree {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:?})", c)?;
            for (i, name) in ["x", "y1", "y2"].iter().enumerate() {
                if e[i] > 0 {
                    write!(f, "*{}^{}", name, e[i])?;
                }
            }
        }
        Ok(())
    }
}

/// Truncated power series in a single variable, indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct UniSeries<K: Coeff> {
    trunc_order: usize,
    coeffs: Vec<K>,
}

impl<K: Coeff> UniSeries<K> {
    pub fn zero(trunc_order: usize) -> Self {
        UniSeries { trunc_order, coeffs: Vec::new() }
    }

    pub fn from_coeffs(trunc_order: usize, coeffs: Vec<K>) -> Self {
        let mut s = UniSeries { trunc_order, coeffs };
        s.coeffs.truncate(trunc_order + 1);
        s.trim();
        s
    }

    fn trim(&mut self) {
        while self.coeffs.last().map_or(false, |c| c.should_strip()) {
            self.coeffs.pop();
        }
    }

    pub fn trunc_order(&self) -> usize {
        self.trunc_order
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.iter().all(|c| c.should_strip())
    }

    pub fn is_zero(&self) -> bool {
        self.is_empty()
    }

    pub fn coeff(&self, k: usize) -> K {
        self.coeffs.get(k).cloned().unwrap_or_else(K::zero)
    }

    pub fn set_coeff(&mut self, k: usize, c: K) {
        if k > self.trunc_order {
            return;
        }
        while self.coeffs.len() <= k {
            self.coeffs.push(K::zero());
        }
        self.coeffs[k] = c;
        self.trim();
    }

    pub fn coeffs(&self) -> &[K] {
        &self.coeffs
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let n = self.trunc_order.min(rhs.trunc_order);
        let mut coeffs = Vec::new();
        for k in 0..=n {
            coeffs.push(self.coeff(k) + rhs.coeff(k));
        }
        Self::from_coeffs(n, coeffs)
    }

    pub fn neg(&self) -> Self {
        Self::from_coeffs(self.trunc_order, self.coeffs.iter().map(|c| -c.clone()).collect())
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let n = self.trunc_order.min(rhs.trunc_order);
        let mut coeffs = vec![K::zero(); n + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.should_strip() || i > n {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                if i + j > n {
                    break;
                }
                coeffs[i + j] = coeffs[i + j].clone() + a.clone() * b.clone();
            }
        }
        Self::from_coeffs(n, coeffs)
    }

    /// Horner evaluation at a scalar point.
    pub fn eval(&self, z: &K) -> K {
        let mut acc = K::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * z.clone() + c.clone();
        }
        acc
    }

    /// `sum_k c_k v^k` for a multivariate `v` (Horner). Used to expand a
    /// series in the resonant monomial into the three-variable algebra.
    pub fn compose_series(&self, v: &MultiSeries<K>) -> MultiSeries<K> {
        let mut acc = MultiSeries::zero(v.trunc_order());
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(v);
            acc.add_term([0, 0, 0], c.clone());
        }
        acc
    }

    pub fn to_c64(&self) -> UniSeries<crate::coeff::C64> {
        UniSeries {
            trunc_order: self.trunc_order,
            coeffs: self.coeffs.iter().map(|c| c.to_c64()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{crat, CRat, C64};

    fn x(n: usize) -> MultiSeries<CRat> {
        MultiSeries::var(n, Var::X)
    }

    #[test]
    fn mul_difference_of_squares() {
        let n = 2;
        let one = MultiSeries::one(n);
        let a = one.add(&x(n));
        let b = one.sub(&x(n));
        let p = a.mul(&b);
        let mut expect = MultiSeries::one(n);
        expect.add_term([2, 0, 0], -CRat::from_int(1));
        assert_eq!(p, expect);
    }

    #[test]
    fn mul_annihilator() {
        let a = MultiSeries::from_terms(
            5,
            [([1, 2, 0], crat(3, 2, 0, 1)), ([0, 0, 3], crat(-1, 7, 2, 3))],
        );
        let z = MultiSeries::zero(5);
        assert!(a.mul(&z).is_zero());
        assert!(z.mul(&a).is_zero());
    }

    // Brute-force convolution over all exponent pairs, no truncation tricks.
    fn convolve_oracle(a: &MultiSeries<CRat>, b: &MultiSeries<CRat>, n: usize) -> MultiSeries<CRat> {
        let mut out = MultiSeries::zero(n);
        for (ea, ca) in a.terms() {
            for (eb, cb) in b.terms() {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                if degree(&e) <= n {
                    out.add_term(e, ca.clone() * cb.clone());
                }
            }
        }
        out
    }

    fn pseudo_random_series(n: usize, maxdeg: usize, seed: &mut u64) -> MultiSeries<CRat> {
        let mut next = move |s: &mut u64| {
            *s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (*s >> 33) as i64
        };
        let mut out = MultiSeries::zero(n);
        for k0 in 0..=maxdeg {
            for k1 in 0..=maxdeg - k0 {
                for k2 in 0..=maxdeg - k0 - k1 {
                    let r = next(seed);
                    if r % 3 == 0 {
                        out.add_term([k0, k1, k2], crat(r % 5, 1 + (r % 3).abs(), (r >> 3) % 4, 1));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn mul_matches_bruteforce_convolution() {
        let mut seed = 42;
        for _ in 0..10 {
            let a = pseudo_random_series(6, 3, &mut seed);
            let b = pseudo_random_series(6, 3, &mut seed);
            assert_eq!(a.mul(&b), convolve_oracle(&a, &b, 6));
        }
    }

    #[test]
    fn substitute_shear_example() {
        // f = y1*y2 under (x, y1 + x^2, y2) at N = 4 gives y1*y2 + x^2*y2.
        let n = 4;
        let f = MultiSeries::monomial(n, [0, 1, 1], CRat::from_int(1));
        let gx = x(n);
        let g1 = MultiSeries::var(n, Var::Y1).add(&MultiSeries::monomial(n, [2, 0, 0], CRat::from_int(1)));
        let g2 = MultiSeries::var(n, Var::Y2);
        let r = f.substitute(&gx, &g1, &g2).unwrap();
        let expect = MultiSeries::from_terms(
            n,
            [([0, 1, 1], CRat::from_int(1)), ([2, 0, 1], CRat::from_int(1))],
        );
        assert_eq!(r, expect);
    }

    #[test]
    fn substitute_identity() {
        let mut seed = 7;
        let f = pseudo_random_series(5, 4, &mut seed);
        let r = f
            .substitute(
                &x(5),
                &MultiSeries::var(5, Var::Y1),
                &MultiSeries::var(5, Var::Y2),
            )
            .unwrap();
        assert_eq!(r, f);
    }

    #[test]
    fn substitute_rejects_constant_term() {
        let f = x(3);
        let bad = MultiSeries::one(3);
        let err = f.substitute(&bad, &MultiSeries::var(3, Var::Y1), &MultiSeries::var(3, Var::Y2));
        assert_eq!(err.unwrap_err(), SeriesError::NonzeroConstantTerm { slot: "gx" });
    }

    // Naive substitution: expand each monomial by explicit power products.
    fn substitute_oracle(
        f: &MultiSeries<CRat>,
        gx: &MultiSeries<CRat>,
        g1: &MultiSeries<CRat>,
        g2: &MultiSeries<CRat>,
        n: usize,
    ) -> MultiSeries<CRat> {
        let pow = |g: &MultiSeries<CRat>, k: usize| {
            let mut acc = MultiSeries::one(n);
            for _ in 0..k {
                acc = acc.mul(g);
            }
            acc
        };
        let mut out = MultiSeries::zero(n);
        for (e, c) in f.terms() {
            let term = pow(gx, e[0]).mul(&pow(g1, e[1])).mul(&pow(g2, e[2]));
            out = out.add(&term.scale(c));
        }
        out
    }

    #[test]
    fn substitute_matches_naive_expansion() {
        let mut seed = 99;
        let n = 5;
        for _ in 0..5 {
            let f = pseudo_random_series(n, 4, &mut seed);
            let mut g1 = pseudo_random_series(n, 3, &mut seed);
            let mut g2 = pseudo_random_series(n, 3, &mut seed);
            g1.set_coeff([0, 0, 0], CRat::from_int(0));
            g2.set_coeff([0, 0, 0], CRat::from_int(0));
            let gx = x(n);
            let got = f.substitute(&gx, &g1, &g2).unwrap();
            let want = substitute_oracle(&f, &gx, &g1, &g2, n);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn invert_identity_and_shear() {
        let n = 3;
        let y1 = MultiSeries::<CRat>::var(n, Var::Y1);
        let y2 = MultiSeries::<CRat>::var(n, Var::Y2);
        let (p1, p2) = invert_diffeo(&y1, &y2).unwrap();
        assert_eq!((p1, p2), (y1.clone(), y2.clone()));

        // (y1 + y2^2, y2) inverts to (y1 - y2^2, y2).
        let phi1 = y1.add(&MultiSeries::monomial(n, [0, 0, 2], CRat::from_int(1)));
        let (p1, p2) = invert_diffeo(&phi1, &y2).unwrap();
        assert_eq!(p1, y1.sub(&MultiSeries::monomial(n, [0, 0, 2], CRat::from_int(1))));
        assert_eq!(p2, y2);
    }

    #[test]
    fn invert_round_trip_random() {
        let n = 6;
        let mut seed = 1234;
        for _ in 0..5 {
            let y1 = MultiSeries::<CRat>::var(n, Var::Y1);
            let y2 = MultiSeries::<CRat>::var(n, Var::Y2);
            let mut u1 = pseudo_random_series(n, 3, &mut seed);
            let mut u2 = pseudo_random_series(n, 3, &mut seed);
            // Force order >= 2.
            for e in [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]] {
                u1.set_coeff(e, CRat::from_int(0));
                u2.set_coeff(e, CRat::from_int(0));
            }
            let phi1 = y1.add(&u1);
            let phi2 = y2.add(&u2);
            let (psi1, psi2) = invert_diffeo(&phi1, &phi2).unwrap();
            let gx = x(n);
            // Both composition orders must give the identity mod degree n+1.
            let c1 = phi1.substitute(&gx, &psi1, &psi2).unwrap();
            let c2 = phi2.substitute(&gx, &psi1, &psi2).unwrap();
            assert_eq!(c1, y1);
            assert_eq!(c2, y2);
            let d1 = psi1.substitute(&gx, &phi1, &phi2).unwrap();
            let d2 = psi2.substitute(&gx, &phi1, &phi2).unwrap();
            assert_eq!(d1, y1);
            assert_eq!(d2, y2);
        }
    }

    #[test]
    fn invert_rejects_bad_linear_part() {
        let n = 3;
        let y2 = MultiSeries::<CRat>::var(n, Var::Y2);
        let bad = MultiSeries::<CRat>::var(n, Var::Y1).scale(&CRat::from_int(2));
        assert!(invert_diffeo(&bad, &y2).is_err());
    }

    #[test]
    fn derive_and_eval_examples() {
        let n = 4;
        let f = MultiSeries::monomial(n, [2, 1, 0], CRat::from_int(1));
        let d = f.derive(Var::X);
        assert_eq!(d, MultiSeries::monomial(n - 1, [1, 1, 0], CRat::from_int(2)));

        let g = MultiSeries::<C64>::one(2).add(&MultiSeries::var(2, Var::X));
        let v = g.eval(&C64::new(0.5, 0.0), &C64::new(0.0, 0.0), &C64::new(0.0, 0.0));
        assert!((v - C64::new(1.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn leibniz_rule_random() {
        let mut seed = 5150;
        let n = 6;
        for _ in 0..5 {
            let f = pseudo_random_series(n, 3, &mut seed);
            let g = pseudo_random_series(n, 3, &mut seed);
            for v in [Var::X, Var::Y1, Var::Y2] {
                let lhs = f.mul(&g).derive(v);
                let rhs = f.derive(v).mul(&g.truncate(n - 1)).add(&f.truncate(n - 1).mul(&g.derive(v)));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn truncation_compatibility() {
        let mut seed = 31337;
        for _ in 0..5 {
            let a = pseudo_random_series(8, 5, &mut seed);
            let b = pseudo_random_series(8, 5, &mut seed);
            let full = a.mul(&b);
            for m in 0..=8usize {
                let lhs = full.truncate(m);
                let rhs = a.truncate(m).mul(&b.truncate(m));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn exact_matches_float_at_1e12() {
        let mut seed = 2718;
        for _ in 0..5 {
            let a = pseudo_random_series(6, 4, &mut seed);
            let b = pseudo_random_series(6, 4, &mut seed);
            let exact = a.mul(&b).to_c64();
            let float = a.to_c64().mul(&b.to_c64());
            for (e, c) in exact.terms() {
                let d = (float.coeff(*e) - c).norm();
                let scale = c.norm().max(1.0);
                assert!(d / scale < 1e-12, "coefficient {:?} off by {}", e, d / scale);
            }
        }
    }

    #[test]
    fn uniseries_basics() {
        let a = UniSeries::<CRat>::from_coeffs(4, vec![CRat::from_int(1), CRat::from_int(2)]);
        let b = UniSeries::<CRat>::from_coeffs(4, vec![CRat::from_int(0), CRat::from_int(1), CRat::from_int(1)]);
        let p = a.mul(&b);
        // (1 + 2v)(v + v^2) = v + 3v^2 + 2v^3
        assert_eq!(p.coeff(1), CRat::from_int(1));
        assert_eq!(p.coeff(2), CRat::from_int(3));
        assert_eq!(p.coeff(3), CRat::from_int(2));
        assert_eq!(p.coeff(4), CRat::from_int(0));

        let v = MultiSeries::<CRat>::monomial(5, [0, 1, 1], CRat::from_int(1));
        let c = UniSeries::<CRat>::from_coeffs(5, vec![CRat::from_int(0), CRat::from_int(3)]);
        let m = c.compose_series(&v);
        assert_eq!(m, MultiSeries::monomial(5, [0, 1, 1], CRat::from_int(3)));
    }
}
