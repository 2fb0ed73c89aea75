//! Formal fibered normalization, computed degree by degree.
//!
//! A non-degenerate saddle-node is conjugate, by a unique fibered map
//! tangent to the identity, to a member of the family
//!
//! ```text
//! x^2 d/dx + (-l + a1 x + c1(y1 y2)) y1 d/dy1 + (l + a2 x + c2(y1 y2)) y2 d/dy2
//! ```
//!
//! with `a1 + a2` equal to the residue and `c1, c2` power series in the
//! resonant monomial `v = y1 y2` without constant term.
//!
//! The solver works on the conjugacy identity `Y(phi_j) = N_j o Phi` graded
//! by total degree. At degree `d` the unknowns are the degree-`d`
//! coefficients of the map, the resonant coefficients of degree `d-1` (which
//! only the `x^2 d/dx` chain and the resonant couplings reach, one degree
//! late), and the free normal-form parameters of that degree (`a1, a2` at
//! `d = 2`, the `c`-coefficients at odd `d`). Non-resonant unknowns appear
//! in exactly one equation each, with nonzero semisimple eigenvalue, so each
//! stage reduces to one small dense solve on the resonant block followed by
//! diagonal back-substitution. A singular resonant block is precisely how a
//! nonpositive-rational residue obstructs the construction; the solver
//! reports the first such degree rather than pre-screening.
//!
//! Correctness is not argued, it is certified: in exact mode
//! [`verify_normalization`] recomputes the push-forward through independent
//! series operations and the residual must be exactly zero.

use crate::coeff::Coeff;
use crate::series::{Exp, MultiSeries, UniSeries, Var};
use crate::vfield::{
    eigen_multiple, is_resonant, push_forward, DiagSaddleNode, DivIntegrability, FiberedDiffeo,
    VFieldError,
};
use std::collections::BTreeMap;

/// Target family member: `x^2 d/dx + (-l + a1 x + c1(v)) y1 d/dy1
/// + (l + a2 x + c2(v)) y2 d/dy2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm<K: Coeff> {
    pub lambda: K,
    pub a1: K,
    pub a2: K,
    /// Coefficient series of `v = y1 y2`, no constant term.
    pub c1: UniSeries<K>,
    pub c2: UniSeries<K>,
}

impl<K: Coeff> NormalForm<K> {
    pub fn new(lambda: K, a1: K, a2: K, c1: UniSeries<K>, c2: UniSeries<K>) -> Self {
        assert!(c1.coeff(0).should_strip(), "c1 must vanish at v = 0");
        assert!(c2.coeff(0).should_strip(), "c2 must vanish at v = 0");
        NormalForm { lambda, a1, a2, c1, c2 }
    }

    /// `a = a1 + a2`, the residue of the corresponding field.
    pub fn a(&self) -> K {
        self.a1.clone() + self.a2.clone()
    }

    /// `m = 1/a` when that is a positive integer.
    pub fn m(&self) -> Option<u64> {
        K::one().checked_div(&self.a()).and_then(|r| r.as_positive_integer())
    }

    /// The coefficient `c_m` of the single series `c = c2`; zero when `m`
    /// is absent.
    pub fn c_m(&self) -> K {
        match self.m() {
            Some(m) => self.c2.coeff(m as usize),
            None => K::zero(),
        }
    }

    /// `c1 + c2 = 0`, certified exactly in exact mode and within `tol`
    /// in float mode.
    pub fn is_div_integrable(&self, tol: f64) -> bool {
        self.div_integrability_defect().is_none_or_below(tol)
    }

    /// First nonzero coefficient of `c1 + c2`, if any.
    pub fn div_integrability_defect(&self) -> DivDefect {
        let s = self.c1.add(&self.c2);
        for k in 0..=s.trunc_order() {
            let c = s.coeff(k);
            if !c.should_strip() {
                return DivDefect::At { v_power: k, magnitude: c.abs_f64() };
            }
        }
        DivDefect::None
    }

    /// The single series `c` of the div-integrable form (`c1 = -c`,
    /// `c2 = c`).
    pub fn c(&self) -> &UniSeries<K> {
        &self.c2
    }

    /// `c~(v) = m * sum_{k != m} c_k / (k - m) v^k` with `m = 1/a` as a
    /// scalar (integral or not); when `m` is a positive integer the `m`-th
    /// coefficient is skipped.
    pub fn c_tilde(&self) -> UniSeries<K> {
        let order = self.c2.trunc_order();
        let mut out = UniSeries::zero(order);
        let m = K::one().checked_div(&self.a()).expect("residue of a valid form is nonzero");
        let m_int = self.m();
        for k in 1..=order {
            if Some(k as u64) == m_int {
                continue;
            }
            let denom = K::from_int(k as i64) - m.clone();
            let val = (self.c2.coeff(k) * m.clone())
                .checked_div(&denom)
                .expect("k - m vanishes only at the skipped integer index");
            out.set_coeff(k, val);
        }
        out
    }

    /// Expand the family member as a saddle-node at truncation `n`.
    pub fn vector_field(&self, n: usize) -> DiagSaddleNode<K> {
        let v = MultiSeries::monomial(n, [0, 1, 1], K::one());
        let y1 = MultiSeries::var(n, Var::Y1);
        let y2 = MultiSeries::var(n, Var::Y2);
        let f1 = MultiSeries::monomial(n, [1, 1, 0], self.a1.clone())
            .add(&self.c1.compose_series(&v).mul(&y1));
        let f2 = MultiSeries::monomial(n, [1, 0, 1], self.a2.clone())
            .add(&self.c2.compose_series(&v).mul(&y2));
        DiagSaddleNode::new(self.lambda.clone(), f1, f2).expect("normal form is a valid field")
    }

    pub fn to_c64(&self) -> NormalForm<crate::coeff::C64> {
        NormalForm {
            lambda: self.lambda.to_c64(),
            a1: self.a1.to_c64(),
            a2: self.a2.to_c64(),
            c1: self.c1.to_c64(),
            c2: self.c2.to_c64(),
        }
    }
}

/// Outcome of the `c1 + c2 = 0` check.
#[derive(Debug, Clone, PartialEq)]
pub enum DivDefect {
    None,
    At { v_power: usize, magnitude: f64 },
}

impl DivDefect {
    fn is_none_or_below(&self, tol: f64) -> bool {
        match self {
            DivDefect::None => true,
            DivDefect::At { magnitude, .. } => *magnitude <= tol,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NormalizeError {
    #[error("requested order {requested} exceeds the truncation order {trunc}")]
    TruncationTooSmall { requested: usize, trunc: usize },
    #[error("degenerate residue: singular homological system at degree {degree}")]
    DegenerateResidue { degree: usize },
    #[error(
        "div-integrability obstruction: (c1+c2) coefficient at v^{v_power} \
         (degree {degree}) has magnitude {magnitude}"
    )]
    DivIntegrabilityObstruction { v_power: usize, degree: usize, magnitude: f64 },
    #[error("field is not transversally Hamiltonian")]
    NotTransversallyHamiltonian,
    #[error("transversal symplecticity of the normalizing map failed certification: |det - 1| = {deviation}")]
    SymplecticityNotCertified { deviation: f64 },
    #[error(transparent)]
    VField(#[from] VFieldError),
    #[error(transparent)]
    Series(#[from] crate::series::SeriesError),
}

/// Float-mode relative pivot threshold below which a stage counts as
/// singular.
const SINGULAR_TOL: f64 = 1e-12;

/// Solve a small dense system over the coefficient field.
/// Returns `None` when singular (exactly in exact mode, by relative pivot
/// size in float mode).
pub(crate) fn solve_dense<K: Coeff>(mut m: Vec<Vec<K>>, mut rhs: Vec<K>) -> Option<Vec<K>> {
    let n = rhs.len();
    debug_assert!(m.iter().all(|row| row.len() == n));
    if n == 0 {
        return Some(Vec::new());
    }
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .map(|c| c.abs_f64())
        .fold(0.0f64, f64::max)
        .max(1.0);
    for col in 0..n {
        let pivot_row = (col..n)
            .filter(|&r| !m[r][col].is_zero())
            .max_by(|&a, &b| {
                m[a][col]
                    .abs_f64()
                    .partial_cmp(&m[b][col].abs_f64())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })?;
        if !K::EXACT && m[pivot_row][col].abs_f64() <= SINGULAR_TOL * scale {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let inv = K::one().checked_div(&m[col][col])?;
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col].clone() * inv.clone();
            for c in col..n {
                let delta = factor.clone() * m[col][c].clone();
                m[r][c] = m[r][c].clone() - delta;
            }
            let delta = factor * rhs[col].clone();
            rhs[r] = rhs[r].clone() - delta;
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(rhs[i].checked_div(&m[i][i])?);
    }
    Some(out)
}

/// Per-stage unknown on the resonant block.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BlockCol {
    /// Resonant map coefficient of degree `d - 1` at this exponent.
    ResPrev(Exp),
    /// `a_j` (only at `d = 2`).
    A,
    /// `c_{j,k}` (only at odd `d`, `k = (d-1)/2`).
    C(usize),
}

struct Workspace<K: Coeff> {
    lambda: K,
    /// Degree-two parts of `F1`, `F2`, used by the coupling columns.
    f1_quad: Vec<(Exp, K)>,
    f2_quad: Vec<(Exp, K)>,
}

impl<K: Coeff> Workspace<K> {
    /// Image of a unit perturbation of the map coefficient at `mu`
    /// (degree `d-1`, component `j`) inside the degree-`d` equations.
    ///
    /// Contributions: the `x^2 d/dx` chain, the quadratic parts of `F`
    /// acting through the derivative terms, and `-a_j x` from the target.
    fn coupling(&self, mu: &Exp, a_j: &K) -> BTreeMap<Exp, K> {
        let mut out: BTreeMap<Exp, K> = BTreeMap::new();
        let mut add = |e: Exp, c: K| {
            if c.is_zero() {
                return;
            }
            let cur = out.remove(&e).unwrap_or_else(K::zero);
            let s = cur + c;
            if !s.is_zero() {
                out.insert(e, s);
            }
        };
        if mu[0] > 0 {
            add([mu[0] + 1, mu[1], mu[2]], K::from_int(mu[0] as i64));
        }
        for (g, gamma) in &self.f1_quad {
            if mu[1] > 0 {
                let t = [g[0] + mu[0], g[1] + mu[1] - 1, g[2] + mu[2]];
                add(t, gamma.scale_int(mu[1] as i64));
            }
        }
        for (g, gamma) in &self.f2_quad {
            if mu[2] > 0 {
                let t = [g[0] + mu[0], g[1] + mu[1], g[2] + mu[2] - 1];
                add(t, gamma.scale_int(mu[2] as i64));
            }
        }
        add([mu[0] + 1, mu[1], mu[2]], -a_j.clone());
        out
    }
}

/// All exponents of exact total degree `d`.
fn exponents_of_degree(d: usize) -> Vec<Exp> {
    let mut out = Vec::new();
    for k0 in 0..=d {
        for k1 in 0..=d - k0 {
            out.push([k0, k1, d - k0 - k1]);
        }
    }
    out
}

fn resonant_exponents(j: usize, d: usize) -> Vec<Exp> {
    exponents_of_degree(d).into_iter().filter(|e| is_resonant(j, e)).collect()
}

/// Residual component `E_j = Y(phi_j) - N_j o Phi` for the current state.
fn residual_component<K: Coeff>(
    j: usize,
    y: &DiagSaddleNode<K>,
    phi: (&MultiSeries<K>, &MultiSeries<K>),
    a: (&K, &K),
    c: (&UniSeries<K>, &UniSeries<K>),
) -> MultiSeries<K> {
    let n = phi.0.trunc_order();
    let x = MultiSeries::var(n, Var::X);
    let v = MultiSeries::monomial(n, [0, 1, 1], K::one());
    let (phi_j, lam_sign, a_j, c_j) = match j {
        1 => (phi.0, -y.lambda().clone(), a.0, c.0),
        2 => (phi.1, y.lambda().clone(), a.1, c.1),
        _ => unreachable!(),
    };
    let yvar = match j {
        1 => MultiSeries::var(n, Var::Y1),
        2 => MultiSeries::var(n, Var::Y2),
        _ => unreachable!(),
    };
    // N_j = (lam_sign + a_j x + c_j(v)) * y_j, composed with Phi.
    let factor = MultiSeries::constant(n, lam_sign)
        .add(&MultiSeries::var(n, Var::X).scale(a_j))
        .add(&c_j.compose_series(&v));
    let n_j = factor.mul(&yvar);
    let lhs = y.apply_to(phi_j);
    let rhs = n_j
        .substitute(&x, phi.0, phi.1)
        .expect("normal-form target has no constant term");
    lhs.sub(&rhs)
}

/// Result of [`normalize`]: the unique tangent-to-identity normalizing map
/// and the normal form it reaches.
pub type Normalization<K> = (FiberedDiffeo<K>, NormalForm<K>);

/// Compute the formal fibered normalization of `y` through total degree `n`.
///
/// Requires the truncation order of `y` to be at least `n`. When one more
/// degree of input data is available the resonant map coefficients of
/// degree `n` are pinned by the degree-`n+1` equations; otherwise they are
/// set to zero (they do not affect the conjugacy identity through degree
/// `n`).
pub fn normalize<K: Coeff>(
    y: &DiagSaddleNode<K>,
    n: usize,
) -> Result<Normalization<K>, NormalizeError> {
    if y.trunc_order() < n {
        return Err(NormalizeError::TruncationTooSmall { requested: n, trunc: y.trunc_order() });
    }
    if n < 2 {
        return Err(NormalizeError::TruncationTooSmall { requested: 2, trunc: n });
    }

    let tw = y.trunc_order().min(n + 1);
    let yw = y.truncate(tw);
    let ws = Workspace {
        lambda: yw.lambda().clone(),
        f1_quad: yw.f1().homogeneous_part(2).terms().map(|(e, c)| (*e, c.clone())).collect(),
        f2_quad: yw.f2().homogeneous_part(2).terms().map(|(e, c)| (*e, c.clone())).collect(),
    };

    let cmax = (tw - 1) / 2;
    let mut phi1 = MultiSeries::var(tw, Var::Y1);
    let mut phi2 = MultiSeries::var(tw, Var::Y2);
    let mut a = (K::zero(), K::zero());
    let mut c = (UniSeries::zero(cmax), UniSeries::zero(cmax));

    for d in 2..=tw {
        let resonant_only = d == n + 1;
        for j in [1usize, 2usize] {
            let res_rows = resonant_exponents(j, d);
            let res_prev: Vec<Exp> = if d >= 3 { resonant_exponents(j, d - 1) } else { Vec::new() };
            let mut cols: Vec<BlockCol> = res_prev.iter().map(|e| BlockCol::ResPrev(*e)).collect();
            if d == 2 {
                cols.push(BlockCol::A);
            }
            if d % 2 == 1 {
                cols.push(BlockCol::C((d - 1) / 2));
            }
            debug_assert_eq!(cols.len(), res_rows.len());

            let a_j = if j == 1 { a.0.clone() } else { a.1.clone() };
            let resid = residual_component(j, &yw, (&phi1, &phi2), (&a.0, &a.1), (&c.0, &c.1));

            // Coupling images of the block columns into degree-d equations.
            let couplings: Vec<BTreeMap<Exp, K>> = cols
                .iter()
                .map(|col| match col {
                    BlockCol::ResPrev(mu) => ws.coupling(mu, &a_j),
                    BlockCol::A => {
                        let mut map = BTreeMap::new();
                        let e = if j == 1 { [1, 1, 0] } else { [1, 0, 1] };
                        map.insert(e, -K::one());
                        map
                    }
                    BlockCol::C(k) => {
                        let mut map = BTreeMap::new();
                        let e = if j == 1 { [0, k + 1, *k] } else { [0, *k, k + 1] };
                        map.insert(e, -K::one());
                        map
                    }
                })
                .collect();

            // Dense solve on the resonant rows.
            let mat: Vec<Vec<K>> = res_rows
                .iter()
                .map(|row| {
                    couplings
                        .iter()
                        .map(|cp| cp.get(row).cloned().unwrap_or_else(K::zero))
                        .collect()
                })
                .collect();
            let rhs: Vec<K> = res_rows.iter().map(|row| -resid.coeff(*row)).collect();
            let z = solve_dense(mat, rhs).ok_or(NormalizeError::DegenerateResidue { degree: d })?;

            // Write the block unknowns back.
            for (col, val) in cols.iter().zip(z.iter()) {
                match col {
                    BlockCol::ResPrev(mu) => {
                        let phi_j = if j == 1 { &mut phi1 } else { &mut phi2 };
                        phi_j.add_term(*mu, val.clone());
                    }
                    BlockCol::A => {
                        if j == 1 {
                            a.0 = val.clone();
                        } else {
                            a.1 = val.clone();
                        }
                    }
                    BlockCol::C(k) => {
                        let c_j = if j == 1 { &mut c.0 } else { &mut c.1 };
                        c_j.set_coeff(*k, val.clone());
                    }
                }
            }

            // Non-resonant rows: singleton diagonal back-substitution.
            if !resonant_only {
                let phi_j = if j == 1 { &mut phi1 } else { &mut phi2 };
                for row in exponents_of_degree(d) {
                    if is_resonant(j, &row) {
                        continue;
                    }
                    let mut num = -resid.coeff(row);
                    for (cp, val) in couplings.iter().zip(z.iter()) {
                        if let Some(entry) = cp.get(&row) {
                            num = num - entry.clone() * val.clone();
                        }
                    }
                    if num.is_zero() {
                        continue;
                    }
                    let eig = ws.lambda.scale_int(eigen_multiple(j, &row));
                    let val = num
                        .checked_div(&eig)
                        .ok_or(NormalizeError::DegenerateResidue { degree: d })?;
                    phi_j.add_term(row, val);
                }
            }
        }
    }

    let phi = FiberedDiffeo::new(phi1.truncate(n), phi2.truncate(n))?;
    let c_order = if tw == n + 1 { n / 2 } else { (n - 1) / 2 };
    let nf = NormalForm::new(
        yw.lambda().clone(),
        a.0,
        a.1,
        truncate_uni(&c.0, c_order),
        truncate_uni(&c.1, c_order),
    );
    Ok((phi, nf))
}

fn truncate_uni<K: Coeff>(s: &UniSeries<K>, order: usize) -> UniSeries<K> {
    let mut out = UniSeries::zero(order);
    for k in 0..=order.min(s.trunc_order()) {
        out.set_coeff(k, s.coeff(k));
    }
    out
}

/// As [`normalize`], with the identity `c1 + c2 = 0` certified through the
/// computed order. On success the single series of the div-integrable form
/// is available as `NormalForm::c`.
pub fn normalize_div_integrable<K: Coeff>(
    y: &DiagSaddleNode<K>,
    n: usize,
) -> Result<Normalization<K>, NormalizeError> {
    let (phi, nf) = normalize(y, n)?;
    let tol = if K::EXACT { 0.0 } else { DIV_CERT_TOL };
    match nf.div_integrability_defect() {
        DivDefect::At { v_power, magnitude } if magnitude > tol => {
            Err(NormalizeError::DivIntegrabilityObstruction {
                v_power,
                degree: 2 * v_power + 1,
                magnitude,
            })
        }
        _ => Ok((phi, nf)),
    }
}

/// Float-mode tolerance for the div-integrability and symplecticity
/// certificates.
pub const DIV_CERT_TOL: f64 = 1e-9;

/// Normalization of a transversally Hamiltonian field.
///
/// By uniqueness of the tangent-to-identity normalization, the normalizing
/// map of a transversally Hamiltonian field coincides with the transversally
/// symplectic one, so the general solver is run and the symplectic
/// certificates (`a1 + a2 = 1` exactly, `det D_y Phi = 1` through degree
/// `n - 1`) are checked on its output rather than imposed as constraints.
pub fn normalize_symplectic<K: Coeff>(
    y: &DiagSaddleNode<K>,
    n: usize,
) -> Result<Normalization<K>, NormalizeError> {
    let tol = if K::EXACT { 0.0 } else { DIV_CERT_TOL };
    if !crate::vfield::transversally_hamiltonian(y, tol) {
        return Err(NormalizeError::NotTransversallyHamiltonian);
    }
    let (phi, nf) = normalize_div_integrable(y, n)?;
    let a_dev = (nf.a() - K::one()).abs_f64();
    if a_dev > tol {
        return Err(NormalizeError::SymplecticityNotCertified { deviation: a_dev });
    }
    let det = phi.det_jacobian_y();
    let dev = det
        .sub(&MultiSeries::one(det.trunc_order()))
        .max_abs_through_degree(det.trunc_order());
    if dev > tol {
        return Err(NormalizeError::SymplecticityNotCertified { deviation: dev });
    }
    Ok((phi, nf))
}

/// Largest residual coefficient magnitude of `push_forward(phi, y)` minus
/// the normal-form field, over total degrees `<= n`. Exactly `0.0` in exact
/// mode for a correct normalization.
pub fn verify_normalization<K: Coeff>(
    y: &DiagSaddleNode<K>,
    phi: &FiberedDiffeo<K>,
    nf: &NormalForm<K>,
    n: usize,
) -> Result<f64, VFieldError> {
    let pushed = push_forward(phi, y)?;
    let target = nf.vector_field(pushed.trunc_order());
    let r1 = pushed.f1().sub(target.f1());
    let r2 = pushed.f2().sub(target.f2());
    let lam_dev = (pushed.lambda().clone() - nf.lambda.clone()).abs_f64();
    Ok(r1
        .max_abs_through_degree(n)
        .max(r2.max_abs_through_degree(n))
        .max(lam_dev))
}

/// Jet-level orbital-linearization test of the restriction to `{x = 0}`.
///
/// The restriction has linear part `diag(-l, l)`. It is brought to
/// Poincare-Dulac form degree by degree (resonant coefficients at
/// `(y1 y2)^k y_j` are kept, everything else is removed by a
/// tangent-to-identity conjugation, recomputed honestly by push-forward at
/// each step). The foliation is linearizable precisely when the two kept
/// resonant series cancel; the first `k` where they do not is returned as
/// the obstruction witness.
pub fn orbital_linearization_jet<K: Coeff>(
    y: &DiagSaddleNode<K>,
    jet_order: usize,
    tol: f64,
) -> Result<DivIntegrability, VFieldError> {
    let n = jet_order.max(1);
    let (mut b1, mut b2) = y.truncate(y.trunc_order()).restrict_x0();
    b1 = b1.truncate(n);
    b2 = b2.truncate(n);
    let lam = y.lambda().clone();
    let x = MultiSeries::var(n, Var::X);
    let mut kept1 = UniSeries::<K>::zero(n / 2 + 1);
    let mut kept2 = UniSeries::<K>::zero(n / 2 + 1);

    let target = |k1: &UniSeries<K>, k2: &UniSeries<K>| {
        let v = MultiSeries::monomial(n, [0, 1, 1], K::one());
        let y1 = MultiSeries::var(n, Var::Y1);
        let y2 = MultiSeries::var(n, Var::Y2);
        let t1 = y1.scale(&-lam.clone()).add(&k1.compose_series(&v).mul(&y1));
        let t2 = y2.scale(&lam.clone()).add(&k2.compose_series(&v).mul(&y2));
        (t1, t2)
    };

    for d in 2..=n {
        let (t1, t2) = target(&kept1, &kept2);
        let r1 = b1.sub(&t1).homogeneous_part(d);
        let r2 = b2.sub(&t2).homogeneous_part(d);
        let mut u1 = MultiSeries::zero(n);
        let mut u2 = MultiSeries::zero(n);
        for (j, r, u, kept) in
            [(1usize, &r1, &mut u1, &mut kept1), (2usize, &r2, &mut u2, &mut kept2)]
        {
            for (e, cf) in r.terms() {
                debug_assert_eq!(e[0], 0, "restriction must be x-free");
                if is_resonant(j, e) {
                    let k = if j == 1 { e[2] } else { e[1] };
                    let cur = kept.coeff(k);
                    kept.set_coeff(k, cur + cf.clone());
                } else {
                    // Conjugating by Id + u adds eig * u to the residual.
                    let eig = lam.scale_int(eigen_multiple(j, e));
                    let val = (-cf.clone())
                        .checked_div(&eig)
                        .expect("nonresonant eigenvalue is nonzero");
                    u.add_term(*e, val);
                }
            }
        }
        if u1.is_zero() && u2.is_zero() {
            continue;
        }
        // Planar push-forward by (y1 + u1, y2 + u2).
        let phi1 = MultiSeries::var(n, Var::Y1).add(&u1);
        let phi2 = MultiSeries::var(n, Var::Y2).add(&u2);
        let (psi1, psi2) = crate::series::invert_diffeo(&phi1, &phi2)?;
        let w1 = planar_apply(&b1, &b2, &phi1);
        let w2 = planar_apply(&b1, &b2, &phi2);
        b1 = w1.substitute(&x, &psi1, &psi2)?;
        b2 = w2.substitute(&x, &psi1, &psi2)?;
        if K::EXACT {
            let (t1, t2) = target(&kept1, &kept2);
            debug_assert!(b1.sub(&t1).homogeneous_part(d).is_zero());
            debug_assert!(b2.sub(&t2).homogeneous_part(d).is_zero());
        }
    }

    let sum = kept1.add(&kept2);
    for k in 1..=sum.trunc_order() {
        if 2 * k + 1 > n {
            break;
        }
        let cf = sum.coeff(k);
        let mag = cf.abs_f64();
        let bad = if K::EXACT { !cf.should_strip() } else { mag > tol };
        if bad {
            return Ok(DivIntegrability::Obstruction {
                v_power: k,
                degree: 2 * k + 1,
                magnitude: mag,
            });
        }
    }
    Ok(DivIntegrability::NoObstructionUpTo(jet_order))
}

/// `(B1 d/dy1 + B2 d/dy2)(g)` for planar fields.
fn planar_apply<K: Coeff>(
    b1: &MultiSeries<K>,
    b2: &MultiSeries<K>,
    g: &MultiSeries<K>,
) -> MultiSeries<K> {
    let n = g.trunc_order();
    let d1 = crate::vfield::derive_keep_trunc(g, Var::Y1);
    let d2 = crate::vfield::derive_keep_trunc(g, Var::Y2);
    b1.mul(&d1).truncate(n).add(&b2.mul(&d2).truncate(n))
}
