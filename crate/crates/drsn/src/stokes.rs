//! Sectorial normalizing maps, Stokes transition maps, and the moduli data
//! extracted from them in the space of leaves.
//!
//! The formal normalizing map is resummed one `y`-monomial at a time: each
//! coefficient series in `x` goes through the Borel-Pade-Laplace machinery
//! of [`crate::summation`] along a direction inside the regular arc of its
//! side (`+`: directions between `arg(l)` and `arg(-l)` counterclockwise,
//! `-`: the opposite arc). The two sectorial maps differ by exponentially
//! flat transition maps on the narrow sectors bisected by `arg(l)` and
//! `arg(-l)`; conjugating by the leaf chart turns a transition map into a
//! fibered map of the leaf coordinates whose components expand as
//!
//! ```text
//! side +:  Psi_j(h1, h2) = sum_n  Psi_{j,+,n}(h1 h2) h1^n
//! side -:  Psi_j(h1, h2) = sum_n  Psi_{j,-,n}(h1 h2) h2^n
//! ```
//!
//! with entire coefficient functions and index floors `n >= 1` for the
//! diagonal components (`j = 1` on side `+`, `j = 2` on side `-`) and
//! `n >= -1` for the off ones. The coefficients are recovered by Cauchy
//! integrals over circles inside the fixed-radius leaf domains, then
//! tabulated as Taylor polynomials in `w`. Everything downstream (invariant
//! varieties, restriction to a convergent hypersurface, symplecticity) is
//! read off these tables.

use crate::coeff::C64;
use crate::leafspace::{LeafChart, LeafError, SectorSpec};
use crate::normalizer::{normalize_div_integrable, NormalForm, NormalizeError};
use crate::series::{MultiSeries, UniSeries};
use crate::summation::{
    borel_transform, borel_transform_exact, default_pade_degrees_for, laplace_sum_with, pade_exact,
    Pade, SumConfig, SumError,
};
use crate::vfield::{DiagSaddleNode, FiberedDiffeo};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum StokesError {
    #[error("extraction annulus is empty (|w x^a| too large for the chosen radii)")]
    AnnulusEmpty,
    #[error("Newton inversion diverged at x = {x:?}, target ({t1:?}, {t2:?})")]
    NewtonDivergence { x: C64, t1: C64, t2: C64 },
    #[error("monomial cutoff too small: tail estimate {estimate:e} exceeds {tol:e}")]
    MonomialCutoffTooSmall { estimate: f64, tol: f64 },
    #[error("need n_max >= 2 for a moduli report, got {n_max}")]
    InsufficientRange { n_max: i64 },
    #[error(transparent)]
    Leaf(#[from] LeafError),
    #[error(transparent)]
    Sum(#[from] SumError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
}

/// Index floor of the leaf-coordinate expansion: `1` for the diagonal
/// component of each side, `-1` for the other one.
pub fn index_floor(j: usize, side: i8) -> i64 {
    match (j, side >= 0) {
        (1, true) | (2, false) => 1,
        (2, true) | (1, false) => -1,
        _ => panic!("j must be 1 or 2"),
    }
}

/// Tunables for the resummation / extraction pipeline.
#[derive(Debug, Clone, Copy)]
pub struct StokesConfig {
    /// Largest expansion index tabulated per component.
    pub n_max: i64,
    /// Taylor order in `w` of each tabulated coefficient function.
    pub w_order: usize,
    /// Leaf-domain radii and the annulus margin.
    pub r1: f64,
    pub r2: f64,
    pub delta: f64,
    /// Points on each Cauchy circle (a power of two keeps the half-rule
    /// error estimate cheap).
    pub circle_points: usize,
    /// Points on the `w`-circle used to tabulate Taylor coefficients.
    pub w_points: usize,
    pub w_radius: f64,
    /// `|x|` of the narrow-sector base point used for extraction.
    pub x_radius: f64,
    pub newton_tol: f64,
    /// Reject the run when the monomial-tail estimate at the domain radius
    /// exceeds this.
    pub tail_tol: f64,
    /// Angular clearance kept from the singular directions when choosing
    /// summation rays.
    pub sector_margin: f64,
    pub sum: SumConfig,
    /// Worker threads for the extraction loops (1 = sequential).
    pub threads: usize,
}

impl Default for StokesConfig {
    fn default() -> Self {
        StokesConfig {
            n_max: 6,
            w_order: 4,
            r1: 0.2,
            r2: 0.2,
            delta: 0.02,
            circle_points: 64,
            w_points: 16,
            w_radius: 0.05,
            x_radius: 0.35,
            newton_tol: 1e-10,
            tail_tol: 1e-2,
            sector_margin: std::f64::consts::FRAC_PI_8,
            sum: SumConfig::default(),
            threads: 1,
        }
    }
}

/// Base point for Cauchy extraction on the given narrow side:
/// `|x| = radius` at an angle `offset` away from the side bisector.
/// Offsets near `pi/2` sit at the sector edge where `Re(l/x) ~ 0`, making
/// `|f_j| = O(1)` and the extraction circles as fat (well-conditioned) as
/// the leaf domain allows; transition maps need a smaller offset so both
/// sectorial maps keep a decaying summation direction.
pub fn narrow_base_point(lambda: C64, side: i8, radius: f64, offset: f64) -> C64 {
    let dir = if side >= 0 { lambda.arg() } else { (-lambda).arg() };
    C64::from_polar(radius, dir + offset)
}

fn angle_wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    if a <= -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// One resummable `y`-monomial coefficient of one map component.
#[derive(Debug, Clone)]
struct MonomialSeries {
    component: usize,
    k1: usize,
    k2: usize,
    /// Prepared continuation of the Borel image and the constant term.
    pade: Pade,
    constant: C64,
    /// The raw coefficient series, for direct evaluation when it is
    /// numerically convergent at the requested point.
    source: UniSeries<C64>,
}

/// Horner value of the source series when its terms have decayed below
/// roundoff at `x` (a convergent slot); `None` when the tail still
/// matters and resummation is required. Direct evaluation is exact for
/// polynomial and convergent slots, where a detour through the Borel
/// plane would only add continuation error.
fn try_direct_eval(source: &UniSeries<C64>, x: C64) -> Option<C64> {
    let n = source.trunc_order();
    if n < 4 {
        // Short series are polynomials as given.
        return Some(source.eval(&x));
    }
    let mut peak = 0.0f64;
    let mut xp = C64::new(1.0, 0.0);
    let mut terms = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = (source.coeff(k) * xp).norm();
        peak = peak.max(t);
        terms.push(t);
        xp *= x;
    }
    let tail = terms[n.saturating_sub(2)..].iter().fold(0.0f64, |a, &b| a.max(b));
    if tail <= 1e-14 * peak.max(1e-280) {
        Some(source.eval(&x))
    } else {
        None
    }
}

/// A sectorial realization of a formal fibered map: every `y`-monomial
/// coefficient series is summable along the directions of one side's
/// regular arc, and evaluation fixes `x` first.
#[derive(Debug, Clone)]
pub struct SectorialMap {
    side: i8,
    lambda: C64,
    monomials: Vec<MonomialSeries>,
    sum: SumConfig,
    sector_margin: f64,
}

impl SectorialMap {
    /// Decompose `phi - id` into `y`-monomial series in `x` and prepare
    /// their Borel-plane continuations. `side = +1` sums on the arc from
    /// `arg(l)` to `arg(-l)` counterclockwise (the wide sector bisected by
    /// `arg(i l)`), `side = -1` on the opposite arc.
    pub fn build(
        phi: &FiberedDiffeo<C64>,
        lambda: C64,
        side: i8,
        sum: SumConfig,
        sector_margin: f64,
    ) -> Result<Self, StokesError> {
        let mut monomials = Vec::new();
        for (component, series) in [(1usize, phi.phi1()), (2usize, phi.phi2())] {
            let deviation = match component {
                1 => series.sub(&MultiSeries::var(series.trunc_order(), crate::series::Var::Y1)),
                _ => series.sub(&MultiSeries::var(series.trunc_order(), crate::series::Var::Y2)),
            };
            let mut per_monomial: BTreeMap<(usize, usize), UniSeries<C64>> = BTreeMap::new();
            let trunc = deviation.trunc_order();
            for (e, c) in deviation.terms() {
                let entry = per_monomial
                    .entry((e[1], e[2]))
                    .or_insert_with(|| UniSeries::zero(trunc));
                entry.set_coeff(e[0], *c);
            }
            for ((k1, k2), u) in per_monomial {
                let scale = (0..=u.trunc_order()).map(|k| u.coeff(k).norm()).fold(0.0, f64::max);
                if scale < 1e-22 {
                    continue;
                }
                let b = borel_transform(&u);
                let coeffs: Vec<C64> =
                    (0..=b.coeffs.trunc_order()).map(|k| b.coeffs.coeff(k)).collect();
                let (l, m) = sum.pade.unwrap_or_else(|| default_pade_degrees_for(coeffs.len()));
                let pade = Pade::fit(&coeffs, l, m)?;
                monomials.push(MonomialSeries {
                    component,
                    k1,
                    k2,
                    pade,
                    constant: b.constant,
                    source: u,
                });
            }
        }
        Ok(SectorialMap { side, lambda, monomials, sum, sector_margin })
    }

    /// As [`SectorialMap::build`], from an exact formal map: the Borel
    /// coefficients and the continuation fit are computed in exact
    /// arithmetic, which keeps deep fits stable.
    pub fn build_exact(
        phi: &FiberedDiffeo<crate::coeff::CRat>,
        lambda: C64,
        side: i8,
        sum: SumConfig,
        sector_margin: f64,
    ) -> Result<Self, StokesError> {
        use crate::coeff::{CRat, Coeff};
        let mut monomials = Vec::new();
        for (component, series) in [(1usize, phi.phi1()), (2usize, phi.phi2())] {
            let deviation = match component {
                1 => series.sub(&MultiSeries::var(series.trunc_order(), crate::series::Var::Y1)),
                _ => series.sub(&MultiSeries::var(series.trunc_order(), crate::series::Var::Y2)),
            };
            let mut per_monomial: BTreeMap<(usize, usize), UniSeries<CRat>> = BTreeMap::new();
            let trunc = deviation.trunc_order();
            for (e, c) in deviation.terms() {
                let entry = per_monomial
                    .entry((e[1], e[2]))
                    .or_insert_with(|| UniSeries::zero(trunc));
                entry.set_coeff(e[0], c.clone());
            }
            for ((k1, k2), u) in per_monomial {
                let scale = (0..=u.trunc_order()).map(|k| u.coeff(k).abs_f64()).fold(0.0, f64::max);
                if scale < 1e-22 {
                    continue;
                }
                let (b, exact) = borel_transform_exact(&u);
                let (l, m) = sum.pade.unwrap_or_else(|| default_pade_degrees_for(exact.len()));
                let pade = pade_exact(&exact, l, m)?;
                monomials.push(MonomialSeries {
                    component,
                    k1,
                    k2,
                    pade,
                    constant: b.constant,
                    source: u.to_c64(),
                });
            }
        }
        Ok(SectorialMap { side, lambda, monomials, sum, sector_margin })
    }

    pub fn side(&self) -> i8 {
        self.side
    }

    pub fn is_identity(&self) -> bool {
        self.monomials.is_empty()
    }

    /// The side's regular arc `(lo, hi)` of summation directions,
    /// relative to nothing: absolute angles with `hi = lo + pi`.
    fn arc(&self) -> (f64, f64) {
        let d0 = self.lambda.arg();
        if self.side >= 0 {
            (d0, d0 + std::f64::consts::PI)
        } else {
            (d0 - std::f64::consts::PI, d0)
        }
    }

    /// Pick a summation direction for evaluation at `x`: as close to
    /// `arg(x)` as the arc allows, with the configured margin from the
    /// singular endpoints.
    fn direction_for(&self, x: C64) -> f64 {
        let (lo, hi) = self.arc();
        let margin = self.sector_margin;
        let mid = 0.5 * (lo + hi);
        let offset = angle_wrap(x.arg() - mid);
        let half = 0.5 * (hi - lo) - margin;
        mid + offset.clamp(-half, half)
    }

    /// Sum every monomial series at `x`. The result evaluates the map (and
    /// its `y`-Jacobian) at any `y` without further quadrature.
    ///
    /// Any direction inside the side's regular arc gives the same value, so
    /// when the preferred ray is blocked by a continuation pole (genuine or
    /// a fit artifact) nearby in-arc directions are tried before giving up.
    pub fn at_x(&self, x: C64) -> Result<MapAtX, StokesError> {
        let theta = self.direction_for(x);
        let (lo, hi) = self.arc();
        let margin = self.sector_margin;
        let mut coeffs = Vec::with_capacity(self.monomials.len());
        let mut err = 0.0f64;
        for m in &self.monomials {
            if let Some(v) = try_direct_eval(&m.source, x) {
                coeffs.push((m.component, m.k1, m.k2, v));
                continue;
            }
            let mut result = laplace_sum_with(&m.pade, m.constant, theta, x, &self.sum);
            if matches!(result, Err(SumError::PoleOnRay { .. })) {
                for step in 1..=10 {
                    for sign in [1.0f64, -1.0] {
                        let cand = theta + sign * 0.08 * step as f64;
                        if cand < lo + margin || cand > hi - margin {
                            continue;
                        }
                        let attempt = laplace_sum_with(&m.pade, m.constant, cand, x, &self.sum);
                        if attempt.is_ok() {
                            result = attempt;
                            break;
                        }
                    }
                    if result.is_ok() {
                        break;
                    }
                }
            }
            let v = result?;
            err = err.max(v.error_estimate);
            coeffs.push((m.component, m.k1, m.k2, v.value()));
        }
        Ok(MapAtX { x, coeffs, quadrature_error: err })
    }

}

/// A sectorial map with the `x`-dependence already summed out.
#[derive(Debug, Clone)]
pub struct MapAtX {
    pub x: C64,
    /// `(component, k1, k2, summed coefficient)`.
    coeffs: Vec<(usize, usize, usize, C64)>,
    pub quadrature_error: f64,
}

impl MapAtX {
    pub fn identity(x: C64) -> Self {
        MapAtX { x, coeffs: Vec::new(), quadrature_error: 0.0 }
    }

    /// Crude estimate of the dropped-monomial tail at `y`-radius `r`: the
    /// largest summed term magnitude on the top present total-degree
    /// shell, pushed one shell further out. Zero for the identity.
    pub fn tail_estimate(&self, r: f64) -> f64 {
        let top = self.coeffs.iter().map(|c| c.1 + c.2).max().unwrap_or(0);
        self.coeffs
            .iter()
            .filter(|c| c.1 + c.2 == top)
            .map(|c| c.3.norm() * r.powi((c.1 + c.2) as i32 + 1))
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, y1: C64, y2: C64) -> (C64, C64) {
        let mut out = (y1, y2);
        for &(component, k1, k2, c) in &self.coeffs {
            let term = c * y1.powu(k1 as u32) * y2.powu(k2 as u32);
            if component == 1 {
                out.0 += term;
            } else {
                out.1 += term;
            }
        }
        out
    }

    /// `y`-Jacobian at fixed `x`.
    pub fn jacobian(&self, y1: C64, y2: C64) -> [[C64; 2]; 2] {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let mut j = [[one, zero], [zero, one]];
        for &(component, k1, k2, c) in &self.coeffs {
            let row = component - 1;
            if k1 > 0 {
                j[row][0] += c * (k1 as f64) * y1.powu(k1 as u32 - 1) * y2.powu(k2 as u32);
            }
            if k2 > 0 {
                j[row][1] += c * (k2 as f64) * y1.powu(k1 as u32) * y2.powu(k2 as u32 - 1);
            }
        }
        j
    }

    /// Solve `eval(z) = target` by Newton iteration from `z = target`.
    pub fn invert(&self, t1: C64, t2: C64, tol: f64) -> Result<(C64, C64), StokesError> {
        let mut z = (t1, t2);
        for _ in 0..60 {
            let (f1, f2) = self.eval(z.0, z.1);
            let r = (f1 - t1, f2 - t2);
            let rn = r.0.norm().max(r.1.norm());
            if rn <= tol {
                return Ok(z);
            }
            let j = self.jacobian(z.0, z.1);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.norm() < 1e-30 {
                break;
            }
            let d1 = (r.0 * j[1][1] - r.1 * j[0][1]) / det;
            let d2 = (r.1 * j[0][0] - r.0 * j[1][0]) / det;
            z = (z.0 - d1, z.1 - d2);
            if z.0.norm() > 1e6 || z.1.norm() > 1e6 {
                break;
            }
        }
        Err(StokesError::NewtonDivergence { x: self.x, t1, t2 })
    }
}

/// A pointwise map of the fiber over a fixed `x`; the interface shared by
/// genuine transition maps and synthetic ones.
pub trait FiberMap: Sync {
    fn x(&self) -> C64;
    fn apply(&self, y1: C64, y2: C64) -> Result<(C64, C64), StokesError>;
}

/// Transition map `outer o inner^{-1}` of two sectorial maps over one `x`
/// in a narrow sector.
pub struct TransitionMap {
    pub outer: MapAtX,
    pub inner: MapAtX,
    pub newton_tol: f64,
}

impl TransitionMap {
    /// Largest tail estimate of the two factor maps at `y`-radius `r`.
    pub fn tail_estimate(&self, r: f64) -> f64 {
        self.outer.tail_estimate(r).max(self.inner.tail_estimate(r))
    }

    /// The side-`l` transition uses the `+` map after the inverse of the
    /// `-` map; the other side swaps them.
    pub fn at_x(
        plus: &SectorialMap,
        minus: &SectorialMap,
        side: i8,
        x: C64,
        newton_tol: f64,
    ) -> Result<TransitionMap, StokesError> {
        let (outer, inner) = if side >= 0 {
            (plus.at_x(x)?, minus.at_x(x)?)
        } else {
            (minus.at_x(x)?, plus.at_x(x)?)
        };
        Ok(TransitionMap { outer, inner, newton_tol })
    }
}

impl FiberMap for TransitionMap {
    fn x(&self) -> C64 {
        self.outer.x
    }

    fn apply(&self, y1: C64, y2: C64) -> Result<(C64, C64), StokesError> {
        let z = self.inner.invert(y1, y2, self.newton_tol)?;
        Ok(self.outer.eval(z.0, z.1))
    }
}

/// An isotropy assembled from chosen entire coefficient tables through the
/// leaf chart: `psi = H^{-1} o Psi o H` with
/// `Psi_j = h_j + sum_{n >= floor+1} P_{j,n}(w) u^n` (`u = h1` on side `+`,
/// `u = h2` on side `-`). Used to produce ground-truth transition maps.
pub struct SyntheticIsotropy {
    pub chart: LeafChart,
    pub side: i8,
    /// Deviation tables: `(j, n) -> w-polynomial coefficients`.
    pub tables: BTreeMap<(usize, i64), Vec<C64>>,
    pub x: C64,
}

impl SyntheticIsotropy {
    fn psi_leaf(&self, h1: C64, h2: C64) -> (C64, C64) {
        let w = h1 * h2;
        let u = if self.side >= 0 { h1 } else { h2 };
        let mut out = (h1, h2);
        for (&(j, n), poly) in &self.tables {
            let mut pw = C64::new(0.0, 0.0);
            for c in poly.iter().rev() {
                pw = pw * w + c;
            }
            let un = if n >= 0 {
                u.powu(n as u32)
            } else {
                C64::new(1.0, 0.0) / u.powu((-n) as u32)
            };
            let term = pw * un;
            if j == 1 {
                out.0 += term;
            } else {
                out.1 += term;
            }
        }
        out
    }
}

impl FiberMap for SyntheticIsotropy {
    fn x(&self) -> C64 {
        self.x
    }

    fn apply(&self, y1: C64, y2: C64) -> Result<(C64, C64), StokesError> {
        let (h1, h2, _) = self.chart.first_integrals(self.x, y1, y2)?;
        let (g1, g2) = self.psi_leaf(h1, h2);
        Ok(self.chart.leaf_param(g1, g2, self.x)?)
    }
}

/// One Cauchy extraction: the coefficient of `u^n` (`u = h1` or `h2` by
/// side) of component `j` of the transition map in leaf coordinates, at a
/// fixed value of `w`. Returns the value and a resolution-halving error
/// estimate.
pub fn extract_laurent(
    psi: &dyn FiberMap,
    chart: &LeafChart,
    side: i8,
    j: usize,
    n: i64,
    w: C64,
    cfg: &StokesConfig,
) -> Result<(C64, f64), StokesError> {
    let x = psi.x();
    let f1 = chart.f_eval(1, x, w)?;
    let f2 = chart.f_eval(2, x, w)?;
    // Annulus of valid circle radii for the expansion variable.
    let (lower, upper) = if side >= 0 {
        ((w * f2).norm() / cfg.r2, cfg.r1 / f1.norm())
    } else {
        ((w * f1).norm() / cfg.r1, cfg.r2 / f2.norm())
    };
    if !(lower < upper) {
        return Err(StokesError::AnnulusEmpty);
    }
    let rho = if lower > 0.0 { (lower * upper).sqrt() } else { 0.5 * upper };

    let m = cfg.circle_points.max(8);
    let mut vals = Vec::with_capacity(m);
    for k in 0..m {
        let phase = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        let u = C64::from_polar(rho, phase);
        let (h1, h2) = if side >= 0 { (u, w / u) } else { (w / u, u) };
        let (y1, y2) = chart.leaf_param(h1, h2, x)?;
        let (z1, z2) = psi.apply(y1, y2)?;
        let wp = z1 * z2 * chart.pow(x, -chart.normal_form().a());
        let g1 = z1 / chart.f_eval(1, x, wp)?;
        let g2 = z2 / chart.f_eval(2, x, wp)?;
        vals.push(if j == 1 { g1 } else { g2 });
    }
    let coeff_with = |stride: usize| -> C64 {
        let count = m / stride;
        let mut acc = C64::new(0.0, 0.0);
        for k in (0..m).step_by(stride) {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            let u = C64::from_polar(rho, phase);
            let un = if n >= 0 {
                C64::new(1.0, 0.0) / u.powu(n as u32)
            } else {
                u.powu((-n) as u32)
            };
            acc += vals[k] * un;
        }
        acc / count as f64
    };
    let full = coeff_with(1);
    let half = coeff_with(2);
    Ok((full, (full - half).norm()))
}

/// Taylor table of one entire coefficient function.
#[derive(Debug, Clone, Serialize)]
pub struct WTable {
    /// `(re, im, error)` per `w`-power from 0 upward.
    pub coeffs: Vec<(f64, f64, f64)>,
}

impl WTable {
    pub fn coeff(&self, p: usize) -> C64 {
        self.coeffs.get(p).map_or(C64::new(0.0, 0.0), |c| C64::new(c.0, c.1))
    }

    pub fn error(&self, p: usize) -> f64 {
        self.coeffs.get(p).map_or(0.0, |c| c.2)
    }

    pub fn eval(&self, w: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * w + C64::new(c.0, c.1);
        }
        acc
    }
}

/// Extracted moduli coordinates of one side: Taylor tables of the
/// coefficient functions of both components and of the resonant-monomial
/// action `Psi_w = Psi_1 Psi_2`.
#[derive(Debug, Clone)]
pub struct StokesData {
    /// `+1` or `-1`.
    pub side: i8,
    /// Full expansion tables keyed by (component, index); includes the
    /// forced leading entries so their structure can be verified.
    pub tables: BTreeMap<(usize, i64), WTable>,
    /// Tables for the product component, index from 0.
    pub psi_w_tables: BTreeMap<i64, WTable>,
    /// Largest per-sample quadrature error seen while extracting.
    pub extraction_error: f64,
}

impl Serialize for StokesData {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        #[derive(Serialize)]
        struct Row<'a> {
            component: usize,
            index: i64,
            table: &'a WTable,
        }
        #[derive(Serialize)]
        struct WRow<'a> {
            index: i64,
            table: &'a WTable,
        }
        let rows: Vec<Row> = self
            .tables
            .iter()
            .map(|(&(component, index), table)| Row { component, index, table })
            .collect();
        let wrows: Vec<WRow> =
            self.psi_w_tables.iter().map(|(&index, table)| WRow { index, table }).collect();
        let mut st = ser.serialize_struct("StokesData", 4)?;
        st.serialize_field("side", &self.side)?;
        st.serialize_field("tables", &rows)?;
        st.serialize_field("psi_w_tables", &wrows)?;
        st.serialize_field("extraction_error", &self.extraction_error)?;
        st.end()
    }
}

impl StokesData {
    pub fn table(&self, j: usize, n: i64) -> Option<&WTable> {
        self.tables.get(&(j, n))
    }

    /// Value `Psi_{j,side,n}(0)`.
    pub fn at_zero(&self, j: usize, n: i64) -> C64 {
        self.table(j, n).map_or(C64::new(0.0, 0.0), |t| t.coeff(0))
    }

    /// Reconstruct the leaf-coordinate transition map from the tables.
    pub fn eval_leaf(&self, h1: C64, h2: C64) -> (C64, C64) {
        let w = h1 * h2;
        let u = if self.side >= 0 { h1 } else { h2 };
        let mut out = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for (&(j, n), table) in &self.tables {
            let un = if n >= 0 {
                u.powu(n as u32)
            } else {
                C64::new(1.0, 0.0) / u.powu((-n) as u32)
            };
            let term = table.eval(w) * un;
            if j == 1 {
                out.0 += term;
            } else {
                out.1 += term;
            }
        }
        out
    }

    /// Largest coefficientwise difference against another data set over the
    /// common index range.
    pub fn distance(&self, other: &StokesData) -> f64 {
        let mut d = 0.0f64;
        for (key, t) in &self.tables {
            if let Some(o) = other.tables.get(key) {
                for p in 0..t.coeffs.len().max(o.coeffs.len()) {
                    d = d.max((t.coeff(p) - o.coeff(p)).norm());
                }
            }
        }
        d
    }
}

fn run_chunked<T: Send, F: Fn(usize) -> T + Sync>(count: usize, threads: usize, f: F) -> Vec<T> {
    if threads <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let mut out: Vec<Option<T>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, slot) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, s) in slot.iter_mut().enumerate() {
                    *s = Some(f(t * chunk + i));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("worker filled every slot")).collect()
}

/// Extract the full data set of one side: every component index in
/// `[floor - 1, n_max]` (one below the floor, so the forced vanishing is
/// itself observed), tabulated in `w` to the configured order.
pub fn stokes_data_for_side(
    psi: &dyn FiberMap,
    chart: &LeafChart,
    side: i8,
    cfg: &StokesConfig,
) -> Result<StokesData, StokesError> {
    let mw = cfg.w_points.max(2 * (cfg.w_order + 1)).max(4);
    let wr = cfg.w_radius;
    let mut tables = BTreeMap::new();
    let mut psi_w_tables = BTreeMap::new();
    let mut worst = 0.0f64;

    // Values of Psi_{j,n} on the w-circle, then Fourier -> Taylor.
    let taylor_from_circle = |samples: &[(C64, f64)]| -> WTable {
        let mw = samples.len();
        let mut coeffs = Vec::with_capacity(cfg.w_order + 1);
        let quad_err = samples.iter().map(|s| s.1).fold(0.0, f64::max);
        for p in 0..=cfg.w_order {
            let mut acc = C64::new(0.0, 0.0);
            for (k, (v, _)) in samples.iter().enumerate() {
                let phase = 2.0 * std::f64::consts::PI * (k as f64) * (p as f64) / mw as f64;
                let rot = C64::from_polar(wr.powi(-(p as i32)), -phase);
                acc += v * rot;
            }
            acc /= mw as f64;
            coeffs.push((acc.re, acc.im, quad_err * wr.powi(-(p as i32)) / mw as f64));
        }
        WTable { coeffs }
    };

    for j in [1usize, 2usize] {
        let floor = index_floor(j, side);
        for n in (floor - 1)..=cfg.n_max {
            let samples = run_chunked(mw, cfg.threads, |k| {
                let phase = 2.0 * std::f64::consts::PI * k as f64 / mw as f64;
                let w = C64::from_polar(wr, phase);
                extract_laurent(psi, chart, side, j, n, w, cfg)
            });
            let mut vals = Vec::with_capacity(mw);
            for s in samples {
                let (v, e) = s?;
                worst = worst.max(e);
                vals.push((v, e));
            }
            tables.insert((j, n), taylor_from_circle(&vals));
        }
    }

    // Product component Psi_w = Psi_1 Psi_2 for indices 0..=n_max.
    for n in 0..=cfg.n_max {
        let samples = run_chunked(mw, cfg.threads, |k| {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / mw as f64;
            let w = C64::from_polar(wr, phase);
            extract_product_coeff(psi, chart, side, n, w, cfg)
        });
        let mut vals = Vec::with_capacity(mw);
        for s in samples {
            let (v, e) = s?;
            worst = worst.max(e);
            vals.push((v, e));
        }
        psi_w_tables.insert(n, taylor_from_circle(&vals));
    }

    Ok(StokesData { side, tables, psi_w_tables, extraction_error: worst })
}

/// Coefficient of `u^n` of the product `Psi_1 Psi_2` in leaf coordinates.
fn extract_product_coeff(
    psi: &dyn FiberMap,
    chart: &LeafChart,
    side: i8,
    n: i64,
    w: C64,
    cfg: &StokesConfig,
) -> Result<(C64, f64), StokesError> {
    let x = psi.x();
    let f1 = chart.f_eval(1, x, w)?;
    let f2 = chart.f_eval(2, x, w)?;
    let (lower, upper) = if side >= 0 {
        ((w * f2).norm() / cfg.r2, cfg.r1 / f1.norm())
    } else {
        ((w * f1).norm() / cfg.r1, cfg.r2 / f2.norm())
    };
    if !(lower < upper) {
        return Err(StokesError::AnnulusEmpty);
    }
    let rho = if lower > 0.0 { (lower * upper).sqrt() } else { 0.5 * upper };
    let m = cfg.circle_points.max(8);
    let mut vals = Vec::with_capacity(m);
    for k in 0..m {
        let phase = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        let u = C64::from_polar(rho, phase);
        let (h1, h2) = if side >= 0 { (u, w / u) } else { (w / u, u) };
        let (y1, y2) = chart.leaf_param(h1, h2, x)?;
        let (z1, z2) = psi.apply(y1, y2)?;
        let wp = z1 * z2 * chart.pow(x, -chart.normal_form().a());
        vals.push(wp);
    }
    let coeff_with = |stride: usize| -> C64 {
        let count = m / stride;
        let mut acc = C64::new(0.0, 0.0);
        for k in (0..m).step_by(stride) {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            let u = C64::from_polar(rho, phase);
            let un = if n >= 0 {
                C64::new(1.0, 0.0) / u.powu(n as u32)
            } else {
                u.powu((-n) as u32)
            };
            acc += vals[k] * un;
        }
        acc / count as f64
    };
    let full = coeff_with(1);
    let half = coeff_with(2);
    Ok((full, (full - half).norm()))
}

/// Everything the end-to-end extraction produces for one field.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub plus: StokesData,
    pub minus: StokesData,
    pub normal_form: NormalForm<C64>,
    /// Largest dropped-monomial tail estimate seen at either base point.
    pub tail_estimate: f64,
}

/// Normalize, resum both sectorial maps, form the two narrow-sector
/// transition maps at base points `x_radius * e^(i (arg(+-l) + x_offset))`,
/// and extract both data sets.
pub fn extract_stokes_data(
    y: &DiagSaddleNode<C64>,
    order: usize,
    x_offset: f64,
    cfg: &StokesConfig,
) -> Result<PipelineOutput, StokesError> {
    let (phi, nf) = normalize_div_integrable(y, order)?;
    let lambda = nf.lambda;
    let phi64 = phi.to_c64();
    let plus_map = SectorialMap::build(&phi64, lambda, 1, cfg.sum, cfg.sector_margin)?;
    let minus_map = SectorialMap::build(&phi64, lambda, -1, cfg.sum, cfg.sector_margin)?;
    finish_pipeline(plus_map, minus_map, nf, x_offset, cfg)
}

/// As [`extract_stokes_data`] from an exact field: the normalization and
/// the Borel-plane continuations are computed in exact arithmetic before
/// any quadrature, which is what keeps deep continuations trustworthy.
pub fn extract_stokes_data_exact(
    y: &DiagSaddleNode<crate::coeff::CRat>,
    order: usize,
    x_offset: f64,
    cfg: &StokesConfig,
) -> Result<PipelineOutput, StokesError> {
    let (phi, nf) = crate::normalizer::normalize_div_integrable(y, order)?;
    let nf64 = nf.to_c64();
    let lambda = nf64.lambda;
    let plus_map = SectorialMap::build_exact(&phi, lambda, 1, cfg.sum, cfg.sector_margin)?;
    let minus_map = SectorialMap::build_exact(&phi, lambda, -1, cfg.sum, cfg.sector_margin)?;
    finish_pipeline(plus_map, minus_map, nf64, x_offset, cfg)
}

fn finish_pipeline(
    plus_map: SectorialMap,
    minus_map: SectorialMap,
    nf: NormalForm<C64>,
    x_offset: f64,
    cfg: &StokesConfig,
) -> Result<PipelineOutput, StokesError> {
    let lambda = nf.lambda;
    let mut tail = 0.0f64;
    let mut out: Vec<StokesData> = Vec::new();
    for side in [1i8, -1i8] {
        let xb = narrow_base_point(lambda, side, cfg.x_radius, x_offset);
        let dir = if side >= 0 { lambda.arg() } else { (-lambda).arg() };
        let sector = SectorSpec::new(dir, std::f64::consts::PI, cfg.x_radius * 4.0, 0.4)?;
        let chart = LeafChart::new(nf.clone(), sector)?;
        let t = TransitionMap::at_x(&plus_map, &minus_map, side, xb, cfg.newton_tol)?;
        tail = tail.max(t.tail_estimate(cfg.r1.max(cfg.r2)));
        if tail > cfg.tail_tol {
            return Err(StokesError::MonomialCutoffTooSmall { estimate: tail, tol: cfg.tail_tol });
        }
        out.push(stokes_data_for_side(&t, &chart, side, cfg)?);
    }
    let minus = out.pop().expect("two sides");
    let plus = out.pop().expect("two sides");
    Ok(PipelineOutput { plus, minus, normal_form: nf, tail_estimate: tail })
}

/// Derived classification facts read off the two extracted data sets.
#[derive(Debug, Clone, Serialize)]
pub struct ModuliReport {
    pub center_variety_convergent: bool,
    pub h1_convergent: bool,
    pub h2_convergent: bool,
    /// The affine coefficient of the restriction to the first invariant
    /// hypersurface, defined when that hypersurface is convergent.
    pub martinet_ramis_affine_re: Option<f64>,
    pub martinet_ramis_affine_im: Option<f64>,
    pub symplectic: bool,
    pub max_det_deviation: f64,
    pub tol: f64,
}

/// Decide the convergence of the three formal invariant varieties, the
/// affine restriction datum, and transversal symplecticity.
///
/// Criteria at `w = 0`: the center variety is analytic iff
/// `Psi_{2,+,0}(0) = Psi_{1,-,0}(0) = 0`; the first hypersurface iff
/// `Psi_{1,-,n}(0) = 0` for all tabulated `n >= 0`; the second iff
/// `Psi_{2,+,n}(0) = 0` likewise. Symplecticity samples `det D Psi - 1`
/// on a leaf-space grid via central differences of the reconstruction.
pub fn moduli_report(
    plus: &StokesData,
    minus: &StokesData,
    tol: f64,
    cfg: &StokesConfig,
) -> Result<ModuliReport, StokesError> {
    if cfg.n_max < 2 {
        return Err(StokesError::InsufficientRange { n_max: cfg.n_max });
    }
    let center = plus.at_zero(2, 0).norm() <= tol && minus.at_zero(1, 0).norm() <= tol;
    let h1_conv = (0..=cfg.n_max).all(|n| minus.at_zero(1, n).norm() <= tol);
    let h2_conv = (0..=cfg.n_max).all(|n| plus.at_zero(2, n).norm() <= tol);
    let affine = if h1_conv { Some(plus.at_zero(2, 0)) } else { None };

    // det(D Psi) - 1 on a small grid, by central differences.
    let mut max_dev = 0.0f64;
    let step = 1e-5;
    for data in [plus, minus] {
        for &r1 in &[0.02f64, 0.05] {
            for &r2 in &[0.02f64, 0.05] {
                for k in 0..6 {
                    let ang = k as f64;
                    let h1 = C64::from_polar(r1, 1.1 * ang);
                    let h2 = C64::from_polar(r2, 0.7 * ang + 0.3);
                    let d = |f: &dyn Fn(C64, C64) -> C64, wrt: usize| -> C64 {
                        let e = C64::new(step, 0.0);
                        if wrt == 0 {
                            (f(h1 + e, h2) - f(h1 - e, h2)) / (2.0 * step)
                        } else {
                            (f(h1, h2 + e) - f(h1, h2 - e)) / (2.0 * step)
                        }
                    };
                    let p1 = |a: C64, b: C64| data.eval_leaf(a, b).0;
                    let p2 = |a: C64, b: C64| data.eval_leaf(a, b).1;
                    let det = d(&p1, 0) * d(&p2, 1) - d(&p1, 1) * d(&p2, 0);
                    max_dev = max_dev.max((det - C64::new(1.0, 0.0)).norm());
                }
            }
        }
    }

    Ok(ModuliReport {
        center_variety_convergent: center,
        h1_convergent: h1_conv,
        h2_convergent: h2_conv,
        martinet_ramis_affine_re: affine.map(|c| c.re),
        martinet_ramis_affine_im: affine.map(|c| c.im),
        symplectic: max_dev <= tol,
        max_det_deviation: max_dev,
        tol,
    })
}

/// Exponential-flatness fit `dev ~ A exp(-B / |x|)` from samples of
/// `(|x|, deviation)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FlatnessFit {
    pub a: f64,
    pub b: f64,
    /// All deviations below the floating-point noise floor; `a` and `b`
    /// are then meaningless and the map counts as flat outright.
    pub flat_to_machine: bool,
}

/// Noise floor for [`exponential_flatness_fit`].
pub const FLATNESS_FLOOR: f64 = 1e-14;

/// Least squares of `log dev` against `-1/|x|`, accepted only when the
/// exponential model explains the samples better than a power law
/// `dev ~ A |x|^p` does. Any decaying deviation produces a positive raw
/// slope against `-1/|x|`, so the model comparison is what separates
/// exponentially flat maps from merely polynomially small ones; a map that
/// loses the comparison is reported with `b = 0` (fail).
pub fn exponential_flatness_fit(samples: &[(f64, f64)]) -> FlatnessFit {
    if samples.iter().all(|s| s.1 < FLATNESS_FLOOR) {
        return FlatnessFit { a: 0.0, b: f64::INFINITY, flat_to_machine: true };
    }
    let fit = |pts: &[(f64, f64)]| -> (f64, f64, f64) {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        let slope = (n * sxy - sx * sy) / denom;
        let intercept = (sy - slope * sx) / n;
        let res = (pts
            .iter()
            .map(|p| {
                let r = p.1 - (intercept + slope * p.0);
                r * r
            })
            .sum::<f64>()
            / n)
            .sqrt();
        (slope, intercept, res)
    };
    let exp_pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.1 > 0.0).map(|s| (-1.0 / s.0, s.1.ln())).collect();
    let pow_pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.1 > 0.0).map(|s| (s.0.ln(), s.1.ln())).collect();
    let (b, log_a, exp_res) = fit(&exp_pts);
    let (_, _, pow_res) = fit(&pow_pts);
    if pow_res < exp_res {
        return FlatnessFit { a: log_a.exp(), b: 0.0, flat_to_machine: false };
    }
    FlatnessFit { a: log_a.exp(), b, flat_to_machine: false }
}

/// Sample `max_j |psi_j(x, y) - y_j|` along the ray `arg(x) = angle` for a
/// transition map factory, for flatness fitting.
pub fn flatness_samples<F>(
    mut transition: F,
    angle: f64,
    radii: &[f64],
    y: (C64, C64),
) -> Result<Vec<(f64, f64)>, StokesError>
where
    F: FnMut(C64) -> Result<TransitionMap, StokesError>,
{
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        let x = C64::from_polar(r, angle);
        let t = transition(x)?;
        let (z1, z2) = t.apply(y.0, y.1)?;
        let dev = (z1 - y.0).norm().max((z2 - y.1).norm());
        out.push((r, dev));
    }
    Ok(out)
}
