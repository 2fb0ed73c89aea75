//! Sectorial first integrals and the space of leaves of a normal form.
//!
//! For a div-integrable normal form (single series `c`, `c1 = -c`,
//! `c2 = +c`) with `a = a1 + a2`, `m = 1/a` when that is a positive integer
//! (`c_m = 0` otherwise) and `c~(v) = m sum_{k != m} c_k/(k-m) v^k`, the
//! functions
//!
//! ```text
//! f1(x, w) = exp( l/x - c_m w^m Log x - c~(w x^a)/x ) x^{a1}
//! f2(x, w) = exp(-l/x + c_m w^m Log x + c~(w x^a)/x ) x^{a2}
//! ```
//!
//! satisfy `f1 f2 = x^a`, and
//!
//! ```text
//! w  = y1 y2 / x^a,   h1 = y1 / f1(x, w),   h2 = y2 / f2(x, w)
//! ```
//!
//! are first integrals of the normal-form field on a sector, with
//! `h1 h2 = w`. Leaves are parametrized the other way by
//! `y_j = h_j f_j(x, h1 h2)`. All powers of `x` use one fixed branch of the
//! logarithm per chart, cut opposite the sector bisector.

use crate::coeff::C64;
use crate::normalizer::{NormalForm, DIV_CERT_TOL};
use crate::series::UniSeries;
use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LeafError {
    #[error("x = {x:?} lies outside the chart sector")]
    XOutsideSector { x: C64 },
    #[error("exponential overflow guard: |Re(exponent)| = {magnitude} > {limit}")]
    OverflowGuard { magnitude: f64, limit: f64 },
    #[error("chart requires a div-integrable normal form (c1 + c2 = 0): {detail}")]
    NotDivIntegrable { detail: String },
    #[error("invalid sector: {0}")]
    BadSector(String),
}

/// Blow-up guard: leaf coordinates genuinely diverge toward the sector
/// edges, and callers must see that rather than an infinity.
pub const OVERFLOW_LIMIT: f64 = 700.0;

/// An open sector `0 < |x| < radius`, directions within
/// `opening/2 + epsilon` of `theta`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SectorSpec {
    pub theta: f64,
    pub opening: f64,
    pub radius: f64,
    pub epsilon: f64,
}

impl SectorSpec {
    pub fn new(theta: f64, opening: f64, radius: f64, epsilon: f64) -> Result<Self, LeafError> {
        if !(opening > 0.0 && opening <= 2.0 * std::f64::consts::PI) {
            return Err(LeafError::BadSector(format!("opening {opening} not in (0, 2 pi]")));
        }
        if radius <= 0.0 {
            return Err(LeafError::BadSector(format!("radius {radius} must be positive")));
        }
        if epsilon < 0.0 {
            return Err(LeafError::BadSector(format!("epsilon {epsilon} must be >= 0")));
        }
        Ok(SectorSpec { theta, opening, radius, epsilon })
    }

    /// Wide sector bisected by `arg(i l)`, opening `pi` plus the margin:
    /// the domain of the `+` sectorial normalization.
    pub fn wide_plus(lambda: C64, radius: f64, epsilon: f64) -> Self {
        SectorSpec {
            theta: (C64::new(0.0, 1.0) * lambda).arg(),
            opening: std::f64::consts::PI,
            radius,
            epsilon,
        }
    }

    /// Wide sector bisected by `arg(-i l)`.
    pub fn wide_minus(lambda: C64, radius: f64, epsilon: f64) -> Self {
        SectorSpec {
            theta: (C64::new(0.0, -1.0) * lambda).arg(),
            opening: std::f64::consts::PI,
            radius,
            epsilon,
        }
    }

    /// Narrow sector bisected by `arg(l)` (side `+1`) or `arg(-l)`
    /// (side `-1`): the intersection domains where transition maps live.
    pub fn narrow(lambda: C64, side: i8, radius: f64) -> Self {
        let dir = if side >= 0 { lambda } else { -lambda };
        SectorSpec { theta: dir.arg(), opening: std::f64::consts::PI, radius, epsilon: 0.0 }
    }

    pub fn contains(&self, x: C64) -> bool {
        let r = x.norm();
        if !(r > 0.0 && r < self.radius) {
            return false;
        }
        let mut d = (x.arg() - self.theta) % (2.0 * std::f64::consts::PI);
        if d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        if d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        d.abs() <= self.opening / 2.0 + self.epsilon
    }
}

/// Evaluators for the first integrals and the leaf parametrization on one
/// sector, with one fixed branch of the logarithm.
#[derive(Debug, Clone)]
pub struct LeafChart {
    nf: NormalForm<C64>,
    sector: SectorSpec,
    a: C64,
    m: Option<u64>,
    c_m: C64,
    c_tilde: UniSeries<C64>,
}

impl LeafChart {
    /// Build a chart for a div-integrable normal form on the given sector.
    /// The branch of the logarithm is cut along the ray opposite the
    /// sector bisector.
    pub fn new(nf: NormalForm<C64>, sector: SectorSpec) -> Result<Self, LeafError> {
        if !nf.is_div_integrable(DIV_CERT_TOL) {
            return Err(LeafError::NotDivIntegrable {
                detail: format!("defect {:?}", nf.div_integrability_defect()),
            });
        }
        let a = nf.a();
        let m = nf.m();
        let c_m = nf.c_m();
        let c_tilde = nf.c_tilde();
        Ok(LeafChart { nf, sector, a, m, c_m, c_tilde })
    }

    pub fn sector(&self) -> &SectorSpec {
        &self.sector
    }

    pub fn normal_form(&self) -> &NormalForm<C64> {
        &self.nf
    }

    /// Branch of `log` analytic on the sector: argument taken in
    /// `(theta - pi, theta + pi]` around the sector bisector.
    pub fn log_branch(&self, x: C64) -> C64 {
        let mut arg = x.arg() - self.sector.theta;
        let tau = 2.0 * std::f64::consts::PI;
        while arg > std::f64::consts::PI {
            arg -= tau;
        }
        while arg <= -std::f64::consts::PI {
            arg += tau;
        }
        C64::new(x.norm().ln(), arg + self.sector.theta)
    }

    /// `x^s` in the chart's branch.
    pub fn pow(&self, x: C64, s: C64) -> C64 {
        (s * self.log_branch(x)).exp()
    }

    fn check_x(&self, x: C64) -> Result<(), LeafError> {
        if self.sector.contains(x) {
            Ok(())
        } else {
            Err(LeafError::XOutsideSector { x })
        }
    }

    fn guarded_exp(&self, e: C64) -> Result<C64, LeafError> {
        if e.re.abs() > OVERFLOW_LIMIT {
            return Err(LeafError::OverflowGuard { magnitude: e.re.abs(), limit: OVERFLOW_LIMIT });
        }
        Ok(e.exp())
    }

    /// The exponent `l/x - c_m w^m Log x - c~(w x^a)/x` of `f1`; `f2` uses
    /// its negative.
    fn f_exponent(&self, x: C64, w: C64) -> C64 {
        let log_x = self.log_branch(x);
        let mut e = self.nf.lambda / x;
        if let Some(m) = self.m {
            e -= self.c_m * w.powu(m as u32) * log_x;
        }
        let xa = (self.a * log_x).exp();
        e -= self.c_tilde.eval(&(w * xa)) / x;
        e
    }

    /// `f_j(x, w)`.
    pub fn f_eval(&self, j: usize, x: C64, w: C64) -> Result<C64, LeafError> {
        self.check_x(x)?;
        let log_x = self.log_branch(x);
        let e = self.f_exponent(x, w);
        let total = match j {
            1 => e + self.nf.a1 * log_x,
            2 => -e + self.nf.a2 * log_x,
            _ => panic!("j must be 1 or 2"),
        };
        self.guarded_exp(total)
    }

    /// First integrals `(h1, h2, w)` at a phase-space point.
    pub fn first_integrals(&self, x: C64, y1: C64, y2: C64) -> Result<(C64, C64, C64), LeafError> {
        self.check_x(x)?;
        let w = y1 * y2 * self.pow(x, -self.a);
        let f1 = self.f_eval(1, x, w)?;
        let f2 = self.f_eval(2, x, w)?;
        Ok((y1 / f1, y2 / f2, w))
    }

    /// Leaf parametrization `y_j = h_j f_j(x, h1 h2)`.
    pub fn leaf_param(&self, h1: C64, h2: C64, x: C64) -> Result<(C64, C64), LeafError> {
        self.check_x(x)?;
        let w = h1 * h2;
        let f1 = self.f_eval(1, x, w)?;
        let f2 = self.f_eval(2, x, w)?;
        Ok((h1 * f1, h2 * f2))
    }

    /// Time derivative of the normal-form flow at a point:
    /// `(x^2, (-l + a1 x - c(v)) y1, (l + a2 x + c(v)) y2)`.
    pub fn flow_derivative(&self, x: C64, y1: C64, y2: C64) -> (C64, C64, C64) {
        let v = y1 * y2;
        let c = self.nf.c().eval(&v);
        (
            x * x,
            (-self.nf.lambda + self.nf.a1 * x - c) * y1,
            (self.nf.lambda + self.nf.a2 * x + c) * y2,
        )
    }
}

/// Sampled magnitudes of `f_j` along a ray into the origin, with the
/// monotone trend toward `x = 0` and the expected behavior on that side.
#[derive(Debug, Clone, Serialize)]
pub struct LimitReport {
    pub j: usize,
    pub ray_angle: f64,
    /// `+1` when the ray lies on the side bisected by `arg(l)`.
    pub side: i8,
    /// Magnitudes sampled at geometrically shrinking `|x|` (toward 0 last).
    pub magnitudes: Vec<f64>,
    pub expected_growth: bool,
    pub monotone_matches: bool,
}

/// Sample `|f_j(x, w)|` along `x = r e^(i ray_angle)` with `r` shrinking
/// geometrically, and check the trend against the side of the ray:
/// `|f1| -> inf` and `|f2| -> 0` on the `arg(l)` side, the opposite on the
/// `arg(-l)` side.
pub fn limit_check(
    chart: &LeafChart,
    j: usize,
    w: C64,
    ray_angle: f64,
    samples: usize,
) -> Result<LimitReport, LeafError> {
    let lam = chart.normal_form().lambda;
    let mut d = (ray_angle - lam.arg()) % (2.0 * std::f64::consts::PI);
    if d > std::f64::consts::PI {
        d -= 2.0 * std::f64::consts::PI;
    }
    if d < -std::f64::consts::PI {
        d += 2.0 * std::f64::consts::PI;
    }
    let side: i8 = if d.abs() < std::f64::consts::FRAC_PI_2 { 1 } else { -1 };
    let expected_growth = (j == 1) == (side == 1);

    let r0 = chart.sector().radius * 0.8;
    let mut magnitudes = Vec::with_capacity(samples);
    for i in 0..samples {
        let r = r0 * 0.5f64.powi(i as i32);
        let x = C64::from_polar(r, ray_angle);
        magnitudes.push(chart.f_eval(j, x, w)?.norm());
    }
    let monotone_matches = magnitudes.windows(2).all(|p| {
        if expected_growth {
            p[1] > p[0]
        } else {
            p[1] < p[0]
        }
    });
    Ok(LimitReport { j, ray_angle, side, magnitudes, expected_growth, monotone_matches })
}

/// Fixed-radius leaf-space domain: `(h1, h2)` with
/// `|h_j| <= r_j / |f_j(x, h1 h2)|`.
#[derive(Debug, Clone)]
pub struct LeafDomain {
    pub chart: LeafChart,
    pub r1: f64,
    pub r2: f64,
}

impl LeafDomain {
    pub fn new(chart: LeafChart, r1: f64, r2: f64) -> Self {
        LeafDomain { chart, r1, r2 }
    }

    pub fn contains(&self, x: C64, h1: C64, h2: C64) -> Result<bool, LeafError> {
        let w = h1 * h2;
        let f1 = self.chart.f_eval(1, x, w)?;
        let f2 = self.chart.f_eval(2, x, w)?;
        Ok(h1.norm() <= self.r1 / f1.norm() && h2.norm() <= self.r2 / f2.norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Coeff;
    use crate::normalizer::NormalForm;

    fn chart_with(lambda: C64, a1: C64, a2: C64, c1: f64, sector: SectorSpec) -> LeafChart {
        let order = 4;
        let mut c = UniSeries::zero(order);
        c.set_coeff(1, C64::new(c1, 0.0));
        let nf = NormalForm::new(lambda, a1, a2, c.neg(), c);
        LeafChart::new(nf, sector).unwrap()
    }

    fn right_sector() -> SectorSpec {
        SectorSpec::new(0.0, std::f64::consts::PI, 1.5, 0.2).unwrap()
    }

    #[test]
    fn zero_point_maps_to_zero() {
        let ch = chart_with(C64::new(1.0, 0.0), C64::new(0.5, 0.0), C64::new(0.5, 0.0), 0.1, right_sector());
        let x = C64::new(0.4, 0.1);
        let (h1, h2, w) = ch.first_integrals(x, C64::new(0.0, 0.0), C64::new(0.0, 0.0)).unwrap();
        assert_eq!((h1.norm(), h2.norm(), w.norm()), (0.0, 0.0, 0.0));
        let (y1, y2) = ch.leaf_param(C64::new(0.0, 0.0), C64::new(0.0, 0.0), x).unwrap();
        assert_eq!((y1.norm(), y2.norm()), (0.0, 0.0));
    }

    #[test]
    fn closed_form_when_c_vanishes() {
        // c = 0, a1 = a2 = 1/2, l = 1: h1 = y1 e^{-1/x} x^{-1/2}.
        let ch = chart_with(C64::new(1.0, 0.0), C64::new(0.5, 0.0), C64::new(0.5, 0.0), 0.0, right_sector());
        let x = C64::new(0.3, 0.05);
        let y1 = C64::new(0.02, 0.01);
        let y2 = C64::new(-0.01, 0.03);
        let (h1, _, _) = ch.first_integrals(x, y1, y2).unwrap();
        let expect = y1 * (-1.0 / x).exp() * ch.pow(x, C64::new(-0.5, 0.0));
        assert!((h1 - expect).norm() <= 1e-13 * expect.norm());

        // f1 = e^{1/x} x for a1 = 1: grows along the positive axis.
        let ch = chart_with(C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), 0.0, right_sector());
        let f = |r: f64| ch.f_eval(1, C64::new(r, 0.0), C64::new(0.3, 0.0)).unwrap().norm();
        assert!(f(0.05) > f(0.1) && f(0.1) > f(0.2));
    }

    #[test]
    fn product_identities_on_random_samples() {
        let ch = chart_with(
            C64::new(1.0, 0.4),
            C64::new(0.6, 0.1),
            C64::new(0.7, -0.1),
            0.08,
            SectorSpec::new(0.35, std::f64::consts::PI, 1.2, 0.3).unwrap(),
        );
        let mut state = 0x12345678u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for _ in 0..500 {
            let x = C64::from_polar(0.15 + 0.5 * rnd().abs(), 0.35 + 1.2 * rnd());
            let y1 = C64::new(0.05 * rnd(), 0.05 * rnd());
            let y2 = C64::new(0.05 * rnd(), 0.05 * rnd());
            let (h1, h2, w) = ch.first_integrals(x, y1, y2).unwrap();
            if w.norm() > 0.0 {
                assert!((h1 * h2 - w).norm() <= 1e-12 * w.norm());
            }
            let f1 = ch.f_eval(1, x, w).unwrap();
            let f2 = ch.f_eval(2, x, w).unwrap();
            let xa = ch.pow(x, ch.normal_form().a());
            assert!((f1 * f2 - xa).norm() <= 1e-12 * xa.norm());
        }
    }

    #[test]
    fn leaf_param_round_trip() {
        let ch = chart_with(
            C64::new(1.0, 0.0),
            C64::new(0.5, 0.2),
            C64::new(0.6, -0.2),
            0.05,
            right_sector(),
        );
        let mut state = 0xdeadbeefu64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for _ in 0..200 {
            let x = C64::from_polar(0.25 + 0.3 * rnd().abs(), 0.8 * rnd());
            let h1 = C64::new(0.1 * rnd(), 0.1 * rnd());
            let h2 = C64::new(0.1 * rnd(), 0.1 * rnd());
            let Ok((y1, y2)) = ch.leaf_param(h1, h2, x) else { continue };
            let (g1, g2, w) = ch.first_integrals(x, y1, y2).unwrap();
            let scale = h1.norm().max(h2.norm()).max(1e-30);
            assert!((g1 - h1).norm() <= 1e-10 * scale, "h1 {h1:?} -> {g1:?}");
            assert!((g2 - h2).norm() <= 1e-10 * scale);
            assert!((w - h1 * h2).norm() <= 1e-10 * scale * scale.max(1.0));
        }
    }

    #[test]
    fn first_integrals_constant_along_flow() {
        // Fixed-step RK4 along the normal-form flow; h1, h2 must drift by
        // less than 1e-8 over unit integration time.
        let ch = chart_with(
            C64::new(-1.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            0.02,
            SectorSpec::new(std::f64::consts::PI, std::f64::consts::PI, 1.0, 0.2).unwrap(),
        );
        let mut s = (C64::new(-0.4, 0.05), C64::new(0.03, 0.01), C64::new(0.02, -0.02));
        let (h1_0, h2_0, _) = ch.first_integrals(s.0, s.1, s.2).unwrap();
        let steps = 2000;
        let dt = 1.0 / steps as f64;
        for _ in 0..steps {
            let k1 = ch.flow_derivative(s.0, s.1, s.2);
            let k2 = ch.flow_derivative(
                s.0 + k1.0 * (dt / 2.0),
                s.1 + k1.1 * (dt / 2.0),
                s.2 + k1.2 * (dt / 2.0),
            );
            let k3 = ch.flow_derivative(
                s.0 + k2.0 * (dt / 2.0),
                s.1 + k2.1 * (dt / 2.0),
                s.2 + k2.2 * (dt / 2.0),
            );
            let k4 = ch.flow_derivative(s.0 + k3.0 * dt, s.1 + k3.1 * dt, s.2 + k3.2 * dt);
            s = (
                s.0 + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (dt / 6.0),
                s.1 + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0),
                s.2 + (k1.2 + k2.2 * 2.0 + k3.2 * 2.0 + k4.2) * (dt / 6.0),
            );
        }
        let (h1_1, h2_1, _) = ch.first_integrals(s.0, s.1, s.2).unwrap();
        let drift = (h1_1 - h1_0).norm().max((h2_1 - h2_0).norm());
        assert!(drift <= 1e-8, "drift {drift:e}");
    }

    #[test]
    fn leaf_param_satisfies_the_ode() {
        // x -> leaf_param(h, x) solves dy_j/dx = component_j / x^2; checked
        // with a 5-point stencil.
        let ch = chart_with(
            C64::new(1.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            0.03,
            right_sector(),
        );
        let h1 = C64::new(0.05, 0.02);
        let h2 = C64::new(-0.04, 0.01);
        for &xr in &[0.4, 0.6, 0.9] {
            let x = C64::new(xr, 0.1);
            let st = 1e-3 * xr;
            let y = |dx: f64| ch.leaf_param(h1, h2, x + C64::new(dx, 0.0)).unwrap();
            let (y1m2, _) = y(-2.0 * st);
            let (y1m1, _) = y(-st);
            let (y1p1, _) = y(st);
            let (y1p2, _) = y(2.0 * st);
            let dy1 = (y1m2 - y1p2 + (y1p1 - y1m1) * 8.0) / (12.0 * st);
            let (y1, y2) = y(0.0);
            let rhs = ch.flow_derivative(x, y1, y2);
            let want = rhs.1 / (x * x);
            let rel = (dy1 - want).norm() / want.norm().max(1e-12);
            assert!(rel <= 1e-8, "x={xr}: rel {rel:e}");
        }
    }

    #[test]
    fn all_four_limits() {
        let ch = chart_with(
            C64::new(1.0, 0.3),
            C64::new(0.4, 0.1),
            C64::new(0.8, -0.1),
            0.04,
            SectorSpec::new(0.0, 2.0 * std::f64::consts::PI, 1.0, 0.0).unwrap(),
        );
        let lam_arg = C64::new(1.0, 0.3).arg();
        let w = C64::new(0.2, -0.1);
        for (j, angle, expect_growth) in [
            (1, lam_arg, true),
            (2, lam_arg, false),
            (1, lam_arg + std::f64::consts::PI, false),
            (2, lam_arg + std::f64::consts::PI, true),
        ] {
            let rep = limit_check(&ch, j, w, angle, 10).unwrap();
            assert_eq!(rep.expected_growth, expect_growth);
            assert!(rep.monotone_matches, "j={j} angle={angle}: {:?}", rep.magnitudes);
        }
    }

    #[test]
    fn leaf_domain_membership() {
        let ch = chart_with(
            C64::new(1.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            0.02,
            right_sector(),
        );
        let dom = LeafDomain::new(ch.clone(), 0.1, 0.12);
        let x = C64::new(0.5, 0.1);
        assert!(dom.contains(x, C64::new(0.0, 0.0), C64::new(0.0, 0.0)).unwrap());

        // Membership forces |h1 h2| < r1 r2 / |x^a|.
        let xa = ch.pow(x, ch.normal_form().a());
        let mut state = 0xfeedu64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let mut members = 0;
        for _ in 0..300 {
            let h1 = C64::new(0.02 * rnd(), 0.02 * rnd());
            let h2 = C64::new(0.6 * rnd(), 0.6 * rnd());
            if dom.contains(x, h1, h2).unwrap() {
                members += 1;
                assert!((h1 * h2).norm() < dom.r1 * dom.r2 / xa.norm() * (1.0 + 1e-12));
            }
        }
        assert!(members > 0, "sampling found no members at all");

        // Points built from |y_j| < r_j lie in the domain.
        for _ in 0..100 {
            let y1 = C64::new(0.05 * rnd(), 0.05 * rnd());
            let y2 = C64::new(0.06 * rnd(), 0.06 * rnd());
            let (h1, h2, _) = ch.first_integrals(x, y1, y2).unwrap();
            assert!(dom.contains(x, h1, h2).unwrap());
        }
    }
}
