//! Borel transform, Pade continuation, directional Laplace sums.
//!
//! The convention is fixed once: for `f = sum_{k>=1} f_k x^k`, the Borel
//! transform is `B(f)(z) = sum_{k>=0} f_{k+1} z^k / k!`, and the sum in
//! direction `theta` is `f_0 + int_0^{inf e^(i theta)} P(z) e^(-z/x) dz`
//! with `P` a Pade continuation of the truncated Borel series. A constant
//! term of the source series is stored aside and re-added after the
//! integral.
//!
//! Directions within a few degrees of the convergence boundary
//! `Re(e^(i theta)/x) = 0` are handled by rotating the integration ray
//! inside a pole-free wedge toward `arg(x)`; by the residue theorem the
//! value is unchanged as long as no denominator pole is crossed, which is
//! checked. Poles double as singular-direction detectors: a requested ray
//! passing through the pole tube is an error, not a number.

use crate::coeff::C64;
use crate::series::UniSeries;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum SumError {
    #[error("Pade denominator pole at {pole:?} lies within the tube of the ray at angle {theta}")]
    PoleOnRay { pole: C64, theta: f64 },
    #[error("quadrature failure: {reason}")]
    QuadratureFailure { reason: String },
    #[error("{0}")]
    InvalidInput(String),
}

/// Borel-plane image of a one-variable series.
#[derive(Debug, Clone)]
pub struct BorelSeries {
    /// Coefficient `k` equals `f_{k+1} / k!` of the source.
    pub coeffs: UniSeries<C64>,
    /// Truncation order of the source series.
    pub source_order: usize,
    /// Constant term of the source, re-added after Laplace integration.
    pub constant: C64,
}

/// `B(sum f_k x^k)(z) = sum f_{k+1} z^k / k!`. The constant term `f_0` is
/// carried along unchanged and re-added by [`laplace_sum`].
pub fn borel_transform(f: &UniSeries<C64>) -> BorelSeries {
    let n = f.trunc_order();
    let mut coeffs = UniSeries::zero(n.saturating_sub(1));
    let mut kfact = 1.0f64;
    for k in 0..n {
        if k > 0 {
            kfact *= k as f64;
        }
        coeffs.set_coeff(k, f.coeff(k + 1) / kfact);
    }
    BorelSeries { coeffs, source_order: n, constant: f.coeff(0) }
}

/// Rational continuation `z^p * num/den` of a truncated series.
///
/// Leading zero coefficients are factored out before fitting; otherwise
/// they show up as a spurious pole-zero pair at the origin.
#[derive(Debug, Clone)]
pub struct Pade {
    /// Numerator and denominator in the scaled variable `u = z / var_scale`.
    pub num: Vec<C64>,
    pub den: Vec<C64>,
    /// Degrees actually used (the requested ones unless the Toeplitz
    /// system was singular and the denominator degree had to drop).
    pub degrees: (usize, usize),
    /// Power of `z` factored out of the series before fitting.
    pub lead_power: usize,
    /// Largest input coefficient magnitude, the reference scale for
    /// residue-significance filtering.
    pub coeff_scale: f64,
    /// Variable scaling applied before fitting, chosen to flatten the
    /// coefficient magnitudes; geometric coefficient decay otherwise makes
    /// the Toeplitz system needlessly ill-conditioned.
    pub var_scale: f64,
}

impl Pade {
    /// Fit an `[l/m]` approximant to `coeffs`. Requires
    /// `coeffs.len() >= l + m + 1`; on a singular Toeplitz system the
    /// denominator degree is reduced until the fit succeeds.
    pub fn fit(coeffs: &[C64], l: usize, m: usize) -> Result<Pade, SumError> {
        if coeffs.len() < l + m + 1 {
            return Err(SumError::InvalidInput(format!(
                "need {} coefficients for a [{l}/{m}] fit, got {}",
                l + m + 1,
                coeffs.len()
            )));
        }
        let coeff_scale = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        if coeff_scale == 0.0 {
            return Ok(Pade {
                num: vec![C64::new(0.0, 0.0)],
                den: vec![C64::new(1.0, 0.0)],
                degrees: (0, 0),
                lead_power: 0,
                coeff_scale: 0.0,
                var_scale: 1.0,
            });
        }
        let lead_power =
            coeffs.iter().take_while(|c| c.norm() <= 1e-250 * coeff_scale).count();
        let raw = &coeffs[lead_power..];
        // Flatten the coefficient magnitudes with a variable scaling
        // u = z / var_scale, from the least-squares slope of log |c_k|.
        let var_scale = {
            let pts: Vec<(f64, f64)> = raw
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm() > 0.0)
                .map(|(k, c)| (k as f64, c.norm().ln()))
                .collect();
            if pts.len() < 3 {
                1.0
            } else {
                let n = pts.len() as f64;
                let sx: f64 = pts.iter().map(|p| p.0).sum();
                let sy: f64 = pts.iter().map(|p| p.1).sum();
                let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
                let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
                let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
                slope.exp().clamp(1e-6, 1e6)
            }
        };
        let scaled: Vec<C64> = raw
            .iter()
            .enumerate()
            .map(|(k, c)| c * var_scale.powi(-(k as i32)))
            .collect();
        let coeffs = &scaled[..];
        let l = l.saturating_sub(lead_power).min(coeffs.len().saturating_sub(m + 1));
        let c = |k: isize| -> C64 {
            if k < 0 {
                C64::new(0.0, 0.0)
            } else {
                coeffs.get(k as usize).copied().unwrap_or(C64::new(0.0, 0.0))
            }
        };
        let mut mm = m;
        loop {
            let solved = if mm == 0 {
                Some(Vec::new())
            } else {
                let a: Vec<Vec<C64>> = (1..=mm)
                    .map(|i| (1..=mm).map(|j| c((l + i) as isize - j as isize)).collect())
                    .collect();
                let rhs: Vec<C64> = (1..=mm).map(|i| -c((l + i) as isize)).collect();
                solve_c64(a, rhs)
            };
            if let Some(b_tail) = solved {
                let mut den = Vec::with_capacity(mm + 1);
                den.push(C64::new(1.0, 0.0));
                den.extend(b_tail);
                let mut num = Vec::with_capacity(l + 1);
                for k in 0..=l {
                    let mut s = C64::new(0.0, 0.0);
                    for (j, b) in den.iter().enumerate().take(k + 1) {
                        s += b * c(k as isize - j as isize);
                    }
                    num.push(s);
                }
                return Ok(Pade {
                    num,
                    den,
                    degrees: (l, mm),
                    lead_power,
                    coeff_scale,
                    var_scale,
                });
            }
            if mm == 0 {
                return Err(SumError::QuadratureFailure {
                    reason: "Pade fit failed at denominator degree zero".into(),
                });
            }
            mm -= 1;
        }
    }

    pub fn eval(&self, z: C64) -> C64 {
        let u = z * self.var_scale;
        z.powu(self.lead_power as u32) * horner(&self.num, u) / horner(&self.den, u)
    }

    /// Roots of the denominator, in the unscaled variable.
    pub fn poles(&self) -> Vec<C64> {
        poly_roots(&self.den).into_iter().map(|u| u / self.var_scale).collect()
    }

    /// Poles with their residues `res(z^p num/den, pole)`, unscaled.
    pub fn pole_data(&self) -> Vec<PoleData> {
        let dden = derive_poly(&self.den);
        poly_roots(&self.den)
            .into_iter()
            .map(|u| {
                let pole = u / self.var_scale;
                let d = horner(&dden, u);
                let residue = if d.norm() == 0.0 {
                    C64::new(f64::INFINITY, 0.0)
                } else {
                    pole.powu(self.lead_power as u32) * horner(&self.num, u)
                        / (d * self.var_scale)
                };
                PoleData { pole, residue }
            })
            .collect()
    }

    /// Denominator roots that carry a non-negligible residue. A near-zero
    /// residue means a spurious pole-zero doublet of the fit, not a
    /// singularity of the continued function; those must not block rays.
    pub fn significant_poles(&self) -> Vec<C64> {
        self.pole_data()
            .into_iter()
            .filter(|pd| pd.residue.norm() > 1e-9 * self.coeff_scale * (1.0 + pd.pole.norm()))
            .map(|pd| pd.pole)
            .collect()
    }
}

/// One continuation pole with its residue.
#[derive(Debug, Clone, Copy)]
pub struct PoleData {
    pub pole: C64,
    pub residue: C64,
}

/// Exact-arithmetic Pade fit of exactly known coefficients.
///
/// The Toeplitz system behind a diagonal fit is exponentially
/// ill-conditioned, which caps double-precision fits near degree 12; with
/// rational coefficients the solve is done exactly and only the resulting
/// numerator and denominator are rounded, in a magnitude-flattened
/// variable, so much deeper continuations stay usable.
pub fn pade_exact(coeffs: &[crate::coeff::CRat], l: usize, m: usize) -> Result<Pade, SumError> {
    use crate::coeff::{CRat, Coeff};
    use num_traits::{One, Zero};
    if coeffs.len() < l + m + 1 {
        return Err(SumError::InvalidInput(format!(
            "need {} coefficients for a [{l}/{m}] fit, got {}",
            l + m + 1,
            coeffs.len()
        )));
    }
    let coeff_scale = coeffs.iter().map(|c| c.abs_f64()).fold(0.0f64, f64::max);
    if coeff_scale == 0.0 {
        return Ok(Pade {
            num: vec![C64::new(0.0, 0.0)],
            den: vec![C64::new(1.0, 0.0)],
            degrees: (0, 0),
            lead_power: 0,
            coeff_scale: 0.0,
            var_scale: 1.0,
        });
    }
    let lead_power = coeffs.iter().take_while(|c| c.is_zero()).count();
    let raw = &coeffs[lead_power..];
    let l = l.saturating_sub(lead_power).min(raw.len().saturating_sub(m + 1));
    let c = |k: isize| -> CRat {
        if k < 0 {
            CRat::zero()
        } else {
            raw.get(k as usize).cloned().unwrap_or_else(CRat::zero)
        }
    };
    let mut mm = m;
    loop {
        let solved = if mm == 0 {
            Some(Vec::new())
        } else {
            let a: Vec<Vec<CRat>> = (1..=mm)
                .map(|i| (1..=mm).map(|j| c((l + i) as isize - j as isize)).collect())
                .collect();
            let rhs: Vec<CRat> = (1..=mm).map(|i| -c((l + i) as isize)).collect();
            crate::normalizer::solve_dense(a, rhs)
        };
        if let Some(b_tail) = solved {
            let mut den_exact = Vec::with_capacity(mm + 1);
            den_exact.push(CRat::one());
            den_exact.extend(b_tail);
            let mut num_exact = Vec::with_capacity(l + 1);
            for k in 0..=l {
                let mut acc = CRat::zero();
                for (j, b) in den_exact.iter().enumerate().take(k + 1) {
                    acc = acc + b.clone() * c(k as isize - j as isize);
                }
                num_exact.push(acc);
            }
            // Flatten magnitudes before rounding: u = var_scale * z.
            let var_scale = {
                let pts: Vec<(f64, f64)> = raw
                    .iter()
                    .enumerate()
                    .filter(|(_, cc)| !cc.is_zero())
                    .map(|(k, cc)| (k as f64, cc.abs_f64().ln()))
                    .collect();
                if pts.len() < 3 {
                    1.0
                } else {
                    let n = pts.len() as f64;
                    let sx: f64 = pts.iter().map(|p| p.0).sum();
                    let sy: f64 = pts.iter().map(|p| p.1).sum();
                    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
                    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
                    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
                    slope.exp().clamp(1e-6, 1e6)
                }
            };
            let to_f64_scaled = |v: &[CRat]| -> Vec<C64> {
                v.iter()
                    .enumerate()
                    .map(|(j, cc)| cc.to_c64() * var_scale.powi(-(j as i32)))
                    .collect()
            };
            return Ok(Pade {
                num: to_f64_scaled(&num_exact),
                den: to_f64_scaled(&den_exact),
                degrees: (l, mm),
                lead_power,
                coeff_scale,
                var_scale,
            });
        }
        if mm == 0 {
            return Err(SumError::QuadratureFailure {
                reason: "exact Pade fit failed at denominator degree zero".into(),
            });
        }
        mm -= 1;
    }
}

/// Exact Borel coefficients of an exact source series, plus the plain
/// float image for quadrature plumbing.
pub fn borel_transform_exact(f: &crate::series::UniSeries<crate::coeff::CRat>) -> (BorelSeries, Vec<crate::coeff::CRat>) {
    use crate::coeff::{CRat, Coeff};
    use num_traits::Zero;
    let n = f.trunc_order();
    let mut exact = Vec::with_capacity(n);
    let mut kfact = num_bigint::BigInt::from(1u32);
    for k in 0..n {
        if k > 0 {
            kfact *= k as i64;
        }
        let denom_k = CRat::new(
            num_rational::BigRational::from_integer(kfact.clone()),
            num_rational::BigRational::zero(),
        );
        exact.push(f.coeff(k + 1).checked_div(&denom_k).expect("k! is nonzero"));
    }
    (borel_transform(&f.to_c64()), exact)
}

fn derive_poly(c: &[C64]) -> Vec<C64> {
    c.iter().enumerate().skip(1).map(|(k, a)| a * k as f64).collect()
}

fn horner(c: &[C64], z: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for a in c.iter().rev() {
        acc = acc * z + a;
    }
    acc
}

/// Partial-pivot complex solve; `None` on (numerically) singular systems.
fn solve_c64(mut m: Vec<Vec<C64>>, mut rhs: Vec<C64>) -> Option<Vec<C64>> {
    let n = rhs.len();
    let scale = m.iter().flat_map(|r| r.iter()).map(|c| c.norm()).fold(0.0f64, f64::max).max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| {
            m[a][col].norm().partial_cmp(&m[b][col].norm()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].norm() <= 1e-13 * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r][col] / m[col][col];
            if f.norm() == 0.0 {
                continue;
            }
            for c in col..n {
                let d = f * m[col][c];
                m[r][c] -= d;
            }
            let d = f * rhs[col];
            rhs[r] -= d;
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

/// Durand-Kerner root finder. Adequate for the small denominator degrees
/// used here; returns an empty list for constants.
pub fn poly_roots(coeffs: &[C64]) -> Vec<C64> {
    let mut c: Vec<C64> = coeffs.to_vec();
    while c.last().map_or(false, |t| t.norm() < 1e-300) {
        c.pop();
    }
    if c.len() < 2 {
        return Vec::new();
    }
    let deg = c.len() - 1;
    let lead = c[deg];
    let radius = 1.0
        + c.iter().take(deg).map(|a| (a / lead).norm()).fold(0.0f64, f64::max);
    let seed = C64::new(0.4, 0.9);
    let mut z: Vec<C64> = (0..deg).map(|k| radius * seed.powu(k as u32 + 1)).collect();
    for _ in 0..400 {
        let mut moved = 0.0f64;
        for k in 0..deg {
            let mut denom = lead;
            for j in 0..deg {
                if j != k {
                    denom *= z[k] - z[j];
                }
            }
            if denom.norm() < 1e-280 {
                continue;
            }
            let delta = horner(&c, z[k]) / denom;
            z[k] -= delta;
            moved = moved.max(delta.norm());
        }
        if moved < 1e-14 * radius.max(1.0) {
            break;
        }
    }
    z
}

/// What one directional sum evaluation produces.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SumValue {
    pub value_re: f64,
    pub value_im: f64,
    /// Accumulated panel-refinement discrepancy plus tail bound.
    pub error_estimate: f64,
    /// The ray actually integrated along (after any pole-free rotation).
    pub ray_used: f64,
}

impl SumValue {
    pub fn value(&self) -> C64 {
        C64::new(self.value_re, self.value_im)
    }
}

/// A directional sum sampled over several points.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionalSum {
    pub theta: f64,
    pub samples: Vec<(f64, f64, f64, f64)>,
    pub quadrature_error_estimate: f64,
}

/// Tunables for [`laplace_sum`]. The defaults match the tolerances used by
/// the test suite.
#[derive(Debug, Clone, Copy)]
pub struct SumConfig {
    /// Pade degrees; `None` picks `[n/2 / n/2]` from the available length.
    pub pade: Option<(usize, usize)>,
    /// Relative half-width of the pole tube around the ray.
    pub pole_tube_rel: f64,
    pub pole_tube_abs: f64,
    /// Target relative accuracy of each quadrature panel.
    pub quad_rel_tol: f64,
    /// Allow rotating the ray (within a pole-free wedge, toward `arg x`)
    /// when the requested direction has little or no kernel decay.
    pub allow_rotation: bool,
    /// Minimum `cos(theta - arg x)` below which rotation is attempted.
    pub rotation_trigger_cos: f64,
}

impl Default for SumConfig {
    fn default() -> Self {
        SumConfig {
            pade: None,
            pole_tube_rel: 0.02,
            pole_tube_abs: 1e-9,
            quad_rel_tol: 1e-12,
            allow_rotation: true,
            rotation_trigger_cos: 0.95,
        }
    }
}

fn angle_normalize(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    if a <= -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Distance from the ray `{t e^(i theta) : t >= 0}` to a point.
fn ray_distance(theta: f64, p: C64) -> f64 {
    let d = C64::new(theta.cos(), theta.sin());
    let along = p.re * d.re + p.im * d.im;
    if along <= 0.0 {
        p.norm()
    } else {
        (p - d * along).norm()
    }
}

fn pole_blocks_ray(theta: f64, pole: C64, cfg: &SumConfig) -> bool {
    ray_distance(theta, pole) < cfg.pole_tube_abs + cfg.pole_tube_rel * pole.norm()
}

/// Choose the integration ray and the residue corrections that relate it
/// back to the requested direction.
///
/// The requested ray must clear every significant pole tube (a blocked
/// request is an ambiguous branch, reported as [`SumError::PoleOnRay`]).
/// When the kernel decays well along it, it is used as is. Otherwise the
/// ray rotates toward `arg(x)` (the steepest-descent direction), and every
/// pole swept on the way contributes an explicit `2 pi i res e^(-p/x)`
/// term: by the residue theorem the corrected value equals the requested
/// lateral sum exactly for the rational continuation. For cut-type Borel
/// functions the pole string is the continuation's quadrature of the cut,
/// so these corrections converge much faster than near-cut integration
/// would. Every swept pole lies in the decay wedge, hence the exponential
/// factors are all bounded.
fn choose_ray(
    theta: f64,
    x: C64,
    pade: &Pade,
    cfg: &SumConfig,
) -> Result<(f64, C64), SumError> {
    let significant = pade.significant_poles();
    for p in &significant {
        if pole_blocks_ray(theta, *p, cfg) {
            return Err(SumError::PoleOnRay { pole: *p, theta });
        }
    }
    let target = x.arg();
    let gap = angle_normalize(target - theta);
    let zero = C64::new(0.0, 0.0);
    if !cfg.allow_rotation || gap.cos() >= cfg.rotation_trigger_cos || gap.abs() < 1e-12 {
        return Ok((theta, zero));
    }
    // Requests whose ray has no kernel decay at this x (up to a quarter
    // turn past the boundary and beyond) are still well-defined branch
    // values of the continuation; only a nearly opposite request is
    // ambiguous, because the sweep would graze the anti-direction cut.
    if gap.abs() > std::f64::consts::PI - 0.05 {
        return Err(SumError::QuadratureFailure {
            reason: format!(
                "requested ray {theta} is nearly opposite to the decay direction of x \
                 (argument {target}); the branch is ambiguous"
            ),
        });
    }
    // Nudge the target ray off any pole tube.
    let mut theta_eval = None;
    'outer: for step in 0..=20 {
        for sign in [1.0f64, -1.0] {
            let cand = target + sign * 0.06 * step as f64;
            if angle_normalize(cand - target).cos() < 0.2 {
                continue;
            }
            if significant.iter().all(|p| !pole_blocks_ray(cand, *p, cfg)) {
                theta_eval = Some(cand);
                break 'outer;
            }
        }
    }
    let Some(theta_eval) = theta_eval else {
        return Err(SumError::QuadratureFailure {
            reason: "no pole-free evaluation ray near the decay direction".into(),
        });
    };
    // Poles swept between the requested and the evaluation ray. Rotating
    // counterclockwise the requested ray is the lower wedge edge:
    // S(req) = S(eval) + 2 pi i * sum(res e^(-p/x)); clockwise flips the
    // sign. Pole angles are measured relative to the requested ray so the
    // branch cut of `arg` cannot split the wedge.
    let sweep = angle_normalize(theta_eval - theta);
    let mut correction = zero;
    for pd in pade.pole_data() {
        // Spurious doublets carry negligible residues and may sit anywhere,
        // including where the kernel grows; only significant poles belong
        // to the continued function and contribute to the branch change.
        if !pd.residue.is_finite()
            || pd.residue.norm() <= 1e-9 * pade.coeff_scale * (1.0 + pd.pole.norm())
        {
            continue;
        }
        let rel = angle_normalize(pd.pole.arg() - theta);
        let inside = if sweep > 0.0 { rel > 0.0 && rel < sweep } else { rel < 0.0 && rel > sweep };
        if inside {
            let kernel = -pd.pole / x;
            if kernel.re > 40.0 + pade.coeff_scale.ln().max(0.0) {
                return Err(SumError::QuadratureFailure {
                    reason: format!(
                        "branch continuation overflow: swept pole {:?} grows like e^{:.1}",
                        pd.pole, kernel.re
                    ),
                });
            }
            let term = C64::new(0.0, 2.0 * std::f64::consts::PI) * pd.residue * kernel.exp();
            correction += if sweep > 0.0 { term } else { -term };
        }
    }
    Ok((theta_eval, correction))
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, t);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
        nodes[i] = t;
        weights[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (nodes, weights)
}

struct PanelIntegrator {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PanelIntegrator {
    fn new() -> Self {
        let (nodes, weights) = gauss_legendre(16);
        PanelIntegrator { nodes, weights }
    }

    fn panel<F: Fn(f64) -> C64>(&self, f: &F, a: f64, b: f64) -> C64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut s = C64::new(0.0, 0.0);
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            s += f(mid + half * t) * *w;
        }
        s * half
    }

    /// Adaptive bisection: accept a panel when splitting changes it by
    /// less than the tolerance. `budget` caps the total refinement count
    /// so a hostile integrand degrades the error estimate instead of
    /// hanging.
    #[allow(clippy::too_many_arguments)]
    fn adaptive<F: Fn(f64) -> C64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        depth: usize,
        err: &mut f64,
        budget: &mut isize,
    ) -> C64 {
        let whole = self.panel(f, a, b);
        let mid = 0.5 * (a + b);
        let split = self.panel(f, a, mid) + self.panel(f, mid, b);
        let diff = (whole - split).norm();
        *budget -= 3;
        if diff <= tol || depth >= 24 || *budget <= 0 {
            *err += diff;
            return split;
        }
        self.adaptive(f, a, mid, tol * 0.5, depth + 1, err, budget)
            + self.adaptive(f, mid, b, tol * 0.5, depth + 1, err, budget)
    }
}

/// Directional Laplace sum of a Borel series at one point.
///
/// Returns `f_0 + int_0^(inf e^(i ray)) P(z) e^(-z/x) dz` where `P` is the
/// Pade continuation and `ray` is `theta` or its pole-free rotation. The
/// integrand is truncated where the kernel has decayed below `1e-18` of its
/// peak; the error estimate collects panel discrepancies and the tail bound.
pub fn laplace_sum(
    b: &BorelSeries,
    theta: f64,
    x: C64,
    cfg: &SumConfig,
) -> Result<SumValue, SumError> {
    let coeffs = borel_coeff_slice(b);
    let (l, m) = cfg.pade.unwrap_or_else(|| default_pade_degrees_for(coeffs.len()));
    let pade = Pade::fit(&coeffs, l, m)?;
    laplace_sum_with(&pade, b.constant, theta, x, cfg)
}

/// As [`laplace_sum`], with a prepared continuation (possibly from
/// [`pade_exact`]) and an explicit re-added constant.
pub fn laplace_sum_with(
    pade: &Pade,
    constant: C64,
    theta: f64,
    x: C64,
    cfg: &SumConfig,
) -> Result<SumValue, SumError> {
    if x.norm() == 0.0 {
        return Err(SumError::InvalidInput("x must be nonzero".into()));
    }
    let (ray, correction) = choose_ray(theta, x, pade, cfg)?;

    let kappa = (ray - x.arg()).cos() / x.norm();
    if kappa <= 0.0 {
        return Err(SumError::QuadratureFailure {
            reason: format!(
                "no kernel decay along ray {ray} for x with argument {} (cos = {})",
                x.arg(),
                (ray - x.arg()).cos()
            ),
        });
    }
    let dir = C64::new(ray.cos(), ray.sin());
    let integrand = move |t: f64| -> C64 {
        let z = dir * t;
        pade.eval(z) * (-z / x).exp() * dir
    };

    let scale_len = 1.0 / kappa;
    let integ = PanelIntegrator::new();
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0f64;
    let mut a = 0.0f64;
    let mut width = 0.25 * scale_len;
    let peak = {
        // Magnitude reference probed along the ray; the integrand may
        // vanish at the origin, so sample several decay lengths out.
        [1e-3, 0.1, 0.3, 1.0, 2.0, 4.0]
            .iter()
            .map(|f| integrand(f * scale_len).norm())
            .fold(1e-300f64, f64::max)
    };
    let mut accepted = 0usize;
    let mut budget: isize = 200_000;
    loop {
        let bnd = a + width;
        let tol = cfg.quad_rel_tol * peak * scale_len;
        total += integ.adaptive(&integrand, a, bnd, tol, 0, &mut err, &mut budget);
        a = bnd;
        width *= 1.6;
        accepted += 1;
        let here = integrand(a).norm();
        if here < 1e-18 * peak {
            // Tail bound: |P| roughly constant at its boundary value.
            err += here / kappa;
            break;
        }
        if accepted > 120 {
            return Err(SumError::QuadratureFailure {
                reason: "integrand failed to decay within the panel budget".into(),
            });
        }
    }
    let value = total + correction + constant;
    Ok(SumValue { value_re: value.re, value_im: value.im, error_estimate: err, ray_used: ray })
}

fn borel_coeff_slice(b: &BorelSeries) -> Vec<C64> {
    let n = b.coeffs.trunc_order();
    (0..=n).map(|k| b.coeffs.coeff(k)).collect()
}

/// `[ceil(n/2) / floor(n/2)]` degrees from an available coefficient count.
pub fn default_pade_degrees_for(len: usize) -> (usize, usize) {
    let h = (len.saturating_sub(1)) / 2;
    (len.saturating_sub(1) - h, h)
}

/// Sample a directional sum over several `x` values on the ray of
/// direction `phase` (each sample at `r * e^(i phase)`).
pub fn directional_sum(
    b: &BorelSeries,
    theta: f64,
    xs: &[C64],
    cfg: &SumConfig,
) -> Result<DirectionalSum, SumError> {
    let mut samples = Vec::with_capacity(xs.len());
    let mut err = 0.0f64;
    for &x in xs {
        let v = laplace_sum(b, theta, x, cfg)?;
        samples.push((x.re, x.im, v.value_re, v.value_im));
        err = err.max(v.error_estimate);
    }
    Ok(DirectionalSum { theta, samples, quadrature_error_estimate: err })
}

/// Difference of the two lateral sums across a singular direction:
/// `(sum at theta + eps) - (sum at theta - eps)`.
///
/// Rotation is disabled so that each lateral value is taken on its own
/// side of the singular ray.
pub fn lateral_jump(
    b: &BorelSeries,
    theta: f64,
    eps: f64,
    x: C64,
    cfg: &SumConfig,
) -> Result<SumValue, SumError> {
    let mut side_cfg = *cfg;
    side_cfg.allow_rotation = false;
    let plus = laplace_sum(b, theta + eps, x, &side_cfg)?;
    let minus = laplace_sum(b, theta - eps, x, &side_cfg)?;
    let v = plus.value() - minus.value();
    Ok(SumValue {
        value_re: v.re,
        value_im: v.im,
        error_estimate: plus.error_estimate + minus.error_estimate,
        ray_used: theta,
    })
}

/// Default half-angle for lateral jumps.
pub const LATERAL_EPS: f64 = 0.05;

/// Growth certificate `|f_k| <= A C^k k!` for a coefficient sequence.
#[derive(Debug, Clone, Serialize)]
pub struct GevreyCertificate {
    pub a: f64,
    pub c: f64,
    /// RMS residual of the log-space least-squares fit (before inflating
    /// `A` to cover every supplied coefficient).
    pub fit_residual: f64,
    /// Whether the sequence looks Gevrey-1 at all; large residuals mean
    /// the growth model itself is wrong (for instance `(k!)^2`).
    pub gevrey1_plausible: bool,
}

/// Residual threshold beyond which the Gevrey-1 model is flagged implausible.
pub const GEVREY_RESIDUAL_LIMIT: f64 = 1.0;

/// Least-squares fit of `log|f_k| - log k!` against `k log C + log A`,
/// then `A` is inflated so the bound holds for every supplied `k`.
pub fn gevrey_fit(coeffs: &[C64]) -> Result<GevreyCertificate, SumError> {
    if coeffs.len() < 6 {
        return Err(SumError::InvalidInput(format!(
            "need at least 6 coefficients, got {}",
            coeffs.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut logfact = 0.0f64;
    for (k, c) in coeffs.iter().enumerate() {
        if k > 0 {
            logfact += (k as f64).ln();
        }
        let mag = c.norm();
        if mag > 0.0 {
            pts.push((k as f64, mag.ln() - logfact));
        }
    }
    if pts.len() < 3 {
        return Err(SumError::InvalidInput("too many zero coefficients to fit".into()));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residual = (pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    // Inflate A so |f_k| <= A C^k k! holds for every supplied k.
    let log_a = pts
        .iter()
        .map(|p| p.1 - slope * p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GevreyCertificate {
        a: log_a.exp(),
        c: slope.exp(),
        fit_residual: residual,
        gevrey1_plausible: residual <= GEVREY_RESIDUAL_LIMIT,
    })
}

/// The factorial series `sum_k k! x^(k+1)` truncated at `order`, whose
/// Borel transform is the truncated geometric series (pole at `z = 1`).
pub fn euler_series(order: usize) -> UniSeries<C64> {
    let mut s = UniSeries::zero(order);
    let mut f = 1.0f64;
    for n in 0..order {
        s.set_coeff(n + 1, C64::new(f, 0.0));
        f *= (n + 1) as f64;
    }
    s
}

/// The alternating factorial series `sum_k (-1)^k k! x^(k+1)`, the formal
/// solution of `x^2 y' + y = x`; its exact sum for `Re(1/x) > 0` is
/// `int_0^inf e^(-t/x) / (1+t) dt`.
pub fn euler_series_alternating(order: usize) -> UniSeries<C64> {
    let mut s = UniSeries::zero(order);
    let mut f = 1.0f64;
    for n in 0..order {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        s.set_coeff(n + 1, C64::new(sign * f, 0.0));
        f *= (n + 1) as f64;
    }
    s
}

/// Quadrature evaluation of `int_0^inf e^(-t/x)/(1+t) dt` for `Re(1/x) > 0`,
/// used as the independent oracle for the alternating factorial series.
pub fn euler_exact_integral(x: C64) -> C64 {
    let integ = PanelIntegrator::new();
    let kappa = (1.0 / x).re;
    assert!(kappa > 0.0, "oracle integral needs Re(1/x) > 0");
    let f = |t: f64| (-C64::new(t, 0.0) / x).exp() / C64::new(1.0 + t, 0.0);
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    let mut a = 0.0f64;
    let mut w = 0.25 / kappa;
    let mut budget: isize = 200_000;
    loop {
        total += integ.adaptive(&f, a, a + w, 1e-16 / kappa, 0, &mut err, &mut budget);
        a += w;
        w *= 1.6;
        if (-a * kappa).exp() < 1e-20 {
            break;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn borel_examples() {
        // Factorial series -> all-ones geometric coefficients.
        let b = borel_transform(&euler_series(8));
        for k in 0..=6 {
            assert!((b.coeffs.coeff(k) - C64::new(1.0, 0.0)).norm() < 1e-12, "k={k}");
        }
        // f = x -> constant 1; f = x^2 -> z.
        let mut f = UniSeries::zero(3);
        f.set_coeff(1, C64::new(1.0, 0.0));
        let b = borel_transform(&f);
        assert!((b.coeffs.coeff(0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(b.coeffs.coeff(1).norm() < 1e-15);

        let mut f = UniSeries::zero(3);
        f.set_coeff(2, C64::new(1.0, 0.0));
        let b = borel_transform(&f);
        assert!(b.coeffs.coeff(0).norm() < 1e-15);
        assert!((b.coeffs.coeff(1) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn laplace_of_unit_borel_is_x() {
        // Borel function identically 1 sums back to x.
        let mut f = UniSeries::zero(6);
        f.set_coeff(1, C64::new(1.0, 0.0));
        let b = borel_transform(&f);
        for &xr in &[0.05, 0.3, 1.0] {
            let x = C64::new(xr, 0.0);
            let v = laplace_sum(&b, 0.0, x, &SumConfig::default()).unwrap();
            assert!(
                (v.value() - x).norm() < 1e-10 * xr.max(1e-10),
                "x={xr}, got {:?}",
                v.value()
            );
        }
    }

    #[test]
    fn alternating_euler_matches_exact_integral() {
        let b = borel_transform(&euler_series_alternating(24));
        for &xr in &[0.05, 0.1, 0.2] {
            let x = C64::new(xr, 0.0);
            let exact = euler_exact_integral(x);
            // theta = pi/2 sits on the convergence boundary; the pole-free
            // rotation toward arg(x) = 0 must recover the exact value.
            let v = laplace_sum(&b, std::f64::consts::FRAC_PI_2, x, &SumConfig::default()).unwrap();
            let rel = (v.value() - exact).norm() / exact.norm();
            assert!(rel <= 1e-6, "x={xr}: rel error {rel:.3e}");
        }
    }

    #[test]
    fn euler_pole_on_positive_ray() {
        let b = borel_transform(&euler_series(24));
        let err = laplace_sum(&b, 0.0, C64::new(0.1, 0.0), &SumConfig::default()).unwrap_err();
        match err {
            SumError::PoleOnRay { pole, .. } => {
                assert!((pole - C64::new(1.0, 0.0)).norm() < 1e-6, "pole at {pole:?}");
            }
            e => panic!("expected PoleOnRay, got {e:?}"),
        }
    }

    #[test]
    fn lateral_jump_matches_residue_theorem() {
        // Jump of the factorial series across theta = 0:
        // (sum above) - (sum below) = -2 pi i Res_{z=1} P(z) e^{-z/x}
        //                           = +2 pi i e^{-1/x}.
        let b = borel_transform(&euler_series(28));
        for &xr in &[0.08, 0.1, 0.15] {
            let x = C64::new(xr, 0.0);
            let jump = lateral_jump(&b, 0.0, LATERAL_EPS, x, &SumConfig::default()).unwrap();
            let expect = C64::new(0.0, 2.0 * std::f64::consts::PI) * (-1.0 / x).exp();
            let rel = (jump.value() - expect).norm() / expect.norm();
            assert!(rel <= 1e-5, "x={xr}: rel error {rel:.3e}, got {:?}", jump.value());
        }
    }

    #[test]
    fn polynomial_borel_has_zero_jump() {
        // Entire Borel image: no singular direction, zero jump.
        let mut f = UniSeries::zero(8);
        f.set_coeff(1, C64::new(2.0, 0.0));
        f.set_coeff(3, C64::new(-0.5, 1.0));
        let b = borel_transform(&f);
        let jump = lateral_jump(&b, 0.0, LATERAL_EPS, C64::new(0.2, 0.0), &SumConfig::default())
            .unwrap();
        assert!(jump.value().norm() < 1e-10);
    }

    #[test]
    fn scaled_euler_jump() {
        // Singularity moved to z = 2: coefficients n!/2^(n+1) at x^(n+1),
        // Borel image 1/(2 - z), residue -1 at z = 2;
        // jump = -2 pi i Res e^{-2/x} = +2 pi i e^{-2/x}.
        let order = 28;
        let mut f = UniSeries::zero(order);
        let mut fact = 1.0f64;
        for n in 0..order {
            let k = n + 1;
            f.set_coeff(k, C64::new(fact / 2f64.powi(k as i32), 0.0));
            fact *= (n + 1) as f64;
        }
        let b = borel_transform(&f);
        let x = C64::new(0.25, 0.0);
        let jump = lateral_jump(&b, 0.0, LATERAL_EPS, x, &SumConfig::default()).unwrap();
        let expect = C64::new(0.0, 2.0 * std::f64::consts::PI) * (-2.0 / x).exp();
        let rel = (jump.value() - expect).norm() / expect.norm();
        assert!(rel <= 1e-5, "rel error {rel:.3e}");
    }

    #[test]
    fn direction_independence_in_regular_arc() {
        let b = borel_transform(&euler_series_alternating(24));
        let x = C64::new(0.1, 0.02);
        let cfg = SumConfig { allow_rotation: false, ..Default::default() };
        let v1 = laplace_sum(&b, 0.15, x, &cfg).unwrap();
        let v2 = laplace_sum(&b, 0.55, x, &cfg).unwrap();
        assert!((v1.value() - v2.value()).norm() < 1e-9);
    }

    #[test]
    fn composition_of_sums() {
        // g = e / (1 - e) composed formally agrees, after summation, with
        // the pointwise composition of the sums.
        let order = 24;
        let e = euler_series_alternating(order);
        // Formal composition z/(1-z) o e via Horner in e.
        let mut comp = UniSeries::zero(order);
        for _ in 0..order {
            comp = comp.mul(&e);
            // acc = acc*e + e  builds e + e^2 + ...
            comp = comp.add(&e);
        }
        let be = borel_transform(&e);
        let bg = borel_transform(&comp);
        let cfg = SumConfig::default();
        for &xr in &[0.04, 0.08] {
            let x = C64::new(xr, 0.0);
            let se = laplace_sum(&be, 0.3, x, &cfg).unwrap().value();
            let sg = laplace_sum(&bg, 0.3, x, &cfg).unwrap().value();
            let composed = se / (C64::new(1.0, 0.0) - se);
            let rel = (sg - composed).norm() / composed.norm();
            assert!(rel <= 1e-5, "x={xr}: rel {rel:.3e}");
        }
    }

    #[test]
    fn borel_transform_is_linear() {
        let mut f = UniSeries::zero(10);
        let mut g = UniSeries::zero(10);
        for k in 1..=10 {
            f.set_coeff(k, C64::new(k as f64, -(k as f64) / 3.0));
            g.set_coeff(k, C64::new(1.0 / k as f64, 2.0));
        }
        let bf = borel_transform(&f);
        let bg = borel_transform(&g);
        let bsum = borel_transform(&f.add(&g));
        for k in 0..=9 {
            let lhs = bsum.coeffs.coeff(k);
            let rhs = bf.coeffs.coeff(k) + bg.coeffs.coeff(k);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn gevrey_fit_examples() {
        // f_k = k!: A = 1, C = 1.
        let mut fact = 1.0f64;
        let mut seq = Vec::new();
        for k in 0..12 {
            if k > 0 {
                fact *= k as f64;
            }
            seq.push(C64::new(fact, 0.0));
        }
        let cert = gevrey_fit(&seq).unwrap();
        assert!((cert.a - 1.0).abs() < 1e-6 && (cert.c - 1.0).abs() < 1e-6);
        assert!(cert.gevrey1_plausible);

        // f_k = 2^k k!: C = 2.
        let mut fact = 1.0f64;
        let mut seq = Vec::new();
        for k in 0..12 {
            if k > 0 {
                fact *= k as f64;
            }
            seq.push(C64::new(fact * 2f64.powi(k), 0.0));
        }
        let cert = gevrey_fit(&seq).unwrap();
        assert!((cert.c - 2.0).abs() < 1e-6, "C = {}", cert.c);

        // f_k = (k!)^2 is not Gevrey-1.
        let mut fact = 1.0f64;
        let mut seq = Vec::new();
        for k in 0..14 {
            if k > 0 {
                fact *= k as f64;
            }
            seq.push(C64::new(fact * fact, 0.0));
        }
        let cert = gevrey_fit(&seq).unwrap();
        assert!(!cert.gevrey1_plausible, "residual {}", cert.fit_residual);

        // Certified bound holds for all supplied k after inflation.
        let mut fact = 1.0f64;
        for (k, c) in seq.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            assert!(c.norm() <= cert.a * cert.c.powi(k as i32) * fact * (1.0 + 1e-9));
        }
    }

    #[test]
    fn pade_reconstructs_rational() {
        // Geometric series: [L/1] Pade is exactly 1/(1-z).
        let coeffs: Vec<C64> = (0..8).map(|_| C64::new(1.0, 0.0)).collect();
        let p = Pade::fit(&coeffs, 3, 3).unwrap();
        for &z in &[C64::new(0.3, 0.1), C64::new(-2.0, 0.4)] {
            let exact = C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) - z);
            assert!((p.eval(z) - exact).norm() < 1e-9, "at {z:?}");
        }
        let poles = p.poles();
        assert!(poles.iter().any(|q| (q - C64::new(1.0, 0.0)).norm() < 1e-6));
    }
}
