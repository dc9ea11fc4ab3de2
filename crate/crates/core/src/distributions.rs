//! Seeded sampling plus CDF/quantile evaluation for the Gaussian and
//! Student-t families.
//!
//! All sampling goes through [`UniformStream`], and every variate is produced
//! by pushing one open-interval uniform through a quantile function. Equal
//! seeds therefore give equal uniforms, and equal uniforms map monotonically to
//! equal (or ordered) variates in every family, which is what makes common
//! random numbers exact across thresholds and degrees of freedom.

use std::f64::consts::{PI, SQRT_2};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Bracketed Newton tolerance for Student-t inversion.
pub const T_QUANTILE_TOL: f64 = 1e-10;

/// Master or derived 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives an independent substream seed as a pure function of this seed
    /// and `parts`. Different part lists give unrelated streams.
    pub fn derive(self, parts: &[u64]) -> Seed {
        let mut h = splitmix64(self.0 ^ 0x5DEE_CE66_D1CE_4E5B);
        for (i, &p) in parts.iter().enumerate() {
            h = splitmix64(h ^ splitmix64(p.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN))));
        }
        Seed(h)
    }

    pub fn stream(self) -> UniformStream {
        UniformStream::new(self)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream of uniforms on the open interval (0, 1), backed by ChaCha8.
#[derive(Debug, Clone)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: Seed) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed.0),
        }
    }

    /// Midpoint of one of 2^52 equal cells, so never 0 or 1.
    pub fn next_open01(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 52) as f64;
        ((self.rng.next_u64() >> 12) as f64 + 0.5) * SCALE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl NormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain(format!("normal location must be finite, got {mu}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("normal scale must be positive, got {sigma}")));
        }
        Ok(Self { mu, sigma })
    }
}

/// `loc + scale * T` with `T` unit-scale Student-t on `nu` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTParams {
    pub nu: f64,
    pub loc: f64,
    pub scale: f64,
}

impl StudentTParams {
    pub fn new(nu: f64, loc: f64, scale: f64) -> Result<Self> {
        if !(nu > 2.0) {
            return Err(Error::domain(format!(
                "Student-t degrees of freedom must exceed 2, got {nu}"
            )));
        }
        if !loc.is_finite() {
            return Err(Error::domain(format!("Student-t location must be finite, got {loc}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("Student-t scale must be positive, got {scale}")));
        }
        Ok(Self { nu, loc, scale })
    }

    pub fn variance(&self) -> f64 {
        self.scale * self.scale * self.nu / (self.nu - 2.0)
    }
}

fn check_probability(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("probability must lie in (0, 1), got {u}")))
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Upper tail `P(Z > z)`, accurate far into the right tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(u: f64) -> Result<f64> {
    check_probability(u)?;
    Ok(std_normal_inv(u))
}

/// Quantile for `u` already known to be in (0, 1).
pub(crate) fn std_normal_inv(u: f64) -> f64 {
    if u > 0.5 {
        // 1 - u is exact for u in (0.5, 1).
        -lower_normal_inv(1.0 - u)
    } else {
        lower_normal_inv(u)
    }
}

// Acklam's rational approximation followed by one Halley step against erfc.
fn lower_normal_inv(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_671_071_680_43,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p == 0.5 {
        return 0.0;
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Regularized incomplete beta `I_x(a, b)`, taking `y = 1 - x` separately so
/// callers can pass a complement computed without cancellation.
pub(crate) fn reg_inc_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, y) / b
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

// Modified Lentz evaluation of the incomplete-beta continued fraction. The
// iteration cap is generous because convergence takes O(sqrt(max(a, b)))
// terms, and very large degrees of freedom are a supported input.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 20_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = d.recip();
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = d.recip();
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = d.recip();
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Density of the unit-scale Student-t.
pub fn student_t_pdf(nu: f64, t: f64) -> f64 {
    let ln_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (ln_norm - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()).exp()
}

/// `P(T > t)` for `t >= 0`.
fn student_t_upper_tail(nu: f64, t: f64) -> f64 {
    let t2 = t * t;
    let x = nu / (nu + t2);
    let y = t2 / (nu + t2);
    0.5 * reg_inc_beta(0.5 * nu, 0.5, x, y)
}

/// CDF of the unit-scale Student-t.
pub fn student_t_cdf(nu: f64, t: f64) -> f64 {
    if t == 0.0 {
        0.5
    } else if t > 0.0 {
        1.0 - student_t_upper_tail(nu, t)
    } else {
        student_t_upper_tail(nu, -t)
    }
}

/// Quantile of the unit-scale Student-t with `nu > 0` degrees of freedom.
pub fn student_t_quantile(nu: f64, u: f64) -> Result<f64> {
    if !(nu > 0.0) || nu.is_nan() {
        return Err(Error::domain(format!("degrees of freedom must be positive, got {nu}")));
    }
    check_probability(u)?;
    Ok(t_inv(nu, u))
}

pub(crate) fn t_inv(nu: f64, u: f64) -> f64 {
    if u == 0.5 {
        return 0.0;
    }
    let (p, sign) = if u < 0.5 { (u, -1.0) } else { (1.0 - u, 1.0) };
    sign * t_upper_inv(nu, p)
}

/// Positive `t` with `P(T > t) = p`, for `0 < p < 1/2`.
fn t_upper_inv(nu: f64, p: f64) -> f64 {
    if nu == 1.0 {
        return (PI * p).tan().recip();
    }
    if nu == 2.0 {
        return (1.0 - 2.0 * p) / (2.0 * p * (1.0 - p)).sqrt();
    }
    let z = -lower_normal_inv(p);
    if nu > 1e12 {
        return z;
    }

    // Cornish-Fisher expansion of t in terms of z as the starting point.
    let z2 = z * z;
    let g1 = (z2 + 1.0) * z / 4.0;
    let g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0;
    let g3 = (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) * z / 384.0;
    let g4 = ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) * z / 92160.0;
    let mut t = z + g1 / nu + g2 / nu.powi(2) + g3 / nu.powi(3) + g4 / nu.powi(4);
    if !(t.is_finite() && t > 0.0) {
        t = z.max(1.0);
    }

    // Bracket [lo, hi] with tail(lo) >= p > tail(hi).
    let mut lo = 0.0;
    let mut hi = t.max(1.0);
    while student_t_upper_tail(nu, hi) >= p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::MAX;
        }
    }
    if !(t > lo && t < hi) {
        t = 0.5 * (lo + hi);
    }

    for _ in 0..200 {
        let f = student_t_upper_tail(nu, t) - p;
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t + f / student_t_pdf(nu, t);
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - t).abs();
        t = next;
        if step <= T_QUANTILE_TOL * t.max(1.0) || hi - lo <= T_QUANTILE_TOL * t.max(1.0) {
            break;
        }
    }
    t
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::domain("sample count must be at least 1"))
    } else {
        Ok(())
    }
}

/// `n` i.i.d. draws from `N(mu, sigma^2)` by inverse-CDF transform.
pub fn sample_normal(params: NormalParams, n: usize, seed: Seed) -> Result<Vec<f64>> {
    check_count(n)?;
    let mut stream = seed.stream();
    Ok((0..n)
        .map(|_| params.mu + params.sigma * std_normal_inv(stream.next_open01()))
        .collect())
}

/// `n` i.i.d. draws of `loc + scale * T_nu` by inverse-CDF transform.
pub fn sample_student_t(params: StudentTParams, n: usize, seed: Seed) -> Result<Vec<f64>> {
    check_count(n)?;
    let mut stream = seed.stream();
    Ok((0..n)
        .map(|_| params.loc + params.scale * t_inv(params.nu, stream.next_open01()))
        .collect())
}
