//! Hyperbolic geometry of the Poincaré disk, the SL(2,R) Möbius action and
//! the adjustment maps used to steer disk sections.

use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DET_TOL: f64 = 1e-12;
pub const DISK_MARGIN: f64 = 1e-12;
/// Products longer than this are rescaled back to determinant one.
pub const RENORM_EVERY: usize = 1000;

/// Real 2×2 matrix, rows `(a b; c d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    /// Checked constructor: entries finite and determinant one within `DET_TOL`.
    pub fn unimodular(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let m = Mat2 { a, b, c, d };
        m.check_unimodular()?;
        Ok(m)
    }

    pub fn check_unimodular(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::Input(format!("non-finite matrix entries {self:?}")));
        }
        let det = self.det();
        if (det - 1.0).abs() > DET_TOL * (1.0 + self.frobenius_sq()) {
            return Err(Error::Input(format!("determinant {det} is not 1")));
        }
        Ok(())
    }

    /// R_θ = (cos θ, −sin θ; sin θ, cos θ).
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    /// H_λ = diag(λ, 1/λ).
    pub fn hyperbolic(lambda: f64) -> Self {
        Mat2::new(lambda, 0.0, 0.0, 1.0 / lambda)
    }

    /// D_t = diag(e^t, e^−t).
    pub fn diag_exp(t: f64) -> Self {
        Mat2::new(t.exp(), 0.0, 0.0, (-t).exp())
    }

    /// S(t) = (t, −1; 1, 0), the Schrödinger form.
    pub fn schrodinger(t: f64) -> Self {
        Mat2::new(t, -1.0, 1.0, 0.0)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    fn frobenius_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    /// Adjugate; the inverse for unimodular matrices.
    pub fn inv(&self) -> Self {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    /// Inverse for any invertible matrix.
    pub fn inv_general(&self) -> Self {
        let det = self.det();
        Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det)
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn add(&self, o: &Mat2) -> Self {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }

    pub fn sub(&self, o: &Mat2) -> Self {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }

    /// Spectral (operator) norm.
    pub fn norm(&self) -> f64 {
        let q = (self.a + self.d).hypot(self.c - self.b);
        let r = (self.a - self.d).hypot(self.b + self.c);
        0.5 * (q + r)
    }

    /// Smallest singular value.
    pub fn min_singular(&self) -> f64 {
        let q = (self.a + self.d).hypot(self.c - self.b);
        let r = (self.a - self.d).hypot(self.b + self.c);
        0.5 * (q - r).abs()
    }

    /// Operator-norm distance.
    pub fn dist(&self, o: &Mat2) -> f64 {
        self.sub(o).norm()
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        (self.a - o.a)
            .abs()
            .max((self.b - o.b).abs())
            .max((self.c - o.c).abs())
            .max((self.d - o.d).abs())
    }

    /// Rescale by (det)^{-1/2}; requires positive determinant.
    pub fn normalized(&self) -> Result<Self> {
        let det = self.det();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Degenerate(format!(
                "cannot normalize matrix with determinant {det}"
            )));
        }
        Ok(self.scale(1.0 / det.sqrt()))
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Deviation from orthogonality, ‖MᵀM − Id‖ in max-entry form.
    pub fn orthogonality_defect(&self) -> f64 {
        let g = self.transpose() * *self;
        g.max_abs_diff(&Mat2::IDENTITY)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

/// Ordered product `mats[n−1] ⋯ mats[0]`, renormalized along the way.
pub fn ordered_product(mats: &[Mat2]) -> Mat2 {
    let mut p = Mat2::IDENTITY;
    for (k, m) in mats.iter().enumerate() {
        p = *m * p;
        if (k + 1) % RENORM_EVERY == 0 {
            p = renormalize(p);
        }
    }
    p
}

/// Divide by √det when it is positive; otherwise return unchanged.
pub fn renormalize(m: Mat2) -> Mat2 {
    let det = m.det();
    if det > 0.0 && det.is_finite() {
        m.scale(1.0 / det.sqrt())
    } else {
        m
    }
}

/// Point of the open unit disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskPoint(pub Complex64);

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint(Complex64::new(0.0, 0.0));

    pub fn new(z: Complex64) -> Result<Self> {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::Input(format!("non-finite disk point {z}")));
        }
        if z.norm() >= 1.0 - DISK_MARGIN {
            return Err(Error::Input(format!(
                "point {z} is not inside the open unit disk"
            )));
        }
        Ok(DiskPoint(z))
    }

    pub fn from_re_im(re: f64, im: f64) -> Result<Self> {
        DiskPoint::new(Complex64::new(re, im))
    }

    pub fn z(&self) -> Complex64 {
        self.0
    }

    pub fn re(&self) -> f64 {
        self.0.re
    }

    pub fn im(&self) -> f64 {
        self.0.im
    }
}

/// Disk → upper half-plane, w = (−iz − i)/(z − 1).
pub fn cayley_to_half_plane(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    (-i * z - i) / (z - 1.0)
}

/// Upper half-plane → disk, z = (w − i)/(w + i).
pub fn cayley_to_disk(w: Complex64) -> Complex64 {
    let i = Complex64::i();
    (w - i) / (w + i)
}

/// Half-plane action w ↦ (aw + b)/(cw + d).
pub fn mobius_half_plane(m: &Mat2, w: Complex64) -> Complex64 {
    (w * m.a + m.b) / (w * m.c + m.d)
}

/// Coefficients of the disk Möbius map obtained by conjugating the half-plane
/// action with the Cayley map.
fn disk_coefficients(m: &Mat2) -> [Complex64; 4] {
    let s = m.a + m.d;
    let t = m.a - m.d;
    let u = m.b + m.c;
    let v = m.c - m.b;
    [
        Complex64::new(v, s),
        Complex64::new(u, t),
        Complex64::new(-u, t),
        Complex64::new(-v, s),
    ]
}

/// Action of SL(2,R) on the disk by isometries.
pub fn mobius_disk(m: &Mat2, z: DiskPoint) -> Result<DiskPoint> {
    let w = mobius_disk_raw(m, z.0);
    DiskPoint::new(w).map_err(|_| {
        Error::Degenerate(format!(
            "image {w} of {} under {m:?} leaves the disk",
            z.0
        ))
    })
}

pub(crate) fn mobius_disk_raw(m: &Mat2, z: Complex64) -> Complex64 {
    let [p, q, r, t] = disk_coefficients(m);
    (p * z + q) / (r * z + t)
}

fn artanh_clamped(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0 - f64::EPSILON);
    0.5 * ((1.0 + r) / (1.0 - r)).ln()
}

/// Pseudo-chordal quantity |(z1 − z2)/(1 − conj(z1) z2)|.
fn pseudo_chordal(z1: Complex64, z2: Complex64) -> f64 {
    let num = (z1 - z2).norm();
    if num == 0.0 {
        return 0.0;
    }
    num / (Complex64::new(1.0, 0.0) - z1.conj() * z2).norm()
}

/// Hyperbolic distance for the metric 2|v|/(1 − |z|²).
pub fn hyp_dist(z1: DiskPoint, z2: DiskPoint) -> f64 {
    2.0 * artanh_clamped(pseudo_chordal(z1.0, z2.0))
}

/// Distance to the origin, 2 artanh |z|.
pub fn dist_to_origin(z: DiskPoint) -> f64 {
    2.0 * artanh_clamped(z.0.norm())
}

/// `A = R_β H_λ R_α` with λ ≥ 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarDecomposition {
    pub beta: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl PolarDecomposition {
    pub fn matrix(&self) -> Mat2 {
        Mat2::rotation(self.beta) * Mat2::hyperbolic(self.lambda) * Mat2::rotation(self.alpha)
    }
}

pub fn polar_decompose(m: &Mat2) -> PolarDecomposition {
    let e = 0.5 * (m.a + m.d);
    let f = 0.5 * (m.a - m.d);
    let g = 0.5 * (m.c + m.b);
    let h = 0.5 * (m.c - m.b);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let a2 = h.atan2(e);
    if r <= f64::EPSILON * q {
        return PolarDecomposition {
            beta: a2,
            lambda: 1.0,
            alpha: 0.0,
        };
    }
    let a1 = g.atan2(f);
    let sx = q + r;
    let sy = q - r;
    // Rescale so that the two singular values multiply to one exactly.
    let lambda = (sx / sy).sqrt();
    PolarDecomposition {
        beta: 0.5 * (a2 + a1),
        lambda,
        alpha: 0.5 * (a2 - a1),
    }
}

/// Orthogonal polar factor R_{β+α}; a deformation retract SL(2,R) → SO(2,R).
pub fn retract_so2(m: &Mat2) -> Mat2 {
    Mat2::rotation(retract_angle(m))
}

/// Angle β + α of the orthogonal polar factor, in (−π, π].
pub fn retract_angle(m: &Mat2) -> f64 {
    (m.c - m.b).atan2(m.a + m.d)
}

/// Foot of the hyperbolic perpendicular from `p` to the real diameter.
fn foot_on_real_diameter(p: Complex64) -> f64 {
    let r2 = p.norm_sqr();
    let s = 1.0 + r2;
    let disc = (s * s - 4.0 * p.re * p.re).max(0.0).sqrt();
    2.0 * p.re / (s + disc)
}

/// Hyperbolic translation along the diameter with endpoints ±u sending the
/// foot of `p1` to the foot of `p2`; it maps `p1` to `p2` and
/// ‖Φ − Id‖ ≤ e^{d(p1,p2)/2} − 1.
pub fn phi_adjust(p1: DiskPoint, p2: DiskPoint) -> Result<Mat2> {
    let (z1, z2) = (p1.0, p2.0);
    if z1 == z2 {
        return Ok(Mat2::IDENTITY);
    }
    let cross = z1.re * z2.im - z1.im * z2.re;
    let u = if cross.abs() < 1e-12 {
        let v = if z1.norm() >= z2.norm() { z1 } else { z2 };
        v / v.norm()
    } else {
        // Center c of the circle through p1, p2 and antipodal ±u satisfies
        // 2⟨c, p_k⟩ = |p_k|² − 1 and ⟨c, u⟩ = 0.
        let r1 = 0.5 * (z1.norm_sqr() - 1.0);
        let r2 = 0.5 * (z2.norm_sqr() - 1.0);
        let cx = (r1 * z2.im - r2 * z1.im) / cross;
        let cy = (z1.re * r2 - z2.re * r1) / cross;
        let c = Complex64::new(cx, cy);
        Complex64::i() * c / c.norm()
    };
    let build = |u: Complex64| -> Mat2 {
        let x1 = foot_on_real_diameter(z1 * u.conj());
        let x2 = foot_on_real_diameter(z2 * u.conj());
        let half = artanh_clamped(x2.abs()) * x2.signum() - artanh_clamped(x1.abs()) * x1.signum();
        let theta = -0.5 * u.arg();
        let (lambda, theta) = if half >= 0.0 {
            (half.exp(), theta)
        } else {
            ((-half).exp(), theta - 0.5 * std::f64::consts::PI)
        };
        Mat2::rotation(theta) * Mat2::hyperbolic(lambda) * Mat2::rotation(-theta)
    };
    let m = build(u);
    let err = (mobius_disk_raw(&m, z1) - z2).norm();
    if err > 1e-8 {
        let alt = build(-u);
        let alt_err = (mobius_disk_raw(&alt, z1) - z2).norm();
        if alt_err < err {
            return Ok(alt);
        }
    }
    Ok(m)
}

/// Point at fraction `t` of the geodesic segment from `z1` to `z2`.
pub fn geodesic_point(z1: DiskPoint, z2: DiskPoint, t: f64) -> Result<DiskPoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Input(format!("geodesic fraction {t} outside [0,1]")));
    }
    let one = Complex64::new(1.0, 0.0);
    let a = z1.0;
    let w = (z2.0 - a) / (one - a.conj() * z2.0);
    let r = w.norm();
    if r == 0.0 {
        return Ok(z1);
    }
    let rt = (t * artanh_clamped(r)).tanh();
    let wt = w * (rt / r);
    let back = (wt + a) / (one + a.conj() * wt);
    DiskPoint::new(back)
}

/// Perturb `mats = (A_1, …, A_n)` so that the product sends `p` to `q`,
/// spreading the correction evenly along the geodesic from A_n⋯A_1·p to `q`.
pub fn psi_adjust(mats: &[Mat2], p: DiskPoint, q: DiskPoint) -> Result<Vec<Mat2>> {
    let factors = psi_factors(mats, p, q)?;
    Ok(factors.iter().zip(mats).map(|(f, a)| *f * *a).collect())
}

/// The left factors Φ_k of [`psi_adjust`], so that the adjusted matrices are
/// Φ_k·A_k. Each Φ_k is exactly the identity when no correction is needed.
pub fn psi_factors(mats: &[Mat2], p: DiskPoint, q: DiskPoint) -> Result<Vec<Mat2>> {
    let n = mats.len();
    if n == 0 {
        return Err(Error::Input("psi_adjust needs at least one matrix".into()));
    }
    // tails[i] = A_n ⋯ A_{i+1}, tails[n] = Id.
    let mut tails = vec![Mat2::IDENTITY; n + 1];
    for i in (0..n).rev() {
        let mut t = tails[i + 1] * mats[i];
        if (n - i).is_multiple_of(RENORM_EVERY) {
            t = renormalize(t);
        }
        tails[i] = t;
    }
    let w0 = mobius_disk(&tails[0], p)?;
    let mut out = Vec::with_capacity(n);
    let mut prev = p;
    for i in 1..=n {
        let zi = if i == n {
            q
        } else {
            let wi = geodesic_point(w0, q, i as f64 / n as f64)?;
            mobius_disk(&tails[i].inv(), wi)?
        };
        let moved = mobius_disk(&mats[i - 1], prev)?;
        out.push(phi_adjust(moved, zi)?);
        prev = zi;
    }
    Ok(out)
}

/// Apply an ordered list of matrices to a disk point.
pub fn push_through(mats: &[Mat2], p: DiskPoint) -> Result<DiskPoint> {
    let mut z = p;
    for m in mats {
        z = mobius_disk(m, z)?;
    }
    Ok(z)
}
