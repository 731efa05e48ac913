//! Base dynamics: circle rotation, torus translation, skew-shift and odometer,
//! together with continued-fraction data and the castle of a rotation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GOLDEN: f64 = 0.618_033_988_749_894_9;
pub const SILVER: f64 = std::f64::consts::SQRT_2 - 1.0;

/// Largest convergent denominator scanned by the rationality check.
const RATIONAL_Q_MAX: i64 = 1_000_000;
const RATIONAL_ERR: f64 = 1e-15;

/// Fractional part in [0, 1).
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 { 0.0 } else { f }
}

/// Signed representative of `x` mod 1 in [−1/2, 1/2).
pub fn centered(x: f64) -> f64 {
    let f = frac(x + 0.5);
    f - 0.5
}

/// frac(n·x) for |n| < 2^53 using an exact two-product.
pub fn frac_mul(n: i64, x: f64) -> f64 {
    let nf = n as f64;
    let p = nf * x;
    let e = nf.mul_add(x, -p);
    frac(frac(p) + e)
}

/// frac(m·x) for arbitrary 128-bit `m`, splitting `m` into 26-bit limbs so
/// that every partial product is exact up to its two-product error term.
pub fn frac_mul_wide(m: i128, x: f64) -> f64 {
    let neg = m < 0;
    let mut rest = m.unsigned_abs();
    let mut scale = frac(x);
    let mut acc = 0.0;
    while rest > 0 {
        let limb = (rest & ((1 << 26) - 1)) as i64;
        acc = frac(acc + frac_mul(limb, scale));
        rest >>= 26;
        scale = frac(scale * (1u64 << 26) as f64);
    }
    if neg { frac(-acc) } else { acc }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSystem {
    /// x ↦ x + α on 𝕋¹.
    Circle { alpha: f64 },
    /// (x, y) ↦ (x + α₁, y + α₂) on 𝕋².
    Torus { alpha: [f64; 2] },
    /// (x, y) ↦ (x + α, y + m·x) on 𝕋²; `mult = 1` is the standard skew-shift.
    SkewShift { alpha: f64, mult: i64 },
    /// Adding machine on `depth` digits in base `base`.
    Odometer { base: u32, depth: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BasePoint {
    Circle(f64),
    Torus(f64, f64),
    SkewShift(f64, f64),
    /// Digits packed as an integer, least significant digit first.
    Odometer(u64),
}

impl BaseSystem {
    pub fn circle(alpha: f64) -> Result<Self> {
        check_irrational(alpha)?;
        Ok(BaseSystem::Circle { alpha: frac(alpha) })
    }

    pub fn torus(alpha: [f64; 2]) -> Result<Self> {
        check_irrational(alpha[0])?;
        check_irrational(alpha[1])?;
        Ok(BaseSystem::Torus {
            alpha: [frac(alpha[0]), frac(alpha[1])],
        })
    }

    pub fn skew_shift(alpha: f64) -> Result<Self> {
        Self::skew_shift_with(alpha, 1)
    }

    pub fn skew_shift_with(alpha: f64, mult: i64) -> Result<Self> {
        check_irrational(alpha)?;
        if mult == 0 {
            return Err(Error::Input("skew-shift multiplier must be nonzero".into()));
        }
        Ok(BaseSystem::SkewShift {
            alpha: frac(alpha),
            mult,
        })
    }

    pub fn odometer(base: u32, depth: u32) -> Result<Self> {
        if base < 2 {
            return Err(Error::Input(format!("odometer base {base} < 2")));
        }
        if depth == 0 || (base as f64).powi(depth as i32) > 2f64.powi(62) {
            return Err(Error::Input(format!(
                "odometer depth {depth} unsupported for base {base}"
            )));
        }
        Ok(BaseSystem::Odometer { base, depth })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseSystem::Circle { alpha } => check_irrational(alpha),
            BaseSystem::Torus { alpha } => {
                check_irrational(alpha[0])?;
                check_irrational(alpha[1])
            }
            BaseSystem::SkewShift { alpha, mult } => {
                if mult == 0 {
                    return Err(Error::Input("skew-shift multiplier must be nonzero".into()));
                }
                check_irrational(alpha)
            }
            BaseSystem::Odometer { base, depth } => Self::odometer(base, depth).map(|_| ()),
        }
    }

    /// Number of points of a truncated odometer, `base^depth`.
    pub fn odometer_size(&self) -> Option<u64> {
        match *self {
            BaseSystem::Odometer { base, depth } => Some((base as u64).pow(depth)),
            _ => None,
        }
    }

    /// Frequency of the circle factor, when there is one.
    pub fn circle_alpha(&self) -> Option<f64> {
        match *self {
            BaseSystem::Circle { alpha } => Some(alpha),
            BaseSystem::Torus { alpha } => Some(alpha[0]),
            BaseSystem::SkewShift { alpha, .. } => Some(alpha),
            BaseSystem::Odometer { .. } => None,
        }
    }

    pub fn is_two_dimensional(&self) -> bool {
        matches!(self, BaseSystem::Torus { .. } | BaseSystem::SkewShift { .. })
    }

    /// Factor map h onto the circle, with h∘f = h + α.
    pub fn factor(&self, x: &BasePoint) -> Option<f64> {
        match *x {
            BasePoint::Circle(t) => Some(t),
            BasePoint::Torus(t, _) | BasePoint::SkewShift(t, _) => Some(t),
            BasePoint::Odometer(_) => None,
        }
    }

    pub fn contains(&self, x: &BasePoint) -> bool {
        matches!(
            (self, x),
            (BaseSystem::Circle { .. }, BasePoint::Circle(_))
                | (BaseSystem::Torus { .. }, BasePoint::Torus(..))
                | (BaseSystem::SkewShift { .. }, BasePoint::SkewShift(..))
                | (BaseSystem::Odometer { .. }, BasePoint::Odometer(_))
        )
    }

    /// Canonical point with the given coordinates; the second coordinate is
    /// ignored on one-dimensional bases and odometer points are read off the
    /// first coordinate's base-`b` expansion.
    pub fn point(&self, x: f64, y: f64) -> BasePoint {
        match *self {
            BaseSystem::Circle { .. } => BasePoint::Circle(frac(x)),
            BaseSystem::Torus { .. } => BasePoint::Torus(frac(x), frac(y)),
            BaseSystem::SkewShift { .. } => BasePoint::SkewShift(frac(x), frac(y)),
            BaseSystem::Odometer { base, depth } => {
                BasePoint::Odometer(odometer_from_unit(frac(x), base, depth))
            }
        }
    }

    /// f^n(x) in closed form.
    pub fn step(&self, x: &BasePoint, n: i64) -> BasePoint {
        match (*self, *x) {
            (BaseSystem::Circle { alpha }, BasePoint::Circle(t)) => {
                BasePoint::Circle(frac(t + frac_mul(n, alpha)))
            }
            (BaseSystem::Torus { alpha }, BasePoint::Torus(s, t)) => BasePoint::Torus(
                frac(s + frac_mul(n, alpha[0])),
                frac(t + frac_mul(n, alpha[1])),
            ),
            (BaseSystem::SkewShift { alpha, mult }, BasePoint::SkewShift(s, t)) => {
                let nn = n as i128;
                let tri = nn * (nn - 1) / 2;
                let shift = frac(frac_mul_wide(nn * mult as i128, s)
                    + frac_mul_wide(tri * mult as i128, alpha));
                BasePoint::SkewShift(frac(s + frac_mul(n, alpha)), frac(t + shift))
            }
            (BaseSystem::Odometer { base, depth }, BasePoint::Odometer(k)) => {
                let size = (base as i128).pow(depth);
                BasePoint::Odometer(((k as i128 + n as i128).rem_euclid(size)) as u64)
            }
            _ => panic!("point {x:?} does not belong to base {self:?}"),
        }
    }

    /// One step of the map on lifted coordinates in ℝ², without reduction
    /// mod 1; None on the odometer.
    pub fn lift_step(&self, c: [f64; 2]) -> Option<[f64; 2]> {
        match *self {
            BaseSystem::Circle { alpha } => Some([c[0] + alpha, 0.0]),
            BaseSystem::Torus { alpha } => Some([c[0] + alpha[0], c[1] + alpha[1]]),
            BaseSystem::SkewShift { alpha, mult } => Some([c[0] + alpha, c[1] + mult as f64 * c[0]]),
            BaseSystem::Odometer { .. } => None,
        }
    }

    /// Coordinates used by evaluable functions: the torus coordinates, or the
    /// radical inverse of an odometer point.
    pub fn coords(&self, x: &BasePoint) -> [f64; 2] {
        match (*self, *x) {
            (_, BasePoint::Circle(t)) => [t, 0.0],
            (_, BasePoint::Torus(s, t)) | (_, BasePoint::SkewShift(s, t)) => [s, t],
            (BaseSystem::Odometer { base, depth }, BasePoint::Odometer(k)) => {
                [radical_inverse(k, base, depth), 0.0]
            }
            (_, BasePoint::Odometer(k)) => [k as f64, 0.0],
        }
    }

    /// Digit `j` (0 = fastest) of an odometer point.
    pub fn digit(&self, x: &BasePoint, j: u32) -> Option<u32> {
        match (*self, *x) {
            (BaseSystem::Odometer { base, depth }, BasePoint::Odometer(k)) if j < depth => {
                Some(((k / (base as u64).pow(j)) % base as u64) as u32)
            }
            _ => None,
        }
    }

    /// Evenly spread test points: `count` on one-dimensional bases, a
    /// ⌈√count⌉² lattice on 𝕋², and all points of small odometers.
    pub fn grid(&self, count: usize) -> Vec<BasePoint> {
        let count = count.max(1);
        match *self {
            BaseSystem::Circle { .. } => (0..count)
                .map(|j| BasePoint::Circle(j as f64 / count as f64))
                .collect(),
            BaseSystem::Torus { .. } | BaseSystem::SkewShift { .. } => {
                let side = (count as f64).sqrt().ceil() as usize;
                let mut out = Vec::with_capacity(side * side);
                for i in 0..side {
                    for j in 0..side {
                        out.push(self.point(i as f64 / side as f64, j as f64 / side as f64));
                    }
                }
                out
            }
            BaseSystem::Odometer { .. } => {
                let size = self.odometer_size().unwrap();
                if count as u64 >= size {
                    (0..size).map(BasePoint::Odometer).collect()
                } else {
                    (0..count as u64)
                        .map(|j| {
                            BasePoint::Odometer(((j as u128 * size as u128) / count as u128) as u64)
                        })
                        .collect()
                }
            }
        }
    }

    /// Representative of the coordinate loop `index` at parameter t ∈ [0,1].
    pub fn loop_point(&self, index: usize, t: f64, anchor: &BasePoint) -> Result<BasePoint> {
        match (*self, *anchor, index) {
            (BaseSystem::Circle { .. }, _, 0) => Ok(BasePoint::Circle(frac(t))),
            (BaseSystem::Torus { .. }, BasePoint::Torus(_, y), 0) => Ok(BasePoint::Torus(frac(t), y)),
            (BaseSystem::Torus { .. }, BasePoint::Torus(x, _), 1) => Ok(BasePoint::Torus(x, frac(t))),
            (BaseSystem::SkewShift { .. }, BasePoint::SkewShift(_, y), 0) => {
                Ok(BasePoint::SkewShift(frac(t), y))
            }
            (BaseSystem::SkewShift { .. }, BasePoint::SkewShift(x, _), 1) => {
                Ok(BasePoint::SkewShift(x, frac(t)))
            }
            _ => Err(Error::Input(format!(
                "loop {index} is not a coordinate circle of {self:?}"
            ))),
        }
    }

    pub fn loop_count(&self) -> usize {
        match self {
            BaseSystem::Circle { .. } => 1,
            BaseSystem::Torus { .. } | BaseSystem::SkewShift { .. } => 2,
            BaseSystem::Odometer { .. } => 0,
        }
    }
}

pub fn radical_inverse(k: u64, base: u32, depth: u32) -> f64 {
    let b = base as u64;
    let mut rest = k;
    let mut scale = 1.0 / base as f64;
    let mut u = 0.0;
    for _ in 0..depth {
        u += (rest % b) as f64 * scale;
        rest /= b;
        scale /= base as f64;
    }
    u
}

fn odometer_from_unit(u: f64, base: u32, depth: u32) -> u64 {
    let b = base as u64;
    let mut k = 0u64;
    let mut place = 1u64;
    let mut v = u;
    for _ in 0..depth {
        v *= base as f64;
        let d = (v.floor() as u64).min(b - 1);
        v -= d as f64;
        k += d * place;
        place *= b;
    }
    k
}

/// Continued-fraction convergents (p_i, q_i), i = 0..m, of the stored double
/// `alpha`, computed exactly from its binary expansion.
pub fn cf_convergents(alpha: f64, m: usize) -> Result<Vec<(i64, i64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("frequency {alpha} must lie in (0,1)")));
    }
    if m > 40 {
        return Err(Error::Input(format!("at most 40 convergents supported, got {m}")));
    }
    let terms = exact_cf_terms(alpha);
    let mut out = Vec::with_capacity(m);
    let (mut p_prev, mut q_prev) = (1i128, 0i128);
    let (mut p, mut q) = (terms[0] as i128, 1i128);
    out.push((p as i64, q as i64));
    for &a in terms.iter().skip(1) {
        if out.len() >= m {
            break;
        }
        let (pn, qn) = (a as i128 * p + p_prev, a as i128 * q + q_prev);
        if qn > i64::MAX as i128 {
            break;
        }
        p_prev = p;
        q_prev = q;
        p = pn;
        q = qn;
        out.push((p as i64, q as i64));
    }
    check_irrational_with(alpha, &out)?;
    if out.len() < m {
        return Err(Error::Input(format!(
            "frequency {alpha} supports only {} convergents at double precision",
            out.len()
        )));
    }
    Ok(out)
}

/// Partial quotients of the exact rational value of a double in (0,1).
fn exact_cf_terms(alpha: f64) -> Vec<u128> {
    let bits = alpha.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mant = if exp == 0 {
        (bits & ((1u64 << 52) - 1)) as u128
    } else {
        ((bits & ((1u64 << 52) - 1)) | (1u64 << 52)) as u128
    };
    // alpha = mant · 2^(exp − 1075)
    let shift = 1075 - exp.max(1);
    let (mut num, mut den) = if shift < 127 {
        (mant, 1u128 << shift)
    } else {
        (mant >> (shift - 126), 1u128 << 126)
    };
    let mut terms = Vec::new();
    while den != 0 && terms.len() < 80 {
        terms.push(num / den);
        let r = num % den;
        num = den;
        den = r;
    }
    terms
}

fn check_irrational(alpha: f64) -> Result<()> {
    let a = frac(alpha);
    if a == 0.0 {
        return Err(Error::Rational { p: 0, q: 1 });
    }
    let conv = partial_convergents(a);
    check_irrational_with(a, &conv)
}

fn partial_convergents(alpha: f64) -> Vec<(i64, i64)> {
    let terms = exact_cf_terms(alpha);
    let mut out = Vec::new();
    let (mut p_prev, mut q_prev) = (1i128, 0i128);
    let (mut p, mut q) = (terms[0] as i128, 1i128);
    out.push((p as i64, q as i64));
    for &a in terms.iter().skip(1) {
        let (pn, qn) = (a as i128 * p + p_prev, a as i128 * q + q_prev);
        if qn > RATIONAL_Q_MAX as i128 {
            break;
        }
        p_prev = p;
        q_prev = q;
        p = pn;
        q = qn;
        out.push((p as i64, q as i64));
    }
    out
}

fn check_irrational_with(alpha: f64, conv: &[(i64, i64)]) -> Result<()> {
    for &(p, q) in conv {
        if q > RATIONAL_Q_MAX {
            break;
        }
        let err = (q as f64).mul_add(alpha, -(p as f64)).abs();
        if err < RATIONAL_ERR {
            return Err(Error::Rational { p, q });
        }
    }
    Ok(())
}

/// Which tower of the castle a floor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tower {
    /// Translates I_i + nα, 0 ≤ n < q_{i+1}.
    Main,
    /// Translates I_{i+1} + nα, 0 ≤ n < q_i.
    Side,
}

/// Position of a circle point inside the castle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloorRef {
    pub tower: Tower,
    pub floor: u64,
    /// Oriented position in [0,1]: 0 at the image of 0, 1 at the image of q·α.
    pub s: f64,
}

/// Castle over I_i, the shortest closed interval containing 0 and q_iα.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Castle {
    pub index: usize,
    pub alpha: f64,
    pub p_i: i64,
    pub q_i: i64,
    pub p_next: i64,
    pub q_next: i64,
    /// q_iα − p_i, signed.
    pub gap_i: f64,
    /// q_{i+1}α − p_{i+1}, signed.
    pub gap_next: f64,
    #[serde(skip)]
    floors: Vec<(f64, Tower, u64)>,
}

impl Castle {
    pub fn new(alpha: f64, index: usize) -> Result<Self> {
        if index < 1 {
            return Err(Error::Input("castle index must be at least 1".into()));
        }
        let conv = cf_convergents(alpha, (index + 2).min(40))
            .map_err(|e| Error::Input(format!("castle index {index} out of range: {e}")))?;
        if conv.len() < index + 2 {
            return Err(Error::Input(format!("castle index {index} out of range")));
        }
        let (p_i, q_i) = conv[index];
        let (p_next, q_next) = conv[index + 1];
        let gap_i = (q_i as f64).mul_add(alpha, -(p_i as f64));
        let gap_next = (q_next as f64).mul_add(alpha, -(p_next as f64));
        let mut castle = Castle {
            index,
            alpha,
            p_i,
            q_i,
            p_next,
            q_next,
            gap_i,
            gap_next,
            floors: Vec::new(),
        };
        castle.build_floors();
        Ok(castle)
    }

    /// Smallest castle index whose q_i exceeds `q_min`.
    pub fn index_for(alpha: f64, q_min: f64) -> Result<usize> {
        let conv = cf_convergents(alpha, 40).or_else(|_| Ok::<_, Error>(partial_all(alpha)))?;
        for (i, &(_, q)) in conv.iter().enumerate() {
            if i >= 1 && (q as f64) > q_min && i + 1 < conv.len() {
                return Ok(i);
            }
        }
        Err(Error::Budget(format!(
            "no convergent denominator above {q_min} within the continued-fraction table"
        )))
    }

    fn build_floors(&mut self) {
        let mut floors = Vec::with_capacity((self.q_i + self.q_next) as usize);
        for n in 0..self.q_next {
            let start = frac(frac_mul(n, self.alpha) + self.gap_i.min(0.0));
            floors.push((start, Tower::Main, n as u64));
        }
        for n in 0..self.q_i {
            let start = frac(frac_mul(n, self.alpha) + self.gap_next.min(0.0));
            floors.push((start, Tower::Side, n as u64));
        }
        floors.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.floors = floors;
    }

    pub fn len_i(&self) -> f64 {
        self.gap_i.abs()
    }

    pub fn len_next(&self) -> f64 {
        self.gap_next.abs()
    }

    /// Orientation of I_i: +1 when q_iα lies just above 0.
    pub fn sign(&self) -> f64 {
        self.gap_i.signum()
    }

    pub fn marker(&self) -> f64 {
        frac_mul(self.q_i + self.q_next, self.alpha)
    }

    pub fn tower_height(&self, tower: Tower) -> u64 {
        match tower {
            Tower::Main => self.q_next as u64,
            Tower::Side => self.q_i as u64,
        }
    }

    fn tower_gap(&self, tower: Tower) -> f64 {
        match tower {
            Tower::Main => self.gap_i,
            Tower::Side => self.gap_next,
        }
    }

    /// Total measure of all floors (equals one).
    pub fn total_measure(&self) -> f64 {
        self.q_next as f64 * self.len_i() + self.q_i as f64 * self.len_next()
    }

    /// Oriented coordinate of `x` in I_i, or None when x ∉ I_i.
    pub fn base_coordinate(&self, x: f64) -> Option<f64> {
        let s = centered(x) / self.gap_i;
        if (-1e-15..=1.0 + 1e-15).contains(&s) {
            Some(s.clamp(0.0, 1.0))
        } else {
            None
        }
    }

    pub fn in_base(&self, x: f64) -> bool {
        self.base_coordinate(x).is_some()
    }

    /// Point of floor `floor` of `tower` at oriented position `s`.
    pub fn floor_point(&self, tower: Tower, floor: u64, s: f64) -> f64 {
        frac(frac_mul(floor as i64, self.alpha) + s * self.tower_gap(tower))
    }

    /// Locate the floor containing `x`.
    pub fn locate(&self, x: f64) -> FloorRef {
        let x = frac(x);
        let idx = self.floors.partition_point(|f| f.0 <= x);
        let candidates = [
            if idx == 0 { self.floors.len() - 1 } else { idx - 1 },
            if idx == 0 { 0 } else { (idx + self.floors.len() - 2) % self.floors.len() },
            idx % self.floors.len(),
        ];
        let mut best: Option<(f64, FloorRef)> = None;
        for &c in &candidates {
            let (_, tower, n) = self.floors[c];
            let gap = self.tower_gap(tower);
            let off = centered(x - frac_mul(n as i64, self.alpha));
            let s = off / gap;
            let excess = if s < 0.0 {
                -s
            } else if s > 1.0 {
                s - 1.0
            } else {
                0.0
            } * gap.abs();
            let r = FloorRef {
                tower,
                floor: n,
                s: s.clamp(0.0, 1.0),
            };
            if best.as_ref().is_none_or(|(e, _)| excess < *e) {
                best = Some((excess, r));
            }
        }
        best.unwrap().1
    }

    /// First-return time τ(x) = min{n ≥ 0 : x + nα ∈ I_i}.
    pub fn return_time_circle(&self, x: f64) -> u64 {
        if self.in_base(x) {
            return 0;
        }
        let r = self.locate(x);
        match r.tower {
            Tower::Side => self.q_i as u64 - r.floor,
            Tower::Main => {
                let to_top = self.q_next as u64 - r.floor;
                if r.s * self.len_i() >= self.len_next() {
                    to_top
                } else {
                    to_top + self.q_i as u64
                }
            }
        }
    }
}

fn partial_all(alpha: f64) -> Vec<(i64, i64)> {
    let terms = exact_cf_terms(alpha);
    let mut out = Vec::new();
    let (mut p_prev, mut q_prev) = (1i128, 0i128);
    let (mut p, mut q) = (terms[0] as i128, 1i128);
    out.push((p as i64, q as i64));
    for &a in terms.iter().skip(1) {
        let (pn, qn) = (a as i128 * p + p_prev, a as i128 * q + q_prev);
        if qn > (1i128 << 50) {
            break;
        }
        p_prev = p;
        q_prev = q;
        p = pn;
        q = qn;
        out.push((p as i64, q as i64));
    }
    out
}

/// Return time of a base point to h⁻¹(I_i), checked against the castle height.
pub fn return_time(sys: &BaseSystem, x: &BasePoint, castle: &Castle) -> Result<u64> {
    let h = sys
        .factor(x)
        .ok_or_else(|| Error::Input("return time needs a circle factor".into()))?;
    let tau = castle.return_time_circle(h);
    if tau > (castle.q_next + castle.q_i - 1) as u64 {
        return Err(Error::Internal(format!(
            "return time {tau} exceeds castle height"
        )));
    }
    Ok(tau)
}

/// Level-`i` cyclic factor of an odometer, with values in ℤ/bⁱℤ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CantorFactor {
    pub level: u32,
    pub q: u64,
}

impl CantorFactor {
    pub fn value(&self, x: &BasePoint) -> u64 {
        match *x {
            BasePoint::Odometer(k) => k % self.q,
            _ => panic!("cantor factor applied to non-odometer point"),
        }
    }
}

pub fn cantor_factor(sys: &BaseSystem, level: u32) -> Result<CantorFactor> {
    match *sys {
        BaseSystem::Odometer { base, depth } => {
            if level > depth {
                return Err(Error::Input(format!(
                    "factor level {level} exceeds odometer depth {depth}"
                )));
            }
            Ok(CantorFactor {
                level,
                q: (base as u64).pow(level),
            })
        }
        _ => Err(Error::Input("cantor factors exist only on odometers".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_denominators_are_fibonacci() {
        let c = cf_convergents(GOLDEN, 12).unwrap();
        let q: Vec<i64> = c.iter().map(|x| x.1).collect();
        assert_eq!(q, vec![1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144]);
    }

    #[test]
    fn silver_denominators() {
        let c = cf_convergents(SILVER, 5).unwrap();
        let q: Vec<i64> = c.iter().map(|x| x.1).collect();
        assert_eq!(q, vec![1, 2, 5, 12, 29]);
    }

    #[test]
    fn convergent_errors_alternate_and_decrease() {
        for alpha in [GOLDEN, SILVER, std::f64::consts::E - 2.0] {
            let c = cf_convergents(alpha, 25).unwrap();
            let errs: Vec<f64> = c
                .iter()
                .map(|&(p, q)| (q as f64).mul_add(alpha, -(p as f64)))
                .collect();
            for w in errs.windows(2) {
                assert!(w[1].abs() < w[0].abs());
                assert!(w[0].signum() != w[1].signum());
            }
        }
    }

    #[test]
    fn rational_frequency_rejected() {
        match BaseSystem::circle(0.375) {
            Err(Error::Rational { p, q }) => assert_eq!((p, q), (3, 8)),
            other => panic!("expected rational error, got {other:?}"),
        }
    }

    #[test]
    fn skew_shift_two_steps() {
        let sys = BaseSystem::skew_shift(GOLDEN).unwrap();
        let x = BasePoint::SkewShift(0.3, 0.8);
        let two = sys.step(&x, 2);
        let expect = BasePoint::SkewShift(frac(0.3 + 2.0 * GOLDEN), frac(0.8 + 0.6 + GOLDEN));
        match (two, expect) {
            (BasePoint::SkewShift(a, b), BasePoint::SkewShift(c, d)) => {
                assert!((a - c).abs() < 1e-15 && (b - d).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn odometer_carry_chain() {
        let sys = BaseSystem::odometer(2, 20).unwrap();
        let all_ones = BasePoint::Odometer((1 << 20) - 1);
        assert_eq!(sys.step(&all_ones, 1), BasePoint::Odometer(0));
    }

    #[test]
    fn castle_golden_index_four() {
        let c = Castle::new(GOLDEN, 4).unwrap();
        assert_eq!((c.q_i, c.q_next), (5, 8));
        assert!((c.len_i() - (5.0 * GOLDEN - 3.0).abs()).abs() < 1e-15);
        assert!((c.total_measure() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cantor_level_three_cycles() {
        let sys = BaseSystem::odometer(2, 12).unwrap();
        let h = cantor_factor(&sys, 3).unwrap();
        let mut x = BasePoint::Odometer(1234);
        let start = h.value(&x);
        let mut seen = Vec::new();
        for _ in 0..8 {
            seen.push(h.value(&x));
            x = sys.step(&x, 1);
        }
        assert_eq!(h.value(&x), start);
        seen.sort();
        assert_eq!(seen, (0..8).collect::<Vec<u64>>());
        assert!(cantor_factor(&sys, 13).is_err());
    }

    #[test]
    fn wide_fractional_product_matches_power_of_two_split() {
        let k: i64 = 987_654_321_987;
        let m = (k as i128) << 30;
        let direct = frac_mul_wide(m, GOLDEN);
        let split = frac_mul(k, frac(GOLDEN * (1u64 << 30) as f64));
        assert!(centered(direct - split).abs() < 1e-15);
    }
}
