//! Minimal double-double arithmetic (hi + lo with |lo| <= ulp(hi)/2).
//!
//! Only what the coefficient normalization needs: building values from
//! exact integers, products, quotients and square roots to ~106 bits.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// Exact for |v| < 2^106, correctly rounded to 106 bits above that.
    pub fn from_i128(v: i128) -> Self {
        let hi = v as f64;
        // |v - hi| <= ulp(hi)/2 < 2^75 for any i128, so this stays exact in i128.
        let rest = v - hi as i128;
        let (hi, lo) = quick_two_sum(hi, rest as f64);
        Self { hi, lo }
    }

    pub fn sqrt_f64(x: f64) -> Self {
        let s = x.sqrt();
        if s == 0.0 {
            return Self::from_f64(0.0);
        }
        let residual = (-s).mul_add(s, x);
        let (hi, lo) = quick_two_sum(s, residual / (2.0 * s));
        Self { hi, lo }
    }

    pub fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Self { hi, lo }
    }

    pub fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn mul(self, other: Self) -> Self {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + (self.hi * other.lo + self.lo * other.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    pub fn div(self, other: Self) -> Self {
        let q1 = self.hi / other.hi;
        let r = self.add(other.mul_f64(q1).neg());
        let q2 = r.hi / other.hi;
        let r = r.add(other.mul_f64(q2).neg());
        let q3 = r.hi / other.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo }.add(Self::from_f64(q3))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}
