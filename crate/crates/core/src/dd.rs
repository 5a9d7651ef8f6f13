//! Double-double arithmetic (about 32 significant digits), used where an
//! alternating series cancels more digits than `f64` can carry.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
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

const LN2: Dd = Dd { hi: 0.693_147_180_559_945_3, lo: 2.319_046_813_846_299_6e-17 };

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two doubles.
    #[inline]
    pub fn prod(a: f64, b: f64) -> Dd {
        let (p, e) = two_prod(a, b);
        Dd { hi: p, lo: e }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn mul_f(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    fn ldexp(self, k: i32) -> Dd {
        let f = 2f64.powi(k);
        Dd { hi: self.hi * f, lo: self.lo * f }
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2.mul_f(k)).ldexp(-10);
        // expm1(r) by Taylor, |r| < 4e-4.
        let mut term = r;
        let mut s = r;
        for n in 2..=12 {
            term = term * r / Dd::new(n as f64);
            s = s + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // (1 + s)^2 − 1 = 2s + s², ten times.
        for _ in 0..10 {
            s = s.mul_f(2.0) + s * s;
        }
        (s + Dd::ONE).ldexp(k as i32)
    }

    /// Natural log for positive arguments, one Newton step from `f64::ln`.
    pub fn ln(self) -> Dd {
        let y = Dd::new(self.hi.ln());
        y + self * (-y).exp() - Dd::ONE
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// `B_{2k} / (2k(2k−1))` for the Stirling series, as exact rationals.
fn stirling_coef(k: usize) -> Dd {
    const PQ: [(f64, f64); 12] = [
        (1.0, 12.0),
        (-1.0, 360.0),
        (1.0, 1260.0),
        (-1.0, 1680.0),
        (1.0, 1188.0),
        (-691.0, 360360.0),
        (1.0, 156.0),
        (-3617.0, 122400.0),
        (43867.0, 244188.0),
        (-174611.0, 125400.0),
        (77683.0, 5796.0),
        (-236364091.0, 1506960.0),
    ];
    Dd::new(PQ[k].0) / Dd::new(PQ[k].1)
}

/// `Γ(y) / Γ(y + a)` for `y >= 1`, `0 < a <= 1`, with `y` in double-double.
pub(crate) fn gamma_ratio(y: Dd, a: f64) -> Dd {
    let shift_to = 30.0;
    let mut z = y;
    // Π (z+a+k)/(z+k) over the shift.
    let mut prod = Dd::ONE;
    while z.hi < shift_to {
        prod = prod * ((z + Dd::new(a)) / z);
        z = z + Dd::ONE;
    }
    let za = z + Dd::new(a);
    // ln Γ(z) − ln Γ(z+a) = −(z−½) ln(1+a/z) − a ln(z+a) + a + Σ c_k (z^{1−2k} − (z+a)^{1−2k}).
    let l1 = (za / z).ln();
    let mut v = -((z - Dd::new(0.5)) * l1) - za.ln().mul_f(a) + Dd::new(a);
    let (iz, iza) = (Dd::ONE / z, Dd::ONE / za);
    let (iz2, iza2) = (iz * iz, iza * iza);
    let (mut pz, mut pza) = (iz, iza);
    for k in 0..12 {
        v = v + stirling_coef(k) * (pz - pza);
        pz = pz * iz2;
        pza = pza * iza2;
    }
    prod * v.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: Dd, hi: f64, lo: f64) -> f64 {
        ((a - Dd { hi, lo }).to_f64() / hi).abs()
    }

    #[test]
    fn division_keeps_low_word() {
        let q = Dd::ONE / Dd::new(3.0);
        assert!(q.lo != 0.0);
        assert!(((q.mul_f(3.0)) - Dd::ONE).to_f64().abs() < 1e-31);
    }

    #[test]
    fn exp_and_ln_reference() {
        // e^{2.5} and ln 3 to 32 digits.
        let e = Dd::new(2.5).exp();
        assert!(rel(e, 12.182493960703473, 2.0334002173348147e-16) < 1e-30);
        let back = e.ln();
        assert!((back - Dd::new(2.5)).to_f64().abs() < 1e-30);
        let l3 = Dd::new(3.0).ln();
        assert!(((l3.exp() - Dd::new(3.0)).to_f64()).abs() < 1e-30);
        assert!((Dd::ZERO.exp() - Dd::ONE).to_f64().abs() == 0.0);
    }

    #[test]
    fn gamma_ratio_at_integers() {
        // Γ(n)/Γ(n+1) = 1/n.
        for n in [1.0, 2.0, 7.0, 45.0] {
            let r = gamma_ratio(Dd::new(n), 1.0);
            assert!(((r.mul_f(n)) - Dd::ONE).to_f64().abs() < 1e-30, "{n}");
        }
        // Γ(1)/Γ(1.5) = 2/√π.
        let r = gamma_ratio(Dd::ONE, 0.5);
        let want = 2.0 / std::f64::consts::PI.sqrt();
        assert!((r.to_f64() - want).abs() < 2e-16);
    }

    #[test]
    fn gamma_ratio_telescopes() {
        // Π_{i<n} Γ(1+ai)/Γ(1+a(i+1)) = 1/Γ(1+an).
        let a = 0.7;
        let mut p = Dd::ONE;
        for i in 0..40 {
            p = p * gamma_ratio(Dd::prod(a, i as f64) + Dd::ONE, a);
        }
        let want = -crate::special::ln_gamma(1.0 + 0.7 * 40.0);
        assert!((p.to_f64().ln() - want).abs() < 1e-13);
    }
}
