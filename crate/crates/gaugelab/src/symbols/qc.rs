//! Exact Gaussian-rational scalars and small matrices over them.
//!
//! Every quantity in the jet-level symbol calculus is a matrix of complex
//! numbers with rational real and imaginary parts; all identities checked
//! downstream are hard equalities in this field.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Complex number with rational parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QC {
    pub re: BigRational,
    pub im: BigRational,
}

impl QC {
    pub fn zero() -> Self {
        QC {
            re: BigRational::zero(),
            im: BigRational::zero(),
        }
    }

    pub fn one() -> Self {
        QC {
            re: BigRational::one(),
            im: BigRational::zero(),
        }
    }

    pub fn i() -> Self {
        QC {
            re: BigRational::zero(),
            im: BigRational::one(),
        }
    }

    pub fn from_int(v: i64) -> Self {
        QC {
            re: BigRational::from_integer(BigInt::from(v)),
            im: BigRational::zero(),
        }
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        QC {
            re: BigRational::new(BigInt::from(num), BigInt::from(den)),
            im: BigRational::zero(),
        }
    }

    pub fn from_parts(re_num: i64, re_den: i64, im_num: i64, im_den: i64) -> Self {
        QC {
            re: BigRational::new(BigInt::from(re_num), BigInt::from(re_den)),
            im: BigRational::new(BigInt::from(im_num), BigInt::from(im_den)),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        QC {
            re: self.re.clone(),
            im: -self.im.clone(),
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let n = &self.re * &self.re + &self.im * &self.im;
        if n.is_zero() {
            return None;
        }
        Some(QC {
            re: &self.re / &n,
            im: -&self.im / &n,
        })
    }

    pub fn to_f64(&self) -> (f64, f64) {
        let conv = |r: &BigRational| -> f64 {
            let num = r.numer().to_string().parse::<f64>().unwrap_or(f64::NAN);
            let den = r.denom().to_string().parse::<f64>().unwrap_or(f64::NAN);
            num / den
        };
        (conv(&self.re), conv(&self.im))
    }

    /// Parses "a/b" or "a" into a rational.
    pub fn rational_from_str(s: &str) -> Option<BigRational> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let num: BigInt = n.trim().parse().ok()?;
            let den: BigInt = d.trim().parse().ok()?;
            if den.is_zero() {
                return None;
            }
            Some(BigRational::new(num, den))
        } else {
            let num: BigInt = s.parse().ok()?;
            Some(BigRational::from_integer(num))
        }
    }

    /// "a/b+c/d i" style round-trippable encoding.
    pub fn encode(&self) -> String {
        format!("{}|{}", self.re, self.im)
    }

    pub fn decode(s: &str) -> Option<Self> {
        let (re, im) = s.split_once('|')?;
        Some(QC {
            re: Self::rational_from_str(re)?,
            im: Self::rational_from_str(im)?,
        })
    }
}

impl fmt::Display for QC {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else if self.im.is_positive() {
            write!(f, "{}+{}i", self.re, self.im)
        } else {
            write!(f, "{}{}i", self.re, self.im)
        }
    }
}

impl Add for &QC {
    type Output = QC;
    fn add(self, o: &QC) -> QC {
        QC {
            re: &self.re + &o.re,
            im: &self.im + &o.im,
        }
    }
}

impl Sub for &QC {
    type Output = QC;
    fn sub(self, o: &QC) -> QC {
        QC {
            re: &self.re - &o.re,
            im: &self.im - &o.im,
        }
    }
}

impl Mul for &QC {
    type Output = QC;
    fn mul(self, o: &QC) -> QC {
        QC {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }
}

impl Neg for &QC {
    type Output = QC;
    fn neg(self) -> QC {
        QC {
            re: -self.re.clone(),
            im: -self.im.clone(),
        }
    }
}

/// Dense m x m matrix over QC, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatMat {
    pub m: usize,
    pub a: Vec<QC>,
}

impl RatMat {
    pub fn zeros(m: usize) -> Self {
        RatMat {
            m,
            a: vec![QC::zero(); m * m],
        }
    }

    pub fn eye(m: usize) -> Self {
        let mut out = Self::zeros(m);
        for i in 0..m {
            out.a[i * m + i] = QC::one();
        }
        out
    }

    pub fn scalar(m: usize, v: QC) -> Self {
        let mut out = Self::zeros(m);
        for i in 0..m {
            out.a[i * m + i] = v.clone();
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &QC {
        &self.a[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: QC) {
        self.a[i * self.m + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().all(|v| v.is_zero())
    }

    pub fn add(&self, o: &RatMat) -> RatMat {
        RatMat {
            m: self.m,
            a: self.a.iter().zip(&o.a).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, o: &RatMat) -> RatMat {
        RatMat {
            m: self.m,
            a: self.a.iter().zip(&o.a).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn mul(&self, o: &RatMat) -> RatMat {
        let m = self.m;
        let mut out = RatMat::zeros(m);
        for i in 0..m {
            for k in 0..m {
                let aik = &self.a[i * m + k];
                if aik.is_zero() {
                    continue;
                }
                for j in 0..m {
                    let v = aik * &o.a[k * m + j];
                    out.a[i * m + j] = &out.a[i * m + j] + &v;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: &QC) -> RatMat {
        RatMat {
            m: self.m,
            a: self.a.iter().map(|x| x * s).collect(),
        }
    }

    pub fn neg(&self) -> RatMat {
        RatMat {
            m: self.m,
            a: self.a.iter().map(|x| -x).collect(),
        }
    }

    pub fn adj(&self) -> RatMat {
        let m = self.m;
        let mut out = RatMat::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.a[j * m + i] = self.a[i * m + j].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> QC {
        let mut t = QC::zero();
        for i in 0..self.m {
            t = &t + &self.a[i * self.m + i];
        }
        t
    }

    /// Exact inverse by Gauss-Jordan; None when singular.
    pub fn inverse(&self) -> Option<RatMat> {
        let m = self.m;
        let mut a = self.a.clone();
        let mut b = RatMat::eye(m).a;
        for k in 0..m {
            // Find a nonzero pivot.
            let mut p = None;
            for r in k..m {
                if !a[r * m + k].is_zero() {
                    p = Some(r);
                    break;
                }
            }
            let p = p?;
            if p != k {
                for j in 0..m {
                    a.swap(k * m + j, p * m + j);
                    b.swap(k * m + j, p * m + j);
                }
            }
            let inv = a[k * m + k].inverse()?;
            for j in 0..m {
                a[k * m + j] = &a[k * m + j] * &inv;
                b[k * m + j] = &b[k * m + j] * &inv;
            }
            for r in 0..m {
                if r == k || a[r * m + k].is_zero() {
                    continue;
                }
                let f = a[r * m + k].clone();
                for j in 0..m {
                    let av = &a[k * m + j] * &f;
                    let bv = &b[k * m + j] * &f;
                    a[r * m + j] = &a[r * m + j] - &av;
                    b[r * m + j] = &b[r * m + j] - &bv;
                }
            }
        }
        Some(RatMat { m, a: b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_field_ops() {
        let a = QC::from_parts(1, 2, -3, 4);
        let b = QC::from_parts(2, 1, 1, 3);
        let prod = &a * &b;
        let back = &prod * &b.inverse().unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn matrix_inverse_exact() {
        let mut m = RatMat::zeros(2);
        m.set(0, 0, QC::from_int(2));
        m.set(0, 1, QC::i());
        m.set(1, 0, QC::from_ratio(1, 3));
        m.set(1, 1, QC::from_int(1));
        let inv = m.inverse().unwrap();
        let prod = m.mul(&inv);
        assert_eq!(prod, RatMat::eye(2), "exact inverse roundtrip");
    }

    #[test]
    fn encode_decode_roundtrip() {
        let a = QC::from_parts(-7, 3, 5, 11);
        let s = a.encode();
        assert_eq!(QC::decode(&s).unwrap(), a);
    }
}
