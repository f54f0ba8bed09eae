use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A point of Q² with arbitrary-precision coordinates.
///
/// `BigRational` keeps numerator/denominator reduced with a positive
/// denominator, so structural equality is value equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RationalVec2 {
    pub x: BigRational,
    pub y: BigRational,
}

impl RationalVec2 {
    pub fn new(x: BigRational, y: BigRational) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(BigRational::zero(), BigRational::zero())
    }

    /// `(xn/xd, yn/yd)` from machine integers.
    pub fn from_ratios(xn: i64, xd: i64, yn: i64, yd: i64) -> Self {
        Self::new(ratio(xn, xd), ratio(yn, yd))
    }

    pub fn from_ints(x: i64, y: i64) -> Self {
        Self::new(BigRational::from_integer(x.into()), BigRational::from_integer(y.into()))
    }

    /// Exact dyadic rational of each float coordinate.
    pub fn from_f64(v: [f64; 2]) -> Result<Self> {
        let conv = |t: f64| BigRational::from_float(t).ok_or(Error::NonFinite(v[0], v[1]));
        Ok(Self::new(conv(v[0])?, conv(v[1])?))
    }

    pub fn to_f64(&self) -> [f64; 2] {
        [rat_to_f64(&self.x), rat_to_f64(&self.y)]
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(&self.x + &o.x, &self.y + &o.y)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(&self.x - &o.x, &self.y - &o.y)
    }

    pub fn scale(&self, s: &BigRational) -> Self {
        Self::new(&self.x * s, &self.y * s)
    }

    pub fn dot(&self, o: &Self) -> BigRational {
        &self.x * &o.x + &self.y * &o.y
    }

    /// z-component of the cross product.
    pub fn cross(&self, o: &Self) -> BigRational {
        &self.x * &o.y - &self.y * &o.x
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    /// Least common denominator of the two coordinates, i.e. the `q` of
    /// the reduced form `(p₁/q, p₂/q)`.
    pub fn common_denominator(&self) -> BigInt {
        num_integer::Integer::lcm(self.x.denom(), self.y.denom())
    }

    /// `(p₁, p₂, q)` with `gcd(p₁, p₂, q) = 1`.
    pub fn reduced_form(&self) -> (BigInt, BigInt, BigInt) {
        let q = self.common_denominator();
        let p1 = (&self.x * BigRational::from_integer(q.clone())).to_integer();
        let p2 = (&self.y * BigRational::from_integer(q.clone())).to_integer();
        (p1, p2, q)
    }

    /// Smallest integer vector positively proportional to `self`.
    pub fn primitive_direction(&self) -> Option<(BigInt, BigInt)> {
        if self.is_zero() {
            return None;
        }
        let l = self.common_denominator();
        let lr = BigRational::from_integer(l);
        let a = (&self.x * &lr).to_integer();
        let b = (&self.y * &lr).to_integer();
        let g = num_integer::Integer::gcd(&a, &b);
        Some((a / &g, b / &g))
    }
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // to_f64 only fails on overflow of the exponent
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Formats as `num/den`, always with an explicit denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("malformed rational {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(BigInt::from_str(s).map_err(|_| bad())?)),
    }
}

impl fmt::Display for RationalVec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", format_rational(&self.x), format_rational(&self.y))
    }
}

#[derive(Serialize, Deserialize)]
struct RationalVec2Repr {
    x: String,
    y: String,
}

impl Serialize for RationalVec2 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RationalVec2Repr { x: format_rational(&self.x), y: format_rational(&self.y) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalVec2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RationalVec2Repr::deserialize(d)?;
        let x = parse_rational(&r.x).map_err(serde::de::Error::custom)?;
        let y = parse_rational(&r.y).map_err(serde::de::Error::custom)?;
        Ok(RationalVec2 { x, y })
    }
}

/// Norm used for d(·,·) on R² and on the torus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Euclidean,
    Max,
}

impl Norm {
    #[inline]
    pub fn length(self, v: [f64; 2]) -> f64 {
        match self {
            Norm::Euclidean => v[0].hypot(v[1]),
            Norm::Max => v[0].abs().max(v[1].abs()),
        }
    }

    #[inline]
    pub fn dist(self, a: [f64; 2], b: [f64; 2]) -> f64 {
        self.length([a[0] - b[0], a[1] - b[1]])
    }

    /// Toroidal distance between the projections of `a` and `b`.
    #[inline]
    pub fn torus_dist(self, a: [f64; 2], b: [f64; 2]) -> f64 {
        self.length(torus_delta(a, b))
    }

    /// Largest distance from a point of an axis-aligned cell of side `h`
    /// to its center.
    pub fn cell_radius(self, h: f64) -> f64 {
        match self {
            Norm::Euclidean => h * std::f64::consts::SQRT_2 / 2.0,
            Norm::Max => h / 2.0,
        }
    }
}

impl FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(Norm::Euclidean),
            "max" | "sup" | "linf" => Ok(Norm::Max),
            _ => Err(Error::Parse(format!("unknown norm {s:?}"))),
        }
    }
}

/// Shortest representative of `b − a` modulo Z², each coordinate in [−1/2, 1/2].
#[inline]
pub fn torus_delta(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let w = |t: f64| t - t.round();
    [w(b[0] - a[0]), w(b[1] - a[1])]
}

/// Projection of a point of R² to the fundamental domain [0,1)².
#[inline]
pub fn to_torus(z: [f64; 2]) -> [f64; 2] {
    let f = |t: f64| {
        let r = t - t.floor();
        // t - floor(t) can round up to exactly 1 for tiny negative t
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    };
    [f(z[0]), f(z[1])]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_form_of_vertex() {
        let v = RationalVec2::from_ratios(2, 4, 1, 3);
        let (p1, p2, q) = v.reduced_form();
        assert_eq!((p1, p2, q), (3.into(), 2.into(), 6.into()));
    }

    #[test]
    fn rational_strings() {
        assert_eq!(format_rational(&ratio(6, -4)), "-3/2");
        assert_eq!(format_rational(&ratio(4, 1)), "4/1");
        assert_eq!(parse_rational("-3/2").unwrap(), ratio(-3, 2));
        assert_eq!(parse_rational("7").unwrap(), ratio(7, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("a/b").is_err());
    }

    #[test]
    fn torus_helpers() {
        assert_eq!(to_torus([-0.25, 3.5]), [0.75, 0.5]);
        let d = torus_delta([0.9, 0.1], [0.1, 0.9]);
        assert!((d[0] - 0.2).abs() < 1e-12 && (d[1] + 0.2).abs() < 1e-12);
        assert!((Norm::Euclidean.torus_dist([0.0, 0.0], [0.5, 0.5]) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(Norm::Max.torus_dist([0.0, 0.0], [0.5, 0.25]), 0.5);
    }

    #[test]
    fn primitive_direction_scales_out_denominators() {
        let v = RationalVec2::from_ratios(-2, 3, 4, 9);
        let (a, b) = v.primitive_direction().unwrap();
        assert_eq!((a, b), ((-3).into(), 2.into()));
        assert!(RationalVec2::zero().primitive_direction().is_none());
    }
}

/// Serde adapter storing a `BigRational` as an `"n/d"` string.
pub mod rational_serde {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_rational(&text).map_err(serde::de::Error::custom)
    }
}
