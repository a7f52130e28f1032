use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest denominator magnitude [`RationalQuadricSurface::evaluate`] accepts.
pub const POLE_THRESHOLD: f64 = 1e-9;

/// Smallest denominator magnitude a surface may reach over its fit domain.
pub const DOMAIN_POLE_THRESHOLD: f64 = 1e-6;

/// Grid resolution used for pole checks over a fit domain.
pub const DOMAIN_GRID: usize = 50;

/// Rational surface over two angles:
///
/// ```text
///        a1 + a3 x + a5 y + a7 x² + a9 y² + a11 xy
/// ẑ = ---------------------------------------------
///        1  + a2 x + a4 y + a6 x² + a8 y² + a10 xy
/// ```
///
/// `x = β3`, `y = β4` (radians), `ẑ = d̂2` (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RationalQuadricSurface<T> {
    /// `[a1, a3, a5, a7, a9, a11]`
    pub numerator: [T; 6],
    /// `[a2, a4, a6, a8, a10]`
    pub denominator: [T; 5],
}

impl<T: Scalar> RationalQuadricSurface<T> {
    pub fn new(numerator: [T; 6], denominator: [T; 5]) -> Result<Self> {
        let s = RationalQuadricSurface {
            numerator,
            denominator,
        };
        if !s.coefficients().iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite surface coefficient".into(),
            ));
        }
        Ok(s)
    }

    /// From `[a1, a2, …, a11]`.
    pub fn from_coefficients(a: [T; 11]) -> Result<Self> {
        Self::new(
            [a[0], a[2], a[4], a[6], a[8], a[10]],
            [a[1], a[3], a[5], a[7], a[9]],
        )
    }

    /// `[a1, a2, …, a11]`.
    pub fn coefficients(&self) -> [T; 11] {
        let (n, d) = (&self.numerator, &self.denominator);
        [
            n[0], d[0], n[1], d[1], n[2], d[2], n[3], d[3], n[4], d[4], n[5],
        ]
    }

    /// Coefficient `a_j` with 1-based `j`.
    pub fn a(&self, j: usize) -> T {
        self.coefficients()[j - 1]
    }

    /// A constant surface `ẑ = c`.
    pub fn constant(c: T) -> Self {
        let z = T::zero();
        RationalQuadricSurface {
            numerator: [c, z, z, z, z, z],
            denominator: [z; 5],
        }
    }

    pub fn numerator_at(&self, x: T, y: T) -> T {
        let n = &self.numerator;
        n[0] + n[1] * x + n[2] * y + n[3] * x * x + n[4] * y * y + n[5] * x * y
    }

    pub fn denominator_at(&self, x: T, y: T) -> T {
        let d = &self.denominator;
        T::one() + d[0] * x + d[1] * y + d[2] * x * x + d[3] * y * y + d[4] * x * y
    }

    /// Evaluates the surface, failing near a pole.
    pub fn evaluate(&self, x: T, y: T) -> Result<T> {
        let den = self.denominator_at(x, y);
        if !(den.abs() >= T::lit(POLE_THRESHOLD)) {
            return Err(Error::Pole {
                x: x.as_f64(),
                y: y.as_f64(),
                denominator: den.as_f64(),
            });
        }
        Ok(self.numerator_at(x, y) / den)
    }

    /// Evaluates without the pole check (may return ±inf or NaN).
    #[inline]
    pub fn evaluate_unchecked(&self, x: T, y: T) -> T {
        self.numerator_at(x, y) / self.denominator_at(x, y)
    }

    /// Surface plus a constant offset everywhere (exact in the rational form).
    pub fn offset(&self, c: T) -> Self {
        let mut numerator = self.numerator;
        numerator[0] = numerator[0] + c;
        for k in 0..5 {
            numerator[k + 1] = numerator[k + 1] + c * self.denominator[k];
        }
        RationalQuadricSurface {
            numerator,
            denominator: self.denominator,
        }
    }

    /// Smallest `|denominator|` over a `DOMAIN_GRID`² grid on `domain`.
    pub fn min_denominator_on(&self, domain: &Domain<T>) -> T {
        domain
            .grid(DOMAIN_GRID)
            .map(|(x, y)| self.denominator_at(x, y).abs())
            .fold(T::infinity(), |acc, v| {
                if v.is_nan() {
                    T::zero()
                } else {
                    acc.min(v)
                }
            })
    }

    /// Checks the pole-free invariant over the fit domain.
    pub fn check_pole_free(&self, domain: &Domain<T>) -> Result<()> {
        let limit = T::lit(DOMAIN_POLE_THRESHOLD);
        for (x, y) in domain.grid(DOMAIN_GRID) {
            let den = self.denominator_at(x, y);
            if !(den.abs() >= limit) {
                return Err(Error::Pole {
                    x: x.as_f64(),
                    y: y.as_f64(),
                    denominator: den.as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// The fitted surface published with the model (angles assumed in radians).
pub fn paper_surface<T: Scalar>() -> RationalQuadricSurface<T> {
    let l = T::lit;
    RationalQuadricSurface {
        numerator: [
            l(18.00),
            l(-290.93),
            l(-29.46),
            l(2563.09),
            l(37.01),
            l(-606.53),
        ],
        denominator: [l(-10.60), l(-2.23), l(94.62), l(2.12), l(-25.75)],
    }
}

/// Axis-aligned rectangle in `(β3, β4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain<T> {
    pub x: (T, T),
    pub y: (T, T),
}

impl<T: Scalar> Domain<T> {
    /// Bounding box of the given points.
    pub fn bounding<I: IntoIterator<Item = (T, T)>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let (x0, y0) = it.next()?;
        let mut d = Domain {
            x: (x0, x0),
            y: (y0, y0),
        };
        for (x, y) in it {
            d.x = (d.x.0.min(x), d.x.1.max(x));
            d.y = (d.y.0.min(y), d.y.1.max(y));
        }
        Some(d)
    }

    /// `n × n` grid including the corners, x-major.
    pub fn grid(&self, n: usize) -> impl Iterator<Item = (T, T)> + '_ {
        let step = move |lo: T, hi: T, k: usize| {
            if n <= 1 {
                lo
            } else {
                lo + (hi - lo) * T::lit(k as f64) / T::lit((n - 1) as f64)
            }
        };
        (0..n).flat_map(move |i| {
            (0..n).map(move |j| (step(self.x.0, self.x.1, i), step(self.y.0, self.y.1, j)))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_surface_at_origin() {
        let s = paper_surface::<f64>();
        assert_eq!(s.evaluate(0.0, 0.0).unwrap(), 18.00);
        assert_eq!(s.a(7), 2563.09);
        assert_eq!(s.a(2), -10.60);
        assert_eq!(s.a(11), -606.53);
        assert_eq!(s.a(10), -25.75);
    }

    #[test]
    fn constant_surface() {
        let mut a = [0.0; 11];
        a[0] = 5.0;
        let s = RationalQuadricSurface::from_coefficients(a).unwrap();
        for (x, y) in [(0.0, 0.0), (1.3, -2.0), (-7.0, 4.0)] {
            assert_eq!(s.evaluate(x, y).unwrap(), 5.0);
        }
    }

    #[test]
    fn unit_denominator_slope() {
        let mut a = [0.0; 11];
        a[0] = 1.0;
        a[1] = 1.0;
        let s = RationalQuadricSurface::from_coefficients(a).unwrap();
        assert_eq!(s.evaluate(1.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn pole_is_reported() {
        let mut a = [0.0; 11];
        a[0] = 1.0;
        a[1] = -1.0;
        let s = RationalQuadricSurface::from_coefficients(a).unwrap();
        assert!(matches!(s.evaluate(1.0, 0.0), Err(Error::Pole { .. })));
        // x = 1 lies on the 50-point grid over [0, 4.9]
        let domain = Domain {
            x: (0.0, 4.9),
            y: (0.0, 1.0),
        };
        assert!(s.check_pole_free(&domain).is_err());
        assert!(s.min_denominator_on(&domain) < 1e-6);
    }

    #[test]
    fn coefficient_order_round_trip() {
        let a: [f64; 11] = std::array::from_fn(|k| k as f64 + 1.0);
        let s = RationalQuadricSurface::from_coefficients(a).unwrap();
        assert_eq!(s.numerator, [1.0, 3.0, 5.0, 7.0, 9.0, 11.0]);
        assert_eq!(s.denominator, [2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(s.coefficients(), a);
    }

    #[test]
    fn offset_adds_constant() {
        let s = paper_surface::<f64>();
        let t = s.offset(2.0);
        for (x, y) in [(1.5, 0.1), (1.6, -0.1), (1.55, 0.4)] {
            let d = t.evaluate(x, y).unwrap() - s.evaluate(x, y).unwrap();
            assert!((d - 2.0).abs() < 1e-9, "{d}");
        }
    }

    #[test]
    fn grid_covers_corners() {
        let d = Domain {
            x: (0.0, 1.0),
            y: (-1.0, 1.0),
        };
        let pts: Vec<_> = d.grid(50).collect();
        assert_eq!(pts.len(), 2500);
        assert_eq!(pts[0], (0.0, -1.0));
        assert_eq!(pts[2499], (1.0, 1.0));
    }
}
