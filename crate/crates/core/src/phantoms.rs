//! Binary ground-truth absorption phantoms.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{Domain, Grid, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhantomCase {
    OneInclusion,
    ThreeCircles,
    Crescent,
    Donut,
}

impl PhantomCase {
    pub const ALL: [PhantomCase; 4] = [
        PhantomCase::OneInclusion,
        PhantomCase::ThreeCircles,
        PhantomCase::Crescent,
        PhantomCase::Donut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PhantomCase::OneInclusion => "one-inclusion",
            PhantomCase::ThreeCircles => "three-circles",
            PhantomCase::Crescent => "crescent",
            PhantomCase::Donut => "donut",
        }
    }

    /// Default splat count for this case.
    pub fn default_splats(self) -> usize {
        match self {
            PhantomCase::OneInclusion => 1,
            PhantomCase::ThreeCircles => 3,
            PhantomCase::Crescent => 8,
            PhantomCase::Donut => 16,
        }
    }
}

impl fmt::Display for PhantomCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhantomCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PhantomCase::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown phantom case `{s}` (expected one-inclusion, three-circles, crescent or donut)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disc {
        center: Point2,
        radius: f64,
    },
    /// Outer disc minus a concentric inner disc.
    Annulus {
        center: Point2,
        inner: f64,
        outer: f64,
    },
    /// Disc minus an offset disc.
    Crescent {
        center: Point2,
        radius: f64,
        cut_center: Point2,
        cut_radius: f64,
    },
}

impl Shape {
    pub fn contains(&self, p: Point2) -> bool {
        match *self {
            Shape::Disc { center, radius } => p.distance(center) <= radius,
            Shape::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = p.distance(center);
                r <= outer && r > inner
            }
            Shape::Crescent {
                center,
                radius,
                cut_center,
                cut_radius,
            } => p.distance(center) <= radius && p.distance(cut_center) > cut_radius,
        }
    }

    /// Center and radius of a disc enclosing the shape.
    fn extent(&self) -> (Point2, f64) {
        match *self {
            Shape::Disc { center, radius } => (center, radius),
            Shape::Annulus { center, outer, .. } => (center, outer),
            Shape::Crescent { center, radius, .. } => (center, radius),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Disc { radius, .. } => radius > 0.0,
            Shape::Annulus { inner, outer, .. } => inner >= 0.0 && outer > inner,
            Shape::Crescent {
                radius, cut_radius, ..
            } => radius > 0.0 && cut_radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate shape {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub case: PhantomCase,
    pub shapes: Vec<Shape>,
    /// Absorption increase inside the shapes, cm⁻¹.
    pub contrast: f64,
}

pub const DEFAULT_CONTRAST: f64 = 0.02;

impl PhantomSpec {
    pub fn default_for(case: PhantomCase) -> Self {
        let shapes = match case {
            PhantomCase::OneInclusion => vec![Shape::Disc {
                center: Point2::new(1.0, 0.5),
                radius: 0.6,
            }],
            PhantomCase::ThreeCircles => (0..3)
                .map(|k| {
                    let phi = PI / 2.0 + 2.0 * PI * k as f64 / 3.0;
                    Shape::Disc {
                        center: Point2::new(1.5 * phi.cos(), 1.5 * phi.sin()),
                        radius: 0.5,
                    }
                })
                .collect(),
            PhantomCase::Crescent => vec![Shape::Crescent {
                center: Point2::new(-0.8, 0.0),
                radius: 1.0,
                cut_center: Point2::new(-0.4, 0.0),
                cut_radius: 0.8,
            }],
            PhantomCase::Donut => vec![Shape::Annulus {
                center: Point2::new(0.8, -0.6),
                inner: 0.55,
                outer: 1.1,
            }],
        };
        Self {
            case,
            shapes,
            contrast: DEFAULT_CONTRAST,
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        if !(self.contrast.is_finite() && self.contrast > 0.0) {
            return Err(Error::invalid(format!(
                "phantom contrast must be positive, got {}",
                self.contrast
            )));
        }
        if self.shapes.is_empty() {
            return Err(Error::invalid("phantom has no shapes"));
        }
        for s in &self.shapes {
            s.validate()?;
            let (c, r) = s.extent();
            if c.distance(domain.center) + r > domain.radius_cm + 1e-12 {
                return Err(Error::invalid(format!(
                    "{} shape {s:?} leaves the {} cm domain",
                    self.case, domain.radius_cm
                )));
            }
        }
        Ok(())
    }

    /// Point the plotted line profiles pass through.
    pub fn profile_anchor(&self) -> Point2 {
        match self.shapes[0] {
            Shape::Disc { center, .. } if self.shapes.len() == 1 => center,
            Shape::Annulus { center, .. } => center,
            Shape::Crescent { center, .. } => center,
            _ => Point2::ORIGIN,
        }
    }
}

/// Ground-truth `Δμa` on the active pixels: `contrast` inside any shape, 0 elsewhere.
pub fn make_phantom(spec: &PhantomSpec, grid: &Grid, domain: &Domain) -> Result<Vec<f64>> {
    spec.validate(domain)?;
    Ok((0..grid.n_active())
        .map(|k| {
            let p = grid.active_center(k);
            if spec.shapes.iter().any(|s| s.contains(p)) {
                spec.contrast
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Domain, Grid) {
        let d = Domain::new(3.0).unwrap();
        let g = Grid::build(&d, 0.1, 0.0).unwrap();
        (d, g)
    }

    #[test]
    fn all_defaults_are_binary_and_inside() {
        let (d, g) = setup();
        for case in PhantomCase::ALL {
            let spec = PhantomSpec::default_for(case);
            let f = make_phantom(&spec, &g, &d).unwrap();
            assert!(f.iter().all(|&v| v == 0.0 || v == spec.contrast), "{case}");
            assert!(f.iter().any(|&v| v > 0.0), "{case}");
            assert_eq!(case.as_str().parse::<PhantomCase>().unwrap(), case);
        }
    }

    #[test]
    fn one_inclusion_center_and_area() {
        let (d, g) = setup();
        let spec = PhantomSpec::default_for(PhantomCase::OneInclusion);
        let f = make_phantom(&spec, &g, &d).unwrap();
        let pos = g
            .active_position(g.nearest_pixel(Point2::new(1.0, 0.5)).unwrap())
            .unwrap();
        assert_eq!(f[pos], 0.02);
        // Brute-force count of pixel centers inside the r = 0.6 disc.
        let count = f.iter().filter(|&&v| v > 0.0).count();
        assert!((count as i64 - 113).abs() <= 4, "{count}");
    }

    #[test]
    fn donut_hole_is_empty() {
        let (d, g) = setup();
        let spec = PhantomSpec::default_for(PhantomCase::Donut);
        let f = make_phantom(&spec, &g, &d).unwrap();
        let pos = g
            .active_position(g.nearest_pixel(Point2::new(0.8, -0.6)).unwrap())
            .unwrap();
        assert_eq!(f[pos], 0.0);
    }

    #[test]
    fn shapes_leaving_domain_rejected() {
        let (d, g) = setup();
        let spec = PhantomSpec {
            case: PhantomCase::OneInclusion,
            shapes: vec![Shape::Disc {
                center: Point2::new(2.8, 0.0),
                radius: 0.5,
            }],
            contrast: 0.02,
        };
        assert!(matches!(
            make_phantom(&spec, &g, &d),
            Err(Error::InvalidArgument(_))
        ));
        assert!("square".parse::<PhantomCase>().is_err());
    }
}
