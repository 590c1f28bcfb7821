//! The mixing density p(α) on [0, 1]: weighted atoms plus
//! piecewise-uniform pieces, with closed-form moments and a deterministic
//! support-point grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point mass at `location` ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Uniform mass on the interval [lower, upper).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
}

/// One support point of a discretized density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub weight: f64,
}

/// Second-order moments of p(α) against the interpolation basis
/// {(1−α), α}.
///
/// c00 = E\[(1−α)²\], c01 = E\[(1−α)α\], c11 = E\[α²\].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub c00: f64,
    pub c01: f64,
    pub c11: f64,
}

impl Moments {
    pub fn delta(&self) -> f64 {
        self.c00 * self.c11 - self.c01 * self.c01
    }

    /// Discrete moments of a weighted point set.
    pub fn from_points(points: &[AlphaPoint]) -> Self {
        let mut m = Moments {
            c00: 0.0,
            c01: 0.0,
            c11: 0.0,
        };
        for p in points {
            let om = 1.0 - p.alpha;
            m.c00 += p.weight * om * om;
            m.c01 += p.weight * om * p.alpha;
            m.c11 += p.weight * p.alpha * p.alpha;
        }
        m
    }
}

/// Normalized mixing density over interpolation coefficients.
///
/// Atoms are sorted by location with duplicates merged; pieces are sorted
/// and must not overlap. Total mass is normalized to 1 at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaDensity {
    atoms: Vec<Atom>,
    pieces: Vec<Piece>,
}

impl AlphaDensity {
    pub fn new(atoms: Vec<Atom>, pieces: Vec<Piece>) -> Result<Self> {
        for a in &atoms {
            if !(0.0..=1.0).contains(&a.location) || !a.location.is_finite() {
                return Err(Error::Domain(format!(
                    "atom location {} outside [0, 1]",
                    a.location
                )));
            }
            if a.mass < 0.0 || !a.mass.is_finite() {
                return Err(Error::Domain(format!("atom mass {} invalid", a.mass)));
            }
        }
        for p in &pieces {
            if !(p.lower.is_finite() && p.upper.is_finite()) || p.lower < 0.0 || p.upper > 1.0 {
                return Err(Error::Domain(format!(
                    "piece [{}, {}) outside [0, 1]",
                    p.lower, p.upper
                )));
            }
            if p.lower >= p.upper {
                return Err(Error::Domain(format!(
                    "piece [{}, {}) is empty or inverted",
                    p.lower, p.upper
                )));
            }
            if p.mass < 0.0 || !p.mass.is_finite() {
                return Err(Error::Domain(format!("piece mass {} invalid", p.mass)));
            }
        }

        let mut atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.mass > 0.0).collect();
        let mut pieces: Vec<Piece> = pieces.into_iter().filter(|p| p.mass > 0.0).collect();
        atoms.sort_by(|x, y| x.location.total_cmp(&y.location));
        pieces.sort_by(|x, y| x.lower.total_cmp(&y.lower));

        // Merge atoms at identical locations.
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(prev) if prev.location == a.location => prev.mass += a.mass,
                _ => merged.push(a),
            }
        }
        let atoms = merged;

        for w in pieces.windows(2) {
            if w[1].lower < w[0].upper {
                return Err(Error::Domain(format!(
                    "pieces [{}, {}) and [{}, {}) overlap",
                    w[0].lower, w[0].upper, w[1].lower, w[1].upper
                )));
            }
        }

        let total: f64 =
            atoms.iter().map(|a| a.mass).sum::<f64>() + pieces.iter().map(|p| p.mass).sum::<f64>();
        if total <= 0.0 {
            return Err(Error::Domain("density has zero total mass".into()));
        }
        Ok(Self {
            atoms: atoms
                .into_iter()
                .map(|a| Atom {
                    mass: a.mass / total,
                    ..a
                })
                .collect(),
            pieces: pieces
                .into_iter()
                .map(|p| Piece {
                    mass: p.mass / total,
                    ..p
                })
                .collect(),
        })
    }

    /// Uniform density on [0, 1].
    pub fn uniform() -> Self {
        Self::new(
            vec![],
            vec![Piece {
                lower: 0.0,
                upper: 1.0,
                mass: 1.0,
            }],
        )
        .expect("uniform density is valid")
    }

    /// A single point mass.
    pub fn single_atom(location: f64) -> Result<Self> {
        Self::new(
            vec![Atom {
                location,
                mass: 1.0,
            }],
            vec![],
        )
    }

    /// Equal point masses on both segment endpoints (α = 0 and α = 1).
    pub fn endpoint_atoms() -> Self {
        Self::new(
            vec![
                Atom {
                    location: 0.0,
                    mass: 0.5,
                },
                Atom {
                    location: 1.0,
                    mass: 0.5,
                },
            ],
            vec![],
        )
        .expect("endpoint atoms are valid")
    }

    /// Reference density for image-scale runs: mass near both endpoints, a
    /// midpoint atom, and two flanking bands, with a gap on (0.1, 0.3) and
    /// (0.7, 0.9).
    pub fn preset_image() -> Self {
        Self::banded(0.87, 0.5)
    }

    /// Reference density for video-scale runs.
    pub fn preset_video() -> Self {
        Self::banded(0.25, 0.15)
    }

    /// Reference density for 3D-scale runs.
    pub fn preset_3d() -> Self {
        Self::banded(0.35, 0.5)
    }

    fn banded(inner_mass: f64, midpoint_mass: f64) -> Self {
        Self::new(
            vec![Atom {
                location: 0.5,
                mass: midpoint_mass,
            }],
            vec![
                Piece {
                    lower: 0.0,
                    upper: 0.1,
                    mass: 1.0,
                },
                Piece {
                    lower: 0.3,
                    upper: 0.5,
                    mass: inner_mass,
                },
                Piece {
                    lower: 0.5,
                    upper: 0.7,
                    mass: inner_mass,
                },
                Piece {
                    lower: 0.9,
                    upper: 1.0,
                    mass: 1.0,
                },
            ],
        )
        .expect("banded preset is valid")
    }

    /// Look up a named preset density.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-image" => Some(Self::preset_image()),
            "paper-video" => Some(Self::preset_video()),
            "paper-3d" => Some(Self::preset_3d()),
            "uniform" => Some(Self::uniform()),
            "endpoints" => Some(Self::endpoint_atoms()),
            _ => None,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>()
            + self.pieces.iter().map(|p| p.mass).sum::<f64>()
    }

    /// Convex combination: `weight`·a + (1−`weight`)·b.
    ///
    /// Piece intervals from the two densities must not overlap unless
    /// identical.
    pub fn blend(weight: f64, a: &AlphaDensity, b: &AlphaDensity) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Domain(format!(
                "blend weight {weight} outside [0, 1]"
            )));
        }
        let mut atoms: Vec<Atom> = Vec::new();
        let mut pieces: Vec<Piece> = Vec::new();
        for (scale, src) in [(weight, a), (1.0 - weight, b)] {
            atoms.extend(src.atoms.iter().map(|at| Atom {
                mass: at.mass * scale,
                ..*at
            }));
            for p in &src.pieces {
                match pieces
                    .iter_mut()
                    .find(|q| q.lower == p.lower && q.upper == p.upper)
                {
                    Some(q) => q.mass += p.mass * scale,
                    None => pieces.push(Piece {
                        mass: p.mass * scale,
                        ..*p
                    }),
                }
            }
        }
        Self::new(atoms, pieces)
    }

    /// Closed-form moments against {(1−α), α}.
    ///
    /// For a uniform piece [l, u) of mass w:
    ///   ∫ (1−α)² = w·((1−l)³ − (1−u)³) / (3(u−l))
    ///   ∫ α²     = w·(u³ − l³) / (3(u−l))
    ///   ∫ (1−α)α = w·((u²−l²)/2 − (u³−l³)/3) / (u−l)
    pub fn moments(&self) -> Moments {
        let mut m = Moments {
            c00: 0.0,
            c01: 0.0,
            c11: 0.0,
        };
        for a in &self.atoms {
            let om = 1.0 - a.location;
            m.c00 += a.mass * om * om;
            m.c01 += a.mass * om * a.location;
            m.c11 += a.mass * a.location * a.location;
        }
        for p in &self.pieces {
            let (l, u, w) = (p.lower, p.upper, p.mass);
            let len = u - l;
            let second = (u * u * u - l * l * l) / 3.0;
            let first = (u * u - l * l) / 2.0;
            m.c00 += w * ((1.0 - l).powi(3) - (1.0 - u).powi(3)) / (3.0 * len);
            m.c01 += w * (first - second) / len;
            m.c11 += w * second / len;
        }
        m
    }

    /// Mean of α under the density.
    pub fn mean(&self) -> f64 {
        let m = self.moments();
        m.c01 + m.c11
    }

    /// Deterministic k-point discretization.
    ///
    /// Atoms always become grid points with their masses. Remaining points
    /// are spread over the pieces: when every piece can get at least one
    /// representative, extra points are allocated proportionally to piece
    /// mass (highest-average rule) and placed evenly inside each piece;
    /// otherwise atoms keep their points and pieces are ranked by
    /// descending mass (ties toward the lower interval), with the mass of
    /// unranked pieces folded into the nearest surviving grid point.
    pub fn grid(&self, k: usize) -> Result<Vec<AlphaPoint>> {
        if k < 2 {
            return Err(Error::Config(format!("grid size k = {k} must be >= 2")));
        }
        let n_atoms = self.atoms.len();
        if k < n_atoms {
            return Err(Error::Config(format!(
                "grid size k = {k} smaller than the atom count {n_atoms}"
            )));
        }
        let budget = k - n_atoms;
        if budget > 0 && self.pieces.is_empty() {
            return Err(Error::Config(format!(
                "insufficient support: k = {k} points requested from {n_atoms} atom(s) and no pieces"
            )));
        }

        let mut points: Vec<AlphaPoint> = self
            .atoms
            .iter()
            .map(|a| AlphaPoint {
                alpha: a.location,
                weight: a.mass,
            })
            .collect();

        if budget >= self.pieces.len() {
            // One representative per piece, extras by highest average mass.
            let mut alloc = vec![1usize; self.pieces.len()];
            let mut extras = budget - self.pieces.len();
            while extras > 0 {
                let mut best = 0usize;
                let mut best_avg = f64::NEG_INFINITY;
                for (j, p) in self.pieces.iter().enumerate() {
                    let avg = p.mass / (alloc[j] + 1) as f64;
                    if avg > best_avg {
                        best_avg = avg;
                        best = j;
                    }
                }
                alloc[best] += 1;
                extras -= 1;
            }
            for (p, &m) in self.pieces.iter().zip(&alloc) {
                for i in 0..m {
                    points.push(AlphaPoint {
                        alpha: p.lower + (p.upper - p.lower) * (2 * i + 1) as f64 / (2 * m) as f64,
                        weight: p.mass / m as f64,
                    });
                }
            }
        } else {
            // Not every piece fits: keep the heaviest `budget` pieces.
            let mut order: Vec<usize> = (0..self.pieces.len()).collect();
            order.sort_by(|&i, &j| {
                self.pieces[j]
                    .mass
                    .total_cmp(&self.pieces[i].mass)
                    .then(self.pieces[i].lower.total_cmp(&self.pieces[j].lower))
            });
            let (selected, dropped) = order.split_at(budget);
            for &j in selected {
                let p = &self.pieces[j];
                points.push(AlphaPoint {
                    alpha: (p.lower + p.upper) / 2.0,
                    weight: p.mass,
                });
            }
            for &j in dropped {
                let p = &self.pieces[j];
                let mid = (p.lower + p.upper) / 2.0;
                let nearest = points
                    .iter()
                    .enumerate()
                    .min_by(|(_, x), (_, y)| {
                        (x.alpha - mid)
                            .abs()
                            .total_cmp(&(y.alpha - mid).abs())
                            .then(x.alpha.total_cmp(&y.alpha))
                    })
                    .map(|(i, _)| i)
                    .expect("at least one grid point exists");
                points[nearest].weight += p.mass;
            }
        }

        points.sort_by(|x, y| x.alpha.total_cmp(&y.alpha));
        debug_assert_eq!(points.len(), k);
        Ok(points)
    }

    /// Draw one α: atoms by mass, pieces uniformly within their interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.total_mass();
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.mass;
            if u < acc {
                return a.location;
            }
        }
        for p in &self.pieces {
            acc += p.mass;
            if u < acc {
                return p.lower + rng.random::<f64>() * (p.upper - p.lower);
            }
        }
        // Fall through only on rounding at u ≈ 1.
        match self.pieces.last() {
            Some(p) => p.lower + rng.random::<f64>() * (p.upper - p.lower),
            None => self.atoms.last().expect("density is nonempty").location,
        }
    }
}
