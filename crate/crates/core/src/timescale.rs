//! Finite-segment time scales.
//!
//! A [`TimeScale`] is a finite union of disjoint closed intervals, where an
//! interval `[a, a]` is an isolated point. Every query (jump operators,
//! graininess, kappa trims, the dual scale) is exact: nothing is discretized
//! until [`TimeScale::grid`] is called.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when deciding whether a real number is a member.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// A closed interval `[lo, hi]` of a time scale. `lo == hi` is an isolated point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
}

impl Segment {
    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

/// Which kappa trim to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kappa {
    /// `T^κ`: drop a left-scattered supremum.
    Upper,
    /// `T_κ`: drop a right-scattered infimum.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightClass {
    Dense,
    Scattered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftClass {
    Dense,
    Scattered,
}

/// Jump operators, graininess and classification of a single member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointInfo {
    pub t: f64,
    pub sigma: f64,
    pub rho: f64,
    pub mu: f64,
    pub nu: f64,
    pub right: RightClass,
    pub left: LeftClass,
}

impl PointInfo {
    pub fn is_right_scattered(&self) -> bool {
        self.right == RightClass::Scattered
    }

    pub fn is_left_scattered(&self) -> bool {
        self.left == LeftClass::Scattered
    }
}

/// A nonempty finite union of disjoint closed bounded intervals.
///
/// Segments are kept sorted with `hi_k < lo_{k+1}`; touching or overlapping
/// input intervals are merged at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct TimeScale {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<(f64, f64)>> for TimeScale {
    type Error = Error;

    fn try_from(pairs: Vec<(f64, f64)>) -> Result<Self> {
        TimeScale::new(&pairs)
    }
}

impl From<TimeScale> for Vec<(f64, f64)> {
    fn from(ts: TimeScale) -> Self {
        ts.pairs()
    }
}

impl TimeScale {
    /// Builds a time scale from `(a, b)` pairs, sorting and merging them.
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyScale);
        }
        let mut segs = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            for x in [a, b] {
                if !x.is_finite() {
                    return Err(Error::NonFinite(x));
                }
            }
            if a > b {
                return Err(Error::InvertedSegment(a, b));
            }
            segs.push(Segment { lo: a, hi: b });
        }
        segs.sort_by(|x, y| x.lo.total_cmp(&y.lo).then(x.hi.total_cmp(&y.hi)));

        let mut merged: Vec<Segment> = Vec::with_capacity(segs.len());
        for s in segs {
            match merged.last_mut() {
                Some(last) if s.lo <= last.hi => last.hi = last.hi.max(s.hi),
                _ => merged.push(s),
            }
        }
        Ok(TimeScale { segments: merged })
    }

    /// The scale `{t0, t0 + h, ..., t0 + k h}` of equally spaced isolated points.
    pub fn uniform_points(t0: f64, h: f64, count: usize) -> Result<Self> {
        let pairs: Vec<_> = (0..count)
            .map(|k| {
                let t = t0 + h * k as f64;
                (t, t)
            })
            .collect();
        Self::new(&pairs)
    }

    /// Isolated points at exactly the given values.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        let pairs: Vec<_> = points.iter().map(|&p| (p, p)).collect();
        Self::new(&pairs)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.segments.iter().map(|s| (s.lo, s.hi)).collect()
    }

    pub fn inf(&self) -> f64 {
        self.segments[0].lo
    }

    pub fn sup(&self) -> f64 {
        self.segments[self.segments.len() - 1].hi
    }

    /// True when the scale has no dense part.
    pub fn is_discrete(&self) -> bool {
        self.segments.iter().all(Segment::is_point)
    }

    /// True when the scale is a single nondegenerate interval.
    pub fn is_interval(&self) -> bool {
        self.segments.len() == 1 && !self.segments[0].is_point()
    }

    /// Locates `t` (within [`MEMBERSHIP_TOL`]) and returns the segment index
    /// together with `t` snapped onto a segment endpoint when it is that close.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        if !t.is_finite() {
            return None;
        }
        let idx = self
            .segments
            .partition_point(|s| s.hi + MEMBERSHIP_TOL < t);
        let s = self.segments.get(idx)?;
        if t < s.lo - MEMBERSHIP_TOL {
            return None;
        }
        let snapped = if (t - s.lo).abs() <= MEMBERSHIP_TOL {
            s.lo
        } else if (t - s.hi).abs() <= MEMBERSHIP_TOL {
            s.hi
        } else {
            t
        };
        Some((idx, snapped))
    }

    pub fn contains(&self, t: f64) -> bool {
        self.locate(t).is_some()
    }

    /// Returns the member equal to `t` up to the membership tolerance.
    pub fn snap(&self, t: f64) -> Result<f64> {
        self.locate(t).map(|(_, s)| s).ok_or(Error::NotMember(t))
    }

    pub fn classify(&self, t: f64) -> Result<PointInfo> {
        let (k, t) = self.locate(t).ok_or(Error::NotMember(t))?;
        let seg = self.segments[k];
        let sigma = if t < seg.hi {
            t
        } else {
            self.segments.get(k + 1).map_or(t, |next| next.lo)
        };
        let rho = if t > seg.lo || k == 0 { t } else { self.segments[k - 1].hi };
        let mu = sigma - t;
        let nu = t - rho;
        Ok(PointInfo {
            t,
            sigma,
            rho,
            mu,
            nu,
            right: if mu == 0.0 { RightClass::Dense } else { RightClass::Scattered },
            left: if nu == 0.0 { LeftClass::Dense } else { LeftClass::Scattered },
        })
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        Ok(self.classify(t)?.sigma)
    }

    pub fn rho(&self, t: f64) -> Result<f64> {
        Ok(self.classify(t)?.rho)
    }

    /// The dual scale `{-t : t ∈ T}`. Applying it twice returns the original
    /// scale bit for bit.
    pub fn dual(&self) -> TimeScale {
        let segments = self
            .segments
            .iter()
            .rev()
            .map(|s| Segment { lo: -s.hi, hi: -s.lo })
            .collect();
        TimeScale { segments }
    }

    pub fn trim_kappa(&self, side: Kappa) -> Result<TimeScale> {
        let mut segments = self.segments.clone();
        match side {
            Kappa::Upper => {
                if self.classify(self.sup())?.is_left_scattered() {
                    segments.pop();
                }
            }
            Kappa::Lower => {
                if self.classify(self.inf())?.is_right_scattered() {
                    segments.remove(0);
                }
            }
        }
        if segments.is_empty() {
            return Err(Error::DegenerateScale);
        }
        Ok(TimeScale { segments })
    }

    /// Whether `t` belongs to `T^κ` (or `T_κ`), without building the trimmed scale.
    pub fn in_kappa(&self, t: f64, side: Kappa) -> bool {
        let Ok(info) = self.classify(t) else {
            return false;
        };
        match side {
            Kappa::Upper => !(info.t == self.sup() && info.is_left_scattered()),
            Kappa::Lower => !(info.t == self.inf() && info.is_right_scattered()),
        }
    }

    /// `[t0, t1] ∩ T` as a time scale of its own.
    pub fn restrict(&self, t0: f64, t1: f64) -> Result<TimeScale> {
        let (t0, t1) = self.window(t0, t1)?;
        let segments = self
            .segments
            .iter()
            .filter(|s| s.hi >= t0 && s.lo <= t1)
            .map(|s| Segment { lo: s.lo.max(t0), hi: s.hi.min(t1) })
            .collect();
        Ok(TimeScale { segments })
    }

    fn window(&self, t0: f64, t1: f64) -> Result<(f64, f64)> {
        let bad = || Error::BadWindow(t0, t1);
        let a = self.snap(t0).map_err(|_| bad())?;
        let b = self.snap(t1).map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        Ok((a, b))
    }

    /// Discretization of `[t0, t1] ∩ T`: every isolated point and segment end,
    /// plus a uniform mesh with step at most `h_dense` in each dense piece.
    pub fn grid(&self, t0: f64, t1: f64, h_dense: f64) -> Result<Vec<f64>> {
        if !(h_dense > 0.0) || !h_dense.is_finite() {
            return Err(Error::BadWindow(t0, t1));
        }
        let (t0, t1) = self.window(t0, t1)?;
        let mut out = Vec::new();
        for s in &self.segments {
            if s.hi < t0 || s.lo > t1 {
                continue;
            }
            let lo = s.lo.max(t0);
            let hi = s.hi.min(t1);
            if lo == hi {
                out.push(lo);
                continue;
            }
            let len = hi - lo;
            let steps = ((len / h_dense) - 1e-9).ceil().max(1.0) as usize;
            out.push(lo);
            for k in 1..steps {
                out.push(lo + len * (k as f64) / (steps as f64));
            }
            out.push(hi);
        }
        Ok(out)
    }

    /// Dense-piece grid over the whole scale.
    pub fn full_grid(&self, h_dense: f64) -> Result<Vec<f64>> {
        if self.inf() == self.sup() {
            return Ok(vec![self.inf()]);
        }
        self.grid(self.inf(), self.sup(), h_dense)
    }
}
