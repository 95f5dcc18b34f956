use serde::{Deserialize, Serialize};

/// A point in the field plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Move at most `step` meters toward `target`; returns the new point and
    /// whether the target was reached.
    pub fn toward(&self, target: &Position, step: f64) -> (Position, bool) {
        let d = self.distance(target);
        if d <= step || d == 0.0 {
            return (*target, true);
        }
        let f = step / d;
        (
            Position::new(self.x + (target.x - self.x) * f, self.y + (target.y - self.y) * f),
            false,
        )
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> Position {
        Position::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Fold a point back into the rectangle by mirror reflection at the edges.
    pub fn reflect(&self, p: Position) -> Position {
        Position::new(fold(p.x, self.x0, self.x1), fold(p.y, self.y0, self.y1))
    }

    pub fn clamp(&self, p: Position) -> Position {
        Position::new(p.x.clamp(self.x0, self.x1), p.y.clamp(self.y0, self.y1))
    }
}

/// Triangle-wave fold of `v` into `[lo, hi]`, i.e. repeated mirror reflection.
pub fn fold(v: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    if (lo..=hi).contains(&v) {
        return v;
    }
    let period = 2.0 * w;
    let m = (v - lo).rem_euclid(period);
    let out = if m <= w { lo + m } else { hi - (m - w) };
    out.clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_reflects_once_and_many_times() {
        assert_eq!(fold(5.0, 0.0, 10.0), 5.0);
        assert!((fold(12.0, 0.0, 10.0) - 8.0).abs() < 1e-12);
        assert!((fold(-3.0, 0.0, 10.0) - 3.0).abs() < 1e-12);
        assert!((fold(27.0, 0.0, 10.0) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn toward_stops_at_target() {
        let a = Position::new(0.0, 0.0);
        let b = Position::new(3.0, 4.0);
        let (p, done) = a.toward(&b, 2.5);
        assert!(!done);
        assert!((p.x - 1.5).abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
        let (p, done) = a.toward(&b, 10.0);
        assert!(done);
        assert_eq!(p, b);
    }
}
