//! Extended nonnegative reals: a finite value or +∞.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use serde::{Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ext {
    Finite(f64),
    Infinite,
}

impl Ext {
    pub const ZERO: Ext = Ext::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, Ext::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ext::Finite(v) => Some(v),
            Ext::Infinite => None,
        }
    }

    pub fn sq(self) -> Ext {
        self.map(|v| v * v)
    }

    pub fn sqrt(self) -> Ext {
        self.map(f64::sqrt)
    }

    /// Multiplication by a nonnegative finite scalar. `0·∞` is taken as ∞,
    /// so a missing term is never silently dropped.
    pub fn scale(self, s: f64) -> Ext {
        self.map(|v| v * s)
    }

    pub fn min(self, other: Ext) -> Ext {
        if self <= other {
            self
        } else {
            other
        }
    }

    fn map(self, f: impl FnOnce(f64) -> f64) -> Ext {
        match self {
            Ext::Finite(v) => Ext::Finite(f(v)),
            Ext::Infinite => Ext::Infinite,
        }
    }
}

impl From<f64> for Ext {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Ext::Finite(v)
        } else {
            Ext::Infinite
        }
    }
}

impl Add for Ext {
    type Output = Ext;
    fn add(self, rhs: Ext) -> Ext {
        match (self, rhs) {
            (Ext::Finite(a), Ext::Finite(b)) => Ext::Finite(a + b),
            _ => Ext::Infinite,
        }
    }
}

impl std::iter::Sum for Ext {
    fn sum<I: Iterator<Item = Ext>>(iter: I) -> Ext {
        iter.fold(Ext::ZERO, |a, b| a + b)
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Ext::Finite(a), Ext::Finite(b)) => a.partial_cmp(b),
            (Ext::Finite(_), Ext::Infinite) => Some(Ordering::Less),
            (Ext::Infinite, Ext::Finite(_)) => Some(Ordering::Greater),
            (Ext::Infinite, Ext::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::Finite(v) => write!(f, "{v}"),
            Ext::Infinite => write!(f, "inf"),
        }
    }
}

/// Serialized as a number, or `null` for ∞.
impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ext::Finite(v) => s.serialize_f64(*v),
            Ext::Infinite => s.serialize_none(),
        }
    }
}
