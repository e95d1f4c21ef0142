//! Clamped B-spline bases on `[0, 1]` with empirical-quantile interior knots.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// A clamped B-spline basis of a fixed order on `[0, 1]`.
///
/// The knot vector has `num_basis + order` entries: `order` copies of 0,
/// the strictly increasing interior knots, then `order` copies of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineBasisRepr", into = "SplineBasisRepr")]
pub struct SplineBasis {
    order: usize,
    knots: Vec<f64>,
    requested_num_basis: usize,
}

#[derive(Serialize, Deserialize)]
struct SplineBasisRepr {
    order: usize,
    num_basis: usize,
    requested_num_basis: usize,
    knots: Vec<f64>,
}

impl TryFrom<SplineBasisRepr> for SplineBasis {
    type Error = Error;

    fn try_from(r: SplineBasisRepr) -> Result<Self> {
        let basis = SplineBasis::from_knots(r.order, r.knots)?;
        if basis.num_basis() != r.num_basis {
            return Err(Error::invalid(format!(
                "basis declares {} functions but its knots imply {}",
                r.num_basis,
                basis.num_basis()
            )));
        }
        Ok(SplineBasis {
            requested_num_basis: r.requested_num_basis,
            ..basis
        })
    }
}

impl From<SplineBasis> for SplineBasisRepr {
    fn from(b: SplineBasis) -> Self {
        SplineBasisRepr {
            order: b.order,
            num_basis: b.num_basis(),
            requested_num_basis: b.requested_num_basis,
            knots: b.knots,
        }
    }
}

/// Number of basis functions for a training set of `n` rows: `2 n^(1/5)`
/// rounded half away from zero, never below `order`.
pub fn choose_num_basis(n: usize, order: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::invalid("cannot size a basis from zero training rows"));
    }
    let k = (2.0 * (n as f64).powf(0.2)).round() as usize;
    Ok(k.max(order))
}

/// Empirical quantile of sorted data with linear interpolation between
/// order statistics (position `(n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Build a basis with `num_basis` functions whose interior knots sit at the
/// equally spaced empirical quantiles of `values`.
///
/// Interior knots that coincide (heavy ties) or land on the boundary are
/// collapsed, which lowers the number of basis functions. The reduction is
/// logged and kept in [`SplineBasis::requested_num_basis`].
pub fn build_basis(values: &[f64], num_basis: usize, order: usize) -> Result<SplineBasis> {
    if values.is_empty() {
        return Err(Error::invalid("cannot place knots from an empty sample"));
    }
    if order == 0 {
        return Err(Error::invalid("spline order must be at least 1"));
    }
    if num_basis < order {
        return Err(Error::invalid(format!(
            "number of basis functions ({num_basis}) must be at least the order ({order})"
        )));
    }
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain {
                what: "knot placement sample".into(),
                value: v,
            });
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let n_interior = num_basis - order;
    let mut interior: Vec<f64> = Vec::with_capacity(n_interior);
    for i in 1..=n_interior {
        let q = quantile_sorted(&sorted, i as f64 / (n_interior + 1) as f64);
        if q <= 0.0 || q >= 1.0 {
            continue;
        }
        if interior.last().is_some_and(|&last| q <= last) {
            continue;
        }
        interior.push(q);
    }
    if interior.len() < n_interior {
        warn!(
            "collapsed {} tied quantile knot(s); basis reduced from {} to {} functions",
            n_interior - interior.len(),
            num_basis,
            order + interior.len()
        );
    }

    let mut knots = vec![0.0; order];
    knots.extend_from_slice(&interior);
    knots.extend(std::iter::repeat_n(1.0, order));
    Ok(SplineBasis {
        order,
        knots,
        requested_num_basis: num_basis,
    })
}

impl SplineBasis {
    /// Construct from an explicit clamped knot vector, validating it.
    pub fn from_knots(order: usize, knots: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("spline order must be at least 1"));
        }
        if knots.len() < 2 * order {
            return Err(Error::invalid(format!(
                "knot vector of length {} is too short for order {order}",
                knots.len()
            )));
        }
        let m = knots.len();
        if knots[..order].iter().any(|&t| t != 0.0) || knots[m - order..].iter().any(|&t| t != 1.0)
        {
            return Err(Error::invalid(
                "knot vector must be clamped at 0 and 1 with multiplicity equal to the order",
            ));
        }
        let interior = &knots[order..m - order];
        let mut prev = 0.0;
        for &t in interior {
            if !(t > prev && t < 1.0) {
                return Err(Error::invalid(
                    "interior knots must be strictly increasing inside (0, 1)",
                ));
            }
            prev = t;
        }
        let num_basis = m - order;
        Ok(SplineBasis {
            order,
            knots,
            requested_num_basis: num_basis,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions `K`.
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.order
    }

    /// `K` as requested before tied knots were collapsed.
    pub fn requested_num_basis(&self) -> usize {
        self.requested_num_basis
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.order..self.knots.len() - self.order]
    }

    /// Distinct knot values, i.e. the breakpoints of the piecewise polynomial.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend_from_slice(self.interior_knots());
        b.push(1.0);
        b
    }

    /// Index `i` of the knot span `[t_i, t_{i+1})` containing `x`, with
    /// `x = 1` assigned to the last non-empty span.
    fn span(&self, x: f64) -> usize {
        let last = self.num_basis() - 1;
        if x >= 1.0 {
            return last;
        }
        // knots[order-1] == 0 and knots[last+1] == 1, so the search is over
        // the interior breakpoints only.
        let lo = self.order - 1;
        let upper = self.knots[lo + 1..=last].partition_point(|&t| t <= x);
        lo + upper
    }

    /// Evaluate the `order` basis functions that can be nonzero at `x`.
    ///
    /// Returns the index of the first of them and their values. `x` is
    /// clamped into `[0, 1]`.
    pub fn eval_nonzero(&self, x: f64) -> (usize, Vec<f64>) {
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        let p = self.order - 1;
        let i = self.span(x);
        let mut n = vec![0.0; self.order];
        // Clamped ends interpolate; set them exactly rather than through the
        // recursion, which can round the last basis at 1 to 1 - ulp.
        if x == 0.0 {
            n[0] = 1.0;
            return (i - p, n);
        }
        if x == 1.0 {
            n[p] = 1.0;
            return (i - p, n);
        }
        let t = &self.knots;
        let mut left = vec![0.0; self.order];
        let mut right = vec![0.0; self.order];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[i + 1 - j];
            right[j] = t[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (i - p, n)
    }

    /// Evaluate all `K` basis functions at `x` (clamped into `[0, 1]`).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis()];
        let (first, vals) = self.eval_nonzero(x);
        out[first..first + vals.len()].copy_from_slice(&vals);
        out
    }

    /// `∫₀¹ b_k(x) dx` for every basis function, by composite Gauss–Legendre
    /// quadrature over the knot spans with enough nodes to be exact for the
    /// basis degree.
    pub fn integrals(&self) -> Vec<f64> {
        let k = self.num_basis();
        let nodes = self.order.div_ceil(2).max(1);
        let mut out = vec![0.0; k];
        let (gx, gw) = quadrature::gauss_legendre(nodes);
        for w in self.breakpoints().windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in gx.iter().zip(&gw) {
                let (first, vals) = self.eval_nonzero(mid + half * xi);
                for (r, v) in vals.iter().enumerate() {
                    out[first + r] += half * wi * v;
                }
            }
        }
        out
    }
}

/// `basis.integrals()` as a free function.
pub fn basis_integrals(basis: &SplineBasis) -> Vec<f64> {
    basis.integrals()
}

/// `basis.eval(x)` as a free function.
pub fn eval_basis(basis: &SplineBasis, x: f64) -> Vec<f64> {
    basis.eval(x)
}
