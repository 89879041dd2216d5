//! Equidistant B-spline bases for penalized smooth terms.

use crate::error::{Error, Result};

/// Full knot vector for `inner` equally spaced interior knots on
/// `[lo, hi]`, extended `degree` knots past each boundary at the same
/// spacing. The resulting basis has `inner + degree + 1` functions.
pub fn equidistant_knots(lo: f64, hi: f64, inner: usize, degree: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) || hi - lo <= 0.0 {
        return Err(Error::Calibration {
            learner: "pspline".into(),
            reason: format!("degenerate covariate range [{lo}, {hi}]"),
        });
    }
    let h = (hi - lo) / (inner as f64 + 1.0);
    let total = inner + 2 + 2 * degree;
    let mut knots = Vec::with_capacity(total);
    for j in 0..total {
        knots.push(lo + (j as f64 - degree as f64) * h);
    }
    Ok(knots)
}

pub fn basis_count(knots: &[f64], degree: usize) -> usize {
    knots.len() - degree - 1
}

/// Evaluate all basis functions at `x` into `row` (length `basis_count`).
///
/// Points beyond the boundary knots reuse the outermost polynomial span, so
/// the basis extends smoothly instead of dropping to zero and the row still
/// sums to one everywhere.
pub fn basis_row(knots: &[f64], degree: usize, x: f64, row: &mut [f64]) {
    let nb = basis_count(knots, degree);
    debug_assert_eq!(row.len(), nb);
    row.fill(0.0);

    // valid spans run from `degree` to `nb - 1`
    let span = if x < knots[degree] {
        degree
    } else if x >= knots[nb] {
        nb - 1
    } else {
        // knots are equidistant, so the span is a direct computation with a
        // guard against rounding at the edges
        let h = knots[1] - knots[0];
        (((x - knots[0]) / h) as usize).clamp(degree, nb - 1)
    };

    // Cox-de Boor with the triangular scheme over the d+1 active functions.
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    let mut vals = vec![0.0; degree + 1];
    vals[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = vals[r] / (right[r + 1] + left[j - r]);
            vals[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        vals[j] = saved;
    }
    for (r, &v) in vals.iter().enumerate() {
        row[span - degree + r] = v;
    }
}

/// Reference evaluation of a single basis function straight from the
/// two-term recursion; quadratic in the degree.
#[cfg(test)]
pub fn basis_reference(knots: &[f64], degree: usize, i: usize, x: f64, span: usize) -> f64 {
    // indicator on the clamped span keeps the reference consistent with the
    // extended evaluation above
    if degree == 0 {
        return if i == span { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[i + degree] - knots[i];
    if d1 > 0.0 {
        v += (x - knots[i]) / d1 * basis_reference(knots, degree - 1, i, x, span);
    }
    let d2 = knots[i + degree + 1] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + degree + 1] - x) / d2 * basis_reference(knots, degree - 1, i + 1, x, span);
    }
    v
}
