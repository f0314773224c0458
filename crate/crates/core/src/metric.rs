//! Personalization score and strategy choice.
//!
//! A strategy is summarized by its performance on user-specific data
//! (`local`) and on the global data (`global`). Its personalization score is
//! the convex combination `alpha * local + (1 - alpha) * global`. Because the
//! score difference of two strategies is affine in `alpha`, it changes sign
//! at most once; that point is the break-even `alpha`, and the preferred
//! strategy is constant on each side of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance below which two scores are considered equal.
pub const INDIFFERENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Losses, error rates.
    LowerIsBetter,
    /// Accuracies.
    HigherIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfPair {
    pub local: f64,
    pub global: f64,
    pub orientation: Orientation,
}

impl PerfPair {
    pub fn new(local: f64, global: f64, orientation: Orientation) -> Result<Self> {
        if !local.is_finite() || !global.is_finite() {
            return Err(Error::InvalidArgument("performances must be finite".into()));
        }
        Ok(PerfPair {
            local,
            global,
            orientation,
        })
    }

    pub fn accuracy(local: f64, global: f64) -> Result<Self> {
        PerfPair::new(local, global, Orientation::HigherIsBetter)
    }

    pub fn loss(local: f64, global: f64) -> Result<Self> {
        PerfPair::new(local, global, Orientation::LowerIsBetter)
    }

    pub fn scaled(&self, c: f64) -> PerfPair {
        PerfPair {
            local: self.local * c,
            global: self.global * c,
            orientation: self.orientation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    First,
    Second,
    Indifferent,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in [0,1], got {alpha}")))
    }
}

/// `alpha * local + (1 - alpha) * global`.
pub fn personalization_score(alpha: f64, perf: &PerfPair) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * perf.local + (1.0 - alpha) * perf.global)
}

pub fn preferred(alpha: f64, perf0: &PerfPair, perf1: &PerfPair) -> Result<Preference> {
    preferred_with_tol(alpha, perf0, perf1, INDIFFERENCE_TOL)
}

pub fn preferred_with_tol(alpha: f64, perf0: &PerfPair, perf1: &PerfPair, tol: f64) -> Result<Preference> {
    if perf0.orientation != perf1.orientation {
        return Err(Error::OrientationMismatch);
    }
    let diff = personalization_score(alpha, perf0)? - personalization_score(alpha, perf1)?;
    Ok(sign_to_preference(diff, perf0.orientation, tol))
}

/// `diff` is score0 - score1.
fn sign_to_preference(diff: f64, orientation: Orientation, tol: f64) -> Preference {
    if diff.abs() < tol {
        return Preference::Indifferent;
    }
    let first_better = match orientation {
        Orientation::LowerIsBetter => diff < 0.0,
        Orientation::HigherIsBetter => diff > 0.0,
    };
    if first_better {
        Preference::First
    } else {
        Preference::Second
    }
}

/// Where two strategies trade places.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaCutoff {
    /// Break-even alpha in `[0,1]`, or `None` when the preference does not
    /// change over `[0,1]`.
    pub value: Option<f64>,
    /// Preference for alphas above the cutoff (everywhere, when `value` is
    /// `None`).
    pub preferred_above: Preference,
    /// Preference for alphas below the cutoff (everywhere, when `value` is
    /// `None`).
    pub preferred_below: Preference,
}

pub fn breakeven_alpha(perf0: &PerfPair, perf1: &PerfPair) -> Result<AlphaCutoff> {
    breakeven_alpha_with_tol(perf0, perf1, INDIFFERENCE_TOL)
}

/// Solve `score0(alpha) = score1(alpha)`:
/// `alpha = (g1 - g0) / ((p0 - p1) - (g0 - g1))`.
///
/// Cutoffs outside `[0,1]` are reported as `None`, not clamped.
pub fn breakeven_alpha_with_tol(perf0: &PerfPair, perf1: &PerfPair, tol: f64) -> Result<AlphaCutoff> {
    if perf0.orientation != perf1.orientation {
        return Err(Error::OrientationMismatch);
    }
    let (p0, g0, p1, g1) = (perf0.local, perf0.global, perf1.local, perf1.global);
    let orientation = perf0.orientation;
    let constant = |pref| AlphaCutoff {
        value: None,
        preferred_above: pref,
        preferred_below: pref,
    };

    if p0 == p1 && g0 == g1 {
        return Ok(constant(Preference::Indifferent));
    }
    let denom = (p0 - p1) - (g0 - g1);
    let alpha = (g1 - g0) / denom;
    if denom == 0.0 || !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        // The sign of the score difference is fixed on [0,1]; use the
        // endpoint farther from any out-of-range crossing.
        let probe = if alpha.is_finite() && alpha > 1.0 { 0.0 } else { 1.0 };
        return Ok(constant(preferred_with_tol(probe, perf0, perf1, tol)?));
    }

    // diff(a) = score0 - score1 = (g0 - g1) + a * denom. By linearity one
    // point on each side decides that side; when the cutoff sits on an
    // endpoint, the slope decides.
    let slope_above = sign_to_preference(denom, orientation, 0.0);
    let slope_below = sign_to_preference(-denom, orientation, 0.0);
    let preferred_above = if alpha < 1.0 {
        match preferred_with_tol(1.0, perf0, perf1, tol)? {
            Preference::Indifferent => slope_above,
            p => p,
        }
    } else {
        slope_above
    };
    let preferred_below = if alpha > 0.0 {
        match preferred_with_tol(0.0, perf0, perf1, tol)? {
            Preference::Indifferent => slope_below,
            p => p,
        }
    } else {
        slope_below
    };
    Ok(AlphaCutoff {
        value: Some(alpha),
        preferred_above,
        preferred_below,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn score_endpoints_and_midpoint() {
        let p = PerfPair::loss(0.2, 0.4).unwrap();
        assert_eq!(personalization_score(1.0, &p).unwrap(), 0.2);
        assert_eq!(personalization_score(0.0, &p).unwrap(), 0.4);
        assert!((personalization_score(0.5, &p).unwrap() - 0.3).abs() < 1e-15);
        assert!(personalization_score(1.5, &p).is_err());
        assert!(personalization_score(-0.1, &p).is_err());
        assert!(personalization_score(f64::NAN, &p).is_err());
    }

    /// Single vs average at five users: g_avg - g_single = -0.0545 and
    /// p_single - p_avg = -0.00523, read as losses.
    fn five_user_example() -> (PerfPair, PerfPair) {
        let single = PerfPair::loss(0.2, 0.3).unwrap();
        let average = PerfPair::loss(0.2 + 0.00523, 0.3 - 0.0545).unwrap();
        (single, average)
    }

    #[test]
    fn five_user_cutoff() {
        let (s, a) = five_user_example();
        let c = breakeven_alpha(&s, &a).unwrap();
        let alpha = c.value.unwrap();
        assert!((alpha - 0.9124).abs() < 5e-5, "{alpha}");
        assert_eq!(c.preferred_above, Preference::First);
        assert_eq!(c.preferred_below, Preference::Second);
        assert_eq!(preferred(1.0, &s, &a).unwrap(), Preference::First);
        assert_eq!(preferred(alpha, &s, &a).unwrap(), Preference::Indifferent);
    }

    #[test]
    fn equal_globals_give_zero_cutoff() {
        let a = PerfPair::accuracy(0.9, 0.7).unwrap();
        let b = PerfPair::accuracy(0.8, 0.7).unwrap();
        let c = breakeven_alpha(&a, &b).unwrap();
        assert_eq!(c.value, Some(0.0));
        assert_eq!(c.preferred_above, Preference::First);
    }

    #[test]
    fn equal_locals_give_unit_cutoff() {
        let a = PerfPair::accuracy(0.8, 0.7).unwrap();
        let b = PerfPair::accuracy(0.8, 0.75).unwrap();
        let c = breakeven_alpha(&a, &b).unwrap();
        assert_eq!(c.value, Some(1.0));
        assert_eq!(c.preferred_below, Preference::Second);
    }

    #[test]
    fn identical_pairs_are_indifferent() {
        let a = PerfPair::accuracy(0.8, 0.7).unwrap();
        let c = breakeven_alpha(&a, &a).unwrap();
        assert_eq!(c.value, None);
        assert_eq!(c.preferred_above, Preference::Indifferent);
        assert_eq!(c.preferred_below, Preference::Indifferent);
    }

    #[test]
    fn dominance_means_no_cutoff() {
        let a = PerfPair::accuracy(0.9, 0.8).unwrap();
        let b = PerfPair::accuracy(0.85, 0.7).unwrap();
        let c = breakeven_alpha(&a, &b).unwrap();
        assert_eq!(c.value, None);
        assert_eq!(c.preferred_above, Preference::First);
        for i in 0..=100 {
            assert_eq!(preferred(i as f64 / 100.0, &a, &b).unwrap(), Preference::First);
        }
    }

    #[test]
    fn parallel_scores_have_no_cutoff() {
        // Same gap locally and globally: denominator zero.
        let a = PerfPair::loss(0.3, 0.5).unwrap();
        let b = PerfPair::loss(0.2, 0.4).unwrap();
        let c = breakeven_alpha(&a, &b).unwrap();
        assert_eq!(c.value, None);
        assert_eq!(c.preferred_above, Preference::Second);
    }

    #[test]
    fn mismatched_orientations_are_rejected() {
        let a = PerfPair::loss(0.3, 0.5).unwrap();
        let b = PerfPair::accuracy(0.2, 0.4).unwrap();
        assert!(matches!(preferred(0.5, &a, &b), Err(Error::OrientationMismatch)));
        assert!(matches!(breakeven_alpha(&a, &b), Err(Error::OrientationMismatch)));
    }

    #[test]
    fn cutoff_is_invariant_to_loss_accuracy_flip() {
        let acc0 = PerfPair::accuracy(0.806, 0.739).unwrap();
        let acc1 = PerfPair::accuracy(0.801, 0.794).unwrap();
        let err = |p: &PerfPair| PerfPair::loss(1.0 - p.local, 1.0 - p.global).unwrap();
        let a = breakeven_alpha(&acc0, &acc1).unwrap();
        let b = breakeven_alpha(&err(&acc0), &err(&acc1)).unwrap();
        assert!((a.value.unwrap() - b.value.unwrap()).abs() < 1e-12);
        assert_eq!(a.preferred_above, b.preferred_above);
        assert_eq!(a.preferred_below, b.preferred_below);
    }

    fn pair() -> impl Strategy<Value = PerfPair> {
        (0.0f64..1.0, 0.0f64..1.0).prop_map(|(l, g)| PerfPair::accuracy(l, g).unwrap())
    }

    proptest! {
        #[test]
        fn score_is_bounded_and_affine(p in pair(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let s = personalization_score(a, &p).unwrap();
            prop_assert!(s >= p.local.min(p.global) - 1e-15 && s <= p.local.max(p.global) + 1e-15);
            let expected = p.global + a * (p.local - p.global);
            prop_assert!((s - expected).abs() < 1e-12);
            // Three points on one line.
            let m = 0.5 * (a + b);
            let sm = personalization_score(m, &p).unwrap();
            let sb = personalization_score(b, &p).unwrap();
            prop_assert!((sm - 0.5 * (s + sb)).abs() < 1e-12);
        }

        #[test]
        fn cutoff_equalizes_scores(p0 in pair(), p1 in pair()) {
            let c = breakeven_alpha(&p0, &p1).unwrap();
            if let Some(alpha) = c.value {
                let d = personalization_score(alpha, &p0).unwrap() - personalization_score(alpha, &p1).unwrap();
                prop_assert!(d.abs() < 1e-9);
            }
        }

        #[test]
        fn preference_is_constant_on_each_side(p0 in pair(), p1 in pair()) {
            let c = breakeven_alpha(&p0, &p1).unwrap();
            let cut = c.value;
            for i in 0..=100 {
                let a = i as f64 / 100.0;
                let pref = preferred(a, &p0, &p1).unwrap();
                if pref == Preference::Indifferent {
                    continue;
                }
                let expected = match cut {
                    Some(x) if a > x => c.preferred_above,
                    Some(x) if a < x => c.preferred_below,
                    Some(_) => Preference::Indifferent,
                    None => c.preferred_above,
                };
                prop_assert_eq!(pref, expected, "alpha {} cutoff {:?}", a, cut);
            }
        }

        #[test]
        fn decision_is_scale_invariant(p0 in pair(), p1 in pair(), scale in 0.01f64..100.0) {
            let c = breakeven_alpha(&p0, &p1).unwrap();
            let d = breakeven_alpha(&p0.scaled(scale), &p1.scaled(scale)).unwrap();
            match (c.value, d.value) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (None, None) => {}
                (x, y) => {
                    // Only a cutoff sitting on the boundary of [0,1] may flip
                    // in or out through rounding.
                    let v = x.or(y).unwrap();
                    prop_assert!(v.abs() < 1e-9 || (v - 1.0).abs() < 1e-9);
                }
            }
            prop_assert_eq!(c.preferred_above, d.preferred_above);
            prop_assert_eq!(c.preferred_below, d.preferred_below);
        }
    }
}
