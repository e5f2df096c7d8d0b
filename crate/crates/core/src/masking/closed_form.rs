use crate::error::{Error, PairViolation, Result};
use crate::kinship::{kinship, PairCounts};

use super::{within_ceiling, Phi};

/// Number of both-heterozygous positions to hide from one member of a pair
/// so its kinship drops to at most `phi`.
///
/// Each such removal takes one off `n11` and off both heterozygote counts,
/// which leaves the heterozygote difference (and so the orientation of the
/// estimator) unchanged. Solving
/// `2(n11−x) − 4(n02+n20) − (L−x) + (S−x) <= 4Φ(S−x)` for `x` gives
/// `x >= (2·n11 − 4(n02+n20) − L + (1−4Φ)·S) / (2 − 4Φ)`, with `L`/`S` the
/// larger/smaller heterozygote counts.
pub fn closed_form_x11(counts: &PairCounts, phi: Phi) -> Result<u64> {
    if within_ceiling(counts, phi) {
        return Ok(0);
    }
    let small = counts.het_i.min(counts.het_k) as f64;
    let large = counts.het_i.max(counts.het_k) as f64;
    let p = phi.value();
    let numerator = 2.0 * counts.n11 as f64 - 4.0 * counts.opposite_homozygotes() as f64 - large
        + (1.0 - 4.0 * p) * small;
    let real = numerator / (2.0 - 4.0 * p);
    let mut x = (real - 1e-9).ceil().max(0.0) as u64;

    // guard the boundary against rounding in the division
    if x <= counts.n11 && !within_ceiling(&counts.without_double_hets(x), phi) {
        x += 1;
    }
    if x > counts.n11 || !within_ceiling(&counts.without_double_hets(x), phi) {
        let best = counts.without_double_hets(counts.n11.min(x));
        return Err(Error::Infeasible {
            step: None,
            pairs: vec![PairViolation {
                a: "i".into(),
                b: "k".into(),
                residual: kinship(&best).ok(),
            }],
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(n11: u64, n02: u64, n20: u64, het_i: u64, het_k: u64) -> PairCounts {
        PairCounts {
            n11,
            n02,
            n20,
            het_i,
            het_k,
            n_valid: 500,
        }
    }

    /// Smallest x in 0..=n11 that satisfies the ceiling, by enumeration.
    fn brute_force(c: &PairCounts, phi: Phi) -> Option<u64> {
        (0..=c.n11).find(|&x| {
            let after = c.without_double_hets(x);
            kinship(&after).is_ok_and(|k| k <= phi.value() + 1e-12)
        })
    }

    #[test]
    fn already_below_ceiling() {
        let c = counts(10, 5, 5, 60, 60);
        assert!(kinship(&c).unwrap() < 0.1);
        assert_eq!(closed_form_x11(&c, Phi::DEFAULT).unwrap(), 0);
    }

    #[test]
    fn parent_child_like_pair() {
        // phi = (80 − 0 − 170 + 160)/640 = 0.109375
        let c = counts(40, 0, 0, 160, 170);
        assert_eq!(kinship(&c).unwrap(), 0.109375);
        // (80 − 170 + 0.6·160)/1.6 = 3.75 → 4
        assert_eq!(closed_form_x11(&c, Phi::DEFAULT).unwrap(), 4);
        assert_eq!(brute_force(&c, Phi::DEFAULT), Some(4));
    }

    #[test]
    fn zero_ceiling_matches_formula() {
        let phi = Phi::new(0.0).unwrap();
        for (n11, opp, hi, hk) in [(6, 0, 9, 8), (5, 1, 7, 7), (7, 0, 7, 9), (3, 2, 5, 6)] {
            let c = counts(n11, opp, 0, hi, hk);
            let big = hi.max(hk) as f64;
            let small = hi.min(hk) as f64;
            let expected = ((2.0 * n11 as f64 - 4.0 * opp as f64 - big + small) / 2.0)
                .ceil()
                .clamp(0.0, n11 as f64) as u64;
            match closed_form_x11(&c, phi) {
                Ok(x) => {
                    assert_eq!(x, expected);
                    assert_eq!(Some(x), brute_force(&c, phi));
                }
                Err(_) => assert_eq!(brute_force(&c, phi), None),
            }
        }
    }

    #[test]
    fn duplicates_cannot_be_fixed() {
        let c = counts(12, 0, 0, 12, 12);
        assert_eq!(kinship(&c).unwrap(), 0.5);
        let err = closed_form_x11(&c, Phi::DEFAULT).unwrap_err();
        assert!(err.is_infeasible());
    }
}
