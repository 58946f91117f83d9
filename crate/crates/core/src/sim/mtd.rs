use crate::stats::pava_isotonic;

const TIE: f64 = 1e-12;

/// Isotonic-estimate MTD among tried, non-eliminated doses.
///
/// `counts[j]` is (patients, toxicities) at dose `j + 1`; `eliminated`
/// lists 1-based dose levels. Ties prefer the highest dose estimated below
/// `phi`, then the lowest at or above it.
pub fn select_mtd(counts: &[(usize, usize)], eliminated: &[usize], phi: f64) -> Option<usize> {
    let tried: Vec<usize> = (0..counts.len())
        .filter(|&j| counts[j].0 > 0 && !eliminated.contains(&(j + 1)))
        .collect();
    if tried.is_empty() {
        return None;
    }
    let rates: Vec<(f64, f64)> = tried.iter().map(|&j| (counts[j].1 as f64, counts[j].0 as f64)).collect();
    let est = pava_isotonic(&rates).ok()?;
    let best = est.iter().map(|e| (e - phi).abs()).fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = (0..est.len()).filter(|&i| (est[i] - phi).abs() <= best + TIE).collect();
    let pick = tied
        .iter()
        .rev()
        .find(|&&i| est[i] < phi)
        .or_else(|| tied.iter().find(|&&i| est[i] >= phi))
        .copied()?;
    Some(tried[pick] + 1)
}

/// Isotonic estimates aligned with `counts` (`None` for untried or
/// eliminated doses).
pub fn isotonic_estimates(counts: &[(usize, usize)], eliminated: &[usize]) -> Vec<Option<f64>> {
    let tried: Vec<usize> = (0..counts.len())
        .filter(|&j| counts[j].0 > 0 && !eliminated.contains(&(j + 1)))
        .collect();
    let mut out = vec![None; counts.len()];
    if tried.is_empty() {
        return out;
    }
    let rates: Vec<(f64, f64)> = tried.iter().map(|&j| (counts[j].1 as f64, counts[j].0 as f64)).collect();
    if let Ok(est) = pava_isotonic(&rates) {
        for (k, &j) in tried.iter().enumerate() {
            out[j] = Some(est[k]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conduct_example() {
        let counts = [(6, 0), (12, 3), (3, 2), (0, 0)];
        assert_eq!(select_mtd(&counts, &[], 0.3), Some(2));
        let est = isotonic_estimates(&counts, &[]);
        assert!((est[1].unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(est[3], None);
    }

    #[test]
    fn all_zero_picks_highest_tried() {
        assert_eq!(select_mtd(&[(3, 0), (3, 0), (6, 0), (0, 0)], &[], 0.3), Some(3));
    }

    #[test]
    fn symmetric_tie_prefers_under_target() {
        assert_eq!(select_mtd(&[(10, 2), (10, 4)], &[], 0.3), Some(1));
    }

    #[test]
    fn eliminated_and_untried_are_skipped() {
        assert_eq!(select_mtd(&[(3, 1), (3, 3)], &[2], 0.3), Some(1));
        assert_eq!(select_mtd(&[(3, 3)], &[1], 0.3), None);
        assert_eq!(select_mtd(&[(0, 0)], &[], 0.3), None);
    }
}
