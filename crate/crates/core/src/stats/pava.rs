use crate::error::{domain, Result};
use crate::Scalar;

/// Pool-adjacent-violators isotonic (non-decreasing) fit of event rates.
///
/// Each entry is `(events, n)`; pooled blocks take the `n`-weighted mean.
/// Equal adjacent values are left pooled-equal, never perturbed.
pub fn pava_isotonic<T: Scalar>(rates: &[(T, T)]) -> Result<Vec<T>> {
    if rates.is_empty() {
        return domain("pava_isotonic requires at least one rate");
    }
    // (events, n, members)
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(rates.len());
    for &(events, n) in rates {
        if !(n > T::zero()) || events < T::zero() {
            return domain(format!("invalid rate entry ({events}, {n})"));
        }
        blocks.push((events, n, 1));
        while blocks.len() > 1 {
            let (e2, n2, c2) = blocks[blocks.len() - 1];
            let (e1, n1, c1) = blocks[blocks.len() - 2];
            if e1 / n1 > e2 / n2 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (e1 + e2, n1 + n2, c1 + c2);
            } else {
                break;
            }
        }
    }
    Ok(blocks
        .into_iter()
        .flat_map(|(e, n, c)| std::iter::repeat_n(e / n, c))
        .collect())
}
