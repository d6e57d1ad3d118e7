use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Draws `round(fraction * n)` distinct row indices, returned ascending.
///
/// With `labels` and `stratify`, each class gets its share of the total by
/// the largest-remainder rule (ties to the smaller label), sampled within
/// the class.
pub fn sample_training_subset(
    n: usize,
    labels: Option<&[i64]>,
    fraction: f64,
    seed: u64,
    stratify: bool,
) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("fraction {fraction} must be in (0, 1]")));
    }
    let total = (fraction * n as f64).round() as usize;
    if total == 0 {
        return Err(Error::InvalidConfig(format!(
            "fraction {fraction} of {n} rows selects no rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = match labels.filter(|_| stratify) {
        None => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(total);
            all
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "subset labels",
                    expected: n,
                    actual: labels.len(),
                });
            }
            let mut classes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (i, &l) in labels.iter().enumerate() {
                classes.entry(l).or_default().push(i);
            }
            let quotas = largest_remainder(
                &classes.values().map(Vec::len).collect::<Vec<_>>(),
                total,
            );
            let mut out = Vec::with_capacity(total);
            for (mut members, quota) in classes.into_values().zip(quotas) {
                members.shuffle(&mut rng);
                out.extend_from_slice(&members[..quota]);
            }
            out
        }
    };
    out.sort_unstable();
    Ok(out)
}

/// Splits `total` across groups proportionally to `sizes`.
pub(crate) fn largest_remainder(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &g in &order {
        if left == 0 {
            break;
        }
        if quotas[g] < sizes[g] {
            quotas[g] += 1;
            left -= 1;
        }
    }
    quotas
}
