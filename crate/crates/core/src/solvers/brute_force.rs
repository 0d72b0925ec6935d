use super::{finish, DiscreteProblem, SolveReport};
use crate::error::{Error, Result};

/// Largest search space (`K^n`) brute force accepts.
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 24;

/// Exact minimum by enumeration. Among equal energies the lexicographically
/// smallest labeling (pixel 0 most significant) wins.
pub fn brute_force(problem: &DiscreteProblem) -> Result<SolveReport> {
    let n = problem.num_pixels();
    let k = problem.num_labels() as u64;
    let mut space: u64 = 1;
    for _ in 0..n {
        space = space.saturating_mul(k);
        if space > BRUTE_FORCE_LIMIT {
            return Err(Error::Resource(format!(
                "{k}^{n} labelings exceed the brute-force limit of {BRUTE_FORCE_LIMIT}"
            )));
        }
    }
    let k = k as usize;
    let mut labels = vec![0usize; n];
    let mut best = labels.clone();
    let mut best_e = problem.energy_of(&labels);
    // Odometer with the last pixel fastest enumerates in lexicographic order.
    'outer: loop {
        let mut i = n;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
        }
        let e = problem.energy_of(&labels);
        if e < best_e {
            best_e = e;
            best.copy_from_slice(&labels);
        }
    }
    let labeling = problem.labeling_from(best)?;
    finish(problem, labeling, vec![best_e], 1, true)
}
