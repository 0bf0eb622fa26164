//! The cell-tower PM's iterative collection of provider responses.
//!
//! The PM keeps picking providers from its repository until it holds `l`
//! informative (non-NA) responses. The number of providers picked so far
//! doubles each iteration: `j0`, then `2·j0` in total, then `4·j0`, and so
//! on, capped by the repository size.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::{invalid, Error, Result};
use crate::privacy::{ProviderId, RankedLabels};

/// Collection parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollectPolicy {
    /// Informative responses wanted (`l`).
    pub collaborators: usize,
    /// Providers picked in the first iteration. `None` uses `max(1, ⌈l/2⌉)`.
    pub initial_pick: Option<usize>,
}

impl CollectPolicy {
    pub fn new(collaborators: usize) -> Self {
        Self {
            collaborators,
            initial_pick: None,
        }
    }

    pub fn j0(&self) -> usize {
        self.initial_pick.unwrap_or(self.collaborators.div_ceil(2)).max(1)
    }
}

/// Outcome of a successful collection.
#[derive(Clone, Debug, PartialEq)]
pub struct Collection {
    /// Informative responses in the order they were received.
    pub responses: Vec<(ProviderId, RankedLabels)>,
    /// Iterations run (`r`).
    pub iterations: usize,
    pub contacted: usize,
}

/// Runs the collection loop over `repository`.
///
/// `respond` asks one provider and returns its top-k list or `None` for NA.
/// Providers are picked uniformly without replacement. Stops as soon as an
/// iteration ends with at least `l` informative responses. All of them are
/// kept, so more than `l` may be returned.
pub fn ctpm_collect<R, F>(repository: &[ProviderId], policy: CollectPolicy, rng: &mut R, mut respond: F) -> Result<Collection>
where
    R: Rng + ?Sized,
    F: FnMut(&ProviderId) -> Result<Option<RankedLabels>>,
{
    if policy.collaborators == 0 {
        return Err(invalid("collaborator count l must be at least 1"));
    }
    if repository.is_empty() {
        return Err(Error::Exhausted {
            iterations: 0,
            contacted: 0,
        });
    }
    let mut order: Vec<&ProviderId> = repository.iter().collect();
    order.sort();
    order.dedup();
    order.shuffle(rng);

    let mut responses = Vec::new();
    let mut picked = 0;
    let mut target = policy.j0();
    let mut iterations = 0;
    while picked < order.len() {
        iterations += 1;
        let upto = target.min(order.len());
        for p in &order[picked..upto] {
            if let Some(ranked) = respond(p)? {
                responses.push(((*p).clone(), ranked));
            }
        }
        picked = upto;
        if responses.len() >= policy.collaborators {
            break;
        }
        target = target.saturating_mul(2);
    }
    if responses.is_empty() {
        return Err(Error::Exhausted {
            iterations,
            contacted: picked,
        });
    }
    Ok(Collection {
        responses,
        iterations,
        contacted: picked,
    })
}

/// Iterations needed when every provider answers NA: `⌈log2(m/j0)⌉ + 1`
/// for `m ≥ j0`, else 1.
pub fn exhaustive_iterations(m: usize, j0: usize) -> usize {
    assert!(j0 >= 1);
    let mut r = 1;
    let mut total = j0;
    while total < m {
        total *= 2;
        r += 1;
    }
    r
}

/// Monte-Carlo estimate of the mean iteration count when each of `m`
/// providers independently knows the answer with probability `q`.
/// Exhausted collections count their full iteration count.
pub fn expected_iterations<R: Rng + ?Sized>(m: usize, policy: CollectPolicy, q: f64, trials: usize, rng: &mut R) -> f64 {
    assert!(trials > 0);
    let repo: Vec<ProviderId> = (0..m).map(|i| ProviderId(format!("p{i}"))).collect();
    let mut sum = 0usize;
    for _ in 0..trials {
        let mut pick_rng = crate::rng::SimRng::seed_from_u64(rng.random());
        let mut knows = |_: &ProviderId| Ok(rng.random_bool(q).then(Vec::new));
        sum += match ctpm_collect(&repo, policy, &mut pick_rng, &mut knows) {
            Ok(c) => c.iterations,
            Err(Error::Exhausted { iterations, .. }) => iterations,
            Err(e) => panic!("unexpected collection error: {e}"),
        };
    }
    sum as f64 / trials as f64
}
