use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Prediction, Strategy};
use crate::address::Address;
use crate::parallel::{self, Execution};
use crate::taxonomy::{LabelSet, VulnClass};

/// Between 0 and 4 distinct classes: the count is uniform over {0..4}, then
/// the classes are a uniform draw without replacement.
pub fn random_labels<R: Rng>(rng: &mut R) -> LabelSet {
    let k = rng.random_range(0..=4usize);
    sample(rng, VulnClass::COUNT, k)
        .into_iter()
        .map(|i| VulnClass::from_index(i).expect("index below COUNT"))
        .collect()
}

/// One random prediction per address. Address `i` draws from stream `i` of
/// the seeded generator, so the result does not depend on scheduling.
pub fn random_baseline(seed: u64, addresses: &[Address], mode: Execution) -> Vec<Prediction> {
    parallel::map_range(mode, addresses.len(), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut p = Prediction::new(addresses[i].clone(), random_labels(&mut rng), Strategy::Random);
        p.model = Some(format!("random-seed-{seed}"));
        p
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let addrs: Vec<Address> = (0..500).map(Address::from_index).collect();
        let a = random_baseline(7, &addrs, Execution::Parallel);
        assert_eq!(a, random_baseline(7, &addrs, Execution::Sequential));
        assert_ne!(a, random_baseline(8, &addrs, Execution::Sequential));
        assert!(a.iter().all(|p| p.labels.len() <= 4));
        let sizes: std::collections::BTreeSet<usize> = a.iter().map(|p| p.labels.len()).collect();
        assert_eq!(sizes.into_iter().collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
    }
}
