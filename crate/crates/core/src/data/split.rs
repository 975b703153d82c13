use std::collections::BTreeMap;

use super::ImageSet;
use crate::ndmath::RandomStream;
use crate::{Error, Result};

/// One source of images with its own train and test pools.
#[derive(Debug, Clone)]
pub struct Domain {
    pub name: String,
    pub train: ImageSet,
    pub test: ImageSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub target: String,
    pub target_train: usize,
    pub target_test: usize,
    /// Maximum number of source images contributed by each named domain;
    /// domains without an entry contribute everything left over.
    pub source_caps: BTreeMap<String, usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// Same cap for every listed domain.
    pub fn with_uniform_cap(mut self, names: &[&str], cap: usize) -> Self {
        for n in names {
            self.source_caps.insert((*n).to_string(), cap);
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct MixedSplit {
    /// Unlabelled pool; domain tags retained for analysis only.
    pub source: ImageSet,
    pub target_train: ImageSet,
    pub target_test: ImageSet,
    pub target_name: String,
}

impl MixedSplit {
    /// Domain-tag index of the target inside `source`.
    pub fn target_tag(&self) -> Option<u16> {
        self.source
            .domain_names()
            .iter()
            .position(|n| *n == self.target_name)
            .map(|i| i as u16)
    }
}

/// Builds the mixed-domain experiment: the target test set is drawn from
/// the target's test pool, the target train set from its training pool,
/// and the source is everything else from every training pool (capped per
/// domain), shuffled together.
pub fn build_mixed_source(domains: &[Domain], spec: &SplitSpec) -> Result<MixedSplit> {
    let target = domains
        .iter()
        .find(|d| d.name == spec.target)
        .ok_or_else(|| Error::config(format!("target domain '{}' is not among the inputs", spec.target)))?;
    if target.train.len() < spec.target_train {
        return Err(Error::config(format!(
            "target '{}' has {} training images, {} requested for target train",
            target.name,
            target.train.len(),
            spec.target_train
        )));
    }
    if target.test.len() < spec.target_test {
        return Err(Error::config(format!(
            "target '{}' has {} test images, {} requested",
            target.name,
            target.test.len(),
            spec.target_test
        )));
    }
    for name in spec.source_caps.keys() {
        if !domains.iter().any(|d| &d.name == name) {
            return Err(Error::config(format!("source cap names unknown domain '{name}'")));
        }
    }
    let rng = RandomStream::new(spec.seed, 0x5917);

    let mut test_rng = rng.derive(0);
    let test_idx = test_rng.sample_indices(target.test.len(), spec.target_test);
    let target_test = target.test.select(&test_idx).with_domain(&target.name);

    let mut parts = Vec::new();
    let mut target_train = None;
    for (d, domain) in domains.iter().enumerate() {
        let mut pool_rng = rng.derive(1 + d as u64);
        let mut order: Vec<usize> = (0..domain.train.len()).collect();
        pool_rng.shuffle(&mut order);
        let rest = if domain.name == spec.target {
            let (train, rest) = order.split_at(spec.target_train);
            target_train = Some(domain.train.select(train).with_domain(&domain.name));
            rest.to_vec()
        } else {
            order
        };
        let cap = spec.source_caps.get(&domain.name).copied().unwrap_or(usize::MAX);
        let take = &rest[..rest.len().min(cap)];
        parts.push(domain.train.select(take).with_domain(&domain.name));
    }
    let mut source = ImageSet::concat(&parts)?;
    let mut mix_rng = rng.derive(0xff);
    let mut order: Vec<usize> = (0..source.len()).collect();
    mix_rng.shuffle(&mut order);
    source = source.select(&order);

    Ok(MixedSplit {
        source,
        target_train: target_train.expect("target found above"),
        target_test,
        target_name: target.name.clone(),
    })
}
