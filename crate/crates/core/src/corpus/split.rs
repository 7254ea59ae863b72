//! Account-level train/dev/test splitting and text-only test sampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Post;

/// Train/dev/test proportions of the original dataset (11,377 / 1,572 / 1,435 posts).
pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.791, 0.109, 0.100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_accounts: BTreeSet<String>,
    pub dev_accounts: BTreeSet<String>,
    pub test_accounts: BTreeSet<String>,
    pub text_only_test_ids: BTreeSet<String>,
}

impl SplitSpec {
    pub fn split_of(&self, account_id: &str) -> Option<SplitName> {
        if self.train_accounts.contains(account_id) {
            Some(SplitName::Train)
        } else if self.dev_accounts.contains(account_id) {
            Some(SplitName::Dev)
        } else if self.test_accounts.contains(account_id) {
            Some(SplitName::Test)
        } else {
            None
        }
    }

    pub fn accounts(&self, split: SplitName) -> &BTreeSet<String> {
        match split {
            SplitName::Train => &self.train_accounts,
            SplitName::Dev => &self.dev_accounts,
            SplitName::Test => &self.test_accounts,
        }
    }

    /// Text-image posts of one split.
    pub fn select<'a>(&self, posts: &'a [Post], split: SplitName) -> Vec<&'a Post> {
        let accounts = self.accounts(split);
        posts
            .iter()
            .filter(|p| p.has_image() && accounts.contains(&p.account_id))
            .collect()
    }

    /// Posts of the text-only test set, in corpus order.
    pub fn select_text_only<'a>(&self, posts: &'a [Post]) -> Vec<&'a Post> {
        posts
            .iter()
            .filter(|p| self.text_only_test_ids.contains(&p.id))
            .collect()
    }

    pub fn is_disjoint(&self) -> bool {
        self.train_accounts.is_disjoint(&self.dev_accounts)
            && self.train_accounts.is_disjoint(&self.test_accounts)
            && self.dev_accounts.is_disjoint(&self.test_accounts)
    }
}

/// Partition accounts into train/dev/test.
///
/// Accounts are shuffled by `seed`, then stably ordered by descending post count
/// and assigned one at a time to the split with the largest remaining post quota.
/// An account is forced into an empty split when the remaining accounts are only
/// just enough to populate every split.
pub fn split_by_account(posts: &[Post], ratios: [f64; 3], seed: u64) -> Result<SplitSpec> {
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {total}"
        )));
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in posts {
        *counts.entry(p.account_id.as_str()).or_default() += 1;
    }
    if counts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 accounts to build train/dev/test splits, found {}",
            counts.len()
        )));
    }

    let mut accounts: Vec<(&str, usize)> = counts.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    accounts.shuffle(&mut rng);
    accounts.sort_by(|a, b| b.1.cmp(&a.1));

    let n_posts = posts.len() as f64;
    let mut remaining: Vec<f64> = ratios.iter().map(|r| r * n_posts).collect();
    let mut members: [Vec<&str>; 3] = Default::default();

    for (k, (account, size)) in accounts.iter().enumerate() {
        let accounts_left = accounts.len() - k;
        let empty: Vec<usize> = (0..3).filter(|&s| members[s].is_empty()).collect();
        let candidates: Vec<usize> = if !empty.is_empty() && empty.len() >= accounts_left {
            empty
        } else {
            (0..3).collect()
        };
        // Ties resolve to the earliest split in train, dev, test order.
        let target = candidates
            .iter()
            .copied()
            .fold(None::<usize>, |best, s| match best {
                Some(b) if remaining[b] >= remaining[s] => Some(b),
                _ => Some(s),
            })
            .expect("at least one candidate split");
        remaining[target] -= *size as f64;
        members[target].push(account);
    }

    let [train, dev, test] = members.map(|m| m.into_iter().map(str::to_owned).collect());
    Ok(SplitSpec {
        train_accounts: train,
        dev_accounts: dev,
        test_accounts: test,
        text_only_test_ids: BTreeSet::new(),
    })
}

/// Sample text-only posts from test accounts in proportion to each account's
/// number of text-image test posts.
///
/// The sample is the largest one that stays proportional while respecting every
/// account's supply of text-only posts; accounts without text-only posts are left
/// out of the proportion. Per-account quotas use largest-remainder rounding.
pub fn make_text_only_test(posts: &[Post], split: &SplitSpec, seed: u64) -> BTreeSet<String> {
    let mut test_counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut pools: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in posts {
        if !split.test_accounts.contains(&p.account_id) {
            continue;
        }
        if p.has_image() {
            *test_counts.entry(p.account_id.as_str()).or_default() += 1;
        } else {
            pools.entry(p.account_id.as_str()).or_default().push(p.id.as_str());
        }
    }

    let eligible: Vec<(&str, u64, u64)> = pools
        .iter()
        .filter_map(|(acct, pool)| {
            let n = *test_counts.get(acct)?;
            (n > 0).then_some((*acct, n, pool.len() as u64))
        })
        .collect();
    if eligible.is_empty() {
        return BTreeSet::new();
    }

    let n_total: u64 = eligible.iter().map(|e| e.1).sum();
    let target = eligible
        .iter()
        .map(|&(_, n, avail)| avail * n_total / n)
        .min()
        .unwrap_or(0);

    let mut quotas: Vec<u64> = eligible.iter().map(|&(_, n, _)| target * n / n_total).collect();
    let mut leftover = target - quotas.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = target * eligible[a].1 % n_total;
        let rb = target * eligible[b].1 % n_total;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if leftover == 0 {
            break;
        }
        if quotas[i] < eligible[i].2 {
            quotas[i] += 1;
            leftover -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = BTreeSet::new();
    for ((acct, _, _), quota) in eligible.iter().zip(quotas) {
        let mut pool = pools[acct].clone();
        pool.sort_unstable();
        pool.shuffle(&mut rng);
        selected.extend(pool.into_iter().take(quota as usize).map(str::to_owned));
    }
    selected
}
