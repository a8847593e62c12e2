use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::{Label, SlideManifest};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Slack for floating-point products like `110 * 0.15` that should land on
/// an exact decimal.
const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub fraction: f64,
}

/// Per-class number of test slides.
///
/// Total is `round(N * fraction)`. Each class first gets
/// `floor(n_c * fraction)`; leftover slots go to the largest fractional
/// remainders, ties to the smaller class.
pub fn test_quotas(pos: usize, neg: usize, fraction: f64) -> BTreeMap<Label, usize> {
    let total = ((pos + neg) as f64 * fraction + 0.5 + EPS).floor() as usize;
    let mut classes: Vec<(Label, usize, usize, f64)> = [(Label::EgfrPos, pos), (Label::EgfrNeg, neg)]
        .into_iter()
        .map(|(label, n)| {
            let exact = n as f64 * fraction;
            let quota = (exact + EPS).floor() as usize;
            (label, n, quota, exact - quota as f64)
        })
        .collect();
    let assigned: usize = classes.iter().map(|c| c.2).sum();
    let mut extra = total.saturating_sub(assigned);

    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (classes[a].3, classes[b].3);
        if (ra - rb).abs() > EPS {
            rb.total_cmp(&ra)
        } else {
            classes[a].1.cmp(&classes[b].1)
        }
    });
    for i in order {
        if extra == 0 {
            break;
        }
        let c = &mut classes[i];
        if c.2 < c.1 {
            c.2 += 1;
            extra -= 1;
        }
    }
    classes.into_iter().map(|(label, _, quota, _)| (label, quota)).collect()
}

/// Stratified train/test split. Within each class the test members are the
/// first `quota` ids of a seeded shuffle; both output lists keep manifest
/// order.
pub fn stratified_split(manifest: &SlideManifest, fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::contract(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let counts = manifest.class_counts();
    if counts.pos == 0 || counts.neg == 0 {
        return Err(Error::contract(format!(
            "stratified split needs both classes, got {} positive and {} negative",
            counts.pos, counts.neg
        )));
    }
    let quotas = test_quotas(counts.pos, counts.neg, fraction);
    let mut rng = seeded(seed);
    let mut in_test: HashMap<&str, bool> = HashMap::new();
    for (label, quota) in quotas {
        let mut ids: Vec<&str> = manifest
            .records()
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.slide_id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        for (i, id) in ids.into_iter().enumerate() {
            in_test.insert(id, i < quota);
        }
    }
    let (test_ids, train_ids): (Vec<String>, Vec<String>) =
        manifest.ids().map(str::to_string).partition(|id| in_test[id.as_str()]);
    Ok(SplitAssignment {
        train_ids,
        test_ids,
        seed,
        fraction,
    })
}

/// Training slide → fold index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
    /// Ids in their input order.
    ids: Vec<String>,
}

impl FoldAssignment {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Members of fold `i`, in input order.
    pub fn members(&self, i: usize) -> Vec<String> {
        self.ids.iter().filter(|id| self.fold_of[*id] == i).cloned().collect()
    }

    /// Everything outside fold `i`, in input order.
    pub fn complement(&self, i: usize) -> Vec<String> {
        self.ids.iter().filter(|id| self.fold_of[*id] != i).cloned().collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.k).map(|i| self.fold_of.values().filter(|&&f| f == i).count()).collect()
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::contract(format!("k must be >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::contract(format!("{n} ids cannot fill {k} folds")));
    }
    Ok(())
}

fn round_robin(ids: &[String], shuffled: &[&str], k: usize) -> Result<FoldAssignment> {
    let fold_of: BTreeMap<String, usize> = shuffled.iter().enumerate().map(|(i, id)| (id.to_string(), i % k)).collect();
    if fold_of.len() != ids.len() {
        return Err(Error::contract("duplicate ids in fold input"));
    }
    Ok(FoldAssignment {
        k,
        fold_of,
        ids: ids.to_vec(),
    })
}

/// Random k-fold assignment: seeded shuffle, then round-robin.
pub fn kfold(train_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    check_k(train_ids.len(), k)?;
    let mut shuffled: Vec<&str> = train_ids.iter().map(String::as_str).collect();
    shuffled.shuffle(&mut seeded(seed));
    round_robin(train_ids, &shuffled, k)
}

/// Stratified variant: each class is shuffled separately and the classes
/// are dealt round-robin one after the other, so every fold gets a near
/// equal share of each class.
pub fn kfold_stratified(train_ids: &[String], labels: &BTreeMap<String, Label>, k: usize, seed: u64) -> Result<FoldAssignment> {
    check_k(train_ids.len(), k)?;
    let mut rng = seeded(seed);
    let mut shuffled = Vec::with_capacity(train_ids.len());
    for class in [Label::EgfrPos, Label::EgfrNeg] {
        let mut ids = Vec::new();
        for id in train_ids {
            let label = labels
                .get(id)
                .ok_or_else(|| Error::Data(format!("no label for slide {id}")))?;
            if *label == class {
                ids.push(id.as_str());
            }
        }
        ids.shuffle(&mut rng);
        shuffled.extend(ids);
    }
    round_robin(train_ids, &shuffled, k)
}

/// Audit CSV `slide_id,role,fold`; test rows leave `fold` empty.
pub fn write_assignment_csv<W: Write>(
    mut out: W,
    manifest: &SlideManifest,
    split: &SplitAssignment,
    folds: &FoldAssignment,
) -> Result<()> {
    writeln!(out, "slide_id,role,fold")?;
    for id in manifest.ids() {
        match folds.fold_of.get(id) {
            Some(f) => writeln!(out, "{id},train,{f}")?,
            None if split.test_ids.iter().any(|t| t == id) => writeln!(out, "{id},test,")?,
            None => {}
        }
    }
    Ok(())
}
