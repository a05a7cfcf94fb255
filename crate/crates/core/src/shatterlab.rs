//! Shattered instance families for the SCW loss and an empirical shattering
//! checker.
//!
//! Each family comes with a rule mapping a subset of its members to a sketch
//! under which exactly those members have zero loss. To put a set `I` of
//! members *above* their thresholds, the checker uses the sketch built for
//! the complement of `I`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::densela::DenseMatrix;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeedStreams;
use crate::sketch_scw::{row_sketch, scw_loss, SparseSketch};

/// Losses at or below this are read as zero.
pub const ZERO_LOSS_TOL: f64 = 1e-10;

/// Families up to this size are checked on every subset.
pub const FULL_ENUMERATION_MAX: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberLabel {
    /// `A_i = e_i e₁ᵀ`.
    Row { i: usize },
    /// Column `i` of `A₀` replaced by `e_t`.
    Dense { i: usize, t: usize },
    /// As `Dense`, inside critical block `b`.
    Block { b: usize, i: usize, t: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// Single-row sketches `w_Iᵀ`, target rank 1.
    Rank1,
    /// `k/s` diagonal blocks; `s = k` is the dense construction.
    Block { blocks: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShatterFamily {
    pub name: String,
    pub kind: FamilyKind,
    pub n: usize,
    /// Target rank, also the sketch row count.
    pub k: usize,
    /// Per-column sparsity budget of the realizing sketches.
    pub s: usize,
    pub matrices: Vec<DenseMatrix>,
    pub thresholds: Vec<f64>,
    pub labels: Vec<MemberLabel>,
}

impl ShatterFamily {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Zero-pad every member to `d` columns (`d` at least the current width).
    pub fn padded(mut self, d: usize) -> Result<Self> {
        let w = self.matrices[0].cols();
        if d < w {
            return Err(Error::InvalidParameter(format!("cannot pad {w} columns down to {d}")));
        }
        self.matrices = self.matrices.iter().map(|a| a.pad_columns(d)).collect();
        Ok(self)
    }
}

/// Indicator vector of `subset` in ℝⁿ.
pub fn indicator_sketch(subset: &[usize], n: usize) -> Result<Vec<f64>> {
    let mut w = vec![0.0; n];
    for &i in subset {
        if i >= n {
            return Err(Error::InvalidParameter(format!("index {i} out of range for n = {n}")));
        }
        w[i] = 1.0;
    }
    Ok(w)
}

/// `A_i = e_i e₁ᵀ` for `i < n`, thresholds `1/2`.
pub fn gen_rank1_family(n: usize, d: usize) -> Result<ShatterFamily> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("need n, d ≥ 1, got n={n}, d={d}")));
    }
    let matrices = (0..n)
        .map(|i| {
            let mut a = DenseMatrix::zeros(n, d);
            a[(i, 0)] = 1.0;
            a
        })
        .collect();
    Ok(ShatterFamily {
        name: format!("rank1(n={n},d={d})"),
        kind: FamilyKind::Rank1,
        n,
        k: 1,
        s: 1,
        matrices,
        thresholds: vec![0.5; n],
        labels: (0..n).map(|i| MemberLabel::Row { i }).collect(),
    })
}

/// The dense family `{A_(i,t)}`, `i < k ≤ t < n`, scaled by `1/√k`.
pub fn gen_dense_family(n: usize, k: usize) -> Result<ShatterFamily> {
    if !(1 <= k && k < n) {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k < n, got k={k}, n={n}")));
    }
    let mut fam = block_family(n, k, k)?;
    fam.name = format!("dense(n={n},k={k})");
    fam.labels = fam
        .labels
        .iter()
        .map(|l| match *l {
            MemberLabel::Block { i, t, .. } => MemberLabel::Dense { i, t },
            other => other,
        })
        .collect();
    Ok(fam)
}

/// The block family `{A_(b,i,t)}`: `k/s` diagonal blocks of order
/// `(ns/k)×s`, one of them critical. Requires `s | k` and `k | ns`.
pub fn gen_block_family(n: usize, k: usize, s: usize) -> Result<ShatterFamily> {
    let mut fam = block_family(n, k, s)?;
    fam.name = format!("block(n={n},k={k},s={s})");
    Ok(fam)
}

fn block_family(n: usize, k: usize, s: usize) -> Result<ShatterFamily> {
    if s == 0 || k == 0 || !k.is_multiple_of(s) || !(n * s).is_multiple_of(k) {
        return Err(Error::InvalidParameter(format!("need s | k and k | n·s, got n={n}, k={k}, s={s}")));
    }
    let blocks = k / s;
    let h = n * s / k;
    if h <= s {
        return Err(Error::InvalidParameter(format!("block height n·s/k = {h} leaves no replacement rows (s = {s})")));
    }
    let scale = 1.0 / (k as f64).sqrt();
    let mut matrices = Vec::new();
    let mut labels = Vec::new();
    for b in 0..blocks {
        for i in 0..s {
            for t in s..h {
                let mut a = DenseMatrix::zeros(n, k);
                for beta in 0..blocks {
                    for c in 0..s {
                        let row = if beta == b && c == i { t } else { c };
                        a[(beta * h + row, beta * s + c)] = scale;
                    }
                }
                matrices.push(a);
                labels.push(MemberLabel::Block { b, i, t });
            }
        }
    }
    let mut fam = ShatterFamily {
        name: String::new(),
        kind: FamilyKind::Block { blocks },
        n,
        k,
        s,
        thresholds: vec![0.0; matrices.len()],
        matrices,
        labels,
    };
    // Half the loss each member takes when no member is realized at zero.
    let zero_nowhere = subset_sketch(&fam, &[])?;
    let off = par::map_slice(&fam.matrices, |a| scw_loss(&zero_nowhere, a, k));
    for (r, l) in fam.thresholds.iter_mut().zip(off) {
        *r = l? / 2.0;
    }
    Ok(fam)
}

/// The sketch under which exactly the members in `subset` have zero loss.
pub fn subset_sketch(family: &ShatterFamily, subset: &[usize]) -> Result<SparseSketch> {
    if let Some(&bad) = subset.iter().find(|&&i| i >= family.len()) {
        return Err(Error::InvalidParameter(format!("member {bad} out of range for family of {}", family.len())));
    }
    match family.kind {
        FamilyKind::Rank1 => Ok(row_sketch(&indicator_sketch(subset, family.n)?)),
        FamilyKind::Block { blocks } => {
            let (n, s) = (family.n, family.s);
            let h = n / blocks;
            let mut chosen = vec![false; n * s];
            for &m in subset {
                if let MemberLabel::Block { b, i, t } = normalize_label(family.labels[m]) {
                    chosen[(b * h + t) * s + i] = true;
                }
            }
            let mut pattern = Vec::with_capacity(n);
            let mut values = Vec::with_capacity(n * s);
            for col in 0..n {
                let beta = col / h;
                let local = col % h;
                pattern.push((beta * s..beta * s + s).collect());
                for i in 0..s {
                    let v = if local < s {
                        f64::from(u8::from(local == i))
                    } else {
                        f64::from(u8::from(chosen[col * s + i]))
                    };
                    values.push(v);
                }
            }
            SparseSketch::new(family.k, n, pattern, values)
        }
    }
}

fn normalize_label(l: MemberLabel) -> MemberLabel {
    match l {
        MemberLabel::Dense { i, t } => MemberLabel::Block { b: 0, i, t },
        other => other,
    }
}

/// Outcome of checking one subset `I` (the members meant to sit above
/// their thresholds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCheck {
    pub subset: Vec<usize>,
    pub pass: bool,
    /// `min_{i∈I} (Lᵢ − rᵢ)`, `+∞` for empty `I`.
    pub high_margin: f64,
    /// `min_{i∉I} (rᵢ − Lᵢ)`, `+∞` when `I` is everything.
    pub low_margin: f64,
    /// Whether `Lᵢ > ZERO_LOSS_TOL` holds exactly for `i ∈ I`.
    pub zero_pattern_matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShatterReport {
    pub family: String,
    #[serde(rename = "N")]
    pub n_members: usize,
    pub subsets_checked: usize,
    pub gamma: f64,
    /// Smallest margin over every checked subset and member.
    pub min_margin: f64,
    pub all_pass: bool,
    pub all_zero_patterns_match: bool,
    /// Largest loss on members meant to be low.
    pub max_low_loss: f64,
    /// Smallest loss on members meant to be high.
    pub min_high_loss: f64,
    /// `min_high_loss − max_low_loss`.
    pub margin_gap: f64,
    pub failures: Vec<SubsetCheck>,
}

/// Check `γ`-fat shattering of `family` under `loss`.
///
/// Every subset is tried when the family has at most
/// [`FULL_ENUMERATION_MAX`] members; otherwise `subset_budget` subsets are
/// drawn (each member kept with probability 1/2) from the stream
/// `"shatter-subsets"` of `seed`.
pub fn verify_shattering<L>(family: &ShatterFamily, loss: L, subset_budget: usize, gamma: f64, seed: u64) -> Result<ShatterReport>
where
    L: Fn(&SparseSketch, &DenseMatrix, usize) -> Result<f64> + Sync,
{
    let n = family.len();
    let subsets: Vec<Vec<usize>> = if n <= FULL_ENUMERATION_MAX {
        (0u64..1 << n).map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect()).collect()
    } else {
        random_subsets(n, subset_budget, seed)
    };
    check_subsets(family, loss, &subsets, gamma)
}

/// [`verify_shattering`] on `subset_budget` random subsets regardless of the
/// family size. Repeats are possible for small families.
pub fn verify_shattering_sampled<L>(family: &ShatterFamily, loss: L, subset_budget: usize, gamma: f64, seed: u64) -> Result<ShatterReport>
where
    L: Fn(&SparseSketch, &DenseMatrix, usize) -> Result<f64> + Sync,
{
    check_subsets(family, loss, &random_subsets(family.len(), subset_budget, seed), gamma)
}

fn random_subsets(n: usize, budget: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = SeedStreams::new(seed).stream("shatter-subsets");
    (0..budget).map(|_| (0..n).filter(|_| rng.random_bool(0.5)).collect()).collect()
}

fn check_subsets<L>(family: &ShatterFamily, loss: L, subsets: &[Vec<usize>], gamma: f64) -> Result<ShatterReport>
where
    L: Fn(&SparseSketch, &DenseMatrix, usize) -> Result<f64> + Sync,
{
    let n = family.len();
    let results = par::map_slice(subsets, |high| -> Result<(SubsetCheck, f64, f64)> {
        let mut is_high = vec![false; n];
        high.iter().for_each(|&i| is_high[i] = true);
        let low: Vec<usize> = (0..n).filter(|&i| !is_high[i]).collect();
        let sketch = subset_sketch(family, &low)?;
        let (mut hm, mut lm) = (f64::INFINITY, f64::INFINITY);
        let (mut max_low, mut min_high) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut zero_ok = true;
        for (i, a) in family.matrices.iter().enumerate() {
            let l = loss(&sketch, a, family.k)?;
            let r = family.thresholds[i];
            zero_ok &= (l > ZERO_LOSS_TOL) == is_high[i];
            if is_high[i] {
                hm = hm.min(l - r);
                min_high = min_high.min(l);
            } else {
                lm = lm.min(r - l);
                max_low = max_low.max(l);
            }
        }
        let pass = hm > gamma && lm > gamma;
        Ok((SubsetCheck { subset: high.clone(), pass, high_margin: hm, low_margin: lm, zero_pattern_matches: zero_ok }, max_low, min_high))
    });

    let mut report = ShatterReport {
        family: family.name.clone(),
        n_members: n,
        subsets_checked: subsets.len(),
        gamma,
        min_margin: f64::INFINITY,
        all_pass: true,
        all_zero_patterns_match: true,
        max_low_loss: f64::NEG_INFINITY,
        min_high_loss: f64::INFINITY,
        margin_gap: 0.0,
        failures: Vec::new(),
    };
    for r in results {
        let (check, max_low, min_high) = r?;
        report.min_margin = report.min_margin.min(check.high_margin).min(check.low_margin);
        report.max_low_loss = report.max_low_loss.max(max_low);
        report.min_high_loss = report.min_high_loss.min(min_high);
        report.all_zero_patterns_match &= check.zero_pattern_matches;
        if !check.pass {
            report.all_pass = false;
            report.failures.push(check);
        }
    }
    report.margin_gap = report.min_high_loss - report.max_low_loss;
    Ok(report)
}

/// [`verify_shattering`] with the SCW loss.
pub fn verify_scw_shattering(family: &ShatterFamily, subset_budget: usize, gamma: f64, seed: u64) -> Result<ShatterReport> {
    verify_shattering(family, scw_loss, subset_budget, gamma, seed)
}
