//! Sparse signals: supports (enumerated or sampled) and magnitude models.

use crate::error::{Error, Result};
use crate::random::RandomStream;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Default cap on `C(N, K)` for support enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 10_000_000;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic k-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct KSubsets {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

impl KSubsets {
    pub fn new(n: usize, k: usize) -> Self {
        KSubsets {
            n,
            current: (0..k).collect(),
            done: k > n,
        }
    }

    /// Starts at the subset with lexicographic rank `rank`.
    pub fn starting_at(n: usize, k: usize, rank: u128) -> Self {
        match unrank_subset(n, k, rank) {
            Some(current) => KSubsets {
                n,
                current,
                done: false,
            },
            None => KSubsets {
                n,
                current: Vec::new(),
                done: true,
            },
        }
    }
}

impl Iterator for KSubsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let k = self.current.len();
        // advance: rightmost position that can still move
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.current[i] < self.n - k + i {
                self.current[i] += 1;
                for j in i + 1..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// The k-subset of `0..n` with the given lexicographic rank.
pub fn unrank_subset(n: usize, k: usize, mut rank: u128) -> Option<Vec<usize>> {
    if k > n || rank >= binomial(n, k) {
        return None;
    }
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let remaining = k - slot - 1;
        loop {
            let count = binomial(n - next - 1, remaining);
            if rank < count {
                out.push(next);
                next += 1;
                break;
            }
            rank -= count;
            next += 1;
        }
    }
    Some(out)
}

/// All K-subsets of `0..n` in lexicographic order, guarded by a budget.
pub fn enumerate_supports(n: usize, k: usize, budget: u128) -> Result<KSubsets> {
    if k > n {
        return Err(Error::InvalidDimensions(format!("K={k} exceeds N={n}")));
    }
    let count = binomial(n, k);
    if count > budget {
        return Err(Error::BudgetExceeded {
            what: "support enumeration",
            count,
            budget,
            suggest_sampling: false,
        });
    }
    Ok(KSubsets::new(n, k))
}

/// Uniformly random sorted K-subset (Floyd's algorithm).
pub fn sample_support(n: usize, k: usize, stream: &mut RandomStream) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::InvalidDimensions(format!("K={k} exceeds N={n}")));
    }
    if k == n {
        return Ok((0..n).collect());
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for j in n - k..n {
        let t = stream.next_index(j + 1);
        match chosen.binary_search(&t) {
            Ok(_) => {
                let pos = chosen.binary_search(&j).unwrap_err();
                chosen.insert(pos, j);
            }
            Err(pos) => chosen.insert(pos, t),
        }
    }
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnitudeKind {
    Equal,
    Gaussian,
    Uniform,
}

impl MagnitudeKind {
    pub const ALL: [MagnitudeKind; 3] = [
        MagnitudeKind::Equal,
        MagnitudeKind::Gaussian,
        MagnitudeKind::Uniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MagnitudeKind::Equal => "equal",
            MagnitudeKind::Gaussian => "gaussian",
            MagnitudeKind::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for MagnitudeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equal" => Ok(MagnitudeKind::Equal),
            "gaussian" | "normal" => Ok(MagnitudeKind::Gaussian),
            "uniform" => Ok(MagnitudeKind::Uniform),
            other => Err(Error::Parse(format!("unknown magnitude model '{other}'"))),
        }
    }
}

/// Distribution of the nonzero values, normalized so `E‖x‖² = total_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeModel {
    pub kind: MagnitudeKind,
    pub total_power: f64,
}

impl MagnitudeModel {
    pub fn new(kind: MagnitudeKind, total_power: f64) -> Result<Self> {
        if !(total_power > 0.0 && total_power.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "total power must be positive, got {total_power}"
            )));
        }
        Ok(MagnitudeModel { kind, total_power })
    }

    pub fn equal(total_power: f64) -> Result<Self> {
        Self::new(MagnitudeKind::Equal, total_power)
    }
}

/// Draws the K nonzero values.
///
/// Equal: every value is `√(P_s/K)`. Gaussian: `√P_s · N(0, 1/K)`.
/// Uniform: `√P_s · U[−√(3/K), √(3/K)]`. Exact zeros are kept.
pub fn draw_magnitudes(
    model: &MagnitudeModel,
    k: usize,
    stream: &mut RandomStream,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let kf = k as f64;
    let root_power = model.total_power.sqrt();
    Ok(match model.kind {
        MagnitudeKind::Equal => vec![(model.total_power / kf).sqrt(); k],
        MagnitudeKind::Gaussian => {
            let sd = root_power / kf.sqrt();
            (0..k).map(|_| sd * stream.next_standard_normal()).collect()
        }
        MagnitudeKind::Uniform => {
            let half = root_power * (3.0 / kf).sqrt();
            (0..k)
                .map(|_| half * (2.0 * stream.next_uniform01() - 1.0))
                .collect()
        }
    })
}

/// K-sparse vector: sorted support plus the values placed on it in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    #[serde(rename = "N")]
    n: usize,
    support: Vec<usize>,
    magnitudes: Vec<f64>,
}

impl SparseSignal {
    pub fn new(n: usize, support: Vec<usize>, magnitudes: Vec<f64>) -> Result<Self> {
        if support.len() != magnitudes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} support indices but {} magnitudes",
                support.len(),
                magnitudes.len()
            )));
        }
        if support.len() > n {
            return Err(Error::InvalidDimensions(format!(
                "K={} exceeds N={n}",
                support.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "support must be strictly increasing".into(),
            ));
        }
        if support.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidParameter(format!(
                "support index out of range for N={n}"
            )));
        }
        if magnitudes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite magnitude".into()));
        }
        Ok(SparseSignal {
            n,
            support,
            magnitudes,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.magnitudes.iter().map(|v| v * v).sum()
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&i, &v) in self.support.iter().zip(&self.magnitudes) {
            x[i] = v;
        }
        x
    }

    pub fn scaled(&self, c: f64) -> SparseSignal {
        SparseSignal {
            n: self.n,
            support: self.support.clone(),
            magnitudes: self.magnitudes.iter().map(|v| v * c).collect(),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let raw: SparseSignal = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        SparseSignal::new(raw.n, raw.support, raw.magnitudes)
    }
}
