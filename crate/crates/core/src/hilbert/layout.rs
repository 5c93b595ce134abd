use std::collections::HashSet;

use super::HilbertError;

/// One tensor factor of a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// Ordered tensor-product structure `H = H_1 ⊗ H_2 ⊗ ...` with labeled factors.
///
/// Basis index `f` of the product space is row-major over the factor order:
/// the last factor varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceLayout {
    factors: Vec<Factor>,
}

fn check_label(label: &str) -> Result<(), HilbertError> {
    let ok = !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.');
    if ok {
        Ok(())
    } else {
        Err(HilbertError::InvalidLayout(format!(
            "label `{label}` must be non-empty and use only alphanumerics, `_`, `-`, `.`"
        )))
    }
}

impl SpaceLayout {
    pub fn new<I, S>(factors: I) -> Result<Self, HilbertError>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (label, dim) in factors {
            let label = label.into();
            check_label(&label)?;
            if dim == 0 {
                return Err(HilbertError::InvalidLayout(format!(
                    "factor `{label}` has dimension 0"
                )));
            }
            if !seen.insert(label.clone()) {
                return Err(HilbertError::LabelCollision(label));
            }
            out.push(Factor { label, dim });
        }
        if out.is_empty() {
            return Err(HilbertError::InvalidLayout("layout has no factors".into()));
        }
        out.iter()
            .try_fold(1usize, |acc, f| acc.checked_mul(f.dim))
            .ok_or_else(|| HilbertError::InvalidLayout("total dimension overflows".into()))?;
        Ok(Self { factors: out })
    }

    pub fn single(label: impl Into<String>, dim: usize) -> Result<Self, HilbertError> {
        Self::new([(label.into(), dim)])
    }

    /// `n` qubit factors labeled `prefix0`, `prefix1`, ...
    pub fn qubits(prefix: &str, n: usize) -> Result<Self, HilbertError> {
        Self::new((0..n).map(|i| (format!("{prefix}{i}"), 2)))
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|f| f.label.as_str())
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.label == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    /// `self ⊗ other`.
    pub fn join(&self, other: &SpaceLayout) -> Result<SpaceLayout, HilbertError> {
        Self::new(
            self.factors
                .iter()
                .chain(other.factors.iter())
                .map(|f| (f.label.clone(), f.dim)),
        )
    }

    /// Positions (in layout order) of the given labels.
    pub fn positions_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>, HilbertError> {
        let mut pos = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            let p = self
                .position(l)
                .ok_or_else(|| HilbertError::LabelNotFound(l.to_string()))?;
            if pos.contains(&p) {
                return Err(HilbertError::LabelCollision(l.to_string()));
            }
            pos.push(p);
        }
        pos.sort_unstable();
        Ok(pos)
    }

    /// Sub-layout made of the factors at `positions`, kept in layout order.
    pub fn sublayout(&self, positions: &[usize]) -> SpaceLayout {
        let mut p = positions.to_vec();
        p.sort_unstable();
        SpaceLayout {
            factors: p.iter().map(|&i| self.factors[i].clone()).collect(),
        }
    }

    /// Complement positions of `positions`.
    pub fn complement(&self, positions: &[usize]) -> Vec<usize> {
        (0..self.factors.len())
            .filter(|i| !positions.contains(i))
            .collect()
    }

    /// Digits of basis index `f`, one per factor.
    pub fn digits(&self, mut f: usize) -> Vec<usize> {
        let mut d = vec![0; self.factors.len()];
        for (slot, factor) in d.iter_mut().zip(&self.factors).rev() {
            *slot = f % factor.dim;
            f /= factor.dim;
        }
        d
    }

    /// Row-major index over the factors at `positions` (ascending) for digit vector `digits`.
    pub fn index_of(&self, digits: &[usize], positions: &[usize]) -> usize {
        positions
            .iter()
            .fold(0, |acc, &p| acc * self.factors[p].dim + digits[p])
    }

    /// For each full basis index, its index within each part.
    ///
    /// `parts` must be ascending position lists; the usual call passes a
    /// partition of all positions.
    pub fn split_table(&self, parts: &[&[usize]]) -> Vec<Vec<usize>> {
        (0..self.dim())
            .map(|f| {
                let d = self.digits(f);
                parts.iter().map(|p| self.index_of(&d, p)).collect()
            })
            .collect()
    }

    /// Header form used by the textual matrix format: `label:dim,label:dim`.
    pub fn header(&self) -> String {
        self.factors
            .iter()
            .map(|f| format!("{}:{}", f.label, f.dim))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl std::fmt::Display for SpaceLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.header())
    }
}
