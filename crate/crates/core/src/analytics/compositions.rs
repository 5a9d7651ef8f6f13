use crate::error::{Error, Result};

/// `m = (m_1, …, m_l)`: `m_j` batches of size `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompositionIndex {
    pub m: Vec<usize>,
}

impl CompositionIndex {
    /// `Σ m_j`, the number of batches.
    pub fn total(&self) -> usize {
        self.m.iter().sum()
    }

    /// `Σ j·m_j`, the number of customers.
    pub fn weight(&self) -> usize {
        self.m.iter().enumerate().map(|(j, &x)| (j + 1) * x).sum()
    }
}

/// Visit every `m` with `Σ m_j ≤ max_total` and `Σ j·m_j ≤ max_weight` in
/// lexicographic order. Returns the number visited, or an error once `cap`
/// is exceeded.
pub fn for_each_bounded(
    l: usize,
    max_total: usize,
    max_weight: usize,
    cap: usize,
    mut f: impl FnMut(&[usize]),
) -> Result<usize> {
    let mut m = vec![0usize; l];
    let mut count = 0usize;
    fn rec(
        pos: usize,
        m: &mut [usize],
        total: usize,
        weight: usize,
        max_total: usize,
        max_weight: usize,
        cap: usize,
        count: &mut usize,
        f: &mut dyn FnMut(&[usize]),
    ) -> bool {
        if pos == m.len() {
            *count += 1;
            if *count > cap {
                return false;
            }
            f(m);
            return true;
        }
        let j = pos + 1;
        let mut x = 0;
        while total + x <= max_total && weight + j * x <= max_weight {
            m[pos] = x;
            if !rec(pos + 1, m, total + x, weight + j * x, max_total, max_weight, cap, count, f) {
                return false;
            }
            x += 1;
        }
        m[pos] = 0;
        true
    }
    if !rec(0, &mut m, 0, 0, max_total, max_weight, cap, &mut count, &mut f) {
        return Err(Error::Unconverged {
            what: format!("composition enumeration (cap {cap})"),
            partial: f64::NAN,
            bound: f64::INFINITY,
        });
    }
    Ok(count)
}

/// All `m` with `Σ m_j = n`.
pub fn compositions_with_total(l: usize, n: usize) -> Vec<CompositionIndex> {
    let mut out = Vec::new();
    let _ = for_each_bounded(l, n, usize::MAX / 4, usize::MAX, |m| {
        if m.iter().sum::<usize>() == n {
            out.push(CompositionIndex { m: m.to_vec() });
        }
    });
    out
}

/// All `m` with `Σ j·m_j − r = n`.
pub fn compositions_with_weight(l: usize, n: usize, r: usize) -> Vec<CompositionIndex> {
    let target = n + r;
    let mut out = Vec::new();
    let _ = for_each_bounded(l, target, target, usize::MAX, |m| {
        let w: usize = m.iter().enumerate().map(|(j, &x)| (j + 1) * x).sum();
        if w == target {
            out.push(CompositionIndex { m: m.to_vec() });
        }
    });
    out
}
