/// Sorted, non-overlapping, non-adjacent half-open foreground intervals over
/// the row-major pixel index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Runs(Vec<(u64, u64)>);

impl Runs {
    /// Appends an interval that starts at or after the last one, coalescing
    /// touching intervals. Empty intervals are ignored.
    pub fn push(&mut self, start: u64, end: u64) {
        if start >= end {
            return;
        }
        match self.0.last_mut() {
            Some(last) if last.1 >= start => last.1 = last.1.max(end),
            _ => self.0.push((start, end)),
        }
    }

    pub fn intervals(&self) -> &[(u64, u64)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn area(&self) -> u64 {
        self.0.iter().map(|(s, e)| e - s).sum()
    }

    pub fn intersect(&self, other: &Runs) -> Runs {
        let mut out = Runs::default();
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            out.push(lo, hi);
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        out
    }

    pub fn intersection_area(&self, other: &Runs) -> u64 {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut total) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            total += hi.saturating_sub(lo);
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    pub fn union(&self, other: &Runs) -> Runs {
        let mut out = Runs::default();
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let take_a = j >= b.len() || (i < a.len() && a[i].0 <= b[j].0);
            let (s, e) = if take_a {
                i += 1;
                a[i - 1]
            } else {
                j += 1;
                b[j - 1]
            };
            out.push(s, e);
        }
        out
    }

    pub fn subtract(&self, other: &Runs) -> Runs {
        let mut out = Runs::default();
        let b = &other.0;
        let mut j = 0;
        for &(start, end) in &self.0 {
            let mut cursor = start;
            while j < b.len() && b[j].1 <= cursor {
                j += 1;
            }
            let mut k = j;
            while k < b.len() && b[k].0 < end {
                out.push(cursor, b[k].0.min(end));
                cursor = cursor.max(b[k].1);
                if b[k].1 > end {
                    break;
                }
                k += 1;
            }
            out.push(cursor, end);
        }
        out
    }

    /// Union of any number of run sets.
    pub fn union_all<'a>(sets: impl IntoIterator<Item = &'a Runs>) -> Runs {
        let mut all: Vec<(u64, u64)> = sets.into_iter().flat_map(|r| r.0.iter().copied()).collect();
        all.sort_unstable();
        let mut out = Runs::default();
        for (s, e) in all {
            out.push(s, e);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs(v: &[(u64, u64)]) -> Runs {
        let mut r = Runs::default();
        for &(s, e) in v {
            r.push(s, e);
        }
        r
    }

    fn set(r: &Runs) -> std::collections::BTreeSet<u64> {
        r.intervals().iter().flat_map(|&(s, e)| s..e).collect()
    }

    #[test]
    fn push_coalesces() {
        assert_eq!(runs(&[(0, 2), (2, 4), (6, 7)]).intervals(), &[(0, 4), (6, 7)]);
    }

    #[test]
    fn set_ops_match_sets() {
        let a = runs(&[(0, 3), (5, 9), (12, 20)]);
        let b = runs(&[(2, 6), (8, 13), (19, 25)]);
        let (sa, sb) = (set(&a), set(&b));
        assert_eq!(set(&a.intersect(&b)), &sa & &sb);
        assert_eq!(set(&a.union(&b)), &sa | &sb);
        assert_eq!(set(&a.subtract(&b)), &sa - &sb);
        assert_eq!(set(&b.subtract(&a)), &sb - &sa);
        assert_eq!(a.intersection_area(&b), (&sa & &sb).len() as u64);
    }

    #[test]
    fn subtract_with_containing_interval() {
        let a = runs(&[(2, 4), (6, 8)]);
        let b = runs(&[(0, 10)]);
        assert!(a.subtract(&b).intervals().is_empty());
        let c = runs(&[(0, 10)]);
        let d = runs(&[(3, 4), (6, 7)]);
        assert_eq!(c.subtract(&d).intervals(), &[(0, 3), (4, 6), (7, 10)]);
    }
}
