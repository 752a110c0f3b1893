//! Ratcliff–Obershelp string similarity.
//!
//! This is the "gestalt pattern matching" ratio: find the longest common
//! contiguous block, recurse on the pieces to its left and right, and report
//! `2 * matched / (len(a) + len(b))`. Strings are compared as sequences of
//! Unicode scalar values.
//!
//! [`similarity_ratio`] is the pure ratio. [`SequenceMatcher::with_autojunk`]
//! adds difflib's popularity heuristic: when `b` has at least 200 characters,
//! characters making up more than 1% of it are left out of the index and can
//! only join a match by extending one found without them.

use std::collections::HashMap;

/// A contiguous run shared by both sequences: `a[a_start..a_start+len] ==
/// b[b_start..b_start+len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchBlock {
    pub a_start: usize,
    pub b_start: usize,
    pub len: usize,
}

/// Matcher with a prebuilt index over the second sequence.
///
/// Building the index is linear in `b`; reuse the matcher when one string is
/// compared against many (the index is over `b`, so put the fixed string
/// there).
pub struct SequenceMatcher {
    a: Vec<char>,
    b: Vec<char>,
    b_index: HashMap<char, Vec<usize>>,
}

const AUTOJUNK_MIN_LEN: usize = 200;

impl SequenceMatcher {
    pub fn new(a: &str, b: &str) -> Self {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut b_index: HashMap<char, Vec<usize>> = HashMap::new();
        for (j, c) in b.iter().enumerate() {
            b_index.entry(*c).or_default().push(j);
        }
        Self { a, b, b_index }
    }

    /// Like [`new`](Self::new) with difflib's `autojunk` behaviour.
    pub fn with_autojunk(a: &str, b: &str) -> Self {
        let mut m = Self::new(a, b);
        let n = m.b.len();
        if n >= AUTOJUNK_MIN_LEN {
            let limit = n / 100 + 1;
            m.b_index.retain(|_, idx| idx.len() <= limit);
        }
        m
    }

    /// Longest block in `a[alo..ahi]` x `b[blo..bhi]`. Among maximal blocks
    /// the one starting earliest in `a` wins, then earliest in `b`.
    pub fn find_longest_match(&self, alo: usize, ahi: usize, blo: usize, bhi: usize) -> MatchBlock {
        let mut best = MatchBlock { a_start: alo, b_start: blo, len: 0 };
        // run[j + 1] = length of the match ending at (i - 1, j) on the previous row.
        let width = self.b.len() + 1;
        let mut prev = vec![0usize; width];
        let mut cur = vec![0usize; width];
        let mut prev_touched: Vec<usize> = Vec::new();
        let mut cur_touched: Vec<usize> = Vec::new();
        for i in alo..ahi {
            if let Some(js) = self.b_index.get(&self.a[i]) {
                let start = js.partition_point(|&j| j < blo);
                for &j in &js[start..] {
                    if j >= bhi {
                        break;
                    }
                    let k = prev[j] + 1;
                    cur[j + 1] = k;
                    cur_touched.push(j + 1);
                    if k > best.len {
                        best = MatchBlock { a_start: i + 1 - k, b_start: j + 1 - k, len: k };
                    }
                }
            }
            for &t in &prev_touched {
                prev[t] = 0;
            }
            prev_touched.clear();
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut prev_touched, &mut cur_touched);
        }
        // Characters missing from the index can still extend a match. With a
        // full index the block is already maximal and these loops do nothing.
        while best.a_start > alo && best.b_start > blo && self.a[best.a_start - 1] == self.b[best.b_start - 1] {
            best.a_start -= 1;
            best.b_start -= 1;
            best.len += 1;
        }
        while best.a_start + best.len < ahi
            && best.b_start + best.len < bhi
            && self.a[best.a_start + best.len] == self.b[best.b_start + best.len]
        {
            best.len += 1;
        }
        best
    }

    /// All matching blocks in ascending order of position. Adjacent blocks are
    /// not merged, which does not affect the matched total.
    pub fn matching_blocks(&self) -> Vec<MatchBlock> {
        let mut queue = vec![(0, self.a.len(), 0, self.b.len())];
        let mut blocks = Vec::new();
        while let Some((alo, ahi, blo, bhi)) = queue.pop() {
            let m = self.find_longest_match(alo, ahi, blo, bhi);
            if m.len == 0 {
                continue;
            }
            if alo < m.a_start && blo < m.b_start {
                queue.push((alo, m.a_start, blo, m.b_start));
            }
            if m.a_start + m.len < ahi && m.b_start + m.len < bhi {
                queue.push((m.a_start + m.len, ahi, m.b_start + m.len, bhi));
            }
            blocks.push(m);
        }
        blocks.sort_by_key(|m| (m.a_start, m.b_start));
        blocks
    }

    pub fn matched_len(&self) -> usize {
        self.matching_blocks().iter().map(|m| m.len).sum()
    }

    pub fn ratio(&self) -> f64 {
        ratio_from(self.matched_len(), self.a.len() + self.b.len())
    }

    /// Upper bound on [`ratio`](Self::ratio) from character multisets.
    pub fn quick_ratio(&self) -> f64 {
        let mut avail: HashMap<char, isize> = HashMap::new();
        for c in &self.b {
            *avail.entry(*c).or_default() += 1;
        }
        let mut matches = 0;
        for c in &self.a {
            let n = avail.entry(*c).or_default();
            if *n > 0 {
                matches += 1;
            }
            *n -= 1;
        }
        ratio_from(matches, self.a.len() + self.b.len())
    }

    /// Upper bound on [`ratio`](Self::ratio) from lengths alone.
    pub fn real_quick_ratio(&self) -> f64 {
        ratio_from(self.a.len().min(self.b.len()), self.a.len() + self.b.len())
    }
}

fn ratio_from(matches: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        2.0 * matches as f64 / total as f64
    }
}

/// Ratcliff–Obershelp similarity of two strings, in `[0, 1]`.
///
/// Two empty strings are fully similar (1.0).
pub fn similarity_ratio(a: &str, b: &str) -> f64 {
    SequenceMatcher::new(a, b).ratio()
}

/// Returns the exact ratio only when it can reach `threshold`; `None` means
/// the ratio is certainly below it. Cheap bounds are tried first.
pub fn ratio_if_at_least(a: &str, b: &str, threshold: f64) -> Option<f64> {
    matcher_ratio_if_at_least(&SequenceMatcher::new(a, b), threshold)
}

/// [`ratio_if_at_least`] for a prepared matcher.
pub fn matcher_ratio_if_at_least(m: &SequenceMatcher, threshold: f64) -> Option<f64> {
    if m.real_quick_ratio() < threshold || m.quick_ratio() < threshold {
        return None;
    }
    let r = m.ratio();
    (r >= threshold).then_some(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_values() {
        assert_eq!(similarity_ratio("abc", "abc"), 1.0);
        assert_eq!(similarity_ratio("abc", "xyz"), 0.0);
        assert_eq!(similarity_ratio("abcd", "bcde"), 0.75);
        assert_eq!(similarity_ratio("", ""), 1.0);
        assert_eq!(similarity_ratio("", "abc"), 0.0);
    }

    // Reference values from CPython's difflib.SequenceMatcher(None, a, b, autojunk=False).
    #[test]
    fn matches_difflib_reference() {
        let cases: &[(&str, &str, f64)] = &[
            ("kitten", "sitting", 0.6153846153846154),
            ("lemma am_gm: fixes x y :: real", "lemma am_gm2: fixes a b :: real", 0.9180327868852459),
            ("abxcd", "abcd", 0.8888888888888888),
            ("aaaa", "aa", 0.6666666666666666),
            ("by (auto simp: field_simps)", "by (simp add: field_simps)", 0.8301886792452831),
            ("théorème ∀x", "theoreme ∀y", 0.7272727272727273),
        ];
        for (a, b, want) in cases {
            assert_eq!(similarity_ratio(a, b), *want, "{a:?} vs {b:?}");
        }
        let long_a = format!("{}b", "a".repeat(300));
        let long_b = format!("b{}", "a".repeat(300));
        assert_eq!(similarity_ratio(&long_a, &long_b), 0.9966777408637874);
    }

    #[test]
    fn longest_match_prefers_leftmost() {
        let m = SequenceMatcher::new("abab", "ab");
        assert_eq!(m.find_longest_match(0, 4, 0, 2), MatchBlock { a_start: 0, b_start: 0, len: 2 });
        let m = SequenceMatcher::new("ab", "abab");
        assert_eq!(m.find_longest_match(0, 2, 0, 4), MatchBlock { a_start: 0, b_start: 0, len: 2 });
    }

    #[test]
    fn bounds_are_upper_bounds() {
        for (a, b) in [("abcd", "bcde"), ("kitten", "sitting"), ("aaab", "baaa"), ("", "x")] {
            let m = SequenceMatcher::new(a, b);
            assert!(m.quick_ratio() >= m.ratio());
            assert!(m.real_quick_ratio() >= m.quick_ratio());
        }
        assert_eq!(ratio_if_at_least("abcd", "bcde", 0.85), None);
        assert_eq!(ratio_if_at_least("abcd", "abcd", 0.85), Some(1.0));
    }

    /// Token soup over a fixed vocabulary, driven by a 64-bit LCG so the
    /// same strings can be rebuilt in Python for difflib.
    fn lcg_text(x: &mut u64, tokens: usize) -> String {
        const VOCAB: [&str; 29] = [
            "lemma", "fixes", "shows", "assumes", "proof", "qed", "by", "simp", "auto", "x", "y", "z", "::", "real",
            "nat", "(", ")", "\"", "=", "+", "*", "^2", "\\<le>", "\n  ", "Q", "K", "#", "power2_diff",
            "algebra_simps",
        ];
        (0..tokens).map(|_| VOCAB[(lcg(x) % 29) as usize]).collect::<Vec<_>>().join(" ")
    }

    fn lcg(x: &mut u64) -> u64 {
        *x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *x >> 33
    }

    #[test]
    fn autojunk_matches_difflib_defaults() {
        // (seed, len a, len b, SequenceMatcher(None, a, b).ratio() with the
        // default autojunk=True, and with autojunk=False), from CPython 3.
        let expected = [
            (0, 320, 234, 0.06498194945848375, 0.2490974729241877),
            (1, 364, 366, 0.19726027397260273, 0.33972602739726027),
            (2, 277, 430, 0.08203677510608204, 0.2263083451202263),
            (3, 325, 302, 0.15629984051036683, 0.1722488038277512),
            (4, 349, 301, 0.07384615384615385, 0.40923076923076923),
            (5, 333, 389, 0.07202216066481995, 0.2520775623268698),
            (6, 343, 304, 0.18856259659969088, 0.250386398763524),
            (7, 326, 156, 0.23236514522821577, 0.23236514522821577),
            (8, 371, 321, 0.15028901734104047, 0.32947976878612717),
            (9, 391, 383, 0.10335917312661498, 0.3178294573643411),
            (10, 399, 360, 0.08432147562582346, 0.308300395256917),
            (11, 426, 298, 0.1408839779005525, 0.3729281767955801),
        ];
        for (seed, la, lb, junk, pure) in expected {
            let mut x: u64 = seed * 7919 + 17;
            let na = 40 + (lcg(&mut x) % 60) as usize;
            let a = lcg_text(&mut x, na);
            let nb = 40 + (lcg(&mut x) % 60) as usize;
            let b = lcg_text(&mut x, nb);
            assert_eq!((a.chars().count(), b.chars().count()), (la, lb), "seed {seed}");
            assert_eq!(SequenceMatcher::with_autojunk(&a, &b).ratio(), junk, "seed {seed}");
            assert_eq!(similarity_ratio(&a, &b), pure, "seed {seed}");
        }
    }

    #[test]
    fn autojunk_on_the_cross_multiplication_pair() {
        use crate::demo::{CROSS_MUL_GEN_THEORY, CROSS_MUL_THEORY};
        // CPython: SequenceMatcher(None, gen, base).ratio() and the reverse.
        assert_eq!(SequenceMatcher::with_autojunk(CROSS_MUL_GEN_THEORY, CROSS_MUL_THEORY).ratio(), 0.7748091603053435);
        assert_eq!(SequenceMatcher::with_autojunk(CROSS_MUL_THEORY, CROSS_MUL_GEN_THEORY).ratio(), 0.8435114503816794);
        assert_eq!(similarity_ratio(CROSS_MUL_THEORY, CROSS_MUL_GEN_THEORY), 0.8816793893129771);
    }

    #[test]
    fn autojunk_is_inert_below_200() {
        let a = "x".repeat(150) + "y";
        let b = "y".to_string() + &"x".repeat(150);
        assert_eq!(SequenceMatcher::with_autojunk(&a, &b).ratio(), similarity_ratio(&a, &b));
    }
}
