//! Brute-force reference implementations used as oracles in tests.
//!
//! Everything in this crate is deliberately naive: character-by-character
//! scanning, window counting, selection sort. None of it shares code with
//! the production implementations it checks.

/// Output of [`oracle_rephrase`]: the rewritten sentence and the applied
/// replacements as `(start, end, w_src, w_tgt)` with character offsets into
/// the original sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRephrase {
    pub rephrased: String,
    pub replacements: Vec<(usize, usize, String, String)>,
}

/// Longest-source-term-first replacement with span masking, evaluated by
/// direct character scanning.
///
/// Entries are deduplicated on the source term (first wins), sorted by
/// (character length descending, source term ascending) with a selection
/// sort, and applied one after another. Each entry scans the original
/// sentence left to right; an occurrence is accepted only when it overlaps
/// no span accepted so far.
pub fn oracle_rephrase(
    sentence: &str,
    entries: &[(String, String)],
    whole_token: bool,
) -> OracleRephrase {
    let mut sorted: Vec<(Vec<char>, String)> = Vec::new();
    for (w_src, w_tgt) in entries {
        let chars: Vec<char> = w_src.chars().collect();
        if !sorted.iter().any(|(existing, _)| *existing == chars) {
            sorted.push((chars, w_tgt.clone()));
        }
    }
    for i in 0..sorted.len() {
        let mut best = i;
        for j in (i + 1)..sorted.len() {
            let longer = sorted[j].0.len() > sorted[best].0.len();
            let tie_smaller =
                sorted[j].0.len() == sorted[best].0.len() && sorted[j].0 < sorted[best].0;
            if longer || tie_smaller {
                best = j;
            }
        }
        sorted.swap(i, best);
    }

    let chars: Vec<char> = sentence.chars().collect();
    let mut accepted: Vec<(usize, usize, usize)> = Vec::new(); // (start, end, entry)
    for (entry_idx, (w_src, _)) in sorted.iter().enumerate() {
        let len = w_src.len();
        if len == 0 || len > chars.len() {
            continue;
        }
        let mut pos = 0usize;
        while pos + len <= chars.len() {
            let here = chars[pos..pos + len] == w_src[..];
            let boundary = !whole_token
                || ((pos == 0 || !chars[pos - 1].is_alphanumeric())
                    && (pos + len == chars.len() || !chars[pos + len].is_alphanumeric()));
            if here && boundary {
                let overlaps = accepted
                    .iter()
                    .any(|&(s, e, _)| !(pos + len <= s || pos >= e));
                if !overlaps {
                    accepted.push((pos, pos + len, entry_idx));
                    pos += len;
                    continue;
                }
            }
            pos += 1;
        }
    }
    accepted.sort_by_key(|&(start, _, _)| start);

    let mut rephrased = String::new();
    let mut replacements = Vec::new();
    let mut prev = 0usize;
    for &(start, end, entry_idx) in &accepted {
        rephrased.extend(&chars[prev..start]);
        rephrased.push_str(&sorted[entry_idx].1);
        replacements.push((
            start,
            end,
            sorted[entry_idx].0.iter().collect::<String>(),
            sorted[entry_idx].1.clone(),
        ));
        prev = end;
    }
    rephrased.extend(&chars[prev..]);
    OracleRephrase {
        rephrased,
        replacements,
    }
}

/// Non-overlapping occurrence count of `needle` in `haystack` by character
/// scanning. `case_insensitive` lowercases both sides first.
pub fn oracle_count_occurrences(
    haystack: &str,
    needle: &str,
    whole_token: bool,
    case_insensitive: bool,
) -> usize {
    let hay: Vec<char> = if case_insensitive {
        haystack.to_lowercase().chars().collect()
    } else {
        haystack.chars().collect()
    };
    let ndl: Vec<char> = if case_insensitive {
        needle.to_lowercase().chars().collect()
    } else {
        needle.chars().collect()
    };
    if ndl.is_empty() || ndl.len() > hay.len() {
        return 0;
    }
    let mut count = 0;
    let mut pos = 0;
    while pos + ndl.len() <= hay.len() {
        let here = hay[pos..pos + ndl.len()] == ndl[..];
        let boundary = !whole_token
            || ((pos == 0 || !hay[pos - 1].is_alphanumeric())
                && (pos + ndl.len() == hay.len() || !hay[pos + ndl.len()].is_alphanumeric()));
        if here && boundary {
            count += 1;
            pos += ndl.len();
        } else {
            pos += 1;
        }
    }
    count
}

/// Cosine similarity accumulated in f64 with the dot product and both norms
/// summed in index order, clamped to [-1, 1].
pub fn oracle_cosine(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "oracle_cosine: dimension mismatch");
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for i in 0..a.len() {
        dot += a[i] as f64 * b[i] as f64;
        na += a[i] as f64 * a[i] as f64;
        nb += b[i] as f64 * b[i] as f64;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Reference example selection: keep entries with score strictly above `k`
/// (skipping `exclude`), then repeatedly pick the highest score, earliest
/// index first on ties, up to `n` picks. Returns selected entry indices in
/// pick order.
pub fn oracle_select(scores: &[f64], k: f64, n: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i] > k && Some(i) != exclude)
        .collect();
    let mut picked = Vec::new();
    while picked.len() < n && !remaining.is_empty() {
        let mut best = 0;
        for j in 1..remaining.len() {
            if scores[remaining[j]] > scores[remaining[best]] {
                best = j;
            }
        }
        picked.push(remaining.remove(best));
    }
    picked
}

/// Naive corpus BLEU-4 over pre-tokenized sentences: clipped n-gram counts
/// by direct window comparison pooled over the corpus, geometric mean of the
/// four precisions, brevity penalty `exp(1 - ref_len/hyp_len)` when the
/// hypothesis side is shorter. Returns 0 when any precision is zero.
pub fn oracle_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    assert_eq!(hyps.len(), refs.len(), "oracle_bleu: corpus size mismatch");
    let mut correct = [0usize; 4];
    let mut total = [0usize; 4];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4usize {
            if h.len() < n {
                continue;
            }
            let windows: Vec<&[String]> = h.windows(n).collect();
            total[n - 1] += windows.len();
            let mut counted: Vec<&[String]> = Vec::new();
            for w in &windows {
                if counted.iter().any(|c| c == w) {
                    continue;
                }
                counted.push(w);
                let in_hyp = windows.iter().filter(|x| *x == w).count();
                let in_ref = if r.len() >= n {
                    r.windows(n).filter(|x| x == w).count()
                } else {
                    0
                };
                correct[n - 1] += in_hyp.min(in_ref);
            }
        }
    }
    if hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0f64;
    for n in 0..4 {
        if total[n] == 0 || correct[n] == 0 {
            return 0.0;
        }
        log_sum += (correct[n] as f64 / total[n] as f64).ln();
    }
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * (log_sum / 4.0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_rephrase_masks_longest_first() {
        let entries = vec![
            ("data disk".to_string(), "A".to_string()),
            ("disk".to_string(), "B".to_string()),
            ("usage".to_string(), "C".to_string()),
        ];
        let out = oracle_rephrase("data disk usage", &entries, false);
        assert_eq!(out.rephrased, "A C");
        assert_eq!(out.replacements.len(), 2);
        assert_eq!(out.replacements[0].2, "data disk");
        assert_eq!(out.replacements[1].2, "usage");
    }

    #[test]
    fn oracle_count_whole_token() {
        assert_eq!(
            oracle_count_occurrences("disk ramdisk disk.", "disk", true, false),
            2
        );
        assert_eq!(oracle_count_occurrences("Disk disk", "disk", true, true), 2);
        assert_eq!(oracle_count_occurrences("aaa", "aa", false, false), 1);
    }

    #[test]
    fn oracle_bleu_identity_is_100() {
        let sent: Vec<String> = "a b c d e".split_whitespace().map(String::from).collect();
        let score = oracle_bleu(std::slice::from_ref(&sent), std::slice::from_ref(&sent));
        assert_eq!(score, 100.0);
    }

    #[test]
    fn oracle_select_breaks_ties_by_index() {
        let scores = [0.9, 0.95, 0.9, 0.5];
        assert_eq!(oracle_select(&scores, 0.7, 3, None), vec![1, 0, 2]);
        assert_eq!(oracle_select(&scores, 0.7, 2, Some(1)), vec![0, 2]);
        assert_eq!(oracle_select(&scores, 0.99, 2, None), Vec::<usize>::new());
    }
}
