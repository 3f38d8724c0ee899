//! Lexical overlap metrics: ROUGE-L, sentence BLEU and SARI.
//!
//! All three lowercase the input and split on whitespace. Scores lie in [0, 1].

use std::collections::HashMap;

use super::MetricsError;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure (beta = 1). Zero when either side is empty.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

pub fn rouge_l_tokens(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(cand, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / cand.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

type Counts<'a> = HashMap<&'a [String], u64>;

fn ngram_counts(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = Counts::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_default() += 1;
        }
    }
    out
}

pub const BLEU_MAX_ORDER: usize = 4;

/// Sentence BLEU against one or more references.
///
/// Modified n-gram precisions for n = 1..4 with counts clipped by the maximum
/// reference count. Orders longer than the candidate are left out of the
/// geometric mean. An order with no matches (n >= 2) gets the exponential
/// floor `1 / (2^k * total)`, where `k` counts zero-match orders so far; no
/// unigram matches gives 0. The brevity penalty uses the closest reference
/// length, preferring the shorter on ties.
pub fn bleu(candidate: &str, references: &[&str]) -> f64 {
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    bleu_tokens(&cand, &refs)
}

pub fn bleu_tokens(cand: &[String], refs: &[Vec<String>]) -> f64 {
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    let mut floor_denominator = 1.0f64;
    for n in 1..=BLEU_MAX_ORDER {
        let total = cand.len().saturating_sub(n - 1) as u64;
        if total == 0 {
            break;
        }
        let cand_counts = ngram_counts(cand, n);
        let mut max_ref: Counts = Counts::new();
        for r in refs {
            for (gram, c) in ngram_counts(r, n) {
                let e = max_ref.entry(gram).or_default();
                *e = (*e).max(c);
            }
        }
        let matches: u64 = cand_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matches > 0 {
            matches as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            floor_denominator *= 2.0;
            1.0 / (floor_denominator * total as f64)
        };
        log_sum += p.ln();
        orders += 1;
    }

    let c = cand.len();
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("at least one reference");
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / orders as f64).exp()
}

pub const SARI_MAX_ORDER: usize = 4;

/// Keep F1, deletion precision and addition F1 for one n-gram order.
///
/// Source and candidate counts are scaled by the number of references before
/// comparison with pooled reference counts. Empty denominators count as a
/// perfect score.
fn sari_order(source: &Counts, cand: &Counts, refs: &Counts, numref: u64) -> (f64, f64, f64) {
    let s_rep: Counts = source.iter().map(|(g, c)| (*g, c * numref)).collect();
    let c_rep: Counts = cand.iter().map(|(g, c)| (*g, c * numref)).collect();
    let get = |m: &Counts, g: &[String]| m.get(g).copied().unwrap_or(0);

    let f1 = |p: f64, r: f64| if p > 0.0 || r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };

    // keep
    let mut keep_p_sum = 0.0;
    let mut keep_good_total = 0u64;
    let mut keep_len = 0usize;
    for (g, &sc) in &s_rep {
        let kept = sc.min(get(&c_rep, g));
        if kept == 0 {
            continue;
        }
        keep_len += 1;
        let good = kept.min(get(refs, g));
        keep_p_sum += good as f64 / kept as f64;
        keep_good_total += good;
    }
    let keep_all_total: u64 = s_rep.iter().map(|(g, &sc)| sc.min(get(refs, g))).sum();
    let keep_p = if keep_len > 0 {
        keep_p_sum / keep_len as f64
    } else {
        1.0
    };
    let keep_r = if keep_all_total > 0 {
        keep_good_total as f64 / keep_all_total as f64
    } else {
        1.0
    };

    // delete
    let mut del_sum = 0.0;
    let mut del_len = 0usize;
    for (g, &sc) in &s_rep {
        let deleted = sc.saturating_sub(get(&c_rep, g));
        if deleted == 0 {
            continue;
        }
        del_len += 1;
        let good = deleted.saturating_sub(get(refs, g));
        del_sum += good as f64 / deleted as f64;
    }
    let del_p = if del_len > 0 { del_sum / del_len as f64 } else { 1.0 };

    // add (set-based)
    let added: Vec<&&[String]> = cand.keys().filter(|g| !source.contains_key(**g)).collect();
    let add_good = added.iter().filter(|g| refs.contains_key(***g)).count();
    let add_all = refs.keys().filter(|g| !source.contains_key(**g)).count();
    let add_p = if added.is_empty() {
        1.0
    } else {
        add_good as f64 / added.len() as f64
    };
    let add_r = if add_all > 0 {
        add_good as f64 / add_all as f64
    } else {
        1.0
    };

    (f1(keep_p, keep_r), del_p, f1(add_p, add_r))
}

/// SARI: mean over n = 1..4 of keep F1, deletion precision and addition F1,
/// combined as the mean of the three averages.
pub fn sari(source: &str, candidate: &str, references: &[&str]) -> Result<f64, MetricsError> {
    if references.is_empty() {
        return Err(MetricsError::NoReferences);
    }
    let src = tokenize(source);
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let numref = refs.len() as u64;

    let (mut keep, mut del, mut add) = (0.0, 0.0, 0.0);
    for n in 1..=SARI_MAX_ORDER {
        let mut ref_counts = Counts::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                *ref_counts.entry(g).or_default() += c;
            }
        }
        let (k, d, a) = sari_order(&ngram_counts(&src, n), &ngram_counts(&cand, n), &ref_counts, numref);
        keep += k;
        del += d;
        add += a;
    }
    let orders = SARI_MAX_ORDER as f64;
    Ok((keep / orders + del / orders + add / orders) / 3.0)
}
