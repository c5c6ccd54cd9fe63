//! Direct, unoptimized implementations of the scoring formulas. They share
//! no code with the library: tokenization, statistics and ranking are
//! recomputed here from first principles.

use std::cmp::Ordering;
use std::collections::HashMap;

/// Lowercase; a token is a maximal run of alphanumeric characters.
pub fn analyze(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Score descending, then id ascending.
pub fn rank(mut entries: Vec<(String, f64)>) -> Vec<(String, f64)> {
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    entries
}

/// Okapi BM25 with the Lucene idf `ln(1 + (N - df + 0.5) / (df + 0.5))`.
/// Each distinct query term counts once. Only documents sharing a term with
/// the query are returned, ranked.
pub fn bm25(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let analyzed: Vec<Vec<String>> = docs.iter().map(|(_, t)| analyze(t)).collect();
    let n = docs.len() as f64;
    let total: usize = analyzed.iter().map(Vec::len).sum();
    let avgdl = total as f64 / n;

    let mut terms: Vec<String> = Vec::new();
    for t in analyze(query) {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }

    let mut out = Vec::new();
    for (i, (id, _)) in docs.iter().enumerate() {
        let dl = analyzed[i].len() as f64;
        let mut score = 0.0;
        let mut matched = false;
        for t in &terms {
            let tf = analyzed[i].iter().filter(|w| *w == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = analyzed.iter().filter(|d| d.contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if matched {
            out.push((id.clone(), score));
        }
    }
    rank(out)
}

/// Reciprocal rank fusion over ranked id lists (best first). A document's
/// terms are added from its best rank to its worst.
pub fn rrf(lists: &[Vec<String>], k: f64) -> Vec<(String, f64)> {
    let mut ids: Vec<&String> = Vec::new();
    for l in lists {
        for id in l {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    let mut out = Vec::new();
    for id in ids {
        let mut ranks: Vec<usize> = lists
            .iter()
            .filter_map(|l| l.iter().position(|x| x == id).map(|p| p + 1))
            .collect();
        ranks.sort();
        let mut s = 0.0;
        for r in ranks {
            s += 1.0 / (k + r as f64);
        }
        out.push((id.clone(), s));
    }
    rank(out)
}

/// Exact comparison of two RRF scores given as rank multisets, for integer
/// `k`: compares Σ 1/(k+r) as rationals.
pub fn rrf_exact_cmp(a: &[usize], b: &[usize], k: u64) -> Ordering {
    fn sum(ranks: &[usize], k: u64) -> (u128, u128) {
        let (mut num, mut den) = (0u128, 1u128);
        for &r in ranks {
            let d = k as u128 + r as u128;
            num = num * d + den;
            den *= d;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        (num, den)
    }
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let (an, ad) = sum(a, k);
    let (bn, bd) = sum(b, k);
    (an * bd).cmp(&(bn * ad))
}

/// 1-based ranks of `id` in each list that contains it.
pub fn ranks_of(lists: &[Vec<String>], id: &str) -> Vec<usize> {
    lists
        .iter()
        .filter_map(|l| l.iter().position(|x| x == id).map(|p| p + 1))
        .collect()
}

/// Every document's full field map by sequential parsing; later lines win.
pub fn scan_jsonl(raw: &str, id_field: &str) -> HashMap<String, serde_json::Map<String, serde_json::Value>> {
    let mut out = HashMap::new();
    for line in raw.split('\n') {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(line).unwrap();
        let id = obj[id_field].as_str().unwrap().to_string();
        out.insert(id, obj);
    }
    out
}
