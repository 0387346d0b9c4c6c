//! Straight transcriptions of the metric definitions, sharing no code with
//! the library.
#![allow(dead_code)]

pub fn pair_share(x: &[u8], pred: impl Fn(i32, i32) -> bool) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let mut hits = 0;
    for i in 0..x.len() - 1 {
        if pred(x[i] as i32, x[i + 1] as i32) {
            hits += 1;
        }
    }
    Some(hits as f64 / (x.len() - 1) as f64)
}

pub fn repeat(x: &[u8]) -> Option<f64> {
    pair_share(x, |a, b| a == b)
}

pub fn increase(x: &[u8]) -> Option<f64> {
    pair_share(x, |a, b| a + 1 == b)
}

pub fn decrease(x: &[u8]) -> Option<f64> {
    pair_share(x, |a, b| a - 1 == b)
}

pub fn digit_freq(x: &[u8]) -> Option<Vec<f64>> {
    if x.is_empty() {
        return None;
    }
    Some(
        (0..10u8)
            .map(|d| x.iter().filter(|&&v| v == d).count() as f64 / x.len() as f64)
            .collect(),
    )
}

pub fn mean(x: &[u8]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    Some(x.iter().map(|&v| v as u64).sum::<u64>() as f64 / x.len() as f64)
}

pub fn coupon(x: &[u8]) -> Option<f64> {
    let mut spans = Vec::new();
    let mut start = 0;
    for end in 0..x.len() {
        let window = &x[start..=end];
        if (0..10u8).all(|d| window.contains(&d)) {
            spans.push(window.len());
            start = end + 1;
        }
    }
    if spans.is_empty() {
        None
    } else {
        Some(spans.iter().sum::<usize>() as f64 / spans.len() as f64)
    }
}

pub fn evans(x: &[u8]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let mut n = [[0u64; 10]; 10];
    for w in x.windows(2) {
        n[w[0] as usize][w[1] as usize] += 1;
    }
    let xlnx = |v: u64| if v == 0 { 0.0 } else { v as f64 * (v as f64).ln() };
    let mut num = 0.0;
    let mut den = 0.0;
    for row in &n {
        let mut total = 0;
        for &c in row {
            num += xlnx(c);
            total += c;
        }
        den += xlnx(total);
    }
    Some(if den == 0.0 { 0.0 } else { num / den })
}

pub fn turning(x: &[u8]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let mut observed = 0;
    for i in 1..x.len() - 1 {
        let peak = x[i] > x[i - 1] && x[i] > x[i + 1];
        let trough = x[i] < x[i - 1] && x[i] < x[i + 1];
        if peak || trough {
            observed += 1;
        }
    }
    let expected = 2.0 * (x.len() - 2) as f64 / 3.0;
    Some(100.0 * observed as f64 / expected)
}

/// Every sequence over `0..alphabet` with length 1 to `max_len`.
pub fn all_sequences(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            for d in 0..alphabet {
                let mut s: Vec<u8> = prefix.clone();
                s.push(d);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}
