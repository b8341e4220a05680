//! Independent reference computations used by property and acceptance tests.
//! Nothing here calls into the crate's scoring paths.

#![allow(dead_code)]

/// Jensen-Shannon divergence between two arbitrary distributions, evaluated in
/// nats and converted to bits.
pub fn jsd_general(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (x / y).ln())
            .sum::<f64>()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    (kl(p, &m) + kl(q, &m)) / (2.0 * std::f64::consts::LN_2)
}

pub fn one_hot(index: usize, size: usize) -> Vec<f64> {
    let mut v = vec![0.0; size];
    v[index] = 1.0;
    v
}

/// Longest common subsequence by exhaustive search: the first index tuple of
/// `a` (largest size first, then lexicographic) that embeds into `b`, with the
/// greedy earliest embedding.
pub fn brute_force_lcs<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    assert!(a.len() <= 16, "exhaustive oracle limited to short sequences");
    for k in (1..=a.len()).rev() {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            if let Some(embedding) = embed(a, b, &combo) {
                return combo.into_iter().zip(embedding).collect();
            }
            // next combination in lexicographic order
            let n = a.len();
            let Some(i) = (0..k).rev().find(|&i| combo[i] < n - k + i) else {
                break;
            };
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    Vec::new()
}

fn embed<T: PartialEq>(a: &[T], b: &[T], combo: &[usize]) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(combo.len());
    let mut j = 0;
    for &i in combo {
        let k = (j..b.len()).find(|&k| b[k] == a[i])?;
        out.push(k);
        j = k + 1;
    }
    Some(out)
}

/// Mean using Kahan-compensated summation.
pub fn compensated_mean(values: &[f64]) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum / values.len() as f64
}
