//! Reference values computed without going through the transfer-operator
//! solvers: Bessel series, 2×2 closed forms, brute-force enumeration and a
//! dense linear solve. Tests compare solver output against these.

/// `log I_ν(x)` for integer order `ν ≥ 0` and `x > 0` by the power series
/// `Σ_m (x/2)^{2m+ν} / (m! (m+ν)!)`, summed in the log domain so large `x`
/// does not overflow.
pub fn log_bessel_i(nu: u32, x: f64) -> f64 {
    assert!(x > 0.0, "series oracle needs x > 0");
    let lx = (x / 2.0).ln();
    let mut t = nu as f64 * lx - ln_factorial(nu);
    let mut terms = vec![t];
    let mut peak = t;
    let mut m = 0u64;
    loop {
        m += 1;
        t += 2.0 * lx - (m as f64).ln() - ((m + nu as u64) as f64).ln();
        terms.push(t);
        peak = peak.max(t);
        if t < peak - 60.0 && (m as f64) > x {
            break;
        }
    }
    let s: f64 = terms.iter().map(|v| (v - peak).exp()).sum();
    peak + s.ln()
}

pub fn bessel_i(nu: u32, x: f64) -> f64 {
    log_bessel_i(nu, x).exp()
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Perron root and second eigenvalue of a real 2×2 matrix with positive
/// entries, from the characteristic polynomial.
pub fn eigen_2x2(m: [[f64; 2]; 2]) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    ((tr + disc) / 2.0, (tr - disc) / 2.0)
}

/// Right Perron vector of a positive 2×2 matrix, scaled to max 1.
pub fn perron_vector_2x2(m: [[f64; 2]; 2]) -> [f64; 2] {
    let (l, _) = eigen_2x2(m);
    // (m00 − l) v0 + m01 v1 = 0
    let v = [m[0][1], l - m[0][0]];
    let s = v[0].max(v[1]);
    [v[0] / s, v[1] / s]
}

/// `Σ_{a ∈ Mⁿ} Π ν(a_i) e^{S_n A(a^∞)}` for a range-2 table, by enumerating
/// every word.
pub fn periodic_partition_bruteforce(weights: &[f64], table: &[Vec<f64>], n: usize) -> f64 {
    let d = weights.len();
    let total = d.pow(n as u32);
    let mut word = vec![0usize; n];
    let mut sum = 0.0;
    for code in 0..total {
        let mut c = code;
        for slot in word.iter_mut().rev() {
            *slot = c % d;
            c /= d;
        }
        let mut log_term = 0.0;
        for i in 0..n {
            log_term += weights[word[i]].ln() + table[word[i]][word[(i + 1) % n]];
        }
        sum += log_term.exp();
    }
    sum
}

/// Max over periodic words of length `n` of `S_n A / n` for a range-2 table.
pub fn periodic_sup_bruteforce(table: &[Vec<f64>], n: usize) -> f64 {
    let d = table.len();
    let total = d.pow(n as u32);
    let mut word = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    for code in 0..total {
        let mut c = code;
        for slot in word.iter_mut().rev() {
            *slot = c % d;
            c /= d;
        }
        let s: f64 = (0..n).map(|i| table[word[i]][word[(i + 1) % n]]).sum();
        best = best.max(s / n as f64);
    }
    best
}

/// Max mean over all simple cycles of a digraph given by a weighted
/// adjacency matrix (`None` = no edge). Exponential; only for tiny graphs.
pub fn max_mean_simple_cycle(adj: &[Vec<Option<f64>>]) -> Option<(f64, Vec<usize>)> {
    let n = adj.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    // each simple cycle is enumerated once, from its smallest node
    for start in 0..n {
        let mut path = vec![start];
        let mut on_path = vec![false; n];
        on_path[start] = true;
        dfs_cycles(adj, start, start, 0.0, &mut path, &mut on_path, &mut best);
    }
    best
}

fn dfs_cycles(
    adj: &[Vec<Option<f64>>],
    start: usize,
    v: usize,
    acc: f64,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    best: &mut Option<(f64, Vec<usize>)>,
) {
    for (u, w) in adj[v].iter().enumerate() {
        let Some(w) = *w else { continue };
        if u == start {
            let mean = (acc + w) / path.len() as f64;
            if best.as_ref().map_or(true, |(b, _)| mean > *b) {
                *best = Some((mean, path.clone()));
            }
        } else if u > start && !on_path[u] {
            on_path[u] = true;
            path.push(u);
            dfs_cycles(adj, start, u, acc + w, path, on_path, best);
            path.pop();
            on_path[u] = false;
        }
    }
}

/// Stationary vector `π P = π`, `Σπ = 1`, of a row-stochastic matrix by
/// Gaussian elimination on the replaced system.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    // rows of (Pᵀ − I), last row replaced by all ones
    let mut m = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        m[n - 1][j] = 1.0;
    }
    m[n - 1][n] = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}
