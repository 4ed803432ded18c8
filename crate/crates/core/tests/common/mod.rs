#![allow(dead_code)]

use hetq::quad;

/// Stationary law of a birth–death chain on {0..=k} with birth rate `birth`
/// and death rates `death(j)`, by Gaussian elimination on the global balance
/// equations πQ = 0 with the last equation replaced by Σπ = 1. The system is
/// tridiagonal plus a dense last row and column-diagonally dominant, so
/// elimination without pivoting is stable.
pub fn birth_death_solve(k: usize, birth: f64, death: impl Fn(usize) -> f64) -> Vec<f64> {
    let m = k + 1;
    // Row j of Qᵀ: sub = birth into j from j−1, diag = −(out of j), sup = death from j+1.
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    for j in 0..m {
        let b_out = if j < k { birth } else { 0.0 };
        let d_out = if j > 0 { death(j) } else { 0.0 };
        diag[j] = -(b_out + d_out);
        if j > 0 {
            sub[j] = birth;
        }
        if j < k {
            sup[j] = death(j + 1);
        }
    }
    let mut last = vec![1.0; m];
    let mut rhs = vec![0.0; m];
    rhs[k] = 1.0;
    for j in 0..k {
        // Row j now holds diag[j] and sup[j] only.
        if j + 1 < k {
            let f = sub[j + 1] / diag[j];
            diag[j + 1] -= f * sup[j];
            rhs[j + 1] -= f * rhs[j];
        }
        let f = last[j] / diag[j];
        last[j + 1] -= f * sup[j];
        rhs[k] -= f * rhs[j];
    }
    let mut pi = vec![0.0; m];
    pi[k] = rhs[k] / last[k];
    for j in (0..k).rev() {
        pi[j] = (rhs[j] - sup[j] * pi[j + 1]) / diag[j];
    }
    pi
}

/// (ϱ, E[ξ⁺]) from the unnormalized stationary density
/// p(x) = exp((2/σ²)∫₀ˣ drift), drift(y) = β − νy (y ≥ 0), β − γy (y < 0).
pub fn mass_balance(beta: f64, sigma: f64, gamma: f64, nu: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let up = |x: f64| ((2.0 / s2) * (beta * x - 0.5 * nu * x * x)).exp();
    let lo = |x: f64| ((2.0 / s2) * (beta * x - 0.5 * gamma * x * x)).exp();
    let u = quad::integrate_upper(up, 0.0, 0.0, 1e-14).value;
    let l = quad::integrate_lower(lo, 0.0, 0.0, 1e-14).value;
    let m = quad::integrate_upper(|x| x * up(x), 0.0, 0.0, 1e-14).value;
    (u / (u + l), m / (u + l))
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}
