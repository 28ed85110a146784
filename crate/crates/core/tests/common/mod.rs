//! Independent reference computations used by the integration tests. Nothing
//! here calls into the library's numerics.
#![allow(dead_code)]

use noisytrack::topology::DirectedTopology;

/// `H = L + B` built directly from the definitions, in plain row-major form.
pub fn coupling_rows(adj: &[Vec<u8>], leader: &[u8]) -> Vec<Vec<f64>> {
    let n = adj.len();
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        let deg: u32 = adj[i].iter().map(|&a| a as u32).sum();
        for j in 0..n {
            h[i][j] = -(adj[i][j] as f64);
        }
        h[i][i] += deg as f64 + leader[i] as f64;
    }
    h
}

pub fn coupling_of(t: &DirectedTopology) -> Vec<Vec<f64>> {
    coupling_rows(t.adjacency(), t.leader_links())
}

/// Integer version of `H` for exact characteristic-polynomial tests.
pub fn coupling_int(adj: &[Vec<u8>], leader: &[u8]) -> Vec<Vec<i64>> {
    coupling_rows(adj, leader).iter().map(|r| r.iter().map(|&v| v as i64).collect()).collect()
}

/// Routh–Hurwitz test that every root of `det(sI − H)` has positive real
/// part, i.e. every root of `det(sI + H)` lies in the open left half plane.
/// Exact integer arithmetic; sizes 1 to 3.
pub fn positive_stable_routh(h: &[Vec<i64>]) -> bool {
    // det(sI + H) = s^n + a_{n-1} s^{n-1} + ... + a_0, with a_{n-1} = tr H,
    // a_{n-2} = sum of principal 2x2 minors, a_0 = det H.
    match h.len() {
        1 => h[0][0] > 0,
        2 => {
            let tr = h[0][0] + h[1][1];
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            tr > 0 && det > 0
        }
        3 => {
            let a2 = h[0][0] + h[1][1] + h[2][2];
            let m = |i: usize, j: usize| h[i][i] * h[j][j] - h[i][j] * h[j][i];
            let a1 = m(0, 1) + m(0, 2) + m(1, 2);
            let a0 = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
                - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
                + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
            a2 > 0 && a0 > 0 && a2 * a1 > a0
        }
        _ => panic!("Routh oracle covers sizes 1 to 3"),
    }
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Solves `HᵀP + PH = I` by writing out each scalar equation.
pub fn lyapunov_oracle(h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = h.len();
    let idx = |r: usize, c: usize| r * n + c;
    let mut a = vec![vec![0.0; n * n]; n * n];
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let row = idx(i, j);
            for k in 0..n {
                a[row][idx(k, j)] += h[k][i];
                a[row][idx(i, k)] += h[k][j];
            }
            b[row] = if i == j { 1.0 } else { 0.0 };
        }
    }
    let p = gauss_solve(a, b);
    (0..n).map(|i| p[i * n..(i + 1) * n].to_vec()).collect()
}

/// Eigenvalues of a symmetric 3x3 matrix by the trigonometric formula,
/// ascending.
pub fn sym3_eigenvalues(m: &[Vec<f64>]) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut d = [m[0][0], m[1][1], m[2][2]];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| (m[i][j] - if i == j { q } else { 0.0 }) / p).collect())
        .collect();
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [lo, 3.0 * q - hi - lo, hi]
}

/// Right-hand side of the noise-free error system
/// `ẋ̄ = −kαH x̄ + α v̄`, `v̄̇ = −γkαH x̄`.
pub fn error_rhs(h: &[Vec<f64>], alpha: f64, gamma: f64, k: f64, eps: &[f64]) -> Vec<f64> {
    let n = h.len();
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        let hx: f64 = (0..n).map(|j| h[i][j] * eps[j]).sum();
        out[i] = -k * alpha * hx + alpha * eps[n + i];
        out[n + i] = -gamma * k * alpha * hx;
    }
    out
}

/// Classical RK4 for the noise-free error system, with `H` chosen by
/// `which(t)` on each step (`h_step` must divide every switch time).
pub fn rk4_error_system(
    couplings: &[Vec<Vec<f64>>],
    which: impl Fn(f64) -> usize,
    alpha: impl Fn(f64) -> f64,
    gamma: f64,
    k: f64,
    eps0: &[f64],
    horizon: f64,
    h_step: f64,
) -> Vec<f64> {
    let steps = (horizon / h_step).round() as usize;
    let mut x = eps0.to_vec();
    for s in 0..steps {
        let t = s as f64 * h_step;
        let h = &couplings[which(t + 0.5 * h_step)];
        let f = |tt: f64, y: &[f64]| error_rhs(h, alpha(tt), gamma, k, y);
        let k1 = f(t, &x);
        let y2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * h_step * b).collect();
        let k2 = f(t + 0.5 * h_step, &y2);
        let y3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * h_step * b).collect();
        let k3 = f(t + 0.5 * h_step, &y3);
        let y4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + h_step * b).collect();
        let k4 = f(t + h_step, &y4);
        for i in 0..x.len() {
            x[i] += h_step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

/// Exact second moments `Π = E[εεᵀ]` of the error SDE:
/// `Π̇ = FΠ + ΠFᵀ + ΩΩᵀ`, integrated with RK4. Returns `diag Π` at the
/// horizon.
pub fn second_moment_diagonal(
    couplings: &[Vec<Vec<f64>>],
    noise_gram: &[Vec<Vec<f64>>],
    which: impl Fn(f64) -> usize,
    alpha: impl Fn(f64) -> f64,
    gamma: f64,
    k: f64,
    eps0: &[f64],
    horizon: f64,
    h_step: f64,
) -> Vec<f64> {
    let d = eps0.len();
    let n = d / 2;
    let mut pi: Vec<f64> = (0..d * d).map(|r| eps0[r / d] * eps0[r % d]).collect();
    let rhs = |t: f64, top: usize, p: &[f64]| -> Vec<f64> {
        let a = alpha(t);
        let h = &couplings[top];
        let g = &noise_gram[top];
        // F as dense rows.
        let mut f = vec![vec![0.0; d]; d];
        for i in 0..n {
            for j in 0..n {
                f[i][j] = -k * a * h[i][j];
                f[n + i][j] = -gamma * k * a * h[i][j];
            }
            f[i][n + i] = a;
        }
        let ka2 = (k * a).powi(2);
        let mut out = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut s = 0.0;
                for m in 0..d {
                    s += f[r][m] * p[m * d + c] + p[r * d + m] * f[c][m];
                }
                let (wr, wc) = (if r < n { 1.0 } else { gamma }, if c < n { 1.0 } else { gamma });
                s += ka2 * wr * wc * g[r % n][c % n];
                out[r * d + c] = s;
            }
        }
        out
    };
    let steps = (horizon / h_step).round() as usize;
    for s in 0..steps {
        let t = s as f64 * h_step;
        let top = which(t + 0.5 * h_step);
        let k1 = rhs(t, top, &pi);
        let y2: Vec<f64> = pi.iter().zip(&k1).map(|(a, b)| a + 0.5 * h_step * b).collect();
        let k2 = rhs(t + 0.5 * h_step, top, &y2);
        let y3: Vec<f64> = pi.iter().zip(&k2).map(|(a, b)| a + 0.5 * h_step * b).collect();
        let k3 = rhs(t + 0.5 * h_step, top, &y3);
        let y4: Vec<f64> = pi.iter().zip(&k3).map(|(a, b)| a + h_step * b).collect();
        let k4 = rhs(t + h_step, top, &y4);
        for i in 0..pi.len() {
            pi[i] += h_step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    (0..d).map(|i| pi[i * d + i]).collect()
}

/// `ΣΣᵀ` for uniform unit intensity: row `i` of `Σ` has a unit in the
/// leader channel when `b_i = 1` and in channel `(i, j)` when `a_ij = 1`,
/// so the Gram matrix is diagonal with the in-degree plus leader link.
pub fn uniform_noise_gram(adj: &[Vec<u8>], leader: &[u8]) -> Vec<Vec<f64>> {
    let n = adj.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        g[i][i] = adj[i].iter().map(|&a| a as f64).sum::<f64>() + leader[i] as f64;
    }
    g
}

/// The two alternating topologies of the built-in example.
pub fn paper_topologies() -> [(Vec<Vec<u8>>, Vec<u8>); 2] {
    [
        (vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 1, 0]], vec![1, 0, 0]),
        (vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 0]], vec![1, 0, 1]),
    ]
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
