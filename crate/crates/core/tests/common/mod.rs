//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};
use vinestress::bicop::{CopulaFamily, Rotation};

pub fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn phi_inv(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Bivariate normal CDF via Plackett's identity
/// Φ₂(x, y; ρ) = Φ(x)Φ(y) + ∫₀^ρ φ₂(x, y; r) dr.
pub fn bvn_cdf(x: f64, y: f64, rho: f64) -> f64 {
    let dens = |r: f64| {
        let s = 1.0 - r * r;
        (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * s)).exp()
            / (2.0 * std::f64::consts::PI * s.sqrt())
    };
    phi(x) * phi(y) + simpson(dens, 0.0, rho, 4000)
}

/// Closed-form CDF of an unrotated family.
pub fn base_cdf(family: CopulaFamily, th: f64, u: f64, v: f64) -> f64 {
    match family {
        CopulaFamily::Independence => u * v,
        CopulaFamily::Gaussian => bvn_cdf(phi_inv(u), phi_inv(v), th),
        CopulaFamily::Clayton => (u.powf(-th) + v.powf(-th) - 1.0).powf(-1.0 / th),
        CopulaFamily::Gumbel => {
            (-((-u.ln()).powf(th) + (-v.ln()).powf(th)).powf(1.0 / th)).exp()
        }
        CopulaFamily::Frank => {
            -1.0 / th
                * (1.0 + (-th * u).exp_m1() * (-th * v).exp_m1() / (-th).exp_m1()).ln()
        }
        CopulaFamily::Joe => {
            let a = (1.0 - u).powf(th);
            let b = (1.0 - v).powf(th);
            1.0 - (a + b - a * b).powf(1.0 / th)
        }
    }
}

/// CDF including rotation.
pub fn cdf(family: CopulaFamily, rot: Rotation, th: f64, u: f64, v: f64) -> f64 {
    match rot {
        Rotation::R0 => base_cdf(family, th, u, v),
        Rotation::R90 => v - base_cdf(family, th, 1.0 - u, v),
        Rotation::R180 => u + v - 1.0 + base_cdf(family, th, 1.0 - u, 1.0 - v),
        Rotation::R270 => u - base_cdf(family, th, u, 1.0 - v),
    }
}

/// Central difference of the CDF in `v`: the oracle for C(u | v).
pub fn fd_h1(family: CopulaFamily, rot: Rotation, th: f64, u: f64, v: f64) -> f64 {
    let h = 1e-5;
    (cdf(family, rot, th, u, v + h) - cdf(family, rot, th, u, v - h)) / (2.0 * h)
}

/// Central difference of the CDF in `u`: the oracle for C(v | u).
pub fn fd_h2(family: CopulaFamily, rot: Rotation, th: f64, u: f64, v: f64) -> f64 {
    let h = 1e-5;
    (cdf(family, rot, th, u + h, v) - cdf(family, rot, th, u - h, v)) / (2.0 * h)
}

/// Mixed central difference: the oracle for the density.
pub fn fd_density(family: CopulaFamily, rot: Rotation, th: f64, u: f64, v: f64) -> f64 {
    let h = 2e-4;
    let c = |a: f64, b: f64| cdf(family, rot, th, a, b);
    (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4.0 * h * h)
}

/// τ = 1 - 4 ∫∫ ∂C/∂u ∂C/∂v du dv with finite-difference partials of the
/// closed-form CDF and a tensor midpoint rule on a grid stretched toward the edges.
pub fn tau_double_integral(family: CopulaFamily, th: f64) -> f64 {
    let m = 400;
    let mut acc = 0.0;
    for i in 0..m {
        let si = (i as f64 + 0.5) / m as f64;
        let u = si * si * (3.0 - 2.0 * si);
        let du = 6.0 * si * (1.0 - si) / m as f64;
        for j in 0..m {
            let sj = (j as f64 + 0.5) / m as f64;
            let v = sj * sj * (3.0 - 2.0 * sj);
            let dv = 6.0 * sj * (1.0 - sj) / m as f64;
            let h = 1e-6 * u.min(1.0 - u).min(v.min(1.0 - v)).max(1e-3);
            let cu = (base_cdf(family, th, u + h, v) - base_cdf(family, th, u - h, v)) / (2.0 * h);
            let cv = (base_cdf(family, th, u, v + h) - base_cdf(family, th, u, v - h)) / (2.0 * h);
            acc += cu * cv * du * dv;
        }
    }
    1.0 - 4.0 * acc
}

/// Bisection on a nondecreasing function to absolute width `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Determinant and inverse of a small symmetric matrix by Gauss–Jordan.
pub fn invert(a: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        let piv = m[c][c];
        det *= piv;
        for x in m[c].iter_mut() {
            *x /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                for k in 0..2 * n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (det, m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Log-density of the Gaussian copula with correlation matrix `r`.
pub fn gaussian_copula_log_density(r: &[Vec<f64>], u: &[f64]) -> f64 {
    let z: Vec<f64> = u.iter().map(|&p| phi_inv(p)).collect();
    let (det, inv) = invert(r);
    let n = z.len();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            q += z[i] * (inv[i][j] - id) * z[j];
        }
    }
    -0.5 * det.ln() - 0.5 * q
}

/// Every valid (family, rotation, parameter) combination used in grids.
pub fn family_grid() -> Vec<(CopulaFamily, Rotation, f64)> {
    let mut out = vec![
        (CopulaFamily::Gaussian, Rotation::R0, 0.5),
        (CopulaFamily::Gaussian, Rotation::R0, -0.7),
        (CopulaFamily::Frank, Rotation::R0, 5.0),
        (CopulaFamily::Frank, Rotation::R0, -3.0),
        (CopulaFamily::Frank, Rotation::R0, 0.5),
    ];
    for rot in Rotation::ALL {
        out.push((CopulaFamily::Clayton, rot, 2.0));
        out.push((CopulaFamily::Gumbel, rot, 2.0));
        out.push((CopulaFamily::Joe, rot, 2.5));
    }
    out
}

/// Deterministic pseudo-random stream for test inputs (SplitMix64).
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on (lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let x = ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        lo + (hi - lo) * x
    }
}

/// Partial correlation of variables `i` and `j` given `given` under the
/// correlation matrix `r`.
pub fn partial_corr(r: &[Vec<f64>], i: usize, j: usize, given: &[usize]) -> f64 {
    let idx: Vec<usize> = [i, j].iter().chain(given).copied().collect();
    let sub: Vec<Vec<f64>> = idx.iter().map(|&a| idx.iter().map(|&b| r[a][b]).collect()).collect();
    let (_, p) = invert(&sub);
    -p[0][1] / (p[0][0] * p[1][1]).sqrt()
}

/// D-vine pair parameters `[t - 1][e]` of a Gaussian copula with matrix `r`.
pub fn dvine_partials(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = r.len();
    (1..n)
        .map(|t| {
            (0..n - t)
                .map(|e| {
                    let given: Vec<usize> = (e + 1..e + t).collect();
                    partial_corr(r, e, e + t, &given)
                })
                .collect()
        })
        .collect()
}

/// Mean and standard deviation of the first normal score given the rest.
pub fn mvn_conditional(r: &[Vec<f64>], z: &[f64]) -> (f64, f64) {
    let d = r.len() - 1;
    let s11: Vec<Vec<f64>> = (1..=d).map(|a| (1..=d).map(|b| r[a][b]).collect()).collect();
    let (_, inv) = invert(&s11);
    let s01: Vec<f64> = (1..=d).map(|a| r[0][a]).collect();
    let beta: Vec<f64> = (0..d).map(|j| (0..d).map(|k| s01[k] * inv[k][j]).sum()).collect();
    let mu = beta.iter().zip(z).map(|(b, x)| b * x).sum();
    let var = 1.0 - beta.iter().zip(&s01).map(|(b, s)| b * s).sum::<f64>();
    (mu, var.sqrt())
}

/// Gaussian D-vine with all pairs taken from the correlation matrix `r`.
pub fn gaussian_vine(r: &[Vec<f64>]) -> vinestress::dvine::DVineModel<f64> {
    use vinestress::bicop::{BivariateCopula, FittedCopula};
    let pairs = dvine_partials(r)
        .into_iter()
        .map(|tree| {
            tree.into_iter()
                .map(|rho| FittedCopula {
                    copula: BivariateCopula::new(CopulaFamily::Gaussian, Rotation::R0, rho).unwrap(),
                    loglik: 0.0,
                    n: 0,
                })
                .collect()
        })
        .collect();
    let labels = (0..r.len()).map(|i| format!("v{i}")).collect();
    vinestress::dvine::DVineModel::new(labels, pairs).unwrap()
}

/// Vine from explicit pair-copulas `[t - 1][e]`.
pub fn vine_from(pairs: Vec<Vec<(CopulaFamily, Rotation, f64)>>) -> vinestress::dvine::DVineModel<f64> {
    use vinestress::bicop::{BivariateCopula, FittedCopula};
    let d = pairs.len();
    let pairs = pairs
        .into_iter()
        .map(|tree| {
            tree.into_iter()
                .map(|(f, r, p)| FittedCopula {
                    copula: BivariateCopula::new(f, r, p).unwrap(),
                    loglik: 0.0,
                    n: 0,
                })
                .collect()
        })
        .collect();
    let labels = (0..=d).map(|i| format!("v{i}")).collect();
    vinestress::dvine::DVineModel::new(labels, pairs).unwrap()
}

/// A 4-variable vine mixing every family and several rotations.
pub fn mixed_vine() -> vinestress::dvine::DVineModel<f64> {
    vine_from(vec![
        vec![
            (CopulaFamily::Gumbel, Rotation::R0, 1.8),
            (CopulaFamily::Clayton, Rotation::R90, 1.2),
            (CopulaFamily::Frank, Rotation::R0, 4.0),
        ],
        vec![
            (CopulaFamily::Joe, Rotation::R180, 1.6),
            (CopulaFamily::Gaussian, Rotation::R0, -0.3),
        ],
        vec![(CopulaFamily::Clayton, Rotation::R0, 0.8)],
    ])
}

/// Columns of row-major data.
pub fn columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// Pseudo panel from raw columns: ranks on the copula scale, marginals from
/// the raw values.
pub fn pseudo_panel(labels: &[&str], cols: Vec<Vec<f64>>) -> vinestress::marginals::PseudoPanel<f64> {
    use vinestress::marginals::{rank_transform, MarginalEcdf, PseudoPanel, YearMonth};
    let n = cols[0].len();
    PseudoPanel {
        dates: YearMonth::new(2000, 1).unwrap().sequence(n),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        columns: cols.iter().map(|c| rank_transform(c).unwrap()).collect(),
        ecdfs: cols.iter().map(|c| MarginalEcdf::from_sample(c).unwrap()).collect(),
    }
}

/// Bivariate Gaussian copula sample with correlation `rho`.
pub fn gaussian_pair(rho: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let v = gaussian_vine(&[vec![1.0, rho], vec![rho, 1.0]]);
    let rows = v.simulate(n, seed).unwrap();
    let c = columns(&rows);
    (c[0].clone(), c[1].clone())
}

/// Minimum pinball objective over every fit that interpolates `k` rows:
/// some optimum of the linear program is always such a vertex.
pub fn exhaustive_pinball(x: &[Vec<f64>], y: &[f64], alpha: f64) -> f64 {
    let n = y.len();
    let k = x[0].len() + 1;
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let a: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| std::iter::once(1.0).chain(x[i].iter().copied()).collect())
            .collect();
        let (det, inv) = invert(&a);
        if det.abs() > 1e-10 {
            let coef: Vec<f64> = (0..k).map(|r| (0..k).map(|c| inv[r][c] * y[idx[c]]).sum()).collect();
            best = best.min(vinestress::baselines::pinball_objective(x, y, alpha, &coef));
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Random regression instance with heteroscedastic noise, optionally rounded to create ties.
pub fn instance(seed: u64, n: usize, d: usize, ties: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = TestRng(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
    let y = x
        .iter()
        .map(|r| {
            let v = 0.5 + r.iter().sum::<f64>() + rng.uniform(-1.0, 1.0) * (1.0 + r.first().map_or(0.0, |a| a.abs()));
            if ties {
                v.round()
            } else {
                v
            }
        })
        .collect();
    (x, y)
}
