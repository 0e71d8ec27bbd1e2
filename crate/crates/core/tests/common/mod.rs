#![allow(dead_code)]

use auo::conic::{ConeBlock, ConeSpec, ConicProblem};
use auo::linalg::{Matrix, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `min cᵀx s.t. G x ≤ h, E x = f`, bounded and feasible.
#[derive(Debug, Clone)]
pub struct Lp {
    pub name: &'static str,
    pub c: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub f: Vec<f64>,
}

impl Lp {
    pub fn to_conic(&self) -> ConicProblem {
        let mut rows = self.e.clone();
        rows.extend(self.g.iter().cloned());
        let mut b = self.f.clone();
        b.extend(&self.h);
        let mut blocks = Vec::new();
        if !self.e.is_empty() {
            blocks.push(ConeBlock::Zero(self.e.len()));
        }
        if !self.g.is_empty() {
            blocks.push(ConeBlock::NonNeg(self.g.len()));
        }
        ConicProblem::new(
            Vector::new(self.c.clone()).unwrap(),
            Matrix::from_rows(&rows).unwrap(),
            Vector::new(b).unwrap(),
            ConeSpec::new(blocks).unwrap(),
        )
        .unwrap()
    }

    /// Minimum over all basic feasible points: every choice of `n − |E|`
    /// inequalities made active together with the equalities.
    pub fn vertex_optimum(&self) -> Option<f64> {
        let n = self.c.len();
        let need = n.checked_sub(self.e.len())?;
        let mut best: Option<f64> = None;
        for subset in combinations(self.g.len(), need) {
            let mut a: Vec<Vec<f64>> = self.e.clone();
            let mut rhs = self.f.clone();
            for &i in &subset {
                a.push(self.g[i].clone());
                rhs.push(self.h[i]);
            }
            let Some(x) = solve_dense(a, rhs) else {
                continue;
            };
            let feasible = self
                .g
                .iter()
                .zip(&self.h)
                .all(|(row, &hi)| dot(row, &x) <= hi + 1e-9)
                && self
                    .e
                    .iter()
                    .zip(&self.f)
                    .all(|(row, &fi)| (dot(row, &x) - fi).abs() <= 1e-9);
            if feasible {
                let obj = dot(&self.c, &x);
                best = Some(best.map_or(obj, |b| b.min(obj)));
            }
        }
        best
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn nonneg(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut r = vec![0.0; n];
            r[i] = -1.0;
            r
        })
        .collect()
}

fn with_nonneg(mut g: Vec<Vec<f64>>, mut h: Vec<f64>, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    g.extend(nonneg(n));
    h.extend(vec![0.0; n]);
    (g, h)
}

pub fn lp_fixtures() -> Vec<Lp> {
    let mut out = Vec::new();
    out.push(Lp {
        name: "x >= 1",
        c: vec![1.0],
        g: vec![vec![-1.0]],
        h: vec![-1.0],
        e: vec![],
        f: vec![],
    });
    let (g, h) = with_nonneg(vec![], vec![], 2);
    out.push(Lp {
        name: "equality with nonnegativity",
        c: vec![1.0, 1.0],
        g,
        h,
        e: vec![vec![1.0, 2.0]],
        f: vec![1.0],
    });
    let (g, h) = with_nonneg(vec![vec![1.0, 2.0], vec![3.0, 1.0]], vec![4.0, 6.0], 2);
    out.push(Lp {
        name: "two-resource production",
        c: vec![-1.0, -1.0],
        g,
        h,
        e: vec![],
        f: vec![],
    });
    let (g, h) = with_nonneg(
        vec![
            vec![-1.0, -1.0, 0.0],
            vec![0.0, -1.0, -1.0],
            vec![-1.0, 0.0, -1.0],
        ],
        vec![-1.0, -1.0, -1.0],
        3,
    );
    out.push(Lp {
        name: "pairwise cover",
        c: vec![1.0, 1.0, 1.0],
        g,
        h,
        e: vec![],
        f: vec![],
    });
    let mut g = Vec::new();
    let mut h = Vec::new();
    for i in 0..3 {
        let mut up = vec![0.0; 3];
        up[i] = 1.0;
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        g.push(up);
        g.push(down);
        h.extend([1.0, 1.0]);
    }
    out.push(Lp {
        name: "unit box",
        c: vec![1.0, -2.0, 0.5],
        g,
        h,
        e: vec![],
        f: vec![],
    });
    let (g, h) = with_nonneg(
        vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, 3.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ],
        vec![4.0, 6.0, 2.0],
        3,
    );
    out.push(Lp {
        name: "three-product mix",
        c: vec![-2.0, -3.0, -1.0],
        g,
        h,
        e: vec![],
        f: vec![],
    });
    // 2x2 transportation: supplies (3, 2), demands (1, 4), costs (1, 4, 2, 3).
    let (g, h) = with_nonneg(vec![], vec![], 4);
    out.push(Lp {
        name: "transportation",
        c: vec![1.0, 4.0, 2.0, 3.0],
        g,
        h,
        e: vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
        ],
        f: vec![3.0, 2.0, 1.0],
    });
    // Free variables bounded through a two-sided band.
    out.push(Lp {
        name: "band with equality",
        c: vec![1.0, -1.0],
        g: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
        h: vec![3.0, 3.0],
        e: vec![vec![1.0, 1.0]],
        f: vec![2.0],
    });
    let (g, h) = with_nonneg(
        vec![
            vec![1.0, 1.0, 1.0, 1.0, 1.0],
            vec![2.0, 0.0, 1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0, 2.0, 1.0],
        ],
        vec![5.0, 4.0, 6.0],
        5,
    );
    out.push(Lp {
        name: "five-variable packing",
        c: vec![-1.0, -2.0, -0.5, -3.0, -1.5],
        g,
        h,
        e: vec![],
        f: vec![],
    });
    // ℓ1 minimization in split form, the shape basis pursuit compiles to.
    let (g, h) = with_nonneg(vec![], vec![], 4);
    out.push(Lp {
        name: "split l1 minimization",
        c: vec![1.0, 1.0, 1.0, 1.0],
        g,
        h,
        e: vec![vec![1.0, 0.5, -1.0, -0.5]],
        f: vec![1.0],
    });
    let (g, h) = with_nonneg(
        vec![
            vec![1.0, 2.0, 3.0, 1.0, 0.0, 1.0],
            vec![-1.0, -1.0, -1.0, -1.0, -1.0, -1.0],
        ],
        vec![10.0, -2.0],
        6,
    );
    out.push(Lp {
        name: "six-variable diet",
        c: vec![3.0, 1.0, 2.0, 4.0, 2.5, 1.5],
        g,
        h,
        e: vec![],
        f: vec![],
    });
    out
}

/// A second-order cone program with a closed-form optimum.
pub struct Socp {
    pub name: &'static str,
    pub problem: ConicProblem,
    pub optimum: f64,
}

pub fn socp_fixtures() -> Vec<Socp> {
    let build = |c: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>, cones: Vec<ConeBlock>| {
        ConicProblem::new(
            Vector::new(c).unwrap(),
            Matrix::from_rows(&a).unwrap(),
            Vector::new(b).unwrap(),
            ConeSpec::new(cones).unwrap(),
        )
        .unwrap()
    };
    vec![
        Socp {
            name: "norm of (3, 4)",
            problem: build(
                vec![1.0],
                vec![vec![-1.0], vec![0.0], vec![0.0]],
                vec![0.0, 3.0, 4.0],
                vec![ConeBlock::SecondOrder(3)],
            ),
            optimum: 5.0,
        },
        Socp {
            // min x1 + x2 over the unit disc.
            name: "linear over unit disc",
            problem: build(
                vec![1.0, 1.0],
                vec![vec![0.0, 0.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
                vec![1.0, 0.0, 0.0],
                vec![ConeBlock::SecondOrder(3)],
            ),
            optimum: -std::f64::consts::SQRT_2,
        },
        Socp {
            // Distance from (1, 2) to the line x1 + x2 = 0; variables (x1, x2, t).
            name: "distance to a line",
            problem: build(
                vec![0.0, 0.0, 1.0],
                vec![
                    vec![1.0, 1.0, 0.0],
                    vec![0.0, 0.0, -1.0],
                    vec![-1.0, 0.0, 0.0],
                    vec![0.0, -1.0, 0.0],
                ],
                vec![0.0, 0.0, -1.0, -2.0],
                vec![ConeBlock::Zero(1), ConeBlock::SecondOrder(3)],
            ),
            optimum: 3.0 / std::f64::consts::SQRT_2,
        },
    ]
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// `rows × cols` with orthonormal columns, by modified Gram–Schmidt.
pub fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let g = gaussian_matrix(rng, cols, rows);
    let mut q: Vec<Vec<f64>> = Vec::new();
    for mut v in g {
        for u in &q {
            let p = dot(u, &v);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= n);
        q.push(v);
    }
    let rows_data: Vec<Vec<f64>> = (0..rows)
        .map(|r| q.iter().map(|col| col[r]).collect())
        .collect();
    Matrix::from_rows(&rows_data).unwrap()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
