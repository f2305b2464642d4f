//! Slow, direct implementations used as references.

use spillnet::community::Partition;
use spillnet::panel::SectorMap;
use spillnet::{DirectedGraph, Direction, UndirectedGraph};

pub fn adjacency(g: &DirectedGraph) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut a = vec![vec![false; n]; n];
    for (s, t) in g.edges() {
        a[s][t] = true;
    }
    a
}

fn oriented(g: &DirectedGraph, dir: Direction) -> Vec<Vec<bool>> {
    let a = adjacency(g);
    match dir {
        Direction::Out => a,
        Direction::In => (0..a.len()).map(|i| (0..a.len()).map(|j| a[j][i]).collect()).collect(),
    }
}

/// Shortest-path distances by Floyd-Warshall.
fn distances(a: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = a.len();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if a[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Enumerates every shortest path and credits interior nodes with their share.
pub fn betweenness(g: &DirectedGraph) -> Vec<f64> {
    let a = adjacency(g);
    let n = a.len();
    let d = distances(&a);
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t || d[s][t] >= usize::MAX / 4 {
                continue;
            }
            let mut paths: Vec<Vec<usize>> = Vec::new();
            let mut stack = vec![vec![s]];
            while let Some(p) = stack.pop() {
                let last = *p.last().unwrap();
                if last == t {
                    paths.push(p);
                    continue;
                }
                if p.len() - 1 == d[s][t] {
                    continue;
                }
                for w in 0..n {
                    if a[last][w] && !p.contains(&w) {
                        let mut q = p.clone();
                        q.push(w);
                        stack.push(q);
                    }
                }
            }
            let total = paths.len() as f64;
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    bc[v] += 1.0 / total;
                }
            }
        }
    }
    bc
}

/// Triple loop over neighbour pairs of the symmetrized graph.
pub fn clustering(g: &DirectedGraph) -> Vec<f64> {
    let a = adjacency(g);
    let n = a.len();
    let s = |i: usize, j: usize| a[i][j] || a[j][i];
    (0..n)
        .map(|v| {
            let deg = (0..n).filter(|&u| u != v && s(v, u)).count();
            if deg < 2 {
                return 0.0;
            }
            let mut tri = 0usize;
            for x in 0..n {
                for y in x + 1..n {
                    if x != v && y != v && s(v, x) && s(v, y) && s(x, y) {
                        tri += 1;
                    }
                }
            }
            2.0 * tri as f64 / (deg * (deg - 1)) as f64
        })
        .collect()
}

/// Boolean powers of `I + A`.
pub fn m_reach(g: &DirectedGraph, m: usize, dir: Direction) -> Vec<usize> {
    let a = oriented(g, dir);
    let n = a.len();
    (0..n)
        .map(|v| {
            let mut r = vec![false; n];
            r[v] = true;
            for _ in 0..m {
                let prev = r.clone();
                for i in 0..n {
                    if prev[i] {
                        for j in 0..n {
                            if a[i][j] {
                                r[j] = true;
                            }
                        }
                    }
                }
            }
            r.iter().filter(|x| **x).count() - 1
        })
        .collect()
}

/// Walk-set recursion over snapshots `start..start + m`.
pub fn temporal_m_reach(snaps: &[DirectedGraph], start: usize, v: usize, m: usize, dir: Direction) -> usize {
    let n = snaps[0].node_count();
    let mut seen = vec![false; n];
    let mut walk_ends = vec![false; n];
    walk_ends[v] = true;
    for hop in 0..m {
        let a = oriented(&snaps[start + hop], dir);
        let mut next = vec![false; n];
        for i in 0..n {
            if walk_ends[i] {
                for j in 0..n {
                    if a[i][j] {
                        next[j] = true;
                    }
                }
            }
        }
        for j in 0..n {
            seen[j] |= next[j];
        }
        walk_ends = next;
    }
    seen[v] = false;
    seen.iter().filter(|x| **x).count()
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// `(I - a M) x = a M 1` where `M[i][j]` marks `j` as a `dir` neighbour of `i`.
pub fn katz(g: &DirectedGraph, att: f64, dir: Direction) -> Vec<f64> {
    let m = oriented(g, dir);
    let n = m.len();
    let lhs = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| f64::from(u8::from(i == j)) - att * f64::from(u8::from(m[i][j])))
                .collect()
        })
        .collect();
    let rhs = (0..n)
        .map(|i| att * m[i].iter().filter(|x| **x).count() as f64)
        .collect();
    solve(lhs, rhs)
}

/// Largest eigenvalue modulus of the adjacency matrix, by dense power iteration on `A + I`.
pub fn spectral_radius_dense(g: &DirectedGraph) -> f64 {
    let a = adjacency(g);
    let n = a.len();
    let mut x = vec![1.0; n];
    let mut lambda = 0.0;
    for _ in 0..20000 {
        let y: Vec<f64> = (0..n)
            .map(|i| x[i] + (0..n).filter(|&j| a[i][j]).map(|j| x[j]).sum::<f64>())
            .collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        lambda = norm / x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.iter().map(|v| v / norm).collect();
    }
    lambda - 1.0
}

pub fn sector_entropy(p: &Partition, sectors: &SectorMap, c: usize) -> f64 {
    let members: Vec<usize> = (0..p.len()).filter(|&v| p.community_of(v) == c).collect();
    let mut names: Vec<&str> = members
        .iter()
        .map(|&v| sectors.get(&p.labels()[v]).unwrap())
        .collect();
    names.sort();
    names.dedup();
    names
        .iter()
        .map(|s| {
            let k = members
                .iter()
                .filter(|&&v| sectors.get(&p.labels()[v]) == Some(*s))
                .count() as f64;
            let q = k / members.len() as f64;
            -q * q.ln()
        })
        .sum()
}

/// `(crossing, internal)` by scanning the adjacency matrix.
pub fn boundary(g: &DirectedGraph, p: &Partition, c: usize, dir: Direction) -> (usize, usize) {
    let a = adjacency(g);
    let n = a.len();
    let (mut crossing, mut internal) = (0, 0);
    for i in 0..n {
        for j in 0..n {
            if !a[i][j] {
                continue;
            }
            let (ci, cj) = (p.community_of(i), p.community_of(j));
            if ci == c && cj == c {
                internal += 1;
            } else if (dir == Direction::Out && ci == c) || (dir == Direction::In && cj == c) {
                crossing += 1;
            }
        }
    }
    (crossing, internal)
}

pub fn inter_intra(g: &DirectedGraph, p: &Partition, c: usize, dir: Direction, cap: f64) -> f64 {
    match boundary(g, p, c, dir) {
        (0, _) => 0.0,
        (_, 0) => cap,
        (x, y) => x as f64 / y as f64,
    }
}

pub fn commitment(g: &DirectedGraph, p: &Partition, v: usize, dir: Direction) -> f64 {
    let a = oriented(g, dir);
    let n = a.len();
    let deg = |u: usize| a[u].iter().filter(|x| **x).count();
    let total: usize = (0..n).filter(|&u| p.community_of(u) == p.community_of(v)).map(deg).sum();
    if total == 0 {
        0.0
    } else {
        deg(v) as f64 / total as f64
    }
}

/// Double sum over node pairs.
pub fn modularity(g: &UndirectedGraph, p: &Partition) -> f64 {
    let n = g.node_count();
    let two_m = 2.0 * g.edge_count() as f64;
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if p.community_of(i) != p.community_of(j) {
                continue;
            }
            let a = f64::from(u8::from(g.has_edge(i, j)));
            q += a - g.degree(i) as f64 * g.degree(j) as f64 / two_m;
        }
    }
    q / two_m
}

/// Pearson correlation by explicit two-pass sums.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Largest `(p_i - p_j) / p_i` over `i <= j`.
pub fn drawdown(prices: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..prices.len() {
        for j in i..prices.len() {
            worst = worst.max((prices[i] - prices[j]) / prices[i]);
        }
    }
    worst
}
