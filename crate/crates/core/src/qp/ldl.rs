//! Sparse symmetric indefinite LDLᵀ factorization.
//!
//! The factorization works on a symmetrically equilibrated copy of the matrix
//! and chooses pivots dynamically: nodes are visited in order of increasing
//! degree (ties by index) and accepted as 1×1 or 2×2 pivots when they pass a
//! threshold test. Nodes whose remaining row is numerically zero become null
//! pivots; they make the matrix singular and are reported by [`LdlFactor::solve`].

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy)]
pub struct LdlOptions {
    /// Threshold `u` of the pivot tests (0 < u ≤ 0.5).
    pub pivot_threshold: f64,
    /// Entries at or below this magnitude count as zero when detecting null pivots.
    pub null_tol: f64,
    /// Iterative refinement sweeps after the first solve.
    pub refinement_steps: usize,
}

impl Default for LdlOptions {
    fn default() -> Self {
        LdlOptions {
            pivot_threshold: 0.1,
            null_tol: 1e-11,
            refinement_steps: 4,
        }
    }
}

/// Symmetric matrix in row-map form. Only one triangle needs to be inserted.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    diag: Vec<f64>,
    off: Vec<BTreeMap<usize, f64>>,
}

impl SymMatrix {
    pub fn new(n: usize) -> Self {
        SymMatrix {
            diag: vec![0.0; n],
            off: vec![BTreeMap::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Adds `value` at `(i, j)` and its mirror.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        if i == j {
            self.diag[i] += value;
        } else {
            *self.off[i].entry(j).or_insert(0.0) += value;
            *self.off[j].entry(i).or_insert(0.0) += value;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                for (&j, &v) in &self.off[i] {
                    s += v * x[j];
                }
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Pivot {
    One {
        p: usize,
        d: f64,
        l: Vec<(usize, f64)>,
    },
    Two {
        p: usize,
        q: usize,
        // inverse of the 2×2 block [[a, b], [b, c]] stored as (a', b', c')
        inv: [f64; 3],
        l: Vec<(usize, f64, f64)>,
    },
    Null {
        p: usize,
    },
}

/// Result of a solve against a possibly singular factorization.
#[derive(Debug, Clone)]
pub struct LdlSolve {
    pub x: Vec<f64>,
    /// One entry per null pivot: `(pivot node, vᵀ·rhs)` where `v` is the
    /// associated null vector of the original matrix.
    pub null_residuals: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    matrix: SymMatrix,
    scale: Vec<f64>,
    pivots: Vec<Pivot>,
    options: LdlOptions,
}

enum Choice {
    One(usize),
    Two(usize, usize),
    Null(usize),
}

struct Work {
    diag: Vec<f64>,
    off: Vec<BTreeMap<usize, f64>>,
    order: BTreeSet<(usize, usize)>,
    alive: Vec<bool>,
}

impl Work {
    fn degree(&self, i: usize) -> usize {
        self.off[i].len()
    }

    fn offmax_excluding(&self, i: usize, skip: usize) -> f64 {
        self.off[i]
            .iter()
            .filter(|(&j, _)| j != skip)
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    fn argmax_off(&self, i: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (&j, &v) in &self.off[i] {
            match best {
                Some((_, b)) if v.abs() <= b => {}
                _ => best = Some((j, v.abs())),
            }
        }
        best
    }

    fn try_pivot(&self, i: usize, opts: &LdlOptions) -> Option<Choice> {
        let d = self.diag[i];
        let offmax = self.offmax_excluding(i, usize::MAX);
        if d.abs() <= opts.null_tol && offmax <= opts.null_tol {
            return Some(Choice::Null(i));
        }
        if d.abs() > opts.null_tol && d.abs() >= opts.pivot_threshold * offmax {
            return Some(Choice::One(i));
        }
        let (j, _) = self.argmax_off(i)?;
        let a = d;
        let b = self.off[i][&j];
        let c = self.diag[j];
        let det = a * c - b * b;
        if det.abs() <= f64::EPSILON * (a.abs() * c.abs() + b * b) || det == 0.0 {
            return None;
        }
        let mi = self.offmax_excluding(i, j);
        let mj = self.offmax_excluding(j, i);
        let inv = [c / det, -b / det, a / det];
        let g1 = inv[0].abs() * mi + inv[1].abs() * mj;
        let g2 = inv[1].abs() * mi + inv[2].abs() * mj;
        if g1.max(g2) * opts.pivot_threshold <= 1.0 {
            Some(Choice::Two(i.min(j), i.max(j)))
        } else {
            None
        }
    }

    fn fallback(&self) -> Choice {
        let mut best = (0.0f64, usize::MAX, usize::MAX);
        for &(_, i) in &self.order {
            if self.diag[i].abs() > best.0 {
                best = (self.diag[i].abs(), i, i);
            }
            for (&j, &v) in &self.off[i] {
                if v.abs() > best.0 {
                    best = (v.abs(), i, j);
                }
            }
        }
        let (_, i, j) = best;
        if i == usize::MAX {
            let &(_, first) = self.order.iter().next().expect("nonempty");
            Choice::Null(first)
        } else if i == j {
            Choice::One(i)
        } else {
            // a global maximum off the diagonal: the 2×2 block is safe unless singular
            let det = self.diag[i] * self.diag[j] - self.off[i][&j].powi(2);
            if det == 0.0 {
                if self.diag[i].abs() >= self.diag[j].abs() && self.diag[i] != 0.0 {
                    Choice::One(i)
                } else {
                    Choice::One(j)
                }
            } else {
                Choice::Two(i.min(j), i.max(j))
            }
        }
    }

    fn set_entry(&mut self, r: usize, s: usize, value: f64) {
        let drop = value.abs() < 1e-300;
        if r == s {
            self.diag[r] = value;
            return;
        }
        if drop {
            self.off[r].remove(&s);
            self.off[s].remove(&r);
        } else {
            self.off[r].insert(s, value);
            self.off[s].insert(r, value);
        }
    }

    fn get(&self, r: usize, s: usize) -> f64 {
        if r == s {
            self.diag[r]
        } else {
            self.off[r].get(&s).copied().unwrap_or(0.0)
        }
    }

    /// Removes pivot nodes from the active matrix, returning their rows and
    /// the degrees their neighbours had in the order set beforehand.
    fn detach(&mut self, nodes: &[usize]) -> (Vec<Vec<(usize, f64)>>, BTreeMap<usize, usize>) {
        let mut before = BTreeMap::new();
        for &p in nodes {
            for &r in self.off[p].keys() {
                if !nodes.contains(&r) {
                    before.insert(r, self.degree(r));
                }
            }
        }
        for &p in nodes {
            self.order.remove(&(self.off[p].len(), p));
            self.alive[p] = false;
        }
        let mut rows = Vec::with_capacity(nodes.len());
        for &p in nodes {
            let row: Vec<(usize, f64)> = std::mem::take(&mut self.off[p]).into_iter().collect();
            for &(r, _) in &row {
                if self.alive[r] {
                    self.off[r].remove(&p);
                }
            }
            rows.push(row);
        }
        (rows, before)
    }

    fn reindex(&mut self, before: &BTreeMap<usize, usize>) {
        for (&r, &old) in before {
            self.order.remove(&(old, r));
            self.order.insert((self.degree(r), r));
        }
    }
}

impl LdlFactor {
    pub fn factor(matrix: SymMatrix, options: LdlOptions) -> Self {
        let n = matrix.n();
        let scale = ruiz_scaling(&matrix);
        let mut work = Work {
            diag: (0..n)
                .map(|i| matrix.diag[i] * scale[i] * scale[i])
                .collect(),
            off: (0..n)
                .map(|i| {
                    matrix.off[i]
                        .iter()
                        .filter(|(_, &v)| v != 0.0)
                        .map(|(&j, &v)| (j, v * scale[i] * scale[j]))
                        .collect()
                })
                .collect(),
            order: BTreeSet::new(),
            alive: vec![true; n],
        };
        for i in 0..n {
            work.order.insert((work.degree(i), i));
        }
        let mut pivots = Vec::with_capacity(n);
        while !work.order.is_empty() {
            let mut choice = None;
            for &(_, i) in &work.order {
                if let Some(c) = work.try_pivot(i, &options) {
                    choice = Some(c);
                    break;
                }
            }
            let choice = choice.unwrap_or_else(|| work.fallback());
            pivots.push(eliminate(&mut work, choice));
        }
        LdlFactor {
            matrix,
            scale,
            pivots,
            options,
        }
    }

    pub fn n(&self) -> usize {
        self.scale.len()
    }

    pub fn null_count(&self) -> usize {
        self.pivots
            .iter()
            .filter(|p| matches!(p, Pivot::Null { .. }))
            .count()
    }

    /// Solves `K x = rhs`. Components of `rhs` along null directions are
    /// ignored (the corresponding solution component is set to zero) and
    /// reported in [`LdlSolve::null_residuals`].
    pub fn solve(&self, rhs: &[f64]) -> LdlSolve {
        let (mut x, null_residuals) = self.solve_once(rhs);
        let norm_rhs = inf_norm(rhs);
        let mut last = f64::INFINITY;
        for _ in 0..self.options.refinement_steps {
            let kx = self.matrix.mul_vec(&x);
            let r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
            let rn = inf_norm(&r);
            if rn == 0.0 || rn >= last || rn <= 1e-15 * (norm_rhs + inf_norm(&kx)) {
                break;
            }
            last = rn;
            let (dx, _) = self.solve_once(&r);
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        }
        LdlSolve { x, null_residuals }
    }

    fn solve_once(&self, rhs: &[f64]) -> (Vec<f64>, Vec<(usize, f64)>) {
        let mut y: Vec<f64> = rhs.iter().zip(&self.scale).map(|(b, s)| b * s).collect();
        for pivot in &self.pivots {
            match pivot {
                Pivot::One { p, l, .. } => {
                    let yp = y[*p];
                    for &(r, v) in l {
                        y[r] -= v * yp;
                    }
                }
                Pivot::Two { p, q, l, .. } => {
                    let (yp, yq) = (y[*p], y[*q]);
                    for &(r, vp, vq) in l {
                        y[r] -= vp * yp + vq * yq;
                    }
                }
                Pivot::Null { .. } => {}
            }
        }
        let mut nulls = Vec::new();
        for pivot in &self.pivots {
            match pivot {
                Pivot::One { p, d, .. } => y[*p] /= d,
                Pivot::Two { p, q, inv, .. } => {
                    let (yp, yq) = (y[*p], y[*q]);
                    y[*p] = inv[0] * yp + inv[1] * yq;
                    y[*q] = inv[1] * yp + inv[2] * yq;
                }
                Pivot::Null { p } => {
                    nulls.push((*p, y[*p]));
                    y[*p] = 0.0;
                }
            }
        }
        self.back_substitute(&mut y);
        let x = y.iter().zip(&self.scale).map(|(z, s)| z * s).collect();
        (x, nulls)
    }

    fn back_substitute(&self, z: &mut [f64]) {
        for pivot in self.pivots.iter().rev() {
            match pivot {
                Pivot::One { p, l, .. } => {
                    let s: f64 = l.iter().map(|&(r, v)| v * z[r]).sum();
                    z[*p] -= s;
                }
                Pivot::Two { p, q, l, .. } => {
                    let sp: f64 = l.iter().map(|&(r, vp, _)| vp * z[r]).sum();
                    let sq: f64 = l.iter().map(|&(r, _, vq)| vq * z[r]).sum();
                    z[*p] -= sp;
                    z[*q] -= sq;
                }
                Pivot::Null { .. } => {}
            }
        }
    }

    /// Null vector of the original matrix attached to the null pivot at `node`.
    pub fn null_vector(&self, node: usize) -> Vec<f64> {
        let mut z = vec![0.0; self.n()];
        z[node] = 1.0;
        self.back_substitute(&mut z);
        z.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }
}

fn eliminate(work: &mut Work, choice: Choice) -> Pivot {
    match choice {
        Choice::Null(p) => {
            let (_, before) = work.detach(&[p]);
            work.reindex(&before);
            Pivot::Null { p }
        }
        Choice::One(p) => {
            let d = work.diag[p];
            let (mut rows, before) = work.detach(&[p]);
            let row = rows.pop().expect("one row");
            let l: Vec<(usize, f64)> = row.iter().map(|&(r, v)| (r, v / d)).collect();
            for (a, &(r, vr)) in row.iter().enumerate() {
                for &(s, vs) in &row[a..] {
                    let updated = work.get(r, s) - vr * vs / d;
                    work.set_entry(r, s, updated);
                }
            }
            work.reindex(&before);
            Pivot::One { p, d, l }
        }
        Choice::Two(p, q) => {
            let a = work.diag[p];
            let b = work.off[p][&q];
            let c = work.diag[q];
            let det = a * c - b * b;
            let inv = [c / det, -b / det, a / det];
            let (rows, before) = work.detach(&[p, q]);
            let mut cols: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for &(r, v) in &rows[0] {
                if r != q {
                    cols.entry(r).or_insert((0.0, 0.0)).0 = v;
                }
            }
            for &(r, v) in &rows[1] {
                if r != p {
                    cols.entry(r).or_insert((0.0, 0.0)).1 = v;
                }
            }
            let entries: Vec<(usize, f64, f64)> =
                cols.into_iter().map(|(r, (vp, vq))| (r, vp, vq)).collect();
            let l: Vec<(usize, f64, f64)> = entries
                .iter()
                .map(|&(r, vp, vq)| (r, vp * inv[0] + vq * inv[1], vp * inv[1] + vq * inv[2]))
                .collect();
            for (idx, &(r, lp, lq)) in l.iter().enumerate() {
                for &(s, vp, vq) in &entries[idx..] {
                    let updated = work.get(r, s) - (lp * vp + lq * vq);
                    work.set_entry(r, s, updated);
                }
            }
            work.reindex(&before);
            Pivot::Two { p, q, inv, l }
        }
    }
}

fn ruiz_scaling(matrix: &SymMatrix) -> Vec<f64> {
    let n = matrix.n();
    let mut scale = vec![1.0; n];
    for _ in 0..12 {
        let mut changed = false;
        let row_max: Vec<f64> = (0..n)
            .map(|i| {
                let mut m = (matrix.diag[i] * scale[i] * scale[i]).abs();
                for (&j, &v) in &matrix.off[i] {
                    m = m.max((v * scale[i] * scale[j]).abs());
                }
                m
            })
            .collect();
        for i in 0..n {
            if row_max[i] > 0.0 && (row_max[i] - 1.0).abs() > 1e-3 {
                scale[i] /= row_max[i].sqrt();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // powers of two keep the scaling exact
    scale
        .iter()
        .map(|&s| 2f64.powi(s.log2().round() as i32))
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
