//! Small dense linear programs.
//!
//! [`LpProblem`] holds a sparse row-wise constraint matrix with general
//! variable bounds; [`solve_lp`] converts it to standard form and runs a
//! two-phase tableau simplex (Dantzig pricing, Bland's rule once the
//! objective stalls).

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpRow {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpProblem {
    pub sense: Sense,
    pub names: Vec<String>,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit hit or the final point failed the residual check.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Absolute residual tolerance on the original rows and bounds, scaled by row magnitude.
pub const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const MAX_ITER: usize = 50_000;

impl Default for LpProblem {
    fn default() -> Self {
        LpProblem::new(Sense::Minimize)
    }
}

impl LpProblem {
    pub fn new(sense: Sense) -> LpProblem {
        LpProblem { sense, names: Vec::new(), cost: Vec::new(), lower: Vec::new(), upper: Vec::new(), rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    /// Adds a column and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, name: impl Into<String>, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) {
        self.rows.push(LpRow { name: name.into(), coeffs, kind, rhs });
    }

    /// Largest violation of any row or bound at `x`, each row scaled by
    /// `max(1, |rhs|, max |a_ij|)`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let scale = r.coeffs.iter().fold(r.rhs.abs().max(1.0), |m, &(_, a)| m.max(a.abs()));
            let v = match r.kind {
                RowKind::Le => lhs - r.rhs,
                RowKind::Ge => r.rhs - lhs,
                RowKind::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(v / scale);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

// How an original variable maps onto non-negative standard-form columns.
#[derive(Clone, Copy)]
enum VarMap {
    Shift { col: usize, offset: f64 },
    Mirror { col: usize, offset: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau {
    m: usize,
    n: usize,
    // (m + 1) x (n + 1), last row is the reduced-cost row, last column the rhs
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.n + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * (self.n + 1) + self.n]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.n + 1;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (x, &pv) in row.iter_mut().zip(&prow) {
                    *x -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Loads `cost` into the objective row, priced out against the basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.n + 1;
        for j in 0..w {
            self.t[self.m * w + j] = if j < self.n { cost[j] } else { 0.0 };
        }
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.t[self.m * w + j] -= cb * self.t[i * w + j];
                }
            }
        }
    }

    /// Minimizes over columns `< allowed`. Returns `Ok(iterations)` at
    /// optimality, `Err(Unbounded | NumericalFailure)` otherwise.
    fn run(&mut self, allowed: usize, iters: &mut usize) -> Result<(), LpStatus> {
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        loop {
            if *iters >= MAX_ITER {
                return Err(LpStatus::NumericalFailure);
            }
            let bland = stall > 50;
            let mut enter = None;
            let mut best = -PIVOT_TOL;
            for j in 0..allowed {
                let d = self.at(self.m, j);
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else { return Ok(()) };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Err(LpStatus::Unbounded) };
            self.pivot(r, c);
            *iters += 1;

            let obj = -self.rhs(self.m);
            if obj < last_obj - 1e-12 {
                stall = 0;
                last_obj = obj;
            } else {
                stall += 1;
            }
        }
    }
}

/// Solves `p` exactly up to floating-point tolerance. Deterministic for a given input.
pub fn solve_lp(p: &LpProblem) -> LpSolution {
    let nv = p.num_vars();
    let fail = |status, iterations| LpSolution { status, x: vec![0.0; nv], objective: f64::NAN, iterations };

    for j in 0..nv {
        if p.lower[j] > p.upper[j] || p.lower[j] == f64::INFINITY || p.upper[j] == f64::NEG_INFINITY {
            return fail(LpStatus::Infeasible, 0);
        }
    }

    // Standard-form columns.
    let mut maps = Vec::with_capacity(nv);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..nv {
        let (l, u) = (p.lower[j], p.upper[j]);
        let m = if l.is_finite() {
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            VarMap::Shift { col: ncols, offset: l }
        } else if u.is_finite() {
            VarMap::Mirror { col: ncols, offset: u }
        } else {
            ncols += 1;
            VarMap::Split { pos: ncols - 1, neg: ncols }
        };
        ncols += 1;
        maps.push(m);
    }

    // Rows as dense vectors over standard columns, plus slack columns.
    struct Std {
        a: Vec<(usize, f64)>,
        slack: f64,
        rhs: f64,
    }
    let mut rows: Vec<Std> = Vec::new();
    for r in &p.rows {
        let mut a: Vec<(usize, f64)> = Vec::new();
        let mut rhs = r.rhs;
        for &(j, coef) in &r.coeffs {
            match maps[j] {
                VarMap::Shift { col, offset } => {
                    a.push((col, coef));
                    rhs -= coef * offset;
                }
                VarMap::Mirror { col, offset } => {
                    a.push((col, -coef));
                    rhs -= coef * offset;
                }
                VarMap::Split { pos, neg } => {
                    a.push((pos, coef));
                    a.push((neg, -coef));
                }
            }
        }
        let slack = match r.kind {
            RowKind::Le => 1.0,
            RowKind::Ge => -1.0,
            RowKind::Eq => 0.0,
        };
        rows.push(Std { a, slack, rhs });
    }
    for &(col, width) in &bound_rows {
        rows.push(Std { a: vec![(col, 1.0)], slack: 1.0, rhs: width });
    }

    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.slack != 0.0).count();
    let n_struct = ncols + nslack;
    let n = n_struct + m;
    let w = n + 1;
    let mut tab = Tableau { m, n, t: vec![0.0; (m + 1) * w], basis: vec![0; m] };
    let mut s = ncols;
    for (i, r) in rows.iter().enumerate() {
        let sign = if r.rhs < 0.0 { -1.0 } else { 1.0 };
        for &(c, a) in &r.a {
            tab.t[i * w + c] += sign * a;
        }
        if r.slack != 0.0 {
            tab.t[i * w + s] = sign * r.slack;
            s += 1;
        }
        tab.t[i * w + n_struct + i] = 1.0;
        tab.t[i * w + n] = sign * r.rhs;
        tab.basis[i] = n_struct + i;
    }

    // Phase 1: minimize the sum of artificials.
    let mut iters = 0usize;
    let mut c1 = vec![0.0; n];
    for c in c1.iter_mut().skip(n_struct) {
        *c = 1.0;
    }
    tab.set_objective(&c1);
    if let Err(status) = tab.run(n, &mut iters) {
        // Phase 1 is bounded below by zero, so only numerical trouble gets here.
        let _ = status;
        return fail(LpStatus::NumericalFailure, iters);
    }
    let rhs_scale = rows.iter().fold(1.0f64, |a, r| a.max(r.rhs.abs()));
    if -tab.rhs(m) > 1e-9 * rhs_scale {
        return fail(LpStatus::Infeasible, iters);
    }

    // Drive zero-level artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < tab.m {
        if tab.basis[i] >= n_struct {
            let col = (0..n_struct).find(|&j| tab.at(i, j).abs() > PIVOT_TOL);
            match col {
                Some(c) => tab.pivot(i, c),
                None => {
                    let w = tab.n + 1;
                    tab.t.drain(i * w..(i + 1) * w);
                    tab.basis.remove(i);
                    tab.m -= 1;
                    continue;
                }
            }
        }
        i += 1;
    }

    // Phase 2 on the structural columns only.
    let sgn = if p.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let mut c2 = vec![0.0; n];
    for (j, map) in maps.iter().enumerate() {
        let c = sgn * p.cost[j];
        match *map {
            VarMap::Shift { col, .. } => c2[col] = c,
            VarMap::Mirror { col, .. } => c2[col] = -c,
            VarMap::Split { pos, neg } => {
                c2[pos] = c;
                c2[neg] = -c;
            }
        }
    }
    tab.set_objective(&c2);
    if let Err(status) = tab.run(n_struct, &mut iters) {
        return fail(status, iters);
    }

    let mut y = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(i);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shift { col, offset } => offset + y[col],
            VarMap::Mirror { col, offset } => offset - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    if p.max_violation(&x) > FEAS_TOL {
        return fail(LpStatus::NumericalFailure, iters);
    }
    LpSolution { status: LpStatus::Optimal, objective: p.objective_at(&x), x, iterations: iters }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn maximize_single_bound() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        p.add_row("cap", vec![(x, 1.0)], RowKind::Le, 3.0);
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds() {
        let mut p = LpProblem::new(Sense::Minimize);
        p.add_var("x", 1.0, 0.0, 0.0);
        assert_eq!(solve_lp(&p).status, LpStatus::Infeasible);

        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        p.add_row("lo", vec![(x, 1.0)], RowKind::Ge, 1.0);
        p.add_row("hi", vec![(x, 1.0)], RowKind::Le, 0.0);
        assert_eq!(solve_lp(&p).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = p.add_var("y", 0.0, f64::INFINITY, 0.0);
        p.add_row("r", vec![(x, 1.0), (y, -1.0)], RowKind::Le, 1.0);
        assert_eq!(solve_lp(&p).status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_with_redundant_row() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_var("x", 0.0, 10.0, 1.0);
        let y = p.add_var("y", 0.0, 10.0, 2.0);
        p.add_row("a", vec![(x, 1.0), (y, 1.0)], RowKind::Eq, 4.0);
        p.add_row("b", vec![(x, 2.0), (y, 2.0)], RowKind::Eq, 8.0);
        p.add_row("c", vec![(x, 1.0)], RowKind::Le, 3.0);
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 5.0).abs() < 1e-9);
    }

    #[test]
    fn upper_only_and_free_variables() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_var("x", f64::NEG_INFINITY, -2.0, -1.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        p.add_row("link", vec![(y, 1.0), (x, -1.0)], RowKind::Ge, 0.5);
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] + 2.0).abs() < 1e-9);
        assert!((s.x[1] + 1.5).abs() < 1e-9);
    }

    // Vertex enumeration over a 2-D box intersected with random half-planes.
    fn brute_force_2d(rows: &[(f64, f64, f64)], c: (f64, f64)) -> Option<f64> {
        let mut lines: Vec<(f64, f64, f64)> = rows.to_vec();
        lines.extend([(1.0, 0.0, 5.0), (-1.0, 0.0, 5.0), (0.0, 1.0, 5.0), (0.0, -1.0, 5.0)]);
        let mut best: Option<f64> = None;
        for i in 0..lines.len() {
            for k in i + 1..lines.len() {
                let (a1, b1, r1) = lines[i];
                let (a2, b2, r2) = lines[k];
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-9 {
                    continue;
                }
                let x = (r1 * b2 - r2 * b1) / det;
                let y = (a1 * r2 - a2 * r1) / det;
                if lines.iter().all(|&(a, b, r)| a * x + b * y <= r + 1e-7) {
                    let v = c.0 * x + c.1 * y;
                    best = Some(best.map_or(v, |bv: f64| bv.min(v)));
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            rows in prop::collection::vec((-3i32..=3, -3i32..=3, -4i32..=6), 0..6),
            cx in -3i32..=3, cy in -3i32..=3,
        ) {
            let rows: Vec<(f64, f64, f64)> = rows.into_iter().map(|(a, b, r)| (a as f64, b as f64, r as f64)).collect();
            let mut p = LpProblem::new(Sense::Minimize);
            let x = p.add_var("x", -5.0, 5.0, cx as f64);
            let y = p.add_var("y", -5.0, 5.0, cy as f64);
            for (k, &(a, b, r)) in rows.iter().enumerate() {
                p.add_row(format!("r{k}"), vec![(x, a), (y, b)], RowKind::Le, r);
            }
            let s = solve_lp(&p);
            match brute_force_2d(&rows, (cx as f64, cy as f64)) {
                Some(v) => {
                    prop_assert_eq!(s.status, LpStatus::Optimal);
                    prop_assert!((s.objective - v).abs() < 1e-6, "{} vs {}", s.objective, v);
                    prop_assert!(p.max_violation(&s.x) <= FEAS_TOL);
                }
                None => prop_assert_eq!(s.status, LpStatus::Infeasible),
            }
        }

        #[test]
        fn deterministic(seed_rows in prop::collection::vec((-3i32..=3, -3i32..=3, 0i32..=6), 1..5)) {
            let mut p = LpProblem::new(Sense::Maximize);
            let x = p.add_var("x", 0.0, 4.0, 1.0);
            let y = p.add_var("y", 0.0, 4.0, 1.0);
            for (k, (a, b, r)) in seed_rows.into_iter().enumerate() {
                p.add_row(format!("r{k}"), vec![(x, a as f64), (y, b as f64)], RowKind::Le, r as f64);
            }
            let a = solve_lp(&p);
            let b = solve_lp(&p);
            prop_assert_eq!(a.status, b.status);
            prop_assert_eq!(a.x, b.x);
        }
    }
}
