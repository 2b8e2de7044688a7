//! Primal log-barrier method for
//!
//! ```text
//! minimize  sum_k w_k h(M_k x_{V_k})
//! s.t.      A x = b,  x > 0,  c.x >= r (optional)
//! ```
//!
//! with `h` from [`crate::information::mass_value`]. Each Newton step solves
//! the KKT system through the Schur complement `A H^-1 A^T`, where `H` is
//! block diagonal (one dense block per group of coupled variables); the
//! rank-one term of the reach barrier is handled by Sherman-Morrison.
//!
//! The barrier also carries a linear term `kappa * sum x`, which keeps the
//! centering problems bounded when the polytope contains unobserved cycles
//! of unbounded residence time; its weight vanishes with the barrier
//! parameter.

use crate::information::{mass_gradient, mass_hessian};
use crate::linalg::{dense_inverse, CsrMatrix, LinalgError, ProfileStructure};

/// One information term over the variables `vars`: `y = matrix * x[vars]`.
#[derive(Debug, Clone)]
pub(crate) struct Term {
    pub vars: Vec<usize>,
    /// `k x vars.len()`, nonnegative
    pub matrix: Vec<Vec<f64>>,
    pub weight: f64,
}

impl Term {
    fn masses(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(&self.vars).map(|(m, &v)| m * x[v]).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub n: usize,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub terms: Vec<Term>,
    /// `(coefficients, rhs)` for `c.x >= rhs`
    pub reach: Option<(Vec<(usize, f64)>, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierOptions {
    pub mu_initial: f64,
    pub mu_final: f64,
    pub mu_factor: f64,
    pub kappa: f64,
    pub max_newton: usize,
    pub newton_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            mu_initial: 1.0,
            mu_final: 1e-9,
            mu_factor: 0.1,
            kappa: 1.0,
            max_newton: 200,
            newton_tol: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierFailure {
    pub x: Vec<f64>,
    pub reason: String,
}

/// Smooth part `sum_k w_k h(y_k)`; `+inf` if some term leaves the finite
/// region.
pub(crate) fn objective(problem: &Problem, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in &problem.terms {
        if t.weight == 0.0 {
            continue;
        }
        total += t.weight * crate::information::mass_value(&t.masses(x)).as_f64();
    }
    total
}

struct Block {
    vars: Vec<usize>,
    terms: Vec<usize>,
}

struct Workspace {
    blocks: Vec<Block>,
    /// variables not coupled by any term
    singles: Vec<usize>,
    /// column view of `A`: `(row, coefficient)`
    cols: Vec<Vec<(usize, f64)>>,
    structure: ProfileStructure,
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

impl Workspace {
    fn new(problem: &Problem) -> Self {
        let n = problem.n;
        let mut parent: Vec<usize> = (0..n).collect();
        let mut in_term = vec![false; n];
        for t in &problem.terms {
            if t.weight == 0.0 {
                continue;
            }
            for &v in &t.vars {
                in_term[v] = true;
            }
            for w in t.vars.windows(2) {
                let (ra, rb) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        let mut block_of_root = vec![usize::MAX; n];
        let mut blocks: Vec<Block> = Vec::new();
        let mut singles = Vec::new();
        for v in 0..n {
            if !in_term[v] {
                singles.push(v);
                continue;
            }
            let r = find(&mut parent, v);
            if block_of_root[r] == usize::MAX {
                block_of_root[r] = blocks.len();
                blocks.push(Block {
                    vars: Vec::new(),
                    terms: Vec::new(),
                });
            }
            blocks[block_of_root[r]].vars.push(v);
        }
        for (k, t) in problem.terms.iter().enumerate() {
            if t.weight == 0.0 || t.vars.is_empty() {
                continue;
            }
            let r = find(&mut parent, t.vars[0]);
            blocks[block_of_root[r]].terms.push(k);
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for r in 0..problem.a.rows {
            for (c, v) in problem.a.row(r) {
                cols[c].push((r, v));
            }
        }
        let mut pattern: Vec<(usize, usize)> = Vec::new();
        let rows_of = |vars: &[usize]| -> Vec<usize> {
            let mut rows: Vec<usize> = vars.iter().flat_map(|&v| cols[v].iter().map(|&(r, _)| r)).collect();
            rows.sort_unstable();
            rows.dedup();
            rows
        };
        for b in &blocks {
            let rows = rows_of(&b.vars);
            for &i in &rows {
                for &j in &rows {
                    if i < j {
                        pattern.push((i, j));
                    }
                }
            }
        }
        for &v in &singles {
            let rows = rows_of(&[v]);
            for &i in &rows {
                for &j in &rows {
                    if i < j {
                        pattern.push((i, j));
                    }
                }
            }
        }
        let structure = ProfileStructure::new(problem.a.rows, pattern);
        Workspace {
            blocks,
            singles,
            cols,
            structure,
        }
    }
}

/// Barrier function value; `None` outside the domain.
fn barrier_value(problem: &Problem, x: &[f64], mu: f64, kappa: f64) -> Option<f64> {
    let mut log_sum = 0.0;
    let mut lin = 0.0;
    for &v in x {
        if !(v > 0.0) {
            return None;
        }
        log_sum += v.ln();
        lin += v;
    }
    let mut value = objective(problem, x);
    if !value.is_finite() {
        return None;
    }
    if let Some((c, rhs)) = &problem.reach {
        let slack: f64 = c.iter().map(|&(i, ci)| ci * x[i]).sum::<f64>() - rhs;
        if !(slack > 0.0) {
            return None;
        }
        value -= mu * slack.ln();
    }
    Some(value + mu * (kappa * lin - log_sum))
}

struct Newton {
    /// dense inverse of each block Hessian
    block_inv: Vec<Vec<f64>>,
    block_hess: Vec<Vec<f64>>,
    single_diag: Vec<f64>,
    scale: Vec<f64>,
}

impl Newton {
    fn apply_hinv(&self, ws: &Workspace, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (b, inv) in ws.blocks.iter().zip(&self.block_inv) {
            let k = b.vars.len();
            for i in 0..k {
                let mut acc = 0.0;
                for j in 0..k {
                    acc += inv[i * k + j] * u[b.vars[j]];
                }
                out[b.vars[i]] = acc;
            }
        }
        for (idx, &v) in ws.singles.iter().enumerate() {
            out[v] = u[v] / self.single_diag[idx];
        }
        out
    }

    fn apply_h(&self, ws: &Workspace, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d.len()];
        for (b, h) in ws.blocks.iter().zip(&self.block_hess) {
            let k = b.vars.len();
            for i in 0..k {
                out[b.vars[i]] = (0..k).map(|j| h[i * k + j] * d[b.vars[j]]).sum();
            }
        }
        for (idx, &v) in ws.singles.iter().enumerate() {
            out[v] = self.single_diag[idx] * d[v];
        }
        out
    }

    fn quad(&self, ws: &Workspace, d: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (b, h) in ws.blocks.iter().zip(&self.block_hess) {
            let k = b.vars.len();
            for i in 0..k {
                for j in 0..k {
                    acc += d[b.vars[i]] * h[i * k + j] * d[b.vars[j]];
                }
            }
        }
        for (idx, &v) in ws.singles.iter().enumerate() {
            acc += self.single_diag[idx] * d[v] * d[v];
        }
        acc
    }
}

/// Runs the barrier method from the strictly feasible point `x0`.
pub(crate) fn solve(problem: &Problem, x0: Vec<f64>, opts: &BarrierOptions) -> Result<Vec<f64>, BarrierFailure> {
    let n = problem.n;
    let mut x = x0;
    if n == 0 {
        return Ok(x);
    }
    let ws = Workspace::new(problem);
    restore(problem, &ws, &mut x);
    let kappa = opts.kappa;
    let mut mu = opts.mu_initial;
    let mut centered: Option<Vec<f64>> = None;
    loop {
        let mut converged = false;
        let mut previous = f64::INFINITY;
        let mut failure = None;
        for _ in 0..opts.max_newton {
            match newton_step(problem, &ws, &mut x, mu, kappa, opts.newton_tol, previous) {
                Ok(Step::Centered) => {
                    converged = true;
                    break;
                }
                Ok(Step::Moved(decrement)) => previous = decrement,
                Err(reason) => {
                    failure = Some(reason);
                    break;
                }
            }
        }
        if !converged {
            if let Some(last) = centered {
                return Ok(last);
            }
            let reason = failure.unwrap_or_else(|| format!("centering did not converge at mu = {mu:e}"));
            return Err(BarrierFailure { x, reason });
        }
        if mu <= opts.mu_final {
            return Ok(x);
        }
        if mu <= ACCEPT_MU {
            centered = Some(x.clone());
        }
        mu = (mu * opts.mu_factor).max(opts.mu_final);
    }
}

/// Barrier parameter below which a central point is returned when later
/// centering breaks down; its duality gap is about `n * mu`.
const ACCEPT_MU: f64 = 1e-6;

/// Residual below which no restoration is attempted.
const RESTORE_TOL: f64 = 1e-14;

/// Moves `x` back onto `A x = b` along the least-norm correction in the
/// metric `X^-2` of the log barrier, keeping `c.x` of the reach constraint
/// fixed. Leaves `x` alone when the projection is degenerate.
fn restore(problem: &Problem, ws: &Workspace, x: &mut [f64]) {
    for _ in 0..3 {
        let ax = problem.a.mul_vec(x);
        let r: Vec<f64> = ax.iter().zip(&problem.b).map(|(a, b)| a - b).collect();
        if r.iter().all(|v| v.abs() <= RESTORE_TOL) {
            return;
        }
        let w: Vec<f64> = x.iter().map(|v| v * v).collect();
        let mut diag = vec![0.0; problem.a.rows];
        for (v, col) in ws.cols.iter().enumerate() {
            for &(row, a) in col {
                diag[row] += a * a * w[v];
            }
        }
        let scale: Vec<f64> = diag
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 })
            .collect();
        let mut m = ws.structure.zeroed();
        for (v, col) in ws.cols.iter().enumerate() {
            for &(i, ai) in col {
                for &(j, aj) in col {
                    m.add(i, j, ai * w[v] * aj * scale[i] * scale[j]);
                }
            }
        }
        for (r, &d) in diag.iter().enumerate() {
            if d == 0.0 {
                m.add(r, r, 1.0);
            }
        }
        let Ok(lu) = m.factorize_semidefinite() else { return };
        // solves (A W A^T) y = z
        let solve = |z: &[f64]| -> Option<Vec<f64>> {
            let rhs: Vec<f64> = z.iter().zip(&scale).map(|(a, s)| a * s).collect();
            let mut y = lu.solve(&rhs).ok()?;
            for (l, s) in y.iter_mut().zip(&scale) {
                *l *= s;
            }
            Some(y)
        };
        // d = -W (A^T lambda + theta c) with A d = -r and c.d = 0
        let Some(mut lambda) = solve(&r) else { return };
        let mut wc = vec![0.0; problem.n];
        if let Some((c, _)) = &problem.reach {
            for &(i, ci) in c {
                wc[i] += w[i] * ci;
            }
            let u = problem.a.mul_vec(&wc);
            let Some(mu_) = solve(&u) else { return };
            let s: f64 = c.iter().map(|&(i, ci)| ci * wc[i]).sum();
            let denom = u.iter().zip(&mu_).map(|(a, b)| a * b).sum::<f64>() - s;
            let theta = if denom != 0.0 {
                u.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>() / denom
            } else {
                0.0
            };
            for (l, m) in lambda.iter_mut().zip(&mu_) {
                *l -= theta * m;
            }
            for v in wc.iter_mut() {
                *v *= theta;
            }
        }
        let atl = problem.a.transpose_mul_vec(&lambda);
        let delta: Vec<f64> = (0..problem.n).map(|i| -(w[i] * atl[i] + wc[i])).collect();
        let mut step: f64 = 1.0;
        for (xi, di) in x.iter().zip(&delta) {
            if *di < 0.0 {
                step = step.min(-0.5 * xi / di);
            }
        }
        let trial: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + step * di).collect();
        if let Some((c, rhs)) = &problem.reach {
            if c.iter().map(|&(i, ci)| ci * trial[i]).sum::<f64>() <= *rhs {
                return;
            }
        }
        x.copy_from_slice(&trial);
        if step < 1.0 {
            return;
        }
    }
}

enum Step {
    Centered,
    /// a step was taken; carries the Newton decrement before it
    Moved(f64),
}

const KKT_REFINEMENTS: usize = 2;
/// Decrement below which full Newton steps are taken without a line search.
const QUADRATIC_REGION: f64 = 1e-6;
/// Decrement below which a stalled decrease counts as centered.
const STALL_REGION: f64 = 1e-9;

/// One damped Newton step.
fn newton_step(
    problem: &Problem,
    ws: &Workspace,
    x: &mut Vec<f64>,
    mu: f64,
    kappa: f64,
    tol: f64,
    previous: f64,
) -> Result<Step, String> {
    let n = problem.n;
    let mut grad: Vec<f64> = x.iter().map(|&v| mu * (kappa - 1.0 / v)).collect();
    let mut newton = Newton {
        block_inv: Vec::with_capacity(ws.blocks.len()),
        block_hess: Vec::with_capacity(ws.blocks.len()),
        single_diag: ws.singles.iter().map(|&v| mu / (x[v] * x[v])).collect(),
        scale: Vec::new(),
    };
    for b in &ws.blocks {
        let k = b.vars.len();
        let mut h = vec![0.0; k * k];
        for &ti in &b.terms {
            let t = &problem.terms[ti];
            let local: Vec<usize> = t
                .vars
                .iter()
                .map(|v| b.vars.binary_search(v).expect("term variable in its block"))
                .collect();
            let y = t.masses(x);
            let gy = mass_gradient(&y);
            let hy = mass_hessian(&y);
            let m = y.len();
            for (j, &vj) in t.vars.iter().enumerate() {
                grad[vj] += t.weight * (0..m).map(|q| t.matrix[q][j] * gy[q]).sum::<f64>();
            }
            // M^T Hy M
            let cols = t.vars.len();
            let mut hm = vec![0.0; m * cols];
            for q in 0..m {
                for j in 0..cols {
                    hm[q * cols + j] = (0..m).map(|r| hy[q * m + r] * t.matrix[r][j]).sum();
                }
            }
            for i in 0..cols {
                for j in 0..cols {
                    let v: f64 = (0..m).map(|q| t.matrix[q][i] * hm[q * cols + j]).sum();
                    h[local[i] * k + local[j]] += t.weight * v;
                }
            }
        }
        for (i, &v) in b.vars.iter().enumerate() {
            h[i * k + i] += mu / (x[v] * x[v]);
        }
        let inv = dense_inverse(k, &h).map_err(|e| format!("block Hessian: {e}"))?;
        newton.block_inv.push(inv);
        newton.block_hess.push(h);
    }
    let mut reach_rho = 0.0;
    if let Some((c, rhs)) = &problem.reach {
        let slack: f64 = c.iter().map(|&(i, ci)| ci * x[i]).sum::<f64>() - rhs;
        for &(i, ci) in c {
            grad[i] -= mu * ci / slack;
        }
        reach_rho = mu / (slack * slack);
    }

    // Schur complement A H^-1 A^T with symmetric diagonal scaling
    let m = problem.a.rows;
    let mut diag = vec![0.0; m];
    let mut contributions: Vec<(usize, usize, f64)> = Vec::new();
    let mut push_block = |vars: &[usize], inv: &dyn Fn(usize, usize) -> f64| {
        let k = vars.len();
        for i in 0..k {
            for j in 0..k {
                let hij = inv(i, j);
                if hij == 0.0 {
                    continue;
                }
                for &(r, ar) in &ws.cols[vars[i]] {
                    for &(s, as_) in &ws.cols[vars[j]] {
                        contributions.push((r, s, ar * hij * as_));
                    }
                }
            }
        }
    };
    for (b, inv) in ws.blocks.iter().zip(&newton.block_inv) {
        let k = b.vars.len();
        push_block(&b.vars, &|i, j| inv[i * k + j]);
    }
    for (idx, &v) in ws.singles.iter().enumerate() {
        let d = newton.single_diag[idx];
        push_block(&[v], &|_, _| 1.0 / d);
    }
    for &(r, s, v) in &contributions {
        if r == s {
            diag[r] += v;
        }
    }
    let scale: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 })
        .collect();
    let mut schur = ws.structure.zeroed();
    for &(r, s, v) in &contributions {
        schur.add(r, s, v * scale[r] * scale[s]);
    }
    // rows without live variables only fix their multiplier
    for (r, &d) in diag.iter().enumerate() {
        if d == 0.0 {
            schur.add(r, r, 1.0);
        }
    }
    drop(contributions);
    let lu = schur.factorize_semidefinite().map_err(|e: LinalgError| format!("Schur complement: {e}"))?;
    newton.scale = scale;

    // solves H d - A^T l = u, A d = v
    let kkt_once = |u: &[f64], v: &[f64]| -> Result<(Vec<f64>, Vec<f64>), String> {
        let w = newton.apply_hinv(ws, u);
        let aw = problem.a.mul_vec(&w);
        let rhs: Vec<f64> = aw
            .iter()
            .zip(v)
            .zip(&newton.scale)
            .map(|((a, b), s)| (a - b) * s)
            .collect();
        let mut lambda = lu.solve(&rhs).map_err(|e| e.to_string())?;
        for (l, s) in lambda.iter_mut().zip(&newton.scale) {
            *l *= s;
        }
        let atl = problem.a.transpose_mul_vec(&lambda);
        let resid: Vec<f64> = u.iter().zip(&atl).map(|(a, b)| a - b).collect();
        Ok((newton.apply_hinv(ws, &resid), lambda.iter().map(|l| -l).collect()))
    };
    let kkt = |u: &[f64], v: &[f64]| -> Result<Vec<f64>, String> {
        let (mut d, mut l) = kkt_once(u, v)?;
        for _ in 0..KKT_REFINEMENTS {
            let hd = newton.apply_h(ws, &d);
            let atl = problem.a.transpose_mul_vec(&l);
            let ru: Vec<f64> = (0..n).map(|i| u[i] - hd[i] + atl[i]).collect();
            let ad = problem.a.mul_vec(&d);
            let rv: Vec<f64> = v.iter().zip(&ad).map(|(a, b)| a - b).collect();
            let (dd, dl) = kkt_once(&ru, &rv)?;
            for (a, b) in d.iter_mut().zip(&dd) {
                *a += b;
            }
            for (a, b) in l.iter_mut().zip(&dl) {
                *a += b;
            }
        }
        Ok(d)
    };

    let ax = problem.a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(&problem.b).map(|(a, b)| a - b).collect();
    let neg_g: Vec<f64> = grad.iter().map(|g| -g).collect();
    let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
    let mut dx = kkt(&neg_g, &neg_r)?;
    let mut c_dx = 0.0;
    if let Some((c, _)) = &problem.reach {
        let mut cvec = vec![0.0; n];
        for &(i, ci) in c {
            cvec[i] += ci;
        }
        let z = kkt(&cvec, &vec![0.0; m])?;
        let c_d0: f64 = c.iter().map(|&(i, ci)| ci * dx[i]).sum();
        let c_z: f64 = c.iter().map(|&(i, ci)| ci * z[i]).sum();
        let factor = reach_rho * c_d0 / (1.0 + reach_rho * c_z);
        for (d, zi) in dx.iter_mut().zip(&z) {
            *d -= factor * zi;
        }
        c_dx = c.iter().map(|&(i, ci)| ci * dx[i]).sum();
    }
    if dx.iter().any(|v| !v.is_finite()) {
        return Err("non-finite Newton direction".to_string());
    }

    let decrement = newton.quad(ws, &dx) + reach_rho * c_dx * c_dx;
    let slope: f64 = grad.iter().zip(&dx).map(|(g, d)| g * d).sum();
    let f0 = barrier_value(problem, x, mu, kappa).ok_or("iterate left the domain")?;
    let residual_small = r.iter().all(|v| v.abs() <= 1e-9);
    let scale_f = 1.0 + f0.abs();
    let stalled = decrement / 2.0 <= STALL_REGION * scale_f && decrement > 0.25 * previous;
    if residual_small && (decrement / 2.0 <= tol * scale_f || slope >= 0.0 || stalled) {
        return Ok(Step::Centered);
    }
    let quadratic = residual_small && decrement / 2.0 <= QUADRATIC_REGION * scale_f;

    let mut step: f64 = 1.0;
    for (xi, di) in x.iter().zip(&dx) {
        if *di < 0.0 {
            step = step.min(-0.99 * xi / di);
        }
    }
    if let Some((c, rhs)) = &problem.reach {
        if c_dx < 0.0 {
            let slack: f64 = c.iter().map(|&(i, ci)| ci * x[i]).sum::<f64>() - rhs;
            step = step.min(-0.99 * slack / c_dx);
        }
    }
    let mut trial = vec![0.0; n];
    for _ in 0..80 {
        for i in 0..n {
            trial[i] = x[i] + step * dx[i];
        }
        if let Some(f1) = barrier_value(problem, &trial, mu, kappa) {
            if quadratic || f1 <= f0 + 1e-4 * step * slope.min(0.0) || !residual_small {
                std::mem::swap(x, &mut trial);
                restore(problem, ws, x);
                return Ok(Step::Moved(decrement));
            }
        }
        step *= 0.5;
    }
    // no progress possible at machine precision
    if decrement / 2.0 <= QUADRATIC_REGION * scale_f {
        Ok(Step::Centered)
    } else {
        Err(format!("line search failed at mu = {mu:e} (decrement {decrement:e})"))
    }
}
