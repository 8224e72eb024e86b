//! Euclidean projection onto `{x : a^T x = d, l <= x <= u}` by breakpoint
//! search, and the generalized Jacobian of that projection.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// The feasible set of the unified problem: one hyperplane intersected with a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxLineSet {
    a: Vec<f64>,
    d: f64,
    l: Vec<f64>,
    u: Vec<f64>,
}

impl BoxLineSet {
    /// Validates the data and checks that the set is nonempty.
    pub fn new(a: Vec<f64>, d: f64, l: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if l.len() != n || u.len() != n {
            return input(format!(
                "constraint vectors differ in length (a: {}, l: {}, u: {})",
                n,
                l.len(),
                u.len()
            ));
        }
        if !d.is_finite() || a.iter().chain(&l).chain(&u).any(|v| !v.is_finite()) {
            return input("constraint data must be finite");
        }
        if let Some(i) = (0..n).find(|&i| l[i] >= u[i]) {
            return input(format!(
                "lower bound must be below upper bound at index {i} ({} >= {})",
                l[i], u[i]
            ));
        }
        let (mut lo, mut hi, mut mag) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (p, q) = (a[i] * l[i], a[i] * u[i]);
            lo += p.min(q);
            hi += p.max(q);
            mag += p.abs().max(q.abs());
        }
        let slack = 1e-12 * (1.0 + mag + d.abs());
        if d < lo - slack || d > hi + slack {
            return Err(Error::Infeasible(format!(
                "a^T x = {d} is unreachable in the box (range [{lo}, {hi}])"
            )));
        }
        Ok(BoxLineSet { a, d, l, u })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Largest violation of the box and the equality at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = (crate::vecops::dot(&self.a, x) - self.d).abs();
        for i in 0..x.len() {
            worst = worst.max(self.l[i] - x[i]).max(x[i] - self.u[i]);
        }
        worst
    }
}

/// Which box face each coordinate of a projection sits on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActiveSetMask {
    pub lower_active: Vec<usize>,
    pub upper_active: Vec<usize>,
    /// Coordinates strictly inside the box, in increasing order.
    pub free: Vec<usize>,
    /// 1 on free coordinates, 0 elsewhere.
    pub sigma_diag: Vec<f64>,
}

impl ActiveSetMask {
    pub fn p(&self) -> usize {
        self.free.len()
    }

    pub fn dim(&self) -> usize {
        self.sigma_diag.len()
    }

    /// Builds a mask from a list of free coordinates; the rest count as lower-active.
    pub fn from_free(n: usize, free: Vec<usize>) -> Self {
        let mut sigma_diag = vec![0.0; n];
        for &i in &free {
            sigma_diag[i] = 1.0;
        }
        let lower_active = (0..n).filter(|&i| sigma_diag[i] == 0.0).collect();
        ActiveSetMask {
            lower_active,
            upper_active: Vec::new(),
            free,
            sigma_diag,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub x: Vec<f64>,
    pub lambda_hat: f64,
    pub active_mask: ActiveSetMask,
}

/// Derivative of the scalar dual of the projection problem,
/// `-sum_i a_i clip(v_i - lambda a_i, l_i, u_i) + d`. Non-decreasing in `lambda`.
pub fn grad_phi(lambda: f64, v: &[f64], set: &BoxLineSet) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        let ai = set.a[i];
        if ai != 0.0 {
            s += ai * (v[i] - lambda * ai).clamp(set.l[i], set.u[i]);
        }
    }
    set.d - s
}

/// Sorted kink locations of [`grad_phi`]; coordinates with `a_i = 0` contribute none.
pub fn breakpoints(v: &[f64], set: &BoxLineSet) -> Vec<f64> {
    let mut t = Vec::with_capacity(2 * v.len());
    for i in 0..v.len() {
        let ai = set.a[i];
        if ai != 0.0 {
            t.push((v[i] - set.u[i]) / ai);
            t.push((v[i] - set.l[i]) / ai);
        }
    }
    t.sort_by(f64::total_cmp);
    t
}

fn find_multiplier(v: &[f64], set: &BoxLineSet) -> f64 {
    let t = breakpoints(v, set);
    if t.is_empty() {
        return 0.0;
    }
    let f = |lam: f64| grad_phi(lam, v, set);
    // grad_phi is constant outside [t_0, t_last]
    let (mut lo, mut hi) = (0, t.len() - 1);
    let f_first = f(t[lo]);
    if f_first >= 0.0 {
        return t[lo];
    }
    let mut f_lo = f_first;
    let mut f_hi = f(t[hi]);
    if f_hi < 0.0 {
        return t[hi];
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let fm = f(t[mid]);
        if fm < 0.0 {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    let (tl, tu) = (t[lo], t[hi]);
    if tu <= tl || f_hi == f_lo {
        return tl;
    }
    let lam = tl - f_lo * (tu - tl) / (f_hi - f_lo);
    lam.clamp(tl, tu)
}

/// Projects `v` onto the set; the multiplier comes from a binary search over
/// the breakpoints followed by interpolation on the bracketing segment.
pub fn project_box_line(v: &[f64], set: &BoxLineSet) -> Result<ProjectionResult> {
    let n = set.dim();
    if v.len() != n {
        return input(format!(
            "vector of length {} projected onto a set of dimension {}",
            v.len(),
            n
        ));
    }
    let lam = find_multiplier(v, set);
    Ok(assemble_at(v, set, lam))
}

/// `clip(v - lam a, l, u)` with its active-set classification, for a given
/// multiplier.
pub fn assemble_at(v: &[f64], set: &BoxLineSet, lam: f64) -> ProjectionResult {
    let n = v.len();
    let mut x = vec![0.0; n];
    let mut mask = ActiveSetMask {
        lower_active: Vec::new(),
        upper_active: Vec::new(),
        free: Vec::new(),
        sigma_diag: vec![0.0; n],
    };
    for i in 0..n {
        let t = v[i] - lam * set.a[i];
        let (l, u) = (set.l[i], set.u[i]);
        if t <= l + 1e-12 * (1.0 + l.abs()) {
            x[i] = l;
            mask.lower_active.push(i);
        } else if t >= u - 1e-12 * (1.0 + u.abs()) {
            x[i] = u;
            mask.upper_active.push(i);
        } else {
            x[i] = t;
            mask.free.push(i);
            mask.sigma_diag[i] = 1.0;
        }
    }
    ProjectionResult {
        x,
        lambda_hat: lam,
        active_mask: mask,
    }
}

/// `P y` for the HS-Jacobian `P = S (I - a a^T / (a^T S a)) S` (or `P = S` when
/// `a^T S a = 0`), where `S` is the 0/1 diagonal of free coordinates. O(n).
pub fn hs_jacobian_apply(mask: &ActiveSetMask, a: &[f64], y: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; y.len()];
    let (mut s, mut az) = (0.0, 0.0);
    for &i in &mask.free {
        z[i] = y[i];
        s += a[i] * a[i];
        az += a[i] * y[i];
    }
    if s != 0.0 {
        let t = az / s;
        for &i in &mask.free {
            z[i] -= a[i] * t;
        }
    }
    z
}
