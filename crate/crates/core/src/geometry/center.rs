//! Chebyshev ball and maximum-volume inscribed ellipsoid of a polyhedron.

use super::lp::{solve_lp, LpStatus, Sense};
use super::Polyhedron;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::scalar::{dot, norm2, Scalar};

/// Largest Euclidean ball `{x | ‖x − center‖ ≤ radius}` inside a polyhedron.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevBall<T> {
    pub center: Vec<T>,
    /// `+∞` when the polyhedron contains arbitrarily large balls.
    pub radius: T,
}

/// Inscribed ellipsoid `{center + E u | ‖u‖ ≤ 1}` with `E` symmetric positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct InscribedEllipsoid<T> {
    pub center: Vec<T>,
    pub shape: Mat<T>,
    /// Set when the log-det iteration failed to converge and the Chebyshev
    /// center was returned instead (`shape` is then the Chebyshev ball).
    pub degraded: bool,
    pub iterations: usize,
}

/// Chebyshev center: `max r  s.t.  a_jᵀx + r‖a_j‖₂ ≤ b_j, r ≥ 0`.
///
/// Returns `Ok(None)` iff the polyhedron is empty.
pub fn chebyshev<T: Scalar>(p: &Polyhedron<T>) -> Result<Option<ChebyshevBall<T>>> {
    let n = p.dim();
    let mut a = Mat::zeros(0, n + 1);
    let mut b = Vec::with_capacity(p.num_rows() + 1);
    let mut row = vec![T::zero(); n + 1];
    for (ai, bi) in p.rows() {
        row[..n].copy_from_slice(ai);
        row[n] = norm2(ai);
        a.push_row(&row);
        b.push(bi);
    }
    row.iter_mut().for_each(|v| *v = T::zero());
    row[n] = -T::one();
    a.push_row(&row);
    b.push(T::zero());
    let lifted = Polyhedron::new(a, b)?;
    let mut obj = vec![T::zero(); n + 1];
    obj[n] = T::one();
    let out = solve_lp(&obj, Sense::Maximize, &lifted)?;
    match out.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Optimal => {
            let z = out.point.expect("optimal LP carries a point");
            Ok(Some(ChebyshevBall {
                center: z[..n].to_vec(),
                radius: z[n].max(T::zero()),
            }))
        }
        LpStatus::Unbounded => {
            let feas = solve_lp(&vec![T::zero(); n], Sense::Minimize, p)?;
            let center = feas.point.ok_or(Error::EmptyPolyhedron)?;
            Ok(Some(ChebyshevBall {
                center,
                radius: T::infinity(),
            }))
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MveOptions {
    /// Cap on the total number of Newton steps.
    pub max_iter: usize,
    /// Stationarity target: barrier weight × row count and Newton decrement.
    pub grad_tol: f64,
}

impl Default for MveOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
        }
    }
}

/// Center of the maximum-volume inscribed ellipsoid.
///
/// Solves `max log det E  s.t. ‖E a_j‖ + a_jᵀc ≤ b_j` with a barrier method:
/// for a decreasing weight `μ` the concave function
/// `log det E + μ Σ log(b_j − a_jᵀc − ‖E a_j‖)` is maximized by damped Newton
/// steps over `(c, E)`, with `E` parametrized by its upper triangle.
/// If the iteration budget runs out the Chebyshev center is returned with
/// `degraded = true`.
///
/// The polyhedron must be nonempty and bounded.
pub fn mve_center<T: Scalar>(p: &Polyhedron<T>, opts: MveOptions) -> Result<InscribedEllipsoid<T>> {
    let ball = chebyshev(p)?.ok_or(Error::EmptyPolyhedron)?;
    if !ball.radius.is_finite() {
        return Err(Error::UnboundedPolyhedron);
    }
    let n = p.dim();
    let fallback = |iterations| InscribedEllipsoid {
        center: ball.center.clone(),
        shape: Mat::identity(n).scale(ball.radius),
        degraded: true,
        iterations,
    };
    if ball.radius <= T::tol_feas() {
        return Ok(fallback(0));
    }
    let rows = normalized_rows(p);
    if rows.is_empty() {
        return Err(Error::UnboundedPolyhedron);
    }
    let mut solver = MveSolver::new(n, rows);
    match solver.run(&ball, opts) {
        Some((center, shape, iterations)) => Ok(InscribedEllipsoid {
            center,
            shape,
            degraded: false,
            iterations,
        }),
        None => {
            log::debug!("MVE iteration did not converge; using Chebyshev center");
            Ok(fallback(opts.max_iter))
        }
    }
}

fn normalized_rows<T: Scalar>(p: &Polyhedron<T>) -> Vec<(Vec<T>, T)> {
    p.rows()
        .filter_map(|(a, b)| {
            let s = norm2(a);
            (s > T::epsilon()).then(|| (a.iter().map(|&v| v / s).collect(), b / s))
        })
        .collect()
}

/// Variables: `z = (c_1..c_n, θ_1..θ_N)` with `θ` the upper triangle of `E`
/// in row-major order, `N = n(n+1)/2`.
struct MveSolver<T> {
    n: usize,
    rows: Vec<(Vec<T>, T)>,
    /// `(p, q)` for every triangle index.
    pairs: Vec<(usize, usize)>,
}

impl<T: Scalar> MveSolver<T> {
    fn new(n: usize, rows: Vec<(Vec<T>, T)>) -> Self {
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        for p in 0..n {
            for q in p..n {
                pairs.push((p, q));
            }
        }
        Self { n, rows, pairs }
    }

    fn nvar(&self) -> usize {
        self.n + self.pairs.len()
    }

    fn shape(&self, z: &[T]) -> Mat<T> {
        let mut e = Mat::zeros(self.n, self.n);
        for (k, &(p, q)) in self.pairs.iter().enumerate() {
            let v = z[self.n + k];
            e[(p, q)] = v;
            e[(q, p)] = v;
        }
        e
    }

    /// Slacks `s_j = b_j − a_jᵀc − ‖E a_j‖`, or `None` outside the domain.
    fn slacks(&self, z: &[T], e: &Mat<T>) -> Option<Vec<T>> {
        let c = &z[..self.n];
        let mut out = Vec::with_capacity(self.rows.len());
        for (a, b) in &self.rows {
            let s = *b - dot(a, c) - norm2(&e.matvec(a));
            if !(s > T::zero()) {
                return None;
            }
            out.push(s);
        }
        Some(out)
    }

    fn value(&self, z: &[T], mu: T) -> Option<T> {
        let e = self.shape(z);
        let ch = Cholesky::new(&e)?;
        let s = self.slacks(z, &e)?;
        Some(ch.log_det() + mu * s.iter().map(|v| v.ln()).sum::<T>())
    }

    /// Gradient and negated Hessian (positive definite) of the barrier objective.
    fn derivatives(&self, z: &[T], mu: T) -> Option<(Vec<T>, Mat<T>)> {
        let n = self.n;
        let nv = self.nvar();
        let e = self.shape(z);
        let winv = Cholesky::new(&e)?.inverse();
        let mut g = vec![T::zero(); nv];
        let mut h = Mat::zeros(nv, nv);
        let two = T::lit(2.0);

        // log det E
        let terms = |p: usize, q: usize| -> Vec<(usize, usize)> {
            if p == q {
                vec![(p, p)]
            } else {
                vec![(p, q), (q, p)]
            }
        };
        for (k, &(p, q)) in self.pairs.iter().enumerate() {
            g[n + k] = if p == q { winv[(p, p)] } else { two * winv[(p, q)] };
            let tk = terms(p, q);
            for (l, &(r, s)) in self.pairs.iter().enumerate().skip(k) {
                let mut acc = T::zero();
                for &(a, b) in &tk {
                    for &(c, d) in &terms(r, s) {
                        acc = acc + winv[(b, c)] * winv[(d, a)];
                    }
                }
                h[(n + k, n + l)] = acc;
                h[(n + l, n + k)] = acc;
            }
        }

        // μ Σ log s_j
        let mut grad_s = vec![T::zero(); nv];
        // sparse ∂u/∂θ_k: at most two (component, value) pairs
        let mut du: Vec<[(usize, T); 2]> = vec![[(0, T::zero()); 2]; self.pairs.len()];
        for (a, b) in &self.rows {
            let u = e.matvec(a);
            let r = norm2(&u);
            let s = *b - dot(a, &z[..n]) - r;
            if !(s > T::zero()) {
                return None;
            }
            for (k, &(p, q)) in self.pairs.iter().enumerate() {
                du[k] = if p == q {
                    [(p, a[p]), (p, T::zero())]
                } else {
                    [(p, a[q]), (q, a[p])]
                };
            }
            // ∂r/∂θ
            let mut gr = vec![T::zero(); self.pairs.len()];
            if r > T::zero() {
                for (k, d) in du.iter().enumerate() {
                    gr[k] = (u[d[0].0] * d[0].1 + u[d[1].0] * d[1].1) / r;
                }
            }
            for j in 0..n {
                grad_s[j] = -a[j];
            }
            for k in 0..self.pairs.len() {
                grad_s[n + k] = -gr[k];
            }
            let inv_s = T::one() / s;
            for j in 0..nv {
                g[j] = g[j] + mu * grad_s[j] * inv_s;
            }
            let w = mu * inv_s * inv_s;
            for i in 0..nv {
                if grad_s[i] == T::zero() {
                    continue;
                }
                let gi = w * grad_s[i];
                for j in i..nv {
                    h[(i, j)] = h[(i, j)] + gi * grad_s[j];
                }
            }
            // Curvature of the norm: (MᵀM − gr grᵀ) / r, scaled by μ/s.
            if r > T::zero() {
                let w2 = mu * inv_s / r;
                for k in 0..self.pairs.len() {
                    for l in k..self.pairs.len() {
                        let mut mm = T::zero();
                        for &(ci, vi) in &du[k] {
                            for &(cj, vj) in &du[l] {
                                if ci == cj {
                                    mm = mm + vi * vj;
                                }
                            }
                        }
                        let v = w2 * (mm - gr[k] * gr[l]);
                        h[(n + k, n + l)] = h[(n + k, n + l)] + v;
                    }
                }
            }
        }
        for i in 0..nv {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        Some((g, h))
    }

    fn run(&mut self, ball: &super::ChebyshevBall<T>, opts: MveOptions) -> Option<(Vec<T>, Mat<T>, usize)> {
        let n = self.n;
        let mut z = vec![T::zero(); self.nvar()];
        z[..n].copy_from_slice(&ball.center);
        let e0 = ball.radius * T::lit(0.5);
        for (k, &(p, q)) in self.pairs.iter().enumerate() {
            if p == q {
                z[n + k] = e0;
            }
        }
        let m = T::of_usize(self.rows.len());
        let gtol = T::lit(opts.grad_tol);
        let mut mu = T::one();
        let mut iters = 0usize;
        loop {
            // centering
            loop {
                if iters >= opts.max_iter {
                    return None;
                }
                iters += 1;
                let (g, h) = self.derivatives(&z, mu)?;
                let step = match Cholesky::new(&h) {
                    Some(ch) => ch.solve(&g),
                    None => {
                        let mut hr = h.clone();
                        let reg = T::lit(1e-10) * (T::one() + h.norm_inf());
                        for i in 0..hr.rows() {
                            hr[(i, i)] = hr[(i, i)] + reg;
                        }
                        Cholesky::new(&hr)?.solve(&g)
                    }
                };
                let decrement = dot(&g, &step);
                if !decrement.is_finite() {
                    return None;
                }
                if decrement * T::lit(0.5) <= gtol {
                    break;
                }
                let f0 = self.value(&z, mu)?;
                let mut t = T::one();
                let mut accepted = false;
                for _ in 0..60 {
                    let cand: Vec<T> = z.iter().zip(&step).map(|(&a, &d)| a + t * d).collect();
                    if let Some(f1) = self.value(&cand, mu) {
                        if f1 >= f0 + T::lit(0.25) * t * decrement {
                            z = cand;
                            accepted = true;
                            break;
                        }
                    }
                    t = t * T::lit(0.5);
                }
                if !accepted {
                    // no ascent possible at working precision: treat as centered
                    break;
                }
            }
            if mu * m <= gtol {
                break;
            }
            mu = mu * T::lit(0.1);
        }
        Some((z[..n].to_vec(), self.shape(&z), iters))
    }
}
