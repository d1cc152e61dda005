//! Dense-matrix reference implementations, written directly from the
//! definitions and sharing no code with the library beyond `Grid` geometry.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pnp_core::{Boundary, Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
    Field::from_values(grid, (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn to_vec(f: &Field) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Periodic difference operators as explicit matrices.
pub struct DenseOps {
    pub shape: Vec<usize>,
    pub h: Vec<f64>,
    pub len: usize,
    /// Cell volume `h^d`.
    pub w: f64,
    pub back: Vec<DMatrix<f64>>,
    pub fwd: Vec<DMatrix<f64>>,
    pub avg: Vec<DMatrix<f64>>,
    pub lap: DMatrix<f64>,
}

impl DenseOps {
    pub fn periodic(grid: &Grid) -> Self {
        assert_eq!(grid.bc(), Boundary::Periodic);
        let shape = grid.shape().to_vec();
        let h: Vec<f64> = (0..shape.len()).map(|a| grid.h(a)).collect();
        let len: usize = shape.iter().product();
        let id = DMatrix::<f64>::identity(len, len);
        let mut back = Vec::new();
        let mut fwd = Vec::new();
        let mut avg = Vec::new();
        for (a, &ha) in h.iter().enumerate() {
            let plus = shift(&shape, a, 1);
            let minus = shift(&shape, a, -1);
            back.push((&id - &minus) / ha);
            fwd.push((&plus - &id) / ha);
            avg.push((&id + &minus) * 0.5);
        }
        let mut lap = DMatrix::<f64>::zeros(len, len);
        for a in 0..shape.len() {
            lap += &fwd[a] * &back[a];
        }
        DenseOps {
            w: h.iter().product(),
            shape,
            h,
            len,
            back,
            fwd,
            avg,
            lap,
        }
    }

    /// `Σ_a D⁺_a (diag(A_a w) D⁻_a u)`
    pub fn div_avg_grad(&self, w: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len);
        for a in 0..self.shape.len() {
            let coeff = &self.avg[a] * w;
            let grad = &self.back[a] * u;
            out += &self.fwd[a] * grad.component_mul(&coeff);
        }
        out
    }

    /// Zero-mean solution of `-L φ = r - mean(r)`, via the rank-one-regularised
    /// operator `-L + 11ᵀ/N` (invertible, and maps zero-mean to zero-mean).
    pub fn poisson(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = self.len as f64;
        let mean = r.sum() / n;
        let rhs = r.map(|v| v - mean);
        let a = -&self.lap + DMatrix::from_element(self.len, self.len, 1.0 / n);
        a.lu().solve(&rhs).expect("regularised Laplacian is invertible")
    }

    /// `(αI - L)⁻¹ r`
    pub fn helmholtz(&self, alpha: f64, r: &DVector<f64>) -> DVector<f64> {
        let a = DMatrix::<f64>::identity(self.len, self.len) * alpha - &self.lap;
        a.lu().solve(r).expect("shifted Laplacian is invertible")
    }

    /// `H¹` Gram matrix: `<u, v>_{H¹} = uᵀ Q v` with `Q = h^d (I - L)`.
    pub fn h1_gram(&self) -> DMatrix<f64> {
        (DMatrix::<f64>::identity(self.len, self.len) - &self.lap) * self.w
    }
}

/// `(S u)_i = u_{i + offset e_axis}` with periodic wrap; axis 0 varies fastest.
fn shift(shape: &[usize], axis: usize, offset: isize) -> DMatrix<f64> {
    let len: usize = shape.iter().product();
    let mut m = DMatrix::zeros(len, len);
    for i in 0..len {
        let mut idx = Vec::with_capacity(shape.len());
        let mut rest = i;
        for &n in shape {
            idx.push(rest % n);
            rest /= n;
        }
        let n = shape[axis] as isize;
        idx[axis] = ((idx[axis] as isize + offset).rem_euclid(n)) as usize;
        let mut j = 0;
        for a in (0..shape.len()).rev() {
            j = j * shape[a] + idx[a];
        }
        m[(i, j)] += 1.0;
    }
    m
}

/// Exact `L²` projection by sorting: returns `(u, ξ)`.
pub fn l2_projection_sorted(v: &[f64], w: f64, mass: f64) -> (Vec<f64>, f64) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut partial = 0.0;
    let mut xi = f64::NAN;
    for k in 0..sorted.len() {
        partial += sorted[k];
        let candidate = (w * partial - mass) / (w * (k + 1) as f64);
        let next_ok = k + 1 == sorted.len() || sorted[k + 1] <= candidate;
        if sorted[k] > candidate && next_ok {
            xi = candidate;
            break;
        }
    }
    assert!(xi.is_finite(), "no breakpoint found");
    (v.iter().map(|x| (x - xi).max(0.0)).collect(), xi)
}

/// `H¹` projection by enumerating every zero set: each candidate solves the
/// equality-constrained QP, and the best feasible one is the global minimiser.
/// Returns `(u, ξ)` with `Q(u - ũ) = h^d (λ - ξ)`.
pub fn h1_projection_enumerated(ops: &DenseOps, v: &[f64], mass: f64) -> (Vec<f64>, f64) {
    let n = ops.len;
    assert!(n <= 16, "enumeration is exponential");
    let q = ops.h1_gram();
    let qv = &q * DVector::from_column_slice(v);
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        if free.is_empty() {
            continue;
        }
        let m = free.len();
        let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut b = DVector::<f64>::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                a[(r, c)] = q[(i, j)];
            }
            a[(r, m)] = ops.w;
            a[(m, r)] = ops.w;
            b[r] = qv[i];
        }
        b[m] = mass;
        let Some(sol) = a.lu().solve(&b) else { continue };
        let mut u = vec![0.0; n];
        for (r, &i) in free.iter().enumerate() {
            u[i] = sol[r];
        }
        if u.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let d = DVector::from_iterator(n, u.iter().zip(v).map(|(a, b)| a - b));
        let objective = 0.5 * d.dot(&(&q * &d));
        if best.as_ref().is_none_or(|(o, _, _)| objective < *o) {
            best = Some((objective, u, sol[m]));
        }
    }
    let (_, u, xi) = best.expect("a feasible zero set exists");
    (u.iter().map(|x| x.max(0.0)).collect(), xi)
}

pub type Source = fn(&[f64; 3], f64) -> f64;

/// Straightforward CNFDP (`L²` correction) on a periodic grid.
pub struct DenseScheme<'a> {
    pub ops: &'a DenseOps,
    pub grid: Grid,
    pub tau: f64,
    pub sources: Option<(Source, Source)>,
    pub rho: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct DenseState {
    pub p: DVector<f64>,
    pub n: DVector<f64>,
    pub phi: DVector<f64>,
    pub p_prev: DVector<f64>,
    pub n_prev: DVector<f64>,
    pub phi_prev: DVector<f64>,
    pub mass: f64,
    pub k: usize,
}

impl DenseScheme<'_> {
    fn sample(&self, f: Source, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.ops.len, (0..self.ops.len).map(|i| f(&self.grid.coords(i), t)))
    }

    fn potential(&self, p: &DVector<f64>, n: &DVector<f64>) -> DVector<f64> {
        let mut r = p - n;
        if let Some(rho) = &self.rho {
            r += rho;
        }
        self.ops.poisson(&r)
    }

    pub fn init(&self, p0: &DVector<f64>, n0: &DVector<f64>) -> DenseState {
        let mp = self.ops.w * p0.sum();
        let mn = self.ops.w * n0.sum();
        let mass = mp.max(mn);
        let p = p0 * (mass / mp);
        let n = n0 * (mass / mn);
        let phi = self.potential(&p, &n);
        DenseState {
            p_prev: p.clone(),
            n_prev: n.clone(),
            phi_prev: phi.clone(),
            p,
            n,
            phi,
            mass,
            k: 0,
        }
    }

    /// Predicted `(p̃, ñ)` for the next step.
    pub fn predict(&self, s: &DenseState) -> (DVector<f64>, DVector<f64>) {
        let tau = self.tau;
        let t = s.k as f64 * tau;
        if s.k == 0 {
            let mut rp = &s.p / tau + self.ops.div_avg_grad(&s.p, &s.phi);
            let mut rn = &s.n / tau - self.ops.div_avg_grad(&s.n, &s.phi);
            if let Some((fp, fn_)) = self.sources {
                rp += self.sample(fp, t);
                rn += self.sample(fn_, t);
            }
            (self.ops.helmholtz(1.0 / tau, &rp), self.ops.helmholtz(1.0 / tau, &rn))
        } else {
            let ps = &s.p * 1.5 - &s.p_prev * 0.5;
            let ns = &s.n * 1.5 - &s.n_prev * 0.5;
            let phis = &s.phi * 1.5 - &s.phi_prev * 0.5;
            let mut rp = &s.p * (2.0 / tau) + &self.ops.lap * &s.p + self.ops.div_avg_grad(&ps, &phis) * 2.0;
            let mut rn = &s.n * (2.0 / tau) + &self.ops.lap * &s.n - self.ops.div_avg_grad(&ns, &phis) * 2.0;
            if let Some((fp, fn_)) = self.sources {
                rp += self.sample(fp, t + 0.5 * tau) * 2.0;
                rn += self.sample(fn_, t + 0.5 * tau) * 2.0;
            }
            (self.ops.helmholtz(2.0 / tau, &rp), self.ops.helmholtz(2.0 / tau, &rn))
        }
    }

    pub fn step(&self, s: &mut DenseState) {
        let (pt, nt) = self.predict(s);
        let (p, _) = l2_projection_sorted(pt.as_slice(), self.ops.w, s.mass);
        let (n, _) = l2_projection_sorted(nt.as_slice(), self.ops.w, s.mass);
        let p = DVector::from_vec(p);
        let n = DVector::from_vec(n);
        let phi = self.potential(&p, &n);
        s.p_prev = std::mem::replace(&mut s.p, p);
        s.n_prev = std::mem::replace(&mut s.n, n);
        s.phi_prev = std::mem::replace(&mut s.phi, phi);
        s.k += 1;
    }
}
