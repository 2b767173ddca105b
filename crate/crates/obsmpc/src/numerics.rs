//! Dense linear algebra shared by the rest of the crate: paired eigenstructure,
//! discrete Lyapunov and Riccati solvers, H2 norms and loop margins.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::lti::DtStateSpace;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Two eigenvalues closer than this (relative to max(1, |λ|)) form one block.
pub const REPEAT_TOL: f64 = 1e-7;

/// Conjugate bookkeeping for one eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    Real,
    Partner(usize),
}

/// Eigenvalues, eigenvectors and conjugate/repeat structure of a real matrix.
///
/// Values are sorted by modulus, then by |argument|, with the positive
/// imaginary member of a pair first.
#[derive(Clone, Debug)]
pub struct EigenStructure {
    pub values: Vec<Complex64>,
    pub vectors: CMat,
    pub pair_index: Vec<Pairing>,
    /// Block id per value; repeated eigenvalues share an id.
    pub group: Vec<usize>,
}

impl EigenStructure {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices belonging to the same repeated block as `i` (including `i`).
    pub fn block_of(&self, i: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.group[j] == self.group[i])
            .collect()
    }

    /// Largest ‖Mv − λv‖ over all (λ, v).
    pub fn max_residual(&self, m: &Mat) -> f64 {
        let mc = to_complex(m);
        (0..self.len())
            .map(|i| {
                let v = self.vectors.column(i);
                (&mc * v - v * self.values[i]).norm()
            })
            .fold(0.0, f64::max)
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(dim(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} has non-finite entries")))
    }
}

/// Eigenvalues of a real square matrix (unsorted).
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur =
        Schur::try_new(m.clone(), f64::EPSILON, 2000 * n).ok_or_else(|| Error::Numerical {
            what: "Schur decomposition did not converge".into(),
            residual: f64::NAN,
        })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Full eigendecomposition with deterministic ordering and conjugate pairing.
pub fn eig_paired(m: &Mat) -> Result<EigenStructure> {
    let n = m.nrows();
    let mut vals = eigenvalues(m)?;
    let scale = m.norm().max(1.0);

    // Snap near-real values, then pair conjugates exactly.
    for v in vals.iter_mut() {
        if v.im.abs() <= 1e-13 * scale {
            v.im = 0.0;
        }
    }
    let mut partner: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if vals[i].im <= 0.0 || partner[i].is_some() {
            continue;
        }
        let target = vals[i].conj();
        let j = (0..n)
            .filter(|&j| vals[j].im < 0.0 && partner[j].is_none())
            .min_by(|&a, &b| {
                (vals[a] - target)
                    .norm()
                    .total_cmp(&(vals[b] - target).norm())
            })
            .ok_or_else(|| Error::Numerical {
                what: "unpaired complex eigenvalue".into(),
                residual: vals[i].im,
            })?;
        partner[i] = Some(j);
        partner[j] = Some(i);
        vals[j] = target;
    }
    if (0..n).any(|i| vals[i].im != 0.0 && partner[i].is_none()) {
        return Err(Error::Numerical {
            what: "unpaired complex eigenvalue".into(),
            residual: f64::NAN,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ka = (vals[a].norm(), vals[a].arg().abs(), vals[a].im < 0.0);
        let kb = (vals[b].norm(), vals[b].arg().abs(), vals[b].im < 0.0);
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.cmp(&kb.2))
    });
    let mut rank = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    let values: Vec<Complex64> = order.iter().map(|&i| vals[i]).collect();
    let pair_index: Vec<Pairing> = order
        .iter()
        .map(|&i| match partner[i] {
            Some(j) => Pairing::Partner(rank[j]),
            None => Pairing::Real,
        })
        .collect();

    // Union-find over near-equal values.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= REPEAT_TOL * values[i].norm().max(1.0) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut group = vec![0; n];
    let mut ids: Vec<usize> = Vec::new();
    for i in 0..n {
        let id = match ids.iter().position(|&r| r == roots[i]) {
            Some(p) => p,
            None => {
                ids.push(roots[i]);
                ids.len() - 1
            }
        };
        group[i] = id;
    }

    let mut vectors = CMat::zeros(n, n);
    let mut done = vec![false; n];
    for g in 0..ids.len() {
        let members: Vec<usize> = (0..n).filter(|&i| group[i] == g).collect();
        if done[members[0]] {
            continue;
        }
        let k = members.len();
        let mean = members.iter().map(|&i| values[i]).sum::<Complex64>() / k as f64;
        let closed = members.iter().all(|&i| match pair_index[i] {
            Pairing::Real => true,
            Pairing::Partner(j) => members.contains(&j),
        });
        if closed || mean.im == 0.0 {
            let basis = real_generalised_nullspace(m, mean.re, k)?;
            for (c, &i) in members.iter().enumerate() {
                vectors.set_column(i, &to_complex(&basis).column(c));
                done[i] = true;
            }
        } else {
            let basis = complex_generalised_nullspace(m, mean, k)?;
            for (c, &i) in members.iter().enumerate() {
                vectors.set_column(i, &basis.column(c));
                done[i] = true;
                if let Pairing::Partner(j) = pair_index[i] {
                    vectors.set_column(j, &basis.column(c).map(|z| z.conj()));
                    done[j] = true;
                }
            }
        }
    }

    Ok(EigenStructure {
        values,
        vectors,
        pair_index,
        group,
    })
}

fn shifted_power_real(m: &Mat, lambda: f64, k: usize) -> Mat {
    let n = m.nrows();
    let s = m - Mat::identity(n, n) * lambda;
    let mut p = s.clone();
    for _ in 1..k {
        p = &p * &s;
    }
    p
}

/// Orthonormal basis (k columns) of the near-nullspace of (M − λI)^k.
fn real_generalised_nullspace(m: &Mat, lambda: f64, k: usize) -> Result<Mat> {
    let n = m.nrows();
    let p = shifted_power_real(m, lambda, k);
    let svd = SVD::new(p, false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numerical {
        what: "svd".into(),
        residual: f64::NAN,
    })?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut out = Mat::zeros(n, k);
    for (c, &i) in idx.iter().take(k).enumerate() {
        let mut v: Vector = vt.row(i).transpose();
        let (imax, _) = v.iamax_full();
        if v[imax] < 0.0 {
            v = -v;
        }
        out.set_column(c, &v.normalize());
    }
    Ok(out)
}

fn complex_generalised_nullspace(m: &Mat, lambda: Complex64, k: usize) -> Result<CMat> {
    let n = m.nrows();
    let s = to_complex(m) - CMat::identity(n, n) * lambda;
    let mut p = s.clone();
    for _ in 1..k {
        p = &p * &s;
    }
    let svd = SVD::new(p, false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numerical {
        what: "svd".into(),
        residual: f64::NAN,
    })?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut out = CMat::zeros(n, k);
    for (c, &i) in idx.iter().take(k).enumerate() {
        let v = vt.row(i).transpose().map(|z| z.conj());
        let imax = (0..n)
            .max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm()))
            .unwrap_or(0);
        let phase = if v[imax].norm() > 0.0 {
            v[imax].conj() / v[imax].norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let v = v * phase;
        let nv = v.norm();
        out.set_column(c, &(v / Complex64::new(nv, 0.0)));
    }
    Ok(out)
}

/// Orthonormal basis of the nullspace of a real matrix (rank decided at `rtol`·σ_max).
pub fn nullspace(m: &Mat, rtol: f64) -> Mat {
    let (r, c) = m.shape();
    if c == 0 {
        return Mat::zeros(0, 0);
    }
    if r == 0 {
        return Mat::identity(c, c);
    }
    // Pad to square so the SVD returns a full set of right singular vectors.
    let mut a = Mat::zeros(r.max(c), c);
    a.view_mut((0, 0), (r, c)).copy_from(m);
    let svd = SVD::new(a, false, true);
    let vt = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.max();
    let mut idx: Vec<usize> = (0..c).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let null: Vec<usize> = idx
        .into_iter()
        .filter(|&i| svd.singular_values[i] <= rtol * smax.max(f64::MIN_POSITIVE))
        .collect();
    let mut out = Mat::zeros(c, null.len());
    for (k, &i) in null.iter().enumerate() {
        out.set_column(k, &vt.row(i).transpose());
    }
    out
}

/// Moore–Penrose pseudo-inverse.
pub fn pinv(m: &Mat) -> Mat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Mat::zeros(c, r);
    }
    m.clone()
        .pseudo_inverse(1e-13 * m.norm().max(1.0))
        .expect("non-negative epsilon")
}

pub fn inverse(m: &Mat, what: &str) -> Result<Mat> {
    ensure_square(m, what)?;
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition(format!("{what} is singular")))
}

/// 2-norm condition number.
pub fn cond(m: &Mat) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let s = m.clone().singular_values();
    let (mx, mn) = (s.max(), s.min());
    if mn == 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

fn smith_sum(a: &Mat, q: &Mat) -> Mat {
    let mut ak = a.clone();
    let mut p = q.clone();
    for _ in 0..128 {
        let inc = &ak * &p * ak.transpose();
        p += &inc;
        ak = &ak * &ak;
        if ak.norm() < 1e-12 || inc.norm() <= 1e-18 * p.norm() {
            break;
        }
    }
    p
}

/// Solves A·P·Aᵀ − P + Q = 0 for stable A by doubling with one residual correction.
pub fn solve_discrete_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    ensure_square(a, "A")?;
    ensure_square(q, "Q")?;
    if a.nrows() != q.nrows() {
        return Err(dim("A and Q must have the same size"));
    }
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let rho = spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let mut p = smith_sum(a, q);
    let r = q + a * &p * a.transpose() - &p;
    p += smith_sum(a, &r);
    let p = (&p + p.transpose()) * 0.5;
    let res = (a * &p * a.transpose() - &p + q).norm();
    if res > 1e-9 * (q.norm() + p.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical {
            what: "discrete Lyapunov".into(),
            residual: res,
        });
    }
    Ok(p)
}

/// H2 norm √trace(C P Cᵀ + D Dᵀ) of a stable discrete system.
pub fn h2_norm(sys: &DtStateSpace) -> Result<f64> {
    if sys.n() == 0 {
        return Ok(sys.d.norm());
    }
    let p = solve_discrete_lyapunov(&sys.a, &(&sys.b * sys.b.transpose()))?;
    let t = (&sys.c * p * sys.c.transpose() + &sys.d * sys.d.transpose()).trace();
    Ok(t.max(0.0).sqrt())
}

/// Steady-state Kalman design for x⁺ = Ax + w, y = Cx + v.
#[derive(Clone, Debug)]
pub struct KalmanDesign {
    /// Predictor gain L = A P Cᵀ (C P Cᵀ + Rn)⁻¹; A − L C is stable.
    pub gain: Mat,
    /// Filter (measurement-update) gain P Cᵀ (C P Cᵀ + Rn)⁻¹.
    pub filter_gain: Mat,
    /// A priori error covariance.
    pub covariance: Mat,
    pub iterations: usize,
    pub residual: f64,
}

/// Filter DARE P = A P Aᵀ − A P Cᵀ (C P Cᵀ + Rn)⁻¹ C P Aᵀ + Qn by structured doubling.
pub fn solve_dare_kalman(a: &Mat, c: &Mat, qn: &Mat, rn: &Mat) -> Result<KalmanDesign> {
    ensure_square(a, "A")?;
    let n = a.nrows();
    let p_out = c.nrows();
    if c.ncols() != n || qn.shape() != (n, n) || rn.shape() != (p_out, p_out) {
        return Err(dim("Kalman design: A n×n, C p×n, Qn n×n, Rn p×p required"));
    }
    if n == 0 {
        return Ok(KalmanDesign {
            gain: Mat::zeros(0, p_out),
            filter_gain: Mat::zeros(0, p_out),
            covariance: Mat::zeros(0, 0),
            iterations: 0,
            residual: 0.0,
        });
    }
    let rn_inv = rn
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Precondition("Rn must be positive definite".into()))?
        .inverse();
    let eye = Mat::identity(n, n);
    let mut ak = a.transpose();
    let mut gk = c.transpose() * &rn_inv * c;
    let mut hk = qn.clone();
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=200 {
        iterations = it;
        let w = inverse(&(&eye + &gk * &hk), "I + G H")?;
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let delta = (&h_next - &hk).norm();
        ak = a_next;
        gk = (&g_next + g_next.transpose()) * 0.5;
        hk = (&h_next + h_next.transpose()) * 0.5;
        if delta <= 1e-10 * hk.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    let p = hk;
    let s = c * &p * c.transpose() + rn;
    let s_inv = inverse(&s, "C P Cᵀ + Rn")?;
    let filter_gain = &p * c.transpose() * &s_inv;
    let gain = a * &filter_gain;
    let rhs =
        a * &p * a.transpose() - a * &p * c.transpose() * &s_inv * c * &p * a.transpose() + qn;
    let residual = (&rhs - &p).norm() / p.norm().max(1.0);
    if !converged || residual > 1e-8 {
        return Err(Error::Numerical {
            what: "Kalman DARE iteration".into(),
            residual,
        });
    }
    let rho = spectral_radius(&(a - &gain * c))?;
    if rho >= 1.0 {
        return Err(Error::Numerical {
            what: "Kalman gain is not stabilising".into(),
            residual: rho,
        });
    }
    Ok(KalmanDesign {
        gain,
        filter_gain,
        covariance: p,
        iterations,
        residual,
    })
}

/// Sign convention of the loop being analysed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackSign {
    Negative,
    Positive,
}

/// Classical stability margins of a sampled SISO loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopMargins {
    pub gain_margin: f64,
    /// Radians.
    pub phase_margin: f64,
    /// In sample periods.
    pub delay_margin: f64,
    /// rad/s at the unity-gain crossover used for the delay margin.
    pub crossover_frequency: f64,
    /// rad/s at the phase crossover used for the gain margin.
    pub phase_crossover_frequency: f64,
    pub gain_crossover_found: bool,
    pub phase_crossover_found: bool,
}

/// Gain, phase and delay margins from the frequency response of `l`.
pub fn loop_margins(l: &DtStateSpace, sign: FeedbackSign) -> Result<LoopMargins> {
    if l.n_inputs() != 1 || l.n_outputs() != 1 {
        return Err(dim("loop_margins needs a SISO loop"));
    }
    let ts = l.ts;
    let nyq = std::f64::consts::PI / ts;
    let s = match sign {
        FeedbackSign::Negative => 1.0,
        FeedbackSign::Positive => -1.0,
    };
    let resp =
        |w: f64| -> Complex64 { l.freq_response(Complex64::from_polar(1.0, w * ts))[(0, 0)] * s };

    let decades = 6usize;
    let npts = 400 * decades;
    let w_min = nyq * 10f64.powi(-(decades as i32));
    let grid: Vec<f64> = (0..=npts)
        .map(|i| {
            if i == npts {
                nyq
            } else {
                w_min * 10f64.powf(i as f64 / 400.0)
            }
        })
        .collect();
    let vals: Vec<Complex64> = grid.iter().map(|&w| resp(w)).collect();

    let bisect = |mut lo: f64, mut hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let flo = f(lo);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        0.5 * (lo + hi)
    };

    // Unity-gain crossovers.
    let mut best: Option<(f64, f64, f64)> = None; // (delay margin, pm, w)
    for i in 0..npts {
        let (m0, m1) = (vals[i].norm() - 1.0, vals[i + 1].norm() - 1.0);
        if m0 == 0.0 || m0 * m1 < 0.0 {
            let w = if m0 == 0.0 {
                grid[i]
            } else {
                bisect(grid[i], grid[i + 1], &|w| resp(w).norm() - 1.0)
            };
            let pm = (-resp(w)).arg();
            let dm = pm / (w * ts);
            if best.is_none_or(|b| dm < b.0) {
                best = Some((dm, pm, w));
            }
        }
    }

    // Phase crossovers (negative real axis), including both grid ends.
    let mut gms: Vec<(f64, f64)> = Vec::new();
    for i in 0..npts {
        let (a, b) = (vals[i].im, vals[i + 1].im);
        if a != 0.0 && b != 0.0 && a.signum() != b.signum() {
            let w = bisect(grid[i], grid[i + 1], &|w| resp(w).im);
            let v = resp(w);
            if v.re < 0.0 {
                gms.push((1.0 / v.norm(), w));
            }
        }
    }
    let end = resp(nyq);
    if end.re < 0.0 && end.im.abs() <= 1e-9 * end.norm().max(1.0) {
        gms.push((1.0 / end.norm(), nyq));
    }
    if let Some(dc) = l.dc_gain() {
        let v = dc[(0, 0)] * s;
        if v < 0.0 {
            gms.push((-1.0 / v, 0.0));
        }
    }
    let upper: Vec<&(f64, f64)> = gms.iter().filter(|g| g.0 > 1.0).collect();
    let gm = if !upper.is_empty() {
        upper
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .copied()
    } else {
        gms.iter().min_by(|a, b| a.0.total_cmp(&b.0)).copied()
    };

    let (dm, pm, wc) = best.unwrap_or((f64::INFINITY, f64::INFINITY, f64::NAN));
    Ok(LoopMargins {
        gain_margin: gm.map_or(f64::INFINITY, |g| g.0),
        phase_margin: pm,
        delay_margin: dm,
        crossover_frequency: wc,
        phase_crossover_frequency: gm.map_or(f64::NAN, |g| g.1),
        gain_crossover_found: best.is_some(),
        phase_crossover_found: gm.is_some(),
    })
}

/// Horizontal block concatenation.
pub fn hcat(blocks: &[&Mat]) -> Mat {
    let r = blocks.first().map_or(0, |b| b.nrows());
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let mut off = 0;
    for b in blocks {
        assert_eq!(b.nrows(), r, "hcat row mismatch");
        out.view_mut((0, off), (r, b.ncols())).copy_from(*b);
        off += b.ncols();
    }
    out
}

/// Vertical block concatenation.
pub fn vcat(blocks: &[&Mat]) -> Mat {
    let c = blocks.first().map_or(0, |b| b.ncols());
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(r, c);
    let mut off = 0;
    for b in blocks {
        assert_eq!(b.ncols(), c, "vcat column mismatch");
        out.view_mut((off, 0), (b.nrows(), c)).copy_from(*b);
        off += b.nrows();
    }
    out
}

/// 2×2 block matrix [[a, b], [c, d]].
pub fn block2(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Mat {
    vcat(&[&hcat(&[a, b]), &hcat(&[c, d])])
}

/// Block-diagonal matrix.
pub fn blkdiag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut ro, mut co) = (0, 0);
    for b in blocks {
        out.view_mut((ro, co), b.shape()).copy_from(*b);
        ro += b.nrows();
        co += b.ncols();
    }
    out
}

/// Row-major constructor used throughout for literal matrices.
pub fn mat(rows: usize, cols: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, data)
}

/// Serde adapter storing a matrix as a list of rows.
pub mod rows {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err("ragged matrix rows".into());
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(Mat::from_row_slice(r, c, &flat))
    }
}
