//! State-space systems and the model transformations used before realisation:
//! discretisation, dipoles, loop shifting, delays, disturbance models and
//! interconnections.

use nalgebra::SVD;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::numerics::{block2, eigenvalues, hcat, inverse, rows, to_complex, vcat, CMat, Mat};

fn check_dims(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(dim(format!(
            "A must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.nrows() != n {
        return Err(dim(format!("B has {} rows, expected {n}", b.nrows())));
    }
    if c.ncols() != n {
        return Err(dim(format!("C has {} columns, expected {n}", c.ncols())));
    }
    if d.shape() != (c.nrows(), b.ncols()) {
        return Err(dim(format!(
            "D is {}x{}, expected {}x{}",
            d.nrows(),
            d.ncols(),
            c.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Continuous-time system ẋ = Ax + Bu, y = Cx + Du.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtStateSpace {
    #[serde(with = "rows")]
    pub a: Mat,
    #[serde(with = "rows")]
    pub b: Mat,
    #[serde(with = "rows")]
    pub c: Mat,
    #[serde(with = "rows")]
    pub d: Mat,
}

impl CtStateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        check_dims(&a, &b, &c, &d)?;
        Ok(Self { a, b, c, d })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// DC gain D − C A⁻¹ B, if A is nonsingular.
    pub fn dc_gain(&self) -> Option<Mat> {
        if self.n() == 0 {
            return Some(self.d.clone());
        }
        let lu = self.a.clone().lu();
        let x = lu.solve(&self.b)?;
        Some(&self.d - &self.c * x)
    }

    /// Frequency response at s.
    pub fn freq_response(&self, s: Complex64) -> CMat {
        ss_response(&self.a, &self.b, &self.c, &self.d, s)
    }
}

/// Discrete-time system x⁺ = Ax + Bu, y = Cx + Du with sample period `ts`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtStateSpace {
    #[serde(with = "rows")]
    pub a: Mat,
    #[serde(with = "rows")]
    pub b: Mat,
    #[serde(with = "rows")]
    pub c: Mat,
    #[serde(with = "rows")]
    pub d: Mat,
    pub ts: f64,
}

fn ss_response(a: &Mat, b: &Mat, c: &Mat, d: &Mat, z: Complex64) -> CMat {
    let n = a.nrows();
    let dc = to_complex(d);
    if n == 0 {
        return dc;
    }
    let m = CMat::identity(n, n) * z - to_complex(a);
    match m.lu().solve(&to_complex(b)) {
        Some(x) => to_complex(c) * x + dc,
        None => CMat::from_element(d.nrows(), d.ncols(), Complex64::new(f64::INFINITY, 0.0)),
    }
}

impl DtStateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat, ts: f64) -> Result<Self> {
        check_dims(&a, &b, &c, &d)?;
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(Error::Input(format!(
                "sample period must be positive, got {ts}"
            )));
        }
        Ok(Self { a, b, c, d, ts })
    }

    /// Memoryless gain.
    pub fn static_gain(d: Mat, ts: f64) -> Result<Self> {
        let (p, m) = d.shape();
        Self::new(Mat::zeros(0, 0), Mat::zeros(0, m), Mat::zeros(p, 0), d, ts)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|&x| x == 0.0)
    }

    /// Transfer matrix at z.
    pub fn freq_response(&self, z: Complex64) -> CMat {
        ss_response(&self.a, &self.b, &self.c, &self.d, z)
    }

    /// Transfer matrix at z = 1, if finite.
    pub fn dc_gain(&self) -> Option<Mat> {
        let n = self.n();
        if n == 0 {
            return Some(self.d.clone());
        }
        let m = Mat::identity(n, n) - &self.a;
        let x = m.lu().solve(&self.b)?;
        let g = &self.c * x + &self.d;
        g.iter()
            .all(|v| v.is_finite() && v.abs() < 1e12)
            .then_some(g)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        eigenvalues(&self.a)
    }

    /// One step: returns (x⁺, y).
    pub fn step(
        &self,
        x: &crate::numerics::Vector,
        u: &crate::numerics::Vector,
    ) -> (crate::numerics::Vector, crate::numerics::Vector) {
        (&self.a * x + &self.b * u, &self.c * x + &self.d * u)
    }

    /// State transform x = S·x′.
    pub fn similarity(&self, s: &Mat) -> Result<Self> {
        let si = inverse(s, "similarity transform")?;
        Self::new(
            &si * &self.a * s,
            &si * &self.b,
            &self.c * s,
            self.d.clone(),
            self.ts,
        )
    }
}

/// Zero-order-hold discretisation through the augmented matrix exponential.
pub fn c2d_zoh(sys: &CtStateSpace, ts: f64) -> Result<DtStateSpace> {
    let (n, m) = (sys.n(), sys.b.ncols());
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    aug.view_mut((0, n), (n, m)).copy_from(&sys.b);
    let e = (aug * ts).exp();
    DtStateSpace::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
        sys.c.clone(),
        sys.d.clone(),
        ts,
    )
}

/// Bilinear (Tustin) discretisation without prewarping.
pub fn c2d_tustin(sys: &CtStateSpace, ts: f64) -> Result<DtStateSpace> {
    let n = sys.n();
    let eye = Mat::identity(n, n);
    let e = &eye - &sys.a * (ts / 2.0);
    let ei = e.clone().try_inverse().ok_or_else(|| {
        Error::Precondition("I - (Ts/2)A is singular; Tustin transform undefined".into())
    })?;
    let ad = &ei * (&eye + &sys.a * (ts / 2.0));
    let bd = &ei * &sys.b * ts;
    let cd = &sys.c * &ei;
    let dd = &sys.d + &sys.c * &ei * &sys.b * (ts / 2.0);
    DtStateSpace::new(ad, bd, cd, dd, ts)
}

/// Puts Wz/(Wz − 1) in series on every controller input so that K₁(0) = 0.
///
/// Controller states come first, dipole states last.
pub fn add_dipole(k: &DtStateSpace, w: f64) -> Result<DtStateSpace> {
    if !(w >= 10.0) {
        return Err(Error::Input(format!(
            "dipole parameter W must be at least 10, got {w}"
        )));
    }
    let (nk, ny) = (k.n(), k.n_inputs());
    let iw = Mat::identity(ny, ny) / w;
    let a = block2(&k.a, &(&k.b / w), &Mat::zeros(ny, nk), &iw);
    let b = vcat(&[&k.b, &Mat::identity(ny, ny)]);
    let c = hcat(&[&k.c, &(&k.d / w)]);
    DtStateSpace::new(a, b, c, k.d.clone(), k.ts)
}

/// Plant and controller after moving the controller feedthrough into the plant.
#[derive(Clone, Debug)]
pub struct LoopShifted {
    pub plant: DtStateSpace,
    pub controller: DtStateSpace,
    /// The feedthrough that was moved, applied outside the observer as u = D_K·y + ũ.
    pub dk: Mat,
}

pub fn loop_shift(g: &DtStateSpace, k: &DtStateSpace) -> Result<LoopShifted> {
    check_loop(g, k)?;
    if !g.is_strictly_proper() {
        return Err(Error::Precondition(
            "loop shifting needs a strictly proper plant".into(),
        ));
    }
    let plant = DtStateSpace::new(
        &g.a + &g.b * &k.d * &g.c,
        g.b.clone(),
        g.c.clone(),
        g.d.clone(),
        g.ts,
    )?;
    let controller = DtStateSpace::new(
        k.a.clone(),
        k.b.clone(),
        k.c.clone(),
        Mat::zeros(k.n_outputs(), k.n_inputs()),
        k.ts,
    )?;
    Ok(LoopShifted {
        plant,
        controller,
        dk: k.d.clone(),
    })
}

/// Adds one sample of delay on every controller output.
pub fn add_unit_delay(k: &DtStateSpace) -> Result<DtStateSpace> {
    let (nk, nu) = (k.n(), k.n_outputs());
    let a = block2(&k.a, &Mat::zeros(nk, nu), &k.c, &Mat::zeros(nu, nu));
    let b = vcat(&[&k.b, &k.d]);
    let c = hcat(&[&Mat::zeros(nu, nk), &Mat::identity(nu, nu)]);
    DtStateSpace::new(a, b, c, Mat::zeros(nu, k.n_inputs()), k.ts)
}

/// Appends constant disturbance states d⁺ = d feeding x⁺ through `e` (n × n_d).
pub fn augment_disturbances(g: &DtStateSpace, e: &Mat) -> Result<DtStateSpace> {
    let (n, nd) = (g.n(), e.ncols());
    if nd == 0 {
        return Ok(g.clone());
    }
    if e.nrows() != n {
        return Err(dim(format!(
            "disturbance map has {} rows, expected {n}",
            e.nrows()
        )));
    }
    let a = block2(&g.a, e, &Mat::zeros(nd, n), &Mat::identity(nd, nd));
    let b = vcat(&[&g.b, &Mat::zeros(nd, g.n_inputs())]);
    let c = hcat(&[&g.c, &Mat::zeros(g.n_outputs(), nd)]);
    let aug = DtStateSpace::new(a, b, c, g.d.clone(), g.ts)?;
    if let Some(mode) = unobservable_modes(&aug.a, &aug.c)?.first() {
        return Err(Error::Precondition(format!(
            "disturbance augmentation loses observability (mode {:.6}{:+.6}j)",
            mode.re, mode.im
        )));
    }
    Ok(aug)
}

/// Continuous counterpart: d feeds ẋ through `e`, d is constant.
pub fn augment_disturbances_ct(g: &CtStateSpace, e: &Mat) -> Result<CtStateSpace> {
    let (n, nd) = (g.n(), e.ncols());
    if nd == 0 {
        return Ok(g.clone());
    }
    if e.nrows() != n {
        return Err(dim(format!(
            "disturbance map has {} rows, expected {n}",
            e.nrows()
        )));
    }
    let a = block2(&g.a, e, &Mat::zeros(nd, n), &Mat::zeros(nd, nd));
    let b = vcat(&[&g.b, &Mat::zeros(nd, g.b.ncols())]);
    let c = hcat(&[&g.c, &Mat::zeros(g.c.nrows(), nd)]);
    CtStateSpace::new(a, b, c, g.d.clone())
}

fn pbh_rank_deficient(a: &Mat, other: &Mat, stack_rows: bool) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let tol = 1e-8 * a.norm().max(1.0);
    let mut out = Vec::new();
    for lam in eigenvalues(a)? {
        let shifted = CMat::identity(n, n) * lam - to_complex(a);
        let m = if stack_rows {
            let mut m = CMat::zeros(n + other.nrows(), n);
            m.view_mut((0, 0), (n, n)).copy_from(&shifted);
            m.view_mut((n, 0), (other.nrows(), n))
                .copy_from(&to_complex(other));
            m
        } else {
            let mut m = CMat::zeros(n, n + other.ncols());
            m.view_mut((0, 0), (n, n)).copy_from(&shifted);
            m.view_mut((0, n), (n, other.ncols()))
                .copy_from(&to_complex(other));
            m
        };
        let s = SVD::new(m, false, false).singular_values;
        let mut sv: Vec<f64> = s.iter().copied().collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        if sv.len() < n || sv[n - 1] <= tol {
            out.push(lam);
        }
    }
    Ok(out)
}

/// Eigenvalues of A failing the PBH observability test.
pub fn unobservable_modes(a: &Mat, c: &Mat) -> Result<Vec<Complex64>> {
    pbh_rank_deficient(a, c, true)
}

/// Eigenvalues of A failing the PBH controllability test.
pub fn uncontrollable_modes(a: &Mat, b: &Mat) -> Result<Vec<Complex64>> {
    pbh_rank_deficient(a, b, false)
}

pub fn check_observability(sys: &DtStateSpace) -> Result<bool> {
    Ok(unobservable_modes(&sys.a, &sys.c)?.is_empty())
}

pub fn check_controllability(sys: &DtStateSpace) -> Result<bool> {
    Ok(uncontrollable_modes(&sys.a, &sys.b)?.is_empty())
}

/// `first` followed by `second` (y = second(first(u))).
pub fn series(first: &DtStateSpace, second: &DtStateSpace) -> Result<DtStateSpace> {
    if first.n_outputs() != second.n_inputs() {
        return Err(dim(
            "series: output count of the first system must match input count of the second",
        ));
    }
    let (n1, n2) = (first.n(), second.n());
    let a = block2(
        &first.a,
        &Mat::zeros(n1, n2),
        &(&second.b * &first.c),
        &second.a,
    );
    let b = vcat(&[&first.b, &(&second.b * &first.d)]);
    let c = hcat(&[&(&second.d * &first.c), &second.c]);
    DtStateSpace::new(a, b, c, &second.d * &first.d, first.ts)
}

fn check_loop(g: &DtStateSpace, k: &DtStateSpace) -> Result<()> {
    if k.n_inputs() != g.n_outputs() || k.n_outputs() != g.n_inputs() {
        return Err(dim(format!(
            "plant is {}→{} but controller is {}→{}",
            g.n_inputs(),
            g.n_outputs(),
            k.n_inputs(),
            k.n_outputs()
        )));
    }
    Ok(())
}

/// Closed loop of plant G and controller K with u = r + sign·K·y.
///
/// Input r (n_u), outputs [y; u], states [x; x_K].
pub fn feedback(
    g: &DtStateSpace,
    k: &DtStateSpace,
    sign: crate::numerics::FeedbackSign,
) -> Result<DtStateSpace> {
    check_loop(g, k)?;
    let s = match sign {
        crate::numerics::FeedbackSign::Positive => 1.0,
        crate::numerics::FeedbackSign::Negative => -1.0,
    };
    let nu = g.n_inputs();
    let f = (Mat::identity(nu, nu) - &k.d * &g.d * s)
        .try_inverse()
        .ok_or_else(|| {
            Error::Precondition("feedback loop is ill-posed (I - D_K D_G singular)".into())
        })?;
    // u = F r + F s D_K C x + F s C_K x_K
    let ux = &f * &k.d * &g.c * s;
    let uk = &f * &k.c * s;
    let ur = f.clone();
    let yx = &g.c + &g.d * &ux;
    let yk = &g.d * &uk;
    let yr = &g.d * &ur;
    let a = block2(
        &(&g.a + &g.b * &ux),
        &(&g.b * &uk),
        &(&k.b * &yx),
        &(&k.a + &k.b * &yk),
    );
    let b = vcat(&[&(&g.b * &ur), &(&k.b * &yr)]);
    let c = block2(&yx, &yk, &ux, &uk);
    let d = vcat(&[&yr, &ur]);
    DtStateSpace::new(a, b, c, d, g.ts)
}

/// Closed-loop state matrix [[A + B·D_K·C, B·C_K], [B_K·C, A_K]] for u = K·y, D_G = 0.
pub fn closed_loop_matrix(g: &DtStateSpace, k: &DtStateSpace) -> Result<Mat> {
    check_loop(g, k)?;
    if !g.is_strictly_proper() {
        return Err(Error::Precondition(
            "closed-loop matrix assumes a strictly proper plant".into(),
        ));
    }
    Ok(block2(
        &(&g.a + &g.b * &k.d * &g.c),
        &(&g.b * &k.c),
        &(&k.b * &g.c),
        &k.a,
    ))
}
