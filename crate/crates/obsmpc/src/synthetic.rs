//! Seeded test systems: random stabilised loops, a large block-structured
//! plant with a lower-order controller, and two identical decoupled loops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lti::{closed_loop_matrix, DtStateSpace};
use crate::numerics::{blkdiag, mat, spectral_radius, Mat};

/// A plant and a controller that stabilises it under positive feedback u = K·y.
#[derive(Clone, Debug)]
pub struct SyntheticLoop {
    pub plant: DtStateSpace,
    pub controller: DtStateSpace,
}

impl SyntheticLoop {
    pub fn closed_loop_radius(&self) -> Result<f64> {
        spectral_radius(&closed_loop_matrix(&self.plant, &self.controller)?)
    }
}

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn scaled_to_radius(a: Mat, radius: f64) -> Result<Mat> {
    let rho = spectral_radius(&a)?;
    Ok(if rho > 0.0 { a * (radius / rho) } else { a })
}

/// Random stable plant (n states, strictly proper) with a random controller of
/// order `n_k` whose gain is halved until the loop is stable with margin.
pub fn random_loop(
    seed: u64,
    n: usize,
    n_k: usize,
    n_u: usize,
    n_y: usize,
) -> Result<SyntheticLoop> {
    if n == 0 || n_k > n || n_u == 0 || n_y == 0 {
        return Err(Error::Input(
            "random_loop needs 0 < n, n_k ≤ n and at least one input and output".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = 0.1;
    let rho_g = rng.random_range(0.5..0.95);
    let a = scaled_to_radius(normal(&mut rng, n, n), rho_g)?;
    let plant = DtStateSpace::new(
        a,
        normal(&mut rng, n, n_u),
        normal(&mut rng, n_y, n),
        Mat::zeros(n_y, n_u),
        ts,
    )?;
    let rho_k = rng.random_range(0.2..0.8);
    let ak = scaled_to_radius(normal(&mut rng, n_k, n_k), rho_k)?;
    let bk = normal(&mut rng, n_k, n_y);
    let ck = normal(&mut rng, n_u, n_k);
    let dk = normal(&mut rng, n_u, n_y);
    let mut gain = 0.5;
    for _ in 0..40 {
        let controller = DtStateSpace::new(
            ak.clone(),
            bk.clone() * gain,
            ck.clone(),
            dk.clone() * gain,
            ts,
        )?;
        let lp = SyntheticLoop {
            plant: plant.clone(),
            controller,
        };
        if lp.closed_loop_radius()? < 0.97 {
            return Ok(lp);
        }
        gain *= 0.5;
    }
    Err(Error::Infeasible(format!(
        "seed {seed}: no stabilising gain found"
    )))
}

/// Number of blocks in [`block_structured`].
pub const BLOCKS: usize = 7;

/// 21-state plant of seven weakly coupled blocks with a 17-state controller.
///
/// Each block has a lightly damped controllable pair and one stable mode that
/// the input cannot reach; those seven modes are the trailing states. Three
/// controller blocks have three states, the other four have two.
pub fn block_structured(seed: u64) -> Result<SyntheticLoop> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = 0.1;
    let nb = BLOCKS;
    let n = 3 * nb;
    let mut a = Mat::zeros(n, n);
    let mut b = Mat::zeros(n, nb);
    let mut c = Mat::zeros(nb, n);
    for i in 0..nb {
        let r: f64 = rng.random_range(0.75..0.92);
        let th: f64 = rng.random_range(0.2..1.2);
        let (s, co) = th.sin_cos();
        let k = 2 * i;
        a[(k, k)] = r * co;
        a[(k, k + 1)] = r * s;
        a[(k + 1, k)] = -r * s;
        a[(k + 1, k + 1)] = r * co;
        let d = 2 * nb + i;
        a[(d, d)] = rng.random_range(0.2..0.6);
        a[(k + 1, d)] = 0.1;
        b[(k, i)] = rng.random_range(-0.3..0.3);
        b[(k + 1, i)] = 1.0;
        c[(i, k)] = 1.0;
        c[(i, d)] = 0.5;
        if i + 1 < nb {
            a[(k, k + 2)] = 0.02 * rng.sample::<f64, _>(StandardNormal);
            a[(k + 3, k + 1)] = 0.02 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let plant = DtStateSpace::new(a, b, c, Mat::zeros(nb, nb), ts)?;

    let mut ak = Vec::new();
    let mut bk = Vec::new();
    let mut ck = Vec::new();
    for i in 0..nb {
        let r: f64 = rng.random_range(0.4..0.7);
        let th: f64 = rng.random_range(0.3..1.5);
        let (s, co) = th.sin_cos();
        let order = if i < 3 { 3 } else { 2 };
        let mut blk = Mat::zeros(order, order);
        blk[(0, 0)] = r * co;
        blk[(0, 1)] = r * s;
        blk[(1, 0)] = -r * s;
        blk[(1, 1)] = r * co;
        if order == 3 {
            blk[(2, 2)] = rng.random_range(-0.5..0.5);
            blk[(2, 0)] = 0.2;
        }
        ak.push(blk);
        bk.push(normal(&mut rng, order, 1) * 0.3);
        ck.push(normal(&mut rng, 1, order) * 0.3);
    }
    let stack = |v: &[Mat]| blkdiag(&v.iter().collect::<Vec<_>>());
    let controller = DtStateSpace::new(stack(&ak), stack(&bk), stack(&ck), Mat::zeros(nb, nb), ts)?;
    let lp = SyntheticLoop { plant, controller };
    let rho = lp.closed_loop_radius()?;
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    Ok(lp)
}

/// One small loop with four distinct real closed-loop poles.
pub fn single_loop() -> Result<SyntheticLoop> {
    let plant = DtStateSpace::new(
        mat(2, 2, &[0.9, 0.1, 0.0, 0.7]),
        mat(2, 1, &[0.0, 1.0]),
        mat(1, 2, &[1.0, 0.0]),
        Mat::zeros(1, 1),
        0.1,
    )?;
    let controller = DtStateSpace::new(
        mat(2, 2, &[0.5, 0.0, 0.0, 0.2]),
        mat(2, 1, &[1.0, 1.0]),
        mat(1, 2, &[-0.02, -0.01]),
        Mat::zeros(1, 1),
        0.1,
    )?;
    Ok(SyntheticLoop { plant, controller })
}

/// Two copies of [`single_loop`] side by side.
///
/// Plant states are [x₁; x₂], controller states [k₁; k₂]; every closed-loop
/// eigenvalue is repeated once per copy.
pub fn twin_loops() -> Result<SyntheticLoop> {
    let s = single_loop()?;
    let twin = |m: &DtStateSpace| {
        DtStateSpace::new(
            blkdiag(&[&m.a, &m.a]),
            blkdiag(&[&m.b, &m.b]),
            blkdiag(&[&m.c, &m.c]),
            blkdiag(&[&m.d, &m.d]),
            m.ts,
        )
    };
    Ok(SyntheticLoop {
        plant: twin(&s.plant)?,
        controller: twin(&s.controller)?,
    })
}
