//! Small numerical helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-t))` without overflow.
pub fn softplus_neg(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// Sign with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn l1_norm(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn linf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Row `i` of `m` as an owned column vector.
pub fn row(m: &Matrix, i: usize) -> Vector {
    m.row(i).transpose()
}

/// Largest singular value by power iteration on `MᵀM`.
///
/// Iterates until the Rayleigh quotient changes by less than `1e-15`
/// relatively, which puts the returned norm well inside `1e-8` of a dense SVD.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let n = m.ncols();
    // Deterministic start that is not orthogonal to any structured eigenvector.
    let mut v = Vector::from_fn(n, |i, _| {
        1.0 + 0.1 * ((i as f64 + 1.0) * 0.618_033_988_75).fract()
    });
    v /= v.norm();
    let mut last = 0.0;
    let mut stable = 0;
    for _ in 0..200_000 {
        let mv = m * &v;
        let w = m.transpose() * &mv;
        let lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (lambda - last).abs() <= 1e-15 * lambda.abs() {
            stable += 1;
            if stable >= 3 {
                return lambda.max(0.0).sqrt();
            }
        } else {
            stable = 0;
        }
        last = lambda;
    }
    last.max(0.0).sqrt()
}

/// Mixes a master seed with a stream index (splitmix64 finaliser).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly distributed unit vector.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

/// Point drawn uniformly (by volume) from the ℓ2 shell `lo ≤ ‖z‖ ≤ hi` in `dim` dimensions.
pub fn sample_in_shell<R: Rng + ?Sized>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> Vector {
    let d = dim as f64;
    let u: f64 = rng.random();
    let lo_d = lo.powf(d);
    let hi_d = hi.powf(d);
    let radius = (lo_d + u * (hi_d - lo_d)).powf(1.0 / d);
    random_direction(rng, dim) * radius
}

/// Point drawn uniformly from the ℓ2 ball of radius `r`.
pub fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, r: f64) -> Vector {
    sample_in_shell(rng, dim, 0.0, r)
}
