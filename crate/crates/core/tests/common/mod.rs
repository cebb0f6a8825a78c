#![allow(dead_code)]

use mrp::market_data::{build_spreads, SpreadBasis};
use mrp::moments::{estimate_moments, LaggedMoments};
use mrp::synth::{generate, SynthConfig, SynthData};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `G G' / n + floor I`
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let g = normal_matrix(rng, n, n);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let g = normal_matrix(rng, n, n) * scale;
    (&g + g.transpose()) * 0.5
}

/// Random moment set: well-conditioned `M0` and smaller symmetric lags.
pub fn random_moments(rng: &mut ChaCha8Rng, n: usize, p: usize) -> LaggedMoments {
    let mut mats = vec![random_spd(rng, n, 0.2)];
    for _ in 0..p {
        mats.push(random_symmetric(rng, n, 0.3));
    }
    LaggedMoments::from_matrices(mats).unwrap()
}

/// Square, well-conditioned basis `I + 0.3 G / sqrt(n)`.
pub fn random_square_basis(rng: &mut ChaCha8Rng, n: usize, budget: f64) -> SpreadBasis {
    let g = normal_matrix(rng, n, n) * (0.3 / (n as f64).sqrt());
    SpreadBasis::new(DMatrix::identity(n, n) + g, budget).unwrap()
}

/// Synthetic market with `n` spreads over `n + 1` assets and its lag-`p` moments.
pub fn synthetic_fixture(seed: u64, n: usize, p: usize, phi: f64) -> (SynthData, LaggedMoments) {
    let cfg = SynthConfig {
        assets: n + 1,
        spreads: n,
        periods: 500,
        ar_coefficient: phi,
        seed,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let spreads = build_spreads(&data.panel, &data.basis).unwrap();
    let moments = estimate_moments(&spreads, p).unwrap();
    (data, moments)
}

/// Feasible random point with `||Bw||_1` uniform in `(0.2, 1) L`.
pub fn random_feasible(rng: &mut ChaCha8Rng, basis: &SpreadBasis) -> DVector<f64> {
    let w = normal_vector(rng, basis.num_spreads());
    let lev = (basis.matrix() * &w).lp_norm(1);
    let target = basis.leverage_budget() * rng.random_range(0.2..1.0);
    w * (target / lev)
}

/// l1-ball projection by bisection on the soft threshold.
pub fn bisection_projection(h: &DVector<f64>, radius: f64) -> DVector<f64> {
    if h.lp_norm(1) <= radius {
        return h.clone();
    }
    let mass = |theta: f64| h.iter().map(|x| (x.abs() - theta).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, h.amax());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    h.map(|x| x.signum() * (x.abs() - theta).max(0.0))
}

/// Minimum of `w'Aw + b'w` over `||Bw||_1 <= L` for square invertible `B`,
/// by accelerated projected gradient in `v = Bw` with adaptive restart.
/// Returns the minimizer in `w` coordinates.
pub fn projected_gradient_oracle(a: &DMatrix<f64>, b: &DVector<f64>, basis: &SpreadBasis, max_iters: usize) -> DVector<f64> {
    let bmat = basis.matrix();
    let binv = bmat.clone().try_inverse().expect("square invertible basis");
    let q = binv.transpose() * a * &binv;
    let lin = binv.transpose() * b;
    let lip = 2.0 * q.symmetric_eigenvalues().max().max(1e-12);
    let radius = basis.leverage_budget();
    let grad = |v: &DVector<f64>| &q * v * 2.0 + &lin;
    let step = |v: &DVector<f64>| bisection_projection(&(v - grad(v) / lip), radius);

    let mut v = DVector::zeros(b.len());
    let mut y = v.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iters {
        let v_next = step(&y);
        if (&v_next - &v).norm() <= 1e-15 * v.norm().max(1.0) && (step(&v_next) - &v_next).norm() <= 1e-14 * v_next.norm().max(1.0) {
            v = v_next;
            break;
        }
        // restart momentum when it points uphill
        if grad(&y).dot(&(&v_next - &v)) > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &v_next + (&v_next - &v) * ((t - 1.0) / t_next);
        v = v_next;
        t = t_next;
    }
    binv * v
}

pub fn quadratic(a: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(a * w)) + b.dot(w)
}

/// Smallest generalized eigenvalue of `H x = lambda M0 x`.
pub fn min_generalized_eigenvalue(h: &DMatrix<f64>, m0: &DMatrix<f64>) -> f64 {
    let l = m0.clone().cholesky().expect("M0 positive definite").l();
    let li = l.try_inverse().unwrap();
    let c = &li * h * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    c.symmetric_eigenvalues().min()
}

/// Central-difference gradient with step `h` per coordinate.
pub fn central_difference<F: Fn(&DVector<f64>) -> f64>(f: F, w: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(w.len(), |i, _| {
        let mut up = w.clone();
        let mut down = w.clone();
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

pub fn relative_error(x: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    (x - reference).norm() / reference.norm().max(1e-300)
}

/// Deterministic square wave: `+amp` for `half` periods, then `-amp`, and so on.
pub fn square_wave(half_cycles: usize, half: usize, amp: f64) -> Vec<f64> {
    (0..half_cycles * half)
        .map(|i| if (i / half).is_multiple_of(2) { amp } else { -amp })
        .collect()
}

pub fn random_walk(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut x = 0.0;
    (0..len)
        .map(|_| {
            x += rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}
