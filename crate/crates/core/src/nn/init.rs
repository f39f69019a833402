use rand::Rng;

use super::DenseMatrix;

pub fn xavier_bound(n_in: usize, n_out: usize) -> f64 {
    (6.0 / (n_in + n_out) as f64).sqrt()
}

/// Glorot uniform initialization: entries drawn from `[-b, b]`,
/// `b = sqrt(6 / (n_in + n_out))`.
pub fn xavier_init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> DenseMatrix {
    assert!(
        n_in >= 1 && n_out >= 1,
        "xavier_init needs positive fan-in and fan-out"
    );
    let bound = xavier_bound(n_in, n_out);
    let data = (0..n_in * n_out)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    DenseMatrix::from_vec(n_in, n_out, data)
}
