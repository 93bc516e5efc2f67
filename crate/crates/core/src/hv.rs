//! Hypervectors and the elementary HDC operations on them.
//!
//! A [`Hypervector`] is a dense vector of `f32` values. Bundling
//! ([`add`]), binding ([`multiply`]) and [`permute`] never change the
//! dimensionality of their operands.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels;

#[derive(Clone, Debug, PartialEq)]
pub struct Hypervector {
    values: Vec<f32>,
}

impl Hypervector {
    /// Wraps `values`, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("hypervector needs at least one dimension".into()));
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    /// Caller guarantees a nonempty, finite vector.
    pub(crate) fn from_vec_unchecked(values: Vec<f32>) -> Self {
        debug_assert!(!values.is_empty());
        Self { values }
    }

    pub fn zeros(dims: usize) -> Self {
        assert!(dims > 0, "hypervector needs at least one dimension");
        Self { values: vec![0.0; dims] }
    }

    pub fn ones(dims: usize) -> Self {
        assert!(dims > 0, "hypervector needs at least one dimension");
        Self { values: vec![1.0; dims] }
    }

    /// I.i.d. uniform draws from {-1, +1}.
    pub fn random_bipolar<R: Rng + ?Sized>(dims: usize, rng: &mut R) -> Self {
        assert!(dims > 0, "hypervector needs at least one dimension");
        Self { values: (0..dims).map(|_| bipolar_draw(rng)).collect() }
    }

    /// I.i.d. standard normal draws.
    pub fn random_gaussian<R: Rng + ?Sized>(dims: usize, rng: &mut R) -> Self {
        assert!(dims > 0, "hypervector needs at least one dimension");
        Self { values: (0..dims).map(|_| rng.sample::<f32, _>(StandardNormal)).collect() }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.values
    }

    pub fn norm(&self) -> f32 {
        kernels::norm(&self.values)
    }

    /// Multiplies every entry by `s`.
    pub fn scale(&self, s: f32) -> Result<Self> {
        let values: Vec<f32> = self.values.iter().map(|v| v * s).collect();
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn is_bipolar(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0 || v == -1.0)
    }
}

impl std::ops::Index<usize> for Hypervector {
    type Output = f32;

    fn index(&self, d: usize) -> &f32 {
        &self.values[d]
    }
}

pub(crate) fn bipolar_draw<R: Rng + ?Sized>(rng: &mut R) -> f32 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn zip_with(a: &Hypervector, b: &Hypervector, f: impl Fn(f32, f32) -> f32) -> Result<Hypervector> {
    Error::check_dims(a.dims(), b.dims())?;
    let values: Vec<f32> = a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect();
    check_finite(&values)?;
    Ok(Hypervector { values })
}

/// Element-wise sum (bundling).
pub fn add(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    zip_with(a, b, |x, y| x + y)
}

/// Element-wise product (binding).
pub fn multiply(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    zip_with(a, b, |x, y| x * y)
}

/// Cyclic rotation: `result[(d + shift) mod D] == a[d]`. Negative shifts
/// rotate the other way.
pub fn permute(a: &Hypervector, shift: i64) -> Hypervector {
    let dims = a.dims();
    let k = shift.rem_euclid(dims as i64) as usize;
    let mut values = a.values.clone();
    values.rotate_right(k);
    Hypervector { values }
}

/// Cosine similarity; exactly 0 when either operand has zero norm.
pub fn cosine_similarity(a: &Hypervector, b: &Hypervector) -> Result<f32> {
    Error::check_dims(a.dims(), b.dims())?;
    Ok(cosine_slices(a.as_slice(), b.as_slice()))
}

pub(crate) fn cosine_slices(a: &[f32], b: &[f32]) -> f32 {
    cosine_from_parts(kernels::dot(a, b), kernels::norm(a), kernels::norm(b))
}

pub(crate) fn cosine_from_parts(dot: f32, norm_a: f32, norm_b: f32) -> f32 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let c = f64::from(dot) / (f64::from(norm_a) * f64::from(norm_b));
    c.clamp(-1.0, 1.0) as f32
}

/// Plain inner product, the norm-free similarity used by network-derived
/// models.
pub fn dot_similarity(a: &Hypervector, b: &Hypervector) -> Result<f32> {
    Error::check_dims(a.dims(), b.dims())?;
    Ok(kernels::dot(a.as_slice(), b.as_slice()))
}

/// Number of differing positions between two binary ({0,1}) or two bipolar
/// ({-1,+1}) hypervectors.
pub fn hamming_distance(a: &Hypervector, b: &Hypervector) -> Result<usize> {
    Error::check_dims(a.dims(), b.dims())?;
    let binary = |v: &Hypervector| v.values.iter().all(|&x| x == 0.0 || x == 1.0);
    if !((binary(a) && binary(b)) || (a.is_bipolar() && b.is_bipolar())) {
        return Err(Error::Domain(
            "hamming distance needs two binary or two bipolar hypervectors".into(),
        ));
    }
    Ok(a.values.iter().zip(&b.values).filter(|(x, y)| x != y).count())
}

/// Sign thresholding to {-1, +1}; zero maps to +1.
pub fn bipolarize(a: &Hypervector) -> Hypervector {
    let mut values = a.values.clone();
    bipolarize_in_place(&mut values);
    Hypervector { values }
}

pub(crate) fn bipolarize_in_place(values: &mut [f32]) {
    for v in values {
        *v = sign(*v);
    }
}

#[inline]
pub(crate) fn sign(v: f32) -> f32 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hv(v: &[f32]) -> Hypervector {
        Hypervector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn add_examples() {
        assert_eq!(add(&hv(&[1., -1., 1.]), &hv(&[1., 1., -1.])).unwrap(), hv(&[2., 0., 0.]));
        let v = hv(&[0.5, -3.0, 2.0]);
        assert_eq!(add(&v, &Hypervector::zeros(3)).unwrap(), v);
        assert_eq!(add(&hv(&[2., 3.]), &hv(&[-2., -3.])).unwrap(), hv(&[0., 0.]));
    }

    #[test]
    fn multiply_examples() {
        assert_eq!(
            multiply(&hv(&[1., -1., 1.]), &hv(&[1., 1., -1.])).unwrap(),
            hv(&[1., -1., -1.])
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = Hypervector::random_bipolar(64, &mut rng);
        assert_eq!(multiply(&v, &v).unwrap(), Hypervector::ones(64));
        assert_eq!(multiply(&v, &Hypervector::ones(64)).unwrap(), v);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let (a, b) = (hv(&[1., 2.]), hv(&[1., 2., 3.]));
        assert!(matches!(add(&a, &b), Err(Error::DimensionMismatch { expected: 2, found: 3 })));
        assert!(multiply(&a, &b).is_err());
        assert!(cosine_similarity(&a, &b).is_err());
        assert!(dot_similarity(&a, &b).is_err());
        assert!(hamming_distance(&a, &b).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let big = hv(&[f32::MAX, 1.0]);
        assert!(matches!(add(&big, &big), Err(Error::NonFinite { index: 0 })));
        assert!(Hypervector::new(vec![f32::NAN]).is_err());
        assert!(Hypervector::new(vec![]).is_err());
    }

    #[test]
    fn permute_examples() {
        let v = hv(&[1., 2., 3., 4.]);
        assert_eq!(permute(&v, 1), hv(&[4., 1., 2., 3.]));
        assert_eq!(permute(&v, 4), v);
        assert_eq!(permute(&permute(&v, 3), 4 - 3), v);
        assert_eq!(permute(&v, -1), hv(&[2., 3., 4., 1.]));
        assert_eq!(permute(&v, 9), permute(&v, 1));
    }

    #[test]
    fn cosine_examples() {
        let v = hv(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-6);
        let neg = v.scale(-1.0).unwrap();
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-6);
        assert_eq!(cosine_similarity(&hv(&[1., 0.]), &hv(&[0., 1.])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&v, &Hypervector::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot_similarity(&hv(&[1., 2.]), &hv(&[3., 4.])).unwrap(), 11.0);
        assert_eq!(dot_similarity(&hv(&[1., 2.]), &Hypervector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn hamming_examples() {
        let v = hv(&[1., -1., 1.]);
        assert_eq!(hamming_distance(&v, &v).unwrap(), 0);
        assert_eq!(hamming_distance(&v, &hv(&[-1., 1., -1.])).unwrap(), 3);
        assert_eq!(hamming_distance(&hv(&[1., 1., 0., 0.]), &hv(&[1., 0., 0., 1.])).unwrap(), 2);
        // mixed domains are not comparable
        assert!(matches!(
            hamming_distance(&hv(&[1., 0.]), &hv(&[1., -1.])),
            Err(Error::Domain(_))
        ));
        assert!(hamming_distance(&hv(&[0.5, 1.]), &hv(&[1., 1.])).is_err());
    }

    #[test]
    fn bipolarize_examples() {
        let v = hv(&[0.7, -2.3, 0.0]);
        let b = bipolarize(&v);
        assert_eq!(b, hv(&[1., -1., 1.]));
        assert_eq!(bipolarize(&b), b);
        let tanh = hv(&v.as_slice().iter().map(|x| x.tanh()).collect::<Vec<_>>());
        assert_eq!(bipolarize(&tanh), b);
    }

    #[test]
    fn gaussian_draws_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = Hypervector::random_gaussian(40_000, &mut rng);
        let mean: f64 = v.as_slice().iter().map(|&x| f64::from(x)).sum::<f64>() / 40_000.0;
        let var: f64 =
            v.as_slice().iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / 40_000.0;
        // 4 sigma bounds for the sample mean and variance
        assert!(mean.abs() < 4.0 / 200.0);
        assert!((var - 1.0).abs() < 4.0 * (2.0f64 / 40_000.0).sqrt());
    }
}
