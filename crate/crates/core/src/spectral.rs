//! Radix-2 FFT and all-lags cross-correlation.

use crate::error::{Error, Result};

/// Complex samples in split (re, im) layout. The length is always a power of two.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexBuffer {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexBuffer {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::shape(
                "ComplexBuffer::new",
                (re.len(), 1),
                (im.len(), 1),
            ));
        }
        if !re.len().is_power_of_two() {
            return Err(Error::FftLength(re.len()));
        }
        if let Some(k) = re.iter().chain(&im).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k % re.len()));
        }
        Ok(ComplexBuffer { re, im })
    }

    pub fn from_real(re: Vec<f64>) -> Result<Self> {
        let im = vec![0.0; re.len()];
        ComplexBuffer::new(re, im)
    }

    pub fn zeros(len: usize) -> Result<Self> {
        ComplexBuffer::new(vec![0.0; len], vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn norm_sq(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|v| v * v).sum()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.re, self.im)
    }
}

/// Smallest power of two `>= m` (and at least 1).
pub fn next_pow2(m: usize) -> usize {
    m.max(1).next_power_of_two()
}

/// Precomputed bit-reversal permutation and twiddles for one transform length.
#[derive(Clone, Debug)]
pub struct FftPlan {
    len: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    rev: Vec<usize>,
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if !len.is_power_of_two() {
            return Err(Error::FftLength(len));
        }
        let half = len / 2;
        let step = -2.0 * std::f64::consts::PI / len as f64;
        let (sin, cos): (Vec<f64>, Vec<f64>) =
            (0..half).map(|k| (step * k as f64).sin_cos()).unzip();
        let bits = len.trailing_zeros();
        let rev = (0..len)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Ok(FftPlan { len, cos, sin, rev })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place transform. The inverse includes the `1/len` factor.
    pub fn process(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.len;
        assert!(
            re.len() == n && im.len() == n,
            "buffer length differs from plan"
        );
        for i in 0..n {
            let j = self.rev[i];
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let sign = if inverse { -1.0 } else { 1.0 };
        let mut m = 2;
        while m <= n {
            let half = m / 2;
            let stride = n / m;
            for start in (0..n).step_by(m) {
                for k in 0..half {
                    let wr = self.cos[k * stride];
                    let wi = sign * self.sin[k * stride];
                    let (p, q) = (start + k, start + k + half);
                    let tr = re[q] * wr - im[q] * wi;
                    let ti = re[q] * wi + im[q] * wr;
                    re[q] = re[p] - tr;
                    im[q] = im[p] - ti;
                    re[p] += tr;
                    im[p] += ti;
                }
            }
            m *= 2;
        }
        if inverse {
            let s = 1.0 / n as f64;
            re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= s);
        }
    }

    /// Spectra of two real sequences (zero-padded to the plan length) from one complex transform.
    /// Returns bins `0..=len/2` of each as `(x_re, x_im, y_re, y_im)`.
    pub(crate) fn real_pair_half_spectra(
        &self,
        x: &[f64],
        y: &[f64],
        scratch: &mut (Vec<f64>, Vec<f64>),
        out: [&mut [f64]; 4],
    ) {
        let n = self.len;
        let (re, im) = scratch;
        re.clear();
        re.extend_from_slice(x);
        re.resize(n, 0.0);
        im.clear();
        im.extend_from_slice(y);
        im.resize(n, 0.0);
        self.process(re, im, false);
        let [xr, xi, yr, yi] = out;
        for k in 0..=n / 2 {
            let nk = (n - k) % n;
            let (ar, ai) = (re[k], im[k]);
            let (br, bi) = (re[nk], -im[nk]);
            // X = (Z_k + conj Z_{n-k}) / 2, Y = (Z_k - conj Z_{n-k}) / 2i
            xr[k] = 0.5 * (ar + br);
            xi[k] = 0.5 * (ai + bi);
            yr[k] = 0.5 * (ai - bi);
            yi[k] = -0.5 * (ar - br);
        }
    }

    /// Inverse transform of a Hermitian spectrum given by its bins `0..=len/2`; returns the real signal.
    pub(crate) fn inverse_half_spectrum(&self, half_re: &[f64], half_im: &[f64]) -> Vec<f64> {
        let n = self.len;
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for k in 0..=n / 2 {
            re[k] = half_re[k];
            im[k] = half_im[k];
            if k != 0 && k != n - k {
                re[n - k] = half_re[k];
                im[n - k] = -half_im[k];
            }
        }
        self.process(&mut re, &mut im, true);
        re
    }
}

/// Discrete Fourier transform; the inverse is scaled by `1/len`.
pub fn fft(buf: ComplexBuffer, inverse: bool) -> Result<ComplexBuffer> {
    let plan = FftPlan::new(buf.len())?;
    let (mut re, mut im) = buf.into_parts();
    plan.process(&mut re, &mut im, inverse);
    Ok(ComplexBuffer { re, im })
}

/// `out[t + n - 1] = sum_i x[i + t] y[i]` for every lag `t` in `-(n-1)..=n-1`.
pub fn correlate_all_lags(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::shape(
            "correlate_all_lags",
            (x.len(), 1),
            (y.len(), 1),
        ));
    }
    let n = x.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let plan = FftPlan::new(next_pow2(2 * n))?;
    let len = plan.len();
    let half = len / 2 + 1;
    let (mut xr, mut xi, mut yr, mut yi) = (
        vec![0.0; half],
        vec![0.0; half],
        vec![0.0; half],
        vec![0.0; half],
    );
    let mut scratch = (Vec::new(), Vec::new());
    plan.real_pair_half_spectra(x, y, &mut scratch, [&mut xr, &mut xi, &mut yr, &mut yi]);
    // X * conj(Y)
    let (pr, pi): (Vec<f64>, Vec<f64>) = (0..half)
        .map(|k| (xr[k] * yr[k] + xi[k] * yi[k], xi[k] * yr[k] - xr[k] * yi[k]))
        .unzip();
    let circ = plan.inverse_half_spectrum(&pr, &pi);
    Ok((0..2 * n - 1)
        .map(|idx| {
            let t = idx as isize - (n as isize - 1);
            circ[t.rem_euclid(len as isize) as usize]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = re.len();
        (0..n)
            .map(|k| {
                (0..n).fold((0.0, 0.0), |(sr, si), j| {
                    let a = -2.0 * std::f64::consts::PI * (k * j % n) as f64 / n as f64;
                    let (s, c) = a.sin_cos();
                    (sr + re[j] * c - im[j] * s, si + re[j] * s + im[j] * c)
                })
            })
            .unzip()
    }

    fn naive_corr(x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = x.len() as isize;
        (-(n - 1)..n)
            .map(|t| {
                (0..n)
                    .filter(|i| i + t >= 0 && i + t < n)
                    .map(|i| x[(i + t) as usize] * y[i as usize])
                    .sum()
            })
            .collect()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn impulse_and_dc() {
        let out = fft(
            ComplexBuffer::from_real(vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
            false,
        )
        .unwrap();
        assert_eq!(out.re(), &[1.0; 4]);
        assert_eq!(out.im(), &[0.0; 4]);
        let out = fft(ComplexBuffer::from_real(vec![1.0; 4]).unwrap(), false).unwrap();
        for (k, (&r, &i)) in out.re().iter().zip(out.im()).enumerate() {
            let want = if k == 0 { 4.0 } else { 0.0 };
            assert!((r - want).abs() < 1e-15 && i.abs() < 1e-15);
        }
    }

    #[test]
    fn length_one_is_identity() {
        let buf = ComplexBuffer::new(vec![3.0], vec![-1.0]).unwrap();
        assert_eq!(fft(buf.clone(), false).unwrap(), buf);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(ComplexBuffer::zeros(6), Err(Error::FftLength(6))));
        assert!(matches!(FftPlan::new(12), Err(Error::FftLength(12))));
        assert!(ComplexBuffer::new(vec![0.0; 4], vec![0.0; 2]).is_err());
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let re = random_vec(&mut rng, 16);
        let im = random_vec(&mut rng, 16);
        let (wr, wi) = naive_dft(&re, &im);
        let out = fft(ComplexBuffer::new(re, im).unwrap(), false).unwrap();
        for k in 0..16 {
            assert!((out.re()[k] - wr[k]).abs() < 1e-12);
            assert!((out.im()[k] - wi[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_parseval_up_to_1024() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for bits in 0..=10 {
            let n = 1 << bits;
            let buf = ComplexBuffer::new(random_vec(&mut rng, n), random_vec(&mut rng, n)).unwrap();
            let spec = fft(buf.clone(), false).unwrap();
            let rel =
                (spec.norm_sq() - n as f64 * buf.norm_sq()).abs() / (n as f64 * buf.norm_sq());
            assert!(rel < 1e-10);
            let back = fft(spec, true).unwrap();
            let scale = buf
                .re()
                .iter()
                .chain(buf.im())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in back
                .re()
                .iter()
                .chain(back.im())
                .zip(buf.re().iter().chain(buf.im()))
            {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn correlation_hand_cases() {
        let out = correlate_all_lags(&[1.0, 2.0], &[1.0, 1.0]).unwrap();
        for (a, b) in out.iter().zip([1.0, 3.0, 2.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        let imp = [1.0, 0.0, 0.0];
        let out = correlate_all_lags(&imp, &imp).unwrap();
        for (idx, v) in out.iter().enumerate() {
            let want = if idx == 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-15);
        }
        assert!(correlate_all_lags(&[1.0], &[1.0, 2.0]).is_err());
        assert!(correlate_all_lags(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn correlation_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 3, 7, 64, 100, 1024] {
            let x = random_vec(&mut rng, n);
            let y = random_vec(&mut rng, n);
            let fast = correlate_all_lags(&x, &y).unwrap();
            let slow = naive_corr(&x, &y);
            assert_eq!(fast.len(), 2 * n - 1);
            assert!(crate::tensor::linf_diff(&fast, &slow) < 1e-10, "n = {n}");
        }
    }

    proptest! {
        #[test]
        fn correlation_linearity_and_symmetry(
            x in proptest::collection::vec(-1.0f64..1.0, 1..40),
            seed in 0u64..1000,
            alpha in -2.0f64..2.0,
        ) {
            let n = x.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = random_vec(&mut rng, n);
            let z = random_vec(&mut rng, n);
            let mix: Vec<f64> = y.iter().zip(&z).map(|(a, b)| alpha * a + b).collect();
            let lhs = correlate_all_lags(&x, &mix).unwrap();
            let cy = correlate_all_lags(&x, &y).unwrap();
            let cz = correlate_all_lags(&x, &z).unwrap();
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - (alpha * cy[k] + cz[k])).abs() < 1e-10);
            }
            let swapped = correlate_all_lags(&y, &x).unwrap();
            let m = cy.len();
            for k in 0..m {
                prop_assert!((cy[k] - swapped[m - 1 - k]).abs() < 1e-10);
            }
        }
    }
}
