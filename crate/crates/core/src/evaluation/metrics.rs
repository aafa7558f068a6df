use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, ScaleBounds, SpatialFrequencyCsi};
use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

/// Smallest per-sample NMSE ratio reported (-100 dB).
pub const NMSE_FLOOR: f64 = 1e-10;

/// How per-sample errors are combined into one NMSE.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean of per-sample `||H - H_hat||^2 / ||H||^2`.
    #[default]
    RatioThenMean,
    /// `sum ||H - H_hat||^2 / sum ||H||^2`.
    Pooled,
}

impl Aggregation {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ratio-then-mean" => Ok(Self::RatioThenMean),
            "pooled" => Ok(Self::Pooled),
            other => Err(Error::Config(format!("unknown NMSE aggregation `{other}`"))),
        }
    }
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Running NMSE over a sample set. Samples with zero-norm truth are skipped
/// and counted.
#[derive(Debug, Clone, Default)]
pub struct NmseAccumulator {
    aggregation: Aggregation,
    ratio_sum: f64,
    err_sum: f64,
    ref_sum: f64,
    count: usize,
    skipped: usize,
}

impl NmseAccumulator {
    pub fn new(aggregation: Aggregation) -> Self {
        Self {
            aggregation,
            ..Default::default()
        }
    }

    /// Adds one sample given its squared error and squared reference norm.
    pub fn push(&mut self, err_sq: f64, ref_sq: f64) {
        if ref_sq <= 0.0 {
            self.skipped += 1;
            return;
        }
        self.ratio_sum += (err_sq / ref_sq).max(NMSE_FLOOR);
        self.err_sum += err_sq;
        self.ref_sum += ref_sq;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn linear(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::DegenerateSample("no sample with nonzero reference".into()));
        }
        Ok(match self.aggregation {
            Aggregation::RatioThenMean => self.ratio_sum / self.count as f64,
            Aggregation::Pooled => (self.err_sum / self.ref_sum).max(NMSE_FLOOR),
        })
    }

    pub fn db(&self) -> Result<f64> {
        self.linear().map(to_db)
    }
}

/// Per-sample linear NMSE ratio, floored.
pub fn nmse_ratio(truth: &CMatrix, estimate: &CMatrix) -> Result<f64> {
    if truth.dims() != estimate.dims() {
        return Err(Error::dims("nmse", &truth.dims(), &estimate.dims()));
    }
    let reference = truth.frobenius_sq();
    if reference == 0.0 {
        return Err(Error::DegenerateSample("zero-norm reference channel".into()));
    }
    Ok((truth.distance_sq(estimate)? / reference).max(NMSE_FLOOR))
}

/// NMSE of a single pair, in dB.
pub fn nmse(truth: &SpatialFrequencyCsi, estimate: &SpatialFrequencyCsi) -> Result<f64> {
    nmse_ratio(&truth.0, &estimate.0).map(to_db)
}

/// NMSE in dB over paired sample sets.
pub fn nmse_set(
    truth: &[SpatialFrequencyCsi],
    estimate: &[SpatialFrequencyCsi],
    aggregation: Aggregation,
) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::dims("nmse sample sets", &[truth.len()], &[estimate.len()]));
    }
    let mut acc = NmseAccumulator::new(aggregation);
    for (t, e) in truth.iter().zip(estimate) {
        if t.0.dims() != e.0.dims() {
            return Err(Error::dims("nmse", &t.0.dims(), &e.0.dims()));
        }
        acc.push(t.0.distance_sq(&e.0)?, t.0.frobenius_sq());
    }
    if acc.skipped() > 0 {
        log::warn!("skipped {} samples with zero-norm reference", acc.skipped());
    }
    acc.db()
}

/// Mean over subcarriers (rows) of `|h_hat^H h| / (||h_hat|| ||h||)`.
/// Rows of the estimate with zero norm contribute 0.
pub fn cosine_correlation(truth: &SpatialFrequencyCsi, estimate: &SpatialFrequencyCsi) -> Result<f64> {
    let (t, e) = (&truth.0, &estimate.0);
    if t.dims() != e.dims() {
        return Err(Error::dims("cosine correlation", &t.dims(), &e.dims()));
    }
    let mut total = 0.0;
    for k in 0..t.rows() {
        let (h, g) = (t.row(k), e.row(k));
        let h_norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if h_norm == 0.0 {
            return Err(Error::DegenerateSample(format!("zero-norm true subcarrier {k}")));
        }
        let g_norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if g_norm == 0.0 {
            continue;
        }
        let inner: num_complex::Complex64 = g.iter().zip(h).map(|(a, b)| a.conj() * b).sum();
        total += (inner.norm() / (g_norm * h_norm)).min(1.0);
    }
    Ok(total / t.rows() as f64)
}

/// NMSE in dB between scaled truncated reconstructions and their targets
/// (`batch x 2 x n_p x n_t`, values in the scaled domain). Because the
/// angular-delay transform is unitary and the truncated rows are padded with
/// zeros, this equals the spatial-frequency NMSE against the truncated
/// reference.
pub fn truncated_nmse_db<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    bounds: ScaleBounds,
    aggregation: Aggregation,
) -> Result<f64> {
    let mut acc = NmseAccumulator::new(aggregation);
    truncated_nmse_accumulate(&mut acc, pred, target, bounds)?;
    acc.db()
}

pub fn truncated_nmse_accumulate<T: Scalar>(
    acc: &mut NmseAccumulator,
    pred: &Tensor<T>,
    target: &Tensor<T>,
    bounds: ScaleBounds,
) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::dims("truncated nmse", pred.shape(), target.shape()));
    }
    let span = bounds.span();
    for i in 0..target.batch() {
        let (mut err, mut reference) = (0.0, 0.0);
        for (&p, &t) in pred.item(i).iter().zip(target.item(i)) {
            let d = span * (p.as_f64() - t.as_f64());
            let r = bounds.unscale(t.as_f64());
            err += d * d;
            reference += r * r;
        }
        acc.push(err, reference);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;

    fn sample(seed: u64) -> CMatrix {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(&[seed]);
        CMatrix::from_fn(6, 4, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn perfect_reconstruction_hits_floor() {
        let h = SpatialFrequencyCsi(sample(1));
        assert_eq!(nmse(&h, &h).unwrap(), -100.0);
    }

    #[test]
    fn zero_estimate_is_zero_db() {
        let h = SpatialFrequencyCsi(sample(2));
        let z = SpatialFrequencyCsi(CMatrix::zeros(6, 4));
        assert!(nmse(&h, &z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn one_percent_error_is_minus_twenty_db() {
        let h = sample(3);
        let e = sample(4);
        let c = (0.01 * h.frobenius_sq() / e.frobenius_sq()).sqrt();
        let est = CMatrix::from_fn(6, 4, |i, j| h.get(i, j) + e.get(i, j) * c);
        let db = nmse(&SpatialFrequencyCsi(h), &SpatialFrequencyCsi(est)).unwrap();
        assert!((db + 20.0).abs() < 1e-6);
    }

    #[test]
    fn zero_reference_is_degenerate() {
        let z = SpatialFrequencyCsi(CMatrix::zeros(2, 2));
        assert!(matches!(nmse(&z, &z), Err(Error::DegenerateSample(_))));
        let h = SpatialFrequencyCsi(sample(5));
        let db = nmse_set(&[z.clone(), h.clone()], &[z, h], Aggregation::RatioThenMean);
        assert!(db.is_err() || db.unwrap() == -100.0);
    }

    #[test]
    fn aggregation_modes_differ() {
        let mut a = NmseAccumulator::new(Aggregation::RatioThenMean);
        let mut b = NmseAccumulator::new(Aggregation::Pooled);
        for (e, r) in [(1.0, 10.0), (1.0, 1.0)] {
            a.push(e, r);
            b.push(e, r);
        }
        assert!((a.linear().unwrap() - 0.55).abs() < 1e-12);
        assert!((b.linear().unwrap() - 2.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_examples() {
        let h = sample(6);
        let t = SpatialFrequencyCsi(h.clone());
        assert!((cosine_correlation(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let doubled = SpatialFrequencyCsi(h.scale(2.0));
        assert!((cosine_correlation(&t, &doubled).unwrap() - 1.0).abs() < 1e-12);
        // Rotate each row into its orthogonal complement: [a, b] -> [-b*, a*].
        let t2 = SpatialFrequencyCsi(CMatrix::from_fn(3, 2, |i, j| {
            Complex64::new((i + j) as f64 + 1.0, i as f64)
        }));
        let orth = SpatialFrequencyCsi(CMatrix::from_fn(3, 2, |i, j| {
            if j == 0 {
                -t2.0.get(i, 1).conj()
            } else {
                t2.0.get(i, 0).conj()
            }
        }));
        assert!(cosine_correlation(&t2, &orth).unwrap().abs() < 1e-12);
        let zero = SpatialFrequencyCsi(CMatrix::zeros(6, 4));
        assert_eq!(cosine_correlation(&t, &zero).unwrap(), 0.0);
    }
}
