//! One-sided paired t-tests on squared errors and Benjamini-Hochberg
//! correction within participants.

use std::collections::BTreeMap;
use std::fmt::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`. `one_minus_x` is passed
/// separately so callers can supply it without cancellation.
fn beta_reg(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * one_minus_x.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, one_minus_x) / b
    }
}

/// Regularized incomplete beta function `I_x(a, b)` for `x` in `[0, 1]`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    beta_reg(a, b, x, 1.0 - x)
}

/// Student-t cumulative distribution function with `nu` degrees of freedom.
pub fn student_t_cdf(t: f64, nu: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let t2 = t * t;
    let x = nu / (nu + t2);
    let one_minus_x = t2 / (nu + t2);
    let tail = 0.5 * beta_reg(nu / 2.0, 0.5, x, one_minus_x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Per-unit paired test of model A against model B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub t: Vec<f64>,
    /// One-sided p-value for "A has lower squared error than B".
    pub p: Vec<f64>,
    pub n_samples: usize,
}

/// One-sided paired t-test on `d = (y - a)^2 - (y - b)^2` per unit; small p
/// favours model A.
pub fn paired_squared_error_ttest(y: &Array2<f64>, pred_a: &Array2<f64>, pred_b: &Array2<f64>) -> Result<PairedTest> {
    if y.dim() != pred_a.dim() || y.dim() != pred_b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "paired test: targets {:?}, model A {:?}, model B {:?}",
            y.dim(),
            pred_a.dim(),
            pred_b.dim()
        )));
    }
    let n = y.nrows();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("paired test needs at least 3 samples, got {n}")));
    }
    let nf = n as f64;
    let mut t_out = Vec::with_capacity(y.ncols());
    let mut p_out = Vec::with_capacity(y.ncols());
    for u in 0..y.ncols() {
        let d: Vec<f64> = (0..n)
            .map(|r| {
                let yv = y[[r, u]];
                (yv - pred_a[[r, u]]).powi(2) - (yv - pred_b[[r, u]]).powi(2)
            })
            .collect();
        let mean = d.iter().sum::<f64>() / nf;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        if !(var > 0.0) {
            if mean == 0.0 {
                t_out.push(0.0);
                p_out.push(0.5);
                continue;
            }
            return Err(Error::DegenerateVariance { unit: u });
        }
        let t = mean / (var.sqrt() / nf.sqrt());
        t_out.push(t);
        p_out.push(student_t_cdf(t, nf - 1.0));
    }
    Ok(PairedTest {
        t: t_out,
        p: p_out,
        n_samples: n,
    })
}

/// Benjamini-Hochberg step-up run separately for each participant. Ties in p
/// are ordered by unit index.
pub fn bh_fdr(p: &[f64], participants: &[i64], level: f64) -> Result<Vec<bool>> {
    if p.len() != participants.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} p-values but {} participant ids",
            p.len(),
            participants.len()
        )));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("p-values must lie in [0, 1]".into()));
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (u, &pid) in participants.iter().enumerate() {
        groups.entry(pid).or_default().push(u);
    }
    let mut rejected = vec![false; p.len()];
    for mut units in groups.into_values() {
        units.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
        let m = units.len() as f64;
        let cutoff = units
            .iter()
            .enumerate()
            .filter(|(k, &u)| p[u] <= (*k as f64 + 1.0) * level / m)
            .map(|(k, _)| k + 1)
            .last()
            .unwrap_or(0);
        for &u in &units[..cutoff] {
            rejected[u] = true;
        }
    }
    Ok(rejected)
}

/// Paired test plus FDR decisions, one row per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub unit_participants: Vec<i64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub rejected: Vec<bool>,
    pub level: f64,
    pub n_samples: usize,
}

impl TestResult {
    pub fn n_rejected(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }

    /// `unit,participant,t,p,rejected` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("unit,participant,t,p,rejected\n");
        for u in 0..self.t.len() {
            let _ = writeln!(
                out,
                "{u},{},{},{},{}",
                self.unit_participants[u], self.t[u], self.p[u], self.rejected[u]
            );
        }
        out
    }
}

/// Tests whether model A beats model B, correcting within participants.
pub fn compare_models(
    y: &Array2<f64>,
    pred_a: &Array2<f64>,
    pred_b: &Array2<f64>,
    participants: &[i64],
    level: f64,
) -> Result<TestResult> {
    if participants.len() != y.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} units but {} participant ids",
            y.ncols(),
            participants.len()
        )));
    }
    let test = paired_squared_error_ttest(y, pred_a, pred_b)?;
    let rejected = bh_fdr(&test.p, participants, level)?;
    Ok(TestResult {
        unit_participants: participants.to_vec(),
        t: test.t,
        p: test.p,
        rejected,
        level,
        n_samples: test.n_samples,
    })
}

/// Tests a model against the intercept-only baseline.
pub fn chance_level_test(
    y: &Array2<f64>,
    pred_model: &Array2<f64>,
    intercept_preds: &Array2<f64>,
    participants: &[i64],
    level: f64,
) -> Result<TestResult> {
    compare_models(y, pred_model, intercept_preds, participants, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(0.25) - 1.288_022_524_698_077_5).abs() < 1e-13);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1 - x)^b and I_x(a, 1) = x^a.
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.99] {
            assert!((incomplete_beta(1.0, 3.5, x) - (1.0 - (1.0 - x).powf(3.5))).abs() < 1e-14);
            assert!((incomplete_beta(2.5, 1.0, x) - x.powf(2.5)).abs() < 1e-14);
        }
        assert_eq!(incomplete_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(incomplete_beta(2.0, 3.0, 1.0), 1.0);
    }

    #[test]
    fn t_cdf_symmetry_and_cauchy() {
        assert_eq!(student_t_cdf(0.0, 5.0), 0.5);
        for &t in &[0.1, 1.0, 2.5, 10.0] {
            let sum = student_t_cdf(t, 7.0) + student_t_cdf(-t, 7.0);
            assert!((sum - 1.0).abs() < 1e-15);
            // One degree of freedom is the Cauchy distribution.
            let cauchy = 0.5 + t.atan() / std::f64::consts::PI;
            assert!((student_t_cdf(t, 1.0) - cauchy).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_models_give_half() {
        let y = Array2::from_shape_fn((5, 2), |(i, j)| (i * 3 + j) as f64);
        let a = Array2::from_shape_fn((5, 2), |(i, _)| i as f64);
        let t = paired_squared_error_ttest(&y, &a, &a).unwrap();
        assert_eq!(t.p, vec![0.5, 0.5]);
        assert_eq!(t.t, vec![0.0, 0.0]);
    }

    #[test]
    fn degenerate_variance_is_an_error() {
        // Constant non-zero difference.
        let y = Array2::zeros((4, 1));
        let a = Array2::zeros((4, 1));
        let b = Array2::from_elem((4, 1), 1.0);
        assert!(matches!(paired_squared_error_ttest(&y, &a, &b), Err(Error::DegenerateVariance { unit: 0 })));
        assert!(paired_squared_error_ttest(&Array2::zeros((2, 1)), &a.slice(ndarray::s![..2, ..]).to_owned(), &b.slice(ndarray::s![..2, ..]).to_owned()).is_err());
    }

    #[test]
    fn swapping_models_negates_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draw = |r, c| Array2::from_shape_fn((r, c), |_| StandardNormal.sample(&mut rng));
        let (y, a, b) = (draw(30, 4), draw(30, 4), draw(30, 4));
        let ab = paired_squared_error_ttest(&y, &a, &b).unwrap();
        let ba = paired_squared_error_ttest(&y, &b, &a).unwrap();
        for u in 0..4 {
            assert_eq!(ab.t[u], -ba.t[u]);
            assert!((ab.p[u] + ba.p[u] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn better_model_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = Array2::from_shape_fn((243, 3), |_| StandardNormal.sample(&mut rng));
        let noisy = &y + &Array2::from_shape_fn((243, 3), |_| -> f64 { StandardNormal.sample(&mut rng) });
        let t = paired_squared_error_ttest(&y, &y, &noisy).unwrap();
        assert!(t.p.iter().all(|&p| p < 0.05));
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_fdr(&[0.01, 0.02, 0.04], &[1, 1, 1], 0.05).unwrap(), vec![true; 3]);
        assert_eq!(bh_fdr(&[1.0, 1.0], &[1, 1], 0.05).unwrap(), vec![false; 2]);
        assert_eq!(bh_fdr(&[0.04], &[1], 0.05).unwrap(), vec![true]);
        // Step-up: 0.03 > 1*0.05/2 alone, but 0.04 <= 2*0.05/2 rescues both.
        assert_eq!(bh_fdr(&[0.04, 0.03], &[1, 1], 0.05).unwrap(), vec![true, true]);
        // Participants are corrected separately.
        assert_eq!(bh_fdr(&[0.04, 0.9, 0.04], &[1, 1, 2], 0.05).unwrap(), vec![false, false, true]);
        assert!(bh_fdr(&[1.5], &[1], 0.05).is_err());
        assert!(bh_fdr(&[0.5], &[1, 2], 0.05).is_err());
    }

    #[test]
    fn chance_test_against_itself_rejects_nothing() {
        let y = Array2::from_shape_fn((10, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let base = Array2::from_elem((10, 3), 2.0);
        let r = chance_level_test(&y, &base, &base, &[1, 1, 2], 0.05).unwrap();
        assert_eq!(r.p, vec![0.5; 3]);
        assert_eq!(r.n_rejected(), 0);
        assert!(r.to_csv().starts_with("unit,participant,t,p,rejected\n0,1,0,0.5,false\n"));
    }

    proptest! {
        #[test]
        fn bh_is_monotone(p in proptest::collection::vec(0.0f64..1.0, 1..40), level in 0.01f64..0.3) {
            let participants: Vec<i64> = (0..p.len()).map(|i| (i % 3) as i64).collect();
            let rej = bh_fdr(&p, &participants, level).unwrap();
            for i in 0..p.len() {
                for j in 0..p.len() {
                    if participants[i] == participants[j] && rej[i] && p[j] < p[i] {
                        prop_assert!(rej[j]);
                    }
                }
            }
        }

        #[test]
        fn common_shift_leaves_test_unchanged(seed in 0u64..1000, shift in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || Array2::from_shape_fn((12, 2), |_| StandardNormal.sample(&mut rng));
            let (y, a, b) = (draw(), draw(), draw());
            let base = paired_squared_error_ttest(&y, &a, &b).unwrap();
            let moved = paired_squared_error_ttest(&(&y + shift), &(&a + shift), &(&b + shift)).unwrap();
            for u in 0..2 {
                prop_assert!((base.t[u] - moved.t[u]).abs() < 1e-8 * (1.0 + base.t[u].abs()));
            }
        }
    }
}
