//! Average-treatment-effect estimators: the front-door plug-in on a learned
//! (or true) mediator representation, a back-door regression adjustment on
//! the proxies, and the naive difference in means.

use crate::error::{Error, Result};
use crate::numerics::{linear_regression, LinearFit, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FrontdoorPlugin,
    BackdoorRegression,
    NaiveDiffMeans,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::FrontdoorPlugin => "frontdoor_plugin",
            Method::BackdoorRegression => "backdoor_regression",
            Method::NaiveDiffMeans => "naive_diff_means",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    pub n_treated: usize,
    pub treated_fraction: f64,
    /// Any per-arm regression fell back to a ridge solve.
    pub ridge_fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AteEstimate {
    pub value: f64,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

fn split_arms(t: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut arm0 = Vec::new();
    let mut arm1 = Vec::new();
    for (i, &v) in t.iter().enumerate() {
        match v {
            v if v == 0.0 => arm0.push(i),
            v if v == 1.0 => arm1.push(i),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "treatment entries must be 0 or 1, found {v} at row {i}"
                )))
            }
        }
    }
    if arm0.is_empty() || arm1.is_empty() {
        return Err(Error::DegenerateInput(
            "both treatment arms must be nonempty".into(),
        ));
    }
    Ok((arm0, arm1))
}

fn check_lengths(rows: usize, t: &[f64], y: &[f64]) -> Result<()> {
    if rows != t.len() || rows != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {rows} feature rows, {} treatments, {} outcomes",
            t.len(),
            y.len()
        )));
    }
    Ok(())
}

fn fit_arm(features: &Tensor, y: &[f64], rows: &[usize]) -> Result<LinearFit> {
    let sub = Tensor::from_shape_fn((rows.len(), features.ncols()), |(r, c)| {
        features[(rows[r], c)]
    });
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    linear_regression(&sub, &ys)
}

/// Front-door plug-in on a mediator representation `psi` (one row per
/// observation):
///
/// 1. fit per-arm linear outcome models m_a(psi) = E[Y | T=a, psi];
/// 2. for each arm a, average over the empirical psi distribution given
///    T=a the treatment-marginalised prediction
///    mu(psi) = m_0(psi) (1 - p) + m_1(psi) p, with p the empirical
///    treatment rate;
/// 3. report mu under arm 1 minus mu under arm 0.
pub fn ate_frontdoor_plugin(psi: &Tensor, t: &[f64], y: &[f64]) -> Result<AteEstimate> {
    check_lengths(psi.nrows(), t, y)?;
    let (arm0, arm1) = split_arms(t)?;
    let fit0 = fit_arm(psi, y, &arm0)?;
    let fit1 = fit_arm(psi, y, &arm1)?;
    let p1 = arm1.len() as f64 / t.len() as f64;
    let mu = |row: &[f64]| -> f64 {
        fit0.predict_row(row) * (1.0 - p1) + fit1.predict_row(row) * p1
    };
    let arm_mean = |rows: &[usize]| -> f64 {
        rows.iter()
            .map(|&i| mu(&psi.row(i).to_vec()))
            .sum::<f64>()
            / rows.len() as f64
    };
    Ok(AteEstimate {
        value: arm_mean(&arm1) - arm_mean(&arm0),
        method: Method::FrontdoorPlugin,
        diagnostics: Diagnostics {
            n: t.len(),
            n_treated: arm1.len(),
            treated_fraction: p1,
            ridge_fallback: fit0.ridge_fallback || fit1.ridge_fallback,
        },
    })
}

/// Back-door regression adjustment treating `x` as the adjustment set:
/// fit per-arm linear outcome models on x and average the predicted
/// contrast over the full sample.
pub fn ate_backdoor_regression(x: &Tensor, t: &[f64], y: &[f64]) -> Result<AteEstimate> {
    check_lengths(x.nrows(), t, y)?;
    let (arm0, arm1) = split_arms(t)?;
    let fit0 = fit_arm(x, y, &arm0)?;
    let fit1 = fit_arm(x, y, &arm1)?;
    let value = (0..x.nrows())
        .map(|i| {
            let row = x.row(i).to_vec();
            fit1.predict_row(&row) - fit0.predict_row(&row)
        })
        .sum::<f64>()
        / x.nrows() as f64;
    Ok(AteEstimate {
        value,
        method: Method::BackdoorRegression,
        diagnostics: Diagnostics {
            n: t.len(),
            n_treated: arm1.len(),
            treated_fraction: arm1.len() as f64 / t.len() as f64,
            ridge_fallback: fit0.ridge_fallback || fit1.ridge_fallback,
        },
    })
}

/// Unadjusted difference in outcome means between arms.
pub fn naive_diff_means(t: &[f64], y: &[f64]) -> Result<AteEstimate> {
    check_lengths(y.len(), t, y)?;
    let (arm0, arm1) = split_arms(t)?;
    let mean = |rows: &[usize]| rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    Ok(AteEstimate {
        value: mean(&arm1) - mean(&arm0),
        method: Method::NaiveDiffMeans,
        diagnostics: Diagnostics {
            n: t.len(),
            n_treated: arm1.len(),
            treated_fraction: arm1.len() as f64 / t.len() as f64,
            ridge_fallback: false,
        },
    })
}

/// Relative estimation bias (estimate - truth) / |truth|.
pub fn estimation_bias(estimate: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::DegenerateInput(
            "relative bias is undefined for a zero true effect".into(),
        ));
    }
    Ok((estimate - truth) / truth.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    /// Linear mediation with confounding: T <- U -> Y, T -> Z -> Y.
    fn mediation_sample(n: usize, seed: u64, b: f64, c: f64, conf: f64) -> (Tensor, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut z = Array2::zeros((n, 1));
        let mut t = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let u: f64 = rng.sample(StandardNormal);
            let ti = if rng.gen::<f64>() < crate::numerics::sigmoid(2.0 * u) {
                1.0
            } else {
                0.0
            };
            let zi = b * ti + 0.5 * rng.sample::<f64, _>(StandardNormal);
            z[(i, 0)] = zi;
            y.push(c * zi + conf * u + 0.3 * rng.sample::<f64, _>(StandardNormal));
            t.push(ti);
        }
        (z, t, y)
    }

    #[test]
    fn frontdoor_recovers_mediated_effect_under_confounding() {
        let (z, t, y) = mediation_sample(40_000, 5, 1.2, 0.6, 1.5);
        let est = ate_frontdoor_plugin(&z, &t, &y).unwrap();
        let truth = 1.2 * 0.6;
        assert!(
            (est.value - truth).abs() < 0.05,
            "frontdoor {} vs truth {truth}",
            est.value
        );
        // naive is badly biased by the confounder
        let naive = naive_diff_means(&t, &y).unwrap();
        assert!((naive.value - truth).abs() > 0.5);
    }

    #[test]
    fn backdoor_on_observed_confounder_is_unbiased() {
        // here the "proxy" IS the confounder, so back-door adjustment works
        let n = 40_000;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut x = Array2::zeros((n, 1));
        let mut t = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let u: f64 = rng.sample(StandardNormal);
            let ti = if rng.gen::<f64>() < crate::numerics::sigmoid(2.0 * u) {
                1.0
            } else {
                0.0
            };
            x[(i, 0)] = u;
            t.push(ti);
            y.push(0.7 * ti + 1.5 * u + 0.3 * rng.sample::<f64, _>(StandardNormal));
        }
        let est = ate_backdoor_regression(&x, &t, &y).unwrap();
        assert!((est.value - 0.7).abs() < 0.03, "backdoor {}", est.value);
    }

    #[test]
    fn discrete_plugin_matches_exact_adjustment() {
        // binary mediator: the saturated linear model makes the plug-in
        // exactly the empirical front-door formula, compared here against
        // the table-based oracle on the empirical joint
        use crate::graph::discrete::{frontdoor_adjust, ProbTable};
        let n = 60_000usize;
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let mut counts = vec![0.0f64; 8]; // (t, z, y) binary
        let mut z_col = Array2::zeros((n, 1));
        let mut t_v = Vec::new();
        let mut y_v = Vec::new();
        for i in 0..n {
            let u = rng.gen::<f64>();
            let t = if rng.gen::<f64>() < 0.3 + 0.4 * u { 1.0 } else { 0.0 };
            let z = if rng.gen::<f64>() < 0.2 + 0.6 * t { 1.0 } else { 0.0 };
            let y = if rng.gen::<f64>() < 0.1 + 0.5 * z + 0.3 * u { 1.0 } else { 0.0 };
            counts[(t as usize) * 4 + (z as usize) * 2 + y as usize] += 1.0;
            z_col[(i, 0)] = z;
            t_v.push(t);
            y_v.push(y);
        }
        let probs: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();
        let dom = vec![0.0, 1.0];
        let joint = ProbTable::from_parts(
            vec!["t".into(), "z".into(), "y".into()],
            vec![dom.clone(), dom.clone(), dom],
            probs,
        )
        .unwrap();
        let exact = |tv: f64| frontdoor_adjust(&joint, &["z"], "t", "y", tv, 1.0).unwrap();
        // table oracle gives P(Y=1|do(t)); expectation of binary y equals it
        let oracle_ate = exact(1.0) - exact(0.0);
        let est = ate_frontdoor_plugin(&z_col, &t_v, &y_v).unwrap();
        assert!(
            (est.value - oracle_ate).abs() < 1e-9,
            "plugin {} vs oracle {oracle_ate}",
            est.value
        );
    }

    #[test]
    fn bias_requires_nonzero_truth() {
        assert!(estimation_bias(0.3, 0.0).is_err());
        assert!((estimation_bias(0.6, 0.5).unwrap() - 0.2).abs() < 1e-12);
        assert!((estimation_bias(-0.6, -0.5).unwrap() - (-0.2)).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonbinary_treatment_and_single_arm() {
        let z = Array2::zeros((4, 1));
        let y = vec![0.0; 4];
        assert!(matches!(
            ate_frontdoor_plugin(&z, &[0.0, 0.5, 1.0, 1.0], &y),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            naive_diff_means(&[1.0; 4], &y),
            Err(Error::DegenerateInput(_))
        ));
    }

    fn arb_mediation() -> impl Strategy<Value = (u64, f64, f64)> {
        (0u64..1_000, 0.5f64..1.5, 0.25f64..0.75)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn translation_invariance((seed, b, c) in arb_mediation(), shift in -10.0f64..10.0) {
            let (z, t, y) = mediation_sample(400, seed, b, c, 1.0);
            let base = ate_frontdoor_plugin(&z, &t, &y).unwrap().value;
            let y2: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let shifted = ate_frontdoor_plugin(&z, &t, &y2).unwrap().value;
            prop_assert!((base - shifted).abs() < 1e-8);
        }

        #[test]
        fn scale_equivariance((seed, b, c) in arb_mediation(), s in 0.1f64..10.0) {
            let (z, t, y) = mediation_sample(400, seed, b, c, 1.0);
            let base = ate_frontdoor_plugin(&z, &t, &y).unwrap().value;
            let y2: Vec<f64> = y.iter().map(|v| v * s).collect();
            let scaled = ate_frontdoor_plugin(&z, &t, &y2).unwrap().value;
            prop_assert!((base * s - scaled).abs() < 1e-7 * s.max(1.0));
        }

        #[test]
        fn permutation_invariance((seed, b, c) in arb_mediation()) {
            let (z, t, y) = mediation_sample(300, seed, b, c, 1.0);
            let base = ate_frontdoor_plugin(&z, &t, &y).unwrap().value;
            let mut idx: Vec<usize> = (0..300).collect();
            // deterministic shuffle
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xF00D);
            for i in (1..idx.len()).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            let zp = Array2::from_shape_fn((300, 1), |(r, _)| z[(idx[r], 0)]);
            let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
            let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let perm = ate_frontdoor_plugin(&zp, &tp, &yp).unwrap().value;
            prop_assert!((base - perm).abs() < 1e-8);
        }
    }
}
