//! The personalization metric ρ, least-squares fits, and selection binning.

use crate::model::{Assignment, ScenarioInstance};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

/// Result of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub residual_norm: f64,
    /// Human-readable description of the fitted functional form.
    pub basis: String,
}

/// Normalized 2-D histogram of personalized selections.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub bin_width: f64,
    /// (ΔOEB bin, ΔCSR bin) → normalized count; sums to 1 when non-empty.
    pub cells: BTreeMap<(i64, i64), f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FitError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

/// Mean min-max-normalized CSR rank of the chosen treatments: 0 when every
/// patient gets their illness's baseline, 1 when everyone gets the top option.
///
/// Normalization runs per illness over that illness's applicable treatments,
/// using catalog *mean* CSRs (the spectrum is a property of the catalog, not
/// of one repetition's draw). An illness whose treatments all share one mean
/// CSR has no personalization spectrum; its patients contribute 0.
pub fn personalization_level(inst: &ScenarioInstance, asg: &Assignment) -> f64 {
    let n = inst.n_patients();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, p) in inst.patients.iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in inst.applicable(p.illness) {
            lo = lo.min(inst.treatments[j].csr_mean);
            hi = hi.max(inst.treatments[j].csr_mean);
        }
        if hi > lo {
            total += (inst.treatments[asg.chosen[i]].csr_mean - lo) / (hi - lo);
        }
    }
    total / n as f64
}

/// Ordinary least squares for y = β₁x + β₀ via the normal equations.
/// Coefficients are returned as `[β₀, β₁]`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<FitResult, FitError> {
    assert_eq!(xs.len(), ys.len(), "x/y length mismatch");
    if xs.len() < 2 {
        return Err(FitError::DegenerateInput("need at least 2 points"));
    }
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    if det.abs() <= 1e-12 * n * sxx.max(1.0) {
        return Err(FitError::DegenerateInput("all x values identical"));
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - (slope * x + intercept);
        ss_res += r * r;
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    Ok(FitResult {
        coefficients: vec![intercept, slope],
        r_squared: r_squared(ss_res, ss_tot),
        residual_norm: ss_res.sqrt(),
        basis: "y = b0 + b1*x".into(),
    })
}

/// Least squares on the fixed basis {1, ΔOEB, ΔOEB², ΔCSR, ΔOEB·ΔCSR}.
/// Points are `(delta_oeb, delta_csr, count)` triples.
pub fn poly_surface_fit(points: &[(f64, f64, f64)]) -> Result<FitResult, FitError> {
    if points.len() < 5 {
        return Err(FitError::DegenerateInput("need at least 5 points"));
    }
    let rows = points.len();
    let mut design = DMatrix::zeros(rows, 5);
    let mut y = DVector::zeros(rows);
    for (r, &(o, c, w)) in points.iter().enumerate() {
        design[(r, 0)] = 1.0;
        design[(r, 1)] = o;
        design[(r, 2)] = o * o;
        design[(r, 3)] = c;
        design[(r, 4)] = o * c;
        y[r] = w;
    }
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * max_sv)
        .count();
    if rank < 5 {
        return Err(FitError::DegenerateInput("rank-deficient design matrix"));
    }
    let beta = svd
        .solve(&y, 1e-10 * max_sv)
        .map_err(|_| FitError::DegenerateInput("singular system"))?;
    let residual = &y - &design * &beta;
    let ss_res = residual.norm_squared();
    let mean_y = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    Ok(FitResult {
        coefficients: beta.iter().copied().collect(),
        r_squared: r_squared(ss_res, ss_tot),
        residual_norm: ss_res.sqrt(),
        basis: "w = b0 + b1*dOEB + b2*dOEB^2 + b3*dCSR + b4*dOEB*dCSR".into(),
    })
}

/// R² with the SS_tot = 0 convention: a constant target is reported as 0.
fn r_squared(ss_res: f64, ss_tot: f64) -> f64 {
    if ss_tot <= 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Histogram (ΔOEB, ΔCSR) selections at the given bin width. Each value is
/// rounded to 9 decimals before flooring so values sitting on a bin edge land
/// in the higher bin regardless of floating-point noise; counts are divided
/// by the total number of selections.
pub fn bin_selections(selections: &[(f64, f64)], bin_width: f64) -> HeatmapGrid {
    assert!(bin_width > 0.0, "bin_width must be positive");
    let mut cells = BTreeMap::new();
    for &(o, c) in selections {
        *cells.entry((bin_index(o, bin_width), bin_index(c, bin_width))).or_insert(0.0) += 1.0;
    }
    if !selections.is_empty() {
        let total = selections.len() as f64;
        for v in cells.values_mut() {
            *v /= total;
        }
    }
    HeatmapGrid {
        bin_width,
        cells,
    }
}

fn bin_index(value: f64, bin_width: f64) -> i64 {
    let rounded = (value * 1e9).round() / 1e9;
    (rounded / bin_width).floor() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IllnessId, Patient, TreatmentConfig};
    use approx::assert_abs_diff_eq;

    fn catalog3() -> ScenarioInstance {
        let t = |csr: f64, oeb: f64, label: &str| TreatmentConfig {
            illness: IllnessId(0),
            label: label.into(),
            csr_mean: csr,
            csr_std: 0.0,
            oeb,
        };
        ScenarioInstance {
            patients: vec![Patient { illness: IllnessId(0) }; 2],
            treatments: vec![
                t(0.64, 1.00, "global"),
                t(0.71, 1.07, "initial"),
                t(0.75, 1.18, "during"),
            ],
            realized_csr: vec![vec![0.64, 0.71, 0.75]; 2],
            budget: 10.0,
        }
    }

    fn asg(inst: &ScenarioInstance, chosen: Vec<usize>) -> Assignment {
        let (objective, total_cost) = inst.evaluate(&chosen);
        Assignment { chosen, objective, total_cost }
    }

    #[test]
    fn rho_edge_cases_and_midpoint() {
        let inst = catalog3();
        assert_eq!(personalization_level(&inst, &asg(&inst, vec![0, 0])), 0.0);
        assert_eq!(personalization_level(&inst, &asg(&inst, vec![2, 2])), 1.0);
        let mid = personalization_level(&inst, &asg(&inst, vec![0, 1]));
        assert_abs_diff_eq!(mid, 0.07 / 0.11 / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mid, 0.318181818181, epsilon = 1e-9);
    }

    #[test]
    fn rho_constant_catalog_is_zero() {
        let mut inst = catalog3();
        for t in &mut inst.treatments {
            t.csr_mean = 0.5;
        }
        assert_eq!(personalization_level(&inst, &asg(&inst, vec![2, 2])), 0.0);
    }

    #[test]
    fn linear_fit_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_fit_constant_ys() {
        let fit = linear_fit(&[0.0, 1.0, 2.0], &[5.0, 5.0, 5.0]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[1], 0.0, epsilon = 1e-12);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn linear_fit_hand_normal_equations() {
        let fit = linear_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[0], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_fit_degenerate_x() {
        assert!(matches!(
            linear_fit(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]),
            Err(FitError::DegenerateInput(_))
        ));
    }

    #[test]
    fn poly_fit_recovers_known_surface() {
        let truth = [0.32, -1.95, -0.09, 4.07, 0.56];
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                let o = i as f64 * 0.01;
                let c = j as f64 * 0.025;
                let w = truth[0] + truth[1] * o + truth[2] * o * o + truth[3] * c + truth[4] * o * c;
                pts.push((o, c, w));
            }
        }
        let fit = poly_surface_fit(&pts).unwrap();
        for (a, b) in fit.coefficients.iter().zip(truth) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
        assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn poly_fit_constant_counts() {
        let pts: Vec<_> = (0..10)
            .map(|i| (i as f64 * 0.01, (i % 3) as f64 * 0.01, 2.5))
            .collect();
        let fit = poly_surface_fit(&pts).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.5, epsilon = 1e-9);
        for c in &fit.coefficients[1..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn poly_fit_rank_deficient() {
        // all points share one ΔOEB: the {1, dOEB} columns are collinear
        let pts: Vec<_> = (0..10).map(|i| (0.05, i as f64 * 0.01, i as f64)).collect();
        assert!(matches!(
            poly_surface_fit(&pts),
            Err(FitError::DegenerateInput(_))
        ));
    }

    #[test]
    fn bin_selections_examples() {
        let g = bin_selections(&[(0.05, 0.10)], 0.01);
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.cells[&(5, 10)], 1.0);

        let g = bin_selections(&[(0.051, 0.101), (0.052, 0.102), (0.031, 0.011)], 0.01);
        assert_abs_diff_eq!(g.cells[&(5, 10)], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.cells[&(3, 1)], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn bin_edge_goes_to_higher_bin() {
        // 0.0100000 sits exactly on the 0.01/0.02 boundary; floating noise
        // below 5e-10 must not change the outcome
        let g = bin_selections(&[(0.0100000, 0.009999999), (0.01 - 1e-12, 0.02 + 1e-12)], 0.01);
        assert!(g.cells.contains_key(&(1, 0)));
        assert!(g.cells.contains_key(&(1, 2)));
    }

    #[test]
    fn empty_selections_empty_grid() {
        assert!(bin_selections(&[], 0.01).cells.is_empty());
    }
}
