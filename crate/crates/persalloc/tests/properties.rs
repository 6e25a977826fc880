//! Property-based tests: solver equivalence against the exhaustive oracle,
//! feasibility/monotonicity/scaling invariants, and metric-level properties.

use persalloc::metrics::{bin_selections, linear_fit, personalization_level, poly_surface_fit};
use persalloc::model::{
    validate_assignment, validate_instance, Assignment, IllnessId, Patient, ScenarioInstance,
    TreatmentConfig,
};
use persalloc::solver::{solve, SolverKind};
use proptest::prelude::*;

const KINDS: [SolverKind; 3] = [
    SolverKind::Exhaustive,
    SolverKind::DynamicProgram,
    SolverKind::BranchAndBound,
];

/// Random valid instance: 1–2 illnesses, ≤5 treatments with 2-decimal costs,
/// ≤6 patients, budget = cheapest cover + random slack.
fn arb_instance() -> impl Strategy<Value = ScenarioInstance> {
    (1usize..=2)
        .prop_flat_map(|n_ill| {
            let treatments = proptest::collection::vec(
                (0..n_ill, 1u32..=300, 0u32..=100),
                n_ill..=5,
            );
            let patients = proptest::collection::vec(0..n_ill, 1..=6);
            let realized = proptest::collection::vec(0u32..=100, 12); // per (illness, treatment)
            let slack = 0u32..=400;
            (Just(n_ill), treatments, patients, realized, slack)
        })
        .prop_map(|(n_ill, mut tspec, pspec, realized, slack)| {
            // guarantee every illness has at least one treatment
            for ill in 0..n_ill {
                tspec[ill].0 = ill;
            }
            let treatments: Vec<TreatmentConfig> = tspec
                .iter()
                .enumerate()
                .map(|(j, &(ill, oeb_cents, csr_pct))| TreatmentConfig {
                    illness: IllnessId(ill),
                    label: format!("t{j}"),
                    csr_mean: csr_pct as f64 / 100.0,
                    csr_std: 0.0,
                    oeb: oeb_cents as f64 / 100.0,
                })
                .collect();
            let z = treatments.len();
            let patients: Vec<Patient> = pspec
                .iter()
                .map(|&ill| Patient { illness: IllnessId(ill) })
                .collect();
            // shared realized value per (illness, treatment)
            let rows: Vec<Vec<f64>> = patients
                .iter()
                .map(|p| {
                    (0..z)
                        .map(|j| {
                            if treatments[j].illness == p.illness {
                                realized[(p.illness.0 * 6 + j) % realized.len()] as f64 / 100.0
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let mut inst = ScenarioInstance {
                patients,
                treatments,
                realized_csr: rows,
                budget: 1.0,
            };
            inst.budget = inst.cheapest_cover_cost().unwrap() + slack as f64 / 100.0;
            inst
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solvers_agree_with_oracle(inst in arb_instance()) {
        prop_assert!(validate_instance(&inst).is_empty());
        let oracle = solve(&inst, SolverKind::Exhaustive, 1e-4).unwrap();
        for kind in KINDS {
            let r = solve(&inst, kind, 1e-4).unwrap();
            prop_assert!(
                (r.assignment.objective - oracle.assignment.objective).abs() <= 1e-9,
                "{kind:?} objective {} vs oracle {}",
                r.assignment.objective,
                oracle.assignment.objective
            );
            prop_assert!(validate_assignment(&inst, &r.assignment).is_empty());
            if let Some(bound) = r.lp_bound {
                prop_assert!(bound >= r.assignment.objective - 1e-9);
            }
        }
    }

    #[test]
    fn objective_monotone_in_budget(inst in arb_instance(), extra in 0u32..=200) {
        let base = solve(&inst, SolverKind::BranchAndBound, 1e-4).unwrap();
        let mut richer = inst.clone();
        richer.budget += extra as f64 / 100.0;
        let more = solve(&richer, SolverKind::BranchAndBound, 1e-4).unwrap();
        prop_assert!(more.assignment.objective >= base.assignment.objective - 1e-12);
    }

    #[test]
    fn rounding_never_exceeds_true_budget(inst in arb_instance(), res_idx in 0usize..3) {
        let res = [1e-4, 1e-3, 0.05][res_idx];
        for kind in KINDS {
            if let Ok(r) = solve(&inst, kind, res) {
                prop_assert!(r.assignment.total_cost <= inst.budget + 1e-9);
            }
        }
    }

    #[test]
    fn argmax_invariant_under_value_scaling(inst in arb_instance(), pow in -2i32..=2) {
        // powers of two scale exactly, so every value comparison is preserved
        let lambda = 2.0f64.powi(pow);
        let mut scaled = inst.clone();
        for row in &mut scaled.realized_csr {
            for v in row.iter_mut() {
                *v *= lambda;
            }
        }
        for kind in [SolverKind::Exhaustive, SolverKind::DynamicProgram] {
            let a = solve(&inst, kind, 1e-4).unwrap();
            let b = solve(&scaled, kind, 1e-4).unwrap();
            prop_assert_eq!(&a.assignment.chosen, &b.assignment.chosen, "{:?}", kind);
        }
        // B&B prunes with an absolute epsilon, so compare objectives only
        let a = solve(&inst, SolverKind::BranchAndBound, 1e-4).unwrap();
        let b = solve(&scaled, SolverKind::BranchAndBound, 1e-4).unwrap();
        prop_assert!((b.assignment.objective - lambda * a.assignment.objective).abs() <= 1e-9 * lambda.max(1.0));
    }

    #[test]
    fn rho_in_unit_interval_and_affine_invariant(
        inst in arb_instance(),
        pick in 0u32..1000,
        alpha in 0.2f64..3.0,
        beta in -0.2f64..0.2,
    ) {
        // arbitrary feasible-by-illness assignment (ignores budget: ρ doesn't care)
        let chosen: Vec<usize> = inst
            .patients
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let opts: Vec<usize> = inst.applicable(p.illness).collect();
                opts[(pick as usize + i) % opts.len()]
            })
            .collect();
        let (objective, total_cost) = inst.evaluate(&chosen);
        let asg = Assignment { chosen, objective, total_cost };
        let rho = personalization_level(&inst, &asg);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&rho));

        // positive affine transform of one illness's mean CSRs cancels in Eq. 2
        let mut transformed = inst.clone();
        for t in &mut transformed.treatments {
            if t.illness == IllnessId(0) {
                t.csr_mean = alpha * t.csr_mean + beta;
            }
        }
        let rho2 = personalization_level(&transformed, &asg);
        prop_assert!((rho - rho2).abs() <= 1e-9, "{rho} vs {rho2}");
    }

    #[test]
    fn heatmap_mass_is_one(sel in proptest::collection::vec((-0.05f64..0.3, -0.05f64..0.3), 1..200)) {
        let grid = bin_selections(&sel, 0.01);
        let total: f64 = grid.cells.values().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn linear_fit_residuals_orthogonal(
        xs in proptest::collection::vec(-10.0f64..10.0, 3..40),
        noise in proptest::collection::vec(-1.0f64..1.0, 40),
    ) {
        let distinct = xs.iter().any(|&x| (x - xs[0]).abs() > 1e-6);
        prop_assume!(distinct);
        let ys: Vec<f64> = xs
            .iter()
            .zip(&noise)
            .map(|(&x, &e)| 0.7 * x - 0.2 + e)
            .collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        let (b0, b1) = (fit.coefficients[0], fit.coefficients[1]);
        let r: Vec<f64> = xs.iter().zip(&ys).map(|(&x, &y)| y - (b0 + b1 * x)).collect();
        let dot1: f64 = r.iter().sum();
        let dotx: f64 = r.iter().zip(&xs).map(|(&ri, &xi)| ri * xi).sum();
        let scale = ys.iter().map(|y| y.abs()).fold(1.0, f64::max) * xs.len() as f64;
        prop_assert!(dot1.abs() <= 1e-9 * scale * 10.0, "residual·1 = {dot1}");
        prop_assert!(dotx.abs() <= 1e-8 * scale * 10.0, "residual·x = {dotx}");
    }

    #[test]
    fn poly_fit_residual_norm_stable_under_on_surface_point(
        // spread the design over the unit square: clustered points make the
        // normal system ill-conditioned and the SVD cutoff bites
        seeds in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, -0.2f64..0.2), 8..30),
        probe in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let pts: Vec<(f64, f64, f64)> = seeds
            .iter()
            .map(|&(o, c, e)| (o, c, 0.3 - 1.5 * o + 3.0 * c + e))
            .collect();
        let Ok(fit) = poly_surface_fit(&pts) else { return Ok(()) };
        let b = &fit.coefficients;
        let (o, c) = probe;
        let on_surface = b[0] + b[1] * o + b[2] * o * o + b[3] * c + b[4] * o * c;
        let mut pts2 = pts.clone();
        pts2.push((o, c, on_surface));
        let Ok(fit2) = poly_surface_fit(&pts2) else { return Ok(()) };
        // the old coefficients fit the new point exactly, so the refit's
        // residual norm cannot exceed the old one
        prop_assert!(fit2.residual_norm <= fit.residual_norm + 1e-9,
            "adding an on-surface point raised the residual norm: {} -> {}",
            fit.residual_norm, fit2.residual_norm);
    }
}
