//! Scenario construction: the built-in bladder-cancer catalog, population and
//! CSR sampling, budget computation, and the abstract catalog generator used
//! by the heatmap/sensitivity studies.

use crate::model::{IllnessId, Patient, ScenarioInstance, TreatmentConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const NON_INVASIVE: IllnessId = IllnessId(0);
pub const INVASIVE: IllnessId = IllnessId(1);

pub fn bc_illness_names() -> Vec<String> {
    vec!["non-invasive".into(), "invasive".into()]
}

/// The five bladder-cancer treatment configurations (CSR mean ± std, OEB cost
/// normalized so the global non-invasive protocol is 1.00).
pub fn bc_catalog() -> Vec<TreatmentConfig> {
    let t = |illness, label: &str, csr_mean, csr_std, oeb| TreatmentConfig {
        illness,
        label: label.into(),
        csr_mean,
        csr_std,
        oeb,
    };
    vec![
        t(NON_INVASIVE, "ni-global", 0.64, 0.08, 1.00),
        t(NON_INVASIVE, "ni-initial", 0.71, 0.07, 1.07),
        t(NON_INVASIVE, "ni-during", 0.75, 0.04, 1.18),
        t(INVASIVE, "iv-global", 0.32, 0.03, 1.32),
        t(INVASIVE, "iv-initial", 0.36, 0.03, 1.38),
    ]
}

/// One sampled population: n1 non-invasive and n2 invasive patients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationDraw {
    pub n1: u32,
    pub n2: u32,
    pub seed: u64,
}

/// Parameters for one illness's generated abstract catalog: a fixed global
/// baseline plus `k` personalized options with uplifts drawn uniformly from
/// the given relative ranges (fractions of the global values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractCatalogSpec {
    pub k: u32,
    pub oeb_uplift_lo: f64,
    pub oeb_uplift_hi: f64,
    pub csr_uplift_lo: f64,
    pub csr_uplift_hi: f64,
}

pub const ABSTRACT_GLOBAL_CSR: f64 = 0.5;
pub const ABSTRACT_GLOBAL_OEB: f64 = 1.0;

impl AbstractCatalogSpec {
    /// Paper defaults: OEB up to 25% above the global, CSR up to 20% above.
    pub fn with_defaults(k: u32) -> Self {
        AbstractCatalogSpec {
            k,
            oeb_uplift_lo: 0.0,
            oeb_uplift_hi: 0.25,
            csr_uplift_lo: 0.0,
            csr_uplift_hi: 0.20,
        }
    }
}

/// 64-bit mix (splitmix64 finalizer) used to derive independent
/// per-repetition seeds from a root seed.
pub fn mix_seed(root_seed: u64, index: u64) -> u64 {
    let mut z = root_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw a population: n1 uniform on [20, 200], n2 uniform on
/// [round(0.06 n1), round(0.1 n1)] with a minimum of one invasive patient.
pub fn sample_population(rng_seed: u64) -> PopulationDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n1: u32 = rng.gen_range(20..=200);
    let lo = ((0.06 * n1 as f64).round() as u32).max(1);
    let hi = ((0.10 * n1 as f64).round() as u32).max(lo);
    let n2 = rng.gen_range(lo..=hi);
    PopulationDraw {
        n1,
        n2,
        seed: rng_seed,
    }
}

/// b = (1 + f) (n1 b1 + n2 b2): exact global-coverage cost plus the overhead
/// fraction f reserved for personalization.
pub fn compute_budget(n1: u32, n2: u32, f: f64, b1: f64, b2: f64) -> f64 {
    (1.0 + f) * (n1 as f64 * b1 + n2 as f64 * b2)
}

/// Sample one truncated-normal CSR value in [0, 1] by rejection.
fn sample_csr(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean.clamp(0.0, 1.0);
    }
    let normal = Normal::new(mean, std).expect("csr_std must be finite and non-negative");
    loop {
        let v = normal.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    }
}

/// Build an instance from a catalog and per-illness patient counts.
///
/// Realized CSRs are drawn once per treatment (shared by all patients of the
/// illness) and then reordered within each illness so their ranking matches
/// the catalog's mean-CSR ranking: a more personalized protocol never
/// realizes below a less personalized one within a repetition. Budget is
/// `(1+f) Σ counts[i] · global_oeb(i)`.
pub fn realize_instance(
    catalog: &[TreatmentConfig],
    counts: &[u32],
    f: f64,
    rng_seed: u64,
) -> ScenarioInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let z = catalog.len();

    // one draw per treatment, in catalog order
    let mut realized: Vec<f64> = catalog
        .iter()
        .map(|t| sample_csr(&mut rng, t.csr_mean, t.csr_std))
        .collect();

    // order-preserving reassignment within each illness
    let n_illnesses = counts.len();
    for ill in 0..n_illnesses {
        let mut idx: Vec<usize> = (0..z)
            .filter(|&j| catalog[j].illness == IllnessId(ill))
            .collect();
        idx.sort_by(|&a, &b| {
            catalog[a]
                .csr_mean
                .partial_cmp(&catalog[b].csr_mean)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut vals: Vec<f64> = idx.iter().map(|&j| realized[j]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (&j, v) in idx.iter().zip(vals) {
            realized[j] = v;
        }
    }

    let mut patients = Vec::new();
    let mut budget_base = 0.0;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ill, &count) in counts.iter().enumerate() {
        let illness = IllnessId(ill);
        let mut row = vec![0.0; z];
        for (j, t) in catalog.iter().enumerate() {
            if t.illness == illness {
                row[j] = realized[j];
            }
        }
        let global_oeb = catalog
            .iter()
            .filter(|t| t.illness == illness)
            .map(|t| t.oeb)
            .fold(f64::INFINITY, f64::min);
        for _ in 0..count {
            patients.push(Patient { illness });
            rows.push(row.clone());
        }
        if count > 0 {
            budget_base += count as f64 * global_oeb;
        }
    }

    ScenarioInstance {
        patients,
        treatments: catalog.to_vec(),
        realized_csr: rows,
        budget: (1.0 + f) * budget_base,
    }
}

/// The bladder-cancer instance for one Monte-Carlo repetition.
pub fn realize_bc_instance(draw: &PopulationDraw, f: f64, rng_seed: u64) -> ScenarioInstance {
    realize_instance(&bc_catalog(), &[draw.n1, draw.n2], f, rng_seed)
}

/// Round to 3 decimals: generated uplifts are quoted like the hand-written
/// catalogs so the default cost resolution represents them exactly.
fn quantize3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Draw `k` distinct uplift fractions from [lo, hi], quantized to 3 decimals
/// with a 0.001 floor, returned ascending.
fn draw_uplifts(rng: &mut ChaCha8Rng, k: u32, lo: f64, hi: f64) -> Vec<f64> {
    let lo = lo.max(0.0);
    let hi = hi.max(lo);
    let mut out: Vec<f64> = Vec::with_capacity(k as usize);
    for _ in 0..k {
        let mut tries = 0;
        let mut u = loop {
            let raw = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let q = quantize3(raw).max(0.001);
            tries += 1;
            if !out.contains(&q) || tries > 1000 {
                break q;
            }
        };
        // deterministic nudge if the range is too narrow for k distinct values
        while out.contains(&u) {
            u = quantize3(u + 0.001);
        }
        out.push(u);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// Generate one illness's abstract catalog: a fixed global baseline
/// (csr 0.5, oeb 1.0) plus `k` personalized options. OEB and CSR uplifts are
/// drawn independently, sorted ascending, and zipped, so "more personalized"
/// means strictly higher OEB *and* strictly higher mean CSR.
pub fn generate_abstract_with_rng(
    spec: &AbstractCatalogSpec,
    illness: IllnessId,
    rng: &mut ChaCha8Rng,
) -> Vec<TreatmentConfig> {
    let oeb_up = draw_uplifts(rng, spec.k, spec.oeb_uplift_lo, spec.oeb_uplift_hi);
    let csr_up = draw_uplifts(rng, spec.k, spec.csr_uplift_lo, spec.csr_uplift_hi);
    let mut out = vec![TreatmentConfig {
        illness,
        label: format!("abstract-{}-global", illness.0),
        csr_mean: ABSTRACT_GLOBAL_CSR,
        csr_std: 0.0,
        oeb: ABSTRACT_GLOBAL_OEB,
    }];
    for (i, (uo, uc)) in oeb_up.into_iter().zip(csr_up).enumerate() {
        out.push(TreatmentConfig {
            illness,
            label: format!("abstract-{}-p{}", illness.0, i + 1),
            csr_mean: (ABSTRACT_GLOBAL_CSR * (1.0 + uc)).min(1.0),
            csr_std: 0.0,
            oeb: ABSTRACT_GLOBAL_OEB * (1.0 + uo),
        });
    }
    out
}

/// Seeded wrapper around [`generate_abstract_with_rng`].
pub fn generate_abstract_treatments(
    spec: &AbstractCatalogSpec,
    illness: IllnessId,
    rng_seed: u64,
) -> Vec<TreatmentConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    generate_abstract_with_rng(spec, illness, &mut rng)
}
