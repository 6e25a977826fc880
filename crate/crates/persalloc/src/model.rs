//! Domain types shared by every other module, plus instance validation.

use serde::{Deserialize, Serialize};

/// Index into the illness catalog of the owning scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IllnessId(pub usize);

/// One treatment option: which illness it applies to, its CSR distribution
/// and its normalized OEB cost (global non-invasive treatment = 1.00).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentConfig {
    pub illness: IllnessId,
    pub label: String,
    pub csr_mean: f64,
    pub csr_std: f64,
    pub oeb: f64,
}

/// A patient is characterized only by their illness; patients of one illness
/// are interchangeable within a repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patient {
    pub illness: IllnessId,
}

/// One solvable problem: patients, the treatment catalog, the per-repetition
/// realized CSR matrix and the total budget.
///
/// `realized_csr[i][j]` is the sampled CSR patient `i` would obtain from
/// treatment `j`; entries for treatments of the wrong illness are 0. All
/// patients sharing an illness share each treatment's realized value within a
/// repetition, but the matrix form keeps the door open for heterogeneous
/// patients without a type change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub patients: Vec<Patient>,
    pub treatments: Vec<TreatmentConfig>,
    pub realized_csr: Vec<Vec<f64>>,
    pub budget: f64,
}

/// A solved policy: one treatment index per patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub chosen: Vec<usize>,
    pub objective: f64,
    pub total_cost: f64,
}

impl ScenarioInstance {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    /// Treatment indices applicable to the given illness, in catalog order.
    pub fn applicable(&self, illness: IllnessId) -> impl Iterator<Item = usize> + '_ {
        self.treatments
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.illness == illness)
            .map(|(j, _)| j)
    }

    /// The illness's global (baseline) treatment: minimum oeb, ties broken by
    /// lowest index. Returns `None` for an illness with no treatments.
    pub fn global_treatment(&self, illness: IllnessId) -> Option<usize> {
        self.applicable(illness)
            .min_by(|&a, &b| {
                self.treatments[a]
                    .oeb
                    .partial_cmp(&self.treatments[b].oeb)
                    .unwrap()
                    .then(a.cmp(&b))
            })
    }

    /// Cost of assigning every patient their global treatment; `None` if some
    /// patient's illness has no treatment at all.
    pub fn cheapest_cover_cost(&self) -> Option<f64> {
        let mut total = 0.0;
        for p in &self.patients {
            let g = self.global_treatment(p.illness)?;
            total += self.treatments[g].oeb;
        }
        Some(total)
    }

    /// Recompute the objective and cost of a chosen vector.
    pub fn evaluate(&self, chosen: &[usize]) -> (f64, f64) {
        let mut obj = 0.0;
        let mut cost = 0.0;
        for (i, &j) in chosen.iter().enumerate() {
            obj += self.realized_csr[i][j];
            cost += self.treatments[j].oeb;
        }
        (obj, cost)
    }
}

/// Check every structural invariant; returns one description per violation,
/// ordered by invariant id and then by patient/treatment index. Never aborts.
pub fn validate_instance(inst: &ScenarioInstance) -> Vec<String> {
    let mut out = Vec::new();
    let n = inst.patients.len();
    let z = inst.treatments.len();

    // V1: treatment parameter ranges
    for (j, t) in inst.treatments.iter().enumerate() {
        if !(0.0..=1.0).contains(&t.csr_mean) {
            out.push(format!(
                "V1: treatment {j} ({}) csr_mean {} outside [0,1]",
                t.label, t.csr_mean
            ));
        }
        if t.csr_std < 0.0 {
            out.push(format!(
                "V1: treatment {j} ({}) csr_std {} negative",
                t.label, t.csr_std
            ));
        }
        if t.oeb <= 0.0 {
            out.push(format!(
                "V1: treatment {j} ({}) oeb {} not positive",
                t.label, t.oeb
            ));
        }
    }

    // V2: every patient's illness has at least one applicable treatment
    for (i, p) in inst.patients.iter().enumerate() {
        if inst.applicable(p.illness).next().is_none() {
            out.push(format!(
                "V2: patient {i} has illness {} with no treatments in the catalog",
                p.illness.0
            ));
        }
    }

    // V3: realized matrix dimensions
    if inst.realized_csr.len() != n {
        out.push(format!(
            "V3: realized_csr has {} rows, expected {n}",
            inst.realized_csr.len()
        ));
    }
    for (i, row) in inst.realized_csr.iter().enumerate() {
        if row.len() != z {
            out.push(format!(
                "V3: realized_csr row {i} has {} entries, expected {z}",
                row.len()
            ));
        }
    }

    // V4: realized values in range, zero for non-applicable treatments
    for (i, row) in inst.realized_csr.iter().enumerate().take(n) {
        let illness = inst.patients.get(i).map(|p| p.illness);
        for (j, &v) in row.iter().enumerate().take(z) {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!(
                    "V4: realized_csr[{i}][{j}] = {v} outside [0,1]"
                ));
            } else if v != 0.0 && illness.is_some_and(|ill| inst.treatments[j].illness != ill) {
                out.push(format!(
                    "V4: realized_csr[{i}][{j}] = {v} nonzero for treatment of wrong illness"
                ));
            }
        }
    }

    // V5: budget positive and at least the cheapest full cover
    if inst.budget <= 0.0 {
        out.push(format!("V5: budget {} not positive", inst.budget));
    } else if let Some(cover) = inst.cheapest_cover_cost() {
        if inst.budget + 1e-9 < cover {
            out.push(format!(
                "V5: budget {} below cheapest cover cost {cover}",
                inst.budget
            ));
        }
    }

    out
}

/// Check the assignment invariants against its originating instance.
pub fn validate_assignment(inst: &ScenarioInstance, asg: &Assignment) -> Vec<String> {
    let mut out = Vec::new();
    if asg.chosen.len() != inst.patients.len() {
        out.push(format!(
            "A1: chosen has {} entries, expected {}",
            asg.chosen.len(),
            inst.patients.len()
        ));
        return out;
    }
    for (i, &j) in asg.chosen.iter().enumerate() {
        if j >= inst.treatments.len() {
            out.push(format!("A1: patient {i} chose out-of-range treatment {j}"));
        } else if inst.treatments[j].illness != inst.patients[i].illness {
            out.push(format!(
                "A1: patient {i} chose treatment {j} of the wrong illness"
            ));
        }
    }
    if out.is_empty() {
        let (obj, cost) = inst.evaluate(&asg.chosen);
        if (obj - asg.objective).abs() > 1e-9 {
            out.push(format!(
                "A2: stored objective {} differs from recomputed {obj}",
                asg.objective
            ));
        }
        if (cost - asg.total_cost).abs() > 1e-9 {
            out.push(format!(
                "A2: stored total_cost {} differs from recomputed {cost}",
                asg.total_cost
            ));
        }
        if cost > inst.budget + 1e-9 {
            out.push(format!(
                "A3: total cost {cost} exceeds budget {}",
                inst.budget
            ));
        }
    }
    out
}
