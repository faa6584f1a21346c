//! College-admissions processes: gender, test score and department, with an
//! optional unreported referral that favours men.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    bernoulli, binary_code, binary_completions, binary_proba, standard_normal_expectation,
    GenerativeProcess, ProcessSpec, SampledRow, WeightedPoints,
};
use crate::coalition::Coalition;
use crate::data::{Column, Dataset, Schema};
use crate::error::{AsvError, Result};
use crate::rng::StreamRng;
use crate::stats::sigmoid;

pub const GENDER: usize = 0;
pub const SCORE: usize = 1;
pub const DEPARTMENT: usize = 2;

/// `P(department = 1 | gender)`, indexed by gender (0 = women, 1 = men).
const P_DEPARTMENT: [f64; 2] = [0.8, 0.2];
/// `P(referral = 1 | gender)`.
const P_REFERRAL: [f64; 2] = [1.0 / 3.0, 2.0 / 3.0];

#[derive(Debug, Clone)]
pub struct Admissions {
    unfair: bool,
    schema: Arc<Schema>,
}

impl Admissions {
    fn with(unfair: bool) -> Self {
        let schema = Schema::with_label(
            vec![
                Column::discrete("gender", 2),
                Column::continuous("score"),
                Column::discrete("department", 2),
            ],
            "admitted",
            2,
        )
        .expect("static schema");
        Self {
            unfair,
            schema: Arc::new(schema),
        }
    }

    pub fn fair() -> Self {
        Self::with(false)
    }

    /// Admission also depends on a referral that is not recorded.
    pub fn unfair() -> Self {
        Self::with(true)
    }

    pub fn is_unfair(&self) -> bool {
        self.unfair
    }

    pub fn p_department(gender: usize) -> f64 {
        P_DEPARTMENT[gender]
    }

    pub fn p_referral(gender: usize) -> f64 {
        P_REFERRAL[gender]
    }

    /// `P(Y = 1 | gender, score, department)`.
    fn admit_probability(&self, gender: usize, score: f64, department: f64) -> f64 {
        if self.unfair {
            let q = P_REFERRAL[gender];
            (1.0 - q) * sigmoid(score + 2.0 * department - 2.0) + q * sigmoid(score + 2.0 * department)
        } else {
            sigmoid(score + 2.0 * department - 1.0)
        }
    }

    fn joint_discrete(g: f64, d: f64) -> f64 {
        let pd = P_DEPARTMENT[g as usize];
        0.5 * if d == 1.0 { pd } else { 1.0 - pd }
    }
}

impl GenerativeProcess for Admissions {
    fn spec(&self) -> ProcessSpec {
        if self.unfair {
            ProcessSpec::UnfairAdmissions
        } else {
            ProcessSpec::FairAdmissions
        }
    }

    fn schema(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    fn hidden_names(&self) -> Vec<String> {
        if self.unfair {
            vec!["referral".into()]
        } else {
            Vec::new()
        }
    }

    fn sample(&self, rng: &mut StreamRng) -> SampledRow {
        let g = bernoulli(rng, 0.5);
        let score: f64 = rng.sample(StandardNormal);
        let d = bernoulli(rng, P_DEPARTMENT[g as usize]);
        let (logit, hidden) = if self.unfair {
            let r = bernoulli(rng, P_REFERRAL[g as usize]);
            (score + 2.0 * d + 2.0 * r - 2.0, vec![r])
        } else {
            (score + 2.0 * d - 1.0, Vec::new())
        };
        let label = bernoulli(rng, sigmoid(logit)) as usize;
        SampledRow {
            features: vec![g, score, d],
            hidden,
            label,
        }
    }

    fn label_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let g = binary_code(x, GENDER)?;
        let d = binary_code(x, DEPARTMENT)?;
        Ok(binary_proba(self.admit_probability(g, x[SCORE], d as f64)))
    }

    fn complete(&self, x: &[f64], s: Coalition, rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = x.to_vec();
        match (s.contains(GENDER), s.contains(DEPARTMENT)) {
            (true, true) => {}
            (true, false) => {
                out[DEPARTMENT] = bernoulli(rng, P_DEPARTMENT[binary_code(x, GENDER)?]);
            }
            (false, true) => {
                let d = x[DEPARTMENT];
                binary_code(x, DEPARTMENT)?;
                let w1 = Self::joint_discrete(1.0, d);
                let w0 = Self::joint_discrete(0.0, d);
                out[GENDER] = bernoulli(rng, w1 / (w0 + w1));
            }
            (false, false) => {
                let g = bernoulli(rng, 0.5);
                out[GENDER] = g;
                out[DEPARTMENT] = bernoulli(rng, P_DEPARTMENT[g as usize]);
            }
        }
        if !s.contains(SCORE) {
            out[SCORE] = rng.sample(StandardNormal);
        }
        Ok(out)
    }

    fn completion_support(&self, x: &[f64], s: Coalition) -> Result<Option<WeightedPoints>> {
        self.check_point(x)?;
        if !s.contains(SCORE) {
            return Ok(None);
        }
        Ok(Some(binary_completions(x, s, &[GENDER, DEPARTMENT], |p| {
            Self::joint_discrete(p[GENDER], p[DEPARTMENT])
        })))
    }

    fn bayes_accuracy(&self) -> f64 {
        let mut acc = 0.0;
        for g in 0..2 {
            for d in [0.0, 1.0] {
                let w = Self::joint_discrete(g as f64, d);
                acc += w * standard_normal_expectation(|z| {
                    let p = self.admit_probability(g, z, d);
                    p.max(1.0 - p)
                });
            }
        }
        acc
    }
}

/// Admission statistics by gender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionsSummary {
    pub rows: usize,
    pub share_men: f64,
    pub admission_rate: f64,
    pub admission_rate_women: f64,
    pub admission_rate_men: f64,
    /// Fraction of admitted applicants who are women.
    pub admitted_share_women: f64,
    pub admitted_share_men: f64,
    pub p_department1_women: f64,
    pub p_department1_men: f64,
}

pub fn admissions_summary(data: &Dataset) -> Result<AdmissionsSummary> {
    if data.n_features() != 3 {
        return Err(AsvError::Schema(format!(
            "admissions data has 3 features, got {}",
            data.n_features()
        )));
    }
    let mut count = [0usize; 2];
    let mut admitted = [0usize; 2];
    let mut dept1 = [0usize; 2];
    for (r, row) in data.rows().enumerate() {
        let g = binary_code(row, GENDER)?;
        count[g] += 1;
        admitted[g] += data.label(r);
        dept1[g] += binary_code(row, DEPARTMENT)?;
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    let total_admitted = admitted[0] + admitted[1];
    Ok(AdmissionsSummary {
        rows: data.len(),
        share_men: ratio(count[1], data.len()),
        admission_rate: ratio(total_admitted, data.len()),
        admission_rate_women: ratio(admitted[0], count[0]),
        admission_rate_men: ratio(admitted[1], count[1]),
        admitted_share_women: ratio(admitted[0], total_admitted),
        admitted_share_men: ratio(admitted[1], total_admitted),
        p_department1_women: ratio(dept1[0], count[0]),
        p_department1_men: ratio(dept1[1], count[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn label_rule_values() {
        let fair = Admissions::fair();
        assert_eq!(fair.label_proba(&[0.0, 1.0, 0.0]).unwrap()[1], 0.5);
        let p = fair.label_proba(&[1.0, 0.0, 1.0]).unwrap()[1];
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-12);
        let unfair = Admissions::unfair();
        let p = unfair.label_proba(&[1.0, 0.5, 1.0]).unwrap()[1];
        let expected = sigmoid(0.5) / 3.0 + 2.0 * sigmoid(2.5) / 3.0;
        assert!((p - expected).abs() < 1e-15);
        assert!(fair.label_proba(&[2.0, 0.0, 1.0]).is_err());
        assert!(fair.label_proba(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn support_with_known_score_sums_to_one() {
        let p = Admissions::fair();
        let x = [1.0, 0.3, 0.0];
        for bits in 0..8u64 {
            let s = Coalition::from_bits(3, bits).unwrap();
            match p.completion_support(&x, s).unwrap() {
                Some(sup) => {
                    assert!(s.contains(SCORE));
                    let total: f64 = sup.iter().map(|(w, _)| w).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                    for (_, pt) in &sup {
                        for j in s.iter() {
                            assert_eq!(pt[j], x[j]);
                        }
                    }
                }
                None => assert!(!s.contains(SCORE)),
            }
        }
        // Department known: posterior of gender.
        let s = Coalition::from_indices(3, [SCORE, DEPARTMENT]).unwrap();
        let sup = p.completion_support(&[0.0, 0.0, 1.0], s).unwrap().unwrap();
        let p_men: f64 = sup.iter().filter(|(_, pt)| pt[GENDER] == 1.0).map(|(w, _)| w).sum();
        assert!((p_men - 0.2).abs() < 1e-12);
    }

    #[test]
    fn completion_keeps_coalition() {
        let p = Admissions::unfair();
        let x = [0.0, -1.2, 1.0];
        let mut rng = stream(3, 0);
        let s = Coalition::from_indices(3, [GENDER]).unwrap();
        for _ in 0..20 {
            let c = p.complete(&x, s, &mut rng).unwrap();
            assert_eq!(c[GENDER], 0.0);
        }
    }

    #[test]
    fn bayes_accuracy_is_a_probability_above_half() {
        for p in [Admissions::fair(), Admissions::unfair()] {
            let a = p.bayes_accuracy();
            assert!(a > 0.5 && a < 1.0, "{a}");
        }
    }
}
