//! Unresolved-discrimination audit: resolving variables precede sensitive
//! attributes, so a sensitive attribute is credited only with what it adds
//! once the resolving variables are known.

use serde::Serialize;

use crate::attribution::{global_asv, GlobalAttribution, GlobalConfig};
use crate::data::Dataset;
use crate::error::{AsvError, Result};
use crate::ordering::OrderingSpec;
use crate::stats::Estimate;
use crate::value::Explainer;

/// Significance threshold in standard errors.
pub const SIGNIFICANCE_Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitiveVerdict {
    pub feature: String,
    pub index: usize,
    pub asv: Estimate,
    /// `asv / stderr`; absent when both are zero.
    pub z: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub resolving: Vec<String>,
    pub sensitive: Vec<String>,
    pub attribution: GlobalAttribution,
    pub sensitive_attributes: Vec<SensitiveVerdict>,
    pub verdict: String,
}

pub const VERDICT_FAIR: &str = "no unresolved discrimination detected";

pub fn run_fairness_audit(
    explainer: &Explainer<'_>,
    data: &Dataset,
    resolving: &[usize],
    sensitive: &[usize],
    config: &GlobalConfig,
) -> Result<FairnessReport> {
    if sensitive.is_empty() {
        return Err(AsvError::InvalidArgument("no sensitive attribute given".into()));
    }
    if let Some(i) = resolving.iter().find(|i| sensitive.contains(i)) {
        return Err(AsvError::InvalidSpec(format!(
            "feature {i} is both resolving and sensitive"
        )));
    }
    let spec = OrderingSpec::precedence(data.n_features(), resolving, sensitive)?;
    let attribution = global_asv(explainer, data, &spec, config)?;
    let names = data.schema().feature_names();
    let verdicts: Vec<SensitiveVerdict> = sensitive
        .iter()
        .map(|&i| {
            let asv = attribution.values[i];
            let z = if asv.stderr > 0.0 {
                Some(asv.value / asv.stderr)
            } else if asv.value == 0.0 {
                None
            } else {
                Some(asv.value.signum() * f64::MAX)
            };
            SensitiveVerdict {
                feature: names[i].clone(),
                index: i,
                asv,
                z,
                flagged: asv.value > 1e-12 && asv.value > SIGNIFICANCE_Z * asv.stderr,
            }
        })
        .collect();
    let flagged: Vec<&str> = verdicts.iter().filter(|v| v.flagged).map(|v| v.feature.as_str()).collect();
    let verdict = if flagged.is_empty() {
        VERDICT_FAIR.to_string()
    } else {
        format!("unresolved discrimination detected for {}", flagged.join(", "))
    };
    Ok(FairnessReport {
        resolving: resolving.iter().map(|&i| names[i].clone()).collect(),
        sensitive: sensitive.iter().map(|&i| names[i].clone()).collect(),
        attribution,
        sensitive_attributes: verdicts,
        verdict,
    })
}
