// SPDX-License-Identifier: MIT OR Apache-2.0

//! Machine-readable run reports.
//!
//! Every number in a report is wrapped as `{"value": v, "unit": u}`. Undefined
//! ratios have `"value": null`. Only `schema_version` is a bare integer.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::causal::{ForcedChoiceResult, Theorem1Report};
use crate::counterfactual::{Decomposition, MetricsReport, RatioKind};
use crate::distribution::TableMode;
use crate::error::{Error, Result};
use crate::geometry::FitStats;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Bits,
    Ratio,
    Fraction,
    Probability,
    Count,
    Degrees,
    Milliseconds,
    Seed,
    Dimensionless,
}

/// `{"value": v, "unit": u}`.
pub fn tagged(value: impl Serialize, unit: Unit) -> Value {
    json!({ "value": value, "unit": unit })
}

fn bits(v: f64) -> Value {
    tagged(v, Unit::Bits)
}

/// A complete report. Sections are optional and keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: Value,
    pub seeds: Value,
    pub mode: String,
    pub sections: Map<String, Value>,
    pub notes: Vec<String>,
    pub timing: Value,
}

impl RunReport {
    pub fn new(command: &str, mode: &str, config: Value, seeds: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config,
            seeds,
            mode: mode.to_string(),
            sections: Map::new(),
            notes: Vec::new(),
            timing: json!({}),
        }
    }

    pub fn section(&mut self, name: &str, value: Value) {
        self.sections.insert(name.to_string(), value);
    }

    pub fn set_elapsed_ms(&mut self, ms: f64) {
        self.timing = json!({ "elapsed": tagged(ms, Unit::Milliseconds) });
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// The report with the timing block cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.timing = json!({});
        r
    }
}

/// Fails if any number in `v` is not the `value` of a unit-tagged object.
pub fn check_units(v: &Value) -> Result<()> {
    fn walk(v: &Value, path: &str) -> Result<()> {
        match v {
            Value::Number(_) => Err(Error::domain(format!("untagged number at {path}"))),
            Value::Array(items) => items.iter().enumerate().try_for_each(|(i, x)| walk(x, &format!("{path}[{i}]"))),
            Value::Object(map) => {
                if map.contains_key("unit") && map.contains_key("value") {
                    return match &map["value"] {
                        Value::Number(_) | Value::Null => Ok(()),
                        Value::Array(xs) if xs.iter().all(Value::is_number) => Ok(()),
                        _ => Err(Error::domain(format!("tagged value at {path} is not numeric"))),
                    };
                }
                for (k, x) in map {
                    if path.is_empty() && k == "schema_version" {
                        continue;
                    }
                    walk(x, &format!("{path}.{k}"))?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
    walk(v, "")
}

pub fn table_mode_value(mode: &TableMode) -> Value {
    match mode {
        TableMode::Exact => json!({ "kind": "exact" }),
        TableMode::MonteCarlo { n_strings, seed, top_p } => json!({
            "kind": "monte_carlo",
            "n_strings": tagged(n_strings, Unit::Count),
            "seed": tagged(seed, Unit::Seed),
            "top_p": tagged(top_p, Unit::Probability),
        }),
        TableMode::Records { n_records } => json!({
            "kind": "records",
            "n_records": tagged(n_records, Unit::Count),
        }),
    }
}

pub fn metrics_section(m: &MetricsReport) -> Value {
    let t = &m.terms;
    let mut ratios = Map::new();
    for kind in RatioKind::ALL {
        ratios.insert(kind.name().to_string(), tagged(m.ratios.value(kind), Unit::Ratio));
    }
    let s = &m.tables;
    json!({
        "mi": {
            "mi_c_h": bits(t.mi_c_h),
            "mi_c_hperp_correlational": bits(t.mi_c_hperp),
            "mi_x_h_given_c": bits(t.mi_x_h_given_c),
            "mi_q_c_h": bits(t.mi_q_c_h),
            "mi_q_c_hperp": bits(t.mi_q_c_hperp),
            "mi_q_c_hpar": bits(t.mi_q_c_hpar),
            "mi_q_x_h_given_c": bits(t.mi_q_x_h_given_c),
            "mi_q_x_hpar_given_c": bits(t.mi_q_x_hpar_given_c),
            "mi_q_x_hperp_given_c": bits(t.mi_q_x_hperp_given_c),
        },
        "ratios": ratios,
        "epsilon_flags": {
            "epsilon": bits(m.flags.epsilon),
            "is_eraser": m.flags.eraser,
            "is_encapsulator": m.flags.encapsulator,
            "is_contained": m.flags.contained,
            "is_stabilizer": m.flags.stabilizer,
        },
        "decomposition": decomposition_section(&m.decomposition),
        "tables": {
            "mode": table_mode_value(&s.mode),
            "p_cells": tagged(s.p_cells, Unit::Count),
            "distinct_reps": tagged(s.distinct_reps, Unit::Count),
            "distinct_par": tagged(s.distinct_par, Unit::Count),
            "distinct_perp": tagged(s.distinct_perp, Unit::Count),
            "recombined_pairs": tagged(s.recombined_pairs, Unit::Count),
            "q_cells": tagged(s.q_cells, Unit::Count),
            "excluded_empty_string_mass": tagged(s.excluded_mass, Unit::Probability),
            "dropped_pair_mass": tagged(s.dropped_pair_mass, Unit::Probability),
            "p_na_mass_dropped": tagged(s.p_na_mass_dropped, Unit::Probability),
            "q_na_mass_dropped": tagged(s.q_na_mass_dropped, Unit::Probability),
        },
    })
}

pub fn correlational_section(mi_c_h: f64, mi_c_hperp: f64, mi_x_h_given_c: f64) -> Value {
    json!({
        "mi_c_h": bits(mi_c_h),
        "mi_c_hperp_correlational": bits(mi_c_hperp),
        "mi_x_h_given_c": bits(mi_x_h_given_c),
        "correlational_erasure": tagged(
            (mi_c_h > crate::counterfactual::ZERO_DENOMINATOR).then(|| 1.0 - mi_c_hperp / mi_c_h),
            Unit::Ratio
        ),
    })
}

pub fn decomposition_section(d: &Decomposition) -> Value {
    json!({
        "lhs_mi_q_c_h": bits(d.mi_q_c_h),
        "rhs_mi_q_c_hperp": bits(d.mi_q_c_hperp),
        "rhs_mi_q_c_hpar": bits(d.mi_q_c_hpar),
        "gap": bits(d.gap),
        "tolerance": bits(d.tolerance),
        "pass": d.holds,
    })
}

pub fn forced_choice_section(r: &ForcedChoiceResult) -> Value {
    let by_direction: Map<String, Value> = r
        .by_direction
        .iter()
        .map(|(k, d)| {
            let n = d.n_items as f64;
            (
                k.clone(),
                json!({
                    "n_items": tagged(d.n_items, Unit::Count),
                    "orig_acc": tagged(d.orig_score / n, Unit::Fraction),
                    "erased_acc": tagged(d.erased_score / n, Unit::Fraction),
                    "do_acc": tagged(d.do_score / n, Unit::Fraction),
                }),
            )
        })
        .collect();
    json!({
        "n_items": tagged(r.n_items, Unit::Count),
        "orig_acc": tagged(r.orig_acc, Unit::Fraction),
        "erased_acc": tagged(r.erased_acc, Unit::Fraction),
        "do_acc": tagged(r.do_acc, Unit::Fraction),
        "by_direction": by_direction,
    })
}

pub fn theorem1_section(r: &Theorem1Report) -> Value {
    json!({
        "mi_c_hperp": bits(r.erasure),
        "mi_c_h_minus_mi_c_hpar": bits(r.encapsulation_gap),
        "mi_x_hpar_given_c": bits(r.containment),
        "mi_x_h_given_c_minus_mi_x_hperp_given_c": bits(r.stability_gap),
        "max_abs": bits(r.max_abs),
        "tolerance": bits(r.tolerance),
        "par_deterministic": r.par_deterministic,
        "pass": r.holds,
    })
}

pub fn fit_section(s: &FitStats, angle_to_oracle: Option<f64>) -> Value {
    json!({
        "mode": s.mode,
        "n_samples": tagged(s.n_samples, Unit::Count),
        "singular_values": tagged(&s.singular_values, Unit::Dimensionless),
        "rank_removed": tagged(s.rank_removed, Unit::Count),
        "zero_cross_covariance": s.zero_cross_covariance,
        "rank_deficient": s.rank_deficient,
        "guardedness_residual": tagged(s.guardedness_residual, Unit::Dimensionless),
        "angle_to_oracle": tagged(angle_to_oracle, Unit::Degrees),
    })
}
