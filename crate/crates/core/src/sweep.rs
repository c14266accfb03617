//! Parameter sweeps: cross-product expansion of a base run spec and one
//! isolated run per combination.

use std::fs;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::curation::Catalog;
use crate::model::{validate_run_spec, FieldError, FieldErrorKind, RunSpec, Stage, StageState, ValidationErrors};
use crate::platform::Platform;
use crate::rng::{derive_task_seed, SWEEP_TAG};
use crate::scheduler::{run, Connector, RunFailure, RunReport};

/// Key of the ranges object inside a sweep file.
pub const SWEEP_KEY: &str = "sweep";
pub const SUMMARY_FILE: &str = "sweep_summary.json";

/// Paths the expansion itself rewrites for every combination.
const RESERVED_PATHS: [&str; 3] = ["name", "output_location", "master_seed"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunSpec,
    /// Parameter path to candidate values, in declaration order.
    pub ranges: Vec<(String, Vec<Value>)>,
}

/// One expanded run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    pub index: usize,
    pub values: Vec<(String, Value)>,
    pub spec: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub combination: usize,
    pub values: Map<String, Value>,
    pub final_stage: Stage,
    pub best_cost: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn invalid(path: impl Into<String>, msg: impl Into<String>) -> FieldError {
    FieldError {
        path: path.into(),
        kind: FieldErrorKind::Invalid(msg.into()),
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn lookup<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(doc, |v, key| v.as_object()?.get(key))
}

fn lookup_mut<'a>(doc: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(doc, |v, key| v.as_object_mut()?.get_mut(key))
}

impl SweepSpec {
    /// Checks that every path resolves to a scalar field of the base spec
    /// and that every value list is non-empty, type-compatible and free of
    /// duplicates.
    pub fn new(base: RunSpec, ranges: Vec<(String, Vec<Value>)>) -> Result<Self, ValidationErrors> {
        let doc = base.to_json();
        let mut errs = Vec::new();
        for (i, (path, values)) in ranges.iter().enumerate() {
            let at = format!("{SWEEP_KEY}.{path}");
            if ranges[..i].iter().any(|(p, _)| p == path) {
                errs.push(invalid(&at, "parameter declared twice"));
                continue;
            }
            if RESERVED_PATHS.contains(&path.as_str()) {
                errs.push(invalid(&at, format!("{path} is set per combination and cannot be swept")));
                continue;
            }
            let Some(current) = lookup(&doc, path) else {
                errs.push(invalid(&at, "parameter path does not resolve to a run-spec field"));
                continue;
            };
            if current.is_object() || current.is_array() {
                errs.push(invalid(&at, "parameter path must name a scalar field"));
                continue;
            }
            if values.is_empty() {
                errs.push(invalid(&at, "value list is empty"));
            }
            for v in values {
                if kind_name(v) != kind_name(current) {
                    errs.push(FieldError {
                        path: at.clone(),
                        kind: FieldErrorKind::TypeMismatch {
                            expected: kind_name(current),
                        },
                    });
                }
            }
            for (j, v) in values.iter().enumerate() {
                if values[..j].contains(v) {
                    errs.push(invalid(&at, format!("duplicate value {v}")));
                }
            }
        }
        if errs.is_empty() {
            Ok(Self { base, ranges })
        } else {
            Err(ValidationErrors(errs))
        }
    }

    /// Parses a sweep file: a run-spec document plus a `sweep` object of
    /// parameter path to value list.
    pub fn from_document(raw: &Value) -> Result<Self, ValidationErrors> {
        let mut doc = raw.clone();
        let ranges_doc = doc.as_object_mut().and_then(|m| m.remove(SWEEP_KEY));
        let base = validate_run_spec(&doc);
        let mut errs = Vec::new();
        let mut ranges = Vec::new();
        match ranges_doc {
            None => {}
            Some(Value::Object(map)) => {
                for (path, values) in map {
                    match values {
                        Value::Array(list) => ranges.push((path, list)),
                        _ => errs.push(FieldError {
                            path: format!("{SWEEP_KEY}.{path}"),
                            kind: FieldErrorKind::TypeMismatch { expected: "array" },
                        }),
                    }
                }
            }
            Some(_) => errs.push(FieldError {
                path: SWEEP_KEY.into(),
                kind: FieldErrorKind::TypeMismatch { expected: "object" },
            }),
        }
        let base = match base {
            Ok(b) => b,
            Err(e) => {
                errs.extend(e.0);
                return Err(ValidationErrors(errs));
            }
        };
        if !errs.is_empty() {
            return Err(ValidationErrors(errs));
        }
        Self::new(base, ranges)
    }

    pub fn combination_count(&self) -> usize {
        self.ranges.iter().map(|(_, v)| v.len()).product()
    }
}

/// Cross product in lexicographic order (first parameter slowest). Each
/// combination gets name suffix `_k`, output subdirectory `run_k` and a
/// decorrelated master seed.
pub fn expand(sweep: &SweepSpec) -> Result<Vec<Combination>, ValidationErrors> {
    let base_doc = sweep.base.to_json();
    let total = sweep.combination_count();
    let mut out = Vec::with_capacity(total);
    let mut errs = Vec::new();
    for k in 0..total {
        let mut rem = k;
        let mut values = vec![(String::new(), Value::Null); sweep.ranges.len()];
        for (slot, (path, list)) in sweep.ranges.iter().enumerate().rev() {
            values[slot] = (path.clone(), list[rem % list.len()].clone());
            rem /= list.len();
        }
        let mut doc = base_doc.clone();
        for (path, v) in &values {
            *lookup_mut(&mut doc, path).expect("paths checked at construction") = v.clone();
        }
        doc["name"] = Value::from(format!("{}_{k}", sweep.base.name));
        doc["output_location"] = Value::from(
            sweep
                .base
                .output_location
                .join(format!("run_{k}"))
                .to_string_lossy()
                .into_owned(),
        );
        doc["master_seed"] = Value::from(derive_task_seed(sweep.base.master_seed, SWEEP_TAG, k as u32));
        match validate_run_spec(&doc) {
            Ok(spec) => out.push(Combination { index: k, values, spec }),
            Err(e) => errs.extend(e.0.into_iter().map(|fe| FieldError {
                path: format!("{SWEEP_KEY}[{k}].{}", fe.path),
                kind: fe.kind,
            })),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(ValidationErrors(errs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub reports: Vec<RunReport>,
    pub summary: Vec<SummaryEntry>,
    pub summary_path: PathBuf,
}

impl SweepOutcome {
    pub fn all_complete(&self) -> bool {
        self.reports.iter().all(RunReport::is_complete)
    }
}

fn unreported_failure(spec: &RunSpec, error: String) -> RunReport {
    RunReport {
        spec_name: spec.name.clone(),
        final_stage: StageState {
            stage: Stage::Failed,
            iteration: 0,
        },
        iterations_executed: 0,
        converged: false,
        best_metric: None,
        failure: Some(RunFailure::Io(error)),
        vms_requested: 0,
        vms_provisioned: 0,
        vms_destroyed: 0,
        payload_invocations: 0,
        tasks: Vec::new(),
        vm_events: Vec::new(),
        output_manifest: Vec::new(),
    }
}

/// Runs every combination in order, each with its own backend from
/// `platform_for` and connector from `connector_for`. A failed
/// combination never stops the others. Writes `sweep_summary.json` into
/// the base output location.
pub fn run_sweep<P, C, PF, CF>(
    sweep: &SweepSpec,
    mut platform_for: PF,
    mut connector_for: CF,
    mut catalog: Option<&mut Catalog>,
) -> Result<SweepOutcome, SweepError>
where
    P: Platform,
    C: Connector,
    PF: FnMut(&Combination) -> P,
    CF: FnMut(&RunSpec) -> C,
{
    let combinations = expand(sweep)?;
    let mut reports = Vec::with_capacity(combinations.len());
    let mut summary = Vec::with_capacity(combinations.len());
    for combo in &combinations {
        let mut platform = platform_for(combo);
        let connector = connector_for(&combo.spec);
        let report = match run(&combo.spec, &mut platform, &connector, catalog.as_deref_mut()) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("combination {} failed before reporting: {e}", combo.index);
                unreported_failure(&combo.spec, e.to_string())
            }
        };
        summary.push(SummaryEntry {
            combination: combo.index,
            values: combo.values.iter().cloned().collect(),
            final_stage: report.final_stage.stage,
            best_cost: report.best_metric,
        });
        reports.push(report);
    }

    let dir = &sweep.base.output_location;
    let summary_path = dir.join(SUMMARY_FILE);
    let io_err = |source| SweepError::Io {
        path: summary_path.clone(),
        source,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    fs::write(&summary_path, s).map_err(io_err)?;
    Ok(SweepOutcome {
        reports,
        summary,
        summary_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComputeSpec, FaultModel, PayloadParams, PlatformKind, ReliabilitySpec};
    use serde_json::json;
    use std::collections::HashSet;

    fn base() -> RunSpec {
        RunSpec {
            name: "sw".into(),
            platform: PlatformKind::SimulatedCloud,
            compute: ComputeSpec {
                desired_vms: 2,
                minimal_vms: 1,
                tasks_per_burst: 2,
            },
            reliability: ReliabilitySpec {
                max_retries: 1,
                reschedule_failed: false,
            },
            faults: FaultModel::none(),
            payload: PayloadParams::default(),
            output_location: std::env::temp_dir().join("kiln-sweep-unit"),
            curate: false,
            master_seed: 9,
        }
    }

    #[test]
    fn lexicographic_cross_product() {
        let s = SweepSpec::new(
            base(),
            vec![
                ("payload.weight".into(), vec![json!(1.0), json!(2.0), json!(3.0)]),
                ("reliability.reschedule_failed".into(), vec![json!(false), json!(true)]),
            ],
        )
        .unwrap();
        let combos = expand(&s).unwrap();
        assert_eq!(combos.len(), 6);
        let got: Vec<(f64, bool)> = combos
            .iter()
            .map(|c| (c.spec.payload.weight, c.spec.reliability.reschedule_failed))
            .collect();
        assert_eq!(
            got,
            vec![(1.0, false), (1.0, true), (2.0, false), (2.0, true), (3.0, false), (3.0, true)]
        );
        for c in &combos {
            assert_eq!(c.spec.name, format!("sw_{}", c.index));
            assert_eq!(c.spec.output_location, base().output_location.join(format!("run_{}", c.index)));
            assert_eq!(c.spec.master_seed, derive_task_seed(9, SWEEP_TAG, c.index as u32));
            // Nothing else moved.
            let mut expected = base();
            expected.payload.weight = c.spec.payload.weight;
            expected.reliability.reschedule_failed = c.spec.reliability.reschedule_failed;
            expected.name = c.spec.name.clone();
            expected.output_location = c.spec.output_location.clone();
            expected.master_seed = c.spec.master_seed;
            assert_eq!(c.spec, expected);
        }
        let seeds: HashSet<u64> = combos.iter().map(|c| c.spec.master_seed).collect();
        assert_eq!(seeds.len(), 6);
    }

    #[test]
    fn empty_ranges_give_base() {
        let s = SweepSpec::new(base(), vec![]).unwrap();
        let combos = expand(&s).unwrap();
        assert_eq!(combos.len(), 1);
        assert_eq!(combos[0].spec.name, "sw_0");
        assert_eq!(combos[0].spec.payload, base().payload);
    }

    #[test]
    fn single_value() {
        let s = SweepSpec::new(base(), vec![("compute.tasks_per_burst".into(), vec![json!(3)])]).unwrap();
        let combos = expand(&s).unwrap();
        assert_eq!(combos.len(), 1);
        assert_eq!(combos[0].spec.compute.tasks_per_burst, 3);
    }

    #[test]
    fn bad_paths_and_values() {
        let cases = vec![
            ("payload.nope", vec![json!(1)]),
            ("compute", vec![json!(1)]),
            ("name", vec![json!("x")]),
            ("payload.weight", vec![]),
            ("payload.weight", vec![json!("heavy")]),
            ("payload.sigma", vec![json!(0.1), json!(0.1)]),
        ];
        for (path, values) in cases {
            let err = SweepSpec::new(base(), vec![(path.to_string(), values.clone())]).unwrap_err();
            assert!(err.has_path(&format!("sweep.{path}")), "{path} {values:?}: {err}");
        }
    }

    #[test]
    fn invalid_combination_reported() {
        let s = SweepSpec::new(base(), vec![("compute.minimal_vms".into(), vec![json!(1), json!(5)])]).unwrap();
        let err = expand(&s).unwrap_err();
        assert!(err.has_path("sweep[1].compute.minimal_vms"), "{err}");
    }

    #[test]
    fn document_form() {
        let mut doc = base().to_json();
        doc["sweep"] = json!({"payload.weight": [0.0, 0.5], "faults.p_task_crash": [0.0, 0.1, 0.2]});
        let s = SweepSpec::from_document(&doc).unwrap();
        assert_eq!(s.ranges[0].0, "payload.weight");
        assert_eq!(s.combination_count(), 6);
        doc["sweep"] = json!({"payload.weight": 0.5});
        assert!(SweepSpec::from_document(&doc).unwrap_err().has_path("sweep.payload.weight"));
    }
}
