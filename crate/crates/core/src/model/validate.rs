//! Strict, exhaustive validation of run-spec documents.
//!
//! Every violated constraint is reported together with its dotted field
//! path; validation never stops at the first problem.

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::spec::{
    ComputeSpec, FaultModel, PayloadParams, PlatformKind, ReliabilitySpec, RunSpec,
};

/// Upper bound on `reliability.max_retries`.
pub const MAX_RETRIES_LIMIT: i128 = 100;

/// Upper bound on `payload.max_iterations`; keeps iteration tags clear of
/// the reserved seed-derivation tags.
pub const MAX_ITERATIONS_LIMIT: i128 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldErrorKind {
    Missing,
    TypeMismatch { expected: &'static str },
    Unknown,
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub kind: FieldErrorKind,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FieldErrorKind::Missing => write!(f, "{}: missing field", self.path),
            FieldErrorKind::TypeMismatch { expected } => {
                write!(f, "{}: type mismatch, expected {expected}", self.path)
            }
            FieldErrorKind::Unknown => write!(f, "{}: unknown field", self.path),
            FieldErrorKind::Invalid(msg) => write!(f, "{}: {msg}", self.path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} validation error(s): {}", .0.len(), join(.0))]
pub struct ValidationErrors(pub Vec<FieldError>);

fn join(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl ValidationErrors {
    pub fn iter(&self) -> impl Iterator<Item = &FieldError> {
        self.0.iter()
    }

    pub fn has_path(&self, path: &str) -> bool {
        self.0.iter().any(|e| e.path == path)
    }
}

/// Whether `name` is non-empty and made of `[A-Za-z0-9_-]`.
pub fn is_safe_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// `path` is an existing writable directory, or could be created as one
/// beneath its nearest existing ancestor.
pub fn is_writable_dir_path(path: &Path) -> bool {
    if path.as_os_str().is_empty() {
        return false;
    }
    let mut candidate: Option<&Path> = Some(path);
    while let Some(p) = candidate {
        match std::fs::metadata(p) {
            Ok(meta) => return meta.is_dir() && !meta.permissions().readonly(),
            Err(_) => {
                candidate = p.parent();
                if candidate == Some(Path::new("")) {
                    candidate = Some(Path::new("."));
                }
            }
        }
    }
    false
}

struct Reader<'a> {
    prefix: String,
    map: &'a Map<String, Value>,
    known: Vec<&'static str>,
}

impl<'a> Reader<'a> {
    fn new(prefix: &str, map: &'a Map<String, Value>) -> Self {
        Self {
            prefix: prefix.to_string(),
            map,
            known: Vec::new(),
        }
    }

    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn get(&mut self, key: &'static str, required: bool, errs: &mut Vec<FieldError>) -> Option<&'a Value> {
        self.known.push(key);
        match self.map.get(key) {
            Some(v) => Some(v),
            None => {
                if required {
                    errs.push(FieldError {
                        path: self.path(key),
                        kind: FieldErrorKind::Missing,
                    });
                }
                None
            }
        }
    }

    fn mismatch(&self, key: &str, expected: &'static str, errs: &mut Vec<FieldError>) {
        errs.push(FieldError {
            path: self.path(key),
            kind: FieldErrorKind::TypeMismatch { expected },
        });
    }

    fn int(&mut self, key: &'static str, required: bool, errs: &mut Vec<FieldError>) -> Option<i128> {
        let v = self.get(key, required, errs)?;
        let n = v
            .as_i64()
            .map(i128::from)
            .or_else(|| v.as_u64().map(i128::from));
        if n.is_none() {
            self.mismatch(key, "integer", errs);
        }
        n
    }

    fn float(&mut self, key: &'static str, required: bool, errs: &mut Vec<FieldError>) -> Option<f64> {
        let v = self.get(key, required, errs)?;
        let n = v.as_f64();
        if n.is_none() {
            self.mismatch(key, "number", errs);
        }
        n
    }

    fn string(&mut self, key: &'static str, required: bool, errs: &mut Vec<FieldError>) -> Option<&'a str> {
        let v = self.get(key, required, errs)?;
        let s = v.as_str();
        if s.is_none() {
            self.mismatch(key, "string", errs);
        }
        s
    }

    fn boolean(&mut self, key: &'static str, required: bool, errs: &mut Vec<FieldError>) -> Option<bool> {
        let v = self.get(key, required, errs)?;
        let b = v.as_bool();
        if b.is_none() {
            self.mismatch(key, "boolean", errs);
        }
        b
    }

    fn object(&mut self, key: &'static str, required: bool, errs: &mut Vec<FieldError>) -> Option<Reader<'a>> {
        let path = self.path(key);
        let v = self.get(key, required, errs)?;
        match v.as_object() {
            Some(map) => Some(Reader::new(&path, map)),
            None => {
                self.mismatch(key, "object", errs);
                None
            }
        }
    }

    fn invalid(&self, key: &str, msg: impl Into<String>, errs: &mut Vec<FieldError>) {
        errs.push(FieldError {
            path: self.path(key),
            kind: FieldErrorKind::Invalid(msg.into()),
        });
    }

    /// Reports keys that were never asked for.
    fn finish(self, errs: &mut Vec<FieldError>) {
        for key in self.map.keys() {
            if !self.known.contains(&key.as_str()) {
                errs.push(FieldError {
                    path: self.path(key),
                    kind: FieldErrorKind::Unknown,
                });
            }
        }
    }
}

fn positive_u32(r: &Reader<'_>, key: &str, v: Option<i128>, errs: &mut Vec<FieldError>) -> Option<u32> {
    let v = v?;
    if v < 1 {
        r.invalid(key, format!("{key} must be ≥ 1"), errs);
        None
    } else if v > i128::from(u32::MAX) {
        r.invalid(key, format!("{key} is out of range"), errs);
        None
    } else {
        Some(v as u32)
    }
}

fn seed(r: &Reader<'_>, key: &str, v: Option<i128>, errs: &mut Vec<FieldError>) -> Option<u64> {
    let v = v?;
    if (0..=i128::from(u64::MAX)).contains(&v) {
        Some(v as u64)
    } else {
        r.invalid(key, format!("{key} must be an unsigned 64-bit integer"), errs);
        None
    }
}

fn probability(r: &Reader<'_>, key: &str, v: Option<f64>, errs: &mut Vec<FieldError>) -> Option<f64> {
    let v = v?;
    if (0.0..=1.0).contains(&v) {
        Some(v)
    } else {
        r.invalid(key, format!("{key} must be within [0, 1]"), errs);
        None
    }
}

fn compute_spec(mut r: Reader<'_>, errs: &mut Vec<FieldError>) -> Option<ComputeSpec> {
    let desired = r.int("desired_vms", true, errs);
    let minimal = r.int("minimal_vms", true, errs);
    let per_burst = r.int("tasks_per_burst", true, errs);
    let desired = positive_u32(&r, "desired_vms", desired, errs);
    let minimal = positive_u32(&r, "minimal_vms", minimal, errs);
    let per_burst = positive_u32(&r, "tasks_per_burst", per_burst, errs);
    if let (Some(d), Some(m)) = (desired, minimal) {
        if m > d {
            r.invalid("minimal_vms", "minimal_vms > desired_vms", errs);
        }
    }
    r.finish(errs);
    match (desired, minimal, per_burst) {
        (Some(desired_vms), Some(minimal_vms), Some(tasks_per_burst)) if minimal_vms <= desired_vms => {
            Some(ComputeSpec {
                desired_vms,
                minimal_vms,
                tasks_per_burst,
            })
        }
        _ => None,
    }
}

fn reliability_spec(mut r: Reader<'_>, errs: &mut Vec<FieldError>) -> Option<ReliabilitySpec> {
    let retries = r.int("max_retries", true, errs);
    let reschedule = r.boolean("reschedule_failed", true, errs);
    let retries = match retries {
        Some(v) if v < 0 => {
            r.invalid("max_retries", "max_retries must be ≥ 0", errs);
            None
        }
        Some(v) if v > MAX_RETRIES_LIMIT => {
            r.invalid("max_retries", format!("max_retries must be ≤ {MAX_RETRIES_LIMIT}"), errs);
            None
        }
        other => other.map(|v| v as u32),
    };
    r.finish(errs);
    Some(ReliabilitySpec {
        max_retries: retries?,
        reschedule_failed: reschedule?,
    })
}

fn fault_model(mut r: Reader<'_>, errs: &mut Vec<FieldError>) -> Option<FaultModel> {
    let d = FaultModel::none();
    let prob = |r: &mut Reader<'_>, key: &'static str, default: f64, errs: &mut Vec<FieldError>| {
        let v = r.float(key, false, errs).or((!r.map.contains_key(key)).then_some(default));
        probability(r, key, v, errs)
    };
    let provision = prob(&mut r, "p_provision_fail", d.p_provision_fail, errs);
    let crash = prob(&mut r, "p_task_crash", d.p_task_crash, errs);
    let timeout = prob(&mut r, "p_transfer_timeout", d.p_transfer_timeout, errs);
    let loss = prob(&mut r, "p_vm_loss_per_burst", d.p_vm_loss_per_burst, errs);
    let fault_seed = match r.int("fault_seed", false, errs) {
        Some(v) => seed(&r, "fault_seed", Some(v), errs),
        None if r.map.contains_key("fault_seed") => None,
        None => Some(d.fault_seed),
    };
    r.finish(errs);
    Some(FaultModel {
        p_provision_fail: provision?,
        p_task_crash: crash?,
        p_transfer_timeout: timeout?,
        p_vm_loss_per_burst: loss?,
        fault_seed: fault_seed?,
    })
}

fn payload_params(mut r: Reader<'_>, errs: &mut Vec<FieldError>) -> Option<PayloadParams> {
    let d = PayloadParams::default();
    let mut ok = true;

    macro_rules! int_field {
        ($key:literal, $default:expr, $min:expr, $max:expr) => {{
            let present = r.map.contains_key($key);
            match r.int($key, false, errs) {
                Some(v) if !($min..=$max).contains(&v) => {
                    r.invalid($key, format!("{} must be within [{}, {}]", $key, $min, $max), errs);
                    ok = false;
                    $default
                }
                Some(v) => v as _,
                None => {
                    ok &= !present;
                    $default
                }
            }
        }};
    }
    macro_rules! float_field {
        ($key:literal, $default:expr, $check:expr, $msg:literal) => {{
            let present = r.map.contains_key($key);
            match r.float($key, false, errs) {
                Some(v) if !($check)(v) => {
                    r.invalid($key, format!("{} {}", $key, $msg), errs);
                    ok = false;
                    $default
                }
                Some(v) => v,
                None => {
                    ok &= !present;
                    $default
                }
            }
        }};
    }

    let positive = |v: f64| v > 0.0 && v.is_finite();
    let p = PayloadParams {
        n_points: int_field!("n_points", d.n_points, 1, 4096),
        steps_per_task: int_field!("steps_per_task", d.steps_per_task, 1, i128::from(u32::MAX)),
        bins: int_field!("bins", d.bins, 1, 1_000_000),
        r_max: float_field!("r_max", d.r_max, positive, "must be > 0"),
        weight: float_field!("weight", d.weight, |v: f64| v >= 0.0 && v.is_finite(), "must be ≥ 0"),
        r0: float_field!("r0", d.r0, positive, "must be > 0"),
        r_floor: float_field!("r_floor", d.r_floor, positive, "must be > 0"),
        sigma: float_field!("sigma", d.sigma, positive, "must be > 0"),
        t_initial: float_field!("t_initial", d.t_initial, positive, "must be > 0"),
        t_final: float_field!("t_final", d.t_final, positive, "must be > 0"),
        spread_factor: float_field!("spread_factor", d.spread_factor, |v: f64| v >= 1.0 && v.is_finite(), "must be ≥ 1"),
        cost_threshold: float_field!("cost_threshold", d.cost_threshold, positive, "must be > 0"),
        max_iterations: int_field!("max_iterations", d.max_iterations, 1, MAX_ITERATIONS_LIMIT),
        instance_seed: {
            let present = r.map.contains_key("instance_seed");
            match r.int("instance_seed", false, errs) {
                Some(v) => match seed(&r, "instance_seed", Some(v), errs) {
                    Some(s) => s,
                    None => {
                        ok = false;
                        d.instance_seed
                    }
                },
                None => {
                    ok &= !present;
                    d.instance_seed
                }
            }
        },
    };
    if p.t_final > p.t_initial {
        r.invalid("t_final", "t_final must be ≤ t_initial", errs);
        ok = false;
    }
    r.finish(errs);
    ok.then_some(p)
}

/// Validates a parsed run-spec document. Returns the typed spec, or every
/// violated constraint.
pub fn validate_run_spec(raw: &Value) -> Result<RunSpec, ValidationErrors> {
    let mut errs = Vec::new();
    let Some(map) = raw.as_object() else {
        return Err(ValidationErrors(vec![FieldError {
            path: "$".into(),
            kind: FieldErrorKind::TypeMismatch { expected: "object" },
        }]));
    };
    let mut r = Reader::new("", map);

    let name = r.string("name", true, &mut errs);
    if let Some(n) = name {
        if !is_safe_name(n) {
            r.invalid("name", "name must be non-empty and match [A-Za-z0-9_-]+", &mut errs);
        }
    }
    let platform = r.string("platform", true, &mut errs).and_then(|s| {
        let kind = PlatformKind::parse(s);
        if kind.is_none() {
            r.invalid("platform", format!("unknown platform {s:?} (expected simulated-cloud or local-process)"), &mut errs);
        }
        kind
    });
    let compute = r
        .object("compute", true, &mut errs)
        .and_then(|c| compute_spec(c, &mut errs));
    let reliability = r
        .object("reliability", true, &mut errs)
        .and_then(|c| reliability_spec(c, &mut errs));
    let faults = match r.object("faults", false, &mut errs) {
        Some(f) => fault_model(f, &mut errs),
        None if map.contains_key("faults") => None,
        None => Some(FaultModel::none()),
    };
    let payload = match r.object("payload", false, &mut errs) {
        Some(p) => payload_params(p, &mut errs),
        None if map.contains_key("payload") => None,
        None => Some(PayloadParams::default()),
    };
    let output_location = r.string("output_location", true, &mut errs).and_then(|s| {
        let path = PathBuf::from(s);
        if is_writable_dir_path(&path) {
            Some(path)
        } else {
            r.invalid("output_location", format!("{s:?} is not a writable directory path"), &mut errs);
            None
        }
    });
    let curate = r.boolean("curate", true, &mut errs);
    let master_seed = r.int("master_seed", true, &mut errs);
    let master_seed = seed(&r, "master_seed", master_seed, &mut errs);
    r.finish(&mut errs);

    if !errs.is_empty() {
        return Err(ValidationErrors(errs));
    }
    match (name, platform, compute, reliability, faults, payload, output_location, curate, master_seed) {
        (Some(name), Some(platform), Some(compute), Some(reliability), Some(faults), Some(payload), Some(output_location), Some(curate), Some(master_seed)) => {
            Ok(RunSpec {
                name: name.to_string(),
                platform,
                compute,
                reliability,
                faults,
                payload,
                output_location,
                curate,
                master_seed,
            })
        }
        _ => unreachable!("every missing component records an error"),
    }
}
