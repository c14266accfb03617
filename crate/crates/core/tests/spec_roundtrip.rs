use kiln_core::model::{
    validate_run_spec, ComputeSpec, FaultModel, PayloadParams, PlatformKind, ReliabilitySpec, RunSpec,
};
use proptest::prelude::*;

fn compute() -> impl Strategy<Value = ComputeSpec> {
    (1u32..64, 1u32..64).prop_flat_map(|(desired, tasks)| {
        (1..=desired).prop_map(move |minimal| ComputeSpec {
            desired_vms: desired,
            minimal_vms: minimal,
            tasks_per_burst: tasks,
        })
    })
}

fn faults() -> impl Strategy<Value = FaultModel> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, any::<u64>()).prop_map(|(a, b, c, d, seed)| FaultModel {
        p_provision_fail: a,
        p_task_crash: b,
        p_transfer_timeout: c,
        p_vm_loss_per_burst: d,
        fault_seed: seed,
    })
}

fn payload() -> impl Strategy<Value = PayloadParams> {
    (
        (1u32..4096, 1u32..100_000, 1u32..1000, 1e-3..10.0f64, 0.0..1.0f64),
        (1e-4..1.0f64, 1e-6..1e-2f64, 1e-4..1.0f64),
        (1e-3..10.0f64, 0.0..1.0f64, 1.0..10.0f64, 1e-4..1.0f64, 1u32..10_000, any::<u64>()),
    )
        .prop_map(|((n, steps, bins, r_max, weight), (r0, r_floor, sigma), (ti, frac, spread, thr, iters, seed))| PayloadParams {
            n_points: n,
            steps_per_task: steps,
            bins,
            r_max,
            weight,
            r0,
            r_floor,
            sigma,
            t_initial: ti,
            t_final: (ti * frac).max(f64::MIN_POSITIVE),
            spread_factor: spread,
            cost_threshold: thr,
            max_iterations: iters,
            instance_seed: seed,
        })
}

fn run_spec() -> impl Strategy<Value = RunSpec> {
    (
        "[A-Za-z0-9_-]{1,24}",
        prop_oneof![Just(PlatformKind::SimulatedCloud), Just(PlatformKind::LocalProcess)],
        compute(),
        (0u32..=100, any::<bool>()),
        faults(),
        payload(),
        "[a-z]{1,8}(/[a-z]{1,8}){0,2}",
        any::<bool>(),
        any::<u64>(),
    )
        .prop_map(|(name, platform, compute, (retries, resched), faults, payload, dir, curate, seed)| RunSpec {
            name,
            platform,
            compute,
            reliability: ReliabilitySpec {
                max_retries: retries,
                reschedule_failed: resched,
            },
            faults,
            payload,
            output_location: std::env::temp_dir().join(dir),
            curate,
            master_seed: seed,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn validate_inverts_serialize(spec in run_spec()) {
        prop_assert_eq!(validate_run_spec(&spec.to_json()).unwrap(), spec.clone());
        let text = serde_json::to_string(&spec).unwrap();
        let reparsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(validate_run_spec(&reparsed).unwrap(), spec);
    }

    #[test]
    fn minimal_above_desired_always_rejected(spec in run_spec(), extra in 1u32..10) {
        let mut doc = spec.to_json();
        doc["compute"]["minimal_vms"] = (spec.compute.desired_vms + extra).into();
        let errs = validate_run_spec(&doc).unwrap_err();
        prop_assert!(errs.has_path("compute.minimal_vms"));
    }
}

#[test]
fn optional_sections_default() {
    let doc = serde_json::json!({
        "name": "d",
        "platform": "local-process",
        "compute": { "desired_vms": 2, "minimal_vms": 1, "tasks_per_burst": 2 },
        "reliability": { "max_retries": 0, "reschedule_failed": false },
        "output_location": std::env::temp_dir().join("kiln-defaults"),
        "curate": false,
        "master_seed": 1
    });
    let spec = validate_run_spec(&doc).unwrap();
    assert_eq!(spec.faults, FaultModel::none());
    assert_eq!(spec.payload, PayloadParams::default());
}
