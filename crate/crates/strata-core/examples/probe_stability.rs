use strata_core::stability::{stability_curve, StabilityConfig};
use strata_core::synth::{generate, SynthKind, SyntheticSpec, SyntheticVariable};
use strata_core::seed;

fn two_blob_spec(n: usize) -> SyntheticSpec {
    SyntheticSpec {
        n,
        k: 2,
        mixture_weights: vec![0.5, 0.5],
        variables: vec![
            SyntheticVariable {
                name: "x1".into(),
                kind: SynthKind::Continuous { means: vec![0.0, 10.0], sd: 1.0 },
            },
            SyntheticVariable {
                name: "x2".into(),
                kind: SynthKind::Categorical {
                    levels: vec!["a".into(), "b".into()],
                    probs: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
                },
            },
        ],
        intercept: 0.1,
        beta: vec![vec![0.2], vec![-0.2, 0.2]],
        gamma: vec![-0.3, 0.3],
        theta: vec![vec![0.0, 0.0], vec![0.0; 4]],
        outcome_name: "y".into(),
        outcome_levels: ("neg".into(), "pos".into()),
    }
}

fn main() {
    let spec = two_blob_spec(400);
    for r in 0..12u64 {
        let (ds, _) = generate::<f64>(&spec, seed::derive(6000, 1, r)).unwrap();
        let cfg = StabilityConfig {
            k_min: 2, k_max: 4, replicates: 100,
            restarts_original: 10, restarts_bootstrap: 3,
            include_outcome: true,
            seed: seed::derive(6000, 2, r),
        };
        let report = stability_curve(&ds, &cfg).unwrap();
        let vals: Vec<String> = report.worst_case.iter()
            .map(|s| format!("k={}: {:.4}", s.k, s.value.unwrap_or(f64::NAN)))
            .collect();
        println!("run {r}: k*={} [{}]", report.k_star, vals.join(", "));
    }
}
