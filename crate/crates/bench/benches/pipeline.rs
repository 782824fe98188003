use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use selfcontrast::contrast::{run_self_contrast, SelfContrastConfig};
use selfcontrast::gateway::{
    derived_ground_truth, CorruptionMode, ErrorClass, FeedbackMode, SimulatedSolver,
    SimulatorProfile,
};
use selfcontrast::{Gateway, TaskInstance};

fn profile() -> SimulatorProfile {
    SimulatorProfile {
        ground_truth: None,
        p_correct: 0.7,
        error_classes: vec![
            ErrorClass {
                id: "misread".into(),
                weight: 0.2,
                mode: CorruptionMode::Systematic,
            },
            ErrorClass {
                id: "slip".into(),
                weight: 0.1,
                mode: CorruptionMode::Random,
            },
        ],
        feedback_mode: FeedbackMode::Inconsistent,
        checklist_gain: 0.3,
    }
}

fn bench_pipeline(c: &mut Criterion) {
    let gateway = Gateway::new(Arc::new(SimulatedSolver::new(profile()).unwrap()));
    let payload = "simulated problem 000001 series bench";
    let gold = match derived_ground_truth(selfcontrast::TaskKind::Math, payload).value {
        selfcontrast::AnswerValue::Number(v) => v,
        _ => unreachable!(),
    };
    let task = TaskInstance::math("bench-1", payload, gold).unwrap();
    let config = SelfContrastConfig {
        run_seed: 11,
        ..Default::default()
    };
    c.bench_function("self_contrast/simulated_task", |b| {
        b.iter(|| run_self_contrast(&task, &config, &gateway))
    });
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
