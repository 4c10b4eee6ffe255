use cgmpm::estimation::{read_assignment, select_material, train, write_assignment, write_loss_log, Problem, TrainConfig};
use cgmpm::mpm::ParticleState;
use cgmpm::scene::SceneConfig;

fn two_blocks(rubber_only: bool) -> SceneConfig {
    let second = if rubber_only { "identity" } else { "fluid" };
    SceneConfig::from_toml_str(&format!(
        r#"
[[materials]]
youngs_modulus = 1e5
poisson_ratio = 0.3
learnable = true

[[materials]]
plastic = "{second}"
youngs_modulus = 1e5
poisson_ratio = 0.3
learnable = true

[[sources]]
shape = {{ kind = "box", min = [0.3, 0.44, 0.14], max = [0.38, 0.56, 0.22] }}
density = 1000.0
velocity = [0.0, 0.0, -2.0]

[[sources]]
shape = {{ kind = "box", min = [0.62, 0.44, 0.14], max = [0.7, 0.56, 0.22] }}
density = 1000.0
velocity = [0.0, 0.0, -2.0]
material = 1

[[boundary_conditions]]
kind = "ground_plane_slip"
point = [0.0, 0.0, 0.12]
"#
    ))
    .unwrap()
}

fn schedule(internal: usize) -> TrainConfig {
    TrainConfig {
        stages: 3,
        frames_per_stage: 2,
        internal,
        outer: 2,
        sample_every: 10,
        learning_rate: 5e-3,
        temperature: 1.0,
    }
}

struct Run {
    problem: Problem,
    report: cgmpm::estimation::TrainReport,
    checkpoints: Vec<(usize, usize, usize, ParticleState)>,
}

fn run(internal: usize) -> Run {
    let reference = cgmpm::mpm::simulate(&two_blocks(false), 60, 10).unwrap();
    let guess = two_blocks(true).build().unwrap();
    let problem = Problem::new(&guess, 10, 16).unwrap();
    let init = problem.initial_logits(20.0 * 5e-3);
    let mut checkpoints = Vec::new();
    let report = train(&problem, &reference, init, &schedule(internal), |r, s| {
        checkpoints.push((r.outer, r.stage, r.internal, s.clone()))
    })
    .unwrap();
    Run {
        problem,
        report,
        checkpoints,
    }
}

#[test]
fn training_follows_the_stage_schedule() {
    let Run {
        problem,
        report,
        checkpoints,
    } = run(4);
    let cfg = schedule(4);
    assert_eq!(report.log.len(), cfg.outer * cfg.stages * cfg.internal);
    let order: Vec<(usize, usize, usize)> = report.log.iter().map(|r| (r.outer, r.stage, r.internal)).collect();
    let mut expected = Vec::new();
    for o in 0..cfg.outer {
        for s in 0..cfg.stages {
            for i in 0..cfg.internal {
                expected.push((o, s, i));
            }
        }
    }
    assert_eq!(order, expected);

    for (o, s, _, state) in &checkpoints {
        let first = &checkpoints.iter().find(|c| c.0 == *o && c.1 == *s).unwrap().3;
        assert_eq!(state, first, "checkpoint moved inside outer {o} stage {s}");
        if *s == 0 {
            assert_eq!(state, &problem.initial);
        } else {
            assert_ne!(state, &problem.initial);
            assert!(state.time > 0.0);
        }
    }
}

#[test]
fn training_is_bitwise_reproducible() {
    let a = run(2);
    let b = run(2);
    assert_eq!(a.report.log, b.report.log);
    assert_eq!(a.report.logits.to_flat(), b.report.logits.to_flat());
    assert!(a.checkpoints.iter().zip(&b.checkpoints).all(|(x, y)| x.3 == y.3));
}

#[test]
fn training_lowers_the_loss_and_keeps_the_partition() {
    let Run { problem, report, .. } = run(4);
    assert!(
        report.final_loss < report.initial_loss,
        "{} -> {}",
        report.initial_loss,
        report.final_loss
    );
    let first: f64 = report.log.iter().filter(|r| r.outer == 0 && r.internal == 0).map(|r| r.loss).sum();
    let last: f64 = report.log.iter().filter(|r| r.outer == 1 && r.internal == 3).map(|r| r.loss).sum();
    assert!(last < first, "{first} -> {last}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("materials.toml");
    write_assignment(&path, &report.logits, &problem.partition).unwrap();
    let (assignment, records) = read_assignment(&path).unwrap();
    assert_eq!(assignment, problem.partition.assignment);
    assert_eq!(records.len(), problem.partition.len());
    for (j, rec) in records.iter().enumerate() {
        let m = select_material(&report.logits, j);
        assert_eq!((rec.elastic, rec.plastic), (m.elastic, m.plastic));
        assert_eq!(rec.center, problem.partition.centers[j]);
    }

    let log = dir.path().join("loss.csv");
    write_loss_log(&log, &report.log).unwrap();
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), report.log.len() + 1);
    assert_eq!(text.lines().next(), Some("outer,stage,internal,loss"));
}
