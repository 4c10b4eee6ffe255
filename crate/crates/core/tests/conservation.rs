use cgmpm::constitutive::{BlendedMaterial, MaterialSpec, PhysicalParams};
use cgmpm::mpm::{init_state, p2g, Boundary, GridField, GridSpec, ParticleState, Simulator, StepParams};
use cgmpm::{Mat3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scene(seed: u64) -> (Simulator, ParticleState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = GridSpec::unit(25);
    let n = rng.gen_range(20..300);
    let x: Vec<Vec3> = (0..n).map(|_| Vec3::from_fn(|_, _| rng.gen_range(0.35..0.65))).collect();
    // seeding volume (dx/2)³ with densities of soft solids and liquids
    let volume = (0.5 * grid.dx).powi(3);
    let mass: Vec<f64> = (0..n).map(|_| rng.gen_range(500.0..2000.0) * volume).collect();
    let mut state = init_state(&x, &mass, &vec![volume; n], &grid).unwrap();
    for p in 0..n {
        state.v[p] = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        state.c[p] = Mat3::from_fn(|_, _| rng.gen_range(-5.0..5.0));
        state.f[p] = Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-0.1..0.1));
    }
    let materials: Vec<BlendedMaterial> = MaterialSpec::all_combinations(PhysicalParams::new(1e4, 0.3).unwrap())
        .iter()
        .map(BlendedMaterial::from_spec)
        .collect();
    let material_of = (0..n).map(|_| rng.gen_range(0..materials.len())).collect();
    let params = StepParams {
        dt: 1e-4,
        gravity: Vec3::zeros(),
    };
    let sim = Simulator::new(grid, params, Boundary::default(), materials, material_of).unwrap();
    (sim, state)
}

fn momentum_scale(state: &ParticleState) -> f64 {
    state.v.iter().zip(&state.mass).map(|(v, m)| v.norm() * m).sum()
}

#[test]
fn transfers_conserve_mass_and_momentum() {
    for seed in 0..10 {
        let (mut sim, mut state) = random_scene(seed);
        for step in 0..20 {
            let mut field = GridField::new(sim.grid);
            p2g(&state, &vec![Mat3::zeros(); state.len()], &mut field, sim.params.dt);
            let m = state.total_mass();
            assert!((field.total_mass() - m).abs() <= 1e-12 * m, "seed {seed} step {step}");
            let scale = momentum_scale(&state);
            assert!((field.total_momentum() - state.momentum()).norm() <= 1e-8 * scale);

            let before = state.momentum();
            sim.step(&mut state, step).unwrap();
            assert!(
                (state.momentum() - before).norm() <= 1e-8 * scale,
                "seed {seed} step {step}: {:e} of {scale:e}",
                (state.momentum() - before).norm()
            );
            assert_eq!(state.total_mass(), m);
        }
    }
}

#[test]
fn threaded_steps_match_the_sequential_totals() {
    let (sim, state) = random_scene(99);
    let mut serial = sim.clone();
    let mut threaded = sim.with_threads(3).unwrap();
    let (mut a, mut b) = (state.clone(), state);
    for step in 0..50 {
        serial.step(&mut a, step).unwrap();
        threaded.step(&mut b, step).unwrap();
        let scale = momentum_scale(&a);
        assert!((a.momentum() - b.momentum()).norm() <= 1e-10 * scale);
        assert!((a.total_mass() - b.total_mass()).abs() <= 1e-10 * a.total_mass());
    }
}
