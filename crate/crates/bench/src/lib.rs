//! Benchmark fixtures.

use scenlib_core::analyze::FeatureMatrix;
use scenlib_core::seed;
use scenlib_core::simharness::CutInScenario;

use rand::Rng;

/// Random symbol sequence over `alphabet` letters.
pub fn symbols(len: usize, alphabet: u32, seed_value: u64) -> Vec<u32> {
    let mut rng = seed::rng(seed_value);
    (0..len).map(|_| rng.random_range(0..alphabet)).collect()
}

pub fn normal_samples(n: usize, seed_value: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_value);
    // sum of uniforms is close enough for timing purposes
    (0..n).map(|_| (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0).collect()
}

/// `per` points around each of three well-separated centers.
pub fn blobs(per: usize, seed_value: u64) -> FeatureMatrix {
    let noise = normal_samples(per * 6, seed_value);
    let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
    let mut rows = Vec::with_capacity(per * 3);
    for (c, (cx, cy)) in centers.iter().enumerate() {
        for i in 0..per {
            let k = 2 * (c * per + i);
            rows.push(vec![cx + 0.5 * noise[k], cy + 0.5 * noise[k + 1]]);
        }
    }
    FeatureMatrix::new(vec!["x".into(), "y".into()], rows).expect("finite rows")
}

/// A cut-in that ends in AEB braking without a collision.
pub fn braking_cutin() -> CutInScenario {
    CutInScenario {
        ego_speed_0: 25.0,
        cutin_speed: 15.0,
        cutin_gap_0: 25.0,
        cutin_decel: 1.0,
        road_friction: 0.9,
    }
}
