use std::sync::Arc;

use lodgpe::fem::ScalarField;
use lodgpe::groundstate::{solve_ground_state, GpeProblem, GroundStateOptions};
use lodgpe::lod::{load_cache, save_cache, BilinearForm, LodOptions, LodSpace};
use lodgpe::mesh::{build_box_mesh, refine_uniform, BoxDomain};

fn build(dir: &std::path::Path) -> LodSpace {
    let c = build_box_mesh(&BoxDomain::cube(2, -3.0, 3.0).unwrap(), &[4, 4]).unwrap();
    let pair = refine_uniform(&c, 3).unwrap();
    let options = LodOptions { cache_dir: Some(dir.to_path_buf()), ..LodOptions::default() };
    LodSpace::build(pair, BilinearForm::canonical(), 1, options).unwrap()
}

fn scratch(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("lodgpe-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn cached_space_gives_identical_ground_state() {
    let dir = scratch("cache");
    let cold = build(&dir);
    assert!(!cold.timings.from_cache);
    let warm = build(&dir);
    assert!(warm.timings.from_cache);
    assert_eq!(cold.phi, warm.phi);
    assert_eq!(cold.omega.raw_parts(), warm.omega.raw_parts());

    let v = ScalarField::new("harmonic", true, |x| 0.5 * x.iter().map(|a| a * a).sum::<f64>());
    let energy = |lod: LodSpace| {
        let p = GpeProblem::new(Arc::new(lod), &v, 10.0).unwrap();
        solve_ground_state(&p, GroundStateOptions::default()).unwrap().energy
    };
    let (a, b) = (energy(cold), energy(warm));
    assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn stale_or_corrupt_cache_is_rejected() {
    let dir = scratch("corrupt");
    let lod = build(&dir);
    let file = dir.join("space.bin");
    save_cache(&file, "key-a", &lod.phi, &lod.omega).unwrap();
    let (phi, omega) = load_cache(&file, "key-a").unwrap();
    assert_eq!(phi, lod.phi);
    assert_eq!(omega.raw_parts(), lod.omega.raw_parts());
    assert!(load_cache(&file, "key-b").is_err());

    let mut bytes = std::fs::read(&file).unwrap();
    bytes[4] = 99;
    std::fs::write(&file, &bytes).unwrap();
    assert!(load_cache(&file, "key-a").is_err());
    bytes.truncate(bytes.len() / 2);
    bytes[4] = 1;
    std::fs::write(&file, &bytes).unwrap();
    assert!(load_cache(&file, "key-a").is_err());

    // a broken file in the cache directory falls back to a rebuild
    for entry in std::fs::read_dir(&dir).unwrap() {
        std::fs::write(entry.unwrap().path(), b"garbage").unwrap();
    }
    let rebuilt = build(&dir);
    assert!(!rebuilt.timings.from_cache);
    assert_eq!(rebuilt.phi, lod.phi);
    std::fs::remove_dir_all(&dir).unwrap();
}
