use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectralium::demo::{self, SceneBuilder};
use spectralium::math::Vec3;
use spectralium::scene::{
    brute_force_intersect, parse_scene, parse_scene_str, write_scene, BvhNode, Camera, GeoRay, MaterialKind, Scene,
    SceneError, SpatialIndex, Triangle,
};
use spectralium::spectral::WavelengthGrid;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(name)
}

fn random_triangles(rng: &mut ChaCha8Rng, n: usize) -> Vec<Triangle> {
    let mut b = SceneBuilder::default();
    let m = b.gray("m", 0.5);
    let mut p = || Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    let mut count = 0;
    while count < n {
        let c = p();
        let (a, d) = (c + p() * 0.2, c + p() * 0.2);
        if (a - c).cross(d - c).length() > 1e-3 {
            b.triangle(m, [c, a, d]);
            count += 1;
        }
    }
    b.build().triangles()
}

#[test]
fn shipped_scenes_match_their_generators() {
    assert_eq!(parse_scene(shipped("cornell.scn")).unwrap(), demo::cornell_box());
    assert_eq!(parse_scene(shipped("nave.scn")).unwrap(), demo::nave());
    let empty = parse_scene(shipped("empty.scn")).unwrap();
    assert_eq!(empty, Scene::empty(WavelengthGrid::visible()));
}

#[test]
fn data_files_resolve_next_to_the_scene() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    std::fs::write(dir.path().join("data/wall.spd"), "380,0.2\n780,0.6\n").unwrap();
    std::fs::write(dir.path().join("data/glass.ior"), "380,1.53,0\n780,1.51,0\n").unwrap();
    std::fs::write(dir.path().join("data/pane.map"), "1 2\n380,0.3\n780,0.3\n\n380,0.9\n780,0.9\n").unwrap();
    let text = "\
material wall lambertian file data/wall.spd
texture pane file data/pane.map
material glass dielectric file data/glass.ior texture pane
sun 40 10 5778 0.1 1
camera 0 1 3  0 0 0  0 1 0  45 8 8
mesh wall
v 0 0 0
v 1 0 0
v 0 0 1
f 1 2 3
end
";
    let path = dir.path().join("room.scn");
    std::fs::write(&path, text).unwrap();
    let scene = parse_scene(&path).unwrap();
    assert_eq!((scene.triangle_count(), scene.materials.len(), scene.lights.len()), (1, 2, 1));
    let MaterialKind::Lambertian { reflectance } = &scene.materials[0].kind else { panic!() };
    assert!((reflectance.at_wavelength(580.0) - 0.4).abs() < 1e-12);
    let MaterialKind::Dielectric { ior, bulk: Some(t), .. } = &scene.materials[1].kind else { panic!() };
    assert!((ior.n_at(380.0) - 1.53).abs() < 1e-12);
    assert_eq!(scene.textures[*t].map.height(), 2);
    // the serializer inlines every data file
    let again = parse_scene_str(&write_scene(&scene), std::path::Path::new("/nonexistent"), &scene.grid).unwrap();
    assert_eq!(again, scene);
}

#[test]
fn parse_errors_carry_context() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scn");
    std::fs::write(&path, "material a lambertian file missing.spd\n").unwrap();
    let err = parse_scene(&path).unwrap_err();
    assert!(matches!(err, SceneError::MissingFile { line: 1, .. }));
    assert!(err.to_string().contains("missing.spd"));
    std::fs::write(&path, "material a lambertian const 0.5\n# gap\nmaterial a lambertian const 0.2\n").unwrap();
    assert!(matches!(parse_scene(&path), Err(SceneError::DuplicateMaterial { first: 1, second: 3, .. })));
    std::fs::write(&path, "\n\nlamp 1 2 3\n").unwrap();
    assert!(matches!(parse_scene(&path), Err(SceneError::UnknownDirective { line: 3, .. })));
    assert!(matches!(parse_scene(dir.path().join("nope.scn")), Err(SceneError::Io { .. })));
}

#[test]
fn index_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tris = random_triangles(&mut rng, 100);
    let index = SpatialIndex::build(tris.clone());
    let mut hits = 0;
    for _ in 0..10_000 {
        let o = Vec3::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
        let target = Vec3::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let ray = GeoRay::new(o, (target - o).normalized());
        let a = index.intersect(&ray, 1e-9, f64::INFINITY);
        let b = brute_force_intersect(&ray, &tris, 1e-9, f64::INFINITY);
        match (a, b) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                hits += 1;
                assert!((a.t - b.t).abs() <= 1e-9 * b.t, "{} vs {}", a.t, b.t);
                assert!(a.normal.dot(ray.direction) < 0.0);
                assert!((a.normal.length() - 1.0).abs() < 1e-6);
                assert_eq!(index.occluded(&ray, 1e-9, f64::INFINITY), true);
            }
            (a, b) => panic!("hit/miss disagreement: {a:?} vs {b:?}"),
        }
    }
    assert!(hits > 1000, "too few hits ({hits}) to mean anything");
}

fn check_structure(index: &SpatialIndex) {
    let n = index.triangles().len();
    let mut seen = vec![0usize; n];
    let mut stack = vec![(0usize, None::<spectralium::math::Aabb>)];
    while let Some((i, parent)) = stack.pop() {
        let node = &index.nodes()[i];
        if let Some(p) = parent {
            assert!(p.contains_box(node.bounds(), 1e-12), "child box escapes its parent");
        }
        match node {
            BvhNode::Leaf { bounds, start, count } => {
                assert!(*count <= 4 && *count >= 1);
                for t in index.leaf_triangles(*start, *count) {
                    seen[*t] += 1;
                    assert!(bounds.contains_box(&index.triangles()[*t].bounds(), 1e-12));
                }
            }
            BvhNode::Interior { bounds, left, right } => {
                stack.push((*left, Some(*bounds)));
                stack.push((*right, Some(*bounds)));
            }
        }
    }
    assert!(seen.iter().all(|c| *c == 1), "every triangle sits in exactly one leaf");
}

#[test]
fn demo_scene_hierarchies_are_well_formed() {
    for scene in [demo::cornell_box(), demo::nave(), demo::nave_detailed(0.5)] {
        check_structure(&SpatialIndex::build(scene.triangles()));
    }
    assert!(SpatialIndex::build(Vec::new()).nodes().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hierarchy_invariants_hold(seed in any::<u64>(), n in 1usize..300) {
        let tris = random_triangles(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let index = SpatialIndex::build(tris.clone());
        check_structure(&index);
        let again = SpatialIndex::build(tris);
        prop_assert_eq!(again.nodes(), index.nodes());
    }

    #[test]
    fn random_scenes_round_trip(seed in any::<u64>(), n in 0usize..20, rho in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = SceneBuilder::default();
        let m = b.gray("paint", rho);
        let g = b.dielectric("glass", demo::crown_glass(b.grid()), None, rng.gen());
        b.conductor("gold", demo::gold(b.grid()));
        for t in random_triangles(&mut rng, n) {
            b.triangle(if rng.gen() { m } else { g }, t.p);
        }
        b.camera(Camera {
            position: Vec3::new(rng.gen(), 2.0, rng.gen()),
            look_at: Vec3::ZERO,
            up: Vec3::new(0.0, 1.0, 0.0),
            vertical_fov_deg: rng.gen_range(1.0..120.0),
            width: rng.gen_range(1..100),
            height: rng.gen_range(1..100),
        });
        let scene = b.build();
        let back = parse_scene_str(&write_scene(&scene), std::path::Path::new("."), &scene.grid).unwrap();
        prop_assert_eq!(back, scene);
    }

    #[test]
    fn camera_rays_are_unit_and_mirror(
        w in 1usize..64, h in 1usize..64, fov in 1.0f64..150.0, jx in 0.0f64..1.0, jy in 0.0f64..1.0,
    ) {
        let cam = Camera {
            position: Vec3::new(0.0, 0.0, 5.0),
            look_at: Vec3::ZERO,
            up: Vec3::new(0.0, 1.0, 0.0),
            vertical_fov_deg: fov,
            width: w,
            height: h,
        };
        let (x, y) = ((w - 1) / 2, (h - 1) / 2);
        let a = cam.generate_ray(x, y, (jx, jy));
        let b = cam.generate_ray(w - 1 - x, h - 1 - y, (1.0 - jx, 1.0 - jy));
        prop_assert!((a.direction.length() - 1.0).abs() < 1e-12);
        // point reflection through the look axis (here -z)
        prop_assert!((a.direction.x + b.direction.x).abs() < 1e-12);
        prop_assert!((a.direction.y + b.direction.y).abs() < 1e-12);
        prop_assert!((a.direction.z - b.direction.z).abs() < 1e-12);
    }
}
