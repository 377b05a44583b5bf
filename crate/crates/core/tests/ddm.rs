use std::collections::BTreeSet;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectralium::ddm::{
    advance_ray, load_subdomain, partition, partition_file_text, run_ddm, split_boxes, write_partition_files,
    Advance, DdmConfig, DdmError, Partition, RayMessage, ScheduleMetrics, WIRE_SAMPLES, WIRE_SIZE,
};
use spectralium::demo::{self, crown_glass, gold, SceneBuilder};
use spectralium::math::{Aabb, Vec3};
use spectralium::render::{render_image, ImageAccumulator, PreparedScene, RayKind, RenderSettings};
use spectralium::scene::{parse_mesh_blocks, Camera, Scene};
use spectralium::spectral::{Spectrum, WavelengthGrid};
use spectralium::sunlight::SunLight;

fn cube_scene() -> Scene {
    let mut b = SceneBuilder::default();
    let m = b.gray("white", 0.5);
    b.cuboid(m, Vec3::ZERO, Vec3::splat(1.0), true);
    b.build()
}

/// Scene spanning [0,8]^3 through two tiny corner triangles, plus optional
/// extra triangles.
fn two_box_scene(extra: &[[Vec3; 3]]) -> Scene {
    let mut b = SceneBuilder::default();
    let m = b.gray("white", 0.5);
    let v = Vec3::new;
    b.triangle(m, [v(0.0, 0.0, 0.0), v(0.1, 0.0, 0.0), v(0.0, 0.1, 0.0)]);
    b.triangle(m, [v(8.0, 8.0, 8.0), v(7.9, 8.0, 8.0), v(8.0, 7.9, 8.0)]);
    for t in extra {
        b.triangle(m, *t);
    }
    b.build()
}

fn message(entry: Vec3, dir: Vec3) -> RayMessage {
    RayMessage {
        entry_point: entry,
        direction: dir,
        throughput: [1.0; WIRE_SAMPLES],
        depth: 0,
        pixel_id: 7,
        kind: RayKind::Camera,
        partial_t: 0.0,
    }
}

fn loaded(scene: &Scene, p: &Partition, dir: &tempfile::TempDir) -> Vec<spectralium::ddm::LoadedSubDomain> {
    write_partition_files(scene, p, dir.path())
        .unwrap()
        .iter()
        .map(|f| load_subdomain(f, scene, Duration::ZERO).unwrap())
        .collect()
}

fn assert_close(a: &ImageAccumulator, b: &ImageAccumulator, tol: f64) {
    assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    for i in 0..a.width() * a.height() {
        let (x, y) = (a.pixel(i).to_array(), b.pixel(i).to_array());
        for c in 0..3 {
            let scale = x[c].abs().max(y[c].abs());
            assert!((x[c] - y[c]).abs() <= tol * scale, "pixel {i} channel {c}: {} vs {}", x[c], y[c]);
        }
    }
}

fn balanced(m: &ScheduleMetrics) -> bool {
    m.enqueued == m.retired
}

#[test]
fn single_subdomain_is_the_scene_bounds() {
    let scene = demo::cornell_box();
    let p = partition(&scene, 1).unwrap();
    assert_eq!(p.len(), 1);
    assert_eq!(p.subdomains[0].bounds, scene.bounds());
    assert!(p.subdomains[0].interfaces.is_empty());
    assert_eq!(p.subdomains[0].triangles.len(), scene.triangle_count());
}

#[test]
fn halving_a_cube_gives_one_interface_each() {
    let p = partition(&cube_scene(), 2).unwrap();
    assert_eq!(p.len(), 2);
    assert_eq!(p.subdomains[0].bounds.max.x, 0.5);
    assert_eq!(p.subdomains[1].bounds.min.x, 0.5);
    for (i, s) in p.subdomains.iter().enumerate() {
        assert_eq!(s.interfaces.len(), 1);
        assert_eq!(s.interfaces[0].neighbor, 1 - i);
        assert_eq!(s.interfaces[0].axis, 0);
    }
}

#[test]
fn octants_of_a_cube_have_three_interfaces() {
    let p = partition(&cube_scene(), 8).unwrap();
    // independent adjacency: grid cells sharing a face differ in exactly one
    // coordinate
    let cell = |b: &Aabb| [b.min.x, b.min.y, b.min.z].map(|c| (c * 2.0) as i32);
    for s in &p.subdomains {
        assert_eq!(s.interfaces.len(), 3, "sub-domain {}", s.id);
        let expected: BTreeSet<usize> = p
            .subdomains
            .iter()
            .filter(|o| {
                let (a, b) = (cell(&s.bounds), cell(&o.bounds));
                (0..3).filter(|&k| a[k] != b[k]).count() == 1
            })
            .map(|o| o.id)
            .collect();
        assert_eq!(s.neighbors().collect::<BTreeSet<_>>(), expected);
    }
}

#[test]
fn empty_scene_has_one_empty_subdomain() {
    let scene = Scene::empty(WavelengthGrid::visible());
    for n in [1, 2, 8] {
        let p = partition(&scene, n).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.subdomains[0].triangles.is_empty());
    }
}

#[test]
fn subdomain_count_must_be_a_power_of_two() {
    assert!(matches!(partition(&cube_scene(), 3), Err(DdmError::Config(_))));
    assert!(matches!(partition(&cube_scene(), 0), Err(DdmError::Config(_))));
    assert!(DdmConfig::new(6, 1, 1).validate().is_err());
    assert!(DdmConfig::new(4, 0, 1).validate().is_err());
}

#[test]
fn ray_leaves_through_the_shared_face() {
    let scene = two_box_scene(&[]);
    let p = partition(&scene, 2).unwrap();
    assert_eq!(p.subdomains[0].bounds, Aabb::new(Vec3::ZERO, Vec3::new(4.0, 8.0, 8.0)));
    let dir = tempfile::tempdir().unwrap();
    let subs = loaded(&scene, &p, &dir);
    let msg = message(Vec3::new(1.0, 4.0, 4.0), Vec3::new(1.0, 0.0, 0.0));
    match advance_ray(&msg, &subs[0], &p).unwrap() {
        Advance::Exit { neighbor, message } => {
            assert_eq!(neighbor, 1);
            assert_eq!(message.entry_point, Vec3::new(4.0, 4.0, 4.0));
            assert_eq!(message.partial_t, 3.0);
            assert_eq!(message.direction, msg.direction);
            assert_eq!(message.pixel_id, msg.pixel_id);
        }
        other => panic!("expected exit, got {other:?}"),
    }
}

#[test]
fn ray_hits_geometry_inside_the_box() {
    let v = Vec3::new;
    let scene = two_box_scene(&[[v(2.0, 3.0, 3.0), v(2.0, 5.0, 3.0), v(2.0, 4.0, 5.5)]]);
    let p = partition(&scene, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let subs = loaded(&scene, &p, &dir);
    let msg = message(v(1.0, 4.0, 4.0), v(1.0, 0.0, 0.0));
    match advance_ray(&msg, &subs[0], &p).unwrap() {
        Advance::Hit(h) => {
            assert!((h.t - 1.0).abs() < 1e-12);
            assert!((h.point - v(2.0, 4.0, 4.0)).length() < 1e-12);
        }
        other => panic!("expected hit, got {other:?}"),
    }
}

#[test]
fn ray_leaving_the_scene_escapes() {
    let scene = two_box_scene(&[]);
    let p = partition(&scene, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let subs = loaded(&scene, &p, &dir);
    let msg = message(Vec3::new(1.0, 4.0, 4.0), Vec3::new(-1.0, 0.0, 0.0));
    assert_eq!(advance_ray(&msg, &subs[0], &p).unwrap(), Advance::Escape);
    let up = message(Vec3::new(6.0, 4.0, 4.0), Vec3::new(0.0, 1.0, 0.0));
    assert_eq!(advance_ray(&up, &subs[1], &p).unwrap(), Advance::Escape);
}

#[test]
fn entry_outside_the_box_is_a_protocol_error() {
    let scene = two_box_scene(&[]);
    let p = partition(&scene, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let subs = loaded(&scene, &p, &dir);
    let msg = message(Vec3::new(5.0, 4.0, 4.0), Vec3::new(1.0, 0.0, 0.0));
    assert!(matches!(advance_ray(&msg, &subs[0], &p), Err(DdmError::Protocol(_))));
    // just inside the tolerance is accepted
    let msg = message(Vec3::new(4.0 + 5e-7, 4.0, 4.0), Vec3::new(-1.0, 0.0, 0.0));
    assert!(advance_ray(&msg, &subs[0], &p).is_ok());
}

#[test]
fn reloading_is_transparent() {
    let scene = demo::nave();
    let p = partition(&scene, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_partition_files(&scene, &p, dir.path()).unwrap();
    let first = load_subdomain(&files[2], &scene, Duration::ZERO).unwrap();
    let again = load_subdomain(&files[2], &scene, Duration::ZERO).unwrap();
    let b = p.subdomains[2].bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let entry = Vec3::new(
            rng.gen_range(b.min.x..b.max.x),
            rng.gen_range(b.min.y..b.max.y),
            rng.gen_range(b.min.z..b.max.z),
        );
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalized();
        let msg = message(entry, d);
        assert_eq!(advance_ray(&msg, &first, &p).unwrap(), advance_ray(&msg, &again, &p).unwrap());
    }
}

#[test]
fn partition_files_preserve_triangles_exactly() {
    let scene = demo::cornell_box();
    let all = scene.triangles();
    let p = partition(&scene, 4).unwrap();
    for sub in &p.subdomains {
        let text = partition_file_text(&scene, sub);
        let (header, body) = text.split_once('\n').unwrap();
        assert!(header.starts_with(&format!("subdomain {} ", sub.id)));
        let meshes = parse_mesh_blocks(body, 2, &scene.materials).unwrap();
        let tris = spectralium::scene::mesh_triangles(&meshes);
        let expected: Vec<_> = sub.triangles.iter().map(|&i| all[i]).collect();
        assert_eq!(tris, expected);
    }
}

#[test]
fn missing_partition_file_is_fatal() {
    let scene = cube_scene();
    let err = load_subdomain(std::path::Path::new("/nonexistent/subdomain_0.part"), &scene, Duration::ZERO);
    assert!(matches!(err, Err(DdmError::Io { .. })));
}

fn small_settings() -> RenderSettings {
    RenderSettings { width: 24, height: 24, samples_per_pixel: 2, n_photons: 3000, seed: 11, ..Default::default() }
}

#[test]
fn one_subdomain_matches_single_domain_bit_for_bit() {
    let scene = demo::cornell_box();
    let settings = small_settings();
    let single = render_image(&PreparedScene::new(scene.clone()), &settings).unwrap();
    let (ddm, m) = run_ddm(&scene, &settings, &DdmConfig::new(1, 1, 1)).unwrap();
    assert_eq!(single.xyz_buffer(), ddm.xyz_buffer());
    assert_eq!(m.migrations, 0);
    assert!(balanced(&m));
}

#[test]
fn empty_scene_terminates_without_migrations() {
    let scene = Scene::empty(WavelengthGrid::visible());
    for (n, w, r) in [(1, 1, 1), (2, 4, 1), (8, 8, 4)] {
        let (acc, m) = run_ddm(&scene, &small_settings(), &DdmConfig::new(n, w, r)).unwrap();
        assert_eq!(m.migrations, 0);
        assert!(balanced(&m));
        assert!(acc.xyz_buffer().iter().all(|p| p.to_array() == [0.0; 3]));
    }
}

#[test]
fn cornell_box_four_ways_matches_single_domain() {
    let scene = demo::cornell_box();
    let settings = small_settings();
    let single = render_image(&PreparedScene::new(scene.clone()), &settings).unwrap();
    let (ddm, m) = run_ddm(&scene, &settings, &DdmConfig::new(4, 4, 2)).unwrap();
    assert_close(&single, &ddm, 1e-6);
    assert!(m.migrations > 0);
    assert!(balanced(&m));
    assert!(m.max_resident_observed <= 2);
}

#[test]
fn metrics_add_up_per_worker() {
    let scene = demo::nave();
    let (_, m) = run_ddm(&scene, &small_settings(), &DdmConfig::new(4, 3, 2)).unwrap();
    assert_eq!(m.workers.len(), 3);
    for w in &m.workers {
        // a little slack for timer granularity
        assert!(w.busy + w.idle + w.load <= m.wall_time + Duration::from_millis(5), "{w:?} vs {:?}", m.wall_time);
    }
}

#[test]
fn every_subdomain_loads_once_when_all_fit() {
    let scene = demo::cornell_box();
    let settings = RenderSettings { width: 8, height: 8, n_photons: 200, ..small_settings() };
    let mut cfg = DdmConfig::new(4, 2, 4);
    cfg.load_cost_ms = 200;
    let (_, m) = run_ddm(&scene, &settings, &cfg).unwrap();
    let p = partition(&scene, 4).unwrap();
    let loaded: Vec<usize> = (0..4).filter(|&s| m.load_events[s] > 0).collect();
    assert!(loaded.iter().all(|&s| m.load_events[s] == 1), "{:?}", m.load_events);
    // each load pays its triangle share of the 200 ms
    let total = scene.triangle_count() as f64;
    let expected: f64 = loaded.iter().map(|&s| 0.2 * p.subdomains[s].triangles.len() as f64 / total).sum();
    assert!(m.total_load().as_secs_f64() >= expected, "{:?} < {expected}", m.total_load());
    assert!(m.total_load().as_secs_f64() < expected + 0.15);

    cfg.load_cost_ms = 0;
    let (_, m) = run_ddm(&scene, &settings, &cfg).unwrap();
    assert!(m.total_load() < Duration::from_millis(50), "{:?}", m.total_load());
}

#[test]
fn stalled_run_trips_the_watchdog() {
    let scene = demo::cornell_box();
    let mut cfg = DdmConfig::new(1, 2, 1);
    cfg.load_cost_ms = 400;
    cfg.watchdog = Duration::from_millis(60);
    match run_ddm(&scene, &small_settings(), &cfg) {
        Err(DdmError::Deadlock(dump)) => assert!(dump.contains("sub-domain 0"), "{dump}"),
        other => panic!("expected a deadlock report, got {:?}", other.map(|r| r.1)),
    }
}

fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let mut b = SceneBuilder::default();
    let g = b.grid();
    let mats = [
        b.gray("white", rng.gen_range(0.1..0.9)),
        b.dielectric("glass", crown_glass(g), None, rng.gen_bool(0.5)),
        b.conductor("gold", gold(g)),
    ];
    let v = |rng: &mut ChaCha8Rng| Vec3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
    for _ in 0..rng.gen_range(1..8) {
        let m = mats[rng.gen_range(0..3)];
        let p = [v(rng), v(rng), v(rng)];
        if 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).length() > 1e-6 {
            b.triangle(m, p);
        }
    }
    if rng.gen_bool(0.3) {
        let m = mats[0];
        b.cuboid(m, Vec3::splat(0.2), Vec3::splat(0.2) + v(rng) * 0.6 + Vec3::splat(0.05), rng.gen_bool(0.5));
    }
    for _ in 0..rng.gen_range(0..3) {
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..-0.1), rng.gen_range(-1.0..1.0));
        b.light(SunLight::new(d, Spectrum::constant(g, rng.gen_range(0.5..2.0))));
    }
    b.camera(Camera {
        position: Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(0.2..1.5), rng.gen_range(1.5..3.0)),
        look_at: Vec3::splat(0.5),
        up: Vec3::new(0.0, 1.0, 0.0),
        vertical_fov_deg: 50.0,
        width: 4,
        height: 4,
    });
    b.build()
}

#[test]
fn random_mini_scenes_terminate_and_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let scene = random_scene(&mut rng);
        let settings = RenderSettings {
            width: 4,
            height: 4,
            samples_per_pixel: 1,
            n_photons: rng.gen_range(0..40),
            max_depth: rng.gen_range(1..6),
            seed: case,
            ..Default::default()
        };
        let mut cfg = DdmConfig::new(1 << rng.gen_range(0..4), rng.gen_range(1..5), rng.gen_range(1..5));
        cfg.batch_size = rng.gen_range(1..16);
        cfg.seed_window = rng.gen_range(1..64);
        cfg.watchdog = Duration::from_secs(20);
        let (ddm, m) = run_ddm(&scene, &settings, &cfg).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert!(balanced(&m), "case {case}: {m:?}");
        let single = render_image(&PreparedScene::new(scene), &settings).unwrap();
        assert_close(&single, &ddm, 1e-6);
    }
}

fn arb_message() -> impl Strategy<Value = RayMessage> {
    let v = || (any::<f64>(), any::<f64>(), any::<f64>()).prop_map(|(x, y, z)| Vec3::new(x, y, z));
    (
        v(),
        v(),
        prop::array::uniform32(any::<f32>()),
        any::<u32>(),
        any::<u64>(),
        0u8..4,
        any::<f64>(),
        any::<[f32; 17]>(),
    )
        .prop_map(|(entry_point, direction, head, depth, pixel_id, kind, partial_t, tail)| {
            let mut throughput = [0.0f32; WIRE_SAMPLES];
            for (i, t) in throughput.iter_mut().enumerate() {
                *t = if i < 32 { head[i] } else { tail[i % 17] * (i as f32) };
            }
            RayMessage {
                entry_point,
                direction,
                throughput,
                depth,
                pixel_id,
                kind: RayKind::from_u8(kind).unwrap(),
                partial_t,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn wire_codec_round_trips_byte_exactly(msg in arb_message()) {
        let bytes = msg.encode();
        prop_assert_eq!(bytes.len(), WIRE_SIZE);
        let back = RayMessage::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_covers_and_tiles(seed in any::<u64>(), levels in 0u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = random_scene(&mut rng);
        let n = 1usize << levels;
        let p = partition(&scene, n).unwrap();
        let bounds = scene.bounds();
        // coverage: every triangle appears somewhere
        let mut seen = vec![false; scene.triangle_count()];
        for s in &p.subdomains {
            for &t in &s.triangles {
                seen[t] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        // tiling: volumes add up and interiors are disjoint
        let vol = |b: &Aabb| { let e = b.extent(); e.x * e.y * e.z };
        let sum: f64 = p.subdomains.iter().map(|s| vol(&s.bounds)).sum();
        prop_assert!((sum - vol(&bounds)).abs() <= 1e-9 * vol(&bounds).max(1e-12));
        for a in &p.subdomains {
            for b in &p.subdomains {
                if a.id < b.id {
                    let overlap = (0..3).all(|k| a.bounds.min[k].max(b.bounds.min[k]) < a.bounds.max[k].min(b.bounds.max[k]));
                    prop_assert!(!overlap);
                }
            }
            // interfaces are mutual
            for i in &a.interfaces {
                prop_assert!(p.subdomains[i.neighbor].neighbors().any(|j| j == a.id));
            }
        }
        prop_assert_eq!(split_boxes(bounds, n).len(), n);
    }

    #[test]
    fn exits_land_on_the_shared_boundary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = demo::nave();
        let p = partition(&scene, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let subs = loaded(&scene, &p, &dir);
        let b = p.bounds;
        let mut sub = rng.gen_range(0..8);
        let sb = p.subdomains[sub].bounds;
        let entry = Vec3::new(
            rng.gen_range(sb.min.x..sb.max.x),
            rng.gen_range(sb.min.y..sb.max.y),
            rng.gen_range(sb.min.z..sb.max.z),
        );
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalized();
        let mut msg = message(entry, d);
        for _ in 0..16 {
            match advance_ray(&msg, &subs[sub], &p).unwrap() {
                Advance::Exit { neighbor, message } => {
                    let here = &p.subdomains[sub].bounds;
                    let there = &p.subdomains[neighbor].bounds;
                    prop_assert!(here.contains(message.entry_point, 1e-6));
                    prop_assert!(there.contains(message.entry_point, 1e-6));
                    prop_assert!(b.contains(message.entry_point, 1e-6));
                    prop_assert!(message.partial_t >= msg.partial_t);
                    // touching boxes only
                    prop_assert!(here.expanded(1e-9).overlaps(there));
                    msg = message;
                    sub = neighbor;
                }
                _ => break,
            }
        }
    }
}
