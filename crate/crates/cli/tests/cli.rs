use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spectralium_cli::{
    format_seconds, median, BenchConfig, BenchReport, BenchRow, CliError, RenderArgs, RenderConfig, SceneArgs,
    CSV_HEADER, THREADS_ENV,
};

fn scenes() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn spectralium(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectralium")).args(args).env_remove(THREADS_ENV).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn decode_png(path: &Path) -> (u32, u32, Vec<u8>) {
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(path).unwrap()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    (info.width, info.height, buf)
}

#[test]
fn empty_scene_gives_a_black_png() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("black.png");
    let scene = scenes().join("empty.scn");
    let o = spectralium(&["render", "--scene", path_str(&scene), "--width", "4", "--height", "4", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (w, h, data) = decode_png(&out);
    assert_eq!((w, h), (4, 4));
    assert_eq!(data, vec![0u8; 4 * 4 * 3]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("wall"));
}

#[test]
fn missing_scene_exits_with_parse_code() {
    let o = spectralium(&["render", "--scene", "/no/such/scene.scn", "--out", "/tmp/never.png"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/scene.scn"));
}

#[test]
fn bad_flags_exit_with_parse_code() {
    let scene = scenes().join("empty.scn");
    let s = path_str(&scene);
    for args in [
        vec!["render", "--scene", s, "--bogus"],
        vec!["render", "--scene", s, "--width", "0"],
        vec!["render", "--scene", s, "--subdomains", "3"],
        vec!["render", "--scene", s, "--out", "x.jpg"],
        vec!["bench", "--scene", s, "--workers-list", "1,zero"],
        vec!["render"],
    ] {
        assert_eq!(spectralium(&args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(spectralium(&["--help"]).status.code(), Some(0));
}

#[test]
fn render_failures_exit_with_render_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.png");
    let scene = scenes().join("cornell.scn");
    let o = spectralium(&["render", "--scene", path_str(&scene), "--max-depth", "1000", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn unwritable_output_exits_with_io_code() {
    let scene = scenes().join("empty.scn");
    let o = spectralium(&["render", "--scene", path_str(&scene), "--out", "/no/such/dir/x.png"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes().join("cornell.scn");
    for (ext, workers, subdomains) in [("png", "1", "1"), ("ppm", "1", "1"), ("ppm", "4", "2")] {
        let render = |name: &str| {
            let out = dir.path().join(format!("{name}.{ext}"));
            let o = spectralium(&[
                "render", "--scene", path_str(&scene), "--width", "24", "--height", "24", "--spp", "2",
                "--photons", "2000", "--seed", "9", "--workers", workers, "--subdomains", subdomains,
                "--out", path_str(&out),
            ]);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(out).unwrap()
        };
        let (a, b) = (render("a"), render("b"));
        assert!(!a.is_empty());
        assert_eq!(a, b, "{ext} at {workers} workers");
    }
}

#[test]
fn ppm_output_is_p6() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("img.ppm");
    let scene = scenes().join("cornell.scn");
    let o = spectralium(&["render", "--scene", path_str(&scene), "--width", "5", "--height", "3", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let bytes = std::fs::read(out).unwrap();
    let header = b"P6\n5 3\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 5 * 3 * 3);
}

#[test]
fn thread_variable_overrides_workers() {
    let scene = scenes().join("cornell.scn");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.ppm");
    let run = |env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_spectralium"));
        c.args(["render", "--scene", path_str(&scene), "--width", "8", "--height", "8", "--photons", "100"]);
        c.args(["--subdomains", "2", "--workers", "1", "--out", path_str(&out)]);
        match env {
            Some(v) => c.env(THREADS_ENV, v),
            None => c.env_remove(THREADS_ENV),
        };
        c.output().unwrap()
    };
    assert!(String::from_utf8_lossy(&run(None).stdout).contains("workers 1 |"));
    assert!(String::from_utf8_lossy(&run(Some("3")).stdout).contains("workers 3 |"));
    assert_eq!(run(Some("many")).status.code(), Some(1));

    let args = RenderArgs {
        common: SceneArgs {
            scene: scene.clone(),
            width: 4,
            height: 4,
            spp: 1,
            photons: 0,
            max_depth: 8,
            seed: 0,
            max_resident: 2,
            load_cost_ms: 0,
        },
        subdomains: 1,
        workers: 2,
        out: out.clone(),
    };
    assert_eq!(RenderConfig::from_args(&args, None).unwrap().n_workers, 2);
    assert_eq!(RenderConfig::from_args(&args, Some("8")).unwrap().n_workers, 8);
    assert!(matches!(RenderConfig::from_args(&args, Some("0")), Err(CliError::Parse(_))));
}

fn bench(args: &[&str]) -> (String, Output) {
    let scene = scenes().join("cornell.scn");
    let mut all = vec!["bench", "--scene", path_str(&scene), "--width", "4", "--height", "4", "--photons", "50"];
    all.extend_from_slice(args);
    let o = spectralium(&all);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    (String::from_utf8(o.stdout.clone()).unwrap(), o)
}

fn csv_part(stdout: &str) -> String {
    stdout.lines().take_while(|l| !l.starts_with("median")).map(|l| format!("{l}\n")).collect()
}

#[test]
fn single_cell_bench_has_one_row() {
    let (stdout, _) = bench(&["--workers-list", "1", "--subdomains-list", "1", "--reps", "1"]);
    let rows = BenchReport::parse_csv(&csv_part(&stdout)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].subdomains, rows[0].workers, rows[0].rep), (1, 1, 0));
    assert!(stdout.starts_with(CSV_HEADER));
}

#[test]
fn bench_matrix_reports_csv_medians() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let (stdout, _) = bench(&["--workers-list", "1,2", "--subdomains-list", "1,2,4", "--reps", "3", "--csv", path_str(&csv)]);
    let rows = BenchReport::parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 3);
    let matrix: Vec<&str> = stdout.lines().skip_while(|l| !l.starts_with("median")).collect();
    assert_eq!(matrix.len(), 4, "{stdout}");
    assert!(matrix[1].starts_with("1 domain") && matrix[3].starts_with("4 sub-domains"));
    for (i, s) in [1usize, 2, 4].iter().enumerate() {
        let cells: Vec<&str> = matrix[i + 1].split_whitespace().skip(2).collect();
        assert_eq!(cells.len(), 2);
        for (j, w) in [1usize, 2].iter().enumerate() {
            let mut v: Vec<f64> =
                rows.iter().filter(|r| r.subdomains == *s && r.workers == *w).map(|r| r.wall_seconds).collect();
            assert_eq!(v.len(), 3);
            assert_eq!(cells[j], format_seconds(median(&mut v)));
        }
    }
}

#[test]
fn report_round_trips_through_csv() {
    let rows: Vec<BenchRow> = (0..12)
        .map(|i| BenchRow {
            subdomains: [1, 2][i % 2],
            workers: [16, 32][(i / 2) % 2],
            rep: i / 4,
            wall_seconds: 0.1 + (i as f64).sqrt() / 7.0,
            busy: 1.0 / 3.0,
            idle: 1e-7 * i as f64,
            load: 0.25,
            migrations: i as u64 * 1000,
        })
        .collect();
    let report = BenchReport::from_rows(rows, &[1, 2], &[16, 32]);
    let parsed = BenchReport::parse_csv(&report.csv()).unwrap();
    assert_eq!(parsed, report.rows);
    assert_eq!(BenchReport::from_rows(parsed, &[1, 2], &[16, 32]).medians, report.medians);
    assert!(BenchReport::parse_csv("a,b\n1,2\n").is_err());
}

#[test]
fn table_shaped_bench_fills_sixteen_cells() {
    let (stdout, _) = bench(&["--workers-list", "16,32,64,128", "--subdomains-list", "1,2,4,8", "--reps", "1"]);
    let rows = BenchReport::parse_csv(&csv_part(&stdout)).unwrap();
    assert_eq!(rows.len(), 16);
    let report = BenchReport::from_rows(rows, &[1, 2, 4, 8], &[16, 32, 64, 128]);
    assert_eq!(report.medians.iter().flatten().filter(|m| m.is_finite()).count(), 16);
    let header = stdout.lines().find(|l| l.starts_with("median")).unwrap();
    assert!(header.contains("16 threads") && header.contains("128 threads"));
}

#[test]
fn bench_config_rejects_bad_lists() {
    let common = SceneArgs {
        scene: scenes().join("empty.scn"),
        width: 4,
        height: 4,
        spp: 1,
        photons: 0,
        max_depth: 8,
        seed: 0,
        max_resident: 2,
        load_cost_ms: 0,
    };
    let args = |w: Vec<usize>, s: Vec<usize>, reps| spectralium_cli::BenchArgs {
        common: common.clone(),
        workers_list: w,
        subdomains_list: s,
        reps,
        csv: None,
    };
    assert!(BenchConfig::from_args(&args(vec![1], vec![1], 1)).is_ok());
    assert!(BenchConfig::from_args(&args(vec![0], vec![1], 1)).is_err());
    assert!(BenchConfig::from_args(&args(vec![1], vec![6], 1)).is_err());
    assert!(BenchConfig::from_args(&args(vec![1], vec![1], 0)).is_err());
    assert!(BenchConfig::from_args(&args(vec![], vec![1], 1)).is_err());
}
