//! Demand-driven scheduling of ray queues over a bounded set of resident
//! sub-domains.
//!
//! Every sub-domain owns a queue of rays waiting to be traced through it.
//! Workers repeatedly take the next action under one scheduler lock: seed
//! more primary rays, load a sub-domain with a long queue, swap out a
//! drained one, or trace a batch from the longest resident queue. Loads run
//! on the worker that decided them, so tracing continues meanwhile.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use super::message::{throughput_to_wire, RayMessage};
use super::partition::{load_subdomain, partition, write_partition_files, LoadedSubDomain, Partition};
use super::traverse::{advance_segment, locate, Segment};
use super::{DdmConfig, DdmError};
use crate::render::transport::{
    build_maps, camera_vertex, emit_photon, scatter_camera, scatter_photon, Deposit, Emit, Emitter, PathVertex,
    PhotonPath, ShadeContext,
};
use crate::render::{deposit, resolve_camera, ImageAccumulator, RayKind, RenderSettings, TermKey, RAY_EPS};
use crate::scene::{Camera, GeoRay, Scene};
use crate::spectral::Spectrum;

/// Photons emitted per seeding step.
const SEED_PHOTONS: usize = 512;
const WAIT: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WorkerMetrics {
    /// Tracing and seeding.
    pub busy: Duration,
    /// Waiting for work and making decisions.
    pub idle: Duration,
    /// Loading sub-domains.
    pub load: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleMetrics {
    pub wall_time: Duration,
    pub workers: Vec<WorkerMetrics>,
    /// Rays handed across a sub-domain interface.
    pub migrations: u64,
    pub max_resident_observed: usize,
    /// Loads per sub-domain, over both passes.
    pub load_events: Vec<u32>,
    pub enqueued: u64,
    pub retired: u64,
}

impl ScheduleMetrics {
    pub fn total_busy(&self) -> Duration {
        self.workers.iter().map(|w| w.busy).sum()
    }

    pub fn total_idle(&self) -> Duration {
        self.workers.iter().map(|w| w.idle).sum()
    }

    pub fn total_load(&self) -> Duration {
        self.workers.iter().map(|w| w.load).sum()
    }

    pub fn total_loads(&self) -> u64 {
        self.load_events.iter().map(|&n| n as u64).sum()
    }
}

/// Trips when the progress counter stands still for longer than `bound`
/// while rays are still in flight.
#[derive(Debug, Clone)]
pub struct Watchdog {
    bound: Duration,
    last_progress: u64,
    last_change: Instant,
}

impl Watchdog {
    pub fn new(bound: Duration, now: Instant) -> Self {
        Watchdog { bound, last_progress: 0, last_change: now }
    }

    /// Returns true when the run should be aborted.
    pub fn observe(&mut self, progress: u64, pending: bool, now: Instant) -> bool {
        if progress != self.last_progress || !pending {
            self.last_progress = progress;
            self.last_change = now;
            return false;
        }
        now.duration_since(self.last_change) > self.bound
    }
}

#[derive(Debug, Clone)]
enum Payload {
    Camera { vertex: PathVertex, sample: u32 },
    Shadow { pixel: u64, key: TermKey },
    Photon(PhotonPath),
}

/// A queued ray. The exact origin travels with it; on the wire it is
/// rebuilt from the entry point and the distance traveled.
#[derive(Debug, Clone)]
struct Envelope {
    ray: GeoRay,
    t_enter: f64,
    payload: Payload,
}

impl Envelope {
    #[allow(dead_code)]
    fn to_message(&self) -> RayMessage {
        let (throughput, depth, pixel_id, kind) = match &self.payload {
            Payload::Camera { vertex, .. } => (
                throughput_to_wire(vertex.ray.throughput.values()),
                vertex.ray.depth,
                vertex.ray.pixel_id,
                vertex.ray.kind,
            ),
            Payload::Shadow { pixel, .. } => ([1.0; super::WIRE_SAMPLES], 0, *pixel, RayKind::Shadow),
            Payload::Photon(p) => (throughput_to_wire(p.flux.values()), p.depth, p.id, RayKind::Photon),
        };
        RayMessage {
            entry_point: self.ray.at(self.t_enter),
            direction: self.ray.direction,
            throughput,
            depth,
            pixel_id,
            kind,
            partial_t: self.t_enter,
        }
    }
}

enum PassKind<'a> {
    Photons { emitter: Emitter, n_photons: usize },
    Camera { camera: &'a Camera, acc: &'a ImageAccumulator },
}

struct Pass<'a> {
    ctx: ShadeContext<'a>,
    kind: PassKind<'a>,
    units: usize,
    /// Shadow probes in flight, keyed by pixel and term.
    pending: Mutex<HashMap<(u64, TermKey), [f64; 3]>>,
    deposits: Mutex<Vec<Deposit>>,
}

struct SchedState {
    resident: Vec<Option<Arc<LoadedSubDomain>>>,
    loading: Vec<bool>,
    plain_loads: usize,
    swap_in_progress: bool,
    /// The drained sub-domain a running swap will replace.
    swap_victim: Option<usize>,
    seeding: bool,
    next_unit: usize,
    seeding_done: bool,
    done: bool,
    max_resident_seen: usize,
    load_events: Vec<u32>,
    /// Decision tick at which each sub-domain was last worked on.
    last_used: Vec<u64>,
    tick: u64,
    error: Option<DdmError>,
}

impl SchedState {
    fn resident_count(&self) -> usize {
        self.resident.iter().filter(|r| r.is_some()).count()
    }
}

enum Action {
    Seed(usize),
    Load { sub: usize, swap: bool },
    Process(usize, Arc<LoadedSubDomain>),
    Wait,
    Exit,
}

struct Engine<'a> {
    scene: &'a Scene,
    partition: &'a Partition,
    files: Vec<PathBuf>,
    cfg: &'a DdmConfig,
    settings: &'a RenderSettings,
    max_resident: usize,
    load_cost: Vec<Duration>,
    state: Mutex<SchedState>,
    cv: Condvar,
    queues: Vec<Mutex<VecDeque<Envelope>>>,
    queue_len: Vec<AtomicUsize>,
    hist_max: Vec<AtomicUsize>,
    in_flight: AtomicUsize,
    enqueued: AtomicU64,
    retired: AtomicU64,
    migrations: AtomicU64,
    progress: AtomicU64,
    abort: AtomicBool,
}

/// Renders `scene` with the domain-decomposed scheduler. With one
/// sub-domain and one worker the image is identical to `render_image`;
/// otherwise it matches up to floating-point ties.
pub fn run_ddm(
    scene: &Scene,
    settings: &RenderSettings,
    cfg: &DdmConfig,
) -> Result<(ImageAccumulator, ScheduleMetrics), DdmError> {
    let start = Instant::now();
    settings.validate()?;
    cfg.validate()?;
    let camera = resolve_camera(scene, settings)?;
    let partition = partition(scene, cfg.n_subdomains)?;
    let dir = tempfile::tempdir().map_err(|source| DdmError::Io { path: std::env::temp_dir(), source })?;
    let files = write_partition_files(scene, &partition, dir.path())?;
    let engine = Engine::new(scene, &partition, files, cfg, settings);
    let mut metrics = ScheduleMetrics { workers: vec![WorkerMetrics::default(); cfg.n_workers], ..Default::default() };

    let maps = if settings.n_photons > 0 {
        let emitted = settings.n_photons * scene.lights.len();
        let deposits = match Emitter::new(&scene.bounds()) {
            Some(emitter) => {
                let pass = Pass::new(
                    ShadeContext::new(scene, None, settings),
                    PassKind::Photons { emitter, n_photons: settings.n_photons },
                    emitted.div_ceil(SEED_PHOTONS),
                );
                engine.run_pass(&pass, &mut metrics)?;
                pass.deposits.into_inner()
            }
            None => Vec::new(),
        };
        Some(build_maps(deposits, emitted))
    } else {
        None
    };

    let acc = ImageAccumulator::new(settings.width, settings.height);
    let pass = Pass::new(
        ShadeContext::new(scene, maps.as_ref(), settings),
        PassKind::Camera { camera: &camera, acc: &acc },
        settings.height,
    );
    engine.run_pass(&pass, &mut metrics)?;

    let state = engine.state.lock();
    metrics.max_resident_observed = state.max_resident_seen;
    metrics.load_events = state.load_events.clone();
    drop(state);
    metrics.migrations = engine.migrations.load(Ordering::SeqCst);
    metrics.enqueued = engine.enqueued.load(Ordering::SeqCst);
    metrics.retired = engine.retired.load(Ordering::SeqCst);
    metrics.wall_time = start.elapsed();
    Ok((acc, metrics))
}

impl<'a> Pass<'a> {
    fn new(ctx: ShadeContext<'a>, kind: PassKind<'a>, units: usize) -> Self {
        Pass { ctx, kind, units, pending: Mutex::new(HashMap::new()), deposits: Mutex::new(Vec::new()) }
    }
}

impl<'a> Engine<'a> {
    fn new(
        scene: &'a Scene,
        partition: &'a Partition,
        files: Vec<PathBuf>,
        cfg: &'a DdmConfig,
        settings: &'a RenderSettings,
    ) -> Self {
        let n = partition.len();
        let total = scene.triangle_count().max(1) as f64;
        let load_cost = partition
            .subdomains
            .iter()
            .map(|s| Duration::from_secs_f64(cfg.load_cost_ms as f64 * 1e-3 * s.triangles.len() as f64 / total))
            .collect();
        Engine {
            scene,
            partition,
            files,
            cfg,
            settings,
            max_resident: cfg.max_resident.min(n),
            load_cost,
            state: Mutex::new(SchedState {
                resident: vec![None; n],
                loading: vec![false; n],
                plain_loads: 0,
                swap_in_progress: false,
                swap_victim: None,
                seeding: false,
                next_unit: 0,
                seeding_done: false,
                done: false,
                max_resident_seen: 0,
                load_events: vec![0; n],
                last_used: vec![0; n],
                tick: 0,
                error: None,
            }),
            cv: Condvar::new(),
            queues: (0..n).map(|_| Mutex::new(VecDeque::new())).collect(),
            queue_len: (0..n).map(|_| AtomicUsize::new(0)).collect(),
            hist_max: (0..n).map(|_| AtomicUsize::new(0)).collect(),
            in_flight: AtomicUsize::new(0),
            enqueued: AtomicU64::new(0),
            retired: AtomicU64::new(0),
            migrations: AtomicU64::new(0),
            progress: AtomicU64::new(0),
            abort: AtomicBool::new(false),
        }
    }

    fn run_pass(&self, pass: &Pass, metrics: &mut ScheduleMetrics) -> Result<(), DdmError> {
        {
            let mut st = self.state.lock();
            st.seeding = false;
            st.next_unit = 0;
            st.seeding_done = pass.units == 0;
            st.done = false;
        }
        let finished = AtomicBool::new(false);
        let results: Vec<WorkerMetrics> = std::thread::scope(|s| {
            let watchdog = s.spawn(|| self.watch(&finished));
            let handles: Vec<_> = (0..self.cfg.n_workers).map(|_| s.spawn(|| self.work(pass))).collect();
            let out = handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
            finished.store(true, Ordering::SeqCst);
            watchdog.thread().unpark();
            watchdog.join().expect("watchdog panicked");
            out
        });
        for (m, r) in metrics.workers.iter_mut().zip(results) {
            m.busy += r.busy;
            m.idle += r.idle;
            m.load += r.load;
        }
        if let Some(e) = self.state.lock().error.take() {
            return Err(e);
        }
        if self.in_flight.load(Ordering::SeqCst) != 0 {
            return Err(DdmError::Protocol("pass ended with rays in flight".into()));
        }
        Ok(())
    }

    fn watch(&self, finished: &AtomicBool) {
        let mut dog = Watchdog::new(self.cfg.watchdog, Instant::now());
        let tick = (self.cfg.watchdog / 4).min(Duration::from_millis(50));
        while !finished.load(Ordering::SeqCst) {
            std::thread::park_timeout(tick);
            let progress = self.progress.load(Ordering::SeqCst);
            let pending = !self.state.lock().done;
            if dog.observe(progress, pending, Instant::now()) {
                let dump = self.dump();
                self.fail(DdmError::Deadlock(dump));
                return;
            }
        }
    }

    fn dump(&self) -> String {
        let st = self.state.lock();
        let mut out = format!(
            "in flight {}, seeding {} (unit {}, done {}), swap in progress {}\n",
            self.in_flight.load(Ordering::SeqCst),
            st.seeding,
            st.next_unit,
            st.seeding_done,
            st.swap_in_progress
        );
        for s in 0..self.partition.len() {
            let _ = writeln!(
                out,
                "sub-domain {s}: queue {} (max {}), resident {}, loading {}",
                self.queue_len[s].load(Ordering::SeqCst),
                self.hist_max[s].load(Ordering::SeqCst),
                st.resident[s].is_some(),
                st.loading[s]
            );
        }
        out
    }

    fn fail(&self, e: DdmError) {
        let mut st = self.state.lock();
        if st.error.is_none() {
            st.error = Some(e);
        }
        self.abort.store(true, Ordering::SeqCst);
        st.done = true;
        self.cv.notify_all();
    }

    fn notify(&self) {
        let _guard = self.state.lock();
        self.cv.notify_all();
    }

    fn qlen(&self, s: usize) -> usize {
        self.queue_len[s].load(Ordering::SeqCst)
    }

    fn theta(&self, s: usize) -> usize {
        let h = self.hist_max[s].load(Ordering::SeqCst) as f64;
        self.cfg.theta_min.max((self.cfg.theta_fraction * h).ceil() as usize)
    }

    fn decide(&self, st: &mut SchedState) -> Action {
        if st.done || self.abort.load(Ordering::SeqCst) {
            return Action::Exit;
        }
        let n = self.partition.len();
        let in_flight = self.in_flight.load(Ordering::SeqCst);
        if !st.seeding_done && in_flight < self.cfg.seed_window {
            // Fill the window before tracing so queues reflect the whole
            // wave and sub-domains are not loaded for a partial one.
            if st.seeding {
                return Action::Wait;
            }
            st.seeding = true;
            return Action::Seed(st.next_unit);
        }
        // Longest waiting queue outside memory.
        let candidate = (0..n)
            .filter(|&s| st.resident[s].is_none() && !st.loading[s] && self.qlen(s) > 0)
            .max_by_key(|&s| (self.qlen(s), std::cmp::Reverse(s)));
        if let Some(c) = candidate {
            if st.resident_count() + st.plain_loads < self.max_resident {
                st.loading[c] = true;
                st.plain_loads += 1;
                return Action::Load { sub: c, swap: false };
            }
            if !st.swap_in_progress {
                // A drained sub-domain nobody is tracing has nothing to
                // overlap with: free its slot now so loads can run side by side.
                let idle = (0..n)
                    .filter(|&r| {
                        st.resident[r].as_ref().is_some_and(|a| Arc::strong_count(a) == 1) && self.qlen(r) == 0
                    })
                    .min_by_key(|&r| (st.last_used[r], r));
                if let Some(r) = idle {
                    st.resident[r] = None;
                    st.loading[c] = true;
                    st.plain_loads += 1;
                    return Action::Load { sub: c, swap: false };
                }
                let drained = (0..n)
                    .filter(|&r| {
                        st.resident[r].is_some() && self.qlen(r) < self.theta(r) && self.qlen(c) > self.qlen(r)
                    })
                    .min_by_key(|&r| (self.qlen(r), st.last_used[r], r));
                if let Some(r) = drained {
                    st.loading[c] = true;
                    st.swap_in_progress = true;
                    st.swap_victim = Some(r);
                    return Action::Load { sub: c, swap: true };
                }
            }
        }
        // The sub-domain about to be swapped out is finished first, so it
        // leaves memory empty instead of being reloaded for its remainder.
        let victim = st.swap_victim.filter(|&v| st.resident[v].is_some() && self.qlen(v) > 0);
        let busiest = victim.or_else(|| {
            (0..n)
                .filter(|&s| st.resident[s].is_some() && self.qlen(s) > 0)
                .max_by_key(|&s| (self.qlen(s), std::cmp::Reverse(s)))
        });
        if let Some(s) = busiest {
            st.tick += 1;
            st.last_used[s] = st.tick;
            return Action::Process(s, st.resident[s].clone().unwrap());
        }
        if st.seeding_done && in_flight == 0 {
            st.done = true;
            self.cv.notify_all();
            return Action::Exit;
        }
        Action::Wait
    }

    fn work(&self, pass: &Pass) -> WorkerMetrics {
        let mut m = WorkerMetrics::default();
        loop {
            let t0 = Instant::now();
            let action = {
                let mut st = self.state.lock();
                let a = self.decide(&mut st);
                if matches!(a, Action::Wait) {
                    self.cv.wait_for(&mut st, WAIT);
                }
                a
            };
            let result = match action {
                Action::Exit => {
                    m.idle += t0.elapsed();
                    return m;
                }
                Action::Wait => {
                    m.idle += t0.elapsed();
                    continue;
                }
                Action::Seed(unit) => {
                    self.seed(pass, unit);
                    let mut st = self.state.lock();
                    st.seeding = false;
                    st.next_unit += 1;
                    if st.next_unit >= pass.units {
                        st.seeding_done = true;
                    }
                    self.cv.notify_all();
                    m.busy += t0.elapsed();
                    Ok(())
                }
                Action::Load { sub, swap } => {
                    let r = self.load(sub, swap);
                    m.load += t0.elapsed();
                    r
                }
                Action::Process(s, sub) => {
                    let batch: Vec<Envelope> = {
                        let mut q = self.queues[s].lock();
                        let k = q.len().min(self.cfg.batch_size);
                        self.queue_len[s].fetch_sub(k, Ordering::SeqCst);
                        q.drain(..k).collect()
                    };
                    let r = self.process(pass, &sub, batch);
                    m.busy += t0.elapsed();
                    r
                }
            };
            self.progress.fetch_add(1, Ordering::SeqCst);
            if let Err(e) = result {
                self.fail(e);
            }
        }
    }

    fn load(&self, s: usize, swap: bool) -> Result<(), DdmError> {
        let loaded = load_subdomain(&self.files[s], self.scene, self.load_cost[s]);
        let mut st = self.state.lock();
        st.loading[s] = false;
        if swap {
            st.swap_in_progress = false;
        } else {
            st.plain_loads -= 1;
        }
        let loaded = loaded?;
        if loaded.id != s {
            return Err(DdmError::Protocol(format!("partition file for sub-domain {s} holds {}", loaded.id)));
        }
        st.resident[s] = Some(Arc::new(loaded));
        st.load_events[s] += 1;
        st.tick += 1;
        st.last_used[s] = st.tick;
        let planned = if swap { st.swap_victim.take() } else { None };
        while st.resident_count() > self.max_resident {
            let victim = planned
                .filter(|&v| v != s && st.resident[v].is_some())
                .or_else(|| {
                    (0..self.partition.len())
                        .filter(|&r| r != s && st.resident[r].is_some())
                        .min_by_key(|&r| (self.qlen(r), st.last_used[r], r))
                })
                .expect("another resident sub-domain");
            st.resident[victim] = None;
        }
        st.max_resident_seen = st.max_resident_seen.max(st.resident_count());
        self.cv.notify_all();
        Ok(())
    }

    fn push_all(&self, mut out: Vec<(usize, Envelope)>) {
        out.sort_by_key(|(s, _)| *s);
        let mut items = out.into_iter().peekable();
        while let Some((s, first)) = items.next() {
            let mut q = self.queues[s].lock();
            q.push_back(first);
            while let Some((_, e)) = items.next_if(|(t, _)| *t == s) {
                q.push_back(e);
            }
            let len = q.len();
            self.queue_len[s].store(len, Ordering::SeqCst);
            self.hist_max[s].fetch_max(len, Ordering::SeqCst);
        }
    }

    /// Queues a new ray at its first sub-domain; false when it misses the
    /// scene entirely.
    fn spawn(&self, out: &mut Vec<(usize, Envelope)>, ray: GeoRay, payload: Payload) -> bool {
        match locate(self.partition, &ray, 0.0) {
            Some((s, t_enter)) => {
                out.push((s, Envelope { ray, t_enter, payload }));
                true
            }
            None => false,
        }
    }

    fn seed(&self, pass: &Pass, unit: usize) {
        let mut out = Vec::new();
        match &pass.kind {
            PassKind::Camera { camera, acc } => {
                let spp = self.settings.samples_per_pixel;
                for x in 0..self.settings.width {
                    let pixel = unit * self.settings.width + x;
                    acc.add_samples(pixel, spp);
                    for sample in 0..spp {
                        let v = camera_vertex(camera, self.scene.grid, self.settings.seed, pixel as u64, sample, spp);
                        self.spawn(&mut out, v.ray.geo(), Payload::Camera { vertex: v, sample });
                    }
                }
            }
            PassKind::Photons { emitter, n_photons } => {
                let lights = pass.ctx.lights();
                let total = n_photons * lights.len();
                for id in unit * SEED_PHOTONS..((unit + 1) * SEED_PHOTONS).min(total) {
                    let light = &lights[id / n_photons];
                    let p = emit_photon(self.settings.seed, emitter, light, id as u64, *n_photons);
                    self.spawn(&mut out, p.ray, Payload::Photon(p));
                }
            }
        }
        self.in_flight.fetch_add(out.len(), Ordering::SeqCst);
        self.enqueued.fetch_add(out.len() as u64, Ordering::SeqCst);
        self.push_all(out);
        self.notify();
    }

    fn process(&self, pass: &Pass, sub: &LoadedSubDomain, batch: Vec<Envelope>) -> Result<(), DdmError> {
        let ctx = &pass.ctx;
        let mut out: Vec<(usize, Envelope)> = Vec::new();
        let mut spawned = 0usize;
        let mut migrated = 0usize;
        let mut emits = Vec::new();
        let mut deposits = Vec::new();
        let n = batch.len();
        for env in batch {
            let any_hit = matches!(env.payload, Payload::Shadow { .. });
            match advance_segment(self.partition, sub, &env.ray, env.t_enter, RAY_EPS, any_hit)? {
                Segment::Exit { next, t_enter } => {
                    migrated += 1;
                    out.push((next, Envelope { t_enter, ..env }));
                }
                Segment::Blocked => {
                    if let Payload::Shadow { pixel, key } = env.payload {
                        pass.pending.lock().remove(&(pixel, key));
                    }
                }
                Segment::Escape => {
                    if let (Payload::Shadow { pixel, key }, PassKind::Camera { acc, .. }) = (&env.payload, &pass.kind) {
                        if let Some(xyz) = pass.pending.lock().remove(&(*pixel, *key)) {
                            acc.add_term(*pixel as usize, *key, xyz);
                        }
                    }
                }
                Segment::Hit(hit) => match (env.payload, &pass.kind) {
                    (Payload::Camera { vertex, sample }, PassKind::Camera { acc, .. }) => {
                        let pixel = vertex.ray.pixel_id;
                        scatter_camera(ctx, &vertex, &hit, &mut emits);
                        for e in emits.drain(..) {
                            match e {
                                Emit::Term { term, value } => {
                                    deposit(ctx, acc, pixel as usize, TermKey { sample, node: vertex.node, term }, &value)
                                }
                                Emit::Shadow { term, ray, value } => {
                                    let key = TermKey { sample, node: vertex.node, term };
                                    self.shadow_probe(pass, acc, &mut out, &mut spawned, pixel, key, ray, &value);
                                }
                                Emit::Child(c) => {
                                    let ray = c.ray.geo();
                                    spawned += self.spawn(&mut out, ray, Payload::Camera { vertex: c, sample }) as usize;
                                }
                            }
                        }
                    }
                    (Payload::Photon(path), _) => {
                        let (dep, next) = scatter_photon(ctx, &path, &hit);
                        deposits.extend(dep);
                        if let Some(p) = next {
                            spawned += self.spawn(&mut out, p.ray, Payload::Photon(p)) as usize;
                        }
                    }
                    _ => return Err(DdmError::Protocol("ray kind does not belong to this pass".into())),
                },
            }
        }
        if !deposits.is_empty() {
            pass.deposits.lock().extend(deposits);
        }
        let retired = n - migrated;
        self.in_flight.fetch_add(spawned, Ordering::SeqCst);
        self.enqueued.fetch_add(spawned as u64, Ordering::SeqCst);
        self.migrations.fetch_add(migrated as u64, Ordering::SeqCst);
        self.push_all(out);
        self.retired.fetch_add(retired as u64, Ordering::SeqCst);
        self.in_flight.fetch_sub(retired, Ordering::SeqCst);
        self.notify();
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn shadow_probe(
        &self,
        pass: &Pass,
        acc: &ImageAccumulator,
        out: &mut Vec<(usize, Envelope)>,
        spawned: &mut usize,
        pixel: u64,
        key: TermKey,
        ray: GeoRay,
        value: &Spectrum,
    ) {
        let xyz = pass.ctx.xyz(value);
        if xyz == [0.0; 3] {
            return;
        }
        match locate(self.partition, &ray, 0.0) {
            Some((s, t_enter)) => {
                pass.pending.lock().insert((pixel, key), xyz);
                out.push((s, Envelope { ray, t_enter, payload: Payload::Shadow { pixel, key } }));
                *spawned += 1;
            }
            None => acc.add_term(pixel as usize, key, xyz),
        }
    }
}
