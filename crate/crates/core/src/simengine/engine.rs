use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{
    DeadlineStats, PriorityClass, Quantiles, Result, ServiceTime, SimError, SimMetrics, SimScenario, StationStats,
    TraceRecord, HEARTBEAT, PACKET_IN, RECOMPUTE,
};
use crate::placement::check_feasibility;

const NS_PER_S: f64 = 1e9;
const NS_PER_MS: f64 = 1e6;

fn class_of_rank(rank: usize) -> PriorityClass {
    match rank {
        0 => PriorityClass::RealTime,
        1 => PriorityClass::LatencySensitive,
        _ => PriorityClass::ComputeIntensive,
    }
}

fn ns(seconds: f64) -> u64 {
    (seconds * NS_PER_S).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JobKind {
    Stage { partition: usize, stage: usize },
    Heartbeat,
    Recompute,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    kind: JobKind,
    app: usize,
    class: PriorityClass,
    /// When the originating event was generated.
    origin: u64,
    /// When the job reached its current station.
    arrived: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    PacketGen { partition: usize },
    HeartbeatGen { partition: usize },
    RecomputeGen { partition: usize },
    Arrival { server: usize, job: usize },
    Completion { server: usize },
}

#[derive(Default)]
struct Station {
    queues: [VecDeque<Job>; 3],
    /// Waiting jobs per priority class, whatever queue holds them.
    waiting: [u64; 3],
    in_service: Option<Job>,
    in_system: u64,
    last_change: u64,
    busy_ns: u64,
    area: f64,
    arrivals: u64,
    sojourn_ns: u128,
    sojourn_count: u64,
}

struct Window {
    start: u64,
    end: u64,
}

impl Window {
    fn overlap(&self, from: u64, to: u64) -> u64 {
        to.min(self.end).saturating_sub(from.max(self.start))
    }

    fn contains(&self, t: u64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Per-slice lookup: `(app index, partition) -> server`.
struct Layout {
    server_of: BTreeMap<(usize, usize), usize>,
}

struct Sim<'a> {
    s: &'a SimScenario,
    rng: ChaCha8Rng,
    now: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<(u64, u64, Event)>>,
    pending: Vec<Job>,
    free_pending: Vec<usize>,
    stations: Vec<Station>,
    window: Window,
    layout: Layout,
    pipeline: Vec<usize>,
    heartbeat_app: Option<usize>,
    recompute_app: Option<usize>,
    hop_ns: u64,
    samples: BTreeMap<String, Vec<f64>>,
    app_samples: Vec<Vec<f64>>,
    completed_pipelines: u64,
    generated: u64,
    completed: u64,
    hb: DeadlineStats,
    inversions: u64,
    idle_with_work: u64,
    trace: Vec<TraceRecord>,
}

/// Runs one scenario to completion. Refuses placements that break CPU,
/// memory, or isolation limits; deadlines are not part of that check.
pub fn run(scenario: &SimScenario) -> Result<SimMetrics> {
    scenario.validate()?;
    let report = check_feasibility(&scenario.graph, &scenario.servers, &scenario.placement)?;
    if !report.is_feasible(false) {
        return Err(SimError::Infeasible(Box::new(report)));
    }
    let mut sim = Sim::new(scenario)?;
    sim.start();
    sim.run_until(sim.window.end);
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn new(s: &'a SimScenario) -> Result<Self> {
        let app_index = |name: &str| s.apps.iter().position(|a| a.app == name);
        let mut server_of = BTreeMap::new();
        for (i, slice) in s.graph.slices().iter().enumerate() {
            let app = app_index(&slice.app).ok_or_else(|| SimError::MissingApp(slice.app.clone()))?;
            server_of.insert((app, slice.partition), s.placement.assignment()[i]);
        }
        let pipeline = s
            .roles
            .pipeline
            .iter()
            .map(|name| app_index(name).ok_or_else(|| SimError::MissingApp(name.clone())))
            .collect::<Result<Vec<_>>>()?;
        let end = ns(s.duration_s);
        Ok(Self {
            s,
            rng: ChaCha8Rng::seed_from_u64(s.seed),
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            pending: Vec::new(),
            free_pending: Vec::new(),
            stations: (0..s.servers.count).map(|_| Station::default()).collect(),
            window: Window {
                start: ns(s.duration_s * s.warmup_fraction),
                end,
            },
            layout: Layout { server_of },
            pipeline,
            heartbeat_app: app_index(&s.roles.heartbeat),
            recompute_app: app_index(&s.roles.recompute),
            hop_ns: ns(s.cross_server_hop_ms / 1e3),
            samples: [PACKET_IN, HEARTBEAT, RECOMPUTE].iter().map(|k| (k.to_string(), Vec::new())).collect(),
            app_samples: vec![Vec::new(); s.apps.len()],
            completed_pipelines: 0,
            generated: 0,
            completed: 0,
            hb: DeadlineStats::default(),
            inversions: 0,
            idle_with_work: 0,
            trace: Vec::new(),
        })
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq, ev)));
    }

    fn server(&self, app: usize, partition: usize) -> Option<usize> {
        self.layout.server_of.get(&(app, partition)).copied()
    }

    fn start(&mut self) {
        let partitions: Vec<usize> = {
            let mut p: Vec<usize> = self.s.graph.slices().iter().map(|s| s.partition).collect();
            p.sort_unstable();
            p.dedup();
            p
        };
        for p in partitions {
            let first_stage = self.pipeline.first().and_then(|&a| self.server(a, p));
            if self.s.packet_in_rate > 0.0 && first_stage.is_some() {
                let t = self.exp_gap(self.s.packet_in_rate);
                self.schedule(t, Event::PacketGen { partition: p });
            }
            if self.s.heartbeat_rate > 0.0 && self.heartbeat_app.and_then(|a| self.server(a, p)).is_some() {
                let period = 1.0 / self.s.heartbeat_rate;
                let t = ns(self.rng.random::<f64>() * period);
                self.schedule(t, Event::HeartbeatGen { partition: p });
            }
            if self.recompute_app.and_then(|a| self.server(a, p)).is_some() {
                let t = ns(self.rng.random::<f64>() * self.s.link_failure_interval_s);
                self.schedule(t, Event::RecomputeGen { partition: p });
            }
        }
    }

    fn exp_gap(&mut self, rate: f64) -> u64 {
        let gap = Exp::new(rate).expect("rate > 0").sample(&mut self.rng);
        ns(gap).max(1)
    }

    fn service_ns(&mut self, app: usize) -> u64 {
        let ms = match self.s.apps[app].service {
            ServiceTime::Fixed { ms } => ms,
            ServiceTime::Exponential { mean_ms } => Exp::new(1.0 / mean_ms).expect("mean > 0").sample(&mut self.rng),
        };
        ((ms * NS_PER_MS).round() as u64).max(1)
    }

    fn run_until(&mut self, end: u64) {
        while let Some(&Reverse((t, _, _))) = self.heap.peek() {
            if t >= end {
                break;
            }
            let Reverse((t, _, ev)) = self.heap.pop().expect("peeked");
            self.now = t;
            match ev {
                Event::PacketGen { partition } => {
                    let app = self.pipeline[0];
                    self.generated += 1;
                    self.submit(JobKind::Stage { partition, stage: 0 }, app, partition, t);
                    let gap = self.exp_gap(self.s.packet_in_rate);
                    self.schedule(t + gap, ev);
                }
                Event::HeartbeatGen { partition } => {
                    let app = self.heartbeat_app.expect("scheduled only with an HB slice");
                    self.submit(JobKind::Heartbeat, app, partition, t);
                    self.schedule(t + ns(1.0 / self.s.heartbeat_rate), ev);
                }
                Event::RecomputeGen { partition } => {
                    let app = self.recompute_app.expect("scheduled only with a recompute slice");
                    self.submit(JobKind::Recompute, app, partition, t);
                    self.schedule(t + ns(self.s.link_failure_interval_s), ev);
                }
                Event::Arrival { server, job } => {
                    let job_data = self.pending[job];
                    self.free_pending.push(job);
                    self.enqueue(server, job_data);
                }
                Event::Completion { server } => self.complete(server),
            }
        }
        self.now = end;
    }

    fn submit(&mut self, kind: JobKind, app: usize, partition: usize, origin: u64) {
        let server = self.server(app, partition).expect("workloads only target placed slices");
        let job = Job {
            kind,
            app,
            class: self.s.apps[app].class,
            origin,
            arrived: self.now,
        };
        self.enqueue(server, job);
    }

    fn send_later(&mut self, server: usize, job: Job, at: u64) {
        let slot = match self.free_pending.pop() {
            Some(i) => {
                self.pending[i] = job;
                i
            }
            None => {
                self.pending.push(job);
                self.pending.len() - 1
            }
        };
        self.schedule(at, Event::Arrival { server, job: slot });
    }

    fn touch(&mut self, server: usize) {
        let now = self.now;
        let st = &mut self.stations[server];
        let span = self.window.overlap(st.last_change, now);
        st.area += st.in_system as f64 * span as f64;
        if st.in_service.is_some() {
            st.busy_ns += span;
        }
        st.last_change = now;
    }

    fn enqueue(&mut self, server: usize, mut job: Job) {
        self.touch(server);
        job.arrived = self.now;
        let queue = if self.s.prioritization { job.class.rank() } else { 0 };
        let in_window = self.window.contains(self.now);
        let st = &mut self.stations[server];
        st.in_system += 1;
        if in_window {
            st.arrivals += 1;
        }
        st.queues[queue].push_back(job);
        st.waiting[job.class.rank()] += 1;
        if st.in_service.is_none() {
            self.begin_service(server);
        }
    }

    fn begin_service(&mut self, server: usize) {
        let st = &mut self.stations[server];
        if st.in_service.is_some() {
            return;
        }
        let Some(q) = (0..3).find(|&q| !st.queues[q].is_empty()) else {
            return;
        };
        let job = st.queues[q].pop_front().expect("nonempty");
        st.in_service = Some(job);
        st.waiting[job.class.rank()] -= 1;
        if self.s.prioritization || self.s.trace {
            let best_waiting = (0..3).find(|&c| st.waiting[c] > 0).map(class_of_rank);
            if self.s.prioritization && best_waiting.is_some_and(|c| c.rank() < job.class.rank()) {
                self.inversions += 1;
            }
            if self.s.trace {
                self.trace.push(TraceRecord {
                    time_ns: self.now,
                    server,
                    class: job.class,
                    best_waiting,
                });
            }
        }
        let service = self.service_ns(job.app);
        self.schedule(self.now + service, Event::Completion { server });
    }

    fn complete(&mut self, server: usize) {
        self.touch(server);
        let now = self.now;
        let st = &mut self.stations[server];
        let job = st.in_service.take().expect("completion without a job in service");
        st.in_system -= 1;
        if self.window.contains(job.arrived) {
            st.sojourn_ns += (now - job.arrived) as u128;
            st.sojourn_count += 1;
            self.app_samples[job.app].push((now - job.arrived) as f64 / NS_PER_MS);
        }
        let origin_in_window = self.window.contains(job.origin);
        let latency_ms = (now - job.origin) as f64 / NS_PER_MS;
        match job.kind {
            JobKind::Stage { partition, stage } => {
                if stage + 1 < self.pipeline.len() {
                    let app = self.pipeline[stage + 1];
                    let next = self.server(app, partition).expect("pipeline slices are placed");
                    let next_job = Job {
                        kind: JobKind::Stage { partition, stage: stage + 1 },
                        app,
                        class: self.s.apps[app].class,
                        origin: job.origin,
                        arrived: now,
                    };
                    if next == server {
                        self.enqueue(next, next_job);
                    } else {
                        self.send_later(next, next_job, now + self.hop_ns);
                    }
                } else {
                    self.completed += 1;
                    if self.window.contains(now) {
                        self.completed_pipelines += 1;
                    }
                    if origin_in_window {
                        self.samples.get_mut(PACKET_IN).expect("key").push(latency_ms);
                    }
                }
            }
            JobKind::Heartbeat => {
                if origin_in_window {
                    self.hb.total += 1;
                    if latency_ms > self.s.heartbeat_deadline_ms {
                        self.hb.missed += 1;
                    }
                    self.samples.get_mut(HEARTBEAT).expect("key").push(latency_ms);
                }
            }
            JobKind::Recompute => {
                if origin_in_window {
                    self.samples.get_mut(RECOMPUTE).expect("key").push(latency_ms);
                }
            }
        }
        self.begin_service(server);
        let st = &self.stations[server];
        if st.in_service.is_none() && st.queues.iter().any(|q| !q.is_empty()) {
            self.idle_with_work += 1;
        }
    }

    fn finish(mut self) -> SimMetrics {
        for server in 0..self.stations.len() {
            self.touch(server);
        }
        // heart-beats still in the system: late ones count as missed
        let deadline_ns = ns(self.s.heartbeat_deadline_ms / 1e3);
        let unfinished: Vec<Job> = self
            .stations
            .iter()
            .flat_map(|st| st.in_service.iter().chain(st.queues.iter().flatten()))
            .copied()
            .collect();
        for job in unfinished {
            if job.kind == JobKind::Heartbeat && self.window.contains(job.origin) {
                if self.now - job.origin > deadline_ns {
                    self.hb.total += 1;
                    self.hb.missed += 1;
                } else {
                    self.hb.censored += 1;
                }
            }
        }
        self.hb.miss_fraction = if self.hb.total == 0 {
            0.0
        } else {
            self.hb.missed as f64 / self.hb.total as f64
        };

        let window_ns = (self.window.end - self.window.start) as f64;
        let window_s = window_ns / NS_PER_S;
        let partitions = {
            let mut p: Vec<usize> = self.s.graph.slices().iter().map(|s| s.partition).collect();
            p.sort_unstable();
            p.dedup();
            p.len().max(1)
        };
        let stations = self
            .stations
            .iter()
            .enumerate()
            .map(|(server, st)| StationStats {
                server,
                arrival_rate: st.arrivals as f64 / window_s,
                mean_sojourn_s: if st.sojourn_count == 0 {
                    0.0
                } else {
                    st.sojourn_ns as f64 / st.sojourn_count as f64 / NS_PER_S
                },
                mean_in_system: st.area / window_ns,
            })
            .collect();
        SimMetrics {
            offered_rate: self.s.packet_in_rate,
            throughput: self.completed_pipelines as f64 / window_s / partitions as f64,
            packets_generated: self.generated,
            packets_completed: self.completed,
            window_s,
            latency_ms: self
                .samples
                .iter()
                .filter_map(|(k, v)| Quantiles::from_samples(v).map(|q| (k.clone(), q)))
                .collect(),
            app_latency_ms: self
                .app_samples
                .iter()
                .enumerate()
                .filter_map(|(i, v)| Quantiles::from_samples(v).map(|q| (self.s.apps[i].app.clone(), q)))
                .collect(),
            heartbeat: self.hb,
            cpu_utilization: self.stations.iter().map(|st| st.busy_ns as f64 / window_ns).collect(),
            stations,
            priority_inversions: self.inversions,
            idle_with_work: self.idle_with_work,
            samples: self.samples,
            trace: self.trace,
        }
    }
}
