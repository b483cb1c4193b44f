#include "sdcc/stream_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "sdcc/moment_estimator.hpp"

namespace sdcc::sim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint32_t kNoWorker = std::numeric_limits<std::uint32_t>::max();

/// Per-worker stream of unit-mean service draws. Draws taken for tasks that
/// were later dropped are handed back so the next served task reuses them.
class DrawStream {
 public:
  DrawStream(std::uint64_t seed, std::uint64_t stream, ServiceLaw law, double shape)
      : law_(law), shape_(shape) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x5dccu};
    gen_.seed(seq);
  }

  double next() {
    if (!returned_.empty()) {
      const double v = returned_.back();
      returned_.pop_back();
      return v;
    }
    switch (law_) {
      case ServiceLaw::Exponential:
        return std::exponential_distribution<double>(1.0)(gen_);
      case ServiceLaw::Gamma:
        return std::gamma_distribution<double>(shape_, 1.0 / shape_)(gen_);
      case ServiceLaw::Deterministic:
        break;
    }
    return 1.0;
  }

  /// `draws` in the order they were taken.
  void give_back(std::span<const double> draws) {
    for (auto it = draws.rbegin(); it != draws.rend(); ++it) returned_.push_back(*it);
  }

 private:
  std::mt19937_64 gen_;
  std::vector<double> returned_;
  ServiceLaw law_;
  double shape_;
};

double slowdown_at(const SimWorker& w, double t) {
  double f = 1.0;
  for (const auto& ph : w.slowdown) {
    if (ph.start <= t) f = ph.factor;
  }
  return f;
}

std::vector<double> make_arrivals(const Scenario& sc, std::uint64_t seed) {
  if (!sc.arrival_times.empty()) {
    if (!std::is_sorted(sc.arrival_times.begin(), sc.arrival_times.end())) {
      throw std::invalid_argument("arrival_times must be sorted");
    }
    return sc.arrival_times;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0u,
                    0xa77u};
  std::mt19937_64 gen(seq);
  std::exponential_distribution<double> gap(sc.lambda);
  std::vector<double> out(sc.jobs);
  double t = 0;
  for (auto& a : out) {
    t += gap(gen);
    a = t;
  }
  return out;
}

void validate(const Scenario& sc) {
  if (sc.workers.empty()) throw std::invalid_argument("scenario has no workers");
  if (!(sc.lambda > 0)) throw std::invalid_argument("arrival rate must be positive");
  if (sc.K < 1) throw std::invalid_argument("K must be at least 1");
  if (!(sc.omega >= 1)) throw std::invalid_argument("omega must be at least 1");
  for (const auto& w : sc.workers) {
    if (!(w.task_rate > 0)) throw std::invalid_argument("worker task rate must be positive");
    if (w.comm_rate && !(*w.comm_rate > 0)) {
      throw std::invalid_argument("worker comm rate must be positive when limited");
    }
  }
  if ((sc.policy == Policy::Static) && sc.phi.size() != sc.workers.size()) {
    throw std::invalid_argument("static policy needs one phi per worker");
  }
  if (!sc.phi.empty() && sc.phi.size() != sc.workers.size()) {
    throw std::invalid_argument("phi must have one entry per worker");
  }
  if (sc.reoptimize_every < 1) throw std::invalid_argument("reoptimize_every must be >= 1");
  if (sc.estimator_block < 1) throw std::invalid_argument("estimator_block must be >= 1");
}

/// Split in force for each job, plus the feedback estimators behind it.
class SplitController {
 public:
  explicit SplitController(const Scenario& sc) : sc_(sc) {
    const std::size_t P = sc.workers.size();
    const double n = sc.K * sc.omega;
    for (std::size_t p = 0; p < P; ++p) {
      const WorkerProfile d = declared_profile(sc, p);
      est_.push_back(MomentEstimate::from_job_moments(d.mean_job_time, d.second_moment_job_time,
                                                      n, sc.alpha, sc.beta));
    }
    switch (sc.policy) {
      case Policy::Uniform:
      case Policy::Ideal:
        phi_ = policy_uniform(P).phi;
        break;
      case Policy::Static:
        phi_ = sc.phi;
        break;
      case Policy::Optimal:
        if (!sc.phi.empty()) {
          phi_ = sc.phi;
        } else {
          phi_ = solve(declared_rates(sc)).phi;
        }
        break;
    }
    history_.push_back(phi_);
    pending_.resize(P);
  }

  const std::vector<double>& phi() const { return phi_; }

  void observe(std::size_t p, double u) {
    auto& buf = pending_[p];
    buf.push_back(u);
    if (static_cast<int>(buf.size()) < sc_.estimator_block) return;
    est_[p].update_block(buf, sc_.block_mode);
    buf.clear();
  }

  double job_mean(std::size_t p) const { return est_[p].job_moments(sc_.K, sc_.omega).mean; }

  /// Called before job j is allocated; estimators must reflect all feedback
  /// received before its arrival.
  void on_arrival(std::size_t j) {
    if (sc_.policy != Policy::Optimal || j == 0 || j % sc_.reoptimize_every != 0) return;
    std::vector<ScaledRates> rates;
    for (std::size_t p = 0; p < est_.size(); ++p) {
      const JobMoments jm = est_[p].job_moments(sc_.K, sc_.omega);
      WorkerProfile w{jm.mean, jm.second, sc_.workers[p].comm_rate};
      rates.push_back(io_symbols() > 0 ? scale(w, sc_.lambda, io_symbols()) : scale(w, sc_.lambda));
    }
    try {
      phi_ = solve(rates).phi;
      history_.push_back(phi_);
    } catch (const InfeasibleError&) {
      // keep the previous split
    }
  }

  std::vector<std::vector<double>> take_history() { return std::move(history_); }

 private:
  double io_symbols() const { return sc_.I_in + sc_.I_out; }

  LoadSplit solve(const std::vector<ScaledRates>& rates) const {
    std::vector<double> lower(rates.size());
    for (std::size_t p = 0; p < rates.size(); ++p) {
      lower[p] = std::min(sc_.phi_lower, 0.5 * rates[p].r_comp);
    }
    return optimal_split(rates, lower);
  }

  const Scenario& sc_;
  std::vector<MomentEstimate> est_;
  std::vector<std::vector<double>> pending_;
  std::vector<double> phi_;
  std::vector<std::vector<double>> history_;
};

/// State shared by both engines.
struct Setup {
  const Scenario& sc;
  std::size_t P;
  std::size_t J;
  int n_tasks;
  double cap;
  double t_enc;
  double t_dec;
  std::vector<double> arrivals;
  std::vector<DrawStream> draws;
  std::vector<double> mean_task;
  std::vector<std::optional<double>> tau_in;  // empty: unlimited link
  std::vector<std::optional<double>> tau_out;
  std::vector<std::size_t> fastest_first;

  Setup(const Scenario& s, std::uint64_t seed)
      : sc(s),
        P(s.workers.size()),
        J(0),
        n_tasks(s.tasks_per_job()),
        cap(0),
        t_enc(s.include_codec ? s.T_enc : 0.0),
        t_dec(s.include_codec ? s.T_dec : 0.0),
        arrivals(make_arrivals(s, seed)) {
    J = arrivals.size();
    cap = s.horizon_factor * static_cast<double>(J) / s.lambda;
    const double per_task = s.K * s.omega;
    for (std::size_t p = 0; p < P; ++p) {
      const auto& w = s.workers[p];
      draws.emplace_back(seed, p + 1, s.law, s.gamma_shape);
      mean_task.push_back(1.0 / w.task_rate);
      if (w.comm_rate) {
        tau_in.emplace_back(s.I_in / per_task / *w.comm_rate);
        tau_out.emplace_back(s.I_out / per_task / *w.comm_rate);
      } else {
        tau_in.emplace_back();
        tau_out.emplace_back();
      }
    }
    fastest_first.resize(P);
    std::iota(fastest_first.begin(), fastest_first.end(), std::size_t{0});
    std::stable_sort(fastest_first.begin(), fastest_first.end(), [&](std::size_t a, std::size_t b) {
      return s.workers[a].task_rate > s.workers[b].task_rate;
    });
  }

  double service_time(std::size_t p, double base, double start) const {
    return base * mean_task[p] * slowdown_at(sc.workers[p], start);
  }
};

void finish_metrics(const Setup& st, SimResult& res, const std::vector<double>& completions,
                    const std::vector<double>& busy) {
  auto& m = res.metrics;
  bool complete = true;
  m.mean_in_order_delay = in_order_delay(st.arrivals, completions, &complete);
  double running = -std::numeric_limits<double>::infinity();
  double latency = 0;
  for (std::size_t j = 0; j < st.J; ++j) {
    auto& jt = res.jobs[j];
    jt.completion = completions[j];
    if (!std::isnan(completions[j])) {
      ++m.jobs_completed;
      latency += completions[j] - st.arrivals[j];
    }
    if (std::isnan(running) || std::isnan(completions[j])) {
      running = kNaN;
    } else {
      running = std::max(running, completions[j]);
    }
    jt.delivery = running;
    if (!std::isnan(running)) ++m.jobs_delivered;
  }
  m.mean_completion_latency = m.jobs_completed ? latency / static_cast<double>(m.jobs_completed) : kNaN;
  m.truncated = !complete;
  m.computational_load =
      static_cast<double>(m.tasks_computed) / (static_cast<double>(st.sc.K) * static_cast<double>(st.J));
  m.per_worker_utilization.resize(st.P);
  for (std::size_t p = 0; p < st.P; ++p) {
    m.per_worker_utilization[p] = m.makespan > 0 ? busy[p] / m.makespan : 0.0;
  }
}

// ---------------------------------------------------------------------------
// Recurrence engine: jobs are processed in arrival order. Each worker's three
// stations are FIFO and a job's tasks only queue behind earlier jobs, so a
// job's timestamps follow from the station free times left by its
// predecessors. Tentative times are computed for every task; with purging the
// tasks that would start after the job resolves are rolled back.
// ---------------------------------------------------------------------------

struct Tentative {
  std::uint32_t worker;
  double in_start, in_done;
  double svc_start, base, svc_done;
  double out_start, out_done;
  double fusion;
  // station state before this task, for rollback
  double prev_in_free, prev_svc_free, prev_out_free, prev_eligible;
};

struct StationState {
  double in_free = 0;
  double svc_free = 0;
  double out_free = 0;
  double eligible = 0;  // ideal policy: compute idle and output queue empty
};

SimResult run_recurrence(const Scenario& sc, std::uint64_t seed) {
  Setup st(sc, seed);
  SplitController ctl(sc);
  SimResult res;
  res.jobs.resize(st.J);
  auto& m = res.metrics;

  std::vector<StationState> ws(st.P);
  std::vector<double> busy(st.P, 0.0);
  std::vector<double> completions(st.J, kNaN);
  std::vector<std::vector<std::pair<double, double>>> samples(st.P);  // (finish, u) per worker
  std::vector<std::size_t> sample_pos(st.P, 0);
  using MinHeap = std::priority_queue<double, std::vector<double>, std::greater<>>;
  std::vector<MinHeap> live(st.P);
  std::vector<std::uint32_t> max_live(st.P, 0);

  std::vector<Tentative> tent;
  std::vector<double> fusion;
  std::vector<double> returned;
  const bool ideal = sc.policy == Policy::Ideal;
  const bool need_estimates = sc.policy == Policy::Optimal;

  for (std::size_t j = 0; j < st.J; ++j) {
    const double a = st.arrivals[j];
    const double d = a + st.t_enc;
    if (need_estimates) {
      for (std::size_t p = 0; p < st.P; ++p) {
        auto& pos = sample_pos[p];
        while (pos < samples[p].size() && samples[p][pos].first < a) ctl.observe(p, samples[p][pos++].second);
      }
    }
    ctl.on_arrival(j);

    if (sc.track_queues) {
      QueueSample qs{d, std::vector<std::uint32_t>(st.P)};
      for (std::size_t p = 0; p < st.P; ++p) {
        while (!live[p].empty() && live[p].top() <= d) live[p].pop();
        qs.length[p] = static_cast<std::uint32_t>(live[p].size());
        max_live[p] = std::max(max_live[p], qs.length[p]);
      }
      res.queues.push_back(std::move(qs));
    }

    tent.clear();
    if (ideal) {
      for (int i = 0; i < st.n_tasks; ++i) {
        std::size_t pick = st.fastest_first.front();
        bool found_idle = false;
        for (std::size_t p : st.fastest_first) {
          if (ws[p].eligible <= d) {
            pick = p;
            found_idle = true;
            break;
          }
        }
        if (!found_idle) {
          for (std::size_t p : st.fastest_first) {
            if (ws[p].eligible < ws[pick].eligible) pick = p;
          }
        }
        auto& w = ws[pick];
        Tentative t{};
        t.worker = static_cast<std::uint32_t>(pick);
        t.prev_in_free = w.in_free;
        t.prev_svc_free = w.svc_free;
        t.prev_out_free = w.out_free;
        t.prev_eligible = w.eligible;
        t.in_start = t.in_done = t.svc_start = std::max(d, w.eligible);
        t.base = st.draws[pick].next();
        t.svc_done = t.svc_start + st.service_time(pick, t.base, t.svc_start);
        if (st.tau_out[pick]) {
          t.out_start = std::max(t.svc_done, w.out_free);
          t.out_done = t.out_start + *st.tau_out[pick];
          w.eligible = std::max(t.svc_done, w.out_free);
          w.out_free = t.out_done;
          t.fusion = t.out_done;
        } else {
          t.out_start = t.out_done = t.fusion = t.svc_done;
          w.eligible = t.svc_done;
        }
        w.svc_free = t.svc_done;
        tent.push_back(t);
      }
    } else {
      const std::vector<int> counts = allocate_tasks_static(ctl.phi(), st.n_tasks);
      for (std::size_t p = 0; p < st.P; ++p) {
        auto& w = ws[p];
        for (int i = 0; i < counts[p]; ++i) {
          Tentative t{};
          t.worker = static_cast<std::uint32_t>(p);
          t.prev_in_free = w.in_free;
          t.prev_svc_free = w.svc_free;
          t.prev_out_free = w.out_free;
          if (st.tau_in[p]) {
            t.in_start = std::max(d, w.in_free);
            t.in_done = t.in_start + *st.tau_in[p];
            w.in_free = t.in_done;
          } else {
            t.in_start = t.in_done = d;
          }
          t.svc_start = std::max(t.in_done, w.svc_free);
          t.base = st.draws[p].next();
          t.svc_done = t.svc_start + st.service_time(p, t.base, t.svc_start);
          w.svc_free = t.svc_done;
          if (st.tau_out[p]) {
            t.out_start = std::max(t.svc_done, w.out_free);
            t.out_done = t.out_start + *st.tau_out[p];
            w.out_free = t.out_done;
            t.fusion = t.out_done;
          } else {
            t.out_start = t.out_done = t.fusion = t.svc_done;
          }
          tent.push_back(t);
        }
      }
    }

    fusion.resize(tent.size());
    for (std::size_t i = 0; i < tent.size(); ++i) fusion[i] = tent[i].fusion;
    double t_res = std::numeric_limits<double>::infinity();
    if (static_cast<int>(fusion.size()) >= sc.K) {
      std::nth_element(fusion.begin(), fusion.begin() + (sc.K - 1), fusion.end());
      t_res = fusion[static_cast<std::size_t>(sc.K - 1)];
    }

    // Per worker, the tasks failing a station form a suffix of that worker's
    // FIFO order; each station is restored to its state before the first
    // failing task and the draws of uncomputed tasks are handed back.
    std::uint32_t computed_here = 0;
    std::vector<std::size_t> order(tent.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return tent[x].worker < tent[y].worker; });

    for (std::size_t k = 0; k < order.size();) {
      const std::size_t p = tent[order[k]].worker;
      std::size_t end = k;
      while (end < order.size() && tent[order[end]].worker == p) ++end;
      auto& w = ws[p];
      const bool link_in = !ideal && st.tau_in[p].has_value();
      const bool link_out = st.tau_out[p].has_value();
      bool in_failed = false;
      bool svc_failed = false;
      bool out_failed = false;
      const Tentative* last_computed = nullptr;
      bool last_output_dropped = false;
      returned.clear();
      for (std::size_t q = k; q < end; ++q) {
        const auto& t = tent[order[q]];
        const bool sent = !sc.purge || !link_in || t.in_start < t_res;
        const bool arrived = sent && (!sc.purge || !link_in || t.in_done < t_res);
        const bool computed = arrived && (!sc.purge || t.svc_start < t_res);
        const bool output = computed && (!sc.purge || !link_out || t.out_start < t_res);
        if (!sent && !in_failed) {
          w.in_free = t.prev_in_free;
          in_failed = true;
        }
        if (!computed && !svc_failed) {
          w.svc_free = t.prev_svc_free;
          svc_failed = true;
        }
        if (!output && !out_failed) {
          w.out_free = t.prev_out_free;
          out_failed = true;
        }
        if (!computed) {
          returned.push_back(t.base);
          ++m.tasks_purged;
          if (sc.track_queues && !ideal) live[p].push(t_res);
          if (sc.record_tasks) {
            res.tasks.push_back({static_cast<std::uint32_t>(j),
                                 ideal ? kNoWorker : static_cast<std::uint32_t>(p), d, kNaN, t_res,
                                 TaskStatus::Purged, false});
          }
          continue;
        }
        last_computed = &t;
        last_output_dropped = !output;
        const bool in_horizon = t.svc_done <= st.cap;
        if (in_horizon) {
          ++m.tasks_computed;
          ++computed_here;
          busy[p] += t.svc_done - t.svc_start;
          m.makespan = std::max(m.makespan, t.svc_done);
          if (need_estimates) samples[p].emplace_back(t.svc_done, t.svc_done - t.svc_start);
        }
        if (output && link_out && t.out_done <= st.cap) m.makespan = std::max(m.makespan, t.out_done);
        if (sc.track_queues) live[p].push(t.svc_done);
        if (sc.record_tasks) {
          res.tasks.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(p),
                               ideal ? t.svc_start : d, t.svc_start, t.svc_done,
                               in_horizon ? TaskStatus::Done : TaskStatus::Pending, false});
        }
      }
      if (ideal) {
        if (last_computed == nullptr) {
          w.eligible = tent[order[k]].prev_eligible;
        } else if (last_output_dropped) {
          w.eligible = std::max(last_computed->svc_done, t_res);
        } else if (link_out) {
          w.eligible = std::max(last_computed->svc_done, last_computed->prev_out_free);
        } else {
          w.eligible = last_computed->svc_done;
        }
      }
      if (!returned.empty()) st.draws[p].give_back(returned);
      k = end;
    }

    const double completion = t_res + st.t_dec;
    if (completion <= st.cap) {
      completions[j] = completion;
      m.makespan = std::max(m.makespan, completion);
    }
    res.jobs[j].id = static_cast<std::uint32_t>(j);
    res.jobs[j].arrival = a;
    res.jobs[j].tasks_generated = static_cast<std::uint32_t>(tent.size());
    res.jobs[j].tasks_computed = computed_here;
    m.tasks_generated += tent.size();
  }

  if (sc.track_queues) m.max_queue_length = max_live;
  finish_metrics(st, res, completions, busy);
  res.splits = ctl.take_history();
  return res;
}

// ---------------------------------------------------------------------------
// Event-queue engine. Needed when feedback changes the schedule mid-run.
// ---------------------------------------------------------------------------

enum class EventType : std::uint8_t { Arrival, Dispatch, InDone, SvcDone, OutDone };

struct Event {
  double time;
  std::uint64_t seq;
  EventType type;
  std::uint32_t idx;
  bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

struct TaskRec {
  std::uint32_t job;
  std::uint32_t worker;
  double enqueue;
  double start;
  double finish;
  TaskStatus status;
  bool reinforcement;
};

struct WorkerQueues {
  std::deque<std::uint32_t> inq, cq, outq;
  std::optional<std::uint32_t> in_cur, svc_cur, out_cur;
  std::map<std::uint32_t, int> pending;  // job -> tasks not yet computed or dropped
  std::uint32_t live = 0;
};

struct JobRec {
  int fused = 0;
  bool resolved = false;
  double completion = kNaN;
  std::vector<double> phi;
  std::vector<double> est_at_arrival;
  double mu_fb = 0;
  std::uint32_t generated = 0;
  std::uint32_t computed = 0;
  bool dispatched = false;
};

class EventEngine {
 public:
  EventEngine(const Scenario& sc, std::uint64_t seed)
      : sc_(sc), st_(sc, seed), ctl_(sc), ideal_(sc.policy == Policy::Ideal) {}

  SimResult run() {
    wq_.resize(st_.P);
    jobs_.resize(st_.J);
    busy_.assign(st_.P, 0.0);
    max_live_.assign(st_.P, 0);
    for (std::size_t j = 0; j < st_.J; ++j) push(st_.arrivals[j], EventType::Arrival, j);

    while (!heap_.empty()) {
      const Event ev = heap_.top();
      if (ev.time > st_.cap) break;
      heap_.pop();
      now_ = ev.time;
      res_.metrics.makespan = std::max(res_.metrics.makespan, now_);
      switch (ev.type) {
        case EventType::Arrival: on_arrival(ev.idx); break;
        case EventType::Dispatch: on_dispatch(ev.idx); break;
        case EventType::InDone: on_in_done(ev.idx); break;
        case EventType::SvcDone: on_svc_done(ev.idx); break;
        case EventType::OutDone: on_out_done(ev.idx); break;
      }
    }
    return finish();
  }

 private:
  void push(double t, EventType type, std::size_t idx) {
    heap_.push(Event{t, seq_++, type, static_cast<std::uint32_t>(idx)});
  }

  std::uint32_t new_task(std::uint32_t job, std::uint32_t worker, bool reinforcement) {
    tasks_.push_back({job, worker, now_, kNaN, kNaN, TaskStatus::Pending, reinforcement});
    ++jobs_[job].generated;
    ++res_.metrics.tasks_generated;
    if (reinforcement) ++res_.metrics.reinforcement_tasks;
    return static_cast<std::uint32_t>(tasks_.size() - 1);
  }

  void attach(std::uint32_t id, std::size_t p) {
    auto& w = wq_[p];
    tasks_[id].worker = static_cast<std::uint32_t>(p);
    ++w.pending[tasks_[id].job];
    ++w.live;
    max_live_[p] = std::max(max_live_[p], w.live);
  }

  void detach(std::uint32_t id) {
    auto& w = wq_[tasks_[id].worker];
    auto it = w.pending.find(tasks_[id].job);
    if (--it->second == 0) w.pending.erase(it);
    --w.live;
  }

  void on_arrival(std::size_t j) {
    ctl_.on_arrival(j);
    auto& job = jobs_[j];
    job.phi = ctl_.phi();
    job.est_at_arrival.resize(st_.P);
    for (std::size_t p = 0; p < st_.P; ++p) job.est_at_arrival[p] = ctl_.job_mean(p);
    push(st_.arrivals[j] + st_.t_enc, EventType::Dispatch, j);
  }

  void on_dispatch(std::size_t j) {
    if (sc_.track_queues) {
      QueueSample qs{now_, std::vector<std::uint32_t>(st_.P)};
      for (std::size_t p = 0; p < st_.P; ++p) qs.length[p] = wq_[p].live;
      res_.queues.push_back(std::move(qs));
    }
    auto& job = jobs_[j];
    job.dispatched = true;
    const auto J32 = static_cast<std::uint32_t>(j);
    if (ideal_) {
      for (int i = 0; i < st_.n_tasks; ++i) central_.push_back(new_task(J32, kNoWorker, false));
      assign_idle();
      return;
    }
    const std::vector<int> counts = allocate_tasks_static(job.phi, st_.n_tasks);
    for (std::size_t p = 0; p < st_.P; ++p) {
      for (int i = 0; i < counts[p]; ++i) {
        const std::uint32_t id = new_task(J32, static_cast<std::uint32_t>(p), false);
        attach(id, p);
        (st_.tau_in[p] ? wq_[p].inq : wq_[p].cq).push_back(id);
      }
      kick(p);
    }
  }

  void kick(std::size_t p) {
    auto& w = wq_[p];
    if (st_.tau_in[p] && !w.in_cur && !w.inq.empty()) {
      w.in_cur = w.inq.front();
      w.inq.pop_front();
      push(now_ + *st_.tau_in[p], EventType::InDone, p);
    }
    if (!w.svc_cur && !w.cq.empty()) {
      const std::uint32_t id = w.cq.front();
      w.cq.pop_front();
      start_service(p, id);
    }
  }

  void start_service(std::size_t p, std::uint32_t id) {
    auto& w = wq_[p];
    w.svc_cur = id;
    tasks_[id].start = now_;
    const double u = st_.service_time(p, st_.draws[p].next(), now_);
    push(now_ + u, EventType::SvcDone, p);
  }

  void on_in_done(std::size_t p) {
    auto& w = wq_[p];
    const std::uint32_t id = *w.in_cur;
    w.in_cur.reset();
    if (tasks_[id].status != TaskStatus::Purged) {
      if (tasks_[id].reinforcement) {
        w.cq.push_front(id);
      } else {
        w.cq.push_back(id);
      }
    }
    kick(p);
  }

  void on_svc_done(std::size_t p) {
    auto& w = wq_[p];
    const std::uint32_t id = *w.svc_cur;
    w.svc_cur.reset();
    auto& task = tasks_[id];
    task.finish = now_;
    task.status = TaskStatus::Done;
    detach(id);
    const double u = now_ - task.start;
    busy_[p] += u;
    ctl_.observe(p, u);
    ++res_.metrics.tasks_computed;
    ++jobs_[task.job].computed;

    if (st_.tau_out[p]) {
      if (!(sc_.purge && jobs_[task.job].resolved)) {
        w.outq.push_back(id);
        if (!w.out_cur) start_output(p);
      }
    } else {
      fuse(task.job);
    }
    if (sc_.reinforce && !ideal_) reinforce();
    if (ideal_) {
      assign_idle();
    } else {
      kick(p);
    }
  }

  void start_output(std::size_t p) {
    auto& w = wq_[p];
    w.out_cur = w.outq.front();
    w.outq.pop_front();
    push(now_ + *st_.tau_out[p], EventType::OutDone, p);
  }

  void on_out_done(std::size_t p) {
    auto& w = wq_[p];
    const std::uint32_t id = *w.out_cur;
    w.out_cur.reset();
    fuse(tasks_[id].job);
    if (!w.outq.empty()) start_output(p);
    if (ideal_) assign_idle();
  }

  void fuse(std::uint32_t j) {
    auto& job = jobs_[j];
    ++job.fused;
    if (job.resolved || job.fused < sc_.K) return;
    job.resolved = true;
    job.completion = now_ + st_.t_dec;
    if (sc_.purge) purge(j);
  }

  void purge(std::uint32_t j) {
    auto drop = [&](std::uint32_t id) {
      tasks_[id].status = TaskStatus::Purged;
      tasks_[id].finish = now_;
      ++res_.metrics.tasks_purged;
    };
    for (std::size_t p = 0; p < st_.P; ++p) {
      auto& w = wq_[p];
      auto sweep = [&](std::deque<std::uint32_t>& q, bool queued_work) {
        std::erase_if(q, [&](std::uint32_t id) {
          if (tasks_[id].job != j) return false;
          if (queued_work) {
            drop(id);
            detach(id);
          }
          return true;
        });
      };
      sweep(w.inq, true);
      sweep(w.cq, true);
      sweep(w.outq, false);
      if (w.in_cur && tasks_[*w.in_cur].job == j && tasks_[*w.in_cur].status == TaskStatus::Pending) {
        drop(*w.in_cur);
        detach(*w.in_cur);
      }
    }
    std::erase_if(central_, [&](std::uint32_t id) {
      if (tasks_[id].job != j) return false;
      drop(id);
      return true;
    });
  }

  void assign_idle() {
    while (!central_.empty()) {
      std::optional<std::size_t> pick;
      for (std::size_t p : st_.fastest_first) {
        if (!wq_[p].svc_cur && wq_[p].outq.empty()) {
          pick = p;
          break;
        }
      }
      if (!pick) return;
      const std::uint32_t id = central_.front();
      central_.pop_front();
      tasks_[id].enqueue = now_;
      attach(id, *pick);
      start_service(*pick, id);
    }
  }

  // Feedback-driven reinforcement, evaluated for every unresolved job after
  // each completion report.
  void reinforce() {
    std::vector<double> est(st_.P);
    for (std::size_t p = 0; p < st_.P; ++p) est[p] = ctl_.job_mean(p);

    while (first_open_ < st_.J && jobs_[first_open_].resolved) ++first_open_;
    for (std::size_t j = first_open_; j < st_.J; ++j) {
      auto& job = jobs_[j];
      if (!job.dispatched) break;
      if (job.resolved) continue;
      const auto J32 = static_cast<std::uint32_t>(j);

      double mu_e = 0;
      double mu_r = 0;
      int members = 0;
      for (std::size_t p = 0; p < st_.P; ++p) {
        if (!wq_[p].pending.contains(J32)) continue;
        ++members;
        mu_e += job.phi[p] / job.est_at_arrival[p];
        mu_r += job.phi[p] / est[p];
      }
      if (members == 0) continue;
      mu_e /= members;
      mu_r /= members;
      const double delta = mu_e + job.mu_fb - mu_r;
      if (!(delta > sc_.threshold)) continue;

      // Workers already past every job up to j.
      std::vector<std::size_t> past;
      for (std::size_t p = 0; p < st_.P; ++p) {
        const auto& pend = wq_[p].pending;
        if (pend.empty() || pend.begin()->first > J32) past.push_back(p);
      }
      std::stable_sort(past.begin(), past.end(),
                       [&](std::size_t a, std::size_t b) { return est[a] < est[b]; });
      double mu_n = 0;
      std::vector<std::size_t> chosen;
      for (std::size_t p : past) {
        if (mu_n + 1.0 / est[p] <= delta) {
          mu_n += 1.0 / est[p];
          chosen.push_back(p);
        }
      }
      if (chosen.empty()) continue;

      const double missing = sc_.K * (sc_.omega - 1.0) - job.fused;
      const double M = std::max(missing * mu_n, 0.0);
      const int useful = sc_.K - job.fused;
      for (std::size_t p : chosen) {
        const int n = std::min(static_cast<int>(std::ceil(M / (mu_n * est[p]))), useful);
        if (n <= 0) continue;
        auto& q = st_.tau_in[p] ? wq_[p].inq : wq_[p].cq;
        for (int i = 0; i < n; ++i) {
          const std::uint32_t id = new_task(J32, static_cast<std::uint32_t>(p), true);
          attach(id, p);
          q.push_front(id);
        }
        res_.reinforcements.push_back({now_, J32, static_cast<std::uint32_t>(p),
                                       static_cast<std::uint32_t>(n), delta, mu_n});
        kick(p);
      }
      job.mu_fb += mu_n;
    }
  }

  SimResult finish() {
    auto& m = res_.metrics;
    for (const auto& w : wq_) {
      if (!w.pending.empty() || !w.outq.empty() || w.out_cur) m.truncated = true;
    }
    std::vector<double> completions(st_.J, kNaN);
    res_.jobs.resize(st_.J);
    for (std::size_t j = 0; j < st_.J; ++j) {
      const auto& job = jobs_[j];
      if (job.resolved && job.completion <= st_.cap) {
        completions[j] = job.completion;
        m.makespan = std::max(m.makespan, job.completion);
      }
      res_.jobs[j].id = static_cast<std::uint32_t>(j);
      res_.jobs[j].arrival = st_.arrivals[j];
      res_.jobs[j].tasks_generated = job.generated;
      res_.jobs[j].tasks_computed = job.computed;
    }
    if (sc_.track_queues) m.max_queue_length = max_live_;
    const bool cut = m.truncated;
    finish_metrics(st_, res_, completions, busy_);
    m.truncated = m.truncated || (cut && !heap_.empty());
    if (sc_.record_tasks) {
      res_.tasks.reserve(tasks_.size());
      for (const auto& t : tasks_) {
        res_.tasks.push_back({t.job, t.worker, t.enqueue, t.start, t.finish, t.status, t.reinforcement});
      }
    }
    res_.splits = ctl_.take_history();
    return std::move(res_);
  }

  const Scenario& sc_;
  Setup st_;
  SplitController ctl_;
  bool ideal_;
  SimResult res_;
  double now_ = 0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> heap_;
  std::vector<WorkerQueues> wq_;
  std::vector<JobRec> jobs_;
  std::vector<TaskRec> tasks_;
  std::deque<std::uint32_t> central_;
  std::vector<double> busy_;
  std::vector<std::uint32_t> max_live_;
  std::size_t first_open_ = 0;
};

}  // namespace

SimResult run_simulation(const Scenario& scenario, std::uint64_t seed) {
  validate(scenario);
  Engine engine = scenario.engine;
  if (engine == Engine::Auto) engine = scenario.reinforce ? Engine::EventQueue : Engine::Recurrence;
  if (engine == Engine::Recurrence && scenario.reinforce) {
    throw std::invalid_argument("reinforcement needs the event-queue engine");
  }
  if (engine == Engine::Recurrence) return run_recurrence(scenario, seed);
  return EventEngine(scenario, seed).run();
}

int Scenario::tasks_per_job() const { return task_count(K, omega); }

double Scenario::horizon() const { return horizon_factor * static_cast<double>(jobs) / lambda; }

int task_count(int K, double omega) {
  const double exact = static_cast<double>(K) * omega;
  return static_cast<int>(std::ceil(exact - 1e-9 * static_cast<double>(K)));
}

std::vector<int> allocate_tasks_static(std::span<const double> phi, int total_tasks) {
  const std::size_t P = phi.size();
  std::vector<int> counts(P, 0);
  if (P == 0 || total_tasks <= 0) return counts;
  const double sum = std::accumulate(phi.begin(), phi.end(), 0.0);
  if (!(sum > 0)) throw std::invalid_argument("allocate_tasks_static: split sums to zero");
  std::vector<double> remainder(P);
  int assigned = 0;
  for (std::size_t p = 0; p < P; ++p) {
    if (phi[p] < 0) throw std::invalid_argument("allocate_tasks_static: negative share");
    const double exact = phi[p] / sum * total_tasks;
    counts[p] = static_cast<int>(std::floor(exact));
    remainder[p] = exact - counts[p];
    assigned += counts[p];
  }
  std::vector<std::size_t> order(P);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total_tasks; i = (i + 1) % P) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

LoadSplit policy_uniform(std::size_t workers) {
  if (workers == 0) throw std::invalid_argument("policy_uniform: no workers");
  return LoadSplit{std::vector<double>(workers, 1.0 / static_cast<double>(workers)), std::nullopt};
}

double in_order_delay(std::span<const double> arrivals, std::span<const double> completions,
                      bool* complete) {
  if (arrivals.size() != completions.size()) {
    throw std::invalid_argument("in_order_delay: size mismatch");
  }
  if (complete) *complete = true;
  double release = -std::numeric_limits<double>::infinity();
  double total = 0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < arrivals.size(); ++j) {
    if (std::isnan(completions[j])) {
      if (complete) *complete = false;
      break;
    }
    release = std::max(release, completions[j]);
    total += release - arrivals[j];
    ++n;
  }
  return n ? total / static_cast<double>(n) : kNaN;
}

WorkerProfile declared_profile(const Scenario& sc, std::size_t worker) {
  const auto& w = sc.workers.at(worker);
  const double m = 1.0 / w.task_rate;
  double second = 0;
  switch (sc.law) {
    case ServiceLaw::Exponential:
      second = 2 * m * m;
      break;
    case ServiceLaw::Deterministic:
      second = m * m;
      break;
    case ServiceLaw::Gamma:
      second = m * m * (1.0 + 1.0 / sc.gamma_shape);
      break;
  }
  const double n = sc.K * sc.omega;
  return WorkerProfile{n * m, n * second + n * (n - 1) * m * m, w.comm_rate};
}

std::vector<ScaledRates> declared_rates(const Scenario& sc) {
  std::vector<ScaledRates> out;
  const double io = sc.I_in + sc.I_out;
  for (std::size_t p = 0; p < sc.workers.size(); ++p) {
    const WorkerProfile w = declared_profile(sc, p);
    out.push_back(io > 0 ? scale(w, sc.lambda, io) : scale(w, sc.lambda));
  }
  return out;
}

SlopeTest regression_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("regression_slope: size mismatch");
  SlopeTest out;
  out.n = x.size();
  if (out.n < 3) return out;
  const double n = static_cast<double>(out.n);
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0;
  double sxy = 0;
  for (std::size_t i = 0; i < out.n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0)) return out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < out.n; ++i) {
    const double r = y[i] - out.intercept - out.slope * x[i];
    sse += r * r;
  }
  const double dof = n - 2;
  const double se = std::sqrt(sse / dof / sxx);
  if (!(se > 0)) {
    out.p_value = out.slope == 0 ? 1.0 : 0.0;
    return out;
  }
  const boost::math::students_t dist(dof);
  out.p_value = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(out.slope / se)));
  return out;
}

}  // namespace sdcc::sim
