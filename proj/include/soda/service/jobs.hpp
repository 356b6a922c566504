#pragma once

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/error.hpp"
#include "soda/fs.hpp"
#include "soda/hash.hpp"

namespace soda::service {

using json = nlohmann::json;

enum class JobKind { Extraction, BrandPersona, Comparative, PersonaBatch };
enum class JobStatus { Queued, Running, Done, Failed };

inline std::string to_string(JobKind k) {
  switch (k) {
    case JobKind::Extraction: return "extraction";
    case JobKind::BrandPersona: return "brand_persona";
    case JobKind::Comparative: return "comparative";
    case JobKind::PersonaBatch: return "persona_batch";
  }
  return "extraction";
}

inline JobKind parse_job_kind(const std::string& s) {
  if (s == "extraction") return JobKind::Extraction;
  if (s == "brand_persona") return JobKind::BrandPersona;
  if (s == "comparative") return JobKind::Comparative;
  if (s == "persona_batch") return JobKind::PersonaBatch;
  fail(ErrorCode::InvalidArgument, "unknown analysis kind '" + s + "'");
}

inline std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "queued";
}

inline JobStatus parse_job_status(const std::string& s) {
  if (s == "queued") return JobStatus::Queued;
  if (s == "running") return JobStatus::Running;
  if (s == "done") return JobStatus::Done;
  if (s == "failed") return JobStatus::Failed;
  fail(ErrorCode::ParseError, "unknown job state '" + s + "'");
}

/// queued -> running -> done | failed; a queued job may also fail directly.
inline bool legal_transition(JobStatus from, JobStatus to) {
  switch (from) {
    case JobStatus::Queued: return to == JobStatus::Running || to == JobStatus::Failed;
    case JobStatus::Running: return to == JobStatus::Done || to == JobStatus::Failed;
    default: return false;
  }
}

/// UTC with milliseconds; lexicographic order matches time order.
inline std::string iso_now_ms() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

struct JobState {
  std::string job_id;
  JobKind kind = JobKind::Extraction;
  JobStatus state = JobStatus::Queued;
  json params = json::object();
  std::string created_at;
  std::optional<std::string> started_at;
  std::optional<std::string> finished_at;
  json result;  // null until done
  std::optional<std::string> error;

  /// Identity used to detect duplicate submissions.
  std::string dedup_key() const { return to_string(kind) + ":" + params.dump(); }

  bool active() const { return state == JobStatus::Queued || state == JobStatus::Running; }
};

inline json to_json(const JobState& j) {
  return {{"job_id", j.job_id},
          {"kind", to_string(j.kind)},
          {"state", to_string(j.state)},
          {"params", j.params},
          {"created_at", j.created_at},
          {"started_at", j.started_at ? json(*j.started_at) : json(nullptr)},
          {"finished_at", j.finished_at ? json(*j.finished_at) : json(nullptr)},
          {"result", j.result},
          {"error", j.error ? json(*j.error) : json(nullptr)}};
}

inline JobState job_from_json(const json& j) {
  JobState s;
  s.job_id = j.at("job_id").get<std::string>();
  s.kind = parse_job_kind(j.at("kind").get<std::string>());
  s.state = parse_job_status(j.at("state").get<std::string>());
  s.params = j.value("params", json::object());
  s.created_at = j.at("created_at").get<std::string>();
  if (j.contains("started_at") && j["started_at"].is_string()) s.started_at = j["started_at"].get<std::string>();
  if (j.contains("finished_at") && j["finished_at"].is_string()) s.finished_at = j["finished_at"].get<std::string>();
  s.result = j.value("result", json(nullptr));
  if (j.contains("error") && j["error"].is_string()) s.error = j["error"].get<std::string>();
  return s;
}

/// One background thread running jobs in submission order. Every state change
/// is persisted to <jobs_dir>/<job_id>.json before it becomes visible. On
/// construction, persisted queued jobs are re-queued; jobs caught running by a
/// previous shutdown are marked failed.
class JobExecutor {
 public:
  /// Returns the job's result document; throwing marks the job failed.
  using Runner = std::function<json(const JobState&)>;
  using Clock = std::function<std::string()>;

  JobExecutor(fs::path jobs_dir, Runner runner, Clock clock = iso_now_ms)
      : dir_(std::move(jobs_dir)), runner_(std::move(runner)), clock_(std::move(clock)) {
    fs::create_directories(dir_);
    std::vector<JobState> loaded;
    for (const auto& e : fs::directory_iterator(dir_)) {
      if (e.path().extension() != ".json") continue;
      try {
        loaded.push_back(job_from_json(json::parse(read_text(e.path()))));
      } catch (const std::exception&) {
        continue;  // unreadable leftovers are ignored
      }
    }
    std::sort(loaded.begin(), loaded.end(),
              [](const JobState& a, const JobState& b) { return a.job_id < b.job_id; });
    for (auto& j : loaded) {
      if (j.state == JobStatus::Running) {
        j.state = JobStatus::Failed;
        j.finished_at = later_of(clock_(), j.started_at.value_or(j.created_at));
        j.error = "interrupted by service restart";
        persist(j);
      }
      if (j.state == JobStatus::Queued) queue_.push_back(j.job_id);
      jobs_[j.job_id] = j;
    }
    seq_ = jobs_.size();
  }

  ~JobExecutor() { stop(); }

  JobExecutor(const JobExecutor&) = delete;
  JobExecutor& operator=(const JobExecutor&) = delete;

  void start() {
    std::lock_guard lock(mu_);
    if (worker_.joinable()) return;
    stopping_ = false;
    worker_ = std::thread([this] { loop(); });
  }

  /// Finishes the running job, leaves queued ones persisted as queued.
  void stop() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  /// Conflict when an identical job is queued or running.
  JobState submit(JobKind kind, json params) {
    std::lock_guard lock(mu_);
    JobState j;
    j.kind = kind;
    j.params = std::move(params);
    for (const auto& [id, other] : jobs_) {
      if (other.active() && other.dedup_key() == j.dedup_key()) {
        fail(ErrorCode::Conflict, "identical job " + id + " is already " + to_string(other.state));
      }
    }
    char seq[16];
    std::snprintf(seq, sizeof seq, "%06zu", ++seq_);
    j.job_id = "job-" + std::string(seq) + "-" + sha256_hex(j.dedup_key()).substr(0, 8);
    j.created_at = clock_();
    persist(j);
    jobs_[j.job_id] = j;
    queue_.push_back(j.job_id);
    cv_.notify_all();
    return j;
  }

  std::optional<JobState> get(const std::string& job_id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<JobState> list() const {
    std::lock_guard lock(mu_);
    std::vector<JobState> out;
    for (const auto& [id, j] : jobs_) out.push_back(j);
    return out;
  }

  /// Blocks until the job leaves the active states or the timeout passes.
  std::optional<JobState> wait(const std::string& job_id, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] {
      auto it = jobs_.find(job_id);
      return it == jobs_.end() || !it->second.active();
    });
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

 private:
  static std::string later_of(const std::string& a, const std::string& b) { return a < b ? b : a; }

  void persist(const JobState& j) { write_atomic(dir_ / (j.job_id + ".json"), to_json(j).dump(2) + "\n"); }

  /// Caller holds mu_.
  void transition(JobState& j, JobStatus to) {
    if (!legal_transition(j.state, to)) {
      fail(ErrorCode::PreconditionFailed, "illegal job transition " + to_string(j.state) + " -> " + to_string(to));
    }
    const auto now = clock_();
    if (to == JobStatus::Running) {
      j.started_at = later_of(now, j.created_at);
    } else {
      j.finished_at = later_of(now, j.started_at.value_or(j.created_at));
    }
    j.state = to;
    persist(j);
  }

  void loop() {
    for (;;) {
      JobState job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        const auto id = queue_.front();
        queue_.pop_front();
        transition(jobs_[id], JobStatus::Running);
        job = jobs_[id];
      }
      cv_.notify_all();
      json result;
      std::optional<std::string> error;
      try {
        result = runner_(job);
      } catch (const std::exception& e) {
        error = e.what();
      }
      {
        std::lock_guard lock(mu_);
        auto& j = jobs_[job.job_id];
        if (error) {
          j.error = error;
          transition(j, JobStatus::Failed);
        } else {
          j.result = std::move(result);
          transition(j, JobStatus::Done);
        }
      }
      cv_.notify_all();
    }
  }

  fs::path dir_;
  Runner runner_;
  Clock clock_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, JobState> jobs_;
  std::deque<std::string> queue_;
  std::size_t seq_ = 0;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace soda::service
