#pragma once

// JSON-over-HTTP annotation service. AnnotationService holds the state and
// does the work; install_routes() maps it onto an httplib::Server. Geometry
// in every payload is in full-image pixels, y down. Boxes are
// [x0, y0, x1, y1], polygons are [[x, y], ...].

#include <openssl/evp.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "vgcn/checkpoint.hpp"
#include "vgcn/dataset.hpp"
#include "vgcn/inference.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include "httplib.h"

namespace vgcn {

/// An error with the HTTP status it maps to.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ServiceOptions {
  std::filesystem::path storage = "vgcn-store";
  std::size_t max_upload_bytes = 256u << 20;
  std::size_t workers = 1;            // concurrent inference jobs
  std::size_t inference_threads = 1;  // windows refined in parallel inside one job
  PrepareOptions prepare;
  std::size_t thumbnail_size = 96;
  std::function<void(const std::string& job)> on_job_start;  // runs on the worker; throwing fails the job
};

/// SHA-256 of the frames' bytes, each prefixed by its length; hex, 32 chars.
inline std::string content_id(const std::vector<std::string>& frames) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 unavailable");
  }
  for (const std::string& f : frames) {
    const std::uint64_t n = f.size();
    EVP_DigestUpdate(ctx, &n, sizeof n);
    EVP_DigestUpdate(ctx, f.data(), f.size());
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < 16; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

/// Box-filter downscale so that the longer side is at most `size`.
inline Image thumbnail(const Image& img, std::size_t size) {
  const std::size_t longest = std::max(img.width, img.height);
  if (longest <= size || size == 0) return img;
  const double s = static_cast<double>(longest) / static_cast<double>(size);
  Image out(std::max<std::size_t>(1, static_cast<std::size_t>(img.width / s)),
            std::max<std::size_t>(1, static_cast<std::size_t>(img.height / s)));
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const auto x0 = static_cast<std::size_t>(x * s), x1 = std::max(x0 + 1, static_cast<std::size_t>((x + 1) * s));
      const auto y0 = static_cast<std::size_t>(y * s), y1 = std::max(y0 + 1, static_cast<std::size_t>((y + 1) * s));
      std::array<double, 3> acc{};
      std::size_t n = 0;
      for (std::size_t yy = y0; yy < std::min(y1, img.height); ++yy) {
        for (std::size_t xx = x0; xx < std::min(x1, img.width); ++xx, ++n) {
          for (int c = 0; c < 3; ++c) acc[c] += img.pixel(xx, yy)[c];
        }
      }
      for (int c = 0; c < 3; ++c) out.pixel(x, y)[c] = static_cast<std::uint8_t>(std::lround(acc[c] / std::max<std::size_t>(n, 1)));
    }
  }
  return out;
}

/// Fixed number of threads draining a FIFO of tasks.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t threads) {
    for (std::size_t i = 0; i < std::max<std::size_t>(threads, 1); ++i) {
      threads_.emplace_back([this] { loop(); });
    }
  }
  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void submit(std::function<void()> task) {
    {
      std::lock_guard lock(mu_);
      tasks_.push_back(std::move(task));
    }
    cv_.notify_one();
  }

  /// Blocks until the queue is empty and no task is running.
  void wait_idle() {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [this] { return tasks_.empty() && busy_ == 0; });
  }

 private:
  void loop() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return stop_ || !tasks_.empty(); });
        if (tasks_.empty()) return;
        task = std::move(tasks_.front());
        tasks_.pop_front();
        ++busy_;
      }
      task();
      {
        std::lock_guard lock(mu_);
        --busy_;
      }
      idle_cv_.notify_all();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_, idle_cv_;
  std::deque<std::function<void()>> tasks_;
  std::vector<std::thread> threads_;
  std::size_t busy_ = 0;
  bool stop_ = false;
};

enum class JobStatus { Queued, Running, Done, Failed };

inline const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "?";
}

class AnnotationService {
 public:
  AnnotationService(ModelConfig cfg, Params<float> params, ServiceOptions opt = {})
      : cfg_(std::move(cfg)), params_(std::move(params)), opt_(std::move(opt)), pool_(opt_.workers) {
    cfg_.validate();
    load_store();
  }
  ~AnnotationService() { pool_.wait_idle(); }

  const ModelConfig& model_config() const { return cfg_; }
  const ServiceOptions& options() const { return opt_; }

  // -- sequences --------------------------------------------------------

  /// Stores PNG frames under their content id; `created` is false when the
  /// same content was already stored.
  nlohmann::json upload_frames(const std::vector<std::string>& pngs, const std::string& category = "") {
    std::size_t total = 0;
    for (const auto& p : pngs) total += p.size();
    if (total > opt_.max_upload_bytes) {
      throw ServiceError(413, "payload_too_large",
                         "upload of " + std::to_string(total) + " bytes exceeds the limit of " +
                             std::to_string(opt_.max_upload_bytes));
    }
    if (pngs.size() < 4) {
      throw ServiceError(400, "too_few_frames",
                         "a sequence needs at least 4 frames, got " + std::to_string(pngs.size()));
    }
    Sequence seq;
    for (std::size_t k = 0; k < pngs.size(); ++k) {
      try {
        seq.frames.push_back(decode_png(pngs[k]));
      } catch (const InvalidInput& e) {
        throw ServiceError(400, "undecodable", "frame " + std::to_string(k) + ": " + e.what());
      }
      if (seq.frames[k].width != seq.frames[0].width || seq.frames[k].height != seq.frames[0].height) {
        throw ServiceError(400, "size_mismatch", "frame " + std::to_string(k) + " differs in size from frame 0");
      }
    }
    const std::string id = content_id(pngs);
    {
      std::lock_guard lock(mu_);
      if (sequences_.contains(id)) return sequence_json(id, *sequences_.at(id), false);
    }
    SequenceManifest& m = seq.manifest;
    m.id = id;
    m.category = category;
    m.width = seq.frames[0].width;
    m.height = seq.frames[0].height;
    const auto dir = opt_.storage / "sequences" / id;
    std::filesystem::create_directories(dir / "frames");
    for (std::size_t k = 0; k < pngs.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "frames/%06zu.png", k);
      m.frames.push_back({name, std::nullopt, std::nullopt, std::nullopt});
      write_file((dir / name).string(), pngs[k]);
    }
    write_file((dir / "manifest.jsonl").string(), manifest_text(m));
    auto stored = std::make_shared<const Sequence>(std::move(seq));
    std::lock_guard lock(mu_);
    const bool created = sequences_.emplace(id, stored).second;
    return sequence_json(id, *sequences_.at(id), created);
  }

  /// Ingests a manifest readable by the server; ground truth is not kept.
  nlohmann::json upload_manifest(const std::filesystem::path& path) {
    SequenceManifest m;
    try {
      m = read_manifest(path);
    } catch (const std::exception& e) {
      throw ServiceError(400, "bad_manifest", e.what());
    }
    std::vector<std::string> pngs;
    for (const auto& f : m.frames) {
      try {
        pngs.push_back(read_file((path.parent_path() / f.image).string()));
      } catch (const InvalidInput& e) {
        throw ServiceError(400, "missing_frame", e.what());
      }
    }
    return upload_frames(pngs, m.category);
  }

  nlohmann::json list_sequences() const {
    std::lock_guard lock(mu_);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, s] : sequences_) out.push_back(sequence_json(id, *s, false));
    return out;
  }

  nlohmann::json sequence_info(const std::string& id) const { return sequence_json(id, *sequence(id), false); }

  std::string frame_png(const std::string& id, std::size_t k, bool thumb) const {
    auto s = sequence(id);
    if (k >= s->frames.size()) throw ServiceError(404, "no_such_frame", "frame " + std::to_string(k) + " out of range");
    return encode_png(thumb ? thumbnail(s->frames[k], opt_.thumbnail_size) : s->frames[k]);
  }

  // -- sessions ---------------------------------------------------------

  nlohmann::json create_session(const std::string& sequence_id) {
    auto seq = sequence(sequence_id);
    auto s = std::make_shared<Session>();
    s->sequence = seq;
    std::lock_guard lock(mu_);
    s->id = "s" + std::to_string(++session_counter_);
    sessions_[s->id] = s;
    std::lock_guard slock(s->mu);
    return session_json(*s);
  }

  nlohmann::json session_info(const std::string& id) const {
    auto s = session(id);
    std::lock_guard lock(s->mu);
    return session_json(*s);
  }

  nlohmann::json put_keyframe(const std::string& id, std::size_t frame, const PixelBox& box) {
    auto s = session(id);
    std::lock_guard lock(s->mu);
    const SequenceManifest& m = s->sequence->manifest;
    if (frame >= m.frames.size()) {
      throw ServiceError(422, "frame_out_of_range", "frame " + std::to_string(frame) + " is beyond the last frame");
    }
    const bool finite = std::isfinite(box.x0) && std::isfinite(box.y0) && std::isfinite(box.x1) && std::isfinite(box.y1);
    if (!finite || box.x1 <= box.x0 || box.y1 <= box.y0) {
      throw ServiceError(422, "invalid_box", "box must have positive width and height");
    }
    if (box.x1 <= 0 || box.y1 <= 0 || box.x0 >= static_cast<double>(m.width) || box.y0 >= static_cast<double>(m.height)) {
      throw ServiceError(422, "invalid_box", "box lies outside the image");
    }
    s->keyframes[frame] = box;
    ++s->keyframes_version;
    return session_json(*s);
  }

  nlohmann::json delete_keyframe(const std::string& id, std::size_t frame) {
    auto s = session(id);
    std::lock_guard lock(s->mu);
    if (!s->keyframes.erase(frame)) throw ServiceError(404, "no_such_keyframe", "frame " + std::to_string(frame) + " is not a keyframe");
    ++s->keyframes_version;
    return session_json(*s);
  }

  // -- inference --------------------------------------------------------

  nlohmann::json start_inference(const std::string& id) {
    auto s = session(id);
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(s->mu);
      if (s->active_job) {
        std::lock_guard jlock(jobs_mu_);
        const JobStatus st = jobs_.at(*s->active_job)->status;
        if (st == JobStatus::Queued || st == JobStatus::Running) {
          throw ServiceError(409, "job_in_progress", "job " + *s->active_job + " is still " + to_string(st));
        }
      }
      if (s->keyframes.size() < 2) {
        throw ServiceError(422, "too_few_keyframes", "inference needs boxes on at least two frames");
      }
      job = std::make_shared<Job>();
      job->session = id;
      for (const auto& [a, b] : keyframe_pairs(s->keyframes)) job->windows.emplace_back(a, b);
      {
        std::lock_guard jlock(jobs_mu_);
        job->id = "j" + std::to_string(++job_counter_);
        jobs_[job->id] = job;
      }
      s->active_job = job->id;
    }
    pool_.submit([this, s, job] { run_job(s, job); });
    return job_info(job->id);
  }

  nlohmann::json job_info(const std::string& id) const {
    std::lock_guard lock(jobs_mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw ServiceError(404, "no_such_job", "unknown job " + id);
    const Job& j = *it->second;
    nlohmann::json out{{"id", j.id}, {"session", j.session}, {"status", to_string(j.status)}};
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& [a, b] : j.windows) windows.push_back({a, b});
    out["windows"] = windows;
    if (j.status == JobStatus::Failed) out["error"] = j.error;
    return out;
  }

  /// Blocks until every submitted job has finished.
  void wait_idle() { pool_.wait_idle(); }

  // -- contours ---------------------------------------------------------

  nlohmann::json contours(const std::string& id, std::optional<std::size_t> frame) const {
    auto s = session(id);
    std::lock_guard lock(s->mu);
    if (frame) {
      auto it = s->results.find(*frame);
      if (it == s->results.end()) throw ServiceError(404, "no_contour", "no contour for frame " + std::to_string(*frame));
      return contour_json(*s, it->first, it->second);
    }
    nlohmann::json all = nlohmann::json::array();
    for (const auto& [k, r] : s->results) all.push_back(contour_json(*s, k, r));
    return {{"session", s->id}, {"version", s->version}, {"stale", stale(*s)}, {"contours", all}};
  }

  nlohmann::json put_contour(const std::string& id, std::size_t frame, const Polygon& poly) {
    auto s = session(id);
    std::lock_guard lock(s->mu);
    if (frame >= s->sequence->frames.size()) {
      throw ServiceError(422, "frame_out_of_range", "frame " + std::to_string(frame) + " is beyond the last frame");
    }
    if (poly.size() < 3) throw ServiceError(422, "invalid_polygon", "a polygon needs at least 3 vertices");
    for (Point p : poly) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ServiceError(422, "invalid_polygon", "non-finite vertex");
    }
    s->results[frame].human = poly;
    ++s->version;
    return contour_json(*s, frame, s->results[frame]);
  }

  /// Drops a human edit; the machine contour, if any, shows again.
  nlohmann::json delete_contour(const std::string& id, std::size_t frame) {
    auto s = session(id);
    std::lock_guard lock(s->mu);
    auto it = s->results.find(frame);
    if (it == s->results.end() || !it->second.human) {
      throw ServiceError(404, "no_human_edit", "frame " + std::to_string(frame) + " has no human edit");
    }
    it->second.human.reset();
    ++s->version;
    if (!it->second.machine) {
      s->results.erase(it);
      return {{"frame", frame}, {"version", s->version}, {"origin", nullptr}};
    }
    return contour_json(*s, frame, it->second);
  }

  // -- export -----------------------------------------------------------

  /// Manifest and polygon sidecar in the dataset format: keyframe boxes on
  /// the manifest lines, one polygon per annotated frame with its origin.
  nlohmann::json export_session(const std::string& id) const {
    auto s = session(id);
    std::lock_guard lock(s->mu);
    SequenceManifest m = s->sequence->manifest;
    for (auto& f : m.frames) f.polygon.reset(), f.box.reset(), f.origin.reset();
    for (const auto& [k, b] : s->keyframes) m.frames[k].box = b;
    for (const auto& [k, r] : s->results) {
      if (r.human) {
        m.frames[k].polygon = *r.human, m.frames[k].origin = "human";
      } else if (r.machine) {
        m.frames[k].polygon = r.machine->polygon, m.frames[k].origin = "machine";
      }
    }
    return {{"manifest", manifest_text(m)}, {"polygons", polygons_text(m)}};
  }

 private:
  struct FrameResult {
    std::optional<FrameAnnotation> machine;
    std::optional<Polygon> human;
  };

  struct Session {
    std::string id;
    std::shared_ptr<const Sequence> sequence;
    std::map<std::size_t, PixelBox> keyframes;
    std::map<std::size_t, FrameResult> results;
    std::optional<std::string> active_job;
    std::uint64_t version = 0;            // bumped on every change to results
    std::uint64_t keyframes_version = 0;  // bumped on every keyframe change
    std::uint64_t results_keyframes = 0;  // keyframes_version the machine results came from
    mutable std::mutex mu;
  };

  struct Job {
    std::string id, session;
    JobStatus status = JobStatus::Queued;
    std::vector<std::pair<std::size_t, std::size_t>> windows;
    std::string error;
  };

  static bool stale(const Session& s) {
    for (const auto& [k, r] : s.results) {
      if (r.machine) return s.results_keyframes != s.keyframes_version;
    }
    return false;
  }

  void set_status(Job& job, JobStatus st, std::string error = {}) {
    std::lock_guard lock(jobs_mu_);
    job.status = st;
    job.error = std::move(error);
  }

  void run_job(const std::shared_ptr<Session>& s, const std::shared_ptr<Job>& job) {
    set_status(*job, JobStatus::Running);
    std::map<std::size_t, Box> boxes;
    std::uint64_t kv = 0;
    std::shared_ptr<const Sequence> seq;
    {
      std::lock_guard lock(s->mu);
      seq = s->sequence;
      for (const auto& [k, b] : s->keyframes) boxes[k] = normalized_box(b, seq->manifest.width, seq->manifest.height);
      kv = s->keyframes_version;
    }
    try {
      if (opt_.on_job_start) opt_.on_job_start(job->id);
      auto result = annotate_sequence(params_, cfg_, *seq, boxes, opt_.prepare, opt_.inference_threads, true);
      std::lock_guard lock(s->mu);
      for (auto& [k, r] : s->results) r.machine.reset();
      for (auto& [k, fa] : result) s->results[k].machine = std::move(fa);
      std::erase_if(s->results, [](const auto& kv) { return !kv.second.machine && !kv.second.human; });
      s->results_keyframes = kv;
      ++s->version;
    } catch (const std::exception& e) {
      set_status(*job, JobStatus::Failed, e.what());
      return;
    }
    set_status(*job, JobStatus::Done);
  }

  nlohmann::json contour_json(const Session& s, std::size_t k, const FrameResult& r) const {
    nlohmann::json out{{"frame", k}, {"version", s.version}, {"stale", stale(s)}};
    if (r.human) {
      out["origin"] = "human";
      out["points"] = detail::points_json(*r.human);
    } else {
      out["origin"] = "machine";
      out["points"] = detail::points_json(r.machine->polygon);
    }
    nlohmann::json trace = nlohmann::json::array();
    if (r.machine) {
      for (const auto& p : r.machine->trace) trace.push_back(detail::points_json(p));
    }
    out["trace"] = trace;
    return out;
  }

  nlohmann::json session_json(const Session& s) const {
    nlohmann::json kf = nlohmann::json::array();
    for (const auto& [k, b] : s.keyframes) kf.push_back({{"frame", k}, {"box", {b.x0, b.y0, b.x1, b.y1}}});
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& [a, b] : keyframe_pairs(s.keyframes)) windows.push_back({a, b});
    nlohmann::json out{{"id", s.id},         {"sequence", s.sequence->manifest.id},
                       {"keyframes", kf},    {"windows", windows},
                       {"version", s.version}, {"stale", stale(s)},
                       {"points", cfg_.points}};
    out["job"] = s.active_job ? nlohmann::json(*s.active_job) : nlohmann::json(nullptr);
    return out;
  }

  nlohmann::json sequence_json(const std::string& id, const Sequence& s, bool created) const {
    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t k = 0; k < s.frames.size(); ++k) {
      const std::string base = "/sequences/" + id + "/frames/" + std::to_string(k);
      frames.push_back({{"index", k}, {"image", base}, {"thumbnail", base + "?thumbnail=1"}});
    }
    return {{"id", id},
            {"frame_count", s.frames.size()},
            {"width", s.manifest.width},
            {"height", s.manifest.height},
            {"category", s.manifest.category},
            {"created", created},
            {"frames", frames}};
  }

  std::shared_ptr<const Sequence> sequence(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sequences_.find(id);
    if (it == sequences_.end()) throw ServiceError(404, "no_such_sequence", "unknown sequence " + id);
    return it->second;
  }

  std::shared_ptr<Session> session(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "no_such_session", "unknown session " + id);
    return it->second;
  }

  void load_store() {
    const auto root = opt_.storage / "sequences";
    if (!std::filesystem::exists(root)) return;
    for (const auto& e : std::filesystem::directory_iterator(root)) {
      const auto manifest = e.path() / "manifest.jsonl";
      if (!std::filesystem::exists(manifest)) continue;
      auto seq = std::make_shared<const Sequence>(load_sequence(manifest));
      sequences_[seq->manifest.id] = seq;
    }
  }

  ModelConfig cfg_;
  Params<float> params_;
  ServiceOptions opt_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Sequence>> sequences_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t session_counter_ = 0;
  mutable std::mutex jobs_mu_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::size_t job_counter_ = 0;
  WorkerPool pool_;
};

// ---------------------------------------------------------------------------
// HTTP binding

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

inline nlohmann::json body_json(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, "bad_json", e.what());
  }
}

inline std::size_t index_param(const std::string& s) {
  if (s.empty() || s.size() > 9 || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ServiceError(400, "bad_index", "'" + s + "' is not a frame index");
  }
  return std::stoul(s);
}

inline PixelBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw ServiceError(422, "invalid_box", "box must be [x0, y0, x1, y1]");
  for (const auto& v : j) {
    if (!v.is_number()) throw ServiceError(422, "invalid_box", "box coordinates must be numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "bad_json", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace detail

inline void install_routes(httplib::Server& srv, AnnotationService& svc) {
  using detail::guarded;
  using detail::send_json;
  using Req = httplib::Request;
  using Res = httplib::Response;

  srv.set_payload_max_length(svc.options().max_upload_bytes);
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(.*)", [](const Req&, Res& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Get("/health", guarded([&svc](const Req&, Res& res) {
    send_json(res, 200, {{"status", "ok"}, {"model", model_config_json(svc.model_config())}});
  }));

  srv.Post("/sequences", guarded([&svc](const Req& req, Res& res) {
    nlohmann::json out;
    if (req.is_multipart_form_data()) {
      std::vector<std::string> frames;
      auto [lo, hi] = req.files.equal_range("frames");
      for (auto it = lo; it != hi; ++it) frames.push_back(it->second.content);
      const std::string category = req.has_file("category") ? req.get_file_value("category").content : "";
      out = svc.upload_frames(frames, category);
    } else {
      const auto j = detail::body_json(req);
      if (!j.contains("manifest") || !j["manifest"].is_string()) {
        throw ServiceError(400, "bad_request", "expected multipart 'frames' parts or {\"manifest\": path}");
      }
      out = svc.upload_manifest(j["manifest"].get<std::string>());
    }
    send_json(res, out["created"].get<bool>() ? 201 : 200, out);
  }));
  srv.Get("/sequences", guarded([&svc](const Req&, Res& res) { send_json(res, 200, svc.list_sequences()); }));
  srv.Get(R"(/sequences/([0-9a-f]+))", guarded([&svc](const Req& req, Res& res) {
    send_json(res, 200, svc.sequence_info(req.matches[1]));
  }));
  srv.Get(R"(/sequences/([0-9a-f]+)/frames/(\d+))", guarded([&svc](const Req& req, Res& res) {
    const bool thumb = req.has_param("thumbnail") && req.get_param_value("thumbnail") != "0";
    res.set_content(svc.frame_png(req.matches[1], detail::index_param(req.matches[2]), thumb), "image/png");
  }));

  srv.Post("/sessions", guarded([&svc](const Req& req, Res& res) {
    const auto j = detail::body_json(req);
    if (!j.contains("sequence") || !j["sequence"].is_string()) {
      throw ServiceError(400, "bad_request", "expected {\"sequence\": id}");
    }
    send_json(res, 201, svc.create_session(j["sequence"].get<std::string>()));
  }));
  srv.Get(R"(/sessions/(\w+))", guarded([&svc](const Req& req, Res& res) {
    send_json(res, 200, svc.session_info(req.matches[1]));
  }));
  srv.Put(R"(/sessions/(\w+)/keyframes)", guarded([&svc](const Req& req, Res& res) {
    const auto j = detail::body_json(req);
    if (!j.contains("frame") || !j["frame"].is_number_unsigned()) {
      throw ServiceError(422, "invalid_frame", "expected a non-negative integer 'frame'");
    }
    if (!j.contains("box")) throw ServiceError(422, "invalid_box", "missing 'box'");
    send_json(res, 200, svc.put_keyframe(req.matches[1], j["frame"].get<std::size_t>(), detail::box_from_json(j["box"])));
  }));
  srv.Delete(R"(/sessions/(\w+)/keyframes/(\d+))", guarded([&svc](const Req& req, Res& res) {
    send_json(res, 200, svc.delete_keyframe(req.matches[1], detail::index_param(req.matches[2])));
  }));
  srv.Post(R"(/sessions/(\w+)/infer)", guarded([&svc](const Req& req, Res& res) {
    send_json(res, 202, svc.start_inference(req.matches[1]));
  }));
  srv.Get(R"(/jobs/(\w+))", guarded([&svc](const Req& req, Res& res) {
    send_json(res, 200, svc.job_info(req.matches[1]));
  }));
  srv.Get(R"(/sessions/(\w+)/contours)", guarded([&svc](const Req& req, Res& res) {
    std::optional<std::size_t> frame;
    if (req.has_param("frame")) frame = detail::index_param(req.get_param_value("frame"));
    send_json(res, 200, svc.contours(req.matches[1], frame));
  }));
  srv.Put(R"(/sessions/(\w+)/contours/(\d+))", guarded([&svc](const Req& req, Res& res) {
    const auto j = detail::body_json(req);
    if (!j.contains("points") || !j["points"].is_array()) {
      throw ServiceError(422, "invalid_polygon", "expected {\"points\": [[x, y], ...]}");
    }
    Polygon poly;
    try {
      poly = detail::points_from_json(j["points"]);
    } catch (const std::exception& e) {
      throw ServiceError(422, "invalid_polygon", e.what());
    }
    send_json(res, 200, svc.put_contour(req.matches[1], detail::index_param(req.matches[2]), poly));
  }));
  srv.Delete(R"(/sessions/(\w+)/contours/(\d+))", guarded([&svc](const Req& req, Res& res) {
    send_json(res, 200, svc.delete_contour(req.matches[1], detail::index_param(req.matches[2])));
  }));
  srv.Get(R"(/sessions/(\w+)/export)", guarded([&svc](const Req& req, Res& res) {
    send_json(res, 200, svc.export_session(req.matches[1]));
  }));

  srv.set_error_handler([](const Req&, Res& res) {
    if (!res.body.empty()) return;
    const std::string code = res.status == 413 ? "payload_too_large" : res.status == 404 ? "not_found" : "http_error";
    detail::send_error(res, res.status, code, httplib::status_message(res.status));
  });
}

}  // namespace vgcn
