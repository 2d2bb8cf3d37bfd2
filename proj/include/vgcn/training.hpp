#pragma once

// Window preparation, training loop, evaluation and the model benchmark.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "vgcn/checkpoint.hpp"
#include "vgcn/dataset.hpp"
#include "vgcn/errors.hpp"
#include "vgcn/features.hpp"
#include "vgcn/geometry.hpp"
#include "vgcn/graph.hpp"
#include "vgcn/model.hpp"

namespace vgcn {

/// Runs fn(i) for i in [0, n) on up to `threads` threads. Callers write
/// results into per-index slots, so the outcome does not depend on scheduling.
/// The first exception thrown by any task is rethrown.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Prepared windows

struct PrepareOptions {
  std::size_t crop_size = kCropSize;
  std::size_t points = 40;        // vertex channel of the boundary targets
  std::size_t gt_points = 200;    // arc-length samples of the GT boundary used by the loss
  bool use_gt_boxes = false;      // crop each frame with its own GT box instead of interpolating
  HornSchunckOptions flow{};
};

/// One sub-sequence cropped, with flows and targets precomputed. Crops are
/// kept as bytes and flows in 1/256 px units to bound memory.
struct PreparedWindow {
  std::string sequence_id;
  std::string category;
  std::size_t image_width = 0, image_height = 0;
  SubSequence sub;
  std::size_t crop_size = 0;
  std::vector<Box> boxes;                 // per frame, normalized image units
  std::vector<CropWindow> windows;        // per frame
  std::vector<std::uint8_t> pixels;       // [F×3×S×S]
  std::vector<std::int16_t> flow;         // [F×2×S×S]
  Tensor<float> pooled_flow;              // [F×2×g×g], g = S/4
  std::vector<std::optional<Polygon>> gt;             // per frame, image pixels
  std::vector<std::optional<Tensor<float>>> targets;  // per frame, [M×2] crop units
  Tensor<float> boundary_target;          // [F×2×g×g]
  std::vector<bool> boundary_valid;       // per frame

  std::size_t frames() const { return windows.size(); }
  std::size_t interval() const { return sub.interval; }
};

inline constexpr double kFlowQuantum = 256.0;

/// Crops every frame of `sub`, runs Horn–Schunck between each frame and the
/// next one resampled into the same window (the last frame pairs with its
/// predecessor), and builds loss and boundary targets where GT exists.
inline PreparedWindow prepare_window(const Sequence& seq, const SubSequence& sub, const PrepareOptions& opt) {
  const SequenceManifest& m = seq.manifest;
  const std::size_t F = sub.frames.size(), S = opt.crop_size, plane = S * S;
  if (S < 8 || S % 4) throw InvalidConfig("crop size must be a multiple of 4 and at least 8");
  const std::size_t grid = S / 4;
  PreparedWindow w;
  w.sequence_id = m.id;
  w.category = m.category;
  w.image_width = m.width;
  w.image_height = m.height;
  w.sub = sub;
  w.crop_size = S;
  w.pixels.resize(F * 3 * plane);
  w.flow.resize(F * 2 * plane);
  w.pooled_flow = Tensor<float>({F, 2, grid, grid});
  w.boundary_target = Tensor<float>({F, 2, grid, grid});
  w.boundary_valid.assign(F, false);
  w.gt.resize(F);
  w.targets.resize(F);

  std::vector<Crop> crops;
  for (std::size_t r = 0; r < F; ++r) {
    Box box = sub.boxes[r];
    if (opt.use_gt_boxes) {
      const auto gt = m.gt_box(sub.frames[r]);
      if (!gt) throw InvalidInput("sequence " + m.id + " has no GT box at frame " + std::to_string(sub.frames[r]));
      box = *gt;
    }
    w.boxes.push_back(box);
    crops.push_back(expand_and_crop(seq.frames[sub.frames[r]], box, S));
    w.windows.push_back(crops.back().window);
    for (std::size_t i = 0; i < 3 * plane; ++i) {
      w.pixels[r * 3 * plane + i] =
          static_cast<std::uint8_t>(std::lround(std::clamp(crops.back().pixels[i], 0.0f, 1.0f) * 255.0f));
    }
  }
  for (std::size_t r = 0; r < F; ++r) {
    FlowField f;
    if (r + 1 < F) {
      const Crop next = resample_window(seq.frames[sub.frames[r + 1]], w.windows[r], S);
      f = horn_schunck_flow(crops[r].pixels, next.pixels, opt.flow);
    } else {
      const Crop prev = resample_window(seq.frames[sub.frames[r - 1]], w.windows[r], S);
      f = horn_schunck_flow(prev.pixels, crops[r].pixels, opt.flow);
    }
    auto quantize = [](float v) {
      return static_cast<std::int16_t>(std::clamp<long>(std::lround(v * kFlowQuantum), -32767, 32767));
    };
    for (std::size_t i = 0; i < plane; ++i) {
      w.flow[(2 * r) * plane + i] = quantize(f.u[i]);
      w.flow[(2 * r + 1) * plane + i] = quantize(f.v[i]);
    }
    const Tensor<float> pooled = pool_flow<float>(f, grid);
    std::copy(pooled.data().begin(), pooled.data().end(), w.pooled_flow.data().begin() + r * pooled.size());

    const auto& rec = m.frames[sub.frames[r]];
    if (rec.polygon) {
      w.gt[r] = *rec.polygon;
      const Polygon crop_gt = w.windows[r].to_crop(*rec.polygon);
      w.targets[r] = coords_tensor<float>(resample_arclength(crop_gt, opt.gt_points));
      const Tensor<float> bt = boundary_targets<float>(crop_gt, opt.points, grid);
      std::copy(bt.data().begin(), bt.data().end(), w.boundary_target.data().begin() + r * bt.size());
      w.boundary_valid[r] = true;
    }
  }
  return w;
}

/// Every window of every listed sequence at interval K with stride K.
inline std::vector<PreparedWindow> prepare_windows(const std::vector<Sequence>& seqs,
                                                   const std::vector<std::size_t>& which, std::size_t interval,
                                                   const PrepareOptions& opt, std::size_t threads = 1,
                                                   std::ostream* log = nullptr) {
  std::vector<std::pair<std::size_t, SubSequence>> subs;
  for (std::size_t s : which) {
    for (auto& sub : extract_subsequences(seqs.at(s).manifest, s, interval, interval, log)) subs.emplace_back(s, sub);
  }
  std::vector<PreparedWindow> out(subs.size());
  parallel_for(subs.size(), threads, [&](std::size_t i) { out[i] = prepare_window(seqs[subs[i].first], subs[i].second, opt); });
  return out;
}

/// Initial contour: the ellipse inscribed in each frame's box, in crop units.
template <class T>
Tensor<T> initial_coords(const PreparedWindow& w, std::size_t points) {
  std::vector<Point> pts;
  for (std::size_t r = 0; r < w.frames(); ++r) {
    const Box b = w.windows[r].box_in_crop(w.boxes[r], w.image_width, w.image_height);
    for (Point p : inscribed_ellipse(b, points)) pts.push_back(p);
  }
  return coords_tensor<T>(pts);
}

template <class T>
WindowTensors<T> window_tensors(const PreparedWindow& w, const ModelConfig& cfg) {
  const std::size_t F = w.frames(), S = w.crop_size, plane = S * S;
  WindowTensors<T> out;
  out.encoder_input = Tensor<T>({F, kEncoderInputChannels, S, S});
  for (std::size_t r = 0; r < F; ++r) {
    T* dst = out.encoder_input.data().data() + r * kEncoderInputChannels * plane;
    const std::uint8_t* px = w.pixels.data() + r * 3 * plane;
    for (std::size_t i = 0; i < 3 * plane; ++i) dst[i] = static_cast<T>(px[i]) / T(255) - T(0.5);
    if (cfg.use_motion_features) {
      const std::int16_t* fl = w.flow.data() + r * 2 * plane;
      for (std::size_t i = 0; i < 2 * plane; ++i) {
        dst[3 * plane + i] = static_cast<T>(fl[i] / kFlowQuantum * kFlowInputScale);
      }
    }
  }
  out.pooled_flow = w.pooled_flow.cast<T>();
  out.init_coords = initial_coords<T>(w, cfg.points);
  return out;
}

// ---------------------------------------------------------------------------
// Loss

enum class Supervision { AllFrames, KeyframesOnly };

inline const char* to_string(Supervision s) {
  return s == Supervision::AllFrames ? "all_frames" : "keyframes_only";
}

inline Supervision supervision_from_string(const std::string& s) {
  if (s == "all_frames") return Supervision::AllFrames;
  if (s == "keyframes_only") return Supervision::KeyframesOnly;
  throw InvalidConfig("unknown supervision mode '" + s + "' (expected all_frames|keyframes_only)");
}

/// Window-relative frames that carry loss: 1..K+1, or the two keyframes.
inline std::vector<std::size_t> supervised_frames(std::size_t interval, Supervision mode) {
  if (mode == Supervision::KeyframesOnly) return {1, interval + 1};
  std::vector<std::size_t> out;
  for (std::size_t r = 1; r <= interval + 1; ++r) out.push_back(r);
  return out;
}

inline void require_supervision(const PreparedWindow& w, Supervision mode) {
  for (std::size_t r : supervised_frames(w.interval(), mode)) {
    if (!w.targets[r]) {
      throw InvalidConfig("sequence " + w.sequence_id + " lacks GT at frame " + std::to_string(w.sub.frames[r]) +
                          " required by supervision mode " + to_string(mode));
    }
  }
}

struct LossWeights {
  double nbcd = 1.0;
  double boundary = 0.1;
};

template <class T>
struct WindowLoss {
  ad::Var<T> total;
  double nbcd = 0.0;      // mean over supervised frames and iterations
  double boundary = 0.0;
};

/// NBCD averaged over supervised frames and every refinement output, plus the
/// weighted boundary-head cross-entropy on the same frames.
template <class T>
WindowLoss<T> window_loss(const RefineResult<T>& r, const PreparedWindow& w, std::size_t points, Supervision mode,
                          const LossWeights& weights) {
  const auto frames = supervised_frames(w.interval(), mode);
  std::vector<ad::Var<T>> terms;
  for (std::size_t it = 1; it < r.trace.size(); ++it) {
    for (std::size_t f : frames) {
      std::vector<std::size_t> rows(points);
      std::iota(rows.begin(), rows.end(), f * points);
      terms.push_back(nbcd_loss(ad::gather_rows(r.trace[it], std::move(rows)), w.targets[f]->template cast<T>()));
    }
  }
  if (terms.empty()) throw InvalidConfig("loss needs at least one refinement iteration");
  WindowLoss<T> out;
  ad::Var<T> nbcd = ad::scale(ad::add_n<T>(terms), T(1) / static_cast<T>(terms.size()));
  out.nbcd = static_cast<double>(nbcd.value().item());
  out.total = ad::scale(nbcd, static_cast<T>(weights.nbcd));
  if (weights.boundary != 0.0) {
    const std::size_t per_frame = w.boundary_target.size() / w.frames();
    Tensor<T> mask(w.boundary_target.shape(), T(0));
    for (std::size_t f : frames) {
      if (!w.boundary_valid[f]) continue;
      std::fill_n(mask.data().begin() + f * per_frame, per_frame, T(1));
    }
    ad::Var<T> bce = ad::bce_with_logits(r.volume.boundary_logits, w.boundary_target.cast<T>(), mask);
    out.boundary = static_cast<double>(bce.value().item());
    const std::array<ad::Var<T>, 2> parts{out.total, ad::scale(bce, static_cast<T>(weights.boundary))};
    out.total = ad::add_n<T>(parts);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

/// Trainable mask with the listed groups frozen.
template <class T>
std::vector<bool> freeze_groups(const Params<T>& params, const std::vector<std::string>& groups) {
  std::vector<ParamGroup> frozen;
  for (const auto& g : groups) frozen.push_back(param_group_from_string(g));
  std::vector<bool> trainable;
  for (const auto& p : params) {
    trainable.push_back(std::find(frozen.begin(), frozen.end(), p.group) == frozen.end());
  }
  return trainable;
}

/// Adam with per-parameter step counts; parameters outside the trainable mask
/// and their moment estimates are left untouched.
template <class T>
class Adam {
 public:
  explicit Adam(const Params<T>& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape(), T(0));
      v_.emplace_back(p.value.shape(), T(0));
      steps_.push_back(0);
    }
  }

  void step(Params<T>& params, const std::vector<Tensor<T>>& grads, const std::vector<bool>& trainable, double lr) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!trainable[k]) continue;
      Tensor<T>& x = params[k].value;
      const Tensor<T>& g = grads[k];
      const auto t = static_cast<double>(++steps_[k]);
      const double c1 = 1.0 - std::pow(beta1_, t), c2 = 1.0 - std::pow(beta2_, t);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double m = beta1_ * static_cast<double>(m_[k][i]) + (1.0 - beta1_) * gi;
        const double v = beta2_ * static_cast<double>(v_[k][i]) + (1.0 - beta2_) * gi * gi;
        m_[k][i] = static_cast<T>(m);
        v_[k][i] = static_cast<T>(v);
        x[i] = static_cast<T>(static_cast<double>(x[i]) - lr * (m / c1) / (std::sqrt(v / c2) + eps_));
      }
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::vector<Tensor<T>> m_, v_;
  std::vector<std::size_t> steps_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 3e-4;
  double lr_decay = 0.5;          // multiplier applied every `decay_every` epochs
  std::size_t decay_every = 3;    // 0 disables decay
  std::size_t epochs = 10;
  std::size_t batch_size = 4;     // windows per optimizer step
  std::size_t max_steps = 0;      // 0: no cap
  std::uint64_t seed = 1;
  Supervision supervision = Supervision::AllFrames;
  LossWeights weights{};
  std::vector<std::string> frozen;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidConfig("learning rate must be >= 0");
    if (!(lr_decay > 0.0)) throw InvalidConfig("lr_decay must be positive");
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    for (const auto& g : frozen) param_group_from_string(g);
  }

  double lr_at(std::size_t epoch) const {
    if (decay_every == 0) return learning_rate;
    return learning_rate * std::pow(lr_decay, static_cast<double>(epoch / decay_every));
  }
};

struct LossRecord {
  std::size_t epoch = 0, step = 0;
  double loss = 0.0, nbcd = 0.0, boundary = 0.0, lr = 0.0;
};

template <class T>
struct StepResult {
  std::vector<Tensor<T>> grads;
  double loss = 0.0, nbcd = 0.0, boundary = 0.0;
};

/// Loss and parameter gradients on one window. Frozen parameters go on the
/// tape as constants; their gradient slots stay zero.
template <class T>
StepResult<T> window_gradients(const Params<T>& params, const std::vector<bool>& trainable, const ModelConfig& cfg,
                               const GraphIndex& graph, const PreparedWindow& w, Supervision mode,
                               const LossWeights& weights) {
  ad::Tape<T> tape;
  ParamVars<T> vars;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    vars.emplace(p.name, trainable[k] ? tape.parameter(p.value) : tape.constant(p.value));
  }
  RefineResult<T> r = refine(tape, vars, cfg, graph, window_tensors<T>(w, cfg), cfg.iterations);
  WindowLoss<T> loss = window_loss(r, w, cfg.points, mode, weights);
  tape.backward(loss.total);
  StepResult<T> out;
  out.loss = static_cast<double>(loss.total.value().item());
  out.nbcd = loss.nbcd;
  out.boundary = loss.boundary;
  for (std::size_t k = 0; k < params.size(); ++k) out.grads.push_back(tape.grad(vars.at(params[k].name)));
  return out;
}

/// Graph indices shared by all windows of one interval.
class GraphCache {
 public:
  explicit GraphCache(const ModelConfig& cfg) : cfg_(cfg) {}
  const GraphIndex& get(std::size_t interval) {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(interval);
    if (it == cache_.end()) {
      it = cache_.emplace(interval, GraphIndex(build_graph(cfg_.points, interval, cfg_.topology))).first;
    }
    return it->second;
  }

 private:
  ModelConfig cfg_;
  std::mutex mutex_;
  std::map<std::size_t, GraphIndex> cache_;
};

template <class T>
struct TrainHooks {
  std::size_t threads = 1;
  std::ostream* log = nullptr;
  std::size_t log_every = 0;   // steps; 0 logs epochs only
  std::function<void(std::size_t epoch, const Params<T>&)> on_epoch;
};

template <class T>
struct TrainResult {
  Params<T> params;
  std::vector<LossRecord> curve;   // one record per optimizer step
  std::size_t steps = 0;
};

/// Adam over shuffled windows. A step averages the gradients of `batch_size`
/// windows, reduced in window order, so the result does not depend on the
/// thread count.
template <class T>
TrainResult<T> train(const ModelConfig& cfg, Params<T> params, const std::vector<PreparedWindow>& data,
                     const TrainConfig& tc, const TrainHooks<T>& hooks = {}) {
  cfg.validate();
  tc.validate();
  if (data.empty()) throw InvalidConfig("no training windows");
  for (const auto& w : data) require_supervision(w, tc.supervision);
  const std::vector<bool> trainable = freeze_groups(params, tc.frozen);
  GraphCache graphs(cfg);
  Adam<T> adam(params);
  TrainResult<T> out;
  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = tc.lr_at(epoch);
    double epoch_loss = 0.0, epoch_nbcd = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
      if (tc.max_steps && out.steps >= tc.max_steps) break;
      const std::size_t n = std::min(tc.batch_size, order.size() - b);
      std::vector<StepResult<T>> parts(n);
      parallel_for(n, hooks.threads, [&](std::size_t i) {
        const PreparedWindow& w = data[order[b + i]];
        parts[i] = window_gradients(params, trainable, cfg, graphs.get(w.interval()), w, tc.supervision, tc.weights);
      });
      std::vector<Tensor<T>> grads = std::move(parts[0].grads);
      LossRecord rec{epoch, out.steps, parts[0].loss, parts[0].nbcd, parts[0].boundary, lr};
      for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += parts[i].grads[k];
        rec.loss += parts[i].loss, rec.nbcd += parts[i].nbcd, rec.boundary += parts[i].boundary;
      }
      const T inv = T(1) / static_cast<T>(n);
      for (auto& g : grads) {
        for (T& x : g.data()) x *= inv;
      }
      rec.loss /= n, rec.nbcd /= n, rec.boundary /= n;
      adam.step(params, grads, trainable, lr);
      out.curve.push_back(rec);
      ++out.steps;
      epoch_loss += rec.loss, epoch_nbcd += rec.nbcd, ++epoch_steps;
      if (hooks.log && hooks.log_every && out.steps % hooks.log_every == 0) {
        *hooks.log << "step " << out.steps << " loss " << rec.loss << " nbcd " << rec.nbcd << "\n";
      }
    }
    if (hooks.log && epoch_steps) {
      *hooks.log << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << epoch_loss / epoch_steps << " nbcd "
                 << epoch_nbcd / epoch_steps << " lr " << lr << "\n";
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, params);
    if (tc.max_steps && out.steps >= tc.max_steps) break;
  }
  out.params = std::move(params);
  return out;
}

// ---------------------------------------------------------------------------
// Inference and evaluation

struct WindowPrediction {
  std::vector<Polygon> crop;                  // final contour per frame, crop units
  std::vector<Polygon> image;                 // final contour per frame, image pixels
  std::vector<std::vector<Polygon>> trace;    // [iteration][frame], image pixels
};

/// Forward pass without gradients.
template <class T>
WindowPrediction predict_window(const Params<T>& params, const ModelConfig& cfg, const GraphIndex& graph,
                                const PreparedWindow& w, bool keep_trace = false) {
  ad::Tape<T> tape;
  const ParamVars<T> vars = bind_params(tape, params, false);
  const RefineResult<T> r = refine(tape, vars, cfg, graph, window_tensors<T>(w, cfg), cfg.iterations);
  WindowPrediction out;
  for (std::size_t it = 0; it < r.trace.size(); ++it) {
    const bool last = it + 1 == r.trace.size();
    if (!last && !keep_trace) continue;
    std::vector<Polygon> frames;
    for (std::size_t f = 0; f < w.frames(); ++f) {
      const Polygon crop = frame_points(r.trace[it].value(), f, cfg.points);
      frames.push_back(w.windows[f].to_image(crop));
      if (last) out.crop.push_back(crop);
    }
    if (last) out.image = frames;
    if (keep_trace) out.trace.push_back(std::move(frames));
  }
  return out;
}

/// Per-node B-spline smoothing of a window's contours over all its frames, in
/// image space.
inline void smooth_prediction(WindowPrediction& p, const PreparedWindow& w, std::size_t interior_knots = 0) {
  if (interior_knots == 0) interior_knots = default_interior_knots(p.image.size());
  p.image = bspline_smooth(p.image, interior_knots);
  for (std::size_t f = 0; f < p.image.size(); ++f) p.crop[f] = w.windows[f].to_crop(p.image[f]);
}

struct MetricRow {
  std::string category;
  double miou = 0.0;
  double nbcd = 0.0;    // ×10³, crop-normalized units
  double f1_1px = 0.0;
  double f1_2px = 0.0;
  std::size_t frames = 0;
};

struct FrameMetrics {
  double iou = 0.0;     // NaN when both masks are empty
  double nbcd = 0.0;
  double f1_1px = 0.0, f1_2px = 0.0;
};

/// Metrics of one predicted frame against its GT polygon.
inline FrameMetrics frame_metrics(const Polygon& pred_image, const Polygon& pred_crop, const Polygon& gt_image,
                                  const Tensor<float>& gt_crop_samples, std::size_t width, std::size_t height) {
  FrameMetrics m;
  m.iou = iou(rasterize(pred_image, height, width), rasterize(gt_image, height, width));
  std::vector<Point> gt_pts(gt_crop_samples.dim(0));
  for (std::size_t i = 0; i < gt_pts.size(); ++i) gt_pts[i] = {gt_crop_samples[2 * i], gt_crop_samples[2 * i + 1]};
  m.nbcd = nbcd(pred_crop, gt_pts) * 1e3;
  m.f1_1px = boundary_f1(pred_image, gt_image, 1.0);
  m.f1_2px = boundary_f1(pred_image, gt_image, 2.0);
  return m;
}

struct EvalOptions {
  bool smooth = false;             // SGCN-smoothed: B-spline over each window before scoring
  std::size_t interior_knots = 0;  // 0: default for the window length
  std::size_t threads = 1;
};

struct EvalReport {
  std::vector<MetricRow> rows;     // categories in name order, then "average"
  const MetricRow& average() const { return rows.back(); }
  const MetricRow& category(const std::string& name) const {
    for (const auto& r : rows) {
      if (r.category == name) return r;
    }
    throw InvalidInput("no report row for category '" + name + "'");
  }
};

inline constexpr const char* kAverageRow = "average";

/// Frame metrics of every window's frames 1..K+1 that have GT, grouped by
/// category. Category rows average their frames; the average row averages
/// all frames, which weights categories by frame count.
inline EvalReport aggregate(const std::vector<std::pair<std::string, FrameMetrics>>& frames) {
  std::map<std::string, MetricRow> acc;
  std::map<std::string, std::size_t> iou_count;
  MetricRow all{kAverageRow};
  std::size_t all_iou = 0;
  auto add = [](MetricRow& row, std::size_t& n_iou, const FrameMetrics& m) {
    if (!std::isnan(m.iou)) row.miou += m.iou, ++n_iou;
    row.nbcd += m.nbcd, row.f1_1px += m.f1_1px, row.f1_2px += m.f1_2px, ++row.frames;
  };
  for (const auto& [cat, m] : frames) {
    auto& row = acc[cat];
    row.category = cat;
    add(row, iou_count[cat], m);
    add(all, all_iou, m);
  }
  auto finish = [](MetricRow& row, std::size_t n_iou) {
    row.miou = n_iou ? row.miou / n_iou : 1.0;
    if (row.frames) {
      const double n = static_cast<double>(row.frames);
      row.nbcd /= n, row.f1_1px /= n, row.f1_2px /= n;
    }
  };
  EvalReport rep;
  for (auto& [cat, row] : acc) {
    finish(row, iou_count[cat]);
    rep.rows.push_back(row);
  }
  finish(all, all_iou);
  rep.rows.push_back(all);
  return rep;
}

/// Scores arbitrary per-window predictions (image and crop contours for every
/// window frame) against the windows' GT.
inline std::vector<std::pair<std::string, FrameMetrics>> score_window(const PreparedWindow& w,
                                                                      const WindowPrediction& p) {
  std::vector<std::pair<std::string, FrameMetrics>> out;
  for (std::size_t f = 1; f <= w.interval() + 1; ++f) {
    if (!w.gt[f] || !w.targets[f]) continue;
    out.emplace_back(w.category, frame_metrics(p.image[f], p.crop[f], *w.gt[f], *w.targets[f], w.image_width,
                                               w.image_height));
  }
  return out;
}

template <class T>
EvalReport evaluate(const Params<T>& params, const ModelConfig& cfg, const std::vector<PreparedWindow>& windows,
                    const EvalOptions& opt = {}) {
  GraphCache graphs(cfg);
  std::vector<std::vector<std::pair<std::string, FrameMetrics>>> per(windows.size());
  parallel_for(windows.size(), opt.threads, [&](std::size_t i) {
    const PreparedWindow& w = windows[i];
    WindowPrediction p = predict_window(params, cfg, graphs.get(w.interval()), w);
    if (opt.smooth) smooth_prediction(p, w, opt.interior_knots);
    per[i] = score_window(w, p);
  });
  std::vector<std::pair<std::string, FrameMetrics>> flat;
  for (auto& v : per) flat.insert(flat.end(), v.begin(), v.end());
  return aggregate(flat);
}

}  // namespace vgcn
