#pragma once

// Annotating a whole sequence from sparse keyframe boxes: every pair of
// consecutive keyframes bounds one window, each window is refined on its own,
// and a keyframe shared by two windows keeps the earlier window's contour.

#include <map>
#include <optional>
#include <vector>

#include "vgcn/dataset.hpp"
#include "vgcn/training.hpp"

namespace vgcn {

struct FrameAnnotation {
  Polygon polygon;                 // image pixels
  std::vector<Polygon> trace;      // contour after 0..iterations updates, image pixels
  std::size_t window = 0;          // index of the producing keyframe pair
};

/// Consecutive keyframe pairs in frame order.
template <class B>
std::vector<std::pair<std::size_t, std::size_t>> keyframe_pairs(const std::map<std::size_t, B>& keyframes) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (auto it = keyframes.begin(); it != keyframes.end() && std::next(it) != keyframes.end(); ++it) {
    out.emplace_back(it->first, std::next(it)->first);
  }
  return out;
}

inline std::map<std::size_t, Box> gt_keyframes(const SequenceManifest& m, std::span<const std::size_t> frames) {
  std::map<std::size_t, Box> out;
  for (std::size_t k : frames) {
    const auto b = m.gt_box(k);
    if (!b) throw InvalidInput("sequence " + m.id + " has no ground-truth box at frame " + std::to_string(k));
    out[k] = *b;
  }
  return out;
}

/// Contours for every frame from the first to the last keyframe. Boxes are
/// normalized full-frame boxes.
template <class T>
std::map<std::size_t, FrameAnnotation> annotate_sequence(const Params<T>& params, const ModelConfig& cfg,
                                                         const Sequence& seq,
                                                         const std::map<std::size_t, Box>& keyframes,
                                                         const PrepareOptions& prep, std::size_t threads = 1,
                                                         bool keep_trace = true) {
  if (keyframes.size() < 2) throw InvalidInput("inference needs keyframe boxes on at least two frames");
  const std::size_t n = seq.frames.size();
  for (const auto& [k, b] : keyframes) {
    if (k >= n) throw InvalidInput("keyframe " + std::to_string(k) + " is beyond the last frame");
    if (!b.valid()) throw InvalidInput("keyframe " + std::to_string(k) + " has an invalid box");
  }
  PrepareOptions opt = prep;
  opt.points = cfg.points;
  opt.use_gt_boxes = false;
  const auto pairs = keyframe_pairs(keyframes);
  std::vector<WindowPrediction> preds(pairs.size());
  std::vector<PreparedWindow> windows(pairs.size());
  GraphCache graphs(cfg);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto [a, b] = pairs[i];
    windows[i] = prepare_window(seq, make_subsequence(n, 0, a, b, keyframes.at(a), keyframes.at(b)), opt);
    preds[i] = predict_window(params, cfg, graphs.get(b - a), windows[i], keep_trace);
  });
  std::map<std::size_t, FrameAnnotation> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [a, b] = pairs[i];
    for (std::size_t f = a; f <= b; ++f) {
      if (out.contains(f)) continue;
      const std::size_t r = f - a + 1;
      FrameAnnotation fa{preds[i].image[r], {}, i};
      for (const auto& it : preds[i].trace) fa.trace.push_back(it[r]);
      out.emplace(f, std::move(fa));
    }
  }
  return out;
}

/// Scores per-frame image polygons (machine, human or re-ingested) against the
/// GT of `seq`, cutting the same keyframe windows as `annotate_sequence`.
/// Frames without a polygon or GT are skipped.
inline EvalReport score_annotations(const Sequence& seq, const std::map<std::size_t, Polygon>& polygons,
                                    const std::map<std::size_t, Box>& keyframes, const PrepareOptions& prep,
                                    std::size_t threads = 1) {
  if (keyframes.size() < 2) throw InvalidInput("scoring needs keyframe boxes on at least two frames");
  PrepareOptions opt = prep;
  opt.use_gt_boxes = false;
  opt.flow.iterations = 0;
  const std::size_t n = seq.frames.size();
  const auto pairs = keyframe_pairs(keyframes);
  std::vector<std::vector<std::pair<std::string, FrameMetrics>>> per(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto [a, b] = pairs[i];
    const PreparedWindow w = prepare_window(seq, make_subsequence(n, 0, a, b, keyframes.at(a), keyframes.at(b)), opt);
    for (std::size_t f = i == 0 ? a : a + 1; f <= b; ++f) {
      const std::size_t r = f - a + 1;
      const auto it = polygons.find(f);
      if (it == polygons.end() || !w.gt[r] || !w.targets[r]) continue;
      per[i].emplace_back(w.category, frame_metrics(it->second, w.windows[r].to_crop(it->second), *w.gt[r],
                                                    *w.targets[r], w.image_width, w.image_height));
    }
  });
  std::vector<std::pair<std::string, FrameMetrics>> flat;
  for (auto& v : per) flat.insert(flat.end(), v.begin(), v.end());
  return aggregate(flat);
}

}  // namespace vgcn
