#include "stac/filter.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace stac {

namespace {

constexpr int kWindow = 8;
constexpr double kL = 255.0;
constexpr double kC1 = (0.01 * kL) * (0.01 * kL);
constexpr double kC2 = (0.03 * kL) * (0.03 * kL);

bool in_band(const FilterPolicy& p, double s, double e) { return s >= p.ssim_min && e <= p.nmse_max; }

}  // namespace

double ssim(const Frame& a, const Frame& b) {
  require_same_shape(a, b, "ssim");
  if (a.size() == 0) throw ShapeError("ssim: empty frame");
  const Eigen::ArrayXXd fa = a.pixels.cast<double>();
  const Eigen::ArrayXXd fb = b.pixels.cast<double>();
  double total = 0.0;
  long windows = 0;
  for (Eigen::Index y = 0; y < fa.rows(); y += kWindow) {
    const Eigen::Index h = std::min<Eigen::Index>(kWindow, fa.rows() - y);
    for (Eigen::Index x = 0; x < fa.cols(); x += kWindow) {
      const Eigen::Index w = std::min<Eigen::Index>(kWindow, fa.cols() - x);
      const auto wa = fa.block(y, x, h, w);
      const auto wb = fb.block(y, x, h, w);
      const double mu_a = wa.mean();
      const double mu_b = wb.mean();
      const Eigen::ArrayXXd da = wa - mu_a;
      const Eigen::ArrayXXd db = wb - mu_b;
      const double var_a = (da * da).mean();
      const double var_b = (db * db).mean();
      const double cov = (da * db).mean();
      total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
               ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double nmse(const Frame& a, const Frame& b) {
  require_same_shape(a, b, "nmse");
  if (a.size() == 0) throw ShapeError("nmse: empty frame");
  const Eigen::ArrayXXd d = a.pixels.cast<double>() - b.pixels.cast<double>();
  return (d * d).sum() / (static_cast<double>(a.size()) * kL * kL);
}

void FilterPolicy::validate() const {
  for (double v : {ssim_min, nmse_max, duplicate_ssim_min, duplicate_nmse_max})
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("filter thresholds must lie in [0,1]");
  if (duplicate_ssim_min < ssim_min) throw ConfigError("duplicate_ssim_min must be >= ssim_min");
  if (duplicate_nmse_max > nmse_max) throw ConfigError("duplicate_nmse_max must be <= nmse_max");
}

bool FilterReport::is_kept(const FrameRef& f) const { return std::binary_search(kept.begin(), kept.end(), f); }

double FilterReport::drop_fraction() const {
  const std::size_t total = kept.size() + dropped.size();
  return total == 0 ? 0.0 : static_cast<double>(dropped.size()) / static_cast<double>(total);
}

FilterReport filter_stream(const CameraStreams& frames, const FilterPolicy& policy) {
  policy.validate();
  FilterReport report;
  std::map<FrameRef, std::optional<DropReason>> verdict;
  std::map<int, std::map<int, const Frame*>> by_time;  // t -> camera -> frame

  for (const auto& [camera, seq] : frames) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i > 0 && seq[i].t <= seq[i - 1].t)
        throw ArgumentError("frames for camera " + std::to_string(camera) + " are not time-ordered");
      verdict[{camera, seq[i].t}] = std::nullopt;
      by_time[seq[i].t][camera] = &seq[i];
    }
  }

  if (policy.scope != FilterScope::cross_camera) {
    for (const auto& [camera, seq] : frames) {
      if (seq.empty()) continue;
      const Frame* ref = &seq.front();
      for (std::size_t i = 1; i < seq.size(); ++i) {
        const double s = ssim(seq[i], *ref);
        const double e = nmse(seq[i], *ref);
        report.pair_scores.push_back({{camera, seq[i].t}, {camera, ref->t}, s, e});
        if (s >= policy.duplicate_ssim_min && e <= policy.duplicate_nmse_max) {
          verdict[{camera, seq[i].t}] = DropReason::duplicate;
        } else {
          ref = &seq[i];
        }
      }
    }
  }

  if (policy.scope != FilterScope::within_camera) {
    for (const auto& [t, cams] : by_time) {
      if (cams.size() < 2) continue;
      std::map<std::pair<int, int>, std::pair<double, double>> scores;
      for (auto i = cams.begin(); i != cams.end(); ++i)
        for (auto j = std::next(i); j != cams.end(); ++j) {
          const double s = ssim(*i->second, *j->second);
          const double e = nmse(*i->second, *j->second);
          scores[{i->first, j->first}] = {s, e};
          report.pair_scores.push_back({{i->first, t}, {j->first, t}, s, e});
        }
      for (const auto& [camera, frame] : cams) {
        const FrameRef key{camera, t};
        if (verdict[key].has_value()) continue;
        if (frames.at(camera).front().t == t) continue;  // first frame per camera always kept
        bool any_in_band = false;
        for (const auto& [peer, unused] : cams) {
          if (peer == camera) continue;
          const auto& [s, e] = scores.at({std::min(camera, peer), std::max(camera, peer)});
          any_in_band = any_in_band || in_band(policy, s, e);
        }
        if (!any_in_band) verdict[key] = DropReason::dissimilar;
      }
    }
  }

  for (const auto& [ref, reason] : verdict) {
    if (reason) report.dropped.push_back({ref, *reason});
    else report.kept.push_back(ref);
  }
  return report;
}

std::string to_string(FilterScope scope) {
  switch (scope) {
    case FilterScope::within_camera: return "within_camera";
    case FilterScope::cross_camera: return "cross_camera";
    case FilterScope::both: return "both";
  }
  return "?";
}

FilterScope parse_filter_scope(const std::string& s) {
  if (s == "within_camera") return FilterScope::within_camera;
  if (s == "cross_camera") return FilterScope::cross_camera;
  if (s == "both") return FilterScope::both;
  throw ConfigError("unknown filter scope '" + s + "'");
}

std::string to_string(DropReason reason) { return reason == DropReason::duplicate ? "duplicate" : "dissimilar"; }

std::string to_csv(const FilterReport& report) {
  // Decisive score: the within-camera comparison when present, else the best cross-camera pair.
  std::map<FrameRef, std::pair<double, double>> within, cross;
  for (const auto& p : report.pair_scores) {
    if (p.frame.camera_id == p.reference.camera_id) {
      within[p.frame] = {p.ssim, p.nmse};
    } else {
      for (const FrameRef& f : {p.frame, p.reference}) {
        auto it = cross.find(f);
        if (it == cross.end() || p.ssim > it->second.first) cross[f] = {p.ssim, p.nmse};
      }
    }
  }
  std::map<FrameRef, std::string> rows;
  for (const auto& f : report.kept) rows[f] = "1,";
  for (const auto& d : report.dropped) rows[d.frame] = "0," + to_string(d.reason);

  std::ostringstream out;
  out << "camera_id,t,kept,reason,ssim,nmse\n";
  char buf[64];
  for (const auto& [f, head] : rows) {
    out << f.camera_id << ',' << f.t << ',' << head;
    const auto* score = within.count(f) ? &within.at(f) : (cross.count(f) ? &cross.at(f) : nullptr);
    if (score) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f", score->first, score->second);
      out << buf;
    } else {
      out << ",,";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace stac
