// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "cli.hpp"

namespace tempseg::cli {

namespace {

constexpr double kWidth = 800.0;
constexpr double kLeft = 90.0;
constexpr double kRight = 20.0;
constexpr double kTrackHeight = 24.0;
constexpr double kGtY = 20.0;
constexpr double kPredY = 56.0;
constexpr double kAxisY = 92.0;
constexpr double kHeight = 124.0;
constexpr const char* kGtColor = "#e03131";
constexpr const char* kPredColor = "#f5c518";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

/// Tick spacing giving at most ~10 ticks: 1, 2 or 5 times a power of ten.
double tick_step(double duration) {
  if (!(duration > 0)) return 1.0;
  const double raw = duration / 10.0;
  const double p = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * p >= raw) return m * p;
  }
  return 10.0 * p;
}

}  // namespace

std::string render_timeline_svg(const featio::Annotation& gt, const infer::PredictionRecord* pred) {
  const double duration = gt.duration > 0 ? gt.duration : 1.0;
  const double span = kWidth - kLeft - kRight;
  auto x = [&](double t) { return kLeft + span * std::clamp(t, 0.0, duration) / duration; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
       num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  s += "<title>" + gt.id + "</title>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" fill=\"#ffffff\"/>\n";

  auto track = [&](const char* label, double y) {
    s += "<text x=\"8\" y=\"" + num(y + kTrackHeight * 0.7) +
         "\" font-family=\"sans-serif\" font-size=\"12\">" + label + "</text>\n";
    s += "<rect class=\"track\" x=\"" + num(kLeft) + "\" y=\"" + num(y) + "\" width=\"" + num(span) +
         "\" height=\"" + num(kTrackHeight) + "\" fill=\"#f1f3f5\" stroke=\"#adb5bd\"/>\n";
  };
  auto bar = [&](const char* cls, const char* color, double y, double a, double b) {
    s += "<rect class=\"" + std::string(cls) + "\" x=\"" + num(x(a)) + "\" y=\"" + num(y) +
         "\" width=\"" + num(x(b) - x(a)) + "\" height=\"" + num(kTrackHeight) + "\" fill=\"" +
         color + "\"/>\n";
  };

  track("forged", kGtY);
  for (const auto& seg : gt.segments) bar("gt", kGtColor, kGtY, seg.start, seg.end);
  track("predicted", kPredY);
  if (pred) {
    for (const auto& seg : pred->segments) bar("pred", kPredColor, kPredY, seg.start, seg.end);
  }

  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kAxisY) + "\" x2=\"" + num(kLeft + span) +
       "\" y2=\"" + num(kAxisY) + "\" stroke=\"#212529\"/>\n";
  const double step = tick_step(duration);
  const auto ticks = static_cast<long>(std::floor(duration / step + 1e-9));
  for (long i = 0; i <= ticks; ++i) {
    const double t = static_cast<double>(i) * step;
    s += "<line x1=\"" + num(x(t)) + "\" y1=\"" + num(kAxisY) + "\" x2=\"" + num(x(t)) + "\" y2=\"" +
         num(kAxisY + 5) + "\" stroke=\"#212529\"/>\n";
    char label[32];
    std::snprintf(label, sizeof(label), "%g", t);
    s += "<text x=\"" + num(x(t)) + "\" y=\"" + num(kAxisY + 18) +
         "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" + label + "</text>\n";
  }
  s += "<text x=\"" + num(kLeft + span) + "\" y=\"" + num(kHeight - 2) +
       "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">time (s)</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace tempseg::cli
