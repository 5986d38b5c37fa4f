#include "modcausal/metrics.hpp"

#include <cmath>

namespace modcausal {

namespace {

void check_shapes(const Distribution& p, const Distribution& q) {
  if (p.vars != q.vars || p.cards != q.cards || p.cond_vars != q.cond_vars ||
      p.cond_cards != q.cond_cards)
    throw validation_error("metric: distribution shapes do not match");
}

}  // namespace

double tvd(const Distribution& p, const Distribution& q) {
  check_shapes(p, q);
  std::size_t ts = p.table_size();
  double worst = 0;
  for (std::size_t s = 0; s < p.slice_count(); s++) {
    double acc = 0;
    for (std::size_t i = 0; i < ts; i++) acc += std::abs(p.p[s * ts + i] - q.p[s * ts + i]);
    worst = std::max(worst, 0.5 * acc);
  }
  return worst;
}

double kl(const Distribution& p, const Distribution& q, bool* smoothed) {
  check_shapes(p, q);
  constexpr double kEps = 1e-12;
  std::size_t ts = p.table_size();
  double worst = 0;
  bool did_smooth = false;
  for (std::size_t s = 0; s < p.slice_count(); s++) {
    double acc = 0;
    for (std::size_t i = 0; i < ts; i++) {
      double pv = p.p[s * ts + i], qv = q.p[s * ts + i];
      if (pv <= 0) continue;
      if (qv <= 0) {
        qv = kEps;
        did_smooth = true;
      }
      acc += pv * std::log(pv / qv);
    }
    worst = std::max(worst, acc);
  }
  if (smoothed) *smoothed = did_smooth;
  return worst;
}

}  // namespace modcausal
