#include "codir/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace codir {

PrfReport example_prf(const std::vector<LabelSet>& pred, const std::vector<LabelSet>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("example_prf: list lengths differ");
  PrfReport rep;
  const std::size_t n = pred.size();
  rep.per_sample_precision.reserve(n);
  rep.per_sample_recall.reserve(n);
  rep.per_sample_f1.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    LabelSet inter;
    std::set_intersection(pred[k].begin(), pred[k].end(), truth[k].begin(), truth[k].end(),
                          std::back_inserter(inter));
    const double hit = static_cast<double>(inter.size());
    const double np = static_cast<double>(pred[k].size());
    const double nt = static_cast<double>(truth[k].size());
    double p, r, f;
    if (np == 0.0 && nt == 0.0) {
      p = r = f = 1.0;
    } else {
      p = (np == 0.0) ? 0.0 : hit / np;
      r = (nt == 0.0) ? 1.0 : hit / nt;
      f = 2.0 * hit / (np + nt);
    }
    rep.per_sample_precision.push_back(p);
    rep.per_sample_recall.push_back(r);
    rep.per_sample_f1.push_back(f);
  }
  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sp += rep.per_sample_precision[k];
    sr += rep.per_sample_recall[k];
    sf += rep.per_sample_f1[k];
  }
  if (n > 0) {
    rep.precision = sp / static_cast<double>(n);
    rep.recall = sr / static_cast<double>(n);
    rep.f1 = sf / static_cast<double>(n);
  }
  return rep;
}

}  // namespace codir
