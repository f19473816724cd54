#include "cvt/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace cvt {

double sample_mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("sample_mean: empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample_std: need at least 2 values");
  const double m = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double t_critical_975(int df) {
  static const double table[] = {
      12.706204736432095, 4.302652729696142, 3.182446305284263, 2.776445105197799,
      2.570581835636314,  2.446911851144969, 2.364624251592784, 2.306004135204166,
      2.262157162854099,  2.228138851964939, 2.200985160082949, 2.178812829663418,
      2.160368656461013,  2.144786687916927, 2.131449545559323, 2.119905299221011,
      2.109815577833181,  2.100922040240960, 2.093024054408263, 2.085963447265836,
      2.079613844727662,  2.073873067904015, 2.068657610419041, 2.063898561628021,
      2.059538552753294,  2.055529438642871, 2.051830516480283, 2.048407141795244,
      2.045229642132703,  2.042272456301237};
  if (df < 1) throw std::invalid_argument("t_critical_975: df must be >= 1");
  if (df <= 30) return table[df - 1];
  return 1.959964;
}

double margin_of_error_95(const std::vector<double>& runs) {
  const int n = static_cast<int>(runs.size());
  if (n < 2) throw std::invalid_argument("margin_of_error_95: need at least 2 runs");
  return t_critical_975(n - 1) * sample_std(runs) / std::sqrt(static_cast<double>(n));
}

}  // namespace cvt
