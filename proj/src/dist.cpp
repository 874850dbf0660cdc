#include "msmtrial/dist.hpp"

#include <limits>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace msmtrial {

namespace {
const boost::math::normal_distribution<> kStdNormal(0.0, 1.0);
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

double norm_cdf(double x) { return boost::math::cdf(kStdNormal, x); }

double norm_sf(double x) { return boost::math::cdf(boost::math::complement(kStdNormal, x)); }

double norm_isf(double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("norm_isf: p outside [0,1]");
  if (p == 0.0) return kInf;
  if (p == 1.0) return -kInf;
  return boost::math::quantile(boost::math::complement(kStdNormal, p));
}

double chi2_cdf(double x, unsigned df) {
  boost::math::chi_squared_distribution<> d(df);
  return boost::math::cdf(d, x);
}

double chi2_sf(double x, unsigned df) {
  boost::math::chi_squared_distribution<> d(df);
  return boost::math::cdf(boost::math::complement(d, x));
}

double chi2_isf(double p, unsigned df) {
  if (p <= 0.0 || p > 1.0) throw std::invalid_argument("chi2_isf: p outside (0,1]");
  boost::math::chi_squared_distribution<> d(df);
  return boost::math::quantile(boost::math::complement(d, p));
}

double nc_chi2_sf(double x, unsigned df, double ncp) {
  if (ncp <= 0.0) return chi2_sf(x, df);
  boost::math::non_central_chi_squared_distribution<> d(df, ncp);
  return boost::math::cdf(boost::math::complement(d, x));
}

}  // namespace msmtrial
