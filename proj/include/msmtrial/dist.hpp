#pragma once

namespace msmtrial {

// Thin wrappers around boost::math so headers stay light.

double norm_cdf(double x);
double norm_sf(double x);
/// Upper-tail quantile: returns z with P(Z > z) = p. Handles p in [0, 1]
/// with +-infinity at the endpoints.
double norm_isf(double p);

double chi2_cdf(double x, unsigned df);
double chi2_sf(double x, unsigned df);
/// Upper-tail quantile: x with P(X > x) = p.
double chi2_isf(double p, unsigned df);

/// Survival function of the noncentral chi-squared distribution.
double nc_chi2_sf(double x, unsigned df, double ncp);

}  // namespace msmtrial
