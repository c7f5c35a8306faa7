#pragma once

#include <string>

#include "matchprior/model.hpp"

namespace matchprior::detail {

FamilyPtr make_location_scale(const std::string& kernel, bool scale_interest);
FamilyPtr make_gamma(bool rate_interest);

double median(std::vector<double> v);
double quantile_of(std::vector<double> v, double p);

}  // namespace matchprior::detail
